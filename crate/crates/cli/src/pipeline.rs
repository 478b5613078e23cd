//! Dataset preparation, training runs, and evaluation shared by the commands.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use hetinfomax::cluster::{self, ClusterConfig};
use hetinfomax::dataio::{self, DataError, DatasetBundle, LoadOptions};
use hetinfomax::evalkit::{self, EdgeSplit, Metrics};
use hetinfomax::hetgraph::MetaPathGraph;
use hetinfomax::numkit::Matrix;
use hetinfomax::objective::{self, EpochRecord, TrainOutcome, LOG_HEADER};
use hetinfomax::seeding::{derive_seed, stream};

use crate::config::RunConfig;

pub const EMBEDDINGS_FILE: &str = "embeddings.hef";
pub const LOG_FILE: &str = "train.log";
pub const METRICS_FILE: &str = "metrics.txt";
pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_ECHO: &str = "config.effective";
pub const IDS_FILE: &str = "ids.tsv";

/// Failure classes mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Loaded dataset with held-out edges removed from every meta-path graph.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bundle: DatasetBundle,
    pub train_graphs: Vec<MetaPathGraph>,
    pub split: EdgeSplit,
}

pub fn load(config: &RunConfig) -> Result<DatasetBundle, CliError> {
    let dir = config
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset given (set `dataset` or pass --dataset)".into()))?;
    let options = LoadOptions {
        raw_features: config.raw_features,
        target_type: config.target_type.clone(),
    };
    dataio::load_dataset_with(dir, &options).map_err(|e| match e {
        DataError::Missing(p) if &p == dir => CliError::Usage(format!("dataset directory not found: {}", p.display())),
        other => CliError::Runtime(anyhow!(other).context(format!("loading {}", dir.display()))),
    })
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    config.validate()?;
    let mut bundle = load(config)?;
    if !config.metapaths.is_empty() {
        let mut chosen = Vec::new();
        for name in &config.metapaths {
            let spec = bundle
                .metapaths
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| CliError::Usage(format!("unknown meta-path `{name}`")))?;
            chosen.push(spec.clone());
        }
        bundle.metapaths = chosen;
    }
    let graphs = bundle.metapath_graphs().map_err(|e| CliError::Runtime(e.into()))?;
    let split_index = match &config.split_metapath {
        None => 0,
        Some(name) => graphs
            .iter()
            .position(|g| g.name() == name)
            .ok_or_else(|| CliError::Usage(format!("split meta-path `{name}` is not among the selected meta-paths")))?,
    };
    let split = evalkit::split_edges(&graphs[split_index], config.fractions, config.effective_split_seed())
        .with_context(|| format!("splitting meta-path `{}`", graphs[split_index].name()))?;
    let train_graphs = graphs
        .iter()
        .enumerate()
        .map(|(k, g)| if k == split_index { split.train_graph.clone() } else { split.hide_in(g) })
        .collect();
    Ok(Prepared {
        bundle,
        train_graphs,
        split,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub val: Metrics,
    pub test: Metrics,
    /// Silhouette of the embeddings under the trained hard cluster labels.
    pub sil: Option<f64>,
}

impl RunMetrics {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "val_auc={}", self.val.auc);
        let _ = writeln!(s, "val_ap={}", self.val.ap);
        let _ = writeln!(s, "test_auc={}", self.test.auc);
        let _ = writeln!(s, "test_ap={}", self.test.ap);
        if let Some(sil) = self.sil {
            let _ = writeln!(s, "sil={sil}");
        }
        s
    }
}

/// Silhouette of `h` under `labels`, `None` when fewer than two labels occur.
pub fn silhouette_or_none(h: &Matrix, labels: &[usize]) -> Option<f64> {
    evalkit::silhouette(h, labels).ok()
}

pub fn link_metrics(h: &Matrix, split: &EdgeSplit) -> anyhow::Result<(Metrics, Metrics)> {
    Ok((
        Metrics::link_prediction(h, &split.val_pos, &split.val_neg)?,
        Metrics::link_prediction(h, &split.test_pos, &split.test_neg)?,
    ))
}

pub struct RunResult {
    pub outcome: TrainOutcome,
    pub metrics: RunMetrics,
}

/// Trains on a prepared dataset; every epoch row is passed to `log`.
pub fn run(config: &RunConfig, prepared: &Prepared, mut log: impl FnMut(&EpochRecord)) -> anyhow::Result<RunResult> {
    let outcome = objective::train_with(&prepared.train_graphs, &prepared.bundle.features, &config.train, |r| log(r))?;
    let (val, test) = link_metrics(&outcome.embeddings, &prepared.split)?;
    let sil = silhouette_or_none(&outcome.embeddings, &outcome.clusters.hard_labels());
    Ok(RunResult {
        outcome,
        metrics: RunMetrics { val, test, sil },
    })
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    let out = config
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory given (set `out` or pass --out)".into()))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

pub fn cmd_train(config: &RunConfig) -> Result<RunResult, CliError> {
    let prepared = prepare(config)?;
    let out = out_dir(config)?;
    fs::write(out.join(CONFIG_ECHO), config.render()).context("writing config echo")?;
    prepared.bundle.ids.write(&out.join(IDS_FILE)).context("writing id map")?;

    let log_path = out.join(LOG_FILE);
    let mut log_file = std::io::BufWriter::new(fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    writeln!(log_file, "{LOG_HEADER}").context("writing log")?;
    let mut log_err = None;
    let result = run(config, &prepared, |r| {
        if let Err(e) = writeln!(log_file, "{}", r.to_row()) {
            log_err.get_or_insert(e);
        }
    });
    if let Some(e) = log_err {
        return Err(anyhow!(e).context("writing log").into());
    }
    log_file.flush().context("writing log")?;
    let result = result?;

    let labels = result.outcome.clusters.hard_labels();
    dataio::write_embeddings(&result.outcome.embeddings, Some(&labels), &out.join(EMBEDDINGS_FILE)).context("writing embeddings")?;
    let params = serde_json::to_string(&result.outcome.params).context("serialising parameters")?;
    fs::write(out.join(PARAMS_FILE), params).context("writing parameters")?;
    fs::write(out.join(METRICS_FILE), result.metrics.render()).context("writing metrics")?;
    Ok(result)
}

/// Test-partition metrics for stored embeddings, plus the silhouette under a
/// fresh `clusters`-way soft k-means when requested.
pub fn cmd_eval(config: &RunConfig, embeddings: &Path, clusters: Option<usize>) -> Result<Metrics, CliError> {
    let prepared = prepare(config)?;
    let (h, _) = dataio::read_embeddings(embeddings).map_err(|e| match e {
        DataError::Missing(p) => CliError::Usage(format!("embeddings not found: {}", p.display())),
        other => CliError::Runtime(other.into()),
    })?;
    let n = prepared.bundle.graph.target_count();
    if h.rows() != n {
        return Err(CliError::Runtime(anyhow!(
            "embeddings have {} rows but the dataset has {n} target nodes",
            h.rows()
        )));
    }
    let (_, mut test) = link_metrics(&h, &prepared.split)?;
    if let Some(r) = clusters {
        test.sil = Some(silhouette_for(&h, r, config)?);
    }
    Ok(test)
}

fn cluster_labels(h: &Matrix, r: usize, config: &RunConfig) -> anyhow::Result<Vec<usize>> {
    let cfg = ClusterConfig {
        clusters: r,
        ..config.train.cluster_config()
    };
    let state = cluster::fit(h, &cfg, derive_seed(config.train.seed, stream::CLUSTER))?;
    Ok(state.hard_labels())
}

fn silhouette_for(h: &Matrix, r: usize, config: &RunConfig) -> anyhow::Result<f64> {
    let labels = cluster_labels(h, r, config)?;
    evalkit::silhouette(h, &labels).context("silhouette")
}

/// `node_id\tx\ty\tcluster` rows for a 2-D projection of the embeddings.
pub fn cmd_project(config: &RunConfig, embeddings: &Path, clusters: usize) -> Result<String, CliError> {
    if clusters < 2 {
        return Err(CliError::Usage(format!("--clusters must be at least 2, got {clusters}")));
    }
    let (h, _) = dataio::read_embeddings(embeddings).map_err(|e| match e {
        DataError::Missing(p) => CliError::Usage(format!("embeddings not found: {}", p.display())),
        other => CliError::Runtime(other.into()),
    })?;
    let labels = cluster_labels(&h, clusters, config)?;
    let proj = evalkit::pca_project(&h, 2).context("projection")?;
    let mut out = String::from("node_id\tx\ty\tcluster\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{}\t{l}", proj.coords[(i, 0)], proj.coords[(i, 1)]);
    }
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("projection.tsv"), &out).context("writing projection")?;
    }
    Ok(out)
}

/// Parses `a:b:step` (inclusive) or `v1,v2,...`.
pub fn parse_values(spec: &str) -> Result<Vec<String>, CliError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(CliError::Usage("empty sweep value list".into()));
    }
    if let Some((a, rest)) = spec.split_once(':') {
        let (b, step) = rest
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("range `{spec}` must be start:stop:step")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad number `{s}` in range `{spec}`")))
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(CliError::Usage(format!("range `{spec}` needs step > 0 and stop >= start")));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        // rounding keeps 0.1 + 2 * 0.1 from printing as 0.30000000000000004
        return Ok((0..count)
            .map(|k| (((a + k as f64 * step) * 1e10).round() / 1e10).to_string())
            .collect());
    }
    let values: Vec<String> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        return Err(CliError::Usage("empty sweep value list".into()));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub auc: f64,
    pub ap: f64,
    pub sil: Option<f64>,
}

pub const SWEEP_HEADER: &str = "value\tauc\tap\tsil";

impl SweepRow {
    pub fn to_row(&self) -> String {
        let sil = self.sil.map_or("nan".to_string(), |s| s.to_string());
        format!("{}\t{}\t{}\t{sil}", self.value, self.auc, self.ap)
    }
}

/// Maps a sweep parameter name onto its config key.
pub fn sweep_key(param: &str) -> Result<&'static str, CliError> {
    match param {
        "theta" => Ok("theta"),
        "R" | "clusters" => Ok("clusters"),
        other => Err(CliError::Usage(format!("cannot sweep `{other}`; use theta or R"))),
    }
}

/// One full training per value, `jobs` at a time. Each child run writes its
/// outputs under `<out>/<key>=<value>/` when an output directory is set.
pub fn cmd_sweep(config: &RunConfig, param: &str, values: &[String], jobs: usize) -> Result<Vec<SweepRow>, CliError> {
    let key = sweep_key(param)?;
    if values.is_empty() {
        return Err(CliError::Usage("empty sweep value list".into()));
    }
    let mut runs = Vec::new();
    for v in values {
        let mut c = config.clone();
        c.set(key, v)?;
        c.validate()
            .map_err(|e| CliError::Usage(format!("{key}={v}: {e}")))?;
        if let Some(out) = &config.out {
            c.out = Some(out.join(format!("{key}={v}")));
        }
        runs.push((v.clone(), c));
    }

    let one = |(v, c): &(String, RunConfig)| -> Result<SweepRow, CliError> {
        let result = if c.out.is_some() {
            cmd_train(c)
        } else {
            let prepared = prepare(c)?;
            run(c, &prepared, |_| {}).map_err(CliError::from)
        };
        let result = result.map_err(|e| CliError::Runtime(anyhow!("{key}={v}: {e}")))?;
        Ok(SweepRow {
            value: v.clone(),
            auc: result.metrics.test.auc,
            ap: result.metrics.test.ap,
            sil: result.metrics.sil,
        })
    };

    let jobs = jobs.max(1);
    let mut rows = Vec::with_capacity(runs.len());
    for chunk in runs.chunks(jobs) {
        let results: Vec<Result<SweepRow, CliError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|r| s.spawn(move || one(r))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for r in results {
            rows.push(r?);
        }
    }

    if let Some(out) = &config.out {
        let mut table = String::from(SWEEP_HEADER);
        table.push('\n');
        for r in &rows {
            table.push_str(&r.to_row());
            table.push('\n');
        }
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(out.join(format!("sweep_{key}.tsv")), table).context("writing sweep table")?;
    }
    Ok(rows)
}

pub fn cmd_gen_synthetic(spec: &dataio::SyntheticSpec, out: &Path) -> Result<DatasetBundle, CliError> {
    let bundle = dataio::generate_synthetic(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    dataio::write_dataset(&bundle, out).with_context(|| format!("writing {}", out.display()))?;
    Ok(bundle)
}
