//! Dataset directories, feature and embedding files, and the planted
//! partition generator.
//!
//! A dataset directory holds:
//!
//! * `nodes.tsv`: `<external_id>\t<type>`
//! * `edges.tsv`: `<src_external_id>\t<relation>\t<dst_external_id>`
//! * `metapaths.txt`: `NAME=rel1,rel2,...` (a trailing `^T` reverses a step)
//! * `features.hef`, or `features.csv` with one comma-separated row per target node
//! * optionally `labels.tsv`: `<external_id>\t<class id>`

pub mod hef;
mod synthetic;

pub use synthetic::{community_of, generate_synthetic, SyntheticSpec};

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::hetgraph::{materialize_metapath, GraphError, HeteroGraph, MetaPathGraph, MetaPathSpec, NodeType, Relation};
use crate::numkit::{norm, Matrix};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const METAPATHS_FILE: &str = "metapaths.txt";
pub const FEATURES_HEF: &str = "features.hef";
pub const FEATURES_CSV: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.tsv";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {}", .0.display())]
    Missing(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{} contains no edges", .0.display())]
    EmptyEdges(PathBuf),
    #[error("{} has no meta-path definitions", .0.display())]
    NoMetaPaths(PathBuf),
    #[error("feature matrix has {got} rows but there are {expected} target nodes")]
    FeatureRows { expected: usize, got: usize },
    #[error("no node type fits every meta-path as its start and end")]
    NoTargetType,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot write an empty embedding matrix")]
    EmptyEmbeddings,
    #[error("{labels} labels for {rows} embedding rows")]
    LabelRows { rows: usize, labels: usize },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// External id ↔ (type, local id) mapping established at load.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    /// External ids per node type, indexed by local id.
    pub by_type: Vec<(String, Vec<String>)>,
}

impl IdMap {
    pub fn external(&self, node_type: &str, local: usize) -> Option<&str> {
        self.by_type
            .iter()
            .find(|(t, _)| t == node_type)
            .and_then(|(_, ids)| ids.get(local))
            .map(String::as_str)
    }

    pub fn lookup(&self) -> HashMap<&str, (&str, usize)> {
        let mut out = HashMap::new();
        for (t, ids) in &self.by_type {
            for (local, ext) in ids.iter().enumerate() {
                out.insert(ext.as_str(), (t.as_str(), local));
            }
        }
        out
    }

    /// `<external_id>\t<type>\t<local_id>` per node.
    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let mut out = String::new();
        for (t, ids) in &self.by_type {
            for (local, ext) in ids.iter().enumerate() {
                out.push_str(&format!("{ext}\t{t}\t{local}\n"));
            }
        }
        fs::write(path, out).map_err(io_err(path))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub graph: HeteroGraph,
    /// One row per target node, in local id order.
    pub features: Matrix,
    pub metapaths: Vec<MetaPathSpec>,
    /// Class ids per target node, for diagnostics only.
    pub labels: Option<Vec<usize>>,
    pub ids: IdMap,
}

impl DatasetBundle {
    pub fn metapath_graphs(&self) -> Result<Vec<MetaPathGraph>, GraphError> {
        self.metapaths.iter().map(|s| materialize_metapath(&self.graph, s)).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Skip the row L2 normalisation of features.
    pub raw_features: bool,
    /// Use this target type instead of inferring it from the meta-paths.
    pub target_type: Option<String>,
}

fn read_text(path: &Path) -> Result<String, DataError> {
    if !path.exists() {
        return Err(DataError::Missing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

/// Non-blank lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn fields<'a>(path: &Path, line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>, DataError> {
    let parts: Vec<&str> = text.split('\t').map(str::trim).collect();
    if parts.len() != expected || parts.iter().any(|p| p.is_empty()) {
        return Err(parse_err(
            path,
            line,
            format!("expected {expected} non-empty tab-separated fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

pub fn load_dataset(dir: &Path) -> Result<DatasetBundle, DataError> {
    load_dataset_with(dir, &LoadOptions::default())
}

pub fn load_dataset_with(dir: &Path, options: &LoadOptions) -> Result<DatasetBundle, DataError> {
    if !dir.is_dir() {
        return Err(DataError::Missing(dir.to_path_buf()));
    }

    // nodes
    let nodes_path = dir.join(NODES_FILE);
    let text = read_text(&nodes_path)?;
    let mut ids = IdMap::default();
    let mut index: HashMap<String, (usize, usize)> = HashMap::new();
    for (line, l) in lines(&text) {
        let f = fields(&nodes_path, line, l, 2)?;
        let t = match ids.by_type.iter().position(|(name, _)| name == f[1]) {
            Some(t) => t,
            None => {
                ids.by_type.push((f[1].to_string(), Vec::new()));
                ids.by_type.len() - 1
            }
        };
        let local = ids.by_type[t].1.len();
        if index.insert(f[0].to_string(), (t, local)).is_some() {
            return Err(parse_err(&nodes_path, line, format!("duplicate node id `{}`", f[0])));
        }
        ids.by_type[t].1.push(f[0].to_string());
    }
    if ids.by_type.is_empty() {
        return Err(parse_err(&nodes_path, 0, "no nodes"));
    }

    // edges
    let edges_path = dir.join(EDGES_FILE);
    let text = read_text(&edges_path)?;
    let mut relations: Vec<Relation> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, l) in lines(&text) {
        let f = fields(&edges_path, line, l, 3)?;
        let endpoint = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| parse_err(&edges_path, line, format!("dangling endpoint `{id}`")))
        };
        let (st, s) = endpoint(f[0])?;
        let (dt, d) = endpoint(f[2])?;
        let (src_type, dst_type) = (&ids.by_type[st].0, &ids.by_type[dt].0);
        let r = match relations.iter().position(|r| r.name == f[1]) {
            Some(r) => {
                let rel = &relations[r];
                if &rel.src_type != src_type || &rel.dst_type != dst_type {
                    return Err(parse_err(
                        &edges_path,
                        line,
                        format!(
                            "relation `{}` links {src_type}->{dst_type} here but {}->{} earlier",
                            f[1], rel.src_type, rel.dst_type
                        ),
                    ));
                }
                r
            }
            None => {
                relations.push(Relation {
                    name: f[1].to_string(),
                    src_type: src_type.clone(),
                    dst_type: dst_type.clone(),
                    edges: Vec::new(),
                });
                relations.len() - 1
            }
        };
        if !seen.insert((r, s, d)) {
            return Err(parse_err(&edges_path, line, format!("duplicate edge {} {} {}", f[0], f[1], f[2])));
        }
        relations[r].edges.push((s, d));
    }
    if relations.is_empty() {
        return Err(DataError::EmptyEdges(edges_path));
    }

    // meta-paths
    let mp_path = dir.join(METAPATHS_FILE);
    let text = read_text(&mp_path)?;
    let mut metapaths = Vec::new();
    let mut mp_lines = Vec::new();
    for (line, l) in lines(&text) {
        let l = l.trim();
        if l.starts_with('#') {
            continue;
        }
        let spec = parse_metapath(l).map_err(|m| parse_err(&mp_path, line, m))?;
        if metapaths.iter().any(|s: &MetaPathSpec| s.name == spec.name) {
            return Err(parse_err(&mp_path, line, format!("duplicate meta-path `{}`", spec.name)));
        }
        for rel in &spec.relation_chain {
            let base = rel.strip_suffix("^T").unwrap_or(rel);
            if !relations.iter().any(|r| r.name == base) {
                return Err(parse_err(&mp_path, line, format!("unknown relation `{base}`")));
            }
        }
        metapaths.push(spec);
        mp_lines.push(line);
    }
    if metapaths.is_empty() {
        return Err(DataError::NoMetaPaths(mp_path));
    }

    let node_types: Vec<NodeType> = ids
        .by_type
        .iter()
        .map(|(name, v)| NodeType {
            name: name.clone(),
            count: v.len(),
        })
        .collect();
    let target = match &options.target_type {
        Some(t) => t.clone(),
        None => infer_target_type(&node_types, &relations, &metapaths)?,
    };
    let graph = HeteroGraph::new(node_types, relations, target).map_err(|e| match e {
        GraphError::NotHeterogeneous { .. } => parse_err(&edges_path, 0, e.to_string()),
        other => DataError::Graph(other),
    })?;
    for (spec, &line) in metapaths.iter().zip(&mp_lines) {
        spec.resolve(&graph).map_err(|e| parse_err(&mp_path, line, e.to_string()))?;
    }

    // features
    let n_target = graph.target_count();
    let mut features = read_features(dir)?;
    if features.rows() != n_target {
        return Err(DataError::FeatureRows {
            expected: n_target,
            got: features.rows(),
        });
    }
    if !options.raw_features {
        normalize_rows(&mut features);
    }

    // labels
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let t = ids
            .by_type
            .iter()
            .position(|(name, _)| name == graph.target_type())
            .expect("target type has nodes");
        Some(read_labels(&labels_path, &index, t, n_target)?)
    } else {
        None
    };

    Ok(DatasetBundle {
        graph,
        features,
        metapaths,
        labels,
        ids,
    })
}

/// Parses `NAME=rel1,rel2,...`.
pub fn parse_metapath(line: &str) -> Result<MetaPathSpec, String> {
    let (name, chain) = line
        .split_once('=')
        .ok_or_else(|| "expected NAME=rel1,rel2,...".to_string())?;
    let name = name.trim();
    if name.is_empty() {
        return Err("empty meta-path name".into());
    }
    let chain: Vec<&str> = chain.split(',').map(str::trim).collect();
    if chain.iter().any(|r| r.is_empty()) {
        return Err(format!("meta-path `{name}` has an empty relation"));
    }
    Ok(MetaPathSpec::new(name, chain))
}

/// The node type every meta-path can start and end at. Among several
/// candidates, one whose name prefixes the first meta-path's name is
/// preferred, then the earliest-declared.
fn infer_target_type(node_types: &[NodeType], relations: &[Relation], metapaths: &[MetaPathSpec]) -> Result<String, DataError> {
    let fits: Vec<&NodeType> = node_types
        .iter()
        .filter(|t| {
            HeteroGraph::new(node_types.to_vec(), relations.to_vec(), t.name.clone())
                .map(|g| metapaths.iter().all(|s| s.resolve(&g).is_ok()))
                .unwrap_or(false)
        })
        .collect();
    let first = &metapaths[0].name;
    fits.iter()
        .find(|t| first.starts_with(t.name.as_str()))
        .or_else(|| fits.first())
        .map(|t| t.name.clone())
        .ok_or(DataError::NoTargetType)
}

fn read_features(dir: &Path) -> Result<Matrix, DataError> {
    let hef_path = dir.join(FEATURES_HEF);
    if hef_path.exists() {
        let file = File::open(&hef_path).map_err(io_err(&hef_path))?;
        return hef::read_matrix(&mut BufReader::new(file)).map_err(io_err(&hef_path));
    }
    let csv_path = dir.join(FEATURES_CSV);
    if csv_path.exists() {
        return read_csv(&csv_path);
    }
    Err(DataError::Missing(hef_path))
}

fn read_csv(path: &Path) -> Result<Matrix, DataError> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in lines(&text) {
        let row = l
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, line, format!("bad number: {e}")))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(path, line, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line, "non-finite value"));
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_vec(rows.len(), cols, rows.concat()))
}

fn read_labels(path: &Path, index: &HashMap<String, (usize, usize)>, target: usize, n: usize) -> Result<Vec<usize>, DataError> {
    let text = read_text(path)?;
    let mut labels = vec![None; n];
    for (line, l) in lines(&text) {
        let f = fields(path, line, l, 2)?;
        let (t, local) = *index
            .get(f[0])
            .ok_or_else(|| parse_err(path, line, format!("unknown node `{}`", f[0])))?;
        if t != target {
            return Err(parse_err(path, line, format!("`{}` is not a target node", f[0])));
        }
        let class = f[1]
            .parse::<usize>()
            .map_err(|_| parse_err(path, line, format!("class id `{}` is not a non-negative integer", f[1])))?;
        if labels[local].replace(class).is_some() {
            return Err(parse_err(path, line, format!("`{}` labelled twice", f[0])));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| parse_err(path, 0, format!("target node #{i} has no label"))))
        .collect()
}

/// Scales each nonzero row to unit L2 norm.
pub fn normalize_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Writes `bundle` in the directory layout read by [`load_dataset`].
pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut nodes = String::new();
    for (t, ext) in &bundle.ids.by_type {
        for id in ext {
            nodes.push_str(&format!("{id}\t{t}\n"));
        }
    }
    write_text(&dir.join(NODES_FILE), &nodes)?;

    let mut edges = String::new();
    for r in bundle.graph.relations() {
        for &(s, d) in &r.edges {
            let src = bundle.ids.external(&r.src_type, s).expect("id map covers graph");
            let dst = bundle.ids.external(&r.dst_type, d).expect("id map covers graph");
            edges.push_str(&format!("{src}\t{}\t{dst}\n", r.name));
        }
    }
    write_text(&dir.join(EDGES_FILE), &edges)?;

    let mp: String = bundle
        .metapaths
        .iter()
        .map(|s| format!("{}={}\n", s.name, s.relation_chain.join(",")))
        .collect();
    write_text(&dir.join(METAPATHS_FILE), &mp)?;

    write_matrix_file(&dir.join(FEATURES_HEF), &bundle.features)?;

    if let Some(labels) = &bundle.labels {
        let target = bundle.graph.target_type();
        let text: String = labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{}\t{l}\n", bundle.ids.external(target, i).expect("id map covers targets")))
            .collect();
        write_text(&dir.join(LABELS_FILE), &text)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_matrix_file(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    hef::write_matrix(&mut out, m).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_matrix_file(path: &Path) -> Result<Matrix, DataError> {
    if !path.exists() {
        return Err(DataError::Missing(path.to_path_buf()));
    }
    let file = File::open(path).map_err(io_err(path))?;
    hef::read_matrix(&mut BufReader::new(file)).map_err(io_err(path))
}

/// Embeddings in the matrix format with an optional label trailer.
pub fn write_embeddings(h: &Matrix, labels: Option<&[usize]>, path: &Path) -> Result<(), DataError> {
    if h.rows() == 0 {
        return Err(DataError::EmptyEmbeddings);
    }
    if let Some(l) = labels {
        if l.len() != h.rows() {
            return Err(DataError::LabelRows {
                rows: h.rows(),
                labels: l.len(),
            });
        }
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    hef::write_matrix(&mut out, h).map_err(io_err(path))?;
    if let Some(l) = labels {
        hef::write_labels(&mut out, l).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_embeddings(path: &Path) -> Result<(Matrix, Option<Vec<usize>>), DataError> {
    if !path.exists() {
        return Err(DataError::Missing(path.to_path_buf()));
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut input = BufReader::new(file);
    let h = hef::read_matrix(&mut input).map_err(io_err(path))?;
    let labels = hef::read_labels(&mut input).map_err(io_err(path))?;
    if let Some(l) = &labels {
        if l.len() != h.rows() {
            return Err(DataError::LabelRows {
                rows: h.rows(),
                labels: l.len(),
            });
        }
    }
    Ok((h, labels))
}
