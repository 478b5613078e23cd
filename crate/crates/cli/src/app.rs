//! Argument parsing and command dispatch for the `hetinfomax` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{value_parser, Arg, ArgMatches, Command};
use hetinfomax::dataio::SyntheticSpec;

use crate::config::{RunConfig, SCHEMA};
use crate::pipeline::{self, CliError, SWEEP_HEADER};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

/// `--config` plus one override flag per schema key.
fn with_config_args(mut cmd: Command) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("flat `key = value` config file"),
    );
    for (key, default, help) in SCHEMA {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag(key))
                .value_name("VALUE")
                .help(help)
                .help_heading("Config overrides"),
        );
    }
    cmd.after_help("Each --flag-name overrides config key flag_name; flags beat the config file, which beats the defaults.")
}

fn embeddings_arg() -> Arg {
    Arg::new("embeddings")
        .long("embeddings")
        .value_name("FILE")
        .required(true)
        .value_parser(value_parser!(PathBuf))
        .help("embedding matrix written by `train`")
}

const SYNTHETIC_FLAGS: [(&str, &str, &str); 8] = [
    ("n_target", "300", "target nodes"),
    ("n_aux", "150", "nodes of each auxiliary type"),
    ("n_comm", "3", "planted communities"),
    ("p_in", "0.05", "within-community link probability"),
    ("p_out", "0.005", "cross-community link probability"),
    ("feature_dim", "64", "feature width (first n_comm columns hold the community one-hot)"),
    ("feature_noise_sigma", "1", "standard deviation of the Gaussian feature noise"),
    ("seed", "0", "generator seed"),
];

pub fn cli() -> Command {
    let mut gen = Command::new("gen-synthetic")
        .about("Write a planted-partition heterogeneous dataset directory")
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .required(true)
                .value_parser(value_parser!(PathBuf)),
        );
    for (key, default, help) in SYNTHETIC_FLAGS {
        gen = gen.arg(Arg::new(key).long(flag(key)).value_name("VALUE").default_value(default).help(help));
    }

    Command::new("hetinfomax")
        .about("Cluster-aware infomax embeddings for heterogeneous graphs")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_args(
            Command::new("train").about("Split edges, train, and write embeddings, log, parameters and metrics"),
        ))
        .subcommand(with_config_args(
            Command::new("eval")
                .about("Score stored embeddings on the held-out test edges; with --clusters R also print a silhouette")
                .arg(embeddings_arg()),
        ))
        .subcommand(with_config_args(
            Command::new("sweep")
                .about("One full training per value of theta or R; prints value, AUC, AP, SIL")
                .arg(
                    Arg::new("param")
                        .required(true)
                        .value_parser(["theta", "R", "clusters"])
                        .help("parameter to vary"),
                )
                .arg(
                    Arg::new("values")
                        .required(true)
                        .help("start:stop:step or a comma-separated list"),
                )
                .arg(
                    Arg::new("jobs")
                        .long("jobs")
                        .value_name("N")
                        .default_value("1")
                        .value_parser(value_parser!(usize))
                        .help("runs to execute concurrently"),
                ),
        ))
        .subcommand(with_config_args(
            Command::new("project")
                .about("2-D PCA projection with hard labels from an R-way clustering (--clusters, at least 2): node_id, x, y, cluster")
                .arg(embeddings_arg()),
        ))
        .subcommand(gen)
}

fn run_config(m: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut config = match m.get_one::<PathBuf>("config") {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for (key, _, _) in SCHEMA {
        if let Some(v) = m.get_one::<String>(key) {
            config.set(key, v)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn synthetic_spec(m: &ArgMatches) -> Result<SyntheticSpec, CliError> {
    fn get<T: std::str::FromStr>(m: &ArgMatches, key: &str) -> Result<T, CliError> {
        let raw = m.get_one::<String>(key).expect("defaulted");
        raw.parse()
            .map_err(|_| CliError::Usage(format!("bad value `{raw}` for --{}", flag(key))))
    }
    Ok(SyntheticSpec {
        n_target: get(m, "n_target")?,
        n_aux: get(m, "n_aux")?,
        n_comm: get(m, "n_comm")?,
        p_in: get(m, "p_in")?,
        p_out: get(m, "p_out")?,
        feature_dim: get(m, "feature_dim")?,
        feature_noise_sigma: get(m, "feature_noise_sigma")?,
        seed: get(m, "seed")?,
    })
}

/// Runs the selected subcommand, writing its normal output to `out`.
pub fn dispatch(matches: &ArgMatches, out: &mut dyn Write) -> Result<(), CliError> {
    let emit = |out: &mut dyn Write, text: &str| out.write_all(text.as_bytes()).context("writing output");
    match matches.subcommand() {
        Some(("train", m)) => {
            let config = run_config(m)?;
            let result = pipeline::cmd_train(&config)?;
            emit(out, &result.metrics.render())?;
        }
        Some(("eval", m)) => {
            let config = run_config(m)?;
            let path = m.get_one::<PathBuf>("embeddings").expect("required");
            let clusters = m.contains_id("clusters").then_some(config.train.clusters);
            let metrics = pipeline::cmd_eval(&config, path, clusters)?;
            let mut text = format!("auc={} ap={}\n", metrics.auc, metrics.ap);
            if let Some(sil) = metrics.sil {
                text.push_str(&format!("sil={sil}\n"));
            }
            emit(out, &text)?;
        }
        Some(("sweep", m)) => {
            let config = run_config(m)?;
            let param = m.get_one::<String>("param").expect("required");
            let values = pipeline::parse_values(m.get_one::<String>("values").expect("required"))?;
            let jobs = *m.get_one::<usize>("jobs").expect("defaulted");
            let rows = pipeline::cmd_sweep(&config, param, &values, jobs)?;
            let mut text = format!("{SWEEP_HEADER}\n");
            for r in rows {
                text.push_str(&r.to_row());
                text.push('\n');
            }
            emit(out, &text)?;
        }
        Some(("project", m)) => {
            let config = run_config(m)?;
            let path = m.get_one::<PathBuf>("embeddings").expect("required");
            let table = pipeline::cmd_project(&config, path, config.train.clusters)?;
            if config.out.is_none() {
                emit(out, &table)?;
            }
        }
        Some(("gen-synthetic", m)) => {
            let spec = synthetic_spec(m)?;
            let dir = m.get_one::<PathBuf>("out").expect("required");
            let bundle = pipeline::cmd_gen_synthetic(&spec, dir)?;
            let edges: usize = bundle.graph.relations().iter().map(|r| r.edges.len()).sum();
            emit(
                out,
                &format!("wrote {} ({} target nodes, {edges} edges)\n", dir.display(), bundle.graph.target_count()),
            )?;
        }
        _ => unreachable!("subcommand required"),
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Help goes to `out`; diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&matches, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
