use std::time::Instant;

use hetinfomax::cluster;
use hetinfomax::corrupt::corrupt;
use hetinfomax::hetgraph::{MetaPathGraph, MetaPathSpec};
use hetinfomax::numkit::{grad_check, Matrix};
use hetinfomax::objective::{record_objective, Clusters, ModelParams, TrainConfig};
use hetinfomax::seeding::rng;
use rand::Rng;

fn random_graph(name: &str, n: usize, p: f64, seed: u64) -> MetaPathGraph {
    let mut r = rng(seed);
    let pairs: Vec<_> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|_| r.random_bool(p))
        .collect();
    MetaPathGraph::from_pairs(MetaPathSpec::new(name, ["r"]), n, pairs)
}

fn check(config: TrainConfig, seed: u64) -> f64 {
    let n = 12;
    let f = 5;
    let graphs = vec![random_graph("A", n, 0.3, seed), random_graph("B", n, 0.25, seed + 1)];
    let mut r = rng(seed + 2);
    let features = Matrix::uniform(n, f, 1.0, &mut r);
    let shuffled = corrupt(&features, seed + 3).unwrap().shuffled_features;
    let layout = ModelParams::init(&config, f, graphs.len(), &mut r).unwrap();
    let mut layout = layout;
    // push the bilinear matrix away from the identity so its gradient is generic
    if let Some(m) = layout.bilinear.as_mut() {
        *m = Matrix::uniform(m.rows(), m.cols(), 0.5, &mut r);
    }
    let h = layout.embed(&graphs, &features, config.activation).unwrap().fused;
    let state = cluster::fit(&h, &config.cluster_config(), seed + 4).unwrap();

    let params: Vec<Matrix> = layout.tensors().into_iter().cloned().collect();
    let report = grad_check(&params, 1e-4, |tape, handles| {
        let x = tape.constant(features.clone())?;
        let xs = tape.constant(shuffled.clone())?;
        let vars = record_objective(tape, handles, &layout, &graphs, x, xs, &config, Clusters::Fixed(&state))
            .expect("objective builds");
        Ok(vars.neg_loss)
    })
    .unwrap();
    assert!(report.passed(), "{report:?}");
    report.max_relative_error
}

fn small() -> TrainConfig {
    TrainConfig {
        embed_dim: 4,
        heads: 2,
        semantic_dim: 3,
        clusters: 3,
        beta: 5.0,
        ..TrainConfig::default()
    }
}

#[test]
fn full_objective_matches_finite_differences() {
    let start = Instant::now();
    for seed in [1, 20, 300] {
        check(small(), seed);
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn bilinear_objective_matches_finite_differences() {
    check(TrainConfig { bilinear: true, ..small() }, 7);
}

#[test]
fn default_beta_and_theta_extremes() {
    for theta in [0.0, 1.0] {
        check(TrainConfig { theta, beta: 100.0, ..small() }, 11);
    }
}
