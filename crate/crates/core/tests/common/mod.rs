#![allow(dead_code)]

use std::collections::BTreeSet;

use hetinfomax::encoder::{Activation, EncoderConfig, EncoderParams, HeadParams};
use hetinfomax::hetgraph::{HeteroGraph, MetaPathGraph, MetaPathSpec, NodeType, Relation};
use hetinfomax::numkit::Matrix;
use hetinfomax::seeding::rng;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn chacha(seed: u64) -> ChaCha8Rng {
    rng(seed)
}

/// Random typed graph with 2–3 node types of at most `max_nodes` nodes and
/// 2–4 relations, target type `T0`.
pub fn random_typed_graph(r: &mut ChaCha8Rng, max_nodes: usize) -> HeteroGraph {
    let n_types = r.random_range(2..=3);
    let node_types: Vec<NodeType> = (0..n_types)
        .map(|t| NodeType {
            name: format!("T{t}"),
            count: r.random_range(1..=max_nodes),
        })
        .collect();
    let n_rel = r.random_range(2..=4);
    let mut relations = Vec::new();
    for k in 0..n_rel {
        // the first relation always touches the target type
        let s = if k == 0 { 0 } else { r.random_range(0..n_types) };
        let d = r.random_range(0..n_types);
        let density = r.random_range(0.1..0.7);
        let mut edges = Vec::new();
        for a in 0..node_types[s].count {
            for b in 0..node_types[d].count {
                if r.random_bool(density) {
                    edges.push((a, b));
                }
            }
        }
        relations.push(Relation {
            name: format!("r{k}"),
            src_type: node_types[s].name.clone(),
            dst_type: node_types[d].name.clone(),
            edges,
        });
    }
    HeteroGraph::new(node_types, relations, "T0").expect("generated graph is valid")
}

/// Random chain of at most `max_len` steps from and back to the target, with
/// `^T` on every reversed step. `None` when the walk fails to return.
pub fn random_chain(graph: &HeteroGraph, r: &mut ChaCha8Rng, max_len: usize) -> Option<MetaPathSpec> {
    for _ in 0..50 {
        let len = r.random_range(1..=max_len);
        let mut current = graph.target_type().to_string();
        let mut chain = Vec::new();
        for _ in 0..len {
            let options: Vec<String> = graph
                .relations()
                .iter()
                .flat_map(|rel| {
                    let mut v = Vec::new();
                    if rel.src_type == current {
                        v.push(rel.name.clone());
                    }
                    if rel.dst_type == current {
                        v.push(format!("{}^T", rel.name));
                    }
                    v
                })
                .collect();
            let Some(step) = options.choose(r) else { break };
            let rel = graph
                .relation(step.trim_end_matches("^T"))
                .expect("listed relation");
            current = if step.ends_with("^T") {
                rel.src_type.clone()
            } else {
                rel.dst_type.clone()
            };
            chain.push(step.clone());
        }
        if chain.len() == len && current == graph.target_type() {
            return Some(MetaPathSpec::new("M", chain));
        }
    }
    None
}

/// Adjacency by enumerating every typed walk that follows the chain.
pub fn enumerate_metapath(graph: &HeteroGraph, spec: &MetaPathSpec) -> BTreeSet<(usize, usize)> {
    fn walk(graph: &HeteroGraph, chain: &[String], at: usize, out: &mut Vec<usize>) {
        let Some((step, rest)) = chain.split_first() else {
            out.push(at);
            return;
        };
        let reversed = step.ends_with("^T");
        let rel = graph.relation(step.trim_end_matches("^T")).expect("known relation");
        for &(s, d) in &rel.edges {
            let (from, to) = if reversed { (d, s) } else { (s, d) };
            if from == at {
                walk(graph, rest, to, out);
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for m in 0..graph.target_count() {
        let mut ends = Vec::new();
        walk(graph, &spec.relation_chain, m, &mut ends);
        for n in ends {
            if n != m {
                pairs.insert((m.min(n), m.max(n)));
            }
        }
    }
    pairs
}

pub fn random_metapath_graph(name: &str, n: usize, p: f64, r: &mut ChaCha8Rng) -> MetaPathGraph {
    let pairs: Vec<_> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_iter()
        .filter(|_| r.random_bool(p))
        .collect();
    MetaPathGraph::from_pairs(MetaPathSpec::new(name, ["r"]), n, pairs)
}

pub fn random_matrix(rows: usize, cols: usize, bound: f64, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, bound, r)
}

/// Exhaustive pairwise AUC: wins plus half ties over all pairs.
pub fn auc_by_pairs(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Ranked-enumeration AP where every tied negative ranks above a positive and
/// tied positives keep their input order.
pub fn ap_by_ranks(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &p) in pos.iter().enumerate() {
        let pos_ahead = pos
            .iter()
            .enumerate()
            .filter(|&(k, &q)| q > p || (q == p && k < i))
            .count();
        let neg_ahead = neg.iter().filter(|&&n| n >= p).count();
        let rank = pos_ahead + neg_ahead + 1;
        total += (pos_ahead + 1) as f64 / rank as f64;
    }
    total / pos.len() as f64
}

/// Scores drawn from a coarse grid half the time so ties occur.
pub fn random_scores(r: &mut ChaCha8Rng, max_len: usize) -> Vec<f64> {
    let len = r.random_range(1..=max_len);
    let coarse = r.random_bool(0.5);
    (0..len)
        .map(|_| {
            if coarse {
                r.random_range(0..5) as f64 / 4.0
            } else {
                r.random::<f64>()
            }
        })
        .collect()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols()).map(|j| v.iter().enumerate().map(|(i, x)| x * m[(i, j)]).sum()).collect()
}

/// Straight-line encoder with ELU outputs, written per node without the tape.
pub struct OracleEncoding {
    /// `[meta-path][node]` rows of `Hⁱ`.
    pub per_metapath: Vec<Vec<Vec<f64>>>,
    /// `[meta-path][head][node]` coefficients aligned with `neighbors(p)`.
    pub attention: Vec<Vec<Vec<Vec<f64>>>>,
    pub importances: Vec<f64>,
    pub weights: Vec<f64>,
    pub fused: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

pub fn oracle_gat(graph: &MetaPathGraph, x: &Matrix, heads: &[HeadParams]) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let n = graph.node_count();
    let mut out = vec![Vec::new(); n];
    let mut alphas = Vec::new();
    for head in heads {
        let dh = head.weight.cols();
        let wx: Vec<Vec<f64>> = (0..n).map(|p| vec_mat(x.row(p), &head.weight)).collect();
        let a = head.attention.as_slice();
        let mut head_alpha = Vec::new();
        for p in 0..n {
            let nbrs = graph.neighbors(p).unwrap();
            let logits: Vec<f64> = nbrs
                .iter()
                .map(|&q| {
                    let s: f64 = (0..dh).map(|k| a[k] * wx[p][k] + a[dh + k] * wx[q][k]).sum();
                    leaky(s)
                })
                .collect();
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = exps.iter().sum();
            let alpha: Vec<f64> = exps.iter().map(|e| e / z).collect();
            for k in 0..dh {
                let agg: f64 = nbrs.iter().zip(&alpha).map(|(&q, w)| w * wx[q][k]).sum();
                out[p].push(elu(agg));
            }
            head_alpha.push(alpha);
        }
        alphas.push(head_alpha);
    }
    (out, alphas)
}

pub fn oracle_encode(graphs: &[MetaPathGraph], x: &Matrix, params: &EncoderParams) -> OracleEncoding {
    let n = x.rows();
    let mut per_metapath = Vec::new();
    let mut attention = Vec::new();
    for (g, mp) in graphs.iter().zip(&params.metapaths) {
        let (h, a) = oracle_gat(g, x, &mp.heads);
        per_metapath.push(h);
        attention.push(a);
    }
    let sem = &params.semantic;
    let importances: Vec<f64> = per_metapath
        .iter()
        .map(|h| {
            let total: f64 = h
                .iter()
                .map(|row| {
                    let proj = vec_mat(row, &sem.weight);
                    let s: f64 = proj
                        .iter()
                        .enumerate()
                        .map(|(k, v)| (v + sem.bias.as_slice()[k]) * sem.query.as_slice()[k])
                        .sum();
                    s.tanh()
                })
                .sum();
            total / n as f64
        })
        .collect();
    let top = importances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = importances.iter().map(|e| (e - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let d = per_metapath[0][0].len();
    let fused: Vec<Vec<f64>> = (0..n)
        .map(|p| (0..d).map(|k| (0..graphs.len()).map(|i| weights[i] * per_metapath[i][p][k]).sum()).collect())
        .collect();
    let summary = (0..d)
        .map(|k| sigmoid(fused.iter().map(|r| r[k]).sum::<f64>() / n as f64))
        .collect();
    OracleEncoding {
        per_metapath,
        attention,
        importances,
        weights,
        fused,
        summary,
    }
}

pub struct EncoderInstance {
    pub graphs: Vec<MetaPathGraph>,
    pub features: Matrix,
    pub params: EncoderParams,
    pub config: EncoderConfig,
}

/// Random graphs over up to `max_nodes` nodes with 1–3 meta-paths and small
/// random feature and embedding widths.
pub fn random_encoder_instance(r: &mut ChaCha8Rng, max_nodes: usize) -> EncoderInstance {
    let n = r.random_range(2..=max_nodes);
    let k = r.random_range(1..=3);
    let heads = r.random_range(1..=3);
    let config = EncoderConfig {
        feature_dim: r.random_range(1..=5),
        embed_dim: heads * r.random_range(1..=3),
        heads,
        semantic_dim: r.random_range(1..=4),
        activation: Activation::Elu,
    };
    let graphs = (0..k)
        .map(|i| {
            let p = r.random_range(0.1..0.7);
            random_metapath_graph(&format!("M{i}"), n, p, r)
        })
        .collect();
    let features = random_matrix(n, config.feature_dim, 1.5, r);
    let mut params = EncoderParams::init(&config, k, r).unwrap();
    params.semantic.bias = random_matrix(1, config.semantic_dim, 0.5, r);
    EncoderInstance {
        graphs,
        features,
        params,
        config,
    }
}
