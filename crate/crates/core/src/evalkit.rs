//! Link-prediction split and metrics, silhouette, and a PCA projection.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::hetgraph::MetaPathGraph;
use crate::numkit::{dot, sigmoid, squared_distance, Matrix};
use crate::seeding;

pub const VAL_FRACTION: f64 = 0.05;
pub const TEST_FRACTION: f64 = 0.10;
/// Fewer edges than this leave a partition empty.
pub const MIN_SPLIT_EDGES: usize = 20;

const PCA_TOLERANCE: f64 = 1e-10;
const PCA_MAX_ITERS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{edges} edges is too few to split (need at least {MIN_SPLIT_EDGES})")]
    TooFewEdges { edges: usize },
    #[error("need {needed} negative pairs but only {available} non-edges exist")]
    TooDense { needed: usize, available: usize },
    #[error("split fractions must be non-negative and sum to less than 1")]
    Fractions,
    #[error("node {id} out of range for {count} nodes")]
    NodeOutOfRange { id: usize, count: usize },
    #[error("{0} list is empty")]
    Empty(&'static str),
    #[error("score list contains a non-finite value")]
    NonFinite,
    #[error("silhouette needs at least two distinct labels, found {0}")]
    SingleCluster(usize),
    #[error("{points} points but {labels} labels")]
    LabelCount { points: usize, labels: usize },
    #[error("projection needs at least 2 rows, got {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            val: VAL_FRACTION,
            test: TEST_FRACTION,
        }
    }
}

impl SplitFractions {
    /// `(validation, test)` positive counts for `edges` edges.
    pub fn counts(&self, edges: usize) -> (usize, usize) {
        let e = edges as f64;
        ((self.val * e).floor() as usize, (self.test * e).floor() as usize)
    }
}

/// Held-out positive and negative pairs for one meta-path graph. Pairs are
/// stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train_graph: MetaPathGraph,
    pub val_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub fractions: SplitFractions,
    pub seed: u64,
}

impl EdgeSplit {
    pub fn hidden_positives(&self) -> Vec<(usize, usize)> {
        self.val_pos.iter().chain(&self.test_pos).copied().collect()
    }

    /// Removes the held-out positives from another graph over the same nodes.
    pub fn hide_in(&self, other: &MetaPathGraph) -> MetaPathGraph {
        other.without_pairs(&self.hidden_positives())
    }
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Samples held-out positives uniformly from the edges and an equal number of
/// distinct non-edges by rejection sampling.
pub fn split_edges(graph: &MetaPathGraph, fractions: SplitFractions, seed: u64) -> Result<EdgeSplit, EvalError> {
    let ok = |f: f64| f.is_finite() && f >= 0.0;
    if !ok(fractions.val) || !ok(fractions.test) || fractions.val + fractions.test >= 1.0 {
        return Err(EvalError::Fractions);
    }
    let mut edges = graph.upper_edges();
    if edges.len() < MIN_SPLIT_EDGES {
        return Err(EvalError::TooFewEdges { edges: edges.len() });
    }
    let (n_val, n_test) = fractions.counts(edges.len());
    let n = graph.node_count();
    let pool = n * (n - 1) / 2 - edges.len();
    let needed = n_val + n_test;
    if pool < needed {
        return Err(EvalError::TooDense { needed, available: pool });
    }

    let mut rng = seeding::rng(seed);
    edges.shuffle(&mut rng);
    let test_pos = edges[..n_test].to_vec();
    let val_pos = edges[n_test..n_test + n_val].to_vec();

    let negatives = sample_non_edges(graph, needed, pool, &mut rng);
    let test_neg = negatives[..n_test].to_vec();
    let val_neg = negatives[n_test..].to_vec();

    let hidden: Vec<_> = test_pos.iter().chain(&val_pos).copied().collect();
    Ok(EdgeSplit {
        train_graph: graph.without_pairs(&hidden),
        val_pos,
        val_neg,
        test_pos,
        test_neg,
        fractions,
        seed,
    })
}

fn sample_non_edges<R: Rng>(graph: &MetaPathGraph, needed: usize, pool: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = graph.node_count();
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(needed);
    if needed == 0 {
        return out;
    }
    // Near-full pools make rejection sampling crawl; enumerate instead.
    if pool < 4 * needed {
        let mut all: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !graph.has_edge(i, j))
            .collect();
        all.shuffle(rng);
        all.truncate(needed);
        return all;
    }
    while out.len() < needed {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || graph.has_edge(i, j) {
            continue;
        }
        let pair = ordered(i, j);
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    out
}

/// `σ(hᵢᵀhⱼ)`.
pub fn score_edge(h: &Matrix, i: usize, j: usize) -> Result<f64, EvalError> {
    let count = h.rows();
    for id in [i, j] {
        if id >= count {
            return Err(EvalError::NodeOutOfRange { id, count });
        }
    }
    Ok(sigmoid(dot(h.row(i), h.row(j))))
}

pub fn score_pairs(h: &Matrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>, EvalError> {
    pairs.iter().map(|&(i, j)| score_edge(h, i, j)).collect()
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<(), EvalError> {
    if pos.is_empty() {
        return Err(EvalError::Empty("positive"));
    }
    if neg.is_empty() {
        return Err(EvalError::Empty("negative"));
    }
    if pos.iter().chain(neg).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

/// Probability that a positive outscores a negative, ties counting half, via
/// the Mann–Whitney rank sum.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64, EvalError> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of 1-based positive ranks, tied groups sharing their average rank.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let positives = all[start..end].iter().filter(|e| e.1).count();
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        rank_sum += positives as f64 * avg_rank;
        start = end;
    }
    let p = pos.len() as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg.len() as f64))
}

/// Mean precision at each positive's rank; tied negatives rank first.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64, EvalError> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    // Descending score; `false < true` puts negatives before tied positives.
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &(_, is_pos)) in all.iter().enumerate() {
        if is_pos {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / pos.len() as f64)
}

/// Mean silhouette with Euclidean distances. Points alone in their cluster
/// score 0.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> Result<f64, EvalError> {
    let n = points.rows();
    if labels.len() != n {
        return Err(EvalError::LabelCount { points: n, labels: labels.len() });
    }
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(EvalError::SingleCluster(distinct.len()));
    }
    let index: Vec<usize> = labels.iter().map(|l| distinct.range(..l).count()).collect();
    let k = distinct.len();
    let mut sizes = vec![0usize; k];
    for &c in &index {
        sizes[c] += 1;
    }

    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[index[j]] += squared_distance(points.row(i), points.row(j)).sqrt();
            }
        }
        let own = index[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `N × out_dim`
    pub coords: Matrix,
    /// `out_dim × d`, unit rows (zero where the variance is exhausted).
    pub components: Matrix,
    /// Covariance eigenvalue of each component.
    pub explained_variance: Vec<f64>,
}

/// Projects centered rows onto the leading covariance eigenvectors found by
/// power iteration with deflation. Each component's first nonzero loading is
/// positive.
pub fn pca_project(points: &Matrix, out_dim: usize) -> Result<Projection, EvalError> {
    let (n, d) = points.shape();
    if n < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    let mean = points.column_mean();
    let centered = Matrix::from_fn(n, d, |i, j| points[(i, j)] - mean[(0, j)]);
    let mut cov = centered.transpose().matmul(&centered).scale(1.0 / (n - 1) as f64);
    let scale = cov.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut components = Matrix::zeros(out_dim, d);
    let mut explained = Vec::with_capacity(out_dim);
    for k in 0..out_dim {
        let (lambda, v) = leading_eigenpair(&cov, scale);
        explained.push(lambda);
        components.row_mut(k).copy_from_slice(&v);
        for a in 0..d {
            for b in 0..d {
                let updated = cov[(a, b)] - lambda * v[a] * v[b];
                cov.as_mut_slice()[a * d + b] = updated;
            }
        }
    }
    let coords = centered.matmul(&components.transpose());
    Ok(Projection {
        coords,
        components,
        explained_variance: explained,
    })
}

fn leading_eigenpair(cov: &Matrix, scale: f64) -> (f64, Vec<f64>) {
    let d = cov.rows();
    let negligible = scale * 1e-14;
    // Start from the column with the largest norm so the start vector is not
    // orthogonal to the leading direction.
    let start = (0..d)
        .map(|j| (j, (0..d).map(|i| cov[(i, j)].powi(2)).sum::<f64>()))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let Some((col, mass)) = start else {
        return (0.0, Vec::new());
    };
    if mass.sqrt() <= negligible || scale == 0.0 {
        return (0.0, vec![0.0; d]);
    }
    let mut v: Vec<f64> = (0..d).map(|i| cov[(i, col)]).collect();
    normalize(&mut v);
    for _ in 0..PCA_MAX_ITERS {
        let mut next = mat_vec(cov, &v);
        let len = normalize(&mut next);
        if len <= negligible {
            return (0.0, vec![0.0; d]);
        }
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < PCA_TOLERANCE {
            break;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let lambda = dot(&v, &mat_vec(cov, &v));
    (lambda, v)
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let len = dot(v, v).sqrt();
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x /= len);
    }
    len
}

/// Held-out link-prediction and cluster-quality scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub auc: f64,
    pub ap: f64,
    pub sil: Option<f64>,
}

impl Metrics {
    pub fn link_prediction(h: &Matrix, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<Self, EvalError> {
        let p = score_pairs(h, pos)?;
        let q = score_pairs(h, neg)?;
        Ok(Self {
            auc: auc(&p, &q)?,
            ap: average_precision(&p, &q)?,
            sil: None,
        })
    }

    /// `auc=… ap=…` plus `sil=…` when present.
    pub fn to_kv(&self) -> String {
        let mut s = format!("auc={} ap={}", self.auc, self.ap);
        if let Some(sil) = self.sil {
            s.push_str(&format!(" sil={sil}"));
        }
        s
    }
}
