//! Differentiable soft K-means over node representations and the per-node
//! cluster summaries derived from it.
//!
//! Assignments are a softmax over `β · cos(hᵢ, μ_r)`: as `β` grows they tend
//! to a one-hot on the most similar center. The literal negated form
//! `softmax(−β · cos)` can be selected with [`ClusterConfig::literal_sign`].

use rand::Rng;
use thiserror::Error;

use crate::numkit::{dot, norm, sigmoid, squared_distance, Matrix, NumError, Tape, ValueId};
use crate::seeding;

/// Norm floor used when a caller opts into tolerant cosine similarity.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cluster count {clusters} must be in 1..={points}")]
    ClusterCount { clusters: usize, points: usize },
    #[error("beta must be positive and finite, got {0}")]
    Beta(f64),
    #[error("at least one iteration is required")]
    NoIterations,
    #[error("{which} row {row} has zero norm; cosine similarity is undefined")]
    ZeroNorm { which: &'static str, row: usize },
    #[error("cluster {0} received zero total assignment mass")]
    EmptyCluster(usize),
    #[error("width mismatch: representations have {points} columns, centers {centers}")]
    Width { points: usize, centers: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub clusters: usize,
    pub beta: f64,
    pub iterations: usize,
    /// Use `exp(−β·sim)` exactly as written instead of `exp(β·sim)`.
    pub literal_sign: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            clusters: 3,
            beta: 100.0,
            iterations: 10,
            literal_sign: false,
        }
    }
}

impl ClusterConfig {
    fn signed_beta(&self) -> f64 {
        if self.literal_sign {
            -self.beta
        } else {
            self.beta
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// `R × d`
    pub centers: Matrix,
    /// `N × R`, rows sum to one.
    pub assignments: Matrix,
    pub config: ClusterConfig,
    pub iterations: usize,
}

impl ClusterState {
    pub fn clusters(&self) -> usize {
        self.centers.rows()
    }

    /// `argmax_r c_ir` per node (lowest index wins ties).
    pub fn hard_labels(&self) -> Vec<usize> {
        hard_labels(&self.assignments)
    }
}

pub fn hard_labels(assignments: &Matrix) -> Vec<usize> {
    assignments
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (r, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = r;
                }
            }
            best
        })
        .collect()
}

fn check_width(points: &Matrix, centers: &Matrix) -> Result<(), ClusterError> {
    if points.cols() != centers.cols() {
        return Err(ClusterError::Width {
            points: points.cols(),
            centers: centers.cols(),
        });
    }
    Ok(())
}

/// K-means++ seeding: the first center is a uniformly chosen row, each next one
/// is drawn with probability proportional to the squared distance to its
/// nearest already-chosen center.
pub fn init_centers(points: &Matrix, clusters: usize, seed: u64) -> Result<Matrix, ClusterError> {
    let n = points.rows();
    if clusters == 0 || clusters > n {
        return Err(ClusterError::ClusterCount { clusters, points: n });
    }
    let mut rng = seeding::rng(seed);
    let mut chosen = Vec::with_capacity(clusters);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut nearest: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(first))).collect();
    while chosen.len() < clusters {
        let weights: Vec<f64> = (0..n).map(|i| if taken[i] { 0.0 } else { nearest[i] }).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Remaining points coincide with chosen centers.
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        taken[pick] = true;
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), points.row(pick)));
        }
    }
    Ok(points.select_rows(&chosen))
}

/// `N × R` cosine similarities. With `floor == None` a zero-norm row is an
/// error; otherwise norms are clamped below at `floor`.
pub fn cosine_similarities(points: &Matrix, centers: &Matrix, floor: Option<f64>) -> Result<Matrix, ClusterError> {
    check_width(points, centers)?;
    let norm_of = |m: &Matrix, which: &'static str, i: usize| -> Result<f64, ClusterError> {
        let n = norm(m.row(i));
        match floor {
            Some(f) => Ok(n.max(f)),
            None if n == 0.0 => Err(ClusterError::ZeroNorm { which, row: i }),
            None => Ok(n),
        }
    };
    let center_norms = (0..centers.rows())
        .map(|r| norm_of(centers, "center", r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Matrix::zeros(points.rows(), centers.rows());
    for i in 0..points.rows() {
        let ni = norm_of(points, "representation", i)?;
        for r in 0..centers.rows() {
            out[(i, r)] = dot(points.row(i), centers.row(r)) / (ni * center_norms[r]);
        }
    }
    Ok(out)
}

fn softmax_rows_scaled(sims: &Matrix, scale: f64) -> Matrix {
    let mut out = sims.scale(scale);
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Soft assignments `c_ir = softmax_r(±β · cos(hᵢ, μ_r))`. Zero-norm rows are
/// reported as [`ClusterError::ZeroNorm`].
pub fn update_assignments(points: &Matrix, centers: &Matrix, config: &ClusterConfig) -> Result<Matrix, ClusterError> {
    validate_beta(config.beta)?;
    let sims = cosine_similarities(points, centers, None)?;
    Ok(softmax_rows_scaled(&sims, config.signed_beta()))
}

fn assign_floored(points: &Matrix, centers: &Matrix, config: &ClusterConfig) -> Result<Matrix, ClusterError> {
    let sims = cosine_similarities(points, centers, Some(NORM_FLOOR))?;
    Ok(softmax_rows_scaled(&sims, config.signed_beta()))
}

fn validate_beta(beta: f64) -> Result<(), ClusterError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(ClusterError::Beta(beta))
    }
}

/// Weighted means `μ_r = Σᵢ c_ir hᵢ / Σᵢ c_ir`.
pub fn update_centers(points: &Matrix, assignments: &Matrix) -> Result<Matrix, ClusterError> {
    assert_eq!(points.rows(), assignments.rows(), "assignment rows must match points");
    let (n, r, d) = (points.rows(), assignments.cols(), points.cols());
    let mut centers = Matrix::zeros(r, d);
    let mut mass = vec![0.0; r];
    for i in 0..n {
        for c in 0..r {
            let w = assignments[(i, c)];
            mass[c] += w;
            for (dst, &x) in centers.row_mut(c).iter_mut().zip(points.row(i)) {
                *dst += w * x;
            }
        }
    }
    for (c, &m) in mass.iter().enumerate() {
        if !(m > 0.0) {
            return Err(ClusterError::EmptyCluster(c));
        }
        for v in centers.row_mut(c) {
            *v /= m;
        }
    }
    Ok(centers)
}

/// Index of the point farthest from its nearest center, ignoring `skip`.
fn farthest_point(points: &Matrix, centers: &Matrix, skip: usize) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..points.rows() {
        let d = (0..centers.rows())
            .filter(|&r| r != skip)
            .map(|r| squared_distance(points.row(i), centers.row(r)))
            .fold(f64::INFINITY, f64::min);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// K-means++ seeding followed by `iterations` assignment/center alternations.
pub fn fit(points: &Matrix, config: &ClusterConfig, seed: u64) -> Result<ClusterState, ClusterError> {
    let centers = init_centers(points, config.clusters, seed)?;
    fit_from(points, centers, config)
}

/// Same as [`fit`] but starting from given centers.
pub fn fit_from(points: &Matrix, mut centers: Matrix, config: &ClusterConfig) -> Result<ClusterState, ClusterError> {
    validate_beta(config.beta)?;
    if config.iterations == 0 {
        return Err(ClusterError::NoIterations);
    }
    if centers.rows() == 0 || centers.rows() > points.rows() {
        return Err(ClusterError::ClusterCount {
            clusters: centers.rows(),
            points: points.rows(),
        });
    }
    check_width(points, &centers)?;
    for _ in 0..config.iterations {
        let mut assignments = assign_floored(points, &centers, config)?;
        centers = loop {
            match update_centers(points, &assignments) {
                Ok(c) => break c,
                Err(ClusterError::EmptyCluster(dead)) => {
                    let far = farthest_point(points, &centers, dead);
                    centers.row_mut(dead).copy_from_slice(points.row(far));
                    assignments = assign_floored(points, &centers, config)?;
                }
                Err(e) => return Err(e),
            }
        };
    }
    let assignments = assign_floored(points, &centers, config)?;
    Ok(ClusterState {
        centers,
        assignments,
        config: *config,
        iterations: config.iterations,
    })
}

/// `zᵢ = sigmoid(Σ_r c_ir μ_r)` with assignments recomputed from `points`
/// against the state's centers.
pub fn cluster_summaries(points: &Matrix, state: &ClusterState) -> Result<Matrix, ClusterError> {
    let assignments = assign_floored(points, &state.centers, &state.config)?;
    Ok(assignments.matmul(&state.centers).map(sigmoid))
}

/// Differentiable version of [`cluster_summaries`]: gradients flow into
/// `points` through the assignments; the centers are constants.
pub fn cluster_summaries_on_tape(tape: &mut Tape, points: ValueId, state: &ClusterState) -> Result<ValueId, ClusterError> {
    check_width(tape.value(points), &state.centers)?;
    let mut unit_centers = state.centers.clone();
    for r in 0..unit_centers.rows() {
        let row = unit_centers.row_mut(r);
        let n = norm(row).max(NORM_FLOOR);
        row.iter_mut().for_each(|v| *v /= n);
    }
    let unit_t = tape.constant(unit_centers.transpose())?;
    let centers = tape.constant(state.centers.clone())?;
    let unit_points = tape.row_normalize(points, NORM_FLOOR)?;
    let sims = tape.matmul(unit_points, unit_t)?;
    let logits = tape.affine(sims, state.config.signed_beta(), 0.0)?;
    let assignments = tape.row_softmax(logits)?;
    let mixed = tape.matmul(assignments, centers)?;
    Ok(tape.sigmoid(mixed)?)
}
