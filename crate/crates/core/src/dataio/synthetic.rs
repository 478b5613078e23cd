use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, DatasetBundle, IdMap};
use crate::hetgraph::{HeteroGraph, MetaPathSpec, NodeType, Relation};
use crate::numkit::Matrix;
use crate::seeding::{derive_seed, rng};

pub const TARGET_TYPE: &str = "target";
const AUX_TYPES: [&str; 2] = ["aux1", "aux2"];
const RELATIONS: [&str; 2] = ["target-aux1", "target-aux2"];

/// Planted-partition heterogeneous graph: target nodes and two auxiliary
/// types share `n_comm` balanced communities, and a target–aux pair links with
/// probability `p_in` inside a community and `p_out` across.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_target: usize,
    /// Nodes of each auxiliary type.
    pub n_aux: usize,
    pub n_comm: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// At least `n_comm`; the first `n_comm` columns carry the community one-hot.
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_target: 300,
            n_aux: 150,
            n_comm: 3,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 64,
            feature_noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Spec(m.to_string()));
        if self.n_comm == 0 || self.n_comm > self.n_target {
            return bad("n_comm must be in 1..=n_target");
        }
        if self.n_aux == 0 {
            return bad("n_aux must be positive");
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return bad("probabilities must satisfy 0 <= p_out < p_in <= 1");
        }
        if self.feature_dim < self.n_comm {
            return bad("feature_dim must be at least n_comm");
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad("feature_noise_sigma must be non-negative and finite");
        }
        Ok(())
    }
}

/// Community of node `i` out of `n` in contiguous balanced blocks.
pub fn community_of(i: usize, n: usize, n_comm: usize) -> usize {
    i * n_comm / n
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle, DataError> {
    spec.validate()?;
    let labels: Vec<usize> = (0..spec.n_target).map(|i| community_of(i, spec.n_target, spec.n_comm)).collect();

    let mut relations = Vec::new();
    for (k, (aux, name)) in AUX_TYPES.iter().zip(RELATIONS).enumerate() {
        let mut r = rng(derive_seed(spec.seed, 100 + k as u64));
        let mut edges = Vec::new();
        for (t, &ct) in labels.iter().enumerate() {
            for a in 0..spec.n_aux {
                let p = if community_of(a, spec.n_aux, spec.n_comm) == ct {
                    spec.p_in
                } else {
                    spec.p_out
                };
                if r.random_bool(p) {
                    edges.push((t, a));
                }
            }
        }
        relations.push(Relation {
            name: name.to_string(),
            src_type: TARGET_TYPE.to_string(),
            dst_type: aux.to_string(),
            edges,
        });
    }

    let mut node_types = vec![NodeType {
        name: TARGET_TYPE.to_string(),
        count: spec.n_target,
    }];
    node_types.extend(AUX_TYPES.iter().map(|t| NodeType {
        name: t.to_string(),
        count: spec.n_aux,
    }));
    let graph = HeteroGraph::new(node_types, relations, TARGET_TYPE)?;

    let metapaths = RELATIONS
        .iter()
        .zip(["TA1T", "TA2T"])
        .map(|(rel, name)| MetaPathSpec::new(name, [rel.to_string(), format!("{rel}^T")]))
        .collect();

    let mut r = rng(derive_seed(spec.seed, 200));
    let noise = Normal::new(0.0, spec.feature_noise_sigma).expect("sigma validated");
    let features = Matrix::from_fn(spec.n_target, spec.feature_dim, |i, j| {
        let one_hot = if j == labels[i] { 1.0 } else { 0.0 };
        one_hot + noise.sample(&mut r)
    });

    let mut ids = IdMap::default();
    ids.by_type.push((TARGET_TYPE.to_string(), (0..spec.n_target).map(|i| format!("t{i}")).collect()));
    for (k, t) in AUX_TYPES.iter().enumerate() {
        ids.by_type
            .push((t.to_string(), (0..spec.n_aux).map(|i| format!("a{}_{i}", k + 1)).collect()));
    }

    Ok(DatasetBundle {
        graph,
        features,
        metapaths,
        labels: Some(labels),
        ids,
    })
}
