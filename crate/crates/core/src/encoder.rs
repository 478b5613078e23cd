//! Hierarchical local encoder: one multi-head attention layer per meta-path,
//! semantic attention over the meta-path outputs, and a sigmoid mean readout.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::MetaPathGraph;
use crate::numkit::{Matrix, NumError, ParamId, SparsePattern, Tape, ValueId};

/// Negative slope of the attention-logit LeakyReLU.
pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("at least one meta-path is required")]
    NoMetaPaths,
    #[error("{graphs} meta-path graphs but {params} meta-path parameter sets")]
    MetaPathCount { graphs: usize, params: usize },
    #[error("feature matrix has {got} rows, meta-path `{metapath}` has {expected} nodes")]
    FeatureRows { metapath: String, expected: usize, got: usize },
    #[error("embedding dimension {dim} is not divisible by {heads} heads")]
    HeadSplit { dim: usize, heads: usize },
    #[error("invalid encoder configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Elu,
    LeakyRelu,
    Tanh,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: ValueId) -> Result<ValueId, NumError> {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, ATTENTION_SLOPE),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elu" => Ok(Activation::Elu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}` (expected elu, leaky_relu or tanh)")),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Elu => "elu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub semantic_dim: usize,
    pub activation: Activation,
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return Err(EncoderError::HeadSplit {
                dim: self.embed_dim,
                heads: self.heads,
            });
        }
        if self.feature_dim == 0 {
            return Err(EncoderError::Config("feature_dim must be positive".into()));
        }
        if self.semantic_dim == 0 {
            return Err(EncoderError::Config("semantic_dim must be positive".into()));
        }
        Ok(())
    }
}

/// One attention head: projection `f × d_head` and attention vector `2·d_head × 1`
/// (source half first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub weight: Matrix,
    pub attention: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPathEncoderParams {
    pub heads: Vec<HeadParams>,
}

impl MetaPathEncoderParams {
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Self {
        let dh = config.head_dim();
        let heads = (0..config.heads)
            .map(|_| HeadParams {
                weight: Matrix::glorot(config.feature_dim, dh, rng),
                attention: Matrix::glorot(2 * dh, 1, rng),
            })
            .collect();
        Self { heads }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticAttentionParams {
    /// `d × d_att`
    pub weight: Matrix,
    /// `1 × d_att`
    pub bias: Matrix,
    /// `d_att × 1`
    pub query: Matrix,
}

impl SemanticAttentionParams {
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            weight: Matrix::glorot(config.embed_dim, config.semantic_dim, rng),
            bias: Matrix::zeros(1, config.semantic_dim),
            query: Matrix::glorot(config.semantic_dim, 1, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub metapaths: Vec<MetaPathEncoderParams>,
    pub semantic: SemanticAttentionParams,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub weight: ValueId,
    pub attention: ValueId,
}

#[derive(Debug, Clone, Copy)]
pub struct SemanticVars {
    pub weight: ValueId,
    pub bias: ValueId,
    pub query: ValueId,
}

/// Tape handles of every encoder parameter.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub metapaths: Vec<Vec<HeadVars>>,
    pub semantic: SemanticVars,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, metapaths: usize, rng: &mut R) -> Result<Self, EncoderError> {
        config.validate()?;
        if metapaths == 0 {
            return Err(EncoderError::NoMetaPaths);
        }
        Ok(Self {
            metapaths: (0..metapaths).map(|_| MetaPathEncoderParams::init(config, rng)).collect(),
            semantic: SemanticAttentionParams::init(config, rng),
        })
    }

    /// Flat view in registration order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for mp in &self.metapaths {
            for h in &mp.heads {
                out.push(&h.weight);
                out.push(&h.attention);
            }
        }
        out.extend([&self.semantic.weight, &self.semantic.bias, &self.semantic.query]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for mp in &mut self.metapaths {
            for h in &mut mp.heads {
                out.push(&mut h.weight);
                out.push(&mut h.attention);
            }
        }
        let s = &mut self.semantic;
        out.extend([&mut s.weight, &mut s.bias, &mut s.query]);
        out
    }

    pub fn tensor_count(&self) -> usize {
        self.metapaths.iter().map(|m| 2 * m.heads.len()).sum::<usize>() + 3
    }

    /// Registers every tensor as a parameter with ids `first_id..`, in
    /// [`EncoderParams::tensors`] order. Returns the handles and the next free id.
    pub fn register(&self, tape: &mut Tape, first_id: usize) -> Result<(EncoderVars, usize), NumError> {
        let handles = self
            .tensors()
            .into_iter()
            .enumerate()
            .map(|(k, m)| tape.param(ParamId(first_id + k), m.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((self.vars_from_handles(&handles), first_id + handles.len()))
    }

    /// Maps handles given in [`EncoderParams::tensors`] order back onto the
    /// parameter structure.
    pub fn vars_from_handles(&self, handles: &[ValueId]) -> EncoderVars {
        assert!(handles.len() >= self.tensor_count(), "too few handles");
        let mut it = handles.iter().copied();
        let mut next = || it.next().expect("handle count checked");
        let metapaths = self
            .metapaths
            .iter()
            .map(|mp| {
                mp.heads
                    .iter()
                    .map(|_| HeadVars {
                        weight: next(),
                        attention: next(),
                    })
                    .collect()
            })
            .collect();
        let semantic = SemanticVars {
            weight: next(),
            bias: next(),
            query: next(),
        };
        EncoderVars { metapaths, semantic }
    }

    /// Runs the encoder on its own tape and extracts the values.
    pub fn encode(&self, graphs: &[MetaPathGraph], features: &Matrix, activation: Activation) -> Result<EncoderOutput, EncoderError> {
        let mut tape = Tape::new();
        let (vars, _) = self.register(&mut tape, 0)?;
        let x = tape.constant(features.clone())?;
        let enc = encode(&mut tape, graphs, x, &vars, activation)?;
        Ok(enc.extract(&tape))
    }
}

/// Output handles of one attention layer.
#[derive(Debug, Clone)]
pub struct GatVars {
    /// `N × d`, heads concatenated.
    pub output: ValueId,
    /// Per head, `nnz × 1` coefficients in CSR order of the attention pattern.
    pub attention: Vec<ValueId>,
}

/// Multi-head attention over one meta-path neighbourhood (self-loops included).
///
/// For node `p` and head `k`:
/// `σ(Σ_{q∈N(p)} α_pq W x_q)` with `α_p· = softmax_q(LeakyReLU(aᵀ[W x_p ∥ W x_q]))`.
pub fn gat_forward(
    tape: &mut Tape,
    pattern: &Arc<SparsePattern>,
    features: ValueId,
    heads: &[HeadVars],
    activation: Activation,
) -> Result<GatVars, NumError> {
    let src_rows: Arc<[usize]> = pattern.row_of_entries().into();
    let dst_rows: Arc<[usize]> = pattern.col_of_entries().into();
    let mut outputs = Vec::with_capacity(heads.len());
    let mut attention = Vec::with_capacity(heads.len());
    for head in heads {
        let dh = tape.value(head.weight).cols();
        let transformed = tape.matmul(features, head.weight)?;
        let a_src = tape.gather_rows(head.attention, (0..dh).collect::<Vec<_>>())?;
        let a_dst = tape.gather_rows(head.attention, (dh..2 * dh).collect::<Vec<_>>())?;
        let f_src = tape.matmul(transformed, a_src)?;
        let f_dst = tape.matmul(transformed, a_dst)?;
        let e_src = tape.gather_rows(f_src, Arc::clone(&src_rows))?;
        let e_dst = tape.gather_rows(f_dst, Arc::clone(&dst_rows))?;
        let raw = tape.add(e_src, e_dst)?;
        let logits = tape.leaky_relu(raw, ATTENTION_SLOPE)?;
        let alpha = tape.masked_row_softmax(logits, pattern)?;
        let aggregated = tape.pattern_matmul(alpha, pattern, transformed)?;
        outputs.push(activation.apply(tape, aggregated)?);
        attention.push(alpha);
    }
    let output = if outputs.len() == 1 {
        outputs[0]
    } else {
        tape.concat_cols(&outputs)?
    };
    Ok(GatVars { output, attention })
}

/// `eⁱ = mean_j tanh(qᵀ (W_sem hⱼⁱ + b))`, one `1 × 1` value per meta-path.
pub fn semantic_importance(tape: &mut Tape, per_metapath: &[ValueId], semantic: &SemanticVars) -> Result<Vec<ValueId>, NumError> {
    per_metapath
        .iter()
        .map(|&h| {
            let projected = tape.matmul(h, semantic.weight)?;
            let shifted = tape.add_row(projected, semantic.bias)?;
            let scored = tape.matmul(shifted, semantic.query)?;
            let squashed = tape.tanh(scored)?;
            tape.column_mean(squashed)
        })
        .collect()
}

/// Softmax over the meta-path importances, `1 × k`.
pub fn semantic_weights(tape: &mut Tape, importances: &[ValueId]) -> Result<ValueId, NumError> {
    let row = tape.concat_cols(importances)?;
    tape.row_softmax(row)
}

/// `H = Σᵢ Sⁱ Hⁱ`.
pub fn fuse(tape: &mut Tape, per_metapath: &[ValueId], weights: ValueId) -> Result<ValueId, NumError> {
    let column = tape.transpose(weights)?;
    let mut acc: Option<ValueId> = None;
    for (i, &h) in per_metapath.iter().enumerate() {
        let s = tape.gather_rows(column, vec![i])?;
        let term = tape.scale_by(s, h)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    acc.ok_or(NumError::EmptyInput {
        op_index: tape.len(),
        op: "fuse",
    })
}

/// Global summary `s = sigmoid(mean_i hᵢ)`, `1 × d`.
pub fn readout(tape: &mut Tape, fused: ValueId) -> Result<ValueId, NumError> {
    let mean = tape.column_mean(fused)?;
    tape.sigmoid(mean)
}

/// Handles of every intermediate of one encoder pass.
#[derive(Debug, Clone)]
pub struct EncodedVars {
    pub per_metapath: Vec<GatVars>,
    pub importances: Vec<ValueId>,
    pub weights: ValueId,
    pub fused: ValueId,
    pub summary: ValueId,
}

impl EncodedVars {
    pub fn extract(&self, tape: &Tape) -> EncoderOutput {
        EncoderOutput {
            per_metapath: self.per_metapath.iter().map(|g| tape.value(g.output).clone()).collect(),
            attention: self
                .per_metapath
                .iter()
                .map(|g| g.attention.iter().map(|&a| tape.value(a).clone()).collect())
                .collect(),
            semantic_importances: self.importances.iter().map(|&e| tape.value(e).scalar()).collect(),
            semantic_weights: tape.value(self.weights).as_slice().to_vec(),
            fused: tape.value(self.fused).clone(),
            summary: tape.value(self.summary).clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub per_metapath: Vec<Matrix>,
    /// `[meta-path][head]` attention coefficients in CSR order.
    pub attention: Vec<Vec<Matrix>>,
    pub semantic_importances: Vec<f64>,
    pub semantic_weights: Vec<f64>,
    pub fused: Matrix,
    pub summary: Matrix,
}

/// Full encoder pass recorded on `tape`.
pub fn encode(
    tape: &mut Tape,
    graphs: &[MetaPathGraph],
    features: ValueId,
    vars: &EncoderVars,
    activation: Activation,
) -> Result<EncodedVars, EncoderError> {
    if graphs.is_empty() {
        return Err(EncoderError::NoMetaPaths);
    }
    if graphs.len() != vars.metapaths.len() {
        return Err(EncoderError::MetaPathCount {
            graphs: graphs.len(),
            params: vars.metapaths.len(),
        });
    }
    let rows = tape.value(features).rows();
    for g in graphs {
        if g.node_count() != rows {
            return Err(EncoderError::FeatureRows {
                metapath: g.name().to_string(),
                expected: g.node_count(),
                got: rows,
            });
        }
    }
    let per_metapath = graphs
        .iter()
        .zip(&vars.metapaths)
        .map(|(g, heads)| gat_forward(tape, g.attention_pattern(), features, heads, activation))
        .collect::<Result<Vec<_>, _>>()?;
    let outputs: Vec<ValueId> = per_metapath.iter().map(|g| g.output).collect();
    let importances = semantic_importance(tape, &outputs, &vars.semantic)?;
    let weights = semantic_weights(tape, &importances)?;
    let fused = fuse(tape, &outputs, weights)?;
    let summary = readout(tape, fused)?;
    Ok(EncodedVars {
        per_metapath,
        importances,
        weights,
        fused,
        summary,
    })
}
