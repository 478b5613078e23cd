//! Infomax objective over real and corrupted encodings, and the training loop.

mod loss;
mod optim;
mod train;

pub use loss::{discriminate, loss_cluster, loss_global, total_loss, total_loss_on_tape, Discriminator, PROB_EPS};
pub use optim::Adam;
pub use train::{train, train_from, train_with, untrained_embeddings, EpochRecord, TrainOutcome, LOG_HEADER, MIN_IMPROVEMENT};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{self, ClusterConfig, ClusterError, ClusterState};
use crate::encoder::{self, Activation, EncodedVars, EncoderConfig, EncoderError, EncoderParams};
use crate::hetgraph::MetaPathGraph;
use crate::numkit::{Matrix, NumError, ParamId, Tape, ValueId};
use crate::seeding;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub theta: f64,
    pub embed_dim: usize,
    pub heads: usize,
    pub clusters: usize,
    pub beta: f64,
    pub kmeans_iters: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub semantic_dim: usize,
    pub activation: Activation,
    /// Assignments use `softmax(−β·cos)` instead of `softmax(β·cos)`.
    pub literal_sign: bool,
    /// Score pairs with a learned `d × d` matrix, `σ(hᵀ M c)`.
    pub bilinear: bool,
    /// Draw a fresh feature shuffle every epoch; otherwise reuse the first.
    pub resample_corruption: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            embed_dim: 16,
            heads: 4,
            clusters: 3,
            beta: 100.0,
            kmeans_iters: 10,
            learning_rate: 1e-3,
            max_epochs: 1000,
            patience: 20,
            seed: 0,
            semantic_dim: 128,
            activation: Activation::Elu,
            literal_sign: false,
            bilinear: false,
            resample_corruption: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return bad("embed_dim must be a positive multiple of heads");
        }
        if self.clusters == 0 {
            return bad("clusters must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive and finite");
        }
        if self.kmeans_iters == 0 {
            return bad("kmeans_iters must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative and finite");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.semantic_dim == 0 {
            return bad("semantic_dim must be at least 1");
        }
        Ok(())
    }

    pub fn encoder_config(&self, feature_dim: usize) -> EncoderConfig {
        EncoderConfig {
            feature_dim,
            embed_dim: self.embed_dim,
            heads: self.heads,
            semantic_dim: self.semantic_dim,
            activation: self.activation,
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            clusters: self.clusters,
            beta: self.beta,
            iterations: self.kmeans_iters,
            literal_sign: self.literal_sign,
        }
    }

    pub fn discriminator_of(&self, handle: Option<ValueId>) -> Discriminator {
        match handle {
            Some(m) => Discriminator::Bilinear(m),
            None => Discriminator::Plain,
        }
    }
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub bilinear: Option<Matrix>,
}

impl ModelParams {
    /// Glorot-initialised encoder; the bilinear matrix, if enabled, starts
    /// at the identity so the initial scores match the plain inner product.
    pub fn init<R: Rng + ?Sized>(config: &TrainConfig, feature_dim: usize, metapaths: usize, rng: &mut R) -> Result<Self, TrainError> {
        config.validate()?;
        let encoder = EncoderParams::init(&config.encoder_config(feature_dim), metapaths, rng)?;
        let bilinear = config.bilinear.then(|| Matrix::identity(config.embed_dim));
        Ok(Self { encoder, bilinear })
    }

    /// Parameters for `config.seed`, as drawn by [`train`].
    pub fn seeded(config: &TrainConfig, feature_dim: usize, metapaths: usize) -> Result<Self, TrainError> {
        let mut rng = seeding::rng(seeding::derive_seed(config.seed, seeding::stream::INIT));
        Self::init(config, feature_dim, metapaths, &mut rng)
    }

    /// Encoder tensors followed by the bilinear matrix.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = self.encoder.tensors();
        out.extend(self.bilinear.iter());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.bilinear.iter_mut());
        out
    }

    pub fn tensor_count(&self) -> usize {
        self.encoder.tensor_count() + usize::from(self.bilinear.is_some())
    }

    /// Registers every tensor on `tape` as `ParamId(0..)` in [`ModelParams::tensors`] order.
    pub fn register(&self, tape: &mut Tape) -> Result<Vec<ValueId>, NumError> {
        self.tensors()
            .into_iter()
            .enumerate()
            .map(|(k, m)| tape.param(ParamId(k), m.clone()))
            .collect()
    }

    /// Run the encoder alone on `features`.
    pub fn embed(&self, graphs: &[MetaPathGraph], features: &Matrix, activation: Activation) -> Result<encoder::EncoderOutput, TrainError> {
        Ok(self.encoder.encode(graphs, features, activation)?)
    }
}

/// Where the cluster state used by the cluster term comes from.
#[derive(Debug, Clone)]
pub enum Clusters<'a> {
    /// Refit from the detached real encoding with this seed.
    Refit { seed: u64 },
    /// Use a given state (e.g. for finite-difference checks, which need the
    /// centers held fixed while parameters are perturbed).
    Fixed(&'a ClusterState),
}

/// Handles of one recorded objective.
#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub real: EncodedVars,
    pub corrupted: EncodedVars,
    pub cluster_summaries: ValueId,
    pub loss_global: ValueId,
    pub loss_cluster: ValueId,
    pub loss: ValueId,
    /// `−L`, the quantity that is minimised.
    pub neg_loss: ValueId,
    pub clusters: ClusterState,
}

/// Records `−L` for one pair of real and shuffled feature matrices.
///
/// `handles` are the model parameters in [`ModelParams::tensors`] order;
/// `layout` only supplies the structure.
#[allow(clippy::too_many_arguments)]
pub fn record_objective(
    tape: &mut Tape,
    handles: &[ValueId],
    layout: &ModelParams,
    graphs: &[MetaPathGraph],
    features: ValueId,
    shuffled: ValueId,
    config: &TrainConfig,
    clusters: Clusters<'_>,
) -> Result<ObjectiveVars, TrainError> {
    let vars = layout.encoder.vars_from_handles(handles);
    let bilinear = layout
        .bilinear
        .as_ref()
        .map(|_| handles[layout.encoder.tensor_count()]);
    let disc = config.discriminator_of(bilinear);

    let real = encoder::encode(tape, graphs, features, &vars, config.activation)?;
    let corrupted = encoder::encode(tape, graphs, shuffled, &vars, config.activation)?;

    let state = match clusters {
        Clusters::Refit { seed } => cluster::fit(tape.value(real.fused), &config.cluster_config(), seed)?,
        Clusters::Fixed(s) => s.clone(),
    };
    let z = cluster::cluster_summaries_on_tape(tape, real.fused, &state)?;

    let lg = loss_global(tape, real.fused, corrupted.fused, real.summary, disc)?;
    let lc = loss_cluster(tape, real.fused, corrupted.fused, z, disc)?;
    let loss = total_loss_on_tape(tape, lg, lc, config.theta)?;
    let neg_loss = tape.affine(loss, -1.0, 0.0)?;
    Ok(ObjectiveVars {
        real,
        corrupted,
        cluster_summaries: z,
        loss_global: lg,
        loss_cluster: lc,
        loss,
        neg_loss,
        clusters: state,
    })
}
