use std::fmt::Write as _;

use super::{record_objective, Adam, Clusters, ModelParams, TrainConfig, TrainError};
use crate::cluster::{self, ClusterError, ClusterState};
use crate::encoder::EncoderError;
use crate::corrupt;
use crate::hetgraph::MetaPathGraph;
use crate::numkit::{Matrix, NumError, Tape};
use crate::seeding::{derive_seed, stream};

/// Minimum increase of `L` that resets the patience counter.
pub const MIN_IMPROVEMENT: f64 = 1e-5;

pub const LOG_HEADER: &str = "epoch\tloss_global\tloss_cluster\tloss_total";

/// Losses measured at the start of an epoch, before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_global: f64,
    pub loss_cluster: f64,
    pub loss: f64,
}

impl EpochRecord {
    /// Tab-separated row; floats use the shortest round-trip form.
    pub fn to_row(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.epoch, self.loss_global, self.loss_cluster, self.loss)
    }

    pub fn render_log(records: &[EpochRecord]) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in records {
            let _ = writeln!(out, "{}", r.to_row());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the highest `L`.
    pub params: ModelParams,
    /// Fused representations under `params`.
    pub embeddings: Matrix,
    pub summary: Matrix,
    /// Clusters refit on `embeddings`.
    pub clusters: ClusterState,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn corruption_seed(config: &TrainConfig, epoch: usize) -> u64 {
    let base = derive_seed(config.seed, stream::CORRUPT);
    if config.resample_corruption {
        derive_seed(base, epoch as u64)
    } else {
        derive_seed(base, 0)
    }
}

pub fn train(graphs: &[MetaPathGraph], features: &Matrix, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(graphs, features, config, |_| {})
}

/// Full-graph training; `observer` sees every record as it is produced.
pub fn train_with<F: FnMut(&EpochRecord)>(
    graphs: &[MetaPathGraph],
    features: &Matrix,
    config: &TrainConfig,
    observer: F,
) -> Result<TrainOutcome, TrainError> {
    let params = ModelParams::seeded(config, features.cols(), graphs.len())?;
    train_from(params, graphs, features, config, observer)
}

/// Like [`train_with`] but starting from given parameters.
pub fn train_from<F: FnMut(&EpochRecord)>(
    mut params: ModelParams,
    graphs: &[MetaPathGraph],
    features: &Matrix,
    config: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let cluster_seed = derive_seed(config.seed, stream::CLUSTER);
    let mut optimizer = Adam::new(config.learning_rate, &params.tensors());

    let mut log = Vec::new();
    let mut best = (f64::NEG_INFINITY, params.clone(), 0usize);
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        let non_finite = |e: TrainError| match e {
            TrainError::Num(NumError::NonFinite { .. })
            | TrainError::Encoder(EncoderError::Num(NumError::NonFinite { .. }))
            | TrainError::Cluster(ClusterError::Num(NumError::NonFinite { .. })) => TrainError::NonFinite { epoch },
            other => other,
        };
        let shuffled = corrupt::corrupt(features, corruption_seed(config, epoch))
            .map_err(|e| TrainError::Config(e.to_string()))?
            .shuffled_features;

        let mut tape = Tape::new();
        let handles = params.register(&mut tape)?;
        let x = tape.constant(features.clone())?;
        let xs = tape.constant(shuffled)?;
        let vars = record_objective(
            &mut tape,
            &handles,
            &params,
            graphs,
            x,
            xs,
            config,
            Clusters::Refit { seed: cluster_seed },
        )
        .map_err(non_finite)?;

        let record = EpochRecord {
            epoch,
            loss_global: tape.value(vars.loss_global).scalar(),
            loss_cluster: tape.value(vars.loss_cluster).scalar(),
            loss: tape.value(vars.loss).scalar(),
        };
        if !record.loss.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }
        observer(&record);
        log.push(record);

        if record.loss > best.0 + MIN_IMPROVEMENT {
            best = (record.loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }

        let grads = tape.backward(vars.neg_loss).map_err(|e| non_finite(e.into()))?;
        optimizer.step(&mut params.tensors_mut(), &grads);
    }

    let (_, params, best_epoch) = best;
    let out = params.embed(graphs, features, config.activation)?;
    let clusters = cluster::fit(&out.fused, &config.cluster_config(), cluster_seed)?;
    Ok(TrainOutcome {
        params,
        embeddings: out.fused,
        summary: out.summary,
        clusters,
        log,
        best_epoch,
        stopped_early,
    })
}

/// Parameters `train` would start from, encoded without any update.
pub fn untrained_embeddings(graphs: &[MetaPathGraph], features: &Matrix, config: &TrainConfig) -> Result<Matrix, TrainError> {
    let params = ModelParams::seeded(config, features.cols(), graphs.len())?;
    Ok(params.embed(graphs, features, config.activation)?.fused)
}
