//! Discriminator and the global / cluster infomax losses.

use crate::numkit::{dot, sigmoid, NumError, Tape, ValueId};

/// Discriminator outputs are clamped into `[EPS, 1 − EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

/// Scoring function shared by the two losses.
#[derive(Debug, Clone, Copy)]
pub enum Discriminator {
    /// `σ(hᵀc)`
    Plain,
    /// `σ(hᵀ M c)` with `M` a `d × d` parameter handle.
    Bilinear(ValueId),
}

/// `D(h, c) = σ(hᵀc)`.
pub fn discriminate(h: &[f64], context: &[f64]) -> f64 {
    assert_eq!(h.len(), context.len(), "discriminator dimension mismatch");
    sigmoid(dot(h, context))
}

impl Discriminator {
    fn project(self, tape: &mut Tape, h: ValueId) -> Result<ValueId, NumError> {
        match self {
            Discriminator::Plain => Ok(h),
            Discriminator::Bilinear(m) => tape.matmul(h, m),
        }
    }

    /// Logits of every row of `h` against one `1 × d` summary, `N × 1`.
    pub fn logits_vs_summary(self, tape: &mut Tape, h: ValueId, summary: ValueId) -> Result<ValueId, NumError> {
        let projected = self.project(tape, h)?;
        let column = tape.transpose(summary)?;
        tape.matmul(projected, column)
    }

    /// Row-wise logits `⟨hᵢ, cᵢ⟩`, `N × 1`.
    pub fn logits_rowwise(self, tape: &mut Tape, h: ValueId, context: ValueId) -> Result<ValueId, NumError> {
        let projected = self.project(tape, h)?;
        let prod = tape.mul(projected, context)?;
        tape.row_sum(prod)
    }
}

/// `(1/2N) (Σ log D(pos) + Σ log(1 − D(neg)))` from the two logit columns.
fn infomax_term(tape: &mut Tape, positive: ValueId, negative: ValueId) -> Result<ValueId, NumError> {
    let n = tape.value(positive).rows();
    let p = tape.sigmoid(positive)?;
    let p = tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
    let log_p = tape.log(p)?;
    let q = tape.sigmoid(negative)?;
    let q = tape.clamp(q, PROB_EPS, 1.0 - PROB_EPS)?;
    let one_minus_q = tape.affine(q, -1.0, 1.0)?;
    let log_q = tape.log(one_minus_q)?;
    let sum_p = tape.sum(log_p)?;
    let sum_q = tape.sum(log_q)?;
    let both = tape.add(sum_p, sum_q)?;
    tape.affine(both, 1.0 / (2.0 * n as f64), 0.0)
}

/// Local–global term: real rows against the summary are positives,
/// corrupted rows against the same summary are negatives.
pub fn loss_global(
    tape: &mut Tape,
    real: ValueId,
    corrupted: ValueId,
    summary: ValueId,
    disc: Discriminator,
) -> Result<ValueId, NumError> {
    let pos = disc.logits_vs_summary(tape, real, summary)?;
    let neg = disc.logits_vs_summary(tape, corrupted, summary)?;
    infomax_term(tape, pos, neg)
}

/// Local–cluster term: `(hᵢ, zᵢ)` positives, `(h̃ᵢ, zᵢ)` negatives, where
/// `zᵢ` always comes from the real graph.
pub fn loss_cluster(
    tape: &mut Tape,
    real: ValueId,
    corrupted: ValueId,
    summaries: ValueId,
    disc: Discriminator,
) -> Result<ValueId, NumError> {
    let pos = disc.logits_rowwise(tape, real, summaries)?;
    let neg = disc.logits_rowwise(tape, corrupted, summaries)?;
    infomax_term(tape, pos, neg)
}

/// `L = θ L_g + (1 − θ) L_c`.
pub fn total_loss(loss_global: f64, loss_cluster: f64, theta: f64) -> f64 {
    theta * loss_global + (1.0 - theta) * loss_cluster
}

/// Tape version of [`total_loss`]; evaluates to the same bits.
pub fn total_loss_on_tape(tape: &mut Tape, loss_global: ValueId, loss_cluster: ValueId, theta: f64) -> Result<ValueId, NumError> {
    let g = tape.affine(loss_global, theta, 0.0)?;
    let c = tape.affine(loss_cluster, 1.0 - theta, 0.0)?;
    tape.add(g, c)
}
