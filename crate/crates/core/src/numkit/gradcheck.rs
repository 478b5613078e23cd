use super::{Matrix, NumError, ParamId, Tape, ValueId};

const STEP: f64 = 1e-4;
const DENOM_FLOOR: f64 = 1e-8;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// Checks the gradients of a scalar expression.
///
/// `build` records the expression on a fresh tape given one parameter handle
/// per entry of `params` (registered as `ParamId(0..)`), and returns the root.
/// It is called once for the analytic pass and twice per parameter entry for
/// central differences with step `1e-4`.
pub fn grad_check<F>(params: &[Matrix], tolerance: f64, mut build: F) -> Result<GradCheck, NumError>
where
    F: FnMut(&mut Tape, &[ValueId]) -> Result<ValueId, NumError>,
{
    let mut eval = |values: &[Matrix]| -> Result<(Tape, ValueId), NumError> {
        let mut tape = Tape::new();
        let handles = values
            .iter()
            .enumerate()
            .map(|(i, m)| tape.param(ParamId(i), m.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let root = build(&mut tape, &handles)?;
        let shape = tape.value(root).shape();
        if shape != (1, 1) {
            return Err(NumError::NonScalarRoot(shape));
        }
        Ok((tape, root))
    };

    let (tape, root) = eval(params)?;
    let analytic = tape.backward(root)?;
    drop(tape);

    let mut work: Vec<Matrix> = params.to_vec();
    let mut max_err: f64 = 0.0;
    let mut worst = None;
    for p in 0..params.len() {
        let exact = analytic.get(ParamId(p)).expect("every parameter has a gradient");
        for k in 0..params[p].len() {
            let orig = params[p].as_slice()[k];
            work[p].as_mut_slice()[k] = orig + STEP;
            let (t_plus, r_plus) = eval(&work)?;
            let f_plus = t_plus.value(r_plus).scalar();
            work[p].as_mut_slice()[k] = orig - STEP;
            let (t_minus, r_minus) = eval(&work)?;
            let f_minus = t_minus.value(r_minus).scalar();
            work[p].as_mut_slice()[k] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * STEP);
            let a = exact.as_slice()[k];
            let err = (a - numeric).abs() / DENOM_FLOOR.max(a.abs() + numeric.abs());
            if err > max_err {
                max_err = err;
                worst = Some((p, k));
            }
        }
    }
    Ok(GradCheck {
        max_relative_error: max_err,
        worst,
        tolerance,
    })
}
