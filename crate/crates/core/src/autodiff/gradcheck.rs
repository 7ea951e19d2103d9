//! Central finite-difference gradient checking.

use super::{Tape, Tensor, TensorError, Var};

/// Per-parameter outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tol: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }
}

/// Elements whose analytic and numeric gradients are both below this
/// magnitude are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

/// Compares analytic gradients of `f` against central differences with
/// step `step`, for every element of every tensor in `params`.
///
/// `f` receives the tape and one trainable variable per entry of `params`
/// and must return a scalar. It is evaluated `1 + 2·Σ numel` times.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p)).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let eval = |ps: &[Tensor]| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = ps.iter().map(|p| tape.constant(p)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut entries = Vec::with_capacity(params.len());
    for (pi, an) in analytic.iter().enumerate() {
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for (i, &a) in an.iter().enumerate() {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[i] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        entries.push(GradCheckEntry {
            param: pi,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel < tol,
        });
    }
    Ok(GradCheckReport { tol, entries })
}
