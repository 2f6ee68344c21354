use crate::{GscError, Result};

/// Compares analytic gradients against central differences.
///
/// `loss_and_grad` returns the loss and its analytic gradient at the given
/// parameters. The result is `max_i |analytic_i - numeric_i| / (|numeric_i| + 1e-12)`,
/// or 0 for an empty parameter vector.
pub fn finite_diff_check<F>(mut loss_and_grad: F, params: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (loss0, analytic) = loss_and_grad(params);
    if !loss0.is_finite() {
        return Err(GscError::TrainingDiverged("non-finite loss".into()));
    }
    if analytic.len() != params.len() {
        return Err(GscError::dims(params.len(), analytic.len()));
    }
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let (lp, _) = loss_and_grad(&p);
        p[i] = orig - eps;
        let (lm, _) = loss_and_grad(&p);
        p[i] = orig;
        if !lp.is_finite() || !lm.is_finite() {
            return Err(GscError::TrainingDiverged("non-finite loss".into()));
        }
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / (numeric.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
