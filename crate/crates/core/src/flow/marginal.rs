//! The marginal velocity of the linear path toward a discrete target,
//! used as a test oracle.

use crate::numerics::Prng;
use crate::{GscError, Result};

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(GscError::invalid(format!("time {t} outside (0, 1)")));
    }
    Ok(())
}

fn log_kernel(z: &[f64], z1: &[f64], t: f64) -> f64 {
    let s = 1.0 - t;
    let d2: f64 = z.iter().zip(z1).map(|(a, b)| (a - t * b).powi(2)).sum();
    -d2 / (2.0 * s * s)
}

/// `v_t(z) = Σ_i w_i(z, t) (z1_i − z) / (1 − t)` with posterior weights
/// `w_i ∝ weight_i · N(z; t z1_i, (1 − t)² I)`.
pub fn marginal_vf_oracle(points: &[Vec<f64>], weights: &[f64], z: &[f64], t: f64) -> Result<Vec<f64>> {
    check_time(t)?;
    if points.is_empty() || points.len() != weights.len() {
        return Err(GscError::dims(points.len(), weights.len()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != z.len()) {
        return Err(GscError::dims(z.len(), p.len()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || !weights.iter().any(|&w| w > 0.0) {
        return Err(GscError::invalid("target weights must be nonnegative and not all zero"));
    }
    let logs: Vec<f64> = points
        .iter()
        .zip(weights)
        .map(|(p, &w)| if w > 0.0 { w.ln() + log_kernel(z, p, t) } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    let mut v = vec![0.0; z.len()];
    for (p, u) in points.iter().zip(&unnorm) {
        let w = u / total;
        for (vi, (a, b)) in v.iter_mut().zip(p.iter().zip(z)) {
            *vi += w * (a - b) / (1.0 - t);
        }
    }
    Ok(v)
}

/// Self-normalized Monte-Carlo estimate of the same integral: draws
/// `z1 ~ p_1` and weights each conditional velocity by `p_t(z | z1)`.
pub fn marginal_vf_monte_carlo(
    points: &[Vec<f64>],
    weights: &[f64],
    z: &[f64],
    t: f64,
    samples: usize,
    prng: &mut Prng,
) -> Result<Vec<f64>> {
    check_time(t)?;
    if points.is_empty() || points.len() != weights.len() || samples == 0 {
        return Err(GscError::invalid("Monte-Carlo estimate needs points, weights and samples"));
    }
    let total: f64 = weights.iter().sum();
    let cum: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let logs: Vec<f64> = points.iter().map(|p| log_kernel(z, p, t)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = vec![0.0; z.len()];
    let mut den = 0.0;
    for _ in 0..samples {
        let u = prng.uniform();
        let i = cum.iter().position(|&c| u < c).unwrap_or(points.len() - 1);
        let k = (logs[i] - max).exp();
        den += k;
        for (n, (a, b)) in num.iter_mut().zip(points[i].iter().zip(z)) {
            *n += k * (a - b) / (1.0 - t);
        }
    }
    if den == 0.0 {
        return Err(GscError::invalid("no Monte-Carlo sample has positive density"));
    }
    Ok(num.into_iter().map(|n| n / den).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_point_target_is_zero_at_origin() {
        let pts = vec![vec![1.0], vec![-1.0]];
        for t in [0.1, 0.25, 0.5, 0.9] {
            assert_eq!(marginal_vf_oracle(&pts, &[0.5, 0.5], &[0.0], t).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn single_point_is_conditional_velocity() {
        let v = marginal_vf_oracle(&[vec![2.0, -1.0]], &[1.0], &[0.5, 0.5], 0.25).unwrap();
        assert_eq!(v, vec![(2.0 - 0.5) / 0.75, (-1.0 - 0.5) / 0.75]);
    }

    #[test]
    fn two_point_value_at_half() {
        // posterior weight of +1 is σ(2 z t / (1 − t)²) = σ(2)
        let pts = vec![vec![1.0], vec![-1.0]];
        let v = marginal_vf_oracle(&pts, &[0.5, 0.5], &[0.5], 0.5).unwrap()[0];
        let w = 1.0 / (1.0 + (-2.0f64).exp());
        let want = (w * 0.5 + (1.0 - w) * -1.5) / 0.5;
        assert!((v - want).abs() < 1e-14);
        let mc = marginal_vf_monte_carlo(&pts, &[0.5, 0.5], &[0.5], 0.5, 200_000, &mut Prng::new(1)).unwrap()[0];
        assert!((v - mc).abs() < 1e-2);
    }

    #[test]
    fn time_bounds() {
        assert!(marginal_vf_oracle(&[vec![0.0]], &[1.0], &[0.0], 1.0).is_err());
        assert!(marginal_vf_oracle(&[vec![0.0]], &[1.0], &[0.0], 0.0).is_err());
    }
}
