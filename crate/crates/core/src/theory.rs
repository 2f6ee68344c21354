//! Importance-weighted pixel entropy and the constrained rate objective
//! evaluated over a sweep of channel counts.

use crate::image::Image;
use crate::{GscError, Result};

pub const GRADIENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportanceMode {
    Uniform,
    /// Sobel magnitude with zero padding, plus a small floor.
    Gradient,
}

impl std::str::FromStr for ImportanceMode {
    type Err = GscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ImportanceMode::Uniform),
            "gradient" => Ok(ImportanceMode::Gradient),
            other => Err(GscError::invalid(format!("unknown importance mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

pub fn importance(x: &Image, mode: ImportanceMode) -> ImportanceMap {
    let (w, h) = (x.width, x.height);
    let values = match mode {
        ImportanceMode::Uniform => vec![1.0; w * h],
        ImportanceMode::Gradient => {
            let g = x.to_grayscale();
            let at = |px: isize, py: isize| -> f64 {
                if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                    0.0
                } else {
                    g.get(px as usize, py as usize)
                }
            };
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                        - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                    let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                        - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                    out.push((gx * gx + gy * gy).sqrt() + GRADIENT_EPS);
                }
            }
            out
        }
    };
    ImportanceMap {
        width: w,
        height: h,
        values,
    }
}

/// `P_i = U_i / Σ U`.
pub fn pixel_distribution(u: &ImportanceMap) -> Result<Vec<f64>> {
    if u.values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(GscError::invalid("importance values must be finite and nonnegative"));
    }
    let total: f64 = u.values.iter().sum();
    if total <= 0.0 {
        return Err(GscError::invalid("importance map is all zero"));
    }
    Ok(u.values.iter().map(|v| v / total).collect())
}

/// Base-2 entropy with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| v < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(GscError::invalid(format!("not a distribution (sums to {total})")));
    }
    Ok(-p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>())
}

/// Entropy of `P = U / S` evaluated as `log2 S − Σ U log2 U / S`, which is
/// exactly `log2 n` for a constant map.
pub fn map_entropy(u: &ImportanceMap) -> Result<f64> {
    pixel_distribution(u)?;
    let total: f64 = u.values.iter().sum();
    let weighted: f64 = u.values.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum();
    Ok(total.log2() - weighted / total)
}

pub fn image_entropy(x: &Image, mode: ImportanceMode) -> Result<f64> {
    map_entropy(&importance(x, mode))
}

/// `α (H(x) − H(x̂)) + β B`.
pub fn rd_objective_theory(hx: f64, hx_hat: f64, bits: f64, alpha: f64, beta: f64) -> f64 {
    alpha * (hx - hx_hat) + beta * bits
}

/// `α (H(x) − H(x̂)) + β B + λ (H(x̂) − R)`.
pub fn lagrangian(hx: f64, hx_hat: f64, bits: f64, rate: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    rd_objective_theory(hx, hx_hat, bits, alpha, beta) + lambda * (hx_hat - rate)
}

/// One measured sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub c: usize,
    pub hx: f64,
    pub hx_hat: f64,
    pub bits: f64,
    /// Rate budget `R` the reconstruction entropy must not exceed.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub point: SweepPoint,
    pub objective: f64,
    pub lagrangian: f64,
    /// `R − H(x̂)`; negative means infeasible.
    pub slack: f64,
    pub infeasible: bool,
    /// Central difference `ΔL/ΔC`, interior rows only.
    pub derivative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub rows: Vec<TheoryRow>,
    pub argmin_c: usize,
    /// `min |ΔL/ΔC|` over interior rows.
    pub residual: f64,
}

pub fn stationarity_report(points: &[SweepPoint], alpha: f64, beta: f64, lambda: f64) -> Result<TheoryReport> {
    if points.len() < 3 {
        return Err(GscError::invalid(format!(
            "stationarity needs at least 3 sweep rows, got {}",
            points.len()
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.c);
    if pts.windows(2).any(|w| w[0].c == w[1].c) {
        return Err(GscError::invalid("sweep rows must have distinct C"));
    }
    let lag: Vec<f64> = pts
        .iter()
        .map(|p| lagrangian(p.hx, p.hx_hat, p.bits, p.rate, alpha, beta, lambda))
        .collect();
    let mut rows = Vec::with_capacity(pts.len());
    for (i, p) in pts.iter().enumerate() {
        let derivative = (i > 0 && i + 1 < pts.len())
            .then(|| (lag[i + 1] - lag[i - 1]) / (pts[i + 1].c as f64 - pts[i - 1].c as f64));
        let slack = p.rate - p.hx_hat;
        rows.push(TheoryRow {
            point: *p,
            objective: rd_objective_theory(p.hx, p.hx_hat, p.bits, alpha, beta),
            lagrangian: lag[i],
            slack,
            infeasible: slack < 0.0,
            derivative,
        });
    }
    let argmin = (0..rows.len())
        .min_by(|&a, &b| lag[a].total_cmp(&lag[b]).then(a.cmp(&b)))
        .unwrap();
    let residual = rows
        .iter()
        .filter_map(|r| r.derivative)
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min);
    Ok(TheoryReport {
        alpha,
        beta,
        lambda,
        argmin_c: rows[argmin].point.c,
        rows,
        residual,
    })
}

impl TheoryReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("C,H_x,H_xhat,bits,rate,objective,lagrangian,slack,infeasible,dL_dC\n");
        for r in &self.rows {
            let p = &r.point;
            let d = r.derivative.map(|d| d.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                p.c, p.hx, p.hx_hat, p.bits, p.rate, r.objective, r.lagrangian, r.slack, r.infeasible as u8, d
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let infeasible: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.infeasible)
            .map(|r| r.point.c.to_string())
            .collect();
        format!(
            "alpha={} beta={} lambda={}\nargmin C = {}\nstationarity residual min|dL/dC| = {:.6}\ninfeasible rows (R < H(x_hat)): {}\n",
            self.alpha,
            self.beta,
            self.lambda,
            self.argmin_c,
            self.residual,
            if infeasible.is_empty() { "none".into() } else { infeasible.join(", ") }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;
    use proptest::prelude::*;

    fn map(values: Vec<f64>) -> ImportanceMap {
        ImportanceMap {
            width: values.len(),
            height: 1,
            values,
        }
    }

    #[test]
    fn importance_modes() {
        let x = Image::filled(5, 4, 0.3);
        assert!(importance(&x, ImportanceMode::Uniform).values.iter().all(|&v| v == 1.0));
        let mut x = Image::zeros(7, 7);
        for (i, v) in importance(&x, ImportanceMode::Gradient).values.iter().enumerate() {
            assert_eq!(*v, GRADIENT_EPS, "pixel {i}");
        }
        x.set(3, 3, 1.0);
        let u = importance(&x, ImportanceMode::Gradient);
        // stencil response of a unit impulse at offset (dx, dy) from the pixel
        let sobel = |dx: i32, dy: i32| -> f64 {
            let wx = [1.0, 2.0, 1.0][(dy + 1) as usize] * -(dx as f64);
            let wy = [1.0, 2.0, 1.0][(dx + 1) as usize] * -(dy as f64);
            (wx * wx + wy * wy).sqrt()
        };
        for py in 0..7i32 {
            for px in 0..7i32 {
                let (dx, dy) = (3 - px, 3 - py);
                let want = if dx.abs() <= 1 && dy.abs() <= 1 { sobel(dx, dy) } else { 0.0 } + GRADIENT_EPS;
                let got = u.values[(py * 7 + px) as usize];
                assert!((got - want).abs() < 1e-15, "({px},{py}) {got} vs {want}");
            }
        }
    }

    #[test]
    fn distribution_examples() {
        assert_eq!(pixel_distribution(&map(vec![1.0; 4])).unwrap(), vec![0.25; 4]);
        assert_eq!(pixel_distribution(&map(vec![1.0, 1.0, 2.0])).unwrap(), vec![0.25, 0.25, 0.5]);
        assert_eq!(pixel_distribution(&map(vec![0.0, 3.0, 0.0])).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(pixel_distribution(&map(vec![0.0; 3])).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.25; 4]).unwrap(), 2.0);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(entropy(&[0.25, 0.25, 0.5]).unwrap(), 1.5);
        assert!(entropy(&[0.5, 0.6]).is_err());
        let x = Image::filled(32, 32, 0.4);
        assert_eq!(image_entropy(&x, ImportanceMode::Uniform).unwrap(), 10.0);
    }

    #[test]
    fn objective_and_lagrangian_arithmetic() {
        assert_eq!(rd_objective_theory(2.0, 2.0, 7.0, 1.3, 0.5), 3.5);
        assert_eq!(rd_objective_theory(2.0, 1.5, 100.0, 1.0, 0.0), 0.5);
        assert!((rd_objective_theory(3.0, 2.0, 10.0, 2.0, 0.1) - 3.0).abs() < 1e-15);
        assert_eq!(lagrangian(2.0, 1.0, 3.0, 1.5, 1.0, 1.0, 2.0), 3.0);
        assert_eq!(lagrangian(2.0, 1.5, 3.0, 1.5, 1.0, 1.0, 9.0), rd_objective_theory(2.0, 1.5, 3.0, 1.0, 1.0));
    }

    fn convex_points() -> Vec<SweepPoint> {
        [1usize, 2, 4, 8, 16]
            .iter()
            .map(|&c| SweepPoint {
                c,
                hx: (c as f64 - 4.0).powi(2),
                hx_hat: 0.0,
                bits: 0.0,
                rate: 1.0,
            })
            .collect()
    }

    #[test]
    fn convex_sweep() {
        let r = stationarity_report(&convex_points(), 1.0, 0.0, 0.0).unwrap();
        assert_eq!(r.argmin_c, 4);
        // L = 9, 4, 0, 16, 144 → interior differences (0−9)/3, (16−4)/6, (144−0)/12
        let d: Vec<f64> = r.rows.iter().filter_map(|x| x.derivative).collect();
        assert_eq!(d, vec![-3.0, 2.0, 12.0]);
        assert_eq!(r.residual, 2.0);
        assert!(r.rows.iter().all(|x| !x.infeasible));
    }

    #[test]
    fn constant_sweep_and_infeasible_rows() {
        let mut pts: Vec<SweepPoint> = convex_points()
            .into_iter()
            .map(|p| SweepPoint { hx: 1.0, ..p })
            .collect();
        pts[3].hx_hat = 2.0;
        pts[3].hx = 3.0;
        let r = stationarity_report(&pts, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(r.argmin_c, 1);
        assert!(r.rows[3].infeasible);
        assert_eq!(r.rows.iter().filter(|x| x.infeasible).count(), 1);
        assert!(stationarity_report(&pts[..2], 1.0, 0.0, 0.0).is_err());
        let flat = stationarity_report(&convex_points().into_iter().map(|p| SweepPoint { hx: 0.0, ..p }).collect::<Vec<_>>(), 1.0, 0.0, 0.0).unwrap();
        assert_eq!(flat.residual, 0.0);
        assert_eq!(flat.argmin_c, 1);
    }

    #[test]
    fn csv_has_row_per_c() {
        let r = stationarity_report(&convex_points(), 1.0, 0.5, 0.1).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(r.summary().contains("argmin C = 4"));
    }

    proptest! {
        #[test]
        fn uniform_maximizes_entropy(raw in proptest::collection::vec(0.0f64..10.0, 1..40)) {
            prop_assume!(raw.iter().sum::<f64>() > 0.0);
            let p = pixel_distribution(&map(raw.clone())).unwrap();
            let h = entropy(&p).unwrap();
            prop_assert!((map_entropy(&map(raw.clone())).unwrap() - h).abs() < 1e-9);
            prop_assert!(h <= (raw.len() as f64).log2() + 1e-12);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled = pixel_distribution(&map(raw.iter().map(|v| v * 3.5).collect())).unwrap();
            for (a, b) in p.iter().zip(&scaled) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn lagrangian_reduces_at_zero_multiplier(v in proptest::collection::vec(-100.0f64..100.0, 6)) {
            let a = lagrangian(v[0], v[1], v[2], v[3], v[4], v[5], 0.0);
            prop_assert!((a - rd_objective_theory(v[0], v[1], v[2], v[4], v[5])).abs() < 1e-12);
        }
    }

    #[test]
    fn random_points_flag_every_violation() {
        let mut prng = Prng::new(3);
        for _ in 0..50 {
            let pts: Vec<SweepPoint> = (0..6)
                .map(|c| SweepPoint {
                    c: 1 << c,
                    hx: prng.uniform() * 10.0,
                    hx_hat: prng.uniform() * 10.0,
                    bits: prng.uniform() * 100.0,
                    rate: prng.uniform() * 10.0,
                })
                .collect();
            let r = stationarity_report(&pts, 1.0, 0.1, 0.5).unwrap();
            for row in &r.rows {
                assert_eq!(row.infeasible, row.point.rate < row.point.hx_hat);
            }
        }
    }
}
