//! Reconstruction metrics and the connected-component stand-in for a
//! downstream vision model.

use std::collections::VecDeque;

use crate::image::Image;
use crate::{GscError, Result};

pub const PSNR_IDENTICAL_DB: f64 = 99.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const MIN_COMPONENT_AREA: usize = 4;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(GscError::dims(
            format!("{}x{}x{}", a.width, a.height, a.channels),
            format!("{}x{}x{}", b.width, b.height, b.channels),
        ));
    }
    let n = a.data.len() as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10 log10(1 / MSE)` on the unit range; identical images give 99 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok(10.0 * (1.0 / m).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    /// Pixel-centre coordinates, `(x + 0.5, y + 0.5)` averaged.
    pub centroid: (f64, f64),
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionDescriptor {
    pub width: usize,
    pub height: usize,
    pub components: Vec<Component>,
}

impl VisionDescriptor {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }
}

/// 4-connected components of `x > threshold` with at least
/// [`MIN_COMPONENT_AREA`] pixels, in raster order of their first pixel.
pub fn vision_analyze(x: &Image, threshold: f64) -> VisionDescriptor {
    let g = x.to_grayscale();
    let (w, h) = (g.width, g.height);
    let on: Vec<bool> = g.data.iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !on[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut sx, mut sy, mut area) = (0.0, 0.0, 0usize);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            area += 1;
            let mut visit = |j: usize| {
                if on[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if area >= MIN_COMPONENT_AREA {
            components.push(Component {
                centroid: (sx / area as f64, sy / area as f64),
                area,
            });
        }
    }
    VisionDescriptor {
        width: w,
        height: h,
        components,
    }
}

/// `|n_a − n_b|` plus the mean normalized distance of greedily matched
/// centroids (closest pair first) plus one per unmatched component.
pub fn v_distance(a: &VisionDescriptor, b: &VisionDescriptor, canvas_diag: f64) -> f64 {
    let mut pairs = Vec::with_capacity(a.count() * b.count());
    for (i, ca) in a.components.iter().enumerate() {
        for (j, cb) in b.components.iter().enumerate() {
            let d = (ca.centroid.0 - cb.centroid.0).hypot(ca.centroid.1 - cb.centroid.1);
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.count()];
    let mut used_b = vec![false; b.count()];
    let (mut sum, mut matched) = (0.0, 0usize);
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            sum += d;
            matched += 1;
        }
    }
    let diff = a.count().abs_diff(b.count()) as f64;
    let mean = if matched > 0 { sum / matched as f64 / canvas_diag } else { 0.0 };
    diff + mean + (a.count() + b.count() - 2 * matched) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;
    use crate::scene::{render_scene, SceneSpec, Shape, ShapeKind};

    fn desc(centroids: &[(f64, f64)]) -> VisionDescriptor {
        VisionDescriptor {
            width: 32,
            height: 32,
            components: centroids.iter().map(|&c| Component { centroid: c, area: 9 }).collect(),
        }
    }

    #[test]
    fn psnr_examples() {
        let a = Image::filled(8, 8, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let b = Image::filled(8, 8, 0.5 + 1.0 / 255.0);
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-4);
        assert!(psnr(&a, &Image::zeros(4, 4)).is_err());
    }

    #[test]
    fn psnr_matches_definition_and_orders_noise() {
        let mut prng = Prng::new(1);
        let a = Image::new(16, 16, 1, (0..256).map(|_| prng.uniform()).collect()).unwrap();
        let b = Image::new(16, 16, 1, (0..256).map(|_| prng.uniform()).collect()).unwrap();
        let mut m = 0.0;
        for i in 0..256 {
            m += (a.data[i] - b.data[i]).powi(2);
        }
        let want = -10.0 * (m / 256.0).log10();
        assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-10);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let base = Image::filled(16, 16, 0.5);
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.05, 0.2] {
            let noisy = Image::new(16, 16, 1, (0..256).map(|_| 0.5 + amp * (prng.uniform() - 0.5)).collect()).unwrap();
            let p = psnr(&base, &noisy).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn components_of_rendered_shapes() {
        assert_eq!(vision_analyze(&Image::zeros(32, 32), 0.5).count(), 0);
        let square = Shape {
            kind: ShapeKind::Square,
            center: (10, 12),
            size: 3,
            intensity: 0.9,
        };
        let img = render_scene(&SceneSpec { shapes: vec![square] }, 32, 32).unwrap();
        let d = vision_analyze(&img, 0.5);
        assert_eq!(d.count(), 1);
        assert_eq!(d.components[0].area, 36);
        let (cx, cy) = d.components[0].centroid;
        assert!((cx - 10.0).abs() <= 0.5 && (cy - 12.0).abs() <= 0.5);
        let circle = Shape {
            kind: ShapeKind::Circle,
            center: (24, 24),
            size: 4,
            intensity: 0.8,
        };
        let img = render_scene(&SceneSpec { shapes: vec![square, circle] }, 32, 32).unwrap();
        assert_eq!(vision_analyze(&img, 0.5).count(), 2);
    }

    #[test]
    fn small_specks_and_diagonals_ignored() {
        let mut img = Image::zeros(8, 8);
        for (x, y) in [(0, 0), (1, 1), (2, 2), (3, 3), (6, 6), (7, 6), (6, 7)] {
            img.set(x, y, 1.0);
        }
        assert_eq!(vision_analyze(&img, 0.5).count(), 0);
    }

    #[test]
    fn distance_examples() {
        let a = desc(&[(10.0, 10.0), (20.0, 5.0)]);
        assert_eq!(v_distance(&a, &a, a.diagonal()), 0.0);
        assert_eq!(v_distance(&desc(&[(3.0, 3.0)]), &desc(&[]), 45.0), 2.0);
        let b = desc(&[(13.0, 14.0), (23.0, 9.0)]);
        let diag = (2.0f64 * 32.0 * 32.0).sqrt();
        let d = v_distance(&a, &b, diag);
        assert!((d - 5.0 / diag).abs() < 1e-15);
        assert!((d - 0.1105).abs() < 1e-4);
        assert_eq!(d, v_distance(&b, &a, diag));
    }

    #[test]
    fn greedy_matches_closest_first() {
        let a = desc(&[(0.0, 0.0), (10.0, 0.0)]);
        let b = desc(&[(9.0, 0.0)]);
        // (10,0)-(9,0) is matched; (0,0) is left over
        assert!((v_distance(&a, &b, 10.0) - (1.0 + 0.1 + 1.0)).abs() < 1e-15);
    }
}
