//! Euler integration of a velocity field from noise (`t = 0`) to data
//! (`t = 1`).

use super::net::{Conditioning, FlowNet};
use crate::image::Image;
use crate::numerics::Prng;
use crate::{GscError, Result};

pub trait VectorField {
    fn dim(&self) -> usize;
    fn velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(steps: usize, seed: u64) -> Result<Self> {
        if steps == 0 {
            return Err(GscError::invalid("sampler needs at least one step"));
        }
        Ok(SamplerConfig { steps, seed })
    }

    /// Uniform grid `t_k = k / N`, `k = 0..=N`.
    pub fn grid(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 / self.steps as f64).collect()
    }
}

/// `z ← z + (t_{k+1} − t_k) · v(z, t_k)` for every grid interval. No clamping.
pub fn integrate<F: VectorField + ?Sized>(field: &F, z0: Vec<f64>, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    if cfg.steps == 0 {
        return Err(GscError::invalid("sampler needs at least one step"));
    }
    if z0.len() != field.dim() {
        return Err(GscError::dims(field.dim(), z0.len()));
    }
    let grid = cfg.grid();
    let mut z = z0;
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let v = field.velocity(&z, w[0])?;
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += dt * vi;
        }
    }
    Ok(z)
}

/// Draws `z_0 ~ N(0, I)` from the config seed and integrates it.
pub fn sample_raw<F: VectorField + ?Sized>(field: &F, cfg: &SamplerConfig) -> Result<Vec<f64>> {
    let mut prng = Prng::new(cfg.seed);
    let mut z0 = vec![0.0; field.dim()];
    prng.fill_normal(&mut z0);
    integrate(field, z0, cfg)
}

/// A network bound to one caption and guidance.
pub struct ConditionedField<'a> {
    pub net: &'a FlowNet,
    pub cond: Conditioning<'a>,
}

impl VectorField for ConditionedField<'_> {
    fn dim(&self) -> usize {
        self.net.config.pixels()
    }

    fn velocity(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.net.predict(z, t, &self.cond)
    }
}

/// Generates an image, clamped to `[0, 1]`.
pub fn sample(net: &FlowNet, cond: Conditioning<'_>, cfg: &SamplerConfig) -> Result<Image> {
    let field = ConditionedField { net, cond };
    let z = sample_raw(&field, cfg)?;
    Ok(Image::new(net.config.width, net.config.height, 1, z)?.clamped())
}
