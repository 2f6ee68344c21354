use std::f64::consts::TAU;

use super::Tensor;
use crate::{GscError, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output for state `x` (already advanced).
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream with Box–Muller normals.
///
/// The second Box–Muller output of each pair is kept and returned by the
/// next normal draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Prng {
    seed: u64,
    counter: u64,
    spare: Option<f64>,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng {
            seed,
            counter: 0,
            spare: None,
        }
    }

    /// Independent stream keyed by `(seed, stream)`, independent of how far
    /// any other generator has advanced.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Prng::new(splitmix64(seed ^ splitmix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    /// Child stream keyed on this generator's seed.
    pub fn child(&self, stream: u64) -> Self {
        Prng::derive(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_range(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as u32
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = self.normal());
    }
}

/// Tensor of i.i.d. standard normals.
pub fn gaussian(state: &mut Prng, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    if shape.is_empty() || n == 0 {
        return Err(GscError::invalid(format!("zero-sized shape {shape:?}")));
    }
    let mut t = Tensor::zeros(shape);
    state.fill_normal(t.data_mut());
    Ok(t)
}
