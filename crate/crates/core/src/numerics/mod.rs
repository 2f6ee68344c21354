//! Deterministic f64 kernel: tensors, a seeded generator, dense layers with
//! hand-written reverse-mode gradients, AdamW and finite-difference checks.

mod dense;
mod gradcheck;
mod optim;
mod prng;
mod tensor;

pub use dense::{Activation, DenseNet, Layer, Linear};
pub(crate) use dense::dot as dense_dot;
pub use gradcheck::finite_diff_check;
pub use optim::{adamw_step, AdamState, AdamWConfig};
pub use prng::{gaussian, splitmix64, Prng};
pub use tensor::Tensor;

/// Anything that owns a fixed, ordered list of f64 parameter buffers.
///
/// The visiting order defines the flat layout used by the optimizer, by
/// gradient buffers of the same type, and by model files.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> crate::Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(crate::GscError::dims(n, flat.len()));
        }
        let mut off = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |s| s.fill(value));
    }

    /// Elementwise `self += other`; both must share a layout.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.to_flat();
        let mut off = 0;
        self.visit_mut(&mut |s| {
            let n = s.len();
            for (d, v) in s.iter_mut().zip(&flat[off..off + n]) {
                *d += v;
            }
            off += n;
        });
    }

    fn scale(&mut self, k: f64) {
        self.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= k));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }
}
