//! Bag-of-tokens caption embedding over the closed caption grammar.

use crate::numerics::{Parameters, Prng};
use crate::scene::CAPTION_VOCABULARY;
use crate::{GscError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub dim: usize,
    /// `vocabulary × dim`, row per token.
    pub table: Vec<f64>,
}

impl TextEncoder {
    pub fn new(dim: usize, prng: &mut Prng) -> Self {
        let table = (0..CAPTION_VOCABULARY.len() * dim).map(|_| 0.5 * prng.normal()).collect();
        TextEncoder { dim, table }
    }

    pub fn vocabulary_size(&self) -> usize {
        CAPTION_VOCABULARY.len()
    }

    pub fn token_ids(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|tok| {
                CAPTION_VOCABULARY
                    .iter()
                    .position(|v| *v == tok)
                    .ok_or_else(|| GscError::invalid(format!("unknown caption token {tok:?}")))
            })
            .collect()
    }

    pub fn embed_ids(&self, ids: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &id in ids {
            for (o, v) in out.iter_mut().zip(&self.table[id * self.dim..(id + 1) * self.dim]) {
                *o += v;
            }
        }
        out
    }

    /// Sum of token vectors; the empty caption maps to zero.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.embed_ids(&self.token_ids(text)?))
    }

    /// `grad.table[id] += upstream` for every token.
    pub fn backward(&self, ids: &[usize], upstream: &[f64], grad: &mut TextEncoder) {
        for &id in ids {
            for (g, u) in grad.table[id * self.dim..(id + 1) * self.dim].iter_mut().zip(upstream) {
                *g += u;
            }
        }
    }
}

impl Parameters for TextEncoder {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.table);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.table);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero_and_order_free() {
        let enc = TextEncoder::new(8, &mut Prng::new(1));
        assert_eq!(enc.embed("").unwrap(), vec![0.0; 8]);
        assert_eq!(enc.embed("one circle").unwrap(), enc.embed("circle one").unwrap());
    }

    #[test]
    fn disjoint_captions_differ() {
        let enc = TextEncoder::new(8, &mut Prng::new(2));
        assert_ne!(enc.embed("one circle").unwrap(), enc.embed("two squares").unwrap());
    }

    #[test]
    fn unknown_token_rejected() {
        let enc = TextEncoder::new(4, &mut Prng::new(3));
        assert!(enc.embed("one hexagon").is_err());
    }
}
