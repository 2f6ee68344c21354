use sha2::{Digest, Sha256};

use super::Latent;
use crate::bitstream::range_coder::{CdfTable, MAX_TOTAL};
use crate::modelfile::Section;
use crate::{GscError, Result};

/// Additive smoothing applied to every histogram bin.
pub const SMOOTHING: f64 = 1.0;

/// Factorized per-channel model over the symbol alphabet `[-k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyModel {
    k: i32,
    counts: Vec<Vec<u64>>,
    tables: Vec<CdfTable>,
}

pub type ModelDigest = [u8; 8];

impl EntropyModel {
    pub fn from_counts(k: i32, counts: Vec<Vec<u64>>) -> Result<Self> {
        let alphabet = (2 * k + 1) as usize;
        if k < 0 || alphabet as u32 > MAX_TOTAL / 2 {
            return Err(GscError::invalid(format!("alphabet half-width {k} unsupported")));
        }
        if counts.is_empty() || counts.iter().any(|c| c.len() != alphabet) {
            return Err(GscError::invalid("histogram shape does not match the alphabet"));
        }
        let tables = counts
            .iter()
            .map(|c| quantize_pmf(&smoothed(c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(EntropyModel { k, counts, tables })
    }

    pub fn alphabet_half_width(&self) -> i32 {
        self.k
    }

    pub fn alphabet_size(&self) -> usize {
        (2 * self.k + 1) as usize
    }

    pub fn channels(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn table(&self, channel: usize) -> &CdfTable {
        &self.tables[channel]
    }

    pub fn symbol_index(&self, symbol: i32) -> Result<usize> {
        if symbol.abs() > self.k {
            return Err(GscError::SymbolOutOfAlphabet {
                symbol: symbol as i64,
                alphabet: self.alphabet_size(),
            });
        }
        Ok((symbol + self.k) as usize)
    }

    pub fn symbol_at(&self, index: usize) -> i32 {
        index as i32 - self.k
    }

    /// Smoothed probability `(count + 1) / (N + |alphabet|)`.
    pub fn probability(&self, channel: usize, symbol: i32) -> Result<f64> {
        let idx = self.symbol_index(symbol)?;
        let c = &self.counts[channel];
        let n: u64 = c.iter().sum();
        Ok((c[idx] as f64 + SMOOTHING) / (n as f64 + SMOOTHING * c.len() as f64))
    }

    /// Ideal codelength `-log2 P` in bits.
    pub fn codelength(&self, channel: usize, symbol: i32) -> Result<f64> {
        Ok(-self.probability(channel, symbol)?.log2())
    }

    /// Identifies the model inside bitstreams: first 8 bytes of SHA-256 over
    /// the half-width and every histogram count.
    pub fn digest(&self) -> ModelDigest {
        let mut h = Sha256::new();
        h.update(b"GSC entropy model");
        h.update(self.k.to_le_bytes());
        h.update((self.counts.len() as u32).to_le_bytes());
        for ch in &self.counts {
            for c in ch {
                h.update(c.to_le_bytes());
            }
        }
        h.finalize()[..8].try_into().unwrap()
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new(b"ENTM").with_u64("k", self.k as u64);
        let flat: Vec<f64> = self.counts.iter().flatten().map(|&c| c as f64).collect();
        s.push("counts", &[self.counts.len(), self.alphabet_size()], &flat);
        s
    }

    pub fn from_section(s: &Section) -> Result<Self> {
        let k = s.attr_u64("k")? as i32;
        let t = s.tensor("counts")?;
        if t.shape.len() != 2 {
            return Err(GscError::Corrupt("entropy counts must be 2-d".into()));
        }
        let counts = t
            .data
            .chunks_exact(t.shape[1])
            .map(|row| row.iter().map(|&v| v as u64).collect())
            .collect();
        EntropyModel::from_counts(k, counts)
    }
}

fn smoothed(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    let denom = n as f64 + SMOOTHING * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + SMOOTHING) / denom).collect()
}

/// 16-bit table: every symbol gets at least one unit, the remainder goes to
/// the most probable symbol.
fn quantize_pmf(p: &[f64]) -> Result<CdfTable> {
    let spare = (MAX_TOTAL as usize - p.len()) as f64;
    let mut freqs: Vec<u32> = p.iter().map(|&pi| 1 + (pi * spare).floor() as u32).collect();
    let used: u32 = freqs.iter().sum();
    let best = p
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > p[b] { i } else { b });
    freqs[best] += MAX_TOTAL - used;
    CdfTable::from_frequencies(&freqs)
}

/// Per-channel histograms of every symbol in `latents`.
pub fn fit_entropy_model(latents: &[Latent], k: i32) -> Result<EntropyModel> {
    let first = latents
        .first()
        .ok_or_else(|| GscError::invalid("cannot fit an entropy model to no latents"))?;
    let alphabet = (2 * k + 1) as usize;
    let mut counts = vec![vec![0u64; alphabet]; first.channels];
    for l in latents {
        if l.channels != first.channels {
            return Err(GscError::dims(first.channels, l.channels));
        }
        for (ch, hist) in counts.iter_mut().enumerate() {
            for &s in l.channel(ch) {
                if s.abs() > k {
                    return Err(GscError::SymbolOutOfAlphabet {
                        symbol: s as i64,
                        alphabet,
                    });
                }
                hist[(s + k) as usize] += 1;
            }
        }
    }
    EntropyModel::from_counts(k, counts)
}
