//! Caption compression: order-0 adaptive byte model under the range coder.
//!
//! The alphabet is the 256 byte values plus an end-of-text symbol, so a
//! compressed caption is self-delimiting. The initial counts favour lowercase
//! letters and space, which is all the caption grammar produces.

use super::range_coder::{RangeDecoder, RangeEncoder, MAX_TOTAL};
use crate::{GscError, Result};

const EOS: usize = 256;
const SYMBOLS: usize = 257;
const INCREMENT: u32 = 32;
const PRIOR_TEXT: u32 = 32;

struct AdaptiveModel {
    counts: [u32; SYMBOLS],
    total: u32,
}

impl AdaptiveModel {
    fn new() -> Self {
        let mut counts = [1u32; SYMBOLS];
        for b in b'a'..=b'z' {
            counts[b as usize] = PRIOR_TEXT;
        }
        counts[b' ' as usize] = PRIOR_TEXT;
        let total = counts.iter().sum();
        AdaptiveModel { counts, total }
    }

    fn interval(&self, s: usize) -> (u32, u32) {
        let cum = self.counts[..s].iter().sum();
        (cum, self.counts[s])
    }

    fn find(&self, target: u32) -> (usize, u32, u32) {
        let mut cum = 0;
        for (s, &c) in self.counts.iter().enumerate() {
            if target < cum + c {
                return (s, cum, c);
            }
            cum += c;
        }
        unreachable!("target below total")
    }

    fn update(&mut self, s: usize) {
        self.counts[s] += INCREMENT;
        self.total += INCREMENT;
        if self.total > MAX_TOTAL {
            self.total = 0;
            for c in self.counts.iter_mut() {
                *c = (*c + 1) / 2;
                self.total += *c;
            }
        }
    }
}

/// Empty text encodes to an empty payload.
pub fn encode_caption(text: &str) -> Vec<u8> {
    if text.is_empty() {
        return Vec::new();
    }
    let mut model = AdaptiveModel::new();
    let mut enc = RangeEncoder::new();
    for s in text.bytes().map(usize::from).chain(std::iter::once(EOS)) {
        let (cum, freq) = model.interval(s);
        enc.encode(cum, freq, model.total);
        model.update(s);
    }
    enc.finish()
}

pub fn decode_caption(bytes: &[u8]) -> Result<String> {
    if bytes.is_empty() {
        return Ok(String::new());
    }
    let mut model = AdaptiveModel::new();
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::new();
    loop {
        let target = dec.target(model.total)?;
        let (s, cum, freq) = model.find(target);
        dec.consume(cum, freq)?;
        if s == EOS {
            break;
        }
        out.push(s as u8);
        model.update(s);
        if out.len() > u16::MAX as usize {
            return Err(GscError::Corrupt("caption has no terminator".into()));
        }
    }
    if dec.consumed() != bytes.len() {
        return Err(GscError::Corrupt(format!(
            "{} stray bytes after caption",
            bytes.len() - dec.consumed()
        )));
    }
    Ok(String::from_utf8(out)?)
}
