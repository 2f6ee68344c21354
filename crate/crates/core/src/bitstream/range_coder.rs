//! 32-bit carry-less range coder over cumulative frequency tables.
//!
//! The encoder never propagates carries: when the top byte of `low` and
//! `low + range` would differ while `range` has fallen below `BOT`, the range
//! is shrunk to the distance to the next `BOT` boundary so that the pending
//! byte becomes final. `low + range <= 2^32` holds throughout.

use crate::{GscError, Result};

const TOP: u64 = 1 << 24;
const BOT: u64 = 1 << 16;
const MASK32: u64 = 0xFFFF_FFFF;

/// Largest total frequency a table may have.
pub const MAX_TOTAL: u32 = 1 << 16;

/// Cumulative frequency table; `cdf[0] = 0`, strictly increasing, `cdf[len] = total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    cdf: Vec<u32>,
}

impl CdfTable {
    pub fn new(cdf: Vec<u32>) -> Result<Self> {
        if cdf.len() < 2 || cdf[0] != 0 {
            return Err(GscError::invalid("cdf must start at 0 and cover at least one symbol"));
        }
        if cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GscError::invalid("cdf must be strictly increasing"));
        }
        if *cdf.last().unwrap() > MAX_TOTAL {
            return Err(GscError::invalid("cdf total exceeds 2^16"));
        }
        Ok(CdfTable { cdf })
    }

    /// Table from positive frequencies.
    pub fn from_frequencies(freqs: &[u32]) -> Result<Self> {
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        cdf.push(0u32);
        let mut acc = 0u64;
        for &f in freqs {
            acc += f as u64;
            cdf.push(acc.min(u32::MAX as u64) as u32);
        }
        CdfTable::new(cdf)
    }

    pub fn uniform(symbols: usize) -> Result<Self> {
        CdfTable::from_frequencies(&vec![1; symbols])
    }

    pub fn symbols(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn total(&self) -> u32 {
        *self.cdf.last().unwrap()
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn frequency(&self, s: usize) -> u32 {
        self.cdf[s + 1] - self.cdf[s]
    }

    /// Shannon codelength of `s` under this table, in bits.
    pub fn codelength(&self, s: usize) -> f64 {
        (self.total() as f64 / self.frequency(s) as f64).log2()
    }

    /// Sum of codelengths of `symbols`.
    pub fn ideal_bits(&self, symbols: &[usize]) -> f64 {
        symbols.iter().map(|&s| self.codelength(s)).sum()
    }

    fn find(&self, value: u32) -> usize {
        self.cdf.partition_point(|&c| c <= value) - 1
    }
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        RangeEncoder::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: MASK32,
            out: Vec::new(),
        }
    }

    /// Encodes the interval `[cum, cum + freq)` out of `total`.
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total && total as u64 <= BOT);
        let r = self.range / total as u64;
        self.low += cum as u64 * r;
        self.range = freq as u64 * r;
        self.normalize();
    }

    pub fn encode_symbol(&mut self, s: usize, table: &CdfTable) -> Result<()> {
        if s >= table.symbols() {
            return Err(GscError::SymbolOutOfAlphabet {
                symbol: s as i64,
                alphabet: table.symbols(),
            });
        }
        self.encode(table.cdf[s], table.frequency(s), table.total());
        Ok(())
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ (self.low + self.range)) < TOP {
                // top byte settled
            } else if self.range < BOT {
                self.range = self.low.wrapping_neg() & (BOT - 1);
            } else {
                break;
            }
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & MASK32;
            self.range = (self.range << 8) & MASK32;
        }
    }

    /// Emits the shortest byte prefix of a value inside the final interval;
    /// the decoder reads missing trailing bytes as zero.
    pub fn finish(mut self) -> Vec<u8> {
        for n in 1..=4u32 {
            let mask = (1u64 << (32 - 8 * n)) - 1;
            let v = (self.low + mask) & !mask;
            if v < self.low + self.range {
                for i in 0..n {
                    self.out.push((v >> (24 - 8 * i)) as u8);
                }
                break;
            }
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    low: u64,
    range: u64,
    code: u64,
    input: &'a [u8],
    pos: usize,
    padding: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder {
            low: 0,
            range: MASK32,
            code: 0,
            input,
            pos: 0,
            padding: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u64;
        }
        Ok(d)
    }

    // The flush always writes at least one byte, so at most 3 can be missing.
    fn next_byte(&mut self) -> Result<u8> {
        if let Some(&b) = self.input.get(self.pos) {
            self.pos += 1;
            return Ok(b);
        }
        self.padding += 1;
        if self.padding > 3 {
            return Err(GscError::Truncated("range-coded stream ended early".into()));
        }
        Ok(0)
    }

    /// Real input bytes consumed so far.
    pub fn consumed(&self) -> usize {
        self.pos
    }

    /// Target value in `[0, total)` for the next symbol. Must be followed by
    /// [`RangeDecoder::consume`].
    pub fn target(&mut self, total: u32) -> Result<u32> {
        self.range /= total as u64;
        let v = (self.code.wrapping_sub(self.low) & MASK32) / self.range;
        if v >= total as u64 {
            return Err(GscError::Corrupt("range-coded value outside model".into()));
        }
        Ok(v as u32)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        self.low += cum as u64 * self.range;
        self.range *= freq as u64;
        loop {
            if (self.low ^ (self.low + self.range)) < TOP {
            } else if self.range < BOT {
                self.range = self.low.wrapping_neg() & (BOT - 1);
            } else {
                break;
            }
            self.code = ((self.code << 8) | self.next_byte()? as u64) & MASK32;
            self.low = (self.low << 8) & MASK32;
            self.range = (self.range << 8) & MASK32;
        }
        Ok(())
    }

    pub fn decode_symbol(&mut self, table: &CdfTable) -> Result<usize> {
        let v = self.target(table.total())?;
        let s = table.find(v);
        self.consume(table.cdf[s], table.frequency(s))?;
        Ok(s)
    }
}

/// Codes `symbols` with a single static table.
pub fn rc_encode(symbols: &[usize], model: &CdfTable) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for &s in symbols {
        enc.encode_symbol(s, model)?;
    }
    Ok(enc.finish())
}

pub fn rc_decode(bytes: &[u8], model: &CdfTable, count: usize) -> Result<Vec<usize>> {
    let mut dec = RangeDecoder::new(bytes)?;
    (0..count).map(|_| dec.decode_symbol(model)).collect()
}
