//! The `GSC1` stream layout (all multi-byte fields little-endian):
//!
//! | field            | encoding                                              |
//! |------------------|-------------------------------------------------------|
//! | magic            | `"GSC1"`                                              |
//! | version          | u8, currently 1                                       |
//! | width, height    | u16 each, image size in pixels                        |
//! | patch            | u8, analysis patch size                               |
//! | n                | u16, latent channel count                             |
//! | C                | u16, selected channel count                           |
//! | indices          | C unsigned LEB128 varints: first index, then deltas   |
//! | quant steps      | C × f32, step of each selected channel                |
//! | model digest     | 8 bytes, identifies the shared entropy model          |
//! | caption length   | u16, compressed caption bytes                         |
//! | caption          | range-coded caption                                   |
//! | payload          | range-coded symbols of the selected channels, to EOF  |

use super::range_coder::{RangeDecoder, RangeEncoder};
use crate::codec::{EntropyModel, Latent, ModelDigest};
use crate::wire::{put_varint, Reader};
use crate::{GscError, Result};

pub const STREAM_MAGIC: &[u8; 4] = b"GSC1";
pub const STREAM_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GscHeader {
    pub version: u8,
    pub width: u16,
    pub height: u16,
    pub patch: u8,
    pub channels: u16,
    /// Strictly increasing channel indices.
    pub selected: Vec<u16>,
    pub quant_steps: Vec<f32>,
    pub digest: ModelDigest,
    pub caption_len: u16,
}

impl GscHeader {
    pub fn selected_count(&self) -> usize {
        self.selected.len()
    }

    pub fn latent_dims(&self) -> Result<(usize, usize)> {
        let p = self.patch as usize;
        if p == 0 || self.width as usize % p != 0 || self.height as usize % p != 0 {
            return Err(GscError::Corrupt(format!(
                "{}x{} not divisible by patch {p}",
                self.width, self.height
            )));
        }
        Ok((self.width as usize / p, self.height as usize / p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != STREAM_VERSION {
            return Err(GscError::UnsupportedVersion(self.version));
        }
        if self.selected.len() > self.channels as usize {
            return Err(GscError::Corrupt(format!(
                "{} channels selected out of {}",
                self.selected.len(),
                self.channels
            )));
        }
        if self.selected.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GscError::Corrupt("channel indices not strictly increasing".into()));
        }
        if self.selected.last().is_some_and(|&i| i >= self.channels) {
            return Err(GscError::Corrupt("channel index out of range".into()));
        }
        if self.quant_steps.len() != self.selected.len() {
            return Err(GscError::Corrupt("quant step table length mismatch".into()));
        }
        if self.quant_steps.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(GscError::Corrupt("non-positive quantization step".into()));
        }
        self.latent_dims()?;
        Ok(())
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(STREAM_MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.patch);
        out.extend_from_slice(&self.channels.to_le_bytes());
        out.extend_from_slice(&(self.selected.len() as u16).to_le_bytes());
        let mut prev = 0u16;
        for (i, &idx) in self.selected.iter().enumerate() {
            put_varint(out, if i == 0 { idx } else { idx - prev } as u32);
            prev = idx;
        }
        for q in &self.quant_steps {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&self.caption_len.to_le_bytes());
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        r.expect_magic(STREAM_MAGIC)?;
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(GscError::UnsupportedVersion(version));
        }
        let width = r.u16()?;
        let height = r.u16()?;
        let patch = r.u8()?;
        let channels = r.u16()?;
        let count = r.u16()? as usize;
        if count > channels as usize {
            return Err(GscError::Corrupt(format!("{count} channels selected out of {channels}")));
        }
        let mut selected = Vec::with_capacity(count);
        let mut prev = 0u32;
        for i in 0..count {
            let v = r.varint()?;
            let idx = if i == 0 { v } else { prev + v };
            if (i > 0 && v == 0) || idx >= channels as u32 {
                return Err(GscError::Corrupt(format!("invalid channel index delta {v}")));
            }
            selected.push(idx as u16);
            prev = idx;
        }
        let quant_steps = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        let digest = r.array::<8>()?;
        let caption_len = r.u16()?;
        let h = GscHeader {
            version,
            width,
            height,
            patch,
            channels,
            selected,
            quant_steps,
            digest,
            caption_len,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Entropy models the decoder holds, looked up by digest.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: Vec<EntropyModel>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        ModelRegistry::default()
    }

    pub fn with(mut self, model: EntropyModel) -> Self {
        self.insert(model);
        self
    }

    pub fn insert(&mut self, model: EntropyModel) {
        if self.get(&model.digest()).is_none() {
            self.models.push(model);
        }
    }

    pub fn get(&self, digest: &ModelDigest) -> Option<&EntropyModel> {
        self.models.iter().find(|m| &m.digest() == digest)
    }
}

pub fn digest_hex(d: &ModelDigest) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// A parsed stream whose entropy model is known to the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Unpacked {
    pub header: GscHeader,
    pub caption: Vec<u8>,
    pub payload: Vec<u8>,
}

impl Unpacked {
    pub fn total_bits(&self) -> u64 {
        8 * pack_len(&self.header, &self.caption, &self.payload) as u64
    }
}

fn pack_len(header: &GscHeader, caption: &[u8], payload: &[u8]) -> usize {
    let mut h = Vec::new();
    header.write(&mut h);
    h.len() + caption.len() + payload.len()
}

/// Header, caption and payload concatenated.
pub fn pack(header: &GscHeader, caption: &[u8], payload: &[u8]) -> Result<Vec<u8>> {
    header.validate()?;
    if header.caption_len as usize != caption.len() {
        return Err(GscError::invalid(format!(
            "header caption length {} but caption has {} bytes",
            header.caption_len,
            caption.len()
        )));
    }
    let mut out = Vec::with_capacity(64 + caption.len() + payload.len());
    header.write(&mut out);
    out.extend_from_slice(caption);
    out.extend_from_slice(payload);
    Ok(out)
}

/// Parses a stream, checking magic and version before anything else and the
/// entropy-model digest against `registry`.
pub fn unpack(bytes: &[u8], registry: &ModelRegistry) -> Result<Unpacked> {
    let mut r = Reader::new(bytes, "GSC1 stream");
    let header = GscHeader::read(&mut r)?;
    if registry.get(&header.digest).is_none() {
        return Err(GscError::DigestMismatch(digest_hex(&header.digest)));
    }
    let caption = r.take(header.caption_len as usize)?.to_vec();
    let payload = r.rest().to_vec();
    if !header.selected.is_empty() && payload.is_empty() {
        return Err(GscError::Truncated("stream has no channel payload".into()));
    }
    Ok(Unpacked {
        header,
        caption,
        payload,
    })
}

/// Range-codes the selected channels, each with its own table.
pub fn encode_payload(latent: &Latent, selected: &[u16], model: &EntropyModel) -> Result<Vec<u8>> {
    if selected.is_empty() {
        return Ok(Vec::new());
    }
    let mut enc = RangeEncoder::new();
    for &ch in selected {
        let ch = ch as usize;
        if ch >= latent.channels || ch >= model.channels() {
            return Err(GscError::invalid(format!("channel {ch} out of range")));
        }
        let table = model.table(ch);
        for &s in latent.channel(ch) {
            enc.encode_symbol(model.symbol_index(s)?, table)?;
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_payload`]: `selected.len()` maps of `spatial` symbols.
pub fn decode_payload(bytes: &[u8], selected: &[u16], spatial: usize, model: &EntropyModel) -> Result<Vec<Vec<i32>>> {
    if selected.is_empty() {
        return Ok(Vec::new());
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(selected.len());
    for &ch in selected {
        let ch = ch as usize;
        if ch >= model.channels() {
            return Err(GscError::Corrupt(format!("channel {ch} not in entropy model")));
        }
        let table = model.table(ch);
        let syms = (0..spatial)
            .map(|_| dec.decode_symbol(table).map(|i| model.symbol_at(i)))
            .collect::<Result<Vec<_>>>()?;
        out.push(syms);
    }
    if dec.consumed() != bytes.len() {
        return Err(GscError::Corrupt(format!(
            "{} stray payload bytes",
            bytes.len() - dec.consumed()
        )));
    }
    Ok(out)
}

/// Bits per pixel.
pub fn bpp(total_bits: u64, width: usize, height: usize) -> Result<f64> {
    let pixels = width * height;
    if pixels == 0 {
        return Err(GscError::invalid("bpp of an empty image"));
    }
    Ok(total_bits as f64 / pixels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::fit_entropy_model;
    use crate::numerics::Prng;
    use proptest::prelude::*;

    fn model(channels: usize) -> EntropyModel {
        let l = Latent {
            channels,
            height: 2,
            width: 2,
            symbols: (0..channels * 4).map(|i| (i % 5) as i32 - 2).collect(),
        };
        fit_entropy_model(&[l], 7).unwrap()
    }

    fn header(m: &EntropyModel, selected: Vec<u16>, caption_len: u16) -> GscHeader {
        GscHeader {
            version: STREAM_VERSION,
            width: 32,
            height: 32,
            patch: 4,
            channels: 32,
            quant_steps: vec![0.25; selected.len()],
            selected,
            digest: m.digest(),
            caption_len,
        }
    }

    #[test]
    fn bpp_arithmetic() {
        assert_eq!(bpp(1000, 512, 512).unwrap(), 0.003814697265625);
        assert_eq!(bpp(0, 32, 32).unwrap(), 0.0);
        assert!(bpp(10, 0, 32).is_err());
    }

    #[test]
    fn caption_only_stream_allowed() {
        let m = model(32);
        let reg = ModelRegistry::new().with(m.clone());
        let h = header(&m, vec![], 3);
        let bytes = pack(&h, &[1, 2, 3], &[]).unwrap();
        let u = unpack(&bytes, &reg).unwrap();
        assert_eq!(u.header, h);
        assert_eq!(u.caption, vec![1, 2, 3]);
        assert!(u.payload.is_empty());
        assert_eq!(u.total_bits(), 8 * bytes.len() as u64);
    }

    #[test]
    fn digest_flip_detected() {
        let m = model(32);
        let reg = ModelRegistry::new().with(m.clone());
        let bytes = pack(&header(&m, vec![1, 5], 0), &[], &[7, 7]).unwrap();
        let digest_at = bytes.len() - 2 - 2 - 8;
        let mut bad = bytes.clone();
        bad[digest_at] ^= 0x01;
        assert!(matches!(unpack(&bad, &reg), Err(GscError::DigestMismatch(_))));
    }

    #[test]
    fn magic_and_version_checked_first() {
        let m = model(32);
        let reg = ModelRegistry::new();
        let bytes = pack(&header(&m, vec![0], 0), &[], &[1]).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(unpack(&bad, &reg), Err(GscError::BadMagic { .. })));
        let mut bad = bytes;
        bad[4] = 7;
        assert!(matches!(unpack(&bad, &reg), Err(GscError::UnsupportedVersion(7))));
    }

    #[test]
    fn truncation_detected() {
        let m = model(32);
        let reg = ModelRegistry::new().with(m.clone());
        let bytes = pack(&header(&m, vec![2, 3], 4), &[9, 9, 9, 9], &[1, 2]).unwrap();
        for cut in 1..=8 {
            assert!(unpack(&bytes[..bytes.len() - 2 - cut], &reg).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn inconsistent_caption_length_rejected() {
        let m = model(32);
        assert!(pack(&header(&m, vec![], 2), &[1], &[]).is_err());
        assert!(pack(&header(&m, vec![3, 3], 0), &[], &[]).is_err());
    }

    #[test]
    fn payload_round_trip() {
        let mut prng = Prng::new(3);
        let l = Latent {
            channels: 6,
            height: 8,
            width: 8,
            symbols: (0..6 * 64).map(|_| prng.int_range(0, 8) as i32 - 4).collect(),
        };
        let m = fit_entropy_model(&[l.clone()], 7).unwrap();
        let sel = [1u16, 4, 5];
        let bytes = encode_payload(&l, &sel, &m).unwrap();
        let back = decode_payload(&bytes, &sel, 64, &m).unwrap();
        for (k, &ch) in sel.iter().enumerate() {
            assert_eq!(back[k], l.channel(ch as usize));
        }
    }

    prop_compose! {
        fn arb_header()(mut idx in proptest::collection::btree_set(0u16..300, 0..40),
                        w in 1u16..200, h in 1u16..200, patch in 1u8..9,
                        caption_len in 0u16..50, steps in proptest::collection::vec(1e-3f32..10.0, 40),
                        digest in any::<[u8; 8]>()) -> GscHeader {
            let selected: Vec<u16> = std::mem::take(&mut idx).into_iter().collect();
            GscHeader {
                version: STREAM_VERSION,
                width: w * patch as u16,
                height: h * patch as u16,
                patch,
                channels: 300,
                quant_steps: steps[..selected.len()].to_vec(),
                selected,
                digest,
                caption_len,
            }
        }
    }

    proptest! {
        #[test]
        fn header_round_trip(h in arb_header()) {
            let mut out = Vec::new();
            h.write(&mut out);
            let mut r = Reader::new(&out, "t");
            prop_assert_eq!(GscHeader::read(&mut r).unwrap(), h);
            prop_assert_eq!(r.remaining(), 0);
        }
    }
}
