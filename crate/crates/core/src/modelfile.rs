//! The `GSCM` parameter container.
//!
//! ```text
//! "GSCM" | version u8 | section count u16
//! section := tag [u8; 4]
//!            attr count u16, { key len u8, key, value len u16, value }
//!            tensor count u16, { name len u8, name, activation u8, rank u8, dims u32 × rank }
//!            f64 payload for every tensor, in table order
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use crate::numerics::{Activation, Linear};
use crate::wire::{put_f64s, Reader};
use crate::{GscError, Result};

const MAGIC: &[u8; 4] = b"GSCM";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub activation: u8,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub tag: [u8; 4],
    pub attrs: Vec<(String, Vec<u8>)>,
    pub tensors: Vec<TensorEntry>,
}

impl Section {
    pub fn new(tag: &[u8; 4]) -> Self {
        Section {
            tag: *tag,
            attrs: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: &[u8]) -> Self {
        self.attrs.push((key.to_string(), value.to_vec()));
        self
    }

    pub fn with_u64(self, key: &str, v: u64) -> Self {
        self.with_attr(key, &v.to_le_bytes())
    }

    pub fn push(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        self.push_with_activation(name, 0, shape, data);
    }

    pub fn push_with_activation(&mut self, name: &str, activation: u8, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(TensorEntry {
            name: name.to_string(),
            activation,
            shape: shape.to_vec(),
            data: data.to_vec(),
        });
    }

    pub fn push_linear(&mut self, name: &str, l: &Linear, activation: Activation) {
        self.push_with_activation(&format!("{name}.weight"), activation.tag(), &[l.outputs, l.inputs], &l.weight);
        self.push(&format!("{name}.bias"), &[l.outputs], &l.bias);
    }

    pub fn attr(&self, key: &str) -> Result<&[u8]> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| GscError::Corrupt(format!("section {} lacks attribute {key}", self.tag_str())))
    }

    pub fn attr_u64(&self, key: &str) -> Result<u64> {
        let v = self.attr(key)?;
        let arr: [u8; 8] = v
            .try_into()
            .map_err(|_| GscError::Corrupt(format!("attribute {key} is not a u64")))?;
        Ok(u64::from_le_bytes(arr))
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| GscError::Corrupt(format!("section {} lacks tensor {name}", self.tag_str())))
    }

    pub fn linear(&self, name: &str) -> Result<(Linear, Activation)> {
        let w = self.tensor(&format!("{name}.weight"))?;
        let b = self.tensor(&format!("{name}.bias"))?;
        if w.shape.len() != 2 || b.shape != [w.shape[0]] {
            return Err(GscError::Corrupt(format!("tensor {name} has inconsistent shape")));
        }
        Ok((
            Linear {
                inputs: w.shape[1],
                outputs: w.shape[0],
                weight: w.data.clone(),
                bias: b.data.clone(),
            },
            Activation::from_tag(w.activation)?,
        ))
    }

    pub fn tag_str(&self) -> String {
        String::from_utf8_lossy(&self.tag).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelFile {
    pub sections: Vec<Section>,
}

impl ModelFile {
    pub fn section(&self, tag: &[u8; 4]) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| &s.tag == tag)
            .ok_or_else(|| GscError::Corrupt(format!("missing section {}", String::from_utf8_lossy(tag))))
    }

    pub fn has_section(&self, tag: &[u8; 4]) -> bool {
        self.sections.iter().any(|s| &s.tag == tag)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.sections.len() as u16).to_le_bytes());
        for s in &self.sections {
            out.extend_from_slice(&s.tag);
            out.extend_from_slice(&(s.attrs.len() as u16).to_le_bytes());
            for (k, v) in &s.attrs {
                out.push(k.len() as u8);
                out.extend_from_slice(k.as_bytes());
                out.extend_from_slice(&(v.len() as u16).to_le_bytes());
                out.extend_from_slice(v);
            }
            out.extend_from_slice(&(s.tensors.len() as u16).to_le_bytes());
            for t in &s.tensors {
                out.push(t.name.len() as u8);
                out.extend_from_slice(t.name.as_bytes());
                out.push(t.activation);
                out.push(t.shape.len() as u8);
                for &d in &t.shape {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
            }
            for t in &s.tensors {
                put_f64s(&mut out, &t.data);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model file");
        r.expect_magic(MAGIC)?;
        let version = r.u8()?;
        if version != VERSION {
            return Err(GscError::UnsupportedVersion(version));
        }
        let n_sections = r.u16()?;
        let mut sections = Vec::with_capacity(n_sections as usize);
        for _ in 0..n_sections {
            let tag = r.array::<4>()?;
            let n_attrs = r.u16()?;
            let mut attrs = Vec::with_capacity(n_attrs as usize);
            for _ in 0..n_attrs {
                let klen = r.u8()? as usize;
                let key = String::from_utf8(r.take(klen)?.to_vec())?;
                let vlen = r.u16()? as usize;
                attrs.push((key, r.take(vlen)?.to_vec()));
            }
            let n_tensors = r.u16()?;
            let mut table = Vec::with_capacity(n_tensors as usize);
            for _ in 0..n_tensors {
                let nlen = r.u8()? as usize;
                let name = String::from_utf8(r.take(nlen)?.to_vec())?;
                let activation = r.u8()?;
                let rank = r.u8()? as usize;
                let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                table.push((name, activation, shape));
            }
            let mut tensors = Vec::with_capacity(table.len());
            for (name, activation, shape) in table {
                let n = shape.iter().product();
                let data = r.f64s(n)?;
                tensors.push(TensorEntry {
                    name,
                    activation,
                    shape,
                    data,
                });
            }
            sections.push(Section { tag, attrs, tensors });
        }
        if r.remaining() != 0 {
            return Err(GscError::Corrupt(format!("{} trailing bytes in model file", r.remaining())));
        }
        Ok(ModelFile { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| GscError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| GscError::io(path, e))?;
        ModelFile::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelFile {
        let mut s = Section::new(b"TEST").with_u64("n", 7).with_attr("note", b"hi");
        s.push("a", &[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, -6.5]);
        s.push_linear("lin", &Linear::identity(2), Activation::Gelu);
        ModelFile { sections: vec![s] }
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let back = ModelFile::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let s = back.section(b"TEST").unwrap();
        assert_eq!(s.attr_u64("n").unwrap(), 7);
        let (l, act) = s.linear("lin").unwrap();
        assert_eq!(l, Linear::identity(2));
        assert_eq!(act, Activation::Gelu);
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample().to_bytes();
        assert!(matches!(ModelFile::from_bytes(&bytes[..bytes.len() - 3]), Err(GscError::Truncated(_))));
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(ModelFile::from_bytes(&bad), Err(GscError::BadMagic { .. })));
        let mut bad = bytes;
        bad[4] = 2;
        assert!(matches!(ModelFile::from_bytes(&bad), Err(GscError::UnsupportedVersion(2))));
    }
}
