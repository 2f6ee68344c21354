//! Procedural toy scenes, their captions, and the corpus container.
//!
//! Captions name shape kinds and counts only. Where the shapes are is left
//! for the transmitted latent channels to carry.

use std::path::Path;

use crate::image::Image;
use crate::numerics::Prng;
use crate::wire::{put_f64s, Reader};
use crate::{Exec, GscError, Result};

pub const MAX_PER_KIND: u32 = 4;
pub const MIN_SHAPE_SIZE: u32 = 3;
const PLACEMENT_RETRIES: usize = 100;
const CORPUS_MAGIC: &[u8; 4] = b"GSCC";
const CORPUS_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle];

    pub fn word(self, plural: bool) -> &'static str {
        match (self, plural) {
            (ShapeKind::Circle, false) => "circle",
            (ShapeKind::Circle, true) => "circles",
            (ShapeKind::Square, false) => "square",
            (ShapeKind::Square, true) => "squares",
            (ShapeKind::Triangle, false) => "triangle",
            (ShapeKind::Triangle, true) => "triangles",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Result<Self> {
        ShapeKind::ALL
            .get(t as usize)
            .copied()
            .ok_or_else(|| GscError::Corrupt(format!("unknown shape kind {t}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    /// Center in pixel units; pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
    pub center: (u32, u32),
    /// Radius for circles, half-side for squares and triangles.
    pub size: u32,
    pub intensity: f64,
}

impl Shape {
    /// Center-of-pixel coverage test.
    pub fn covers(&self, px: f64, py: f64) -> bool {
        let dx = px - self.center.0 as f64;
        let dy = py - self.center.1 as f64;
        let s = self.size as f64;
        match self.kind {
            ShapeKind::Circle => dx * dx + dy * dy < s * s,
            ShapeKind::Square => dx.abs() < s && dy.abs() < s,
            // apex up at (cx, cy - s), base along y = cy + s
            ShapeKind::Triangle => dy > -s && dy < s && dx.abs() < 0.5 * (dy + s),
        }
    }

    fn bbox(&self) -> (i64, i64, i64, i64) {
        let (cx, cy, s) = (self.center.0 as i64, self.center.1 as i64, self.size as i64);
        (cx - s, cy - s, cx + s, cy + s)
    }

    fn inside(&self, width: usize, height: usize) -> bool {
        let (x0, y0, x1, y1) = self.bbox();
        x0 >= 0 && y0 >= 0 && x1 <= width as i64 && y1 <= height as i64
    }

    /// Bounding boxes separated by at least `gap` empty pixels.
    fn separated(&self, other: &Shape, gap: u32) -> bool {
        let (a0, b0, a1, b1) = self.bbox();
        let (c0, d0, c1, d1) = other.bbox();
        let g = gap as i64;
        a1 + g <= c0 || c1 + g <= a0 || b1 + g <= d0 || d1 + g <= b0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneSpec {
    pub shapes: Vec<Shape>,
}

impl SceneSpec {
    pub fn count(&self, kind: ShapeKind) -> usize {
        self.shapes.iter().filter(|s| s.kind == kind).count()
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for kind in ShapeKind::ALL {
            if self.count(kind) > MAX_PER_KIND as usize {
                return Err(GscError::invalid(format!("more than {MAX_PER_KIND} {kind:?}")));
            }
        }
        for s in &self.shapes {
            if s.size < MIN_SHAPE_SIZE {
                return Err(GscError::invalid(format!("shape size {} below minimum", s.size)));
            }
            if !(0.3..=1.0).contains(&s.intensity) {
                return Err(GscError::invalid(format!("intensity {} outside [0.3, 1]", s.intensity)));
            }
            if !s.inside(width, height) {
                return Err(GscError::invalid(format!(
                    "{:?} at {:?} size {} leaves the {width}x{height} canvas",
                    s.kind, s.center, s.size
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub max_per_kind: u32,
    pub min_size: u32,
    pub max_size: u32,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub allow_overlap: bool,
    /// Minimum empty pixels between bounding boxes when overlap is disallowed.
    pub gap: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 32,
            height: 32,
            max_per_kind: 2,
            min_size: 3,
            max_size: 5,
            intensity_min: 0.6,
            intensity_max: 1.0,
            allow_overlap: false,
            gap: 1,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_per_kind > MAX_PER_KIND {
            return Err(GscError::invalid(format!("max_per_kind {} > {MAX_PER_KIND}", self.max_per_kind)));
        }
        if self.min_size < MIN_SHAPE_SIZE || self.min_size > self.max_size {
            return Err(GscError::invalid(format!(
                "size range [{}, {}] invalid",
                self.min_size, self.max_size
            )));
        }
        if 2 * self.max_size as usize > self.width.min(self.height) {
            return Err(GscError::invalid("max_size does not fit the canvas"));
        }
        if !(0.3 <= self.intensity_min && self.intensity_min <= self.intensity_max && self.intensity_max <= 1.0) {
            return Err(GscError::invalid("intensity range must lie in [0.3, 1]"));
        }
        Ok(())
    }
}

/// Draws counts per kind, then size, position and intensity for each shape.
pub fn sample_scene(prng: &mut Prng, config: &SceneConfig) -> Result<SceneSpec> {
    config.validate()?;
    let mut kinds = Vec::new();
    for kind in ShapeKind::ALL {
        let n = prng.int_range(0, config.max_per_kind);
        kinds.extend(std::iter::repeat(kind).take(n as usize));
    }
    // paint order
    for i in (1..kinds.len()).rev() {
        let j = prng.int_range(0, i as u32) as usize;
        kinds.swap(i, j);
    }
    let mut shapes: Vec<Shape> = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut placed = None;
        for _ in 0..PLACEMENT_RETRIES {
            let size = prng.int_range(config.min_size, config.max_size);
            let cx = prng.int_range(size, config.width as u32 - size);
            let cy = prng.int_range(size, config.height as u32 - size);
            let intensity = prng.uniform_range(config.intensity_min, config.intensity_max);
            let cand = Shape {
                kind,
                center: (cx, cy),
                size,
                intensity,
            };
            if config.allow_overlap || shapes.iter().all(|s| s.separated(&cand, config.gap)) {
                placed = Some(cand);
                break;
            }
        }
        match placed {
            Some(s) => shapes.push(s),
            None => {
                return Err(GscError::Generation(format!(
                    "could not place a {kind:?} after {PLACEMENT_RETRIES} attempts"
                )))
            }
        }
    }
    Ok(SceneSpec { shapes })
}

/// Rasterizes onto a zero background; later shapes overwrite earlier ones.
pub fn render_scene(spec: &SceneSpec, width: usize, height: usize) -> Result<Image> {
    for s in &spec.shapes {
        if !s.inside(width, height) {
            return Err(GscError::invalid(format!(
                "{:?} at {:?} size {} leaves the {width}x{height} canvas",
                s.kind, s.center, s.size
            )));
        }
    }
    let mut img = Image::zeros(width, height);
    for s in &spec.shapes {
        let (x0, y0, x1, y1) = s.bbox();
        for y in y0.max(0) as usize..(y1 as usize).min(height) {
            for x in x0.max(0) as usize..(x1 as usize).min(width) {
                if s.covers(x as f64 + 0.5, y as f64 + 0.5) {
                    img.set(x, y, s.intensity);
                }
            }
        }
    }
    Ok(img)
}

const COUNT_WORDS: [&str; 5] = ["zero", "one", "two", "three", "four"];

/// Every token the caption grammar can emit.
pub const CAPTION_VOCABULARY: [&str; 14] = [
    "an", "empty", "scene", "and", "one", "two", "three", "four", "circle", "circles", "square",
    "squares", "triangle", "triangles",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Caption(pub String);

impl Caption {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Caption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// `"<count> <kind>"` phrases for each present kind in circle, square,
/// triangle order, joined by `" and "`.
pub fn caption_of(spec: &SceneSpec) -> Caption {
    let parts: Vec<String> = ShapeKind::ALL
        .iter()
        .filter_map(|&k| {
            let n = spec.count(k);
            (n > 0).then(|| format!("{} {}", COUNT_WORDS[n.min(4)], k.word(n > 1)))
        })
        .collect();
    if parts.is_empty() {
        Caption("an empty scene".into())
    } else {
        Caption(parts.join(" and "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub scene: SceneSpec,
    pub image: Image,
    pub caption: Caption,
}

impl CorpusRecord {
    pub fn from_scene(scene: SceneSpec, width: usize, height: usize) -> Result<Self> {
        let image = render_scene(&scene, width, height)?;
        let caption = caption_of(&scene);
        Ok(CorpusRecord {
            scene,
            image,
            caption,
        })
    }
}

/// `count` records; record `i` draws from `Prng::derive(seed, i)` and, if the
/// scene cannot be placed, from successive re-derived streams.
pub fn generate_corpus(config: &SceneConfig, count: usize, seed: u64, exec: Exec) -> Result<Vec<CorpusRecord>> {
    config.validate()?;
    exec.map_range(count, |i| {
        let mut last = None;
        for attempt in 0..PLACEMENT_RETRIES as u64 {
            let mut prng = Prng::derive(seed, i as u64 | (attempt << 40));
            match sample_scene(&mut prng, config) {
                Ok(scene) => return CorpusRecord::from_scene(scene, config.width, config.height),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap())
    })
    .into_iter()
    .collect()
}

pub fn encode_corpus(records: &[CorpusRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CORPUS_MAGIC);
    out.push(CORPUS_VERSION);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let img = &r.image;
        out.extend_from_slice(&(img.width as u16).to_le_bytes());
        out.extend_from_slice(&(img.height as u16).to_le_bytes());
        out.push(img.channels as u8);
        out.extend_from_slice(&(r.scene.shapes.len() as u16).to_le_bytes());
        for s in &r.scene.shapes {
            out.push(s.kind.tag());
            out.extend_from_slice(&(s.center.0 as u16).to_le_bytes());
            out.extend_from_slice(&(s.center.1 as u16).to_le_bytes());
            out.extend_from_slice(&(s.size as u16).to_le_bytes());
            out.extend_from_slice(&s.intensity.to_le_bytes());
        }
        let cap = r.caption.0.as_bytes();
        let len = u16::try_from(cap.len()).map_err(|_| GscError::invalid("caption too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(cap);
        put_f64s(&mut out, &img.data);
    }
    Ok(out)
}

pub fn decode_corpus(bytes: &[u8]) -> Result<Vec<CorpusRecord>> {
    let mut r = Reader::new(bytes, "corpus");
    r.expect_magic(CORPUS_MAGIC)?;
    let version = r.u8()?;
    if version != CORPUS_VERSION {
        return Err(GscError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let w = r.u16()? as usize;
        let h = r.u16()? as usize;
        let c = r.u8()? as usize;
        let n_shapes = r.u16()? as usize;
        let mut shapes = Vec::with_capacity(n_shapes);
        for _ in 0..n_shapes {
            let kind = ShapeKind::from_tag(r.u8()?)?;
            let cx = r.u16()? as u32;
            let cy = r.u16()? as u32;
            let size = r.u16()? as u32;
            let intensity = r.f64()?;
            shapes.push(Shape {
                kind,
                center: (cx, cy),
                size,
                intensity,
            });
        }
        let cap_len = r.u16()? as usize;
        let caption = Caption(String::from_utf8(r.take(cap_len)?.to_vec())?);
        let data = r.f64s(w * h * c)?;
        records.push(CorpusRecord {
            scene: SceneSpec { shapes },
            image: Image::new(w, h, c, data)?,
            caption,
        });
    }
    if r.remaining() != 0 {
        return Err(GscError::Corrupt(format!("{} trailing bytes in corpus", r.remaining())));
    }
    Ok(records)
}

pub fn write_corpus(records: &[CorpusRecord], path: &Path) -> Result<()> {
    std::fs::write(path, encode_corpus(records)?).map_err(|e| GscError::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let bytes = std::fs::read(path).map_err(|e| GscError::io(path, e))?;
    decode_corpus(&bytes)
}
