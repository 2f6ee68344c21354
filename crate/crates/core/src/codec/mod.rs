//! Patch-linear analysis transform, scalar quantizer and factorized entropy
//! model: `ŷ = Q(g_a(x; φ))` with probabilities `Φ` estimated from data.
//!
//! The synthesis transform exists only to train the analysis side; decoding
//! is generative and never uses it.

mod entropy;

pub use entropy::{fit_entropy_model, EntropyModel, ModelDigest, SMOOTHING};

use crate::image::Image;
use crate::modelfile::{ModelFile, Section};
use crate::numerics::{adamw_step, AdamState, AdamWConfig, Parameters, Prng};
use crate::{Exec, GscError, Result};

pub const MIN_QUANT_STEP: f64 = 1e-3;
pub const MAX_QUANT_STEP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    pub patch: usize,
    pub channels: usize,
    /// Symbols are clamped to `[-alphabet_k, alphabet_k]`.
    pub alphabet_k: i32,
    /// `channels × patch²`, row-major.
    pub analysis: Vec<f64>,
    /// `patch² × channels`, row-major.
    pub synthesis: Vec<f64>,
    pub quant_steps: Vec<f64>,
}

impl CodecParams {
    /// Random initialization; quantization steps are rounded to f32 so they
    /// survive the bitstream's f32 step table exactly.
    pub fn init(patch: usize, channels: usize, alphabet_k: i32, quant_step: f64, prng: &mut Prng) -> Result<Self> {
        let d = patch * patch;
        let std_a = 1.0 / (d as f64).sqrt();
        let std_s = 1.0 / (channels as f64).sqrt();
        let analysis = (0..channels * d).map(|_| std_a * prng.normal()).collect();
        let synthesis = (0..channels * d).map(|_| std_s * prng.normal()).collect();
        let p = CodecParams {
            patch,
            channels,
            alphabet_k,
            analysis,
            synthesis,
            quant_steps: vec![(quant_step as f32) as f64; channels],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.patch * self.patch;
        if self.patch == 0 || self.channels == 0 {
            return Err(GscError::invalid("patch and channel count must be positive"));
        }
        if self.analysis.len() != self.channels * d || self.synthesis.len() != self.channels * d {
            return Err(GscError::dims(self.channels * d, self.analysis.len()));
        }
        if self.quant_steps.len() != self.channels {
            return Err(GscError::dims(self.channels, self.quant_steps.len()));
        }
        if let Some(q) = self
            .quant_steps
            .iter()
            .find(|q| !(MIN_QUANT_STEP..=MAX_QUANT_STEP).contains(*q))
        {
            return Err(GscError::invalid(format!("quantization step {q} outside [1e-3, 10]")));
        }
        if !self.analysis.iter().chain(&self.synthesis).all(|v| v.is_finite()) {
            return Err(GscError::TrainingDiverged("non-finite codec weights".into()));
        }
        if self.alphabet_k < 1 || self.alphabet_k > 1 << 14 {
            return Err(GscError::invalid(format!("alphabet half-width {}", self.alphabet_k)));
        }
        Ok(())
    }

    pub fn latent_dims(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        if width % self.patch != 0 || height % self.patch != 0 {
            return Err(GscError::invalid(format!(
                "{width}x{height} image is not divisible by patch {}",
                self.patch
            )));
        }
        Ok((width / self.patch, height / self.patch))
    }

    pub fn to_section(&self) -> Section {
        let d = self.patch * self.patch;
        let mut s = Section::new(b"CODC")
            .with_u64("patch", self.patch as u64)
            .with_u64("channels", self.channels as u64)
            .with_u64("alphabet_k", self.alphabet_k as u64);
        s.push("analysis", &[self.channels, d], &self.analysis);
        s.push("synthesis", &[d, self.channels], &self.synthesis);
        s.push("quant_steps", &[self.channels], &self.quant_steps);
        s
    }

    pub fn from_section(s: &Section) -> Result<Self> {
        let p = CodecParams {
            patch: s.attr_u64("patch")? as usize,
            channels: s.attr_u64("channels")? as usize,
            alphabet_k: s.attr_u64("alphabet_k")? as i32,
            analysis: s.tensor("analysis")?.data.clone(),
            synthesis: s.tensor("synthesis")?.data.clone(),
            quant_steps: s.tensor("quant_steps")?.data.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

impl Parameters for CodecParams {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.analysis);
        f(&self.synthesis);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.analysis);
        f(&mut self.synthesis);
    }
}

/// Codec weights plus the entropy model fitted to their latents.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecBundle {
    pub params: CodecParams,
    pub entropy: EntropyModel,
}

impl CodecBundle {
    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            sections: vec![self.params.to_section(), self.entropy.to_section()],
        }
    }

    pub fn from_model_file(m: &ModelFile) -> Result<Self> {
        let params = CodecParams::from_section(m.section(b"CODC")?)?;
        let entropy = EntropyModel::from_section(m.section(b"ENTM")?)?;
        if entropy.channels() != params.channels {
            return Err(GscError::dims(params.channels, entropy.channels()));
        }
        Ok(CodecBundle { params, entropy })
    }
}

/// Real-valued channel maps, `channels × height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatLatent {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FloatLatent {
    pub fn channel(&self, i: usize) -> &[f64] {
        let hw = self.height * self.width;
        &self.data[i * hw..(i + 1) * hw]
    }
}

/// Integer channel maps `ŷ`, `channels × height × width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Latent {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub symbols: Vec<i32>,
}

impl Latent {
    pub fn channel(&self, i: usize) -> &[i32] {
        let hw = self.height * self.width;
        &self.symbols[i * hw..(i + 1) * hw]
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }
}

/// Copies the patch at latent cell `(cx, cy)` into `out` (row-major).
fn gather_patch(img: &Image, patch: usize, cx: usize, cy: usize, out: &mut [f64]) {
    for dy in 0..patch {
        for dx in 0..patch {
            out[dy * patch + dx] = img.get(cx * patch + dx, cy * patch + dy);
        }
    }
}

/// `y = g_a(x)`: every `patch × patch` block of the grayscale image is mapped
/// to `channels` values by the same matrix, without bias.
pub fn analyze(x: &Image, params: &CodecParams) -> Result<FloatLatent> {
    let (w, h) = params.latent_dims(x.width, x.height)?;
    let g = x.to_grayscale();
    let d = params.patch * params.patch;
    let hw = w * h;
    let mut data = vec![0.0; params.channels * hw];
    let mut buf = vec![0.0; d];
    for cy in 0..h {
        for cx in 0..w {
            gather_patch(&g, params.patch, cx, cy, &mut buf);
            for (ch, row) in params.analysis.chunks_exact(d).enumerate() {
                data[ch * hw + cy * w + cx] = crate::numerics::dense_dot(row, &buf);
            }
        }
    }
    Ok(FloatLatent {
        channels: params.channels,
        height: h,
        width: w,
        data,
    })
}

/// `ŷ = round_half_even(y / q)`, clamped to the alphabet. Returns the latent
/// and how many values saturated.
pub fn quantize(y: &FloatLatent, params: &CodecParams) -> Result<(Latent, usize)> {
    if y.channels != params.channels {
        return Err(GscError::dims(params.channels, y.channels));
    }
    if let Some(v) = y.data.iter().find(|v| !v.is_finite()) {
        return Err(GscError::invalid(format!("non-finite latent value {v}")));
    }
    let k = params.alphabet_k;
    let hw = y.height * y.width;
    let mut saturated = 0;
    let symbols = y
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let s = (v / params.quant_steps[i / hw]).round_ties_even();
            if s.abs() > k as f64 {
                saturated += 1;
                s.clamp(-k as f64, k as f64) as i32
            } else {
                s as i32
            }
        })
        .collect();
    if saturated > 0 {
        log::warn!("{saturated} latent values saturated at ±{k}");
    }
    Ok((
        Latent {
            channels: y.channels,
            height: y.height,
            width: y.width,
            symbols,
        },
        saturated,
    ))
}

pub fn dequantize(latent: &Latent, params: &CodecParams) -> FloatLatent {
    let hw = latent.spatial();
    FloatLatent {
        channels: latent.channels,
        height: latent.height,
        width: latent.width,
        data: latent
            .symbols
            .iter()
            .enumerate()
            .map(|(i, &s)| s as f64 * params.quant_steps[i / hw])
            .collect(),
    }
}

/// Analysis followed by quantization.
pub fn encode_latent(x: &Image, params: &CodecParams) -> Result<Latent> {
    Ok(quantize(&analyze(x, params)?, params)?.0)
}

/// Synthesis from (possibly noisy) real latents, used in training only.
pub fn synthesize(y: &FloatLatent, params: &CodecParams) -> Image {
    let p = params.patch;
    let d = p * p;
    let n = params.channels;
    let hw = y.height * y.width;
    let mut img = Image::zeros(y.width * p, y.height * p);
    let mut col = vec![0.0; n];
    for cy in 0..y.height {
        for cx in 0..y.width {
            for (ch, c) in col.iter_mut().enumerate() {
                *c = y.data[ch * hw + cy * y.width + cx];
            }
            for j in 0..d {
                let v = crate::numerics::dense_dot(&params.synthesis[j * n..(j + 1) * n], &col);
                img.set(cx * p + j % p, cy * p + j / p, v);
            }
        }
    }
    img
}

/// Min–max normalization to `[0, 1]`; a constant map becomes all 0.5.
pub fn normalize_map(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// Grayscale view of channel `i`.
pub fn channel_image(latent: &Latent, i: usize) -> Result<Image> {
    if i >= latent.channels {
        return Err(GscError::invalid(format!(
            "channel {i} out of range for {} channels",
            latent.channels
        )));
    }
    let vals: Vec<f64> = latent.channel(i).iter().map(|&s| s as f64).collect();
    Image::new(latent.width, latent.height, 1, normalize_map(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecTrainConfig {
    pub lambda_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        CodecTrainConfig {
            lambda_rate: 0.01,
            steps: 1500,
            batch_size: 16,
            optimizer: AdamWConfig {
                lr: 3e-3,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            seed: 0,
        }
    }
}

/// Loss and gradient for one image:
/// `MSE(x, g_s(y + u)) + λ · mean(|y + u| / q)`, `u ~ U[-q/2, q/2]`.
pub fn codec_loss(x: &Image, params: &CodecParams, lambda_rate: f64, prng: &mut Prng) -> Result<(f64, CodecParams)> {
    let (w, h) = params.latent_dims(x.width, x.height)?;
    let g = x.to_grayscale();
    let p = params.patch;
    let d = p * p;
    let n = params.channels;
    let cells = w * h;
    let pixel_norm = 1.0 / (cells * d) as f64;
    let rate_norm = lambda_rate / (cells * n) as f64;
    let mut grads = params.clone();
    grads.fill(0.0);
    let mut xp = vec![0.0; d];
    let mut noisy = vec![0.0; n];
    let mut recon = vec![0.0; d];
    let mut d_recon = vec![0.0; d];
    let mut d_noisy = vec![0.0; n];
    let (mut mse, mut rate) = (0.0, 0.0);
    for cy in 0..h {
        for cx in 0..w {
            gather_patch(&g, p, cx, cy, &mut xp);
            for ch in 0..n {
                let q = params.quant_steps[ch];
                let y = crate::numerics::dense_dot(&params.analysis[ch * d..(ch + 1) * d], &xp);
                noisy[ch] = y + q * (prng.uniform() - 0.5);
                rate += noisy[ch].abs() / q;
            }
            for j in 0..d {
                recon[j] = crate::numerics::dense_dot(&params.synthesis[j * n..(j + 1) * n], &noisy);
                let e = recon[j] - xp[j];
                mse += e * e;
                d_recon[j] = 2.0 * e * pixel_norm;
            }
            for ch in 0..n {
                let mut s = 0.0;
                for j in 0..d {
                    s += params.synthesis[j * n + ch] * d_recon[j];
                }
                d_noisy[ch] = s + rate_norm * noisy[ch].signum() / params.quant_steps[ch];
            }
            for j in 0..d {
                for ch in 0..n {
                    grads.synthesis[j * n + ch] += d_recon[j] * noisy[ch];
                }
            }
            for ch in 0..n {
                for j in 0..d {
                    grads.analysis[ch * d + j] += d_noisy[ch] * xp[j];
                }
            }
        }
    }
    Ok((mse * pixel_norm + rate * rate_norm, grads))
}

/// AdamW on minibatches of `images`, averaged per step. Deterministic per
/// seed; `steps = 0` returns `init` untouched.
pub fn train_codec(images: &[Image], init: CodecParams, cfg: &CodecTrainConfig, exec: Exec) -> Result<CodecParams> {
    if images.is_empty() {
        return Err(GscError::invalid("codec training needs a nonempty corpus"));
    }
    init.validate()?;
    let mut params = init;
    if cfg.steps == 0 {
        return Ok(params);
    }
    let mut flat = params.to_flat();
    let mut state = AdamState::new(flat.len());
    let batch = cfg.batch_size.max(1);
    let mut order = Prng::derive(cfg.seed, u64::MAX);
    for step in 0..cfg.steps {
        let picks: Vec<usize> = (0..batch)
            .map(|_| (order.next_u64() % images.len() as u64) as usize)
            .collect();
        let results = exec.map(&picks, |j, &idx| {
            let mut prng = Prng::derive(cfg.seed, (step * batch + j) as u64);
            codec_loss(&images[idx], &params, cfg.lambda_rate, &mut prng)
        });
        let mut loss = 0.0;
        let mut grads: Option<CodecParams> = None;
        for r in results {
            let (l, g) = r?;
            loss += l;
            match grads.as_mut() {
                Some(acc) => acc.accumulate(&g),
                None => grads = Some(g),
            }
        }
        if !loss.is_finite() {
            return Err(GscError::TrainingDiverged(format!("codec loss NaN at step {step}")));
        }
        let mut grads = grads.unwrap();
        grads.scale(1.0 / batch as f64);
        adamw_step(&mut flat, &grads.to_flat(), &mut state, &cfg.optimizer)?;
        params.load_flat(&flat)?;
        if step % 250 == 0 {
            log::debug!("codec step {step}: loss {:.6}", loss / batch as f64);
        }
    }
    params.validate()?;
    Ok(params)
}

/// Empirical entropy (bits per symbol) of all symbols in `latents`, per
/// channel histogram, averaged over channels.
pub fn empirical_entropy(latents: &[Latent]) -> f64 {
    let Some(first) = latents.first() else {
        return 0.0;
    };
    let mut total = 0.0;
    for ch in 0..first.channels {
        let mut hist = std::collections::HashMap::<i32, usize>::new();
        let mut n = 0usize;
        for l in latents {
            for &s in l.channel(ch) {
                *hist.entry(s).or_default() += 1;
                n += 1;
            }
        }
        total += hist
            .values()
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.log2()
            })
            .sum::<f64>();
    }
    total / first.channels as f64
}
