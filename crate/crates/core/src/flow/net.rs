//! The velocity network: a caption-conditioned residual trunk plus an
//! optional control branch that copies the first trunk blocks, reads
//! `z + guidance`, and feeds each block output back into the trunk through
//! a projection that starts at exactly zero.

use sha2::{Digest, Sha256};

use super::text::TextEncoder;
use crate::codec::FloatLatent;
use crate::modelfile::{ModelFile, Section};
use crate::numerics::{dense_dot, Activation, Linear, Parameters, Prng};
use crate::{GscError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowConfig {
    pub width: usize,
    pub height: usize,
    pub hidden: usize,
    pub base_blocks: usize,
    pub control_blocks: usize,
    pub text_dim: usize,
    pub time_dim: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            width: 32,
            height: 32,
            hidden: 256,
            base_blocks: 6,
            control_blocks: 4,
            text_dim: 32,
            time_dim: 32,
        }
    }
}

impl FlowConfig {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.hidden == 0 || self.text_dim == 0 {
            return Err(GscError::invalid(format!("degenerate flow config {self:?}")));
        }
        if self.base_blocks == 0 || self.control_blocks == 0 || self.control_blocks > self.base_blocks {
            return Err(GscError::invalid(format!(
                "control blocks {} must be in 1..={}",
                self.control_blocks, self.base_blocks
            )));
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(GscError::invalid(format!("time embedding width {} must be even", self.time_dim)));
        }
        Ok(())
    }
}

const MAX_FREQUENCY: f64 = 200.0;

/// `[sin(ω_k t), cos(ω_k t)]` with `ω_k` geometric from 1 to 200.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let w = if half > 1 {
            MAX_FREQUENCY.powf(k as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        out[k] = (w * t).sin();
        out[half + k] = (w * t).cos();
    }
    out
}

/// `h ← h + fc2(gelu(fc1(h + c)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, Default)]
struct BlockCache {
    u: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl Block {
    fn new(hidden: usize, prng: &mut Prng) -> Self {
        Block {
            fc1: Linear::random(hidden, hidden, 1.0, prng),
            fc2: Linear::random(hidden, hidden, 0.5, prng),
        }
    }

    fn forward(&self, h: &mut [f64], c: &[f64], cache: &mut BlockCache) {
        cache.u = h.iter().zip(c).map(|(a, b)| a + b).collect();
        cache.pre = self.fc1.forward(&cache.u);
        cache.act = cache.pre.iter().map(|&p| Activation::Gelu.apply(p)).collect();
        self.fc2.accumulate_into(&cache.act, h);
        for (hi, b) in h.iter_mut().zip(&self.fc2.bias) {
            *hi += b;
        }
    }

    /// `dh` enters as the gradient of the block output and leaves as the
    /// gradient of its input.
    fn backward(&self, cache: &BlockCache, dh: &mut [f64], dc: Option<&mut [f64]>, grad: Option<&mut Block>) {
        let (g1, g2) = match grad {
            Some(g) => (Some(&mut g.fc1), Some(&mut g.fc2)),
            None => (None, None),
        };
        let mut da = vec![0.0; dh.len()];
        self.fc2.backward(&cache.act, dh, g2, Some(&mut da));
        Activation::Gelu.backprop_slice(&cache.pre, &mut da);
        let mut du = vec![0.0; dh.len()];
        self.fc1.backward(&cache.u, &da, g1, Some(&mut du));
        for (d, u) in dh.iter_mut().zip(&du) {
            *d += u;
        }
        if let Some(dc) = dc {
            for (d, u) in dc.iter_mut().zip(&du) {
                *d += u;
            }
        }
    }
}

impl Parameters for Block {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub text: TextEncoder,
    /// `[time; text] → hidden`, followed by silu.
    pub cond: Linear,
    pub input: Linear,
    pub blocks: Vec<Block>,
    pub output: Linear,
    /// `time → 1`: the scalar `s(t)` of the direct `s(t) · z` term in the
    /// output, which the hidden bottleneck cannot carry.
    pub skip: Linear,
}

impl Parameters for Trunk {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.text.visit(f);
        self.cond.visit(f);
        self.input.visit(f);
        self.blocks.iter().for_each(|b| b.visit(f));
        self.output.visit(f);
        self.skip.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.text.visit_mut(f);
        self.cond.visit_mut(f);
        self.input.visit_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
        self.output.visit_mut(f);
        self.skip.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlBranch {
    pub patch: usize,
    pub channels: usize,
    /// Patch-wise guidance projection, `patch² × channels`, shared by all
    /// latent positions.
    pub guide: Vec<f64>,
    pub input: Linear,
    pub blocks: Vec<Block>,
    /// Output projections into the trunk, zero at initialization.
    pub zero: Vec<Linear>,
    /// Last control activation straight to the velocity, zero at
    /// initialization. The frozen trunk output only spans a fixed
    /// `hidden`-dimensional subspace of pixel space.
    pub zero_out: Linear,
    /// `time → 1`: scalar `a(t)` of an `a(t) · g` term on the projected
    /// guidance `g`, zero at initialization.
    pub gate: Linear,
}

impl Parameters for ControlBranch {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.guide);
        self.input.visit(f);
        self.blocks.iter().for_each(|b| b.visit(f));
        self.zero.iter().for_each(|z| z.visit(f));
        self.zero_out.visit(f);
        self.gate.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.guide);
        self.input.visit_mut(f);
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
        self.zero.iter_mut().for_each(|z| z.visit_mut(f));
        self.zero_out.visit_mut(f);
        self.gate.visit_mut(f);
    }
}

impl ControlBranch {
    fn check_volume(&self, vol: &FloatLatent, width: usize, height: usize) -> Result<()> {
        if vol.channels != self.channels
            || vol.width * self.patch != width
            || vol.height * self.patch != height
            || vol.data.len() != vol.channels * vol.width * vol.height
        {
            return Err(GscError::dims(
                format!("{}x{}x{}", self.channels, height / self.patch, width / self.patch),
                format!("{}x{}x{}", vol.channels, vol.height, vol.width),
            ));
        }
        Ok(())
    }

    /// Projects a dequantized `channels × h × w` volume to pixel space.
    pub fn embed_guidance(&self, vol: &FloatLatent) -> Vec<f64> {
        let p = self.patch;
        let n = self.channels;
        let width = vol.width * p;
        let hw = vol.width * vol.height;
        let mut out = vec![0.0; hw * p * p];
        let mut col = vec![0.0; n];
        for cy in 0..vol.height {
            for cx in 0..vol.width {
                for (ch, c) in col.iter_mut().enumerate() {
                    *c = vol.data[ch * hw + cy * vol.width + cx];
                }
                for j in 0..p * p {
                    out[(cy * p + j / p) * width + cx * p + j % p] = dense_dot(&self.guide[j * n..(j + 1) * n], &col);
                }
            }
        }
        out
    }

    fn guide_backward(&self, vol: &FloatLatent, dg: &[f64], grad: &mut [f64]) {
        let p = self.patch;
        let n = self.channels;
        let width = vol.width * p;
        let hw = vol.width * vol.height;
        for cy in 0..vol.height {
            for cx in 0..vol.width {
                for j in 0..p * p {
                    let d = dg[(cy * p + j / p) * width + cx * p + j % p];
                    if d == 0.0 {
                        continue;
                    }
                    for ch in 0..n {
                        grad[j * n + ch] += d * vol.data[ch * hw + cy * vol.width + cx];
                    }
                }
            }
        }
    }
}

/// Per-input conditioning: caption token ids and, for controlled models, the
/// dequantized guidance volume (`None` means zero guidance).
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub tokens: &'a [usize],
    pub guidance: Option<&'a FloatLatent>,
}

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub trunk: bool,
    pub control: bool,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardCache {
    cond_in: Vec<f64>,
    c_pre: Vec<f64>,
    c: Vec<f64>,
    trunk: Vec<BlockCache>,
    h_final: Vec<f64>,
    g: Vec<f64>,
    zg: Vec<f64>,
    hc_final: Vec<f64>,
    ctl: Vec<BlockCache>,
    ctl_out: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNet {
    pub config: FlowConfig,
    pub trunk: Trunk,
    pub control: Option<ControlBranch>,
    /// Optimizer steps the trunk has received.
    pub base_steps: u64,
}

impl Parameters for FlowNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.trunk.visit(f);
        if let Some(c) = &self.control {
            c.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.trunk.visit_mut(f);
        if let Some(c) = &mut self.control {
            c.visit_mut(f);
        }
    }
}

pub type TrunkDigest = [u8; 8];

impl FlowNet {
    /// A trunk-only network with random weights.
    pub fn new(config: FlowConfig, prng: &mut Prng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let text = TextEncoder::new(config.text_dim, prng);
        let cond = Linear::random(config.time_dim + config.text_dim, h, 1.0, prng);
        let input = Linear::random(config.pixels(), h, 1.0, prng);
        let blocks = (0..config.base_blocks).map(|_| Block::new(h, prng)).collect();
        let output = Linear::random(h, config.pixels(), 0.5, prng);
        let mut skip = Linear::zeros(config.time_dim, 1);
        skip.bias[0] = -1.0;
        Ok(FlowNet {
            config,
            trunk: Trunk {
                text,
                cond,
                input,
                blocks,
                output,
                skip,
            },
            control: None,
            base_steps: 0,
        })
    }

    /// Adds a control branch copied from the current trunk. `guide_init`
    /// (`patch² × channels`) seeds the guidance projection, typically the
    /// codec synthesis matrix; zero otherwise.
    pub fn attach_control(&mut self, patch: usize, channels: usize, guide_init: Option<&[f64]>) -> Result<()> {
        if patch == 0 || self.config.width % patch != 0 || self.config.height % patch != 0 || channels == 0 {
            return Err(GscError::invalid(format!(
                "patch {patch} / {channels} channels incompatible with {}x{}",
                self.config.width, self.config.height
            )));
        }
        let guide = match guide_init {
            Some(g) if g.len() == patch * patch * channels => g.to_vec(),
            Some(g) => return Err(GscError::dims(patch * patch * channels, g.len())),
            None => vec![0.0; patch * patch * channels],
        };
        let h = self.config.hidden;
        let m = self.config.control_blocks;
        self.control = Some(ControlBranch {
            patch,
            channels,
            guide,
            input: self.trunk.input.clone(),
            blocks: self.trunk.blocks[..m].to_vec(),
            zero: (0..m).map(|_| Linear::zeros(h, h)).collect(),
            zero_out: Linear::zeros(h, self.config.pixels()),
            gate: Linear::zeros(self.config.time_dim, 1),
        });
        Ok(())
    }

    pub fn text(&self) -> &TextEncoder {
        &self.trunk.text
    }

    /// First 8 bytes of SHA-256 over the trunk parameters.
    pub fn trunk_digest(&self) -> TrunkDigest {
        let mut hasher = Sha256::new();
        self.trunk.visit(&mut |s| {
            for v in s {
                hasher.update(v.to_le_bytes());
            }
        });
        let full = hasher.finalize();
        full[..8].try_into().unwrap()
    }

    /// A zero-filled network with the same layout, for gradients.
    pub fn zeros_like(&self) -> FlowNet {
        let mut g = self.clone();
        g.fill(0.0);
        g
    }

    fn check_inputs(&self, z: &[f64], t: f64, cond: &Conditioning<'_>) -> Result<()> {
        if z.len() != self.config.pixels() {
            return Err(GscError::dims(self.config.pixels(), z.len()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(GscError::invalid(format!("time {t} outside [0, 1]")));
        }
        if let Some(&bad) = cond.tokens.iter().find(|&&id| id >= self.trunk.text.vocabulary_size()) {
            return Err(GscError::invalid(format!("token id {bad} outside vocabulary")));
        }
        match (&self.control, cond.guidance) {
            (None, Some(_)) => Err(GscError::invalid("guidance given to a model without a control branch")),
            (Some(ctl), Some(vol)) => ctl.check_volume(vol, self.config.width, self.config.height),
            _ => Ok(()),
        }
    }

    /// `v_θ(z, t | caption, guidance)`.
    pub fn predict(&self, z: &[f64], t: f64, cond: &Conditioning<'_>) -> Result<Vec<f64>> {
        self.check_inputs(z, t, cond)?;
        let mut cache = ForwardCache::default();
        Ok(self.forward_cached(z, t, cond, &mut cache))
    }

    pub(crate) fn forward_cached(&self, z: &[f64], t: f64, cond: &Conditioning<'_>, cache: &mut ForwardCache) -> Vec<f64> {
        let cfg = &self.config;
        let tr = &self.trunk;
        let mut cond_in = time_embedding(t, cfg.time_dim);
        cond_in.extend(tr.text.embed_ids(cond.tokens));
        let c_pre = tr.cond.forward(&cond_in);
        let c: Vec<f64> = c_pre.iter().map(|&v| Activation::Silu.apply(v)).collect();

        let mut h = tr.input.forward(z);
        h.iter_mut().zip(&c).for_each(|(a, b)| *a += b);

        let mut hc = Vec::new();
        if let Some(ctl) = &self.control {
            cache.g = match cond.guidance {
                Some(vol) => ctl.embed_guidance(vol),
                None => vec![0.0; z.len()],
            };
            cache.zg = z.iter().zip(&cache.g).map(|(a, b)| a + b).collect();
            hc = ctl.input.forward(&cache.zg);
            hc.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
        }

        cache.trunk = vec![BlockCache::default(); cfg.base_blocks];
        cache.ctl = Vec::new();
        cache.ctl_out = Vec::new();
        for (k, block) in tr.blocks.iter().enumerate() {
            block.forward(&mut h, &c, &mut cache.trunk[k]);
            if let Some(ctl) = &self.control {
                if k < ctl.blocks.len() {
                    let mut bc = BlockCache::default();
                    ctl.blocks[k].forward(&mut hc, &c, &mut bc);
                    cache.ctl.push(bc);
                    let r = ctl.zero[k].forward(&hc);
                    h.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
                    cache.ctl_out.push(hc.clone());
                }
            }
        }
        let mut out = tr.output.forward(&h);
        let s = tr.skip.forward(&cond_in[..cfg.time_dim])[0];
        out.iter_mut().zip(z).for_each(|(o, zi)| *o += s * zi);
        if let Some(ctl) = &self.control {
            let r = ctl.zero_out.forward(&hc);
            out.iter_mut().zip(&r).for_each(|(o, ri)| *o += ri);
            let a = ctl.gate.forward(&cond_in[..cfg.time_dim])[0];
            out.iter_mut().zip(&cache.g).for_each(|(o, gi)| *o += a * gi);
        }
        cache.hc_final = hc;
        cache.cond_in = cond_in;
        cache.c_pre = c_pre;
        cache.c = c;
        cache.h_final = h;
        out
    }

    /// Accumulates `∂(upstream · v)/∂θ` into `grads` for the selected groups.
    pub(crate) fn backward(
        &self,
        z: &[f64],
        cond: &Conditioning<'_>,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut FlowNet,
        which: Trainable,
    ) {
        let hsz = self.config.hidden;
        let tr = &self.trunk;
        let FlowNet {
            trunk: gt,
            control: gc,
            ..
        } = grads;
        let mut gc = if which.control { gc.as_mut() } else { None };
        if which.trunk {
            let ds = [dense_dot(upstream, z)];
            tr.skip
                .backward(&cache.cond_in[..self.config.time_dim], &ds, Some(&mut gt.skip), None);
        }
        let mut dh = vec![0.0; hsz];
        tr.output
            .backward(&cache.h_final, upstream, which.trunk.then_some(&mut gt.output), Some(&mut dh));
        let mut dc = vec![0.0; hsz];
        let mut dhc = vec![0.0; hsz];
        let mut dg = Vec::new();
        if let Some(ctl) = &self.control {
            let temb = &cache.cond_in[..self.config.time_dim];
            let (gzo, ggate) = match gc.as_deref_mut() {
                Some(g) => (Some(&mut g.zero_out), Some(&mut g.gate)),
                None => (None, None),
            };
            ctl.zero_out.backward(&cache.hc_final, upstream, gzo, Some(&mut dhc));
            if ggate.is_some() {
                ctl.gate.backward(temb, &[dense_dot(upstream, &cache.g)], ggate, None);
                let a = ctl.gate.forward(temb)[0];
                dg = upstream.iter().map(|u| a * u).collect();
            }
        }
        for k in (0..tr.blocks.len()).rev() {
            if let Some(ctl) = &self.control {
                if k < ctl.blocks.len() {
                    let (gz, gb) = match gc.as_deref_mut() {
                        Some(g) => (Some(&mut g.zero[k]), Some(&mut g.blocks[k])),
                        None => (None, None),
                    };
                    ctl.zero[k].backward(&cache.ctl_out[k], &dh, gz, Some(&mut dhc));
                    ctl.blocks[k].backward(&cache.ctl[k], &mut dhc, which.trunk.then_some(&mut dc[..]), gb);
                }
            }
            tr.blocks[k].backward(
                &cache.trunk[k],
                &mut dh,
                which.trunk.then_some(&mut dc[..]),
                which.trunk.then_some(&mut gt.blocks[k]),
            );
        }
        if which.trunk {
            tr.input.backward(z, &dh, Some(&mut gt.input), None);
            dc.iter_mut().zip(&dh).for_each(|(a, b)| *a += b);
        }
        if let Some(ctl) = &self.control {
            if which.trunk {
                dc.iter_mut().zip(&dhc).for_each(|(a, b)| *a += b);
            }
            if let Some(g) = gc {
                let mut dzg = cond.guidance.map(|_| dg);
                ctl.input.backward(&cache.zg, &dhc, Some(&mut g.input), dzg.as_deref_mut());
                if let (Some(vol), Some(dzg)) = (cond.guidance, dzg) {
                    ctl.guide_backward(vol, &dzg, &mut g.guide);
                }
            }
        }
        if which.trunk {
            Activation::Silu.backprop_slice(&cache.c_pre, &mut dc);
            let mut dcond = vec![0.0; cache.cond_in.len()];
            tr.cond.backward(&cache.cond_in, &dc, Some(&mut gt.cond), Some(&mut dcond));
            tr.text.backward(cond.tokens, &dcond[self.config.time_dim..], &mut gt.text);
        }
    }

    pub fn to_model_file(&self) -> ModelFile {
        let c = &self.config;
        let cfg = Section::new(b"FCFG")
            .with_u64("width", c.width as u64)
            .with_u64("height", c.height as u64)
            .with_u64("hidden", c.hidden as u64)
            .with_u64("base_blocks", c.base_blocks as u64)
            .with_u64("control_blocks", c.control_blocks as u64)
            .with_u64("text_dim", c.text_dim as u64)
            .with_u64("time_dim", c.time_dim as u64)
            .with_u64("base_steps", self.base_steps);
        let mut trunk = Section::new(b"TRNK");
        trunk.push("text", &[self.trunk.text.vocabulary_size(), c.text_dim], &self.trunk.text.table);
        trunk.push_linear("cond", &self.trunk.cond, Activation::Silu);
        trunk.push_linear("input", &self.trunk.input, Activation::Linear);
        for (k, b) in self.trunk.blocks.iter().enumerate() {
            trunk.push_linear(&format!("block{k}.fc1"), &b.fc1, Activation::Gelu);
            trunk.push_linear(&format!("block{k}.fc2"), &b.fc2, Activation::Linear);
        }
        trunk.push_linear("output", &self.trunk.output, Activation::Linear);
        trunk.push_linear("skip", &self.trunk.skip, Activation::Linear);
        let mut sections = vec![cfg, trunk];
        if let Some(ctl) = &self.control {
            let mut s = Section::new(b"CTRL")
                .with_u64("patch", ctl.patch as u64)
                .with_u64("channels", ctl.channels as u64)
                .with_attr("frozen_digest", &self.trunk_digest());
            s.push("guide", &[ctl.patch * ctl.patch, ctl.channels], &ctl.guide);
            s.push_linear("input", &ctl.input, Activation::Linear);
            for (k, b) in ctl.blocks.iter().enumerate() {
                s.push_linear(&format!("block{k}.fc1"), &b.fc1, Activation::Gelu);
                s.push_linear(&format!("block{k}.fc2"), &b.fc2, Activation::Linear);
                s.push_linear(&format!("zero{k}"), &ctl.zero[k], Activation::Linear);
            }
            s.push_linear("zero_out", &ctl.zero_out, Activation::Linear);
            s.push_linear("gate", &ctl.gate, Activation::Linear);
            sections.push(s);
        }
        ModelFile { sections }
    }

    pub fn from_model_file(m: &ModelFile) -> Result<Self> {
        let s = m.section(b"FCFG")?;
        let u = |k: &str| s.attr_u64(k).map(|v| v as usize);
        let config = FlowConfig {
            width: u("width")?,
            height: u("height")?,
            hidden: u("hidden")?,
            base_blocks: u("base_blocks")?,
            control_blocks: u("control_blocks")?,
            text_dim: u("text_dim")?,
            time_dim: u("time_dim")?,
        };
        config.validate()?;
        let base_steps = s.attr_u64("base_steps")?;
        let t = m.section(b"TRNK")?;
        let lin = |s: &Section, name: &str, inputs: usize, outputs: usize| -> Result<Linear> {
            let (l, _) = s.linear(name)?;
            if l.inputs != inputs || l.outputs != outputs {
                return Err(GscError::Corrupt(format!(
                    "tensor {name} is {}x{}, expected {outputs}x{inputs}",
                    l.outputs, l.inputs
                )));
            }
            Ok(l)
        };
        let block = |s: &Section, k: usize| -> Result<Block> {
            Ok(Block {
                fc1: lin(s, &format!("block{k}.fc1"), config.hidden, config.hidden)?,
                fc2: lin(s, &format!("block{k}.fc2"), config.hidden, config.hidden)?,
            })
        };
        let table = t.tensor("text")?.data.clone();
        let text = TextEncoder {
            dim: config.text_dim,
            table,
        };
        if text.table.len() != text.vocabulary_size() * config.text_dim {
            return Err(GscError::Corrupt("text table has the wrong size".into()));
        }
        let trunk = Trunk {
            text,
            cond: lin(t, "cond", config.time_dim + config.text_dim, config.hidden)?,
            input: lin(t, "input", config.pixels(), config.hidden)?,
            blocks: (0..config.base_blocks).map(|k| block(t, k)).collect::<Result<_>>()?,
            output: lin(t, "output", config.hidden, config.pixels())?,
            skip: lin(t, "skip", config.time_dim, 1)?,
        };
        let mut net = FlowNet {
            config,
            trunk,
            control: None,
            base_steps,
        };
        if m.has_section(b"CTRL") {
            let s = m.section(b"CTRL")?;
            let patch = s.attr_u64("patch")? as usize;
            let channels = s.attr_u64("channels")? as usize;
            let guide = s.tensor("guide")?.data.clone();
            if patch == 0 || guide.len() != patch * patch * channels {
                return Err(GscError::Corrupt("guidance projection has the wrong size".into()));
            }
            let m_ctl = config.control_blocks;
            net.control = Some(ControlBranch {
                patch,
                channels,
                guide,
                input: lin(s, "input", config.pixels(), config.hidden)?,
                blocks: (0..m_ctl).map(|k| block(s, k)).collect::<Result<_>>()?,
                zero: (0..m_ctl)
                    .map(|k| lin(s, &format!("zero{k}"), config.hidden, config.hidden))
                    .collect::<Result<_>>()?,
                zero_out: lin(s, "zero_out", config.hidden, config.pixels())?,
                gate: lin(s, "gate", config.time_dim, 1)?,
            });
            let frozen = s.attr("frozen_digest")?;
            if frozen != net.trunk_digest() {
                return Err(GscError::DigestMismatch(format!(
                    "control branch was trained against trunk {}",
                    crate::bitstream::digest_hex(&frozen.try_into().unwrap_or([0; 8]))
                )));
            }
        }
        Ok(net)
    }
}
