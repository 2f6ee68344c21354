//! Conditional flow matching along the straight path
//! `z_t = t z_1 + (1 − t) z_0`, regressing onto `z_1 − z_0`.

use super::net::{Conditioning, FlowNet, ForwardCache, Trainable};
use crate::codec::FloatLatent;
use crate::numerics::{adamw_step, AdamState, AdamWConfig, Parameters, Prng};
use crate::par::Exec;
use crate::{GscError, Result};

/// Items per parallel task; fixed so the reduction order never depends on
/// the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Base,
    Control,
}

impl Phase {
    pub fn trainable(self) -> Trainable {
        match self {
            Phase::Base => Trainable {
                trunk: true,
                control: false,
            },
            Phase::Control => Trainable {
                trunk: false,
                control: true,
            },
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = GscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Phase::Base),
            "control" => Ok(Phase::Control),
            other => Err(GscError::invalid(format!("unknown phase {other:?}"))),
        }
    }
}

/// One training target: the image `z_1`, its caption tokens and, for
/// control training, the dequantized guidance volume.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowExample {
    pub target: Vec<f64>,
    pub tokens: Vec<usize>,
    pub guidance: Option<FloatLatent>,
}

impl FlowExample {
    /// Guidance is only read by networks that carry a control branch.
    pub fn conditioning(&self, net: &FlowNet) -> Conditioning<'_> {
        Conditioning {
            tokens: &self.tokens,
            guidance: if net.control.is_some() {
                self.guidance.as_ref()
            } else {
                None
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTrainConfig {
    pub steps: usize,
    pub micro_batch: usize,
    pub accumulation: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        FlowTrainConfig {
            steps: 300,
            micro_batch: 8,
            accumulation: 4,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            seed: 0,
        }
    }
}

/// `(z_t, z_0)` with `z_0 ~ N(0, I)`.
pub fn interpolate(z1: &[f64], t: f64, prng: &mut Prng) -> (Vec<f64>, Vec<f64>) {
    let mut z0 = vec![0.0; z1.len()];
    prng.fill_normal(&mut z0);
    let zt = z1.iter().zip(&z0).map(|(a, b)| t * a + (1.0 - t) * b).collect();
    (zt, z0)
}

struct Draw {
    t: f64,
    z0: Vec<f64>,
}

fn draw_all(batch: &[FlowExample], prng: &mut Prng) -> Vec<Draw> {
    batch
        .iter()
        .map(|ex| {
            let t = prng.uniform();
            let mut z0 = vec![0.0; ex.target.len()];
            prng.fill_normal(&mut z0);
            Draw { t, z0 }
        })
        .collect()
}

/// `‖v* − v_θ(z_t)‖² / dim` for one draw; with `grads`, also accumulates
/// `scale · ∂loss/∂θ`.
fn item_loss(
    net: &FlowNet,
    ex: &FlowExample,
    d: &Draw,
    grads: Option<(&mut FlowNet, Trainable, f64)>,
) -> Result<f64> {
    if ex.target.len() != net.config.pixels() {
        return Err(GscError::dims(net.config.pixels(), ex.target.len()));
    }
    let zt: Vec<f64> = ex
        .target
        .iter()
        .zip(&d.z0)
        .map(|(a, b)| d.t * a + (1.0 - d.t) * b)
        .collect();
    let cond = ex.conditioning(net);
    let mut cache = ForwardCache::default();
    let v = net.forward_cached(&zt, d.t, &cond, &mut cache);
    let dim = v.len() as f64;
    let mut loss = 0.0;
    let mut resid = vec![0.0; v.len()];
    for (i, r) in resid.iter_mut().enumerate() {
        *r = v[i] - (ex.target[i] - d.z0[i]);
        loss += *r * *r;
    }
    if let Some((g, which, scale)) = grads {
        let k = 2.0 * scale / dim;
        resid.iter_mut().for_each(|r| *r *= k);
        net.backward(&zt, &cond, &cache, &resid, g, which);
    }
    Ok(loss / dim)
}

/// Mean CFM loss over `batch` and its gradient for the `which` groups. Times
/// and noise are drawn from `prng` in batch order before any evaluation.
pub fn cfm_loss(net: &FlowNet, batch: &[FlowExample], which: Trainable, prng: &mut Prng, exec: Exec) -> Result<(f64, FlowNet)> {
    if batch.is_empty() {
        return Err(GscError::invalid("empty CFM batch"));
    }
    let draws = draw_all(batch, prng);
    let scale = 1.0 / batch.len() as f64;
    let chunks = batch.len().div_ceil(CHUNK);
    let parts = exec.map_range(chunks, |c| -> Result<(f64, FlowNet)> {
        let mut g = net.zeros_like();
        let mut loss = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(batch.len()) {
            loss += item_loss(net, &batch[i], &draws[i], Some((&mut g, which, scale)))?;
        }
        Ok((loss, g))
    });
    let mut total = 0.0;
    let mut grads: Option<FlowNet> = None;
    for p in parts {
        let (l, g) = p?;
        total += l;
        match grads.as_mut() {
            Some(acc) => acc.accumulate(&g),
            None => grads = Some(g),
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(GscError::TrainingDiverged(format!("CFM loss is {loss}")));
    }
    Ok((loss, grads.unwrap()))
}

/// Mean CFM loss without gradients.
pub fn cfm_eval(net: &FlowNet, batch: &[FlowExample], prng: &mut Prng, exec: Exec) -> Result<f64> {
    if batch.is_empty() {
        return Err(GscError::invalid("empty CFM batch"));
    }
    let draws = draw_all(batch, prng);
    let losses = exec.map(batch, |i, ex| item_loss(net, ex, &draws[i], None));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: FlowNet,
    /// Mean training loss per optimizer step.
    pub losses: Vec<f64>,
}

fn trainable_flat(net: &FlowNet, phase: Phase) -> Vec<f64> {
    match phase {
        Phase::Base => net.trunk.to_flat(),
        Phase::Control => net.control.as_ref().map(|c| c.to_flat()).unwrap_or_default(),
    }
}

fn load_trainable(net: &mut FlowNet, phase: Phase, flat: &[f64]) -> Result<()> {
    match phase {
        Phase::Base => net.trunk.load_flat(flat),
        Phase::Control => net
            .control
            .as_mut()
            .ok_or_else(|| GscError::PhaseOrder("no control branch".into()))?
            .load_flat(flat),
    }
}

/// Cosine decay from `lr` to a tenth of it over `steps`.
pub fn cosine_lr(lr: f64, step: usize, steps: usize) -> f64 {
    let progress = step as f64 / steps.max(1) as f64;
    lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// AdamW over `steps` updates, each accumulating `accumulation` micro-batches.
/// The base phase trains the trunk of a trunk-only network; the control
/// phase trains only the control branch and leaves the trunk bit-identical.
pub fn train_flow(
    mut net: FlowNet,
    examples: &[FlowExample],
    phase: Phase,
    cfg: &FlowTrainConfig,
    exec: Exec,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(GscError::invalid("flow training needs a nonempty corpus"));
    }
    if cfg.micro_batch == 0 || cfg.accumulation == 0 {
        return Err(GscError::invalid("micro-batch size and accumulation must be positive"));
    }
    match phase {
        Phase::Base if net.control.is_some() => {
            return Err(GscError::PhaseOrder(
                "base phase on a network that already has a control branch".into(),
            ))
        }
        Phase::Control if net.base_steps == 0 => {
            return Err(GscError::PhaseOrder("control phase needs a trained base model".into()))
        }
        Phase::Control if net.control.is_none() => {
            return Err(GscError::PhaseOrder("control phase needs an attached control branch".into()))
        }
        _ => {}
    }
    let frozen = net.trunk_digest();
    let which = phase.trainable();
    let mut flat = trainable_flat(&net, phase);
    let mut state = AdamState::new(flat.len());
    let mut order = Prng::derive(cfg.seed, u64::MAX);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut grads: Option<FlowNet> = None;
        let mut loss = 0.0;
        for m in 0..cfg.accumulation {
            let batch: Vec<FlowExample> = (0..cfg.micro_batch)
                .map(|_| examples[(order.next_u64() % examples.len() as u64) as usize].clone())
                .collect();
            let mut prng = Prng::derive(cfg.seed, (step * cfg.accumulation + m) as u64);
            let (l, g) = cfm_loss(&net, &batch, which, &mut prng, exec)?;
            loss += l;
            match grads.as_mut() {
                Some(acc) => acc.accumulate(&g),
                None => grads = Some(g),
            }
        }
        let inv = 1.0 / cfg.accumulation as f64;
        let grads = grads.unwrap();
        let mut gflat = trainable_flat(&grads, phase);
        gflat.iter_mut().for_each(|g| *g *= inv);
        let opt = AdamWConfig {
            lr: cosine_lr(cfg.optimizer.lr, step, cfg.steps),
            ..cfg.optimizer
        };
        adamw_step(&mut flat, &gflat, &mut state, &opt)
            .map_err(|e| GscError::TrainingDiverged(format!("step {step}: {e}")))?;
        load_trainable(&mut net, phase, &flat)?;
        losses.push(loss * inv);
        on_step(step, loss * inv);
    }
    match phase {
        Phase::Base => net.base_steps += cfg.steps as u64,
        Phase::Control => {
            if net.trunk_digest() != frozen {
                return Err(GscError::Corrupt("control training modified the frozen trunk".into()));
            }
        }
    }
    Ok(TrainOutcome { net, losses })
}
