//! Flat `key = value` run configuration. Every key has a default; unknown
//! keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::codec::CodecTrainConfig;
use crate::flow::{FlowConfig, FlowTrainConfig, SamplerConfig};
use crate::numerics::AdamWConfig;
use crate::scene::SceneConfig;
use crate::select::RdWeights;
use crate::theory::ImportanceMode;
use crate::{GscError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,

    pub corpus_size: usize,
    pub corpus_heldout: usize,
    pub corpus_canvas: usize,
    pub corpus_max_per_kind: u32,

    pub codec_n: usize,
    pub codec_patch: usize,
    pub codec_alphabet: i32,
    pub codec_quant_step: f64,
    pub codec_lambda_rate: f64,
    pub codec_steps: usize,
    pub codec_batch: usize,
    pub codec_lr: f64,

    pub flow_hidden: usize,
    pub flow_l_base: usize,
    pub flow_m_ctl: usize,
    pub flow_d_txt: usize,
    pub flow_d_time: usize,
    pub flow_lr: f64,
    pub flow_weight_decay: f64,
    pub flow_steps_base: usize,
    pub flow_steps_control: usize,
    pub flow_micro_batch: usize,
    pub flow_accumulation: usize,

    pub sampler_n: usize,
    pub sampler_seed: u64,

    pub selection_c_list: Vec<usize>,
    pub selection_alpha: f64,
    pub selection_beta: f64,

    pub theory_lambda: f64,
    pub theory_importance: ImportanceMode,

    pub paths_out: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            corpus_size: 2000,
            corpus_heldout: 200,
            corpus_canvas: 32,
            corpus_max_per_kind: 2,
            codec_n: 32,
            codec_patch: 4,
            codec_alphabet: 15,
            codec_quant_step: 0.5,
            codec_lambda_rate: 0.01,
            codec_steps: 8000,
            codec_batch: 16,
            codec_lr: 3e-3,
            flow_hidden: 256,
            flow_l_base: 6,
            flow_m_ctl: 4,
            flow_d_txt: 32,
            flow_d_time: 32,
            flow_lr: 1e-3,
            flow_weight_decay: 0.01,
            flow_steps_base: 1000,
            flow_steps_control: 600,
            flow_micro_batch: 8,
            flow_accumulation: 4,
            sampler_n: 20,
            sampler_seed: 7,
            selection_c_list: vec![0, 1, 2, 4, 8, 16],
            selection_alpha: 1.0,
            selection_beta: 0.001,
            theory_lambda: 0.1,
            theory_importance: ImportanceMode::Gradient,
            paths_out: PathBuf::from("artifacts"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GscError::invalid(format!("key {key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "corpus.size" => self.corpus_size = parse(key, v)?,
            "corpus.heldout" => self.corpus_heldout = parse(key, v)?,
            "corpus.canvas" => self.corpus_canvas = parse(key, v)?,
            "corpus.max_per_kind" => self.corpus_max_per_kind = parse(key, v)?,
            "codec.n" => self.codec_n = parse(key, v)?,
            "codec.patch" => self.codec_patch = parse(key, v)?,
            "codec.alphabet" => self.codec_alphabet = parse(key, v)?,
            "codec.quant_step" => self.codec_quant_step = parse(key, v)?,
            "codec.lambda_rate" => self.codec_lambda_rate = parse(key, v)?,
            "codec.steps" => self.codec_steps = parse(key, v)?,
            "codec.batch" => self.codec_batch = parse(key, v)?,
            "codec.lr" => self.codec_lr = parse(key, v)?,
            "flow.hidden" => self.flow_hidden = parse(key, v)?,
            "flow.l_base" => self.flow_l_base = parse(key, v)?,
            "flow.m_ctl" => self.flow_m_ctl = parse(key, v)?,
            "flow.d_txt" => self.flow_d_txt = parse(key, v)?,
            "flow.d_time" => self.flow_d_time = parse(key, v)?,
            "flow.lr" => self.flow_lr = parse(key, v)?,
            "flow.weight_decay" => self.flow_weight_decay = parse(key, v)?,
            "flow.steps_base" => self.flow_steps_base = parse(key, v)?,
            "flow.steps_control" => self.flow_steps_control = parse(key, v)?,
            "flow.micro_batch" => self.flow_micro_batch = parse(key, v)?,
            "flow.accumulation" => self.flow_accumulation = parse(key, v)?,
            "sampler.n" => self.sampler_n = parse(key, v)?,
            "sampler.seed" => self.sampler_seed = parse(key, v)?,
            "selection.c_list" => self.selection_c_list = parse_list(key, v)?,
            "selection.alpha" => self.selection_alpha = parse(key, v)?,
            "selection.beta" => self.selection_beta = parse(key, v)?,
            "theory.lambda" => self.theory_lambda = parse(key, v)?,
            "theory.importance" => self.theory_importance = parse(key, v)?,
            "paths.out" => self.paths_out = PathBuf::from(v),
            other => return Err(GscError::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by every `key = value` line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GscError::invalid(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| GscError::invalid(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GscError::io(path, e))?;
        Config::parse(&text).map_err(|e| GscError::invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        let list: Vec<String> = self.selection_c_list.iter().map(|c| c.to_string()).collect();
        let mode = match self.theory_importance {
            ImportanceMode::Uniform => "uniform",
            ImportanceMode::Gradient => "gradient",
        };
        let mut s = String::new();
        let entries = [
            ("seed", self.seed.to_string()),
            ("corpus.size", self.corpus_size.to_string()),
            ("corpus.heldout", self.corpus_heldout.to_string()),
            ("corpus.canvas", self.corpus_canvas.to_string()),
            ("corpus.max_per_kind", self.corpus_max_per_kind.to_string()),
            ("codec.n", self.codec_n.to_string()),
            ("codec.patch", self.codec_patch.to_string()),
            ("codec.alphabet", self.codec_alphabet.to_string()),
            ("codec.quant_step", self.codec_quant_step.to_string()),
            ("codec.lambda_rate", self.codec_lambda_rate.to_string()),
            ("codec.steps", self.codec_steps.to_string()),
            ("codec.batch", self.codec_batch.to_string()),
            ("codec.lr", self.codec_lr.to_string()),
            ("flow.hidden", self.flow_hidden.to_string()),
            ("flow.l_base", self.flow_l_base.to_string()),
            ("flow.m_ctl", self.flow_m_ctl.to_string()),
            ("flow.d_txt", self.flow_d_txt.to_string()),
            ("flow.d_time", self.flow_d_time.to_string()),
            ("flow.lr", self.flow_lr.to_string()),
            ("flow.weight_decay", self.flow_weight_decay.to_string()),
            ("flow.steps_base", self.flow_steps_base.to_string()),
            ("flow.steps_control", self.flow_steps_control.to_string()),
            ("flow.micro_batch", self.flow_micro_batch.to_string()),
            ("flow.accumulation", self.flow_accumulation.to_string()),
            ("sampler.n", self.sampler_n.to_string()),
            ("sampler.seed", self.sampler_seed.to_string()),
            ("selection.c_list", list.join(",")),
            ("selection.alpha", self.selection_alpha.to_string()),
            ("selection.beta", self.selection_beta.to_string()),
            ("theory.lambda", self.theory_lambda.to_string()),
            ("theory.importance", mode.to_string()),
            ("paths.out", self.paths_out.display().to_string()),
        ];
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.scene()?;
        self.flow_config()?;
        self.weights()?;
        self.sampler()?;
        if self.codec_patch == 0 || self.corpus_canvas % self.codec_patch != 0 {
            return Err(GscError::invalid(format!(
                "codec.patch {} must divide corpus.canvas {}",
                self.codec_patch, self.corpus_canvas
            )));
        }
        if self.codec_n == 0 || self.codec_alphabet < 1 {
            return Err(GscError::invalid("codec.n and codec.alphabet must be positive"));
        }
        if let Some(&c) = self.selection_c_list.iter().find(|&&c| c > self.codec_n) {
            return Err(GscError::invalid(format!(
                "selection.c_list entry {c} exceeds codec.n {}",
                self.codec_n
            )));
        }
        if self.selection_c_list.is_empty() {
            return Err(GscError::invalid("selection.c_list is empty"));
        }
        if self.corpus_size == 0 {
            return Err(GscError::invalid("corpus.size must be positive"));
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        let s = SceneConfig {
            width: self.corpus_canvas,
            height: self.corpus_canvas,
            max_per_kind: self.corpus_max_per_kind,
            ..SceneConfig::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn codec_train(&self) -> CodecTrainConfig {
        CodecTrainConfig {
            lambda_rate: self.codec_lambda_rate,
            steps: self.codec_steps,
            batch_size: self.codec_batch,
            optimizer: AdamWConfig {
                lr: self.codec_lr,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            seed: self.stream_seed(Stream::Codec),
        }
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        let f = FlowConfig {
            width: self.corpus_canvas,
            height: self.corpus_canvas,
            hidden: self.flow_hidden,
            base_blocks: self.flow_l_base,
            control_blocks: self.flow_m_ctl,
            text_dim: self.flow_d_txt,
            time_dim: self.flow_d_time,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn flow_train(&self, steps: usize, seed: u64) -> FlowTrainConfig {
        FlowTrainConfig {
            steps,
            micro_batch: self.flow_micro_batch,
            accumulation: self.flow_accumulation,
            optimizer: AdamWConfig {
                lr: self.flow_lr,
                weight_decay: self.flow_weight_decay,
                ..AdamWConfig::default()
            },
            seed,
        }
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        SamplerConfig::new(self.sampler_n, self.sampler_seed)
    }

    pub fn weights(&self) -> Result<RdWeights> {
        RdWeights::new(self.selection_alpha, self.selection_beta)
    }

    /// Independent seed for each consumer of randomness.
    pub fn stream_seed(&self, stream: Stream) -> u64 {
        crate::numerics::splitmix64(self.seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    TrainCorpus = 1,
    HeldoutCorpus = 2,
    Codec = 3,
    FlowInit = 4,
    FlowBase = 5,
    FlowControl = 6,
}
