//! Sender and receiver built from the trained parts, plus the training
//! recipes that produce those parts.
//!
//! The sender needs only the codec bundle; the receiver needs the entropy
//! model (by digest) and one flow network per channel count.

use std::collections::BTreeMap;

use crate::bitstream::{
    bpp, decode_caption, decode_payload, encode_caption, encode_payload, pack, unpack, GscHeader, ModelRegistry,
    STREAM_VERSION,
};
use crate::codec::{
    encode_latent, fit_entropy_model, train_codec, CodecBundle, CodecParams, FloatLatent, Latent,
};
use crate::config::{Config, Stream};
use crate::flow::{sample, train_flow, Conditioning, FlowExample, FlowNet, Phase, SamplerConfig, TextEncoder};
use crate::image::Image;
use crate::numerics::Prng;
use crate::par::Exec;
use crate::scene::CorpusRecord;
use crate::select::{select_top_c, SelectionResult};
use crate::{GscError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub bytes: Vec<u8>,
    pub header: GscHeader,
    pub selection: SelectionResult,
    pub total_bits: u64,
    pub bpp: f64,
}

fn u16_field(what: &str, v: usize) -> Result<u16> {
    u16::try_from(v).map_err(|_| GscError::invalid(format!("{what} {v} does not fit in 16 bits")))
}

/// Selection of `c` channels, empty for the caption-only stream.
pub fn select_channels(latent: &Latent, image: &Image, c: usize) -> Result<SelectionResult> {
    if c == 0 {
        Ok(SelectionResult::empty())
    } else {
        select_top_c(latent, image, c)
    }
}

/// Caption plus the `c` most structure-preserving channels as a `GSC1` stream.
pub fn encode_image(image: &Image, caption: &str, c: usize, codec: &CodecBundle) -> Result<EncodedImage> {
    let params = &codec.params;
    let latent = encode_latent(image, params)?;
    let selection = select_channels(&latent, image, c)?;
    let caption_bytes = encode_caption(caption);
    let payload = encode_payload(&latent, &selection.indices, &codec.entropy)?;
    let header = GscHeader {
        version: STREAM_VERSION,
        width: u16_field("width", image.width)?,
        height: u16_field("height", image.height)?,
        patch: u8::try_from(params.patch).map_err(|_| GscError::invalid("patch does not fit in 8 bits"))?,
        channels: u16_field("channel count", params.channels)?,
        quant_steps: selection
            .indices
            .iter()
            .map(|&i| params.quant_steps[i as usize] as f32)
            .collect(),
        selected: selection.indices.clone(),
        digest: codec.entropy.digest(),
        caption_len: u16_field("caption length", caption_bytes.len())?,
    };
    let bytes = pack(&header, &caption_bytes, &payload)?;
    let total_bits = 8 * bytes.len() as u64;
    Ok(EncodedImage {
        bpp: bpp(total_bits, image.width, image.height)?,
        bytes,
        header,
        selection,
        total_bits,
    })
}

/// The dequantized `channels × h × w` volume with only `selected` filled.
pub fn guidance_volume(
    channels: usize,
    height: usize,
    width: usize,
    selected: &[u16],
    maps: &[Vec<i32>],
    steps: &[f64],
) -> Result<FloatLatent> {
    if maps.len() != selected.len() || steps.len() != selected.len() {
        return Err(GscError::dims(selected.len(), maps.len()));
    }
    let hw = height * width;
    let mut data = vec![0.0; channels * hw];
    for ((&ch, map), &q) in selected.iter().zip(maps).zip(steps) {
        let ch = ch as usize;
        if ch >= channels || map.len() != hw {
            return Err(GscError::invalid(format!("guidance channel {ch} does not fit {channels}x{height}x{width}")));
        }
        for (d, &s) in data[ch * hw..(ch + 1) * hw].iter_mut().zip(map) {
            *d = s as f64 * q;
        }
    }
    Ok(FloatLatent {
        channels,
        height,
        width,
        data,
    })
}

/// Flow networks indexed by the channel count they were trained for;
/// `C = 0` is the caption-only base model.
#[derive(Debug, Clone, Default)]
pub struct FlowBank {
    nets: BTreeMap<usize, FlowNet>,
}

impl FlowBank {
    pub fn new() -> Self {
        FlowBank::default()
    }

    pub fn insert(&mut self, c: usize, net: FlowNet) {
        self.nets.insert(c, net);
    }

    pub fn get(&self, c: usize) -> Result<&FlowNet> {
        self.nets.get(&c).ok_or(GscError::MissingModel(c))
    }

    pub fn counts(&self) -> Vec<usize> {
        self.nets.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub image: Image,
    pub caption: String,
    pub header: GscHeader,
    pub total_bits: u64,
}

/// Rebuilds an image from stream bytes, the shared entropy models and the
/// flow network for the stream's channel count.
pub fn decode_stream(bytes: &[u8], registry: &ModelRegistry, flows: &FlowBank, sampler: &SamplerConfig) -> Result<Decoded> {
    let parts = unpack(bytes, registry)?;
    let header = parts.header;
    let model = registry
        .get(&header.digest)
        .ok_or_else(|| GscError::DigestMismatch(crate::bitstream::digest_hex(&header.digest)))?;
    let caption = decode_caption(&parts.caption)?;
    let (lw, lh) = header.latent_dims()?;
    let maps = decode_payload(&parts.payload, &header.selected, lw * lh, model)?;
    let c = header.selected_count();
    let net = flows.get(c)?;
    if net.config.width != header.width as usize || net.config.height != header.height as usize {
        return Err(GscError::dims(
            format!("{}x{}", net.config.width, net.config.height),
            format!("{}x{}", header.width, header.height),
        ));
    }
    let tokens = net.text().token_ids(&caption)?;
    let volume = if c == 0 {
        None
    } else {
        let ctl = net
            .control
            .as_ref()
            .ok_or_else(|| GscError::Corrupt(format!("flow model for C={c} has no control branch")))?;
        if ctl.channels != header.channels as usize || ctl.patch != header.patch as usize {
            return Err(GscError::dims(
                format!("{} channels, patch {}", ctl.channels, ctl.patch),
                format!("{} channels, patch {}", header.channels, header.patch),
            ));
        }
        let steps: Vec<f64> = header.quant_steps.iter().map(|&q| q as f64).collect();
        Some(guidance_volume(header.channels as usize, lh, lw, &header.selected, &maps, &steps)?)
    };
    let image = sample(
        net,
        Conditioning {
            tokens: &tokens,
            guidance: volume.as_ref(),
        },
        sampler,
    )?;
    Ok(Decoded {
        image,
        caption,
        total_bits: 8 * bytes.len() as u64,
        header,
    })
}

/// Trains the codec on the corpus images and fits its entropy model.
pub fn train_codec_bundle(records: &[CorpusRecord], cfg: &Config, exec: Exec) -> Result<CodecBundle> {
    let images: Vec<Image> = records.iter().map(|r| r.image.clone()).collect();
    let mut prng = Prng::new(cfg.stream_seed(Stream::Codec));
    let init = CodecParams::init(cfg.codec_patch, cfg.codec_n, cfg.codec_alphabet, cfg.codec_quant_step, &mut prng)?;
    let params = train_codec(&images, init, &cfg.codec_train(), exec)?;
    let latents: Vec<Latent> = exec
        .map(&images, |_, img| encode_latent(img, &params))
        .into_iter()
        .collect::<Result<_>>()?;
    let entropy = fit_entropy_model(&latents, params.alphabet_k)?;
    Ok(CodecBundle { params, entropy })
}

/// Targets for flow training. With `guided = Some((codec, c))` each example
/// carries the guidance volume the receiver would rebuild from a `C = c`
/// stream.
pub fn flow_examples(
    records: &[CorpusRecord],
    guided: Option<(&CodecParams, usize)>,
    text: &TextEncoder,
    exec: Exec,
) -> Result<Vec<FlowExample>> {
    exec.map(records, |_, r| -> Result<FlowExample> {
        let target = r.image.to_grayscale().data;
        let tokens = text.token_ids(r.caption.as_str())?;
        let guidance = match guided {
            None | Some((_, 0)) => None,
            Some((codec, c)) => {
            let latent = encode_latent(&r.image, codec)?;
            let sel = select_top_c(&latent, &r.image, c)?;
            let maps: Vec<Vec<i32>> = sel.indices.iter().map(|&i| latent.channel(i as usize).to_vec()).collect();
            let steps: Vec<f64> = sel
                .indices
                .iter()
                .map(|&i| codec.quant_steps[i as usize] as f32 as f64)
                .collect();
            Some(guidance_volume(latent.channels, latent.height, latent.width, &sel.indices, &maps, &steps)?)
            }
        };
        Ok(FlowExample {
            target,
            tokens,
            guidance,
        })
    })
    .into_iter()
    .collect()
}

/// Caption-conditioned base model.
pub fn train_base_flow(
    records: &[CorpusRecord],
    cfg: &Config,
    exec: Exec,
    on_step: impl FnMut(usize, f64),
) -> Result<FlowNet> {
    let mut prng = Prng::new(cfg.stream_seed(Stream::FlowInit));
    let net = FlowNet::new(cfg.flow_config()?, &mut prng)?;
    let examples = flow_examples(records, None, net.text(), exec)?;
    let train = cfg.flow_train(cfg.flow_steps_base, cfg.stream_seed(Stream::FlowBase));
    Ok(train_flow(net, &examples, Phase::Base, &train, exec, on_step)?.net)
}

/// Control branch for `c` channels on top of a frozen base model.
pub fn train_control_flow(
    base: &FlowNet,
    records: &[CorpusRecord],
    codec: &CodecParams,
    c: usize,
    cfg: &Config,
    exec: Exec,
    on_step: impl FnMut(usize, f64),
) -> Result<FlowNet> {
    if c == 0 {
        return Err(GscError::invalid("the caption-only model is the base model; C must be positive"));
    }
    if base.control.is_some() {
        return Err(GscError::PhaseOrder("expected a base model without a control branch".into()));
    }
    let mut net = base.clone();
    net.attach_control(codec.patch, codec.channels, Some(&codec.synthesis))?;
    let examples = flow_examples(records, Some((codec, c)), net.text(), exec)?;
    let seed = cfg.stream_seed(Stream::FlowControl) ^ c as u64;
    let train = cfg.flow_train(cfg.flow_steps_control, seed);
    Ok(train_flow(net, &examples, Phase::Control, &train, exec, on_step)?.net)
}
