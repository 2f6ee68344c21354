//! Rate sweep over channel counts: encode, decode, score.

use crate::bitstream::ModelRegistry;
use crate::codec::CodecBundle;
use crate::eval::{psnr, v_distance, vision_analyze, DEFAULT_THRESHOLD};
use crate::flow::SamplerConfig;
use crate::numerics::splitmix64;
use crate::par::Exec;
use crate::pipeline::{decode_stream, encode_image, FlowBank};
use crate::scene::CorpusRecord;
use crate::select::{rd_objective, ssim, RdWeights};
use crate::theory::{image_entropy, stationarity_report, ImportanceMode, SweepPoint, TheoryReport};
use crate::{GscError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub image: usize,
    pub c: usize,
    pub bits: u64,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub v_distance: f64,
    pub objective: f64,
    /// Importance entropy of the original and of the reconstruction.
    pub h_x: f64,
    pub h_x_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub counts: Vec<usize>,
    /// Image-major, then in `counts` order.
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMean {
    pub c: usize,
    pub bits: f64,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub v_distance: f64,
    pub objective: f64,
    pub h_x: f64,
    pub h_x_hat: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSettings {
    pub weights: RdWeights,
    pub sampler: SamplerConfig,
    pub importance: ImportanceMode,
}

/// Every image is coded at every `C`. The sampler seed depends only on the
/// image index, so all `C` share the same starting noise.
pub fn rd_sweep(
    records: &[CorpusRecord],
    codec: &CodecBundle,
    flows: &FlowBank,
    counts: &[usize],
    settings: &SweepSettings,
    exec: Exec,
) -> Result<SweepTable> {
    if counts.is_empty() {
        return Err(GscError::invalid("no channel counts to sweep"));
    }
    for &c in counts {
        flows.get(c)?;
    }
    let registry = ModelRegistry::new().with(codec.entropy.clone());
    let per_image = exec.map(records, |i, r| -> Result<Vec<SweepRow>> {
        let reference = r.image.to_grayscale();
        let truth = vision_analyze(&reference, DEFAULT_THRESHOLD);
        let diag = truth.diagonal();
        let h_x = image_entropy(&reference, settings.importance)?;
        let sampler = SamplerConfig {
            seed: splitmix64(settings.sampler.seed ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)),
            ..settings.sampler
        };
        counts
            .iter()
            .map(|&c| {
                let enc = encode_image(&r.image, r.caption.as_str(), c, codec)
                    .map_err(|e| GscError::AtChannelCount { c, source: Box::new(e) })?;
                let dec = decode_stream(&enc.bytes, &registry, flows, &sampler)
                    .map_err(|e| GscError::AtChannelCount { c, source: Box::new(e) })?;
                let v = v_distance(&truth, &vision_analyze(&dec.image, DEFAULT_THRESHOLD), diag);
                Ok(SweepRow {
                    image: i,
                    c,
                    bits: enc.total_bits,
                    bpp: enc.bpp,
                    psnr_db: psnr(&reference, &dec.image)?,
                    ssim: ssim(&reference, &dec.image)?,
                    v_distance: v,
                    objective: rd_objective(v, enc.total_bits as f64, settings.weights),
                    h_x,
                    h_x_hat: image_entropy(&dec.image, settings.importance)?,
                })
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(records.len() * counts.len());
    for r in per_image {
        rows.extend(r?);
    }
    Ok(SweepTable {
        counts: counts.to_vec(),
        rows,
    })
}

impl SweepTable {
    pub fn means(&self) -> Vec<SweepMean> {
        self.counts
            .iter()
            .map(|&c| {
                let sel: Vec<&SweepRow> = self.rows.iter().filter(|r| r.c == c).collect();
                let n = sel.len().max(1) as f64;
                let avg = |f: &dyn Fn(&SweepRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / n;
                SweepMean {
                    c,
                    bits: avg(&|r| r.bits as f64),
                    bpp: avg(&|r| r.bpp),
                    psnr_db: avg(&|r| r.psnr_db),
                    ssim: avg(&|r| r.ssim),
                    v_distance: avg(&|r| r.v_distance),
                    objective: avg(&|r| r.objective),
                    h_x: avg(&|r| r.h_x),
                    h_x_hat: avg(&|r| r.h_x_hat),
                }
            })
            .collect()
    }

    /// One row per `(image, C)`, then one `mean:<C>` row per count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("C,bpp,psnr_db,ssim,v_distance,objective\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.c, r.bpp, r.psnr_db, r.ssim, r.v_distance, r.objective
            ));
        }
        for m in self.means() {
            out.push_str(&format!(
                "mean:{},{},{},{},{},{}\n",
                m.c, m.bpp, m.psnr_db, m.ssim, m.v_distance, m.objective
            ));
        }
        out
    }

    /// `bpp` strictly increasing in `C` for every image.
    pub fn bpp_monotone(&self) -> bool {
        let k = self.counts.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&j| self.counts[j]);
        self.rows
            .chunks(k)
            .all(|img| order.windows(2).all(|w| img[w[0]].bpp < img[w[1]].bpp))
    }

    /// Stationarity analysis of the per-`C` means, with the rate budget `R`
    /// taken as the transmitted bits.
    pub fn theory_report(&self, alpha: f64, beta: f64, lambda: f64) -> Result<TheoryReport> {
        let points: Vec<SweepPoint> = self
            .means()
            .iter()
            .map(|m| SweepPoint {
                c: m.c,
                hx: m.h_x,
                hx_hat: m.h_x_hat,
                bits: m.bits,
                rate: m.bits,
            })
            .collect();
        stationarity_report(&points, alpha, beta, lambda)
    }
}
