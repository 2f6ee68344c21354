//! Structural channel ranking and the rate/analysis trade-off.

use crate::codec::{normalize_map, Latent};
use crate::image::Image;
use crate::{GscError, Result};

const K1: f64 = 0.01;
const K2: f64 = 0.03;
const RANGE_TOL: f64 = 1e-9;

/// Single-window SSIM over two equally sized maps with values in `[0, 1]`.
pub fn ssim_maps(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GscError::dims(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(GscError::invalid("ssim of empty maps"));
    }
    if let Some(v) = a.iter().chain(b).find(|v| !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(*v)) {
        return Err(GscError::invalid(format!("ssim input {v} outside [0, 1]")));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        va += dx * dx;
        vb += dy * dy;
        cov += dx * dy;
    }
    let (va, vb, cov) = (va / n, vb / n, cov / n);
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    Ok(((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(GscError::dims(
            format!("{}x{}x{}", a.width, a.height, a.channels),
            format!("{}x{}x{}", b.width, b.height, b.channels),
        ));
    }
    ssim_maps(&a.data, &b.data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub indices: Vec<u16>,
    pub scores: Vec<f64>,
}

impl SelectionResult {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// The caption-only selection.
    pub fn empty() -> Self {
        SelectionResult {
            indices: Vec::new(),
            scores: Vec::new(),
        }
    }
}

/// The reference each channel is compared against: the grayscale image
/// area-averaged down to the latent grid.
pub fn selection_reference(reference: &Image, latent: &Latent) -> Result<Image> {
    if reference.width % latent.width != 0
        || reference.height % latent.height != 0
        || reference.width / latent.width != reference.height / latent.height
    {
        return Err(GscError::dims(
            format!("multiple of {}x{}", latent.width, latent.height),
            format!("{}x{}", reference.width, reference.height),
        ));
    }
    reference.area_downsample(reference.width / latent.width)
}

/// SSIM of every min–max normalized channel against the reference.
pub fn channel_scores(latent: &Latent, reference: &Image) -> Result<Vec<f64>> {
    let r = selection_reference(reference, latent)?;
    (0..latent.channels)
        .map(|ch| {
            let vals: Vec<f64> = latent.channel(ch).iter().map(|&s| s as f64).collect();
            ssim_maps(&normalize_map(&vals), &r.data)
        })
        .collect()
}

/// The `c` best scores, ties to the lower index, returned in index order.
pub fn top_c(scores: &[f64], c: usize) -> Result<SelectionResult> {
    if c == 0 || c > scores.len() {
        return Err(GscError::invalid(format!(
            "C={c} outside 1..={}",
            scores.len()
        )));
    }
    if scores.len() > u16::MAX as usize {
        return Err(GscError::invalid("too many channels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut chosen = order[..c].to_vec();
    chosen.sort_unstable();
    Ok(SelectionResult {
        indices: chosen.iter().map(|&i| i as u16).collect(),
        scores: chosen.iter().map(|&i| scores[i]).collect(),
    })
}

pub fn select_top_c(latent: &Latent, reference: &Image, c: usize) -> Result<SelectionResult> {
    top_c(&channel_scores(latent, reference)?, c)
}

/// `channel,ssim,selected` rows for every channel.
pub fn selection_csv(scores: &[f64], sel: &SelectionResult) -> String {
    let mut out = String::from("channel,ssim,selected\n");
    for (ch, s) in scores.iter().enumerate() {
        let picked = sel.indices.contains(&(ch as u16)) as u8;
        out.push_str(&format!("{ch},{s},{picked}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl RdWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) || alpha + beta == 0.0 {
            return Err(GscError::invalid(format!("rd weights α={alpha}, β={beta}")));
        }
        Ok(RdWeights { alpha, beta })
    }
}

pub fn rd_objective(v_dist: f64, bits: f64, w: RdWeights) -> f64 {
    w.alpha * v_dist + w.beta * bits
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdRow {
    pub c: usize,
    pub bits: f64,
    pub v_dist: f64,
    pub objective: f64,
}

/// Evaluates `eval(C) -> (bits, v_dist)` for every candidate and returns the
/// minimiser of the objective (ties to the smaller C) with the full table.
pub fn choose_channel_count<F>(candidates: &[usize], mut eval: F, w: RdWeights) -> Result<(usize, Vec<RdRow>)>
where
    F: FnMut(usize) -> Result<(f64, f64)>,
{
    if candidates.is_empty() {
        return Err(GscError::invalid("no candidate channel counts"));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let (bits, v_dist) = eval(c).map_err(|e| GscError::AtChannelCount {
            c,
            source: Box::new(e),
        })?;
        rows.push(RdRow {
            c,
            bits,
            v_dist,
            objective: rd_objective(v_dist, bits, w),
        });
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.c.cmp(&b.c)))
        .map(|r| r.c)
        .unwrap();
    Ok((best, rows))
}

pub const DEFAULT_CANDIDATES: [usize; 5] = [1, 2, 4, 8, 16];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;

    fn oracle_ssim(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let mx = a.iter().sum::<f64>() / n;
        let my = b.iter().sum::<f64>() / n;
        let exx = a.iter().map(|x| x * x).sum::<f64>() / n;
        let eyy = b.iter().map(|y| y * y).sum::<f64>() / n;
        let exy = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
        let (c1, c2) = (0.0001, 0.0009);
        let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        let cs = (2.0 * (exy - mx * my) + c2) / ((exx - mx * mx) + (eyy - my * my) + c2);
        l * cs
    }

    #[test]
    fn identity_and_constant_closed_form() {
        let mut prng = Prng::new(1);
        let a: Vec<f64> = (0..64).map(|_| prng.uniform()).collect();
        assert!((ssim_maps(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let (c1, c2) = (0.2, 0.7);
        let want = (2.0 * c1 * c2 + 1e-4) / (c1 * c1 + c2 * c2 + 1e-4);
        let got = ssim_maps(&[c1; 16], &[c2; 16]).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn matches_definition_on_random_pairs() {
        let mut prng = Prng::new(2);
        for _ in 0..200 {
            let a: Vec<f64> = (0..64).map(|_| prng.uniform()).collect();
            let b: Vec<f64> = (0..64).map(|_| prng.uniform()).collect();
            let s = ssim_maps(&a, &b).unwrap();
            assert!((s - oracle_ssim(&a, &b)).abs() < 1e-10);
            assert!((s - ssim_maps(&b, &a).unwrap()).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ssim_maps(&[0.0; 4], &[0.0; 5]).is_err());
        assert!(ssim_maps(&[1.5, 0.0], &[0.0, 0.0]).is_err());
        assert!(ssim_maps(&[1.0 + 1e-12, 0.0], &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn top_two_and_full() {
        let s = top_c(&[0.9, 0.2, 0.5, 0.7], 2).unwrap();
        assert_eq!(s.indices, vec![0, 3]);
        assert_eq!(s.scores, vec![0.9, 0.7]);
        assert_eq!(top_c(&[0.9, 0.2, 0.5, 0.7], 4).unwrap().indices, vec![0, 1, 2, 3]);
        assert!(top_c(&[0.1], 0).is_err());
        assert!(top_c(&[0.1], 2).is_err());
    }

    #[test]
    fn duplicate_channels_prefer_lower_index() {
        let latent = Latent {
            channels: 3,
            height: 2,
            width: 2,
            symbols: vec![0, 1, 2, 3, 3, 1, 0, 2, 3, 1, 0, 2],
        };
        let reference = Image::new(4, 4, 1, (0..16).map(|i| ((i % 4) * 4 + i / 4) as f64 / 15.0).collect()).unwrap();
        let scores = channel_scores(&latent, &reference).unwrap();
        assert_eq!(scores[1], scores[2]);
        let sel = select_top_c(&latent, &reference, 2).unwrap();
        let best = if scores[0] > scores[1] { vec![0, 1] } else { vec![1, 2] };
        assert_eq!(sel.indices, best);
        assert_eq!(select_top_c(&latent, &reference, 1).unwrap().indices.len(), 1);
    }

    #[test]
    fn affine_rescaling_invariance() {
        let mut prng = Prng::new(9);
        let symbols: Vec<i32> = (0..4 * 16).map(|_| prng.int_range(0, 10) as i32 - 5).collect();
        let latent = Latent {
            channels: 4,
            height: 4,
            width: 4,
            symbols,
        };
        let mut scaled = latent.clone();
        for v in &mut scaled.symbols[16..32] {
            *v = 3 * *v + 7;
        }
        let reference = Image::new(8, 8, 1, (0..64).map(|_| prng.uniform()).collect()).unwrap();
        assert_eq!(
            channel_scores(&latent, &reference).unwrap(),
            channel_scores(&scaled, &reference).unwrap()
        );
    }

    #[test]
    fn objective_arithmetic() {
        let w = |a, b| RdWeights::new(a, b).unwrap();
        assert_eq!(rd_objective(0.3, 99.0, w(1.0, 0.0)), 0.3);
        assert_eq!(rd_objective(0.3, 128.0, w(0.0, 1.0)), 128.0);
        assert!((rd_objective(0.2, 50.0, w(1.0, 0.01)) - 0.7).abs() < 1e-15);
        assert!(RdWeights::new(0.0, 0.0).is_err());
        assert!(RdWeights::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn choose_count_table() {
        let table = [(10.0, 0.5), (20.0, 0.3), (40.0, 0.2)];
        let cands = [1, 2, 4];
        let eval = |c: usize| Ok(table[cands.iter().position(|&x| x == c).unwrap()]);
        let (best, rows) = choose_channel_count(&cands, eval, RdWeights::new(1.0, 0.01).unwrap()).unwrap();
        assert_eq!(best, 2);
        let objs: Vec<f64> = rows.iter().map(|r| r.objective).collect();
        for (o, want) in objs.iter().zip([0.6, 0.5, 0.6]) {
            assert!((o - want).abs() < 1e-12);
        }
        let (best, _) = choose_channel_count(&cands, eval, RdWeights::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(best, 4);
        let (best, _) = choose_channel_count(&cands, eval, RdWeights::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(best, 1);
        let (best, _) = choose_channel_count(&[1, 2], |_| Ok((1.0, 1.0)), RdWeights::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(best, 1);
    }

    #[test]
    fn eval_error_names_c() {
        let err = choose_channel_count(
            &[1, 8],
            |c| if c == 8 { Err(GscError::MissingModel(8)) } else { Ok((1.0, 1.0)) },
            RdWeights::new(1.0, 1.0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, GscError::AtChannelCount { c: 8, .. }));
        assert!(choose_channel_count(&[], |_| Ok((0.0, 0.0)), RdWeights::new(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn csv_dump() {
        let sel = top_c(&[0.1, 0.9], 1).unwrap();
        assert_eq!(selection_csv(&[0.1, 0.9], &sel), "channel,ssim,selected\n0,0.1,0\n1,0.9,1\n");
    }
}
