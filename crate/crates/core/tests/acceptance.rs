//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::time::{Duration, Instant};

use gsc_core::bitstream::{pack, rc_decode, rc_encode, unpack, CdfTable, GscHeader, ModelRegistry, STREAM_VERSION};
use gsc_core::codec::{EntropyModel, FloatLatent, Latent};
use gsc_core::config::{Config, Stream};
use gsc_core::flow::{
    cfm_loss, integrate, interpolate, marginal_vf_monte_carlo, marginal_vf_oracle, Conditioning, FlowConfig,
    FlowExample, FlowNet, SamplerConfig, Trainable, VectorField,
};
use gsc_core::numerics::{finite_diff_check, Parameters, Prng};
use gsc_core::pipeline::{train_base_flow, train_codec_bundle, train_control_flow, FlowBank};
use gsc_core::scene::generate_corpus;
use gsc_core::select::{ssim_maps, top_c};
use gsc_core::sweep::{rd_sweep, SweepSettings};
use gsc_core::theory::{image_entropy, lagrangian, rd_objective_theory, stationarity_report};
use gsc_core::theory::{ImportanceMode, SweepPoint};
use gsc_core::{image::Image, Exec, Result};

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1 ---------------------------------------------------------------------------

fn zero_init_identity() -> Outcome {
    let mut prng = Prng::new(101);
    let base = ok(FlowNet::new(FlowConfig::default(), &mut prng))?;
    let (patch, n) = (4, 32);
    let mut ctl = base.clone();
    let guide: Vec<f64> = (0..patch * patch * n).map(|_| 0.3 * prng.normal()).collect();
    ok(ctl.attach_control(patch, n, Some(&guide)))?;
    let vocab = base.text().vocabulary_size();
    let d = base.config.pixels();
    let side = base.config.width / patch;
    for case in 0..100 {
        let z: Vec<f64> = (0..d).map(|_| prng.normal()).collect();
        let t = prng.uniform();
        let tokens: Vec<usize> = (0..1 + prng.int_range(0, 5)).map(|_| prng.int_range(0, vocab as u32 - 1) as usize).collect();
        let mut vol = FloatLatent {
            channels: n,
            height: side,
            width: side,
            data: vec![0.0; n * side * side],
        };
        for ch in 0..n {
            if prng.uniform() < 0.25 {
                for v in &mut vol.data[ch * side * side..(ch + 1) * side * side] {
                    *v = 2.0 * prng.normal();
                }
            }
        }
        let a = ok(base.predict(&z, t, &Conditioning { tokens: &tokens, guidance: None }))?;
        let b = ok(ctl.predict(&z, t, &Conditioning { tokens: &tokens, guidance: Some(&vol) }))?;
        check(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), || {
            format!("tuple {case}: controlled output differs from base")
        })?;
    }
    Ok("100 tuples bitwise identical".into())
}

// 2 ---------------------------------------------------------------------------

fn tiny_flow() -> FlowConfig {
    FlowConfig {
        width: 4,
        height: 4,
        hidden: 5,
        base_blocks: 3,
        control_blocks: 2,
        text_dim: 3,
        time_dim: 4,
    }
}

fn grad_error(net: &FlowNet, batch: &[FlowExample]) -> std::result::Result<f64, String> {
    let all = Trainable {
        trunk: true,
        control: true,
    };
    let mut probe = net.clone();
    ok(finite_diff_check(
        |p| {
            probe.load_flat(p).unwrap();
            let (l, g) = cfm_loss(&probe, batch, all, &mut Prng::new(9), Exec::Sequential).unwrap();
            (l, g.to_flat())
        },
        &net.to_flat(),
        1e-5,
    ))
}

fn cfm_gradients() -> Outcome {
    let mut prng = Prng::new(202);
    let examples = |prng: &mut Prng, guided: bool| -> Vec<FlowExample> {
        (0..3)
            .map(|i| FlowExample {
                target: (0..16).map(|_| prng.uniform()).collect(),
                tokens: vec![i, i + 4],
                guidance: guided.then(|| FloatLatent {
                    channels: 3,
                    height: 2,
                    width: 2,
                    data: (0..12).map(|_| prng.normal()).collect(),
                }),
            })
            .collect()
    };
    let base = ok(FlowNet::new(tiny_flow(), &mut prng))?;
    let base_params = base.num_params();
    let e_base = grad_error(&base, &examples(&mut prng, false))?;

    let mut net = base.clone();
    net.base_steps = 1;
    let guide: Vec<f64> = (0..12).map(|_| prng.normal()).collect();
    ok(net.attach_control(2, 3, Some(&guide)))?;
    net.control.as_mut().unwrap().visit_mut(&mut |s| {
        for v in s.iter_mut() {
            *v += 0.3 * prng.normal();
        }
    });
    let ctl_params = net.num_params();
    let e_ctl = grad_error(&net, &examples(&mut prng, true))?;
    check(base_params <= 1000 && ctl_params <= 1000, || {
        format!("nets too large: {base_params}, {ctl_params}")
    })?;
    check(e_base < 1e-4 && e_ctl < 1e-4, || {
        format!("max relative error base {e_base:.2e}, controlled {e_ctl:.2e}")
    })?;
    Ok(format!(
        "max rel err {e_base:.1e} ({base_params} params), {e_ctl:.1e} with control ({ctl_params} params)"
    ))
}

// 3 ---------------------------------------------------------------------------

struct Constant(Vec<f64>);

impl VectorField for Constant {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn velocity(&self, _z: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

struct Identity(usize);

impl VectorField for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn velocity(&self, z: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }
}

fn euler_exactness() -> Outcome {
    let mut prng = Prng::new(303);
    let mu: Vec<f64> = (0..8).map(|_| prng.normal()).collect();
    let z0: Vec<f64> = (0..8).map(|_| prng.normal()).collect();
    let mut worst_const = 0.0f64;
    for n in [1, 5, 50] {
        let out = ok(integrate(&Constant(mu.clone()), z0.clone(), &ok(SamplerConfig::new(n, 0))?))?;
        for i in 0..8 {
            worst_const = worst_const.max((out[i] - (z0[i] + mu[i])).abs());
        }
    }
    check(worst_const < 1e-12, || format!("constant field endpoint error {worst_const:.2e}"))?;
    let n = 100;
    let out = ok(integrate(&Identity(8), z0.clone(), &ok(SamplerConfig::new(n, 0))?))?;
    let growth = (1.0 + 1.0 / n as f64).powi(n as i32);
    let worst_lin = (0..8).map(|i| (out[i] - z0[i] * growth).abs()).fold(0.0, f64::max);
    check(worst_lin < 1e-12, || format!("linear field error {worst_lin:.2e}"))?;
    Ok(format!("constant {worst_const:.1e}, linear N=100 {worst_lin:.1e}"))
}

// 4 ---------------------------------------------------------------------------

fn marginal_field() -> Outcome {
    let points = vec![vec![-1.0], vec![1.0]];
    let weights = [0.5, 0.5];
    let mut prng = Prng::new(404);
    let mut worst = 0.0f64;
    for z in [-1.0, 0.0, 1.0] {
        for t in [0.25, 0.5, 0.75] {
            let exact = ok(marginal_vf_oracle(&points, &weights, &[z], t))?[0];
            let mc = ok(marginal_vf_monte_carlo(&points, &weights, &[z], t, 1_000_000, &mut prng))?[0];
            worst = worst.max((exact - mc).abs());
            if z == 0.0 {
                check(exact == 0.0, || format!("v(0, {t}) = {exact}, expected exactly 0"))?;
            }
        }
    }
    check(worst < 1e-2, || format!("oracle vs Monte-Carlo differs by {worst:.3e}"))?;
    Ok(format!("max |oracle - MC| = {worst:.1e} over 9 points, v(0,t) = 0"))
}

// 5 ---------------------------------------------------------------------------

fn range_coder_bound() -> Outcome {
    let mut prng = Prng::new(505);
    let (models, per_model) = (20, 5_000);
    let mut total_symbols = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for m in 0..models {
        let k = 2 + prng.int_range(0, 255) as usize;
        let skew = 0.2 + 4.0 * prng.uniform();
        let freqs: Vec<u32> = (0..k)
            .map(|_| 1 + (prng.uniform().powf(skew) * 200.0) as u32)
            .collect();
        let table = ok(CdfTable::from_frequencies(&freqs))?;
        let cdf = table.cdf().to_vec();
        let total = table.total() as f64;
        let symbols: Vec<usize> = (0..per_model)
            .map(|_| {
                let u = (prng.uniform() * total) as u32;
                cdf.iter().rposition(|&c| c <= u).unwrap().min(k - 1)
            })
            .collect();
        let bytes = ok(rc_encode(&symbols, &table))?;
        let back = ok(rc_decode(&bytes, &table, symbols.len()))?;
        check(back == symbols, || format!("model {m}: round trip mismatch"))?;
        let ideal = table.ideal_bits(&symbols);
        let actual = 8.0 * bytes.len() as f64;
        let bound = ideal * 1.01 + 64.0;
        check(actual <= bound, || format!("model {m}: {actual} bits > bound {bound:.1}"))?;
        worst_margin = worst_margin.max(actual - ideal);
        total_symbols += symbols.len();
    }
    Ok(format!(
        "{total_symbols} symbols over {models} models lossless; worst overhead {worst_margin:.1} bits"
    ))
}

// 6 ---------------------------------------------------------------------------

fn random_header(prng: &mut Prng, digest: [u8; 8]) -> (GscHeader, Vec<u8>, Vec<u8>) {
    let patch = [1u8, 2, 4, 8][prng.int_range(0, 3) as usize];
    let width = patch as u16 * (1 + prng.int_range(0, 64) as u16);
    let height = patch as u16 * (1 + prng.int_range(0, 64) as u16);
    let channels = 1 + prng.int_range(0, 400) as u16;
    let mut selected: Vec<u16> = (0..channels).filter(|_| prng.uniform() < 0.1).collect();
    if prng.uniform() < 0.1 {
        selected.clear();
    }
    let quant_steps = selected.iter().map(|_| (1e-3 + 10.0 * prng.uniform()) as f32).collect();
    let caption: Vec<u8> = (0..prng.int_range(0, 40)).map(|_| prng.next_u64() as u8).collect();
    let payload: Vec<u8> = if selected.is_empty() {
        Vec::new()
    } else {
        (0..1 + prng.int_range(0, 200)).map(|_| prng.next_u64() as u8).collect()
    };
    let header = GscHeader {
        version: STREAM_VERSION,
        width,
        height,
        patch,
        channels,
        selected,
        quant_steps,
        digest,
        caption_len: caption.len() as u16,
    };
    (header, caption, payload)
}

fn bitstream_fuzz() -> Outcome {
    let model = ok(EntropyModel::from_counts(2, vec![vec![5, 1, 9, 2, 4]; 3]))?;
    let digest = model.digest();
    let registry = ModelRegistry::new().with(model);
    let mut prng = Prng::new(606);
    let mut corruptions = 0;
    for case in 0..10_000 {
        let (header, caption, payload) = random_header(&mut prng, digest);
        let bytes = ok(pack(&header, &caption, &payload))?;
        let u = unpack(&bytes, &registry).map_err(|e| format!("case {case}: {e}"))?;
        check(u.header == header && u.caption == caption && u.payload == payload, || {
            format!("case {case}: unpack(pack(h)) != h")
        })?;
        if case % 100 == 0 {
            let mut head = Vec::new();
            header.write(&mut head);
            let digest_at = head.len() - 2 - 8;
            let fields = (0..4).chain(digest_at..digest_at + 8);
            for pos in fields {
                for delta in 1..=255u8 {
                    let mut bad = bytes.clone();
                    bad[pos] = bad[pos].wrapping_add(delta);
                    check(unpack(&bad, &registry).is_err(), || {
                        format!("case {case}: corruption at byte {pos} went undetected")
                    })?;
                    corruptions += 1;
                }
            }
        }
    }
    Ok(format!("10000 headers round-trip; {corruptions} magic/digest corruptions all rejected"))
}

// 7 ---------------------------------------------------------------------------

/// Channel i is chosen iff fewer than `c` channels beat it (higher score, or
/// equal score at a lower index).
fn brute_force_top(scores: &[f64], c: usize) -> Vec<u16> {
    (0..scores.len())
        .filter(|&i| {
            let better = (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            better < c
        })
        .map(|i| i as u16)
        .collect()
}

fn random_latent(prng: &mut Prng, channels: usize, side: usize, duplicate: bool) -> Latent {
    let s = side * side;
    let mut symbols: Vec<i32> = (0..channels * s).map(|_| prng.int_range(0, 14) as i32 - 7).collect();
    if duplicate {
        // copy a few channels so their scores tie exactly
        for _ in 0..3 {
            let a = prng.int_range(0, channels as u32 - 1) as usize;
            let b = prng.int_range(0, channels as u32 - 1) as usize;
            let src: Vec<i32> = symbols[a * s..(a + 1) * s].to_vec();
            symbols[b * s..(b + 1) * s].copy_from_slice(&src);
        }
    }
    Latent {
        channels,
        height: side,
        width: side,
        symbols,
    }
}

fn channel_selection() -> Outcome {
    use gsc_core::bitstream::encode_payload;
    use gsc_core::select::channel_scores;
    let mut prng = Prng::new(707);
    let mut ties_seen = 0;
    for case in 0..1000 {
        let channels = 2 + prng.int_range(0, 31) as usize;
        let latent = random_latent(&mut prng, channels, 8, case % 2 == 0);
        let image = Image::new(32, 32, 1, (0..1024).map(|_| prng.uniform()).collect()).unwrap();
        let scores = ok(channel_scores(&latent, &image))?;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        ties_seen += sorted.windows(2).filter(|w| w[0] == w[1]).count();
        for c in 1..=channels {
            let got = ok(top_c(&scores, c))?.indices;
            let want = brute_force_top(&scores, c);
            check(got == want, || format!("latent {case}, C={c}: {got:?} != oracle {want:?}"))?;
        }
    }
    check(ties_seen > 0, || "no tied scores were exercised".into())?;
    let explicit = ok(top_c(&[0.5, 0.9, 0.5, 0.9, 0.1], 3))?.indices;
    check(explicit == [0, 1, 3], || format!("tie case picked {explicit:?}"))?;

    let latent = random_latent(&mut prng, 16, 8, false);
    let counts: Vec<Vec<u64>> = (0..16).map(|_| (0..15).map(|_| 1 + prng.int_range(0, 50) as u64).collect()).collect();
    let model = ok(EntropyModel::from_counts(7, counts))?;
    let image = Image::new(32, 32, 1, (0..1024).map(|_| prng.uniform()).collect()).unwrap();
    let scores = ok(channel_scores(&latent, &image))?;
    let mut bits = vec![0u64];
    for c in 1..=16 {
        let sel = ok(top_c(&scores, c))?;
        bits.push(8 * ok(encode_payload(&latent, &sel.indices, &model))?.len() as u64);
    }
    check(bits.windows(2).all(|w| w[0] < w[1]), || format!("payload bits not increasing: {bits:?}"))?;
    Ok(format!("1000 latents match oracle ({ties_seen} tied pairs); payload bits {bits:?}"))
}

// 8 ---------------------------------------------------------------------------

fn theory_arithmetic() -> Outcome {
    let mut prng = Prng::new(808);
    for (w, h) in [(1, 1), (32, 32), (7, 5), (64, 48), (3, 128)] {
        let img = Image::new(w, h, 1, (0..w * h).map(|_| prng.uniform()).collect()).unwrap();
        let hx = ok(image_entropy(&img, ImportanceMode::Uniform))?;
        let want = ((w * h) as f64).log2();
        check(hx == want, || format!("{w}x{h}: uniform entropy {hx} != log2 {want}"))?;
    }
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let hx = 12.0 * prng.uniform();
        let hxh = 12.0 * prng.uniform();
        let bits = 1e4 * prng.uniform();
        let rate = 1e4 * prng.uniform();
        let alpha = prng.uniform_range(0.0, 5.0);
        let beta = prng.uniform_range(0.0, 0.1);
        let a = lagrangian(hx, hxh, bits, rate, alpha, beta, 0.0);
        let b = rd_objective_theory(hx, hxh, bits, alpha, beta);
        worst = worst.max((a - b).abs());
    }
    check(worst <= 1e-12, || format!("lagrangian(λ=0) differs from objective by {worst:.2e}"))?;
    let mut flagged = 0;
    for _ in 0..200 {
        let points: Vec<SweepPoint> = (0..6)
            .map(|c| SweepPoint {
                c,
                hx: 10.0,
                hx_hat: 10.0 * prng.uniform(),
                bits: 100.0 * c as f64,
                rate: 10.0 * prng.uniform(),
            })
            .collect();
        let report = ok(stationarity_report(&points, 1.0, 0.01, 0.1))?;
        for r in &report.rows {
            let want = r.point.rate < r.point.hx_hat;
            check(r.infeasible == want, || format!("row C={} infeasible={} expected {want}", r.point.c, r.infeasible))?;
            flagged += want as usize;
        }
    }
    Ok(format!("uniform entropy exact; λ=0 max diff {worst:.1e}; {flagged} infeasible rows flagged"))
}

// 9 ---------------------------------------------------------------------------

/// SSIM straight from the definition with two-pass moments, C1 = (0.01)²,
/// C2 = (0.03)², one window over the whole map.
fn ssim_definition(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / n;
    let cxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let (c1, c2) = (1e-4, 9e-4);
    let luminance = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    let structure = (2.0 * cxy + c2) / (vx + vy + c2);
    luminance * structure
}

fn ssim_checks() -> Outcome {
    let mut prng = Prng::new(909);
    let (mut self_err, mut sym_err, mut oracle_err) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..1000 {
        let n = 1 + prng.int_range(0, 1024) as usize;
        let x: Vec<f64> = (0..n).map(|_| prng.uniform()).collect();
        let y: Vec<f64> = if case % 3 == 0 {
            x.iter().map(|v| (0.7 * v + 0.3 * prng.uniform()).clamp(0.0, 1.0)).collect()
        } else {
            (0..n).map(|_| prng.uniform()).collect()
        };
        self_err = self_err.max((ok(ssim_maps(&x, &x))? - 1.0).abs());
        let xy = ok(ssim_maps(&x, &y))?;
        sym_err = sym_err.max((xy - ok(ssim_maps(&y, &x))?).abs());
        oracle_err = oracle_err.max((xy - ssim_definition(&x, &y)).abs());
    }
    check(self_err <= 1e-9, || format!("ssim(x,x) off by {self_err:.2e}"))?;
    check(sym_err <= 1e-12, || format!("asymmetry {sym_err:.2e}"))?;
    check(oracle_err <= 1e-10, || format!("oracle mismatch {oracle_err:.2e}"))?;
    Ok(format!("self {self_err:.1e}, symmetry {sym_err:.1e}, oracle {oracle_err:.1e}"))
}

// 10 --------------------------------------------------------------------------

fn end_to_end_trend() -> Outcome {
    let cfg = Config::default();
    let exec = Exec::default();
    let start = Instant::now();
    let scene = ok(cfg.scene())?;
    let train = ok(generate_corpus(&scene, cfg.corpus_size, cfg.stream_seed(Stream::TrainCorpus), exec))?;
    let held = ok(generate_corpus(&scene, 200, cfg.stream_seed(Stream::HeldoutCorpus), exec))?;
    let codec = ok(train_codec_bundle(&train, &cfg, exec))?;
    let base = ok(train_base_flow(&train, &cfg, exec, |_, _| {}))?;
    let mut bank = FlowBank::new();
    for c in [1, 4] {
        bank.insert(c, ok(train_control_flow(&base, &train, &codec.params, c, &cfg, exec, |_, _| {}))?);
    }
    bank.insert(0, base);
    let trained = start.elapsed();
    let settings = SweepSettings {
        weights: ok(cfg.weights())?,
        sampler: ok(cfg.sampler())?,
        importance: cfg.theory_importance,
    };
    let table = ok(rd_sweep(&held, &codec, &bank, &[0, 1, 4], &settings, exec))?;
    let m = table.means();
    let summary = format!(
        "v_distance C=0 {:.4}, C=1 {:.4}, C=4 {:.4}; bpp {:.4} < {:.4} < {:.4}; training {:.0}s",
        m[0].v_distance,
        m[1].v_distance,
        m[2].v_distance,
        m[0].bpp,
        m[1].bpp,
        m[2].bpp,
        trained.as_secs_f64()
    );
    check(trained <= Duration::from_secs(30 * 60), || format!("training budget exceeded: {summary}"))?;
    check(m[0].bpp < m[1].bpp && m[1].bpp < m[2].bpp, || format!("bpp not increasing: {summary}"))?;
    check(
        m[2].v_distance <= m[1].v_distance && m[1].v_distance <= m[0].v_distance,
        || format!("v_distance ordering violated: {summary}"),
    )?;
    Ok(summary)
}

// 11 --------------------------------------------------------------------------

fn path_moments() -> Outcome {
    let mut prng = Prng::new(1111);
    let z1: Vec<f64> = (0..6).map(|_| 2.0 * prng.normal()).collect();
    let t = 0.3;
    let draws = 100_000;
    let mut sum = vec![0.0; z1.len()];
    let mut sq = vec![0.0; z1.len()];
    for _ in 0..draws {
        let (zt, _) = interpolate(&z1, t, &mut prng);
        for i in 0..zt.len() {
            sum[i] += zt[i];
            sq[i] += zt[i] * zt[i];
        }
    }
    let (mut mean_err, mut var_err) = (0.0f64, 0.0f64);
    for i in 0..z1.len() {
        let mean = sum[i] / draws as f64;
        let var = sq[i] / draws as f64 - mean * mean;
        mean_err = mean_err.max((mean - t * z1[i]).abs());
        var_err = var_err.max((var - 0.49).abs());
    }
    check(mean_err <= 0.01, || format!("mean off by {mean_err:.4}"))?;
    check(var_err <= 0.02, || format!("variance off by {var_err:.4}"))?;
    Ok(format!("mean err {mean_err:.4}, variance err {var_err:.4}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("zero-init identity", zero_init_identity),
        ("CFM gradient check", cfm_gradients),
        ("Euler sampler exactness", euler_exactness),
        ("marginal vector field", marginal_field),
        ("range coder bound", range_coder_bound),
        ("bitstream fuzz", bitstream_fuzz),
        ("channel selection", channel_selection),
        ("theory arithmetic", theory_arithmetic),
        ("SSIM", ssim_checks),
        ("end-to-end trend", end_to_end_trend),
        ("marginal path moments", path_moments),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
