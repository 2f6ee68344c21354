use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use gsc_core::bitstream::ModelRegistry;
use gsc_core::codec::CodecBundle;
use gsc_core::config::{Config, Stream};
use gsc_core::eval::{psnr, v_distance, vision_analyze, DEFAULT_THRESHOLD};
use gsc_core::flow::{FlowNet, Phase};
use gsc_core::image::Image;
use gsc_core::modelfile::ModelFile;
use gsc_core::pipeline::{decode_stream, encode_image, train_base_flow, train_codec_bundle, train_control_flow, FlowBank};
use gsc_core::scene::{generate_corpus, read_corpus, write_corpus, CorpusRecord};
use gsc_core::select::ssim;
use gsc_core::sweep::{rd_sweep, SweepSettings};
use gsc_core::{Exec, GscError};

#[derive(Parser, Debug)]
#[command(name = "gsc", version, about = "Caption + selected-channel image coding with a flow decoder")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory (overrides `paths.out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training and held-out corpora
    GenCorpus,
    /// Train the analysis/synthesis transforms and fit the entropy model
    TrainCodec,
    /// Train the caption-conditioned base model or a control branch
    TrainFlow {
        #[arg(long, value_parser = parse_phase)]
        phase: Phase,
        /// Channel count the control branch is trained for
        #[arg(long = "C")]
        c: Option<usize>,
    },
    /// Write a GSC1 stream for one image
    Encode {
        /// Held-out corpus record to encode
        #[arg(long, conflicts_with = "input")]
        index: Option<usize>,
        /// Image file (PGM, with optional raw sidecar)
        #[arg(long, requires = "caption")]
        input: Option<PathBuf>,
        #[arg(long)]
        caption: Option<String>,
        #[arg(long = "C")]
        c: usize,
        /// Stream path; defaults to <out>/stream.gsc
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Reconstruct an image from a GSC1 stream
    Decode {
        #[arg(long)]
        stream: PathBuf,
        /// Image path; defaults to the stream path with a .pgm extension
        #[arg(long)]
        output: Option<PathBuf>,
        /// Original image for metrics
        #[arg(long, conflicts_with = "index")]
        reference: Option<PathBuf>,
        /// Held-out record used as the metric reference
        #[arg(long)]
        index: Option<usize>,
    },
    /// Encode and decode the held-out corpus at every channel count
    RdSweep {
        /// Comma-separated channel counts (defaults to selection.c_list)
        #[arg(long = "C", value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Only the first N held-out records
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Entropy / Lagrangian analysis over the sweep
    TheoryReport {
        #[arg(long = "C", value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    s.parse().map_err(|e: GscError| e.to_string())
}

/// Exit status plus message.
struct Failure {
    code: u8,
    message: String,
}

const BAD_ARGS: u8 = 2;
const MISSING_ARTIFACT: u8 = 3;
const CORRUPT_STREAM: u8 = 4;
const TRAINING_DIVERGED: u8 = 5;

fn exit_code(e: &GscError) -> u8 {
    match e {
        GscError::InvalidArgument(_) | GscError::DimensionMismatch { .. } | GscError::PhaseOrder(_) => BAD_ARGS,
        GscError::MissingModel(_) => MISSING_ARTIFACT,
        GscError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => MISSING_ARTIFACT,
        GscError::BadMagic { .. }
        | GscError::UnsupportedVersion(_)
        | GscError::DigestMismatch(_)
        | GscError::Corrupt(_)
        | GscError::Truncated(_)
        | GscError::SymbolOutOfAlphabet { .. }
        | GscError::Utf8(_) => CORRUPT_STREAM,
        GscError::TrainingDiverged(_) => TRAINING_DIVERGED,
        GscError::AtChannelCount { source, .. } => exit_code(source),
        GscError::Generation(_) | GscError::Io { .. } => 1,
    }
}

fn fail(e: GscError) -> Failure {
    Failure {
        code: exit_code(&e),
        message: e.to_string(),
    }
}

/// Attaches the file name to errors that do not already carry it.
fn at(path: &Path) -> impl Fn(GscError) -> Failure + '_ {
    move |e| match e {
        GscError::Io { .. } => fail(e),
        other => Failure {
            code: exit_code(&other),
            message: format!("{}: {other}", path.display()),
        },
    }
}

struct Ctx {
    cfg: Config,
    out: PathBuf,
    exec: Exec,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn corpus(&self, name: &str) -> Result<Vec<CorpusRecord>, Failure> {
        let p = self.path(name);
        read_corpus(&p).map_err(at(&p))
    }

    fn codec(&self) -> Result<CodecBundle, Failure> {
        let p = self.path("codec.gscm");
        ModelFile::load(&p)
            .and_then(|m| CodecBundle::from_model_file(&m))
            .map_err(at(&p))
    }

    fn flow_path(&self, c: usize) -> PathBuf {
        if c == 0 {
            self.path("flow_base.gscm")
        } else {
            self.path(&format!("flow_c{c}.gscm"))
        }
    }

    fn flow(&self, c: usize) -> Result<FlowNet, Failure> {
        let p = self.flow_path(c);
        let net = ModelFile::load(&p)
            .and_then(|m| FlowNet::from_model_file(&m))
            .map_err(at(&p))?;
        let has_control = net.control.is_some();
        if has_control != (c > 0) {
            return Err(Failure {
                code: CORRUPT_STREAM,
                message: format!("{}: model does not match C={c}", p.display()),
            });
        }
        Ok(net)
    }

    fn bank(&self, counts: &[usize]) -> Result<FlowBank, Failure> {
        let mut bank = FlowBank::new();
        for &c in counts {
            bank.insert(c, self.flow(c)?);
        }
        Ok(bank)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), Failure> {
        std::fs::write(path, bytes).map_err(|e| fail(GscError::Io {
            path: path.to_path_buf(),
            source: e,
        }))
    }
}

fn progress(what: &'static str) -> impl FnMut(usize, f64) {
    move |step, loss| {
        if step % 50 == 0 {
            info!("{what} step {step}: loss {loss:.5}");
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(fail)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.paths_out.clone());
    std::fs::create_dir_all(&out).map_err(|e| fail(GscError::Io {
        path: out.clone(),
        source: e,
    }))?;
    let ctx = Ctx {
        cfg,
        out,
        exec: Exec::default(),
    };
    let cfg = &ctx.cfg;
    match cli.command {
        Command::GenCorpus => {
            let scene = cfg.scene().map_err(fail)?;
            for (name, n, stream) in [
                ("corpus.gscc", cfg.corpus_size, Stream::TrainCorpus),
                ("heldout.gscc", cfg.corpus_heldout, Stream::HeldoutCorpus),
            ] {
                let records = generate_corpus(&scene, n, cfg.stream_seed(stream), ctx.exec).map_err(fail)?;
                let p = ctx.path(name);
                write_corpus(&records, &p).map_err(at(&p))?;
                println!("wrote {} records to {}", records.len(), p.display());
            }
        }
        Command::TrainCodec => {
            let records = ctx.corpus("corpus.gscc")?;
            let bundle = train_codec_bundle(&records, cfg, ctx.exec).map_err(fail)?;
            let p = ctx.path("codec.gscm");
            bundle.to_model_file().save(&p).map_err(at(&p))?;
            println!(
                "wrote {} (entropy model {})",
                p.display(),
                gsc_core::bitstream::digest_hex(&bundle.entropy.digest())
            );
        }
        Command::TrainFlow { phase, c } => {
            let records = ctx.corpus("corpus.gscc")?;
            let (net, c) = match phase {
                Phase::Base => {
                    if c.is_some_and(|c| c != 0) {
                        return Err(fail(GscError::InvalidArgument("--C must be 0 or absent for the base phase".into())));
                    }
                    (train_base_flow(&records, cfg, ctx.exec, progress("base")).map_err(fail)?, 0)
                }
                Phase::Control => {
                    let c = c.ok_or_else(|| fail(GscError::InvalidArgument("--C is required for the control phase".into())))?;
                    let codec = ctx.codec()?;
                    if c == 0 || c > codec.params.channels {
                        return Err(fail(GscError::InvalidArgument(format!(
                            "--C {c} outside 1..={}",
                            codec.params.channels
                        ))));
                    }
                    let base = ctx.flow(0)?;
                    let net = train_control_flow(&base, &records, &codec.params, c, cfg, ctx.exec, progress("control"))
                        .map_err(fail)?;
                    (net, c)
                }
            };
            let p = ctx.flow_path(c);
            net.to_model_file().save(&p).map_err(at(&p))?;
            println!("wrote {}", p.display());
        }
        Command::Encode {
            index,
            input,
            caption,
            c,
            output,
        } => {
            let (image, caption) = match (index, input) {
                (Some(i), None) => {
                    let records = ctx.corpus("heldout.gscc")?;
                    let r = records.get(i).ok_or_else(|| {
                        fail(GscError::InvalidArgument(format!(
                            "--index {i} outside held-out corpus of {}",
                            records.len()
                        )))
                    })?;
                    (r.image.clone(), r.caption.0.clone())
                }
                (None, Some(p)) => (Image::load(&p).map_err(at(&p))?, caption.unwrap_or_default()),
                _ => return Err(fail(GscError::InvalidArgument("give either --index or --input".into()))),
            };
            let codec = ctx.codec()?;
            let enc = encode_image(&image, &caption, c, &codec).map_err(fail)?;
            let p = output.unwrap_or_else(|| ctx.path("stream.gsc"));
            ctx.write(&p, &enc.bytes)?;
            println!(
                "wrote {} ({} bytes, C={}, channels {:?}) bpp={}",
                p.display(),
                enc.bytes.len(),
                c,
                enc.selection.indices,
                enc.bpp
            );
        }
        Command::Decode {
            stream,
            output,
            reference,
            index,
        } => {
            let bytes = std::fs::read(&stream).map_err(|e| fail(GscError::Io {
                path: stream.clone(),
                source: e,
            }))?;
            let codec = ctx.codec()?;
            let registry = ModelRegistry::new().with(codec.entropy.clone());
            let header = gsc_core::bitstream::unpack(&bytes, &registry).map_err(at(&stream))?.header;
            let bank = ctx.bank(&[header.selected_count()])?;
            let dec = decode_stream(&bytes, &registry, &bank, &cfg.sampler().map_err(fail)?).map_err(at(&stream))?;
            let p = output.unwrap_or_else(|| stream.with_extension("pgm"));
            dec.image.save(&p).map_err(at(&p))?;
            let bpp = dec.total_bits as f64 / (dec.image.width * dec.image.height) as f64;
            let found = vision_analyze(&dec.image, DEFAULT_THRESHOLD);
            println!("wrote {}", p.display());
            println!("caption: {}", dec.caption);
            println!("C={} bpp={} components={}", header.selected_count(), bpp, found.count());
            let reference = match (reference, index) {
                (Some(r), _) => Some(Image::load(&r).map_err(at(&r))?),
                (None, Some(i)) => {
                    let records = ctx.corpus("heldout.gscc")?;
                    Some(records.get(i).map(|r| r.image.clone()).ok_or_else(|| {
                        fail(GscError::InvalidArgument(format!("--index {i} outside held-out corpus")))
                    })?)
                }
                _ => None,
            };
            if let Some(r) = reference {
                let r = r.to_grayscale();
                let truth = vision_analyze(&r, DEFAULT_THRESHOLD);
                println!(
                    "psnr_db={} ssim={} v_distance={}",
                    psnr(&r, &dec.image).map_err(fail)?,
                    ssim(&r, &dec.image).map_err(fail)?,
                    v_distance(&truth, &found, truth.diagonal())
                );
            }
        }
        command @ (Command::RdSweep { .. } | Command::TheoryReport { .. }) => {
            let is_theory = matches!(command, Command::TheoryReport { .. });
            let (Command::RdSweep { counts, limit } | Command::TheoryReport { counts, limit }) = command else {
                unreachable!()
            };
            let theory = is_theory;
            let counts = counts.unwrap_or_else(|| cfg.selection_c_list.clone());
            let mut records = ctx.corpus("heldout.gscc")?;
            if let Some(n) = limit {
                records.truncate(n);
            }
            let codec = ctx.codec()?;
            let bank = ctx.bank(&counts)?;
            let settings = SweepSettings {
                weights: cfg.weights().map_err(fail)?,
                sampler: cfg.sampler().map_err(fail)?,
                importance: cfg.theory_importance,
            };
            let table = rd_sweep(&records, &codec, &bank, &counts, &settings, ctx.exec).map_err(fail)?;
            if theory {
                let report = table
                    .theory_report(cfg.selection_alpha, cfg.selection_beta, cfg.theory_lambda)
                    .map_err(fail)?;
                let csv = ctx.path("theory.csv");
                ctx.write(&csv, report.to_csv().as_bytes())?;
                let txt = ctx.path("theory.txt");
                ctx.write(&txt, report.summary().as_bytes())?;
                print!("{}", report.summary());
                println!("wrote {} and {}", csv.display(), txt.display());
            } else {
                let p = ctx.path("rd_sweep.csv");
                ctx.write(&p, table.to_csv().as_bytes())?;
                for m in table.means() {
                    println!(
                        "C={:<3} bpp={:.5} psnr_db={:.3} ssim={:.4} v_distance={:.4}",
                        m.c, m.bpp, m.psnr_db, m.ssim, m.v_distance
                    );
                }
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn init_logging() {
    let level = match std::env::var("GSC_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
