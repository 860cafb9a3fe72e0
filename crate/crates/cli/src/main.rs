//! `zoomkit`: command-line access to every stage of the zoom toolkit.
//!
//! Images go to files and results go to stdout. Exit status is 0 on
//! success, 1 on a usage error and 2 when the data cannot be processed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use zoomkit_core::align::{ecc_align, match_fov, EccConfig};
use zoomkit_core::cobi::{
    cobi_loss, cobi_objective, cx_loss, match_statistics, CobiConfig, MatchResult,
};
use zoomkit_core::dataset::{prepare_dataset, PrepareConfig, DEFAULT_TOLERANCE};
use zoomkit_core::features::{extract_patch_features, load_feature_map, mean_shift_pair, FeatureSet, PatchConfig};
use zoomkit_core::imageio::{read_image, read_raw, read_ztf, read_ztf_header, sidecar_path, write_image, write_raw, write_ztf, BitDepth};
use zoomkit_core::metrics::{crop_border, psnr, ssim, SsimConfig};
use zoomkit_core::optimize::{optimize_image, Init, LossKind, OptimizeConfig};
use zoomkit_core::raw_pipeline::{normalize_raw, pack_bayer};
use zoomkit_core::sensor_synth::{add_gaussian_noise_with_sigma, mosaic_rgb, NoiseConfig};
use zoomkit_core::resample::resize_bicubic;
use zoomkit_core::{BayerMosaic, Cfa, Error, ImageBuffer, RawMetadata};

#[derive(Parser)]
#[command(name = "zoomkit", version, about = "Raw zoom preprocessing, alignment and contextual losses")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print results as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw mosaic and pack it into a [H/2, W/2, 4] ZTF tensor.
    Pack {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a noisy raw capture from a high-resolution sRGB image.
    Synth {
        #[arg(long)]
        hr: PathBuf,
        #[arg(long, default_value_t = 4)]
        zoom: usize,
        #[arg(long, default_value = "rggb")]
        cfa: Cfa,
        #[arg(long, default_value_t = 1e-4)]
        sigma_min: f32,
        #[arg(long, default_value_t = 1e-2)]
        sigma_max: f32,
        /// Focal length recorded in the sidecar.
        #[arg(long, default_value_t = 24.0)]
        focal: f32,
        /// Output PGM; the sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the Euclidean motion taking --src onto --dst.
    Align {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
    },
    /// Crop a wide capture to the field of view of a longer focal length.
    FovMatch {
        /// A PPM/PGM image, or a raw PGM with a sidecar.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        f_in: f64,
        #[arg(long)]
        f_gt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the CX or CoBi loss between two images.
    Loss {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long = "type", value_enum, default_value_t = LossType::Cobi)]
        kind: LossType,
        /// Deep feature maps of the source, one ZTF per layer.
        #[arg(long, value_delimiter = ',')]
        deep_src: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        deep_tgt: Vec<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Write the per-feature matches as JSON.
        #[arg(long)]
        dump_matches: Option<PathBuf>,
    },
    /// Unique-match statistics of CX and CoBi on the same pair.
    MatchStats {
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Optimize an image directly against a target.
    Optimize {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = OptLoss::Cobi)]
        loss: OptLoss,
        #[arg(long, default_value_t = 0.5)]
        ws: f64,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        mean_shift: bool,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long = "start", value_enum, default_value_t = StartKind::Bicubic)]
        start: StartKind,
        #[arg(long)]
        out: PathBuf,
        /// CSV trace with columns step,loss.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// PSNR and SSIM between two images.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Pixels excluded from every edge before scoring.
        #[arg(long, default_value_t = 0)]
        border: usize,
        #[arg(long, default_value_t = 1.0)]
        data_range: f64,
    },
    /// Build aligned training pairs from a directory of scenes.
    DatasetPrep {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value_t = 4)]
        zoom: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// Print the dimensions stored in a ZTF header.
    ZtfInfo { path: PathBuf },
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    ws: f64,
    /// Patch side for RGB features.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    mean_shift: bool,
}

impl PairArgs {
    fn config(&self) -> CobiConfig {
        CobiConfig {
            w_s: self.ws,
            patch: PatchConfig::new(self.n, self.stride),
            mean_shift: self.mean_shift,
            ..CobiConfig::default()
        }
    }

    fn features(&self) -> Result<(ImageBuffer, ImageBuffer, FeatureSet, FeatureSet), Error> {
        let (a, b) = (read_image(&self.src)?, read_image(&self.tgt)?);
        let cfg = self.config();
        cfg.validate()?;
        let p = extract_patch_features(&a, cfg.patch)?;
        let q = extract_patch_features(&b, cfg.patch)?;
        let (p, q) = if cfg.mean_shift { mean_shift_pair(&p, &q)? } else { (p, q) };
        Ok((a, b, p, q))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossType {
    Cx,
    Cobi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptLoss {
    L1,
    Cx,
    Cobi,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StartKind {
    Bicubic,
    Copy,
    Noise,
}

/// Output of one command: a JSON value, optionally with a plain-text form.
struct Report {
    value: Value,
    always_json: bool,
}

impl Report {
    fn new(value: Value) -> Self {
        Self { value, always_json: false }
    }

    fn json(value: Value) -> Self {
        Self { value, always_json: true }
    }

    fn render(&self, json: bool) -> String {
        if json || self.always_json {
            return self.value.to_string();
        }
        let mut out = String::new();
        if let Value::Object(map) = &self.value {
            for (k, v) in map {
                let _ = match v {
                    Value::String(s) => writeln!(out, "{k}: {s}"),
                    other => writeln!(out, "{k}: {other}"),
                };
            }
        }
        out.trim_end().to_string()
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn write_json(path: &Path, value: &Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn finite_or_inf(v: f64) -> Value {
    if v.is_infinite() {
        json!("inf")
    } else {
        json!(v)
    }
}

fn run(cli: &Cli) -> Result<Report, Error> {
    match &cli.command {
        Command::Pack { raw, out } => {
            let m = read_raw(raw)?;
            let packed = pack_bayer(&normalize_raw(&m));
            let tensor = packed.to_tensor();
            write_ztf(&tensor, out)?;
            Ok(Report::new(json!({ "dims": tensor.dims(), "cfa": m.cfa().as_str() })))
        }
        Command::Synth { hr, zoom, cfa, sigma_min, sigma_max, focal, out } => {
            let img = read_image(hr)?;
            if !matches!(zoom, 2 | 4 | 8) {
                return Err(Error::InvalidArgument(format!("zoom must be 2, 4 or 8, got {zoom}")));
            }
            let (h, w) = (img.height(), img.width());
            if h % (2 * zoom) != 0 || w % (2 * zoom) != 0 {
                return Err(Error::Shape(format!("{h}x{w} is not divisible by {}", 2 * zoom)));
            }
            let low = resize_bicubic(&img, 1.0 / *zoom as f64)?;
            let mosaic = mosaic_rgb(&low, *cfa)?;
            let noise = NoiseConfig { sigma_min: *sigma_min, sigma_max: *sigma_max, seed: cli.seed };
            let (noisy, sigma) = add_gaussian_noise_with_sigma(&mosaic, &noise)?;
            let meta = RawMetadata { black_level: 0.0, white_level: 65535.0, focal_mm: *focal, ..RawMetadata::normalized(*cfa) };
            let scaled = BayerMosaic::new(
                noisy.height(),
                noisy.width(),
                noisy.data().iter().map(|v| v * 65535.0).collect(),
                meta,
            )?;
            write_raw(&scaled, out)?;
            Ok(Report::new(json!({
                "height": scaled.height(),
                "width": scaled.width(),
                "cfa": cfa.as_str(),
                "sigma": sigma,
                "sidecar": sidecar_path(out),
            })))
        }
        Command::Align { src, dst, out, levels, iters } => {
            let cfg = EccConfig { pyramid_levels: *levels, max_iters_per_level: *iters, ..EccConfig::default() };
            let a = ecc_align(&read_image(src)?, &read_image(dst)?, &cfg)?;
            let value = json!({
                "theta": a.transform.theta,
                "tx": a.transform.tx,
                "ty": a.transform.ty,
                "ecc": a.ecc,
            });
            if let Some(path) = out {
                write_json(path, &value)?;
            }
            Ok(Report::json(value))
        }
        Command::FovMatch { input, f_in, f_gt, out } => {
            let (h, w) = if sidecar_path(input).is_file() {
                let m = match_fov(&read_raw(input)?, *f_in, *f_gt)?;
                write_raw(&m, out)?;
                (m.height(), m.width())
            } else {
                let img = read_image(input)?;
                let c = match_fov(&img, *f_in, *f_gt)?;
                let depth = if img.space() == zoomkit_core::ColorSpace::Srgb { BitDepth::Eight } else { BitDepth::Sixteen };
                write_image(&c, out, depth)?;
                (c.height(), c.width())
            };
            Ok(Report::new(json!({ "height": h, "width": w })))
        }
        Command::Loss { pair, kind, deep_src, deep_tgt, lambda, dump_matches } => {
            let (a, b, p, q) = pair.features()?;
            let (loss, m): (f64, MatchResult) = match kind {
                LossType::Cx => cx_loss(&p, &q)?,
                LossType::Cobi => cobi_loss(&p, &q, pair.ws)?,
            };
            let stats = match_statistics(&m, q.len());
            let mut value = json!({ "loss": loss, "unique_fraction": stats.unique_fraction });
            if !deep_src.is_empty() || !deep_tgt.is_empty() {
                let load = |paths: &[PathBuf]| -> Result<Vec<FeatureSet>, Error> {
                    paths
                        .iter()
                        .map(|p| {
                            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                            load_feature_map(&read_ztf(p)?, &name)
                        })
                        .collect()
                };
                let cfg = CobiConfig { lambda: *lambda, ..pair.config() };
                value["objective"] = json!(cobi_objective(&a, &b, &load(deep_src)?, &load(deep_tgt)?, &cfg)?);
            }
            if let Some(path) = dump_matches {
                write_json(path, &to_value(&m))?;
            }
            Ok(Report::new(value))
        }
        Command::MatchStats { pair } => {
            let (_, _, p, q) = pair.features()?;
            let cx = match_statistics(&cx_loss(&p, &q)?.1, q.len());
            let cobi = match_statistics(&cobi_loss(&p, &q, pair.ws)?.1, q.len());
            Ok(Report::new(json!({ "cx": to_value(&cx), "cobi": to_value(&cobi) })))
        }
        Command::Optimize { init, target, loss, ws, n, stride, mean_shift, steps, lr, start, out, trace } => {
            let cfg = OptimizeConfig {
                steps: *steps,
                step_size: *lr,
                loss: match loss {
                    OptLoss::L1 => LossKind::L1,
                    OptLoss::Cx => LossKind::Cx,
                    OptLoss::Cobi => LossKind::Cobi,
                },
                cobi: CobiConfig {
                    w_s: *ws,
                    patch: PatchConfig::new(*n, *stride),
                    mean_shift: *mean_shift,
                    ..CobiConfig::default()
                },
                seed: cli.seed,
                init: match start {
                    StartKind::Bicubic => Init::BicubicUpsample,
                    StartKind::Copy => Init::Copy,
                    StartKind::Noise => Init::Noise,
                },
                ..OptimizeConfig::default()
            };
            let target_img = read_image(target)?;
            let result = optimize_image(&read_image(init)?, &target_img, &cfg);
            let (img, points) = match result {
                Ok(r) => r,
                Err(Error::Diverged { step, trace: points }) => {
                    if let Some(path) = trace {
                        write_trace(path, &points)?;
                    }
                    return Err(Error::Diverged { step, trace: points });
                }
                Err(e) => return Err(e),
            };
            write_image(&img, out, BitDepth::Eight)?;
            if let Some(path) = trace {
                write_trace(path, &points)?;
            }
            let first = points.first().map(|p| p.loss).unwrap_or(f64::NAN);
            let last = points.last().map(|p| p.loss).unwrap_or(f64::NAN);
            Ok(Report::new(json!({ "steps": steps, "initial_loss": first, "final_loss": last })))
        }
        Command::Metrics { a, b, border, data_range } => {
            let a = crop_border(&read_image(a)?, *border)?;
            let b = crop_border(&read_image(b)?, *border)?;
            let p = psnr(&a, &b, *data_range)?;
            let s = ssim(&a, &b, &SsimConfig { data_range: *data_range, ..SsimConfig::default() })?;
            Ok(Report::json(json!({ "psnr": finite_or_inf(p), "ssim": s })))
        }
        Command::DatasetPrep { root, zoom, out, tol } => {
            let cfg = PrepareConfig { zoom: *zoom, tolerance: *tol, seed: cli.seed, ..PrepareConfig::default() };
            let manifest = prepare_dataset(root, out, &cfg)?;
            Ok(Report::new(json!({
                "pairs": manifest.pairs.len(),
                "skipped": manifest.skipped.len(),
                "manifest": out.join("manifest.json"),
            })))
        }
        Command::ZtfInfo { path } => {
            let dims = read_ztf_header(path)?;
            Ok(Report::new(json!({ "dims": dims })))
        }
    }
}

fn write_trace(path: &Path, points: &[zoomkit_core::optimize::TracePoint]) -> Result<(), Error> {
    let mut csv = String::from("step,loss\n");
    for p in points {
        let _ = writeln!(csv, "{},{}", p.step, p.loss);
    }
    fs::write(path, csv).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(report) => {
            println!("{}", report.render(cli.json));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
