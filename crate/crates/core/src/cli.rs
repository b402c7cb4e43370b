//! `ciconv` command-line front end.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{shift_metric, write_metrics_csv, MetricRecord, Pipeline};
use crate::ciconv::{
    forward, grad_s, grad_s_finite_difference, sigma_sweep_with, CiConvConfig,
};
use crate::color_model::rgb_to_planes;
use crate::error::{Error, Result};
use crate::illumination::TransformSpec;
use crate::image_io::{encode_map, read_image, DecodeOptions, MapEncoding};
use crate::invariants::{invariant_of_planes, InvariantKind};
use crate::plane::{Plane, RgbImage};
use crate::scale_space::Smoothing;
use crate::verify::{run_suite, SuiteSettings};

pub const THREADS_ENV: &str = "CICONV_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ciconv", version, about = "Color-invariant edge maps and the CIConv layer")]
struct Cli {
    /// Treat inputs as sRGB-encoded and convert them to linear RGB.
    #[arg(long, global = true)]
    linear: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write an invariant map (--sigma) or a CIConv output (--s).
    Transform(TransformArgs),
    /// Run the full CIConv layer.
    Ciconv(CiconvArgs),
    /// Detail/noise trade-off over a list of scales.
    Sweep(SweepArgs),
    /// Run the invariance suite over every image in a directory.
    Verify(VerifyArgs),
    /// Compare the analytic scale gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Histogram shift caused by an illumination change.
    Shift(ShiftArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("scale").required(true).args(["sigma", "s"])))]
struct TransformArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: InvariantKind,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    #[arg(long, default_value = "on", value_parser = parse_smoothing)]
    smoothing: Smoothing,
    /// Store the gradient magnitude instead of its square (invariant maps only).
    #[arg(long)]
    sqrt: bool,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct CiconvArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<InvariantKind>,
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    #[arg(long, value_parser = parse_smoothing)]
    smoothing: Option<Smoothing>,
    /// key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    /// Print μ_S, σ_S and the degenerate flag.
    #[arg(long)]
    stats: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: InvariantKind,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
    sigmas: Vec<f64>,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    input_dir: PathBuf,
    /// key=value overrides of the suite tolerances and fixture settings.
    #[arg(long)]
    tolerances: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: InvariantKind,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value = "on", value_parser = parse_smoothing)]
    smoothing: Smoothing,
    /// Finite-difference step in s.
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    /// Seed of the random upstream gradient.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    max_rel_err: f64,
}

#[derive(Debug, Args)]
struct ShiftArgs {
    input_dir: PathBuf,
    #[arg(long, value_parser = parse_transform)]
    transform: TransformSpec,
    #[arg(long, value_parser = parse_pipeline)]
    pipeline: Pipeline,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<InvariantKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_smoothing(s: &str) -> std::result::Result<Smoothing, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_transform(s: &str) -> std::result::Result<TransformSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pipeline(s: &str) -> std::result::Result<Pipeline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// An error tagged with the processing stage it came from.
#[derive(Debug)]
struct StageError {
    stage: &'static str,
    source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

type CliResult = std::result::Result<i32, StageError>;

/// Parses `argv` (including the program name) and runs one subcommand.
/// Returns the process exit code: 0 on success, 1 on processing failure or a
/// failed check, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return 2;
            }
        },
        Err(_) => 0,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };

    match pool.install(|| execute(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> CliResult {
    let opts = DecodeOptions {
        linearize: cli.linear,
    };
    match &cli.command {
        Command::Transform(a) => cmd_transform(a, opts),
        Command::Ciconv(a) => cmd_ciconv(a, opts),
        Command::Sweep(a) => cmd_sweep(a, opts),
        Command::Verify(a) => cmd_verify(a, opts),
        Command::Gradcheck(a) => cmd_gradcheck(a, opts),
        Command::Shift(a) => cmd_shift(a, opts),
    }
}

fn load(path: &Path, opts: DecodeOptions) -> std::result::Result<RgbImage, StageError> {
    read_image(path, opts).map_err(|source| StageError {
        stage: "decode",
        source: match source {
            Error::Io(e) => Error::invalid_input(format!("{}: {e}", path.display())),
            other => other,
        },
    })
}

fn write_map(path: &Path, map: &Plane) -> std::result::Result<(), StageError> {
    let mode = MapEncoding::from_path(path).stage("encode")?;
    let bytes = encode_map(map, mode).stage("encode")?;
    fs::write(path, bytes).map_err(Error::from).stage("write")
}

fn image_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
                    .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid_input(format!("no .png or .ppm images in {}", dir.display())));
    }
    Ok(paths)
}

fn load_dir(dir: &Path, opts: DecodeOptions) -> std::result::Result<Vec<RgbImage>, StageError> {
    let paths = image_paths(dir).stage("input")?;
    paths.par_iter().map(|p| load(p, opts)).collect()
}

fn cmd_transform(a: &TransformArgs, opts: DecodeOptions) -> CliResult {
    let img = load(&a.input, opts)?;
    let (map, degenerate) = match (a.sigma, a.s) {
        (Some(sigma), _) => {
            let planes = rgb_to_planes(&img).stage("color_model")?;
            let inv = invariant_of_planes(&planes, a.kind, sigma, a.smoothing, crate::invariants::DEFAULT_EPS_DIV)
                .stage("invariant")?;
            let degenerate = inv.map.max() <= inv.map.min();
            let map = if a.sqrt { inv.magnitude() } else { inv.map };
            (map, degenerate)
        }
        (None, Some(s)) => {
            let cfg = CiConvConfig {
                smoothing: a.smoothing,
                ..CiConvConfig::new(a.kind, s)
            };
            let out = forward(&img, &cfg).stage("ciconv")?;
            (out.map, out.degenerate)
        }
        (None, None) => unreachable!("clap requires --sigma or --s"),
    };
    if degenerate {
        eprintln!("warning: degenerate sample (constant map) in {}", a.input.display());
    }
    write_map(&a.output, &map)?;
    Ok(0)
}

fn cmd_ciconv(a: &CiconvArgs, opts: DecodeOptions) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(Error::from).stage("config")?;
            CiConvConfig::from_kv_str(&text).stage("config")?
        }
        None => CiConvConfig::default(),
    };
    if let Some(kind) = a.kind {
        cfg.kind = kind;
    }
    if let Some(s) = a.s {
        cfg.s = s;
    }
    if let Some(sm) = a.smoothing {
        cfg.smoothing = sm;
    }
    cfg.validate().stage("config")?;
    let img = load(&a.input, opts)?;
    let out = forward(&img, &cfg).stage("ciconv")?;
    if out.degenerate {
        eprintln!("warning: degenerate sample (constant log map) in {}", a.input.display());
    }
    if a.stats {
        println!("mu_s={}", out.mu_s);
        println!("sigma_s={}", out.sigma_s);
        println!("degenerate={}", out.degenerate);
    }
    write_map(&a.output, &out.map)?;
    Ok(0)
}

fn cmd_sweep(a: &SweepArgs, opts: DecodeOptions) -> CliResult {
    let img = load(&a.input, opts)?;
    let points = sigma_sweep_with(&img, &CiConvConfig::new(a.kind, 0.0), &a.sigmas).stage("sweep")?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let rows = std::iter::once(["sigma".to_string(), "detail_metric".into(), "noise_metric".into()])
            .chain(points.iter().map(|p| [p.sigma.to_string(), p.detail.to_string(), p.noise.to_string()]));
        for row in rows {
            w.write_record(&row).map_err(crate::analysis::csv_err).stage("encode")?;
        }
        w.flush().map_err(Error::from).stage("encode")?;
    }
    fs::write(&a.output, buf).map_err(Error::from).stage("write")?;
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs, opts: DecodeOptions) -> CliResult {
    let mut settings = SuiteSettings::default();
    if let Some(path) = &a.tolerances {
        let text = fs::read_to_string(path).map_err(Error::from).stage("config")?;
        settings.apply_overrides(&text).stage("config")?;
    }
    let images = load_dir(&a.input_dir, opts)?;
    let report = run_suite(&images, &settings).stage("verify")?;
    print!("{report}");
    if report.all_passed() {
        println!("all {} cells match the expected invariance pattern", report.cells.len());
        Ok(0)
    } else {
        let failed = report.cells.iter().filter(|c| !c.passed).count();
        println!("{failed} cell(s) do not match the expected invariance pattern");
        Ok(1)
    }
}

/// Seeded upstream gradient with entries in `[-0.5, 0.5)`.
pub fn random_upstream(width: usize, height: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Plane::from_fn(width, height, |_, _| rng.random::<f64>() - 0.5)
}

fn cmd_gradcheck(a: &GradcheckArgs, opts: DecodeOptions) -> CliResult {
    let img = load(&a.input, opts)?;
    let cfg = CiConvConfig {
        smoothing: a.smoothing,
        ..CiConvConfig::new(a.kind, a.s)
    };
    let upstream = random_upstream(img.width(), img.height(), a.seed);
    let analytic = grad_s(&img, &cfg, &upstream).stage("grad_s")?;
    let numeric = grad_s_finite_difference(&img, &cfg, &upstream, a.step).stage("finite_difference")?;
    let scale = analytic.abs().max(numeric.abs());
    let rel = if scale > 0.0 { (analytic - numeric).abs() / scale } else { 0.0 };
    println!("kind={} s={} sigma={}", cfg.kind, cfg.s, cfg.sigma());
    println!("analytic={analytic:.12e}");
    println!("numeric={numeric:.12e}");
    println!("relative_error={rel:.3e}");
    if rel < a.max_rel_err {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL (tolerance {:.1e})", a.max_rel_err);
        Ok(1)
    }
}

fn cmd_shift(a: &ShiftArgs, opts: DecodeOptions) -> CliResult {
    let images = load_dir(&a.input_dir, opts)?;
    let value = shift_metric(&images, &a.transform, &a.pipeline).stage("shift")?;
    let record = MetricRecord {
        metric: "histogram_shift_l2".into(),
        pipeline: a.pipeline.to_string(),
        transform: a.transform.to_string(),
        value,
    };
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &[record]).stage("encode")?;
    fs::write(&a.output, buf).map_err(Error::from).stage("write")?;
    println!("{value}");
    Ok(0)
}
