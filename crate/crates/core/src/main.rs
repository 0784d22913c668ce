//! `gridsync` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 pilot not
//! detected, 3 I/O or decoding error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use gridsync::attack::{apply_attack, rectify, AttackSpec, CropSpec};
use gridsync::estimate::{analyse, EstimatorConfig};
use gridsync::experiment::{
    composite_patterns, evaluate, interval_sweep_gammas, single_attack_sweep, sweep_interval,
    watermark_patterns, watermark_rotation_sweep, ImageSet, NamedAttack, Resolution, RunConfig,
};
use gridsync::fixtures::{fixture_seed, synthetic_photo};
use gridsync::imagery::{psnr, quantize_to_8bit, read_image, rgb_to_yuv, write_image, yuv_to_rgb, PlanarImage};
use gridsync::interval::spectrum_csv;
use gridsync::matrix::{TransformEstimate, TransformMatrix};
use gridsync::metrics::Report;
use gridsync::pilot::{build_mask, embed_pilot, PilotConfig};
use gridsync::qim::QimParams;
use gridsync::radon::{normalize_sinogram, radon_columns, threshold_denoise, Field};
use gridsync::watermark::{decode_with, embed_watermark, synchronize, TileLayout, WatermarkMessage};
use gridsync::{Error, Result};

#[derive(Parser)]
#[command(name = "gridsync", version, about = "Grid pilot embedding, attack simulation and affine transform estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic test photograph.
    Fixture(FixtureArgs),
    /// Embed the grid pilot into an image.
    Embed(EmbedArgs),
    /// Apply a geometric attack and optional crop.
    Attack(AttackArgs),
    /// Estimate the transform matrix of an attacked stego image.
    Estimate(EstimateArgs),
    /// Undo a transform with a matrix or an estimate file.
    Rectify(RectifyArgs),
    /// Embed a 300-bit watermark together with the pilot.
    WmEmbed(WmEmbedArgs),
    /// Resynchronize an attacked image and extract its watermark.
    WmExtract(WmExtractArgs),
    /// Run an evaluation over images and attacks.
    Evaluate(EvaluateArgs),
    /// Measure estimation error and PSNR across pilot intervals.
    SweepInterval(SweepArgs),
}

#[derive(Args, Clone)]
struct PilotArgs {
    /// Pilot grid interval in pixels (even).
    #[arg(long, default_value_t = 100)]
    gamma: usize,
    /// QIM quantization step.
    #[arg(long, default_value_t = 9.0)]
    delta: f64,
    /// Pilot line width in pixels.
    #[arg(long, default_value_t = 5)]
    line_width: usize,
}

impl PilotArgs {
    fn config(&self) -> Result<PilotConfig> {
        PilotConfig::new(self.gamma, self.line_width, QimParams::new(self.delta)?)
    }
}

#[derive(Args, Clone)]
struct DetectArgs {
    /// Radon angle step in degrees (must divide 180).
    #[arg(long, default_value_t = 0.5)]
    angle_step: f64,
    /// Denoising threshold on standardized Radon coefficients.
    #[arg(long, default_value_t = 1.5)]
    tau: f64,
    /// Minimum angle-peak confidence; weaker detections count as "pilot not found".
    #[arg(long, default_value_t = gridsync::estimate::DEFAULT_MIN_CONFIDENCE)]
    min_confidence: f64,
}

impl DetectArgs {
    fn config(&self, pilot: &PilotArgs) -> EstimatorConfig {
        EstimatorConfig {
            gamma: pilot.gamma,
            delta: pilot.delta,
            angle_step: self.angle_step,
            tau: self.tau,
            min_confidence: self.min_confidence,
            ..EstimatorConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ResolutionArg {
    High,
    Low,
}

impl From<ResolutionArg> for Resolution {
    fn from(r: ResolutionArg) -> Self {
        match r {
            ResolutionArg::High => Resolution::High,
            ResolutionArg::Low => Resolution::Low,
        }
    }
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_enum, default_value = "high")]
    resolution: ResolutionArg,
    /// Fixture number within the set.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Fixture family; 0 gives the sets used by the test suite.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    pilot: PilotArgs,
    /// Also write the ternary mask as a text PGM.
    #[arg(long)]
    dump_mask: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Attack as JSON text, or `@path` to a JSON file.
    #[arg(long)]
    attack: String,
    /// Crop `WxH[@x,y|@center]`, overriding any crop in the attack.
    #[arg(long)]
    crop: Option<CropSpec>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    pilot: PilotArgs,
    #[command(flatten)]
    detect: DetectArgs,
    /// Write the estimate JSON here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump the sinogram as CSV (angle,offset,value).
    #[arg(long)]
    dump_sinogram: Option<PathBuf>,
    /// Dump the variance profile as CSV.
    #[arg(long)]
    dump_profile: Option<PathBuf>,
    /// Dump autocorrelation and power spectra; `-vertical.csv`/`-horizontal.csv` are appended.
    #[arg(long)]
    dump_spectrum: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Matrix as JSON, e.g. `[[1,0],[0,1]]`.
    #[arg(long, conflicts_with = "estimate")]
    matrix: Option<String>,
    /// Estimate JSON written by `estimate`.
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Use the 180° twin of the estimate.
    #[arg(long)]
    twin: bool,
}

impl MatrixArgs {
    fn matrix(&self) -> Result<TransformMatrix> {
        if let Some(m) = &self.matrix {
            let m: TransformMatrix = serde_json::from_str(m)?;
            return Ok(if self.twin { m.scaled(-1.0) } else { m });
        }
        match &self.estimate {
            Some(path) => {
                let est: TransformEstimate = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                Ok(if self.twin { est.twin } else { est.matrix })
            }
            None => Err(Error::Config("pass --matrix or --estimate".into())),
        }
    }
}

#[derive(Args)]
struct RectifyArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    matrix: MatrixArgs,
}

#[derive(Args)]
struct WmEmbedArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Message file (300 ASCII 0/1 characters); generated from --seed when absent.
    #[arg(long)]
    message: Option<PathBuf>,
    /// Where to save a generated message.
    #[arg(long)]
    message_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pilot: PilotArgs,
}

#[derive(Args)]
struct WmExtractArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Write the decoded message here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// True message; when given, both twins are tried and the lower BER is kept.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Matrix source; when absent the transform is estimated from the image.
    #[command(flatten)]
    matrix: MatrixArgs,
    #[command(flatten)]
    pilot: PilotArgs,
    #[command(flatten)]
    detect: DetectArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Single-attack sweeps over scaling, rotation and shear.
    Single,
    /// The twelve three-step composite patterns.
    Composite,
    /// Rotation sweep with watermark BER.
    WmRotation,
    /// Two-step composite patterns with watermark BER.
    WmComposite,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in attack list appended to the configured attacks.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Synthetic fixture set to use instead of the configured images.
    #[arg(long, value_enum)]
    resolution: Option<ResolutionArg>,
    /// Number of synthetic fixtures.
    #[arg(long)]
    count: Option<usize>,
    /// Pilot grid interval in pixels (even).
    #[arg(long)]
    gamma: Option<usize>,
    /// QIM quantization step.
    #[arg(long)]
    delta: Option<f64>,
    /// Radon angle step in degrees (must divide 180).
    #[arg(long)]
    angle_step: Option<f64>,
    /// Denoising threshold on standardized Radon coefficients.
    #[arg(long)]
    tau: Option<f64>,
    /// Extra attack as JSON text or `@path`.
    #[arg(long)]
    attack: Option<String>,
    /// Crop for --attack, `WxH[@x,y|@center]`.
    #[arg(long)]
    crop: Option<CropSpec>,
    /// Also embed a random 300-bit watermark and report its BER.
    #[arg(long)]
    watermark: bool,
    /// Run seed selecting the fixture family and watermark messages.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON report path; the CSV goes next to it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated intervals; defaults to 40,50,…,120.
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<usize>,
}

fn read_text_arg(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => Ok(std::fs::read_to_string(path)?),
        None => Ok(arg.to_string()),
    }
}

fn read_yuv(path: &Path) -> Result<PlanarImage> {
    rgb_to_yuv(&read_image(path)?)
}

fn write_yuv(path: &Path, img: &PlanarImage) -> Result<()> {
    write_image(path, &yuv_to_rgb(img)?)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values always serialize"));
}

fn cmd_fixture(a: &FixtureArgs) -> Result<()> {
    let res = Resolution::from(a.resolution);
    let (w, h) = res.size();
    let seed = fixture_seed(a.index, res == Resolution::High) ^ a.seed.rotate_left(32);
    write_image(&a.output, &synthetic_photo(w, h, seed))
}

fn cmd_embed(a: &EmbedArgs) -> Result<()> {
    let cfg = a.pilot.config()?;
    let rgb = read_image(&a.input)?;
    let stego = yuv_to_rgb(&embed_pilot(&rgb_to_yuv(&rgb)?, &cfg)?)?;
    if let Some(path) = &a.dump_mask {
        std::fs::write(path, build_mask(rgb.width(), rgb.height(), &cfg)?.to_pgm())?;
    }
    write_image(&a.output, &stego)?;
    print_json(&json!({ "psnr_db": psnr(&rgb, &quantize_to_8bit(&stego))? }));
    Ok(())
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let mut spec = AttackSpec::from_json(&read_text_arg(&a.attack)?)?;
    if a.crop.is_some() {
        spec.crop = a.crop;
    }
    let img = read_yuv(&a.input)?;
    let out = apply_attack(&img, &spec)?;
    write_yuv(&a.output, &out)?;
    print_json(&json!({ "matrix": spec.matrix()?, "width": out.width(), "height": out.height() }));
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let cfg = a.detect.config(&a.pilot);
    let img = read_yuv(&a.input)?;
    let analysis = analyse(&img, &cfg)?;
    if let Some(path) = &a.dump_sinogram {
        std::fs::write(path, analysis.sinogram.to_csv())?;
    }
    if let Some(path) = &a.dump_profile {
        std::fs::write(path, analysis.profile.to_csv())?;
    }
    if let Some(prefix) = &a.dump_spectrum {
        let field = gridsync::pilot::extract_ternary_field(&img, QimParams::new(cfg.delta)?)?;
        let (v, h) = gridsync::interval::split_fields(&field)?;
        let est = &analysis.estimate;
        for (name, comp, phi) in [("vertical", &v, est.angles.phi_v), ("horizontal", &h, est.angles.phi_h)] {
            let col = column_at(&comp.values, phi, cfg.tau)?;
            let path = PathBuf::from(format!("{}-{name}.csv", prefix.display()));
            std::fs::write(path, spectrum_csv(&col, cfg.interval.pad_factor))?;
        }
    }
    let text = serde_json::to_string_pretty(&analysis.estimate)?;
    if let Some(path) = &a.report {
        std::fs::write(path, &text)?;
    }
    println!("{text}");
    Ok(())
}

/// Denoised Radon column of `field` at `phi`, restricted to its support.
fn column_at(field: &Field, phi: f64, tau: f64) -> Result<Vec<f64>> {
    let s = threshold_denoise(&normalize_sinogram(&radon_columns(field, &[phi])?), tau);
    Ok(s.supported_column(0).to_vec())
}

fn cmd_rectify(a: &RectifyArgs) -> Result<()> {
    let t = a.matrix.matrix()?;
    write_yuv(&a.output, &rectify(&read_yuv(&a.input)?, &t)?)
}

fn cmd_wm_embed(a: &WmEmbedArgs) -> Result<()> {
    let cfg = a.pilot.config()?;
    let msg = match &a.message {
        Some(path) => std::fs::read_to_string(path)?.parse()?,
        None => WatermarkMessage::random(&mut ChaCha8Rng::seed_from_u64(a.seed)),
    };
    if let Some(path) = &a.message_out {
        std::fs::write(path, format!("{msg}\n"))?;
    }
    let rgb = read_image(&a.input)?;
    let marked = embed_watermark(&rgb_to_yuv(&rgb)?, &msg, &TileLayout::new(cfg.gamma)?, cfg.qim)?;
    let stego = yuv_to_rgb(&embed_pilot(&marked, &cfg)?)?;
    write_image(&a.output, &stego)?;
    print_json(&json!({ "psnr_db": psnr(&rgb, &quantize_to_8bit(&stego))? }));
    Ok(())
}

fn cmd_wm_extract(a: &WmExtractArgs) -> Result<()> {
    let cfg = a.pilot.config()?;
    let img = read_yuv(&a.input)?;
    let matrix = if a.matrix.matrix.is_some() || a.matrix.estimate.is_some() {
        a.matrix.matrix()?
    } else {
        gridsync::estimate::estimate_transform(&img, &a.detect.config(&a.pilot))?.matrix
    };
    let truth: Option<WatermarkMessage> = match &a.truth {
        Some(path) => Some(std::fs::read_to_string(path)?.parse()?),
        None => None,
    };
    let (extracted, report) = match &truth {
        Some(t) => {
            let out = synchronize(&img, &matrix, t, &cfg, cfg.qim)?;
            let report = json!({
                "ber": out.ber,
                "used_twin": out.used_twin,
                "matrix": out.matrix,
                "phase": out.phase,
                "erasures": out.extracted.erasures(),
            });
            (out.extracted, report)
        }
        None => {
            let (ext, phase) = decode_with(&img, &matrix, &cfg, cfg.qim)?;
            let report = json!({ "matrix": matrix, "phase": phase, "erasures": ext.erasures() });
            (ext, report)
        }
    };
    if let Some(path) = &a.output {
        std::fs::write(path, format!("{}\n", extracted.to_message()?))?;
    }
    print_json(&report);
    Ok(())
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(r) = a.resolution {
        let res = Resolution::from(r);
        cfg.images = ImageSet::Synthetic {
            resolution: res,
            count: a.count.unwrap_or(6),
        };
        if a.gamma.is_none() && a.config.is_none() {
            cfg.pilot.gamma = res.gamma();
        }
    } else if let (Some(n), ImageSet::Synthetic { count, .. }) = (a.count, &mut cfg.images) {
        *count = n;
    }
    if let Some(g) = a.gamma {
        cfg.pilot.gamma = g;
    }
    if let Some(d) = a.delta {
        cfg.pilot.qim = QimParams::new(d)?;
    }
    if let Some(s) = a.angle_step {
        cfg.radon.angle_step = s;
    }
    if let Some(t) = a.tau {
        cfg.radon.tau = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if a.watermark {
        cfg.watermark = true;
    }
    if a.report.is_some() {
        cfg.report = a.report.clone();
    }
    let crop = match &cfg.images {
        ImageSet::Synthetic { resolution, .. } => resolution.crop(),
        ImageSet::Files { .. } => Resolution::High.crop(),
    };
    if let Some(text) = &a.attack {
        let mut spec = AttackSpec::from_json(&read_text_arg(text)?)?;
        if a.crop.is_some() {
            spec.crop = a.crop;
        }
        cfg.attacks.push(NamedAttack {
            label: "custom".into(),
            spec,
        });
    }
    match a.preset {
        Some(Preset::Single) => cfg.attacks.extend(single_attack_sweep(crop)),
        Some(Preset::Composite) => cfg.attacks.extend(composite_patterns(crop)),
        Some(Preset::WmRotation) => {
            cfg.watermark = true;
            cfg.attacks.extend(watermark_rotation_sweep(crop));
        }
        Some(Preset::WmComposite) => {
            cfg.watermark = true;
            cfg.attacks.extend(watermark_patterns(crop));
        }
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(cfg: &RunConfig, report: &Report) -> Result<()> {
    let csv = report.to_csv()?;
    match &cfg.report {
        Some(path) => {
            std::fs::write(path, report.to_json()?)?;
            let csv_path = cfg.csv.clone().unwrap_or_else(|| path.with_extension("csv"));
            std::fs::write(csv_path, &csv)?;
        }
        None => print!("{csv}"),
    }
    for g in &report.err {
        let s = &g.summary;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "{:<16} n={:<3} excluded={:<3} median_err={} max_err={}",
            g.group,
            s.n,
            s.n_excluded,
            fmt(s.median),
            fmt(s.max)
        );
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = run_config(&a.run)?;
    if cfg.attacks.is_empty() {
        return Err(Error::Config("no attacks configured; pass --preset, --attack or a config".into()));
    }
    write_report(&cfg, &evaluate(&cfg)?)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = run_config(&a.run)?;
    let gammas = if a.gammas.is_empty() {
        interval_sweep_gammas()
    } else {
        a.gammas.clone()
    };
    write_report(&cfg, &sweep_interval(&cfg, &gammas)?)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fixture(a) => cmd_fixture(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Rectify(a) => cmd_rectify(a),
        Command::WmEmbed(a) => cmd_wm_embed(a),
        Command::WmExtract(a) => cmd_wm_extract(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SweepInterval(a) => cmd_sweep(a),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DetectionFailure(_) | Error::DegenerateLattice(_) => 2,
        Error::Io(_) | Error::Decode { .. } | Error::UnsupportedFormat(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if code == 2 {
                print_json(&json!({ "status": "detection-failure", "error": e.to_string() }));
            }
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
