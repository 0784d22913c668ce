//! Reproducible evaluation runs: embed → attack → estimate → score, optionally
//! followed by watermark resynchronization and BER.
//!
//! A [`RunConfig`] fully determines a run. Trials execute concurrently on a
//! dedicated pool of `jobs` threads, and the report lists them in
//! (image, attack) order regardless of completion order.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{apply_attack, AttackSpec, CropSpec, Primitive};
use crate::error::{Error, Result};
use crate::estimate::{estimate_transform, EstimatorConfig, DEFAULT_DETREND_FRACTION, DEFAULT_MIN_CONFIDENCE};
use crate::fixtures::{fixture_seed, synthetic_photo, HIGH_RES, LOW_RES};
use crate::imagery::{psnr, quantize_to_8bit, read_image, rgb_to_yuv, store_8bit, yuv_to_rgb, PlanarImage};
use crate::interval::IntervalConfig;
use crate::matrix::select_best;
use crate::metrics::{AttackParams, Report, TrialRecord};
use crate::pilot::{embed_pilot, PilotConfig};
use crate::radon::{DEFAULT_ANGLE_STEP, DEFAULT_TAU};
use crate::watermark::{embed_watermark, synchronize, TileLayout, WatermarkMessage};
use crate::angles::MIN_PEAK_SEPARATION;

/// Resolution class of the synthetic fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// 2048×2048, evaluated with γ = 100 and a 1080×1080 crop.
    High,
    /// 768×512, evaluated with γ = 50 and a 256×256 crop.
    Low,
}

impl Resolution {
    pub fn size(self) -> (usize, usize) {
        match self {
            Resolution::High => HIGH_RES,
            Resolution::Low => LOW_RES,
        }
    }

    pub fn gamma(self) -> usize {
        match self {
            Resolution::High => 100,
            Resolution::Low => 50,
        }
    }

    pub fn crop(self) -> CropSpec {
        match self {
            Resolution::High => CropSpec::center(1080, 1080),
            Resolution::Low => CropSpec::center(256, 256),
        }
    }
}

/// Where the original images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageSet {
    /// `count` generated fixtures; the run seed selects the fixture family.
    Synthetic { resolution: Resolution, count: usize },
    /// Image files (PNG or PPM).
    Files { paths: Vec<PathBuf> },
}

impl Default for ImageSet {
    fn default() -> Self {
        ImageSet::Synthetic {
            resolution: Resolution::High,
            count: 6,
        }
    }
}

/// Projection and detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadonSettings {
    pub angle_step: f64,
    pub tau: f64,
    pub min_peak_separation: f64,
    pub detrend_fraction: f64,
    pub min_confidence: f64,
}

impl Default for RadonSettings {
    fn default() -> Self {
        RadonSettings {
            angle_step: DEFAULT_ANGLE_STEP,
            tau: DEFAULT_TAU,
            min_peak_separation: MIN_PEAK_SEPARATION,
            detrend_fraction: DEFAULT_DETREND_FRACTION,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
        }
    }
}

/// An attack with a report label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAttack {
    pub label: String,
    #[serde(flatten)]
    pub spec: AttackSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub pilot: PilotConfig,
    pub radon: RadonSettings,
    pub interval: IntervalConfig,
    pub images: ImageSet,
    pub attacks: Vec<NamedAttack>,
    /// Also embed a random 300-bit watermark and report its BER.
    pub watermark: bool,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    /// JSON report destination.
    pub report: Option<PathBuf>,
    /// CSV destination; defaults to the report path with a `.csv` extension.
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            gamma: self.pilot.gamma,
            delta: self.pilot.qim.delta,
            angle_step: self.radon.angle_step,
            tau: self.radon.tau,
            min_peak_separation: self.radon.min_peak_separation,
            detrend_fraction: self.radon.detrend_fraction,
            min_confidence: self.radon.min_confidence,
            interval: self.interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pilot.validate()?;
        self.estimator().validate()?;
        if self.watermark {
            TileLayout::new(self.pilot.gamma)?;
        }
        for a in &self.attacks {
            a.spec.matrix()?;
        }
        Ok(())
    }
}

/// Labels and RGB contents of the run's original images.
fn load_images(set: &ImageSet, seed: u64) -> Result<Vec<(String, PlanarImage)>> {
    match set {
        ImageSet::Synthetic { resolution, count } => {
            let (w, h) = resolution.size();
            let high = *resolution == Resolution::High;
            (0..*count)
                .into_par_iter()
                .map(|i| {
                    let s = fixture_seed(i, high) ^ seed.rotate_left(32);
                    Ok((format!("synthetic-{}-{i}", if high { "high" } else { "low" }), synthetic_photo(w, h, s)))
                })
                .collect()
        }
        ImageSet::Files { paths } => paths
            .iter()
            .map(|p| Ok((p.display().to_string(), read_image(p)?)))
            .collect(),
    }
}

/// A stego image ready to be attacked.
struct Stego {
    name: String,
    /// Stored (8-bit round-tripped) stego image in YUV.
    image: PlanarImage,
    psnr: f64,
}

fn make_stego(
    name: String,
    rgb: &PlanarImage,
    cfg: &RunConfig,
    msg: Option<&WatermarkMessage>,
) -> Result<Stego> {
    let yuv = rgb_to_yuv(rgb)?;
    let carrier = match msg {
        Some(m) => embed_watermark(&yuv, m, &TileLayout::new(cfg.pilot.gamma)?, cfg.pilot.qim)?,
        None => yuv,
    };
    let stored = store_8bit(&embed_pilot(&carrier, &cfg.pilot)?)?;
    let psnr = psnr(rgb, &quantize_to_8bit(&yuv_to_rgb(&stored)?))?;
    Ok(Stego {
        name,
        image: stored,
        psnr,
    })
}

fn run_trial(
    stego: &Stego,
    attack: &NamedAttack,
    cfg: &RunConfig,
    msg: Option<&WatermarkMessage>,
) -> Result<TrialRecord> {
    let truth = attack.spec.matrix()?;
    let attacked = store_8bit(&apply_attack(&stego.image, &attack.spec)?)?;
    let mut record = TrialRecord {
        image: stego.name.clone(),
        attack: attack.label.clone(),
        spec: attack.spec.clone(),
        params: AttackParams::from_spec(&attack.spec),
        truth,
        estimate: None,
        selected: None,
        err: None,
        psnr: Some(stego.psnr),
        ber: None,
        excluded: false,
        failure: None,
    };
    match estimate_transform(&attacked, &cfg.estimator()) {
        Ok(est) => {
            let (selected, err) = select_best(&est, &truth)?;
            if let Some(m) = msg {
                let sync = synchronize(&attacked, &est.matrix, m, &cfg.pilot, cfg.pilot.qim)?;
                record.ber = Some(sync.ber);
            }
            record.selected = Some(selected);
            record.err = Some(err);
            record.estimate = Some(est);
        }
        Err(e) if e.is_detection_failure() => {
            log::info!("{} / {}: {e}", stego.name, attack.label);
            record.excluded = true;
            record.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Runs every (image, attack) trial of `cfg`.
pub fn evaluate(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let msg = cfg
            .watermark
            .then(|| WatermarkMessage::random(&mut ChaCha8Rng::seed_from_u64(cfg.seed)));
        let images = load_images(&cfg.images, cfg.seed)?;
        let stegos: Vec<Stego> = images
            .into_par_iter()
            .map(|(name, rgb)| make_stego(name, &rgb, cfg, msg.as_ref()))
            .collect::<Result<_>>()?;
        let pairs: Vec<(&Stego, &NamedAttack)> = stegos
            .iter()
            .flat_map(|s| cfg.attacks.iter().map(move |a| (s, a)))
            .collect();
        let trials = pairs
            .into_par_iter()
            .map(|(s, a)| run_trial(s, a, cfg, msg.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Report::new(trials))
    })
}

/// Pilot-interval sweep: for each `gamma`, embeds with that interval and
/// estimates the untransformed, cropped stego image. Labels are `gamma=<γ>`.
pub fn sweep_interval(cfg: &RunConfig, gammas: &[usize]) -> Result<Report> {
    let crop = match &cfg.images {
        ImageSet::Synthetic { resolution, .. } => resolution.crop(),
        ImageSet::Files { .. } => Resolution::High.crop(),
    };
    let mut trials = Vec::new();
    for &gamma in gammas {
        let mut run = cfg.clone();
        run.pilot.gamma = gamma;
        run.attacks = vec![NamedAttack {
            label: format!("gamma={gamma}"),
            spec: AttackSpec {
                steps: Vec::new(),
                crop: Some(crop),
            },
        }];
        trials.extend(evaluate(&run)?.trials);
    }
    Ok(Report::new(trials))
}

fn single(label: String, step: Primitive, crop: CropSpec) -> NamedAttack {
    NamedAttack {
        label,
        spec: AttackSpec {
            steps: vec![step],
            crop: Some(crop),
        },
    }
}

/// Single-attack sweeps: `S_y = 0.1…2.0` (S_x = 1), `θ_r = 0…90`, `θ_y = 0…80`.
pub fn single_attack_sweep(crop: CropSpec) -> Vec<NamedAttack> {
    let mut out = Vec::new();
    for i in 1..=20 {
        let sy = i as f64 / 10.0;
        out.push(single(format!("scale_y={sy}"), Primitive::Scale { sx: 1.0, sy }, crop));
    }
    for deg in (0..=90).step_by(5) {
        out.push(single(format!("rotate={deg}"), Primitive::Rotate { deg: deg as f64 }, crop));
    }
    for deg in (0..=80).step_by(5) {
        out.push(single(format!("shear_y={deg}"), Primitive::ShearY { deg: deg as f64 }, crop));
    }
    out
}

fn patterns(prefix: &str, table: Vec<Vec<Primitive>>, crop: CropSpec) -> Vec<NamedAttack> {
    table
        .into_iter()
        .enumerate()
        .map(|(i, steps)| NamedAttack {
            label: format!("{prefix}{}", i + 1),
            spec: AttackSpec {
                steps,
                crop: Some(crop),
            },
        })
        .collect()
}

/// The twelve three-step composite patterns (steps listed first-applied first).
pub fn composite_patterns(crop: CropSpec) -> Vec<NamedAttack> {
    use Primitive::*;
    let s = |sx, sy| Scale { sx, sy };
    let r = |deg| Rotate { deg };
    let x = |deg| ShearX { deg };
    let y = |deg| ShearY { deg };
    patterns(
        "pattern-",
        vec![
            vec![y(50.0), s(0.6, 1.1), x(65.0)],
            vec![r(30.0), x(30.0), y(65.0)],
            vec![y(40.0), s(1.5, 1.3), x(25.0)],
            vec![x(60.0), s(1.3, 0.5), y(70.0)],
            vec![s(0.8, 1.4), r(250.0), y(15.0)],
            vec![y(20.0), x(55.0), r(355.0)],
            vec![y(70.0), r(195.0), s(1.2, 1.5)],
            vec![s(1.9, 1.5), x(45.0), y(55.0)],
            vec![s(0.7, 1.1), r(215.0), x(60.0)],
            vec![y(30.0), x(65.0), r(105.0)],
            vec![s(0.9, 0.5), r(245.0), x(20.0)],
            vec![s(0.6, 1.1), y(60.0), y(0.0)],
        ],
        crop,
    )
}

/// The four two-step composite patterns of the watermark evaluation.
pub fn watermark_patterns(crop: CropSpec) -> Vec<NamedAttack> {
    use Primitive::*;
    patterns(
        "wm-pattern-",
        vec![
            vec![ShearY { deg: 5.0 }, Rotate { deg: 10.0 }],
            vec![Scale { sx: 1.0, sy: 1.1 }, Rotate { deg: 10.0 }],
            vec![Rotate { deg: 5.0 }, Scale { sx: 1.0, sy: 1.2 }],
            vec![ShearX { deg: 10.0 }, ShearY { deg: 5.0 }],
        ],
        crop,
    )
}

/// Rotation sweep used for the watermark BER evaluation: `θ_r = 0…90` in 5° steps.
pub fn watermark_rotation_sweep(crop: CropSpec) -> Vec<NamedAttack> {
    (0..=90)
        .step_by(5)
        .map(|deg| single(format!("rotate={deg}"), Primitive::Rotate { deg: deg as f64 }, crop))
        .collect()
}

/// Grid intervals of the interval sweep: 40 to 120 px in steps of 10.
pub fn interval_sweep_gammas() -> Vec<usize> {
    (40..=120).step_by(10).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::CropAnchor;

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let cfg = RunConfig {
            attacks: composite_patterns(CropSpec::center(1080, 1080))[..2].to_vec(),
            watermark: true,
            seed: 42,
            ..RunConfig::default()
        };
        let toml_text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&toml_text).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&json).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::parse(
            r#"
seed = 7
[pilot]
gamma = 50
line_width = 5
delta = 9.0

[images]
kind = "synthetic"
resolution = "low"
count = 2

[[attacks]]
label = "rotate=30"
steps = [{ type = "rotate", deg = 30.0 }]
crop = { mode = "center", w = 256, h = 256 }
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pilot.gamma, 50);
        assert_eq!(cfg.radon, RadonSettings::default());
        assert_eq!(cfg.attacks[0].spec.crop.unwrap().anchor, CropAnchor::Center);
        assert!(RunConfig::parse("seed = \"x\"").is_err());
    }

    #[test]
    fn sweeps_have_expected_sizes() {
        let crop = CropSpec::center(1080, 1080);
        assert_eq!(single_attack_sweep(crop).len(), 20 + 19 + 17);
        let p = composite_patterns(crop);
        assert_eq!(p.len(), 12);
        let t1 = p[0].spec.matrix().unwrap();
        let tan = |d: f64| d.to_radians().tan();
        let expected = [[0.6 + tan(65.0) * 1.1 * tan(50.0), tan(65.0) * 1.1], [1.1 * tan(50.0), 1.1]];
        for (row, er) in t1.0.iter().zip(expected) {
            for (v, e) in row.iter().zip(er) {
                assert!((v - e).abs() < 1e-12);
            }
        }
        assert_eq!(watermark_patterns(crop).len(), 4);
        assert_eq!(interval_sweep_gammas(), vec![40, 50, 60, 70, 80, 90, 100, 110, 120]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.pilot.gamma = 99;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.attacks.push(single("bad".into(), Primitive::ShearX { deg: 90.0 }, CropSpec::center(8, 8)));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_run_is_deterministic_and_ordered() {
        let cfg = RunConfig {
            pilot: PilotConfig::new(50, 5, Default::default()).unwrap(),
            images: ImageSet::Synthetic {
                resolution: Resolution::Low,
                count: 2,
            },
            attacks: vec![
                single("rotate=10".into(), Primitive::Rotate { deg: 10.0 }, CropSpec::center(300, 300)),
                single("none".into(), Primitive::Rotate { deg: 0.0 }, CropSpec::center(300, 300)),
            ],
            watermark: true,
            jobs: 2,
            ..RunConfig::default()
        };
        let a = evaluate(&cfg).unwrap();
        let b = evaluate(&RunConfig { jobs: 1, ..cfg.clone() }).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        let order: Vec<(&str, &str)> = a.trials.iter().map(|t| (t.image.as_str(), t.attack.as_str())).collect();
        assert_eq!(
            order,
            vec![
                ("synthetic-low-0", "rotate=10"),
                ("synthetic-low-0", "none"),
                ("synthetic-low-1", "rotate=10"),
                ("synthetic-low-1", "none"),
            ]
        );
        let none = &a.trials[1];
        assert!(none.err.unwrap() < 0.02, "{:?}", none.err);
        assert_eq!(none.ber, Some(0.0));
    }
}
