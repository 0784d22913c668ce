//! End-to-end transform estimation from a (possibly attacked) stego image:
//! ternary extraction → Radon → detection angles → intervals → matrix.

use serde::{Deserialize, Serialize};

use crate::angles::{
    classify_direction, find_peak_angles_with, variance_profile, VarianceProfile, MIN_PEAK_SEPARATION,
};
use crate::error::{Error, Result};
use crate::imagery::PlanarImage;
use crate::interval::{estimate_interval, split_fields, IntervalConfig};
use crate::matrix::{angles_to_directions, build_matrix, twin_matrix, TransformEstimate};
use crate::pilot::{extract_ternary_field, PilotConfig};
use crate::qim::QimParams;
use crate::radon::{
    local_mean_highpass, normalize_sinogram, radon_transform, threshold_denoise, Field, Sinogram, DEFAULT_ANGLE_STEP,
};

/// Default high-pass radius before angle detection, relative to the pilot interval.
pub const DEFAULT_DETREND_FRACTION: f64 = 0.25;

/// Default minimum peak-to-median variance ratio for accepting a detection.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Embedded pilot interval in pixels.
    pub gamma: usize,
    /// Pilot quantization step.
    pub delta: f64,
    /// Radon angle step in degrees; must divide 180.
    pub angle_step: f64,
    /// Denoising threshold on standardized Radon coefficients.
    pub tau: f64,
    /// Minimum angle between the two detected line directions, in degrees.
    pub min_peak_separation: f64,
    /// Radius of the local-mean high-pass applied before angle detection,
    /// as a fraction of `gamma`; 0 disables it.
    pub detrend_fraction: f64,
    /// Detections whose angle confidence falls below this ratio are reported
    /// as "pilot not found"; 0 accepts every detection.
    pub min_confidence: f64,
    pub interval: IntervalConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let pilot = PilotConfig::default();
        let interval = IntervalConfig::default();
        EstimatorConfig {
            gamma: pilot.gamma,
            delta: pilot.qim.delta,
            angle_step: DEFAULT_ANGLE_STEP,
            tau: interval.tau,
            min_peak_separation: MIN_PEAK_SEPARATION,
            detrend_fraction: DEFAULT_DETREND_FRACTION,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            interval,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        QimParams::new(self.delta)?;
        if self.gamma == 0 {
            return Err(Error::Config("pilot interval must be positive".into()));
        }
        if !(self.angle_step > 0.0) || ((180.0 / self.angle_step).round() * self.angle_step - 180.0).abs() > 1e-9 {
            return Err(Error::Config(format!("angle step {} does not divide 180", self.angle_step)));
        }
        if !(self.detrend_fraction >= 0.0 && self.detrend_fraction.is_finite()) {
            return Err(Error::Config(format!(
                "detrend fraction must be non-negative, got {}",
                self.detrend_fraction
            )));
        }
        if !(self.min_confidence >= 0.0 && self.min_confidence.is_finite()) {
            return Err(Error::Config(format!(
                "minimum confidence must be non-negative, got {}",
                self.min_confidence
            )));
        }
        if !(self.min_peak_separation >= 0.0 && self.min_peak_separation < 90.0) {
            return Err(Error::Config(format!(
                "peak separation must lie in [0, 90) degrees, got {}",
                self.min_peak_separation
            )));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config(format!("threshold must be non-negative, got {}", self.tau)));
        }
        Ok(())
    }

    /// High-pass radius in pixels.
    pub fn detrend_radius(&self) -> usize {
        (self.detrend_fraction * self.gamma as f64).round() as usize
    }
}

/// Estimate plus the intermediate products useful for plotting.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub estimate: TransformEstimate,
    pub sinogram: Sinogram,
    pub profile: VarianceProfile,
}

pub fn estimate_transform(img: &PlanarImage, cfg: &EstimatorConfig) -> Result<TransformEstimate> {
    analyse(img, cfg).map(|a| a.estimate)
}

pub fn analyse(img: &PlanarImage, cfg: &EstimatorConfig) -> Result<Analysis> {
    cfg.validate()?;
    let field = extract_ternary_field(img, QimParams::new(cfg.delta)?)?;

    // centering removes the constant offset so image borders do not project as edges
    let raw: Vec<f64> = field.values.iter().map(|s| s.value() as f64).collect();
    let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    let centered = Field::new(field.width, field.height, raw.iter().map(|v| v - mean).collect())?;

    // Smooth image content decodes to wide bands of constant symbols whose
    // projections swamp the thin pilot lines; a local-mean high-pass keeps
    // the lines and removes the bands before angle detection.
    let radius = cfg.detrend_radius();
    let detection = if radius > 0 {
        local_mean_highpass(&centered, radius)
    } else {
        centered
    };
    let sinogram = radon_transform(&detection, cfg.angle_step)?;
    let profile = variance_profile(&sinogram)?;
    let peaks = find_peak_angles_with(&profile, cfg.min_peak_separation)?;
    // Unmarked images still produce two variance maxima, but they barely rise
    // above the median; genuine line families stand out by an order of magnitude.
    if peaks.confidence < cfg.min_confidence {
        return Err(Error::DetectionFailure(format!(
            "angle peaks only {:.2}x the median variance (need {:.2})",
            peaks.confidence, cfg.min_confidence
        )));
    }
    let denoised = threshold_denoise(&normalize_sinogram(&sinogram), cfg.tau);
    let pair = classify_direction(&denoised, peaks.angles[0], peaks.angles[1], peaks.confidence)?;

    let (mut vertical, mut horizontal) = split_fields(&field)?;
    if radius > 0 {
        vertical.values = local_mean_highpass(&vertical.values, radius);
        horizontal.values = local_mean_highpass(&horizontal.values, radius);
    }
    let icfg = IntervalConfig {
        tau: cfg.tau,
        ..cfg.interval
    };
    let (iv, ih) = rayon::join(
        || estimate_interval(&vertical, pair.phi_v, &icfg),
        || estimate_interval(&horizontal, pair.phi_h, &icfg),
    );
    let (iv, ih) = (iv?, ih?);

    let (alpha, beta) = angles_to_directions(&pair);
    let gamma = cfg.gamma as f64;
    let (gamma_v, gamma_h) = (iv.gamma_px / gamma, ih.gamma_px / gamma);
    let matrix = build_matrix(alpha, beta, gamma_v, gamma_h)?;
    Ok(Analysis {
        estimate: TransformEstimate {
            matrix,
            twin: twin_matrix(&matrix),
            alpha,
            beta,
            gamma_v,
            gamma_h,
            confidence: pair.confidence,
            angles: pair,
            vertical: iv,
            horizontal: ih,
        },
        sinogram,
        profile,
    })
}

