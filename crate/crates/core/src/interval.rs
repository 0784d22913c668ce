//! Line-interval estimation for each pilot family.
//!
//! The ternary field is split into a vertical and a horizontal component in
//! which each family becomes a train of alternating `±1` lines with period
//! `γ`. The Radon column at the family's detection angle is standardized and
//! denoised, its autocorrelation is transformed to a power spectrum, and the
//! base frequency is read from the odd-harmonic series of spectral peaks.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::angles::median_of_sorted;
use crate::error::{Error, Result};
use crate::pilot::TernaryField;
use crate::qim::Symbol;
use crate::radon::{
    normalize_sinogram, radon_columns, radon_transform, threshold_denoise, Field, DEFAULT_TAU,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Vertical,
    Horizontal,
}

impl Direction {
    /// Value assigned to each ternary symbol before standardization.
    pub fn remap(self, s: Symbol) -> f64 {
        match (self, s) {
            (Direction::Vertical, Symbol::Neg) => -1.0,
            (Direction::Vertical, Symbol::Zero) => 1.0,
            (Direction::Vertical, Symbol::Pos) => 0.0,
            (Direction::Horizontal, Symbol::Neg) => 0.0,
            (Direction::Horizontal, Symbol::Zero) => -1.0,
            (Direction::Horizontal, Symbol::Pos) => 1.0,
        }
    }

    /// Sign that turns the family's lines at multiples of `γ` into positive pulses.
    pub(crate) fn orientation(self) -> f64 {
        match self {
            Direction::Vertical => -1.0,
            Direction::Horizontal => 1.0,
        }
    }
}

/// Standardized single-family signal derived from a ternary field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentField {
    pub values: Field,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    /// Peak frequency in cycles per pixel.
    pub frequency: f64,
    /// Odd multiple of the base frequency this peak was assigned to.
    pub index: u32,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub base_frequency: f64,
    pub harmonics: Vec<Harmonic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub gamma_px: f64,
    pub base_frequency: f64,
    pub harmonics_used: Vec<Harmonic>,
    /// Position of the family's reference line modulo `gamma_px`, measured from
    /// the pixel origin along the line normal, in `[-gamma_px/2, gamma_px/2)`.
    pub phase_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntervalConfig {
    /// Denoising threshold on the standardized Radon column.
    pub tau: f64,
    /// Spectral peaks must exceed this multiple of the median spectral power.
    pub floor_factor: f64,
    /// Candidate base frequencies must hold at least this fraction of the strongest peak's power.
    pub relative_floor: f64,
    /// The strongest peak must exceed this multiple of the median spectral power
    /// for the column to count as periodic at all.
    pub significance: f64,
    /// Zero-padding factor applied before the transform of the autocorrelation.
    pub pad_factor: usize,
    /// Compute the full sinogram instead of just the needed column.
    pub full_transform: bool,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        IntervalConfig {
            tau: DEFAULT_TAU,
            floor_factor: 4.0,
            relative_floor: 0.1,
            significance: 25.0,
            pad_factor: 8,
            full_transform: false,
        }
    }
}

/// Splits a ternary field into standardized vertical and horizontal components.
pub fn split_fields(field: &TernaryField) -> Result<(ComponentField, ComponentField)> {
    let build = |direction: Direction| -> Result<ComponentField> {
        let raw: Vec<f64> = field.values.iter().map(|&s| direction.remap(s)).collect();
        let n = raw.len() as f64;
        if raw.is_empty() {
            return Err(Error::Shape("empty ternary field".into()));
        }
        let mean = raw.iter().sum::<f64>() / n;
        let std = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return Err(Error::DetectionFailure(format!(
                "{direction:?} component is constant"
            )));
        }
        let data = raw.into_iter().map(|v| (v - mean) / std).collect();
        Ok(ComponentField {
            values: Field::new(field.width, field.height, data)?,
            direction,
        })
    };
    Ok((build(Direction::Vertical)?, build(Direction::Horizontal)?))
}

/// Biased autocorrelation for lags `0..n`.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Power spectrum of a column: the transform of its symmetric autocorrelation,
/// zero-padded to a power of two. Returns `(frequencies, power)` for bins up to Nyquist.
pub fn power_spectrum(column: &[f64], pad_factor: usize) -> (Vec<f64>, Vec<f64>) {
    let n = column.len();
    let r = autocorrelation(column);
    let len = (pad_factor.max(1) * (2 * n).max(2)).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    buf[0].re = r[0];
    for k in 1..n {
        buf[k].re = r[k];
        buf[len - k].re = r[k];
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    let freqs = (0..=half).map(|k| k as f64 / len as f64).collect();
    // the symmetric input makes the transform real; clip rounding noise below zero
    let power = buf[..=half].iter().map(|c| c.re.max(0.0)).collect();
    (freqs, power)
}

/// CSV with the autocorrelation and power spectrum of a column.
pub fn spectrum_csv(column: &[f64], pad_factor: usize) -> String {
    let r = autocorrelation(column);
    let (freqs, power) = power_spectrum(column, pad_factor);
    let mut out = String::from("kind,x,value\n");
    for (k, v) in r.iter().enumerate() {
        let _ = writeln!(out, "autocorrelation,{k},{v}");
    }
    for (f, p) in freqs.iter().zip(&power) {
        let _ = writeln!(out, "power,{f},{p}");
    }
    out
}

/// Highest harmonic index considered. Above it the ±10% acceptance bands of
/// neighbouring odd multiples start to overlap and every peak would qualify.
pub const MAX_HARMONIC: u32 = 7;

/// Odd index `n ≤ MAX_HARMONIC` with `0.9·n·f0 ≤ f ≤ 1.1·n·f0`, if any.
pub fn odd_harmonic_index(f: f64, f0: f64) -> Option<u32> {
    if !(f0 > 0.0) || !(f > 0.0) {
        return None;
    }
    let ratio = f / f0;
    let below = (((ratio - 1.0) / 2.0).floor() * 2.0 + 1.0).max(1.0);
    [below, below + 2.0]
        .into_iter()
        .find(|&n| n <= MAX_HARMONIC as f64 && 0.9 * n * f0 <= f && f <= 1.1 * n * f0)
        .map(|n| n as u32)
}

struct Peak {
    frequency: f64,
    power: f64,
}

/// Local spectral maxima above the noise floor, plus the median spectral power.
fn spectral_peaks(column: &[f64], cfg: &IntervalConfig) -> (Vec<Peak>, f64) {
    let n = column.len();
    let (freqs, power) = power_spectrum(column, cfg.pad_factor);
    let len = 2 * (freqs.len() - 1);
    // one resolution cell of the unpadded column, in padded bins
    let cell = (len as f64 / n as f64).round().max(1.0) as usize;
    // at least two periods must fit into the column
    let first = 2 * cell;
    if first + 1 >= power.len() {
        return (Vec::new(), 0.0);
    }
    let mut sorted = power[first..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = median_of_sorted(&sorted);
    let floor = cfg.floor_factor * median;
    let last = power.len() - 1;
    let peaks = (first..last)
        .filter(|&k| {
            let p = power[k];
            if !(p > floor) {
                return false;
            }
            let lo = k.saturating_sub(cell);
            let hi = (k + cell).min(last);
            (lo..=hi).all(|j| power[j] < p || (power[j] == p && j >= k))
        })
        .map(|k| {
            // parabolic refinement over the neighbouring bins
            let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            Peak {
                frequency: (k as f64 + shift) / len as f64,
                power: b - 0.25 * (a - c) * shift,
            }
        })
        .collect();
    (peaks, median)
}

/// Fraction of the best family power a lower base-frequency candidate needs.
const FAMILY_SUPPORT: f64 = 0.5;

/// Strongest peak inside each odd-harmonic band of `f0`, by index.
fn harmonic_family(peaks: &[Peak], f0: f64) -> Vec<Harmonic> {
    let mut family: Vec<Harmonic> = Vec::new();
    for p in peaks {
        let Some(index) = odd_harmonic_index(p.frequency, f0) else {
            continue;
        };
        let h = Harmonic {
            frequency: p.frequency,
            index,
            power: p.power,
        };
        match family.iter_mut().find(|q| q.index == index) {
            Some(q) if q.power < h.power => *q = h,
            Some(_) => {}
            None => family.push(h),
        }
    }
    family.sort_by_key(|h| h.index);
    family
}

/// Base frequency of a denoised Radon column from its odd-harmonic peak series.
pub fn estimate_base_frequency(column: &[f64], cfg: &IntervalConfig) -> Result<FrequencyEstimate> {
    if column.len() < 8 || column.iter().all(|&v| v == 0.0) {
        return Err(Error::DetectionFailure(
            "no line response in the interval column".into(),
        ));
    }
    let (peaks, median) = spectral_peaks(column, cfg);
    let strongest = peaks.iter().map(|p| p.power).fold(0.0, f64::max);
    if peaks.is_empty() || !(strongest >= cfg.significance * median) {
        return Err(Error::DetectionFailure(format!(
            "no periodic line structure in the power spectrum (strongest peak {:.1}x median)",
            if median > 0.0 { strongest / median } else { 0.0 }
        )));
    }
    // Provisional base frequency: the lowest candidate whose odd-harmonic family
    // is nearly as well supported as the best one. A lone noise peak below the
    // fundamental gathers little family power; a true harmonic taken as the
    // base loses the fundamental and the other harmonics between its own.
    let families: Vec<Vec<Harmonic>> = peaks
        .iter()
        .filter(|p| p.power >= cfg.relative_floor * strongest)
        .map(|p| harmonic_family(&peaks, p.frequency))
        .collect();
    let support = |f: &[Harmonic]| f.iter().map(|h| h.power).sum::<f64>();
    let best = families.iter().map(|f| support(f)).fold(0.0, f64::max);
    let family = families
        .into_iter()
        .find(|f| support(f) >= FAMILY_SUPPORT * best)
        .unwrap_or_default();
    let family_power: f64 = family.iter().map(|h| h.power).sum();
    let base = family
        .iter()
        .map(|h| h.power * h.frequency / h.index as f64)
        .sum::<f64>()
        / family_power;
    Ok(FrequencyEstimate {
        base_frequency: base,
        harmonics: family,
    })
}

/// Position modulo `1/frequency` of the pulse train in `samples`, from the
/// phase of its fundamental. Each sample is `(position, value)`.
pub fn periodic_phase(samples: impl IntoIterator<Item = (f64, f64)>, frequency: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (t, v) in samples {
        let (s, c) = (2.0 * PI * frequency * t).sin_cos();
        re += v * c;
        im -= v * s;
    }
    let period = 1.0 / frequency;
    (-im.atan2(re) / (2.0 * PI * frequency)).rem_euclid(period)
}

/// Interval and phase of one line family at its detection angle `phi` (degrees).
pub fn estimate_interval(
    component: &ComponentField,
    phi: f64,
    cfg: &IntervalConfig,
) -> Result<IntervalEstimate> {
    let f = &component.values;
    let sino = if cfg.full_transform {
        let full = radon_transform(f, crate::radon::DEFAULT_ANGLE_STEP)?;
        let a = full.angle_index(phi);
        radon_columns(f, &[full.angles[a]])?
    } else {
        radon_columns(f, &[phi])?
    };
    let denoised = threshold_denoise(&normalize_sinogram(&sino), cfg.tau);
    let column = denoised.supported_column(0);
    let freq = estimate_base_frequency(column, cfg)?;

    let (lo, _) = denoised.support[0];
    let angle = sino.angles[0].to_radians();
    let cx = (f.width as f64 - 1.0) / 2.0;
    let cy = (f.height as f64 - 1.0) / 2.0;
    let origin = -cx * angle.cos() + cy * angle.sin();
    let sign = component.direction.orientation();
    let phase = periodic_phase(
        column
            .iter()
            .enumerate()
            .map(|(j, &v)| (denoised.offsets[lo + j] - origin, sign * v)),
        freq.base_frequency,
    );
    let gamma = 1.0 / freq.base_frequency;
    // signed representation so that lines sitting on the origin report ≈ 0
    let phase = if phase >= gamma / 2.0 { phase - gamma } else { phase };
    Ok(IntervalEstimate {
        gamma_px: gamma,
        base_frequency: freq.base_frequency,
        harmonics_used: freq.harmonics,
        phase_px: phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::{build_mask, PilotConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Alternating +1/-1 lines of width `w`, centered on multiples of `gamma / 2`.
    fn line_column(n: usize, gamma: f64, w: usize) -> Vec<f64> {
        let lead = (w as f64 - 1.0) / 2.0;
        (0..n)
            .map(|i| {
                let t = i as f64 + lead;
                if t.rem_euclid(gamma) < w as f64 {
                    1.0
                } else if (t - gamma / 2.0).rem_euclid(gamma) < w as f64 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn remap_tables() {
        assert_eq!(Direction::Vertical.remap(Symbol::Pos), 0.0);
        assert_eq!(Direction::Horizontal.remap(Symbol::Zero), -1.0);
        assert_eq!(Direction::Vertical.remap(Symbol::Neg), -1.0);
        assert_eq!(Direction::Horizontal.remap(Symbol::Pos), 1.0);
    }

    #[test]
    fn split_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values = (0..600).map(|_| Symbol::ALL[rng.gen_range(0..3)]).collect();
        let field = TernaryField {
            width: 30,
            height: 20,
            values,
        };
        let (v, h) = split_fields(&field).unwrap();
        for c in [&v, &h] {
            let n = c.values.data.len() as f64;
            let mean = c.values.data.iter().sum::<f64>() / n;
            let var = c.values.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_cannot_be_split() {
        let field = TernaryField {
            width: 4,
            height: 4,
            values: vec![Symbol::Zero; 16],
        };
        assert!(split_fields(&field).unwrap_err().is_detection_failure());
    }

    #[test]
    fn odd_harmonic_bands() {
        let f0 = 0.01;
        assert_eq!(odd_harmonic_index(0.01, f0), Some(1));
        assert_eq!(odd_harmonic_index(0.03, f0), Some(3));
        assert_eq!(odd_harmonic_index(0.0325, f0), Some(3));
        assert_eq!(odd_harmonic_index(0.05, f0), Some(5));
        assert_eq!(odd_harmonic_index(0.02, f0), None);
        assert_eq!(odd_harmonic_index(0.04, f0), None);
        assert_eq!(odd_harmonic_index(0.0335, f0), None);
        assert_eq!(odd_harmonic_index(0.07, f0), Some(7));
        assert_eq!(odd_harmonic_index(0.09, f0), None);
    }

    #[test]
    fn square_wave_period_100() {
        let col = line_column(1500, 100.0, 5);
        let est = estimate_base_frequency(&col, &IntervalConfig::default()).unwrap();
        assert!((est.base_frequency - 0.01).abs() < 1e-4, "{}", est.base_frequency);
        let idx: Vec<u32> = est.harmonics.iter().map(|h| h.index).collect();
        assert!(idx.contains(&3) && idx.contains(&5), "{idx:?}");
        for h in &est.harmonics {
            let n = h.index as f64;
            assert!(h.index % 2 == 1);
            assert!(0.9 * n * est.base_frequency <= h.frequency && h.frequency <= 1.1 * n * est.base_frequency);
        }
    }

    #[test]
    fn square_wave_period_50() {
        let col = line_column(1200, 50.0, 5);
        let est = estimate_base_frequency(&col, &IntervalConfig::default()).unwrap();
        assert!((est.base_frequency - 0.02).abs() < 2e-4);
    }

    #[test]
    fn within_one_bin_for_noiseless_columns() {
        for gamma in [24.0, 37.0, 64.0, 90.0, 128.0] {
            let n = 1000;
            let col = line_column(n, gamma, 3);
            let est = estimate_base_frequency(&col, &IntervalConfig::default()).unwrap();
            assert!((est.base_frequency - 1.0 / gamma).abs() <= 1.0 / n as f64, "gamma {gamma}");
        }
    }

    #[test]
    fn pure_noise_is_rejected() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let col: Vec<f64> = (0..1500)
                .map(|_| {
                    let v: f64 = rng.gen_range(-1.0..1.0) * 3.0;
                    if v.abs() <= 1.5 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let r = estimate_base_frequency(&col, &IntervalConfig::default());
            assert!(r.unwrap_err().is_detection_failure(), "seed {seed}");
        }
        assert!(estimate_base_frequency(&[0.0; 100], &IntervalConfig::default()).is_err());
    }

    #[test]
    fn phase_of_pulse_train() {
        let samples = (0..500).map(|i| (i as f64, if i % 50 == 7 { 1.0 } else { 0.0 }));
        let p = periodic_phase(samples, 0.02);
        assert!((p - 7.0).abs() < 1e-9);
    }

    #[test]
    fn autocorrelation_is_biased() {
        let r = autocorrelation(&[1.0, 2.0, 3.0]);
        assert_eq!(r, vec![14.0 / 3.0, 8.0 / 3.0, 1.0]);
    }

    fn mask_field(size: usize, gamma: usize) -> TernaryField {
        let cfg = PilotConfig {
            gamma,
            ..PilotConfig::default()
        };
        let mask = build_mask(size, size, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values = mask
            .cells
            .iter()
            .map(|c| c.unwrap_or_else(|| Symbol::ALL[rng.gen_range(0..3)]))
            .collect();
        TernaryField {
            width: size,
            height: size,
            values,
        }
    }

    #[test]
    fn pilot_field_interval_and_phase() {
        let field = mask_field(500, 100);
        let (v, h) = split_fields(&field).unwrap();
        let cfg = IntervalConfig::default();
        let ev = estimate_interval(&v, 0.0, &cfg).unwrap();
        let eh = estimate_interval(&h, 90.0, &cfg).unwrap();
        assert!((ev.gamma_px - 100.0).abs() < 2.0, "{}", ev.gamma_px);
        assert!((eh.gamma_px - 100.0).abs() < 2.0, "{}", eh.gamma_px);
        assert!(ev.phase_px.abs() < 1.0, "{}", ev.phase_px);
        assert!(eh.phase_px.abs() < 1.0, "{}", eh.phase_px);
        let full = IntervalConfig {
            full_transform: true,
            ..cfg
        };
        let ef = estimate_interval(&v, 0.0, &full).unwrap();
        assert!((ef.gamma_px - ev.gamma_px).abs() < 1e-9);
    }

    #[test]
    fn spectrum_csv_layout() {
        let csv = spectrum_csv(&[1.0, 0.0, -1.0, 0.0], 1);
        assert!(csv.starts_with("kind,x,value\nautocorrelation,0,0.5\n"));
        assert!(csv.contains("power,0.5,"));
    }

    #[test]
    fn noise_peaks_below_the_fundamental_are_not_taken_as_base() {
        for seed in 0..12 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let col: Vec<f64> = line_column(2768, 173.0, 5)
                .into_iter()
                .map(|v| if rng.gen_bool(0.2) { rng.gen_range(-1..=1) as f64 } else { v })
                .collect();
            let est = estimate_base_frequency(&col, &IntervalConfig::default()).unwrap();
            let gamma = 1.0 / est.base_frequency;
            assert!((gamma - 173.0).abs() / 173.0 < 0.02, "seed {seed}: {gamma}");
        }
    }
}
