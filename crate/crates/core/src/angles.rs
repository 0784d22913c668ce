//! Detection of the two pilot line directions from a sinogram.
//!
//! The per-angle variance of the Radon coefficients peaks where the projection
//! runs along a line family. Peaks are located by a sign change of the
//! variance derivative, and the family carrying negative symbols (vertical
//! lines) is told apart from the positive one (horizontal lines) by counting
//! the signs of the surviving coefficients after denoising.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radon::{angular_distance, mean_std, Sinogram};

/// Default minimum separation between the two selected detection angles, in degrees.
pub const MIN_PEAK_SEPARATION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    pub angles: Vec<f64>,
    pub variance: Vec<f64>,
    /// Central-difference derivative in variance per degree, one-sided at the ends.
    pub derivative: Vec<f64>,
}

impl VarianceProfile {
    /// Builds a profile from raw variances, computing the derivative.
    pub fn from_variance(angles: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if angles.len() != variance.len() {
            return Err(Error::Shape(format!(
                "{} angles but {} variances",
                angles.len(),
                variance.len()
            )));
        }
        let derivative = linear_derivative(&angles, &variance);
        Ok(VarianceProfile {
            angles,
            variance,
            derivative,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle,variance,derivative\n");
        for i in 0..self.angles.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                self.angles[i], self.variance[i], self.derivative[i]
            );
        }
        out
    }

    /// True when the angles are evenly spaced and cover the half turn exactly.
    fn is_circular(&self) -> bool {
        let n = self.angles.len();
        if n < 3 {
            return false;
        }
        let step = 180.0 / n as f64;
        self.angles
            .iter()
            .enumerate()
            .all(|(i, &a)| (a - self.angles[0] - i as f64 * step).abs() < 1e-6)
    }
}

fn linear_derivative(angles: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                0.0
            } else if i == 0 {
                (v[1] - v[0]) / (angles[1] - angles[0])
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / (angles[n - 1] - angles[n - 2])
            } else {
                (v[i + 1] - v[i - 1]) / (angles[i + 1] - angles[i - 1])
            }
        })
        .collect()
}

/// Detection angles with their variances, ordered so that `angles[0] < angles[1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakAngles {
    pub angles: [f64; 2],
    pub variances: [f64; 2],
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub phi_v: f64,
    pub phi_h: f64,
    pub confidence: f64,
}

/// Variance of every sinogram column over its supported offsets.
pub fn variance_profile(s: &Sinogram) -> Result<VarianceProfile> {
    if s.angles.is_empty() {
        return Err(Error::Shape("empty sinogram".into()));
    }
    let variance = (0..s.angles.len())
        .into_par_iter()
        .map(|a| {
            let (_, std) = mean_std(s.supported_column(a));
            std * std
        })
        .collect();
    VarianceProfile::from_variance(s.angles.clone(), variance)
}

/// The two strongest variance maxima at least [`MIN_PEAK_SEPARATION`] apart.
pub fn find_peak_angles(p: &VarianceProfile) -> Result<PeakAngles> {
    find_peak_angles_with(p, MIN_PEAK_SEPARATION)
}

/// The two strongest variance maxima at least `min_separation` degrees apart.
pub fn find_peak_angles_with(p: &VarianceProfile, min_separation: f64) -> Result<PeakAngles> {
    let n = p.variance.len();
    let circular = p.is_circular();
    // derivative used for the crossing test: wraps around on a full half turn
    let dv: Vec<f64> = if circular {
        let step = 180.0 / n as f64;
        (0..n)
            .map(|i| (p.variance[(i + 1) % n] - p.variance[(i + n - 1) % n]) / (2.0 * step))
            .collect()
    } else {
        p.derivative.clone()
    };

    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let (prev, next) = if circular {
                ((i + n - 1) % n, (i + 1) % n)
            } else if i == 0 || i + 1 == n {
                return false;
            } else {
                (i - 1, i + 1)
            };
            dv[prev] * dv[next] < 0.0 && dv[prev] > 0.0
        })
        .collect();
    candidates.sort_by(|&a, &b| p.variance[b].total_cmp(&p.variance[a]).then(a.cmp(&b)));

    let mut chosen: Vec<usize> = Vec::with_capacity(2);
    for &c in &candidates {
        if chosen
            .iter()
            .all(|&k| angular_distance(p.angles[k], p.angles[c]) >= min_separation)
        {
            chosen.push(c);
            if chosen.len() == 2 {
                break;
            }
        }
    }
    if chosen.len() < 2 {
        return Err(Error::DetectionFailure(format!(
            "{} variance peak(s) found, two line directions required",
            chosen.len()
        )));
    }
    chosen.sort_by(|&a, &b| p.angles[a].total_cmp(&p.angles[b]));

    let mut sorted = p.variance.clone();
    sorted.sort_by(f64::total_cmp);
    let median = median_of_sorted(&sorted);
    let top = p.variance[chosen[0]].max(p.variance[chosen[1]]);
    let confidence = if median > 0.0 { top / median } else { f64::INFINITY };
    Ok(PeakAngles {
        angles: [p.angles[chosen[0]], p.angles[chosen[1]]],
        variances: [p.variance[chosen[0]], p.variance[chosen[1]]],
        confidence,
    })
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Decides which detection angle belongs to the negative (vertical) line family.
///
/// Each column scores `#negative − #positive` entries; the higher score is the
/// vertical family. Equal scores cannot be resolved and are reported as a
/// detection failure.
pub fn classify_direction(
    denoised: &Sinogram,
    phi_1: f64,
    phi_2: f64,
    confidence: f64,
) -> Result<AnglePair> {
    let score = |phi: f64| -> (i64, usize) {
        let col = denoised.supported_column(denoised.angle_index(phi));
        let neg = col.iter().filter(|&&v| v < 0.0).count() as i64;
        let pos = col.iter().filter(|&&v| v > 0.0).count() as i64;
        (neg - pos, (neg + pos) as usize)
    };
    let (s1, n1) = score(phi_1);
    let (s2, n2) = score(phi_2);
    if n1 == 0 && n2 == 0 {
        return Err(Error::DetectionFailure(
            "no line responses survive denoising at either detection angle".into(),
        ));
    }
    if s1 == s2 {
        return Err(Error::DetectionFailure(format!(
            "cannot tell line families apart at {phi_1} and {phi_2} degrees"
        )));
    }
    let (phi_v, phi_h) = if s1 > s2 { (phi_1, phi_2) } else { (phi_2, phi_1) };
    Ok(AnglePair {
        phi_v,
        phi_h,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_from(f: impl Fn(f64) -> f64, step: f64) -> VarianceProfile {
        let n = (180.0 / step).round() as usize;
        let angles: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        let variance = angles.iter().map(|&a| f(a)).collect();
        VarianceProfile::from_variance(angles, variance).unwrap()
    }

    fn bump(a: f64, center: f64, width: f64) -> f64 {
        let d = angular_distance(a, center);
        (-(d * d) / (2.0 * width * width)).exp()
    }

    #[test]
    fn two_smooth_peaks() {
        let p = profile_from(|a| 1.0 + 5.0 * bump(a, 60.0, 3.0) + 4.0 * bump(a, 150.0, 3.0), 0.5);
        let peaks = find_peak_angles(&p).unwrap();
        assert_eq!(peaks.angles, [60.0, 150.0]);
        assert!(peaks.confidence > 5.0);
    }

    #[test]
    fn adjacent_ridge_samples_collapse_to_one_peak() {
        // a ridge with two local maxima one sample apart, plus a weaker distinct peak
        let mut p = profile_from(|a| 1.0 + 3.0 * bump(a, 100.0, 4.0), 1.0);
        p.variance[40] = 10.0;
        p.variance[41] = 9.5;
        p.variance[42] = 9.9;
        p.variance[43] = 5.0;
        p = VarianceProfile::from_variance(p.angles, p.variance).unwrap();
        let peaks = find_peak_angles(&p).unwrap();
        assert!(peaks.angles.contains(&100.0), "{:?}", peaks.angles);
        assert!(peaks.angles[0] >= 40.0 && peaks.angles[0] <= 42.0);
    }

    #[test]
    fn flat_profile_fails() {
        let p = profile_from(|_| 2.0, 0.5);
        assert!(find_peak_angles(&p).unwrap_err().is_detection_failure());
    }

    #[test]
    fn wraparound_peak_is_found() {
        let p = profile_from(|a| 1.0 + 5.0 * bump(a, 0.0, 2.0) + 5.0 * bump(a, 90.0, 2.0), 0.5);
        let peaks = find_peak_angles(&p).unwrap();
        assert_eq!(peaks.angles, [0.0, 90.0]);
    }

    #[test]
    fn minima_are_not_candidates() {
        let p = profile_from(|a| 10.0 - 5.0 * bump(a, 45.0, 3.0) - 5.0 * bump(a, 120.0, 3.0), 0.5);
        assert!(find_peak_angles(&p).is_err());
    }

    #[test]
    fn invariant_under_constant_offset() {
        let f = |a: f64| 2.0 * bump(a, 33.0, 2.0) + 3.0 * bump(a, 97.5, 5.0) + 0.5 * bump(a, 160.0, 1.0);
        let a = find_peak_angles(&profile_from(f, 0.5)).unwrap();
        let b = find_peak_angles(&profile_from(|x| f(x) + 123.0, 0.5)).unwrap();
        assert_eq!(a.angles, b.angles);
    }

    #[test]
    fn derivative_of_symmetric_peak_is_antisymmetric() {
        let p = profile_from(|a| bump(a, 90.0, 5.0), 1.0);
        for k in 1..20 {
            assert!((p.derivative[90 - k] + p.derivative[90 + k]).abs() < 1e-12);
            assert!(p.derivative[90 - k] > 0.0);
        }
    }

    fn two_column_sinogram(a: Vec<f64>, b: Vec<f64>) -> Sinogram {
        let n = a.len();
        Sinogram {
            angles: vec![10.0, 100.0],
            offsets: (0..n).map(|j| j as f64).collect(),
            coeffs: [a, b].concat(),
            support: vec![(0, n), (0, n)],
            flat_columns: vec![false, false],
        }
    }

    #[test]
    fn negative_column_is_vertical_family() {
        let s = two_column_sinogram(vec![-8.1, 0.0, -7.9, 0.0, 2.0], vec![6.2, 0.0, 7.0, 0.0, -2.0]);
        let pair = classify_direction(&s, 10.0, 100.0, 1.0).unwrap();
        assert_eq!((pair.phi_v, pair.phi_h), (10.0, 100.0));
        let swapped = classify_direction(&s, 100.0, 10.0, 1.0).unwrap();
        assert_eq!(pair, swapped);
    }

    #[test]
    fn empty_or_tied_columns_fail() {
        let s = two_column_sinogram(vec![0.0; 4], vec![0.0; 4]);
        assert!(classify_direction(&s, 10.0, 100.0, 1.0).unwrap_err().is_detection_failure());
        let s = two_column_sinogram(vec![-2.0, 2.0, 0.0], vec![3.0, -3.0, 0.0]);
        assert!(classify_direction(&s, 10.0, 100.0, 1.0).is_err());
    }

    #[test]
    fn zero_sinogram_gives_zero_profile() {
        let s = two_column_sinogram(vec![0.0; 6], vec![0.0; 6]);
        let p = variance_profile(&s).unwrap();
        assert!(p.variance.iter().all(|&v| v == 0.0));
        assert!(p.to_csv().starts_with("angle,variance,derivative\n10,0,0\n"));
    }
}
