//! 2×2 transformation matrices: construction from detected line directions
//! and intervals, the 180° twin, and scoring against ground truth.
//!
//! Matrices act on column vectors in mathematical coordinates (y up). The
//! first column is the image of the unit x vector (`A′`), the second the image
//! of the unit y vector (`B′`).

use serde::{Deserialize, Serialize};

use crate::angles::AnglePair;
use crate::error::{Error, Result};
use crate::interval::IntervalEstimate;

/// Smallest angle between the two line directions that still defines a lattice.
pub const MIN_LATTICE_ANGLE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformMatrix(pub [[f64; 2]; 2]);

impl TransformMatrix {
    pub const IDENTITY: TransformMatrix = TransformMatrix([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        TransformMatrix([[a, b], [c, d]])
    }

    pub fn rotation(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        TransformMatrix::new(c, -s, s, c)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        let scale = self.frobenius();
        if !self.is_finite() || det.abs() <= 1e-12 * scale * scale {
            return Err(Error::Domain(format!("matrix {:?} is singular", self.0)));
        }
        let m = &self.0;
        Ok(TransformMatrix::new(
            m[1][1] / det,
            -m[0][1] / det,
            -m[1][0] / det,
            m[0][0] / det,
        ))
    }

    /// Matrix product `self · rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &TransformMatrix) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        TransformMatrix(out)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn scaled(&self, k: f64) -> Self {
        TransformMatrix(self.0.map(|row| row.map(|v| v * k)))
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, rhs: &TransformMatrix) -> Self {
        let mut out = self.0;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= rhs.0[i][j];
            }
        }
        TransformMatrix(out)
    }
}

/// Full estimate with its 180° twin and the quantities it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformEstimate {
    pub matrix: TransformMatrix,
    pub twin: TransformMatrix,
    pub alpha: f64,
    pub beta: f64,
    /// Detected vertical-line interval divided by the embedded interval.
    pub gamma_v: f64,
    /// Detected horizontal-line interval divided by the embedded interval.
    pub gamma_h: f64,
    pub confidence: f64,
    pub angles: AnglePair,
    pub vertical: IntervalEstimate,
    pub horizontal: IntervalEstimate,
}

/// Direction angles of the transformed x axis (`α`) and y axis (`β`).
///
/// Horizontal lines run along the x axis, so their detection angle plus 90°
/// is the direction of `A′`; likewise the vertical family gives `B′`. `β` is
/// lifted by 180° when needed so that `0 < β − α < 180°`, which keeps the
/// resulting matrix orientation-preserving.
pub fn angles_to_directions(pair: &AnglePair) -> (f64, f64) {
    let alpha = (pair.phi_h + 90.0).rem_euclid(180.0);
    let beta0 = (pair.phi_v + 90.0).rem_euclid(180.0);
    let beta = if beta0 > alpha { beta0 } else { beta0 + 180.0 };
    (alpha, beta)
}

/// Matrix whose columns have directions `α`, `β` and lengths set by the
/// normalized line intervals.
pub fn build_matrix(alpha: f64, beta: f64, gamma_v: f64, gamma_h: f64) -> Result<TransformMatrix> {
    if !(gamma_v > 0.0 && gamma_h > 0.0) || !gamma_v.is_finite() || !gamma_h.is_finite() {
        return Err(Error::Domain(format!(
            "intervals must be positive, got {gamma_v} and {gamma_h}"
        )));
    }
    let separation = (beta - alpha).rem_euclid(180.0);
    let separation = separation.min(180.0 - separation);
    if separation < MIN_LATTICE_ANGLE {
        return Err(Error::DegenerateLattice(separation));
    }
    let s = (beta - alpha).to_radians().sin().abs();
    let (sa, ca) = alpha.to_radians().sin_cos();
    let (sb, cb) = beta.to_radians().sin_cos();
    Ok(TransformMatrix::new(
        gamma_v * ca / s,
        gamma_h * cb / s,
        gamma_v * sa / s,
        gamma_h * sb / s,
    ))
}

/// The 180°-rotated alternative, indistinguishable from a point-symmetric pilot.
pub fn twin_matrix(t: &TransformMatrix) -> TransformMatrix {
    t.scaled(-1.0)
}

/// `‖estimate − truth‖_F / ‖truth‖_F`.
pub fn relative_error(estimate: &TransformMatrix, truth: &TransformMatrix) -> Result<f64> {
    let norm = truth.frobenius();
    if !(norm > 0.0) {
        return Err(Error::Domain("reference matrix is zero".into()));
    }
    Ok(estimate.sub(truth).frobenius() / norm)
}

/// Whichever of the estimate and its twin lies closer to `truth`, with its error.
pub fn select_best(
    estimate: &TransformEstimate,
    truth: &TransformMatrix,
) -> Result<(TransformMatrix, f64)> {
    let primary = relative_error(&estimate.matrix, truth)?;
    let twin = relative_error(&estimate.twin, truth)?;
    Ok(if twin < primary {
        (estimate.twin, twin)
    } else {
        (estimate.matrix, primary)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &TransformMatrix, b: &TransformMatrix, tol: f64) -> bool {
        a.sub(b).frobenius() < tol
    }

    fn pair(phi_v: f64, phi_h: f64) -> AnglePair {
        AnglePair {
            phi_v,
            phi_h,
            confidence: 1.0,
        }
    }

    fn dummy_estimate(m: TransformMatrix) -> TransformEstimate {
        let iv = IntervalEstimate {
            gamma_px: 100.0,
            base_frequency: 0.01,
            harmonics_used: vec![],
            phase_px: 0.0,
        };
        TransformEstimate {
            matrix: m,
            twin: twin_matrix(&m),
            alpha: 0.0,
            beta: 90.0,
            gamma_v: 1.0,
            gamma_h: 1.0,
            confidence: 1.0,
            angles: pair(0.0, 90.0),
            vertical: iv.clone(),
            horizontal: iv,
        }
    }

    #[test]
    fn direction_examples() {
        assert_eq!(angles_to_directions(&pair(0.0, 90.0)), (0.0, 90.0));
        // rotation by 30°: vertical lines now run at 120°, horizontal at 30°
        assert_eq!(angles_to_directions(&pair(30.0, 120.0)), (30.0, 120.0));
        // shear along y by 45°: horizontal lines tilt to 45°, vertical stay put
        assert_eq!(angles_to_directions(&pair(0.0, 135.0)), (45.0, 90.0));
    }

    #[test]
    fn build_examples() {
        let m = build_matrix(0.0, 90.0, 1.0, 1.0).unwrap();
        assert!(close(&m, &TransformMatrix::IDENTITY, 1e-12));
        let m = build_matrix(30.0, 120.0, 1.0, 1.0).unwrap();
        let expect = TransformMatrix::new(0.8660254, -0.5, 0.5, 0.8660254);
        assert!(close(&m, &expect, 1e-6));
        let m = build_matrix(0.0, 90.0, 1.0, 2.0).unwrap();
        assert!(close(&m, &TransformMatrix::new(1.0, 0.0, 0.0, 2.0), 1e-12));
    }

    #[test]
    fn shear_is_recovered_exactly() {
        // shear_y(θ) maps the x axis to (1, tanθ); vertical lines keep their spacing,
        // horizontal lines keep theirs measured along the normal scaled by cosθ
        let t = 40f64.to_radians().tan();
        let truth = TransformMatrix::new(1.0, 0.0, t, 1.0);
        let alpha = t.atan().to_degrees();
        // horizontal line spacing along its normal shrinks to cos(α)
        let m = build_matrix(alpha, 90.0, 1.0, alpha.to_radians().cos()).unwrap();
        assert!(close(&m, &truth, 1e-12), "{m:?}");
    }

    #[test]
    fn degenerate_lattice() {
        assert!(matches!(
            build_matrix(10.0, 10.5, 1.0, 1.0),
            Err(Error::DegenerateLattice(_))
        ));
        assert!(matches!(
            build_matrix(10.0, 190.2, 1.0, 1.0),
            Err(Error::DegenerateLattice(_))
        ));
        assert!(build_matrix(0.0, 90.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn orthogonal_iff_perpendicular() {
        for sep in [30.0, 60.0, 89.0, 90.0, 91.0, 150.0] {
            let m = build_matrix(12.0, 12.0 + sep, 1.0, 1.0).unwrap();
            let mtm = TransformMatrix(m.0).mul(&TransformMatrix::new(m.0[0][0], m.0[1][0], m.0[0][1], m.0[1][1]));
            let orthogonal = close(&mtm, &TransformMatrix::IDENTITY, 1e-9);
            assert_eq!(orthogonal, sep == 90.0, "sep {sep}");
        }
    }

    #[test]
    fn twin_examples() {
        let i = TransformMatrix::IDENTITY;
        assert_eq!(twin_matrix(&i), TransformMatrix::new(-1.0, -0.0, -0.0, -1.0));
        let r = TransformMatrix::rotation(30.0);
        assert!(close(&twin_matrix(&r), &TransformMatrix::rotation(210.0), 1e-12));
        assert_eq!(twin_matrix(&twin_matrix(&r)), r);
    }

    #[test]
    fn relative_error_examples() {
        let i = TransformMatrix::IDENTITY;
        assert_eq!(relative_error(&i, &i).unwrap(), 0.0);
        assert!((relative_error(&twin_matrix(&i), &i).unwrap() - 2.0).abs() < 1e-12);
        let e = relative_error(&TransformMatrix::new(1.0, 0.0, 0.0, 1.1), &i).unwrap();
        assert!((e - 0.1 / 2f64.sqrt()).abs() < 1e-12);
        assert!(relative_error(&i, &TransformMatrix::new(0.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn relative_error_invariant_under_rotation_of_basis() {
        let a = TransformMatrix::new(1.2, 0.3, -0.1, 0.9);
        let b = TransformMatrix::new(1.0, 0.25, 0.0, 1.0);
        let q = TransformMatrix::rotation(37.0);
        let qt = TransformMatrix::rotation(-37.0);
        let e1 = relative_error(&a, &b).unwrap();
        let e2 = relative_error(&q.mul(&a).mul(&qt), &q.mul(&b).mul(&qt)).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn select_best_examples() {
        let truth = TransformMatrix::rotation(30.0);
        let (m, e) = select_best(&dummy_estimate(truth), &truth).unwrap();
        assert_eq!((m, e), (truth, 0.0));
        let (m, e) = select_best(&dummy_estimate(twin_matrix(&truth)), &truth).unwrap();
        assert!(close(&m, &truth, 1e-15) && e < 1e-15);
        let off = TransformMatrix::new(0.8, -0.5, 0.5, 0.9);
        let (m, e) = select_best(&dummy_estimate(off), &truth).unwrap();
        assert_eq!(m, off);
        assert!((e - relative_error(&off, &truth).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn inverse_and_json() {
        let m = TransformMatrix::new(2.0, 1.0, 0.5, 1.5);
        assert!(close(&m.mul(&m.inverse().unwrap()), &TransformMatrix::IDENTITY, 1e-12));
        assert!(TransformMatrix::new(1.0, 2.0, 2.0, 4.0).inverse().is_err());
        let json = serde_json::to_string(&TransformMatrix::IDENTITY).unwrap();
        assert_eq!(json, "[[1.0,0.0],[0.0,1.0]]");
    }
}
