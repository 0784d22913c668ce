//! Discrete Radon transform by rotate-and-sum, plus per-angle standardization
//! and threshold denoising of the resulting sinogram.
//!
//! Coordinates are mathematical (x right, y up) with the origin at the field
//! center. For projection angle `φ` the coefficient at offset `ρ` is
//!
//! ```text
//! R(φ, ρ) = Σ_u f(ρ·cosφ − u·sinφ, ρ·sinφ + u·cosφ)
//! ```
//!
//! sampled at unit steps in `u` with bilinear interpolation. Samples outside
//! the field read as zero. Lines running in direction `φ + 90°` are integrated
//! at angle `φ`, so vertical lines peak at 0° and horizontal lines at 90°.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_ANGLE_STEP: f64 = 0.5;
pub const DEFAULT_TAU: f64 = 1.5;

/// Real-valued raster in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} field",
                data.len()
            )));
        }
        Ok(Field {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Field {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample at pixel coordinates, zero outside the raster.
    #[inline]
    fn sample(&self, px: f64, py: f64) -> f64 {
        let xf = px.floor();
        let yf = py.floor();
        let (fx, fy) = (px - xf, py - yf);
        let (x0, y0) = (xf as isize, yf as isize);
        let (w, h) = (self.width as isize, self.height as isize);
        if x0 >= 0 && y0 >= 0 && x0 + 1 < w && y0 + 1 < h {
            let i = y0 as usize * self.width + x0 as usize;
            let d = &self.data;
            let top = d[i] + fx * (d[i + 1] - d[i]);
            let bottom = d[i + self.width] + fx * (d[i + self.width + 1] - d[i + self.width]);
            return top + fy * (bottom - top);
        }
        if x0 < -1 || y0 < -1 || x0 >= w || y0 >= h {
            return 0.0;
        }
        let at = |x: isize, y: isize| -> f64 {
            if x < 0 || y < 0 || x >= w || y >= h {
                0.0
            } else {
                self.data[y as usize * self.width + x as usize]
            }
        };
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Radon coefficients indexed by (angle, offset).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    /// Projection angles in degrees.
    pub angles: Vec<f64>,
    /// Projection offsets in pixels, 1 px apart, 0 at the field center.
    pub offsets: Vec<f64>,
    /// Angle-major coefficients: `coeffs[a * offsets.len() + j]`.
    pub coeffs: Vec<f64>,
    /// Per angle, the half-open offset index range where the projection crosses the field.
    pub support: Vec<(usize, usize)>,
    /// Set by [`normalize_sinogram`] on columns with zero variance.
    pub flat_columns: Vec<bool>,
}

impl Sinogram {
    pub fn column(&self, a: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.coeffs[a * n..(a + 1) * n]
    }

    pub fn supported_column(&self, a: usize) -> &[f64] {
        let (lo, hi) = self.support[a];
        &self.column(a)[lo..hi]
    }

    /// Index of the stored angle closest to `deg`, comparing modulo 180°.
    pub fn angle_index(&self, deg: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &a) in self.angles.iter().enumerate() {
            let d = angular_distance(a, deg);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle,offset,value\n");
        for (a, &angle) in self.angles.iter().enumerate() {
            for (j, &rho) in self.offsets.iter().enumerate() {
                let _ = writeln!(out, "{angle},{rho},{}", self.column(a)[j]);
            }
        }
        out
    }
}

/// Distance between two directions modulo 180°.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Odd canvas side covering the field at every angle.
fn canvas_side(width: usize, height: usize) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt().ceil() as usize;
    diag | 1
}

/// Sum of bilinear samples at `(x0 + k·dx, y0 + k·dy)` for integer `k` in `lo..=hi`,
/// in ascending `k`. `add` receives `(k, value)`.
#[inline(always)]
fn walk(field: &Field, (x0, dx): (f64, f64), (y0, dy): (f64, f64), (lo, hi): (isize, isize), mut add: impl FnMut(isize, f64)) {
    let (w, h) = (field.width, field.height);
    // interior span where all four neighbours exist, shrunk slightly for rounding safety
    let inner = sample_range_closed(x0, dx, 1e-9, w as f64 - 1.0 - 1e-9)
        .and_then(|r| intersect(r, sample_range_closed(y0, dy, 1e-9, h as f64 - 1.0 - 1e-9)?))
        .and_then(|r| intersect(r, (lo, hi)));
    let (ilo, ihi) = inner.unwrap_or((hi + 1, hi));
    for k in lo..ilo.min(hi + 1) {
        let kf = k as f64;
        add(k, field.sample(x0 + kf * dx, y0 + kf * dy));
    }
    let d = &field.data[..];
    for k in ilo..=ihi {
        let kf = k as f64;
        let (px, py) = (x0 + kf * dx, y0 + kf * dy);
        // truncation equals floor on the non-negative interior
        let (xi, yi) = (px as usize, py as usize);
        let (fx, fy) = (px - xi as f64, py - yi as f64);
        let i = yi * w + xi;
        let top = d[i] + fx * (d[i + 1] - d[i]);
        let bottom = d[i + w] + fx * (d[i + w + 1] - d[i + w]);
        add(k, top + fy * (bottom - top));
    }
    for k in (ihi + 1).max(lo)..=hi {
        let kf = k as f64;
        add(k, field.sample(x0 + kf * dx, y0 + kf * dy));
    }
}

/// Integer `k` for which `start + k * slope` lies in `[min, max]`, unclamped.
fn sample_range_closed(start: f64, slope: f64, min: f64, max: f64) -> Option<(isize, isize)> {
    if slope.abs() < 1e-12 {
        return (start >= min && start <= max).then_some((isize::MIN / 4, isize::MAX / 4));
    }
    let a = (min - start) / slope;
    let b = (max - start) / slope;
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    let (lo, hi) = (a.ceil() as isize, b.floor() as isize);
    (lo <= hi).then_some((lo, hi))
}

fn project(field: &Field, angle_deg: f64, half: isize) -> Vec<f64> {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cx = (field.width as f64 - 1.0) / 2.0;
    let cy = (field.height as f64 - 1.0) / 2.0;
    let side = (2 * half + 1) as usize;
    let (w, h) = (field.width as f64, field.height as f64);
    let mut column = vec![0.0; side];
    // Sample (ρ, u) sits at pixel (ρc + cx − us, cy − ρs − uc). Whichever of the
    // two walks moves mostly along rows goes innermost so memory is read in
    // order; every coefficient still accumulates its samples in ascending u.
    if c.abs() >= s.abs() {
        for u in -half..=half {
            let uf = u as f64;
            let (bx, by) = (cx - uf * s, cy - uf * c);
            let Some(range) = sample_range(bx, c, -1.0, w, half)
                .and_then(|r| intersect(r, sample_range(by, -s, -1.0, h, half)?))
            else {
                continue;
            };
            walk(field, (bx, c), (by, -s), range, |rho, v| {
                column[(rho + half) as usize] += v;
            });
        }
    } else {
        for (j, out) in column.iter_mut().enumerate() {
            let rho = j as f64 - half as f64;
            let (ax, ay) = (rho * c + cx, cy - rho * s);
            let Some(range) = sample_range(ax, -s, -1.0, w, half)
                .and_then(|r| intersect(r, sample_range(ay, -c, -1.0, h, half)?))
            else {
                continue;
            };
            let mut acc = 0.0;
            walk(field, (ax, -s), (ay, -c), range, |_, v| acc += v);
            *out = acc;
        }
    }
    column
}

/// Integer `u` in `[-half, half]` for which `start + u * slope` lies in `(min, max)`.
fn sample_range(start: f64, slope: f64, min: f64, max: f64, half: isize) -> Option<(isize, isize)> {
    const EPS: f64 = 1e-9;
    let (lo, hi) = if slope.abs() < EPS {
        if start > min && start < max {
            (-half, half)
        } else {
            return None;
        }
    } else {
        let a = (min - start) / slope;
        let b = (max - start) / slope;
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        ((a.floor() as isize).max(-half), (b.ceil() as isize).min(half))
    };
    (lo <= hi).then_some((lo, hi))
}

fn intersect(a: (isize, isize), b: (isize, isize)) -> Option<(isize, isize)> {
    let r = (a.0.max(b.0), a.1.min(b.1));
    (r.0 <= r.1).then_some(r)
}

fn support_range(field: &Field, angle_deg: f64, half: isize) -> (usize, usize) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let cx = (field.width as f64 - 1.0) / 2.0;
    let cy = (field.height as f64 - 1.0) / 2.0;
    let reach = cx * c.abs() + cy * s.abs() + 0.5;
    let lo = (-reach).ceil().max(-half as f64) as isize + half;
    let hi = reach.floor().min(half as f64) as isize + half;
    (lo as usize, hi as usize + 1)
}

/// Radon coefficients at the given angles only.
pub fn radon_columns(field: &Field, angles: &[f64]) -> Result<Sinogram> {
    if field.width == 0 || field.height == 0 || field.data.is_empty() {
        return Err(Error::Shape("empty field".into()));
    }
    if field.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("field contains non-finite samples".into()));
    }
    let side = canvas_side(field.width, field.height);
    let half = (side as isize - 1) / 2;
    let columns: Vec<Vec<f64>> = angles.par_iter().map(|&a| project(field, a, half)).collect();
    let support = angles.iter().map(|&a| support_range(field, a, half)).collect();
    Ok(Sinogram {
        angles: angles.to_vec(),
        offsets: (0..side).map(|j| j as f64 - half as f64).collect(),
        coeffs: columns.concat(),
        support,
        flat_columns: vec![false; angles.len()],
    })
}

/// Full sinogram over `[0°, 180°)` with the given angle step.
pub fn radon_transform(field: &Field, angle_step: f64) -> Result<Sinogram> {
    if !(angle_step > 0.0) {
        return Err(Error::Config(format!("angle step must be positive, got {angle_step}")));
    }
    let n = (180.0 / angle_step).round();
    if n < 2.0 || (n * angle_step - 180.0).abs() > 1e-9 {
        return Err(Error::Config(format!("angle step {angle_step} does not divide 180")));
    }
    let angles: Vec<f64> = (0..n as usize).map(|i| i as f64 * angle_step).collect();
    radon_columns(field, &angles)
}

/// `field` minus its mean over a `(2r+1)²` window clipped to the field.
pub fn local_mean_highpass(field: &Field, r: usize) -> Field {
    let (w, h) = (field.width, field.height);
    let mut integral = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut run = 0.0;
        for x in 0..w {
            run += field.data[y * w + x];
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + run;
        }
    }
    Field::from_fn(w, h, |x, y| {
        let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        let sum = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0]
            + integral[y0 * (w + 1) + x0];
        field.data[y * w + x] - sum / ((x1 - x0) * (y1 - y0)) as f64
    })
}

/// Standardizes every angle column over its supported offsets.
///
/// Columns with zero variance become all zeros and are flagged in `flat_columns`.
pub fn normalize_sinogram(s: &Sinogram) -> Sinogram {
    let mut out = s.clone();
    let n = s.offsets.len();
    for a in 0..s.angles.len() {
        let (lo, hi) = s.support[a];
        let (mean, std) = mean_std(&s.column(a)[lo..hi]);
        let col = &mut out.coeffs[a * n..(a + 1) * n];
        let flat = !(std > 1e-12 * (1.0 + mean.abs()));
        out.flat_columns[a] = flat;
        for (j, v) in col.iter_mut().enumerate() {
            *v = if flat || j < lo || j >= hi {
                0.0
            } else {
                (*v - mean) / std
            };
        }
    }
    out
}

pub fn threshold_denoise(s: &Sinogram, tau: f64) -> Sinogram {
    let mut out = s.clone();
    for v in out.coeffs.iter_mut() {
        if v.abs() <= tau {
            *v = 0.0;
        }
    }
    out
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_column_sinogram(values: Vec<f64>) -> Sinogram {
        let n = values.len();
        Sinogram {
            angles: vec![0.0],
            offsets: (0..n).map(|j| j as f64).collect(),
            coeffs: values,
            support: vec![(0, n)],
            flat_columns: vec![false],
        }
    }

    #[test]
    fn zero_field_gives_zero_sinogram() {
        let f = Field::new(9, 7, vec![0.0; 63]).unwrap();
        let s = radon_transform(&f, 10.0).unwrap();
        assert!(s.coeffs.iter().all(|&v| v == 0.0));
        assert_eq!(s.angles.len(), 18);
    }

    #[test]
    fn vertical_line_peaks_at_zero_degrees() {
        let (w, h) = (31, 41);
        let f = Field::from_fn(w, h, |x, _| if x == 15 { 1.0 } else { 0.0 });
        let s = radon_columns(&f, &[0.0, 90.0]).unwrap();
        let col = s.column(0);
        let (j, &peak) = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(s.offsets[j], 0.0);
        assert!((peak - h as f64).abs() < 1e-9);
        // at 90 degrees the line is spread across offsets
        assert!(s.column(1).iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn horizontal_line_offset_sign() {
        // a row above the center sits at positive rho when projected at 90 degrees
        let f = Field::from_fn(21, 21, |_, y| if y == 4 { 1.0 } else { 0.0 });
        let s = radon_columns(&f, &[90.0]).unwrap();
        let j = s.column(0).iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(s.offsets[j], 6.0);
    }

    #[test]
    fn empty_field_is_shape_error() {
        let f = Field {
            width: 0,
            height: 0,
            data: vec![],
        };
        assert!(matches!(radon_columns(&f, &[0.0]), Err(Error::Shape(_))));
        let f = Field::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(radon_transform(&f, 0.7).is_err());
    }

    #[test]
    fn normalize_examples() {
        let s = normalize_sinogram(&single_column_sinogram(vec![0.0, 10.0]));
        assert_eq!(s.column(0), &[-1.0, 1.0]);

        let s = normalize_sinogram(&single_column_sinogram(vec![3.0; 5]));
        assert!(s.column(0).iter().all(|&v| v == 0.0));
        assert!(s.flat_columns[0]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let f = Field::from_fn(20, 16, |x, y| ((x * 7 + y * 13) % 5) as f64);
        let once = normalize_sinogram(&radon_transform(&f, 15.0).unwrap());
        let twice = normalize_sinogram(&once);
        for (a, b) in once.coeffs.iter().zip(&twice.coeffs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold_examples() {
        let s = threshold_denoise(&single_column_sinogram(vec![1.5, -2.3, 0.2, -1.5, 1.51]), 1.5);
        assert_eq!(s.column(0), &[0.0, -2.3, 0.0, 0.0, 1.51]);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let s = single_column_sinogram(vec![1.0, 2.0]);
        let csv = s.to_csv();
        assert_eq!(csv, "angle,offset,value\n0,0,1\n0,1,2\n");
    }

    /// Direct line sums: every (angle, offset, u) on the canvas, tent-kernel
    /// interpolation against every neighbouring pixel, no range clipping.
    fn brute_force(f: &Field, angles: &[f64]) -> Vec<Vec<f64>> {
        let side = canvas_side(f.width, f.height) as isize;
        let half = (side - 1) / 2;
        let cx = (f.width as f64 - 1.0) / 2.0;
        let cy = (f.height as f64 - 1.0) / 2.0;
        angles
            .iter()
            .map(|&deg| {
                let t = deg.to_radians();
                (-half..=half)
                    .map(|rho| {
                        let rho = rho as f64;
                        let mut acc = 0.0;
                        for u in -half..=half {
                            let u = u as f64;
                            let x = rho * t.cos() - u * t.sin();
                            let y = rho * t.sin() + u * t.cos();
                            let (px, py) = (x + cx, cy - y);
                            for row in 0..f.height {
                                let wy = 1.0 - (py - row as f64).abs();
                                if wy <= 0.0 {
                                    continue;
                                }
                                for col in 0..f.width {
                                    let wx = 1.0 - (px - col as f64).abs();
                                    if wx > 0.0 {
                                        acc += wx * wy * f.get(col, row);
                                    }
                                }
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn pseudo_random_field(w: usize, h: usize, seed: u64) -> Field {
        let mut state = seed;
        Field::from_fn(w, h, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 1000) as f64 / 100.0 - 5.0
        })
    }

    #[test]
    fn matches_brute_force_line_sums() {
        for &(w, h) in &[(13usize, 9usize), (8, 14), (11, 11)] {
            let f = pseudo_random_field(w, h, (w * 31 + h) as u64);
            let angles = [0.0, 17.5, 45.0, 90.0, 121.0, 179.5];
            let fast = radon_columns(&f, &angles).unwrap();
            let slow = brute_force(&f, &angles);
            for (a, col) in slow.iter().enumerate() {
                for (j, v) in col.iter().enumerate() {
                    let got = fast.column(a)[j];
                    assert!((got - v).abs() < 1e-6, "{w}x{h} angle {} j {j}: {got} vs {v}", angles[a]);
                }
            }
        }
    }

    #[test]
    fn linear_in_the_field() {
        let f = pseudo_random_field(17, 12, 3);
        let g = pseudo_random_field(17, 12, 4);
        let combo = Field::new(
            17,
            12,
            f.data.iter().zip(&g.data).map(|(a, b)| 2.0 * a - 0.5 * b).collect(),
        )
        .unwrap();
        let rf = radon_transform(&f, 7.5).unwrap();
        let rg = radon_transform(&g, 7.5).unwrap();
        let rc = radon_transform(&combo, 7.5).unwrap();
        for i in 0..rc.coeffs.len() {
            let expect = 2.0 * rf.coeffs[i] - 0.5 * rg.coeffs[i];
            assert!((rc.coeffs[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn column_mass_matches_field_mass() {
        // smooth positive content so interpolation does not bias the total
        let f = Field::from_fn(240, 180, |x, y| {
            let (x, y) = (x as f64, y as f64);
            10.0 + (x / 9.0).sin() * 3.0 + (y / 7.0).cos() * 2.0
        });
        let total: f64 = f.data.iter().sum();
        let s = radon_transform(&f, 7.5).unwrap();
        for a in 0..s.angles.len() {
            let mass: f64 = s.column(a).iter().sum();
            let rel = (mass - total).abs() / total;
            assert!(rel < 1e-3, "angle {}: relative mass error {rel}", s.angles[a]);
        }
    }

    #[test]
    fn support_holds_nearly_all_mass() {
        let f = Field::new(15, 10, vec![1.0; 150]).unwrap();
        let s = radon_transform(&f, 5.0).unwrap();
        for a in 0..s.angles.len() {
            let inside: f64 = s.supported_column(a).iter().sum();
            let total: f64 = s.column(a).iter().sum();
            assert!((total - inside) / total < 0.02, "angle {}", s.angles[a]);
        }
    }

    #[test]
    fn angle_lookup_wraps() {
        let f = Field::new(4, 4, vec![0.0; 16]).unwrap();
        let s = radon_transform(&f, 0.5).unwrap();
        assert_eq!(s.angle_index(179.9), 0);
        assert_eq!(s.angle_index(30.2), 60);
    }

    #[test]
    fn highpass_removes_constants_and_keeps_thin_lines() {
        let flat = Field::from_fn(40, 30, |_, _| 3.5);
        let hp = local_mean_highpass(&flat, 5);
        assert!(hp.data.iter().all(|v| v.abs() < 1e-12));

        let line = Field::from_fn(41, 41, |x, _| if x == 20 { 1.0 } else { 0.0 });
        let hp = local_mean_highpass(&line, 5);
        assert!((hp.get(20, 20) - (1.0 - 1.0 / 11.0)).abs() < 1e-12);
        assert!((hp.get(17, 20) + 1.0 / 11.0).abs() < 1e-12);
        assert!(hp.get(5, 20).abs() < 1e-12);
        assert_eq!(local_mean_highpass(&line, 0).data, vec![0.0; 41 * 41]);
    }
}
