//! Deterministic synthetic photographs for tests and experiments.
//!
//! Each fixture is a sum of value-noise octaves and a smooth colour gradient,
//! giving natural-looking low-frequency structure with fine texture, rounded
//! to 8 bits. The same `(width, height, seed)` always yields the same image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imagery::{ColorSpace, PlanarImage};

pub const HIGH_RES: (usize, usize) = (2048, 2048);
pub const LOW_RES: (usize, usize) = (768, 512);

/// Smoothly interpolated random lattice with spacing `cell` pixels.
struct ValueNoise {
    cols: usize,
    values: Vec<f64>,
    cell: f64,
}

impl ValueNoise {
    fn new(width: usize, height: usize, cell: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = width / cell + 2;
        let rows = height / cell + 2;
        let values = (0..cols * rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ValueNoise {
            cols,
            values,
            cell: cell as f64,
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let (gx, gy) = (x as f64 / self.cell, y as f64 / self.cell);
        let (ix, iy) = (gx as usize, gy as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
        let v = |i: usize, j: usize| self.values[j * self.cols + i];
        let top = v(ix, iy) + tx * (v(ix + 1, iy) - v(ix, iy));
        let bottom = v(ix, iy + 1) + tx * (v(ix + 1, iy + 1) - v(ix, iy + 1));
        top + ty * (bottom - top)
    }
}

fn octaves(width: usize, height: usize, rng: &mut ChaCha8Rng, finest: usize) -> Vec<ValueNoise> {
    let mut cell = 512;
    let mut out = Vec::new();
    while cell >= finest {
        out.push(ValueNoise::new(width, height, cell, rng));
        cell /= 2;
    }
    out
}

/// RGB fixture of the given size.
pub fn synthetic_photo(width: usize, height: usize, seed: u64) -> PlanarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let luma = octaves(width, height, &mut rng, 2);
    let chroma: Vec<Vec<ValueNoise>> = (0..3).map(|_| octaves(width, height, &mut rng, 16)).collect();
    let tint: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-30.0..30.0));
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (gs, gc) = angle.sin_cos();
    let contrast: f64 = rng.gen_range(45.0..70.0);
    let scale = (width.max(height)) as f64;

    let mut planes: [Vec<f32>; 3] = Default::default();
    for p in planes.iter_mut() {
        p.reserve(width * height);
    }
    for y in 0..height {
        for x in 0..width {
            let l: f64 = luma
                .iter()
                .enumerate()
                .map(|(k, n)| n.at(x, y) * 0.62f64.powi(k as i32))
                .sum();
            let ramp = ((x as f64 * gc + y as f64 * gs) / scale) * 40.0;
            for (c, plane) in planes.iter_mut().enumerate() {
                let ch: f64 = chroma[c]
                    .iter()
                    .enumerate()
                    .map(|(k, n)| n.at(x, y) * 0.5f64.powi(k as i32))
                    .sum();
                let v = 128.0 + contrast * l + ramp + tint[c] + 18.0 * ch;
                plane.push(v.clamp(0.0, 255.0).round() as f32);
            }
        }
    }
    PlanarImage::new(width, height, planes, ColorSpace::Rgb).expect("consistent fixture planes")
}

/// Seeds used for the numbered fixture sets.
pub fn fixture_seed(index: usize, high_res: bool) -> u64 {
    (if high_res { 0x5eed_0000 } else { 0x10e5_0000 }) + index as u64
}

pub fn high_res_fixture(index: usize) -> PlanarImage {
    synthetic_photo(HIGH_RES.0, HIGH_RES.1, fixture_seed(index, true))
}

pub fn low_res_fixture(index: usize) -> PlanarImage {
    synthetic_photo(LOW_RES.0, LOW_RES.1, fixture_seed(index, false))
}
