//! Grid-shaped ternary pilot: layout, embedding into the U plane and raw
//! symbol extraction.
//!
//! Layout, per axis with interval `γ` and line width `w`:
//!
//! * vertical lines of `-1` centered on columns `x ≡ 0 (mod γ)` and of `0` on `x ≡ γ/2`,
//! * horizontal lines of `+1` centered on rows `y ≡ 0 (mod γ)` and of `0` on `y ≡ γ/2`,
//! * crossings cycle through the alphabet as `((x mod γ + y mod γ) mod 3) - 1`.
//!
//! After the vertical/horizontal remap done by the interval estimator each
//! family becomes a train of alternating `±1` lines with period `γ`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{ColorSpace, PlanarImage};
use crate::qim::{embed_symbol, extract_symbol, QimParams, Symbol};

/// Index of the chroma plane that carries the pilot.
pub const PILOT_PLANE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotConfig {
    /// Spacing of like-valued lines in pixels.
    pub gamma: usize,
    pub line_width: usize,
    #[serde(flatten)]
    pub qim: QimParams,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            gamma: 100,
            line_width: 5,
            qim: QimParams::default(),
        }
    }
}

impl PilotConfig {
    pub fn new(gamma: usize, line_width: usize, qim: QimParams) -> Result<Self> {
        let cfg = PilotConfig {
            gamma,
            line_width,
            qim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.line_width == 0 {
            return Err(Error::Config("line width must be at least 1".into()));
        }
        if !self.gamma.is_multiple_of(2) {
            return Err(Error::Config(format!("grid interval {} must be even", self.gamma)));
        }
        if self.gamma <= 2 * self.line_width {
            return Err(Error::Config(format!(
                "grid interval {} must exceed twice the line width {}",
                self.gamma, self.line_width
            )));
        }
        QimParams::new(self.qim.delta)?;
        Ok(())
    }

    #[inline]
    pub(crate) fn on_line(&self, coord: usize, center: usize) -> bool {
        let lead = (self.line_width - 1) / 2;
        (coord + lead + self.gamma - center) % self.gamma < self.line_width
    }

    /// Pilot symbol at pixel `(x, y)`, or `None` where the image stays untouched.
    pub fn cell(&self, x: usize, y: usize) -> Option<Symbol> {
        let half = self.gamma / 2;
        let vertical = if self.on_line(x, 0) {
            Some(Symbol::Neg)
        } else if self.on_line(x, half) {
            Some(Symbol::Zero)
        } else {
            None
        };
        let horizontal = if self.on_line(y, 0) {
            Some(Symbol::Pos)
        } else if self.on_line(y, half) {
            Some(Symbol::Zero)
        } else {
            None
        };
        match (vertical, horizontal) {
            (Some(_), Some(_)) => {
                let r = ((x % self.gamma + y % self.gamma) % 3) as i64;
                Some(Symbol::from_residue(r))
            }
            (v, h) => v.or(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryMask {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Option<Symbol>>,
}

impl TernaryMask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Symbol> {
        self.cells[y * self.width + x]
    }

    pub fn set_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.is_some()).count() as f64 / self.cells.len() as f64
    }

    /// Plain PGM (P2) dump: 0 = unset, 1/2/3 = symbols -1/0/+1.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n3\n", self.width, self.height);
        for row in self.cells.chunks(self.width) {
            let line: Vec<&str> = row
                .iter()
                .map(|c| match c {
                    None => "0",
                    Some(Symbol::Neg) => "1",
                    Some(Symbol::Zero) => "2",
                    Some(Symbol::Pos) => "3",
                })
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Per-pixel symbols read back from an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Symbol>,
}

impl TernaryField {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Symbol {
        self.values[y * self.width + x]
    }
}

pub fn build_mask(width: usize, height: usize, cfg: &PilotConfig) -> Result<TernaryMask> {
    cfg.validate()?;
    if width < 2 * cfg.gamma || height < 2 * cfg.gamma {
        log::warn!(
            "{width}x{height} image holds fewer than two grid periods of {} px",
            cfg.gamma
        );
    }
    let mut cells = vec![None; width * height];
    cells
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, c) in row.iter_mut().enumerate() {
                *c = cfg.cell(x, y);
            }
        });
    Ok(TernaryMask {
        width,
        height,
        cells,
    })
}

/// Embeds the pilot into the U plane of a YUV image; Y and V are left as they are.
pub fn embed_pilot(img: &PlanarImage, cfg: &PilotConfig) -> Result<PlanarImage> {
    img.require(ColorSpace::Yuv)?;
    let mask = build_mask(img.width(), img.height(), cfg)?;
    let mut out = img.clone();
    let w = img.width();
    out.plane_mut(PILOT_PLANE)
        .par_chunks_mut(w)
        .zip(mask.cells.par_chunks(w))
        .for_each(|(row, cells)| {
            for (u, cell) in row.iter_mut().zip(cells) {
                if let Some(p) = cell {
                    *u = embed_symbol(*u as f64, *p, cfg.qim).clamp(0.0, 255.0) as f32;
                }
            }
        });
    Ok(out)
}

pub fn extract_ternary_field(img: &PlanarImage, qim: QimParams) -> Result<TernaryField> {
    img.require(ColorSpace::Yuv)?;
    let values = img
        .plane(PILOT_PLANE)
        .par_iter()
        .map(|&u| extract_symbol(u as f64, qim))
        .collect();
    Ok(TernaryField {
        width: img.width(),
        height: img.height(),
        values,
    })
}
