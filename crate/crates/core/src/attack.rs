//! Geometric attacks, cropping and rectification.
//!
//! Transforms act about the image center in mathematical coordinates (y up),
//! so `rotate` by a positive angle turns the displayed content
//! counter-clockwise. Output canvases are the bounding box of the transformed
//! image; pixels whose source falls outside the input are filled with the
//! colorspace's black.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::PlanarImage;
use crate::matrix::TransformMatrix;

/// One elementary geometric transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    #[serde(alias = "scaling")]
    Scale { sx: f64, sy: f64 },
    #[serde(alias = "rotation")]
    Rotate { deg: f64 },
    ShearX { deg: f64 },
    ShearY { deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CropAnchor {
    Center,
    At { x: usize, y: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    #[serde(flatten)]
    pub anchor: CropAnchor,
    pub w: usize,
    pub h: usize,
}

impl CropSpec {
    pub fn center(w: usize, h: usize) -> Self {
        CropSpec {
            anchor: CropAnchor::Center,
            w,
            h,
        }
    }
}

/// Parses `WxH`, `WxH@center` or `WxH@x,y`.
impl std::str::FromStr for CropSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("crop {s:?} is not of the form WxH[@x,y|@center]"));
        let (size, anchor) = match s.split_once('@') {
            Some((size, anchor)) => (size, Some(anchor)),
            None => (s, None),
        };
        let (w, h) = size.split_once(['x', 'X']).ok_or_else(bad)?;
        let (w, h) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
        let anchor = match anchor.map(str::trim) {
            None | Some("center") => CropAnchor::Center,
            Some(at) => {
                let (x, y) = at.split_once(',').ok_or_else(bad)?;
                CropAnchor::At {
                    x: x.trim().parse().map_err(|_| bad())?,
                    y: y.trim().parse().map_err(|_| bad())?,
                }
            }
        };
        Ok(CropSpec { anchor, w, h })
    }
}

/// Ordered transform steps (first step applied first) and an optional crop.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(default)]
    pub steps: Vec<Primitive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropSpec>,
}

impl AttackSpec {
    /// Composite matrix of all steps.
    pub fn matrix(&self) -> Result<TransformMatrix> {
        composite(&self.steps)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn make_matrix(step: &Primitive) -> Result<TransformMatrix> {
    let shear_tan = |deg: f64| -> Result<f64> {
        if !deg.is_finite() || deg.abs() >= 90.0 {
            return Err(Error::Domain(format!("shear angle {deg} must lie strictly within ±90°")));
        }
        Ok(deg.to_radians().tan())
    };
    Ok(match *step {
        Primitive::Scale { sx, sy } => {
            if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
                return Err(Error::Domain(format!("scale factors must be positive, got ({sx}, {sy})")));
            }
            TransformMatrix::new(sx, 0.0, 0.0, sy)
        }
        Primitive::Rotate { deg } => {
            if !deg.is_finite() {
                return Err(Error::Domain(format!("rotation angle {deg} is not finite")));
            }
            TransformMatrix::rotation(deg)
        }
        Primitive::ShearX { deg } => TransformMatrix::new(1.0, shear_tan(deg)?, 0.0, 1.0),
        Primitive::ShearY { deg } => TransformMatrix::new(1.0, 0.0, shear_tan(deg)?, 1.0),
    })
}

/// `T_n ⋯ T_2 T_1` for steps `[T_1, T_2, …, T_n]`.
pub fn composite(steps: &[Primitive]) -> Result<TransformMatrix> {
    steps.iter().try_fold(TransformMatrix::IDENTITY, |acc, s| {
        Ok(make_matrix(s)?.mul(&acc))
    })
}

/// Canvas size of `width × height` after transforming by `t`.
pub fn transformed_size(width: usize, height: usize, t: &TransformMatrix) -> (usize, usize) {
    let (hw, hh) = (width as f64 / 2.0, height as f64 / 2.0);
    let mut ex: f64 = 0.0;
    let mut ey: f64 = 0.0;
    for (x, y) in [(hw, hh), (hw, -hh), (-hw, hh), (-hw, -hh)] {
        let [u, v] = t.apply([x, y]);
        ex = ex.max(u.abs());
        ey = ey.max(v.abs());
    }
    let side = |e: f64| ((2.0 * e - 1e-6).ceil() as usize).max(1);
    (side(ex), side(ey))
}

/// Region of an output canvas to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

fn warp(img: &PlanarImage, t: &TransformMatrix, canvas: (usize, usize), win: Window) -> Result<PlanarImage> {
    let inv = t.inverse()?;
    let (w, h) = (img.width(), img.height());
    let (ocx, ocy) = ((canvas.0 as f64 - 1.0) / 2.0, (canvas.1 as f64 - 1.0) / 2.0);
    let (icx, icy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let black = img.space().black();
    let (xmax, ymax) = (w as f64 - 1.0, h as f64 - 1.0);

    let planes: Vec<Vec<f32>> = (0..3)
        .map(|p| {
            let src = img.plane(p);
            let mut out = vec![0f32; win.w * win.h];
            out.par_chunks_mut(win.w).enumerate().for_each(|(r, row)| {
                let y_out = ocy - (r + win.y) as f64;
                for (c, v) in row.iter_mut().enumerate() {
                    let x_out = (c + win.x) as f64 - ocx;
                    let [x, y] = inv.apply([x_out, y_out]);
                    let (px, py) = (x + icx, icy - y);
                    if px < -0.5 || py < -0.5 || px > xmax + 0.5 || py > ymax + 0.5 {
                        *v = black[p];
                        continue;
                    }
                    *v = bilinear(src, w, h, px.clamp(0.0, xmax), py.clamp(0.0, ymax));
                }
            });
            out
        })
        .collect();
    let [a, b, c]: [Vec<f32>; 3] = planes.try_into().expect("three planes");
    PlanarImage::new(win.w, win.h, [a, b, c], img.space())
}

#[inline]
fn bilinear(src: &[f32], w: usize, h: usize, px: f64, py: f64) -> f32 {
    let x0 = (px.floor() as usize).min(w - 1);
    let y0 = (py.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (px - x0 as f64, py - y0 as f64);
    let at = |x: usize, y: usize| src[y * w + x] as f64;
    let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
    let bottom = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
    (top + fy * (bottom - top)) as f32
}

/// Resamples `img` under `t` onto the bounding-box canvas of the result.
pub fn apply_affine(img: &PlanarImage, t: &TransformMatrix) -> Result<PlanarImage> {
    let canvas = transformed_size(img.width(), img.height(), t);
    warp(
        img,
        t,
        canvas,
        Window {
            x: 0,
            y: 0,
            w: canvas.0,
            h: canvas.1,
        },
    )
}

/// Top-left corner and size of a crop window on a `width × height` canvas,
/// clamped to the canvas.
fn crop_window(width: usize, height: usize, spec: &CropSpec) -> Result<Window> {
    if spec.w == 0 || spec.h == 0 {
        return Err(Error::Domain(format!("crop size {}x{} is empty", spec.w, spec.h)));
    }
    let (mut w, mut h) = (spec.w, spec.h);
    if w > width || h > height {
        log::warn!("crop {w}x{h} exceeds the {width}x{height} canvas; clamping");
        w = w.min(width);
        h = h.min(height);
    }
    let (x, y) = match spec.anchor {
        CropAnchor::Center => ((width - w) / 2, (height - h) / 2),
        CropAnchor::At { x, y } => {
            let (cx, cy) = (x.min(width - w), y.min(height - h));
            if (cx, cy) != (x, y) {
                log::warn!("crop origin ({x}, {y}) moved to ({cx}, {cy}) to fit the canvas");
            }
            (cx, cy)
        }
    };
    Ok(Window { x, y, w, h })
}

pub fn crop(img: &PlanarImage, spec: &CropSpec) -> Result<PlanarImage> {
    let win = crop_window(img.width(), img.height(), spec)?;
    let planes = [0, 1, 2].map(|p| {
        let src = img.plane(p);
        let mut out = Vec::with_capacity(win.w * win.h);
        for r in win.y..win.y + win.h {
            out.extend_from_slice(&src[r * img.width() + win.x..r * img.width() + win.x + win.w]);
        }
        out
    });
    PlanarImage::new(win.w, win.h, planes, img.space())
}

/// Applies every step of `spec` as one composite resampling, then crops.
///
/// Only the cropped window is rendered, which is equivalent to
/// `crop(apply_affine(img, spec.matrix()), spec.crop)`.
pub fn apply_attack(img: &PlanarImage, spec: &AttackSpec) -> Result<PlanarImage> {
    let t = spec.matrix()?;
    let canvas = transformed_size(img.width(), img.height(), &t);
    let win = match &spec.crop {
        Some(c) => crop_window(canvas.0, canvas.1, c)?,
        None => Window {
            x: 0,
            y: 0,
            w: canvas.0,
            h: canvas.1,
        },
    };
    warp(img, &t, canvas, win)
}

/// Undoes an estimated transform by resampling with its inverse.
pub fn rectify(img: &PlanarImage, t_hat: &TransformMatrix) -> Result<PlanarImage> {
    apply_affine(img, &t_hat.inverse()?)
}
