//! Tiled block-QIM watermark in the luma plane, used to demonstrate
//! end-to-end resynchronization: embed → attack → estimate → rectify →
//! phase-align → extract → BER.
//!
//! A 300-bit message is laid out row-major on a `b × b` block grid that fills
//! one `tile × tile` tile (`b` is the smallest divisor of the tile with
//! `b² ≥ 300`). The tile repeats over the whole image with its corners on the
//! pilot's `-1`/`+1` line crossings, so the pilot phase recovered after
//! rectification also locates the tiles. Bit `0` is embedded as the QIM
//! symbol `-1`, bit `1` as `+1`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::rectify;
use crate::error::{Error, Result};
use crate::imagery::{ColorSpace, PlanarImage};
use crate::interval::Direction;
use crate::matrix::{twin_matrix, TransformMatrix};
use crate::pilot::{PilotConfig, PILOT_PLANE};
use crate::qim::{embed_symbol, extract_symbol, QimParams, Symbol};

/// Number of bits carried by a message.
pub const MESSAGE_BITS: usize = 300;

/// Plane index of the luma samples that carry the watermark.
const WATERMARK_PLANE: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WatermarkMessage {
    bits: Vec<bool>,
}

impl WatermarkMessage {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.len() != MESSAGE_BITS {
            return Err(Error::Domain(format!(
                "message must have {MESSAGE_BITS} bits, got {}",
                bits.len()
            )));
        }
        Ok(WatermarkMessage { bits })
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        WatermarkMessage {
            bits: (0..MESSAGE_BITS).map(|_| rng.gen()).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// File format: the bits as ASCII `0`/`1` followed by a newline.
impl fmt::Display for WatermarkMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for WatermarkMessage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim_end()
            .chars()
            .enumerate()
            .map(|(i, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Decode {
                    offset: i,
                    reason: format!("expected '0' or '1', found {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        WatermarkMessage::new(bits)
    }
}

/// Decoded message; `None` marks an erasure (no usable vote for that bit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedMessage {
    pub bits: Vec<Option<bool>>,
}

impl ExtractedMessage {
    pub fn erasures(&self) -> usize {
        self.bits.iter().filter(|b| b.is_none()).count()
    }

    /// The decoded message with erasures read as `0`.
    pub fn to_message(&self) -> Result<WatermarkMessage> {
        WatermarkMessage::new(self.bits.iter().map(|b| b.unwrap_or(false)).collect())
    }
}

impl From<&WatermarkMessage> for ExtractedMessage {
    fn from(m: &WatermarkMessage) -> Self {
        ExtractedMessage {
            bits: m.bits.iter().map(|&b| Some(b)).collect(),
        }
    }
}

/// Geometry of one watermark tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    /// Tile period in pixels.
    pub tile: usize,
    /// Blocks per tile side.
    pub blocks: usize,
    /// Block side in pixels.
    pub block: usize,
}

impl TileLayout {
    pub fn new(tile: usize) -> Result<Self> {
        let blocks = (1..=tile)
            .find(|&b| tile.is_multiple_of(b) && b * b >= MESSAGE_BITS)
            .ok_or_else(|| {
                Error::Config(format!("a {tile}-pixel tile cannot hold {MESSAGE_BITS} blocks"))
            })?;
        Ok(TileLayout {
            tile,
            blocks,
            block: tile / blocks,
        })
    }

    /// Bit carried by tile coordinates `(tx, ty)`, if any.
    #[inline]
    fn bit_at(&self, tx: usize, ty: usize) -> Option<usize> {
        let i = (ty / self.block) * self.blocks + tx / self.block;
        (i < MESSAGE_BITS).then_some(i)
    }

    /// Whether `(tx, ty)` lies away from its block border, where
    /// resampling mixes neighbouring blocks. Blocks under 4 px use every pixel.
    #[inline]
    fn is_interior(&self, tx: usize, ty: usize) -> bool {
        if self.block < 4 {
            return true;
        }
        let inner = |t: usize| {
            let r = t % self.block;
            r != 0 && r != self.block - 1
        };
        inner(tx) && inner(ty)
    }
}

fn bit_symbol(bit: bool) -> Symbol {
    if bit {
        Symbol::Pos
    } else {
        Symbol::Neg
    }
}

pub fn embed_watermark(
    img: &PlanarImage,
    msg: &WatermarkMessage,
    layout: &TileLayout,
    qim: QimParams,
) -> Result<PlanarImage> {
    img.require(ColorSpace::Yuv)?;
    if img.width() < layout.tile || img.height() < layout.tile {
        return Err(Error::Shape(format!(
            "{}x{} image is smaller than one {}-pixel tile",
            img.width(),
            img.height(),
            layout.tile
        )));
    }
    let mut out = img.clone();
    let w = img.width();
    for (i, y) in out.plane_mut(WATERMARK_PLANE).iter_mut().enumerate() {
        let (tx, ty) = ((i % w) % layout.tile, (i / w) % layout.tile);
        if let Some(bit) = layout.bit_at(tx, ty) {
            *y = embed_symbol(*y as f64, bit_symbol(msg.bits[bit]), qim).clamp(0.0, 255.0) as f32;
        }
    }
    Ok(out)
}

/// Whether a pixel is attack or rectification fill rather than image content.
#[inline]
fn is_fill(img: &PlanarImage, i: usize) -> bool {
    let black = img.space().black();
    (0..3).all(|p| img.plane(p)[i] == black[p])
}

/// Majority vote per bit over all visible block instances, with tiles
/// starting at pixel `phase` (taken modulo the tile).
pub fn extract_watermark(
    img: &PlanarImage,
    phase: (usize, usize),
    layout: &TileLayout,
    qim: QimParams,
) -> Result<ExtractedMessage> {
    img.require(ColorSpace::Yuv)?;
    let tile = layout.tile as i64;
    let (dx, dy) = (phase.0 as i64, phase.1 as i64);
    let w = img.width();
    let mut votes = vec![0i64; MESSAGE_BITS];
    let mut counts = vec![0usize; MESSAGE_BITS];
    for (i, &y) in img.plane(WATERMARK_PLANE).iter().enumerate() {
        let tx = (((i % w) as i64 - dx).rem_euclid(tile)) as usize;
        let ty = (((i / w) as i64 - dy).rem_euclid(tile)) as usize;
        let Some(bit) = layout.bit_at(tx, ty) else { continue };
        if !layout.is_interior(tx, ty) || is_fill(img, i) {
            continue;
        }
        match extract_symbol(y as f64, qim) {
            Symbol::Pos => {
                votes[bit] += 1;
                counts[bit] += 1;
            }
            Symbol::Neg => {
                votes[bit] -= 1;
                counts[bit] += 1;
            }
            Symbol::Zero => {}
        }
    }
    let bits = votes
        .iter()
        .zip(&counts)
        .map(|(&v, &n)| match (n, v.signum()) {
            (0, _) | (_, 0) => None,
            (_, s) => Some(s > 0),
        })
        .collect();
    Ok(ExtractedMessage { bits })
}

/// Fraction of wrong bits; erasures count as errors.
pub fn ber(extracted: &ExtractedMessage, truth: &WatermarkMessage) -> Result<f64> {
    if extracted.bits.len() != truth.bits.len() {
        return Err(Error::Domain(format!(
            "cannot compare {}-bit and {}-bit messages",
            extracted.bits.len(),
            truth.bits.len()
        )));
    }
    let wrong = extracted
        .bits
        .iter()
        .zip(&truth.bits)
        .filter(|(e, t)| **e != Some(**t))
        .count();
    Ok(wrong as f64 / truth.bits.len().max(1) as f64)
}

/// Pixel position of the pilot's `-1` columns and `+1` rows modulo `gamma`
/// in an axis-aligned (rectified) stego image.
///
/// Column and row means of the component signals are taken over content
/// pixels only, so fill margins do not bias the estimate; the phase is the
/// integer shift whose line template correlates best with those means.
pub fn pilot_phase(img: &PlanarImage, pilot: &PilotConfig) -> Result<(usize, usize)> {
    img.require(ColorSpace::Yuv)?;
    pilot.validate()?;
    let (w, h) = (img.width(), img.height());
    let mut col = vec![(0.0f64, 0usize); w];
    let mut row = vec![(0.0f64, 0usize); h];
    for (i, &u) in img.plane(PILOT_PLANE).iter().enumerate() {
        if is_fill(img, i) {
            continue;
        }
        let s = extract_symbol(u as f64, pilot.qim);
        let c = &mut col[i % w];
        c.0 += Direction::Vertical.orientation() * Direction::Vertical.remap(s);
        c.1 += 1;
        let r = &mut row[i / w];
        r.0 += Direction::Horizontal.orientation() * Direction::Horizontal.remap(s);
        r.1 += 1;
    }
    let gamma = pilot.gamma;
    // oriented signals carry +1 on the lines at multiples of gamma, -1 half way
    let template: Vec<f64> = (0..gamma)
        .map(|t| {
            if pilot.on_line(t, 0) {
                1.0
            } else if pilot.on_line(t, gamma / 2) {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let phase = |sums: &[(f64, usize)]| -> Result<usize> {
        let means: Vec<(usize, f64)> = sums
            .iter()
            .enumerate()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(t, (s, n))| (t, s / *n as f64))
            .collect();
        if means.is_empty() {
            return Err(Error::DetectionFailure("image holds no content pixels".into()));
        }
        let score = |d: usize| -> f64 {
            means
                .iter()
                .map(|&(t, v)| v * template[(t + gamma - d % gamma) % gamma])
                .sum()
        };
        let best = (0..gamma)
            .map(|d| (d, score(d)))
            .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        Ok(best.0)
    };
    Ok((phase(&col)?, phase(&row)?))
}

/// Outcome of resynchronizing and decoding one attacked image.
#[derive(Debug, Clone)]
pub struct SyncOutcome {
    /// The candidate (estimate or its twin) that gave the lower BER.
    pub matrix: TransformMatrix,
    pub used_twin: bool,
    pub phase: (usize, usize),
    pub extracted: ExtractedMessage,
    pub ber: f64,
}

/// Rectifies with `matrix`, aligns to the pilot phase and decodes.
///
/// The tile period is the pilot interval.
pub fn decode_with(
    attacked: &PlanarImage,
    matrix: &TransformMatrix,
    pilot: &PilotConfig,
    qim: QimParams,
) -> Result<(ExtractedMessage, (usize, usize))> {
    let layout = TileLayout::new(pilot.gamma)?;
    let rectified = rectify(attacked, matrix)?;
    let phase = pilot_phase(&rectified, pilot)?;
    Ok((extract_watermark(&rectified, phase, &layout, qim)?, phase))
}

/// Tries `matrix` and its 180° twin and keeps the lower-BER decode.
pub fn synchronize(
    attacked: &PlanarImage,
    matrix: &TransformMatrix,
    truth: &WatermarkMessage,
    pilot: &PilotConfig,
    qim: QimParams,
) -> Result<SyncOutcome> {
    let twin = twin_matrix(matrix);
    let (primary, twinned) = rayon::join(
        || decode_with(attacked, matrix, pilot, qim),
        || decode_with(attacked, &twin, pilot, qim),
    );
    let mut best: Option<SyncOutcome> = None;
    for (used_twin, (matrix, decoded)) in [(*matrix, primary), (twin, twinned)]
        .into_iter()
        .enumerate()
    {
        let (extracted, phase) = decoded?;
        let ber = ber(&extracted, truth)?;
        if best.as_ref().is_none_or(|b| ber < b.ber) {
            best = Some(SyncOutcome {
                matrix,
                used_twin: used_twin == 1,
                phase,
                extracted,
                ber,
            });
        }
    }
    Ok(best.expect("two candidates were decoded"))
}
