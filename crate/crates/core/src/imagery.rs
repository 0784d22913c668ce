//! Planar color images, PNG/PPM file I/O, RGB/YUV conversion and PSNR.
//!
//! Samples are kept as `f32` in nominal `[0, 255]` and only quantized to
//! 8 bits when an image is encoded. Color conversion is BT.601 full range
//! with the chroma planes offset by +128.

use std::io::{Cursor, Read};

use crate::error::{Error, Result};

pub const NEUTRAL_CHROMA: f32 = 128.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    Yuv,
}

impl ColorSpace {
    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Yuv => "YUV",
        }
    }

    /// Sample values of a black pixel in this color space.
    pub fn black(self) -> [f32; 3] {
        match self {
            ColorSpace::Rgb => [0.0, 0.0, 0.0],
            ColorSpace::Yuv => [0.0, NEUTRAL_CHROMA, NEUTRAL_CHROMA],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    Ppm,
}

impl FileFormat {
    pub fn from_path(path: &std::path::Path) -> Option<FileFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(FileFormat::Png),
            "ppm" => Some(FileFormat::Ppm),
            _ => None,
        }
    }
}

/// Three equally sized planes of real-valued samples in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    width: usize,
    height: usize,
    planes: [Vec<f32>; 3],
    space: ColorSpace,
}

impl PlanarImage {
    pub fn new(width: usize, height: usize, planes: [Vec<f32>; 3], space: ColorSpace) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty image {width}x{height}")));
        }
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::Shape(format!(
                "plane lengths {:?} do not match {width}x{height}",
                planes.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        Ok(PlanarImage {
            width,
            height,
            planes,
            space,
        })
    }

    /// An image filled with one constant value per plane.
    pub fn filled(width: usize, height: usize, values: [f32; 3], space: ColorSpace) -> Result<Self> {
        let n = width * height;
        Self::new(
            width,
            height,
            [vec![values[0]; n], vec![values[1]; n], vec![values[2]; n]],
            space,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn plane(&self, index: usize) -> &[f32] {
        &self.planes[index]
    }

    pub fn plane_mut(&mut self, index: usize) -> &mut [f32] {
        &mut self.planes[index]
    }

    pub fn planes(&self) -> &[Vec<f32>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<f32>; 3] {
        self.planes
    }

    #[inline]
    pub fn get(&self, plane: usize, x: usize, y: usize) -> f32 {
        self.planes[plane][y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, plane: usize, x: usize, y: usize, value: f32) {
        self.planes[plane][y * self.width + x] = value;
    }

    pub(crate) fn require(&self, space: ColorSpace) -> Result<()> {
        if self.space == space {
            Ok(())
        } else {
            Err(Error::ColorSpace {
                expected: space.name(),
                actual: self.space.name(),
            })
        }
    }
}

#[inline]
fn quantize(v: f32) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.clamp(0.0, 255.0).round() as u8
    }
}

/// Counts bytes pulled through the reader so decode errors can report where they happened.
struct CountingReader<R> {
    inner: R,
    consumed: usize,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.consumed += n;
        Ok(n)
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Decodes an 8-bit PNG (RGB or grayscale) or a binary PPM (P6) into an RGB image.
pub fn decode_image(bytes: &[u8]) -> Result<PlanarImage> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(b"P3") {
        Err(Error::UnsupportedFormat("ASCII PPM (P3)".into()))
    } else {
        Err(Error::Decode {
            offset: 0,
            reason: "unrecognized signature".into(),
        })
    }
}

fn decode_png(bytes: &[u8]) -> Result<PlanarImage> {
    let mut counter = CountingReader {
        inner: Cursor::new(bytes),
        consumed: 0,
    };
    let decoded = {
        let decoder = png::Decoder::new(&mut counter);
        decoder.read_info().and_then(|mut reader| {
            let mut buf = vec![0u8; reader.output_buffer_size()];
            let (color, depth) = reader.output_color_type();
            let frame = reader.next_frame(&mut buf)?;
            Ok((buf, frame, color, depth))
        })
    };
    let (buf, frame, color, depth) = decoded.map_err(|e| match e {
        png::DecodingError::Format(_) | png::DecodingError::IoError(_) => Error::Decode {
            offset: counter.consumed,
            reason: e.to_string(),
        },
        other => Error::UnsupportedFormat(other.to_string()),
    })?;
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!("PNG bit depth {depth:?}")));
    }
    let channels = match color {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale => 1,
        other => return Err(Error::UnsupportedFormat(format!("PNG color type {other:?}"))),
    };
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut planes = [vec![0f32; w * h], vec![0f32; w * h], vec![0f32; w * h]];
    for y in 0..h {
        let row = &buf[y * frame.line_size..y * frame.line_size + w * channels];
        for x in 0..w {
            for (c, plane) in planes.iter_mut().enumerate() {
                let src = if channels == 3 { x * 3 + c } else { x };
                plane[y * w + x] = row[src] as f32;
            }
        }
    }
    PlanarImage::new(w, h, planes, ColorSpace::Rgb)
}

fn decode_ppm(bytes: &[u8]) -> Result<PlanarImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode {
                offset: pos,
                reason: "expected a decimal header field".into(),
            });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Decode {
                offset: start,
                reason: "header field out of range".into(),
            })?;
    }
    let [w, h, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Decode {
            offset: pos,
            reason: "missing whitespace after maxval".into(),
        });
    }
    pos += 1;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PPM maxval {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(Error::Decode {
            offset: pos,
            reason: "zero image dimension".into(),
        });
    }
    let need = w * h * 3;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(Error::Decode {
            offset: bytes.len(),
            reason: format!("truncated pixel data: need {need} bytes, have {}", data.len()),
        });
    }
    let mut planes = [vec![0f32; w * h], vec![0f32; w * h], vec![0f32; w * h]];
    for (i, px) in data[..need].chunks_exact(3).enumerate() {
        for c in 0..3 {
            planes[c][i] = px[c] as f32;
        }
    }
    PlanarImage::new(w, h, planes, ColorSpace::Rgb)
}

/// Encodes an RGB image, clamping to `[0, 255]` and rounding to integers.
pub fn encode_image(img: &PlanarImage, format: FileFormat) -> Result<Vec<u8>> {
    img.require(ColorSpace::Rgb)?;
    let (w, h) = (img.width, img.height);
    let mut interleaved = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for plane in &img.planes {
            interleaved.push(quantize(plane[i]));
        }
    }
    match format {
        FileFormat::Ppm => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&interleaved);
            Ok(out)
        }
        FileFormat::Png => {
            let mut out = Vec::new();
            {
                let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
                encoder.set_color(png::ColorType::Rgb);
                encoder.set_depth(png::BitDepth::Eight);
                let mut writer = encoder
                    .write_header()
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
                writer
                    .write_image_data(&interleaved)
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
            Ok(out)
        }
    }
}

pub fn read_image(path: &std::path::Path) -> Result<PlanarImage> {
    decode_image(&std::fs::read(path)?)
}

/// Writes an RGB image; the format follows the file extension (PNG by default).
pub fn write_image(path: &std::path::Path, img: &PlanarImage) -> Result<()> {
    let format = FileFormat::from_path(path).unwrap_or(FileFormat::Png);
    std::fs::write(path, encode_image(img, format)?)?;
    Ok(())
}

pub fn rgb_to_yuv(img: &PlanarImage) -> Result<PlanarImage> {
    img.require(ColorSpace::Rgb)?;
    let n = img.width * img.height;
    let [r, g, b] = &img.planes;
    let mut out = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    for i in 0..n {
        let (rv, gv, bv) = (r[i], g[i], b[i]);
        out[0][i] = 0.299 * rv + 0.587 * gv + 0.114 * bv;
        out[1][i] = -0.168_736 * rv - 0.331_264 * gv + 0.5 * bv + NEUTRAL_CHROMA;
        out[2][i] = 0.5 * rv - 0.418_688 * gv - 0.081_312 * bv + NEUTRAL_CHROMA;
    }
    PlanarImage::new(img.width, img.height, out, ColorSpace::Yuv)
}

/// Inverse of [`rgb_to_yuv`]; the result is clamped to `[0, 255]`.
pub fn yuv_to_rgb(img: &PlanarImage) -> Result<PlanarImage> {
    img.require(ColorSpace::Yuv)?;
    let n = img.width * img.height;
    let [y, u, v] = &img.planes;
    let mut out = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    for i in 0..n {
        let (yv, uv, vv) = (y[i], u[i] - NEUTRAL_CHROMA, v[i] - NEUTRAL_CHROMA);
        out[0][i] = (yv + 1.402 * vv).clamp(0.0, 255.0);
        out[1][i] = (yv - 0.344_136 * uv - 0.714_136 * vv).clamp(0.0, 255.0);
        out[2][i] = (yv + 1.772 * uv).clamp(0.0, 255.0);
    }
    PlanarImage::new(img.width, img.height, out, ColorSpace::Rgb)
}

/// Rounds every sample to the nearest integer in `[0, 255]`, as a file round trip would.
pub fn quantize_to_8bit(img: &PlanarImage) -> PlanarImage {
    let mut out = img.clone();
    for plane in out.planes.iter_mut() {
        for v in plane.iter_mut() {
            *v = quantize(*v) as f32;
        }
    }
    out
}

/// Simulates storing a YUV image as an 8-bit RGB file and reading it back.
pub fn store_8bit(img: &PlanarImage) -> Result<PlanarImage> {
    rgb_to_yuv(&quantize_to_8bit(&yuv_to_rgb(img)?))
}

/// Peak signal-to-noise ratio in dB against peak 255, over all three planes.
///
/// Returns `f64::INFINITY` for identical images.
pub fn psnr(a: &PlanarImage, b: &PlanarImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.space != b.space {
        return Err(Error::ColorSpace {
            expected: a.space.name(),
            actual: b.space.name(),
        });
    }
    let mut sum = 0.0f64;
    for (pa, pb) in a.planes.iter().zip(&b.planes) {
        sum += pa
            .iter()
            .zip(pb)
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum::<f64>();
    }
    let mse = sum / (3 * a.width * a.height) as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
    }
}
