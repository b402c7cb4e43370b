//! Image decoding and map encoding.
//!
//! Input: 8- or 16-bit PNG and binary PPM. Samples are divided by 255 or
//! 65535; gray inputs are replicated to three channels and alpha is dropped.
//! No gamma handling is applied unless [`DecodeOptions::linearize`] is set.
//!
//! Map output is either an 8-bit grayscale PNG (min..max stretched to
//! 0..255) or the `CIF1` float dump:
//!
//! ```text
//! CIF1\n
//! <height> <width> <channels>\n
//! <height*width*channels little-endian f32, row-major, channels interleaved>
//! ```

use std::io::Cursor;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageEncoder};

use crate::error::{Error, Result};
use crate::plane::{Plane, RgbImage};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Apply the sRGB transfer function inverse after scaling to `[0, 1]`.
    pub linearize: bool,
}

#[inline]
pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    decode_image_with(bytes, DecodeOptions::default())
}

pub fn decode_image_with(bytes: &[u8], opts: DecodeOptions) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::invalid_input("image has a zero dimension"));
    }
    let mut data: Vec<f64> = match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => img
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        ColorType::L16 | ColorType::La16 | ColorType::Rgb16 | ColorType::Rgba16 => img
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        _ => img
            .to_rgb32f()
            .into_raw()
            .into_iter()
            .map(|v| v as f64)
            .collect(),
    };
    if opts.linearize {
        data.iter_mut().for_each(|v| *v = srgb_to_linear(*v));
    }
    RgbImage::new(w, h, data)
}

pub fn read_image(path: impl AsRef<Path>, opts: DecodeOptions) -> Result<RgbImage> {
    let bytes = std::fs::read(path)?;
    decode_image_with(&bytes, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapEncoding {
    Png8,
    FloatDump,
}

impl MapEncoding {
    /// `png` or `cif`, by file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => Ok(MapEncoding::Png8),
            Some(e) if e.eq_ignore_ascii_case("cif") => Ok(MapEncoding::FloatDump),
            _ => Err(Error::invalid_param(format!(
                "cannot infer output format of {} (use .png or .cif)",
                path.display()
            ))),
        }
    }
}

pub fn encode_map(map: &Plane, mode: MapEncoding) -> Result<Vec<u8>> {
    if !map.is_finite() {
        return Err(Error::invalid_input("map contains non-finite values"));
    }
    match mode {
        MapEncoding::Png8 => {
            let (lo, hi) = (map.min(), map.max());
            let pixels: Vec<u8> = if hi > lo {
                map.as_slice()
                    .iter()
                    .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
                    .collect()
            } else {
                vec![128; map.len()]
            };
            encode_png(&pixels, map.width(), map.height(), image::ExtendedColorType::L8)
        }
        MapEncoding::FloatDump => {
            encode_float_dump(map.height(), map.width(), 1, map.as_slice())
        }
    }
}

/// 8-bit RGB PNG of an image, clamped to `[0, 1]`.
pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>> {
    let pixels: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_png(&pixels, img.width(), img.height(), image::ExtendedColorType::Rgb8)
}

fn encode_png(
    pixels: &[u8],
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(pixels, width as u32, height as u32, color)
        .map_err(|e| Error::invalid_input(format!("png encode: {e}")))?;
    Ok(out)
}

pub const FLOAT_DUMP_MAGIC: &[u8] = b"CIF1\n";

/// Contents of a `CIF1` float dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatDump {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatDump {
    pub fn to_plane(&self) -> Result<Plane> {
        if self.channels != 1 {
            return Err(Error::invalid_input(format!(
                "expected a single-channel dump, got {} channels",
                self.channels
            )));
        }
        Plane::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.data.len());
        out.extend_from_slice(FLOAT_DUMP_MAGIC);
        out.extend_from_slice(format!("{} {} {}\n", self.height, self.width, self.channels).as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Values are stored as `f32`; anything that does not fit is rejected.
pub fn encode_float_dump(height: usize, width: usize, channels: usize, data: &[f64]) -> Result<Vec<u8>> {
    if data.len() != height * width * channels {
        return Err(Error::invalid_input("float dump size does not match its header"));
    }
    let mut floats = Vec::with_capacity(data.len());
    for &v in data {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::invalid_input(format!("value {v} is not representable as f32")));
        }
        floats.push(f);
    }
    Ok(FloatDump {
        height,
        width,
        channels,
        data: floats,
    }
    .to_bytes())
}

pub fn decode_float_dump(bytes: &[u8]) -> Result<FloatDump> {
    let rest = bytes
        .strip_prefix(FLOAT_DUMP_MAGIC)
        .ok_or_else(|| Error::Decode("missing CIF1 magic".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Decode("unterminated CIF1 header".into()))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::Decode("non-ASCII header".into()))?;
    let dims: Vec<usize> = header
        .split_ascii_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Decode(format!("bad CIF1 header `{header}`")))?;
    let [height, width, channels] = dims[..] else {
        return Err(Error::Decode(format!("bad CIF1 header `{header}`")));
    };
    let payload = &rest[nl + 1..];
    let n = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Decode("CIF1 dimensions overflow".into()))?;
    if payload.len() != 4 * n {
        return Err(Error::Decode(format!(
            "CIF1 payload has {} bytes, expected {}",
            payload.len(),
            4 * n
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(FloatDump {
        height,
        width,
        channels,
        data,
    })
}

/// Helper for tests and the CLI: grayscale map as it would appear after
/// decoding a PNG written by [`encode_map`].
pub fn decode_gray_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    let gray = DynamicImage::to_luma8(&img);
    Ok((gray.width() as usize, gray.height() as usize, gray.into_raw()))
}
