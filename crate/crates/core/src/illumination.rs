//! Synthetic illumination changes.
//!
//! Under the Kubelka-Munk model the observed spectrum is the illuminant times
//! the material reflectance plus a Fresnel term. The changes below act
//! directly on the Gaussian color model planes, where each one has an exact
//! form:
//!
//! * global intensity: every plane scales by `c`
//! * spatial gain (shading, shadows): every plane scales by a field `m(x, y)`
//! * spectral mix (illuminant color): the planes are Taylor coefficients, so
//!   an illuminant `e(λ) = e0 + e1 λ + e2 λ²` mixes them by the product rule
//! * Fresnel offset: an additive white term, which only touches `E`

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color_model::{planes_to_rgb, rgb_to_planes, SpectralPlanes};
use crate::error::{Error, Result};
use crate::plane::{Plane, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub enum IlluminationTransform {
    GlobalIntensity(f64),
    SpatialGain(Plane),
    SpectralMix { e0: f64, e1: f64, e2: f64 },
    FresnelOffset(Plane),
}

impl IlluminationTransform {
    pub fn validate(&self) -> Result<()> {
        match self {
            IlluminationTransform::GlobalIntensity(c) => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::invalid_param(format!("intensity factor must be > 0, got {c}")));
                }
            }
            IlluminationTransform::SpatialGain(m) => {
                if !m.as_slice().iter().all(|v| v.is_finite() && *v > 0.0) {
                    return Err(Error::invalid_param("gain field must be finite and > 0"));
                }
            }
            IlluminationTransform::SpectralMix { e0, e1, e2 } => {
                if !(e0.is_finite() && e1.is_finite() && e2.is_finite() && *e0 > 0.0) {
                    return Err(Error::invalid_param("spectral mix needs finite e0 > 0, e1, e2"));
                }
            }
            IlluminationTransform::FresnelOffset(f) => {
                if !f.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0) {
                    return Err(Error::invalid_param("fresnel field must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

pub fn apply(planes: &SpectralPlanes, t: &IlluminationTransform) -> Result<SpectralPlanes> {
    t.validate()?;
    if !planes.is_finite() {
        return Err(Error::invalid_input("non-finite spectral plane value"));
    }
    let [e, el, ell] = planes.as_array();
    match t {
        IlluminationTransform::GlobalIntensity(c) => {
            SpectralPlanes::new(e.scale(*c), el.scale(*c), ell.scale(*c))
        }
        IlluminationTransform::SpatialGain(m) => SpectralPlanes::new(
            e.zip_map(m, |a, g| a * g)?,
            el.zip_map(m, |a, g| a * g)?,
            ell.zip_map(m, |a, g| a * g)?,
        ),
        IlluminationTransform::SpectralMix { e0, e1, e2 } => {
            let (e0, e1, e2) = (*e0, *e1, *e2);
            let new_el = el.zip_map(e, |l, i| e0 * l + e1 * i)?;
            let mut new_ell = ell.clone();
            for (i, out) in new_ell.as_mut_slice().iter_mut().enumerate() {
                let (ei, li, lli) = (e.as_slice()[i], el.as_slice()[i], ell.as_slice()[i]);
                *out = e0 * lli + 2.0 * e1 * li + e2 * ei;
            }
            SpectralPlanes::new(e.scale(e0), new_el, new_ell)
        }
        IlluminationTransform::FresnelOffset(f) => {
            SpectralPlanes::new(e.zip_map(f, |a, b| a + b)?, el.clone(), ell.clone())
        }
    }
}

const FIELD_WAVES: usize = 4;

/// Deterministic smooth positive field `1 + amplitude·b(x, y)`.
///
/// `b` averages a few plane waves of wavelength `period` with random
/// orientation and phase, so `|b| ≤ 1`. Callers testing at scale σ should
/// keep `period` well above σ (at least `8σ`).
pub fn smooth_field(width: usize, height: usize, period: f64, amplitude: f64, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = TAU / period;
    let waves: Vec<(f64, f64, f64)> = (0..FIELD_WAVES)
        .map(|_| {
            let theta = rng.random::<f64>() * TAU;
            let phase = rng.random::<f64>() * TAU;
            (k * theta.cos(), k * theta.sin(), phase)
        })
        .collect();
    Plane::from_fn(width, height, |x, y| {
        let b: f64 = waves
            .iter()
            .map(|&(kx, ky, ph)| (kx * x as f64 + ky * y as f64 + ph).cos())
            .sum::<f64>()
            / FIELD_WAVES as f64;
        1.0 + amplitude * b
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RgbTransform {
    Brightness(f64),
    VonKries([f64; 3]),
}

/// Per-channel multiplication, no clamping.
pub fn rgb_transform(img: &RgbImage, t: &RgbTransform) -> Result<RgbImage> {
    let gains = match *t {
        RgbTransform::Brightness(c) => [c; 3],
        RgbTransform::VonKries(g) => g,
    };
    if !gains.iter().all(|g| g.is_finite() && *g > 0.0) {
        return Err(Error::invalid_param(format!("channel factors must be > 0, got {gains:?}")));
    }
    img.map_pixels(|[r, g, b]| [r * gains[0], g * gains[1], b * gains[2]])
}

pub const DEFAULT_FIELD_PERIOD: f64 = 64.0;

/// A transform described in text, e.g. `brightness:0.25`, `mix:1.2,0.1,-0.05`,
/// `gain:period=64,amp=0.3,seed=7` or `fresnel:amp=0.1,seed=7`.
///
/// Field-valued variants are realized per image, since their fields depend
/// on the image size (and, for Fresnel, on the mean of `E`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec {
    Identity,
    Brightness(f64),
    VonKries([f64; 3]),
    Intensity(f64),
    Mix([f64; 3]),
    Gain { period: f64, amp: f64, seed: u64 },
    Fresnel { period: f64, amp: f64, seed: u64 },
}

impl TransformSpec {
    /// Plane-space transform for an image with the given planes, or `None`
    /// for RGB-space and identity specs.
    pub fn realize(&self, planes: &SpectralPlanes) -> Option<IlluminationTransform> {
        let (w, h) = (planes.width(), planes.height());
        match *self {
            TransformSpec::Intensity(c) => Some(IlluminationTransform::GlobalIntensity(c)),
            TransformSpec::Mix([e0, e1, e2]) => Some(IlluminationTransform::SpectralMix { e0, e1, e2 }),
            TransformSpec::Gain { period, amp, seed } => Some(IlluminationTransform::SpatialGain(
                smooth_field(w, h, period, amp, seed),
            )),
            TransformSpec::Fresnel { period, amp, seed } => {
                let scale = amp * planes.e.mean().max(0.0);
                let field = smooth_field(w, h, period, 0.5, seed).scale(scale);
                Some(IlluminationTransform::FresnelOffset(field))
            }
            TransformSpec::Identity | TransformSpec::Brightness(_) | TransformSpec::VonKries(_) => {
                None
            }
        }
    }

    pub fn apply_to_image(&self, img: &RgbImage) -> Result<RgbImage> {
        match *self {
            TransformSpec::Identity => Ok(img.clone()),
            TransformSpec::Brightness(c) => rgb_transform(img, &RgbTransform::Brightness(c)),
            TransformSpec::VonKries(g) => rgb_transform(img, &RgbTransform::VonKries(g)),
            _ => {
                let planes = rgb_to_planes(img)?;
                let t = self.realize(&planes).expect("plane-space spec");
                planes_to_rgb(&apply(&planes, &t)?)
            }
        }
    }
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid_param(format!("bad number list `{s}`")))?;
    if vals.len() != n {
        return Err(Error::invalid_param(format!("expected {n} values, got `{s}`")));
    }
    Ok(vals)
}

fn parse_fields(s: &str, spec: &str) -> Result<(f64, f64, u64)> {
    let (mut period, mut amp, mut seed) = (DEFAULT_FIELD_PERIOD, None, 0u64);
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid_param(format!("expected key=value in `{spec}`")))?;
        let bad = || Error::invalid_param(format!("bad value for {k} in `{spec}`"));
        match k.trim() {
            "period" => period = v.trim().parse().map_err(|_| bad())?,
            "amp" => amp = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
            "seed" => seed = v.trim().parse().map_err(|_| bad())?,
            other => return Err(Error::invalid_param(format!("unknown key `{other}` in `{spec}`"))),
        }
    }
    let amp = amp.ok_or_else(|| Error::invalid_param(format!("missing amp in `{spec}`")))?;
    if !(period > 0.0) {
        return Err(Error::invalid_param(format!("period must be > 0 in `{spec}`")));
    }
    Ok((period, amp, seed))
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "identity" {
            return Ok(TransformSpec::Identity);
        }
        let (name, args) = spec
            .split_once(':')
            .ok_or_else(|| Error::invalid_param(format!("bad transform spec `{spec}`")))?;
        let t = match name {
            "brightness" => TransformSpec::Brightness(parse_list(args, 1)?[0]),
            "vonkries" | "von_kries" => {
                let v = parse_list(args, 3)?;
                TransformSpec::VonKries([v[0], v[1], v[2]])
            }
            "intensity" => TransformSpec::Intensity(parse_list(args, 1)?[0]),
            "mix" => {
                let v = parse_list(args, 3)?;
                TransformSpec::Mix([v[0], v[1], v[2]])
            }
            "gain" => {
                let (period, amp, seed) = parse_fields(args, spec)?;
                if !(0.0..1.0).contains(&amp) {
                    return Err(Error::invalid_param("gain amp must lie in [0, 1)"));
                }
                TransformSpec::Gain { period, amp, seed }
            }
            "fresnel" => {
                let (period, amp, seed) = parse_fields(args, spec)?;
                if !(amp >= 0.0) {
                    return Err(Error::invalid_param("fresnel amp must be >= 0"));
                }
                TransformSpec::Fresnel { period, amp, seed }
            }
            other => return Err(Error::invalid_param(format!("unknown transform `{other}`"))),
        };
        Ok(t)
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformSpec::Identity => write!(f, "identity"),
            TransformSpec::Brightness(c) => write!(f, "brightness:{c}"),
            TransformSpec::VonKries([r, g, b]) => write!(f, "vonkries:{r},{g},{b}"),
            TransformSpec::Intensity(c) => write!(f, "intensity:{c}"),
            TransformSpec::Mix([a, b, c]) => write!(f, "mix:{a},{b},{c}"),
            TransformSpec::Gain { period, amp, seed } => {
                write!(f, "gain:period={period},amp={amp},seed={seed}")
            }
            TransformSpec::Fresnel { period, amp, seed } => {
                write!(f, "fresnel:period={period},amp={amp},seed={seed}")
            }
        }
    }
}
