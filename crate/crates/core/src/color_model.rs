//! Gaussian color model: a fixed linear map from camera RGB to the spectral
//! intensity `E` and its first and second wavelength derivatives `E_λ`,
//! `E_λλ`.
//!
//! The matrix constants are the published two-decimal values and are used as
//! is. Nothing in plane space is clamped; the invariants depend on signed
//! values.

use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::plane::{Plane, RgbImage};

/// Rows map `(R, G, B)` to `E`, `E_λ` and `E_λλ` respectively.
pub const RGB_TO_SPECTRAL: [[f64; 3]; 3] = [
    [0.06, 0.63, 0.27],
    [0.3, 0.04, -0.35],
    [0.34, -0.6, 0.17],
];

/// Inverse of [`RGB_TO_SPECTRAL`], computed once by cofactor expansion.
pub static SPECTRAL_TO_RGB: LazyLock<[[f64; 3]; 3]> =
    LazyLock::new(|| invert_3x3(&RGB_TO_SPECTRAL).expect("color matrix is invertible"));

/// Analytic 3x3 inverse via the adjugate. Returns `None` for singular input.
pub fn invert_3x3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

#[inline]
fn apply_3x3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Maps one RGB triple to `(E, E_λ, E_λλ)`.
#[inline]
pub fn rgb_to_spectral(rgb: [f64; 3]) -> [f64; 3] {
    apply_3x3(&RGB_TO_SPECTRAL, rgb)
}

#[inline]
pub fn spectral_to_rgb(spectral: [f64; 3]) -> [f64; 3] {
    apply_3x3(&SPECTRAL_TO_RGB, spectral)
}

/// The three Gaussian color model planes of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPlanes {
    pub e: Plane,
    pub e_lambda: Plane,
    pub e_lambdalambda: Plane,
}

impl SpectralPlanes {
    pub fn new(e: Plane, e_lambda: Plane, e_lambdalambda: Plane) -> Result<Self> {
        if !e.same_shape(&e_lambda) || !e.same_shape(&e_lambdalambda) {
            return Err(Error::invalid_input("spectral planes differ in shape"));
        }
        Ok(SpectralPlanes {
            e,
            e_lambda,
            e_lambdalambda,
        })
    }

    pub fn width(&self) -> usize {
        self.e.width()
    }

    pub fn height(&self) -> usize {
        self.e.height()
    }

    /// Planes in `[E, E_λ, E_λλ]` order.
    pub fn as_array(&self) -> [&Plane; 3] {
        [&self.e, &self.e_lambda, &self.e_lambdalambda]
    }

    pub fn from_array([e, e_lambda, e_lambdalambda]: [Plane; 3]) -> Result<Self> {
        Self::new(e, e_lambda, e_lambdalambda)
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|p| p.is_finite())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        [
            self.e.get(x, y),
            self.e_lambda.get(x, y),
            self.e_lambdalambda.get(x, y),
        ]
    }

    pub fn transpose(&self) -> SpectralPlanes {
        SpectralPlanes {
            e: self.e.transpose(),
            e_lambda: self.e_lambda.transpose(),
            e_lambdalambda: self.e_lambdalambda.transpose(),
        }
    }
}

pub fn rgb_to_planes(img: &RgbImage) -> Result<SpectralPlanes> {
    let (w, h) = (img.width(), img.height());
    let mut planes = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    for (i, rgb) in img.pixels().enumerate() {
        if rgb.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("non-finite RGB value"));
        }
        let s = rgb_to_spectral(rgb);
        for (plane, v) in planes.iter_mut().zip(s) {
            plane.as_mut_slice()[i] = v;
        }
    }
    SpectralPlanes::from_array(planes)
}

/// Inverse color transform. Results are not clamped to `[0, 1]`.
pub fn planes_to_rgb(planes: &SpectralPlanes) -> Result<RgbImage> {
    if !planes.is_finite() {
        return Err(Error::invalid_input("non-finite spectral plane value"));
    }
    let (w, h) = (planes.width(), planes.height());
    RgbImage::from_fn(w, h, |x, y| spectral_to_rgb(planes.at(x, y)))
}
