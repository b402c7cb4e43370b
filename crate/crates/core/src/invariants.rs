//! Color-invariant edge maps.
//!
//! Each invariant is the squared gradient magnitude of a set of components
//! built from the spectral planes `(E, E_λ, E_λλ)` and their spatial
//! derivatives. For a fixed pixel every component is linear in the three
//! derivatives along one axis, so they are represented here as a small
//! coefficient matrix that depends only on the plane values:
//!
//! | kind | components (x direction)                                        |
//! |------|-----------------------------------------------------------------|
//! | E    | `E_x`, `E_λx`, `E_λλx`                                          |
//! | W    | `E_x/E`, `E_λx/E`, `E_λλx/E`                                    |
//! | C    | `(E_λx E − E_λ E_x)/E²`, `(E_λλx E − E_λλ E_x)/E²`             |
//! | N    | `(E_λx E − E_λ E_x)/E²`, `(E_λλx E² − E_λλ E_x E − 2E_λx E_λ E + 2E_λ² E_x)/E³` |
//! | H    | `(E_λλ E_λx − E_λ E_λλx)/(E_λ² + E_λλ²)`                       |
//!
//! Denominators are guarded as `sign(D)·max(|D|, eps_div)`. Powers of `E`
//! are taken after guarding `E`.

use std::fmt;
use std::str::FromStr;

use crate::color_model::SpectralPlanes;
use crate::error::{Error, Result};
use crate::plane::{Plane, RgbImage};
use crate::scale_space::DerivativeStack;

pub const DEFAULT_EPS_DIV: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InvariantKind {
    E,
    W,
    C,
    N,
    H,
}

/// Which illumination changes an invariant is insensitive to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvarianceFlags {
    /// scene geometry (shading, shadows)
    pub sg: bool,
    /// Fresnel reflections
    pub fr: bool,
    /// illumination intensity
    pub ii: bool,
    /// illumination color
    pub ic: bool,
}

impl InvariantKind {
    pub const ALL: [InvariantKind; 5] = [
        InvariantKind::E,
        InvariantKind::W,
        InvariantKind::C,
        InvariantKind::N,
        InvariantKind::H,
    ];

    pub const fn flags(self) -> InvarianceFlags {
        let (sg, fr, ii, ic) = match self {
            InvariantKind::E => (false, false, false, false),
            InvariantKind::W => (false, false, true, false),
            InvariantKind::C => (true, false, true, false),
            InvariantKind::N => (true, false, true, true),
            InvariantKind::H => (true, true, true, false),
        };
        InvarianceFlags { sg, fr, ii, ic }
    }

    pub const fn name(self) -> &'static str {
        match self {
            InvariantKind::E => "E",
            InvariantKind::W => "W",
            InvariantKind::C => "C",
            InvariantKind::N => "N",
            InvariantKind::H => "H",
        }
    }
}

pub fn invariance_flags(kind: InvariantKind) -> InvarianceFlags {
    kind.flags()
}

impl fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InvariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "E" | "e" => Ok(InvariantKind::E),
            "W" | "w" => Ok(InvariantKind::W),
            "C" | "c" => Ok(InvariantKind::C),
            "N" | "n" => Ok(InvariantKind::N),
            "H" | "h" => Ok(InvariantKind::H),
            other => Err(Error::invalid_param(format!(
                "unknown invariant `{other}` (expected one of E, W, C, N, H)"
            ))),
        }
    }
}

/// A squared invariant edge map.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMap {
    pub kind: InvariantKind,
    pub sigma: f64,
    pub map: Plane,
}

impl InvariantMap {
    pub fn width(&self) -> usize {
        self.map.width()
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }

    /// Square root of every entry, for display only.
    pub fn magnitude(&self) -> Plane {
        self.map.map(f64::sqrt)
    }
}

#[inline]
pub(crate) fn guard(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        -(-d).max(eps)
    } else {
        d.max(eps)
    }
}

/// Per-pixel component coefficients: `component[k] = Σ_j rows[k][j]·d[j]`
/// where `d = [E_*, E_λ*, E_λλ*]` along one axis. Only the first `count`
/// rows are used.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Components {
    pub rows: [[f64; 3]; 3],
    pub count: usize,
}

impl Components {
    #[inline]
    pub fn squared_norm(&self, d: [f64; 3]) -> f64 {
        let mut acc = 0.0;
        for row in &self.rows[..self.count] {
            let c = row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
            acc += c * c;
        }
        acc
    }

    /// Directional derivative of [`Self::squared_norm`] along `dd`.
    #[inline]
    pub fn squared_norm_tangent(&self, d: [f64; 3], dd: [f64; 3]) -> f64 {
        let mut acc = 0.0;
        for row in &self.rows[..self.count] {
            let c = row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
            let dc = row[0] * dd[0] + row[1] * dd[1] + row[2] * dd[2];
            acc += 2.0 * c * dc;
        }
        acc
    }
}

#[inline]
pub(crate) fn components(kind: InvariantKind, planes: [f64; 3], eps_div: f64) -> Components {
    let [e, el, ell] = planes;
    match kind {
        InvariantKind::E => Components {
            rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            count: 3,
        },
        InvariantKind::W => {
            let inv = 1.0 / guard(e, eps_div);
            Components {
                rows: [[inv, 0.0, 0.0], [0.0, inv, 0.0], [0.0, 0.0, inv]],
                count: 3,
            }
        }
        InvariantKind::C => {
            let eg = guard(e, eps_div);
            let inv2 = 1.0 / (eg * eg);
            Components {
                rows: [
                    [-el * inv2, e * inv2, 0.0],
                    [-ell * inv2, 0.0, e * inv2],
                    [0.0; 3],
                ],
                count: 2,
            }
        }
        InvariantKind::N => {
            let eg = guard(e, eps_div);
            let inv2 = 1.0 / (eg * eg);
            let inv3 = inv2 / eg;
            Components {
                rows: [
                    [-el * inv2, e * inv2, 0.0],
                    [
                        (2.0 * el * el - ell * e) * inv3,
                        -2.0 * el * e * inv3,
                        e * e * inv3,
                    ],
                    [0.0; 3],
                ],
                count: 2,
            }
        }
        InvariantKind::H => {
            let inv = 1.0 / guard(el * el + ell * ell, eps_div);
            Components {
                rows: [[0.0, ell * inv, -el * inv], [0.0; 3], [0.0; 3]],
                count: 1,
            }
        }
    }
}

pub fn compute_invariant(
    stack: &DerivativeStack,
    kind: InvariantKind,
    eps_div: f64,
) -> Result<InvariantMap> {
    if !(eps_div > 0.0 && eps_div.is_finite()) {
        return Err(Error::invalid_param(format!("eps_div must be > 0, got {eps_div}")));
    }
    if !stack.is_finite() {
        return Err(Error::invalid_input("derivative stack contains non-finite values"));
    }
    let (w, h) = (stack.width(), stack.height());
    let mut map = Plane::zeros(w, h);
    let [dx0, dx1, dx2] = &stack.dx;
    let [dy0, dy1, dy2] = &stack.dy;
    let (e, el, ell) = (
        stack.planes.e.as_slice(),
        stack.planes.e_lambda.as_slice(),
        stack.planes.e_lambdalambda.as_slice(),
    );
    for (i, out) in map.as_mut_slice().iter_mut().enumerate() {
        let comps = components(kind, [e[i], el[i], ell[i]], eps_div);
        let gx = [dx0.as_slice()[i], dx1.as_slice()[i], dx2.as_slice()[i]];
        let gy = [dy0.as_slice()[i], dy1.as_slice()[i], dy2.as_slice()[i]];
        *out = comps.squared_norm(gx) + comps.squared_norm(gy);
    }
    Ok(InvariantMap {
        kind,
        sigma: stack.sigma,
        map,
    })
}

/// BT.601 luma `0.299 R + 0.587 G + 0.114 B`.
pub fn luminance(img: &RgbImage) -> Plane {
    Plane::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.pixel(x, y);
        0.299 * r + 0.587 * g + 0.114 * b
    })
}

/// Chromaticity coordinates `(R, G, B) / (R + G + B + eps_div)`.
pub fn normalized_rgb(img: &RgbImage, eps_div: f64) -> Result<RgbImage> {
    img.map_pixels(|[r, g, b]| {
        let s = r + g + b + eps_div;
        [r / s, g / s, b / s]
    })
}

/// Convenience: spectral planes of an image together with one invariant.
pub fn invariant_of_planes(
    planes: &SpectralPlanes,
    kind: InvariantKind,
    sigma: f64,
    smoothing: crate::scale_space::Smoothing,
    eps_div: f64,
) -> Result<InvariantMap> {
    let stack = crate::scale_space::spatial_derivatives(planes, sigma, smoothing)?;
    compute_invariant(&stack, kind, eps_div)
}
