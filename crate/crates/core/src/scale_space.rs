//! Sampled Gaussian and Gaussian-derivative kernels and separable filtering.
//!
//! Kernels are sampled at integer offsets `t ∈ [-r, r]` with `r = max(1, ⌈3σ⌉)`
//! and then renormalized: the smoothing kernel to unit sum, the derivative
//! kernel to first moment `Σ t·k(t) = -1`. Filtering is a discrete
//! convolution `out(x) = Σ_t k(t)·f(x - t)`, so a ramp increasing along +x
//! produces a response of exactly `+1` per pixel away from the border.
//!
//! Borders use reflect-101 (`... 2 1 | 0 1 2 ... n-1 | n-2 ...`).

use rayon::prelude::*;

use crate::color_model::SpectralPlanes;
use crate::error::{Error, Result};
use crate::plane::Plane;

pub const SIGMA_MIN: f64 = 0.25;
pub const SIGMA_MAX: f64 = 16.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOrder {
    Smoothing,
    FirstDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Whether the derivative along one axis is followed by Gaussian smoothing
/// along the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    On,
    Off,
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "on" => Ok(Smoothing::On),
            "off" => Ok(Smoothing::Off),
            other => Err(Error::invalid_param(format!(
                "smoothing must be `on` or `off`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Smoothing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Smoothing::On => "on",
            Smoothing::Off => "off",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub sigma: f64,
    pub order: KernelOrder,
    pub radius: usize,
    /// `taps[i]` is the weight at offset `t = i - radius`.
    pub taps: Vec<f64>,
}

impl KernelSpec {
    pub fn width(&self) -> usize {
        self.taps.len()
    }

    pub fn offsets(&self) -> impl Iterator<Item = isize> {
        let r = self.radius as isize;
        -r..=r
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// `Σ t·k(t)`.
    pub fn first_moment(&self) -> f64 {
        self.offsets()
            .zip(&self.taps)
            .map(|(t, k)| t as f64 * k)
            .sum()
    }
}

pub fn kernel_radius(sigma: f64) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

pub fn check_sigma(sigma: f64) -> Result<()> {
    if !(SIGMA_MIN..=SIGMA_MAX).contains(&sigma) {
        return Err(Error::invalid_param(format!(
            "sigma {sigma} outside [{SIGMA_MIN}, {SIGMA_MAX}]"
        )));
    }
    Ok(())
}

/// Continuous Gaussian `g(t; σ)`.
#[inline]
pub fn gaussian(t: f64, sigma: f64) -> f64 {
    (-t * t / (2.0 * sigma * sigma)).exp() * INV_SQRT_2PI / sigma
}

/// `∂g/∂σ`, zero at `|t| = σ`.
#[inline]
pub fn gaussian_dsigma(t: f64, sigma: f64) -> f64 {
    gaussian(t, sigma) * (t * t / sigma.powi(3) - 1.0 / sigma)
}

#[inline]
fn gaussian_dt(t: f64, sigma: f64) -> f64 {
    -t / (sigma * sigma) * gaussian(t, sigma)
}

#[inline]
fn gaussian_dt_dsigma(t: f64, sigma: f64) -> f64 {
    gaussian_dt(t, sigma) * (t * t / sigma.powi(3) - 3.0 / sigma)
}

/// Samples `f` at offsets `-r..=r`, evaluating only `t >= 0` and mirroring
/// with the given parity so the symmetry is exact.
fn sample(radius: usize, odd: bool, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut taps = vec![0.0; 2 * radius + 1];
    for t in 0..=radius {
        let v = f(t as f64);
        taps[radius + t] = v;
        taps[radius - t] = if odd { -v } else { v };
    }
    if odd {
        taps[radius] = 0.0;
    }
    taps
}

fn first_moment(taps: &[f64], radius: usize) -> f64 {
    // Paired so that the result is exactly symmetric in t.
    (1..=radius)
        .map(|t| t as f64 * (taps[radius + t] - taps[radius - t]))
        .sum()
}

pub fn make_kernel(sigma: f64, order: KernelOrder) -> Result<KernelSpec> {
    make_kernel_with_radius(sigma, order, kernel_radius(sigma))
}

/// Like [`make_kernel`] but with an explicit truncation radius.
pub fn make_kernel_with_radius(
    sigma: f64,
    order: KernelOrder,
    radius: usize,
) -> Result<KernelSpec> {
    check_sigma(sigma)?;
    let taps = match order {
        KernelOrder::Smoothing => {
            let raw = sample(radius, false, |t| gaussian(t, sigma));
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        }
        KernelOrder::FirstDerivative => {
            let raw = sample(radius, true, |t| gaussian_dt(t, sigma));
            let m = first_moment(&raw, radius);
            raw.into_iter().map(|v| -v / m).collect()
        }
    };
    Ok(KernelSpec {
        sigma,
        order,
        radius,
        taps,
    })
}

/// Derivative of the normalized taps of [`make_kernel`] with respect to σ.
pub fn make_kernel_dsigma(sigma: f64, order: KernelOrder) -> Result<KernelSpec> {
    make_kernel_dsigma_with_radius(sigma, order, kernel_radius(sigma))
}

pub fn make_kernel_dsigma_with_radius(
    sigma: f64,
    order: KernelOrder,
    radius: usize,
) -> Result<KernelSpec> {
    check_sigma(sigma)?;
    let taps = match order {
        KernelOrder::Smoothing => {
            // k = g / S  =>  k' = (g' - k S') / S
            let g = sample(radius, false, |t| gaussian(t, sigma));
            let dg = sample(radius, false, |t| gaussian_dsigma(t, sigma));
            let s: f64 = g.iter().sum();
            let ds: f64 = dg.iter().sum();
            g.iter()
                .zip(&dg)
                .map(|(&g, &dg)| (dg - (g / s) * ds) / s)
                .collect()
        }
        KernelOrder::FirstDerivative => {
            // k = -u / M, M = Σ t u  =>  k' = (-u' - k M') / M
            let u = sample(radius, true, |t| gaussian_dt(t, sigma));
            let du = sample(radius, true, |t| gaussian_dt_dsigma(t, sigma));
            let m = first_moment(&u, radius);
            let dm = first_moment(&du, radius);
            u.iter()
                .zip(&du)
                .map(|(&u, &du)| (-du + (u / m) * dm) / m)
                .collect()
        }
    };
    Ok(KernelSpec {
        sigma,
        order,
        radius,
        taps,
    })
}

/// Reflect-101 index folding, valid for any offset.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Convolves `plane` with `kernel` along one axis.
pub fn convolve_1d(plane: &Plane, kernel: &KernelSpec, axis: Axis) -> Result<Plane> {
    let (w, h) = (plane.width(), plane.height());
    let n = match axis {
        Axis::X => w,
        Axis::Y => h,
    };
    if kernel.width() > 2 * n {
        return Err(Error::invalid_param(format!(
            "kernel of width {} is wider than twice the image dimension {n}",
            kernel.width()
        )));
    }
    if !plane.is_finite() {
        return Err(Error::invalid_input("non-finite plane value"));
    }

    let r = kernel.radius as isize;
    let taps = &kernel.taps;
    let src = plane.as_slice();
    let mut out = Plane::zeros(w, h);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &k) in taps.iter().enumerate() {
                    let t = j as isize - r;
                    let idx = match axis {
                        Axis::X => y * w + reflect101(x as isize - t, w),
                        Axis::Y => reflect101(y as isize - t, h) * w + x,
                    };
                    acc += k * src[idx];
                }
                *o = acc;
            }
        });
    Ok(out)
}

/// Applies `kx` along x, then `ky` along y.
pub fn convolve_separable(plane: &Plane, kx: &KernelSpec, ky: &KernelSpec) -> Result<Plane> {
    let tmp = convolve_1d(plane, kx, Axis::X)?;
    convolve_1d(&tmp, ky, Axis::Y)
}

/// Spectral planes together with their x and y derivatives at one scale.
#[derive(Debug, Clone)]
pub struct DerivativeStack {
    pub planes: SpectralPlanes,
    /// `[E_x, E_λx, E_λλx]`
    pub dx: [Plane; 3],
    /// `[E_y, E_λy, E_λλy]`
    pub dy: [Plane; 3],
    pub sigma: f64,
    pub smoothing: Smoothing,
}

impl DerivativeStack {
    pub fn width(&self) -> usize {
        self.planes.width()
    }

    pub fn height(&self) -> usize {
        self.planes.height()
    }

    pub fn is_finite(&self) -> bool {
        self.planes.is_finite()
            && self.dx.iter().all(Plane::is_finite)
            && self.dy.iter().all(Plane::is_finite)
    }
}

fn derivative_pair(
    plane: &Plane,
    deriv: &KernelSpec,
    smooth: Option<&KernelSpec>,
) -> Result<(Plane, Plane)> {
    Ok(match smooth {
        Some(s) => (
            convolve_separable(plane, deriv, s)?,
            convolve_separable(plane, s, deriv)?,
        ),
        None => (
            convolve_1d(plane, deriv, Axis::X)?,
            convolve_1d(plane, deriv, Axis::Y)?,
        ),
    })
}

pub fn spatial_derivatives(
    planes: &SpectralPlanes,
    sigma: f64,
    smoothing: Smoothing,
) -> Result<DerivativeStack> {
    let deriv = make_kernel(sigma, KernelOrder::FirstDerivative)?;
    let smooth = match smoothing {
        Smoothing::On => Some(make_kernel(sigma, KernelOrder::Smoothing)?),
        Smoothing::Off => None,
    };
    let [p0, p1, p2] = planes.as_array();
    let (x0, y0) = derivative_pair(p0, &deriv, smooth.as_ref())?;
    let (x1, y1) = derivative_pair(p1, &deriv, smooth.as_ref())?;
    let (x2, y2) = derivative_pair(p2, &deriv, smooth.as_ref())?;
    Ok(DerivativeStack {
        planes: planes.clone(),
        dx: [x0, x1, x2],
        dy: [y0, y1, y2],
        sigma,
        smoothing,
    })
}

/// `∂/∂σ` of every derivative map in [`spatial_derivatives`], returned as
/// `(dx, dy)` in the same plane order. The truncation radius is held at
/// `kernel_radius(sigma)`.
pub fn spatial_derivatives_dsigma(
    planes: &SpectralPlanes,
    sigma: f64,
    smoothing: Smoothing,
) -> Result<([Plane; 3], [Plane; 3])> {
    let deriv = make_kernel(sigma, KernelOrder::FirstDerivative)?;
    let d_deriv = make_kernel_dsigma(sigma, KernelOrder::FirstDerivative)?;
    let (smooth, d_smooth) = match smoothing {
        Smoothing::On => (
            Some(make_kernel(sigma, KernelOrder::Smoothing)?),
            Some(make_kernel_dsigma(sigma, KernelOrder::Smoothing)?),
        ),
        Smoothing::Off => (None, None),
    };

    let tangent = |plane: &Plane| -> Result<(Plane, Plane)> {
        let (mut tx, mut ty) = derivative_pair(plane, &d_deriv, smooth.as_ref())?;
        if let Some(ds) = d_smooth.as_ref() {
            // product rule over the two separable passes
            let ex = convolve_separable(plane, &deriv, ds)?;
            let ey = convolve_separable(plane, ds, &deriv)?;
            tx = tx.zip_map(&ex, |a, b| a + b)?;
            ty = ty.zip_map(&ey, |a, b| a + b)?;
        }
        Ok((tx, ty))
    };

    let [p0, p1, p2] = planes.as_array();
    let (x0, y0) = tangent(p0)?;
    let (x1, y1) = tangent(p1)?;
    let (x2, y2) = tangent(p2)?;
    Ok(([x0, x1, x2], [y0, y1, y2]))
}
