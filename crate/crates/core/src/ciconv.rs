//! The CIConv input layer.
//!
//! ```text
//! CIConv(x, y) = (log(CI²(x, y; σ = 2^s) + ε) − μ_S) / σ_S
//! ```
//!
//! `μ_S` and `σ_S` are the mean and population standard deviation of the log
//! map over all pixels of one sample. When `σ_S < eps_std` the sample is
//! degenerate and the output is all zeros.
//!
//! [`grad_s`] differentiates a scalar loss `Σ upstream·CIConv` with respect
//! to `s` in forward mode: the σ-tangent of every derivative map is pushed
//! through the invariant, the log and the normalization (including the
//! dependence of `μ_S` and `σ_S` on `s`).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::relative_l2;
use crate::color_model::{rgb_to_planes, SpectralPlanes};
use crate::error::{Error, Result};
use crate::invariants::{compute_invariant, components, InvariantKind, DEFAULT_EPS_DIV};
use crate::plane::{shape_mismatch, Plane, RgbImage};
use crate::scale_space::{
    check_sigma, convolve_separable, make_kernel, spatial_derivatives,
    spatial_derivatives_dsigma, KernelOrder, Smoothing, SIGMA_MAX,
};
use crate::stats;

pub const DEFAULT_EPS_LOG: f64 = 1e-5;
pub const DEFAULT_EPS_STD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiConvConfig {
    pub kind: InvariantKind,
    /// Scale exponent, `σ = 2^s`.
    pub s: f64,
    pub eps_log: f64,
    pub eps_div: f64,
    pub eps_std: f64,
    pub smoothing: Smoothing,
}

impl Default for CiConvConfig {
    fn default() -> Self {
        CiConvConfig {
            kind: InvariantKind::W,
            s: 0.0,
            eps_log: DEFAULT_EPS_LOG,
            eps_div: DEFAULT_EPS_DIV,
            eps_std: DEFAULT_EPS_STD,
            smoothing: Smoothing::On,
        }
    }
}

impl CiConvConfig {
    pub fn new(kind: InvariantKind, s: f64) -> Self {
        CiConvConfig {
            kind,
            s,
            ..Default::default()
        }
    }

    pub fn sigma(&self) -> f64 {
        self.s.exp2()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(Error::invalid_param(format!("s must be finite, got {}", self.s)));
        }
        check_sigma(self.sigma())?;
        for (name, v) in [
            ("eps_log", self.eps_log),
            ("eps_div", self.eps_div),
            ("eps_std", self.eps_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid_param(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Flat `key=value` lines.
    pub fn to_kv_string(&self) -> String {
        format!(
            "kind={}\ns={}\neps_log={}\neps_div={}\neps_std={}\nsmoothing={}\n",
            self.kind, self.s, self.eps_log, self.eps_div, self.eps_std, self.smoothing
        )
    }

    /// Parses `key=value` lines on top of the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are an error.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = CiConvConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid_param(format!("expected key=value, got `{line}`")))?;
            let value = value.trim();
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::invalid_param(format!("bad number for {key}: `{value}`")))
            };
            match key.trim() {
                "kind" => cfg.kind = value.parse()?,
                "s" => cfg.s = num()?,
                "eps_log" => cfg.eps_log = num()?,
                "eps_div" => cfg.eps_div = num()?,
                "eps_std" => cfg.eps_std = num()?,
                "smoothing" => cfg.smoothing = value.parse()?,
                other => return Err(Error::invalid_param(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for CiConvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ciconv({}, s={})", self.kind, self.s)
    }
}

impl FromStr for CiConvConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_kv_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiConvOutput {
    pub map: Plane,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub degenerate: bool,
    /// Scale actually used.
    pub sigma: f64,
    pub config: CiConvConfig,
}

fn ensure_finite(stage: &'static str, p: &Plane) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::Internal {
            stage,
            message: "non-finite intermediate value".into(),
        })
    }
}

struct LogMap {
    planes: SpectralPlanes,
    ci2: Plane,
    log: Plane,
}

fn log_map(img: &RgbImage, cfg: &CiConvConfig, sigma: f64) -> Result<LogMap> {
    let planes = rgb_to_planes(img)?;
    let stack = spatial_derivatives(&planes, sigma, cfg.smoothing)?;
    let ci2 = compute_invariant(&stack, cfg.kind, cfg.eps_div)?.map;
    ensure_finite("invariant", &ci2)?;
    let eps = cfg.eps_log;
    let log = ci2.map(|v| (v + eps).ln());
    ensure_finite("log", &log)?;
    Ok(LogMap { planes, ci2, log })
}

pub fn forward(img: &RgbImage, cfg: &CiConvConfig) -> Result<CiConvOutput> {
    cfg.validate()?;
    forward_with_sigma(img, cfg, cfg.sigma())
}

/// Forward pass at an explicit scale; `cfg.s` is ignored.
pub fn forward_with_sigma(img: &RgbImage, cfg: &CiConvConfig, sigma: f64) -> Result<CiConvOutput> {
    forward_keep_invariant(img, cfg, sigma).map(|(out, _)| out)
}

/// Like [`forward_with_sigma`] but also hands back the squared invariant map.
fn forward_keep_invariant(
    img: &RgbImage,
    cfg: &CiConvConfig,
    sigma: f64,
) -> Result<(CiConvOutput, Plane)> {
    check_sigma(sigma)?;
    let LogMap { log, ci2, .. } = log_map(img, cfg, sigma)?;
    let (mu_s, sigma_s) = stats::mean_std(log.as_slice());
    let degenerate = !(sigma_s >= cfg.eps_std);
    let map = if degenerate {
        Plane::zeros(log.width(), log.height())
    } else {
        log.map(|v| (v - mu_s) / sigma_s)
    };
    ensure_finite("normalize", &map)?;
    let out = CiConvOutput {
        map,
        mu_s,
        sigma_s,
        degenerate,
        sigma,
        config: *cfg,
    };
    Ok((out, ci2))
}

/// `d/ds Σ upstream(x, y)·CIConv(x, y)`.
pub fn grad_s(img: &RgbImage, cfg: &CiConvConfig, upstream: &Plane) -> Result<f64> {
    cfg.validate()?;
    if upstream.width() != img.width() || upstream.height() != img.height() {
        return Err(Error::invalid_input(format!(
            "upstream is {}x{}, image is {}x{}",
            upstream.height(),
            upstream.width(),
            img.height(),
            img.width()
        )));
    }
    if !upstream.is_finite() {
        return Err(Error::invalid_input("upstream gradient contains non-finite values"));
    }
    let sigma = cfg.sigma();
    let LogMap { planes, ci2, log } = log_map(img, cfg, sigma)?;
    let (mu_s, sigma_s) = stats::mean_std(log.as_slice());
    if !(sigma_s >= cfg.eps_std) {
        return Ok(0.0);
    }

    let stack = spatial_derivatives(&planes, sigma, cfg.smoothing)?;
    let (tx, ty) = spatial_derivatives_dsigma(&planes, sigma, cfg.smoothing)?;
    let dsigma_ds = sigma * std::f64::consts::LN_2;

    let (e, el, ell) = (
        planes.e.as_slice(),
        planes.e_lambda.as_slice(),
        planes.e_lambdalambda.as_slice(),
    );
    let at = |maps: &[Plane; 3], i: usize| {
        [maps[0].as_slice()[i], maps[1].as_slice()[i], maps[2].as_slice()[i]]
    };
    let n = log.len();
    let mut dlog = Vec::with_capacity(n);
    for i in 0..n {
        let comps = components(cfg.kind, [e[i], el[i], ell[i]], cfg.eps_div);
        let dci2 = comps.squared_norm_tangent(at(&stack.dx, i), at(&tx, i))
            + comps.squared_norm_tangent(at(&stack.dy, i), at(&ty, i));
        dlog.push(dci2 / (ci2.as_slice()[i] + cfg.eps_log) * dsigma_ds);
    }

    let y: Vec<f64> = log.as_slice().iter().map(|v| (v - mu_s) / sigma_s).collect();
    let m1 = stats::mean(&dlog);
    let m2 = stats::dot(&y, &dlog) / n as f64;
    let dy: Vec<f64> = dlog
        .iter()
        .zip(&y)
        .map(|(dl, yi)| (dl - m1 - yi * m2) / sigma_s)
        .collect();
    let g = stats::dot(upstream.as_slice(), &dy);
    if !g.is_finite() {
        return Err(Error::Internal {
            stage: "grad_s",
            message: "non-finite gradient".into(),
        });
    }
    Ok(g)
}

/// Finite-difference estimate of [`grad_s`] using only [`forward`].
///
/// A central difference is used when the kernel radius is the same at
/// `s - h`, `s` and `s + h`. Otherwise a second-order one-sided difference
/// is taken on whichever side keeps the radius of `s`.
pub fn grad_s_finite_difference(
    img: &RgbImage,
    cfg: &CiConvConfig,
    upstream: &Plane,
    h: f64,
) -> Result<f64> {
    let frame = Plane::zeros(img.width(), img.height());
    if !upstream.same_shape(&frame) {
        return Err(shape_mismatch(upstream, &frame));
    }
    let loss = |s: f64| -> Result<f64> {
        let out = forward(img, &CiConvConfig { s, ..*cfg })?;
        Ok(stats::dot(upstream.as_slice(), out.map.as_slice()))
    };
    let radius = |s: f64| crate::scale_space::kernel_radius(s.exp2());
    let (r0, rm, rp) = (radius(cfg.s), radius(cfg.s - h), radius(cfg.s + h));
    let rm2 = radius(cfg.s - 2.0 * h);
    let rp2 = radius(cfg.s + 2.0 * h);
    if rm == r0 && rp == r0 {
        Ok((loss(cfg.s + h)? - loss(cfg.s - h)?) / (2.0 * h))
    } else if rm == r0 && rm2 == r0 {
        Ok((3.0 * loss(cfg.s)? - 4.0 * loss(cfg.s - h)? + loss(cfg.s - 2.0 * h)?) / (2.0 * h))
    } else if rp == r0 && rp2 == r0 {
        Ok((-3.0 * loss(cfg.s)? + 4.0 * loss(cfg.s + h)? - loss(cfg.s + 2.0 * h)?) / (2.0 * h))
    } else {
        Err(Error::invalid_param(format!(
            "no constant-radius stencil of step {h} around s={}",
            cfg.s
        )))
    }
}

pub const SWEEP_NOISE_STD: f64 = 0.01;
pub const SWEEP_NOISE_SEED: u64 = 0x5EED;

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub sigma: f64,
    /// Mean squared high-pass residual `CI² − G_{2σ} * CI²` of the squared
    /// invariant map before the log.
    pub detail: f64,
    /// Relative L2 change of the normalized output under additive input noise.
    pub noise: f64,
    pub output: CiConvOutput,
}

/// Adds i.i.d. Gaussian noise from a fixed seed, without clamping.
pub fn add_gaussian_noise(img: &RgbImage, std: f64, seed: u64) -> Result<RgbImage> {
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::invalid_param(format!("noise std {std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .as_slice()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    RgbImage::new(img.width(), img.height(), data)
}

fn high_pass_energy(map: &Plane, sigma: f64) -> Result<f64> {
    let k = make_kernel((2.0 * sigma).min(SIGMA_MAX), KernelOrder::Smoothing)?;
    let low = convolve_separable(map, &k, &k)?;
    let residual = map.zip_map(&low, |a, b| (a - b) * (a - b))?;
    Ok(residual.mean())
}

pub fn sigma_sweep(img: &RgbImage, kind: InvariantKind, sigmas: &[f64]) -> Result<Vec<SweepPoint>> {
    sigma_sweep_with(img, &CiConvConfig::new(kind, 0.0), sigmas)
}

/// Runs the layer at each fixed scale in `sigmas`; `cfg.s` is ignored.
pub fn sigma_sweep_with(
    img: &RgbImage,
    cfg: &CiConvConfig,
    sigmas: &[f64],
) -> Result<Vec<SweepPoint>> {
    for &s in sigmas {
        check_sigma(s)?;
    }
    let noisy = add_gaussian_noise(img, SWEEP_NOISE_STD, SWEEP_NOISE_SEED)?;
    sigmas
        .iter()
        .map(|&sigma| {
            let (output, ci2) = forward_keep_invariant(img, cfg, sigma)?;
            let perturbed = forward_with_sigma(&noisy, cfg, sigma)?;
            Ok(SweepPoint {
                sigma,
                detail: high_pass_energy(&ci2, sigma)?,
                noise: relative_l2(&perturbed.map, &output.map)?,
                output,
            })
        })
        .collect()
}
