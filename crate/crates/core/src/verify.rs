//! Invariance suite: for every invariant and every illumination factor,
//! measure how much the squared edge map changes and compare against the
//! expected invariance pattern.
//!
//! Expected-invariant cells pass when the change stays below the column
//! tolerance. The other cells pass when the change is at least
//! `fail_factor` times that tolerance, i.e. the detector visibly responds.
//!
//! | column | transform                                   | error      |
//! |--------|---------------------------------------------|------------|
//! | II     | global intensity, c ∈ {0.25, 0.5, 2, 4}     | rel. L2    |
//! | SG     | constant gain, and smooth gain field        | rel. L2    |
//! | IC     | spectral mix (1.2, 0.1, −0.05) then ×0.7    | rel. L2    |
//! | FR     | additive smooth field on `E` only           | max. abs.  |

use std::fmt;

use rayon::prelude::*;

use crate::analysis::{max_abs_diff, relative_l2};
use crate::color_model::{rgb_to_planes, SpectralPlanes};
use crate::error::{Error, Result};
use crate::illumination::{apply, smooth_field, IlluminationTransform};
use crate::invariants::{compute_invariant, InvariantKind, DEFAULT_EPS_DIV};
use crate::plane::{Plane, RgbImage};
use crate::scale_space::{spatial_derivatives, Smoothing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    SG,
    FR,
    II,
    IC,
}

impl Column {
    pub const ALL: [Column; 4] = [Column::SG, Column::FR, Column::II, Column::IC];

    pub fn expected(self, kind: InvariantKind) -> bool {
        let f = kind.flags();
        match self {
            Column::SG => f.sg,
            Column::FR => f.fr,
            Column::II => f.ii,
            Column::IC => f.ic,
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Column::SG => "SG",
            Column::FR => "FR",
            Column::II => "II",
            Column::IC => "IC",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSettings {
    pub ii_tol: f64,
    pub sg_exact_tol: f64,
    pub sg_smooth_tol: f64,
    pub ic_tol: f64,
    pub fr_tol: f64,
    pub fail_factor: f64,
    pub sigma: f64,
    pub smoothing: Smoothing,
    pub eps_div: f64,
    pub intensities: Vec<f64>,
    pub constant_gain: f64,
    /// Smooth gain period in units of σ.
    pub gain_period_sigmas: f64,
    pub gain_amp: f64,
    pub mix: [f64; 3],
    pub mix_intensity: f64,
    /// Mean Fresnel offset as a fraction of `mean(E)`.
    pub fresnel_amp: f64,
    pub fresnel_period: f64,
    pub seed: u64,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            ii_tol: 1e-6,
            sg_exact_tol: 1e-6,
            sg_smooth_tol: 1e-2,
            ic_tol: 1e-3,
            fr_tol: 1e-12,
            fail_factor: 10.0,
            sigma: 1.0,
            smoothing: Smoothing::On,
            eps_div: DEFAULT_EPS_DIV,
            intensities: vec![0.25, 0.5, 2.0, 4.0],
            constant_gain: 1.7,
            gain_period_sigmas: 64.0,
            gain_amp: 0.3,
            mix: [1.2, 0.1, -0.05],
            mix_intensity: 0.7,
            fresnel_amp: 0.1,
            fresnel_period: 32.0,
            seed: 7,
        }
    }
}

impl SuiteSettings {
    pub fn tolerance(&self, col: Column) -> f64 {
        match col {
            Column::SG => self.sg_smooth_tol,
            Column::FR => self.fr_tol,
            Column::II => self.ii_tol,
            Column::IC => self.ic_tol,
        }
    }

    /// Overrides from `key=value` lines (the CLI `--tolerances` file).
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid_param(format!("expected key=value, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = || {
                v.parse::<f64>()
                    .map_err(|_| Error::invalid_param(format!("bad number for {k}: `{v}`")))
            };
            match k {
                "ii" => self.ii_tol = num()?,
                "sg_exact" => self.sg_exact_tol = num()?,
                "sg_smooth" => self.sg_smooth_tol = num()?,
                "ic" => self.ic_tol = num()?,
                "fr" => self.fr_tol = num()?,
                "fail_factor" => self.fail_factor = num()?,
                "sigma" => self.sigma = num()?,
                "smoothing" => self.smoothing = v.parse()?,
                "eps_div" => self.eps_div = num()?,
                "gain_period_sigmas" => self.gain_period_sigmas = num()?,
                "gain_amp" => self.gain_amp = num()?,
                "fresnel_amp" => self.fresnel_amp = num()?,
                "seed" => {
                    self.seed = v
                        .parse()
                        .map_err(|_| Error::invalid_param(format!("bad seed `{v}`")))?
                }
                other => return Err(Error::invalid_param(format!("unknown tolerance key `{other}`"))),
            }
        }
        Ok(())
    }
}

/// Measured changes of one image's maps, indexed `[kind][column]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageErrors {
    pub kinds: [KindErrors; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KindErrors {
    pub ii: f64,
    pub sg_exact: f64,
    pub sg_smooth: f64,
    pub ic: f64,
    pub fr: f64,
}

fn maps(planes: &SpectralPlanes, s: &SuiteSettings) -> Result<[Plane; 5]> {
    let stack = spatial_derivatives(planes, s.sigma, s.smoothing)?;
    let mut out = Vec::with_capacity(5);
    for kind in InvariantKind::ALL {
        out.push(compute_invariant(&stack, kind, s.eps_div)?.map);
    }
    Ok(out.try_into().expect("five kinds"))
}

pub fn measure_planes(planes: &SpectralPlanes, s: &SuiteSettings) -> Result<ImageErrors> {
    let (w, h) = (planes.width(), planes.height());
    let base = maps(planes, s)?;
    let mut kinds = [KindErrors::default(); 5];

    let rel = |t: &IlluminationTransform| -> Result<[f64; 5]> {
        let changed = maps(&apply(planes, t)?, s)?;
        let mut r = [0.0; 5];
        for k in 0..5 {
            r[k] = relative_l2(&base[k], &changed[k])?;
        }
        Ok(r)
    };

    for &c in &s.intensities {
        let r = rel(&IlluminationTransform::GlobalIntensity(c))?;
        for k in 0..5 {
            kinds[k].ii = kinds[k].ii.max(r[k]);
        }
    }

    let r = rel(&IlluminationTransform::SpatialGain(Plane::filled(w, h, s.constant_gain)))?;
    for k in 0..5 {
        kinds[k].sg_exact = r[k];
    }

    let field = smooth_field(w, h, s.gain_period_sigmas * s.sigma, s.gain_amp, s.seed);
    let r = rel(&IlluminationTransform::SpatialGain(field))?;
    for k in 0..5 {
        kinds[k].sg_smooth = r[k];
    }

    let [e0, e1, e2] = s.mix;
    let mixed = apply(planes, &IlluminationTransform::SpectralMix { e0, e1, e2 })?;
    let mixed = apply(&mixed, &IlluminationTransform::GlobalIntensity(s.mix_intensity))?;
    let changed = maps(&mixed, s)?;
    for k in 0..5 {
        kinds[k].ic = relative_l2(&base[k], &changed[k])?;
    }

    let offset = smooth_field(w, h, s.fresnel_period, 0.5, s.seed ^ 0xf4e5)
        .scale(s.fresnel_amp * planes.e.mean());
    let changed = maps(&apply(planes, &IlluminationTransform::FresnelOffset(offset))?, s)?;
    for k in 0..5 {
        kinds[k].fr = max_abs_diff(&base[k], &changed[k])?;
    }

    Ok(ImageErrors { kinds })
}

pub fn measure_image(img: &RgbImage, s: &SuiteSettings) -> Result<ImageErrors> {
    measure_planes(&rgb_to_planes(img)?, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub kind: InvariantKind,
    pub column: Column,
    /// Whether the detector is expected to be invariant.
    pub expected_invariant: bool,
    /// Worst case across images: the largest change for expected-invariant
    /// cells, the smallest change otherwise.
    pub error: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub images: usize,
    pub cells: Vec<CellResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.cells.iter().all(|c| c.passed)
    }

    pub fn cell(&self, kind: InvariantKind, column: Column) -> &CellResult {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.column == column)
            .expect("every cell is present")
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invariance suite over {} image(s)", self.images)?;
        for c in &self.cells {
            let (expect, cmp) = if c.expected_invariant {
                ("invariant", "<")
            } else {
                ("variant  ", ">=")
            };
            writeln!(
                f,
                "{} {}  expected {}  error {:.3e} {} {:.1e}  {}",
                c.kind,
                c.column,
                expect,
                c.error,
                cmp,
                c.threshold,
                if c.passed { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn summarize(per_image: &[ImageErrors], s: &SuiteSettings) -> Result<SuiteReport> {
    if per_image.is_empty() {
        return Err(Error::invalid_input("the invariance suite needs at least one image"));
    }
    let mut cells = Vec::with_capacity(20);
    for (k, kind) in InvariantKind::ALL.into_iter().enumerate() {
        for column in Column::ALL {
            let expected = column.expected(kind);
            let tol = s.tolerance(column);
            let values: Vec<f64> = per_image
                .iter()
                .map(|e| {
                    let ke = &e.kinds[k];
                    match column {
                        Column::SG => ke.sg_smooth,
                        Column::FR => ke.fr,
                        Column::II => ke.ii,
                        Column::IC => ke.ic,
                    }
                })
                .collect();
            let (error, threshold, passed) = if expected {
                let worst = values.iter().copied().fold(0.0, f64::max);
                let exact_ok = column != Column::SG
                    || per_image.iter().all(|e| e.kinds[k].sg_exact < s.sg_exact_tol);
                (worst, tol, worst < tol && exact_ok)
            } else {
                let weakest = values.iter().copied().fold(f64::INFINITY, f64::min);
                let floor = s.fail_factor * tol;
                (weakest, floor, weakest >= floor)
            };
            cells.push(CellResult {
                kind,
                column,
                expected_invariant: expected,
                error,
                threshold,
                passed,
            });
        }
    }
    Ok(SuiteReport {
        images: per_image.len(),
        cells,
    })
}

/// Runs the suite over all images; images are processed in parallel but the
/// report does not depend on scheduling.
pub fn run_suite(images: &[RgbImage], s: &SuiteSettings) -> Result<SuiteReport> {
    let per_image: Vec<ImageErrors> = images
        .par_iter()
        .map(|img| measure_image(img, s))
        .collect::<Result<_>>()?;
    summarize(&per_image, s)
}
