//! Python bindings.
//!
//! Images cross the boundary as flat row-major lists with explicit sizes:
//! RGB data is interleaved `[r, g, b, r, g, b, ...]` and maps are one value
//! per pixel. Library errors become `ValueError` (bad input or parameters),
//! `OSError` (file access) or `RuntimeError` (internal failures).

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ciconv::analysis::{self, Pipeline};
use ciconv::illumination::TransformSpec;
use ciconv::image_io::{self, DecodeOptions};
use ciconv::invariants::{invariant_of_planes, DEFAULT_EPS_DIV};
use ciconv::verify::{run_suite, SuiteSettings};
use ciconv::{CiConvConfig, Error, InvariantKind, Plane, RgbImage, Smoothing};

pub fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e @ Error::Internal { .. } => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(text: &str) -> PyResult<T> {
    text.parse().map_err(to_py_err)
}

/// An RGB image with values nominally in `[0, 1]`.
#[pyclass(name = "Image", module = "ciconv_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyImage {
    pub inner: RgbImage,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        RgbImage::new(width, height, data)
            .map(|inner| PyImage { inner })
            .map_err(to_py_err)
    }

    /// Decodes a PNG or PPM file. `linear=True` undoes the sRGB curve.
    #[staticmethod]
    #[pyo3(signature = (path, linear = false))]
    fn read(path: &str, linear: bool) -> PyResult<Self> {
        image_io::read_image(path, DecodeOptions { linearize: linear })
            .map(|inner| PyImage { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<(f64, f64, f64)> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) out of bounds")));
        }
        let [r, g, b] = self.inner.pixel(x, y);
        Ok((r, g, b))
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    /// Multiplies every channel by `factor`.
    fn brighten(&self, factor: f64) -> PyResult<Self> {
        TransformSpec::Brightness(factor)
            .apply_to_image(&self.inner)
            .map(|inner| PyImage { inner })
            .map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Image(width={}, height={})", self.inner.width(), self.inner.height())
    }
}

/// Settings of the CIConv layer.
#[pyclass(name = "Config", module = "ciconv_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    pub inner: CiConvConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (kind = "W", s = 0.0, smoothing = "on", eps_log = None, eps_div = None, eps_std = None))]
    fn new(
        kind: &str,
        s: f64,
        smoothing: &str,
        eps_log: Option<f64>,
        eps_div: Option<f64>,
        eps_std: Option<f64>,
    ) -> PyResult<Self> {
        let mut inner = CiConvConfig::new(parse(kind)?, s);
        inner.smoothing = parse(smoothing)?;
        if let Some(v) = eps_log {
            inner.eps_log = v;
        }
        if let Some(v) = eps_div {
            inner.eps_div = v;
        }
        if let Some(v) = eps_std {
            inner.eps_std = v;
        }
        inner.validate().map_err(to_py_err)?;
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_kv(text: &str) -> PyResult<Self> {
        CiConvConfig::from_kv_str(text)
            .map(|inner| PyConfig { inner })
            .map_err(to_py_err)
    }

    fn to_kv(&self) -> String {
        self.inner.to_kv_string()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.inner)
    }
}

/// Result of one forward pass.
#[pyclass(name = "Output", module = "ciconv_py", frozen, get_all)]
pub struct PyOutput {
    pub width: usize,
    pub height: usize,
    pub map: Vec<f64>,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub degenerate: bool,
    pub sigma: f64,
}

/// `(E, E_λ, E_λλ)` as three flat lists.
#[pyfunction]
fn rgb_to_planes(img: &PyImage) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let p = ciconv::rgb_to_planes(&img.inner).map_err(to_py_err)?;
    Ok((p.e.into_vec(), p.e_lambda.into_vec(), p.e_lambdalambda.into_vec()))
}

/// Squared invariant map of `kind` at scale `sigma`.
#[pyfunction]
#[pyo3(signature = (img, kind, sigma, smoothing = "on", eps_div = DEFAULT_EPS_DIV))]
fn invariant(img: &PyImage, kind: &str, sigma: f64, smoothing: &str, eps_div: f64) -> PyResult<Vec<f64>> {
    let kind: InvariantKind = parse(kind)?;
    let smoothing: Smoothing = parse(smoothing)?;
    let planes = ciconv::rgb_to_planes(&img.inner).map_err(to_py_err)?;
    invariant_of_planes(&planes, kind, sigma, smoothing, eps_div)
        .map(|m| m.map.into_vec())
        .map_err(to_py_err)
}

#[pyfunction]
fn forward(img: &PyImage, config: &PyConfig) -> PyResult<PyOutput> {
    let out = ciconv::forward(&img.inner, &config.inner).map_err(to_py_err)?;
    Ok(PyOutput {
        width: out.map.width(),
        height: out.map.height(),
        map: out.map.into_vec(),
        mu_s: out.mu_s,
        sigma_s: out.sigma_s,
        degenerate: out.degenerate,
        sigma: out.sigma,
    })
}

/// `d/ds Σ upstream·CIConv`, with `upstream` one value per pixel.
#[pyfunction]
fn grad_s(img: &PyImage, config: &PyConfig, upstream: Vec<f64>) -> PyResult<f64> {
    let upstream = Plane::from_vec(img.inner.width(), img.inner.height(), upstream).map_err(to_py_err)?;
    ciconv::grad_s(&img.inner, &config.inner, &upstream).map_err(to_py_err)
}

/// Finite-difference estimate of `grad_s` with step `h` in `s`.
#[pyfunction]
#[pyo3(signature = (img, config, upstream, h = 1e-4))]
fn grad_s_numeric(img: &PyImage, config: &PyConfig, upstream: Vec<f64>, h: f64) -> PyResult<f64> {
    let upstream = Plane::from_vec(img.inner.width(), img.inner.height(), upstream).map_err(to_py_err)?;
    ciconv::ciconv::grad_s_finite_difference(&img.inner, &config.inner, &upstream, h).map_err(to_py_err)
}

/// `{"sg": bool, "fr": bool, "ii": bool, "ic": bool}` for one kind.
#[pyfunction]
fn invariance_flags(kind: &str) -> PyResult<std::collections::BTreeMap<&'static str, bool>> {
    let f = ciconv::invariance_flags(parse(kind)?);
    Ok([("sg", f.sg), ("fr", f.fr), ("ii", f.ii), ("ic", f.ic)].into_iter().collect())
}

/// List of `(sigma, detail_metric, noise_metric)`.
#[pyfunction]
fn sigma_sweep(img: &PyImage, kind: &str, sigmas: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let points = ciconv::sigma_sweep(&img.inner, parse(kind)?, &sigmas).map_err(to_py_err)?;
    Ok(points.iter().map(|p| (p.sigma, p.detail, p.noise)).collect())
}

#[pyfunction]
fn relative_l2(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    analysis::relative_l2_slices(&a, &b).map_err(to_py_err)
}

/// Histogram shift of `pipeline` (e.g. `"ciconv:W"`) under `transform`
/// (e.g. `"brightness:0.25"`).
#[pyfunction]
fn shift_metric(images: Vec<PyRef<'_, PyImage>>, transform: &str, pipeline: &str) -> PyResult<f64> {
    let imgs: Vec<RgbImage> = images.iter().map(|i| i.inner.clone()).collect();
    let transform: TransformSpec = parse(transform)?;
    let pipeline: Pipeline = parse(pipeline)?;
    analysis::shift_metric(&imgs, &transform, &pipeline).map_err(to_py_err)
}

/// Runs the invariance suite; returns `(all_passed, report_text)`.
#[pyfunction]
fn verify(images: Vec<PyRef<'_, PyImage>>) -> PyResult<(bool, String)> {
    let imgs: Vec<RgbImage> = images.iter().map(|i| i.inner.clone()).collect();
    let report = run_suite(&imgs, &SuiteSettings::default()).map_err(to_py_err)?;
    Ok((report.all_passed(), report.to_string()))
}

/// Seeded synthetic fixture: `"blobs"`, `"textured"` or `"natural"`.
#[pyfunction]
#[pyo3(signature = (name, seed, size = 128))]
fn fixture(name: &str, seed: u64, size: usize) -> PyResult<PyImage> {
    use ciconv::fixtures;
    let img = match name {
        "blobs" => fixtures::blobs(seed, size),
        "textured" => fixtures::textured(seed, size),
        "natural" => fixtures::natural(seed, size),
        other => return Err(PyValueError::new_err(format!("unknown fixture `{other}`"))),
    };
    img.map(|inner| PyImage { inner }).map_err(to_py_err)
}

/// Color-invariant edge maps and the CIConv layer.
#[pymodule]
pub mod ciconv_py {
    #[pymodule_export]
    use super::{
        fixture, forward, grad_s, grad_s_numeric, invariance_flags, invariant, relative_l2,
        rgb_to_planes, shift_metric, sigma_sweep, verify, PyConfig, PyImage, PyOutput,
    };
}
