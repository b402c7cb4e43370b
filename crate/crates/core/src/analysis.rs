//! Invariance and distribution-shift measurements.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::ciconv::{forward, CiConvConfig};
use crate::color_model::rgb_to_planes;
use crate::error::{Error, Result};
use crate::illumination::TransformSpec;
use crate::invariants::{invariant_of_planes, InvariantKind, DEFAULT_EPS_DIV};
use crate::plane::{shape_mismatch, Plane, RgbImage};
use crate::scale_space::{check_sigma, Smoothing};
use crate::stats;

const NORM_EPS: f64 = 1e-300;

/// `‖a − b‖₂ / max(‖a‖₂, ε)`.
pub fn relative_l2(a: &Plane, b: &Plane) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(shape_mismatch(a, b));
    }
    relative_l2_slices(a.as_slice(), b.as_slice())
}

pub fn relative_l2_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid_input(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("non-finite value in map"));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    let num = stats::pairwise_sum(&diff).sqrt();
    let den = stats::pairwise_sum_by(a, |v| v * v).sqrt();
    Ok(num / den.max(NORM_EPS))
}

pub fn max_abs_diff(a: &Plane, b: &Plane) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(shape_mismatch(a, b));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    /// Probability mass per bin, summing to one.
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramRange {
    Auto,
    Fixed(f64, f64),
}

/// Uniform-bin histogram normalized to unit mass. Values outside the range
/// land in the end bins. An automatic range over a constant map collapses to
/// a tiny interval, so all mass lands in the first bin.
pub fn histogram(values: &[f64], bins: usize, range: HistogramRange) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::invalid_param(format!("need at least 2 bins, got {bins}")));
    }
    if values.is_empty() {
        return Err(Error::invalid_input("cannot histogram an empty map"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("non-finite value in map"));
    }
    let (lo, hi) = match range {
        HistogramRange::Fixed(lo, hi) => {
            if !(lo < hi) {
                return Err(Error::invalid_param(format!("histogram range [{lo}, {hi}] is empty")));
            }
            (lo, hi)
        }
        HistogramRange::Auto => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + f64::EPSILON * lo.abs().max(1.0))
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut tally = vec![0usize; bins];
    for &v in values {
        let pos = ((v - lo) / (hi - lo) * bins as f64).floor();
        let idx = if pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
        tally[idx] += 1;
    }
    let n = values.len() as f64;
    Ok(Histogram {
        edges,
        counts: tally.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// What is measured for each image in [`shift_metric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    /// All RGB samples.
    RawRgb,
    /// The squared invariant map before log and normalization.
    Invariant { kind: InvariantKind, sigma: f64 },
    CiConv(CiConvConfig),
}

impl Pipeline {
    pub fn run(&self, img: &RgbImage) -> Result<Vec<f64>> {
        match self {
            Pipeline::RawRgb => Ok(img.as_slice().to_vec()),
            Pipeline::Invariant { kind, sigma } => {
                let planes = rgb_to_planes(img)?;
                let m = invariant_of_planes(&planes, *kind, *sigma, Smoothing::On, DEFAULT_EPS_DIV)?;
                Ok(m.map.into_vec())
            }
            Pipeline::CiConv(cfg) => Ok(forward(img, cfg)?.map.into_vec()),
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pipeline::RawRgb => write!(f, "raw_rgb"),
            Pipeline::Invariant { kind, sigma } => write!(f, "invariant:{kind}:{sigma}"),
            Pipeline::CiConv(cfg) => write!(f, "ciconv:{}:{}", cfg.kind, cfg.s),
        }
    }
}

/// `raw_rgb`, `invariant:<K>[:<sigma>]` or `ciconv:<K>[:<s>]`.
impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::invalid_param(format!("bad number `{s}` in pipeline `{spec}`")))
        };
        match parts.as_slice() {
            ["raw_rgb"] => Ok(Pipeline::RawRgb),
            ["invariant", kind, rest @ ..] if rest.len() <= 1 => {
                let sigma = rest.first().map(|s| num(s)).transpose()?.unwrap_or(1.0);
                check_sigma(sigma)?;
                Ok(Pipeline::Invariant {
                    kind: kind.parse()?,
                    sigma,
                })
            }
            ["ciconv", kind, rest @ ..] if rest.len() <= 1 => {
                let s = rest.first().map(|s| num(s)).transpose()?.unwrap_or(0.0);
                let cfg = CiConvConfig::new(kind.parse()?, s);
                cfg.validate()?;
                Ok(Pipeline::CiConv(cfg))
            }
            _ => Err(Error::invalid_param(format!("unknown pipeline `{spec}`"))),
        }
    }
}

pub const SHIFT_BINS: usize = 64;

/// L2 distance between the mean histograms of two sets of outputs, binned
/// over the range of their union.
pub fn histogram_shift(a: &[Vec<f64>], b: &[Vec<f64>], bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid_input("shift metric needs two non-empty sets"));
    }
    let all = a.iter().chain(b).flat_map(|v| v.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let range = if hi > lo {
        HistogramRange::Fixed(lo, hi)
    } else {
        HistogramRange::Fixed(lo, lo + f64::EPSILON * lo.abs().max(1.0))
    };
    let mean_hist = |set: &[Vec<f64>]| -> Result<Vec<f64>> {
        let hists: Vec<Histogram> = set
            .iter()
            .map(|v| histogram(v, bins, range))
            .collect::<Result<_>>()?;
        Ok((0..bins)
            .map(|i| {
                let col: Vec<f64> = hists.iter().map(|h| h.counts[i]).collect();
                stats::mean(&col)
            })
            .collect())
    };
    let (ha, hb) = (mean_hist(a)?, mean_hist(b)?);
    let sq: Vec<f64> = ha.iter().zip(&hb).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(stats::pairwise_sum(&sq).sqrt())
}

/// Distribution shift caused by `transform` at the output of `pipeline`.
pub fn shift_metric(imgs: &[RgbImage], transform: &TransformSpec, pipeline: &Pipeline) -> Result<f64> {
    if imgs.is_empty() {
        return Err(Error::invalid_input("shift metric needs at least one image"));
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = imgs
        .par_iter()
        .map(|img| {
            let changed = transform.apply_to_image(img)?;
            Ok((pipeline.run(img)?, pipeline.run(&changed)?))
        })
        .collect::<Result<_>>()?;
    let (before, after): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    histogram_shift(&before, &after, SHIFT_BINS)
}

/// One row of a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub metric: String,
    pub pipeline: String,
    pub transform: String,
    pub value: f64,
}

pub const METRIC_HEADER: [&str; 4] = ["metric", "pipeline", "transform", "value"];

pub fn write_metrics_csv<W: Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.metric.as_str(),
            r.pipeline.as_str(),
            r.transform.as_str(),
            &r.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(METRIC_HEADER) {
        return Err(Error::Decode(format!("unexpected CSV header {header:?}")));
    }
    rdr.records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            let value = row[3]
                .parse::<f64>()
                .map_err(|_| Error::Decode(format!("bad value `{}`", &row[3])))?;
            Ok(MetricRecord {
                metric: row[0].to_string(),
                pipeline: row[1].to_string(),
                transform: row[2].to_string(),
                value,
            })
        })
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Decode(format!("csv: {e}"))
}
