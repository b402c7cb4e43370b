//! Physics-based color-invariant edge detection.
//!
//! Pipeline: RGB → Gaussian color model planes ([`color_model`]) →
//! Gaussian-derivative filtering at scale σ ([`scale_space`]) → squared
//! invariant edge maps E, W, C, N, H ([`invariants`]) → the CIConv layer with
//! log transform, per-sample normalization and a learnable scale `σ = 2^s`
//! ([`ciconv`]).
//!
//! [`illumination`] synthesizes illumination changes in plane space and
//! [`verify`] checks each detector's invariance pattern against them.

// Negated float comparisons are used on purpose so that NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ciconv;
pub mod cli;
pub mod color_model;
pub mod error;
pub mod fixtures;
pub mod illumination;
pub mod image_io;
pub mod invariants;
mod plane;
pub mod scale_space;
pub mod stats;
pub mod verify;

pub use ciconv::{forward, grad_s, sigma_sweep, CiConvConfig, CiConvOutput};
pub use color_model::{planes_to_rgb, rgb_to_planes, SpectralPlanes};
pub use error::{Error, Result};
pub use invariants::{compute_invariant, invariance_flags, InvariantKind, InvariantMap};
pub use plane::{Plane, RgbImage};
pub use scale_space::{spatial_derivatives, DerivativeStack, Smoothing};
