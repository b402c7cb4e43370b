//! Seeded synthetic test images.
//!
//! `blobs` draws soft-edged colored discs over a colored background under a
//! smooth shading field. Colors come from a palette whose `(E_λ, E_λλ)`
//! projections span less than a half-plane, so every blend of two palette
//! colors keeps `E_λ² + E_λλ²` well away from zero.
//!
//! `textured` is a fine luminance grating over a two-color chromatic grating.
//! `natural` is a rough power-law texture for scale sweeps.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::illumination::smooth_field;
use crate::plane::RgbImage;

pub const FIXTURE_SIZE: usize = 128;

/// Projections onto `(E_λ, E_λλ)` fall between 0° and about −132°.
const PALETTE: [[f64; 3]; 6] = [
    [0.90, 0.55, 0.15], // orange
    [0.85, 0.80, 0.20], // yellow
    [0.20, 0.70, 0.25], // green
    [0.15, 0.55, 0.50], // teal
    [0.20, 0.70, 0.80], // cyan
    [0.60, 0.75, 0.30], // olive
];

fn jitter(rng: &mut ChaCha8Rng, c: [f64; 3]) -> [f64; 3] {
    c.map(|v| (v + (rng.random::<f64>() - 0.5) * 0.06).clamp(0.05, 0.95))
}

fn smoothstep_edge(d: f64, radius: f64, softness: f64) -> f64 {
    1.0 / (1.0 + ((d - radius) / softness).exp())
}

pub fn blobs(seed: u64, size: usize) -> Result<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg_idx = rng.random_range(0..PALETTE.len());
    let background = jitter(&mut rng, PALETTE[bg_idx]);
    let n = rng.random_range(5..9);
    let s = size as f64;
    let discs: Vec<([f64; 2], f64, f64, [f64; 3])> = (0..n)
        .map(|_| {
            let center = [rng.random::<f64>() * s, rng.random::<f64>() * s];
            let radius = s * (0.08 + 0.17 * rng.random::<f64>());
            let softness = 3.0 + 2.0 * rng.random::<f64>();
            let mut idx = rng.random_range(0..PALETTE.len());
            if idx == bg_idx {
                idx = (idx + 1) % PALETTE.len();
            }
            (center, radius, softness, jitter(&mut rng, PALETTE[idx]))
        })
        .collect();
    let shading = smooth_field(size, size, 1.5 * s, 0.25, seed ^ 0x5ade);
    RgbImage::from_fn(size, size, |x, y| {
        let mut c = background;
        for (center, radius, softness, color) in &discs {
            let d = ((x as f64 - center[0]).powi(2) + (y as f64 - center[1]).powi(2)).sqrt();
            let a = smoothstep_edge(d, *radius, *softness);
            for k in 0..3 {
                c[k] = (1.0 - a) * c[k] + a * color[k];
            }
        }
        let m = 0.8 * shading.get(x, y);
        c.map(|v| v * m)
    })
}

pub fn textured(seed: u64, size: usize) -> Result<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a luminance grating times a blend of two palette colors driven by a
    // second grating, wavelengths 5..7 px and random orientations
    let mut grating = || {
        let k = TAU / (5.0 + 2.0 * rng.random::<f64>());
        let theta = rng.random::<f64>() * TAU;
        (k * theta.cos(), k * theta.sin(), rng.random::<f64>() * TAU)
    };
    let (lum, mix) = (grating(), grating());
    let a = PALETTE[(seed % 3) as usize * 2];
    let b = PALETTE[(seed % 3) as usize * 2 + 1];
    let wave = |(kx, ky, ph): (f64, f64, f64), x: usize, y: usize| (kx * x as f64 + ky * y as f64 + ph).sin();
    RgbImage::from_fn(size, size, |x, y| {
        let l = 0.6 + 0.35 * wave(lum, x, y);
        let t = 0.5 + 0.5 * wave(mix, x, y);
        std::array::from_fn(|k| l * ((1.0 - t) * a[k] + t * b[k]))
    })
}

/// Rough colored texture with a power-law spectrum: amplitude falls as
/// `f^-0.6` between wavelengths of 2 and 96 px. Luminance and the weights of
/// three palette colors are independent fields.
pub fn natural(seed: u64, size: usize) -> Result<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(usize, f64, f64, f64, f64)> = (0..600)
        .map(|_| {
            let f = 48f64.powf(rng.random::<f64>()) / 96.0;
            let theta = rng.random::<f64>() * TAU;
            let field = rng.random_range(0..4);
            let phase = rng.random::<f64>() * TAU;
            (field, TAU * f * theta.cos(), TAU * f * theta.sin(), phase, f.powf(-0.6))
        })
        .collect();
    let mut raw = vec![[0.0f64; 4]; size * size];
    for (i, v) in raw.iter_mut().enumerate() {
        let (x, y) = ((i % size) as f64, (i / size) as f64);
        for &(field, kx, ky, phase, amp) in &waves {
            v[field] += amp * (kx * x + ky * y + phase).cos();
        }
    }
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for v in &raw {
        for f in 0..4 {
            lo[f] = lo[f].min(v[f]);
            hi[f] = hi[f].max(v[f]);
        }
    }
    let unit = |v: &[f64; 4], f: usize| (v[f] - lo[f]) / (hi[f] - lo[f]).max(f64::MIN_POSITIVE);
    RgbImage::from_fn(size, size, |x, y| {
        let v = &raw[y * size + x];
        let lum = 0.15 + 0.75 * unit(v, 3);
        let w = [unit(v, 0).powi(2), unit(v, 1).powi(2), unit(v, 2).powi(2)];
        let total = w[0] + w[1] + w[2] + 1e-9;
        let mut c = [0.0; 3];
        for (wi, color) in w.iter().zip([PALETTE[0], PALETTE[2], PALETTE[4]]) {
            for k in 0..3 {
                c[k] += wi / total * color[k];
            }
        }
        c.map(|v| v * lum)
    })
}

/// Seeds of the four images stored under `fixtures/`.
pub const BUNDLED_SEEDS: [u64; 4] = [1, 2, 3, 4];

pub fn bundled_name(seed: u64) -> String {
    format!("blobs_{seed:02}.png")
}
