//! Property-based tests over random images and parameters.

use approx::assert_relative_eq;
use proptest::prelude::*;

use ciconv::analysis::relative_l2;
use ciconv::color_model::{rgb_to_spectral, spectral_to_rgb};
use ciconv::illumination::{apply, smooth_field, IlluminationTransform};
use ciconv::image_io::{decode_float_dump, encode_float_dump};
use ciconv::invariants::invariant_of_planes;
use ciconv::scale_space::{convolve_1d, convolve_separable, make_kernel, Axis, KernelOrder};
use ciconv::{
    forward, planes_to_rgb, rgb_to_planes, CiConvConfig, InvariantKind, Plane, RgbImage, Smoothing,
    SpectralPlanes,
};

const EPS_DIV: f64 = 1e-5;

fn plane_strategy(w: usize, h: usize) -> impl Strategy<Value = Plane> {
    prop::collection::vec(-1.0f64..1.0, w * h).prop_map(move |v| Plane::from_vec(w, h, v).unwrap())
}

fn image_strategy(w: usize, h: usize) -> impl Strategy<Value = RgbImage> {
    prop::collection::vec(0.05f64..0.95, 3 * w * h).prop_map(move |v| RgbImage::new(w, h, v).unwrap())
}

/// Smooth colored images: a few low-frequency cosines per channel around a
/// chromatic base. `E` stays far above `eps_div` and the colors stay far
/// enough from gray that `E_λ² + E_λλ²` does too.
fn smooth_image_strategy(size: usize) -> impl Strategy<Value = RgbImage> {
    (prop::collection::vec((0.02f64..0.15, 0.0f64..6.3, 0.0f64..6.3, 0.03f64..0.08), 9), 0usize..3).prop_map(
        move |(waves, base_idx)| {
            let bases = [[0.7, 0.5, 0.2], [0.3, 0.6, 0.3], [0.25, 0.5, 0.6]];
            let base = bases[base_idx];
            RgbImage::from_fn(size, size, |x, y| {
                std::array::from_fn(|c| {
                    let mut v = base[c];
                    for &(f, theta, phase, amp) in &waves[3 * c..3 * c + 3] {
                        let (kx, ky) = (f * theta.cos(), f * theta.sin());
                        v += amp * (std::f64::consts::TAU * (kx * x as f64 + ky * y as f64) + phase).sin();
                    }
                    v.clamp(0.05, 1.0)
                })
            })
            .unwrap()
        },
    )
}

fn min_chroma_energy(planes: &SpectralPlanes) -> f64 {
    planes
        .e_lambda
        .zip_map(&planes.e_lambdalambda, |a, b| a * a + b * b)
        .unwrap()
        .min()
}

fn map_of(planes: &SpectralPlanes, kind: InvariantKind) -> Plane {
    invariant_of_planes(planes, kind, 1.0, Smoothing::On, EPS_DIV).unwrap().map
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn color_transform_is_linear(
        a in prop::array::uniform3(-2.0f64..2.0),
        b in prop::array::uniform3(-2.0f64..2.0),
        s in -3.0f64..3.0,
        t in -3.0f64..3.0,
    ) {
        let mixed: [f64; 3] = std::array::from_fn(|i| s * a[i] + t * b[i]);
        let (pa, pb, pm) = (rgb_to_spectral(a), rgb_to_spectral(b), rgb_to_spectral(mixed));
        for i in 0..3 {
            prop_assert!((pm[i] - (s * pa[i] + t * pb[i])).abs() < 1e-12);
        }
        let back = spectral_to_rgb(pm);
        for i in 0..3 {
            prop_assert!((back[i] - mixed[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn image_round_trips_through_planes(img in image_strategy(7, 5)) {
        let back = planes_to_rgb(&rgb_to_planes(&img).unwrap()).unwrap();
        for (x, y) in back.as_slice().iter().zip(img.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn float_dump_round_trips_f32_values(
        (h, w, c) in (1usize..6, 1usize..6, 1usize..4),
        seed in any::<u64>(),
    ) {
        let n = h * w * c;
        let values: Vec<f64> = (0..n)
            .map(|i| f32::from_bits(((seed.wrapping_mul(i as u64 + 1) >> 9) as u32) & 0x3fff_ffff) as f64)
            .collect();
        let bytes = encode_float_dump(h, w, c, &values).unwrap();
        let dump = decode_float_dump(&bytes).unwrap();
        prop_assert_eq!((dump.height, dump.width, dump.channels), (h, w, c));
        for (a, b) in dump.data.iter().zip(&values) {
            prop_assert_eq!((*a as f64).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn convolution_is_linear(
        f in plane_strategy(12, 9),
        g in plane_strategy(12, 9),
        a in -2.0f64..2.0,
        sigma in 0.5f64..2.0,
    ) {
        let k0 = make_kernel(sigma, KernelOrder::Smoothing).unwrap();
        let k1 = make_kernel(sigma, KernelOrder::FirstDerivative).unwrap();
        let combo = f.zip_map(&g, |x, y| a * x + y).unwrap();
        let lhs = convolve_separable(&combo, &k1, &k0).unwrap();
        let cf = convolve_separable(&f, &k1, &k0).unwrap();
        let cg = convolve_separable(&g, &k1, &k0).unwrap();
        let rhs = cf.zip_map(&cg, |x, y| a * x + y).unwrap();
        for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_commutes_with_shift_away_from_border(
        f in plane_strategy(30, 3),
        sigma in 0.5f64..2.0,
    ) {
        let k = make_kernel(sigma, KernelOrder::FirstDerivative).unwrap();
        let shifted = Plane::from_fn(30, 3, |x, y| f.get(x.saturating_sub(1), y));
        let a = convolve_1d(&f, &k, Axis::X).unwrap();
        let b = convolve_1d(&shifted, &k, Axis::X).unwrap();
        let band = k.radius + 1;
        for y in 0..3 {
            for x in band..30 - band {
                prop_assert_eq!(b.get(x + 1, y), a.get(x, y));
            }
        }
    }

    #[test]
    fn squared_invariants_are_non_negative(img in image_strategy(10, 8), kind_idx in 0usize..5) {
        let planes = rgb_to_planes(&img).unwrap();
        let map = map_of(&planes, InvariantKind::ALL[kind_idx]);
        prop_assert!(map.as_slice().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn transposing_the_image_transposes_the_map(img in image_strategy(9, 6), kind_idx in 0usize..5) {
        let kind = InvariantKind::ALL[kind_idx];
        let a = map_of(&rgb_to_planes(&img).unwrap(), kind);
        let b = map_of(&rgb_to_planes(&img.transpose()).unwrap(), kind);
        let at = a.transpose();
        for (x, y) in at.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn h_does_not_read_the_intensity_plane(img in image_strategy(8, 8), bump in plane_strategy(8, 8)) {
        let planes = rgb_to_planes(&img).unwrap();
        let mut other = planes.clone();
        other.e = planes.e.zip_map(&bump, |e, b| e + 0.5 * b.abs()).unwrap();
        prop_assert_eq!(map_of(&planes, InvariantKind::H), map_of(&other, InvariantKind::H));
    }

    #[test]
    fn global_intensity_homogeneity(img in smooth_image_strategy(24), c in 0.25f64..4.0) {
        let planes = rgb_to_planes(&img).unwrap();
        prop_assume!(planes.e.min() > 100.0 * EPS_DIV);
        prop_assume!(min_chroma_energy(&planes) * c.min(1.0).powi(2) > 100.0 * EPS_DIV);
        let scaled = apply(&planes, &IlluminationTransform::GlobalIntensity(c)).unwrap();
        let e = map_of(&planes, InvariantKind::E);
        let e_scaled = map_of(&scaled, InvariantKind::E).scale(1.0 / (c * c));
        prop_assert!(relative_l2(&e_scaled, &e).unwrap() < 1e-6);
        for kind in [InvariantKind::W, InvariantKind::C, InvariantKind::N, InvariantKind::H] {
            let err = relative_l2(&map_of(&scaled, kind), &map_of(&planes, kind)).unwrap();
            prop_assert!(err < 1e-6, "{} error {}", kind, err);
        }
    }

    #[test]
    fn constant_gain_leaves_ratio_invariants_unchanged(img in smooth_image_strategy(24), g in 0.3f64..3.0) {
        let planes = rgb_to_planes(&img).unwrap();
        prop_assume!(min_chroma_energy(&planes) * g.min(1.0).powi(2) > 100.0 * EPS_DIV);
        let field = Plane::filled(24, 24, g);
        let shaded = apply(&planes, &IlluminationTransform::SpatialGain(field)).unwrap();
        for kind in [InvariantKind::C, InvariantKind::N, InvariantKind::H] {
            let err = relative_l2(&map_of(&shaded, kind), &map_of(&planes, kind)).unwrap();
            prop_assert!(err < 1e-6, "{} error {}", kind, err);
        }
    }

    #[test]
    fn fresnel_offset_leaves_h_untouched_and_moves_c(img in smooth_image_strategy(24), seed in 0u64..1000) {
        let planes = rgb_to_planes(&img).unwrap();
        let mean_e = planes.e.mean();
        let field = smooth_field(24, 24, 32.0, 0.5, seed).scale(0.1 * mean_e);
        let lit = apply(&planes, &IlluminationTransform::FresnelOffset(field)).unwrap();
        let h0 = map_of(&planes, InvariantKind::H);
        let h1 = map_of(&lit, InvariantKind::H);
        for (a, b) in h0.as_slice().iter().zip(h1.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let c_err = relative_l2(&map_of(&lit, InvariantKind::C), &map_of(&planes, InvariantKind::C)).unwrap();
        prop_assert!(c_err > 1e-3);
    }

    #[test]
    fn illuminant_color_leaves_n_invariant(img in smooth_image_strategy(24), e1 in -0.2f64..0.2, e2 in -0.1f64..0.1) {
        let planes = rgb_to_planes(&img).unwrap();
        let mixed = apply(&planes, &IlluminationTransform::SpectralMix { e0: 1.0, e1, e2 }).unwrap();
        let lit = apply(&mixed, &IlluminationTransform::GlobalIntensity(0.7)).unwrap();
        let err = relative_l2(&map_of(&lit, InvariantKind::N), &map_of(&planes, InvariantKind::N)).unwrap();
        prop_assert!(err < 1e-3, "N error {}", err);
    }

    #[test]
    fn layer_output_is_standardized(img in image_strategy(12, 12), kind_idx in 0usize..5, s in -1.0f64..1.5) {
        let out = forward(&img, &CiConvConfig::new(InvariantKind::ALL[kind_idx], s)).unwrap();
        prop_assert!(!out.degenerate);
        let v = out.map.as_slice();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        assert_relative_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
    }
}
