use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonocaustics::camera::{calibrate, capture, capture_background, estimate_homography, rectify, warp_image_to};
use sonocaustics::hologram::normalize_minmax;
use sonocaustics::plant::{critical_slope, deform_surface, refract_ray, render_caustics, Refraction};
use sonocaustics::*;

fn plane(n: usize) -> SamplingPlane {
    SamplingPlane::square(0.2, 0.1, n).unwrap()
}

fn focus(plane: &SamplingPlane, cx: f64, cy: f64) -> AmplitudeField {
    let values = RealGrid::from_fn(plane.width(), plane.height(), |x, y| {
        let p = plane.point(x, y);
        let r2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
        1000.0 * (-r2 / (2.0 * 0.008f64.powi(2))).exp()
    });
    AmplitudeField::new(*plane, values).unwrap()
}

fn ring_means(img: &RealGrid, plane: &SamplingPlane, r_in: f64, r_out: f64) -> (f64, f64) {
    let (mut disk, mut nd, mut ring, mut nr) = (0.0, 0, 0.0, 0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = plane.point(x, y);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if r < r_in {
                disk += img.get(x, y);
                nd += 1;
            } else if r < r_out {
                ring += img.get(x, y);
                nr += 1;
            }
        }
    }
    (disk / nd as f64, ring / nr as f64)
}

fn params(coupling: f64) -> PlantParams {
    PlantParams { coupling, ..PlantParams::default() }
}

#[test]
fn flat_surface_is_uniform_and_conserves_energy() {
    let pl = plane(48);
    let img = render_caustics(&HeightField::flat(pl), &PlantParams::default()).unwrap();
    let interior: Vec<f64> = (2..46).flat_map(|y| (2..46).map(move |x| (x, y))).map(|(x, y)| *img.values.get(x, y)).collect();
    let mean = interior.iter().sum::<f64>() / interior.len() as f64;
    for v in interior {
        {
            assert!((v - mean).abs() / mean < 0.01, "{v} vs {mean}");
        }
    }
    assert!((img.values.sum() - img.landed as f64).abs() < 1e-9 * img.landed as f64);
}

#[test]
fn energy_equals_landed_rays() {
    let pl = plane(40);
    let h = deform_surface(&focus(&pl, 0.0, 0.0), &params(2e-9)).unwrap();
    let img = render_caustics(&h, &params(2e-9)).unwrap();
    assert!(img.landed <= img.launched);
    assert!((img.values.sum() - img.landed as f64).abs() < 1e-9 * img.landed as f64);
}

#[test]
fn single_focus_has_dark_center_and_bright_ring() {
    let pl = plane(64);
    let p = params(1e-9);
    let img = render_caustics(&deform_surface(&focus(&pl, 0.0, 0.0), &p).unwrap(), &p).unwrap();
    let (disk, ring) = ring_means(&img.values, &pl, 0.006, 0.020);
    assert!(disk < ring, "disk {disk} ring {ring}");
}

#[test]
fn stronger_coupling_darkens_center() {
    let pl = plane(64);
    let field = focus(&pl, 0.0, 0.0);
    let centers: Vec<f64> = [2e-10, 5e-10, 1e-9]
        .iter()
        .map(|&a| {
            let img = render_caustics(&deform_surface(&field, &params(a)).unwrap(), &params(a)).unwrap();
            ring_means(&img.values, &pl, 0.006, 0.020).0
        })
        .collect();
    assert!(centers[0] > centers[1] && centers[1] > centers[2], "{centers:?}");
}

#[test]
fn shifted_focus_shifts_caustic() {
    let pl = plane(64);
    let (dx, _) = pl.spacing();
    let shift = 5;
    let p = params(1e-9);
    let a = render_caustics(&deform_surface(&focus(&pl, 0.0, 0.0), &p).unwrap(), &p).unwrap();
    let b = render_caustics(&deform_surface(&focus(&pl, shift as f64 * dx, 0.0), &p).unwrap(), &p).unwrap();
    let scale = a.values.extrema().2;
    for y in 12..52 {
        for x in 12..46 {
            let d = (a.values.get(x, y) - b.values.get(x + shift, y)).abs();
            assert!(d < 1e-9 * scale, "({x},{y}) differs by {d}");
        }
    }
}

#[test]
fn vector_snell_matches_scalar_law() {
    let n: f64 = 1.4;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let theta: f64 = rng.random_range(0.0..(1.0 / n).asin());
        let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        // tilt the surface instead of the ray; the ray keeps going straight up
        let normal = [theta.sin() * az.cos(), theta.sin() * az.sin(), -theta.cos()];
        let Refraction::Transmitted(t) = refract_ray([0.0, 0.0, 1.0], normal, n, 1.0) else {
            panic!("unexpected total internal reflection at {theta}");
        };
        let cos_t = -(t[0] * normal[0] + t[1] * normal[1] + t[2] * normal[2]);
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        assert!((sin_t - n * theta.sin()).abs() < 1e-12);
        assert!(((t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn total_internal_reflection_threshold() {
    let n: f64 = 1.4;
    let critical = (1.0 / n).asin();
    for (theta, reflected) in [(critical - 1e-9, false), (critical + 1e-9, true)] {
        let normal = [theta.sin(), 0.0, -theta.cos()];
        let r = refract_ray([0.0, 0.0, 1.0], normal, n, 1.0);
        assert_eq!(r == Refraction::TotalInternalReflection, reflected, "theta {theta}");
    }
    assert!((critical_slope(n) - critical.tan()).abs() < 1e-15);
}

#[test]
fn steep_surface_loses_rays() {
    let pl = plane(32);
    let (dx, _) = pl.spacing();
    let h = RealGrid::from_fn(32, 32, |x, _| 2.0 * x as f64 * dx);
    let img = render_caustics(&HeightField { plane: pl, h, mean_free: false }, &PlantParams::default()).unwrap();
    assert_eq!(img.landed, 0);
}

fn smooth_image(w: usize, h: usize) -> RealGrid {
    RealGrid::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        // extrema well inside the frame
        0.5 + 0.4 * (2.0 * std::f64::consts::PI * u).sin() * (2.0 * std::f64::consts::PI * v).sin() * (u * (1.0 - u) * v * (1.0 - v) * 16.0)
    })
}

#[test]
fn warp_roundtrip_is_close() {
    let cfg = CaptureConfig::oblique(64, 64).unwrap();
    let img = smooth_image(64, 64);
    let raw = warp_image_to(&img, &cfg.homography, cfg.raw_width, cfg.raw_height).unwrap();
    let back = warp_image_to(&raw, &cfg.homography.inverse().unwrap(), 64, 64).unwrap();
    for y in 2..62 {
        for x in 2..62 {
            assert!((back.get(x, y) - img.get(x, y)).abs() < 0.02);
        }
    }
}

#[test]
fn noiseless_chain_recovers_inverted_image() {
    let cfg = CaptureConfig { noise_sigma: 0.0, ..CaptureConfig::oblique(64, 64).unwrap() };
    let img = smooth_image(64, 64);
    let h_est = calibrate(&cfg, 64, 64).unwrap();
    let raw = capture(&img, &cfg).unwrap();
    let bg = capture_background(64, 64, &cfg).unwrap();
    let rect = rectify(&raw, &h_est, &bg, 64, 64).unwrap();
    assert!(!rect.degenerate);
    let expected = normalize_minmax(&img).map(|v| 1.0 - v);
    for y in 2..62 {
        for x in 2..62 {
            let (a, b) = (rect.values.get(x, y), expected.get(x, y));
            assert!((a - b).abs() < 0.02, "({x},{y}) {a} vs {b}");
        }
    }
}

#[test]
fn sensor_noise_has_configured_spread() {
    let base = CaptureConfig::oblique(100, 100).unwrap();
    let img = smooth_image(100, 100);
    let clean = capture(&img, &CaptureConfig { noise_sigma: 0.0, ..base }).unwrap();
    let noisy = capture(&img, &base.with_seed(21)).unwrap();
    let d: Vec<f64> = noisy
        .as_slice()
        .iter()
        .zip(clean.as_slice())
        .filter(|(_, c)| **c > 0.1 && **c < 0.9)
        .map(|(n, c)| n - c)
        .collect();
    assert!(d.len() >= 10_000);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    assert!((std - 0.01).abs() < 0.002, "std {std}");
}

#[test]
fn more_noise_means_worse_rectification() {
    let img = smooth_image(64, 64);
    let expected = normalize_minmax(&img).map(|v| 1.0 - v);
    let errors: Vec<f64> = [0.01, 0.03, 0.1]
        .iter()
        .map(|&sigma| {
            let cfg = CaptureConfig { noise_sigma: sigma, ..CaptureConfig::oblique(64, 64).unwrap() }.with_seed(4);
            let h_est = calibrate(&cfg, 64, 64).unwrap();
            let raw = capture(&img, &cfg).unwrap();
            let bg = capture_background(64, 64, &cfg.with_seed(5)).unwrap();
            let rect = rectify(&raw, &h_est, &bg, 64, 64).unwrap();
            rect.values.as_slice().iter().zip(expected.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>()
                / expected.len() as f64
        })
        .collect();
    assert!(errors[0] < errors[1] && errors[1] < errors[2], "{errors:?}");
}

#[test]
fn blank_capture_is_flagged_degenerate() {
    let cfg = CaptureConfig { noise_sigma: 0.0, ..CaptureConfig::oblique(16, 16).unwrap() };
    let bg = capture_background(16, 16, &cfg).unwrap();
    let rect = rectify(&bg, &calibrate(&cfg, 16, 16).unwrap(), &bg, 16, 16).unwrap();
    assert!(rect.degenerate);
    assert!(rect.values.as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn collinear_points_are_rejected() {
    let src = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]];
    let dst = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    assert!(estimate_homography(&src, &dst).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homography_reproduces_random_quads(jitter in prop::collection::vec(-0.2f64..0.2, 8), scale in 0.5f64..3.0) {
        let src = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut dst = src;
        for (i, p) in dst.iter_mut().enumerate() {
            p[0] = (p[0] + jitter[2 * i]) * scale + 5.0;
            p[1] = (p[1] + jitter[2 * i + 1]) * scale - 2.0;
        }
        let h = estimate_homography(&src, &dst).unwrap();
        let inv = h.inverse().unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let q = h.apply(*s);
            prop_assert!((q[0] - d[0]).abs() < 1e-9 && (q[1] - d[1]).abs() < 1e-9);
            let r = inv.apply(*d);
            prop_assert!((r[0] - s[0]).abs() < 1e-9 && (r[1] - s[1]).abs() < 1e-9);
        }
    }
}
