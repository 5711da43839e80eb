mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::Rng;
use tubular_core::grid::ScalarImage;
use tubular_core::oof::{oof_response, optimal_scale_features, RadiusSpace};
use tubular_core::orientation::{
    build_kernel_bank, coherence_enhance, local_maxima_set, orientation_score_psi, profile_peaks, t_os_at, OrientationVolume,
};
use tubular_core::pipeline::{generate_preset, ExtractionConfig, FeatureStack, Preset};

fn raw_score(img: &ScalarImage, n_theta: usize) -> OrientationVolume {
    let radii = RadiusSpace::integer_steps(1.0, 6.0).unwrap();
    orientation_score_psi(&optimal_scale_features(&oof_response(img, &radii, 1.0).unwrap()), n_theta)
}

/// Two dark crossing bars plus mild noise.
fn crossing_bars(n: usize, seed: u64) -> ScalarImage {
    let mut r = common::rng(seed);
    let c = n as f64 / 2.0;
    ScalarImage::from_fn(n, n, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let d1 = dy.abs();
        let d2 = (dx * 0.6 - dy * 0.8).abs();
        let v: f64 = if d1 <= 2.0 || d2 <= 2.0 { 0.3 } else { 1.0 };
        v + 0.05 * r.random::<f64>()
    })
    .unwrap()
}

#[test]
fn enhancement_matches_direct_sliding_window() {
    let img = crossing_bars(64, 3);
    let n_theta = 32;
    let raw = raw_score(&img, n_theta);
    let bank = build_kernel_bank(300.0, 1.0, 11, n_theta, 1e-8).unwrap();
    let fast = coherence_enhance(&raw, &bank).unwrap();
    let hs: Vec<_> = (0..n_theta).map(|k| bank.h(k)).collect();
    let slow = common::enhance_direct(raw.values(), 64, 64, n_theta, &hs);
    let worst = fast.values().iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "max abs difference {worst}");
}

#[test]
fn enhanced_score_is_bounded_by_the_window_maximum() {
    let img = crossing_bars(40, 9);
    let n_theta = 16;
    let raw = raw_score(&img, n_theta);
    let w = 5;
    let bank = build_kernel_bank(300.0, 1.0, w, n_theta, 1e-8).unwrap();
    let enhanced = coherence_enhance(&raw, &bank).unwrap();
    let norm = raw.max_value();
    for y in 0..40i64 {
        for x in 0..40i64 {
            for k in 0..n_theta {
                let mut bound = 0.0f64;
                for dy in -(w as i64)..=w as i64 {
                    for dx in -(w as i64)..=w as i64 {
                        let (sx, sy) = (common::mirror(x + dx, 40), common::mirror(y + dy, 40));
                        bound = bound.max(raw.get(sx, sy, k) / norm);
                    }
                }
                let v = enhanced.get(x as usize, y as usize, k);
                assert!(v >= 0.0 && v <= bound + 1e-12, "({x}, {y}, {k}): {v} > {bound}");
            }
        }
    }
}

#[test]
fn peak_sets_match_exhaustive_scan() {
    let img = crossing_bars(64, 4);
    let n_theta = 32;
    let ell = 5;
    let raw = raw_score(&img, n_theta);
    let enhanced = coherence_enhance(&raw, &build_kernel_bank(300.0, 1.0, 11, n_theta, 1e-8).unwrap()).unwrap();
    let peaks = local_maxima_set(&enhanced, ell);
    let half = ell / 2;
    for y in 0..64 {
        for x in 0..64 {
            let p = enhanced.profile(x, y);
            let mean = p.iter().sum::<f64>() / n_theta as f64;
            let expected: Vec<u16> = (0..n_theta)
                .filter(|&k| {
                    p[k] > mean
                        && (1..=half).all(|j| p[k] > p[(k + j) % n_theta] && p[k] > p[(k + n_theta - j) % n_theta])
                })
                .map(|k| k as u16)
                .collect();
            assert_eq!(peaks.peaks(x, y), expected.as_slice(), "pixel ({x}, {y})");
        }
    }
}

#[test]
fn raw_score_ignores_brightness_shift() {
    let img = crossing_bars(32, 1);
    let a = raw_score(&img, 16);
    let b = raw_score(&img.map(|v| v + 3.5).unwrap(), 16);
    let worst = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn two_bump_profile_gives_both_peaks() {
    let n = 64;
    let profile: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            (-(k - 20.0).powi(2) / 4.0).exp() + 0.8 * (-(k - 30.0).powi(2) / 4.0).exp()
        })
        .collect();
    assert_eq!(profile_peaks(&profile, 5), vec![20, 30]);
}

/// Bin distance modulo pi.
fn axial_distance(k: usize, angle: f64, n_theta: usize) -> f64 {
    let bin = angle.rem_euclid(PI) / (2.0 * PI / n_theta as f64);
    let half = (n_theta / 2) as f64;
    let d = ((k % (n_theta / 2)) as f64 - bin).rem_euclid(half);
    d.min(half - d)
}

#[test]
fn enhancement_separates_the_crossing_orientations() {
    let cfg = ExtractionConfig::default();
    for seed in 0..3 {
        let syn = generate_preset(Preset::EqualCross, seed).unwrap();
        let truth: Vec<f64> = syn
            .centerlines()
            .iter()
            .map(|c| {
                let (a, b) = (c[0], c[c.len() - 1]);
                (b[1] - a[1]).atan2(b[0] - a[0])
            })
            .collect();
        let stack = FeatureStack::compute(syn.image.clone(), &cfg).unwrap();
        let (x, y) = (64, 64);
        let profile = stack.enhanced.profile(x, y);
        let mut peaks: Vec<usize> = stack.peaks.peaks(x, y).iter().map(|&k| k as usize).collect();
        peaks.sort_by(|a, b| profile[*b].total_cmp(&profile[*a]));
        let half = cfg.n_theta / 2;
        let mut top: Vec<usize> = Vec::new();
        for k in peaks {
            if top.iter().all(|t| t % half != k % half) {
                top.push(k);
            }
        }
        assert!(top.len() >= 2, "seed {seed}: peaks {top:?}");
        for &t in &truth {
            let best = top[..2].iter().map(|&k| axial_distance(k, t, cfg.n_theta)).fold(f64::INFINITY, f64::min);
            assert!(best <= 2.0, "seed {seed}: orientation {t} missed by {best} bins");
        }
        let raw_arg = stack.raw.argmax(x, y);
        let raw_best = truth.iter().map(|&t| axial_distance(raw_arg, t, cfg.n_theta)).fold(f64::INFINITY, f64::min);
        assert!(raw_best > 2.0, "seed {seed}: raw argmax already aligned ({raw_best} bins)");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orientation_tensor_dominates_identity_term(seed in 0u64..100_000, xi in 0.01..1.0f64) {
        let mut r = common::rng(seed);
        let n = 32;
        let profile: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let peaks = profile_peaks(&profile, 3);
        let t = t_os_at(&profile, &peaks, xi, 1e-8);
        prop_assert!(common::spd_min_eigen(&t) >= xi - 1e-12);
        let base = t.inverse().unwrap();
        prop_assert!(base.is_spd());
    }
}

#[test]
fn base_tensors_are_spd_on_an_image() {
    let syn = generate_preset(Preset::Cross, 0).unwrap();
    let stack = FeatureStack::compute(syn.image, &ExtractionConfig::default()).unwrap();
    for t in stack.t_base.data() {
        assert!(t.is_spd() && common::spd_min_eigen(t) > 0.0, "{t:?}");
    }
    for y in 0..stack.height() {
        for x in 0..stack.width() {
            let t = t_os_at(stack.enhanced.profile(x, y), stack.peaks.peaks(x, y), 0.1, 1e-8);
            assert!(common::spd_min_eigen(&t) >= 0.1 - 1e-12);
        }
    }
}
