mod common;

use proptest::prelude::*;
use rand::Rng;
use tubular_core::grid::{SymTensor2, UnitVector2};
use tubular_core::metrics::{
    assemble_t_coh, build_m_aniso_2d, build_mscale, coherence_penalty, control_set_ellipse, region_constrained_cost,
    select_candidate, Cost, RegionMask,
};
use tubular_core::pipeline::{generate_preset, ExtractionConfig, FeatureStack, Preset};

fn random_spd(r: &mut impl Rng, max: f64) -> SymTensor2 {
    let (l1, l2) = (r.random_range(0.01..max), r.random_range(0.01..max));
    let a: f64 = r.random_range(0.0..std::f64::consts::PI);
    SymTensor2::from_eigen(l1, UnitVector2::from_angle(a), l2, UnitVector2::from_angle(a).perp())
}

#[test]
fn coherence_tensor_is_spd_and_aligned() {
    let mut r = common::rng(17);
    for _ in 0..1000 {
        let base = random_spd(&mut r, 2.0);
        let p = UnitVector2::from_angle(r.random_range(0.0..std::f64::consts::TAU));
        let phi = r.random_range(1.0..50.0);
        let norm = base.max_abs().max(common::spd_min_eigen(&base).abs());
        let xi = r.random_range(10.0 * norm..100.0 * norm);
        let t = assemble_t_coh(base, p, phi, xi);
        assert!(t.is_spd() && common::spd_min_eigen(&t) > 0.0);
        let v = common::min_eigenvector(&t);
        let cos = (v[0] * p.components()[0] + v[1] * p.components()[1]).abs().min(1.0);
        assert!(cos.acos() < 10f64.to_radians(), "angle {} deg", cos.acos().to_degrees());
    }
}

#[test]
fn penalty_is_one_on_equal_scores_and_increasing() {
    for lambda in [0.5, 20.0] {
        assert_eq!(coherence_penalty(0.4, 0.4, lambda), 1.0);
        let values: Vec<f64> = (0..=100).map(|i| coherence_penalty(i as f64 / 100.0, 0.0, lambda)).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(coherence_penalty(0.2, 0.7, lambda), coherence_penalty(0.7, 0.2, lambda));
    }
}

#[test]
fn selection_examples() {
    let g = UnitVector2::from_angle;
    let c = [(g(0.1), 0.5), (g(1.6), 0.5)];
    assert_eq!(select_candidate(&c, g(0.0), 0.5), Some(0));
    // equal |dot| (mirror images about p_a): the score closer to psi_a wins
    let c = [(g(0.3), 0.9), (g(-0.3), 0.45)];
    assert_eq!(select_candidate(&c, g(0.0), 0.5), Some(1));
    assert_eq!(select_candidate(&c, g(0.0), 0.85), Some(0));
    assert_eq!(select_candidate(&[], g(0.0), 0.5), None);
}

#[test]
fn calibrated_fields_reach_the_target_anisotropy() {
    let cfg = ExtractionConfig::default();
    let syn = generate_preset(Preset::Cross, 2).unwrap();
    let stack = FeatureStack::compute(syn.image, &cfg).unwrap();
    let ratio = |t: &SymTensor2| {
        let lo = common::spd_min_eigen(t);
        let hi = t.trace() - lo;
        (hi / lo).sqrt()
    };
    let (field, _) = build_m_aniso_2d(&stack.scale_map, cfg.c_ratio).unwrap();
    let worst = field.data().iter().map(ratio).fold(0.0, f64::max);
    assert!((worst - 10.0).abs() < 1e-6, "planar ratio {worst}");
    let mscale = build_mscale(&stack.oof, cfg.c_ratio, 1.0).unwrap();
    let worst = mscale.spatial().iter().map(ratio).fold(0.0, f64::max);
    assert!((worst - 10.0).abs() < 1e-6, "lifted ratio {worst}");
    for t in mscale.spatial() {
        assert!(t.is_spd());
    }
}

#[test]
fn region_cost_is_infinite_outside_the_mask() {
    let cfg = ExtractionConfig::default();
    let syn = generate_preset(Preset::Tube, 0).unwrap();
    let stack = FeatureStack::compute(syn.image, &cfg).unwrap();
    let mscale = build_mscale(&stack.oof, cfg.c_ratio, 1.0).unwrap();
    let mask = RegionMask::from_prior(&[[20.0, 64.0], [100.0, 64.0]], 128, 128, 3.0).unwrap();
    assert_eq!(region_constrained_cost(&mscale, &mask, 50, 80, 2, [1.0, 0.0, 0.0]), Cost::Unreachable);
    let inside = region_constrained_cost(&mscale, &mask, 50, 65, 2, [1.0, 0.0, 0.0]).finite().unwrap();
    assert!(inside > 0.0 && inside.is_finite());
    assert_eq!(region_constrained_cost(&mscale, &mask, 50, 64, 0, [0.0, 0.0, 0.0]), Cost::Finite(0.0));
}

proptest! {
    #[test]
    fn control_set_points_lie_on_the_unit_level_set(seed in 0u64..100_000, n in 3usize..64) {
        let mut r = common::rng(seed);
        let t = random_spd(&mut r, 100.0);
        for p in control_set_ellipse(&t, n).unwrap() {
            prop_assert!((t.inner(p, p) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dot_stage_ignores_score_rescaling(a in 0.0..6.28f64, b in 0.0..6.28f64, pa in 0.0..6.28f64, s in 0.01..100.0f64) {
        let g = UnitVector2::from_angle;
        // distinct |dot| values: selection is decided before the score tie-break
        prop_assume!((g(a).dot(&g(pa)).abs() - g(b).dot(&g(pa)).abs()).abs() > 1e-9);
        let c1 = [(g(a), 0.3), (g(b), 0.8)];
        let c2 = [(g(a), 0.3 * s), (g(b), 0.8 * s)];
        prop_assert_eq!(select_candidate(&c1, g(pa), 0.5), select_candidate(&c2, g(pa), 0.5 * s));
    }
}
