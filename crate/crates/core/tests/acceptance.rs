//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Runs without the libtest harness so the
//! lines always show.

mod common;

use std::f64::consts::PI;

use common::{dijkstra_16, directed_hausdorff, smooth_metric, wall};
use tubular_core::fast_marching::{Dims, StaticSolver, StencilOptions};
use tubular_core::grid::{ScalarImage, SymTensor2, TensorField};
use tubular_core::oof::{oof_response, oof_response_raw, optimal_scale_features, RadiusSpace};
use tubular_core::pipeline::{
    evaluate_theta, extract_centerline_afc, extract_static_aniso, generate, generate_preset, preset_spec, run_extraction,
    trace_segment, ExtractionConfig, FeatureStack, Fronts, PropagationMode, Preset, SyntheticImage,
};

struct Gate {
    failed: Vec<&'static str>,
}

impl Gate {
    fn report(&mut self, name: &'static str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(name);
        }
    }
}

fn theta(syn: &SyntheticImage, points: &[[f64; 2]]) -> f64 {
    evaluate_theta(points, syn.target_mask(), syn.spec.width, syn.spec.height).unwrap()
}

fn eikonal(gate: &mut Gate) {
    let n = 128;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for m in [SymTensor2::identity(), SymTensor2::diag(4.0, 1.0)] {
        let field = TensorField::filled(n, n, m);
        let (state, secs) = wall(|| {
            let solver = StaticSolver::planar(&field, None, StencilOptions::default()).unwrap();
            solver.run(&[solver.dims().index(n / 2, n / 2, 0)], &[]).unwrap()
        });
        let c = (n / 2) as f64;
        for y in 0..n {
            for x in 0..n {
                let v = [x as f64 - c, y as f64 - c];
                if v[0].hypot(v[1]) >= 10.0 {
                    let exact = (m.a11 * v[0] * v[0] + 2.0 * m.a12 * v[0] * v[1] + m.a22 * v[1] * v[1]).sqrt();
                    worst.0 = worst.0.max((state.value(y * n + x) - exact).abs() / exact);
                }
            }
        }
        worst.1 = worst.1.max(secs);
    }
    gate.report(
        "eikonal-constant-metric",
        worst.0 < 0.03 && worst.1 < 1.0,
        format!("max rel error {:.4} (< 0.03), slowest run {:.3} s (< 1 s)", worst.0, worst.1),
    );
}

fn dijkstra(gate: &mut Gate) {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let field = smooth_metric(64, 64, 0.7, seed);
        let source = [31, 33];
        let solver = StaticSolver::planar(&field, None, StencilOptions::default()).unwrap();
        let state = solver.run(&[solver.dims().index(source[0], source[1], 0)], &[]).unwrap();
        let oracle = dijkstra_16(&field, source);
        for y in 0..64 {
            for x in 0..64 {
                if (x as f64 - source[0] as f64).hypot(y as f64 - source[1] as f64) >= 5.0 {
                    let i = y * 64 + x;
                    worst = worst.max((state.value(i) - oracle[i]).abs() / oracle[i]);
                }
            }
        }
    }
    gate.report("static-vs-dijkstra", worst < 0.05, format!("max rel error {worst:.4} (< 0.05)"));
}

fn oof(gate: &mut Gate) {
    let mut r = common::rng(5);
    let noise = ScalarImage::from_fn(32, 32, |_, _| rand::Rng::random::<f64>(&mut r)).unwrap();
    let radii = RadiusSpace::integer_steps(1.0, 4.0).unwrap();
    let fast = oof_response_raw(&noise, &radii, 1.0).unwrap();
    let slow = common::oof_sequential(noise.values(), 32, 32, radii.radii(), 1.0);
    let diff = fast.iter().zip(&slow).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max);
    let disk = ScalarImage::from_fn(48, 48, |x, y| if (x as f64 - 24.0).hypot(y as f64 - 24.0) <= 4.0 { 0.0 } else { 1.0 }).unwrap();
    let radii = RadiusSpace::integer_steps(1.0, 8.0).unwrap();
    let r = optimal_scale_features(&oof_response(&disk, &radii, 1.0).unwrap()).radius(24, 24);
    gate.report(
        "oof-fft-and-scale",
        diff < 1e-8 && (r - 4.0).abs() <= 1.0,
        format!("fft vs direct {diff:.2e} (< 1e-8), disk radius {r} (4 +- 1)"),
    );
}

fn axial_distance(k: usize, angle: f64, n_theta: usize) -> f64 {
    let bin = angle.rem_euclid(PI) / (2.0 * PI / n_theta as f64);
    let half = (n_theta / 2) as f64;
    let d = ((k % (n_theta / 2)) as f64 - bin).rem_euclid(half);
    d.min(half - d)
}

fn crossing_peaks(gate: &mut Gate) {
    let cfg = ExtractionConfig::default();
    let mut ok = true;
    let mut worst_enh = 0.0f64;
    let mut best_raw = f64::INFINITY;
    let mut slowest = 0.0f64;
    for seed in 0..3 {
        let syn = generate_preset(Preset::EqualCross, seed).unwrap();
        let truth: Vec<f64> = syn
            .centerlines()
            .iter()
            .map(|c| (c[c.len() - 1][1] - c[0][1]).atan2(c[c.len() - 1][0] - c[0][0]))
            .collect();
        let (stack, secs) = wall(|| FeatureStack::compute(syn.image.clone(), &cfg).unwrap());
        slowest = slowest.max(secs);
        let profile = stack.enhanced.profile(64, 64);
        let mut peaks: Vec<usize> = stack.peaks.peaks(64, 64).iter().map(|&k| k as usize).collect();
        peaks.sort_by(|a, b| profile[*b].total_cmp(&profile[*a]));
        let half = cfg.n_theta / 2;
        let mut top: Vec<usize> = Vec::new();
        for k in peaks {
            if top.iter().all(|t| t % half != k % half) {
                top.push(k);
            }
        }
        if top.len() < 2 {
            ok = false;
            continue;
        }
        for &t in &truth {
            let d = top[..2].iter().map(|&k| axial_distance(k, t, cfg.n_theta)).fold(f64::INFINITY, f64::min);
            worst_enh = worst_enh.max(d);
        }
        let arg = stack.raw.argmax(64, 64);
        best_raw = best_raw.min(truth.iter().map(|&t| axial_distance(arg, t, cfg.n_theta)).fold(f64::INFINITY, f64::min));
    }
    ok &= worst_enh <= 2.0 && best_raw > 2.0 && slowest < 10.0;
    gate.report(
        "crossing-orientation-peaks",
        ok,
        format!(
            "enhanced peaks off by <= {worst_enh:.2} bins (<= 2), raw argmax off by >= {best_raw:.2} bins (> 2), features {slowest:.2} s (< 10 s)"
        ),
    );
}

fn cross_preset(gate: &mut Gate) {
    let cfg = ExtractionConfig::default();
    let (mut afc_min, mut static_max, mut slowest) = (f64::INFINITY, 0.0f64, 0.0f64);
    for seed in 0..5 {
        let syn = generate_preset(Preset::Cross, seed).unwrap();
        let (thetas, secs) = wall(|| {
            let stack = FeatureStack::compute(syn.image.clone(), &cfg).unwrap();
            let afc = extract_centerline_afc(&stack, &syn.spec.points, &cfg).unwrap();
            let stat = extract_static_aniso(&stack, &syn.spec.points, &cfg).unwrap();
            (theta(&syn, &afc.path.points), theta(&syn, &stat.points))
        });
        afc_min = afc_min.min(thetas.0);
        static_max = static_max.max(thetas.1);
        slowest = slowest.max(secs);
    }
    gate.report(
        "cross-preset-coverage",
        afc_min >= 0.95 && static_max <= 0.8 && slowest < 30.0,
        format!("min AFC theta {afc_min:.3} (>= 0.95), max static theta {static_max:.3} (<= 0.8), slowest {slowest:.2} s (< 30 s)"),
    );
}

fn radius_recovery(gate: &mut Gate) {
    let cfg = ExtractionConfig { radius_lift: true, ..ExtractionConfig::default() };
    let (mut frac_min, mut h_max) = (1.0f64, 0.0f64);
    for seed in 0..3 {
        let syn = generate_preset(Preset::Tube, seed).unwrap();
        let stack = FeatureStack::compute(syn.image.clone(), &cfg).unwrap();
        let out = run_extraction(&stack, &syn.spec.points, &cfg).unwrap();
        let rc = out.radius_path.unwrap();
        let radii = rc.radii.as_ref().unwrap();
        let good = radii.iter().filter(|&&r| (r - 4.0).abs() <= 1.0).count();
        frac_min = frac_min.min(good as f64 / radii.len() as f64);
        h_max = h_max.max(directed_hausdorff(&rc.points, syn.centerlines()[0]));
    }
    gate.report(
        "radius-lifted-recovery",
        frac_min >= 0.9 && h_max < 2.0,
        format!("min fraction within 4 +- 1: {frac_min:.3} (>= 0.9), max deviation {h_max:.3} (< 2)"),
    );
}

fn partial_fronts(gate: &mut Gate) {
    let cfg = ExtractionConfig { mode: PropagationMode::Partial, ..ExtractionConfig::default() };
    let mut ok = true;
    let (mut worst_ratio, mut worst_spacing) = (0.0f64, 0.0f64);
    for (preset, seed) in [(Preset::Cross, 0), (Preset::Cross, 4), (Preset::Parallel, 1), (Preset::Tube, 2)] {
        let syn = generate_preset(preset, seed).unwrap();
        let stack = FeatureStack::compute(syn.image.clone(), &cfg).unwrap();
        let (a, b) = syn.endpoints();
        let seg = trace_segment(&stack, a, b, &cfg).unwrap();
        let Fronts::Partial(pf) = &seg.fronts else { unreachable!() };
        let (fs, fq) = (&pf.from_s.0, &pf.from_q.0);
        let gap = (fs.value(pf.saddle) - fq.value(pf.saddle)).abs();
        let bound = fs.max_ancestor_increment().max(fq.max_ancestor_increment());
        worst_ratio = worst_ratio.max(gap / bound);
        ok &= gap <= bound + 1e-12;
        ok &= seg.path.first() == Some([a[0] as f64, a[1] as f64]) && seg.path.last() == Some([b[0] as f64, b[1] as f64]);
        worst_spacing = worst_spacing.max(seg.path.max_spacing());
    }
    ok &= worst_spacing <= std::f64::consts::SQRT_2;
    gate.report(
        "partial-fronts-concatenation",
        ok,
        format!("saddle gap / step bound <= {worst_ratio:.3} (<= 1), endpoints exact: {ok}, max spacing {worst_spacing:.3} (<= sqrt 2)"),
    );
}

fn loop_waypoint(gate: &mut Gate) {
    let cfg = ExtractionConfig::default();
    let (mut two_max, mut three_min) = (0.0f64, f64::INFINITY);
    for seed in 0..3 {
        let syn = generate_preset(Preset::Loop, seed).unwrap();
        let stack = FeatureStack::compute(syn.image.clone(), &cfg).unwrap();
        let two = extract_centerline_afc(&stack, &syn.spec.points, &cfg).unwrap();
        let three = extract_centerline_afc(&stack, &syn.points_with_waypoints(), &cfg).unwrap();
        two_max = two_max.max(theta(&syn, &two.path.points));
        three_min = three_min.min(theta(&syn, &three.path.points));
    }
    gate.report(
        "loop-waypoint",
        two_max < 0.9 && three_min >= 0.95,
        format!("two-point theta <= {two_max:.3} (< 0.9), with waypoint >= {three_min:.3} (>= 0.95)"),
    );
}

fn invariants(gate: &mut Gate) {
    let cfg = ExtractionConfig { radius_lift: true, ..ExtractionConfig::default() };
    let mut notes = Vec::new();
    for (preset, seed) in [(Preset::Cross, 2), (Preset::Loop, 0)] {
        let syn = generate_preset(preset, seed).unwrap();
        let stack = FeatureStack::compute(syn.image.clone(), &cfg).unwrap();
        if !stack.t_base.data().iter().all(|t| t.is_spd() && common::spd_min_eigen(t) > 0.0) {
            notes.push(format!("{preset:?}: base tensor not SPD"));
        }
        let pts = syn.points_with_waypoints();
        let a = run_extraction(&stack, &pts, &cfg).unwrap();
        let b = run_extraction(&stack, &pts, &cfg).unwrap();
        let bits = |p: &[[f64; 2]]| p.iter().flat_map(|q| [q[0].to_bits(), q[1].to_bits()]).collect::<Vec<_>>();
        let (ra, rb) = (a.radius_path.as_ref().unwrap(), b.radius_path.as_ref().unwrap());
        if bits(&a.path.points) != bits(&b.path.points) || bits(&ra.points) != bits(&rb.points) || ra.radii != rb.radii {
            notes.push(format!("{preset:?}: repeat runs differ"));
        }
        let mask = a.region_mask.as_ref().unwrap();
        if !ra.points.iter().all(|p| mask.contains(p[0].round() as usize, p[1].round() as usize)) {
            notes.push(format!("{preset:?}: radius path leaves the region"));
        }
        if theta(&syn, &ra.points) < theta(&syn, &a.path.points) - 0.02 {
            notes.push(format!("{preset:?}: radius lift lost coverage"));
        }
        for seg in &extract_centerline_afc(&stack, &pts, &cfg).unwrap().segments {
            let monotone = match &seg.fronts {
                Fronts::Single(state, _) => state.is_monotone(),
                Fronts::Partial(pf) => pf.from_s.0.is_monotone() && pf.from_q.0.is_monotone(),
            };
            if !monotone {
                notes.push(format!("{preset:?}: non-monotone acceptance"));
            }
        }
    }
    // a masked static run never accepts masked nodes
    let dims = Dims { nx: 30, ny: 30, nr: 1 };
    let mask: Vec<bool> = (0..dims.len()).map(|i| i % 7 != 3).collect();
    let field = smooth_metric(30, 30, 0.5, 9);
    let solver = StaticSolver::planar(&field, Some(&mask), StencilOptions::default()).unwrap();
    let state = solver.run(&[0], &[]).unwrap();
    if (0..dims.len()).any(|i| !mask[i] && state.is_accepted(i)) || !state.is_monotone() {
        notes.push("masked static run".into());
    }
    let ok = notes.is_empty();
    let detail = if ok { "SPD tensors, monotone fronts, bit-identical repeats, region containment".to_string() } else { notes.join("; ") };
    gate.report("invariant-suite", ok, detail);
}

fn large_image_timing(gate: &mut Gate) {
    let cfg = ExtractionConfig::default();
    // the cross preset scaled to 256 x 256
    let mut spec = preset_spec(Preset::Cross, 0);
    spec.width *= 2;
    spec.height *= 2;
    for tube in &mut spec.tubes {
        tube.centerline.iter_mut().for_each(|p| *p = [2.0 * p[0], 2.0 * p[1]]);
    }
    spec.points.iter_mut().for_each(|p| *p = [2 * p[0], 2 * p[1]]);
    let syn = generate(&spec).unwrap();
    let (result, secs) = wall(|| {
        let stack = FeatureStack::compute(syn.image.clone(), &cfg)?;
        run_extraction(&stack, &syn.spec.points, &cfg)
    });
    let ok = result.is_ok() && secs < 5.0;
    gate.report("pipeline-256-timing", ok, format!("features + extraction {secs:.2} s (< 5 s), ok: {}", result.is_ok()));
}

fn main() {
    let mut gate = Gate { failed: Vec::new() };
    eikonal(&mut gate);
    dijkstra(&mut gate);
    oof(&mut gate);
    crossing_peaks(&mut gate);
    cross_preset(&mut gate);
    radius_recovery(&mut gate);
    partial_fronts(&mut gate);
    loop_waypoint(&mut gate);
    invariants(&mut gate);
    large_image_timing(&mut gate);
    if !gate.failed.is_empty() {
        eprintln!("failed criteria: {:?}", gate.failed);
        std::process::exit(1);
    }
}
