//! Feature precomputation and the extraction pipelines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExtractionConfig, PropagationMode};
use crate::error::{invalid, Error, Result};
use crate::fast_marching::{
    partial_fronts_run, DynamicInputs, DynamicMetricState, DynamicNeighbourhoods, DynamicSolver, FrontState,
    PartialFronts, StaticSolver,
};
use crate::geodesic::{backtrack_geodesic, concatenate_paths, join_segments, GeodesicPath};
use crate::grid::{BlockTensor, ScalarImage, TensorField};
use crate::metrics::{build_m_aniso_2d, build_mscale, RegionMask};
use crate::oof::{oof_response, optimal_scale_features, OofVolume, OptimalScaleMap};
use crate::orientation::{
    build_kernel_bank, build_t_base, coherence_enhance, local_maxima_set, orientation_score_psi, OrientationPeakSet,
    OrientationVolume,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f()?;
    timings.push(StageTiming { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
    Ok(out)
}

/// Image features shared by every extraction on one image.
#[derive(Debug)]
pub struct FeatureStack {
    pub image: ScalarImage,
    pub oof: OofVolume,
    pub scale_map: OptimalScaleMap,
    pub raw: OrientationVolume,
    pub enhanced: OrientationVolume,
    pub peaks: OrientationPeakSet,
    pub t_base: TensorField,
    pub neighbourhoods: DynamicNeighbourhoods,
    pub timings: Vec<StageTiming>,
    key: String,
}

impl FeatureStack {
    pub fn compute(image: ScalarImage, cfg: &ExtractionConfig) -> Result<Self> {
        cfg.validate()?;
        let mut timings = Vec::new();
        let radii = cfg.radii()?;
        let oof = timed(&mut timings, "oof", || oof_response(&image, &radii, cfg.oof_sigma))?;
        let scale_map = optimal_scale_features(&oof);
        let raw = timed(&mut timings, "orientation-score", || Ok(orientation_score_psi(&scale_map, cfg.n_theta)))?;
        let enhanced = timed(&mut timings, "coherence-enhancement", || {
            let bank = build_kernel_bank(cfg.sigma1, cfg.sigma2, cfg.window, cfg.n_theta, cfg.eps1)?;
            coherence_enhance(&raw, &bank)
        })?;
        let peaks = local_maxima_set(&enhanced, cfg.ell);
        let t_base = timed(&mut timings, "base-tensor", || {
            build_t_base(&raw, &peaks, &enhanced, cfg.alpha, cfg.xi_ident, cfg.eps2, cfg.base_mode)
        })?;
        let neighbourhoods = timed(&mut timings, "neighbourhoods", || {
            DynamicNeighbourhoods::build(&t_base, cfg.n_theta, cfg.xi_aniso, cfg.stencil())
        })?;
        Ok(Self { image, oof, scale_map, raw, enhanced, peaks, t_base, neighbourhoods, timings, key: cfg.feature_key() })
    }

    /// Whether these features were computed with the parameters of `cfg`.
    pub fn is_compatible(&self, cfg: &ExtractionConfig) -> bool {
        self.key == cfg.feature_key()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    fn inputs(&self) -> DynamicInputs<'_> {
        DynamicInputs { t_base: &self.t_base, enhanced: &self.enhanced, peaks: &self.peaks, mask: None }
    }

    fn node(&self, p: [usize; 2]) -> usize {
        p[1] * self.width() + p[0]
    }
}

fn check_points(points: &[[usize; 2]], w: usize, h: usize) -> Result<()> {
    if points.len() < 2 {
        return Err(invalid("at least a source and an end point are required"));
    }
    for p in points {
        if p[0] >= w || p[1] >= h {
            return Err(Error::Domain(format!("point ({}, {}) outside the {w}x{h} image", p[0], p[1])));
        }
    }
    for pair in points.windows(2) {
        if pair[0] == pair[1] {
            return Err(invalid(format!("consecutive points coincide at ({}, {})", pair[0][0], pair[0][1])));
        }
    }
    Ok(())
}

/// Fronts kept from one segment extraction.
#[derive(Debug, Clone)]
pub enum Fronts {
    Single(FrontState, DynamicMetricState),
    Partial(PartialFronts),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDiagnostics {
    pub from: [usize; 2],
    pub to: [usize; 2],
    /// Meeting node of the two fronts (partial mode).
    pub saddle: Option<[usize; 2]>,
    /// Accepted pixels where no orientation peak was available.
    pub orientation_fallbacks: usize,
    /// Path samples produced by discrete ancestor steps.
    pub trace_fallback_steps: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub path: GeodesicPath,
    pub diagnostics: SegmentDiagnostics,
    pub fronts: Fronts,
}

fn dynamic_metric(m: &DynamicMetricState) -> impl Fn(usize) -> Option<BlockTensor> + '_ {
    |i| m.tensor(i).map(BlockTensor::planar)
}

/// One dynamic extraction from `a` to `b`.
pub fn trace_segment(stack: &FeatureStack, a: [usize; 2], b: [usize; 2], cfg: &ExtractionConfig) -> Result<SegmentOutcome> {
    check_points(&[a, b], stack.width(), stack.height())?;
    let (s, q) = (stack.node(a), stack.node(b));
    let params = cfg.dynamic_params();
    let trace = cfg.trace_options();
    match cfg.mode {
        PropagationMode::Single => {
            let mut solver = DynamicSolver::new(stack.inputs(), params, &stack.neighbourhoods, s)?;
            solver.run_until(q)?;
            let (state, metric) = solver.into_parts();
            let path = backtrack_geodesic(&state, dynamic_metric(&metric), q, trace)?.into_planar().reversed();
            let diagnostics = SegmentDiagnostics {
                from: a,
                to: b,
                saddle: None,
                orientation_fallbacks: metric.fallback_count(&state),
                trace_fallback_steps: path.fallback_steps,
                accepted: state.accepted_order().len(),
            };
            Ok(SegmentOutcome { path, diagnostics, fronts: Fronts::Single(state, metric) })
        }
        PropagationMode::Partial => {
            let pf = partial_fronts_run(stack.inputs(), params, &stack.neighbourhoods, s, q)?;
            let m = pf.saddle;
            let (sf, sm) = &pf.from_s;
            let (qf, qm) = &pf.from_q;
            let to_s = backtrack_geodesic(sf, dynamic_metric(sm), m, trace)?.into_planar();
            let to_q = backtrack_geodesic(qf, dynamic_metric(qm), m, trace)?.into_planar();
            let [mx, my, _] = sf.dims.coords(m);
            let joined =
                concatenate_paths(&to_s.reversed(), &to_q.reversed(), [mx as f64, my as f64], cfg.stop_radius, cfg.spacing)?;
            let diagnostics = SegmentDiagnostics {
                from: a,
                to: b,
                saddle: Some([mx, my]),
                orientation_fallbacks: sm.fallback_count(sf) + qm.fallback_count(qf),
                trace_fallback_steps: joined.parametric.fallback_steps,
                accepted: sf.accepted_order().len() + qf.accepted_order().len(),
            };
            Ok(SegmentOutcome { path: joined.resampled, diagnostics, fronts: Fronts::Partial(pf) })
        }
    }
}

#[derive(Debug, Clone)]
pub struct AfcResult {
    pub path: GeodesicPath,
    pub segments: Vec<SegmentOutcome>,
}

/// Dynamic extraction through an ordered point list, one segment per
/// consecutive pair.
pub fn extract_centerline_afc(stack: &FeatureStack, points: &[[usize; 2]], cfg: &ExtractionConfig) -> Result<AfcResult> {
    check_points(points, stack.width(), stack.height())?;
    let segments = points.windows(2).map(|p| trace_segment(stack, p[0], p[1], cfg)).collect::<Result<Vec<_>>>()?;
    let paths: Vec<GeodesicPath> = segments.iter().map(|s| s.path.clone()).collect();
    Ok(AfcResult { path: join_segments(&paths)?, segments })
}

/// Static baseline on the planar anisotropic flux metric.
pub fn extract_static_aniso(stack: &FeatureStack, points: &[[usize; 2]], cfg: &ExtractionConfig) -> Result<GeodesicPath> {
    check_points(points, stack.width(), stack.height())?;
    let (field, _) = build_m_aniso_2d(&stack.scale_map, cfg.c_ratio)?;
    let solver = StaticSolver::planar(&field, None, cfg.stencil())?;
    let mut segments = Vec::with_capacity(points.len() - 1);
    for pair in points.windows(2) {
        let (s, q) = (stack.node(pair[0]), stack.node(pair[1]));
        let state = solver.run(&[s], &[q])?;
        let path = backtrack_geodesic(&state, |i| solver.metric(i).copied(), q, cfg.trace_options())?;
        segments.push(path.into_planar().reversed());
    }
    join_segments(&segments)
}

#[derive(Debug, Clone)]
pub struct RcResult {
    /// Centerline with per-sample radii.
    pub path: GeodesicPath,
    pub mask: RegionMask,
    pub state: FrontState,
}

/// Radius-lifted extraction restricted to the dilated prior.
pub fn extract_radius_lifted_rc(
    stack: &FeatureStack,
    prior: &GeodesicPath,
    s: [usize; 2],
    q: [usize; 2],
    cfg: &ExtractionConfig,
) -> Result<RcResult> {
    check_points(&[s, q], stack.width(), stack.height())?;
    let (w, h) = (stack.width(), stack.height());
    let mask = RegionMask::from_prior(&prior.points, w, h, cfg.dilation_radius())?;
    for p in [s, q] {
        if !mask.contains(p[0], p[1]) {
            return Err(Error::MaskTooTight(format!("point ({}, {}) lies outside the dilated prior", p[0], p[1])));
        }
    }
    let mscale = build_mscale(&stack.oof, cfg.c_ratio, cfg.beta_scale)?;
    let solver = StaticSolver::radius_lifted(&mscale, Some(&mask), cfg.stencil())?;
    let dims = solver.dims();
    let lift = |p: [usize; 2]| dims.index(p[0], p[1], stack.scale_map.radius_index(p[0], p[1]));
    let (sh, qh) = (lift(s), lift(q));
    let state = solver.run(&[sh], &[qh]).map_err(|e| match e {
        Error::Unreachable(msg) => Error::MaskTooTight(format!("{msg}; enlarge the dilation radius")),
        other => other,
    })?;
    let path = backtrack_geodesic(&state, |i| solver.metric(i).copied(), qh, cfg.trace_options())?
        .into_lifted(stack.oof.radii())
        .reversed();
    Ok(RcResult { path, mask, state })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractionResult {
    pub path: GeodesicPath,
    pub radius_path: Option<GeodesicPath>,
    #[serde(skip)]
    pub region_mask: Option<RegionMask>,
    pub segments: Vec<SegmentDiagnostics>,
    pub timings: Vec<StageTiming>,
}

/// AFC extraction through `points`, optionally refined by the radius-lifted
/// region-constrained pass.
pub fn run_extraction(stack: &FeatureStack, points: &[[usize; 2]], cfg: &ExtractionConfig) -> Result<ExtractionResult> {
    if !stack.is_compatible(cfg) {
        return Err(invalid("feature parameters differ from the precomputed features"));
    }
    let mut timings = Vec::new();
    let afc = timed(&mut timings, "afc", || extract_centerline_afc(stack, points, cfg))?;
    let rc = if cfg.radius_lift {
        let (s, q) = (points[0], points[points.len() - 1]);
        Some(timed(&mut timings, "radius-lift", || extract_radius_lifted_rc(stack, &afc.path, s, q, cfg))?)
    } else {
        None
    };
    Ok(ExtractionResult {
        path: afc.path,
        radius_path: rc.as_ref().map(|r| r.path.clone()),
        region_mask: rc.map(|r| r.mask),
        segments: afc.segments.into_iter().map(|s| s.diagnostics).collect(),
        timings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// Dynamic coherence metric.
    Afc,
    /// Static planar flux metric.
    Aniso,
    /// Unit metric.
    Iso,
}

/// Full distance map from `s`; unreached cells are infinite.
pub fn distance_map(stack: &FeatureStack, s: [usize; 2], kind: DistanceKind, cfg: &ExtractionConfig) -> Result<Vec<f64>> {
    let (w, h) = (stack.width(), stack.height());
    if s[0] >= w || s[1] >= h {
        return Err(Error::Domain(format!("point ({}, {}) outside the image", s[0], s[1])));
    }
    let node = stack.node(s);
    let state = match kind {
        DistanceKind::Afc => {
            let mut solver = DynamicSolver::new(stack.inputs(), cfg.dynamic_params(), &stack.neighbourhoods, node)?;
            while solver.step().is_some() {}
            solver.into_parts().0
        }
        DistanceKind::Aniso => {
            let (field, _) = build_m_aniso_2d(&stack.scale_map, cfg.c_ratio)?;
            StaticSolver::planar(&field, None, cfg.stencil())?.run(&[node], &[])?
        }
        DistanceKind::Iso => {
            let field = TensorField::filled(w, h, crate::grid::SymTensor2::identity());
            StaticSolver::planar(&field, None, cfg.stencil())?.run(&[node], &[])?
        }
    };
    Ok(state.accepted_values())
}
