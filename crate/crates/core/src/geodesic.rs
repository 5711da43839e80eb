//! Continuous geodesic backtracking on distance maps, path concatenation
//! and arc-length resampling.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fast_marching::{Dims, FrontState};
use crate::grid::{BlockTensor, Interpolate, Point2};
use crate::oof::RadiusSpace;

/// Centerline polyline in cell coordinates, with optional per-point radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub points: Vec<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Number of samples produced by discrete ancestor stepping.
    #[serde(default)]
    pub fallback_steps: usize,
}

impl GeodesicPath {
    pub fn new(points: Vec<Point2>) -> Self {
        Self { points, radii: None, fallback_steps: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<Point2> {
        self.points.first().copied()
    }

    pub fn last(&self) -> Option<Point2> {
        self.points.last().copied()
    }

    /// Cumulative spatial arc length at each sample.
    pub fn arc_length(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.points.len());
        let mut s = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                s += dist(self.points[i - 1], *p);
            }
            acc.push(s);
        }
        acc
    }

    pub fn length(&self) -> f64 {
        self.arc_length().last().copied().unwrap_or(0.0)
    }

    pub fn reversed(&self) -> Self {
        let mut p = self.clone();
        p.points.reverse();
        if let Some(r) = p.radii.as_mut() {
            r.reverse();
        }
        p
    }

    /// Largest distance between consecutive samples.
    pub fn max_spacing(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).fold(0.0, f64::max)
    }

    /// JSON array of `[x, y]` or `[x, y, r]`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| match &self.radii {
                Some(r) => serde_json::json!([p[0], p[1], r[i]]),
                None => serde_json::json!([p[0], p[1]]),
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let rows = value.as_array().ok_or_else(|| invalid("path must be a JSON array"))?;
        let mut points = Vec::with_capacity(rows.len());
        let mut radii = Vec::new();
        for row in rows {
            let v: Vec<f64> = row
                .as_array()
                .and_then(|a| a.iter().map(|x| x.as_f64()).collect())
                .ok_or_else(|| invalid("path entries must be numeric arrays"))?;
            match v.len() {
                2 => points.push([v[0], v[1]]),
                3 => {
                    points.push([v[0], v[1]]);
                    radii.push(v[2]);
                }
                n => return Err(invalid(format!("path entry has {n} components"))),
            }
        }
        if !radii.is_empty() && radii.len() != points.len() {
            return Err(invalid("path mixes 2D and radius-lifted entries"));
        }
        Ok(Self { points, radii: (!radii.is_empty()).then_some(radii), fallback_steps: 0 })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.radii.is_some() { "x,y,r\n" } else { "x,y\n" });
        for (i, p) in self.points.iter().enumerate() {
            match &self.radii {
                Some(r) => out.push_str(&format!("{},{},{}\n", p[0], p[1], r[i])),
                None => out.push_str(&format!("{},{}\n", p[0], p[1])),
            }
        }
        out
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// ODE step length in cells.
    pub step: f64,
    /// Distance to a source at which integration stops.
    pub stop_radius: f64,
    /// Consecutive non-descending attempts before a discrete step.
    pub max_failures: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { step: 0.5, stop_radius: 1.5, max_failures: 10 }
    }
}

/// Backtracked curve in lattice coordinates `(x, y, r_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    pub points: Vec<[f64; 3]>,
    pub fallback_steps: usize,
}

impl LatticePath {
    pub fn into_planar(self) -> GeodesicPath {
        GeodesicPath {
            points: self.points.iter().map(|p| [p[0], p[1]]).collect(),
            radii: None,
            fallback_steps: self.fallback_steps,
        }
    }

    /// Spatial path with the radial coordinate mapped through `radii`.
    pub fn into_lifted(self, radii: &RadiusSpace) -> GeodesicPath {
        let r = radii.radii();
        let radius_at = |t: f64| {
            let t = t.clamp(0.0, (r.len() - 1) as f64);
            let i = (t.floor() as usize).min(r.len().saturating_sub(2));
            if r.len() == 1 {
                return r[0];
            }
            let f = t - i as f64;
            r[i] * (1.0 - f) + r[i + 1] * f
        };
        GeodesicPath {
            points: self.points.iter().map(|p| [p[0], p[1]]).collect(),
            radii: Some(self.points.iter().map(|p| radius_at(p[2])).collect()),
            fallback_steps: self.fallback_steps,
        }
    }
}

/// Read-only sampler of a finished front and its metric.
struct Sampler<'a, F> {
    front: &'a FrontState,
    metric: F,
    dims: Dims,
}

impl<F: Fn(usize) -> Option<BlockTensor>> Sampler<'_, F> {
    fn u(&self, i: usize) -> f64 {
        if self.front.is_accepted(i) {
            self.front.value(i)
        } else {
            f64::INFINITY
        }
    }

    /// Lattice corners around `p` with their trilinear weights.
    fn corners(&self, p: [f64; 3]) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = [self.dims.nx, self.dims.ny, self.dims.nr];
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            if n[d] > 1 {
                let c = p[d].clamp(0.0, (n[d] - 1) as f64);
                base[d] = (c.floor() as usize).min(n[d] - 2);
                frac[d] = c - base[d] as f64;
            }
        }
        (0..8u8).filter_map(move |k| {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for d in 0..3 {
                let bit = ((k >> d) & 1) as usize;
                if bit == 1 && n[d] == 1 {
                    return None;
                }
                idx[d] = base[d] + bit;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            (w > 0.0 || k == 0).then(|| (self.dims.index(idx[0], idx[1], idx[2]), w))
        })
    }

    fn blend<T: Interpolate>(&self, p: [f64; 3], mut f: impl FnMut(usize) -> Option<T>) -> Option<T> {
        let mut acc = T::zero();
        let mut total = 0.0;
        for (i, w) in self.corners(p) {
            if !self.u(i).is_finite() {
                continue;
            }
            if let Some(v) = f(i) {
                acc = acc.add_scaled(v, w);
                total += w;
            }
        }
        (total > 1e-12).then(|| T::zero().add_scaled(acc, 1.0 / total))
    }

    fn sample_u(&self, p: [f64; 3]) -> Option<f64> {
        self.blend(p, |i| Some(self.u(i)))
    }

    /// Central differences, one-sided next to infinite or missing neighbours.
    fn node_gradient(&self, i: usize) -> [f64; 3] {
        let ui = self.u(i);
        let mut g = [0.0; 3];
        for (d, gd) in g.iter_mut().enumerate() {
            let mut e = [0i32; 3];
            e[d] = 1;
            let fwd = self.dims.offset(i, e).map(|j| self.u(j)).filter(|v| v.is_finite());
            e[d] = -1;
            let bwd = self.dims.offset(i, e).map(|j| self.u(j)).filter(|v| v.is_finite());
            *gd = match (bwd, fwd) {
                (Some(b), Some(f)) => 0.5 * (f - b),
                (None, Some(f)) => f - ui,
                (Some(b), None) => ui - b,
                (None, None) => 0.0,
            };
        }
        g
    }

    fn gradient(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        self.blend(p, |i| Some(Vec3(self.node_gradient(i)))).map(|v| v.0)
    }

    /// Unit descent direction `-M^-1 grad U / |M^-1 grad U|`.
    fn direction(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let g = self.gradient(p)?;
        let m = self.blend(p, |i| (self.metric)(i))?;
        let v = m.inverse()?.apply(g);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        (n > 1e-300 && n.is_finite()).then(|| [-v[0] / n, -v[1] / n, -v[2] / n])
    }

    fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        let n = [self.dims.nx, self.dims.ny, self.dims.nr];
        std::array::from_fn(|d| p[d].clamp(0.0, (n[d] - 1) as f64))
    }

    fn node_point(&self, i: usize) -> [f64; 3] {
        let c = self.dims.coords(i);
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }

    /// Whether the lattice node nearest to `p` was reached.
    fn nearest_reached(&self, p: [f64; 3]) -> bool {
        let n = [self.dims.nx, self.dims.ny, self.dims.nr];
        let c: [usize; 3] = std::array::from_fn(|d| (p[d].round().max(0.0) as usize).min(n[d] - 1));
        self.u(self.dims.index(c[0], c[1], c[2])).is_finite()
    }

    /// Nearest corner with finite value, by value.
    fn lowest_corner(&self, p: [f64; 3]) -> Option<usize> {
        self.corners(p)
            .map(|(i, _)| i)
            .filter(|&i| self.u(i).is_finite())
            .min_by(|&a, &b| self.u(a).total_cmp(&self.u(b)).then(a.cmp(&b)))
    }
}

#[derive(Clone, Copy)]
struct Vec3([f64; 3]);

impl Interpolate for Vec3 {
    fn zero() -> Self {
        Vec3([0.0; 3])
    }
    fn add_scaled(self, o: Self, w: f64) -> Self {
        Vec3([self.0[0] + w * o.0[0], self.0[1] + w * o.0[1], self.0[2] + w * o.0[2]])
    }
}

/// Integrates the descent ODE from `from` back to the nearest source with
/// Heun steps. `metric` returns the tensor at a lattice node.
pub fn backtrack_geodesic<F>(front: &FrontState, metric: F, from: usize, opts: TraceOptions) -> Result<LatticePath>
where
    F: Fn(usize) -> Option<BlockTensor>,
{
    let dims = front.dims;
    if from >= dims.len() {
        return Err(Error::Domain(format!("node {from} outside the lattice")));
    }
    if !front.is_accepted(from) || !front.value(from).is_finite() {
        return Err(Error::Unreachable(format!("node {from} was not reached by the front")));
    }
    if front.sources().is_empty() {
        return Err(invalid("front has no source"));
    }
    if !(opts.step > 0.0) || !(opts.stop_radius > 0.0) {
        return Err(crate::error::config("trace step and stop radius must be positive"));
    }
    let sm = Sampler { front, metric, dims };
    let sources: Vec<[f64; 3]> = front.sources().iter().map(|&s| sm.node_point(s)).collect();
    let nearest_source = |p: [f64; 3]| {
        sources.iter().copied().min_by(|a, b| dist3(*a, p).total_cmp(&dist3(*b, p))).expect("non-empty")
    };

    let mut x = sm.node_point(from);
    let mut u = front.value(from);
    let mut points = vec![x];
    let mut fallback = 0;
    if front.is_source(from) {
        return Ok(LatticePath { points, fallback_steps: 0 });
    }
    let mut h = opts.step;
    let mut fails = 0;
    let max_iters = 64 * (dims.nx + dims.ny + dims.nr) * ((1.0 / opts.step).ceil() as usize).max(1);
    let mut iters = 0;
    loop {
        let src = nearest_source(x);
        if dist3(src, x) <= opts.stop_radius {
            if src != x {
                points.push(src);
            }
            break;
        }
        iters += 1;
        let mut moved = false;
        if iters <= max_iters {
            if let Some(k1) = sm.direction(x) {
                let x1 = sm.clamp(std::array::from_fn(|d| x[d] + h * k1[d]));
                let k2 = sm.direction(x1).unwrap_or(k1);
                let xn = sm.clamp(std::array::from_fn(|d| x[d] + 0.5 * h * (k1[d] + k2[d])));
                if let Some(un) = sm.sample_u(xn).filter(|_| sm.nearest_reached(xn)) {
                    if un < u {
                        x = xn;
                        u = un;
                        points.push(x);
                        fails = 0;
                        h = opts.step;
                        moved = true;
                    }
                }
            }
        }
        if moved {
            continue;
        }
        fails += 1;
        h *= 0.5;
        if fails >= opts.max_failures || iters > max_iters {
            // stagnation: step down the discrete ancestor chain
            let mut node = sm.lowest_corner(x).ok_or_else(|| Error::Numeric("lost the finite region".into()))?;
            while sm.u(node) >= u {
                match front.ancestor(node) {
                    Some(a) => node = a,
                    None => break,
                }
            }
            x = sm.node_point(node);
            u = sm.u(node);
            points.push(x);
            fallback += 1;
            fails = 0;
            h = opts.step;
            if front.is_source(node) {
                break;
            }
        }
    }
    Ok(LatticePath { points, fallback_steps: fallback })
}

/// Node reached after following `chi` ancestor links (or the source).
pub fn truncated_backtrack(front: &FrontState, from: usize, chi: usize) -> usize {
    front.truncated_backtrack(from, chi).0
}

/// Joined path over `[0, 1]` with the meeting point at parameter one half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatenatedPath {
    pub parametric: GeodesicPath,
    pub params: Vec<f64>,
    /// Index of the meeting point in `parametric`.
    pub middle: usize,
    /// Uniform arc-length resampling of `parametric`.
    pub resampled: GeodesicPath,
}

/// Joins `path_from_s` (s to m) with `path_from_q` (q to m) traversed in
/// reverse, so the result runs from s through m to q.
pub fn concatenate_paths(
    path_from_s: &GeodesicPath,
    path_from_q: &GeodesicPath,
    meeting: Point2,
    stop_radius: f64,
    spacing: f64,
) -> Result<ConcatenatedPath> {
    for (name, p) in [("s", path_from_s), ("q", path_from_q)] {
        let end = p.last().ok_or_else(|| invalid(format!("path from {name} is empty")))?;
        if dist(end, meeting) > stop_radius + 1e-9 {
            return Err(invalid(format!(
                "path from {name} ends at ({:.2}, {:.2}), {:.2} cells from the meeting point",
                end[0],
                end[1],
                dist(end, meeting)
            )));
        }
    }
    if path_from_s.radii.is_some() != path_from_q.radii.is_some() {
        return Err(invalid("cannot join a radius-lifted path with a planar one"));
    }
    let snap = |p: &GeodesicPath| {
        let mut p = p.clone();
        let n = p.points.len();
        p.points[n - 1] = meeting;
        if n >= 2 && p.points[n - 2] == meeting {
            p.points.pop();
            if let Some(r) = p.radii.as_mut() {
                r.pop();
            }
        }
        p
    };
    let a = snap(path_from_s);
    let b = snap(path_from_q).reversed();
    let (na, nb) = (a.len(), b.len());
    let mut points = a.points.clone();
    points.extend_from_slice(&b.points[1..]);
    let radii = a.radii.as_ref().map(|ra| {
        let mut r = ra.clone();
        let mid = 0.5 * (ra[na - 1] + b.radii.as_ref().expect("checked")[0]);
        r[na - 1] = mid;
        r.extend_from_slice(&b.radii.as_ref().expect("checked")[1..]);
        r
    });
    let mut params = Vec::with_capacity(points.len());
    for i in 0..na {
        params.push(if na == 1 { 0.5 } else { 0.5 * i as f64 / (na - 1) as f64 });
    }
    for j in 1..nb {
        params.push(0.5 + 0.5 * j as f64 / (nb - 1) as f64);
    }
    if na == 1 {
        params[0] = 0.0;
    }
    let parametric = GeodesicPath { points, radii, fallback_steps: a.fallback_steps + b.fallback_steps };
    let resampled = resample_arc_length(&parametric, spacing)?;
    Ok(ConcatenatedPath { parametric, params, middle: na - 1, resampled })
}

/// Resamples at uniform arc-length spacing no larger than `spacing`,
/// keeping both endpoints.
pub fn resample_arc_length(path: &GeodesicPath, spacing: f64) -> Result<GeodesicPath> {
    if path.is_empty() {
        return Err(invalid("cannot resample an empty path"));
    }
    if !(spacing > 0.0) {
        return Err(crate::error::config("resampling spacing must be positive"));
    }
    let s = path.arc_length();
    let total = *s.last().expect("non-empty");
    if total == 0.0 {
        return Ok(GeodesicPath { points: vec![path.points[0]], radii: path.radii.as_ref().map(|r| vec![r[0]]), ..path.clone() });
    }
    let n = (total / spacing).ceil().max(1.0) as usize;
    let mut points = Vec::with_capacity(n + 1);
    let mut radii = path.radii.as_ref().map(|_| Vec::with_capacity(n + 1));
    let mut seg = 0;
    for k in 0..=n {
        let t = total * k as f64 / n as f64;
        while seg + 2 < s.len() && s[seg + 1] < t {
            seg += 1;
        }
        let len = s[seg + 1] - s[seg];
        let f = if len > 0.0 { ((t - s[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (p0, p1) = (path.points[seg], path.points[seg + 1]);
        points.push([p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1])]);
        if let (Some(out), Some(r)) = (radii.as_mut(), path.radii.as_ref()) {
            out.push(r[seg] + f * (r[seg + 1] - r[seg]));
        }
    }
    *points.last_mut().expect("non-empty") = *path.points.last().expect("non-empty");
    Ok(GeodesicPath { points, radii, fallback_steps: path.fallback_steps })
}

/// Joins consecutive segments that share endpoints (waypoint extraction).
pub fn join_segments(segments: &[GeodesicPath]) -> Result<GeodesicPath> {
    let first = segments.first().ok_or_else(|| invalid("no segments to join"))?;
    let mut out = first.clone();
    for seg in &segments[1..] {
        if seg.radii.is_some() != out.radii.is_some() {
            return Err(invalid("cannot join a radius-lifted path with a planar one"));
        }
        let skip = usize::from(seg.first().is_some() && seg.first() == out.last());
        out.points.extend_from_slice(&seg.points[skip..]);
        if let (Some(r), Some(sr)) = (out.radii.as_mut(), seg.radii.as_ref()) {
            r.extend_from_slice(&sr[skip..]);
        }
        out.fallback_steps += seg.fallback_steps;
    }
    Ok(out)
}
