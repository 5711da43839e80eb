//! Synthetic tube images with exact ground-truth masks and centerlines.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::{Point2, ScalarImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Target tube running alongside a stronger one and nearly touching it.
    Parallel,
    /// Weak sinusoidal tube crossing a strong straight tube three times.
    Cross,
    /// Target tube leaving a straight line for an arc; the chord under the
    /// arc offers a shortcut.
    Loop,
    /// Two straight tubes of equal contrast crossing at about 65 degrees.
    EqualCross,
    /// One straight tube of radius 4.
    Tube,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Parallel, Preset::Cross, Preset::Loop, Preset::EqualCross, Preset::Tube];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Parallel => "parallel",
            Preset::Cross => "cross",
            Preset::Loop => "loop",
            Preset::EqualCross => "equal-cross",
            Preset::Tube => "tube",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" | "near-parallel" => Ok(Preset::Parallel),
            "cross" | "single-cross" => Ok(Preset::Cross),
            "loop" => Ok(Preset::Loop),
            "equal-cross" => Ok(Preset::EqualCross),
            "tube" => Ok(Preset::Tube),
            other => Err(config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    /// Dense polyline; the tube has flat caps at both ends.
    pub centerline: Vec<Point2>,
    pub radius: f64,
    /// Darkening relative to the unit background, in `(0, 1]`.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub tubes: Vec<TubeSpec>,
    /// Index of the tube the endpoints lie on.
    pub target: usize,
    /// Source and end.
    pub points: Vec<[usize; 2]>,
    /// Extra points for waypoint extraction, inserted after the source.
    pub waypoints: Vec<[usize; 2]>,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub spec: SynthSpec,
    pub image: ScalarImage,
    /// Per-tube masks of cells within the tube radius.
    pub masks: Vec<Vec<bool>>,
}

impl SyntheticImage {
    pub fn target_mask(&self) -> &[bool] {
        &self.masks[self.spec.target]
    }

    /// Union of all tubes other than the target.
    pub fn other_mask(&self) -> Vec<bool> {
        let mut out = vec![false; self.spec.width * self.spec.height];
        for (_, m) in self.masks.iter().enumerate().filter(|(t, _)| *t != self.spec.target) {
            out.iter_mut().zip(m).for_each(|(o, &v)| *o |= v);
        }
        out
    }

    pub fn centerlines(&self) -> Vec<&[Point2]> {
        self.spec.tubes.iter().map(|t| t.centerline.as_slice()).collect()
    }

    /// Source and end only.
    pub fn endpoints(&self) -> ([usize; 2], [usize; 2]) {
        (self.spec.points[0], *self.spec.points.last().expect("at least two points"))
    }

    /// Source, waypoints, end.
    pub fn points_with_waypoints(&self) -> Vec<[usize; 2]> {
        let (s, q) = self.endpoints();
        let mut v = vec![s];
        v.extend_from_slice(&self.spec.waypoints);
        v.push(q);
        v
    }
}

fn graph_curve(x0: f64, x1: f64, f: impl Fn(f64) -> f64) -> Vec<Point2> {
    let n = ((x1 - x0) / 0.25).ceil() as usize;
    (0..=n).map(|i| x0 + (x1 - x0) * i as f64 / n as f64).map(|x| [x, f(x)]).collect()
}

fn line(a: Point2, b: Point2) -> Vec<Point2> {
    let n = ((b[0] - a[0]).hypot(b[1] - a[1]) / 0.25).ceil().max(1.0) as usize;
    (0..=n).map(|i| i as f64 / n as f64).map(|t| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).collect()
}

fn nearest_cell(p: Point2) -> [usize; 2] {
    [p[0].round() as usize, p[1].round() as usize]
}

/// Geometry of a preset with per-seed jitter.
pub fn preset_spec(preset: Preset, seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7ab5);
    let mut jitter = |a: f64| rng.random_range(-a..=a);
    let (w, h) = (128, 128);
    let (tubes, target, points, waypoints) = match preset {
        Preset::Cross => {
            let ys = 64.0 + 0.25 + jitter(1.0);
            let amp = 28.0 + jitter(2.0);
            let phase = jitter(0.15);
            let weak_y = move |x: f64| 64.0 - amp * (TAU * (x - 16.0) / 96.0 + phase).sin();
            let strong = TubeSpec { centerline: graph_curve(2.0, 125.0, |_| ys), radius: 3.0, contrast: 0.6 };
            let weak = TubeSpec { centerline: graph_curve(8.0, 120.0, weak_y), radius: 2.5, contrast: 0.32 };
            let s = nearest_cell([28.0, weak_y(28.0)]);
            let q = nearest_cell([100.0, weak_y(100.0)]);
            (vec![weak, strong], 0, vec![s, q], vec![])
        }
        Preset::Parallel => {
            let ya = 56.0 + 0.3 + jitter(1.0);
            let gap = 9.0 + jitter(0.5);
            let b_y = move |x: f64| ya + gap - 6.5 * (-((x - 64.0) / 22.0).powi(2)).exp();
            let a = TubeSpec { centerline: graph_curve(4.0, 123.0, |_| ya), radius: 2.0, contrast: 0.6 };
            let b = TubeSpec { centerline: graph_curve(4.0, 123.0, b_y), radius: 2.0, contrast: 0.35 };
            let s = nearest_cell([12.0, b_y(12.0)]);
            let q = nearest_cell([116.0, b_y(116.0)]);
            (vec![b, a], 0, vec![s, q], vec![])
        }
        Preset::Loop => {
            let yc = 76.25 + jitter(1.0);
            let (xa, xb) = (32.0 + jitter(1.5), 96.0 + jitter(1.5));
            let hump = 36.0 + jitter(2.0);
            let arc_y = move |x: f64| yc - hump * (PI * (x - xa) / (xb - xa)).sin();
            let mut target = line([6.0, yc], [xa, yc]);
            target.pop();
            target.extend(graph_curve(xa, xb, arc_y));
            target.extend(line([xb, yc], [121.0, yc]).into_iter().skip(1));
            let chord = TubeSpec { centerline: line([xa, yc], [xb, yc]), radius: 3.0, contrast: 0.5 };
            let tube = TubeSpec { centerline: target, radius: 3.0, contrast: 0.5 };
            let top = nearest_cell([0.5 * (xa + xb), yc - hump]);
            (vec![tube, chord], 0, vec![nearest_cell([12.0, yc]), nearest_cell([116.0, yc])], vec![top])
        }
        Preset::EqualCross => {
            let t1 = (20.0 + jitter(3.0)) * PI / 180.0;
            let t2 = t1 + (65.0 + jitter(2.0)) * PI / 180.0;
            let c = [64.0, 64.0];
            let seg = |t: f64, len: f64| line([c[0] - len * t.cos(), c[1] - len * t.sin()], [c[0] + len * t.cos(), c[1] + len * t.sin()]);
            let a = TubeSpec { centerline: seg(t1, 56.0), radius: 2.5, contrast: 0.5 };
            let b = TubeSpec { centerline: seg(t2, 56.0), radius: 2.5, contrast: 0.5 };
            let s = nearest_cell([c[0] - 40.0 * t1.cos(), c[1] - 40.0 * t1.sin()]);
            let q = nearest_cell([c[0] + 40.0 * t1.cos(), c[1] + 40.0 * t1.sin()]);
            (vec![a, b], 0, vec![s, q], vec![])
        }
        Preset::Tube => {
            let y = 64.0 + 0.25 + 0.5 * (jitter(0.5) + 0.5);
            let tube = TubeSpec { centerline: line([8.0, y], [120.0, y]), radius: 4.0, contrast: 0.5 };
            (vec![tube], 0, vec![nearest_cell([20.0, y]), nearest_cell([108.0, y])], vec![])
        }
    };
    SynthSpec { width: w, height: h, tubes, target, points, waypoints, noise: 0.03, seed }
}

/// Distance from each cell centre to the centerline, flat-capped at both
/// ends; infinite beyond `reach`.
fn distance_field(points: &[Point2], w: usize, h: usize, reach: f64) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; w * h];
    let last = points.len().saturating_sub(2);
    for (k, seg) in points.windows(2).enumerate() {
        let (a, b) = (seg[0], seg[1]);
        let (lo_x, hi_x) = (a[0].min(b[0]) - reach, a[0].max(b[0]) + reach);
        let (lo_y, hi_y) = (a[1].min(b[1]) - reach, a[1].max(b[1]) + reach);
        let e = [b[0] - a[0], b[1] - a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        if len2 == 0.0 {
            continue;
        }
        let (y1, x1) = (hi_y.floor().min((h - 1) as f64), hi_x.floor().min((w - 1) as f64));
        if y1 < 0.0 || x1 < 0.0 {
            continue;
        }
        for y in lo_y.ceil().max(0.0) as usize..=y1 as usize {
            for x in lo_x.ceil().max(0.0) as usize..=x1 as usize {
                let p = [x as f64 - a[0], y as f64 - a[1]];
                let t = (p[0] * e[0] + p[1] * e[1]) / len2;
                if (k == 0 && t < 0.0) || (k == last && t > 1.0) {
                    continue;
                }
                let t = t.clamp(0.0, 1.0);
                let dist = (p[0] - t * e[0]).hypot(p[1] - t * e[1]);
                let i = y * w + x;
                if dist < d[i] {
                    d[i] = dist;
                }
            }
        }
    }
    d
}

fn polyline_distance(points: &[Point2], p: Point2) -> f64 {
    points
        .windows(2)
        .map(|s| {
            let e = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
            let v = [p[0] - s[0][0], p[1] - s[0][1]];
            let len2 = e[0] * e[0] + e[1] * e[1];
            let t = if len2 > 0.0 { ((v[0] * e[0] + v[1] * e[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (v[0] - t * e[0]).hypot(v[1] - t * e[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Renders anti-aliased dark tubes on a unit background with Gaussian noise.
pub fn generate(spec: &SynthSpec) -> Result<SyntheticImage> {
    let (w, h) = (spec.width, spec.height);
    if w < 8 || h < 8 {
        return Err(config("synthetic canvas must be at least 8x8"));
    }
    if spec.tubes.is_empty() || spec.target >= spec.tubes.len() {
        return Err(config("target tube index out of range"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(config("noise level must be non-negative"));
    }
    for (k, t) in spec.tubes.iter().enumerate() {
        if t.centerline.len() < 2 || !(t.radius > 0.0) || !(t.contrast > 0.0 && t.contrast <= 1.0) {
            return Err(config(format!("tube {k} needs two centerline points, positive radius and contrast in (0, 1]")));
        }
        if t.centerline.iter().any(|p| !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (w - 1) as f64 && p[1] <= (h - 1) as f64)) {
            return Err(config(format!("tube {k} leaves the canvas")));
        }
    }
    let target = &spec.tubes[spec.target];
    for p in spec.points.iter().chain(&spec.waypoints) {
        if p[0] >= w || p[1] >= h {
            return Err(config(format!("point ({}, {}) outside the canvas", p[0], p[1])));
        }
        if polyline_distance(&target.centerline, [p[0] as f64, p[1] as f64]) > target.radius {
            return Err(config(format!("point ({}, {}) is not on the target tube", p[0], p[1])));
        }
    }
    let mut darkness = vec![0.0f64; w * h];
    let mut masks = Vec::with_capacity(spec.tubes.len());
    for t in &spec.tubes {
        let d = distance_field(&t.centerline, w, h, t.radius + 1.0);
        for (i, &di) in d.iter().enumerate() {
            let cover = (t.radius + 0.5 - di).clamp(0.0, 1.0);
            darkness[i] = darkness[i].max(t.contrast * cover);
        }
        masks.push(d.iter().map(|&di| di <= t.radius).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).map_err(|e| config(e.to_string()))?;
    let values: Vec<f64> = darkness
        .iter()
        .map(|&dk| {
            let n = if spec.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            (1.0 - dk + n).clamp(0.0, 1.0)
        })
        .collect();
    Ok(SyntheticImage { spec: spec.clone(), image: ScalarImage::new(w, h, values)?, masks })
}

pub fn generate_preset(preset: Preset, seed: u64) -> Result<SyntheticImage> {
    generate(&preset_spec(preset, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_generate_and_are_deterministic() {
        for p in Preset::ALL {
            let a = generate_preset(p, 3).unwrap();
            let b = generate_preset(p, 3).unwrap();
            assert_eq!(a.image.values(), b.image.values());
            assert!(a.image.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let (s, q) = a.endpoints();
            assert!(a.target_mask()[s[1] * 128 + s[0]] && a.target_mask()[q[1] * 128 + q[0]], "{p:?}");
            assert_ne!(generate_preset(p, 4).unwrap().image.values(), a.image.values());
        }
        assert_eq!("single-cross".parse::<Preset>().unwrap(), Preset::Cross);
        assert!("spiral".parse::<Preset>().is_err());
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        let mut spec = preset_spec(Preset::Tube, 0);
        spec.tubes[0].centerline.push([500.0, 1.0]);
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
        let mut spec = preset_spec(Preset::Tube, 0);
        spec.points[0] = [20, 10];
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }
}
