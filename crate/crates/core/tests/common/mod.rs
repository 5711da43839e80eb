//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the code under test except for plain data
//! accessors (kernel values, tensor fields), so every comparison pits two
//! separately written computations against each other.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tubular_core::fft::Kernel;
use tubular_core::grid::{Point2, SymTensor2, TensorField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Half-sample mirror, written out independently of the library helper.
pub fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// `out(x) = sum_d k(d) in(x - d)` with mirrored borders, by brute force.
pub fn direct_convolve(values: &[f64], w: usize, h: usize, k: &Kernel) -> Vec<f64> {
    let r = k.radius as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    acc += k.at(dx, dy) * values[mirror(y - dy, h) * w + mirror(x - dx, w)];
                }
            }
            out[(y as usize) * w + x as usize] = acc;
        }
    }
    out
}

/// OOF tensors computed the long way: disk average first, then each Hessian
/// component, then division by the radius. Radius-major like the library.
pub fn oof_sequential(values: &[f64], w: usize, h: usize, radii: &[f64], sigma: f64) -> Vec<SymTensor2> {
    let hess = tubular_core::oof::gaussian_hessian(sigma);
    let mut out = Vec::with_capacity(w * h * radii.len());
    for &r in radii {
        let disk = tubular_core::oof::disk_kernel(r);
        let averaged = direct_convolve(values, w, h, &disk);
        let comps: Vec<Vec<f64>> = hess.iter().map(|k| direct_convolve(&averaged, w, h, k)).collect();
        for i in 0..w * h {
            out.push(SymTensor2::new(comps[0][i] / r, comps[1][i] / r, comps[2][i] / r));
        }
    }
    out
}

/// Enhanced score by direct summation: each bin of the globally normalized
/// raw score convolved with the opposite-direction half kernel, divided by
/// that kernel's mass and clipped at zero. Pixel-major like the library.
pub fn enhance_direct(raw: &[f64], w: usize, h: usize, n_theta: usize, h_kernels: &[&Kernel]) -> Vec<f64> {
    let norm = raw.iter().cloned().fold(0.0, f64::max);
    let mut out = vec![0.0; raw.len()];
    for k in 0..n_theta {
        let slice: Vec<f64> = (0..w * h).map(|i| raw[i * n_theta + k] / norm).collect();
        let kernel = h_kernels[(k + n_theta / 2) % n_theta];
        let mass: f64 = kernel.values.iter().sum();
        let conv = direct_convolve(&slice, w, h, kernel);
        for i in 0..w * h {
            out[i * n_theta + k] = (conv[i] / mass).max(0.0);
        }
    }
    out
}

/// Smooth random SPD field: rotation and log-eigenvalues are sums of a few
/// low-frequency waves. `spread` bounds the log of each eigenvalue.
pub fn smooth_metric(w: usize, h: usize, spread: f64, seed: u64) -> TensorField {
    let mut r = rng(seed);
    let mut wave = || {
        let terms: Vec<[f64; 4]> = (0..3)
            .map(|_| {
                [
                    r.random_range(-1.0..1.0) / 3.0,
                    r.random_range(0.02..0.12),
                    r.random_range(0.02..0.12),
                    r.random_range(0.0..std::f64::consts::TAU),
                ]
            })
            .collect();
        move |x: f64, y: f64| terms.iter().map(|[a, fx, fy, p]| a * (fx * x + fy * y + p).sin()).sum::<f64>()
    };
    let (fa, f1, f2) = (wave(), wave(), wave());
    TensorField::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let angle = 3.0 * fa(x, y);
        let (l1, l2) = ((spread * f1(x, y)).exp(), (spread * f2(x, y)).exp());
        let (c, s) = (angle.cos(), angle.sin());
        SymTensor2::new(l1 * c * c + l2 * s * s, (l1 - l2) * c * s, l1 * s * s + l2 * c * c)
    })
}

fn lerp_tensor(field: &TensorField, p: Point2) -> [f64; 3] {
    let (w, h) = (field.width(), field.height());
    let x0 = (p[0].floor() as usize).min(w - 2);
    let y0 = (p[1].floor() as usize).min(h - 2);
    let (fx, fy) = (p[0] - x0 as f64, p[1] - y0 as f64);
    let mut acc = [0.0; 3];
    for (dx, dy, wt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        let t = field.get(x0 + dx, y0 + dy);
        acc[0] += wt * t.a11;
        acc[1] += wt * t.a12;
        acc[2] += wt * t.a22;
    }
    acc
}

/// Length of the straight edge `a -> a + v` under the bilinearly
/// interpolated metric, by 16-point midpoint quadrature.
pub fn edge_cost(field: &TensorField, a: [usize; 2], v: [i64; 2]) -> f64 {
    const N: usize = 16;
    let (vx, vy) = (v[0] as f64, v[1] as f64);
    (0..N)
        .map(|i| {
            let t = (i as f64 + 0.5) / N as f64;
            let m = lerp_tensor(field, [a[0] as f64 + t * vx, a[1] as f64 + t * vy]);
            (m[0] * vx * vx + 2.0 * m[1] * vx * vy + m[2] * vy * vy).sqrt()
        })
        .sum::<f64>()
        / N as f64
}

pub const NEIGHBOURS_16: [[i64; 2]; 16] = [
    [1, 0], [-1, 0], [0, 1], [0, -1],
    [1, 1], [1, -1], [-1, 1], [-1, -1],
    [2, 1], [2, -1], [-2, 1], [-2, -1],
    [1, 2], [1, -2], [-1, 2], [-1, -2],
];

/// Shortest path distances on the 16-neighbour graph with integrated edge
/// lengths.
pub fn dijkstra_16(field: &TensorField, source: [usize; 2]) -> Vec<f64> {
    let (w, h) = (field.width(), field.height());
    let mut dist = vec![f64::INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    dist[source[1] * w + source[0]] = 0.0;
    heap.push(Reverse((Ordered(0.0), source[1] * w + source[0])));
    while let Some(Reverse((Ordered(d), i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let (x, y) = (i % w, i / w);
        for v in NEIGHBOURS_16 {
            let (nx, ny) = (x as i64 + v[0], y as i64 + v[1]);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            let nd = d + edge_cost(field, [x, y], v);
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Reverse((Ordered(nd), j)));
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Ordered(f64);
impl Eq for Ordered {}
impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn point_to_polyline(p: Point2, line: &[Point2]) -> f64 {
    if line.len() == 1 {
        return (p[0] - line[0][0]).hypot(p[1] - line[0][1]);
    }
    line.windows(2).map(|s| seg_dist(p, s[0], s[1])).fold(f64::INFINITY, f64::min)
}

/// Largest distance from a vertex of `a` to the polyline `b`.
pub fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    a.iter().map(|&p| point_to_polyline(p, b)).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines (vertices against
/// segments, which is exact for the vertex side).
pub fn hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

pub fn spd_min_eigen(t: &SymTensor2) -> f64 {
    let m = 0.5 * (t.a11 + t.a22);
    let d = (0.25 * (t.a11 - t.a22).powi(2) + t.a12 * t.a12).sqrt();
    m - d
}

/// Unit eigenvector of the smaller eigenvalue, by the closed form.
pub fn min_eigenvector(t: &SymTensor2) -> [f64; 2] {
    let l = spd_min_eigen(t);
    let v = if t.a12.abs() > 1e-300 {
        [t.a12, l - t.a11]
    } else if t.a11 <= t.a22 {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

pub fn wall<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = std::time::Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}
