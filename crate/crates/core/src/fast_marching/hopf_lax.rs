//! Closed-form Hopf-Lax updates on a single stencil simplex.
//!
//! For a node `x` with simplex vertices `x + e_i` carrying values `U_i`, the
//! update is `min_z ||z||_M + U(z)` over the convex hull of the `e_i`, with
//! `U` interpolated linearly.

use crate::grid::BlockTensor;

/// Minimized value and the index (within the simplex) of the vertex with the
/// largest barycentric weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Update {
    pub value: f64,
    pub ancestor: usize,
}

fn better(a: Option<Update>, b: Update) -> Option<Update> {
    match a {
        Some(a) if a.value <= b.value => Some(a),
        _ => Some(b),
    }
}

/// Segment update between vertices `u` and `v`.
pub fn solve_pair(m: &BlockTensor, u: [f64; 3], uu: f64, v: [f64; 3], uv: f64) -> Update {
    let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
    let a = m.inner(u, u);
    let b = m.inner(u, d);
    let c = m.inner(d, d);
    let delta = uv - uu;
    let mut best = if a.sqrt() + uu <= m.norm(v) + uv {
        Update { value: a.sqrt() + uu, ancestor: 0 }
    } else {
        Update { value: m.norm(v) + uv, ancestor: 1 }
    };
    let slack = c - delta * delta;
    if slack > 0.0 && c > 0.0 {
        let disc = (a * c - b * b).max(0.0) / slack;
        let lambda = (-b - delta * disc.sqrt()) / c;
        if lambda > 0.0 && lambda < 1.0 {
            let z = [u[0] + lambda * d[0], u[1] + lambda * d[1], u[2] + lambda * d[2]];
            let value = m.norm(z) + uu + lambda * delta;
            if value < best.value {
                best = Update { value, ancestor: if lambda > 0.5 { 1 } else { 0 } };
            }
        }
    }
    best
}

fn det3(c: &[[f64; 3]; 3]) -> f64 {
    c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[1][0] * (c[0][1] * c[2][2] - c[0][2] * c[2][1])
        + c[2][0] * (c[0][1] * c[1][2] - c[0][2] * c[1][1])
}

/// Solves `A x = y` for a 3x3 matrix given by its columns.
fn solve3(cols: &[[f64; 3]; 3], y: [f64; 3]) -> Option<[f64; 3]> {
    let d = det3(cols);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut c = *cols;
        c[k] = y;
        *o = det3(&c) / d;
    }
    Some(out)
}

/// Interior solution on a triangle face, if the optimum lies strictly inside.
fn solve_face(m: &BlockTensor, e: &[[f64; 3]; 3], vals: [f64; 3]) -> Option<Update> {
    // linear model U(x + y) = t + <g, y>, so E^T g = U - t 1, with rows of E^T = e_i
    let rows_as_cols = [[e[0][0], e[1][0], e[2][0]], [e[0][1], e[1][1], e[2][1]], [e[0][2], e[1][2], e[2][2]]];
    let a = solve3(&rows_as_cols, vals)?;
    let b = solve3(&rows_as_cols, [1.0; 3])?;
    let inv = m.inverse()?;
    let qa = inv.inner(a, a);
    let qb = inv.inner(b, b);
    let qab = inv.inner(a, b);
    // (a - t b)^T M^-1 (a - t b) = 1
    let disc = qab * qab - qb * (qa - 1.0);
    if qb <= 0.0 || disc < 0.0 {
        return None;
    }
    let t = (qab + disc.sqrt()) / qb;
    let g = [a[0] - t * b[0], a[1] - t * b[1], a[2] - t * b[2]];
    let dir = inv.apply(g);
    let w = solve3(e, [-dir[0], -dir[1], -dir[2]])?;
    if w.iter().any(|&x| x < 0.0) {
        return None;
    }
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return None;
    }
    let lam = [w[0] / s, w[1] / s, w[2] / s];
    let ancestor = (0..3).fold(0, |best, i| if lam[i] > lam[best] { i } else { best });
    Some(Update { value: t, ancestor })
}

/// Update over one simplex of 1 to 3 vertices; non-finite vertex values are
/// ignored. Returns `None` when no vertex is finite.
pub fn solve_simplex(m: &BlockTensor, verts: &[[f64; 3]], vals: &[f64]) -> Option<Update> {
    let finite: Vec<usize> = (0..verts.len()).filter(|&i| vals[i].is_finite()).collect();
    match finite.len() {
        0 => None,
        1 => {
            let i = finite[0];
            Some(Update { value: m.norm(verts[i]) + vals[i], ancestor: i })
        }
        2 => {
            let (i, j) = (finite[0], finite[1]);
            let r = solve_pair(m, verts[i], vals[i], verts[j], vals[j]);
            Some(Update { value: r.value, ancestor: if r.ancestor == 0 { i } else { j } })
        }
        _ => {
            let e = [verts[0], verts[1], verts[2]];
            if let Some(u) = solve_face(m, &e, [vals[0], vals[1], vals[2]]) {
                return Some(u);
            }
            let mut best = None;
            for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                let r = solve_pair(m, verts[i], vals[i], verts[j], vals[j]);
                best = better(best, Update { value: r.value, ancestor: if r.ancestor == 0 { i } else { j } });
            }
            best
        }
    }
}
