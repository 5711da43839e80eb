//! Metric-adapted acute stencils via Selling's obtuse superbase reduction.

use crate::error::{Error, Result};
use crate::grid::{BlockTensor, SymTensor2};

/// Integer grid offset `[dx, dy, dr]`.
pub type Offset = [i32; 3];

const NO_VERTEX: u8 = u8::MAX;
const MAX_SELLING_STEPS: usize = 64;

/// Simplices (pairs in 2D, triples in 3D) over a shared vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub vertices: Vec<Offset>,
    /// Vertex indices; the third entry is unused for planar stencils.
    pub simplices: Vec<[u8; 3]>,
}

impl Stencil {
    pub fn simplex_vertices<'a>(&'a self, s: &'a [u8; 3]) -> impl Iterator<Item = Offset> + 'a {
        s.iter().filter(|&&i| i != NO_VERTEX).map(|&i| self.vertices[i as usize])
    }

    pub fn contains_vertex(&self, e: Offset) -> bool {
        self.vertices.contains(&e)
    }

    /// Largest Chebyshev extent of the spatial offsets.
    pub fn radius(&self) -> i32 {
        self.vertices.iter().map(|v| v[0].abs().max(v[1].abs())).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StencilOptions {
    /// Rounds of mediant insertion between consecutive polygon vertices.
    pub refine: u8,
}

impl Default for StencilOptions {
    fn default() -> Self {
        Self { refine: 1 }
    }
}

impl StencilOptions {
    /// Bare Selling stencil without mediant insertion.
    pub const COARSE: Self = Self { refine: 0 };
}

#[inline]
fn inner2(m: &SymTensor2, u: [i32; 2], v: [i32; 2]) -> f64 {
    m.inner([u[0] as f64, u[1] as f64], [v[0] as f64, v[1] as f64])
}

fn scale_tol(m: &SymTensor2, u: [i32; 2], v: [i32; 2]) -> f64 {
    1e-12 * (inner2(m, u, u) * inner2(m, v, v)).sqrt()
}

/// Obtuse superbase `(e0, e1, e2)`, `e0 + e1 + e2 = 0`, with
/// `<ei, M ej> <= 0` for all `i != j`.
pub fn selling_superbase(m: &SymTensor2) -> Result<[[i32; 2]; 3]> {
    if !m.is_spd() {
        return Err(Error::Numeric(format!("stencil construction requires an SPD tensor, got {m:?}")));
    }
    let mut b = [[1, 0], [0, 1], [-1, -1]];
    for _ in 0..MAX_SELLING_STEPS {
        let mut changed = false;
        for (i, j, k) in [(0, 1, 2), (0, 2, 1), (1, 2, 0)] {
            if inner2(m, b[i], b[j]) > scale_tol(m, b[i], b[j]) {
                let (ei, ej) = (b[i], b[j]);
                b[i] = [-ei[0], -ei[1]];
                b[k] = [ei[0] - ej[0], ei[1] - ej[1]];
                changed = true;
                break;
            }
        }
        if !changed {
            return Ok(b);
        }
    }
    Err(Error::Numeric(format!("superbase reduction did not converge for {m:?}")))
}

/// Angularly ordered boundary polygon of the planar stencil.
pub fn stencil_polygon(m: &SymTensor2, opts: StencilOptions) -> Result<Vec<[i32; 2]>> {
    let [e0, e1, e2] = selling_superbase(m)?;
    let neg = |v: [i32; 2]| [-v[0], -v[1]];
    let hexagon = [e0, neg(e2), e1, neg(e0), e2, neg(e1)];
    let mut poly = Vec::with_capacity(8);
    for i in 0..6 {
        let (u, v) = (hexagon[i], hexagon[(i + 1) % 6]);
        poly.push(u);
        // right angle under M: add the mediant so the stencil stays symmetric
        if inner2(m, u, v).abs() <= scale_tol(m, u, v) {
            poly.push([u[0] + v[0], u[1] + v[1]]);
        }
    }
    for _ in 0..opts.refine {
        let mut next = Vec::with_capacity(poly.len() * 2);
        for i in 0..poly.len() {
            let (u, v) = (poly[i], poly[(i + 1) % poly.len()]);
            next.push(u);
            next.push([u[0] + v[0], u[1] + v[1]]);
        }
        poly = next;
    }
    Ok(poly)
}

pub fn build_stencil_2d(m: &SymTensor2, opts: StencilOptions) -> Result<Stencil> {
    let poly = stencil_polygon(m, opts)?;
    let n = poly.len();
    Ok(Stencil {
        vertices: poly.iter().map(|v| [v[0], v[1], 0]).collect(),
        simplices: (0..n).map(|i| [i as u8, ((i + 1) % n) as u8, NO_VERTEX]).collect(),
    })
}

/// Bipyramid over the planar polygon of the spatial block, apexes `+-r`.
pub fn build_stencil_3d(m: &BlockTensor, opts: StencilOptions) -> Result<Stencil> {
    if !(m.radial > 0.0 && m.radial.is_finite()) {
        return Err(Error::Numeric(format!("radial weight must be positive, got {}", m.radial)));
    }
    let poly = stencil_polygon(&m.spatial, opts)?;
    let n = poly.len();
    let mut vertices: Vec<Offset> = poly.iter().map(|v| [v[0], v[1], 0]).collect();
    vertices.push([0, 0, 1]);
    vertices.push([0, 0, -1]);
    let mut simplices = Vec::with_capacity(2 * n);
    for apex in [n as u8, n as u8 + 1] {
        for i in 0..n {
            simplices.push([i as u8, ((i + 1) % n) as u8, apex]);
        }
    }
    Ok(Stencil { vertices, simplices })
}

/// Smallest `<ei, M ej>` over distinct vertices of any simplex, normalized by norms.
pub fn min_acuteness(stencil: &Stencil, m: &BlockTensor) -> f64 {
    let f = |o: Offset| [o[0] as f64, o[1] as f64, o[2] as f64];
    let mut worst = f64::INFINITY;
    for s in &stencil.simplices {
        let vs: Vec<[f64; 3]> = stencil.simplex_vertices(s).map(f).collect();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                let c = m.inner(vs[i], vs[j]) / (m.norm(vs[i]) * m.norm(vs[j]));
                worst = worst.min(c);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UnitVector2;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_gives_octagon() {
        let s = build_stencil_2d(&SymTensor2::identity(), StencilOptions::COARSE).unwrap();
        let mut v: Vec<_> = s.vertices.iter().map(|o| (o[0], o[1])).collect();
        v.sort();
        assert_eq!(v, vec![(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]);
        assert_eq!(s.simplices.len(), 8);
        assert!(min_acuteness(&s, &BlockTensor::planar(SymTensor2::identity())) >= 0.0);
    }

    #[test]
    fn elongated_metric_gets_long_offsets() {
        let m = SymTensor2::diag(100.0, 1.0);
        let s = build_stencil_2d(&m, StencilOptions::COARSE).unwrap();
        assert!(min_acuteness(&s, &BlockTensor::planar(m)) >= -1e-12);
        // cheap direction is y: offsets are not elongated along x
        assert!(s.vertices.iter().all(|o| o[0].abs() <= 1));
        let rot = SymTensor2::from_eigen(1.0, UnitVector2::from_angle(0.4), 100.0, UnitVector2::from_angle(0.4).perp());
        let s = build_stencil_2d(&rot, StencilOptions::COARSE).unwrap();
        assert!(s.radius() >= 2);
    }

    #[test]
    fn random_spd_stencils_are_acute() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for refine in [0, 1] {
            for _ in 0..1000 {
                let v = UnitVector2::from_angle(rng.random_range(0.0..6.3));
                let m = SymTensor2::from_eigen(rng.random_range(0.01..1.0), v, rng.random_range(0.01..100.0), v.perp());
                let opts = StencilOptions { refine };
                let s2 = build_stencil_2d(&m, opts).unwrap();
                assert!(min_acuteness(&s2, &BlockTensor::planar(m)) >= -1e-9, "{m:?}");
                let b = BlockTensor::new(m, rng.random_range(0.1..10.0));
                let s3 = build_stencil_3d(&b, opts).unwrap();
                assert!(min_acuteness(&s3, &b) >= -1e-9);
            }
        }
    }

    #[test]
    fn non_spd_is_rejected() {
        assert!(matches!(selling_superbase(&SymTensor2::diag(1.0, -1.0)), Err(Error::Numeric(_))));
    }
}
