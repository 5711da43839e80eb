//! Riemannian metric assembly: the radius-lifted static tensor, the dynamic
//! appearance-coherence tensor, the region-constrained cost and control sets.

use serde::{Deserialize, Serialize};

use crate::error::{config, invalid, Error, Result};
use crate::grid::{BlockTensor, Point2, SymTensor2, TensorField, UnitVector2};
use crate::oof::{OofVolume, OptimalScaleMap};
use crate::raster;

/// `e^{alpha rho2} q q^T + e^{alpha rho1} q_perp q_perp^T` where `q` is the
/// `rho1` eigenvector (the tube direction).
pub fn aniso_tensor(rho1: f64, rho2: f64, q: UnitVector2, alpha: f64) -> SymTensor2 {
    SymTensor2::from_eigen((alpha * rho2).exp(), q, (alpha * rho1).exp(), q.perp())
}

/// Calibrated `alpha = -2 ln(C_ratio) / max(rho2 - rho1)`.
pub fn calibrate_alpha(max_gap: f64, c_ratio: f64) -> Result<f64> {
    if !(c_ratio > 1.0 && c_ratio.is_finite()) {
        return Err(config(format!("anisotropy ratio must exceed 1, got {c_ratio}")));
    }
    if !(max_gap > 0.0) {
        return Err(Error::DegenerateFeature("eigenvalue gap is zero everywhere".into()));
    }
    Ok(-2.0 * c_ratio.ln() / max_gap)
}

/// Radius-lifted static metric: spatial block plus radial weight per `(x, r)`.
#[derive(Debug, Clone)]
pub struct MscaleField {
    width: usize,
    height: usize,
    n_r: usize,
    pub alpha: f64,
    pub beta: f64,
    pub c_ratio: f64,
    spatial: Vec<SymTensor2>,
    radial: Vec<f64>,
}

impl MscaleField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    #[inline]
    pub fn block(&self, x: usize, y: usize, ri: usize) -> BlockTensor {
        let i = (ri * self.height + y) * self.width + x;
        BlockTensor::new(self.spatial[i], self.radial[i])
    }

    pub fn spatial(&self) -> &[SymTensor2] {
        &self.spatial
    }
}

pub fn build_mscale(vol: &OofVolume, c_ratio: f64, beta: f64) -> Result<MscaleField> {
    if !(beta > 0.0) {
        return Err(config(format!("beta_scale must be positive, got {beta}")));
    }
    let (w, h, n_r) = (vol.width(), vol.height(), vol.radii().len());
    let mut max_gap = 0.0f64;
    for ri in 0..n_r {
        for y in 0..h {
            for x in 0..w {
                let (r1, r2, _) = vol.features(x, y, ri);
                max_gap = max_gap.max(r2 - r1);
            }
        }
    }
    let alpha = calibrate_alpha(max_gap, c_ratio)?;
    let mut spatial = Vec::with_capacity(w * h * n_r);
    let mut radial = Vec::with_capacity(w * h * n_r);
    for ri in 0..n_r {
        for y in 0..h {
            for x in 0..w {
                let (r1, r2, q) = vol.features(x, y, ri);
                spatial.push(aniso_tensor(r1, r2, q, alpha));
                radial.push(beta * (0.5 * alpha * (r1 + r2)).exp());
            }
        }
    }
    Ok(MscaleField { width: w, height: h, n_r, alpha, beta, c_ratio, spatial, radial })
}

/// Planar `M_aniso` from the optimal-scale features, calibrated the same way.
pub fn build_m_aniso_2d(map: &OptimalScaleMap, c_ratio: f64) -> Result<(TensorField, f64)> {
    let (w, h) = (map.width(), map.height());
    let mut max_gap = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            max_gap = max_gap.max(map.rho2(x, y) - map.rho1(x, y));
        }
    }
    let alpha = calibrate_alpha(max_gap, c_ratio)?;
    let field = TensorField::from_fn(w, h, |x, y| aniso_tensor(map.rho1(x, y), map.rho2(x, y), map.q_of(x, y), alpha));
    Ok((field, alpha))
}

/// `phi = exp(lambda |Psi(x, mu_x) - Psi(b, mu_b)|)`.
#[inline]
pub fn coherence_penalty(psi_x: f64, psi_b: f64, lambda: f64) -> f64 {
    (lambda * (psi_x - psi_b).abs()).exp()
}

/// Outcome of the feature vector selection at a pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection<T> {
    pub choice: T,
    /// No local maximum was available; the reference direction was kept.
    pub fallback: bool,
}

const DOT_TIE_TOL: f64 = 1e-12;

/// Picks among candidate orientations `(direction, score)`: first those
/// most aligned (in absolute value) with `p_a`, then the one whose score is
/// closest to `psi_a`, then the smallest angle. Returns the candidate index,
/// or `None` when there are no candidates.
pub fn select_candidate(candidates: &[(UnitVector2, f64)], p_a: UnitVector2, psi_a: f64) -> Option<usize> {
    let best_dot = candidates.iter().map(|(u, _)| u.dot(&p_a).abs()).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(usize, f64)> = None;
    for (i, (u, score)) in candidates.iter().enumerate() {
        if u.dot(&p_a).abs() < best_dot - DOT_TIE_TOL {
            continue;
        }
        let gap = (score - psi_a).abs();
        best = match best {
            None => Some((i, gap)),
            Some((j, g)) => {
                let better = gap < g || (gap == g && u.angle() < candidates[j].0.angle());
                if better {
                    Some((i, gap))
                } else {
                    Some((j, g))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

/// Bin-level selection at a pixel given its peak bins and score profile;
/// falls back to the reference bin `mu_a` when there are no peaks.
pub fn select_feature_bin(peaks: &[u16], profile: &[f64], mu_a: usize, psi_a: f64) -> Selection<usize> {
    let n = profile.len();
    let dir = |k: usize| UnitVector2::from_angle(crate::orientation::bin_angle(k, n));
    if peaks.is_empty() {
        return Selection { choice: mu_a, fallback: true };
    }
    let candidates: Vec<(UnitVector2, f64)> = peaks.iter().map(|&k| (dir(k as usize), profile[k as usize])).collect();
    let i = select_candidate(&candidates, dir(mu_a), psi_a).expect("non-empty candidates");
    Selection { choice: peaks[i] as usize, fallback: false }
}

/// `phi (T_base + xi_aniso p_perp p_perp^T)`.
#[inline]
pub fn assemble_t_coh(t_base: SymTensor2, p: UnitVector2, phi: f64, xi_aniso: f64) -> SymTensor2 {
    (t_base + SymTensor2::outer(p.perp().components()) * xi_aniso) * phi
}

/// Cells allowed for the region-constrained metric.
#[derive(Debug, Clone)]
pub struct RegionMask {
    width: usize,
    height: usize,
    cells: Vec<bool>,
    pub dilation: f64,
}

impl RegionMask {
    /// Rasterizes the prior curve and dilates it by a disk of `dilation` cells.
    pub fn from_prior(prior: &[Point2], width: usize, height: usize, dilation: f64) -> Result<Self> {
        if prior.len() < 2 {
            return Err(invalid("prior curve needs at least two points"));
        }
        let mut seed = vec![false; width * height];
        for i in raster::rasterize_polyline(prior, width, height) {
            seed[i] = true;
        }
        let cells = raster::dilate(&seed, width, height, dilation);
        let mask = Self { width, height, cells, dilation };
        for p in [prior[0], prior[prior.len() - 1]] {
            if !mask.contains_point(p) {
                return Err(invalid(format!("prior endpoint ({}, {}) outside the image", p[0], p[1])));
            }
        }
        if !raster::is_connected(&mask.cells, width, height) {
            return Err(invalid("constrained region is not connected"));
        }
        Ok(mask)
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), width * height);
        Self { width, height, cells, dilation: 0.0 }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    /// Whether the cell containing `p` is inside the region.
    pub fn contains_point(&self, p: Point2) -> bool {
        let (x, y) = ((p[0] + 0.5).floor(), (p[1] + 0.5).floor());
        x >= 0.0 && y >= 0.0 && (x as usize) < self.width && (y as usize) < self.height && self.contains(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// A metric cost, with infinity kept out of arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cost {
    Finite(f64),
    Unreachable,
}

impl Cost {
    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Unreachable => None,
        }
    }
}

/// Block norm of `u` at `(x, y, ri)` when `(x, y)` lies in the region.
pub fn region_constrained_cost(mscale: &MscaleField, mask: &RegionMask, x: usize, y: usize, ri: usize, u: [f64; 3]) -> Cost {
    if mask.contains(x, y) {
        Cost::Finite(mscale.block(x, y, ri).norm(u))
    } else {
        Cost::Unreachable
    }
}

/// Boundary samples of `{u : <u, t u> = 1}`.
pub fn control_set_ellipse(t: &SymTensor2, n_samples: usize) -> Result<Vec<[f64; 2]>> {
    if !t.is_spd() {
        return Err(invalid(format!("control set requires an SPD tensor, got {t:?}")));
    }
    Ok((0..n_samples)
        .map(|k| {
            let g = UnitVector2::from_angle(std::f64::consts::TAU * k as f64 / n_samples as f64).components();
            let n = t.norm(g);
            [g[0] / n, g[1] / n]
        })
        .collect())
}

pub fn control_set_csv(points: &[[f64; 2]], center: Point2) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        out.push_str(&format!("{},{}\n", center[0] + p[0], center[1] + p[1]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn equal_eigenvalues_give_isotropic_tensor() {
        let t = aniso_tensor(0.3, 0.3, UnitVector2::from_angle(0.7), -4.0);
        assert!((t.a11 - t.a22).abs() < 1e-14 && t.a12.abs() < 1e-14);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(calibrate_alpha(0.0, 10.0), Err(Error::DegenerateFeature(_))));
        assert!(matches!(calibrate_alpha(1.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn penalty_values() {
        assert_eq!(coherence_penalty(0.4, 0.4, 20.0), 1.0);
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = coherence_penalty(i as f64 / 100.0, 0.0, 20.0);
            assert!(v > prev && v >= 1.0);
            prev = v;
        }
    }

    #[test]
    fn selection_examples() {
        let g = UnitVector2::from_angle;
        assert_eq!(select_candidate(&[(g(0.5), 0.2)], g(0.5), 0.9), Some(0));
        assert_eq!(select_candidate(&[(g(0.1), 0.5), (g(1.6), 0.5)], g(0.0), 0.5), Some(0));
        // opposite directions tie on |dot|; closer score wins
        let c = [(g(0.2), 0.9), (g(0.2 + std::f64::consts::PI), 0.45)];
        assert_eq!(select_candidate(&c, g(0.2), 0.5), Some(1));
        // full tie: smallest angle
        let c = [(g(4.0), 0.5), (g(4.0 - std::f64::consts::PI), 0.5)];
        assert_eq!(select_candidate(&c, g(1.0), 0.5), Some(1));
        assert_eq!(select_candidate(&[], g(0.0), 0.0), None);
    }

    #[test]
    fn fallback_keeps_reference_bin() {
        let s = select_feature_bin(&[], &[0.0; 16], 5, 0.3);
        assert_eq!(s, Selection { choice: 5, fallback: true });
    }

    #[test]
    fn t_coh_trivial_and_aligned() {
        let tb = SymTensor2::new(2.0, 0.3, 1.0);
        assert_eq!(assemble_t_coh(tb, UnitVector2::from_angle(1.0), 1.0, 0.0), tb);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let v = UnitVector2::from_angle(rng.random_range(0.0..6.3));
            let tb = SymTensor2::from_eigen(rng.random_range(0.01..1.0), v, rng.random_range(0.01..1.0), v.perp());
            let p = UnitVector2::from_angle(rng.random_range(0.0..6.3));
            let phi = rng.random_range(1.0..100.0);
            let t = assemble_t_coh(tb, p, phi, 10.0);
            assert!(t.is_spd());
            let e = t.eigen().unwrap();
            let cos = e.vectors[0].dot(&p).abs();
            assert!(cos >= 10f64.to_radians().cos());
        }
    }

    #[test]
    fn ellipse_examples() {
        for p in control_set_ellipse(&SymTensor2::identity(), 36).unwrap() {
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
        let pts = control_set_ellipse(&SymTensor2::diag(4.0, 1.0), 4).unwrap();
        assert!((pts[0][0] - 0.5).abs() < 1e-12 && (pts[1][1] - 1.0).abs() < 1e-12);
        assert!(control_set_ellipse(&SymTensor2::diag(1.0, -1.0), 8).is_err());
    }

    #[test]
    fn region_mask_and_cost() {
        let mask = RegionMask::from_prior(&[[5.0, 10.0], [25.0, 10.0]], 32, 20, 3.0).unwrap();
        assert!(mask.contains(15, 13) && !mask.contains(15, 14));
        let vol_field = MscaleField {
            width: 32,
            height: 20,
            n_r: 1,
            alpha: -1.0,
            beta: 1.0,
            c_ratio: 10.0,
            spatial: vec![SymTensor2::identity(); 640],
            radial: vec![1.0; 640],
        };
        assert_eq!(region_constrained_cost(&vol_field, &mask, 15, 10, 0, [3.0, 4.0, 0.0]), Cost::Finite(5.0));
        assert_eq!(region_constrained_cost(&vol_field, &mask, 15, 2, 0, [3.0, 4.0, 0.0]), Cost::Unreachable);
    }

    proptest! {
        #[test]
        fn ellipse_points_on_unit_level_set(l1 in 0.01..50.0f64, l2 in 0.01..50.0f64, th in 0.0..6.28f64) {
            let v = UnitVector2::from_angle(th);
            let t = SymTensor2::from_eigen(l1, v, l2, v.perp());
            for p in control_set_ellipse(&t, 32).unwrap() {
                prop_assert!((t.inner(p, p) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn selection_stage_one_is_scale_invariant(a in 0.0..6.28f64, b in 0.0..6.28f64, s1 in 0.0..1.0f64, s2 in 0.0..1.0f64, k in 0.1..10.0f64) {
            let g = UnitVector2::from_angle;
            let cands = [(g(a), s1), (g(b), s2)];
            let scaled = [(g(a), k * s1), (g(b), k * s2)];
            let pa = g(0.3);
            let i = select_candidate(&cands, pa, 0.5).unwrap();
            let j = select_candidate(&scaled, pa, 0.5 * k).unwrap();
            prop_assert!((cands[i].0.dot(&pa).abs() - scaled[j].0.dot(&pa).abs()).abs() < 1e-9);
        }
    }
}
