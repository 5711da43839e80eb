//! Oriented Gaussian kernel bank, raw and coherence-enhanced orientation
//! scores, orientation peak sets and the orientation-score tensors.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fft::{Convolver, Kernel};
use crate::grid::{SymTensor2, TensorField, UnitVector2};
use crate::oof::OptimalScaleMap;

/// Symmetric and asymmetric oriented Gaussian kernels for every bin.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub sigma1: f64,
    pub sigma2: f64,
    pub w: usize,
    pub eps1: f64,
    q: Vec<Kernel>,
    h: Vec<Kernel>,
}

/// Angle of bin `k` out of `n_theta` bins over the full circle.
#[inline]
pub fn bin_angle(k: usize, n_theta: usize) -> f64 {
    TAU * k as f64 / n_theta as f64
}

pub fn build_kernel_bank(sigma1: f64, sigma2: f64, w: usize, n_theta: usize, eps1: f64) -> Result<KernelBank> {
    if !(sigma2 > 0.0 && sigma1 > sigma2) {
        return Err(config(format!("kernel widths must satisfy sigma1 > sigma2 > 0, got {sigma1}, {sigma2}")));
    }
    if w < 1 {
        return Err(config("kernel window half-size must be at least 1"));
    }
    if n_theta < 8 || !n_theta.is_multiple_of(2) {
        return Err(config(format!("orientation bin count must be even and at least 8, got {n_theta}")));
    }
    let norm = 1.0 / (2.0 * PI * sigma1 * sigma2);
    let (s1sq, s2sq) = (sigma1 * sigma1, sigma2 * sigma2);
    let mut q = Vec::with_capacity(n_theta);
    let mut h = Vec::with_capacity(n_theta);
    for k in 0..n_theta {
        let [c, s] = UnitVector2::from_angle(bin_angle(k, n_theta)).components();
        let qk = Kernel::from_fn(w, |dx, dy| {
            let (x, y) = (dx as f64, dy as f64);
            let along = c * x + s * y;
            let across = -s * x + c * y;
            norm * (-along * along / (2.0 * s1sq) - across * across / (2.0 * s2sq)).exp()
        });
        // cutoff on the peak-normalized Gaussian gradient projected on g(theta)
        let hk = Kernel::from_fn(w, |dx, dy| {
            let (x, y) = (dx as f64, dy as f64);
            let grad = -(c * x + s * y) / s1sq * (-(x * x + y * y) / (2.0 * s1sq)).exp();
            if grad >= eps1 {
                qk.at(dx, dy)
            } else {
                0.0
            }
        });
        q.push(qk);
        h.push(hk);
    }
    Ok(KernelBank { sigma1, sigma2, w, eps1, q, h })
}

impl KernelBank {
    pub fn n_theta(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self, k: usize) -> &Kernel {
        &self.q[k]
    }

    pub fn h(&self, k: usize) -> &Kernel {
        &self.h[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Raw,
    Enhanced,
}

/// Scores over position x orientation, stored pixel-major
/// (`n_theta` contiguous bins per pixel).
#[derive(Debug, Clone)]
pub struct OrientationVolume {
    width: usize,
    height: usize,
    n_theta: usize,
    kind: ScoreKind,
    values: Vec<f64>,
}

impl OrientationVolume {
    pub fn from_values(width: usize, height: usize, n_theta: usize, kind: ScoreKind, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height * n_theta);
        Self { width, height, n_theta, kind, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, k: usize) -> f64 {
        self.values[(y * self.width + x) * self.n_theta + k]
    }

    #[inline]
    pub fn profile(&self, x: usize, y: usize) -> &[f64] {
        self.profile_at(y * self.width + x)
    }

    #[inline]
    pub fn profile_at(&self, pixel: usize) -> &[f64] {
        &self.values[pixel * self.n_theta..(pixel + 1) * self.n_theta]
    }

    /// Row-major image of bin `k`.
    pub fn slice(&self, k: usize) -> Vec<f64> {
        (0..self.width * self.height).map(|i| self.values[i * self.n_theta + k]).collect()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// `max_theta` score per pixel.
    pub fn max_over_theta(&self) -> Vec<f64> {
        self.values.chunks(self.n_theta).map(|p| p.iter().fold(0.0f64, |m, &v| m.max(v))).collect()
    }

    /// First bin attaining the maximum score at a pixel.
    pub fn argmax(&self, x: usize, y: usize) -> usize {
        let p = self.profile(x, y);
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        best
    }

    /// `angle,value` lines for one pixel.
    pub fn polar_csv(&self, x: usize, y: usize) -> String {
        let mut out = String::from("angle,value\n");
        for (k, v) in self.profile(x, y).iter().enumerate() {
            out.push_str(&format!("{},{}\n", bin_angle(k, self.n_theta), v));
        }
        out
    }
}

/// Raw score `psi(x, theta) = max(<g_perp, OF g_perp>, 0)` at the optimal scale.
pub fn orientation_score_psi(features: &OptimalScaleMap, n_theta: usize) -> OrientationVolume {
    let (w, h) = (features.width(), features.height());
    let half = n_theta / 2;
    let perps: Vec<[f64; 2]> =
        (0..half).map(|k| UnitVector2::from_angle(bin_angle(k, n_theta)).perp().components()).collect();
    let tensors = features.tensors();
    let mut values = vec![0.0; w * h * n_theta];
    values.par_chunks_mut(n_theta).zip(tensors.par_iter()).for_each(|(out, t)| {
        // the quadratic form is pi-periodic; copy so the symmetry is exact
        for (k, gp) in perps.iter().enumerate() {
            out[k] = t.inner(*gp, *gp).max(0.0);
            out[k + half] = out[k];
        }
    });
    OrientationVolume { width: w, height: h, n_theta, kind: ScoreKind::Raw, values }
}

/// `Psi(., theta) = (H_{theta+pi} * psi_theta) / sum(H_{theta+pi})` with
/// `psi` normalized by its global maximum.
pub fn coherence_enhance(raw: &OrientationVolume, bank: &KernelBank) -> Result<OrientationVolume> {
    let n_theta = raw.n_theta;
    if bank.n_theta() != n_theta {
        return Err(config(format!("kernel bank has {} bins, score has {n_theta}", bank.n_theta())));
    }
    let half = n_theta / 2;
    let masses: Vec<f64> = (0..n_theta).map(|k| bank.h((k + half) % n_theta).sum()).collect();
    if let Some(k) = masses.iter().position(|&m| m <= 0.0) {
        return Err(config(format!("asymmetric kernel for bin {k} is empty; cutoff eps1 too large")));
    }
    let (w, h) = (raw.width, raw.height);
    let norm = raw.max_value();
    if norm == 0.0 {
        return Ok(OrientationVolume { width: w, height: h, n_theta, kind: ScoreKind::Enhanced, values: vec![0.0; raw.values.len()] });
    }
    let conv = Convolver::new(w, h, bank.w);
    // psi is pi-periodic, so only the first half of the bins are distinct inputs
    let spectra: Vec<_> = (0..half)
        .into_par_iter()
        .map(|k| {
            let slice: Vec<f64> = raw.slice(k).into_iter().map(|v| v / norm).collect();
            conv.image_spectrum(&slice)
        })
        .collect();
    let slices: Vec<Vec<f64>> = (0..n_theta)
        .into_par_iter()
        .map(|k| {
            let kernel = bank.h((k + half) % n_theta);
            let mass = masses[k];
            conv.apply(&spectra[k % half], &conv.kernel_spectrum(kernel)).into_iter().map(|v| (v / mass).max(0.0)).collect()
        })
        .collect();
    let mut values = vec![0.0; w * h * n_theta];
    values.par_chunks_mut(n_theta).enumerate().for_each(|(i, out)| {
        for (k, s) in slices.iter().enumerate() {
            out[k] = s[i];
        }
    });
    Ok(OrientationVolume { width: w, height: h, n_theta, kind: ScoreKind::Enhanced, values })
}

/// Locally maximal orientation bins per pixel, in compressed row form.
#[derive(Debug, Clone)]
pub struct OrientationPeakSet {
    width: usize,
    n_theta: usize,
    start: Vec<u32>,
    bins: Vec<u16>,
}

impl OrientationPeakSet {
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn peaks(&self, x: usize, y: usize) -> &[u16] {
        self.peaks_at(y * self.width + x)
    }

    pub fn peaks_at(&self, pixel: usize) -> &[u16] {
        &self.bins[self.start[pixel] as usize..self.start[pixel + 1] as usize]
    }

    /// Indicator `c_x(theta)` for bin `k`.
    pub fn indicator(&self, x: usize, y: usize, k: usize) -> bool {
        self.peaks(x, y).contains(&(k as u16))
    }
}

/// Strict local maxima of a circular profile over `+-ell/2` bins that also
/// exceed the profile mean.
pub fn profile_peaks(profile: &[f64], ell: usize) -> Vec<u16> {
    let n = profile.len();
    let mean = profile.iter().sum::<f64>() / n as f64;
    let reach = (ell / 2).max(1);
    let mut out = Vec::new();
    for k in 0..n {
        let v = profile[k];
        if v <= mean {
            continue;
        }
        let strict = (1..=reach).all(|j| v > profile[(k + j) % n] && v > profile[(k + n - j % n) % n]);
        if strict {
            out.push(k as u16);
        }
    }
    out
}

pub fn local_maxima_set(enhanced: &OrientationVolume, ell: usize) -> OrientationPeakSet {
    let per_pixel: Vec<Vec<u16>> = enhanced.values.par_chunks(enhanced.n_theta).map(|p| profile_peaks(p, ell)).collect();
    let mut start = Vec::with_capacity(per_pixel.len() + 1);
    let mut bins = Vec::new();
    start.push(0);
    for p in per_pixel {
        bins.extend(p);
        start.push(bins.len() as u32);
    }
    OrientationPeakSet { width: enhanced.width, n_theta: enhanced.n_theta, start, bins }
}

/// Inversion mode of the orientation-score tensor inside `T_base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseMode {
    #[default]
    Anisotropic,
    Isotropic,
}

/// `T_os = sum_k c Psi g g^T dtheta / max(eps2, sum_k c dtheta) + xi_ident Id`.
pub fn t_os_at(profile: &[f64], peaks: &[u16], xi_ident: f64, eps2: f64) -> SymTensor2 {
    let n = profile.len();
    let dtheta = TAU / n as f64;
    let mut acc = SymTensor2::new(0.0, 0.0, 0.0);
    for &k in peaks {
        let g = UnitVector2::from_angle(bin_angle(k as usize, n)).components();
        acc = acc + SymTensor2::outer(g) * (profile[k as usize] * dtheta);
    }
    let mass = (peaks.len() as f64 * dtheta).max(eps2);
    acc * (1.0 / mass) + SymTensor2::scaled_identity(xi_ident)
}

pub fn build_t_os(peaks: &OrientationPeakSet, enhanced: &OrientationVolume, xi_ident: f64, eps2: f64) -> TensorField {
    let (w, h) = (enhanced.width, enhanced.height);
    let data: Vec<SymTensor2> = (0..w * h)
        .into_par_iter()
        .map(|i| t_os_at(enhanced.profile_at(i), peaks.peaks_at(i), xi_ident, eps2))
        .collect();
    TensorField::from_vec(w, h, data).expect("sizes match")
}

/// `T_base = exp(-alpha max psi) T_os^-1` (or `exp(..) Id` in isotropic mode).
pub fn build_t_base(
    raw: &OrientationVolume,
    peaks: &OrientationPeakSet,
    enhanced: &OrientationVolume,
    alpha: f64,
    xi_ident: f64,
    eps2: f64,
    mode: BaseMode,
) -> Result<TensorField> {
    if !(alpha > 0.0 && xi_ident > 0.0 && eps2 > 0.0) {
        return Err(config("alpha, xi_ident and eps2 must be positive"));
    }
    let t_os = build_t_os(peaks, enhanced, xi_ident, eps2);
    let max_psi = raw.max_over_theta();
    let data = t_os
        .data()
        .par_iter()
        .zip(max_psi.par_iter())
        .map(|(t, &m)| {
            let c = (-alpha * m).exp();
            match mode {
                BaseMode::Anisotropic => t.inverse().expect("T_os is positive definite") * c,
                BaseMode::Isotropic => SymTensor2::scaled_identity(c),
            }
        })
        .collect();
    TensorField::from_vec(raw.width, raw.height, data)
}

/// Score profile of one pixel, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationProfile {
    pub x: usize,
    pub y: usize,
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
    pub peaks: Vec<usize>,
    pub mean: f64,
}

pub fn orientation_profile(enhanced: &OrientationVolume, peaks: &OrientationPeakSet, x: usize, y: usize) -> OrientationProfile {
    let values = enhanced.profile(x, y).to_vec();
    let n = values.len();
    OrientationProfile {
        x,
        y,
        angles: (0..n).map(|k| bin_angle(k, n)).collect(),
        mean: values.iter().sum::<f64>() / n as f64,
        values,
        peaks: peaks.peaks(x, y).iter().map(|&k| k as usize).collect(),
    }
}
