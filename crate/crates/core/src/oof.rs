//! Multi-scale optimally oriented flux responses and the optimal scale map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fft::{Convolver, Kernel};
use crate::grid::{Eigen2, ScalarImage, SymTensor2, UnitVector2};

/// Radii sampled along the scale axis, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSpace {
    radii: Vec<f64>,
}

impl RadiusSpace {
    /// `n_r` radii evenly spread over `[r_min, r_max]`.
    pub fn new(r_min: f64, r_max: f64, n_r: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(config(format!("radius range must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if n_r < 2 {
            return Err(config("at least two radii are required"));
        }
        let step = (r_max - r_min) / (n_r - 1) as f64;
        Ok(Self { radii: (0..n_r).map(|i| r_min + step * i as f64).collect() })
    }

    /// Unit-step radii `r_min, r_min + 1, ..` up to `r_max`.
    pub fn integer_steps(r_min: f64, r_max: f64) -> Result<Self> {
        let n = ((r_max - r_min).floor() as usize) + 1;
        if !(r_min > 0.0 && r_max > r_min) || n < 2 {
            return Err(config(format!("radius range must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        Ok(Self { radii: (0..n).map(|i| r_min + i as f64).collect() })
    }

    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config("radii must be positive and strictly increasing"));
        }
        Ok(Self { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.radii[0]
    }

    pub fn r_max(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }

    /// Spacing between consecutive radii when uniform, else the mean spacing.
    pub fn step(&self) -> f64 {
        (self.r_max() - self.r_min()) / (self.len() - 1) as f64
    }
}

/// Per-radius OOF tensors with cached eigen features.
///
/// Tensors are stored divided by `scale`, the maximum of `|rho2|` over the
/// raw volume, so that the rescaled `rho2` lies in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct OofVolume {
    width: usize,
    height: usize,
    radii: RadiusSpace,
    scale: f64,
    tensors: Vec<SymTensor2>,
    eigen: Vec<Eigen2>,
}

impl OofVolume {
    /// Builds the volume from raw per-radius tensor slices (radius-major).
    pub fn from_raw(width: usize, height: usize, radii: RadiusSpace, raw: Vec<SymTensor2>) -> Result<Self> {
        let n = width * height;
        assert_eq!(raw.len(), n * radii.len());
        let eigen_raw: Vec<Eigen2> = raw.par_iter().map(|t| t.eigen()).collect::<Result<_>>()?;
        let max_rho2 = eigen_raw.iter().fold(0.0f64, |m, e| m.max(e.values[1].abs()));
        let scale = if max_rho2 > 1e-12 { max_rho2 } else { 1.0 };
        let tensors: Vec<SymTensor2> = raw.into_iter().map(|t| t * (1.0 / scale)).collect();
        let eigen = tensors.par_iter().map(|t| t.eigen()).collect::<Result<_>>()?;
        Ok(Self { width, height, radii, scale, tensors, eigen })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn radii(&self) -> &RadiusSpace {
        &self.radii
    }

    /// Divisor applied to the raw responses.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    fn idx(&self, x: usize, y: usize, ri: usize) -> usize {
        (ri * self.height + y) * self.width + x
    }

    /// Rescaled tensor at pixel `(x, y)` and radius index `ri`.
    pub fn tensor(&self, x: usize, y: usize, ri: usize) -> SymTensor2 {
        self.tensors[self.idx(x, y, ri)]
    }

    /// Raw (unscaled) tensor.
    pub fn raw_tensor(&self, x: usize, y: usize, ri: usize) -> SymTensor2 {
        self.tensors[self.idx(x, y, ri)] * self.scale
    }

    pub fn eigen(&self, x: usize, y: usize, ri: usize) -> &Eigen2 {
        &self.eigen[self.idx(x, y, ri)]
    }

    /// `(rho1, rho2, q_of)` where `q_of` is the eigenvector of `rho1`.
    pub fn features(&self, x: usize, y: usize, ri: usize) -> (f64, f64, UnitVector2) {
        let e = self.eigen(x, y, ri);
        (e.values[0], e.values[1], e.vectors[0])
    }
}

/// Features copied from the radius maximizing `rho2` at each pixel.
#[derive(Debug, Clone)]
pub struct OptimalScaleMap {
    width: usize,
    height: usize,
    radius_index: Vec<usize>,
    radius: Vec<f64>,
    tensor: Vec<SymTensor2>,
    eigen: Vec<Eigen2>,
}

impl OptimalScaleMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn radius_index(&self, x: usize, y: usize) -> usize {
        self.radius_index[y * self.width + x]
    }

    pub fn radius(&self, x: usize, y: usize) -> f64 {
        self.radius[y * self.width + x]
    }

    pub fn radius_values(&self) -> &[f64] {
        &self.radius
    }

    pub fn tensor(&self, x: usize, y: usize) -> SymTensor2 {
        self.tensor[y * self.width + x]
    }

    pub fn tensors(&self) -> &[SymTensor2] {
        &self.tensor
    }

    pub fn rho1(&self, x: usize, y: usize) -> f64 {
        self.eigen[y * self.width + x].values[0]
    }

    pub fn rho2(&self, x: usize, y: usize) -> f64 {
        self.eigen[y * self.width + x].values[1]
    }

    pub fn rho2_values(&self) -> Vec<f64> {
        self.eigen.iter().map(|e| e.values[1]).collect()
    }

    pub fn q_of(&self, x: usize, y: usize) -> UnitVector2 {
        self.eigen[y * self.width + x].vectors[0]
    }
}

/// Sampled 1D Gaussian and its first two derivatives on `-radius..=radius`.
fn gaussian_1d(sigma: f64, radius: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = radius as i64;
    let s2 = sigma * sigma;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    let g: Vec<f64> = (-r..=r).map(|x| norm * (-(x * x) as f64 / (2.0 * s2)).exp()).collect();
    let g1: Vec<f64> = (-r..=r).zip(&g).map(|(x, gv)| -(x as f64) / s2 * gv).collect();
    let mut g2: Vec<f64> = (-r..=r).zip(&g).map(|(x, gv)| ((x * x) as f64 / (s2 * s2) - 1.0 / s2) * gv).collect();
    // truncation leaves a small DC component; remove it so constants vanish
    let mean = g2.iter().sum::<f64>() / g2.len() as f64;
    g2.iter_mut().for_each(|v| *v -= mean);
    (g, g1, g2)
}

/// Sampled Hessian-of-Gaussian kernels `[Gxx, Gxy, Gyy]` with support `ceil(4 sigma)`.
pub fn gaussian_hessian(sigma: f64) -> [Kernel; 3] {
    let radius = (4.0 * sigma).ceil() as usize;
    let (g, g1, g2) = gaussian_1d(sigma, radius);
    let r = radius as i64;
    let at = |v: &Vec<f64>, i: i64| v[(i + r) as usize];
    [
        Kernel::from_fn(radius, |dx, dy| at(&g2, dx) * at(&g, dy)),
        Kernel::from_fn(radius, |dx, dy| at(&g1, dx) * at(&g1, dy)),
        Kernel::from_fn(radius, |dx, dy| at(&g, dx) * at(&g2, dy)),
    ]
}

const DISK_SUPERSAMPLING: usize = 16;

/// Disk indicator of radius `r` with boundary cells weighted by covered area.
pub fn disk_kernel(r: f64) -> Kernel {
    let radius = r.ceil() as usize;
    let n = DISK_SUPERSAMPLING;
    let r2 = r * r;
    Kernel::from_fn(radius, |dx, dy| {
        let (cx, cy) = (dx as f64, dy as f64);
        // fully inside or outside: skip supersampling
        let near = cx.abs().max(0.5) - 0.5;
        let far = cx.abs() + 0.5;
        let near_y = cy.abs().max(0.5) - 0.5;
        let far_y = cy.abs() + 0.5;
        if far * far + far_y * far_y < r2 {
            return 1.0;
        }
        if near * near + near_y * near_y >= r2 {
            return 0.0;
        }
        let mut inside = 0usize;
        for i in 0..n {
            let px = cx - 0.5 + (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let py = cy - 0.5 + (j as f64 + 0.5) / n as f64;
                if px * px + py * py < r2 {
                    inside += 1;
                }
            }
        }
        inside as f64 / (n * n) as f64
    })
}

/// Combined OOF kernels `(1/r) * (Hessian * disk_r)` as `[xx, xy, yy]`.
pub fn oof_kernels(sigma: f64, r: f64) -> [Kernel; 3] {
    let disk = disk_kernel(r);
    gaussian_hessian(sigma).map(|h| {
        let mut k = h.convolve(&disk);
        k.values.iter_mut().for_each(|v| *v /= r);
        k
    })
}

fn validate(image: &ScalarImage, radii: &RadiusSpace, sigma: f64) -> Result<()> {
    if !(sigma >= 0.5 && sigma.is_finite()) {
        return Err(config(format!("OOF sigma must be at least 0.5 cells, got {sigma}")));
    }
    let half = image.width().min(image.height()) as f64 / 2.0;
    if radii.r_max() > half {
        return Err(config(format!(
            "radius {} exceeds half the image extent ({half})",
            radii.r_max()
        )));
    }
    Ok(())
}

/// Padding used for the OOF convolutions.
pub fn oof_padding(radii: &RadiusSpace, sigma: f64) -> usize {
    radii.r_max().ceil() as usize + (4.0 * sigma).ceil() as usize
}

/// Raw (unscaled) OOF tensors, radius-major.
pub fn oof_response_raw(image: &ScalarImage, radii: &RadiusSpace, sigma: f64) -> Result<Vec<SymTensor2>> {
    validate(image, radii, sigma)?;
    let (w, h) = (image.width(), image.height());
    let conv = Convolver::new(w, h, oof_padding(radii, sigma));
    let spectrum = conv.image_spectrum(image.values());
    let slices: Vec<Vec<SymTensor2>> = radii
        .radii()
        .par_iter()
        .map(|&r| {
            let [kxx, kxy, kyy] = oof_kernels(sigma, r);
            let xx = conv.apply(&spectrum, &conv.kernel_spectrum(&kxx));
            let xy = conv.apply(&spectrum, &conv.kernel_spectrum(&kxy));
            let yy = conv.apply(&spectrum, &conv.kernel_spectrum(&kyy));
            (0..w * h).map(|i| SymTensor2::new(xx[i], xy[i], yy[i])).collect()
        })
        .collect();
    Ok(slices.into_iter().flatten().collect())
}

/// Multi-scale OOF responses, rescaled by the global max of `|rho2|`.
pub fn oof_response(image: &ScalarImage, radii: &RadiusSpace, sigma: f64) -> Result<OofVolume> {
    let raw = oof_response_raw(image, radii, sigma)?;
    OofVolume::from_raw(image.width(), image.height(), radii.clone(), raw)
}

const SCALE_TIE_TOL: f64 = 1e-12;

/// Selects `argmax_r rho2` per pixel; ties go to the smaller radius.
pub fn optimal_scale_features(vol: &OofVolume) -> OptimalScaleMap {
    let (w, h) = (vol.width, vol.height);
    let n_r = vol.radii.len();
    let mut radius_index = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut best = 0;
            let mut best_v = vol.eigen(x, y, 0).values[1];
            for ri in 1..n_r {
                let v = vol.eigen(x, y, ri).values[1];
                if v > best_v + SCALE_TIE_TOL {
                    best = ri;
                    best_v = v;
                }
            }
            radius_index.push(best);
        }
    }
    let radius = radius_index.iter().map(|&ri| vol.radii.radii()[ri]).collect();
    let tensor = (0..w * h).map(|i| vol.tensors[radius_index[i] * w * h + i]).collect();
    let eigen = (0..w * h).map(|i| vol.eigen[radius_index[i] * w * h + i]).collect();
    OptimalScaleMap { width: w, height: h, radius_index, radius, tensor, eigen }
}
