//! Frequency-domain convolution with reflection padding.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Square convolution kernel of half-size `radius`, stored row-major over
/// offsets `-radius..=radius` in both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub radius: usize,
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn new(radius: usize, values: Vec<f64>) -> Self {
        let side = 2 * radius + 1;
        assert_eq!(values.len(), side * side, "kernel size mismatch");
        Self { radius, values }
    }

    pub fn from_fn(radius: usize, f: impl Fn(i64, i64) -> f64) -> Self {
        let r = radius as i64;
        let mut values = Vec::with_capacity((2 * radius + 1).pow(2));
        for dy in -r..=r {
            for dx in -r..=r {
                values.push(f(dx, dy));
            }
        }
        Self { radius, values }
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn at(&self, dx: i64, dy: i64) -> f64 {
        let r = self.radius as i64;
        self.values[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Full discrete convolution `self * other`.
    pub fn convolve(&self, other: &Kernel) -> Kernel {
        let radius = self.radius + other.radius;
        let (ra, rb) = (self.radius as i64, other.radius as i64);
        let side = 2 * radius + 1;
        let mut values = vec![0.0; side * side];
        for ay in -ra..=ra {
            for ax in -ra..=ra {
                let va = self.at(ax, ay);
                if va == 0.0 {
                    continue;
                }
                for by in -rb..=rb {
                    let row = ((ay + by + radius as i64) as usize) * side;
                    for bx in -rb..=rb {
                        values[row + (ax + bx + radius as i64) as usize] += va * other.at(bx, by);
                    }
                }
            }
        }
        Kernel { radius, values }
    }
}

/// Index into `0..n` under whole-sample symmetric reflection (`-1 -> 0`).
#[inline]
pub fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Pads a row-major `width x height` grid by `pad` cells on every side using
/// symmetric reflection.
pub fn reflect_pad(values: &[f64], width: usize, height: usize, pad: usize) -> Vec<f64> {
    let pw = width + 2 * pad;
    let ph = height + 2 * pad;
    let mut out = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let sy = reflect_index(y as i64 - pad as i64, height);
        for x in 0..pw {
            let sx = reflect_index(x as i64 - pad as i64, width);
            out.push(values[sy * width + sx]);
        }
    }
    out
}

/// Reflection-padded FFT convolution engine for a fixed image size.
///
/// Kernels up to `pad` in radius give the exact linear convolution of the
/// padded image on the interior, since circular wrap-around only reaches
/// the padding.
pub struct Convolver {
    width: usize,
    height: usize,
    pad: usize,
    pw: usize,
    ph: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Frequency-domain representation of a padded grid.
pub struct Spectrum(Vec<Complex64>);

impl Convolver {
    pub fn new(width: usize, height: usize, pad: usize) -> Self {
        let pw = width + 2 * pad;
        let ph = height + 2 * pad;
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            pad,
            pw,
            ph,
            row_fwd: planner.plan_fft_forward(pw),
            row_inv: planner.plan_fft_inverse(pw),
            col_fwd: planner.plan_fft_forward(ph),
            col_inv: planner.plan_fft_inverse(ph),
        }
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        row.process(data);
        let mut t = transpose(data, self.pw, self.ph);
        col.process(&mut t);
        let back = transpose(&t, self.ph, self.pw);
        data.copy_from_slice(&back);
    }

    /// Spectrum of the reflection-padded image.
    pub fn image_spectrum(&self, values: &[f64]) -> Spectrum {
        assert_eq!(values.len(), self.width * self.height);
        let padded = reflect_pad(values, self.width, self.height, self.pad);
        let mut data: Vec<Complex64> = padded.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        Spectrum(data)
    }

    /// Spectrum of a kernel placed with its center at the origin (wrapped).
    pub fn kernel_spectrum(&self, kernel: &Kernel) -> Spectrum {
        assert!(kernel.radius <= self.pad, "kernel radius {} exceeds padding {}", kernel.radius, self.pad);
        let mut data = vec![Complex64::new(0.0, 0.0); self.pw * self.ph];
        let r = kernel.radius as i64;
        for dy in -r..=r {
            let y = dy.rem_euclid(self.ph as i64) as usize;
            for dx in -r..=r {
                let x = dx.rem_euclid(self.pw as i64) as usize;
                data[y * self.pw + x] += Complex64::new(kernel.at(dx, dy), 0.0);
            }
        }
        self.transform(&mut data, false);
        Spectrum(data)
    }

    /// Inverse transform of the pointwise product, cropped to the image.
    pub fn apply(&self, image: &Spectrum, kernel: &Spectrum) -> Vec<f64> {
        let mut data: Vec<Complex64> = image.0.iter().zip(&kernel.0).map(|(a, b)| a * b).collect();
        self.transform(&mut data, true);
        let norm = 1.0 / (self.pw * self.ph) as f64;
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            let row = (y + self.pad) * self.pw + self.pad;
            out.extend(data[row..row + self.width].iter().map(|c| c.re * norm));
        }
        out
    }

    pub fn convolve(&self, values: &[f64], kernel: &Kernel) -> Vec<f64> {
        self.apply(&self.image_spectrum(values), &self.kernel_spectrum(kernel))
    }
}

fn transpose(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

/// Direct sliding-window convolution of the reflection-padded image.
pub fn convolve_direct(values: &[f64], width: usize, height: usize, kernel: &Kernel) -> Vec<f64> {
    let r = kernel.radius as i64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let mut acc = 0.0;
            for dy in -r..=r {
                let sy = reflect_index(y - dy, height);
                for dx in -r..=r {
                    let k = kernel.at(dx, dy);
                    if k != 0.0 {
                        acc += k * values[sy * width + reflect_index(x - dx, width)];
                    }
                }
            }
            out.push(acc);
        }
    }
    out
}
