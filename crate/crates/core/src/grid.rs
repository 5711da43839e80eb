//! Grid geometry, 2x2 symmetric tensor algebra and bilinear interpolation.
//!
//! Continuous coordinates are expressed in cell units with grid nodes at
//! integer positions: node `(x, y)` sits at column `x`, row `y`, and the
//! sampling domain of a `width x height` grid is `[0, width-1] x [0, height-1]`.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Continuous point `[x, y]` in cell units.
pub type Point2 = [f64; 2];

/// A 2D grid of scalars (intensities or filter responses).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    width: usize,
    height: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(invalid(format!("image must be at least 2x2, got {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(invalid(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { width, height, spacing: 1.0, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!("spacing must be positive, got {spacing}")));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn contains(&self, p: Point2) -> bool {
        in_domain(self.width, self.height, p)
    }

    pub fn sample(&self, p: Point2) -> Result<f64> {
        bilinear(self.width, self.height, &self.values, p)
    }

    /// Pointwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::new(self.width, self.height, values)?.with_spacing(self.spacing)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Dense row-major grid of arbitrary per-node values.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type TensorField = Field<SymTensor2>;
pub type VectorField = Field<[f64; 2]>;

impl<T: Clone> Field<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Field<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(invalid(format!(
                "field of {width}x{height} needs {} entries, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, index: usize) -> &T {
        &self.data[index]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }
}

impl<T: Interpolate> Field<T> {
    pub fn sample(&self, p: Point2) -> Result<T> {
        bilinear(self.width, self.height, &self.data, p)
    }
}

/// Values that can be combined by convex weights (bilinear interpolation).
pub trait Interpolate: Copy {
    fn zero() -> Self;
    fn add_scaled(self, other: Self, weight: f64) -> Self;
}

impl Interpolate for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        self + weight * other
    }
}

impl Interpolate for [f64; 2] {
    fn zero() -> Self {
        [0.0; 2]
    }
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        [self[0] + weight * other[0], self[1] + weight * other[1]]
    }
}

impl Interpolate for SymTensor2 {
    fn zero() -> Self {
        SymTensor2::new(0.0, 0.0, 0.0)
    }
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        self + other * weight
    }
}

pub(crate) fn in_domain(width: usize, height: usize, p: Point2) -> bool {
    p[0].is_finite()
        && p[1].is_finite()
        && p[0] >= 0.0
        && p[1] >= 0.0
        && p[0] <= (width - 1) as f64
        && p[1] <= (height - 1) as f64
}

/// Bilinear interpolation of a row-major grid; exact at nodes and on affine fields.
pub fn bilinear<T: Interpolate>(width: usize, height: usize, data: &[T], p: Point2) -> Result<T> {
    if !in_domain(width, height, p) {
        return Err(Error::Domain(format!(
            "({}, {}) outside [0, {}] x [0, {}]",
            p[0],
            p[1],
            width - 1,
            height - 1
        )));
    }
    let x0 = (p[0].floor() as usize).min(width - 2);
    let y0 = (p[1].floor() as usize).min(height - 2);
    let fx = p[0] - x0 as f64;
    let fy = p[1] - y0 as f64;
    let i = y0 * width + x0;
    let v = T::zero()
        .add_scaled(data[i], (1.0 - fx) * (1.0 - fy))
        .add_scaled(data[i + 1], fx * (1.0 - fy))
        .add_scaled(data[i + width], (1.0 - fx) * fy)
        .add_scaled(data[i + width + 1], fx * fy);
    Ok(v)
}

/// Unit vector `g(theta) = (cos theta, sin theta)` stored by its angle in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVector2 {
    angle: f64,
}

impl UnitVector2 {
    pub fn from_angle(angle: f64) -> Self {
        Self { angle: wrap_angle(angle) }
    }

    /// Direction of a nonzero vector.
    pub fn from_vector(v: [f64; 2]) -> Option<Self> {
        let n = v[0].hypot(v[1]);
        (n > 0.0 && n.is_finite()).then(|| Self::from_angle(v[1].atan2(v[0])))
    }

    pub fn x_axis() -> Self {
        Self { angle: 0.0 }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn components(&self) -> [f64; 2] {
        [self.angle.cos(), self.angle.sin()]
    }

    /// Counter-clockwise orthogonal vector `(-sin theta, cos theta)`.
    pub fn perp(&self) -> Self {
        Self::from_angle(self.angle + PI / 2.0)
    }

    pub fn dot(&self, other: &UnitVector2) -> f64 {
        (self.angle - other.angle).cos()
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Symmetric 2x2 matrix `[[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

/// Eigen pairs sorted so that `values[0] <= values[1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub values: [f64; 2],
    pub vectors: [UnitVector2; 2],
}

impl SymTensor2 {
    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Self::new(d1, 0.0, d2)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::new(s, 0.0, s)
    }

    /// `u (x) u = u u^T`.
    pub fn outer(u: [f64; 2]) -> Self {
        Self::new(u[0] * u[0], u[0] * u[1], u[1] * u[1])
    }

    /// `l1 v1 v1^T + l2 v2 v2^T`.
    pub fn from_eigen(l1: f64, v1: UnitVector2, l2: f64, v2: UnitVector2) -> Self {
        Self::outer(v1.components()) * l1 + Self::outer(v2.components()) * l2
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite()
    }

    pub fn is_spd(&self) -> bool {
        self.is_finite() && self.a11 > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        (d != 0.0 && d.is_finite()).then(|| Self::new(self.a22 / d, -self.a12 / d, self.a11 / d))
    }

    pub fn apply(&self, u: [f64; 2]) -> [f64; 2] {
        [self.a11 * u[0] + self.a12 * u[1], self.a12 * u[0] + self.a22 * u[1]]
    }

    /// `<u, T v>`.
    pub fn inner(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        u[0] * (self.a11 * v[0] + self.a12 * v[1]) + u[1] * (self.a12 * v[0] + self.a22 * v[1])
    }

    /// `||u||_T = sqrt(<u, T u>)`.
    pub fn norm(&self, u: [f64; 2]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }

    pub fn eigen(&self) -> Result<Eigen2> {
        eigendecompose_spd2(self)
    }
}

impl Add for SymTensor2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }
}

impl Sub for SymTensor2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }
}

/// Block-diagonal 3x3 tensor: spatial 2x2 block plus a radial scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTensor {
    pub spatial: SymTensor2,
    pub radial: f64,
}

impl BlockTensor {
    pub const fn new(spatial: SymTensor2, radial: f64) -> Self {
        Self { spatial, radial }
    }

    /// Purely spatial metric (radial component unused).
    pub const fn planar(spatial: SymTensor2) -> Self {
        Self { spatial, radial: 1.0 }
    }

    #[inline]
    pub fn inner(&self, u: [f64; 3], v: [f64; 3]) -> f64 {
        self.spatial.inner([u[0], u[1]], [v[0], v[1]]) + self.radial * u[2] * v[2]
    }

    #[inline]
    pub fn norm(&self, u: [f64; 3]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn is_spd(&self) -> bool {
        self.spatial.is_spd() && self.radial > 0.0 && self.radial.is_finite()
    }

    pub fn inverse(&self) -> Option<Self> {
        let s = self.spatial.inverse()?;
        (self.radial != 0.0).then(|| Self::new(s, 1.0 / self.radial))
    }

    pub fn apply(&self, u: [f64; 3]) -> [f64; 3] {
        let s = self.spatial.apply([u[0], u[1]]);
        [s[0], s[1], self.radial * u[2]]
    }
}

impl Interpolate for BlockTensor {
    fn zero() -> Self {
        Self::new(SymTensor2::new(0.0, 0.0, 0.0), 0.0)
    }
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        Self::new(self.spatial + other.spatial * weight, self.radial + weight * other.radial)
    }
}

/// Closed-form eigendecomposition of a symmetric 2x2 matrix.
///
/// Eigenvalues come back ascending. When they coincide the first eigenvector
/// is the x-axis.
pub fn eigendecompose_spd2(t: &SymTensor2) -> Result<Eigen2> {
    if !t.is_finite() {
        return Err(invalid(format!("non-finite tensor {t:?}")));
    }
    let SymTensor2 { a11, a12, a22 } = *t;
    let mean = 0.5 * (a11 + a22);
    let half_diff = 0.5 * (a11 - a22);
    let radius = half_diff.hypot(a12);
    let scale = a11.abs().max(a22.abs()).max(a12.abs());
    if radius <= 1e-15 * scale || radius == 0.0 {
        return Ok(Eigen2 {
            values: [mean, mean],
            vectors: [UnitVector2::x_axis(), UnitVector2::from_angle(PI / 2.0)],
        });
    }
    // avoid cancellation in the smaller-magnitude eigenvalue
    let det = a11 * a22 - a12 * a12;
    let (lo, hi) = if mean >= 0.0 {
        let hi = mean + radius;
        (det / hi, hi)
    } else {
        let lo = mean - radius;
        (lo, det / lo)
    };
    // major axis angle of the larger eigenvalue
    let phi = 0.5 * (2.0 * a12).atan2(a11 - a22);
    let major = UnitVector2::from_angle(phi);
    Ok(Eigen2 { values: [lo, hi], vectors: [major.perp(), major] })
}
