//! Sampled radial profiles and the operations every module builds on.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridRef, RadialGrid};
use crate::scalar::Sample;

/// Samples `u(r_i)` of a radial function on a shared grid.
///
/// Regularity at the origin (`u'(0) = 0`) is built into the representation:
/// every operator works on `v = r·u`, extended oddly through `r = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: GridRef,
    data: Vec<T>,
}

pub type RadialField = Field<Complex64>;
pub type RealField = Field<f64>;

/// Squared/power norms with the `4πr² dr` measure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormReport {
    pub l2_sq: f64,
    pub grad_sq: f64,
    pub l4_4: f64,
    pub l6_6: f64,
    pub h1_sq: f64,
}

pub(crate) fn same_grid(a: &RadialGrid, b: &RadialGrid) -> bool {
    core::ptr::eq(a, b) || (a.n() == b.n() && a.r_max() == b.r_max() && a.order() == b.order())
}

impl<T: Sample> Field<T> {
    pub fn new(grid: GridRef, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.n() {
            return Err(Error::Input(alloc::format!("{} samples for a grid of {} nodes", data.len(), grid.n())));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: GridRef) -> Self {
        let data = alloc::vec![T::zero(); grid.n()];
        Self { grid, data }
    }

    pub fn from_fn(grid: GridRef, f: impl Fn(f64) -> T) -> Self {
        let data = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, data }
    }

    /// Field from samples of `v = r·u`.
    pub fn from_v(grid: GridRef, v: &[T]) -> Self {
        assert_eq!(v.len(), grid.n());
        let data = v.iter().zip(grid.nodes()).map(|(&x, &r)| x * (1.0 / r)).collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridRef {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn samples(&self) -> &[T] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_samples(self) -> Vec<T> {
        self.data
    }

    pub fn check_grid<U>(&self, other: &Field<U>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field { grid: self.grid.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Pointwise map with access to the radius.
    pub fn map_r<U: Sample>(&self, f: impl Fn(f64, T) -> U) -> Field<U> {
        let data = self.grid.nodes().iter().zip(&self.data).map(|(&r, &x)| f(r, x)).collect();
        Field { grid: self.grid.clone(), data }
    }

    pub fn zip_map<U: Sample, V: Sample>(&self, other: &Field<U>, f: impl Fn(T, U) -> V) -> Result<Field<V>> {
        self.check_grid(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid.clone(), data })
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: T, x: &Field<T>) -> Result<()> {
        self.check_grid(x)?;
        for (y, &xi) in self.data.iter_mut().zip(&x.data) {
            *y += a * xi;
        }
        Ok(())
    }

    pub fn conj(&self) -> Self {
        self.map(|x| x.conj())
    }

    pub fn to_complex(&self) -> RadialField {
        self.map(|x| x.to_complex())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `v = r·u`.
    pub fn v(&self) -> Vec<T> {
        self.data.iter().zip(self.grid.nodes()).map(|(&x, &r)| x * r).collect()
    }

    /// Quadrature of `∫ u 4πr² dr` with the end-corrected rule.
    pub fn integral(&self) -> T {
        let re: Vec<f64> = self.data.iter().map(|x| x.re()).collect();
        let im: Vec<f64> = self.data.iter().map(|x| x.im()).collect();
        T::from_parts(self.grid.integrate(&re), self.grid.integrate(&im))
    }

    /// Complex `L²` pairing `⟨u, w⟩ = ∫ u w̄`.
    pub fn inner<U: Sample>(&self, other: &Field<U>) -> Result<Complex64> {
        self.check_grid(other)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked<U: Sample>(&self, other: &Field<U>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((a, b), w) in self.data.iter().zip(&other.data).zip(self.grid.weights()) {
            acc += a.to_complex() * b.to_complex().conj() * *w;
        }
        acc
    }

    /// Real `L²` pairing `Re ∫ u w̄`.
    pub fn dot<U: Sample>(&self, other: &Field<U>) -> Result<f64> {
        self.check_grid(other)?;
        let mut acc = 0.0;
        for ((a, b), w) in self.data.iter().zip(&other.data).zip(self.grid.weights()) {
            acc += (a.re() * b.re() + a.im() * b.im()) * w;
        }
        Ok(acc)
    }

    pub fn l2_sq(&self) -> f64 {
        self.lp_p(2)
    }

    /// `∫ |u|^p`.
    pub fn lp_p(&self, p: u32) -> f64 {
        let half = p / 2;
        self.data
            .iter()
            .zip(self.grid.weights())
            .map(|(x, w)| {
                let a2 = x.abs2();
                let v = if p % 2 == 0 { powi(a2, half) } else { num_traits::Float::powi(x.abs(), p as i32) };
                v * w
            })
            .sum()
    }

    /// Discrete `Δu = (1/r)(r·u)''`.
    pub fn laplacian(&self) -> Self {
        let v = self.v();
        let av = self.grid.second_difference().mul_vec(&v);
        Self::from_v(self.grid.clone(), &av)
    }

    /// `‖∇u‖² = −⟨Δu, u⟩` (summation by parts on the discrete operator).
    pub fn grad_sq(&self) -> f64 {
        let v = self.v();
        let av = self.grid.second_difference().mul_vec(&v);
        let h = self.grid.spacing();
        let s: f64 = av.iter().zip(&v).map(|(a, b)| a.re() * b.re() + a.im() * b.im()).sum();
        -4.0 * core::f64::consts::PI * h * s
    }

    /// Pointwise `∂_r u = (v' − u)/r`.
    pub fn dr(&self) -> Self {
        let dv = self.grid.dv_dr(&self.v());
        let data = dv
            .iter()
            .zip(&self.data)
            .zip(self.grid.nodes())
            .map(|((&d, &u), &r)| (d - u) * (1.0 / r))
            .collect();
        Self { grid: self.grid.clone(), data }
    }

    pub fn norms(&self) -> NormReport {
        let l2_sq = self.l2_sq();
        let grad_sq = self.grad_sq();
        NormReport { l2_sq, grad_sq, l4_4: self.lp_p(4), l6_6: self.lp_p(6), h1_sq: l2_sq + grad_sq }
    }

    pub fn h1_sq(&self) -> f64 {
        self.l2_sq() + self.grad_sq()
    }

    pub fn h1_norm(&self) -> f64 {
        num_traits::Float::sqrt(self.h1_sq())
    }

    /// Complex `H¹` pairing `⟨u, w⟩ + ⟨−Δu, w⟩`.
    pub fn h1_inner<U: Sample>(&self, other: &Field<U>) -> Result<Complex64> {
        self.check_grid(other)?;
        let l2 = self.inner_unchecked(other);
        let lap = self.laplacian();
        Ok(l2 - lap.inner_unchecked(other))
    }
}

#[inline]
fn powi(x: f64, k: u32) -> f64 {
    let mut r = 1.0;
    for _ in 0..k {
        r *= x;
    }
    r
}

impl RealField {
    pub fn from_complex_re(u: &RadialField) -> Self {
        u.map(|z| z.re)
    }
}

impl RadialField {
    pub fn re(&self) -> RealField {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> RealField {
        self.map(|z| z.im)
    }

    /// `e^{iα} u`.
    pub fn rotated(&self, alpha: f64) -> Self {
        let p = Complex64::from_polar(1.0, alpha);
        self.map(|z| z * p)
    }

    pub fn mul_i(&self) -> Self {
        self.map(|z| Complex64::new(-z.im, z.re))
    }

    pub fn from_parts(re: &RealField, im: &RealField) -> Result<Self> {
        re.zip_map(im, |a, b| Complex64::new(a, b))
    }
}

/// `‖u − w‖_{H¹}`.
pub fn h1_distance<T: Sample>(u: &Field<T>, w: &Field<T>) -> Result<f64> {
    let d = u.zip_map(w, |a, b| a - b)?;
    Ok(d.h1_norm())
}

impl<T: Sample> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a + b).expect("grid mismatch")
    }
}

impl<T: Sample> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a - b).expect("grid mismatch")
    }
}

impl<T: Sample> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.map(|a| -a)
    }
}

impl<T: Sample> Mul<f64> for &Field<T> {
    type Output = Field<T>;
    fn mul(self, s: f64) -> Field<T> {
        self.scaled(s)
    }
}

impl Mul<Complex64> for &RadialField {
    type Output = RadialField;
    fn mul(self, s: Complex64) -> RadialField {
        self.map(|a| a * s)
    }
}
