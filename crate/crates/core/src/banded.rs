//! Banded matrices and LU factorization with partial pivoting.
//!
//! Every operator in the crate acts on the `v = r·u` representation where
//! the discrete Laplacian is a symmetric band of half-width `order/2`, so all
//! direct solves go through this module.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Sample;

/// Square banded matrix stored row-wise: row `i` holds columns
/// `i - kl ..= i + ku` (out-of-range slots are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Sample> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.kl
    }

    pub fn upper(&self) -> usize {
        self.ku
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
        }
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.data[s])
    }

    /// Sets entry `(i, j)`. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = value;
    }

    pub fn add_to(&mut self, i: usize, j: usize, value: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += value;
    }

    pub fn add_diagonal(&mut self, diag: &[T]) {
        assert_eq!(diag.len(), self.n);
        for (i, &d) in diag.iter().enumerate() {
            self.add_to(i, i, d);
        }
    }

    pub fn shift(&mut self, s: T) {
        for i in 0..self.n {
            self.add_to(i, i, s);
        }
    }

    pub fn scale(&mut self, s: T) {
        for x in &mut self.data {
            *x = *x * s;
        }
    }

    /// Converts entry type, e.g. a real Laplacian into a complex one.
    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> BandMatrix<U> {
        BandMatrix { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `y = A x` for a vector of a possibly different sample type (real
    /// matrices act on complex vectors).
    pub fn mul_vec<U>(&self, x: &[U]) -> Vec<U>
    where
        U: Sample + core::ops::Mul<T, Output = U>,
    {
        assert_eq!(x.len(), self.n);
        let w = self.kl + self.ku + 1;
        let mut y = vec![U::zero(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = U::zero();
            for j in j0..=j1 {
                acc += x[j] * row[j + self.kl - i];
            }
            *yi = acc;
        }
        y
    }

    /// Product `A B`; the band widths add.
    pub fn matmul(&self, other: &BandMatrix<T>) -> BandMatrix<T> {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = BandMatrix::zeros(n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..n {
            let k0 = i.saturating_sub(self.kl);
            let k1 = (i + self.ku).min(n - 1);
            for k in k0..=k1 {
                let a = self.get(i, k);
                let j0 = k.saturating_sub(other.kl);
                let j1 = (k + other.ku).min(n - 1);
                for j in j0..=j1 {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// Dense row-major copy, for tests and small oracles.
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n * self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1) {
                d[i * self.n + j] = self.get(i, j);
            }
        }
        d
    }

    pub fn factor(&self) -> Result<BandLu<T>> {
        BandLu::new(self)
    }
}

/// LU factors of a banded matrix (row interchanges widen the upper band to
/// `kl + ku`).
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    width_up: usize,
    data: Vec<T>,
    piv: Vec<usize>,
    pivot_ratio: f64,
}

impl<T: Sample> BandLu<T> {
    fn new(a: &BandMatrix<T>) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku = kl + a.ku;
        let w = kl + ku + 1;
        let mut data = vec![T::zero(); n * w];
        for i in 0..n {
            for j in i.saturating_sub(a.kl)..=(i + a.ku).min(n.saturating_sub(1)) {
                data[i * w + (j + kl - i)] = a.get(i, j);
            }
        }
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        let mut piv = vec![0usize; n];
        let (mut umin, mut umax) = (f64::INFINITY, 0.0f64);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = data[idx(k, k)].abs();
            for i in k + 1..=last {
                let v = data[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            let jmax = (k + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    data.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = data[idx(k, k)];
            umin = umin.min(best);
            umax = umax.max(best);
            for i in k + 1..=last {
                let l = data[idx(i, k)] / pivot;
                data[idx(i, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=jmax {
                    let u = data[idx(k, j)];
                    data[idx(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { n, kl, width_up: ku, data, piv, pivot_ratio: if umax > 0.0 { umin / umax } else { 0.0 } })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `min |u_kk| / max |u_kk|`, a cheap stand-in for the reciprocal
    /// condition number.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        let w = kl + self.width_up + 1;
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                let l = self.data[idx(i, k)];
                b[i] -= l * bk;
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + self.width_up).min(n - 1) {
                acc -= self.data[idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
