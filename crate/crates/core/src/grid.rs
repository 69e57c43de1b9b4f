//! Uniform radial grid `r_i = i·h`, `h = r_max/(n+1)`, `i = 1..=n`.
//!
//! Fields are stored as samples of `u(r_i)`; operators act on `v = r·u`
//! with `v(0) = v(r_max) = 0`. The second difference of `v` uses a centered
//! stencil of configurable order, closed at both ends by odd reflection
//! (`v` is odd about `r = 0` for smooth radial `u`, and the Dirichlet
//! condition at `r_max` is imposed the same way), which keeps the matrix
//! symmetric.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::banded::BandMatrix;
use crate::error::{config, Result};

pub type GridRef = Arc<RadialGrid>;

/// Accuracy order of the centered second-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StencilOrder {
    Second,
    Fourth,
    Sixth,
    #[default]
    Eighth,
}

impl StencilOrder {
    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            6 => Ok(Self::Sixth),
            8 => Ok(Self::Eighth),
            _ => config(alloc::format!("stencil order must be 2, 4, 6 or 8 (got {order})")),
        }
    }

    pub fn order(self) -> usize {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
            Self::Sixth => 6,
            Self::Eighth => 8,
        }
    }

    pub fn half_width(self) -> usize {
        self.order() / 2
    }

    /// `c_0, c_1, …` with `v'' ≈ (c_0 v_i + Σ c_k (v_{i+k} + v_{i-k})) / h²`.
    fn second_derivative(self) -> &'static [f64] {
        match self {
            Self::Second => &[-2.0, 1.0],
            Self::Fourth => &[-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
            Self::Sixth => &[-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
            Self::Eighth => &[-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
        }
    }

    /// `d_1, d_2, …` with `v' ≈ Σ d_k (v_{i+k} - v_{i-k}) / h`.
    fn first_derivative(self) -> &'static [f64] {
        match self {
            Self::Second => &[0.5],
            Self::Fourth => &[2.0 / 3.0, -1.0 / 12.0],
            Self::Sixth => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
            Self::Eighth => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        }
    }
}

/// Number of end nodes carrying the `r_max` correction in [`RadialGrid::integrate`].
const END_CORRECTION_NODES: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r_max: f64,
    n: usize,
    h: f64,
    order: StencilOrder,
    nodes: Vec<f64>,
    /// `4π h r_i²`: the rule behind every inner product and norm.
    weights: Vec<f64>,
    /// `weights` plus the end correction at `r_max`.
    quad_weights: Vec<f64>,
    d2: BandMatrix<f64>,
}

impl RadialGrid {
    pub const MIN_NODES: usize = 16;

    pub fn new(r_max: f64, n: usize) -> Result<Self> {
        Self::with_order(r_max, n, StencilOrder::default())
    }

    pub fn with_order(r_max: f64, n: usize, order: StencilOrder) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return config(alloc::format!("r_max must be positive and finite (got {r_max})"));
        }
        if n < Self::MIN_NODES {
            return config(alloc::format!("need at least {} interior nodes (got {n})", Self::MIN_NODES));
        }
        let h = r_max / (n as f64 + 1.0);
        let nodes: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
        let weights: Vec<f64> = nodes.iter().map(|r| 4.0 * PI * h * r * r).collect();
        let mut quad_weights = weights.clone();
        for (j, c) in end_correction(END_CORRECTION_NODES).into_iter().enumerate() {
            let i = n - 1 - j;
            quad_weights[i] += 4.0 * PI * h * c * nodes[i] * nodes[i];
        }
        let d2 = second_difference(n, h, order);
        Ok(Self { r_max, n, h, order, nodes, weights, quad_weights, d2 })
    }

    pub fn shared(self) -> GridRef {
        Arc::new(self)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn order(&self) -> StencilOrder {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Even polynomials `p` of degree up to this value are integrated exactly
    /// against `4πr² dr` on `[0, r_max]` by [`RadialGrid::integrate`].
    pub fn quadrature_degree(&self) -> usize {
        END_CORRECTION_NODES - 3
    }

    /// `∫₀^{r_max} f(r) 4πr² dr` from nodal values.
    ///
    /// Trapezoid in `r` is spectrally accurate at `r = 0` for even integrands;
    /// the `r_max` end gets an Euler–Maclaurin correction built from a local
    /// extrapolating polynomial, so integrands that do not vanish at `r_max`
    /// are handled too.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n);
        f.iter().zip(&self.quad_weights).map(|(a, w)| a * w).sum()
    }

    /// Symmetric matrix of `d²/dr²` acting on `v = r·u`.
    pub fn second_difference(&self) -> &BandMatrix<f64> {
        &self.d2
    }

    /// `−d²/dr² + diag(d)` on `v = r·u`: the matrix of `−Δ + d(r)` in the
    /// `v` representation.
    pub fn schrodinger_matrix(&self, d: &[f64]) -> BandMatrix<f64> {
        assert_eq!(d.len(), self.n);
        let mut a = self.d2.clone();
        a.scale(-1.0);
        a.add_diagonal(d);
        a
    }

    /// `d/dr` of `v = r·u`, using the same odd reflections as the Laplacian.
    pub fn dv_dr<T: crate::scalar::Sample>(&self, v: &[T]) -> Vec<T> {
        let d = self.order.first_derivative();
        let n = self.n as isize;
        let at = |p: isize| -> T {
            // p is a 1-based node index; 0 and n+1 are the boundary zeros
            if p <= 0 {
                if p == 0 { T::zero() } else { -v[(-p - 1) as usize] }
            } else if p >= n + 1 {
                let q = 2 * (n + 1) - p;
                if q == n + 1 { T::zero() } else { -v[(q - 1) as usize] }
            } else {
                v[(p - 1) as usize]
            }
        };
        let inv_h = 1.0 / self.h;
        (1..=n)
            .map(|p| {
                let mut acc = T::zero();
                for (k, &dk) in d.iter().enumerate() {
                    let k = k as isize + 1;
                    acc += (at(p + k) - at(p - k)) * dk;
                }
                acc * inv_h
            })
            .collect()
    }
}

fn second_difference(n: usize, h: f64, order: StencilOrder) -> BandMatrix<f64> {
    let c = order.second_derivative();
    let m = c.len() - 1;
    let inv_h2 = 1.0 / (h * h);
    let coeff = |k: usize| if k <= m { c[k] } else { 0.0 };
    let mut a = BandMatrix::zeros(n, m, m);
    for i in 0..n {
        for j in i.saturating_sub(m)..=(i + m).min(n - 1) {
            let d = i.abs_diff(j);
            // mirror images of node j about r = 0 and r = r_max
            let v = coeff(d) - coeff(i + j + 2) - coeff(2 * n - i - j);
            a.set(i, j, v * inv_h2);
        }
    }
    a
}

/// Correction weights (in units of `h`, for `g = f·r²` at the last `m` nodes,
/// last node first) turning `h Σ g(r_i)` into `∫₀^{r_max} g` whenever `g` is
/// locally a polynomial of degree `< m`.
///
/// With `g(0) = 0` and `g` even, Euler–Maclaurin gives
/// `∫ g = h Σ g_i + h g(r_max)/2 − Σ_k B_{2k}/(2k)! h^{2k} g^{(2k−1)}(r_max)`;
/// the endpoint value and derivatives come from the polynomial through the
/// last `m` nodes.
fn end_correction(m: usize) -> Vec<f64> {
    // Bernoulli numbers B_2, B_4, ..., B_12
    const BERNOULLI: [f64; 6] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0];
    let xs: Vec<f64> = (0..m).map(|j| -(j as f64 + 1.0)).collect();
    let mut out = vec![0.0; m];
    for (j, w) in out.iter_mut().enumerate() {
        // Lagrange basis ℓ_j(x) = Π_{k≠j} (x − x_k)/(x_j − x_k) as coefficients in x
        let mut poly = vec![1.0];
        let mut denom = 1.0;
        for (k, &xk) in xs.iter().enumerate() {
            if k == j {
                continue;
            }
            let mut next = vec![0.0; poly.len() + 1];
            for (p, &c) in poly.iter().enumerate() {
                next[p + 1] += c;
                next[p] -= xk * c;
            }
            poly = next;
            denom *= xs[j] - xk;
        }
        // derivative of order q at x = 0 is q!·poly[q]
        let deriv = |q: usize| -> f64 {
            if q < poly.len() {
                let mut f = 1.0;
                for t in 2..=q {
                    f *= t as f64;
                }
                f * poly[q] / denom
            } else {
                0.0
            }
        };
        let mut c = 0.5 * deriv(0);
        let mut fact = 1.0;
        for (k, b) in BERNOULLI.iter().enumerate() {
            let two_k = 2 * (k + 1);
            fact *= (two_k - 1) as f64 * two_k as f64;
            c -= b / fact * deriv(two_k - 1);
        }
        *w = c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_first_node() {
        let g = RadialGrid::new(1.0, 99).unwrap();
        assert!((g.spacing() - 0.01).abs() < 1e-15);
        assert!((g.nodes()[0] - 0.01).abs() < 1e-15);
        let g = RadialGrid::new(50.0, 4999).unwrap();
        assert!((g.spacing() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(RadialGrid::new(0.0, 100).is_err());
        assert!(RadialGrid::new(-1.0, 100).is_err());
        assert!(RadialGrid::new(1.0, 15).is_err());
        assert!(RadialGrid::new(f64::NAN, 100).is_err());
    }

    #[test]
    fn nodes_are_multiples_of_spacing() {
        let g = RadialGrid::new(3.0, 40).unwrap();
        for (i, r) in g.nodes().iter().enumerate() {
            assert_eq!(*r, (i + 1) as f64 * g.spacing());
        }
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1] && w[0] > 0.0));
    }

    #[test]
    fn ball_volume() {
        let g = RadialGrid::new(2.0, 200).unwrap();
        let one = vec![1.0; g.n()];
        let v = g.integrate(&one);
        assert!((v - 32.0 * PI / 3.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn even_polynomials_exact_up_to_declared_degree() {
        let g = RadialGrid::new(1.7, 123).unwrap();
        for deg in (0..=g.quadrature_degree()).step_by(2) {
            let f: Vec<f64> = g.nodes().iter().map(|r| r.powi(deg as i32)).collect();
            let exact = 4.0 * PI * 1.7f64.powi(deg as i32 + 3) / (deg as f64 + 3.0);
            let got = g.integrate(&f);
            assert!(((got - exact) / exact).abs() < 1e-12, "deg {deg}: {got} vs {exact}");
        }
    }

    #[test]
    fn gaussian_integral() {
        let g = RadialGrid::new(12.0, 1200).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        assert!((g.integrate(&f) - PI.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn second_difference_is_symmetric_and_negative() {
        for order in [StencilOrder::Second, StencilOrder::Fourth, StencilOrder::Sixth, StencilOrder::Eighth] {
            let g = RadialGrid::with_order(5.0, 30, order).unwrap();
            let a = g.second_difference();
            for i in 0..30 {
                for j in 0..30 {
                    assert_eq!(a.get(i, j), a.get(j, i));
                }
            }
            let v: Vec<f64> = (0..30).map(|i| ((i * i) as f64 * 0.1).cos()).collect();
            let av = a.mul_vec(&v);
            let q: f64 = av.iter().zip(&v).map(|(x, y)| x * y).sum();
            assert!(q < 0.0);
        }
    }

    #[test]
    fn first_derivative_of_odd_function() {
        let g = RadialGrid::new(20.0, 2000).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|r| r * (-r * r / 2.0).exp()).collect();
        let dv = g.dv_dr(&v);
        for (r, d) in g.nodes().iter().zip(&dv) {
            let exact = (1.0 - r * r) * (-r * r / 2.0).exp();
            assert!((d - exact).abs() < 1e-9);
        }
    }
}
