//! Independent reference computations used to freeze fixture values.
//!
//! Neither routine shares code with the solvers it checks: the cubic
//! ground state comes from fixed-step RK4 shooting with Richardson
//! extrapolation (the core uses adaptive Dormand–Prince plus Newton on the
//! grid), and `e_ω` comes from a dense symmetric eigen-solve (the core uses
//! shifted inverse iteration on banded matrices).

use cqnls_core::linearized::{LinearizedOperators, Which};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// `e_ω` from `S = A₋^{1/2} A₊ A₋^{1/2}`, which shares its nonzero spectrum
/// with `A₋A₊`; the lowest eigenvalue of `S` is `−e_ω²`.
pub fn dense_e_omega(ops: &LinearizedOperators) -> CliResult<f64> {
    let n = ops.q.len();
    if n > 1500 {
        return Err(CliError::Validation(format!("dense oracle is limited to n <= 1500, got {n}")));
    }
    let dense = |w| DMatrix::from_row_slice(n, n, &ops.matrix(w).to_dense());
    let (ap, am) = (dense(Which::Plus), dense(Which::Minus));
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym(am));
    let sqrt_vals = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let s = sym(&root * ap * &root);
    let lowest = SymmetricEigen::new(s).eigenvalues.min();
    if !(lowest < 0.0) {
        return Err(CliError::Numeric(format!("dense oracle found no unstable mode (lowest eigenvalue {lowest:e})")));
    }
    Ok((-lowest).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicOracle {
    pub omega: f64,
    pub q0: f64,
    /// `‖Q‖₂² = 4π ∫ r² Q² dr`.
    pub l2_sq: f64,
    /// Half the change of the extrapolated values between the two step
    /// pairs.
    pub q0_error: f64,
    pub l2_sq_error: f64,
}

enum Shot {
    Over,
    Under,
}

/// One RK4 shot of `R'' = −2R'/r + ωR − R³` from `R(0) = a`. Returns the
/// outcome and the mass `4π∫r²R²` accumulated up to the decision point.
fn shoot(a: f64, omega: f64, h: f64, r_end: f64) -> (Shot, f64) {
    let rhs = |r: f64, y: [f64; 3]| [y[1], -2.0 * y[1] / r + omega * y[0] - y[0].powi(3), 4.0 * std::f64::consts::PI * r * r * y[0] * y[0]];
    let c = (omega * a - a.powi(3)) / 6.0;
    let d = (omega - 3.0 * a * a) * c / 20.0;
    let mut r = h;
    let mut y = [
        a + c * h * h + d * h.powi(4),
        2.0 * c * h + 4.0 * d * h.powi(3),
        4.0 * std::f64::consts::PI * a * a * h.powi(3) / 3.0,
    ];
    let axpy = |y: [f64; 3], s: f64, k: [f64; 3]| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
    while r < r_end {
        let k1 = rhs(r, y);
        let k2 = rhs(r + 0.5 * h, axpy(y, 0.5 * h, k1));
        let k3 = rhs(r + 0.5 * h, axpy(y, 0.5 * h, k2));
        let k4 = rhs(r + h, axpy(y, h, k3));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
        if y[0] < 0.0 {
            return (Shot::Over, y[2]);
        }
        if y[1] > 0.0 {
            return (Shot::Under, y[2]);
        }
    }
    (Shot::Under, y[2])
}

fn shoot_ground_state(omega: f64, h: f64) -> (f64, f64) {
    let s = omega.sqrt();
    let (mut lo, mut hi) = (1.5 * s, 10.0 * s);
    let r_end = 80.0 / s;
    let mut mass = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (shot, m) = shoot(mid, omega, h, r_end);
        mass = m;
        match shot {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
        }
    }
    (0.5 * (lo + hi), mass)
}

/// Ground state of `−ΔR + ωR − R³ = 0` by shooting at steps `h`, `h/2`,
/// `h/4` with fourth-order Richardson extrapolation.
pub fn cubic_ground_state(omega: f64) -> CliResult<CubicOracle> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(CliError::Validation(format!("omega must be positive, got {omega}")));
    }
    let h = 0.01 / omega.sqrt();
    let runs: Vec<(f64, f64)> = [h, h / 2.0, h / 4.0].iter().map(|&h| shoot_ground_state(omega, h)).collect();
    let rich = |a: f64, b: f64| (16.0 * b - a) / 15.0;
    let q0 = [rich(runs[0].0, runs[1].0), rich(runs[1].0, runs[2].0)];
    let m = [rich(runs[0].1, runs[1].1), rich(runs[1].1, runs[2].1)];
    Ok(CubicOracle {
        omega,
        q0: q0[1],
        l2_sq: m[1],
        q0_error: (q0[1] - q0[0]).abs() / 2.0,
        l2_sq_error: (m[1] - m[0]).abs() / 2.0,
    })
}
