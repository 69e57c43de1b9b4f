//! The sharp Sobolev constant `σ = inf ‖∇u‖₂² / ‖u‖₆²` in 3-D, computed from
//! the Aubin–Talenti profile `W = (1 + r²/3)^{−1/2}`, and the action bound
//! `m_ω < σ^{3/2}/3`.
//!
//! `W ~ √3/r` at infinity, so truncating at `R` loses `12π/R + O(R⁻³)` of
//! `‖∇W‖²` and `O(R⁻³)` of `‖W‖₆⁶`; the quotient expands in `1/R` and
//! `1/R³` with no `1/R²` term. Quotients at `R, 2R, 4R` are
//! Richardson-extrapolated through both orders.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

const FOUR_PI: f64 = 4.0 * core::f64::consts::PI;

fn w(r: f64) -> f64 {
    1.0 / (1.0 + r * r / 3.0).sqrt()
}

fn w_prime(r: f64) -> f64 {
    -(r / 3.0) * (1.0 + r * r / 3.0).powf(-1.5)
}

/// Composite Simpson on `[0, R]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, r_max: f64, n: usize) -> f64 {
    let h = r_max / n as f64;
    let mut s = f(0.0) + f(r_max);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `‖∇W‖² / ‖W‖₆²` over the ball of radius `r_max`, with spacing `h`.
pub fn truncated_quotient(r_max: f64, h: f64) -> Result<f64> {
    if !(r_max > 0.0 && h > 0.0 && h < r_max) {
        return Err(Error::Input("quotient needs 0 < h < r_max".into()));
    }
    let n = 2 * ((r_max / h / 2.0).ceil() as usize).max(1);
    let grad = FOUR_PI * simpson(|r| r * r * w_prime(r).powi(2), r_max, n);
    let l6 = FOUR_PI * simpson(|r| r * r * w(r).powi(6), r_max, n);
    Ok(grad / l6.powf(1.0 / 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevEstimate {
    pub sigma: f64,
    /// Quotients at `R, 2R, 4R`.
    pub truncated: [f64; 3],
    /// Difference between the one- and two-level extrapolants.
    pub error_estimate: f64,
}

impl SobolevEstimate {
    /// `σ^{3/2}/3`, the action level of the energy-critical bubble.
    pub fn action_bound(&self) -> f64 {
        self.sigma.powf(1.5) / 3.0
    }
}

/// `σ` from truncations at `r_max, 2r_max, 4r_max`; `r_max ≥ 200`.
pub fn sobolev_constant(r_max: f64, h: f64) -> Result<SobolevEstimate> {
    if r_max < 200.0 {
        return crate::error::config(alloc::format!("Sobolev quotient needs r_max >= 200 (got {r_max})"));
    }
    let q = [truncated_quotient(r_max, h)?, truncated_quotient(2.0 * r_max, h)?, truncated_quotient(4.0 * r_max, h)?];
    // Q(R) = σ + a/R + b/R³ + …
    let r1 = [2.0 * q[1] - q[0], 2.0 * q[2] - q[1]];
    let sigma = (8.0 * r1[1] - r1[0]) / 7.0;
    Ok(SobolevEstimate { sigma, truncated: q, error_estimate: (sigma - r1[1]).abs() })
}

/// `3(π/2)^{4/3}`, the closed form of the sharp constant.
pub fn sobolev_constant_closed_form() -> f64 {
    3.0 * (core::f64::consts::FRAC_PI_2).powf(4.0 / 3.0)
}

/// `(ω, m_ω, σ^{3/2}/3 − m_ω)` per branch point.
pub fn action_margins(omegas: &[f64], actions: &[f64], est: &SobolevEstimate) -> alloc::vec::Vec<(f64, f64, f64)> {
    let bound = est.action_bound();
    omegas.iter().zip(actions).map(|(&w, &m)| (w, m, bound - m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolated_constant_matches_closed_form() {
        let est = sobolev_constant(200.0, 0.01).unwrap();
        let exact = sobolev_constant_closed_form();
        assert!((est.sigma - exact).abs() < 1e-8, "{} vs {exact}", est.sigma);
        assert!((exact - 5.4779).abs() < 1e-4);
        assert!((est.action_bound() - 4.2737).abs() < 1e-4);
        let gap = |q: f64| (q - est.sigma).abs();
        assert!(gap(est.truncated[2]) < gap(est.truncated[1]) && gap(est.truncated[1]) < gap(est.truncated[0]));
    }

    #[test]
    fn rejects_small_boxes() {
        assert!(sobolev_constant(100.0, 0.01).is_err());
        assert!(truncated_quotient(1.0, 2.0).is_err());
    }
}
