//! Mass, energy, the virial functional `K`, the action `S_ω = E + ωM`,
//! `J_ω = S_ω − K/2`, the L²-invariant scaling `T_λu = λ^{3/2} u(λ·)` and the
//! distance to the phase orbit of a real profile.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::{Field, NormReport, RadialField};
use crate::scalar::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValues {
    pub mass: f64,
    pub energy: f64,
    pub k: f64,
    pub action: f64,
    pub j: f64,
    pub omega: f64,
}

/// Which power nonlinearity the functionals refer to. `CubicOnly` drops the
/// quintic term everywhere and is used to cross-check the ground-state
/// solver against the classical cubic soliton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonlinearity {
    #[default]
    CubicQuintic,
    CubicOnly,
}

impl Nonlinearity {
    /// Coefficient of `|u|⁴u`.
    pub fn quintic(self) -> f64 {
        match self {
            Self::CubicQuintic => 1.0,
            Self::CubicOnly => 0.0,
        }
    }
}

impl FunctionalValues {
    pub fn from_norms(n: &NormReport, omega: f64) -> Self {
        Self::from_norms_with(n, omega, Nonlinearity::CubicQuintic)
    }

    pub fn from_norms_with(n: &NormReport, omega: f64, nl: Nonlinearity) -> Self {
        let c5 = nl.quintic();
        let mass = 0.5 * n.l2_sq;
        let energy = 0.5 * n.grad_sq - 0.25 * n.l4_4 - c5 * n.l6_6 / 6.0;
        let k = n.grad_sq - 0.75 * n.l4_4 - c5 * n.l6_6;
        // J is summed from its own positive terms, not derived from S and K
        let j = 0.5 * omega * n.l2_sq + 0.125 * n.l4_4 + c5 * n.l6_6 / 3.0;
        Self { mass, energy, k, action: energy + omega * mass, j, omega }
    }
}

fn k_from_norms(n: &NormReport) -> f64 {
    n.grad_sq - 0.75 * n.l4_4 - n.l6_6
}

fn check_finite<T: Sample>(u: &Field<T>) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::Input("field has non-finite samples".into()))
    }
}

/// All functionals of `u` at frequency `ω`.
pub fn evaluate<T: Sample>(u: &Field<T>, omega: f64) -> Result<FunctionalValues> {
    check_finite(u)?;
    if !omega.is_finite() {
        return Err(Error::Input("omega must be finite".into()));
    }
    Ok(FunctionalValues::from_norms(&u.norms(), omega))
}

pub fn mass<T: Sample>(u: &Field<T>) -> f64 {
    0.5 * u.l2_sq()
}

pub fn energy<T: Sample>(u: &Field<T>) -> f64 {
    0.5 * u.grad_sq() - 0.25 * u.lp_p(4) - u.lp_p(6) / 6.0
}

pub fn virial_k<T: Sample>(u: &Field<T>) -> f64 {
    k_from_norms(&u.norms())
}

/// `K(T_λu) = λ²‖∇u‖² − ¾λ³‖u‖₄⁴ − λ⁶‖u‖₆⁶` from the norms of `u`.
pub fn k_of_scaled(n: &NormReport, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    l2 * n.grad_sq - 0.75 * l2 * lambda * n.l4_4 - l2 * l2 * l2 * n.l6_6
}

/// `S_ω(T_λu)` from the norms of `u`.
pub fn action_of_scaled(n: &NormReport, omega: f64, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    0.5 * l2 * n.grad_sq - 0.25 * l2 * lambda * n.l4_4 - l2 * l2 * l2 * n.l6_6 / 6.0 + 0.5 * omega * n.l2_sq
}

/// Value of `u` at an arbitrary radius, by degree-5 Lagrange interpolation
/// of `v = r·u` (odd through the origin, zero from `r_max` on).
pub fn sample_at<T: Sample>(u: &Field<T>, r: f64) -> T {
    let g = u.grid();
    let h = g.spacing();
    let n = g.n() as isize;
    let x = r.abs() / h;
    if x >= (n + 1) as f64 {
        return T::zero();
    }
    let data = u.samples();
    let nodes = g.nodes();
    let v_at = |p: isize| -> T {
        if p == 0 || p >= n + 1 || p <= -(n + 1) {
            T::zero()
        } else if p < 0 {
            -(data[(-p - 1) as usize] * nodes[(-p - 1) as usize])
        } else {
            data[(p - 1) as usize] * nodes[(p - 1) as usize]
        }
    };
    let base = x.floor() as isize;
    let frac = x - base as f64;
    if frac == 0.0 && base >= 1 {
        return data[(base - 1) as usize];
    }
    if x == 0.0 {
        return value_at_origin(u);
    }
    let mut v = T::zero();
    for a in -2..=3isize {
        let mut w = 1.0;
        for b in -2..=3isize {
            if b != a {
                w *= (frac - b as f64) / (a - b) as f64;
            }
        }
        v += v_at(base + a) * w;
    }
    v * (1.0 / (x * h))
}

/// `u(0)` from the even quartic through the first three nodes.
pub fn value_at_origin<T: Sample>(u: &Field<T>) -> T {
    let d = u.samples();
    d[0] * 1.5 - d[1] * 0.6 + d[2] * 0.1
}

/// `T_λu = λ^{3/2} u(λ·)`, resampled onto the grid of `u`.
pub fn scale<T: Sample>(u: &Field<T>, lambda: f64) -> Result<Field<T>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Input(alloc::format!("scaling factor must be positive (got {lambda})")));
    }
    if lambda == 1.0 {
        return Ok(u.clone());
    }
    let amp = lambda.powf(1.5);
    Ok(Field::from_fn(u.grid().clone(), |r| sample_at(u, lambda * r) * amp))
}

pub const LAMBDA_MIN: f64 = 1e-3;
pub const LAMBDA_MAX: f64 = 1e3;

/// The unique `λ > 0` with `K(T_λu) = 0`.
///
/// `K(T_λu)/λ² = ‖∇u‖² − ¾λ‖u‖₄⁴ − λ⁴‖u‖₆⁶` is strictly decreasing, so
/// geometric bisection on `[10⁻³, 10³]` is safe.
pub fn lambda_star<T: Sample>(u: &Field<T>) -> Result<f64> {
    check_finite(u)?;
    let n = u.norms();
    lambda_star_from_norms(&n)
}

pub fn lambda_star_from_norms(n: &NormReport) -> Result<f64> {
    if n.l2_sq == 0.0 {
        return Err(Error::Input("lambda_star of the zero field".into()));
    }
    let f = |l: f64| n.grad_sq - 0.75 * l * n.l4_4 - l.powi(4) * n.l6_6;
    let (mut lo, mut hi) = (LAMBDA_MIN, LAMBDA_MAX);
    if f(lo) <= 0.0 {
        return Err(Error::Numeric(alloc::format!("K(T_λu) ≤ 0 already at λ = {lo}")));
    }
    if f(hi) >= 0.0 {
        return Err(Error::Numeric(alloc::format!("no sign change of K(T_λu) below λ = {hi}")));
    }
    while hi / lo - 1.0 > 1e-13 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// `S_ω'(u) = −Δu + ωu − |u|²u − |u|⁴u`.
pub fn action_gradient<T: Sample>(u: &Field<T>, omega: f64) -> Field<T> {
    action_gradient_with(u, omega, Nonlinearity::CubicQuintic)
}

pub fn action_gradient_with<T: Sample>(u: &Field<T>, omega: f64, nl: Nonlinearity) -> Field<T> {
    let c5 = nl.quintic();
    let lap = u.laplacian();
    let mut out = u.clone();
    for (o, &l) in out.samples_mut().iter_mut().zip(lap.samples()) {
        let a2 = o.abs2();
        *o = -l + *o * (omega - a2 - c5 * a2 * a2);
    }
    out
}

/// `inf_θ ‖u − e^{iθ}Q‖_{H¹}`.
///
/// The minimizing phase is the argument of the complex pairing `⟨u, Q⟩_{H¹}`;
/// the distance is then evaluated directly rather than through
/// `‖u‖² + ‖Q‖² − 2|⟨u,Q⟩|`, which cancels catastrophically near the orbit.
pub fn dist_to_orbit<T: Sample>(u: &Field<T>, q: &Field<f64>) -> Result<f64> {
    let z = u.h1_inner(q)?;
    let phase = if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) };
    let d = u.zip_map(q, |a, b| a.to_complex() - phase * b)?;
    Ok(d.h1_norm())
}

/// The orbit distance through the expanded formula; kept for comparison.
pub fn dist_to_orbit_expanded(u: &RadialField, q: &Field<f64>) -> Result<f64> {
    let z = u.h1_inner(q)?;
    Ok((u.h1_sq() + q.h1_sq() - 2.0 * z.norm()).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RealField;
    use crate::grid::{GridRef, RadialGrid};
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn grid() -> GridRef {
        RadialGrid::new(14.0, 1400).unwrap().shared()
    }

    fn gaussian(g: &GridRef) -> RealField {
        Field::from_fn(g.clone(), |r| (-r * r / 2.0).exp())
    }

    #[test]
    fn gaussian_values() {
        let v = evaluate(&gaussian(&grid()), 1.0).unwrap();
        let p = PI.powf(1.5);
        let (l2, g2, l4, l6) = (p, 1.5 * p, (PI / 2.0).powf(1.5), (PI / 3.0).powf(1.5));
        assert!((v.mass - 0.5 * l2).abs() < 1e-9);
        assert!((v.energy - (0.5 * g2 - 0.25 * l4 - l6 / 6.0)).abs() < 1e-8);
        assert!((v.k - (g2 - 0.75 * l4 - l6)).abs() < 1e-8);
        assert!((v.mass - 2.7842).abs() < 1e-4);
        assert!((v.energy - 3.5055).abs() < 1e-4);
        assert!((v.k - 5.8044).abs() < 1e-4);
        assert!((v.action - 6.2897).abs() < 1e-4);
        assert!((v.j - 3.3875).abs() < 1e-4);
    }

    #[test]
    fn zero_field_values() {
        let v = evaluate(&RealField::zeros(grid()), 0.3).unwrap();
        assert_eq!((v.mass, v.energy, v.k, v.action, v.j), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn nan_rejected() {
        let mut u = gaussian(&grid());
        u.samples_mut()[7] = f64::NAN;
        assert!(matches!(evaluate(&u, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn scale_identity_and_errors() {
        let u = gaussian(&grid());
        assert_eq!(scale(&u, 1.0).unwrap(), u);
        assert!(scale(&u, 0.0).is_err());
        assert!(scale(&u, -2.0).is_err());
    }

    #[test]
    fn scale_laws_on_gaussian() {
        let g = RadialGrid::new(20.0, 4000).unwrap().shared();
        let u = gaussian(&g);
        let n0 = u.norms();
        for lambda in [0.5, 2.0, 3.0] {
            let n1 = scale(&u, lambda).unwrap().norms();
            assert!(((n1.l2_sq - n0.l2_sq) / n0.l2_sq).abs() < 1e-6, "mass at {lambda}");
            assert!(((n1.grad_sq - lambda.powi(2) * n0.grad_sq) / n1.grad_sq).abs() < 1e-6);
            assert!(((n1.l4_4 - lambda.powi(3) * n0.l4_4) / n1.l4_4).abs() < 1e-6);
            assert!(((n1.l6_6 - lambda.powi(6) * n0.l6_6) / n1.l6_6).abs() < 1e-6);
        }
        let k2 = virial_k(&scale(&u, 2.0).unwrap());
        assert!((k2 + 46.98).abs() < 0.01, "{k2}");
        assert!((k_of_scaled(&n0, 2.0) + 46.98).abs() < 0.01);
    }

    #[test]
    fn lambda_star_of_gaussian() {
        let l = lambda_star(&gaussian(&grid())).unwrap();
        // independent root of 8.3525 − 1.47653λ − 1.0716λ⁴ with the exact norms
        let p = PI.powf(1.5);
        let f = |x: f64| 1.5 * p - 0.75 * (PI / 2.0).powf(1.5) * x - (PI / 3.0).powf(1.5) * x.powi(4);
        let (mut a, mut b) = (1.0, 2.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 { a = m } else { b = m }
        }
        assert!((l - a).abs() < 1e-7);
        assert!((l - 1.543).abs() < 1e-3);
        assert!(lambda_star(&RealField::zeros(grid())).is_err());
    }

    #[test]
    fn lambda_star_group_property() {
        let g = RadialGrid::new(20.0, 4000).unwrap().shared();
        let u = gaussian(&g);
        let l = lambda_star(&u).unwrap();
        let v = scale(&u, 2.0).unwrap();
        assert!((lambda_star(&v).unwrap() - l / 2.0).abs() < 1e-6);
    }

    #[test]
    fn action_gradient_matches_directional_derivative() {
        let g = grid();
        let u = gaussian(&g);
        let h = RealField::from_fn(g.clone(), |r| (1.0 - r * r / 5.0) * (-r * r / 3.0).exp());
        let omega = 0.7;
        let eps = 1e-5;
        let s = |f: &RealField| evaluate(f, omega).unwrap().action;
        let fd = (s(&(&u + &h.scaled(eps))) - s(&(&u - &h.scaled(eps)))) / (2.0 * eps);
        let an = action_gradient(&u, omega).dot(&h).unwrap();
        assert!(((fd - an) / an).abs() < 1e-6, "{fd} vs {an}");
        let z = RealField::zeros(g);
        assert_eq!(action_gradient(&z, omega), z);
    }

    #[test]
    fn k_is_scaling_derivative_of_action() {
        let u = gaussian(&grid());
        let n = u.norms();
        let eps = 1e-4;
        let d = (action_of_scaled(&n, 0.4, 1.0 + eps) - action_of_scaled(&n, 0.4, 1.0 - eps)) / (2.0 * eps);
        assert!((d - virial_k(&u)).abs() < 1e-6);
    }

    #[test]
    fn dist_to_orbit_basics() {
        let g = grid();
        let q = gaussian(&g);
        let qc = q.to_complex();
        for theta in [0.0, 0.3, -2.0, 3.1] {
            assert!(dist_to_orbit(&qc.rotated(theta), &q).unwrap() < 1e-10);
        }
        let z = RadialField::zeros(g);
        assert!((dist_to_orbit(&z, &q).unwrap() - q.h1_norm()).abs() < 1e-12);
    }

    #[test]
    fn dist_to_orbit_matches_phase_scan() {
        let g = grid();
        let q = gaussian(&g);
        let y = RealField::from_fn(g.clone(), |r| (r * r - 1.5) * (-r * r / 2.0).exp());
        let u = RadialField::from_fn(g.clone(), |r| {
            let e = (-r * r / 2.0).exp();
            Complex64::new(e + 0.01 * (r * r - 1.5) * e, 0.02 * e * r.cos())
        });
        let d = dist_to_orbit(&u, &q).unwrap();
        let mut best = f64::INFINITY;
        let m = 10_000;
        let mut refine = |lo: f64, hi: f64| {
            let mut arg = lo;
            for k in 0..=m {
                let t = lo + (hi - lo) * k as f64 / m as f64;
                let diff = &u - &q.to_complex().rotated(t);
                let v = diff.h1_norm();
                if v < best {
                    best = v;
                    arg = t;
                }
            }
            arg
        };
        let t0 = refine(-PI, PI);
        refine(t0 - 1e-3, t0 + 1e-3);
        assert!((d - best).abs() < 1e-8, "{d} vs {best}");
        assert!(d > 0.0 && d <= 0.03 * y.h1_norm().max(1.0));
    }

    proptest! {
        #[test]
        fn j_identity(a in 0.1f64..3.0, w in 0.3f64..2.0, omega in 0.01f64..2.0) {
            let g = RadialGrid::new(20.0, 800).unwrap().shared();
            let u = RealField::from_fn(g, |r| a * (-(r * w).powi(2)).exp());
            let v = evaluate(&u, omega).unwrap();
            let j2 = v.action - 0.5 * v.k;
            prop_assert!((v.j - j2).abs() <= 1e-12 * v.j.abs().max(1.0) * 10.0);
            prop_assert!((v.action - v.energy - omega * v.mass).abs() <= 1e-12 * v.action.abs().max(1.0) * 10.0);
        }

        #[test]
        fn scaled_k_has_one_sign_change(a in 0.05f64..5.0, w in 0.2f64..3.0) {
            let g = RadialGrid::new(30.0, 1000).unwrap().shared();
            let u = RealField::from_fn(g, |r| a * (-(r * w).powi(2)).exp() * (1.0 + 0.3 * r));
            let n = u.norms();
            let mut changes = 0;
            let mut prev = k_of_scaled(&n, LAMBDA_MIN).signum();
            for k in 1..=2000 {
                let l = LAMBDA_MIN * (LAMBDA_MAX / LAMBDA_MIN).powf(k as f64 / 2000.0);
                let s = k_of_scaled(&n, l).signum();
                if s != prev { changes += 1; prev = s; }
            }
            prop_assert_eq!(changes, 1);
            let l = lambda_star(&u).unwrap();
            prop_assert!(k_of_scaled(&n, l * 0.99) > 0.0 && k_of_scaled(&n, l * 1.01) < 0.0);
        }

        #[test]
        fn orbit_distance_phase_invariant(alpha in -6.0f64..6.0) {
            let g = RadialGrid::new(12.0, 400).unwrap().shared();
            let q = RealField::from_fn(g.clone(), |r| (-r * r / 2.0).exp());
            let u = RadialField::from_fn(g, |r| Complex64::new((-r * r / 3.0).exp(), 0.1 * (-r * r).exp()));
            let d0 = dist_to_orbit(&u, &q).unwrap();
            let d1 = dist_to_orbit(&u.rotated(alpha), &q).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-13 * d0.max(1.0));
        }
    }
}
