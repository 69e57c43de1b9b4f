//! Linearization around `Q_ω`: the operators
//! `L₊ = −Δ + ω − 3Q² − 5Q⁴`, `L₋ = −Δ + ω − Q² − Q⁴`, the matrix operator
//! `𝓛η = L₊ Re η + i L₋ Im η`, the nonlinear remainder `N_ω`, and the
//! unstable internal mode `L₊Y₁ = −eY₂`, `L₋Y₂ = eY₁`.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::field::{Field, RadialField, RealField};
use crate::functionals::Nonlinearity;
use crate::ground_state::GroundState;
use crate::scalar::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperators {
    pub omega: f64,
    pub q: RealField,
    pub nonlinearity: Nonlinearity,
    /// `3Q² + 5Q⁴`
    pub pot_plus: Vec<f64>,
    /// `Q² + Q⁴`
    pub pot_minus: Vec<f64>,
}

impl LinearizedOperators {
    pub fn new(gs: &GroundState) -> Self {
        Self::from_profile(gs.q.clone(), gs.omega, gs.nonlinearity)
    }

    pub fn from_profile(q: RealField, omega: f64, nl: Nonlinearity) -> Self {
        let c5 = nl.quintic();
        let pot_plus = q.samples().iter().map(|&x| 3.0 * x * x + 5.0 * c5 * x.powi(4)).collect();
        let pot_minus = q.samples().iter().map(|&x| x * x + c5 * x.powi(4)).collect();
        Self { omega, q, nonlinearity: nl, pot_plus, pot_minus }
    }

    fn potential(&self, which: Which) -> &[f64] {
        match which {
            Which::Plus => &self.pot_plus,
            Which::Minus => &self.pot_minus,
        }
    }

    /// `L_±` in the `v = r·u` representation.
    pub fn matrix(&self, which: Which) -> BandMatrix<f64> {
        let d: Vec<f64> = self.potential(which).iter().map(|p| self.omega - p).collect();
        self.q.grid().schrodinger_matrix(&d)
    }

    /// `(−Δ + ω − V_±) v`.
    pub fn apply<T: Sample>(&self, which: Which, v: &Field<T>) -> Result<Field<T>> {
        self.q.check_grid(v)?;
        let lap = v.laplacian();
        let pot = self.potential(which);
        let mut out = v.clone();
        for ((o, &l), &p) in out.samples_mut().iter_mut().zip(lap.samples()).zip(pot) {
            *o = -l + *o * (self.omega - p);
        }
        Ok(out)
    }

    /// `𝓛η = L₊ Re η + i L₋ Im η`.
    pub fn apply_cal_l(&self, eta: &RadialField) -> Result<RadialField> {
        let a = self.apply(Which::Plus, &eta.re())?;
        let b = self.apply(Which::Minus, &eta.im())?;
        RadialField::from_parts(&a, &b)
    }

    /// `−i𝓛η = L₋ Im η − i L₊ Re η`.
    pub fn apply_minus_i_cal_l(&self, eta: &RadialField) -> Result<RadialField> {
        let a = self.apply(Which::Plus, &eta.re())?;
        let b = self.apply(Which::Minus, &eta.im())?;
        RadialField::from_parts(&b, &a.scaled(-1.0))
    }

    /// `⟨𝓛η, η⟩ = (L₊η₁, η₁) + (L₋η₂, η₂)`.
    pub fn quadratic_form(&self, eta: &RadialField) -> Result<f64> {
        self.apply_cal_l(eta)?.dot(eta)
    }

    /// `N_ω(η) = i(|w|²w − Q³ − 2Q²η − Q²η̄) + i(|w|⁴w − Q⁵ − 3Q⁴η − 2Q⁴η̄)`,
    /// `w = Q + η`.
    pub fn nonlinear_remainder(&self, eta: &RadialField) -> Result<RadialField> {
        let c5 = self.nonlinearity.quintic();
        self.q.zip_map(eta, |q, e| {
            let w = Complex64::new(q, 0.0) + e;
            let a2 = w.norm_sqr();
            let q2 = q * q;
            let q4 = q2 * q2;
            let n1 = w * a2 - q * q2 - e * (2.0 * q2) - e.conj() * q2;
            let n2 = w * (a2 * a2) - q * q4 - e * (3.0 * q4) - e.conj() * (2.0 * q4);
            let s = n1 + n2 * c5;
            Complex64::new(-s.im, s.re)
        })
    }
}

/// Unstable mode of `−i𝓛`, normalized by `2(Y₁, Y₂) = 1` with `(Q, Y₂) < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalMode {
    pub e_omega: f64,
    pub y1: RealField,
    pub y2: RealField,
    /// `(‖L₊Y₁ + eY₂‖, ‖L₋Y₂ − eY₁‖)`, each relative to `e‖Y‖`.
    pub residuals: (f64, f64),
    /// `(Y₁, Y₂)`
    pub pairing: f64,
    /// `(Q, Y₂)`
    pub sign_q2: f64,
    pub iterations: usize,
}

impl InternalMode {
    /// `𝓨₊ = Y₁ + iY₂`
    pub fn y_plus(&self) -> RadialField {
        RadialField::from_parts(&self.y1, &self.y2).expect("mode fields share a grid")
    }

    /// `𝓨₋ = Y₁ − iY₂`
    pub fn y_minus(&self) -> RadialField {
        RadialField::from_parts(&self.y1, &self.y2.scaled(-1.0)).expect("mode fields share a grid")
    }

    /// `‖L₋L₊Y₁ + e²Y₁‖ / (e²‖Y₁‖)`.
    pub fn composed_residual(&self, ops: &LinearizedOperators) -> Result<f64> {
        let a = ops.apply(Which::Plus, &self.y1)?;
        let b = ops.apply(Which::Minus, &a)?;
        let e2 = self.e_omega * self.e_omega;
        let r = b.zip_map(&self.y1, |x, y| x + e2 * y)?;
        Ok((r.l2_sq() / self.y1.l2_sq()).sqrt() / e2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200 }
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let n = dotv(x, x).sqrt();
    for a in x {
        *a /= n;
    }
}

/// Lowest eigenvector of a symmetric band matrix by inverse iteration below
/// a Gershgorin bound.
fn lowest_mode(a: &BandMatrix<f64>, iters: usize) -> Result<Vec<f64>> {
    let n = a.n();
    let mut lower = f64::INFINITY;
    for i in 0..n {
        let mut off = 0.0;
        for j in i.saturating_sub(a.lower())..=(i + a.upper()).min(n - 1) {
            if j != i {
                off += a.get(i, j).abs();
            }
        }
        lower = lower.min(a.get(i, i) - off);
    }
    let mut shifted = a.clone();
    shifted.shift(-(lower - 1.0));
    let lu = shifted.factor()?;
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.013).sin() * 0.1).collect();
    normalize(&mut x);
    for _ in 0..iters {
        lu.solve_in_place(&mut x);
        normalize(&mut x);
    }
    Ok(x)
}

/// Internal mode by Rayleigh-updated shifted inverse iteration on `L₋L₊`.
///
/// In the `v` representation `M = A₋A₊` has the single negative eigenvalue
/// `−e²` on the radial sector. The right kernel of `M` is spanned by
/// `∂_ωQ = −L₊⁻¹Q`; its component is removed from every iterate by the
/// oblique projection that zeroes the pairing with `Q` (the left kernel), so
/// the iteration cannot lock onto the zero eigenvalue.
pub fn solve_internal_mode(ops: &LinearizedOperators, opts: &ModeOptions) -> Result<InternalMode> {
    let grid = ops.q.grid().clone();
    let ap = ops.matrix(Which::Plus);
    let am = ops.matrix(Which::Minus);
    let m = am.matmul(&ap);
    let q = ops.q.v();
    let dq = {
        let mut d = q.clone();
        ap.factor()?.solve_in_place(&mut d);
        d
    };
    let q_dq = dotv(&q, &dq);
    if q_dq == 0.0 {
        return Err(Error::SpectralFailure("Q is orthogonal to the kernel of L₋L₊".into()));
    }
    let project = |x: &mut [f64]| {
        let c = dotv(&q, x) / q_dq;
        for (a, b) in x.iter_mut().zip(&dq) {
            *a -= c * b;
        }
    };
    let estimate = |x: &[f64]| -> f64 {
        let z = ap.mul_vec(x);
        let w = am.mul_vec(&z);
        dotv(&z, &w) / dotv(&z, x)
    };

    let mut x = lowest_mode(&ap, 60)?;
    project(&mut x);
    normalize(&mut x);
    let mut mu = estimate(&x);

    // Find a negative shift below −e²: for such a shift −e² is the nearest
    // eigenvalue of M (the rest of the spectrum is positive), so plain inverse
    // iteration converges to it. Shifts descend geometrically from −ω².
    let floor = {
        let p = ops.pot_plus.iter().chain(&ops.pot_minus).fold(0.0f64, |m, v| m.max(*v));
        -(p + 1.0) * (p + 1.0) * 4.0
    };
    // an unconverged start can estimate far below the floor; ignore it then
    let mut sigma = if mu < 0.0 && mu >= floor { mu } else { -ops.omega * ops.omega };
    let mut located = false;
    while sigma >= floor {
        let mut shifted = m.clone();
        shifted.shift(-sigma);
        let lu = shifted.factor()?;
        for _ in 0..40 {
            lu.solve_in_place(&mut x);
            project(&mut x);
            normalize(&mut x);
        }
        mu = estimate(&x);
        if mu < 0.0 && mu.is_finite() {
            located = true;
            break;
        }
        sigma *= 2.0;
    }
    if !located {
        return Err(Error::SpectralFailure(alloc::format!("no negative eigenvalue of L₋L₊ down to {floor:e}")));
    }

    // Rayleigh-updated refinement; the shift only follows negative estimates.
    let mut iterations = 0;
    let mut converged = false;
    let mut prev_mu = mu;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        if mu < 0.0 {
            sigma = mu * (1.0 + 1e-10);
        }
        let mut shifted = m.clone();
        shifted.shift(-sigma);
        let lu = match shifted.factor() {
            Ok(lu) => lu,
            // shift landed on an eigenvalue: the current vector is converged
            Err(Error::Singular(_)) => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        lu.solve_in_place(&mut x);
        project(&mut x);
        normalize(&mut x);
        mu = estimate(&x);
        if !mu.is_finite() {
            return Err(Error::Numeric("internal-mode iteration produced a non-finite estimate".into()));
        }
        let mx = m.mul_vec(&x);
        let res: f64 = mx.iter().zip(&x).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
        let scale = dotv(&mx, &mx).sqrt().max(mu.abs());
        if res <= opts.tol * scale || ((mu - prev_mu).abs() <= opts.tol * mu.abs() && it > 2) {
            converged = true;
            break;
        }
        prev_mu = mu;
    }
    if !(mu < 0.0) {
        return Err(Error::SpectralFailure(alloc::format!("no negative eigenvalue of L₋L₊ found (estimate {mu:e})")));
    }
    if !converged {
        return Err(Error::Numeric(alloc::format!("internal-mode iteration stagnated after {iterations} steps")));
    }
    let e = (-mu).sqrt();
    let y1v = x;
    let mut y2v = ap.mul_vec(&y1v);
    for a in &mut y2v {
        *a /= -e;
    }
    let mut y1 = Field::from_v(grid.clone(), &y1v);
    let mut y2 = Field::from_v(grid.clone(), &y2v);
    let pairing = y1.dot(&y2)?;
    if !(pairing > 0.0) {
        return Err(Error::SpectralFailure(alloc::format!("(Y₁, Y₂) = {pairing:e} is not positive")));
    }
    let s = 1.0 / (2.0 * pairing).sqrt();
    let mut sgn = s;
    if ops.q.dot(&y2)? * s > 0.0 {
        sgn = -s;
    }
    y1 = y1.scaled(sgn);
    y2 = y2.scaled(sgn);
    let r1 = {
        let a = ops.apply(Which::Plus, &y1)?;
        let d = a.zip_map(&y2, |x, y| x + e * y)?;
        (d.l2_sq() / y2.l2_sq()).sqrt() / e
    };
    let r2 = {
        let a = ops.apply(Which::Minus, &y2)?;
        let d = a.zip_map(&y1, |x, y| x - e * y)?;
        (d.l2_sq() / y1.l2_sq()).sqrt() / e
    };
    let pairing = y1.dot(&y2)?;
    let sign_q2 = ops.q.dot(&y2)?;
    Ok(InternalMode { e_omega: e, y1, y2, residuals: (r1, r2), pairing, sign_q2, iterations })
}

/// Margins of the orthogonality, sign and smallness relations of the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    /// `|(Q, Y₁)| / (‖Q‖ ‖Y₁‖)`
    pub q_y1: f64,
    /// `|(∂_ωQ, Y₂)| / (‖∂_ωQ‖ ‖Y₂‖)`
    pub dq_y2: f64,
    pub pairing: f64,
    pub sign_q2: f64,
    /// `(e/2)|(Q, Y₂)|`
    pub smallness_lhs: f64,
    /// `4|(Q⁵, Y₁)|`
    pub smallness_rhs: f64,
}

impl SpectralReport {
    pub fn q_y1_ok(&self, tol: f64) -> bool {
        self.q_y1 <= tol
    }

    pub fn dq_y2_ok(&self, tol: f64) -> bool {
        self.dq_y2 <= tol
    }

    pub fn pairing_ok(&self) -> bool {
        self.pairing > 0.0
    }

    pub fn sign_ok(&self) -> bool {
        self.sign_q2 < 0.0
    }

    pub fn smallness_ok(&self) -> bool {
        self.smallness_lhs >= self.smallness_rhs
    }

    /// `lhs/rhs − 1`; positive when the smallness inequality holds.
    pub fn smallness_margin(&self) -> f64 {
        self.smallness_lhs / self.smallness_rhs - 1.0
    }
}

pub fn check_spectral_inequalities(mode: &InternalMode, q: &RealField, dq: &RealField) -> Result<SpectralReport> {
    let nq = q.l2_sq().sqrt();
    let q_y1 = q.dot(&mode.y1)?.abs() / (nq * mode.y1.l2_sq().sqrt());
    let dq_y2 = dq.dot(&mode.y2)?.abs() / (dq.l2_sq().sqrt() * mode.y2.l2_sq().sqrt());
    let q5 = q.map(|x| x.powi(5));
    Ok(SpectralReport {
        q_y1,
        dq_y2,
        pairing: mode.y1.dot(&mode.y2)?,
        sign_q2: q.dot(&mode.y2)?,
        smallness_lhs: 0.5 * mode.e_omega * q.dot(&mode.y2)?.abs(),
        smallness_rhs: 4.0 * q5.dot(&mode.y1)?.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::{solve_ground_state, SolverConfig};

    fn setup(omega: f64) -> (GroundState, LinearizedOperators) {
        let gs = solve_ground_state(omega, Nonlinearity::CubicQuintic, &SolverConfig::default()).unwrap();
        let ops = LinearizedOperators::new(&gs);
        (gs, ops)
    }

    #[test]
    fn q_relations() {
        let (gs, ops) = setup(0.05);
        let nq = gs.q.l2_sq().sqrt();
        let lm = ops.apply(Which::Minus, &gs.q).unwrap();
        assert!(lm.l2_sq().sqrt() <= 1e-6 * nq);
        let lp = ops.apply(Which::Plus, &gs.q).unwrap();
        let target = gs.q.map(|x| -2.0 * x.powi(3) - 4.0 * x.powi(5));
        let d = &lp - &target;
        assert!(d.l2_sq().sqrt() <= 1e-6 * target.l2_sq().sqrt());
        let z = RealField::zeros(gs.grid().clone());
        assert_eq!(ops.apply(Which::Plus, &z).unwrap(), z);
    }

    #[test]
    fn mode_at_small_frequency() {
        let (gs, ops) = setup(0.05);
        let mode = solve_internal_mode(&ops, &ModeOptions::default()).unwrap();
        assert!(mode.e_omega > 0.0);
        assert!(mode.residuals.0 < 1e-6 && mode.residuals.1 < 1e-6, "{:?}", mode.residuals);
        assert!((2.0 * mode.pairing - 1.0).abs() < 1e-10);
        assert!(mode.sign_q2 < 0.0);
        assert!(mode.composed_residual(&ops).unwrap() < 1e-6);
        let dq = gs.domega_q_implicit().unwrap();
        let rep = check_spectral_inequalities(&mode, &gs.q, &dq).unwrap();
        assert!(rep.q_y1_ok(1e-8), "{rep:?}");
        assert!(rep.dq_y2_ok(1e-8));
        assert!(rep.pairing_ok() && rep.sign_ok());
    }

    #[test]
    fn smallness_inequality_holds_at_low_frequency_only() {
        for (omega, holds) in [(0.01, true), (0.02, true), (0.1, false)] {
            let (gs, ops) = setup(omega);
            let mode = solve_internal_mode(&ops, &ModeOptions::default()).unwrap();
            let dq = gs.domega_q_implicit().unwrap();
            let rep = check_spectral_inequalities(&mode, &gs.q, &dq).unwrap();
            assert_eq!(rep.smallness_ok(), holds, "omega {omega}: {rep:?}");
        }
    }

    #[test]
    fn minus_i_l_matches_parts() {
        let (gs, ops) = setup(0.05);
        let eta = RadialField::from_fn(gs.grid().clone(), |r| Complex64::new(1.0 - r, 0.3 * r) * (-r * r / 4.0).exp());
        let a = ops.apply_minus_i_cal_l(&eta).unwrap();
        let b = ops.apply_cal_l(&eta).unwrap().map(|z| Complex64::new(z.im, -z.re));
        assert_eq!(a, b);
        // 𝓛(iQ) = 0
        let iq = gs.q.to_complex().mul_i();
        let l = ops.apply_cal_l(&iq).unwrap();
        assert!(l.l2_sq().sqrt() < 1e-6 * gs.q.l2_sq().sqrt());
    }

    #[test]
    fn remainder_vanishes_at_zero_and_is_quadratic() {
        let (gs, ops) = setup(0.05);
        let g = gs.grid().clone();
        assert_eq!(ops.nonlinear_remainder(&RadialField::zeros(g.clone())).unwrap(), RadialField::zeros(g.clone()));
        let base = RadialField::from_fn(g, |r| Complex64::new(1.0, 0.5) * (-r * r / 8.0).exp());
        let s = 1e-3 / base.h1_norm();
        let a = ops.nonlinear_remainder(&base.scaled(s)).unwrap().l2_sq().sqrt();
        let b = ops.nonlinear_remainder(&base.scaled(s / 2.0)).unwrap().l2_sq().sqrt();
        assert!((3.5..=4.5).contains(&(a / b)), "{}", a / b);
    }
}
