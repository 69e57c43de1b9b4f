//! Symplectic decomposition of a solution near the orbit of `Q_ω`:
//!
//! ```text
//! e^{−iθ}ψ = Q + η,   η = λ₊𝓨₊ + λ₋𝓨₋ + b ∂_ωQ + Γ
//! ```
//!
//! with the phase chosen so that the `iQ` coefficient vanishes, the
//! linearized energy norm `‖η‖_E`, the distance function `d_ω`, and the
//! one-pass monitor.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::cutoff::chi;
use crate::error::{Error, Result};
use crate::field::{RadialField, RealField};
use crate::functionals::{dist_to_orbit, energy, mass};
use crate::ground_state::GroundState;
use crate::linearized::{solve_internal_mode, InternalMode, LinearizedOperators, ModeOptions};

/// `Ω(f, g) = Im ∫ f ḡ`.
pub fn symplectic_form(f: &RadialField, g: &RadialField) -> Result<f64> {
    Ok(f.inner(g)?.im)
}

/// Everything the decomposition needs about one point of the branch.
#[derive(Debug, Clone)]
pub struct OrbitContext {
    pub omega: f64,
    pub q: RealField,
    pub dq: RealField,
    pub mode: InternalMode,
    pub ops: LinearizedOperators,
    pub mass_q: f64,
    pub energy_q: f64,
    /// `(Q, ∂_ωQ)`, negative on the branch.
    pub q_dq: f64,
    y_plus: RadialField,
    y_minus: RadialField,
    iq: RadialField,
    dq_c: RadialField,
}

impl OrbitContext {
    /// Solves for the internal mode and `∂_ωQ = −L₊⁻¹Q`.
    pub fn new(gs: &GroundState) -> Result<Self> {
        let ops = LinearizedOperators::new(gs);
        let mode = solve_internal_mode(&ops, &ModeOptions::default())?;
        let dq = gs.domega_q_implicit()?;
        Self::from_parts(gs, mode, dq)
    }

    pub fn from_parts(gs: &GroundState, mode: InternalMode, dq: RealField) -> Result<Self> {
        let ops = LinearizedOperators::new(gs);
        gs.q.check_grid(&dq)?;
        gs.q.check_grid(&mode.y1)?;
        let q_dq = gs.q.dot(&dq)?;
        if !(q_dq < 0.0) {
            return Err(Error::SpectralFailure(alloc::format!("(Q, dQ/domega) = {q_dq:e} is not negative")));
        }
        Ok(Self {
            omega: gs.omega,
            q: gs.q.clone(),
            y_plus: mode.y_plus(),
            y_minus: mode.y_minus(),
            iq: gs.q.to_complex().mul_i(),
            dq_c: dq.to_complex(),
            dq,
            mode,
            ops,
            mass_q: gs.values.mass,
            energy_q: gs.values.energy,
            q_dq,
        })
    }

    pub fn e_omega(&self) -> f64 {
        self.mode.e_omega
    }

    pub fn y_plus(&self) -> &RadialField {
        &self.y_plus
    }

    pub fn y_minus(&self) -> &RadialField {
        &self.y_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationConfig {
    /// Proxy for `δ_E(ω)`, in `‖·‖_E` units.
    pub delta_e: f64,
    /// Switching radius of the modified distance `d̃_ω`.
    pub gamma_tilde: f64,
    /// Allowed relative mass mismatch `|M(ψ) − M(Q)|/M(Q)`.
    pub mass_tol: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self { delta_e: 0.1, gamma_tilde: 0.05, mass_tol: 1e-8 }
    }
}

impl ModulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_e > self.gamma_tilde && self.gamma_tilde > 0.0) {
            return crate::error::config(alloc::format!(
                "need delta_E > gamma_tilde > 0 (got {} and {})",
                self.delta_e,
                self.gamma_tilde
            ));
        }
        if !(self.mass_tol >= 0.0) {
            return crate::error::config("mass tolerance must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationState {
    pub t: f64,
    pub theta: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `iQ` coefficient; zero up to rounding by the choice of `θ`.
    pub a: f64,
    pub b: f64,
    pub gamma: RadialField,
    pub eta: RadialField,
    /// `⟨𝓛Γ, Γ⟩`
    pub gamma_form: f64,
    pub energy_norm: f64,
    pub c_omega: f64,
    pub d_omega: f64,
}

/// Phase `θ` with `Ω(e^{−iθ}ψ, ∂_ωQ) = 0` and `(e^{−iθ}ψ, ∂_ωQ) < 0`.
pub fn fix_gauge(psi: &RadialField, dq: &RealField) -> Result<f64> {
    let p = psi.inner(dq)?;
    let scale = (psi.l2_sq() * dq.l2_sq()).sqrt();
    if !(p.norm() > 1e-14 * scale) {
        return Err(Error::GaugeDegenerate(p.norm() / scale));
    }
    Ok((-p).arg())
}

/// Decomposes `ψ` at time `t`. The mass of `ψ` must match `M(Q)` to
/// `cfg.mass_tol`.
pub fn decompose(t: f64, psi: &RadialField, ctx: &OrbitContext, cfg: &ModulationConfig) -> Result<ModulationState> {
    cfg.validate()?;
    ctx.q.check_grid(psi)?;
    let m = mass(psi);
    if !((m - ctx.mass_q).abs() <= cfg.mass_tol * ctx.mass_q) {
        return Err(Error::Usage(alloc::format!(
            "mass {m} differs from M(Q) = {} beyond tolerance; project onto the threshold first",
            ctx.mass_q
        )));
    }
    let theta = fix_gauge(psi, &ctx.dq)?;
    let eta = psi.rotated(-theta).zip_map(&ctx.q, |z, q| z - q)?;
    let lambda_plus = symplectic_form(&eta, &ctx.y_minus)?;
    let lambda_minus = -symplectic_form(&eta, &ctx.y_plus)?;
    let a = symplectic_form(&eta, &ctx.dq_c)? / ctx.q_dq;
    let b = -symplectic_form(&eta, &ctx.iq)? / ctx.q_dq;
    let mut gamma = eta.clone();
    gamma.axpy(Complex64::new(-lambda_plus, 0.0), &ctx.y_plus)?;
    gamma.axpy(Complex64::new(-lambda_minus, 0.0), &ctx.y_minus)?;
    gamma.axpy(Complex64::new(-b, 0.0), &ctx.dq_c)?;
    let gamma_form = ctx.ops.quadratic_form(&gamma)?;
    let e = ctx.e_omega();
    let en2 = 0.5 * e * (lambda_plus * lambda_plus + lambda_minus * lambda_minus) + 0.5 * gamma_form;
    let energy_norm = en2.max(0.0).sqrt();
    let s = lambda_plus + lambda_minus;
    let c_omega = energy(psi) - ctx.energy_q + 0.5 * e * s * s - en2;
    let d2 = en2 + chi(energy_norm / (2.0 * cfg.delta_e)) * c_omega;
    Ok(ModulationState {
        t,
        theta,
        lambda_plus,
        lambda_minus,
        lambda1: 0.5 * s,
        lambda2: 0.5 * (lambda_plus - lambda_minus),
        a,
        b,
        gamma,
        eta,
        gamma_form,
        energy_norm,
        c_omega,
        d_omega: d2.max(0.0).sqrt(),
    })
}

impl ModulationState {
    /// `e^{iθ}(Q + λ₊𝓨₊ + λ₋𝓨₋ + b∂_ωQ + Γ)`
    pub fn reconstruct(&self, ctx: &OrbitContext) -> Result<RadialField> {
        let mut w = self.gamma.clone();
        w.axpy(Complex64::new(1.0, 0.0), &ctx.q.to_complex())?;
        w.axpy(Complex64::new(self.lambda_plus, 0.0), &ctx.y_plus)?;
        w.axpy(Complex64::new(self.lambda_minus, 0.0), &ctx.y_minus)?;
        w.axpy(Complex64::new(self.b, 0.0), &ctx.dq_c)?;
        Ok(w.rotated(self.theta))
    }

    /// `|Ω(Γ, X)| / (‖Γ‖ ‖X‖)` for `X = 𝓨₊, 𝓨₋, iQ, ∂_ωQ`.
    pub fn orthogonality_defects(&self, ctx: &OrbitContext) -> Result<[f64; 4]> {
        let ng = self.gamma.l2_sq().sqrt();
        let mut out = [0.0; 4];
        if ng == 0.0 {
            return Ok(out);
        }
        for (o, x) in out.iter_mut().zip([&ctx.y_plus, &ctx.y_minus, &ctx.iq, &ctx.dq_c]) {
            *o = symplectic_form(&self.gamma, x)?.abs() / (ng * x.l2_sq().sqrt());
        }
        Ok(out)
    }

    /// `(e/2)(λ₊² + λ₋²) + ½⟨𝓛Γ,Γ⟩` from the stored parts.
    pub fn energy_norm_sq_from_parts(&self, e_omega: f64) -> f64 {
        0.5 * e_omega * (self.lambda_plus * self.lambda_plus + self.lambda_minus * self.lambda_minus)
            + 0.5 * self.gamma_form
    }

    /// `‖Γ‖_{H¹}`
    pub fn gamma_h1(&self) -> f64 {
        self.gamma.h1_norm()
    }
}

/// `|C_ω| / ‖η‖_E²`, or 0 at `η = 0`.
pub fn energy_norm_expansion_check(state: &ModulationState) -> f64 {
    let en2 = state.energy_norm * state.energy_norm;
    if en2 == 0.0 {
        0.0
    } else {
        state.c_omega.abs() / en2
    }
}

/// `ψ_t = i(Δψ + |ψ|²ψ + c₅|ψ|⁴ψ)` on the grid.
pub fn time_derivative(psi: &RadialField, c5: f64) -> RadialField {
    let lap = psi.laplacian();
    let mut out = lap;
    for (o, &z) in out.samples_mut().iter_mut().zip(psi.samples()) {
        let a = z.norm_sqr();
        let w = *o + z * (a + c5 * a * a);
        *o = Complex64::new(-w.im, w.re);
    }
    out
}

/// Instantaneous rates of the modulation parameters along the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationRates {
    pub dtheta_dt: f64,
    pub dlambda_plus_dt: f64,
    pub dlambda_minus_dt: f64,
}

impl ModulationRates {
    /// `|θ' − ω|`
    pub fn phase_residual(&self, omega: f64) -> f64 {
        (self.dtheta_dt - omega).abs()
    }

    /// `|λ₊' − eλ₊|`
    pub fn unstable_residual(&self, state: &ModulationState, e_omega: f64) -> f64 {
        (self.dlambda_plus_dt - e_omega * state.lambda_plus).abs()
    }

    /// `|λ₋' + eλ₋|`
    pub fn stable_residual(&self, state: &ModulationState, e_omega: f64) -> f64 {
        (self.dlambda_minus_dt + e_omega * state.lambda_minus).abs()
    }
}

/// Differentiates the gauge condition and `λ_±` along `ψ_t`:
/// `θ' = Ω(e^{−iθ}ψ_t, ∂_ωQ) / (e^{−iθ}ψ, ∂_ωQ)`,
/// `λ₊' = Ω(e^{−iθ}(ψ_t − iθ'ψ), 𝓨₋)`, `λ₋' = −Ω(·, 𝓨₊)`.
pub fn modulation_rates(psi: &RadialField, state: &ModulationState, ctx: &OrbitContext) -> Result<ModulationRates> {
    let c5 = ctx.ops.nonlinearity.quintic();
    let rot = psi.rotated(-state.theta);
    let rot_t = time_derivative(psi, c5).rotated(-state.theta);
    let denom = rot.dot(&ctx.dq)?;
    let dtheta_dt = symplectic_form(&rot_t, &ctx.dq_c)? / denom;
    let mut w = rot_t;
    w.axpy(Complex64::new(0.0, -dtheta_dt), &rot)?;
    Ok(ModulationRates {
        dtheta_dt,
        dlambda_plus_dt: symplectic_form(&w, &ctx.y_minus)?,
        dlambda_minus_dt: -symplectic_form(&w, &ctx.y_plus)?,
    })
}

/// Multiplies `ψ` by the real constant that sets its mass to `target`.
pub fn match_mass(psi: &RadialField, target: f64) -> Result<RadialField> {
    let m = mass(psi);
    if !(m > 0.0) {
        return Err(Error::Input("cannot rescale a field of zero mass".into()));
    }
    Ok(psi.scaled((target / m).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnePass {
    Stayed,
    Exited,
    /// Came back below `R` after exceeding `R + R^{3/2}`.
    ReturnViolation,
}

/// One-pass verdict of a time-ordered distance series for radius `r`.
pub fn one_pass_monitor(series: &[f64], r: f64) -> Result<OnePass> {
    if series.is_empty() {
        return Err(Error::Input("empty distance series".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Input(alloc::format!("one-pass radius {r} must be positive")));
    }
    let exit = r + r * r.sqrt();
    match series.iter().position(|&d| d >= exit) {
        None => Ok(OnePass::Stayed),
        Some(k) if series[k..].iter().any(|&d| d < r) => Ok(OnePass::ReturnViolation),
        Some(_) => Ok(OnePass::Exited),
    }
}

/// Modified distance `d̃_ω` along one trajectory: `d_ω` while it is below
/// `γ̃`, otherwise the `H¹` orbit distance scaled by the median of
/// `d_ω / dist` seen so far in the matching region.
#[derive(Debug, Clone, Default)]
pub struct DistanceTracker {
    gamma_tilde: f64,
    ratios: Vec<f64>,
}

impl DistanceTracker {
    pub fn new(gamma_tilde: f64) -> Self {
        Self { gamma_tilde, ratios: Vec::new() }
    }

    pub fn ratio(&self) -> Option<f64> {
        if self.ratios.is_empty() {
            return None;
        }
        let mut r = self.ratios.clone();
        r.sort_by(f64::total_cmp);
        let n = r.len();
        Some(if n % 2 == 1 { r[n / 2] } else { 0.5 * (r[n / 2 - 1] + r[n / 2]) })
    }

    /// `d` is `d_ω` when the decomposition succeeded.
    pub fn push(&mut self, d: Option<f64>, dist: f64) -> f64 {
        match d {
            Some(d) if d <= self.gamma_tilde => {
                if dist > 0.0 && d > 0.0 {
                    self.ratios.push(d / dist);
                }
                d
            }
            Some(d) => self.ratio().map_or(d, |k| k * dist),
            None => self.ratio().map_or(dist, |k| k * dist),
        }
    }
}

/// `d̃_ω` for one snapshot, without history: `d_ω` if the decomposition is
/// available and below `γ̃`, else the `H¹` orbit distance.
pub fn modified_distance(psi: &RadialField, ctx: &OrbitContext, cfg: &ModulationConfig) -> Result<f64> {
    let dist = dist_to_orbit(psi, &ctx.q)?;
    match decompose(0.0, psi, ctx, cfg) {
        Ok(s) if s.d_omega <= cfg.gamma_tilde => Ok(s.d_omega),
        Ok(_) | Err(Error::GaugeDegenerate(_)) => Ok(dist),
        Err(e) => Err(e),
    }
}
