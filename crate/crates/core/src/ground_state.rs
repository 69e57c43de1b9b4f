//! Positive radial ground states of `−ΔQ + ωQ − Q³ − Q⁵ = 0`.
//!
//! The profile is found by shooting in `Q(0)` (the ground state separates
//! profiles that cross zero from profiles that turn back up), sampled onto
//! the grid, and then polished by Newton's method on the discrete equation so
//! that the grid residual no longer depends on the ODE tolerance.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::field::{Field, RealField};
use crate::functionals::{self, FunctionalValues, Nonlinearity};
use crate::grid::{GridRef, RadialGrid, StencilOrder};
use crate::ode::{self, Control, DopriOptions};

/// Grid parameters; [`GridSpec::for_omega`] picks resolution and extent from
/// the decay rate `√ω` and the sharpening of `Q_ω` as `ω` grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub r_max: f64,
    pub n: usize,
    pub order: StencilOrder,
}

impl GridSpec {
    pub fn for_omega(omega: f64, nl: Nonlinearity) -> Self {
        let s = omega.sqrt();
        let (r_max, h) = match nl {
            Nonlinearity::CubicQuintic => ((16.0 / s).max(20.0), (0.0015 / omega).min(0.04)),
            Nonlinearity::CubicOnly => (20.0 / s, 0.02 / s),
        };
        let n = ((r_max / h).ceil() as usize).saturating_sub(1).max(RadialGrid::MIN_NODES);
        Self { r_max, n, order: StencilOrder::default() }
    }

    pub fn build(&self) -> Result<GridRef> {
        Ok(RadialGrid::with_order(self.r_max, self.n, self.order)?.shared())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Frequencies accepted in cubic-quintic mode: `(omega_min, omega_max]`.
    pub omega_min: f64,
    pub omega_max: f64,
    pub q0_min: f64,
    pub q0_max: f64,
    pub k_tol: f64,
    pub res_tol: f64,
    pub max_bisections: usize,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            omega_min: 0.0,
            omega_max: 0.25,
            q0_min: 1e-4,
            q0_max: 1e3,
            k_tol: 1e-6,
            res_tol: 1e-8,
            max_bisections: 200,
            max_newton: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub omega: f64,
    pub nonlinearity: Nonlinearity,
    pub q: RealField,
    /// `Q(0)` from shooting.
    pub q0: f64,
    /// `‖(1−Δ)^{−1/2} S_ω'(Q)‖ / ‖Q‖_{H¹}`.
    pub residual: f64,
    pub values: FunctionalValues,
    pub newton_iterations: usize,
}

impl GroundState {
    pub fn grid(&self) -> &GridRef {
        self.q.grid()
    }

    /// Names of the violated invariants (empty when healthy).
    pub fn violations(&self, cfg: &SolverConfig) -> Vec<&'static str> {
        let mut out = Vec::new();
        let s = self.q.samples();
        if s.iter().any(|&x| !(x > 0.0)) {
            out.push("positive");
        }
        if s.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            out.push("decreasing");
        }
        if self.values.k.abs() > cfg.k_tol * self.values.action.abs() {
            out.push("virial");
        }
        if !(self.residual <= cfg.res_tol) {
            out.push("residual");
        }
        out
    }

    /// `‖∇Q‖² + ω‖Q‖² − ‖Q‖₄⁴ − ‖Q‖₆⁶`, relative to `‖∇Q‖²`.
    pub fn nehari_defect(&self) -> f64 {
        let n = self.q.norms();
        let c5 = self.nonlinearity.quintic();
        (n.grad_sq + self.omega * n.l2_sq - n.l4_4 - c5 * n.l6_6) / n.grad_sq
    }

    /// Matrix of `L₊ = −Δ + ω − 3Q² − 5Q⁴` in the `v = r·Q` representation.
    pub fn l_plus_matrix(&self) -> BandMatrix<f64> {
        let c5 = self.nonlinearity.quintic();
        let d: Vec<f64> = self.q.samples().iter().map(|&x| self.omega - 3.0 * x * x - 5.0 * c5 * x.powi(4)).collect();
        self.grid().schrodinger_matrix(&d)
    }

    /// `∂_ωQ` of the discrete branch: differentiating the discrete equation in
    /// `ω` gives `L₊ ∂_ωQ = −Q` exactly.
    pub fn domega_q_implicit(&self) -> Result<RealField> {
        let lu = self.l_plus_matrix().factor()?;
        let mut rhs = self.q.v();
        for x in &mut rhs {
            *x = -*x;
        }
        lu.solve_in_place(&mut rhs);
        Ok(Field::from_v(self.grid().clone(), &rhs))
    }
}

/// Outcome of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// crossed zero: `Q(0)` too large
    Over,
    /// turned back up while positive: `Q(0)` too small
    Under,
    /// neither before the end of the interval
    Neither,
}

const R_START: f64 = 1e-4;

fn rhs(omega: f64, c5: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    move |r, y| {
        let q = y[0];
        let q2 = q * q;
        [y[1], -2.0 / r * y[1] + omega * q - q * q2 - c5 * q * q2 * q2]
    }
}

fn start(q0: f64, omega: f64, c5: f64) -> [f64; 2] {
    let c = omega * q0 - q0.powi(3) - c5 * q0.powi(5);
    [q0 + c * R_START * R_START / 6.0, c * R_START / 3.0]
}

fn shot_options() -> DopriOptions {
    DopriOptions { rtol: 1e-12, atol: 1e-300, h0: 1e-4, h_max: 0.25, max_steps: 2_000_000 }
}

fn shoot(q0: f64, omega: f64, nl: Nonlinearity) -> Result<Shot> {
    let c5 = nl.quintic();
    let r_end = 80.0 / omega.sqrt();
    let mut verdict = Shot::Neither;
    ode::integrate(rhs(omega, c5), R_START, start(q0, omega, c5), r_end, &shot_options(), |_, y| {
        if y[0] < 0.0 {
            verdict = Shot::Over;
            Control::Stop
        } else if y[1] > 0.0 {
            verdict = Shot::Under;
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    Ok(verdict)
}

fn check_omega(omega: f64, nl: Nonlinearity, cfg: &SolverConfig) -> Result<()> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Config(alloc::format!("omega must be positive (got {omega})")));
    }
    if nl == Nonlinearity::CubicQuintic && !(omega > cfg.omega_min && omega <= cfg.omega_max) {
        return Err(Error::NoGroundState(alloc::format!(
            "omega = {omega} outside the configured branch range ({}, {}]",
            cfg.omega_min,
            cfg.omega_max
        )));
    }
    Ok(())
}

/// Shooting value `Q(0)` by bracketing and bisection.
///
/// With a `hint` the bracket is searched outward from it; otherwise a
/// geometric scan runs up from `q0_min`.
pub fn shoot_q0(omega: f64, nl: Nonlinearity, cfg: &SolverConfig, hint: Option<f64>) -> Result<f64> {
    check_omega(omega, nl, cfg)?;
    let mut bracket = None;
    if let Some(h) = hint.filter(|h| *h > cfg.q0_min && *h < cfg.q0_max) {
        let (mut lo, mut hi) = (h, h);
        let mut f = 1.01;
        for _ in 0..60 {
            lo = (lo / f).max(cfg.q0_min);
            hi = (hi * f).min(cfg.q0_max);
            if shoot(lo, omega, nl)? == Shot::Under && shoot(hi, omega, nl)? == Shot::Over {
                bracket = Some((lo, hi));
                break;
            }
            f *= 1.5;
        }
    }
    if bracket.is_none() {
        let mut prev = cfg.q0_min;
        let mut prev_shot = shoot(prev, omega, nl)?;
        let mut q = prev;
        while q < cfg.q0_max {
            q = (q * 1.1).min(cfg.q0_max);
            let s = shoot(q, omega, nl)?;
            if prev_shot == Shot::Under && s == Shot::Over {
                bracket = Some((prev, q));
                break;
            }
            prev = q;
            prev_shot = s;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::NoGroundState(alloc::format!("no bracketing Q(0) in [{}, {}] at omega = {omega}", cfg.q0_min, cfg.q0_max))
    })?;
    for _ in 0..cfg.max_bisections {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(mid, omega, nl)? {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
            Shot::Neither => return Ok(mid),
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Samples the shooting profile at the grid nodes up to the point where it
/// leaves the separatrix, then continues with the linear decay
/// `Q(r_c) e^{−√ω (r − r_c)} r_c / r`.
fn sample_profile(grid: &GridRef, q0: f64, omega: f64, nl: Nonlinearity) -> Result<RealField> {
    let c5 = nl.quintic();
    let f = rhs(omega, c5);
    let mut y = start(q0, omega, c5);
    let mut r = R_START;
    let mut opts = shot_options();
    let mut out = Vec::with_capacity(grid.n());
    let floor = 1e-8 * q0;
    for &node in grid.nodes() {
        let o = ode::integrate(&f, r, y, node, &opts, |_, _| Control::Continue)?;
        r = node;
        y = o.y;
        opts.h0 = o.h_next.max(1e-6);
        if y[0] < floor || y[1] >= 0.0 {
            break;
        }
        out.push(y[0]);
    }
    let kept = out.len();
    if kept < 3 {
        return Err(Error::Numeric("shooting profile left the separatrix immediately".into()));
    }
    let (rc, qc) = (grid.nodes()[kept - 1], out[kept - 1]);
    let s = omega.sqrt();
    for &node in &grid.nodes()[kept..] {
        out.push(qc * (-s * (node - rc)).exp() * rc / node);
    }
    Field::new(grid.clone(), out)
}

/// Newton's method on the discrete equation, in place.
fn newton(q: &mut RealField, omega: f64, nl: Nonlinearity, max_iter: usize) -> Result<usize> {
    let c5 = nl.quintic();
    let grid = q.grid().clone();
    let mut prev = f64::INFINITY;
    for it in 0..max_iter {
        let g = functionals::action_gradient_with(q, omega, nl);
        let d: Vec<f64> = q.samples().iter().map(|&x| omega - 3.0 * x * x - 5.0 * c5 * x.powi(4)).collect();
        let lu = grid.schrodinger_matrix(&d).factor()?;
        let mut step = g.v();
        lu.solve_in_place(&mut step);
        let vmax = q.v().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let smax = step.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut v = q.v();
        for (a, b) in v.iter_mut().zip(&step) {
            *a -= b;
        }
        *q = Field::from_v(grid.clone(), &v);
        if !smax.is_finite() {
            return Err(Error::Numeric("Newton iterate became non-finite".into()));
        }
        let rel = smax / vmax;
        // stop at the round-off floor: tiny, or no longer contracting
        if rel <= 1e-13 || (rel <= 1e-10 && rel >= 0.5 * prev) {
            return Ok(it + 1);
        }
        prev = rel;
    }
    Err(Error::Numeric(alloc::format!("Newton did not converge in {max_iter} iterations at omega = {omega}")))
}

/// `‖(1−Δ)^{−1/2} S_ω'(u)‖ / ‖u‖_{H¹}`.
pub fn equation_residual(u: &RealField, omega: f64, nl: Nonlinearity) -> Result<f64> {
    let g = functionals::action_gradient_with(u, omega, nl);
    let grid = u.grid();
    let lu = grid.schrodinger_matrix(&alloc::vec![1.0; grid.n()]).factor()?;
    let gv = g.v();
    let w = lu.solve(&gv);
    let h = grid.spacing();
    let s: f64 = w.iter().zip(&gv).map(|(a, b)| a * b).sum();
    let norm = (4.0 * core::f64::consts::PI * h * s).max(0.0).sqrt();
    Ok(norm / u.h1_norm())
}

/// Ground state on the grid chosen by [`GridSpec::for_omega`].
pub fn solve_ground_state(omega: f64, nl: Nonlinearity, cfg: &SolverConfig) -> Result<GroundState> {
    check_omega(omega, nl, cfg)?;
    let grid = GridSpec::for_omega(omega, nl).build()?;
    solve_on_grid(&grid, omega, nl, cfg, None)
}

pub fn solve_on_grid(
    grid: &GridRef,
    omega: f64,
    nl: Nonlinearity,
    cfg: &SolverConfig,
    hint: Option<f64>,
) -> Result<GroundState> {
    let q0 = shoot_q0(omega, nl, cfg, hint)?;
    let mut q = sample_profile(grid, q0, omega, nl)?;
    let newton_iterations = newton(&mut q, omega, nl, cfg.max_newton)?;
    if q.samples().iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numeric(alloc::format!("Newton left the positive cone at omega = {omega}")));
    }
    let residual = equation_residual(&q, omega, nl)?;
    let values = FunctionalValues::from_norms_with(&q.norms(), omega, nl);
    Ok(GroundState { omega, nonlinearity: nl, q, q0, residual, values, newton_iterations })
}

/// `(Q_{ω+δ} − Q_{ω−δ}) / 2δ` with both neighbours solved on the grid of `state`.
pub fn domega_q_fd(state: &GroundState, delta: f64, cfg: &SolverConfig) -> Result<RealField> {
    if !(delta > 0.0) || delta >= state.omega {
        return Err(Error::Usage(alloc::format!("finite-difference step {delta} invalid at omega = {}", state.omega)));
    }
    let wide = SolverConfig { omega_max: f64::INFINITY, ..*cfg };
    let grid = state.grid();
    let up = solve_on_grid(grid, state.omega + delta, state.nonlinearity, &wide, Some(state.q0))?;
    let dn = solve_on_grid(grid, state.omega - delta, state.nonlinearity, &wide, Some(state.q0))?;
    Ok((&up.q - &dn.q).scaled(0.5 / delta))
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridPolicy {
    /// Each frequency on its own [`GridSpec::for_omega`] grid.
    PerOmega,
    /// All frequencies on one grid (needed for `ω`-differences of profiles).
    Shared(GridRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateBranch {
    pub omegas: Vec<f64>,
    pub states: Vec<GroundState>,
    pub mass_curve: Vec<f64>,
    /// `(ω_i, dM/dω)` by central differences at interior points.
    pub mass_slope: Vec<(f64, f64)>,
}

/// A branch solve that stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchFailure {
    pub partial: Vec<GroundState>,
    pub index: usize,
    pub error: Error,
}

impl GroundStateBranch {
    /// Assembles a branch from states sorted by increasing `ω`.
    pub fn from_states(states: Vec<GroundState>) -> Result<Self> {
        if states.len() < 3 {
            return Err(Error::Config("a branch needs at least three frequencies".into()));
        }
        let omegas: Vec<f64> = states.iter().map(|s| s.omega).collect();
        if omegas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("branch frequencies must increase".into()));
        }
        let mass_curve: Vec<f64> = states.iter().map(|s| s.values.mass).collect();
        let mass_slope = (1..states.len() - 1)
            .map(|i| (omegas[i], (mass_curve[i + 1] - mass_curve[i - 1]) / (omegas[i + 1] - omegas[i - 1])))
            .collect();
        Ok(Self { omegas, states, mass_curve, mass_slope })
    }

    /// `∂_ωQ` at an interior index from the neighbouring states (shared grid only).
    pub fn domega_q(&self, index: usize) -> Result<RealField> {
        if index == 0 || index + 1 >= self.states.len() {
            return Err(Error::Usage(alloc::format!("index {index} is not interior to the branch")));
        }
        let (a, b) = (&self.states[index - 1], &self.states[index + 1]);
        let d = b.q.zip_map(&a.q, |x, y| x - y)?;
        Ok(d.scaled(1.0 / (b.omega - a.omega)))
    }

    /// Largest `‖Q_{ω_{i+1}} − Q_{ω_i}‖_{H¹}` (shared grid only).
    pub fn max_step_distance(&self) -> Result<f64> {
        let mut m = 0.0f64;
        for w in self.states.windows(2) {
            m = m.max(crate::field::h1_distance(&w[1].q, &w[0].q)?);
        }
        Ok(m)
    }
}

/// Solves along increasing `ω`, warm-starting each shot from the previous
/// `Q(0)` extrapolated linearly.
pub fn continue_branch(
    omegas: &[f64],
    nl: Nonlinearity,
    cfg: &SolverConfig,
    policy: &GridPolicy,
) -> core::result::Result<GroundStateBranch, BranchFailure> {
    let fail = |partial: Vec<GroundState>, index: usize, error: Error| BranchFailure { partial, index, error };
    if omegas.len() < 3 {
        return Err(fail(Vec::new(), 0, Error::Config("a branch needs at least three frequencies".into())));
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(fail(Vec::new(), 0, Error::Config("branch frequencies must increase".into())));
    }
    let mut states: Vec<GroundState> = Vec::with_capacity(omegas.len());
    for (i, &omega) in omegas.iter().enumerate() {
        let hint = match states.len() {
            0 => None,
            1 => Some(states[0].q0),
            k => {
                let (a, b) = (&states[k - 2], &states[k - 1]);
                Some(b.q0 + (b.q0 - a.q0) / (b.omega - a.omega) * (omega - b.omega))
            }
        };
        let solved = check_omega(omega, nl, cfg).and_then(|_| match policy {
            GridPolicy::PerOmega => {
                let grid = GridSpec::for_omega(omega, nl).build()?;
                solve_on_grid(&grid, omega, nl, cfg, hint)
            }
            GridPolicy::Shared(grid) => solve_on_grid(grid, omega, nl, cfg, hint),
        });
        match solved {
            Ok(s) => states.push(s),
            Err(e) => return Err(fail(states, i, e)),
        }
    }
    GroundStateBranch::from_states(states).map_err(|e| fail(Vec::new(), 0, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_soliton_center_and_mass() {
        let gs = solve_ground_state(1.0, Nonlinearity::CubicOnly, &SolverConfig::default()).unwrap();
        assert!((gs.q0 - 4.3374).abs() < 4.3374e-3, "{}", gs.q0);
        let m2 = gs.q.l2_sq();
        // independent adaptive-RK shooting gives Q(0) = 4.33738768, ‖Q‖² = 18.8972513
        assert!((m2 - 18.8972513).abs() < 18.9e-3, "{m2}");
        assert!(gs.residual < 1e-8);
    }

    #[test]
    fn quintic_state_at_small_frequency() {
        let cfg = SolverConfig::default();
        let gs = solve_ground_state(0.05, Nonlinearity::CubicQuintic, &cfg).unwrap();
        assert!(gs.violations(&cfg).is_empty(), "{:?}", gs.violations(&cfg));
        assert!(gs.values.k.abs() <= 1e-6 * gs.values.action);
        assert!((gs.values.action - gs.values.j).abs() <= 1e-8 * gs.values.action);
        assert!(gs.nehari_defect().abs() < 1e-8);
    }

    #[test]
    fn out_of_range_frequency() {
        let e = solve_ground_state(1e6, Nonlinearity::CubicQuintic, &SolverConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NoGroundState(_)));
        assert!(matches!(solve_ground_state(-1.0, Nonlinearity::CubicQuintic, &SolverConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn short_branch_rejected() {
        let e = continue_branch(&[0.1], Nonlinearity::CubicQuintic, &SolverConfig::default(), &GridPolicy::PerOmega).unwrap_err();
        assert!(matches!(e.error, Error::Config(_)));
    }
}
