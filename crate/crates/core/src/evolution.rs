//! Time integration of `iψ_t + Δψ + |ψ|²ψ + |ψ|⁴ψ = 0` for radial data.
//!
//! The scheme is the implicit midpoint rule on `v = r·ψ`:
//!
//! ```text
//! (2/dt − iD₂) m = (2/dt) v + i f(m),   v⁺ = 2m − v
//! ```
//!
//! solved by fixed-point iteration with the banded factorization of the
//! left-hand side cached per step size. `D₂` is symmetric, so the discrete
//! mass is conserved up to the fixed-point tolerance. Negative times are
//! handled through `ψ(t) ↦ ψ̄(−t)`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::banded::BandLu;
use crate::cutoff::VirialWeight;
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::functionals::{dist_to_orbit, FunctionalValues, Nonlinearity};
use crate::grid::GridRef;
use crate::modulation::{decompose, DistanceTracker, ModulationConfig, OrbitContext};

/// Complex absorbing layer on the outer part of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sponge {
    /// Damping rate at `r_max`.
    pub strength: f64,
    /// Fraction of `[0, r_max]` covered by the layer.
    pub width: f64,
}

impl Default for Sponge {
    fn default() -> Self {
        Self { strength: 5.0, width: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveConfig {
    pub dt0: f64,
    /// Final time; negative integrates backward.
    pub t_end: f64,
    /// `dt ≤ adapt / ‖∇ψ‖²` when set.
    pub adapt: Option<f64>,
    pub dt_floor: f64,
    /// Blow-up trip: `‖∇ψ‖² >` this factor times its initial value.
    pub grad_blowup_factor: f64,
    /// Third blow-up trip: once `‖∇ψ‖²` has grown tenfold, the collapse
    /// length `‖ψ‖_∞^{−2}` falling below this many grid spacings.
    pub resolution_trip: Option<f64>,
    pub sponge: Option<Sponge>,
    pub record_every: usize,
    pub fixed_point_tol: f64,
    pub max_fixed_point: usize,
    pub nonlinearity: Nonlinearity,
    /// Radius `R` of the localized virial diagnostics.
    pub virial_radius: Option<f64>,
    pub modulation: ModulationConfig,
    /// Keep the field every this many records.
    pub checkpoint_every: Option<usize>,
    /// Stop once the scatter proxy holds (sponge runs only).
    pub stop_on_scatter: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-3,
            t_end: 1.0,
            adapt: None,
            dt_floor: 1e-9,
            grad_blowup_factor: 1e3,
            resolution_trip: Some(1.0),
            sponge: None,
            record_every: 10,
            fixed_point_tol: 1e-13,
            max_fixed_point: 50,
            nonlinearity: Nonlinearity::CubicQuintic,
            virial_radius: None,
            modulation: ModulationConfig::default(),
            checkpoint_every: None,
            stop_on_scatter: true,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return crate::error::config(alloc::format!("dt0 = {} must be positive", self.dt0));
        }
        if !self.t_end.is_finite() {
            return crate::error::config("t_end must be finite");
        }
        if !(self.dt_floor > 0.0 && self.dt_floor < self.dt0) {
            return crate::error::config(alloc::format!("need 0 < dt_floor < dt0 (got {})", self.dt_floor));
        }
        if !(self.grad_blowup_factor > 1.0) {
            return crate::error::config("gradient blow-up factor must exceed 1");
        }
        if matches!(self.resolution_trip, Some(k) if !(k > 0.0)) {
            return crate::error::config("resolution trip must be positive");
        }
        if self.record_every == 0 {
            return crate::error::config("record_every must be at least 1");
        }
        if matches!(self.adapt, Some(c) if !(c > 0.0)) {
            return crate::error::config("adaptive constant must be positive");
        }
        if let Some(s) = self.sponge {
            if !(s.strength >= 0.0 && s.width > 0.0 && s.width < 1.0) {
                return crate::error::config("sponge needs strength >= 0 and width in (0, 1)");
            }
        }
        if !(self.fixed_point_tol > 0.0) || self.max_fixed_point == 0 {
            return crate::error::config("fixed-point tolerance and iteration cap must be positive");
        }
        if matches!(self.virial_radius, Some(r) if !(r > 0.0)) {
            return crate::error::config("virial radius must be positive");
        }
        self.modulation.validate()
    }
}

/// One implicit-midpoint step size with its cached factorization.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridRef,
    dt: f64,
    c5: f64,
    lu: BandLu<Complex64>,
    inv_r2: Vec<f64>,
    tol: f64,
    max_iter: usize,
}

impl Stepper {
    pub fn new(grid: &GridRef, dt: f64, nl: Nonlinearity, tol: f64, max_iter: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Usage(alloc::format!("stepper needs dt > 0 (got {dt}); reverse time by conjugation")));
        }
        let mut a = grid.second_difference().map(|x| Complex64::new(0.0, -x));
        a.shift(Complex64::new(2.0 / dt, 0.0));
        let inv_r2 = grid.nodes().iter().map(|r| 1.0 / (r * r)).collect();
        Ok(Self { grid: grid.clone(), dt, c5: nl.quintic(), lu: a.factor()?, inv_r2, tol, max_iter })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `v = r·ψ` by one step; returns the number of fixed-point
    /// iterations used.
    pub fn step_v(&self, v: &mut [Complex64]) -> Result<usize> {
        let n = v.len();
        let s = 2.0 / self.dt;
        let base: Vec<Complex64> = v.iter().map(|&x| x * s).collect();
        let mut m: Vec<Complex64> = v.to_vec();
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for it in 1..=self.max_iter {
            for i in 0..n {
                let a = m[i].norm_sqr() * self.inv_r2[i];
                let f = m[i] * (a + self.c5 * a * a);
                next[i] = base[i] + Complex64::new(-f.im, f.re);
            }
            self.lu.solve_in_place(&mut next);
            let mut diff = 0.0f64;
            let mut size = 0.0f64;
            for i in 0..n {
                diff = diff.max((next[i] - m[i]).norm());
                size = size.max(next[i].norm());
            }
            core::mem::swap(&mut m, &mut next);
            if !(diff.is_finite() && size.is_finite()) {
                return Err(Error::StepReject { dt: self.dt });
            }
            if diff <= self.tol * size {
                for i in 0..n {
                    v[i] = m[i] * 2.0 - v[i];
                }
                return Ok(it);
            }
        }
        Err(Error::StepReject { dt: self.dt })
    }

    /// One step of the field.
    pub fn step(&self, psi: &RadialField) -> Result<RadialField> {
        psi.check_grid(&RadialField::zeros(self.grid.clone()))?;
        let mut v = psi.v();
        self.step_v(&mut v)?;
        Ok(RadialField::from_v(self.grid.clone(), &v))
    }
}

/// One step of size `dt` (negative reverses time by conjugation).
pub fn step(psi: &RadialField, dt: f64, nl: Nonlinearity) -> Result<RadialField> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::Usage(alloc::format!("invalid step {dt}")));
    }
    let cfg = EvolveConfig::default();
    let st = Stepper::new(psi.grid(), dt.abs(), nl, cfg.fixed_point_tol, cfg.max_fixed_point)?;
    if dt > 0.0 {
        st.step(psi)
    } else {
        Ok(st.step(&psi.conj())?.conj())
    }
}

/// `(y_R, y_R', A_R)` of the localized virial identity `y_R'' = 8K + A_R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizedVirial {
    pub y: f64,
    pub y_prime: f64,
    pub a_r: f64,
    /// The `−R⁻²∫Δ²φ|ψ|²` part of `A_R`.
    pub bilaplacian_term: f64,
}

/// `y_R = ∫R²φ(r/R)|ψ|²`, `y_R' = 2R Im∫φ'(r/R) ∂_rψ ψ̄` and
/// `A_R = 4∫(φ''−2)|∂_rψ|² − ∫(Δφ−6)|ψ|⁴ − (4/3)∫(Δφ−6)|ψ|⁶ − R⁻²∫Δ²φ|ψ|²`,
/// all weights evaluated at `r/R`.
pub fn localized_virial(psi: &RadialField, r: f64, weight: &VirialWeight, nl: Nonlinearity) -> Result<LocalizedVirial> {
    let grid = psi.grid();
    if !(r > 0.0) || weight.support() * r > grid.r_max() {
        return Err(Error::Usage(alloc::format!(
            "virial radius {r} needs {}·R <= r_max = {}",
            weight.support(),
            grid.r_max()
        )));
    }
    let c5 = nl.quintic();
    let dr = psi.dr();
    let (mut y, mut yp, mut a, mut bl) = (0.0, 0.0, 0.0, 0.0);
    for (((&u, &du), &x), &w) in psi.samples().iter().zip(dr.samples()).zip(grid.nodes()).zip(grid.weights()) {
        let s = x / r;
        let d = weight.derivatives(s);
        let a2 = u.norm_sqr();
        y += w * r * r * d[0] * a2;
        yp += w * 2.0 * r * d[1] * (du * u.conj()).im;
        if s > 1.0 {
            let lap = d[2] + 2.0 * d[1] / s;
            let bilap = d[4] + 4.0 * d[3] / s;
            a += w
                * (4.0 * (d[2] - 2.0) * du.norm_sqr()
                    - (lap - 6.0) * a2 * a2
                    - 4.0 / 3.0 * c5 * (lap - 6.0) * a2 * a2 * a2);
            bl -= w * bilap * a2 / (r * r);
        }
    }
    Ok(LocalizedVirial { y, y_prime: yp, a_r: a + bl, bilaplacian_term: bl })
}

/// `∫|x|²|ψ|²`
pub fn variance(psi: &RadialField) -> f64 {
    let g = psi.grid();
    psi.samples().iter().zip(g.nodes()).zip(g.weights()).map(|((u, r), w)| w * r * r * u.norm_sqr()).sum()
}

/// `Im ∫ x·∇ψ ψ̄ = Im ∫ r ∂_rψ ψ̄`
pub fn momentum(psi: &RadialField) -> f64 {
    let g = psi.grid();
    let dr = psi.dr();
    psi.samples()
        .iter()
        .zip(dr.samples())
        .zip(g.nodes())
        .zip(g.weights())
        .map(|(((u, du), r), w)| w * r * (du * u.conj()).im)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: f64,
    pub k: f64,
    pub grad_sq: f64,
    pub l4_4: f64,
    pub l6_6: f64,
    pub variance: f64,
    pub momentum: f64,
    pub virial: Option<LocalizedVirial>,
    /// `d_ω` when the decomposition applies.
    pub d_omega: Option<f64>,
    /// `dist_{H¹}(ψ, orbit of Q)`.
    pub dist_orbit: Option<f64>,
    /// Modified distance `d̃_ω`.
    pub d_tilde: Option<f64>,
    /// `λ₁` when the decomposition applies.
    pub lambda1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Completed,
    BlowupDetected { t_est: f64 },
    ScatterProxy,
    Undecided,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Completed => "Completed",
            Verdict::BlowupDetected { .. } => "BlowupDetected",
            Verdict::ScatterProxy => "ScatterProxy",
            Verdict::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub rows: Vec<Diagnostics>,
    pub verdict: Verdict,
    /// Why the run ended.
    pub reason: alloc::string::String,
    pub checkpoints: Vec<(f64, RadialField)>,
    pub final_state: RadialField,
    pub steps: usize,
    pub sponge: bool,
}

fn diagnostics(
    t: f64,
    dt: f64,
    psi: &RadialField,
    cfg: &EvolveConfig,
    orbit: Option<&OrbitContext>,
    tracker: &mut DistanceTracker,
    weight: &VirialWeight,
) -> Result<Diagnostics> {
    let n = psi.norms();
    let f = FunctionalValues::from_norms_with(&n, 0.0, cfg.nonlinearity);
    let virial = match cfg.virial_radius {
        Some(r) => Some(localized_virial(psi, r, weight, cfg.nonlinearity)?),
        None => None,
    };
    let (mut d_omega, mut dist_orbit, mut d_tilde, mut lambda1) = (None, None, None, None);
    if let Some(ctx) = orbit {
        let dist = dist_to_orbit(psi, &ctx.q)?;
        let dec = match decompose(t, psi, ctx, &cfg.modulation) {
            Ok(s) => Some(s),
            Err(Error::GaugeDegenerate(_)) | Err(Error::Usage(_)) => None,
            Err(e) => return Err(e),
        };
        d_omega = dec.as_ref().map(|s| s.d_omega);
        lambda1 = dec.as_ref().map(|s| s.lambda1);
        dist_orbit = Some(dist);
        d_tilde = Some(tracker.push(d_omega, dist));
    }
    Ok(Diagnostics {
        t,
        dt,
        mass: f.mass,
        energy: f.energy,
        k: f.k,
        grad_sq: n.grad_sq,
        l4_4: n.l4_4,
        l6_6: n.l6_6,
        variance: variance(psi),
        momentum: momentum(psi),
        virial,
        d_omega,
        dist_orbit,
        d_tilde,
        lambda1,
    })
}

fn sponge_mask(grid: &GridRef, s: &Sponge, dt: f64) -> Vec<f64> {
    let r_max = grid.r_max();
    let r0 = (1.0 - s.width) * r_max;
    grid.nodes()
        .iter()
        .map(|&r| {
            if r <= r0 {
                1.0
            } else {
                let x = (r - r0) / (r_max - r0);
                (-s.strength * dt * x * x).exp()
            }
        })
        .collect()
}

/// Blow-up time estimate from the last rows: `1/‖∇ψ‖²` extrapolated
/// linearly to zero.
fn blowup_time(rows: &[(f64, f64)]) -> f64 {
    let k = rows.len();
    if k < 2 {
        return rows.last().map_or(0.0, |r| r.0);
    }
    let (t0, g0) = rows[k - 2];
    let (t1, g1) = rows[k - 1];
    let (a, b) = (1.0 / g0, 1.0 / g1);
    if b < a && t1 != t0 {
        t1 + b * (t1 - t0) / (a - b)
    } else {
        t1
    }
}

/// Integrates `ψ0` to `cfg.t_end`. With an orbit context the rows carry
/// `d_ω`, the orbit distance and `d̃_ω`.
pub fn evolve(psi0: &RadialField, cfg: &EvolveConfig, orbit: Option<&OrbitContext>) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if !psi0.is_finite() {
        return Err(Error::Input("initial field is not finite".into()));
    }
    if let Some(ctx) = orbit {
        ctx.q.check_grid(psi0)?;
    }
    let backward = cfg.t_end < 0.0;
    let sign = if backward { -1.0 } else { 1.0 };
    let horizon = cfg.t_end.abs();
    let grid = psi0.grid().clone();
    let weight = VirialWeight::default();
    let mut tracker = DistanceTracker::new(cfg.modulation.gamma_tilde);
    let physical = |v: &[Complex64]| {
        let f = RadialField::from_v(grid.clone(), v);
        if backward {
            f.conj()
        } else {
            f
        }
    };

    let mut v = if backward { psi0.conj().v() } else { psi0.v() };
    let mut steppers: Vec<Option<Stepper>> = Vec::new();
    let mut tail: Option<Stepper> = None;
    let mut t = 0.0f64;
    let mut steps = 0usize;
    let mut rows = Vec::new();
    let mut times = Vec::new();
    let mut checkpoints = Vec::new();
    let mut grad_hist: Vec<(f64, f64)> = Vec::new();

    let first = diagnostics(0.0, cfg.dt0, psi0, cfg, orbit, &mut tracker, &weight)?;
    let grad0 = first.grad_sq.max(f64::MIN_POSITIVE);
    let mut l4_max = first.l4_4;
    times.push(0.0);
    rows.push(first);
    if cfg.checkpoint_every.is_some() {
        checkpoints.push((0.0, psi0.clone()));
    }
    let mut increases = 0usize;
    let mut last_grad = grad0;
    let mut reject_level = 0u32;
    let mut calm_steps = 0usize;
    let mut verdict = Verdict::Completed;
    let mut reason = alloc::string::String::from("reached t_end");

    while t < horizon * (1.0 - 1e-14) {
        // step size: dt0 / 2^k with k from the gradient and recent rejections
        let mut level = reject_level;
        if let Some(c) = cfg.adapt {
            let target = c / last_grad;
            if target < cfg.dt0 {
                level = level.max((cfg.dt0 / target).log2().ceil() as u32);
            }
        }
        let dt_level = cfg.dt0 / (1u64 << level.min(62)) as f64;
        if dt_level < cfg.dt_floor {
            let grew = last_grad > grad0;
            verdict = if grew { Verdict::BlowupDetected { t_est: sign * blowup_time(&grad_hist) } } else { Verdict::Undecided };
            reason = alloc::format!("step size fell below dt_floor = {:e}", cfg.dt_floor);
            break;
        }
        let remaining = horizon - t;
        let result = if remaining < dt_level * (1.0 - 1e-12) {
            if tail.as_ref().map_or(true, |s| s.dt() != remaining) {
                tail = Some(Stepper::new(&grid, remaining, cfg.nonlinearity, cfg.fixed_point_tol, cfg.max_fixed_point)?);
            }
            tail.as_ref().unwrap().step_v(&mut v).map(|_| remaining)
        } else {
            let idx = level as usize;
            if steppers.len() <= idx {
                steppers.resize(idx + 1, None);
            }
            if steppers[idx].is_none() {
                steppers[idx] =
                    Some(Stepper::new(&grid, dt_level, cfg.nonlinearity, cfg.fixed_point_tol, cfg.max_fixed_point)?);
            }
            let saved = v.clone();
            match steppers[idx].as_ref().unwrap().step_v(&mut v) {
                Ok(_) => Ok(dt_level),
                Err(e) => {
                    v = saved;
                    Err(e)
                }
            }
        };
        let dt = match result {
            Ok(dt) => dt,
            Err(Error::StepReject { .. }) => {
                reject_level = level + 1;
                calm_steps = 0;
                continue;
            }
            Err(e) => return Err(e),
        };
        calm_steps += 1;
        if reject_level > 0 && calm_steps >= 20 {
            reject_level -= 1;
            calm_steps = 0;
        }
        if let Some(s) = &cfg.sponge {
            let mask = sponge_mask(&grid, s, dt);
            for (x, m) in v.iter_mut().zip(&mask) {
                *x *= *m;
            }
        }
        t += dt;
        steps += 1;

        let grad = RadialField::from_v(grid.clone(), &v).grad_sq();
        if !grad.is_finite() {
            verdict = Verdict::BlowupDetected { t_est: sign * t };
            reason = "field became non-finite".into();
            break;
        }
        increases = if grad > last_grad { increases + 1 } else { 0 };
        last_grad = grad;
        grad_hist.push((t, grad));
        if grad_hist.len() > 8 {
            grad_hist.remove(0);
        }
        let mut tripped = grad > cfg.grad_blowup_factor * grad0 && increases >= 3;
        let mut unresolved = false;
        if let Some(kappa) = cfg.resolution_trip {
            if !tripped && grad > 10.0 * grad0 {
                let peak = v.iter().zip(grid.nodes()).map(|(z, r)| z.norm_sqr() / (r * r)).fold(0.0, f64::max);
                unresolved = peak * kappa * grid.spacing() > 1.0;
                tripped = unresolved;
            }
        }

        if steps % cfg.record_every == 0 || tripped || t >= horizon * (1.0 - 1e-14) {
            let psi = physical(&v);
            let row = diagnostics(sign * t, sign * dt, &psi, cfg, orbit, &mut tracker, &weight)?;
            l4_max = l4_max.max(row.l4_4);
            let decayed = row.l4_4 * 10.0 <= l4_max;
            times.push(sign * t);
            rows.push(row);
            if let Some(every) = cfg.checkpoint_every {
                if (rows.len() - 1) % every == 0 {
                    checkpoints.push((sign * t, psi));
                }
            }
            if tripped {
                verdict = Verdict::BlowupDetected { t_est: sign * blowup_time(&grad_hist) };
                reason = if unresolved {
                    "collapse core |psi|^-2 fell below the resolution limit".into()
                } else {
                    alloc::format!("gradient norm exceeded {:e} x initial", cfg.grad_blowup_factor)
                };
                break;
            }
            if cfg.sponge.is_some() && cfg.stop_on_scatter && decayed && scatter_conditions(&rows, None) {
                verdict = Verdict::ScatterProxy;
                reason = "L4 norm decayed tenfold with K > 0 on the tail".into();
                break;
            }
        }
    }
    let final_state = physical(&v);
    if verdict == Verdict::Completed && cfg.sponge.is_some() && scatter_conditions(&rows, None) {
        verdict = Verdict::ScatterProxy;
    }
    Ok(TrajectoryRecord { times, rows, verdict, reason, checkpoints, final_state, steps, sponge: cfg.sponge.is_some() })
}

/// `K > 0` on the last half of the rows and `‖ψ‖₄⁴` at most a tenth of its
/// maximum at the end; with `exit`, the modified distance must also have
/// passed `exit` and stayed above it.
fn scatter_conditions(rows: &[Diagnostics], exit: Option<f64>) -> bool {
    if rows.len() < 4 {
        return false;
    }
    let tail = &rows[rows.len() / 2..];
    if !tail.iter().all(|r| r.k > 0.0) {
        return false;
    }
    let max = rows.iter().map(|r| r.l4_4).fold(0.0f64, f64::max);
    if !(rows.last().unwrap().l4_4 * 10.0 <= max) {
        return false;
    }
    if let Some(exit) = exit {
        let d: Vec<f64> = rows.iter().filter_map(|r| r.d_tilde).collect();
        match d.iter().position(|&x| x >= exit) {
            None => return false,
            Some(k) => {
                if d[k..].iter().any(|&x| x < exit) {
                    return false;
                }
            }
        }
    }
    true
}

/// Scatter proxy of a finished run: `K > 0` on the tail, tenfold decay of
/// `‖ψ‖₄⁴`, and (when distances were recorded) a persistent exit beyond
/// `exit_radius`.
pub fn detect_scatter(traj: &TrajectoryRecord, exit_radius: Option<f64>) -> bool {
    let has_d = traj.rows.iter().any(|r| r.d_tilde.is_some());
    scatter_conditions(&traj.rows, if has_d { exit_radius } else { None })
}

/// Largest relative deviation of mass and energy from their initial values.
pub fn conserved_drift(traj: &TrajectoryRecord) -> (f64, f64) {
    let Some(first) = traj.rows.first() else {
        return (0.0, 0.0);
    };
    let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
    traj.rows.iter().fold((0.0f64, 0.0f64), |(m, e), r| {
        (m.max(rel(r.mass, first.mass)), e.max(rel(r.energy, first.energy)))
    })
}

/// Fit of `V(t) − V(0) − 4tP(0) = c·∫₀ᵗ∫₀^{t'}K` over the recorded rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirialFit {
    pub c_vir: f64,
    /// Largest misfit relative to `max |V(t) − V(0)|`.
    pub residual: f64,
}

/// Measures the constant of the full virial identity. Rows must be equally
/// spaced in time (no adaptivity).
pub fn full_virial_constant(traj: &TrajectoryRecord) -> Result<VirialFit> {
    let rows = &traj.rows;
    if rows.len() < 5 {
        return Err(Error::Input("need at least five rows to fit the virial constant".into()));
    }
    let v0 = rows[0].variance;
    let p0 = rows[0].momentum;
    // double integral by cumulative Simpson-free trapezoid on K and on ∫K
    let mut inner = vec![0.0; rows.len()];
    let mut outer = vec![0.0; rows.len()];
    for i in 1..rows.len() {
        let h = rows[i].t - rows[i - 1].t;
        inner[i] = inner[i - 1] + 0.5 * h * (rows[i].k + rows[i - 1].k);
        outer[i] = outer[i - 1] + 0.5 * h * (inner[i] + inner[i - 1]);
    }
    let lhs: Vec<f64> = rows.iter().map(|r| r.variance - v0 - 4.0 * r.t * p0).collect();
    let (num, den) = lhs.iter().zip(&outer).fold((0.0, 0.0), |(a, b), (y, x)| (a + x * y, b + x * x));
    if den == 0.0 {
        return Err(Error::Numeric("virial fit: K integrates to zero".into()));
    }
    let c = num / den;
    let scale = rows.iter().map(|r| (r.variance - v0).abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let residual = lhs.iter().zip(&outer).map(|(y, x)| (y - c * x).abs()).fold(0.0f64, f64::max) / scale;
    Ok(VirialFit { c_vir: c, residual })
}
