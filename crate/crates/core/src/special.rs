//! Special threshold solutions and the empirical classification of
//! threshold data.
//!
//! In the frame rotating with `ω`, `ψ = e^{iωt}(Q + V)` solves the equation
//! iff `V_t + i𝓛V = N_ω(V)`. The approximate solutions are truncated series
//! `V_k = Σ_{j≤k} e^{−j e t} Z_j` with `Z₁ = A𝓨₋`; collecting powers of
//! `X = e^{−et}` gives `(−je + i𝓛) Z_j = F_j`, where `F_j` is the `X^j`
//! coefficient of `N_ω(Σ_{m<j} X^m Z_m)`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::evolution::{conserved_drift, detect_scatter, evolve, EvolveConfig, TrajectoryRecord, Verdict};
use crate::field::{Field, RadialField};
use crate::functionals::{energy, lambda_star_from_norms, mass, scale, virial_k, Nonlinearity};
use crate::linearized::Which;
use crate::modulation::{one_pass_monitor, OnePass, OrbitContext};

/// Largest supported series order.
pub const MAX_ORDER: usize = 6;

/// Solves below this pivot ratio are treated as resonant.
pub const RESONANCE_PIVOT_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesProfile {
    pub a: f64,
    pub k: usize,
    /// `Z₁ … Z_k`
    pub z: Vec<RadialField>,
    pub e_omega: f64,
    /// Pivot ratios of the solves for `j = 2..k`.
    pub pivot_ratios: Vec<f64>,
    /// Fitted decay exponent of the truncation residual, once measured.
    pub residual_order: Option<f64>,
}

/// `X^j` coefficient (`j ≤ k`) of `N_ω(Σ X^m Z_m)` given `Z₁ … Z_{j−1}`.
///
/// Per node the field `w = Q + η` is a polynomial in `X`; `|w|²w = w²w̄` and
/// `|w|⁴w = w³w̄²` are multiplied out with truncation. The terms of
/// `N_ω` linear in `η` only touch the coefficient of `Z_j`, which is zero
/// here, so the `X^j` coefficient of `i(w²w̄ + c₅w³w̄²)` is `F_j`.
fn forcing(q: &[f64], z: &[RadialField], j: usize, c5: f64) -> Vec<Complex64> {
    let n = q.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut w = vec![Complex64::new(0.0, 0.0); j + 1];
    let mul = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        let mut c = vec![Complex64::new(0.0, 0.0); j + 1];
        for (p, &x) in a.iter().enumerate() {
            for (s, &y) in b.iter().enumerate().take(j + 1 - p) {
                c[p + s] += x * y;
            }
        }
        c
    };
    for i in 0..n {
        w[0] = Complex64::new(q[i], 0.0);
        for m in 1..=j {
            w[m] = if m <= z.len() { z[m - 1].samples()[i] } else { Complex64::new(0.0, 0.0) };
        }
        let wb: Vec<Complex64> = w.iter().map(|x| x.conj()).collect();
        let ww = mul(&w, &w);
        let cubic = mul(&ww, &wb);
        let mut s = cubic[j];
        if c5 != 0.0 {
            let mod2 = mul(&w, &wb);
            s += mul(&cubic, &mod2)[j] * c5;
        }
        out[i] = Complex64::new(-s.im, s.re);
    }
    out
}

/// Builds `Z₁ … Z_k` for amplitude `a`.
pub fn build_profile_series(a: f64, k: usize, ctx: &OrbitContext) -> Result<SeriesProfile> {
    if k == 0 {
        return crate::error::config("series order must be at least 1");
    }
    if k > MAX_ORDER {
        return crate::error::config(alloc::format!("series order {k} exceeds the cap {MAX_ORDER}"));
    }
    if !a.is_finite() {
        return Err(Error::Input("series amplitude must be finite".into()));
    }
    let grid = ctx.q.grid().clone();
    let e = ctx.e_omega();
    let c5 = ctx.ops.nonlinearity.quintic();
    let ap = ctx.ops.matrix(Which::Plus);
    let am = ctx.ops.matrix(Which::Minus);
    let apam = ap.matmul(&am);
    let r = grid.nodes();
    let mut z = vec![ctx.y_minus().scaled(a)];
    let mut pivot_ratios = Vec::new();
    for j in 2..=k {
        let f = forcing(ctx.q.samples(), &z, j, c5);
        let je = j as f64 * e;
        let fre: Vec<f64> = f.iter().zip(r).map(|(x, r)| x.re * r).collect();
        let fim: Vec<f64> = f.iter().zip(r).map(|(x, r)| x.im * r).collect();
        // (L₊L₋ + j²e²) z₂ = −je Im F − L₊ Re F,   z₁ = −(Re F + L₋z₂)/(je)
        let mut m = apam.clone();
        m.shift(je * je);
        let lu = m.factor().map_err(|_| Error::Resonance { order: j, condition: f64::INFINITY })?;
        let ratio = lu.pivot_ratio();
        pivot_ratios.push(ratio);
        if ratio < RESONANCE_PIVOT_RATIO {
            return Err(Error::Resonance { order: j, condition: 1.0 / ratio });
        }
        let lf = ap.mul_vec(&fre);
        let mut z2: Vec<f64> = fim.iter().zip(&lf).map(|(fi, l)| -je * fi - l).collect();
        lu.solve_in_place(&mut z2);
        let lz = am.mul_vec(&z2);
        let z1: Vec<f64> = fre.iter().zip(&lz).map(|(f, l)| -(f + l) / je).collect();
        let v: Vec<Complex64> = z1.iter().zip(&z2).map(|(&x, &y)| Complex64::new(x, y)).collect();
        z.push(Field::from_v(grid.clone(), &v));
    }
    Ok(SeriesProfile { a, k, z, e_omega: e, pivot_ratios, residual_order: None })
}

impl SeriesProfile {
    /// `V_k` at `X = e^{−et}`.
    pub fn value_at_x(&self, x: f64) -> RadialField {
        let mut v = RadialField::zeros(self.z[0].grid().clone());
        let mut p = 1.0;
        for zj in &self.z {
            p *= x;
            v.axpy(Complex64::new(p, 0.0), zj).expect("series terms share a grid");
        }
        v
    }

    pub fn value(&self, t: f64) -> RadialField {
        self.value_at_x((-self.e_omega * t).exp())
    }

    /// `‖V_t + i𝓛V − N_ω(V)‖₂` at time `t`.
    pub fn residual(&self, t: f64, ctx: &OrbitContext) -> Result<f64> {
        let x = (-self.e_omega * t).exp();
        let v = self.value_at_x(x);
        let mut vt = RadialField::zeros(v.grid().clone());
        let mut p = 1.0;
        for (j, zj) in self.z.iter().enumerate() {
            p *= x;
            vt.axpy(Complex64::new(-((j + 1) as f64) * self.e_omega * p, 0.0), zj)?;
        }
        let mil = ctx.ops.apply_minus_i_cal_l(&v)?;
        let nl = ctx.ops.nonlinear_remainder(&v)?;
        let r = vt.zip_map(&mil, |a, b| a - b)?.zip_map(&nl, |a, b| a - b)?;
        Ok(r.l2_sq().sqrt())
    }

    /// Fits `log‖residual‖` against `t` over `X ∈ [x_min, x_max]` and stores
    /// the decay exponent.
    pub fn measure_residual_order(&mut self, ctx: &OrbitContext, x_max: f64, x_min: f64, samples: usize) -> Result<ExpFit> {
        if !(0.0 < x_min && x_min < x_max && x_max < 1.0) || samples < 3 {
            return Err(Error::Usage("residual fit needs 0 < x_min < x_max < 1 and at least 3 samples".into()));
        }
        let (t0, t1) = (-x_max.ln() / self.e_omega, -x_min.ln() / self.e_omega);
        let mut ts = Vec::with_capacity(samples);
        let mut ys = Vec::with_capacity(samples);
        for i in 0..samples {
            let t = t0 + (t1 - t0) * i as f64 / (samples - 1) as f64;
            ts.push(t);
            ys.push(self.residual(t, ctx)?);
        }
        let fit = fit_exponential(&ts, &ys)?;
        self.residual_order = Some(fit.rate);
        Ok(fit)
    }
}

/// `t₀` with `e^{−e t₀} = x0`.
pub fn t0_for(x0: f64, e_omega: f64) -> f64 {
    -x0.ln() / e_omega
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecialData {
    pub psi0: RadialField,
    pub t0: f64,
    /// `M(ψ₀) − M(Q)`
    pub mass_offset: f64,
    /// `E(ψ₀) − E(Q)`
    pub energy_offset: f64,
    /// `K(ψ₀)`
    pub k: f64,
}

/// `Q + V_k(t₀)`; the phase `e^{iωt₀}` is dropped (gauge).
pub fn make_special_initial_data(series: &SeriesProfile, t0: f64, ctx: &OrbitContext) -> Result<SpecialData> {
    let v = series.value(t0);
    let qn = ctx.q.h1_norm();
    let vn = v.h1_norm();
    if !(vn <= 0.1 * qn) {
        return Err(Error::Usage(alloc::format!(
            "t0 = {t0} too small: |V(t0)|_H1 = {vn:e} exceeds 0.1 |Q|_H1 = {:e}",
            0.1 * qn
        )));
    }
    let psi0 = v.zip_map(&ctx.q, |z, q| z + q)?;
    Ok(SpecialData {
        mass_offset: mass(&psi0) - ctx.mass_q,
        energy_offset: energy(&psi0) - ctx.energy_q,
        k: virial_k(&psi0),
        psi0,
        t0,
    })
}

/// Least-squares fit `log y = c − rate·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub fn fit_exponential(ts: &[f64], ys: &[f64]) -> Result<ExpFit> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(Error::Input("exponential fit needs matching samples".into()));
    }
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::Input("exponential fit needs positive values".into()));
    }
    let n = ts.len() as f64;
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mt = ts.iter().sum::<f64>() / n;
    let ml = ls.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, l) in ts.iter().zip(&ls) {
        sxy += (t - mt) * (l - ml);
        sxx += (t - mt) * (t - mt);
        syy += (l - ml) * (l - ml);
    }
    if sxx == 0.0 {
        return Err(Error::Input("exponential fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ExpFit { rate: -slope, intercept: ml - slope * mt, r_squared, samples: ts.len() })
}

/// Decay rate of the orbit distance over `window = (t_a, t_b)` (in the
/// trajectory's own time). Samples at or below `noise_floor` reject the fit.
pub fn fit_decay_rate(traj: &TrajectoryRecord, window: (f64, f64), noise_floor: f64) -> Result<ExpFit> {
    let (lo, hi) = if window.0 <= window.1 { window } else { (window.1, window.0) };
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for r in &traj.rows {
        if r.t >= lo && r.t <= hi {
            if let Some(d) = r.dist_orbit {
                ts.push(r.t.abs());
                ys.push(d);
            }
        }
    }
    if ts.len() < 10 {
        return Err(Error::Input(alloc::format!("decay fit window holds {} samples (need 10)", ts.len())));
    }
    if ys.iter().any(|&y| !(y > noise_floor)) {
        return Err(Error::Input(alloc::format!("orbit distance reaches the noise floor {noise_floor:e} in the window")));
    }
    fit_exponential(&ts, &ys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub field: RadialField,
    pub amplitude: f64,
    pub lambda: f64,
    pub iterations: usize,
}

/// `a·T_λu` with `M = mass_target` and `E = energy_target` to `1e-10`
/// relative.
///
/// The scaling laws of `M` and `E` under `a·T_λ` give the model; a root on
/// the same side of the `K = 0` fold as `u` is bracketed first, then Newton
/// steps with the model Jacobian and actual (resampled) functional values
/// polish it.
pub fn threshold_projection(u: &RadialField, mass_target: f64, energy_target: f64, nl: Nonlinearity) -> Result<Projection> {
    const TOL: f64 = 1e-10;
    let eval = |f: &RadialField| {
        let n = f.norms();
        (0.5 * n.l2_sq, 0.5 * n.grad_sq - 0.25 * n.l4_4 - nl.quintic() / 6.0 * n.l6_6)
    };
    let (mu, eu) = eval(u);
    if !((mu - mass_target).abs() <= 0.1 * mass_target.abs() && (eu - energy_target).abs() <= 0.1 * energy_target.abs()) {
        return Err(Error::Projection(alloc::format!(
            "data (M, E) = ({mu}, {eu}) is not within 10% of the threshold ({mass_target}, {energy_target})"
        )));
    }
    let done = |m: f64, e: f64| (m - mass_target).abs() <= TOL * mass_target.abs() && (e - energy_target).abs() <= TOL * energy_target.abs();
    if done(mu, eu) {
        return Ok(Projection { field: u.clone(), amplitude: 1.0, lambda: 1.0, iterations: 0 });
    }
    let n = u.norms();
    let c5 = nl.quintic();
    let (g, f4, f6) = (n.grad_sq, n.l4_4, c5 * n.l6_6);
    let model_e = |a: f64, l: f64| 0.5 * a * a * l * l * g - 0.25 * a.powi(4) * l.powi(3) * f4 - a.powi(6) * l.powi(6) * f6 / 6.0;
    let de_da = |a: f64, l: f64| a * l * l * g - a.powi(3) * l.powi(3) * f4 - a.powi(5) * l.powi(6) * f6;
    let de_dl = |a: f64, l: f64| a * a * l * g - 0.75 * a.powi(4) * l * l * f4 - a.powi(6) * l.powi(5) * f6;

    let mut a = (mass_target / mu).sqrt();
    let scaled = crate::field::NormReport {
        l2_sq: a * a * n.l2_sq,
        grad_sq: a * a * g,
        l4_4: a.powi(4) * f4,
        l6_6: a.powi(6) * f6,
        h1_sq: 0.0,
    };
    let lam_s = lambda_star_from_norms(&scaled).map_err(|e| Error::Projection(alloc::format!("{e}")))?;
    // model root on the side of the fold that contains λ = 1
    let peak = model_e(a, lam_s);
    if peak < energy_target {
        return Err(Error::Projection(alloc::format!(
            "energy along the scaling curve peaks at {peak} below the target {energy_target}"
        )));
    }
    let (mut lo, mut hi) = if lam_s >= 1.0 { (1e-3_f64.min(lam_s * 1e-3), lam_s) } else { (lam_s, 1e3_f64.max(lam_s * 1e3)) };
    let rising = lam_s >= 1.0;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let above = model_e(a, mid) > energy_target;
        if above == rising {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let mut l = (lo * hi).sqrt();

    for it in 1..=30 {
        let field = scale(u, l)?.scaled(a);
        let (m, e) = eval(&field);
        if done(m, e) {
            return Ok(Projection { field, amplitude: a, lambda: l, iterations: it });
        }
        // J = [[2a M_u, 0], [∂E/∂a, ∂E/∂λ]]
        let j11 = 2.0 * a * mu;
        let (j21, j22) = (de_da(a, l), de_dl(a, l));
        if j22.abs() <= 1e-14 * (a * a * l * g).abs() {
            return Err(Error::Projection("Jacobian singular: data sits on the K = 0 fold of the scaling curve".into()));
        }
        let da = -(m - mass_target) / j11;
        let dl = (-(e - energy_target) - j21 * da) / j22;
        a += da;
        l += dl;
        if !(a > 0.0 && l > 0.0) {
            return Err(Error::Projection("Newton left the admissible region a, lambda > 0".into()));
        }
    }
    Err(Error::Projection("threshold projection did not converge in 30 steps".into()))
}

/// One initial condition of the trichotomy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub name: alloc::string::String,
    pub psi0: RadialField,
    pub projection: Option<Projection>,
}

/// The twelve threshold-projected initial conditions of the trichotomy
/// sweep: three orbit points, `Q ± εY₁` at two sizes, two chirps
/// `e^{±iβr²}Q`, and three Gaussian-perturbed profiles.
pub fn sweep_initial_data(ctx: &OrbitContext) -> Result<Vec<SweepCase>> {
    let q = ctx.q.to_complex();
    let nl = ctx.ops.nonlinearity;
    let width = 1.0 / ctx.omega.sqrt();
    let gauss = RadialField::from_fn(q.grid().clone(), |r| Complex64::new((-(r / width).powi(2)).exp(), 0.0));
    let gauss = gauss.scaled(q.max_abs() / gauss.max_abs());
    let y1 = ctx.mode.y1.to_complex();
    let y1 = y1.scaled(q.h1_norm() / y1.h1_norm());
    let mut raw: Vec<(alloc::string::String, RadialField)> = Vec::new();
    for alpha in [0.0, 1.0, 2.5] {
        raw.push((alloc::format!("orbit alpha={alpha}"), q.rotated(alpha)));
    }
    for eps in [1e-3, -1e-3, 1e-2, -1e-2] {
        let mut u = q.clone();
        u.axpy(Complex64::new(eps, 0.0), &y1)?;
        raw.push((alloc::format!("Q{eps:+}*Y1"), u));
    }
    for beta in [0.2, -0.2] {
        let b = beta * ctx.omega;
        raw.push((alloc::format!("chirp beta={b:+.4}"), q.map_r(|r, z| z * Complex64::from_polar(1.0, b * r * r))));
    }
    for (tag, c) in [("+", Complex64::new(0.02, 0.0)), ("-", Complex64::new(-0.02, 0.0)), ("i", Complex64::new(0.0, 0.05))] {
        let mut u = q.clone();
        u.axpy(c, &gauss)?;
        raw.push((alloc::format!("gauss{tag}"), u));
    }
    raw.into_iter()
        .enumerate()
        .map(|(i, (name, u))| {
            if i < 3 {
                return Ok(SweepCase { name, psi0: u, projection: None });
            }
            let p = threshold_projection(&u, ctx.mass_q, ctx.energy_q, nl)?;
            Ok(SweepCase { name, psi0: p.field.clone(), projection: Some(p) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Blowup,
    Scatter,
    Trapped,
    Undecided,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Blowup => "Blowup",
            Label::Scatter => "Scatter",
            Label::Trapped => "Trapped",
            Label::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    pub direction: Direction,
    /// Length of the first run. Trapped data cannot be followed much past
    /// `ln(noise_floor/seed)/e_ω`: the scheme's standing wave is
    /// `Q/cos(θ/2)` with `tan(θ/2) = ωdt/2`, so `Q` itself carries an
    /// `O(ω²dt²)` offset that the unstable mode amplifies.
    pub horizon: f64,
    /// Runs still undecided after `horizon` continue up to here.
    pub max_horizon: f64,
    pub evolve: EvolveConfig,
    /// `H¹` orbit distances below this count as the orbit itself.
    pub noise_floor: f64,
    /// `|K| ≤ this · ‖∇ψ‖²` counts as `K = 0`.
    pub k_zero: f64,
    /// Radius `R` of the one-pass monitor.
    pub one_pass_radius: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Forward,
            horizon: 2.0,
            max_horizon: 40.0,
            evolve: EvolveConfig { dt0: 1e-3, record_every: 25, ..Default::default() },
            noise_floor: 1e-6,
            k_zero: 1e-8,
            one_pass_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub k_initial: f64,
    pub k_sign: i8,
    pub k_positive_rows: usize,
    pub k_negative_rows: usize,
    /// Sign changes of `K` while `d̃_ω < γ̃`.
    pub k_flips_while_trapped: usize,
    pub d_max: f64,
    pub d_final: f64,
    pub decay_rate: Option<f64>,
    pub one_pass: OnePass,
    pub verdict: Verdict,
    pub sponge: bool,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub t_final: f64,
    pub times: Vec<f64>,
    pub k_history: Vec<f64>,
    pub d_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub label: Label,
    pub evidence: Evidence,
}

fn k_sign(k: f64, grad: f64, zero: f64) -> i8 {
    if k.abs() <= zero * grad {
        0
    } else if k > 0.0 {
        1
    } else {
        -1
    }
}

/// Runs `ψ₀` in the requested direction and labels the outcome.
///
/// Data with `K > 0` run with the sponge (a scatter label needs it); other
/// data run without (a blow-up label must not see the absorbing layer).
pub fn classify(psi0: &RadialField, ctx: &OrbitContext, cfg: &ClassifyConfig) -> Result<ClassificationResult> {
    let n0 = psi0.norms();
    let k0 = crate::functionals::FunctionalValues::from_norms_with(&n0, ctx.omega, ctx.ops.nonlinearity).k;
    let s0 = k_sign(k0, n0.grad_sq, cfg.k_zero);
    let mut ecfg = cfg.evolve;
    ecfg.t_end = cfg.direction.sign() * cfg.horizon;
    ecfg.nonlinearity = ctx.ops.nonlinearity;
    if ecfg.adapt.is_none() {
        ecfg.adapt = Some(ecfg.dt0 * n0.grad_sq);
    }
    ecfg.sponge = if s0 > 0 { Some(ecfg.sponge.unwrap_or_default()) } else { None };
    let mut traj = evolve(psi0, &ecfg, Some(ctx))?;
    let mut result = label_trajectory(&traj, k0, n0.grad_sq, cfg);
    if result.label == Label::Undecided && traj.verdict == Verdict::Completed && cfg.max_horizon > cfg.horizon {
        let t_off = traj.rows.last().map_or(0.0, |r| r.t);
        ecfg.t_end = cfg.direction.sign() * (cfg.max_horizon - t_off.abs());
        let more = evolve(&traj.final_state, &ecfg, Some(ctx))?;
        append(&mut traj, more, t_off);
        result = label_trajectory(&traj, k0, n0.grad_sq, cfg);
    }
    Ok(result)
}

/// Appends a continuation run started from `a.final_state` at time `t_off`.
fn append(a: &mut TrajectoryRecord, b: TrajectoryRecord, t_off: f64) {
    a.times.extend(b.times.iter().skip(1).map(|t| t + t_off));
    a.rows.extend(b.rows.into_iter().skip(1).map(|mut r| {
        r.t += t_off;
        r
    }));
    a.checkpoints.extend(b.checkpoints.into_iter().map(|(t, f)| (t + t_off, f)));
    a.verdict = match b.verdict {
        Verdict::BlowupDetected { t_est } => Verdict::BlowupDetected { t_est: t_est + t_off },
        v => v,
    };
    a.reason = b.reason;
    a.final_state = b.final_state;
    a.steps += b.steps;
}

/// Applies the labelling rules to a finished run.
pub fn label_trajectory(traj: &TrajectoryRecord, k0: f64, grad0: f64, cfg: &ClassifyConfig) -> ClassificationResult {
    let gamma = cfg.evolve.modulation.gamma_tilde;
    let d: Vec<f64> = traj.rows.iter().map(|r| r.d_tilde.unwrap_or(f64::INFINITY)).collect();
    let ks: Vec<f64> = traj.rows.iter().map(|r| r.k).collect();
    let signs: Vec<i8> = traj.rows.iter().map(|r| k_sign(r.k, r.grad_sq, cfg.k_zero)).collect();
    let mut flips = 0;
    for i in 1..signs.len() {
        if d[i] < gamma && d[i - 1] < gamma && signs[i] != 0 && signs[i - 1] != 0 && signs[i] != signs[i - 1] {
            flips += 1;
        }
    }
    let d_final = *d.last().unwrap_or(&f64::INFINITY);
    let d_max = d.iter().copied().fold(0.0f64, f64::max);
    // d̃ carries √(round-off of E) noise near 1e-6; the floor test uses the H¹ distance
    let dist_max = traj.rows.iter().map(|r| r.dist_orbit.unwrap_or(f64::INFINITY)).fold(0.0f64, f64::max);
    let one_pass = one_pass_monitor(&d, cfg.one_pass_radius).unwrap_or(OnePass::Stayed);
    let exit = cfg.one_pass_radius * (1.0 + cfg.one_pass_radius.sqrt());

    // decay fit over the second half of the run
    let t_end = traj.rows.last().map_or(0.0, |r| r.t);
    let half = 0.5 * t_end;
    let decay_rate = fit_decay_rate(traj, (half, t_end), cfg.noise_floor).ok().map(|f| f.rate);

    let label = match traj.verdict {
        Verdict::BlowupDetected { .. } if !traj.sponge => Label::Blowup,
        _ if traj.sponge && detect_scatter(traj, Some(exit)) => Label::Scatter,
        _ if d_final < gamma && (decay_rate.is_some_and(|r| r > 0.0) || dist_max <= cfg.noise_floor) => Label::Trapped,
        _ => Label::Undecided,
    };
    let (mass_drift, energy_drift) = conserved_drift(traj);
    ClassificationResult {
        label,
        evidence: Evidence {
            k_initial: k0,
            k_sign: k_sign(k0, grad0, cfg.k_zero),
            k_positive_rows: signs.iter().filter(|&&s| s > 0).count(),
            k_negative_rows: signs.iter().filter(|&&s| s < 0).count(),
            k_flips_while_trapped: flips,
            d_max,
            d_final,
            decay_rate,
            one_pass,
            verdict: traj.verdict,
            sponge: traj.sponge,
            mass_drift,
            energy_drift,
            t_final: t_end,
            times: traj.times.clone(),
            k_history: ks,
            d_history: d,
        },
    }
}

impl ClassificationResult {
    /// Label agrees with the case split by the sign of `K(ψ₀)`.
    pub fn consistent_with_k_sign(&self) -> bool {
        match (self.evidence.k_sign, self.label) {
            (0, Label::Trapped) => true,
            (-1, Label::Blowup) | (-1, Label::Trapped) => true,
            (1, Label::Scatter) | (1, Label::Trapped) => true,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::{solve_ground_state, SolverConfig};
    use std::sync::OnceLock;

    fn ctx() -> &'static OrbitContext {
        static CTX: OnceLock<OrbitContext> = OnceLock::new();
        CTX.get_or_init(|| {
            let gs = solve_ground_state(0.05, Nonlinearity::CubicQuintic, &SolverConfig::default()).unwrap();
            OrbitContext::new(&gs).unwrap()
        })
    }

    #[test]
    fn first_term_is_the_stable_mode() {
        let c = ctx();
        let s = build_profile_series(-2.0, 3, c).unwrap();
        assert_eq!(s.z[0], c.y_minus().scaled(-2.0));
        assert_eq!(s.z.len(), 3);
        let zero = build_profile_series(0.0, 4, c).unwrap();
        assert!(zero.z.iter().all(|z| z.max_abs() == 0.0));
        assert!(build_profile_series(1.0, 7, c).is_err());
        assert!(build_profile_series(1.0, 0, c).is_err());
    }

    #[test]
    fn residual_exponents() {
        let c = ctx();
        let e = c.e_omega();
        for (k, a) in [(1usize, 1.0), (3, 1.0), (3, -1.0)] {
            let mut s = build_profile_series(a, k, c).unwrap();
            let fit = s.measure_residual_order(c, 0.05, 0.002, 8).unwrap();
            let want = (k + 1) as f64 * e;
            assert!((fit.rate / want - 1.0).abs() < 0.1, "k {k} a {a}: {} vs {want}", fit.rate);
        }
    }

    #[test]
    fn synthetic_exponential_fit() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (-2.0 * t).exp()).collect();
        let f = fit_exponential(&ts, &ys).unwrap();
        assert!((f.rate - 2.0).abs() < 1e-6);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn special_data_magnitudes() {
        let c = ctx();
        let s = build_profile_series(1.0, 3, c).unwrap();
        let t0 = t0_for(1e-3, c.e_omega());
        let d = make_special_initial_data(&s, t0, c).unwrap();
        let diff = crate::field::h1_distance(&d.psi0, &c.q.to_complex()).unwrap();
        let lead = 1e-3 * c.y_minus().h1_norm();
        assert!((diff - lead).abs() < 0.05 * lead, "{diff} {lead}");
        let z = build_profile_series(0.0, 3, c).unwrap();
        assert_eq!(make_special_initial_data(&z, t0, c).unwrap().psi0, c.q.to_complex());
        let big = build_profile_series(1e4, 1, c).unwrap();
        assert!(make_special_initial_data(&big, 0.0, c).is_err());
    }

    #[test]
    fn opposite_amplitudes_give_opposite_k() {
        let c = ctx();
        let t0 = t0_for(1e-3, c.e_omega());
        let kp = make_special_initial_data(&build_profile_series(1.0, 3, c).unwrap(), t0, c).unwrap().k;
        let km = make_special_initial_data(&build_profile_series(-1.0, 3, c).unwrap(), t0, c).unwrap().k;
        assert!(kp * km < 0.0, "{kp} {km}");
    }

    #[test]
    fn projection_fixed_point_and_small_corrections() {
        let c = ctx();
        let q = c.q.to_complex();
        let p = threshold_projection(&q, c.mass_q, c.energy_q, Nonlinearity::CubicQuintic).unwrap();
        assert_eq!((p.amplitude, p.lambda, p.iterations), (1.0, 1.0, 0));
        for eps in [1e-3, -1e-3] {
            let mut u = q.clone();
            u.axpy(Complex64::new(eps, 0.0), &c.mode.y1.to_complex()).unwrap();
            let p = threshold_projection(&u, c.mass_q, c.energy_q, Nonlinearity::CubicQuintic).unwrap();
            assert!((mass(&p.field) / c.mass_q - 1.0).abs() <= 1e-10);
            assert!((energy(&p.field) / c.energy_q - 1.0).abs() <= 1e-10);
            assert!((p.amplitude - 1.0).abs() < 50.0 * eps.abs() && (p.lambda - 1.0).abs() < 50.0 * eps.abs(), "{p:?}");
        }
        let far = q.scaled(1.5);
        assert!(matches!(threshold_projection(&far, c.mass_q, c.energy_q, Nonlinearity::CubicQuintic), Err(Error::Projection(_))));
    }

    #[test]
    fn orbit_point_is_trapped() {
        let c = ctx();
        let psi0 = c.q.to_complex().rotated(0.7);
        let cfg = ClassifyConfig { horizon: 2.0, ..Default::default() };
        let r = classify(&psi0, c, &cfg).unwrap();
        assert_eq!(r.label, Label::Trapped, "{:?}", r.evidence.d_max);
        assert!(r.consistent_with_k_sign());
        assert_eq!(r.evidence.one_pass, OnePass::Stayed);
    }
}
