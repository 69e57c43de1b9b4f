//! The invariant suite run by `check`: one row per property, grouped by
//! module. `fast` skips the long classification runs.

use rayon::prelude::*;
use serde::Serialize;

use cqnls_core::banded::BandMatrix;
use cqnls_core::evolution::{evolve, full_virial_constant, EvolveConfig, Verdict};
use cqnls_core::functionals::{self, dist_to_orbit, k_of_scaled, scale, FunctionalValues, Nonlinearity};
use cqnls_core::ground_state::{solve_ground_state, solve_on_grid, GroundState, SolverConfig};
use cqnls_core::linearized::Which;
use cqnls_core::modulation::{decompose, match_mass, ModulationConfig, OrbitContext};
use cqnls_core::sobolev::sobolev_constant;
use cqnls_core::special::{
    build_profile_series, classify, fit_decay_rate, make_special_initial_data, sweep_initial_data, t0_for,
    threshold_projection, ClassifyConfig, Label,
};
use cqnls_core::{Complex64, GridRef, RadialField, RadialGrid, RealField};

use crate::env::validate_omega;
use crate::error::CliResult;
use crate::files::{trajectory_csv, Checkpoint, Encoding, GroundStateFixture};
use crate::format::to_json;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub module: &'static str,
    pub name: &'static str,
    pub value: f64,
    pub tolerance: String,
    pub pass: bool,
    pub detail: String,
}

struct Suite {
    rows: Vec<CheckRow>,
}

impl Suite {
    /// `value ≤ tol`.
    fn at_most(&mut self, module: &'static str, name: &'static str, value: f64, tol: f64) {
        self.push(module, name, value, format!("<= {tol:e}"), value <= tol, String::new());
    }

    fn push(&mut self, module: &'static str, name: &'static str, value: f64, tolerance: String, pass: bool, detail: String) {
        self.rows.push(CheckRow { module, name, value, tolerance, pass, detail });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn bump(grid: &GridRef, width: f64, c: Complex64) -> RadialField {
    RadialField::from_fn(grid.clone(), |r| c * (1.0 - r / (2.0 * width)) * (-r * r / (width * width)).exp())
}

/// Runs the suite at `omega`.
pub fn run_checks(omega: f64, fast: bool, pool: &rayon::ThreadPool) -> CliResult<Vec<CheckRow>> {
    validate_omega(omega, Nonlinearity::CubicQuintic)?;
    let mut s = Suite { rows: Vec::new() };
    let cfg = SolverConfig::default();
    let gs = solve_ground_state(omega, Nonlinearity::CubicQuintic, &cfg)?;
    let ctx = OrbitContext::new(&gs)?;
    let g = gs.grid().clone();

    radial_core(&mut s, &g);
    functionals_checks(&mut s, &gs)?;
    ground_state_checks(&mut s, &gs)?;
    linearized_checks(&mut s, &gs, &ctx)?;
    modulation_checks(&mut s, &ctx)?;
    evolution_checks(&mut s, &ctx, fast)?;
    special_checks(&mut s, &gs, &ctx, fast, pool)?;
    cli_checks(&mut s, &gs)?;
    Ok(s.rows)
}

fn radial_core(s: &mut Suite, g: &GridRef) {
    let small = RadialGrid::new(1.7, 123).expect("valid grid");
    let mut worst: f64 = 0.0;
    for deg in (0..=small.quadrature_degree()).step_by(2) {
        let f: Vec<f64> = small.nodes().iter().map(|r| r.powi(deg as i32)).collect();
        let exact = 4.0 * std::f64::consts::PI * 1.7f64.powi(deg as i32 + 3) / (deg as f64 + 3.0);
        worst = worst.max(rel(small.integrate(&f), exact));
    }
    s.at_most("radial_core", "quadrature_exactness", worst, 1e-12);

    let u = bump(g, 2.0, Complex64::new(1.0, 0.3));
    let w = RadialField::from_fn(g.clone(), |r| Complex64::new(0.5, -0.2 * r) * (-r * r / 9.0).exp());
    let a = u.laplacian().inner(&w).expect("same grid");
    let b = u.inner(&w.laplacian()).expect("same grid");
    s.at_most("radial_core", "laplacian_symmetry", (a - b).norm() / a.norm().max(b.norm()), 1e-10);

    let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 4.0).exp() * (1.0 + r)).collect();
    let h: Vec<f64> = g.nodes().iter().map(|r| 1.0 / (1.0 + r * r)).collect();
    let (ca, cb) = (0.7, -1.3);
    let mix: Vec<f64> = f.iter().zip(&h).map(|(x, y)| ca * x + cb * y).collect();
    let (i_f, i_h) = (g.integrate(&f), g.integrate(&h));
    let err = (g.integrate(&mix) - ca * i_f - cb * i_h).abs() / (ca.abs() * i_f.abs() + cb.abs() * i_h.abs());
    s.at_most("radial_core", "integrate_linearity", err, 1e-13);
}

fn test_fields(gs: &GroundState) -> Vec<RadialField> {
    let g = gs.grid();
    vec![
        gs.q.to_complex(),
        bump(g, 1.5, Complex64::new(0.8, 0.0)),
        bump(g, 3.0, Complex64::new(0.2, 0.4)),
        RadialField::from_fn(g.clone(), |r| Complex64::new(2.0, 0.5 * r) * (-r * r / 2.0).exp()),
    ]
}

fn functionals_checks(s: &mut Suite, gs: &GroundState) -> CliResult<()> {
    let w = gs.omega;
    let fields = test_fields(gs);
    let mut worst: f64 = 0.0;
    for u in &fields {
        let n = u.norms();
        let v = FunctionalValues::from_norms(&n, w);
        let closed = 0.5 * w * n.l2_sq + n.l4_4 / 8.0 + n.l6_6 / 3.0;
        worst = worst.max(rel(closed, v.action - 0.5 * v.k)).max(rel(closed, v.j));
    }
    s.at_most("functionals", "j_identity", worst, 1e-12);

    // d/dλ S(T_λ u) at λ = 1 from resampled fields, against K(u)
    let fine = RadialGrid::new(20.0, 4000)?.shared();
    let u = RadialField::from_fn(fine, |r| Complex64::new(1.2, 0.3 * r) * (-r * r / 3.0).exp());
    let eps = 1e-3;
    let act = |l: f64| -> CliResult<f64> { Ok(FunctionalValues::from_norms(&scale(&u, l)?.norms(), w).action) };
    let d = (act(1.0 + eps)? - act(1.0 - eps)?) / (2.0 * eps);
    let n = u.norms();
    let k = functionals::virial_k(&u);
    s.at_most("functionals", "k_is_scaling_derivative", (d - k).abs() / (n.grad_sq + n.l4_4 + n.l6_6), 1e-5);

    let mut bad = 0;
    for u in &fields {
        let n = u.norms();
        let ks: Vec<f64> = (0..=600).map(|i| k_of_scaled(&n, 10f64.powf(-3.0 + 6.0 * i as f64 / 600.0))).collect();
        let changes = ks.windows(2).filter(|p| (p[0] > 0.0) != (p[1] > 0.0)).count();
        if changes != 1 {
            bad += 1;
        }
    }
    s.push("functionals", "k_single_sign_change", bad as f64, "== 0 fields".into(), bad == 0, format!("{} fields", fields.len()));

    let mut u = gs.q.to_complex();
    u.axpy(Complex64::new(0.05, 0.0), &bump(gs.grid(), 2.0, Complex64::new(0.3, 0.7)))?;
    let d0 = dist_to_orbit(&u, &gs.q)?;
    let mut worst: f64 = 0.0;
    for a in [0.3, -2.0, 3.0] {
        worst = worst.max(rel(dist_to_orbit(&u.rotated(a), &gs.q)?, d0));
    }
    s.at_most("functionals", "dist_phase_invariance", worst, 1e-12);
    Ok(())
}

fn ground_state_checks(s: &mut Suite, gs: &GroundState) -> CliResult<()> {
    let v = &gs.values;
    let n = gs.q.norms();
    s.at_most("ground_state", "equation_residual", gs.residual, 1e-8);
    s.at_most("ground_state", "k_vanishes", v.k.abs() / n.grad_sq, 1e-6);
    s.at_most("ground_state", "nehari_identity", gs.nehari_defect().abs(), 1e-8);
    s.at_most("ground_state", "action_equals_j", rel(v.action, v.j), 1e-8);
    let bound = sobolev_constant(200.0, 0.01)?.action_bound();
    s.push(
        "ground_state",
        "action_below_sobolev_bound",
        bound - v.action,
        "> 0".into(),
        v.action < bound,
        format!("m = {:.9}, bound = {bound:.9}", v.action),
    );
    let rise = gs.q.samples().windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
    s.at_most("ground_state", "profile_monotone", rise, 1e-12);
    Ok(())
}

/// Lowest eigenvalue of a symmetric band matrix on the complement of `q`,
/// by inverse iteration with a positive shift.
fn lowest_on_complement(m: &BandMatrix<f64>, q: &[f64], shift: f64) -> CliResult<f64> {
    let n = m.n();
    let mut b = m.clone();
    b.shift(shift);
    let lu = b.factor()?;
    let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qh: Vec<f64> = q.iter().map(|x| x / nq).collect();
    let project = |x: &mut Vec<f64>| {
        let c: f64 = x.iter().zip(&qh).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(&qh).for_each(|(a, b)| *a -= c * b);
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        x.iter_mut().for_each(|a| *a /= nx);
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (0.37 * i as f64).sin()).collect();
    project(&mut x);
    for _ in 0..300 {
        lu.solve_in_place(&mut x);
        project(&mut x);
    }
    let mx = m.mul_vec(&x);
    Ok(x.iter().zip(&mx).map(|(a, b)| a * b).sum())
}

fn linearized_checks(s: &mut Suite, gs: &GroundState, ctx: &OrbitContext) -> CliResult<()> {
    let ops = &ctx.ops;
    let g = gs.grid();
    let f = RealField::from_fn(g.clone(), |r| (1.0 - r / 3.0) * (-r * r / 4.0).exp());
    let h = RealField::from_fn(g.clone(), |r| (-r * r / 10.0).exp() * (0.5 + r));
    for (which, name) in [(Which::Plus, "l_plus_symmetry"), (Which::Minus, "l_minus_symmetry")] {
        let a = ops.apply(which, &f)?.dot(&h)?;
        let b = f.dot(&ops.apply(which, &h)?)?;
        s.at_most("linearized", name, rel(a, b), 1e-10);
    }

    let nq = gs.q.l2_sq().sqrt();
    let lq = ops.apply(Which::Minus, &gs.q)?.l2_sq().sqrt() / nq;
    let second = lowest_on_complement(&ops.matrix(Which::Minus), &gs.q.v(), gs.omega)?;
    s.push(
        "linearized",
        "l_minus_radial_kernel",
        second / gs.omega,
        "|L-Q| <= 1e-6, second eigenvalue >= 0.1 omega".into(),
        lq <= 1e-6 && second >= 0.1 * gs.omega,
        format!("|L-Q|/|Q| = {lq:.3e}, second eigenvalue = {second:.6e}"),
    );

    let eta = bump(g, 3.0, Complex64::new(0.2, -0.15));
    let eps = 1e-3;
    let q = gs.q.to_complex();
    let act = |t: f64| -> CliResult<f64> {
        let mut u = q.clone();
        u.axpy(Complex64::new(t, 0.0), &eta)?;
        Ok(FunctionalValues::from_norms(&u.norms(), gs.omega).action)
    };
    let fd = (act(eps)? - 2.0 * act(0.0)? + act(-eps)?) / (eps * eps);
    let form = ops.quadratic_form(&eta)?;
    s.push("linearized", "quadratic_form_matches_second_difference", rel(fd, form), "<= 1e-4".into(), rel(fd, form) <= 1e-4, format!("form {form:.9e}, fd {fd:.9e}"));

    let liq = ops.apply_cal_l(&q.mul_i())?.l2_sq().sqrt() / nq;
    s.at_most("linearized", "cal_l_kills_iq", liq, 1e-6);
    Ok(())
}

fn modulation_checks(s: &mut Suite, ctx: &OrbitContext) -> CliResult<()> {
    let mcfg = ModulationConfig::default();
    let g = ctx.q.grid().clone();
    let q = ctx.q.to_complex();

    let mut psi = q.clone();
    psi.axpy(Complex64::new(2e-3, 0.0), ctx.y_plus())?;
    psi.axpy(Complex64::new(1e-2, 0.0), &bump(&g, 3.0, Complex64::new(0.3, 0.2)))?;
    let psi = match_mass(&psi, ctx.mass_q)?.rotated(-0.8);
    let st = decompose(0.0, &psi, ctx, &mcfg)?;
    let back = st.reconstruct(ctx)?;
    s.at_most("modulation", "reconstruction", (&back - &psi).l2_sq().sqrt() / psi.l2_sq().sqrt(), 1e-10);

    let dirs = [bump(&g, 4.0, Complex64::new(1.0, 0.5)), bump(&g, 2.0, Complex64::new(-0.3, 1.0))];
    let (mut en_ratio, mut form_ratio) = (Vec::new(), Vec::new());
    for d in &dirs {
        let d = d.scaled(1.0 / d.h1_norm());
        for eps in [1e-4, 1e-3, 1e-2, 1e-1] {
            let mut u = q.clone();
            u.axpy(Complex64::new(eps, 0.0), &d)?;
            let st = decompose(0.0, &match_mass(&u, ctx.mass_q)?, ctx, &mcfg)?;
            en_ratio.push(st.energy_norm / st.eta.h1_norm());
            let gh = st.gamma_h1();
            form_ratio.push(st.gamma_form / (gh * gh));
        }
    }
    let span = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(0.0f64, f64::max));
    let (c1, c2) = span(&en_ratio);
    s.push("modulation", "energy_norm_equivalent_to_h1", c2 / c1, "c1 > 0, c2/c1 <= 100".into(), c1 > 0.0 && c2 / c1 <= 100.0, format!("[{c1:.4e}, {c2:.4e}]"));
    let (f1, f2) = span(&form_ratio);
    s.push("modulation", "gamma_form_coercive", f2 / f1, "c > 0, max/min <= 100".into(), f1 > 0.0 && f2 / f1 <= 100.0, format!("[{f1:.4e}, {f2:.4e}]"));

    // χ = 1 near the orbit, χ = 0 once ‖η‖_E ≥ 4δ
    let lhs = st.d_omega * st.d_omega;
    let inner = rel(lhs, st.energy_norm * st.energy_norm + st.c_omega);
    let d = dirs[0].scaled(1.0 / dirs[0].h1_norm());
    let mut eps = 0.05 * ctx.q.h1_norm();
    let far = loop {
        let mut u = q.clone();
        u.axpy(Complex64::new(eps, 0.0), &d)?;
        let st = decompose(0.0, &match_mass(&u, ctx.mass_q)?, ctx, &mcfg)?;
        if st.energy_norm >= 4.0 * mcfg.delta_e * 1.01 || eps > 10.0 * ctx.q.h1_norm() {
            break st;
        }
        eps *= 1.5;
    };
    let outer = if far.energy_norm >= 4.0 * mcfg.delta_e { rel(far.d_omega, far.energy_norm) } else { f64::INFINITY };
    s.push(
        "modulation",
        "distance_cutoff_regimes",
        inner.max(outer),
        "<= 1e-12".into(),
        inner.max(outer) <= 1e-12,
        format!("near {inner:.2e}, far {outer:.2e} at |eta|_E = {:.3}", far.energy_norm),
    );
    Ok(())
}

fn evolution_checks(s: &mut Suite, ctx: &OrbitContext, fast: bool) -> CliResult<()> {
    let g = RadialGrid::new(20.0, 800)?.shared();
    let psi0 = RadialField::from_fn(g.clone(), |r| Complex64::new(0.9, 0.2 * r) * (-r * r / 3.0).exp());
    let run = |p: &RadialField, t: f64| evolve(p, &EvolveConfig { dt0: 1e-2, t_end: t, ..Default::default() }, None);
    let fwd = run(&psi0, 0.3)?;
    let a = fwd.final_state.conj();
    let b = run(&psi0.conj(), -0.3)?.final_state;
    s.at_most("evolution", "time_reversal", (&a - &b).l2_sq().sqrt() / psi0.l2_sq().sqrt(), 1e-9);

    let g2 = RadialGrid::new(40.0, 2000)?.shared();
    let p = RadialField::from_fn(g2, |r| Complex64::new(1.0, 0.2 * r) * (-r * r / 2.0).exp());
    let fit = full_virial_constant(&evolve(&p, &EvolveConfig { dt0: 2e-3, t_end: 0.4, record_every: 5, ..Default::default() }, None)?)?;
    let near = [8.0, 16.0].iter().map(|c| (fit.c_vir - c).abs()).fold(f64::INFINITY, f64::min);
    s.push(
        "evolution",
        "full_virial_identity",
        fit.residual,
        "<= 1e-4, c_vir within 1e-3 of 8 or 16".into(),
        fit.residual <= 1e-4 && near <= 1e-3,
        format!("c_vir = {:.6}", fit.c_vir),
    );

    // K-sign along threshold runs that start near the orbit
    let mut y1 = ctx.mode.y1.to_complex();
    y1 = y1.scaled(ctx.q.h1_norm() / y1.h1_norm());
    let mut flips = 0;
    let mut detail = String::new();
    let mut blowup_data = None;
    for eps in [1e-3, -1e-3] {
        let mut u = ctx.q.to_complex();
        u.axpy(Complex64::new(eps, 0.0), &y1)?;
        let p = threshold_projection(&u, ctx.mass_q, ctx.energy_q, Nonlinearity::CubicQuintic)?;
        let cfg = ClassifyConfig { max_horizon: 2.0, ..Default::default() };
        let r = classify(&p.field, ctx, &cfg)?;
        flips += r.evidence.k_flips_while_trapped;
        detail += &format!("eps {eps:+e}: K0 {:+.3e} ", r.evidence.k_initial);
        if r.evidence.k_sign < 0 {
            blowup_data = Some(p.field);
        }
    }
    s.push("evolution", "k_sign_invariant_while_trapped", flips as f64, "== 0".into(), flips == 0, detail);

    if !fast {
        if let Some(psi) = blowup_data {
            let grad0 = psi.grad_sq();
            let cfg = EvolveConfig { dt0: 1e-3, t_end: 40.0, record_every: 25, adapt: Some(1e-3 * grad0), ..Default::default() };
            let traj = evolve(&psi, &cfg, None)?;
            let tail: Vec<f64> = traj.rows.iter().rev().take(20).map(|r| r.grad_sq).collect();
            let monotone = tail.windows(2).all(|w| w[0] >= w[1]);
            let tripped = matches!(traj.verdict, Verdict::BlowupDetected { .. });
            s.push(
                "evolution",
                "blowup_gradient_monotone",
                tail.len() as f64,
                "monotone over last 20 rows".into(),
                tripped && monotone && tail.len() == 20,
                format!("verdict {}", traj.verdict.name()),
            );
        }
    }
    Ok(())
}

fn special_checks(s: &mut Suite, gs: &GroundState, ctx: &OrbitContext, fast: bool, pool: &rayon::ThreadPool) -> CliResult<()> {
    let e = ctx.e_omega();
    let t0 = t0_for(1e-3, e);
    let mut ks = Vec::new();
    let mut rates = Vec::new();
    for a in [1.0, -1.0] {
        let series = build_profile_series(a, 3, ctx)?;
        let data = make_special_initial_data(&series, t0, ctx)?;
        ks.push(data.k);
        let dt = if fast { 5e-3 } else { 1e-3 };
        let cfg = EvolveConfig { dt0: dt, t_end: 4.0 / e, record_every: if fast { 2 } else { 10 }, ..Default::default() };
        let traj = evolve(&data.psi0, &cfg, Some(ctx))?;
        rates.push(fit_decay_rate(&traj, (0.5 / e, 4.0 / e), 1e-6)?.rate / e);
    }
    s.push(
        "special_and_classify",
        "sign_dichotomy",
        ks[0] * ks[1],
        "< 0".into(),
        ks[0] * ks[1] < 0.0,
        format!("K(A=+1) = {:+.4e}, K(A=-1) = {:+.4e}", ks[0], ks[1]),
    );
    let worst = rates.iter().map(|r| (r - 1.0).abs()).fold(0.0f64, f64::max);
    s.push(
        "special_and_classify",
        "forward_trapping_rate",
        worst,
        "<= 0.1".into(),
        worst <= 0.1,
        format!("rate/e: A=+1 {:.4}, A=-1 {:.4}", rates[0], rates[1]),
    );
    if fast {
        return Ok(());
    }

    // label stability under dt/2 and n → 2n on the trichotomy sweep
    let base = ClassifyConfig::default();
    let labels = |ctx: &OrbitContext, cfg: ClassifyConfig| -> CliResult<Vec<(Label, usize)>> {
        let cases = sweep_initial_data(ctx)?;
        pool.install(|| {
            cases
                .par_iter()
                .map(|c| classify(&c.psi0, ctx, &cfg).map(|r| (r.label, r.evidence.k_flips_while_trapped)))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(Into::into)
    };
    let l0 = labels(ctx, base)?;
    let mut half = base;
    half.evolve.dt0 *= 0.5;
    let l1 = labels(ctx, half)?;
    let g2 = RadialGrid::with_order(gs.grid().r_max(), 2 * gs.grid().n() + 1, gs.grid().order())?.shared();
    let gs2 = solve_on_grid(&g2, gs.omega, Nonlinearity::CubicQuintic, &SolverConfig::default(), Some(gs.q0))?;
    let ctx2 = OrbitContext::new(&gs2)?;
    let l2 = labels(&ctx2, base)?;
    let changed = l0.iter().zip(&l1).zip(&l2).filter(|((a, b), c)| a.0 != b.0 || a.0 != c.0).count();
    let names = |l: &[(Label, usize)]| l.iter().map(|x| x.0.name()).collect::<Vec<_>>().join(",");
    s.push("special_and_classify", "label_stability", changed as f64, "== 0".into(), changed == 0, names(&l0));
    let flips: usize = l0.iter().map(|x| x.1).sum();
    s.push("special_and_classify", "k_sign_invariant_per_trajectory", flips as f64, "== 0".into(), flips == 0, String::new());
    Ok(())
}

fn cli_checks(s: &mut Suite, gs: &GroundState) -> CliResult<()> {
    let c = Checkpoint::new(gs.q.to_complex().rotated(0.4), 1.25, Some(gs.omega), Encoding::Base64);
    let bytes = c.to_bytes()?;
    let again = Checkpoint::from_bytes(&bytes)?.to_bytes()?;
    s.push("cli", "checkpoint_round_trip", 0.0, "identical bytes".into(), bytes == again, String::new());

    let g = RadialGrid::new(20.0, 400)?.shared();
    let psi0 = RadialField::from_fn(g, |r| Complex64::new(0.5 * (-r * r).exp(), 0.0));
    let run = || -> CliResult<String> {
        let t = evolve(&psi0, &EvolveConfig { dt0: 1e-2, t_end: 0.2, record_every: 2, ..Default::default() }, None)?;
        Ok(trajectory_csv(&t)? + &to_json(&GroundStateFixture::from_state(gs))?)
    };
    let same = run()? == run()?;
    s.push("cli", "deterministic_output", 0.0, "identical bytes".into(), same, String::new());
    Ok(())
}
