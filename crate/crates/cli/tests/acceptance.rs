//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! The report is the product, so a failing criterion prints FAIL and the
//! binary still exits 0; errors inside a criterion also print FAIL.

use std::path::PathBuf;
use std::time::Instant;

use cqnls::oracle::CubicOracle;
use cqnls_core::evolution::{
    conserved_drift, evolve, full_virial_constant, localized_virial, EvolveConfig, Verdict,
};
use cqnls_core::cutoff::VirialWeight;
use cqnls_core::functionals::{energy, FunctionalValues, Nonlinearity};
use cqnls_core::ground_state::{
    continue_branch, domega_q_fd, solve_ground_state, solve_on_grid, GridPolicy, GridSpec, GroundStateBranch,
    SolverConfig,
};
use cqnls_core::linearized::{
    check_spectral_inequalities, solve_internal_mode, LinearizedOperators, ModeOptions, Which,
};
use cqnls_core::modulation::{
    decompose, match_mass, modulation_rates, symplectic_form, ModulationConfig, OnePass, OrbitContext,
};
use cqnls_core::sobolev::{sobolev_constant, sobolev_constant_closed_form};
use cqnls_core::special::{
    build_profile_series, classify, fit_decay_rate, make_special_initial_data, sweep_initial_data, t0_for,
    threshold_projection, ClassifyConfig, Direction, Label,
};
use cqnls_core::{Complex64, RadialField, RadialGrid, RealField};
use serde::Deserialize;

type Outcome = Result<(bool, String), String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn load<T: for<'de> Deserialize<'de>>(name: &str) -> Result<T, String> {
    let text = std::fs::read_to_string(fixture(name)).map_err(|e| format!("{name}: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn norm(f: &RealField) -> f64 {
    f.l2_sq().sqrt()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

const BRANCH: [f64; 10] = [0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2];

fn c1_identities() -> Outcome {
    let cfg = SolverConfig::default();
    let (mut res, mut k, mut neh, mut sj) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for w in [0.02, 0.05, 0.1, 0.2] {
        let gs = solve_ground_state(w, Nonlinearity::CubicQuintic, &cfg).map_err(err)?;
        res = res.max(gs.residual);
        k = k.max(gs.values.k.abs() / gs.q.grad_sq());
        neh = neh.max(gs.nehari_defect().abs());
        sj = sj.max(rel(gs.values.action, gs.values.j));
    }
    let ok = res <= 1e-8 && k <= 1e-6 && neh <= 1e-8 && sj <= 1e-8;
    Ok((ok, format!("worst over 4 frequencies: residual {res:.2e} (<=1e-8), K rel {k:.2e} (<=1e-6), Nehari {neh:.2e} (<=1e-8), S-J rel {sj:.2e} (<=1e-8)")))
}

fn c2_cubic_oracle() -> Outcome {
    let oracle: CubicOracle = load("cubic-omega-1.json")?;
    let gs = solve_ground_state(1.0, Nonlinearity::CubicOnly, &SolverConfig::default()).map_err(err)?;
    let (dq, dm) = (rel(gs.q0, oracle.q0), rel(gs.q.l2_sq(), oracle.l2_sq));
    Ok((
        dq <= 1e-3 && dm <= 1e-3,
        format!("Q(0) {:.9} vs {:.9} (rel {dq:.1e}), |Q|^2 {:.9} vs {:.9} (rel {dm:.1e}); tol 1e-3", gs.q0, oracle.q0, gs.q.l2_sq(), oracle.l2_sq),
    ))
}

fn c3_slope(branch: &GroundStateBranch) -> Outcome {
    let worst = branch.mass_slope.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        worst < 0.0,
        format!("{} interior points on [0.02, 0.2], largest dM/domega {worst:.6e} (margin {:.6e} below 0)", branch.mass_slope.len(), -worst),
    ))
}

#[derive(Deserialize)]
struct Dense {
    omega: f64,
    e_omega_dense: f64,
}

fn c4_spectral() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let (mut res, mut dense, mut orth, mut norm_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut signs = true;
    for w in ["0.02", "0.05", "0.1"] {
        let d: Dense = load(&format!("dense-omega-{w}-n400.json"))?;
        let spec = GridSpec::for_omega(d.omega, Nonlinearity::CubicQuintic);
        let g = RadialGrid::with_order(spec.r_max, 400, spec.order).map_err(err)?.shared();
        let gs = solve_on_grid(&g, d.omega, Nonlinearity::CubicQuintic, &SolverConfig::default(), None).map_err(err)?;
        let m = solve_internal_mode(&LinearizedOperators::new(&gs), &ModeOptions::default()).map_err(err)?;
        dense = dense.max(rel(m.e_omega, d.e_omega_dense));
    }
    let mut small = Vec::new();
    for w in [0.02, 0.05, 0.1] {
        let gs = solve_ground_state(w, Nonlinearity::CubicQuintic, &SolverConfig::default()).map_err(err)?;
        let m = solve_internal_mode(&LinearizedOperators::new(&gs), &ModeOptions::default()).map_err(err)?;
        let rep = check_spectral_inequalities(&m, &gs.q, &gs.domega_q_implicit().map_err(err)?).map_err(err)?;
        res = res.max(m.residuals.0).max(m.residuals.1);
        orth = orth.max(rep.q_y1);
        norm_err = norm_err.max((2.0 * rep.pairing - 1.0).abs());
        signs &= rep.pairing_ok() && rep.sign_ok();
        ok &= rep.smallness_ok();
        small.push(format!("{w}: {:+.3}", rep.smallness_margin()));
    }
    ok &= res <= 1e-6 && dense <= 1e-6 && orth <= 1e-8 && norm_err <= 1e-10 && signs;
    parts.push(format!("eigen-residual {res:.1e} (<=1e-6)"));
    parts.push(format!("dense n=400 rel {dense:.1e} (<=1e-6)"));
    parts.push(format!("(Q,Y1) {orth:.1e} (<=1e-8)"));
    parts.push(format!("|2(Y1,Y2)-1| {norm_err:.1e} (<=1e-10)"));
    parts.push(format!("signs {}", if signs { "ok" } else { "wrong" }));
    parts.push(format!("smallness margin {}", small.join(", ")));
    Ok((ok, parts.join(", ")))
}

fn c5_operators() -> Outcome {
    let cfg = SolverConfig::default();
    let gs = solve_ground_state(0.05, Nonlinearity::CubicQuintic, &cfg).map_err(err)?;
    let ops = LinearizedOperators::new(&gs);
    let nq = norm(&gs.q);
    let lm = norm(&ops.apply(Which::Minus, &gs.q).map_err(err)?) / nq;
    let target = gs.q.map(|x| -2.0 * x.powi(3) - 4.0 * x.powi(5));
    let lp = norm(&(&ops.apply(Which::Plus, &gs.q).map_err(err)? - &target)) / norm(&target);
    let dq = domega_q_fd(&gs, 1e-4, &cfg).map_err(err)?;
    let ld = norm(&(&ops.apply(Which::Plus, &dq).map_err(err)? + &gs.q)) / nq;

    let g = gs.grid();
    let eta = RadialField::from_fn(g.clone(), |r| Complex64::new(0.2, -0.15) * (1.0 - r / 6.0) * (-r * r / 9.0).exp());
    let q = gs.q.to_complex();
    let eps = 1e-3;
    let act = |t: f64| -> Result<f64, String> {
        let mut u = q.clone();
        u.axpy(Complex64::new(t, 0.0), &eta).map_err(err)?;
        Ok(FunctionalValues::from_norms(&u.norms(), gs.omega).action)
    };
    let fd = (act(eps)? - 2.0 * act(0.0)? + act(-eps)?) / (eps * eps);
    let form = ops.quadratic_form(&eta).map_err(err)?;
    let qf = rel(fd, form);
    let ok = lm <= 1e-6 && lp <= 1e-6 && ld <= 1e-3 && qf <= 1e-4;
    Ok((ok, format!("L-Q {lm:.1e}, L+Q+2Q^3+4Q^5 {lp:.1e} (<=1e-6), L+ dQ_fd + Q {ld:.1e} (<=1e-3), form vs second difference {qf:.1e} (<=1e-4, eps 1e-3)")))
}

fn c6_conservation() -> Outcome {
    let gs = solve_ground_state(0.02, Nonlinearity::CubicQuintic, &SolverConfig::default()).map_err(err)?;
    let q = gs.q.to_complex();
    let cfg = EvolveConfig { dt0: 1e-3, t_end: 10.0, record_every: 100, ..Default::default() };
    let (dm, de) = conserved_drift(&evolve(&q, &cfg, None).map_err(err)?);
    // the exact standing wave drifts at round-off level, so the order is
    // measured on a nearby non-stationary profile
    let p = q.scaled(0.9);
    let drift = |dt: f64| -> Result<f64, String> {
        let cfg = EvolveConfig { dt0: dt, t_end: 10.0, record_every: 10, ..Default::default() };
        Ok(conserved_drift(&evolve(&p, &cfg, None).map_err(err)?).1)
    };
    let (a, b) = (drift(2e-3)?, drift(1e-3)?);
    let ratio = a / b;
    let ok = dm <= 1e-10 && de <= 1e-8 && (3.5..=4.5).contains(&ratio);
    Ok((ok, format!("omega 0.02, t in [0,10], dt 1e-3: mass drift {dm:.1e} (<=1e-10), energy drift {de:.1e} (<=1e-8); 0.9Q energy drift {a:.2e} -> {b:.2e}, ratio {ratio:.3} (in [3.5,4.5])")))
}

fn c7_virial() -> Outcome {
    // (a) y'' = 8K + A_R against second differences on a smooth run
    let g = RadialGrid::new(40.0, 4000).map_err(err)?.shared();
    let psi0 = RadialField::from_fn(g, |r| Complex64::new(1.0, 0.3) * (-r * r / 2.0).exp());
    let dt = 1e-3;
    let cfg = EvolveConfig { dt0: dt, t_end: 0.02, record_every: 1, virial_radius: Some(1.5), ..Default::default() };
    let tr = evolve(&psi0, &cfg, None).map_err(err)?;
    let rows = &tr.rows;
    let mut worst = 0.0f64;
    for mid in 2..rows.len() - 2 {
        let y = |i: usize| rows[i].virial.map(|v| v.y).unwrap_or(f64::NAN);
        let fd = (y(mid + 1) - 2.0 * y(mid) + y(mid - 1)) / (dt * dt);
        let pred = 8.0 * rows[mid].k + rows[mid].virial.map(|v| v.a_r).unwrap_or(f64::NAN);
        worst = worst.max((fd - pred).abs() / pred.abs().max(rows[mid].grad_sq));
    }
    let a_ok = worst <= 1e-4;

    // (b) |A_R| falls with R for concentrated data
    let g = RadialGrid::new(60.0, 3000).map_err(err)?.shared();
    let psi = RadialField::from_fn(g, |r| Complex64::new(1.2, 0.0) * (-r * r).exp());
    let radii = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
    let weight = VirialWeight::default();
    let a: Vec<f64> = radii
        .iter()
        .map(|&r| localized_virial(&psi, r, &weight, Nonlinearity::CubicQuintic).map(|v| v.a_r.abs()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let decreasing = a.windows(2).all(|w| w[1] < w[0]);
    let drop_05 = a[0] / a[4];
    let drop_1 = a[2] / a[6];
    let b_ok = decreasing && drop_05 >= 10.0 && drop_1 >= 10.0;

    // (c) constant of the full variance identity
    let g = RadialGrid::new(40.0, 2000).map_err(err)?.shared();
    let p = RadialField::from_fn(g, |r| Complex64::new(1.0, 0.2 * r) * (-r * r / 2.0).exp());
    let cfg = EvolveConfig { dt0: 2e-3, t_end: 0.4, record_every: 5, ..Default::default() };
    let fit = full_virial_constant(&evolve(&p, &cfg, None).map_err(err)?).map_err(err)?;
    let c_ok = fit.residual <= 1e-4 && (fit.c_vir - 8.0).abs() <= 1e-3;

    Ok((
        a_ok && b_ok && c_ok,
        format!(
            "(a) y'' vs 8K+A_R {worst:.1e} (<=1e-4); (b) |A_R| decreasing {decreasing}, |A_0.5|/|A_2| {drop_05:.1e}, |A_1|/|A_4| {drop_1:.1e} (>=10); (c) c_vir {:.5} (V''=c K with V=int |x|^2|psi|^2; 8 expected, 16 in the doubled-variance convention), fit residual {:.1e}",
            fit.c_vir, fit.residual
        ),
    ))
}

fn c8_special(ctx: &OrbitContext) -> Outcome {
    let e = ctx.e_omega();
    let t0 = t0_for(1e-3, e);
    let mut parts = Vec::new();
    let mut ok = true;
    let mut data = Vec::new();
    for a in [1.0, -1.0] {
        let mut series = build_profile_series(a, 3, ctx).map_err(err)?;
        let order = series.measure_residual_order(ctx, 0.05, 0.002, 8).map_err(err)?;
        let d = make_special_initial_data(&series, t0, ctx).map_err(err)?;
        let cfg = EvolveConfig { dt0: 1e-3, t_end: 4.0 / e, record_every: 10, ..Default::default() };
        let traj = evolve(&d.psi0, &cfg, Some(ctx)).map_err(err)?;
        let rate = fit_decay_rate(&traj, (0.5 / e, 4.0 / e), 1e-6).map_err(err)?.rate / e;
        let ord = order.rate / (4.0 * e);
        ok &= (ord - 1.0).abs() <= 0.1 && (rate - 1.0).abs() <= 0.1;
        parts.push(format!("A={a:+}: residual order/4e {ord:.4}, forward rate/e {rate:.4}, K {:+.2e}", d.k));
        data.push((a, d));
    }
    let negative: Vec<_> = data.iter().filter(|(_, d)| d.k < 0.0).collect();
    ok &= negative.len() == 1;
    parts.push(format!("K<0 for {} sign(s)", negative.len()));

    let back = ClassifyConfig { direction: Direction::Backward, ..Default::default() };
    for (a, d) in &data {
        if d.k < 0.0 {
            let r = classify(&d.psi0, ctx, &back).map_err(err)?;
            let tripped = matches!(r.evidence.verdict, Verdict::BlowupDetected { .. });
            ok &= tripped;
            parts.push(format!("backward A={a:+}: {} at t {:.3}", r.evidence.verdict.name(), r.evidence.t_final));
        } else {
            let mut verdicts = Vec::new();
            for dt in [1e-3, 5e-4] {
                let mut cfg = back;
                cfg.evolve.dt0 = dt;
                let r = classify(&d.psi0, ctx, &cfg).map_err(err)?;
                verdicts.push(r.evidence.verdict);
            }
            ok &= verdicts.iter().all(|v| *v == Verdict::ScatterProxy);
            parts.push(format!("backward A={a:+}: {} (dt 1e-3), {} (dt 5e-4)", verdicts[0].name(), verdicts[1].name()));
        }
    }
    Ok((ok, parts.join("; ")))
}

fn c9_trichotomy(ctx: &OrbitContext) -> Outcome {
    let cases = sweep_initial_data(ctx).map_err(err)?;
    let cfg = ClassifyConfig::default();
    let (mut consistent, mut violations) = (0, 0);
    let mut counts = [0usize; 4];
    for c in &cases {
        let r = classify(&c.psi0, ctx, &cfg).map_err(err)?;
        consistent += r.consistent_with_k_sign() as usize;
        violations += (r.evidence.one_pass == OnePass::ReturnViolation) as usize;
        counts[match r.label {
            Label::Trapped => 0,
            Label::Blowup => 1,
            Label::Scatter => 2,
            Label::Undecided => 3,
        }] += 1;
    }
    let ok = consistent == cases.len() && violations == 0 && cases.len() == 12;
    Ok((
        ok,
        format!(
            "{} cases: {consistent} consistent with sign K(psi0); Trapped {}, Blowup {}, Scatter {}, Undecided {}; ReturnViolation {violations}",
            cases.len(),
            counts[0],
            counts[1],
            counts[2],
            counts[3]
        ),
    ))
}

fn c10_modulation(ctx: &OrbitContext) -> Outcome {
    let e = ctx.e_omega();
    let mcfg = ModulationConfig::default();
    let q = ctx.q.to_complex();
    let g = q.grid().clone();
    let y1 = ctx.mode.y1.to_complex();
    let y1 = y1.scaled(q.h1_norm() / y1.h1_norm());
    let bump = RadialField::from_fn(g, |r| Complex64::new(0.3, 0.2) * (1.0 - r / 6.0) * (-r * r / 9.0).exp());
    let bump = bump.scaled(q.h1_norm() / bump.h1_norm());
    let amps = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
    let (mut recon, mut ident) = (0.0f64, 0.0f64);
    let (mut l1, mut unstable, mut eta, mut phase) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for amp in amps {
        let mut u = q.clone();
        u.axpy(Complex64::new(amp, 0.0), &y1).map_err(err)?;
        u.axpy(Complex64::new(amp, 0.0), &bump).map_err(err)?;
        let psi = match_mass(&u, ctx.mass_q).map_err(err)?.rotated(0.6);
        let st = decompose(0.0, &psi, ctx, &mcfg).map_err(err)?;
        let back = st.reconstruct(ctx).map_err(err)?;
        recon = recon.max((&back - &psi).l2_sq().sqrt() / psi.l2_sq().sqrt());
        let rates = modulation_rates(&psi, &st, ctx).map_err(err)?;
        l1.push(st.lambda1.abs());
        unstable.push(rates.unstable_residual(&st, e));
        eta.push(st.eta.h1_norm());
        phase.push(rates.phase_residual(ctx.omega));

        // d^2 on threshold data, λ₁ recomputed from the symplectic pairings
        let p = threshold_projection(&u, ctx.mass_q, ctx.energy_q, Nonlinearity::CubicQuintic).map_err(err)?;
        let sp = decompose(0.0, &p.field, ctx, &mcfg).map_err(err)?;
        let eta_p = p.field.rotated(-sp.theta).zip_map(&ctx.q, |z, q| z - q).map_err(err)?;
        let lp = symplectic_form(&eta_p, ctx.y_minus()).map_err(err)?;
        let lm = -symplectic_form(&eta_p, ctx.y_plus()).map_err(err)?;
        let lam1 = 0.5 * (lp + lm);
        let expected = energy(&p.field) - ctx.energy_q + 2.0 * e * lam1 * lam1;
        ident = ident.max(rel(sp.d_omega * sp.d_omega, expected));
    }
    let s_unst = loglog_slope(&l1, &unstable);
    let s_phase = loglog_slope(&eta, &phase);
    let ok = recon <= 1e-10 && ident <= 1e-8 && (s_unst - 2.0).abs() <= 0.2 && (s_phase - 2.0).abs() <= 0.2;
    Ok((
        ok,
        format!(
            "reconstruction {recon:.1e} (<=1e-10), d^2 identity {ident:.1e} (<=1e-8), slope |dl+/dt - e l+| vs |l1| {s_unst:.3}, slope |dtheta/dt - omega| vs |eta| {s_phase:.3} (2 +- 0.2, amplitudes 1e-4..1e-2)"
        ),
    ))
}

fn c11_sobolev(branch: &GroundStateBranch) -> Outcome {
    let est = sobolev_constant(200.0, 0.01).map_err(err)?;
    let exact = sobolev_constant_closed_form();
    let bound = est.action_bound();
    let worst = branch.states.iter().map(|s| s.values.action).fold(f64::NEG_INFINITY, f64::max);
    let ok = rel(est.sigma, exact) <= 1e-6 && worst < bound;
    Ok((
        ok,
        format!(
            "sigma {:.10} vs closed form {exact:.10} (rel {:.1e}); max m_omega over {} branch points {worst:.6} < bound {bound:.6}",
            est.sigma,
            rel(est.sigma, exact),
            branch.states.len()
        ),
    ))
}

fn report(id: usize, name: &str, start: Instant, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match outcome {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} criterion {id:>2} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let t = Instant::now();
    let branch = continue_branch(&BRANCH, Nonlinearity::CubicQuintic, &SolverConfig::default(), &GridPolicy::PerOmega)
        .map_err(|f| format!("branch stopped at index {}: {}", f.index, f.error));
    let ctx = solve_ground_state(0.05, Nonlinearity::CubicQuintic, &SolverConfig::default())
        .and_then(|gs| OrbitContext::new(&gs))
        .map_err(err);
    let with_branch = |f: fn(&GroundStateBranch) -> Outcome| match &branch {
        Ok(b) => f(b),
        Err(e) => Err(e.clone()),
    };
    let with_ctx = |f: fn(&OrbitContext) -> Outcome| match &ctx {
        Ok(c) => f(c),
        Err(e) => Err(e.clone()),
    };
    println!("setup: branch and orbit context at omega 0.05 [{:.1}s]", t.elapsed().as_secs_f64());

    let mut passed = 0;
    let mut run = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        passed += report(id, name, start, f()) as usize;
    };
    run(1, "ground-state identities", &c1_identities);
    run(2, "cubic-only oracle", &c2_cubic_oracle);
    run(3, "slope condition", &|| with_branch(c3_slope));
    run(4, "spectral relations", &c4_spectral);
    run(5, "operator identities", &c5_operators);
    run(6, "conservation", &c6_conservation);
    run(7, "virial identities", &c7_virial);
    run(8, "special solutions", &|| with_ctx(c8_special));
    run(9, "trichotomy sweep", &|| with_ctx(c9_trichotomy));
    run(10, "modulation consistency", &|| with_ctx(c10_modulation));
    run(11, "Sobolev bound", &|| with_branch(c11_sobolev));
    println!("{passed}/11 criteria pass [{:.1}s]", t.elapsed().as_secs_f64());
}
