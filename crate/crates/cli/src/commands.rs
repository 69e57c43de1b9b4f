//! Subcommand implementations. Each returns the text for stdout; artifacts
//! go under the output root.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use cqnls_core::evolution::{conserved_drift, detect_scatter, evolve, TrajectoryRecord, Verdict};
use cqnls_core::functionals::{FunctionalValues, Nonlinearity};
use cqnls_core::ground_state::{continue_branch, solve_on_grid, GridPolicy, GroundState, SolverConfig};
use cqnls_core::linearized::{check_spectral_inequalities, solve_internal_mode, LinearizedOperators, ModeOptions};
use cqnls_core::modulation::{decompose, OrbitContext};
use cqnls_core::sobolev::{sobolev_constant, sobolev_constant_closed_form};
use cqnls_core::special::{
    build_profile_series, classify, fit_decay_rate, make_special_initial_data, sweep_initial_data, t0_for,
    ClassificationResult, Direction, ExpFit, SpecialData,
};
use cqnls_core::{Complex64, RadialField, RadialGrid};

use crate::env::{tag, validate_omega, Env};
use crate::error::{CliError, CliResult};
use crate::files::{
    modulation_csv, records_csv, trajectory_csv, write_text, Checkpoint, Encoding, GridHeader, GroundStateFixture,
    SpectrumFixture, SPECTRUM_FORMAT,
};
use crate::format::{sig17, sig9, table, to_json};
use crate::oracle::{cubic_ground_state, dense_e_omega};

/// Text for stdout plus an optional failure that sets the exit code after
/// the text is printed.
#[derive(Debug)]
pub struct Report {
    pub text: String,
    pub failure: Option<CliError>,
}

impl Report {
    fn ok(text: String) -> Self {
        Self { text, failure: None }
    }
}

fn failures(names: Vec<String>) -> Option<CliError> {
    if names.is_empty() {
        None
    } else {
        Some(CliError::Invariant(names))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Forward,
    Backward,
}

impl DirectionArg {
    pub fn core(self) -> Direction {
        match self {
            DirectionArg::Forward => Direction::Forward,
            DirectionArg::Backward => Direction::Backward,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DirectionArg::Forward => "forward",
            DirectionArg::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Gaussian,
    Groundstate,
    Checkpoint,
    Random,
}

fn a_tag(a: f64) -> String {
    format!("A{a:+}")
}

fn safe_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+') { c } else { '_' }).collect()
}

fn values_row(gs: &GroundState) -> Vec<String> {
    let v = &gs.values;
    vec![sig9(gs.omega), sig9(gs.q0), sig9(v.mass), sig9(v.energy), sig9(v.k), sig9(v.action)]
}

const VALUES_HEADER: [&str; 6] = ["omega", "q0", "M", "E", "K", "m_omega"];

// ---------------------------------------------------------------- groundstate

#[derive(Debug, Clone, Args)]
pub struct GroundStateArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub omega: f64,
    /// Solve −ΔR + ωR − R³ = 0 and compare with the shooting oracle.
    #[arg(long)]
    pub cubic_only: bool,
}

pub fn groundstate(env: &Env, args: &GroundStateArgs) -> CliResult<Report> {
    let nl = if args.cubic_only { Nonlinearity::CubicOnly } else { Nonlinearity::CubicQuintic };
    validate_omega(args.omega, nl)?;
    let grid = env.grid_for(Some(args.omega), nl)?;
    let cfg = SolverConfig::default();
    let gs = solve_on_grid(&grid, args.omega, nl, &cfg, None)?;
    let bad = gs.violations(&cfg);
    if !bad.is_empty() {
        return Err(CliError::Numeric(format!("ground state violates {}", bad.join(", "))));
    }
    let path = env.ground_state_path(args.omega, nl);
    GroundStateFixture::from_state(&gs).save(&path)?;
    let mut text = table(&VALUES_HEADER, &[values_row(&gs)]);
    if args.cubic_only {
        let o = cubic_ground_state(args.omega)?;
        let l2 = gs.q.l2_sq();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        text += "\n";
        text += &table(
            &["quantity", "solver", "oracle", "relative"],
            &[
                vec!["Q(0)".into(), sig9(gs.q0), sig9(o.q0), sig9(rel(gs.q0, o.q0))],
                vec!["|Q|_2^2".into(), sig9(l2), sig9(o.l2_sq), sig9(rel(l2, o.l2_sq))],
            ],
        );
    }
    text += &format!("fixture: {}\n", path.display());
    Ok(Report::ok(text))
}

// ---------------------------------------------------------------- branch

#[derive(Debug, Clone, Args)]
pub struct BranchArgs {
    /// Explicit frequencies (comma separated); overrides --from/--to/--steps.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub omegas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.02)]
    pub from: f64,
    #[arg(long, default_value_t = 0.2)]
    pub to: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
}

#[derive(Serialize)]
struct BranchPoint {
    omega: f64,
    n: usize,
    q0: f64,
    mass: f64,
    energy: f64,
    action: f64,
    k_over_action: f64,
    residual: f64,
    action_margin: f64,
}

#[derive(Serialize)]
struct BranchJson {
    points: Vec<BranchPoint>,
    mass_slopes: Vec<(f64, f64)>,
    sigma: f64,
    sigma_closed_form: f64,
    action_bound: f64,
}

pub fn branch_omegas(args: &BranchArgs) -> CliResult<Vec<f64>> {
    let omegas = match &args.omegas {
        Some(w) => w.clone(),
        None => {
            if args.steps < 3 {
                return Err(CliError::Validation("a branch needs at least three frequencies".into()));
            }
            let d = (args.to - args.from) / (args.steps - 1) as f64;
            (0..args.steps).map(|i| args.from + d * i as f64).collect()
        }
    };
    for &w in &omegas {
        validate_omega(w, Nonlinearity::CubicQuintic)?;
    }
    Ok(omegas)
}

pub fn branch(env: &Env, args: &BranchArgs) -> CliResult<Report> {
    let omegas = branch_omegas(args)?;
    let policy = if env.config.raw("grid.n") == "auto" && env.config.raw("grid.r_max") == "auto" {
        GridPolicy::PerOmega
    } else {
        GridPolicy::Shared(env.grid_for(omegas.first().copied(), Nonlinearity::CubicQuintic)?)
    };
    let b = continue_branch(&omegas, Nonlinearity::CubicQuintic, &SolverConfig::default(), &policy)
        .map_err(|f| CliError::from(f.error))?;
    let sob = sobolev_constant(200.0, 0.01)?;
    let bound = sob.action_bound();
    for gs in &b.states {
        GroundStateFixture::from_state(gs).save(&env.ground_state_path(gs.omega, Nonlinearity::CubicQuintic))?;
    }
    let points: Vec<BranchPoint> = b
        .states
        .iter()
        .map(|gs| BranchPoint {
            omega: gs.omega,
            n: gs.grid().n(),
            q0: gs.q0,
            mass: gs.values.mass,
            energy: gs.values.energy,
            action: gs.values.action,
            k_over_action: gs.values.k / gs.values.action,
            residual: gs.residual,
            action_margin: bound - gs.values.action,
        })
        .collect();
    let slope_at = |w: f64| b.mass_slope.iter().find(|(x, _)| *x == w).map(|(_, s)| *s);
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                sig17(p.omega),
                sig17(p.q0),
                sig17(p.mass),
                sig17(p.energy),
                sig17(p.action),
                slope_at(p.omega).map(sig17).unwrap_or_default(),
                sig17(p.action_margin),
            ]
        })
        .collect();
    let header = ["omega", "q0", "mass", "energy", "action", "dmass_domega", "action_margin"];
    write_text(&env.path(&["branch", "branch.csv"]), &records_csv(&header, &rows)?)?;
    let mut bad = Vec::new();
    for (w, s) in &b.mass_slope {
        if !(*s < 0.0) {
            bad.push(format!("mass_slope_negative@omega={w}"));
        }
    }
    for p in &points {
        if !(p.action_margin > 0.0) {
            bad.push(format!("action_below_sobolev_bound@omega={}", p.omega));
        }
    }
    let json = BranchJson {
        mass_slopes: b.mass_slope.clone(),
        sigma: sob.sigma,
        sigma_closed_form: sobolev_constant_closed_form(),
        action_bound: bound,
        points,
    };
    write_text(&env.path(&["branch", "branch.json"]), &to_json(&json)?)?;
    let human: Vec<Vec<String>> = b
        .states
        .iter()
        .map(|gs| {
            let mut r = values_row(gs);
            r.push(slope_at(gs.omega).map(sig9).unwrap_or_else(|| "-".into()));
            r
        })
        .collect();
    let mut text = table(&["omega", "q0", "M", "E", "K", "m_omega", "dM/domega"], &human);
    text += &format!("sigma^(3/2)/3 = {}\n", sig9(bound));
    Ok(Report { text, failure: failures(bad) })
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub omega: f64,
    /// Also compute e_ω with the dense eigen-solver (n ≤ 1500).
    #[arg(long)]
    pub dense: bool,
}

pub fn spectrum_fixture(gs: &GroundState, dense: bool) -> CliResult<SpectrumFixture> {
    let ops = LinearizedOperators::new(gs);
    let mode = solve_internal_mode(&ops, &ModeOptions::default())?;
    let dq = gs.domega_q_implicit()?;
    let rep = check_spectral_inequalities(&mode, &gs.q, &dq)?;
    let dense_e_omega = if dense { Some(dense_e_omega(&ops)?) } else { None };
    Ok(SpectrumFixture {
        format: SPECTRUM_FORMAT.into(),
        omega: gs.omega,
        grid: GridHeader::of(gs.grid()),
        e_omega: mode.e_omega,
        residual_y1: mode.residuals.0,
        residual_y2: mode.residuals.1,
        pairing: mode.pairing,
        q_y2: mode.sign_q2,
        q_y1: rep.q_y1,
        dq_y2: rep.dq_y2,
        smallness_lhs: rep.smallness_lhs,
        smallness_rhs: rep.smallness_rhs,
        smallness_margin: rep.smallness_margin(),
        iterations: mode.iterations,
        dense_e_omega,
        encoding: Encoding::Hex,
        y1: SpectrumFixture::encode_profile(mode.y1.samples()),
        y2: SpectrumFixture::encode_profile(mode.y2.samples()),
    })
}

pub fn spectrum(env: &Env, args: &SpectrumArgs) -> CliResult<Report> {
    validate_omega(args.omega, Nonlinearity::CubicQuintic)?;
    let gs = env.load_ground_state(args.omega, Nonlinearity::CubicQuintic)?;
    let f = spectrum_fixture(&gs, args.dense)?;
    let path = env.spectrum_path(args.omega);
    f.save(&path)?;
    let mut rows = vec![
        vec!["e_omega".into(), sig9(f.e_omega)],
        vec!["residual L+Y1 + e Y2".into(), sig9(f.residual_y1)],
        vec!["residual L-Y2 - e Y1".into(), sig9(f.residual_y2)],
        vec!["2(Y1,Y2)".into(), sig9(2.0 * f.pairing)],
        vec!["(Q,Y2)".into(), sig9(f.q_y2)],
        vec!["(Q,Y1)".into(), sig9(f.q_y1)],
        vec!["smallness margin".into(), sig9(f.smallness_margin)],
    ];
    if let Some(d) = f.dense_e_omega {
        rows.push(vec!["dense e_omega".into(), sig9(d)]);
    }
    let mut text = table(&["quantity", "value"], &rows);
    text += &format!("fixture: {}\n", path.display());
    Ok(Report::ok(text))
}

// ---------------------------------------------------------------- evolve

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[arg(long, value_enum, default_value_t = InitKind::Gaussian)]
    pub init: InitKind,
    /// Gaussian/random: peak amplitude. Ground state: ψ₀ = (1 + amp)Q.
    #[arg(long, allow_hyphen_values = true)]
    pub amp: Option<f64>,
    /// Frequency of the orbit used for d_ω and the ground-state initial data.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Checkpoint to start from with --init checkpoint.
    #[arg(long)]
    pub from: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvolveJson {
    init: InitKind,
    amp: f64,
    omega: Option<f64>,
    seed: Option<u64>,
    grid: GridHeader,
    orbit: bool,
    sponge: bool,
    adapt: Option<f64>,
    dt0: f64,
    t_start: f64,
    t_end: f64,
    steps: usize,
    verdict: &'static str,
    t_blowup: Option<f64>,
    reason: String,
    scatter_proxy: bool,
    mass_drift: f64,
    energy_drift: f64,
    k_initial: f64,
    modulation_rows: usize,
    modulation_skipped: usize,
}

fn random_field(grid: &cqnls_core::GridRef, amp: f64, width: f64, seed: u64) -> RadialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(Complex64, f64)> = (0..4)
        .map(|_| {
            let c = Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
            (c, width * rng.gen_range(0.5..2.0))
        })
        .collect();
    let f = RadialField::from_fn(grid.clone(), |r| terms.iter().map(|(c, w)| c * (-r * r / (w * w)).exp()).sum());
    f.scaled(amp / f.max_abs())
}

fn t_est(v: &Verdict) -> Option<f64> {
    match v {
        Verdict::BlowupDetected { t_est } => Some(*t_est),
        _ => None,
    }
}

pub fn evolve_cmd(env: &Env, args: &EvolveArgs) -> CliResult<Report> {
    let cfgr = &env.config;
    if let Some(w) = args.omega {
        validate_omega(w, Nonlinearity::CubicQuintic)?;
    }
    let mut omega = args.omega;
    let mut t_start = 0.0;
    let mut seed = None;
    let (psi0, amp) = match args.init {
        InitKind::Gaussian => {
            let amp = args.amp.unwrap_or(1.0);
            let w = cfgr.f64("init.width")?;
            let grid = env.grid_for(omega, Nonlinearity::CubicQuintic)?;
            (RadialField::from_fn(grid, |r| Complex64::new(amp * (-r * r / (w * w)).exp(), 0.0)), amp)
        }
        InitKind::Random => {
            let amp = args.amp.unwrap_or(0.1);
            let s = cfgr.usize("seed")? as u64;
            seed = Some(s);
            let grid = env.grid_for(omega, Nonlinearity::CubicQuintic)?;
            (random_field(&grid, amp, cfgr.f64("init.width")?, s), amp)
        }
        InitKind::Groundstate => {
            let w = omega.ok_or_else(|| CliError::Validation("--init groundstate needs --omega".into()))?;
            let amp = args.amp.unwrap_or(0.0);
            let gs = env.load_ground_state(w, Nonlinearity::CubicQuintic)?;
            (gs.q.to_complex().scaled(1.0 + amp), amp)
        }
        InitKind::Checkpoint => {
            let path = args.from.as_ref().ok_or_else(|| CliError::Validation("--init checkpoint needs --from".into()))?;
            let c = Checkpoint::load(path)?;
            t_start = c.header.t;
            omega = omega.or(c.header.omega);
            (c.field, args.amp.unwrap_or(0.0))
        }
    };
    if !psi0.is_finite() {
        return Err(CliError::Validation("initial data is not finite".into()));
    }
    let orbit: Option<OrbitContext> = match omega {
        Some(w) => match env.orbit(w) {
            Ok((gs, ctx)) if GridHeader::of(gs.grid()) == GridHeader::of(psi0.grid()) => Some(ctx),
            Ok(_) => None,
            Err(CliError::Missing(_)) if args.init != InitKind::Groundstate => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    let n0 = psi0.norms();
    let k0 = FunctionalValues::from_norms(&n0, omega.unwrap_or(0.0)).k;
    let mut cfg = cfgr.evolve()?;
    if cfgr.switch("sponge")?.is_none() && k0 > cfgr.f64("classify.k_zero")? * n0.grad_sq {
        cfg.sponge = Some(cfgr.sponge()?);
    }
    if cfgr.adapt_is_auto() {
        cfg.adapt = Some(cfg.dt0 * n0.grad_sq);
    }
    let mut traj = evolve(&psi0, &cfg, orbit.as_ref())?;
    shift_times(&mut traj, t_start);

    let dir = env.path(&["evolve", &match omega {
        Some(w) => format!("{}-omega-{}", init_name(args.init), tag(w)),
        None => init_name(args.init).to_string(),
    }]);
    write_text(&dir.join("trajectory.csv"), &trajectory_csv(&traj)?)?;
    let t_final = traj.rows.last().map_or(t_start, |r| r.t);
    Checkpoint::new(traj.final_state.clone(), t_final, omega, Encoding::Base64).save(&dir.join("final.ckpt"))?;
    let (mut mod_rows, mut skipped) = (0, 0);
    if let Some(ctx) = &orbit {
        let mut states = Vec::new();
        let mcfg = cfgr.modulation()?;
        for (t, f) in &traj.checkpoints {
            match decompose(*t, f, ctx, &mcfg) {
                Ok(s) => states.push(s),
                Err(_) => skipped += 1,
            }
        }
        mod_rows = states.len();
        if !states.is_empty() {
            write_text(&dir.join("modulation.csv"), &modulation_csv(&states)?)?;
        }
    }
    let (dm, de) = conserved_drift(&traj);
    let json = EvolveJson {
        init: args.init,
        amp,
        omega,
        seed,
        grid: GridHeader::of(psi0.grid()),
        orbit: orbit.is_some(),
        sponge: cfg.sponge.is_some(),
        adapt: cfg.adapt,
        dt0: cfg.dt0,
        t_start,
        t_end: t_start + cfg.t_end,
        steps: traj.steps,
        verdict: traj.verdict.name(),
        t_blowup: t_est(&traj.verdict),
        reason: traj.reason.clone(),
        scatter_proxy: detect_scatter(&traj, None),
        mass_drift: dm,
        energy_drift: de,
        k_initial: k0,
        modulation_rows: mod_rows,
        modulation_skipped: skipped,
    };
    write_text(&dir.join("result.json"), &to_json(&json)?)?;
    let text = table(
        &["verdict", "t_final", "steps", "sponge", "mass_drift", "energy_drift"],
        &[vec![
            traj.verdict.name().into(),
            sig9(t_final),
            traj.steps.to_string(),
            json.sponge.to_string(),
            sig9(dm),
            sig9(de),
        ]],
    ) + &format!("output: {}\n", dir.display());
    Ok(Report::ok(text))
}

fn init_name(k: InitKind) -> &'static str {
    match k {
        InitKind::Gaussian => "gaussian",
        InitKind::Groundstate => "groundstate",
        InitKind::Checkpoint => "checkpoint",
        InitKind::Random => "random",
    }
}

fn shift_times(traj: &mut TrajectoryRecord, t0: f64) {
    if t0 == 0.0 {
        return;
    }
    traj.times.iter_mut().for_each(|t| *t += t0);
    traj.rows.iter_mut().for_each(|r| r.t += t0);
    traj.checkpoints.iter_mut().for_each(|(t, _)| *t += t0);
    if let Verdict::BlowupDetected { t_est } = &mut traj.verdict {
        *t_est += t0;
    }
}

// ---------------------------------------------------------------- special / classify

#[derive(Debug, Clone, Args)]
pub struct SpecialArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub omega: f64,
    /// Amplitude A of the special solution (±1).
    #[arg(long = "A", allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
}

#[derive(Serialize)]
pub struct FitJson {
    pub rate: f64,
    pub rate_over_e: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

impl FitJson {
    fn new(f: &ExpFit, scale: f64) -> Self {
        Self { rate: f.rate, rate_over_e: f.rate / scale, intercept: f.intercept, r_squared: f.r_squared, samples: f.samples }
    }
}

#[derive(Serialize)]
pub struct EvidenceJson {
    pub k_initial: f64,
    pub k_sign: i8,
    pub k_positive_rows: usize,
    pub k_negative_rows: usize,
    pub k_flips_while_trapped: usize,
    pub d_max: f64,
    pub d_final: f64,
    pub decay_rate: Option<f64>,
    pub one_pass: String,
    pub verdict: &'static str,
    pub t_blowup: Option<f64>,
    pub sponge: bool,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub t_final: f64,
    pub times: Vec<f64>,
    pub k_history: Vec<f64>,
    pub d_history: Vec<Option<f64>>,
}

#[derive(Serialize)]
pub struct LabelJson {
    pub omega: f64,
    pub e_omega: f64,
    pub case: String,
    pub direction: &'static str,
    pub label: &'static str,
    pub consistent_with_k_sign: bool,
    pub evidence: EvidenceJson,
}

fn label_json(omega: f64, e: f64, case: String, dir: DirectionArg, r: &ClassificationResult) -> LabelJson {
    let ev = &r.evidence;
    LabelJson {
        omega,
        e_omega: e,
        case,
        direction: dir.name(),
        label: r.label.name(),
        consistent_with_k_sign: r.consistent_with_k_sign(),
        evidence: EvidenceJson {
            k_initial: ev.k_initial,
            k_sign: ev.k_sign,
            k_positive_rows: ev.k_positive_rows,
            k_negative_rows: ev.k_negative_rows,
            k_flips_while_trapped: ev.k_flips_while_trapped,
            d_max: ev.d_max,
            d_final: ev.d_final,
            decay_rate: ev.decay_rate,
            one_pass: format!("{:?}", ev.one_pass),
            verdict: ev.verdict.name(),
            t_blowup: t_est(&ev.verdict),
            sponge: ev.sponge,
            mass_drift: ev.mass_drift,
            energy_drift: ev.energy_drift,
            t_final: ev.t_final,
            times: ev.times.clone(),
            k_history: ev.k_history.clone(),
            d_history: ev.d_history.iter().map(|d| d.is_finite().then_some(*d)).collect(),
        },
    }
}

/// Special-solution initial data from the `series.*` settings.
pub fn special_data(env: &Env, a: f64, ctx: &OrbitContext) -> CliResult<(SpecialData, cqnls_core::special::SeriesProfile)> {
    if !(a.is_finite() && a != 0.0) {
        return Err(CliError::Validation(format!("A must be a nonzero number, got {a}")));
    }
    let k = env.config.usize("series.k")?;
    let x0 = env.config.f64("series.x0")?;
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(CliError::Validation(format!("series.x0 must lie in (0, 1), got {x0}")));
    }
    let series = build_profile_series(a, k, ctx)?;
    let data = make_special_initial_data(&series, t0_for(x0, ctx.e_omega()), ctx)?;
    Ok((data, series))
}

#[derive(Serialize)]
struct SpecialJson {
    omega: f64,
    a: f64,
    k: usize,
    x0: f64,
    t0: f64,
    direction: &'static str,
    e_omega: f64,
    pivot_ratios: Vec<f64>,
    residual_order: FitJson,
    expected_order_over_e: f64,
    k_initial: f64,
    mass_offset: f64,
    energy_offset: f64,
    forward: Option<ForwardJson>,
    backward: Option<LabelJson>,
}

#[derive(Serialize)]
struct ForwardJson {
    window: (f64, f64),
    fit: FitJson,
    verdict: &'static str,
    mass_drift: f64,
    energy_drift: f64,
}

pub fn special(env: &Env, args: &SpecialArgs) -> CliResult<Report> {
    validate_omega(args.omega, Nonlinearity::CubicQuintic)?;
    let (_, ctx) = env.orbit(args.omega)?;
    let e = ctx.e_omega();
    let (data, mut series) = special_data(env, args.a, &ctx)?;
    let order = series.measure_residual_order(&ctx, 0.05, 0.002, 8)?;
    let dir = env.path(&["special", &format!("omega-{}", tag(args.omega)), &format!("{}-{}", a_tag(args.a), args.direction.name())]);
    let (mut forward, mut backward) = (None, None);
    let mut rows = vec![
        vec!["e_omega".into(), sig9(e)],
        vec!["K(psi0)".into(), sig9(data.k)],
        vec!["residual order / e".into(), sig9(order.rate / e)],
    ];
    match args.direction {
        DirectionArg::Forward => {
            let c = &env.config;
            let window = (c.f64("fit.start")? / e, c.f64("fit.end")? / e);
            let mut cfg = c.evolve()?;
            cfg.t_end = window.1;
            cfg.sponge = None;
            cfg.adapt = None;
            let traj = evolve(&data.psi0, &cfg, Some(&ctx))?;
            write_text(&dir.join("trajectory.csv"), &trajectory_csv(&traj)?)?;
            let fit = fit_decay_rate(&traj, window, c.f64("classify.noise_floor")?)?;
            let (dm, de) = conserved_drift(&traj);
            rows.push(vec!["decay rate / e".into(), sig9(fit.rate / e)]);
            forward = Some(ForwardJson { window, fit: FitJson::new(&fit, e), verdict: traj.verdict.name(), mass_drift: dm, energy_drift: de });
        }
        DirectionArg::Backward => {
            let mut cfg = env.config.classify()?;
            cfg.direction = Direction::Backward;
            let r = classify(&data.psi0, &ctx, &cfg)?;
            rows.push(vec!["label".into(), r.label.name().into()]);
            backward = Some(label_json(args.omega, e, a_tag(args.a), args.direction, &r));
        }
    }
    let json = SpecialJson {
        omega: args.omega,
        a: args.a,
        k: series.k,
        x0: env.config.f64("series.x0")?,
        t0: data.t0,
        direction: args.direction.name(),
        e_omega: e,
        pivot_ratios: series.pivot_ratios.clone(),
        residual_order: FitJson::new(&order, e),
        expected_order_over_e: (series.k + 1) as f64,
        k_initial: data.k,
        mass_offset: data.mass_offset,
        energy_offset: data.energy_offset,
        forward,
        backward,
    };
    write_text(&dir.join("report.json"), &to_json(&json)?)?;
    Ok(Report::ok(table(&["quantity", "value"], &rows) + &format!("output: {}\n", dir.display())))
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub omega: f64,
    #[arg(long = "A", allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
}

pub fn classify_cmd(env: &Env, args: &ClassifyArgs) -> CliResult<Report> {
    validate_omega(args.omega, Nonlinearity::CubicQuintic)?;
    let (_, ctx) = env.orbit(args.omega)?;
    let (data, _) = special_data(env, args.a, &ctx)?;
    let mut cfg = env.config.classify()?;
    cfg.direction = args.direction.core();
    let r = classify(&data.psi0, &ctx, &cfg)?;
    let json = to_json(&label_json(args.omega, ctx.e_omega(), a_tag(args.a), args.direction, &r))?;
    let dir = env.path(&["classify", &format!("omega-{}", tag(args.omega)), &format!("{}-{}", a_tag(args.a), args.direction.name())]);
    write_text(&dir.join("label.json"), &json)?;
    Ok(Report::ok(json))
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05", allow_hyphen_values = true)]
    pub omegas: Vec<f64>,
    #[arg(long = "A", value_delimiter = ',', default_value = "-1,1", allow_hyphen_values = true)]
    pub amps: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "forward,backward")]
    pub directions: Vec<DirectionArg>,
}

fn pool(env: &Env) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = env.workers {
        if w == 0 {
            return Err(CliError::Validation("--workers must be positive".into()));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| CliError::Numeric(format!("thread pool: {e}")))
}

/// Special solutions over `(ω, A, direction)`, one directory per run.
pub fn sweep(env: &Env, args: &SweepArgs) -> CliResult<Report> {
    let mut ctxs = Vec::new();
    for &w in &args.omegas {
        validate_omega(w, Nonlinearity::CubicQuintic)?;
        ctxs.push(env.orbit(w)?.1);
    }
    let mut jobs = Vec::new();
    for (i, &w) in args.omegas.iter().enumerate() {
        for &a in &args.amps {
            for &d in &args.directions {
                jobs.push((i, w, a, d));
            }
        }
    }
    let base = env.config.classify()?;
    let results: Vec<CliResult<(f64, f64, DirectionArg, LabelJson)>> = pool(env)?.install(|| {
        jobs.par_iter()
            .map(|&(i, w, a, d)| {
                let ctx = &ctxs[i];
                let (data, _) = special_data(env, a, ctx)?;
                let cfg = cqnls_core::special::ClassifyConfig { direction: d.core(), ..base };
                let r = classify(&data.psi0, ctx, &cfg)?;
                let j = label_json(w, ctx.e_omega(), a_tag(a), d, &r);
                let dir = env.path(&["sweep", &format!("omega-{}", tag(w)), &format!("{}-{}", a_tag(a), d.name())]);
                write_text(&dir.join("label.json"), &to_json(&j)?)?;
                Ok((w, a, d, j))
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut human = Vec::new();
    for r in results {
        let (w, a, d, j) = r?;
        rows.push(vec![
            sig17(w),
            sig17(a),
            d.name().to_string(),
            j.label.to_string(),
            j.evidence.decay_rate.map(sig17).unwrap_or_default(),
            sig17(j.e_omega),
        ]);
        human.push(vec![sig9(w), format!("{a:+}"), d.name().into(), j.label.into(), sig9(j.evidence.k_initial)]);
    }
    write_text(&env.path(&["sweep", "summary.csv"]), &records_csv(&["omega", "A", "direction", "label", "rate", "e_omega"], &rows)?)?;
    Ok(Report::ok(table(&["omega", "A", "direction", "label", "K(psi0)"], &human)))
}

#[derive(Debug, Clone, Args)]
pub struct TrichotomyArgs {
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    pub omega: f64,
}

/// Twelve threshold initial conditions classified forward in time.
pub fn trichotomy(env: &Env, args: &TrichotomyArgs) -> CliResult<Report> {
    validate_omega(args.omega, Nonlinearity::CubicQuintic)?;
    let (_, ctx) = env.orbit(args.omega)?;
    let cases = sweep_initial_data(&ctx)?;
    let cfg = env.config.classify()?;
    let e = ctx.e_omega();
    let results: Vec<CliResult<LabelJson>> = pool(env)?.install(|| {
        cases
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let r = classify(&c.psi0, &ctx, &cfg)?;
                let j = label_json(args.omega, e, c.name.clone(), DirectionArg::Forward, &r);
                let dir = env.path(&["trichotomy", &format!("omega-{}", tag(args.omega)), &format!("{i:02}-{}", safe_name(&c.name))]);
                write_text(&dir.join("label.json"), &to_json(&j)?)?;
                Ok(j)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut human = Vec::new();
    let mut bad = Vec::new();
    for r in results {
        let j = r?;
        if !j.consistent_with_k_sign {
            bad.push(format!("label_matches_k_sign:{}", j.case));
        }
        if j.evidence.one_pass == "ReturnViolation" {
            bad.push(format!("one_pass:{}", j.case));
        }
        rows.push(vec![
            sig17(args.omega),
            j.case.clone(),
            sig17(j.evidence.k_initial),
            j.label.into(),
            j.consistent_with_k_sign.to_string(),
            j.evidence.one_pass.clone(),
            j.evidence.k_flips_while_trapped.to_string(),
            j.evidence.decay_rate.map(sig17).unwrap_or_default(),
            sig17(e),
        ]);
        human.push(vec![j.case.clone(), sig9(j.evidence.k_initial), j.label.into(), j.evidence.one_pass.clone()]);
    }
    let header = ["omega", "case", "k_initial", "label", "consistent", "one_pass", "k_flips", "rate", "e_omega"];
    write_text(&env.path(&["trichotomy", &format!("omega-{}", tag(args.omega)), "summary.csv"]), &records_csv(&header, &rows)?)?;
    Ok(Report { text: table(&["case", "K(psi0)", "label", "one_pass"], &human), failure: failures(bad) })
}

// ---------------------------------------------------------------- oracle

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub omega: f64,
    /// Dense e_ω on a grid with this many nodes (cubic-quintic).
    #[arg(long)]
    pub dense_n: Option<usize>,
}

#[derive(Serialize)]
pub struct DenseOracleJson {
    pub omega: f64,
    pub grid: GridHeader,
    pub e_omega_dense: f64,
    pub e_omega_iterative: f64,
}

/// Ground state and both `e_ω` values on an `n`-node grid with the default
/// extent for `ω`.
pub fn dense_oracle(omega: f64, n: usize) -> CliResult<DenseOracleJson> {
    validate_omega(omega, Nonlinearity::CubicQuintic)?;
    let spec = cqnls_core::ground_state::GridSpec::for_omega(omega, Nonlinearity::CubicQuintic);
    let grid = RadialGrid::with_order(spec.r_max, n, spec.order)?.shared();
    let gs = solve_on_grid(&grid, omega, Nonlinearity::CubicQuintic, &SolverConfig::default(), None)?;
    let ops = LinearizedOperators::new(&gs);
    let dense = dense_e_omega(&ops)?;
    let mode = solve_internal_mode(&ops, &ModeOptions::default())?;
    Ok(DenseOracleJson { omega, grid: GridHeader::of(&grid), e_omega_dense: dense, e_omega_iterative: mode.e_omega })
}

/// Writes oracle values: the cubic shooting reference, and with
/// `--dense-n` the dense `e_ω`.
pub fn oracle(env: &Env, args: &OracleArgs) -> CliResult<Report> {
    let mut text = String::new();
    match args.dense_n {
        None => {
            let o = cubic_ground_state(args.omega)?;
            let path = env.path(&["oracle", &format!("cubic-omega-{}.json", tag(args.omega))]);
            write_text(&path, &to_json(&o)?)?;
            text += &table(&["omega", "Q(0)", "|Q|_2^2"], &[vec![sig9(o.omega), sig9(o.q0), sig9(o.l2_sq)]]);
            text += &format!("written: {}\n", path.display());
        }
        Some(n) => {
            let d = dense_oracle(args.omega, n)?;
            let path = env.path(&["oracle", &format!("dense-omega-{}-n{n}.json", tag(args.omega))]);
            write_text(&path, &to_json(&d)?)?;
            text += &table(&["omega", "n", "e dense", "e iterative"], &[vec![sig9(d.omega), n.to_string(), sig9(d.e_omega_dense), sig9(d.e_omega_iterative)]]);
            text += &format!("written: {}\n", path.display());
        }
    }
    Ok(Report::ok(text))
}

// ---------------------------------------------------------------- check

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    pub omega: f64,
    /// Skip the long classification runs.
    #[arg(long)]
    pub fast: bool,
}

pub fn check(env: &Env, args: &CheckArgs) -> CliResult<Report> {
    let rows = crate::checks::run_checks(args.omega, args.fast, &pool(env)?)?;
    write_text(&env.path(&["check", &format!("omega-{}.json", tag(args.omega))]), &to_json(&rows)?)?;
    let human: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.module.into(),
                r.name.into(),
                if r.pass { "pass" } else { "FAIL" }.into(),
                sig9(r.value),
                r.tolerance.clone(),
                r.detail.clone(),
            ]
        })
        .collect();
    let bad = rows.iter().filter(|r| !r.pass).map(|r| r.name.to_string()).collect();
    let text = table(&["module", "check", "result", "value", "tolerance", "detail"], &human);
    Ok(Report { text, failure: failures(bad) })
}
