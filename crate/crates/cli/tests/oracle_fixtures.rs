use std::path::PathBuf;

use cqnls::commands::{dense_oracle, spectrum_fixture};
use cqnls::files::{GridHeader, GroundStateFixture, SpectrumFixture};
use cqnls::oracle::{cubic_ground_state, CubicOracle};
use cqnls_core::functionals::Nonlinearity;
use cqnls_core::ground_state::{solve_ground_state, SolverConfig};
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[derive(Deserialize)]
struct Dense {
    omega: f64,
    grid: GridHeader,
    e_omega_dense: f64,
    e_omega_iterative: f64,
}

fn load<T: for<'de> Deserialize<'de>>(name: &str) -> T {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[test]
fn cubic_oracle_reproduces_its_fixture() {
    let frozen: CubicOracle = load("cubic-omega-1.json");
    let again = cubic_ground_state(1.0).unwrap();
    assert!(rel(again.q0, frozen.q0) < 1e-12);
    assert!(rel(again.l2_sq, frozen.l2_sq) < 1e-12);
    assert!((frozen.q0 - 4.3373877).abs() < 1e-6);
    assert!((frozen.l2_sq - 18.89725).abs() < 1e-4);
}

#[test]
fn cubic_solver_matches_oracle() {
    let frozen: CubicOracle = load("cubic-omega-1.json");
    let gs = solve_ground_state(1.0, Nonlinearity::CubicOnly, &SolverConfig::default()).unwrap();
    let (dq, dm) = (rel(gs.q0, frozen.q0), rel(gs.q.l2_sq(), frozen.l2_sq));
    println!("Q(0) rel {dq:.2e}, |Q|^2 rel {dm:.2e}");
    assert!(dq < 1e-3 && dm < 1e-3);
}

#[test]
fn dense_and_iterative_e_omega_agree() {
    for w in ["0.02", "0.05", "0.1"] {
        let d: Dense = load(&format!("dense-omega-{w}-n400.json"));
        assert_eq!(d.grid.n, 400);
        let r = rel(d.e_omega_iterative, d.e_omega_dense);
        println!("omega {}: e {:.12} rel {r:.2e}", d.omega, d.e_omega_dense);
        assert!(r < 1e-6);
    }
    let frozen: Dense = load("dense-omega-0.05-n400.json");
    let again = dense_oracle(0.05, 400).unwrap();
    assert!(rel(again.e_omega_dense, frozen.e_omega_dense) < 1e-10);
    assert_eq!(again.grid, frozen.grid);
}

#[test]
fn ground_state_fixture_reloads_and_reproduces() {
    let f = GroundStateFixture::load(&fixture("groundstate-omega-0.05.json")).unwrap();
    let gs = f.to_state().unwrap();
    assert!(rel(gs.values.mass, f.values.mass) < 1e-14);
    assert!(rel(gs.values.action, f.values.action) < 1e-14);
    let fresh = solve_ground_state(0.05, Nonlinearity::CubicQuintic, &SolverConfig::default()).unwrap();
    assert_eq!(GridHeader::of(fresh.grid()), f.grid);
    assert!(rel(fresh.q0, f.q0) < 1e-10);
    assert!(rel(fresh.values.mass, f.values.mass) < 1e-10);
    assert!(rel(fresh.values.energy, f.values.energy) < 1e-8);
    assert!(fresh.residual < 1e-8 && f.residual < 1e-8);
}

#[test]
fn spectrum_fixture_matches_recomputation() {
    let gs = GroundStateFixture::load(&fixture("groundstate-omega-0.05.json")).unwrap().to_state().unwrap();
    let frozen = SpectrumFixture::load(&fixture("spectrum-omega-0.05.json")).unwrap();
    let mode = frozen.to_mode(gs.grid()).unwrap();
    let again = spectrum_fixture(&gs, false).unwrap();
    assert!(rel(again.e_omega, frozen.e_omega) < 1e-10);
    assert!((2.0 * mode.pairing - 1.0).abs() < 1e-10);
    assert!(mode.sign_q2 < 0.0);
    assert_eq!(again.y1.len(), frozen.y1.len());
}
