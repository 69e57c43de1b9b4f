use cqnls_core::functionals::Nonlinearity;
use cqnls_core::ground_state::{solve_ground_state, solve_on_grid, SolverConfig};
use cqnls_core::linearized::{solve_internal_mode, LinearizedOperators, ModeOptions};
use cqnls_core::RadialGrid;

// Refining the grid must not lose the mode: on fine grids the start vector
// is far from converged and its Rayleigh estimate is useless as a shift.
#[test]
fn mode_survives_grid_refinement() {
    let cfg = SolverConfig::default();
    let gs = solve_ground_state(0.05, Nonlinearity::CubicQuintic, &cfg).unwrap();
    let base = solve_internal_mode(&LinearizedOperators::new(&gs), &ModeOptions::default()).unwrap();
    let g = gs.grid();
    let fine = RadialGrid::with_order(g.r_max(), 2 * g.n() + 1, g.order()).unwrap().shared();
    let gs2 = solve_on_grid(&fine, 0.05, Nonlinearity::CubicQuintic, &cfg, Some(gs.q0)).unwrap();
    let m = solve_internal_mode(&LinearizedOperators::new(&gs2), &ModeOptions::default()).unwrap();
    println!("e: {:.12} -> {:.12}", base.e_omega, m.e_omega);
    assert!(((m.e_omega - base.e_omega) / base.e_omega).abs() < 1e-8);
    assert!(m.residuals.0 < 1e-6 && m.residuals.1 < 1e-6);
}
