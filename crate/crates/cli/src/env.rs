//! State shared by every subcommand: output root, configuration, worker
//! count, and fixture lookup.

use std::path::{Path, PathBuf};

use cqnls_core::functionals::Nonlinearity;
use cqnls_core::ground_state::{GridSpec, GroundState, SolverConfig};
use cqnls_core::modulation::OrbitContext;
use cqnls_core::{GridRef, RadialGrid, StencilOrder};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{GridHeader, GroundStateFixture, SpectrumFixture};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CQNLS_OUT";
pub const DEFAULT_OUT: &str = "cqnls-out";

#[derive(Debug, Clone)]
pub struct Env {
    pub out: PathBuf,
    pub config: RunConfig,
    pub workers: Option<usize>,
}

impl Env {
    pub fn new(out: impl Into<PathBuf>, config: RunConfig) -> Self {
        Self { out: out.into(), config, workers: None }
    }

    pub fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.out.clone(), |p, s| p.join(s))
    }

    pub fn ground_state_path(&self, omega: f64, nl: Nonlinearity) -> PathBuf {
        let stem = match nl {
            Nonlinearity::CubicQuintic => "omega",
            Nonlinearity::CubicOnly => "cubic-omega",
        };
        self.path(&["groundstate", &format!("{stem}-{}.json", tag(omega))])
    }

    pub fn spectrum_path(&self, omega: f64) -> PathBuf {
        self.path(&["spectrum", &format!("omega-{}.json", tag(omega))])
    }

    /// Grid from `grid.*`, with `auto` entries filled from the frequency.
    pub fn grid_for(&self, omega: Option<f64>, nl: Nonlinearity) -> CliResult<GridRef> {
        let auto = match omega {
            Some(w) => GridSpec::for_omega(w, nl),
            None => GridSpec { r_max: 40.0, n: 2000, order: StencilOrder::default() },
        };
        let r_max = self.config.auto_f64("grid.r_max")?.unwrap_or(auto.r_max);
        let n = self.config.auto_usize("grid.n")?.unwrap_or(auto.n);
        let order = StencilOrder::from_order(self.config.usize("grid.order")?)?;
        Ok(RadialGrid::with_order(r_max, n, order)?.shared())
    }

    pub fn load_ground_state(&self, omega: f64, nl: Nonlinearity) -> CliResult<GroundState> {
        let path = self.ground_state_path(omega, nl);
        if !path.exists() {
            return Err(CliError::Missing(format!(
                "ground-state fixture {} (run `groundstate --omega {omega}` first)",
                path.display()
            )));
        }
        GroundStateFixture::load(&path)?.to_state()
    }

    /// Orbit context for `ω`, reusing the spectrum fixture when it was
    /// computed on the ground state's grid.
    pub fn orbit(&self, omega: f64) -> CliResult<(GroundState, OrbitContext)> {
        let gs = self.load_ground_state(omega, Nonlinearity::CubicQuintic)?;
        let sp = self.spectrum_path(omega);
        let ctx = match SpectrumFixture::load(&sp) {
            Ok(f) if f.grid == GridHeader::of(gs.grid()) => {
                OrbitContext::from_parts(&gs, f.to_mode(gs.grid())?, gs.domega_q_implicit()?)?
            }
            _ => OrbitContext::new(&gs)?,
        };
        Ok((gs, ctx))
    }
}

/// Frequency as it appears in file names.
pub fn tag(x: f64) -> String {
    format!("{x}")
}

pub fn validate_omega(omega: f64, nl: Nonlinearity) -> CliResult<()> {
    let max = SolverConfig::default().omega_max;
    let ok = omega.is_finite()
        && omega > 0.0
        && match nl {
            Nonlinearity::CubicQuintic => omega <= max,
            Nonlinearity::CubicOnly => true,
        };
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(match nl {
            Nonlinearity::CubicQuintic => format!("omega must lie in (0, {max}], got {omega}"),
            Nonlinearity::CubicOnly => format!("omega must be positive, got {omega}"),
        }))
    }
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
