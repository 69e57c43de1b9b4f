//! Flat `key = value` run configuration.
//!
//! Precedence, lowest first: built-in defaults, a config file, `--set`
//! overrides, then dedicated command-line flags. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use cqnls_core::evolution::{EvolveConfig, Sponge};
use cqnls_core::modulation::ModulationConfig;
use cqnls_core::special::ClassifyConfig;

use crate::error::{CliError, CliResult};

/// `(key, default, description)`. `off` disables optional settings and
/// `auto` defers to a per-command choice.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("grid.r_max", "auto", "radial extent; auto picks from the decay rate"),
    ("grid.n", "auto", "number of interior nodes"),
    ("grid.order", "8", "stencil order of the second difference (2, 4, 6, 8)"),
    ("init.width", "1", "Gaussian width for evolve --init gaussian/random"),
    ("seed", "0", "seed for randomized test fields"),
    ("evolve.dt0", "1e-3", "base time step"),
    ("evolve.t_end", "10", "final time (negative runs backward)"),
    ("evolve.adapt", "off", "dt <= adapt / |grad psi|^2; auto uses dt0 * initial value"),
    ("evolve.dt_floor", "1e-9", "smallest step before the run is stopped"),
    ("evolve.grad_blowup_factor", "1e3", "gradient growth factor of the blow-up trip"),
    ("evolve.resolution_trip", "1", "collapse length in grid spacings that trips blow-up; off disables"),
    ("evolve.record_every", "10", "steps between diagnostic rows"),
    ("evolve.fixed_point_tol", "1e-13", "fixed-point tolerance of the implicit step"),
    ("evolve.max_fixed_point", "50", "fixed-point iteration cap"),
    ("evolve.virial_radius", "off", "radius R of the localized virial diagnostics"),
    ("evolve.checkpoint_every", "off", "keep a checkpoint every this many rows"),
    ("sponge", "auto", "absorbing layer: on, off, or auto (on iff K(psi0) > classify.k_zero |grad psi0|^2)"),
    ("sponge.strength", "5", "damping rate at r_max"),
    ("sponge.width", "0.1", "fraction of the grid covered by the layer"),
    ("modulation.delta_e", "0.1", "cutoff scale of the distance function"),
    ("modulation.gamma_tilde", "0.05", "trap radius of the modified distance"),
    ("modulation.mass_tol", "1e-8", "relative mass mismatch allowed in the decomposition"),
    ("classify.dt0", "1e-3", "time step of classification runs"),
    ("classify.record_every", "25", "steps between rows in classification runs"),
    ("classify.horizon", "2", "first run length"),
    ("classify.max_horizon", "40", "continuation length for undecided runs"),
    ("classify.noise_floor", "1e-6", "orbit distances below this count as the orbit"),
    ("classify.k_zero", "1e-8", "|K| <= k_zero |grad psi|^2 counts as K = 0"),
    ("classify.one_pass_radius", "0.05", "radius of the one-pass monitor"),
    ("series.k", "3", "order of the exponential series"),
    ("series.x0", "1e-3", "initial value of exp(-e t0)"),
    ("fit.start", "0.5", "decay-fit window start, in units of 1/e"),
    ("fit.end", "4", "decay-fit window end, in units of 1/e"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(CliError::Validation(format!("unknown config key '{key}'"))),
        }
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Missing(format!("config file {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// `key=value` from `--set`.
    pub fn apply_override(&mut self, kv: &str) -> CliResult<()> {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| CliError::Validation(format!("--set expects key=value, got '{kv}'")))?;
        self.set(k.trim(), v)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("config key {key} is not declared"))
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        let v = self.raw(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| CliError::Validation(format!("{key} = '{v}' is not a finite number")))
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        let v = self.raw(key);
        v.parse().map_err(|_| CliError::Validation(format!("{key} = '{v}' is not a non-negative integer")))
    }

    fn is(&self, key: &str, word: &str) -> bool {
        self.raw(key).eq_ignore_ascii_case(word)
    }

    /// `None` for `off`.
    pub fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        if self.is(key, "off") {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    /// `None` for `auto`.
    pub fn auto_f64(&self, key: &str) -> CliResult<Option<f64>> {
        if self.is(key, "auto") {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn auto_usize(&self, key: &str) -> CliResult<Option<usize>> {
        if self.is(key, "auto") {
            Ok(None)
        } else {
            self.usize(key).map(Some)
        }
    }

    /// `Some(true/false)` for on/off, `None` for auto.
    pub fn switch(&self, key: &str) -> CliResult<Option<bool>> {
        match self.raw(key).to_ascii_lowercase().as_str() {
            "on" | "true" | "yes" => Ok(Some(true)),
            "off" | "false" | "no" => Ok(Some(false)),
            "auto" => Ok(None),
            v => Err(CliError::Validation(format!("{key} = '{v}': expected on, off or auto"))),
        }
    }

    pub fn modulation(&self) -> CliResult<ModulationConfig> {
        let m = ModulationConfig {
            delta_e: self.f64("modulation.delta_e")?,
            gamma_tilde: self.f64("modulation.gamma_tilde")?,
            mass_tol: self.f64("modulation.mass_tol")?,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn sponge(&self) -> CliResult<Sponge> {
        Ok(Sponge { strength: self.f64("sponge.strength")?, width: self.f64("sponge.width")? })
    }

    /// Evolution settings. `adapt = auto` is resolved by the caller, which
    /// knows the initial gradient; here it maps to `None`.
    pub fn evolve(&self) -> CliResult<EvolveConfig> {
        let adapt = if self.is("evolve.adapt", "auto") { None } else { self.opt_f64("evolve.adapt")? };
        let cfg = EvolveConfig {
            dt0: self.f64("evolve.dt0")?,
            t_end: self.f64("evolve.t_end")?,
            adapt,
            dt_floor: self.f64("evolve.dt_floor")?,
            grad_blowup_factor: self.f64("evolve.grad_blowup_factor")?,
            resolution_trip: self.opt_f64("evolve.resolution_trip")?,
            sponge: if self.switch("sponge")? == Some(true) { Some(self.sponge()?) } else { None },
            record_every: self.usize("evolve.record_every")?,
            fixed_point_tol: self.f64("evolve.fixed_point_tol")?,
            max_fixed_point: self.usize("evolve.max_fixed_point")?,
            virial_radius: self.opt_f64("evolve.virial_radius")?,
            modulation: self.modulation()?,
            checkpoint_every: if self.is("evolve.checkpoint_every", "off") {
                None
            } else {
                Some(self.usize("evolve.checkpoint_every")?)
            },
            ..EvolveConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adapt_is_auto(&self) -> bool {
        self.is("evolve.adapt", "auto")
    }

    pub fn classify(&self) -> CliResult<ClassifyConfig> {
        let mut evolve = self.evolve()?;
        evolve.dt0 = self.f64("classify.dt0")?;
        evolve.record_every = self.usize("classify.record_every")?;
        evolve.sponge = Some(self.sponge()?);
        evolve.adapt = None;
        evolve.validate()?;
        let cfg = ClassifyConfig {
            horizon: self.f64("classify.horizon")?,
            max_horizon: self.f64("classify.max_horizon")?,
            noise_floor: self.f64("classify.noise_floor")?,
            k_zero: self.f64("classify.k_zero")?,
            one_pass_radius: self.f64("classify.one_pass_radius")?,
            evolve,
            ..ClassifyConfig::default()
        };
        if !(cfg.horizon > 0.0 && cfg.max_horizon >= cfg.horizon) {
            return Err(CliError::Validation("need 0 < classify.horizon <= classify.max_horizon".into()));
        }
        Ok(cfg)
    }

    /// `key = value` lines for every key, with descriptions as comments.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            out += &format!("# {doc}\n{k} = {}\n", self.raw(k));
        }
        out
    }
}
