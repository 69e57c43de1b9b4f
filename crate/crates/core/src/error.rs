use alloc::string::String;

/// Errors raised by the numerical core.
///
/// Variants map one-to-one onto the exit-code classes of the command line:
/// configuration/usage problems, numeric failures and "nothing to find"
/// outcomes (no ground state, no unstable mode).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("no ground state: {0}")]
    NoGroundState(String),
    #[error("spectral failure: {0}")]
    SpectralFailure(String),
    #[error("gauge degenerate: |<psi, dQ>| = {0:e}")]
    GaugeDegenerate(f64),
    #[error("resonance at order {order}: condition estimate {condition:e}")]
    Resonance { order: usize, condition: f64 },
    #[error("threshold projection failed: {0}")]
    Projection(String),
    #[error("step rejected: fixed point did not converge (dt = {dt:e})")]
    StepReject { dt: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("singular matrix at pivot {0}")]
    Singular(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
