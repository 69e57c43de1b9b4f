//! On-disk formats: ground-state and spectrum fixtures (JSON), checkpoints
//! (JSON header line plus a hex or base64 payload), trajectory and
//! modulation CSVs.
//!
//! Field samples are stored as little-endian `f64` bytes so that every
//! format round-trips bit for bit.

use std::path::Path;

use base64::Engine;
use cqnls_core::evolution::TrajectoryRecord;
use cqnls_core::functionals::{FunctionalValues, Nonlinearity};
use cqnls_core::ground_state::GroundState;
use cqnls_core::linearized::InternalMode;
use cqnls_core::modulation::ModulationState;
use cqnls_core::{Complex64, GridRef, RadialField, RadialGrid, RealField, StencilOrder};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::format::{sig17, to_json};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub r_max: f64,
    pub n: usize,
    pub order: usize,
}

impl GridHeader {
    pub fn of(grid: &RadialGrid) -> Self {
        Self { r_max: grid.r_max(), n: grid.n(), order: grid.order().order() }
    }

    pub fn build(&self) -> CliResult<GridRef> {
        Ok(RadialGrid::with_order(self.r_max, self.n, StencilOrder::from_order(self.order)?)?.shared())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Hex,
    Base64,
}

pub fn encode_f64(xs: &[f64], enc: Encoding) -> String {
    let bytes: Vec<u8> = xs.iter().flat_map(|x| x.to_le_bytes()).collect();
    match enc {
        Encoding::Hex => hex::encode(bytes),
        Encoding::Base64 => base64::engine::general_purpose::STANDARD.encode(bytes),
    }
}

pub fn decode_f64(s: &str, enc: Encoding) -> CliResult<Vec<f64>> {
    let bytes = match enc {
        Encoding::Hex => hex::decode(s.trim()).map_err(|e| CliError::Validation(format!("hex payload: {e}")))?,
        Encoding::Base64 => base64::engine::general_purpose::STANDARD
            .decode(s.trim())
            .map_err(|e| CliError::Validation(format!("base64 payload: {e}")))?,
    };
    if bytes.len() % 8 != 0 {
        return Err(CliError::Validation("payload length is not a multiple of 8 bytes".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

fn nl_name(nl: Nonlinearity) -> &'static str {
    match nl {
        Nonlinearity::CubicQuintic => "cubic-quintic",
        Nonlinearity::CubicOnly => "cubic",
    }
}

fn nl_parse(s: &str) -> CliResult<Nonlinearity> {
    match s {
        "cubic-quintic" => Ok(Nonlinearity::CubicQuintic),
        "cubic" => Ok(Nonlinearity::CubicOnly),
        _ => Err(CliError::Validation(format!("unknown nonlinearity '{s}'"))),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_text(path: &Path, what: &str) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Missing(format!("{what} {}: {e}", path.display())))
}

/// Functional values as stored in fixtures; recomputed on load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuesJson {
    pub mass: f64,
    pub energy: f64,
    pub k: f64,
    pub action: f64,
    pub j: f64,
}

impl From<&FunctionalValues> for ValuesJson {
    fn from(v: &FunctionalValues) -> Self {
        Self { mass: v.mass, energy: v.energy, k: v.k, action: v.action, j: v.j }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateFixture {
    pub format: String,
    pub omega: f64,
    pub nonlinearity: String,
    pub grid: GridHeader,
    pub q0: f64,
    pub residual: f64,
    pub newton_iterations: usize,
    pub nehari_defect: f64,
    pub values: ValuesJson,
    pub encoding: Encoding,
    pub profile: String,
}

pub const GROUND_STATE_FORMAT: &str = "cqnls-groundstate-v1";

impl GroundStateFixture {
    pub fn from_state(gs: &GroundState) -> Self {
        Self {
            format: GROUND_STATE_FORMAT.into(),
            omega: gs.omega,
            nonlinearity: nl_name(gs.nonlinearity).into(),
            grid: GridHeader::of(gs.grid()),
            q0: gs.q0,
            residual: gs.residual,
            newton_iterations: gs.newton_iterations,
            nehari_defect: gs.nehari_defect(),
            values: (&gs.values).into(),
            encoding: Encoding::Hex,
            profile: encode_f64(gs.q.samples(), Encoding::Hex),
        }
    }

    pub fn to_state(&self) -> CliResult<GroundState> {
        if self.format != GROUND_STATE_FORMAT {
            return Err(CliError::Validation(format!("unsupported ground-state format '{}'", self.format)));
        }
        let nl = nl_parse(&self.nonlinearity)?;
        let grid = self.grid.build()?;
        let q = RealField::new(grid, decode_f64(&self.profile, self.encoding)?)?;
        let values = FunctionalValues::from_norms_with(&q.norms(), self.omega, nl);
        Ok(GroundState {
            omega: self.omega,
            nonlinearity: nl,
            q,
            q0: self.q0,
            residual: self.residual,
            values,
            newton_iterations: self.newton_iterations,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_text(path, &to_json(self)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&read_text(path, "ground-state fixture")?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFixture {
    pub format: String,
    pub omega: f64,
    pub grid: GridHeader,
    pub e_omega: f64,
    pub residual_y1: f64,
    pub residual_y2: f64,
    pub pairing: f64,
    pub q_y2: f64,
    pub q_y1: f64,
    pub dq_y2: f64,
    pub smallness_lhs: f64,
    pub smallness_rhs: f64,
    pub smallness_margin: f64,
    pub iterations: usize,
    pub dense_e_omega: Option<f64>,
    pub encoding: Encoding,
    pub y1: String,
    pub y2: String,
}

pub const SPECTRUM_FORMAT: &str = "cqnls-spectrum-v1";

impl SpectrumFixture {
    pub fn to_mode(&self, grid: &GridRef) -> CliResult<InternalMode> {
        if self.format != SPECTRUM_FORMAT {
            return Err(CliError::Validation(format!("unsupported spectrum format '{}'", self.format)));
        }
        if GridHeader::of(grid) != self.grid {
            return Err(CliError::Validation("spectrum fixture was computed on another grid".into()));
        }
        Ok(InternalMode {
            e_omega: self.e_omega,
            y1: RealField::new(grid.clone(), decode_f64(&self.y1, self.encoding)?)?,
            y2: RealField::new(grid.clone(), decode_f64(&self.y2, self.encoding)?)?,
            residuals: (self.residual_y1, self.residual_y2),
            pairing: self.pairing,
            sign_q2: self.q_y2,
            iterations: self.iterations,
        })
    }

    pub fn encode_profile(xs: &[f64]) -> String {
        encode_f64(xs, Encoding::Hex)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_text(path, &to_json(self)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&read_text(path, "spectrum fixture")?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub grid: GridHeader,
    pub omega: Option<f64>,
    pub t: f64,
    pub encoding: Encoding,
    /// Number of complex samples; the payload holds `re, im` pairs.
    pub len: usize,
}

pub const CHECKPOINT_FORMAT: &str = "cqnls-checkpoint-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub field: RadialField,
}

impl Checkpoint {
    pub fn new(field: RadialField, t: f64, omega: Option<f64>, encoding: Encoding) -> Self {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            grid: GridHeader::of(field.grid()),
            omega,
            t,
            encoding,
            len: field.len(),
        };
        Self { header, field }
    }

    /// One compact JSON header line, then the payload line.
    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let flat: Vec<f64> = self.field.samples().iter().flat_map(|z| [z.re, z.im]).collect();
        let mut out = serde_json::to_vec(&self.header)?;
        out.push(b'\n');
        out.extend(encode_f64(&flat, self.header.encoding).into_bytes());
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| CliError::Validation("checkpoint is not UTF-8".into()))?;
        let (head, payload) =
            text.split_once('\n').ok_or_else(|| CliError::Validation("checkpoint has no payload line".into()))?;
        let header: CheckpointHeader = serde_json::from_str(head)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(CliError::Validation(format!("unsupported checkpoint format '{}'", header.format)));
        }
        let flat = decode_f64(payload, header.encoding)?;
        if flat.len() != 2 * header.len || header.len != header.grid.n {
            return Err(CliError::Validation("checkpoint payload length disagrees with the header".into()));
        }
        let data = flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let field = RadialField::new(header.grid.build()?, data)?;
        Ok(Self { header, field })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Missing(format!("checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig17).unwrap_or_default()
}

pub const TRAJECTORY_COLUMNS: [&str; 14] = [
    "t", "mass", "energy", "K", "grad_sq", "l4_4", "l6_6", "variance", "momentum", "y_R", "y_R_prime", "A_R",
    "d_omega", "verdict",
];

/// One row per record; the verdict column reads `running` until the last
/// row, which carries the final verdict.
pub fn trajectory_csv(traj: &TrajectoryRecord) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_COLUMNS)?;
    let last = traj.rows.len().saturating_sub(1);
    for (i, r) in traj.rows.iter().enumerate() {
        let v = r.virial.as_ref();
        let verdict = if i == last { traj.verdict.name() } else { "running" };
        w.write_record([
            sig17(r.t),
            sig17(r.mass),
            sig17(r.energy),
            sig17(r.k),
            sig17(r.grad_sq),
            sig17(r.l4_4),
            sig17(r.l6_6),
            sig17(r.variance),
            sig17(r.momentum),
            opt(v.map(|v| v.y)),
            opt(v.map(|v| v.y_prime)),
            opt(v.map(|v| v.a_r)),
            opt(r.d_omega),
            verdict.to_string(),
        ])?;
    }
    into_string(w)
}

pub const MODULATION_COLUMNS: [&str; 10] =
    ["t", "theta", "lambda_plus", "lambda_minus", "lambda1", "lambda2", "b", "gamma_h1", "energy_norm", "d_omega"];

pub fn modulation_csv(states: &[ModulationState]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MODULATION_COLUMNS)?;
    for s in states {
        w.write_record(
            [s.t, s.theta, s.lambda_plus, s.lambda_minus, s.lambda1, s.lambda2, s.b, s.gamma_h1(), s.energy_norm, s.d_omega]
                .map(sig17),
        )?;
    }
    into_string(w)
}

pub fn records_csv(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| CliError::Validation(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> RadialField {
        let g = RadialGrid::new(10.0, 64).unwrap().shared();
        RadialField::from_fn(g, |r| Complex64::new((-r * r).exp(), (r * 0.3).sin() / 3.0))
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for enc in [Encoding::Hex, Encoding::Base64] {
            let c = Checkpoint::new(field(), -1.0 / 3.0, Some(0.05), enc);
            let bytes = c.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn checkpoint_rejects_truncation() {
        let bytes = Checkpoint::new(field(), 0.0, None, Encoding::Hex).to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 20];
        assert!(Checkpoint::from_bytes(cut).is_err());
        assert!(Checkpoint::from_bytes(b"{}").is_err());
    }

    #[test]
    fn f64_payloads_round_trip() {
        let xs = [0.1, -0.0, f64::MIN_POSITIVE, 1e300, f64::NAN];
        for enc in [Encoding::Hex, Encoding::Base64] {
            let back = decode_f64(&encode_f64(&xs, enc), enc).unwrap();
            assert!(xs.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
