//! Run specification: everything a command needs, serializable to JSON.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fracgreen::{DomainSpec, FieldSpec, Point, WosConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Torsion,
    Hfield,
    Bounds,
    Certify,
    Solve,
    Derivative,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Torsion => "torsion",
            Command::Hfield => "hfield",
            Command::Bounds => "bounds",
            Command::Certify => "certify",
            Command::Solve => "solve",
            Command::Derivative => "derivative",
        }
    }
}

fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub command: Command,
    pub domain: DomainSpec,
    #[serde(default = "one")]
    pub f: FieldSpec,
    /// Orders; a single entry for the commands that take one `s`.
    pub s: Vec<f64>,
    #[serde(default)]
    pub lattice_spacing: Option<f64>,
    /// Density radii for `bounds`.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Evaluation points for `solve` and `derivative`.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Certification tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub wos: WosConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> FieldSpec {
    FieldSpec::constant(1.0)
}

impl RunSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("bad run spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn single_s(&self) -> Result<f64, CliError> {
        match self.s.as_slice() {
            [s] => Ok(*s),
            _ => Err(CliError::Validation(format!(
                "{} takes exactly one order s, got {}",
                self.command.name(),
                self.s.len()
            ))),
        }
    }

    pub fn spacing(&self) -> Result<f64, CliError> {
        match self.lattice_spacing {
            Some(h) if h > 0.0 && h.is_finite() => Ok(h),
            Some(h) => Err(CliError::Validation(format!("lattice spacing must be positive, got {h}"))),
            None => Err(CliError::Validation(format!(
                "{} needs --lattice-spacing",
                self.command.name()
            ))),
        }
    }

    pub fn eval_points(&self, dim: usize) -> Result<Vec<Point>, CliError> {
        self.points
            .iter()
            .map(|p| {
                if p.len() == dim {
                    Ok(Point::from_slice(p))
                } else {
                    Err(CliError::Validation(format!("point {p:?} does not have {dim} coordinates")))
                }
            })
            .collect()
    }
}
