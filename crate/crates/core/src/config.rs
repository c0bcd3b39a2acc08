//! TOML job configuration and initial-data construction.
//!
//! Every section rejects unknown keys. Required keys are checked up front so
//! that a missing one is reported by its dotted path, e.g. `model.a`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticSpec;
use crate::error::{Error, Result};
use crate::groundstate::{self, PetviashviliOptions};
use crate::propagator::{ModelParams, StepperConfig};
use crate::snapshot;
use crate::spectral::{Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub half_length: f64,
}

impl GridSpec {
    pub fn build(&self, dim: usize) -> Result<Grid> {
        Grid::new(dim, self.n, self.half_length)
    }
}

/// Initial data.
///
/// Gaussians are `A exp(-|x - c|^2 / w^2)`; the derivative form is
/// `A (x_j - c_j) exp(-|x - c|^2 / w^2)`, which has zero mean and nonzero
/// first moment along axis `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    DerivativeGaussian {
        #[serde(default)]
        axis: usize,
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    /// Petviashvili ground state at speed `c` for the configured model.
    Groundstate { c: f64 },
    /// Exact periodic Benjamin-Ono wave (`d = 1`, `a = 1`, `k = 2`,
    /// `nu = 1`) at speed `c`.
    BoSoliton { c: f64 },
    /// Binary snapshot, see [`crate::snapshot`].
    File { path: PathBuf },
    Zero,
}

fn center_of(center: &[f64], dim: usize) -> Result<[f64; 2]> {
    let mut c = [0.0; 2];
    match center.len() {
        0 => {}
        len if len == dim => c[..dim].copy_from_slice(center),
        len => {
            return Err(Error::Config(format!(
                "data.center has {len} entries for dimension {dim}"
            )))
        }
    }
    Ok(c)
}

/// `2 kappa sinh(s) / (cosh(s) - cos(kappa x))` with `kappa = pi/L` and
/// `tanh(s) = kappa/c`: the periodic solution of `cQ + |D|Q = Q^2/2` on the
/// box, tending to `4c / (1 + c^2 x^2)` as `L` grows.
pub fn periodic_bo_wave(grid: &Grid, c: f64) -> Result<Field> {
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("the periodic BO wave is one-dimensional".into()));
    }
    let kappa = std::f64::consts::PI / grid.half_length();
    if !(c > kappa) {
        return Err(Error::InvalidParameter(format!(
            "periodic BO wave needs c > pi/L = {kappa}, got {c}"
        )));
    }
    let s = (kappa / c).atanh();
    Ok(Field::from_fn(grid, |x| {
        2.0 * kappa * s.sinh() / (s.cosh() - (kappa * x[0]).cos())
    }))
}

impl DataSpec {
    pub fn build(&self, grid: &Grid, model: &ModelParams) -> Result<Field> {
        let dim = grid.dim();
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("data.{name} must be positive, got {v}")))
            }
        };
        match self {
            DataSpec::Gaussian {
                center,
                width,
                amplitude,
            } => {
                positive("width", *width)?;
                let c = center_of(center, dim)?;
                Ok(Field::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                    amplitude * (-r2 / (width * width)).exp()
                }))
            }
            DataSpec::DerivativeGaussian {
                axis,
                center,
                width,
                amplitude,
            } => {
                positive("width", *width)?;
                if *axis >= dim {
                    return Err(Error::Config(format!("data.axis {axis} out of range for dimension {dim}")));
                }
                let c = center_of(center, dim)?;
                Ok(Field::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                    amplitude * (x[*axis] - c[*axis]) * (-r2 / (width * width)).exp()
                }))
            }
            DataSpec::Groundstate { c } => {
                let res = groundstate::petviashvili_solve(
                    model,
                    *c,
                    &groundstate::default_seed(grid),
                    PetviashviliOptions::default(),
                )?;
                if !res.converged {
                    return Err(Error::InvalidParameter(format!(
                        "ground state did not converge (residual {:e})",
                        res.residual
                    )));
                }
                Ok(res.profile)
            }
            DataSpec::BoSoliton { c } => periodic_bo_wave(grid, *c),
            DataSpec::File { path } => {
                let snap = snapshot::read(path)?;
                if snap.field.grid() != grid {
                    return Err(Error::Config(format!(
                        "snapshot {} does not match the configured grid",
                        path.display()
                    )));
                }
                Ok(snap.field)
            }
            DataSpec::Zero => Ok(Field::zeros(grid)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub stepper: StepperConfig,
    pub data: DataSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticSpec,
}

impl EvolveConfig {
    pub const REQUIRED: &'static [&'static str] = &[
        "model",
        "model.a",
        "model.dim",
        "model.nonlinearities",
        "grid",
        "grid.n",
        "grid.half_length",
        "stepper",
        "stepper.dt",
        "stepper.t_end",
        "data",
        "data.kind",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundstateConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub c: f64,
    #[serde(default)]
    pub solver: PetviashviliOptions,
    /// Defaults to a Gaussian of unit height and width 2.
    #[serde(default)]
    pub seed: Option<DataSpec>,
    /// Radial window for the tail fit; defaults to `[L/20, L/4]`.
    #[serde(default)]
    pub tail_window: Option<[f64; 2]>,
}

impl GroundstateConfig {
    pub const REQUIRED: &'static [&'static str] = &[
        "model",
        "model.a",
        "model.dim",
        "model.nonlinearities",
        "grid",
        "grid.n",
        "grid.half_length",
        "c",
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub a: f64,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    pub model: LinearModel,
    pub grid: GridSpec,
    pub data: DataSpec,
    pub times: Vec<f64>,
    #[serde(default = "default_weights")]
    pub weights: Vec<f64>,
}

fn default_weights() -> Vec<f64> {
    DiagnosticSpec::default().weights
}

impl LinearConfig {
    pub const REQUIRED: &'static [&'static str] = &[
        "model",
        "model.a",
        "model.dim",
        "grid",
        "grid.n",
        "grid.half_length",
        "data",
        "data.kind",
        "times",
    ];
}

/// Reports the first dotted key in `required` absent from `table`.
pub fn require_keys(table: &toml::Table, required: &[&str]) -> Result<()> {
    for key in required {
        let mut node: Option<&toml::Value> = None;
        let mut current = Some(table);
        for part in key.split('.') {
            node = current.and_then(|t| t.get(part));
            current = node.and_then(|v| v.as_table());
        }
        if node.is_none() {
            return Err(Error::MissingKey(key.to_string()));
        }
    }
    Ok(())
}

pub fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
}

pub fn from_table<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(e.to_string()))
}

/// Parses `text`, checks `required` and deserializes.
pub fn parse<T: DeserializeOwned>(text: &str, required: &[&str]) -> Result<T> {
    let table = parse_table(text)?;
    require_keys(&table, required)?;
    from_table(table)
}

/// Reads a config file, returning the parsed value and the raw bytes.
pub fn load<T: DeserializeOwned>(path: &Path, required: &[&str]) -> Result<(T, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    Ok((parse(text, required)?, bytes))
}

/// Overlays `over` onto `base`, recursing into tables.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
