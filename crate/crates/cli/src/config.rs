//! JSON run configuration.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use qbld_core::distributions::QuantileLevel;
use qbld_core::model::{ColumnSpec, ModelSpec, Priors, SimulationDesign};
use qbld_core::sampler::{Algorithm, SamplerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    #[serde(default = "default_beta0")]
    pub beta0: VectorSpec,
    #[serde(rename = "B0", alias = "B0_diag_or_full", default = "default_b0")]
    pub b0: MatrixSpec,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_d1")]
    pub d1: f64,
}

fn default_beta0() -> VectorSpec {
    VectorSpec::Scalar(0.0)
}
fn default_b0() -> MatrixSpec {
    MatrixSpec::Scalar(10.0)
}
fn default_c1() -> f64 {
    10.0
}
fn default_d1() -> f64 {
    9.0
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { beta0: default_beta0(), b0: default_b0(), c1: default_c1(), d1: default_d1() }
    }
}

impl PriorConfig {
    pub fn build(&self, k: usize) -> CliResult<Priors> {
        let beta0 = match &self.beta0 {
            VectorSpec::Scalar(v) => DVector::from_element(k, *v),
            VectorSpec::Vector(v) if v.len() == k => DVector::from_column_slice(v),
            VectorSpec::Vector(v) => {
                return Err(CliError::Config(format!("prior.beta0 has {} entries, model has k = {k}", v.len())))
            }
        };
        let b0 = match &self.b0 {
            MatrixSpec::Scalar(v) => DMatrix::from_diagonal_element(k, k, *v),
            MatrixSpec::Diagonal(d) if d.len() == k => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            MatrixSpec::Full(rows) if rows.len() == k && rows.iter().all(|r| r.len() == k) => {
                DMatrix::from_fn(k, k, |i, j| rows[i][j])
            }
            _ => return Err(CliError::Config(format!("prior.B0 must be a scalar, a {k}-vector or a {k}x{k} matrix"))),
        };
        Priors::new(beta0, b0, self.c1, self.d1).map_err(|e| CliError::Config(format!("prior: {e}")))
    }
}

/// Settings of a `fit` run. Unknown keys are ignored, so one file can also
/// carry a simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub p: QuantileLevel,
    /// Total sweeps, burn-in included.
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(flatten)]
    pub columns: ColumnSpec,
    #[serde(default)]
    pub store_alpha: bool,
    #[serde(default = "default_true")]
    pub parallel_individuals: bool,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Draw `alpha_i ~ N(0, phi2 I)` in `effects` when alpha draws were not stored.
    #[serde(default)]
    pub alpha_fallback: bool,
    #[serde(default)]
    pub loglik: LoglikMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoglikMode {
    #[default]
    PosteriorMean,
    DrawAverage,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Blocked
}
fn default_true() -> bool {
    true
}
fn default_thin() -> usize {
    1
}

impl FitConfig {
    pub fn sampler(&self) -> CliResult<SamplerConfig> {
        let mut cfg = SamplerConfig::new(self.algorithm, self.draws, self.burn_in, self.seed);
        cfg.store_alpha = self.store_alpha;
        cfg.parallel_individuals = self.parallel_individuals;
        cfg.thin = self.thin;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn model(&self, k: usize) -> CliResult<ModelSpec> {
        Ok(ModelSpec::new(self.p, self.prior.build(k)?))
    }
}

pub fn read_json(path: &Path) -> CliResult<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse<T: serde::de::DeserializeOwned>(value: &serde_json::Value, path: &Path) -> CliResult<T> {
    T::deserialize(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Fit config with an optional seed override applied.
pub fn load_fit(path: &Path, seed: Option<u64>) -> CliResult<(FitConfig, serde_json::Value)> {
    let mut raw = read_json(path)?;
    if let Some(s) = seed {
        raw["seed"] = s.into();
    }
    Ok((parse(&raw, path)?, raw))
}

pub fn load_design(path: &Path, seed: Option<u64>) -> CliResult<(SimulationDesign, serde_json::Value)> {
    let mut raw = read_json(path)?;
    if let Some(s) = seed {
        raw["seed"] = s.into();
    }
    Ok((parse(&raw, path)?, raw))
}
