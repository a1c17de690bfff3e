//! Panel data, priors, and the state of the Gibbs chain.

mod ingest;
mod simulate;

pub use ingest::{load_panel_csv, write_panel_csv, write_panel_to, ColumnSpec};
pub use simulate::{simulate_qbld, GroundTruth, SimulationDesign};

use nalgebra::{DMatrix, DVector};

use crate::distributions::{mixture_constants, MixtureConstants, QuantileLevel};
use crate::error::{QbldError, Result};

pub const INTERCEPT: &str = "(intercept)";

/// Stacked observations of one individual: `T_i` rows of `y`, `X` and `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualBlock {
    pub id: String,
    pub time: Vec<f64>,
    pub y: Vec<bool>,
    pub x: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

impl IndividualBlock {
    #[inline]
    pub fn periods(&self) -> usize {
        self.y.len()
    }
}

/// Binary panel with common-effect design `X_i` (k columns) and
/// individual-specific design `S_i` (l columns) for every individual.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    individuals: Vec<IndividualBlock>,
    x_columns: Vec<String>,
    s_columns: Vec<String>,
    x_intercept: bool,
    s_intercept: bool,
}

impl PanelDataset {
    /// Validates shapes. `x_columns`/`s_columns` name the data columns, not
    /// counting an injected intercept.
    pub fn new(
        individuals: Vec<IndividualBlock>,
        x_columns: Vec<String>,
        s_columns: Vec<String>,
        x_intercept: bool,
        s_intercept: bool,
    ) -> Result<Self> {
        let k = x_columns.len() + x_intercept as usize;
        let l = s_columns.len() + s_intercept as usize;
        if k == 0 {
            return Err(QbldError::Schema("no common-effect covariates (k = 0)".into()));
        }
        if l == 0 {
            return Err(QbldError::Schema(
                "no individual-specific covariates (l = 0)".into(),
            ));
        }
        if individuals.is_empty() {
            return Err(QbldError::Schema("dataset has no individuals".into()));
        }
        for block in &individuals {
            let t = block.periods();
            if t == 0 {
                return Err(QbldError::EmptyIndividual(block.id.clone()));
            }
            if block.x.nrows() != t || block.x.ncols() != k {
                return Err(QbldError::Schema(format!(
                    "individual `{}`: X is {}x{}, expected {t}x{k}",
                    block.id,
                    block.x.nrows(),
                    block.x.ncols()
                )));
            }
            if block.s.nrows() != t || block.s.ncols() != l {
                return Err(QbldError::Schema(format!(
                    "individual `{}`: S is {}x{}, expected {t}x{l}",
                    block.id,
                    block.s.nrows(),
                    block.s.ncols()
                )));
            }
            if block.time.len() != t {
                return Err(QbldError::Schema(format!(
                    "individual `{}`: {} time stamps for {t} rows",
                    block.id,
                    block.time.len()
                )));
            }
            if block.x.iter().chain(block.s.iter()).any(|v| !v.is_finite()) {
                return Err(QbldError::Schema(format!(
                    "individual `{}`: non-finite covariate",
                    block.id
                )));
            }
        }
        Ok(Self {
            individuals,
            x_columns,
            s_columns,
            x_intercept,
            s_intercept,
        })
    }

    pub fn individuals(&self) -> &[IndividualBlock] {
        &self.individuals
    }

    /// Number of individuals.
    pub fn n(&self) -> usize {
        self.individuals.len()
    }

    pub fn k(&self) -> usize {
        self.x_columns.len() + self.x_intercept as usize
    }

    pub fn l(&self) -> usize {
        self.s_columns.len() + self.s_intercept as usize
    }

    /// Total number of observations, the sum of `T_i`.
    pub fn n_obs(&self) -> usize {
        self.individuals.iter().map(|b| b.periods()).sum()
    }

    pub fn x_columns(&self) -> &[String] {
        &self.x_columns
    }

    pub fn s_columns(&self) -> &[String] {
        &self.s_columns
    }

    pub fn x_intercept(&self) -> bool {
        self.x_intercept
    }

    pub fn s_intercept(&self) -> bool {
        self.s_intercept
    }

    /// Column labels of `X` in design order, intercept first when injected.
    pub fn x_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.k());
        if self.x_intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(self.x_columns.iter().cloned());
        names
    }

    pub fn s_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.l());
        if self.s_intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(self.s_columns.iter().cloned());
        names
    }

    /// Share of observations with `y = 1`.
    pub fn ones_share(&self) -> f64 {
        let ones: usize = self
            .individuals
            .iter()
            .map(|b| b.y.iter().filter(|&&y| y).count())
            .sum();
        ones as f64 / self.n_obs() as f64
    }

    /// Replaces the outcomes in place, keeping covariates. Used by
    /// joint-distribution tests that redraw data between sweeps.
    pub fn set_outcomes(&mut self, y: &[Vec<bool>]) -> Result<()> {
        if y.len() != self.n() {
            return Err(QbldError::Schema("outcome count mismatch".into()));
        }
        for (block, yi) in self.individuals.iter_mut().zip(y) {
            if yi.len() != block.periods() {
                return Err(QbldError::Schema("outcome length mismatch".into()));
            }
            block.y.clone_from(yi);
        }
        Ok(())
    }
}

/// Prior N(beta0, B0) on the common effects and IG(c1/2, d1/2) on phi^2.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub beta0: DVector<f64>,
    pub b0: DMatrix<f64>,
    pub c1: f64,
    pub d1: f64,
    b0_inv: DMatrix<f64>,
}

impl Priors {
    pub fn new(beta0: DVector<f64>, b0: DMatrix<f64>, c1: f64, d1: f64) -> Result<Self> {
        let k = beta0.len();
        if b0.nrows() != k || b0.ncols() != k {
            return Err(QbldError::Config(format!(
                "B0 is {}x{}, beta0 has length {k}",
                b0.nrows(),
                b0.ncols()
            )));
        }
        if (&b0 - b0.transpose()).amax() > 1e-12 * b0.amax().max(1.0) {
            return Err(QbldError::Config("B0 is not symmetric".into()));
        }
        let chol = b0
            .clone()
            .cholesky()
            .ok_or_else(|| QbldError::Config("B0 is not positive definite".into()))?;
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(QbldError::Config(format!("c1 must be positive, got {c1}")));
        }
        if !(d1 > 0.0 && d1.is_finite()) {
            return Err(QbldError::Config(format!("d1 must be positive, got {d1}")));
        }
        let b0_inv = chol.inverse();
        Ok(Self {
            beta0,
            b0,
            c1,
            d1,
            b0_inv,
        })
    }

    /// beta ~ N(0, variance * I_k), phi^2 ~ IG(c1/2, d1/2).
    pub fn isotropic(k: usize, variance: f64, c1: f64, d1: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(k),
            DMatrix::identity(k, k) * variance,
            c1,
            d1,
        )
    }

    /// Prior precision `B0^{-1}`.
    pub fn b0_inv(&self) -> &DMatrix<f64> {
        &self.b0_inv
    }

    pub fn k(&self) -> usize {
        self.beta0.len()
    }

    /// Prior mean of phi^2, `d1/(c1 - 2)`; falls back to `d1/c1` when the
    /// mean does not exist.
    pub fn phi2_prior_mean(&self) -> f64 {
        if self.c1 > 2.0 {
            self.d1 / (self.c1 - 2.0)
        } else {
            self.d1 / self.c1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    p: QuantileLevel,
    priors: Priors,
    constants: MixtureConstants,
}

impl ModelSpec {
    pub fn new(p: QuantileLevel, priors: Priors) -> Self {
        Self {
            p,
            constants: mixture_constants(p),
            priors,
        }
    }

    pub fn p(&self) -> QuantileLevel {
        self.p
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn constants(&self) -> MixtureConstants {
        self.constants
    }

    pub fn check_data(&self, data: &PanelDataset) -> Result<()> {
        if self.priors.k() != data.k() {
            return Err(QbldError::Config(format!(
                "prior has dimension {}, data has k = {}",
                self.priors.k(),
                data.k()
            )));
        }
        Ok(())
    }
}

/// Current draw of `(beta, alpha_i, z_i, w_i, phi^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcState {
    pub beta: DVector<f64>,
    pub alpha: Vec<DVector<f64>>,
    pub z: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub phi2: f64,
}

/// Checks shapes plus the sign, positivity and finiteness invariants.
pub fn validate_state(state: &McmcState, data: &PanelDataset) -> Result<()> {
    let shape = |msg: String| QbldError::InvariantViolation {
        individual: 0,
        period: 0,
        message: msg,
    };
    if state.beta.len() != data.k() || state.beta.iter().any(|b| !b.is_finite()) {
        return Err(shape(format!("beta is not a finite {}-vector", data.k())));
    }
    if !(state.phi2 > 0.0 && state.phi2.is_finite()) {
        return Err(shape(format!("phi2 = {} is not positive", state.phi2)));
    }
    if state.alpha.len() != data.n() || state.z.len() != data.n() || state.w.len() != data.n() {
        return Err(shape("state does not cover every individual".into()));
    }
    for (i, block) in data.individuals().iter().enumerate() {
        let violation = |t: usize, message: String| QbldError::InvariantViolation {
            individual: i,
            period: t,
            message,
        };
        if state.alpha[i].len() != data.l() || state.alpha[i].iter().any(|a| !a.is_finite()) {
            return Err(violation(0, "alpha_i is not a finite l-vector".into()));
        }
        if state.z[i].len() != block.periods() || state.w[i].len() != block.periods() {
            return Err(violation(0, "latent vectors do not match T_i".into()));
        }
        for t in 0..block.periods() {
            let z = state.z[i][t];
            let w = state.w[i][t];
            if !z.is_finite() {
                return Err(violation(t, format!("z = {z} is not finite")));
            }
            if block.y[t] && z <= 0.0 {
                return Err(violation(t, format!("y = 1 but z = {z}")));
            }
            if !block.y[t] && z > 0.0 {
                return Err(violation(t, format!("y = 0 but z = {z}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(violation(t, format!("w = {w} is not positive")));
            }
        }
    }
    Ok(())
}
