//! Full conditional distributions of the quantile model.
//!
//! Notation: `D_i = diag(tau^2 w_i)`, `Omega_i = phi^2 S_i S_i' + D_i` is the
//! covariance of `z_i` with `alpha_i` integrated out, and `m_i = X_i beta +
//! theta w_i` its mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::distributions::{
    sample_gig_half, sample_inverse_gamma, sample_truncated_normal, MixtureConstants,
};
use crate::error::{QbldError, Result};
use crate::model::{IndividualBlock, ModelSpec, PanelDataset, Priors};
use crate::rng::RandomStream;

/// Smallest admissible conditional variance in the latent-utility sweep.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Residuals below this magnitude squared are clamped before the GIG draw.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Normal full conditional held as mean plus precision, with the precision
/// already factorized.
#[derive(Debug, Clone)]
pub struct GaussianUpdate {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianUpdate {
    /// Builds `N(P^{-1} b, P^{-1})` from precision `P` and linear term `b`.
    pub fn from_canonical(precision: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let chol = precision.clone().cholesky().ok_or_else(|| {
            QbldError::Factorization("conditional precision is not positive definite".into())
        })?;
        let mean = chol.solve(&linear);
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(QbldError::Factorization("conditional mean is not finite".into()));
        }
        Ok(Self {
            mean,
            precision,
            chol,
        })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + L'^{-1} u` with `P = L L'` has covariance `P^{-1}`.
    pub fn sample(&self, rng: &mut RandomStream) -> DVector<f64> {
        let u = DVector::from_fn(self.dim(), |_, _| rng.standard_normal());
        let x = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&u)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + x
    }
}

fn check_weights(w: &[f64], phi2: f64) -> Result<()> {
    if let Some(bad) = w.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(QbldError::domain(format!("latent weight {bad} is not positive")));
    }
    if !(phi2 >= 0.0 && phi2.is_finite()) {
        return Err(QbldError::domain(format!("phi2 = {phi2} is negative")));
    }
    Ok(())
}

/// `Omega_i = phi^2 S_i S_i' + diag(tau^2 w_i)`.
pub fn omega_matrix(s: &DMatrix<f64>, w: &[f64], phi2: f64, tau: f64) -> Result<DMatrix<f64>> {
    check_weights(w, phi2)?;
    if s.nrows() != w.len() {
        return Err(QbldError::domain("S_i and w_i disagree on T_i"));
    }
    let mut omega = s * s.transpose() * phi2;
    for (t, wt) in w.iter().enumerate() {
        omega[(t, t)] += tau * tau * wt;
    }
    Ok(omega)
}

/// `Omega_i^{-1}`. When `l < T_i` it is assembled through the Woodbury
/// identity `D^{-1} - D^{-1} S (phi^{-2} I + S' D^{-1} S)^{-1} S' D^{-1}`,
/// which only factorizes an `l x l` core; otherwise `Omega_i` is factorized
/// directly.
pub fn omega_precision(s: &DMatrix<f64>, w: &[f64], phi2: f64, tau: f64) -> Result<DMatrix<f64>> {
    check_weights(w, phi2)?;
    if phi2 <= 0.0 {
        return Err(QbldError::domain("phi2 must be positive"));
    }
    let t_len = w.len();
    let l = s.ncols();
    if s.nrows() != t_len {
        return Err(QbldError::domain("S_i and w_i disagree on T_i"));
    }
    let tau2 = tau * tau;
    let mut q = if l < t_len {
        let d_inv = DVector::from_iterator(t_len, w.iter().map(|wt| 1.0 / (tau2 * wt)));
        // M = D^{-1} S
        let mut m = s.clone();
        for (t, di) in d_inv.iter().enumerate() {
            m.row_mut(t).scale_mut(*di);
        }
        let mut core = s.transpose() * &m;
        for j in 0..l {
            core[(j, j)] += 1.0 / phi2;
        }
        let chol = core.cholesky().ok_or_else(|| {
            QbldError::Factorization("Woodbury core is not positive definite".into())
        })?;
        let y = chol.solve(&m.transpose());
        let mut q = -(&m * y);
        for (t, di) in d_inv.iter().enumerate() {
            q[(t, t)] += di;
        }
        q
    } else {
        omega_matrix(s, w, phi2, tau)?
            .cholesky()
            .ok_or_else(|| QbldError::Factorization("Omega_i is not positive definite".into()))?
            .inverse()
    };
    // exact symmetry for the sweep
    for r in 0..t_len {
        for c in (r + 1)..t_len {
            let v = 0.5 * (q[(r, c)] + q[(c, r)]);
            q[(r, c)] = v;
            q[(c, r)] = v;
        }
    }
    Ok(q)
}

/// Accumulates `X_i' Q_i X_i` and `X_i' Q_i r_i` into `precision`/`linear`.
fn accumulate_gls(
    x: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DVector<f64>,
    precision: &mut DMatrix<f64>,
    linear: &mut DVector<f64>,
) {
    let qx = q * x;
    precision.gemm_tr(1.0, x, &qx, 1.0);
    linear.gemv_tr(1.0, &qx, r, 1.0);
}

fn prior_terms(priors: &Priors) -> (DMatrix<f64>, DVector<f64>) {
    let b0_inv = priors.b0_inv().clone();
    let linear = &b0_inv * &priors.beta0;
    (b0_inv, linear)
}

/// `beta | z, w, phi^2` with `alpha` integrated out, given the precisions
/// `Omega_i^{-1}` of every individual.
pub(crate) fn beta_blocked_from_precisions(
    data: &PanelDataset,
    precisions: &[DMatrix<f64>],
    z: &[Vec<f64>],
    w: &[Vec<f64>],
    spec: &ModelSpec,
) -> Result<GaussianUpdate> {
    let theta = spec.constants().theta;
    let (mut precision, mut linear) = prior_terms(spec.priors());
    for (i, block) in data.individuals().iter().enumerate() {
        let r = DVector::from_iterator(
            block.periods(),
            z[i].iter().zip(&w[i]).map(|(zt, wt)| zt - theta * wt),
        );
        accumulate_gls(&block.x, &precisions[i], &r, &mut precision, &mut linear);
    }
    GaussianUpdate::from_canonical(precision, linear)
}

/// `beta | z, w, phi^2`, marginal of `alpha`:
/// precision `sum X_i' Omega_i^{-1} X_i + B0^{-1}`,
/// mean `B (sum X_i' Omega_i^{-1} (z_i - theta w_i) + B0^{-1} beta0)`.
pub fn beta_conditional_blocked(
    data: &PanelDataset,
    z: &[Vec<f64>],
    w: &[Vec<f64>],
    phi2: f64,
    spec: &ModelSpec,
) -> Result<GaussianUpdate> {
    let tau = spec.constants().tau;
    let precisions = data
        .individuals()
        .iter()
        .zip(w)
        .map(|(block, wi)| omega_precision(&block.s, wi, phi2, tau))
        .collect::<Result<Vec<_>>>()?;
    beta_blocked_from_precisions(data, &precisions, z, w, spec)
}

/// `beta | alpha, z, w` with the diagonal `Psi_i = diag(tau^2 w_i)`.
pub fn beta_conditional_nonblocked(
    data: &PanelDataset,
    z: &[Vec<f64>],
    alpha: &[DVector<f64>],
    w: &[Vec<f64>],
    spec: &ModelSpec,
) -> Result<GaussianUpdate> {
    let c = spec.constants();
    let tau2 = c.tau2();
    let (mut precision, mut linear) = prior_terms(spec.priors());
    let k = data.k();
    for (i, block) in data.individuals().iter().enumerate() {
        check_weights(&w[i], 0.0)?;
        let s_alpha = &block.s * &alpha[i];
        for t in 0..block.periods() {
            let psi_inv = 1.0 / (tau2 * w[i][t]);
            let r = z[i][t] - s_alpha[t] - c.theta * w[i][t];
            for a in 0..k {
                let xa = block.x[(t, a)] * psi_inv;
                linear[a] += xa * r;
                for b in 0..k {
                    precision[(a, b)] += xa * block.x[(t, b)];
                }
            }
        }
    }
    GaussianUpdate::from_canonical(precision, linear)
}

/// Conditional mean and variance of coordinate `t` of `z ~ N(mean, Q^{-1})`
/// given the other coordinates, read off the precision matrix:
/// variance `1/Q_tt`, mean `m_t - sum_{u != t} Q_tu (z_u - m_u) / Q_tt`.
pub fn conditional_moments(precision: &DMatrix<f64>, mean: &[f64], z: &[f64], t: usize) -> (f64, f64) {
    let qtt = precision[(t, t)];
    let mut acc = 0.0;
    for u in 0..mean.len() {
        if u != t {
            acc += precision[(t, u)] * (z[u] - mean[u]);
        }
    }
    (mean[t] - acc / qtt, 1.0 / qtt)
}

/// Truncation region of `z_it`: `(0, inf)` when `y = 1`, `(-inf, 0]` otherwise.
#[inline]
pub fn truncation_bounds(y: bool) -> (f64, f64) {
    if y {
        (0.0, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, 0.0)
    }
}

/// One ascending pass of univariate truncated-normal updates over the
/// coordinates of `z_i ~ TMVN(mean, Q^{-1})`, each conditioned on the freshest
/// values of the others.
pub fn geweke_sweep(
    precision: &DMatrix<f64>,
    mean: &[f64],
    y: &[bool],
    z: &mut [f64],
    rng: &mut RandomStream,
) -> Result<()> {
    for t in 0..z.len() {
        let (mu, var) = conditional_moments(precision, mean, z, t);
        if var.is_nan() || var <= VARIANCE_FLOOR || !mu.is_finite() {
            return Err(QbldError::NumericalFloor(format!(
                "conditional variance {var} (mean {mu}) of z at period {t}"
            )));
        }
        let (lo, hi) = truncation_bounds(y[t]);
        z[t] = sample_truncated_normal(mu, var, lo, hi, rng)?;
    }
    Ok(())
}

/// Blocked update of `z_i` marginal of `alpha_i`: a single Geweke sweep
/// starting from the current `z_i`.
pub fn sample_z_blocked(
    block: &IndividualBlock,
    beta: &DVector<f64>,
    w_i: &[f64],
    phi2: f64,
    constants: MixtureConstants,
    z_i: &[f64],
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let q = omega_precision(&block.s, w_i, phi2, constants.tau)?;
    let xb = &block.x * beta;
    let mean: Vec<f64> = xb.iter().zip(w_i).map(|(m, wt)| m + constants.theta * wt).collect();
    let mut z = z_i.to_vec();
    geweke_sweep(&q, &mean, &block.y, &mut z, rng)?;
    Ok(z)
}

/// `alpha_i | z_i, beta, w_i, phi^2` given `X_i beta` precomputed.
pub(crate) fn alpha_conditional_from_index(
    block: &IndividualBlock,
    z_i: &[f64],
    x_beta: &DVector<f64>,
    w_i: &[f64],
    phi2: f64,
    constants: MixtureConstants,
) -> Result<GaussianUpdate> {
    check_weights(w_i, phi2)?;
    if phi2 <= 0.0 {
        return Err(QbldError::domain("phi2 must be positive"));
    }
    let l = block.s.ncols();
    let tau2 = constants.tau2();
    let mut precision = DMatrix::identity(l, l) / phi2;
    let mut linear = DVector::zeros(l);
    for t in 0..block.periods() {
        let d_inv = 1.0 / (tau2 * w_i[t]);
        let r = z_i[t] - x_beta[t] - constants.theta * w_i[t];
        for a in 0..l {
            let sa = block.s[(t, a)] * d_inv;
            linear[a] += sa * r;
            for b in 0..l {
                precision[(a, b)] += sa * block.s[(t, b)];
            }
        }
    }
    GaussianUpdate::from_canonical(precision, linear)
}

/// `alpha_i | z_i, beta, w_i, phi^2`: precision `S_i' D_i^{-1} S_i + I/phi^2`,
/// mean `A S_i' D_i^{-1} (z_i - X_i beta - theta w_i)`.
pub fn alpha_conditional(
    block: &IndividualBlock,
    z_i: &[f64],
    beta: &DVector<f64>,
    w_i: &[f64],
    phi2: f64,
    constants: MixtureConstants,
) -> Result<GaussianUpdate> {
    let xb = &block.x * beta;
    alpha_conditional_from_index(block, z_i, &xb, w_i, phi2, constants)
}

/// Parameters `(lambda, eta)` of the GIG(1/2) conditional of `w_it` given the
/// latent utility and the linear index `x_it' beta + s_it' alpha_i`.
pub fn w_conditional_params(z: f64, index: f64, constants: MixtureConstants) -> (f64, f64) {
    let resid = (z - index) / constants.tau;
    let eta = constants.theta * constants.theta / constants.tau2() + 2.0;
    (resid * resid, eta)
}

/// Draw `w_it | z_it, beta, alpha_i ~ GIG(1/2, lambda, eta)`; `lambda` is
/// floored at [`LAMBDA_FLOOR`].
pub fn sample_w_element(
    z: f64,
    index: f64,
    constants: MixtureConstants,
    rng: &mut RandomStream,
) -> Result<f64> {
    let (lambda, eta) = w_conditional_params(z, index, constants);
    sample_gig_half(lambda.max(LAMBDA_FLOOR), eta, rng)
}

/// Draw `phi^2 | alpha ~ IG((n l + c1)/2, (sum alpha_i' alpha_i + d1)/2)`.
pub fn sample_phi2(alpha: &[DVector<f64>], priors: &Priors, rng: &mut RandomStream) -> Result<f64> {
    let (shape, scale) = phi2_conditional_params(alpha, priors);
    sample_inverse_gamma(shape, scale, rng)
}

/// Shape and scale of the inverse-gamma conditional of phi^2.
pub fn phi2_conditional_params(alpha: &[DVector<f64>], priors: &Priors) -> (f64, f64) {
    let nl: usize = alpha.iter().map(|a| a.len()).sum();
    let ss: f64 = alpha.iter().map(|a| a.norm_squared()).sum();
    ((nl as f64 + priors.c1) / 2.0, (ss + priors.d1) / 2.0)
}

/// Non-blocked update of one latent utility: N(mean, variance) truncated to
/// the half-line selected by `y`.
pub fn sample_z_nonblocked(y: bool, mean: f64, variance: f64, rng: &mut RandomStream) -> Result<f64> {
    let (lo, hi) = truncation_bounds(y);
    sample_truncated_normal(mean, variance, lo, hi, rng)
}
