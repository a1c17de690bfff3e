//! Density, CDF, quantile and random-variate kernels used by the samplers.
//!
//! The asymmetric Laplace law AL(mu, sigma, p) has density
//!
//! ```text
//! f(y) = p(1-p)/sigma * exp(-rho_p((y - mu)/sigma)),   rho_p(u) = u (p - 1{u < 0})
//! ```
//!
//! and admits the normal-exponential mixture `theta*w + tau*sqrt(w)*u` with
//! `w ~ Exp(1)`, `u ~ N(0,1)`, which is what makes every full conditional of
//! the quantile model tractable.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{QbldError, Result};
use crate::rng::RandomStream;

/// Standardized bound beyond which the truncated-normal sampler switches
/// from inverse-CDF to exponential-proposal rejection.
const TAIL_SWITCH: f64 = 5.0;

/// A quantile level strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 && p < 1.0 {
            Ok(Self(p))
        } else {
            Err(QbldError::domain(format!(
                "p must lie strictly inside (0, 1), got {p}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = QbldError;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(p: QuantileLevel) -> f64 {
        p.0
    }
}

/// Loadings of the normal-exponential mixture: `eps = theta*w + tau*sqrt(w)*u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConstants {
    pub theta: f64,
    pub tau: f64,
}

impl MixtureConstants {
    #[inline]
    pub fn tau2(&self) -> f64 {
        self.tau * self.tau
    }
}

pub fn mixture_constants(p: QuantileLevel) -> MixtureConstants {
    let p = p.value();
    let pq = p * (1.0 - p);
    MixtureConstants {
        theta: (1.0 - 2.0 * p) / pq,
        tau: (2.0 / pq).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlParams {
    pub mu: f64,
    pub sigma: f64,
    pub p: QuantileLevel,
}

impl AlParams {
    pub fn new(mu: f64, sigma: f64, p: QuantileLevel) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(QbldError::domain(format!(
                "AL scale must be positive, got {sigma}"
            )));
        }
        if !mu.is_finite() {
            return Err(QbldError::domain(format!("AL location must be finite, got {mu}")));
        }
        Ok(Self { mu, sigma, p })
    }

    /// AL(0, 1, p), the error law of the latent utility.
    pub fn standard(p: QuantileLevel) -> Self {
        Self { mu: 0.0, sigma: 1.0, p }
    }

    pub fn mean(&self) -> f64 {
        let p = self.p.value();
        self.mu + self.sigma * (1.0 - 2.0 * p) / (p * (1.0 - p))
    }

    pub fn variance(&self) -> f64 {
        let p = self.p.value();
        self.sigma * self.sigma * (1.0 - 2.0 * p + 2.0 * p * p) / (p * p * (1.0 - p) * (1.0 - p))
    }

    fn check(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(QbldError::domain(format!(
                "AL scale must be positive, got {}",
                self.sigma
            )))
        }
    }
}

/// Quantile check loss `u * (p - 1{u < 0})`.
#[inline]
pub fn check_loss(u: f64, p: QuantileLevel) -> f64 {
    let p = p.value();
    if u < 0.0 {
        u * (p - 1.0)
    } else {
        u * p
    }
}

pub fn al_density(y: f64, params: &AlParams) -> Result<f64> {
    params.check()?;
    let p = params.p.value();
    let u = (y - params.mu) / params.sigma;
    Ok(p * (1.0 - p) / params.sigma * (-check_loss(u, params.p)).exp())
}

pub fn al_cdf(y: f64, params: &AlParams) -> Result<f64> {
    params.check()?;
    Ok(al_cdf_unchecked(y, params))
}

#[inline]
pub(crate) fn al_cdf_unchecked(y: f64, params: &AlParams) -> f64 {
    let p = params.p.value();
    let u = (y - params.mu) / params.sigma;
    if u <= 0.0 {
        p * ((1.0 - p) * u).exp()
    } else {
        1.0 - (1.0 - p) * (-p * u).exp()
    }
}

/// Upper tail `1 - F(y)`, computed without cancellation.
#[inline]
pub(crate) fn al_survival_unchecked(y: f64, params: &AlParams) -> f64 {
    let p = params.p.value();
    let u = (y - params.mu) / params.sigma;
    if u <= 0.0 {
        1.0 - p * ((1.0 - p) * u).exp()
    } else {
        (1.0 - p) * (-p * u).exp()
    }
}

pub fn al_quantile(q: f64, params: &AlParams) -> Result<f64> {
    params.check()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(QbldError::domain(format!(
            "quantile argument must lie in (0, 1), got {q}"
        )));
    }
    let p = params.p.value();
    let u = if q <= p {
        (q / p).ln() / (1.0 - p)
    } else {
        -((1.0 - q) / (1.0 - p)).ln() / p
    };
    Ok(params.mu + params.sigma * u)
}

/// AL variate by inversion of the closed-form CDF.
pub fn sample_al(params: &AlParams, rng: &mut RandomStream) -> Result<f64> {
    al_quantile(rng.uniform_open(), params)
}

/// AL variate through the normal-exponential mixture. Distributionally
/// identical to [`sample_al`]; kept as an independent route for testing.
pub fn sample_al_mixture(params: &AlParams, rng: &mut RandomStream) -> Result<f64> {
    params.check()?;
    let c = mixture_constants(params.p);
    let w = rng.standard_exponential();
    let u = rng.standard_normal();
    Ok(params.mu + params.sigma * (c.theta * w + c.tau * w.sqrt() * u))
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[inline]
fn normal_sf_inv(u: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Standard normal truncated to `[a, b]`, `a < b`, either end possibly infinite.
fn standard_truncated_normal(a: f64, b: f64, rng: &mut RandomStream) -> f64 {
    if a > TAIL_SWITCH {
        return tail_rejection(a, b, rng);
    }
    if b < -TAIL_SWITCH {
        return -tail_rejection(-b, -a, rng);
    }
    let x = if a >= 0.0 {
        upper_inversion(a, b, rng)
    } else if b <= 0.0 {
        -upper_inversion(-b, -a, rng)
    } else {
        let pa = normal_cdf(a);
        let pb = normal_cdf(b);
        let u = pa + rng.uniform_open() * (pb - pa);
        -normal_sf_inv(u)
    };
    x.clamp(a, b)
}

/// Inversion through the survival function, accurate for `0 <= a < b`.
fn upper_inversion(a: f64, b: f64, rng: &mut RandomStream) -> f64 {
    let qa = normal_sf(a);
    let qb = normal_sf(b);
    let u = qb + rng.uniform_open() * (qa - qb);
    normal_sf_inv(u)
}

/// Rejection sampler for `[a, b]` with `a` far in the right tail.
fn tail_rejection(a: f64, b: f64, rng: &mut RandomStream) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    if b.is_finite() && b - a < 1.0 / rate {
        // narrow window: uniform proposal, acceptance >= e^-1
        loop {
            let x = a + rng.uniform_open() * (b - a);
            if rng.uniform_open().ln() <= 0.5 * (a * a - x * x) {
                return x;
            }
        }
    }
    loop {
        let x = a + rng.standard_exponential() / rate;
        if x > b {
            continue;
        }
        let d = x - rate;
        if rng.uniform_open().ln() <= -0.5 * d * d {
            return x;
        }
    }
}

/// Draw from N(mean, variance) conditioned on `(lower, upper]`.
pub fn sample_truncated_normal(
    mean: f64,
    variance: f64,
    lower: f64,
    upper: f64,
    rng: &mut RandomStream,
) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(QbldError::domain(format!(
            "truncated normal variance must be positive, got {variance}"
        )));
    }
    if !mean.is_finite() || lower.is_nan() || upper.is_nan() || lower >= upper {
        return Err(QbldError::domain(format!(
            "empty truncation interval ({lower}, {upper}] for mean {mean}"
        )));
    }
    let sd = variance.sqrt();
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    for _ in 0..1000 {
        let x = mean + sd * standard_truncated_normal(a, b, rng);
        if x > lower && x <= upper {
            return Ok(x);
        }
    }
    Err(QbldError::NumericalFloor(format!(
        "interval ({lower}, {upper}] too narrow for N({mean}, {variance})"
    )))
}

/// Draw from the generalized inverse Gaussian with index 1/2, density
/// proportional to `w^{-1/2} exp(-(lambda/w + eta*w)/2)` on `w > 0`.
///
/// Uses the reciprocal of an inverse-Gaussian variate with mean
/// `sqrt(eta/lambda)` and shape `eta`, generated by the Michael-Schucany-Haas
/// transformation.
pub fn sample_gig_half(lambda: f64, eta: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite() && eta > 0.0 && eta.is_finite()) {
        return Err(QbldError::domain(format!(
            "GIG parameters must be positive, got lambda={lambda}, eta={eta}"
        )));
    }
    let mu = (eta / lambda).sqrt();
    let shape = eta;
    let nu = rng.standard_normal();
    let a = mu * nu * nu / (2.0 * shape);
    // mu + mu^2 y/(2s) - mu/(2s) sqrt(4 mu s y + mu^2 y^2), rearranged to avoid cancellation
    let x = mu / (1.0 + a + (a * a + 2.0 * a).sqrt());
    let v = if rng.uniform_open() <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    };
    Ok(1.0 / v)
}

/// Draw from IG(shape, scale) with density proportional to `x^{-(shape+1)} e^{-scale/x}`.
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
        return Err(QbldError::domain(format!(
            "inverse gamma parameters must be positive, got shape={shape}, scale={scale}"
        )));
    }
    let gamma = Gamma::new(shape, 1.0).map_err(|e| QbldError::domain(e.to_string()))?;
    Ok(scale / gamma.sample(rng))
}

/// Draw from N(mean, covariance) through the lower Cholesky factor of the covariance.
pub fn sample_mvn(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(QbldError::domain(format!(
            "covariance is {}x{}, mean has length {d}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let scale = covariance.amax().max(1.0);
    if (covariance - covariance.transpose()).amax() > 1e-10 * scale {
        return Err(QbldError::Factorization("covariance is not symmetric".into()));
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| QbldError::Factorization("covariance is not positive definite".into()))?;
    let u = DVector::from_fn(d, |_, _| rng.standard_normal());
    Ok(mean + chol.l() * u)
}
