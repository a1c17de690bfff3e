//! Post-fit quantities: success probabilities, covariate effects,
//! conditional log-likelihood and conditional information criteria.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{al_survival_unchecked, AlParams, QuantileLevel};
use crate::draws::DrawStore;
use crate::error::{QbldError, Result};
use crate::model::{ModelSpec, PanelDataset};
use crate::rng::RandomStream;

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]` in the
/// log-likelihood.
pub const PROB_CLAMP: f64 = 1e-12;

/// `Pr(y = 1) = Pr(eps > -index)` for `eps ~ AL(0, 1, p)`.
#[inline]
pub fn success_probability_from_index(index: f64, p: QuantileLevel) -> f64 {
    al_survival_unchecked(-index, &AlParams::standard(p))
}

pub fn success_probability(x: &[f64], s: &[f64], beta: &[f64], alpha: &[f64], p: QuantileLevel) -> f64 {
    let index: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
        + s.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>();
    success_probability_from_index(index, p)
}

/// How the target covariate moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Contrast {
    /// From `from` (x double-dagger) to `to` (x dagger), for every observation.
    Values { from: f64, to: f64 },
    /// Observed value shifted by `delta`.
    Delta { delta: f64 },
    /// Dummy switched from 0 to 1.
    Indicator,
}

impl Contrast {
    /// `(baseline, treated)` values of the target covariate at an observation
    /// whose observed value is `observed`.
    fn values(&self, observed: f64) -> (f64, f64) {
        match *self {
            Contrast::Values { from, to } => (from, to),
            Contrast::Delta { delta } => (observed, observed + delta),
            Contrast::Indicator => (0.0, 1.0),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Contrast::Values { from, to } => format!("{from} -> {to}"),
            Contrast::Delta { delta } => format!("observed + {delta}"),
            Contrast::Indicator => "0 -> 1".into(),
        }
    }
}

/// Restricts the average to observations whose column equals a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub equals: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRequest {
    #[serde(default)]
    pub name: Option<String>,
    pub column: String,
    pub contrast: Contrast,
    #[serde(default)]
    pub filter: Option<Filter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub name: String,
    pub column: String,
    pub contrast: String,
    pub mean: f64,
    pub std: f64,
    pub lower_95: f64,
    pub upper_95: f64,
    pub observations: usize,
    pub draws: usize,
    #[serde(skip)]
    pub per_draw: Vec<f64>,
}

/// Where `alpha_i` comes from at each draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSource {
    /// The chain's own stored `alpha_i` draws.
    Stored,
    /// `alpha_i ~ N(0, phi2_g I)` drawn fresh, seeded.
    PriorFallback { seed: u64 },
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Average change in `Pr(y = 1)` when the target covariate moves per the
/// contrast, averaged over the observed covariates of the selected
/// observations and reported over posterior draws.
pub fn covariate_effect(
    store: &DrawStore,
    data: &PanelDataset,
    req: &EffectRequest,
    spec: &ModelSpec,
    source: AlphaSource,
) -> Result<EffectSummary> {
    if store.is_empty() {
        return Err(QbldError::DegenerateChain("draw store is empty".into()));
    }
    if source == AlphaSource::Stored && !store.has_alpha() {
        return Err(QbldError::MissingAlpha);
    }
    if store.meta.n != data.n() || store.k() != data.k() || store.meta.l != data.l() {
        return Err(QbldError::Schema("draws do not match the dataset's shape".into()));
    }
    let x_names = data.x_names();
    let s_names = data.s_names();
    let target = data
        .x_columns()
        .iter()
        .position(|c| c == &req.column)
        .map(|j| j + data.x_intercept() as usize)
        .ok_or_else(|| {
            QbldError::Config(format!("effect column `{}` is not a common-effect covariate", req.column))
        })?;
    if let Contrast::Values { from, to } = req.contrast {
        if !from.is_finite() || !to.is_finite() {
            return Err(QbldError::Config("contrast values must be finite".into()));
        }
    }
    // observations kept by the filter, as (i, t)
    let filter_col = match &req.filter {
        None => None,
        Some(f) => Some(
            if let Some(j) = x_names.iter().position(|c| c == &f.column) {
                (true, j, f.equals)
            } else if let Some(j) = s_names.iter().position(|c| c == &f.column) {
                (false, j, f.equals)
            } else {
                return Err(QbldError::Config(format!("filter column `{}` not found", f.column)));
            },
        ),
    };
    let obs: Vec<(usize, usize)> = data
        .individuals()
        .iter()
        .enumerate()
        .flat_map(|(i, b)| (0..b.periods()).map(move |t| (i, t)))
        .filter(|&(i, t)| match filter_col {
            None => true,
            Some((in_x, j, v)) => {
                let b = &data.individuals()[i];
                let val = if in_x { b.x[(t, j)] } else { b.s[(t, j)] };
                val == v
            }
        })
        .collect();
    if obs.is_empty() {
        return Err(QbldError::Config("filter selects no observations".into()));
    }

    let p = spec.p();
    let k = data.k();
    let l = data.l();
    let per_draw: Vec<f64> = (0..store.len())
        .into_par_iter()
        .map(|g| {
            let beta = store.beta_draw(g);
            let fallback: Option<Vec<f64>> = match source {
                AlphaSource::Stored => None,
                AlphaSource::PriorFallback { seed } => {
                    let mut rng = RandomStream::with_stream(seed, g as u64);
                    let sd = store.phi2()[g].sqrt();
                    Some((0..data.n() * l).map(|_| sd * rng.standard_normal()).collect())
                }
            };
            let mut total = 0.0;
            for &(i, t) in &obs {
                let block = &data.individuals()[i];
                let alpha = match &fallback {
                    Some(a) => &a[i * l..(i + 1) * l],
                    None => store.alpha_draw(g, i).expect("checked above"),
                };
                let rest = (0..k).filter(|&j| j != target).map(|j| block.x[(t, j)] * beta[j]).sum::<f64>()
                    + alpha.iter().enumerate().map(|(j, a)| block.s[(t, j)] * a).sum::<f64>();
                let (base, treated) = req.contrast.values(block.x[(t, target)]);
                let p1 = success_probability_from_index(rest + treated * beta[target], p);
                let p0 = success_probability_from_index(rest + base * beta[target], p);
                total += p1 - p0;
            }
            total / obs.len() as f64
        })
        .collect();

    let g = per_draw.len() as f64;
    let mean = per_draw.iter().sum::<f64>() / g;
    let std = if per_draw.len() > 1 {
        (per_draw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (g - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = per_draw.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(EffectSummary {
        name: req.name.clone().unwrap_or_else(|| req.column.clone()),
        column: req.column.clone(),
        contrast: req.contrast.describe(),
        mean,
        std,
        lower_95: empirical_quantile(&sorted, 0.025),
        upper_95: empirical_quantile(&sorted, 0.975),
        observations: obs.len(),
        draws: per_draw.len(),
        per_draw,
    })
}

/// `sum y log pi + (1 - y) log(1 - pi)` at point estimates; `alpha_hat` is
/// `n x l` row-major.
pub fn conditional_loglik(beta_hat: &[f64], alpha_hat: &[f64], data: &PanelDataset, spec: &ModelSpec) -> Result<f64> {
    let (k, l) = (data.k(), data.l());
    if beta_hat.len() != k || alpha_hat.len() != data.n() * l {
        return Err(QbldError::Schema(format!(
            "point estimates have shapes {} and {}, expected {k} and {}",
            beta_hat.len(),
            alpha_hat.len(),
            data.n() * l
        )));
    }
    let p = spec.p();
    let mut ll = 0.0;
    for (i, block) in data.individuals().iter().enumerate() {
        let alpha = &alpha_hat[i * l..(i + 1) * l];
        for t in 0..block.periods() {
            let index = beta_hat.iter().enumerate().map(|(j, b)| block.x[(t, j)] * b).sum::<f64>()
                + alpha.iter().enumerate().map(|(j, a)| block.s[(t, j)] * a).sum::<f64>();
            let pi = success_probability_from_index(index, p).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            ll += if block.y[t] { pi.ln() } else { (1.0 - pi).ln() };
        }
    }
    Ok(ll)
}

/// Log-likelihood averaged over draws instead of evaluated at the means.
pub fn mean_draw_loglik(store: &DrawStore, data: &PanelDataset, spec: &ModelSpec) -> Result<f64> {
    if !store.has_alpha() {
        return Err(QbldError::MissingAlpha);
    }
    let l = data.l();
    let lls = (0..store.len())
        .into_par_iter()
        .map(|g| {
            let alpha: Vec<f64> = (0..data.n())
                .flat_map(|i| store.alpha_draw(g, i).expect("checked above").to_vec())
                .collect();
            debug_assert_eq!(alpha.len(), data.n() * l);
            conditional_loglik(store.beta_draw(g), &alpha, data, spec)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(lls.iter().sum::<f64>() / lls.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub loglik: f64,
    pub caic: f64,
    pub cbic: f64,
    pub dof: f64,
    pub n_obs: usize,
}

/// Conditional AIC/BIC with `k + 1` degrees of freedom (common effects plus
/// phi^2).
pub fn information_criteria(loglik: f64, k: usize, n_obs: usize) -> Result<FitMetrics> {
    if n_obs == 0 {
        return Err(QbldError::domain("information criteria need at least one observation"));
    }
    let dof = (k + 1) as f64;
    Ok(FitMetrics {
        loglik,
        caic: -2.0 * loglik + 2.0 * dof,
        cbic: -2.0 * loglik + dof * (n_obs as f64).ln(),
        dof,
        n_obs,
    })
}

/// Metrics at the posterior means of `beta` and `alpha`.
pub fn fit_metrics(store: &DrawStore, data: &PanelDataset, spec: &ModelSpec) -> Result<FitMetrics> {
    let alpha = store.alpha_mean().ok_or(QbldError::MissingAlpha)?;
    let ll = conditional_loglik(&store.beta_mean(), alpha, data, spec)?;
    information_criteria(ll, data.k(), data.n_obs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IndividualBlock, Priors};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn q(p: f64) -> QuantileLevel {
        QuantileLevel::new(p).unwrap()
    }

    #[test]
    fn success_probability_examples() {
        assert!((success_probability_from_index(0.0, q(0.5)) - 0.5).abs() < 1e-15);
        assert!((success_probability_from_index(0.0, q(0.25)) - 0.75).abs() < 1e-15);
        assert!((success_probability_from_index(1.0, q(0.5)) - 0.69673).abs() < 5e-6);
        let v = success_probability(&[1.0, 2.0], &[1.0], &[0.5, 0.25], &[0.0], q(0.5));
        assert!((v - 0.69673).abs() < 5e-6);
    }

    #[test]
    fn information_criteria_examples() {
        let m = information_criteria(-3127.38, 12, 8676).unwrap();
        assert!((m.caic - 6280.77).abs() <= 0.02, "{}", m.caic);
        assert_eq!(m.dof, 13.0);
        let m = information_criteria(0.0, 0, 100).unwrap();
        assert_eq!(m.caic, 2.0);
        assert!((m.cbic - 100f64.ln()).abs() < 1e-12);
        let m = information_criteria(-5030.12, 24, 10_000).unwrap();
        assert!((m.caic - 10110.24).abs() <= 0.02);
        assert!(information_criteria(0.0, 1, 0).is_err());
    }

    fn one_obs(x: f64, y: bool) -> PanelDataset {
        let b = IndividualBlock {
            id: "1".into(),
            time: vec![1.0],
            y: vec![y],
            x: DMatrix::from_element(1, 1, x),
            s: DMatrix::from_element(1, 1, 1.0),
        };
        PanelDataset::new(vec![b], vec!["x".into()], vec![], false, true).unwrap()
    }

    fn spec(p: f64) -> ModelSpec {
        ModelSpec::new(q(p), Priors::isotropic(1, 10.0, 10.0, 9.0).unwrap())
    }

    #[test]
    fn loglik_examples() {
        let ll = conditional_loglik(&[0.0], &[0.0], &one_obs(1.0, true), &spec(0.5)).unwrap();
        assert!((ll + std::f64::consts::LN_2).abs() < 1e-12);
        let ll = conditional_loglik(&[40.0], &[0.0], &one_obs(1.0, true), &spec(0.5)).unwrap();
        assert!(ll.is_finite() && ll.abs() < 1e-6);
        let ll = conditional_loglik(&[-40.0], &[0.0], &one_obs(1.0, true), &spec(0.5)).unwrap();
        assert!(ll.is_finite());
        // pi = 0.75 at index 0 when p = 0.25
        let b1 = IndividualBlock {
            id: "1".into(),
            time: vec![1.0, 2.0],
            y: vec![true, false],
            x: DMatrix::from_element(2, 1, 0.0),
            s: DMatrix::from_element(2, 1, 1.0),
        };
        let data = PanelDataset::new(vec![b1], vec!["x".into()], vec![], false, true).unwrap();
        let ll = conditional_loglik(&[0.0], &[0.0], &data, &spec(0.25)).unwrap();
        assert!((ll - (0.75f64.ln() + 0.25f64.ln())).abs() < 1e-12);
        assert!(conditional_loglik(&[0.0, 1.0], &[0.0], &data, &spec(0.25)).is_err());
    }

    proptest! {
        #[test]
        fn success_probability_monotone(a in -30.0f64..30.0, d in 1e-3f64..5.0, p in 0.02f64..0.98) {
            let p = q(p);
            prop_assert!(success_probability_from_index(a + d, p) > success_probability_from_index(a, p));
            prop_assert!((success_probability_from_index(0.0, p) - (1.0 - p.value())).abs() < 1e-15);
        }

        #[test]
        fn median_symmetry(d in 0.0f64..20.0) {
            let p = q(0.5);
            let up = success_probability_from_index(d, p) - success_probability_from_index(0.0, p);
            let down = success_probability_from_index(0.0, p) - success_probability_from_index(-d, p);
            prop_assert!((up - down).abs() < 1e-14);
        }
    }
}
