//! Gibbs samplers for the quantile model.
//!
//! The blocked sampler draws `(beta, z_i)` with `alpha_i` integrated out,
//! then `alpha_i`, `w_it` and `phi^2` from their full conditionals. The
//! non-blocked sampler cycles `beta | alpha`, `alpha_i`, `w_it`, `phi^2`,
//! `z_it` one conditional at a time.
//!
//! Per-individual updates consume their own random streams, so a sweep gives
//! the same draws whether individuals are processed sequentially or on the
//! rayon pool.

mod conditionals;

pub use conditionals::{
    alpha_conditional, beta_conditional_blocked, beta_conditional_nonblocked,
    conditional_moments, geweke_sweep, omega_matrix, omega_precision, phi2_conditional_params,
    sample_phi2, sample_w_element, sample_z_blocked, sample_z_nonblocked, truncation_bounds,
    w_conditional_params, GaussianUpdate, LAMBDA_FLOOR, VARIANCE_FLOOR,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::sample_truncated_normal;
use crate::draws::{DrawMetadata, DrawStore};
use crate::error::{QbldError, Result};
use crate::model::{validate_state, McmcState, ModelSpec, PanelDataset};
use crate::rng::{ChainStreams, RandomStream};
use conditionals::{alpha_conditional_from_index, beta_blocked_from_precisions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Blocked,
    Nonblocked,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Blocked => f.write_str("blocked"),
            Algorithm::Nonblocked => f.write_str("nonblocked"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    /// Total sweeps, burn-in included.
    pub total_draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub store_alpha: bool,
    #[serde(default)]
    pub parallel_individuals: bool,
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_thin() -> usize {
    1
}

impl SamplerConfig {
    pub fn new(algorithm: Algorithm, total_draws: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            algorithm,
            total_draws,
            burn_in,
            seed,
            store_alpha: false,
            parallel_individuals: false,
            thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_draws {
            return Err(QbldError::Config(format!(
                "burn_in ({}) must be smaller than the number of draws ({})",
                self.burn_in, self.total_draws
            )));
        }
        if self.thin == 0 {
            return Err(QbldError::Config("thin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.total_draws - self.burn_in) / self.thin
    }
}

fn map_individuals<T, F>(streams: &mut [RandomStream], parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RandomStream) -> Result<T> + Sync + Send,
{
    if parallel {
        streams.par_iter_mut().enumerate().map(|(i, r)| f(i, r)).collect()
    } else {
        streams.iter_mut().enumerate().map(|(i, r)| f(i, r)).collect()
    }
}

/// Starting point: `beta = 0`, `alpha_i = 0`, `phi^2` at its prior mean,
/// `w = 1` and each `z_it` from N(0, tau^2) truncated to the side given by
/// `y_it`.
pub fn initial_state(data: &PanelDataset, spec: &ModelSpec, streams: &mut ChainStreams) -> Result<McmcState> {
    let tau2 = spec.constants().tau2();
    let z = data
        .individuals()
        .iter()
        .zip(streams.individuals.iter_mut())
        .map(|(block, rng)| {
            block
                .y
                .iter()
                .map(|&y| {
                    let (lo, hi) = truncation_bounds(y);
                    sample_truncated_normal(0.0, tau2, lo, hi, rng)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McmcState {
        beta: DVector::zeros(data.k()),
        alpha: vec![DVector::zeros(data.l()); data.n()],
        w: data.individuals().iter().map(|b| vec![1.0; b.periods()]).collect(),
        z,
        phi2: spec.priors().phi2_prior_mean(),
    })
}

/// One iteration of the blocked sampler.
pub fn sweep_blocked(
    data: &PanelDataset,
    spec: &ModelSpec,
    state: &mut McmcState,
    streams: &mut ChainStreams,
    parallel: bool,
) -> Result<()> {
    let c = spec.constants();
    let phi2 = state.phi2;

    // 1(a): beta marginal of alpha
    let precisions: Vec<DMatrix<f64>> = {
        let w = &state.w;
        let build = |i: usize| omega_precision(&data.individuals()[i].s, &w[i], phi2, c.tau);
        if parallel {
            (0..data.n()).into_par_iter().map(build).collect::<Result<_>>()?
        } else {
            (0..data.n()).map(build).collect::<Result<_>>()?
        }
    };
    let beta_update = beta_blocked_from_precisions(data, &precisions, &state.z, &state.w, spec)?;
    state.beta = beta_update.sample(&mut streams.global);

    // 1(b), 2, 3: z_i, then alpha_i, then w_i; independent across i given (beta, phi^2)
    let current = &*state;
    let updates = map_individuals(&mut streams.individuals, parallel, |i, rng| {
        let block = &data.individuals()[i];
        let w_i = &current.w[i];
        let xb = &block.x * &current.beta;
        let mean: Vec<f64> = xb.iter().zip(w_i).map(|(m, wt)| m + c.theta * wt).collect();
        let mut z = current.z[i].clone();
        geweke_sweep(&precisions[i], &mean, &block.y, &mut z, rng)?;
        let alpha = alpha_conditional_from_index(block, &z, &xb, w_i, phi2, c)?.sample(rng);
        let sa = &block.s * &alpha;
        let w = (0..block.periods())
            .map(|t| sample_w_element(z[t], xb[t] + sa[t], c, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok((z, alpha, w))
    })?;
    for (i, (z, alpha, w)) in updates.into_iter().enumerate() {
        state.z[i] = z;
        state.alpha[i] = alpha;
        state.w[i] = w;
    }

    // 4: phi^2
    state.phi2 = sample_phi2(&state.alpha, spec.priors(), &mut streams.global)?;
    Ok(())
}

/// One iteration of the non-blocked sampler.
pub fn sweep_nonblocked(
    data: &PanelDataset,
    spec: &ModelSpec,
    state: &mut McmcState,
    streams: &mut ChainStreams,
    parallel: bool,
) -> Result<()> {
    let c = spec.constants();

    // 1: beta | alpha
    let beta_update = beta_conditional_nonblocked(data, &state.z, &state.alpha, &state.w, spec)?;
    state.beta = beta_update.sample(&mut streams.global);

    // 2, 3: alpha_i then w_i
    let current = &*state;
    let updates = map_individuals(&mut streams.individuals, parallel, |i, rng| {
        let block = &data.individuals()[i];
        let z = &current.z[i];
        let xb = &block.x * &current.beta;
        let alpha = alpha_conditional_from_index(block, z, &xb, &current.w[i], current.phi2, c)?.sample(rng);
        let sa = &block.s * &alpha;
        let w = (0..block.periods())
            .map(|t| sample_w_element(z[t], xb[t] + sa[t], c, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok((alpha, w))
    })?;
    for (i, (alpha, w)) in updates.into_iter().enumerate() {
        state.alpha[i] = alpha;
        state.w[i] = w;
    }

    // 4: phi^2
    state.phi2 = sample_phi2(&state.alpha, spec.priors(), &mut streams.global)?;

    // 5: z_it, univariate
    let tau2 = c.tau2();
    let current = &*state;
    let zs = map_individuals(&mut streams.individuals, parallel, |i, rng| {
        let block = &data.individuals()[i];
        let index = &block.x * &current.beta + &block.s * &current.alpha[i];
        (0..block.periods())
            .map(|t| {
                let wt = current.w[i][t];
                sample_z_nonblocked(block.y[t], index[t] + c.theta * wt, tau2 * wt, rng)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    state.z = zs;
    Ok(())
}

/// Dispatches one sweep of the configured algorithm.
pub fn sweep(
    algorithm: Algorithm,
    data: &PanelDataset,
    spec: &ModelSpec,
    state: &mut McmcState,
    streams: &mut ChainStreams,
    parallel: bool,
) -> Result<()> {
    match algorithm {
        Algorithm::Blocked => sweep_blocked(data, spec, state, streams, parallel),
        Algorithm::Nonblocked => sweep_nonblocked(data, spec, state, streams, parallel),
    }
}

/// Runs a full chain and returns the retained draws.
pub fn run_chain(data: &PanelDataset, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<DrawStore> {
    cfg.validate()?;
    spec.check_data(data)?;
    let mut streams = ChainStreams::new(cfg.seed, data.n());
    let mut state = initial_state(data, spec, &mut streams)?;
    validate_state(&state, data)?;

    let meta = DrawMetadata {
        p: spec.p().value(),
        seed: cfg.seed,
        algorithm: cfg.algorithm,
        total_draws: cfg.total_draws,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        retained: cfg.retained(),
        n: data.n(),
        k: data.k(),
        l: data.l(),
        beta_names: data.x_names(),
    };
    let mut store = DrawStore::with_capacity(meta, cfg.store_alpha);
    for g in 1..=cfg.total_draws {
        sweep(cfg.algorithm, data, spec, &mut state, &mut streams, cfg.parallel_individuals).map_err(
            |e| QbldError::Sweep {
                sweep: g,
                source: Box::new(e),
            },
        )?;
        if cfg!(debug_assertions) {
            validate_state(&state, data).map_err(|e| QbldError::Sweep {
                sweep: g,
                source: Box::new(e),
            })?;
        }
        if g > cfg.burn_in && (g - cfg.burn_in).is_multiple_of(cfg.thin) {
            store.push(
                state.beta.as_slice(),
                state.phi2,
                state.alpha.iter().flat_map(|a| a.iter().copied()),
            );
        }
    }
    store.finish();
    Ok(store)
}
