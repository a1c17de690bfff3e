//! Chain summaries: posterior moments, autocorrelations and batch-means
//! inefficiency factors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::draws::DrawStore;
use crate::error::{QbldError, Result};

/// Lags reported by [`summarize`].
pub const SUMMARY_LAGS: [usize; 3] = [1, 5, 10];

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sum of squared deviations from the mean.
fn centered_ss(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

fn is_degenerate(xs: &[f64], m: f64, ss: f64) -> bool {
    // relative to the scale of the values, so affine images stay consistent
    let scale = m.abs().max(xs.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    ss <= (f64::EPSILON * scale).powi(2) * xs.len() as f64 * 16.0
}

/// Sample autocorrelation with the divide-by-G covariance estimator.
pub fn autocorrelation(chain: &[f64], lag: usize) -> Result<f64> {
    if lag >= chain.len() {
        return Err(QbldError::InsufficientLength {
            len: chain.len(),
            batch_size: lag,
        });
    }
    let m = mean(chain);
    let ss = centered_ss(chain, m);
    if is_degenerate(chain, m, ss) {
        return Err(QbldError::DegenerateChain("chain has zero variance".into()));
    }
    if lag == 0 {
        return Ok(1.0);
    }
    let cross: f64 = chain
        .iter()
        .zip(&chain[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    Ok(cross / ss)
}

/// Batch-means inefficiency factor `b Var(batch means) / Var(chain)` over
/// contiguous non-overlapping batches; a trailing partial batch is dropped.
pub fn inefficiency_factor(chain: &[f64], batch_size: usize) -> Result<f64> {
    if batch_size == 0 || chain.len() < 10 * batch_size {
        return Err(QbldError::InsufficientLength {
            len: chain.len(),
            batch_size,
        });
    }
    let m = mean(chain);
    let ss = centered_ss(chain, m);
    if is_degenerate(chain, m, ss) {
        return Err(QbldError::DegenerateChain("chain has zero variance".into()));
    }
    let var = ss / (chain.len() - 1) as f64;
    let means: Vec<f64> = chain.chunks_exact(batch_size).map(mean).collect();
    let bm = mean(&means);
    let var_means = centered_ss(&means, bm) / (means.len() - 1) as f64;
    Ok(batch_size as f64 * var_means / var)
}

/// Default batch size, `floor(sqrt(G))`.
pub fn default_batch_size(len: usize) -> usize {
    ((len as f64).sqrt().floor() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub mean: f64,
    pub std: f64,
    #[serde(rename = "if")]
    pub if_factor: Option<f64>,
    pub acf: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ChainSummary {
    pub fn acf_at(&self, lag: usize) -> Option<f64> {
        self.acf.get(&lag).copied()
    }
}

/// Mean, std, IF and ACF at [`SUMMARY_LAGS`] for one chain. Failures of IF or
/// ACF are recorded in `error` instead of aborting.
pub fn summarize_chain(chain: &[f64], batch_size: usize) -> Result<ChainSummary> {
    if chain.is_empty() {
        return Err(QbldError::DegenerateChain("empty chain".into()));
    }
    let m = mean(chain);
    let std = if chain.len() > 1 {
        (centered_ss(chain, m) / (chain.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut error = None;
    let if_factor = match inefficiency_factor(chain, batch_size) {
        Ok(v) => Some(v),
        Err(e) => {
            error = Some(e.to_string());
            None
        }
    };
    let mut acf = BTreeMap::new();
    for &lag in &SUMMARY_LAGS {
        match autocorrelation(chain, lag) {
            Ok(v) => {
                acf.insert(lag, v);
            }
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    Ok(ChainSummary {
        mean: m,
        std,
        if_factor,
        acf,
        error,
    })
}

/// Summary of every parameter column (`beta_j`, `phi2`). `batch_size`
/// defaults to `floor(sqrt(G))`.
pub fn summarize(store: &DrawStore, batch_size: Option<usize>) -> Result<Vec<(String, ChainSummary)>> {
    if store.is_empty() {
        return Err(QbldError::DegenerateChain("draw store is empty".into()));
    }
    let b = batch_size.unwrap_or_else(|| default_batch_size(store.len()));
    store
        .parameter_columns()
        .into_iter()
        .map(|(name, col)| Ok((name, summarize_chain(&col, b)?)))
        .collect()
}

/// JSON layout `{param: {mean, std, if, acf1, acf5, acf10}}`.
pub fn summary_json(summary: &[(String, ChainSummary)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (name, s) in summary {
        let mut entry = serde_json::Map::new();
        entry.insert("mean".into(), s.mean.into());
        entry.insert("std".into(), s.std.into());
        entry.insert("if".into(), s.if_factor.map_or(serde_json::Value::Null, Into::into));
        for lag in SUMMARY_LAGS {
            entry.insert(
                format!("acf{lag}"),
                s.acf_at(lag).map_or(serde_json::Value::Null, Into::into),
            );
        }
        if let Some(e) = &s.error {
            entry.insert("error".into(), e.clone().into());
        }
        map.insert(name.clone(), serde_json::Value::Object(entry));
    }
    serde_json::Value::Object(map)
}
