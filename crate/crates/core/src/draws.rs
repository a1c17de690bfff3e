//! Retained post-burn-in draws.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{QbldError, Result};
use crate::sampler::Algorithm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMetadata {
    pub p: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub total_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub retained: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub beta_names: Vec<String>,
}

/// Column-addressable store of draws: `beta` is `G x k` and `alpha`, when
/// kept, is `G x n x l`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub meta: DrawMetadata,
    beta: Vec<f64>,
    phi2: Vec<f64>,
    alpha: Option<Vec<f64>>,
    alpha_mean: Option<Vec<f64>>,
}

impl DrawStore {
    pub(crate) fn with_capacity(meta: DrawMetadata, store_alpha: bool) -> Self {
        let g = meta.retained;
        Self {
            beta: Vec::with_capacity(g * meta.k),
            phi2: Vec::with_capacity(g),
            alpha: store_alpha.then(|| Vec::with_capacity(g * meta.n * meta.l)),
            alpha_mean: Some(vec![0.0; meta.n * meta.l]),
            meta,
        }
    }

    pub(crate) fn push(&mut self, beta: &[f64], phi2: f64, alpha: impl Iterator<Item = f64> + Clone) {
        self.beta.extend_from_slice(beta);
        self.phi2.push(phi2);
        if let Some(store) = self.alpha.as_mut() {
            store.extend(alpha.clone());
        }
        if let Some(mean) = self.alpha_mean.as_mut() {
            for (m, a) in mean.iter_mut().zip(alpha) {
                *m += a;
            }
        }
    }

    pub(crate) fn finish(&mut self) {
        let g = self.len().max(1) as f64;
        if let Some(mean) = self.alpha_mean.as_mut() {
            mean.iter_mut().for_each(|m| *m /= g);
        }
    }

    /// Number of retained draws `G`.
    pub fn len(&self) -> usize {
        self.phi2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi2.is_empty()
    }

    pub fn k(&self) -> usize {
        self.meta.k
    }

    pub fn beta_draw(&self, g: usize) -> &[f64] {
        let k = self.meta.k;
        &self.beta[g * k..(g + 1) * k]
    }

    pub fn beta_column(&self, j: usize) -> Vec<f64> {
        self.beta.iter().skip(j).step_by(self.meta.k).copied().collect()
    }

    pub fn phi2(&self) -> &[f64] {
        &self.phi2
    }

    pub fn has_alpha(&self) -> bool {
        self.alpha.is_some()
    }

    /// `alpha_i` at draw `g`, if alpha draws were stored.
    pub fn alpha_draw(&self, g: usize, i: usize) -> Option<&[f64]> {
        let (n, l) = (self.meta.n, self.meta.l);
        self.alpha
            .as_ref()
            .map(|a| &a[(g * n + i) * l..(g * n + i + 1) * l])
    }

    pub fn beta_mean(&self) -> Vec<f64> {
        (0..self.meta.k)
            .map(|j| {
                let col = self.beta_column(j);
                col.iter().sum::<f64>() / col.len() as f64
            })
            .collect()
    }

    /// Posterior mean of every `alpha_i` as an `n x l` row-major buffer.
    pub fn alpha_mean(&self) -> Option<&[f64]> {
        self.alpha_mean.as_deref()
    }

    /// Parameter columns in file order: `beta_1..beta_k`, `phi2`.
    pub fn parameter_columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut cols: Vec<(String, Vec<f64>)> = (0..self.meta.k)
            .map(|j| (format!("beta_{}", j + 1), self.beta_column(j)))
            .collect();
        cols.push(("phi2".into(), self.phi2.clone()));
        cols
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.meta.k).map(|j| format!("beta_{j}")).collect();
        h.push("phi2".into());
        if self.alpha.is_some() {
            for i in 1..=self.meta.n {
                for j in 1..=self.meta.l {
                    h.push(format!("alpha_{i}_{j}"));
                }
            }
        }
        h
    }

    /// CSV with one row per retained draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.header())?;
        let nl = self.meta.n * self.meta.l;
        let mut row: Vec<String> = Vec::new();
        for g in 0..self.len() {
            row.clear();
            row.extend(self.beta_draw(g).iter().map(|v| v.to_string()));
            row.push(self.phi2[g].to_string());
            if let Some(alpha) = &self.alpha {
                row.extend(alpha[g * nl..(g + 1) * nl].iter().map(|v| v.to_string()));
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads a draws CSV written by [`DrawStore::write_csv`]. Shapes in
    /// `meta` must match the header.
    pub fn read_csv<R: Read>(input: R, meta: DrawMetadata) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        let k = meta.k;
        let nl = meta.n * meta.l;
        let expect_plain = k + 1;
        let with_alpha = match headers.len() {
            len if len == expect_plain => false,
            len if len == expect_plain + nl => true,
            len => {
                return Err(QbldError::Schema(format!(
                    "draws file has {len} columns, expected {expect_plain} or {}",
                    expect_plain + nl
                )))
            }
        };
        let mut store = DrawStore {
            beta: Vec::new(),
            phi2: Vec::new(),
            alpha: with_alpha.then(Vec::new),
            alpha_mean: None,
            meta,
        };
        for (r, record) in reader.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| QbldError::Parse {
                        row: r + 2,
                        message: format!("cannot parse `{f}` in draws file"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            store.beta.extend_from_slice(&values[..k]);
            store.phi2.push(values[k]);
            if let Some(a) = store.alpha.as_mut() {
                a.extend_from_slice(&values[k + 1..]);
            }
        }
        if let Some(a) = &store.alpha {
            let g = store.phi2.len().max(1) as f64;
            let mut mean = vec![0.0; nl];
            for row in a.chunks(nl) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= g);
            store.alpha_mean = Some(mean);
        }
        store.meta.retained = store.phi2.len();
        Ok(store)
    }
}
