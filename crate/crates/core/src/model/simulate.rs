//! Synthetic panels drawn from the quantile model itself.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{IndividualBlock, PanelDataset};
use crate::distributions::{sample_al, AlParams, QuantileLevel};
use crate::error::{QbldError, Result};
use crate::rng::RandomStream;

/// Design of a simulated panel. Both `X` and `S` carry an intercept; the
/// remaining `k-1` and `l-1` covariates are independent U(0,1) draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub n: usize,
    #[serde(alias = "T")]
    pub t: usize,
    pub beta: Vec<f64>,
    /// Variance of each component of `alpha_i ~ N(0, v I_l)`.
    #[serde(default = "default_alpha_variance")]
    pub alpha_variance: f64,
    /// Number of individual-specific covariates, intercept included.
    #[serde(default = "default_l")]
    pub l: usize,
    pub p: QuantileLevel,
    pub seed: u64,
}

fn default_alpha_variance() -> f64 {
    1.0
}
fn default_l() -> usize {
    2
}

impl SimulationDesign {
    pub fn new(n: usize, t: usize, beta: Vec<f64>, alpha_variance: f64, p: QuantileLevel, seed: u64) -> Self {
        Self {
            n,
            t,
            beta,
            alpha_variance,
            l: 2,
            p,
            seed,
        }
    }
}

/// Generating values kept alongside simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub alpha_variance: f64,
    pub p: f64,
    pub seed: u64,
    pub alpha: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

pub fn simulate_qbld(design: &SimulationDesign) -> Result<(PanelDataset, GroundTruth)> {
    if design.n == 0 || design.t == 0 {
        return Err(QbldError::Config(format!(
            "n and T must be at least 1, got n={}, T={}",
            design.n, design.t
        )));
    }
    if design.beta.is_empty() {
        return Err(QbldError::Config("beta must have at least one entry".into()));
    }
    if design.l == 0 {
        return Err(QbldError::Config("l must be at least 1".into()));
    }
    if !(design.alpha_variance >= 0.0 && design.alpha_variance.is_finite()) {
        return Err(QbldError::Config(format!(
            "alpha_variance must be non-negative, got {}",
            design.alpha_variance
        )));
    }
    let k = design.beta.len();
    let l = design.l;
    let t_len = design.t;
    let al = AlParams::standard(design.p);
    let sd = design.alpha_variance.sqrt();
    let mut rng = RandomStream::new(design.seed);

    let mut individuals = Vec::with_capacity(design.n);
    let mut alphas = Vec::with_capacity(design.n);
    let mut zs = Vec::with_capacity(design.n);
    for i in 0..design.n {
        let alpha: Vec<f64> = (0..l).map(|_| sd * rng.standard_normal()).collect();
        let mut x = DMatrix::zeros(t_len, k);
        let mut s = DMatrix::zeros(t_len, l);
        let mut z = Vec::with_capacity(t_len);
        let mut y = Vec::with_capacity(t_len);
        for t in 0..t_len {
            x[(t, 0)] = 1.0;
            for j in 1..k {
                x[(t, j)] = rng.uniform_open();
            }
            s[(t, 0)] = 1.0;
            for j in 1..l {
                s[(t, j)] = rng.uniform_open();
            }
            let eps = sample_al(&al, &mut rng)?;
            let index: f64 = (0..k).map(|j| x[(t, j)] * design.beta[j]).sum::<f64>()
                + (0..l).map(|j| s[(t, j)] * alpha[j]).sum::<f64>();
            let zt = index + eps;
            z.push(zt);
            y.push(zt > 0.0);
        }
        individuals.push(IndividualBlock {
            id: (i + 1).to_string(),
            time: (1..=t_len).map(|t| t as f64).collect(),
            y,
            x,
            s,
        });
        alphas.push(alpha);
        zs.push(z);
    }
    let x_columns = (2..=k).map(|j| format!("x{j}")).collect();
    let s_columns = (2..=l).map(|j| format!("s{j}")).collect();
    let data = PanelDataset::new(individuals, x_columns, s_columns, true, true)?;
    let truth = GroundTruth {
        beta: design.beta.clone(),
        alpha_variance: design.alpha_variance,
        p: design.p.value(),
        seed: design.seed,
        alpha: alphas,
        z: zs,
    };
    Ok((data, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(p: f64, seed: u64) -> SimulationDesign {
        SimulationDesign::new(500, 10, vec![-5.0, 6.0, 4.0], 1.0, QuantileLevel::new(p).unwrap(), seed)
    }

    #[test]
    fn shapes_and_sign_rule() {
        let (data, truth) = simulate_qbld(&design(0.5, 1)).unwrap();
        assert_eq!(data.n(), 500);
        assert_eq!(data.n_obs(), 5000);
        assert_eq!((data.k(), data.l()), (3, 2));
        for (block, z) in data.individuals().iter().zip(&truth.z) {
            for (y, z) in block.y.iter().zip(z) {
                assert_eq!(*y, *z > 0.0);
            }
        }
    }

    #[test]
    fn bitwise_reproducible() {
        let (a, ta) = simulate_qbld(&design(0.25, 9)).unwrap();
        let (b, tb) = simulate_qbld(&design(0.25, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = simulate_qbld(&design(0.25, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn class_shares_near_reported_counts() {
        let seeds = 10;
        let mut share = [0.0; 2];
        for seed in 0..seeds {
            share[0] += simulate_qbld(&design(0.5, seed)).unwrap().0.ones_share() / seeds as f64;
            share[1] += simulate_qbld(&design(0.75, seed)).unwrap().0.ones_share() / seeds as f64;
        }
        assert!((share[0] - 0.4824).abs() < 0.03, "p=0.5 share {}", share[0]);
        assert!((share[1] - 0.2928).abs() < 0.03, "p=0.75 share {}", share[1]);
    }

    #[test]
    fn null_design_is_balanced() {
        let mut hits = 0;
        for seed in 0..20 {
            let d = SimulationDesign {
                n: 10_000,
                t: 10,
                beta: vec![0.0],
                alpha_variance: 0.0,
                l: 1,
                p: QuantileLevel::new(0.5).unwrap(),
                seed,
            };
            let (data, _) = simulate_qbld(&d).unwrap();
            assert!((data.ones_share() - 0.5).abs() < 0.02);
            if (data.ones_share() - 0.5).abs() < 0.005 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "{hits}/20 seeds inside 0.5 +- 0.005");
    }

    #[test]
    fn rejects_empty_design() {
        let mut d = design(0.5, 1);
        d.n = 0;
        assert!(simulate_qbld(&d).is_err());
    }
}
