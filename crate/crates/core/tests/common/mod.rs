//! Independent oracles shared by the integration tests and the acceptance
//! suite: gridded conditional densities built from the joint density of the
//! augmented model, a KS distance, and a joint-distribution (Geweke) check.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use qbld_core::distributions::{sample_inverse_gamma, sample_mvn, MixtureConstants, QuantileLevel};
use qbld_core::model::{IndividualBlock, McmcState, ModelSpec, PanelDataset, Priors};
use qbld_core::rng::ChainStreams;
use qbld_core::sampler::{
    alpha_conditional, beta_conditional_blocked, beta_conditional_nonblocked, sample_phi2, sample_w_element,
    sample_z_blocked, sample_z_nonblocked, sweep, Algorithm,
};
use qbld_core::RandomStream;

/// Tabulated CDF of a density known up to a constant.
pub struct GridCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridCdf {
    /// Scans `[lo, hi]`, trims to where the log density is within 60 of its
    /// maximum, then tabulates on `n` points with the trapezoid rule.
    pub fn from_log_density(logf: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Self {
        let coarse = 2_001;
        let h = (hi - lo) / (coarse - 1) as f64;
        let vals: Vec<f64> = (0..coarse).map(|i| logf(lo + i as f64 * h)).collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = vals.iter().position(|&v| v > max - 60.0).unwrap();
        let last = vals.iter().rposition(|&v| v > max - 60.0).unwrap();
        let a = (lo + first.saturating_sub(1) as f64 * h).max(lo);
        let b = (lo + (last + 1) as f64 * h).min(hi);
        let h = (b - a) / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
        let dens: Vec<f64> = xs.iter().map(|&x| (logf(x) - max).exp()).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i] + dens[i - 1]);
        }
        let total = cdf[n - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { xs, cdf }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        let n = self.xs.len();
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let h = self.xs[1] - self.xs[0];
        let j = (((x - self.xs[0]) / h) as usize).min(n - 2);
        let f = (x - self.xs[j]) / h;
        self.cdf[j] + f * (self.cdf[j + 1] - self.cdf[j])
    }
}

/// One-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(|a, b| a.total_cmp(b));
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A frozen two-individual instance with `T = 2`, `k = 1`, `l = 1`.
pub struct TinyInstance {
    pub data: PanelDataset,
    pub spec: ModelSpec,
    pub state: McmcState,
}

impl TinyInstance {
    pub fn new() -> Self {
        let block = |id: &str, x: [f64; 2], s: [f64; 2], y: [bool; 2]| IndividualBlock {
            id: id.into(),
            time: vec![1.0, 2.0],
            y: y.to_vec(),
            x: DMatrix::from_column_slice(2, 1, &x),
            s: DMatrix::from_column_slice(2, 1, &s),
        };
        let data = PanelDataset::new(
            vec![
                block("a", [0.8, -0.4], [1.0, 0.6], [true, false]),
                block("b", [0.3, 1.2], [1.0, -0.5], [false, true]),
            ],
            vec!["x".into()],
            vec!["s".into()],
            false,
            false,
        )
        .unwrap();
        let priors = Priors::new(DVector::from_element(1, 0.2), DMatrix::from_element(1, 1, 3.0), 6.0, 4.0).unwrap();
        let spec = ModelSpec::new(QuantileLevel::new(0.3).unwrap(), priors);
        let state = McmcState {
            beta: DVector::from_element(1, 0.9),
            alpha: vec![DVector::from_element(1, 0.4), DVector::from_element(1, -0.7)],
            z: vec![vec![0.7, -0.9], vec![-0.2, 1.5]],
            w: vec![vec![0.6, 1.4], vec![2.0, 0.3]],
            phi2: 0.8,
        };
        Self { data, spec, state }
    }

    fn c(&self) -> MixtureConstants {
        self.spec.constants()
    }

    /// `log p(z_i | beta, alpha_i, w_i)` ignoring the truncation indicator.
    fn log_z(&self, i: usize, z: &[f64], beta: f64, alpha: f64) -> f64 {
        let c = self.c();
        let b = &self.data.individuals()[i];
        let w = &self.state.w[i];
        (0..2)
            .map(|t| log_normal(z[t], b.x[(t, 0)] * beta + b.s[(t, 0)] * alpha + c.theta * w[t], c.tau2() * w[t]))
            .sum()
    }

    /// `log int p(z_i | beta, alpha, w_i) N(alpha; 0, phi2) d alpha` by quadrature.
    fn log_z_marginal(&self, i: usize, z: &[f64], beta: f64) -> f64 {
        let phi2 = self.state.phi2;
        let m = 4001;
        let (lo, hi) = (-20.0, 20.0);
        let h = (hi - lo) / (m - 1) as f64;
        let terms: Vec<f64> = (0..m)
            .map(|j| {
                let a = lo + j as f64 * h;
                self.log_z(i, z, beta, a) + log_normal(a, 0.0, phi2)
            })
            .collect();
        log_sum_exp(&terms) + h.ln()
    }

    fn log_beta_prior(&self, beta: f64) -> f64 {
        let pr = self.spec.priors();
        log_normal(beta, pr.beta0[0], pr.b0[(0, 0)])
    }
}

impl Default for TinyInstance {
    fn default() -> Self {
        Self::new()
    }
}

/// KS distance between `draws` sampler draws of each full conditional and
/// its gridded density, in the order: beta (blocked), beta (non-blocked),
/// alpha_1, w_11, phi^2, blocked z_11, non-blocked z_11.
pub fn conditional_oracle_ks(draws: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let inst = TinyInstance::new();
    let c = inst.c();
    let st = &inst.state;
    let data = &inst.data;
    let b0 = &data.individuals()[0];
    let mut rng = RandomStream::new(seed);
    let n_grid = 20_001;
    let mut out = Vec::new();

    // beta with alpha integrated out
    let upd = beta_conditional_blocked(data, &st.z, &st.w, st.phi2, &inst.spec).unwrap();
    let xs: Vec<f64> = (0..draws).map(|_| upd.sample(&mut rng)[0]).collect();
    let grid = GridCdf::from_log_density(
        |b| inst.log_beta_prior(b) + (0..2).map(|i| inst.log_z_marginal(i, &st.z[i], b)).sum::<f64>(),
        -30.0,
        30.0,
        4001,
    );
    out.push(("beta | z, w, phi2 (blocked)", ks_distance(xs, |x| grid.eval(x))));

    // beta given alpha
    let upd = beta_conditional_nonblocked(data, &st.z, &st.alpha, &st.w, &inst.spec).unwrap();
    let xs: Vec<f64> = (0..draws).map(|_| upd.sample(&mut rng)[0]).collect();
    let grid = GridCdf::from_log_density(
        |b| inst.log_beta_prior(b) + (0..2).map(|i| inst.log_z(i, &st.z[i], b, st.alpha[i][0])).sum::<f64>(),
        -30.0,
        30.0,
        n_grid,
    );
    out.push(("beta | z, alpha, w (non-blocked)", ks_distance(xs, |x| grid.eval(x))));

    // alpha_1
    let upd = alpha_conditional(b0, &st.z[0], &st.beta, &st.w[0], st.phi2, c).unwrap();
    let xs: Vec<f64> = (0..draws).map(|_| upd.sample(&mut rng)[0]).collect();
    let grid = GridCdf::from_log_density(
        |a| inst.log_z(0, &st.z[0], st.beta[0], a) + log_normal(a, 0.0, st.phi2),
        -30.0,
        30.0,
        n_grid,
    );
    out.push(("alpha_1 | z, beta, w, phi2", ks_distance(xs, |x| grid.eval(x))));

    // w_11 on the log scale
    let index = b0.x[(0, 0)] * st.beta[0] + b0.s[(0, 0)] * st.alpha[0][0];
    let xs: Vec<f64> =
        (0..draws).map(|_| sample_w_element(st.z[0][0], index, c, &mut rng).unwrap().ln()).collect();
    let grid = GridCdf::from_log_density(
        |u| {
            let w = u.exp();
            log_normal(st.z[0][0], index + c.theta * w, c.tau2() * w) - w + u
        },
        -40.0,
        6.0,
        n_grid,
    );
    out.push(("w_11 | z, beta, alpha", ks_distance(xs, |x| grid.eval(x))));

    // phi^2 on the log scale
    let pr = inst.spec.priors();
    let xs: Vec<f64> = (0..draws).map(|_| sample_phi2(&st.alpha, pr, &mut rng).unwrap().ln()).collect();
    let grid = GridCdf::from_log_density(
        |v| {
            let phi2 = v.exp();
            let log_ig = -(pr.c1 / 2.0 + 1.0) * v - pr.d1 / (2.0 * phi2);
            log_ig + st.alpha.iter().map(|a| log_normal(a[0], 0.0, phi2)).sum::<f64>() + v
        },
        -15.0,
        10.0,
        n_grid,
    );
    out.push(("phi2 | alpha", ks_distance(xs, |x| grid.eval(x))));

    // z_11 given z_12 with alpha integrated out; y_11 = 1
    let xs: Vec<f64> = (0..draws)
        .map(|_| sample_z_blocked(b0, &st.beta, &st.w[0], st.phi2, c, &st.z[0], &mut rng).unwrap()[0])
        .collect();
    let grid = GridCdf::from_log_density(|z| inst.log_z_marginal(0, &[z, st.z[0][1]], st.beta[0]), 0.0, 40.0, 4001);
    out.push(("z_11 | z_12, beta, w, phi2 (blocked)", ks_distance(xs, |x| grid.eval(x))));

    // z_11 given alpha
    let mean = index + c.theta * st.w[0][0];
    let var = c.tau2() * st.w[0][0];
    let xs: Vec<f64> = (0..draws).map(|_| sample_z_nonblocked(true, mean, var, &mut rng).unwrap()).collect();
    let grid = GridCdf::from_log_density(
        |z| log_normal(z, index + c.theta * st.w[0][0], c.tau2() * st.w[0][0]),
        0.0,
        40.0,
        n_grid,
    );
    out.push(("z_11 | beta, alpha, w (non-blocked)", ks_distance(xs, |x| grid.eval(x))));
    out
}

/// Two-individual model used by the joint-distribution test.
pub fn geweke_model() -> (PanelDataset, ModelSpec) {
    let block = |id: &str, x2: [f64; 3], s: [f64; 3]| IndividualBlock {
        id: id.into(),
        time: vec![1.0, 2.0, 3.0],
        y: vec![true, false, true],
        x: DMatrix::from_row_slice(3, 2, &[1.0, x2[0], 1.0, x2[1], 1.0, x2[2]]),
        s: DMatrix::from_column_slice(3, 1, &s),
    };
    let data = PanelDataset::new(
        vec![block("a", [0.2, -1.0, 0.7], [1.0, 1.0, 1.0]), block("b", [1.5, 0.4, -0.3], [1.0, 1.0, 1.0])],
        vec!["x1".into(), "x2".into()],
        vec!["s".into()],
        false,
        false,
    )
    .unwrap();
    let priors = Priors::new(DVector::from_vec(vec![0.3, -0.2]), DMatrix::identity(2, 2), 10.0, 9.0).unwrap();
    (data, ModelSpec::new(QuantileLevel::new(0.3).unwrap(), priors))
}

fn test_functions(beta: &DVector<f64>, phi2: f64) -> Vec<f64> {
    vec![beta[0], beta[1], beta[0] * beta[0], beta[1] * beta[1], beta[0] * beta[1], phi2, 1.0 / phi2]
}

pub const GEWEKE_NAMES: [&str; 7] = ["beta_1", "beta_2", "beta_1^2", "beta_2^2", "beta_1*beta_2", "phi2", "1/phi2"];

fn draw_latents(
    data: &PanelDataset,
    c: MixtureConstants,
    beta: &DVector<f64>,
    alpha: &[DVector<f64>],
    w: &[Vec<f64>],
    rng: &mut RandomStream,
) -> Vec<Vec<f64>> {
    data.individuals()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let index = &b.x * beta + &b.s * &alpha[i];
            (0..b.periods())
                .map(|t| index[t] + c.theta * w[i][t] + c.tau * w[i][t].sqrt() * rng.standard_normal())
                .collect()
        })
        .collect()
}

fn outcomes(z: &[Vec<f64>]) -> Vec<Vec<bool>> {
    z.iter().map(|zi| zi.iter().map(|&v| v > 0.0).collect()).collect()
}

fn prior_state(data: &PanelDataset, spec: &ModelSpec, rng: &mut RandomStream) -> McmcState {
    let pr = spec.priors();
    let beta = sample_mvn(&pr.beta0, &pr.b0, rng).unwrap();
    let phi2 = sample_inverse_gamma(pr.c1 / 2.0, pr.d1 / 2.0, rng).unwrap();
    let alpha: Vec<DVector<f64>> =
        (0..data.n()).map(|_| DVector::from_fn(data.l(), |_, _| phi2.sqrt() * rng.standard_normal())).collect();
    let w: Vec<Vec<f64>> =
        data.individuals().iter().map(|b| (0..b.periods()).map(|_| rng.standard_exponential()).collect()).collect();
    let z = draw_latents(data, spec.constants(), &beta, &alpha, &w, rng);
    McmcState { beta, alpha, z, w, phi2 }
}

fn batch_se(chain: &[f64], batch: usize) -> (f64, f64) {
    let n = chain.len();
    let mean = chain.iter().sum::<f64>() / n as f64;
    let nb = n / batch;
    let means: Vec<f64> = (0..nb).map(|b| chain[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64).collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (mean, (var / nb as f64).sqrt())
}

/// Marginal-conditional vs successive-conditional simulators; returns the
/// z score of each test function's mean difference.
pub fn geweke_z_scores(algorithm: Algorithm, sweeps: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let (mut data, spec) = geweke_model();
    let c = spec.constants();

    let mut rng = RandomStream::with_stream(seed, 1_000_001);
    let mc: Vec<Vec<f64>> = (0..sweeps)
        .map(|_| {
            let st = prior_state(&data, &spec, &mut rng);
            test_functions(&st.beta, st.phi2)
        })
        .collect();

    let mut data_rng = RandomStream::with_stream(seed, 1_000_002);
    let mut state = prior_state(&data, &spec, &mut data_rng);
    data.set_outcomes(&outcomes(&state.z)).unwrap();
    let mut streams = ChainStreams::new(seed, data.n());
    let mut sc = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        sweep(algorithm, &data, &spec, &mut state, &mut streams, false).unwrap();
        sc.push(test_functions(&state.beta, state.phi2));
        state.z = draw_latents(&data, c, &state.beta, &state.alpha, &state.w, &mut data_rng);
        data.set_outcomes(&outcomes(&state.z)).unwrap();
    }

    (0..GEWEKE_NAMES.len())
        .map(|j| {
            let a: Vec<f64> = mc.iter().map(|g| g[j]).collect();
            let b: Vec<f64> = sc.iter().map(|g| g[j]).collect();
            let (ma, sa) = batch_se(&a, 100);
            let (mb, sb) = batch_se(&b, 1000);
            (GEWEKE_NAMES[j], (ma - mb) / (sa * sa + sb * sb).sqrt())
        })
        .collect()
}

/// A kernel statistic measured from `n` draws with its target and tolerance.
pub struct KernelCheck {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
}

impl KernelCheck {
    pub fn passes(&self) -> bool {
        (self.value - self.target).abs() < self.tolerance
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Moments of the truncated normal, GIG and AL kernels and the
/// mixture-vs-inverse-CDF KS distance for several quantiles.
pub fn kernel_checks(n: usize, seed: u64) -> Vec<KernelCheck> {
    use qbld_core::distributions::{al_cdf, sample_al, sample_al_mixture, sample_gig_half, sample_truncated_normal, AlParams};
    let mut out = Vec::new();
    let mut rng = RandomStream::new(seed);

    let xs: Vec<f64> =
        (0..n).map(|_| sample_truncated_normal(0.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap()).collect();
    out.push(KernelCheck { name: "TN(0,1,(0,inf)) mean".into(), value: mean(&xs), target: (2.0 / PI).sqrt(), tolerance: 0.005 });

    let xs: Vec<f64> = (0..n).map(|_| sample_gig_half(1.0, 2.0, &mut rng).unwrap()).collect();
    out.push(KernelCheck {
        name: "GIG(1/2; 1, 2) mean".into(),
        value: mean(&xs),
        target: 0.5f64.sqrt() * (1.0 + 0.5f64.sqrt()),
        tolerance: 0.01,
    });

    let params = AlParams::standard(QuantileLevel::new(0.5).unwrap());
    let xs: Vec<f64> = (0..n).map(|_| sample_al(&params, &mut rng).unwrap()).collect();
    let m = mean(&xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    out.push(KernelCheck { name: "AL(0,1,0.5) variance".into(), value: var, target: 8.0, tolerance: 0.1 });

    for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let params = AlParams::standard(QuantileLevel::new(p).unwrap());
        let xs: Vec<f64> = (0..n).map(|_| sample_al_mixture(&params, &mut rng).unwrap()).collect();
        let d = ks_distance(xs, |x| al_cdf(x, &params).unwrap());
        out.push(KernelCheck { name: format!("AL mixture KS at p={p}"), value: d, target: 0.0, tolerance: 0.002 });
    }
    out
}
