//! Random-walk Metropolis with a scale adapted towards a target acceptance
//! rate during burn-in.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{from_real, to_real, Family, InferenceError, Method, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RwmConfig {
    /// Iterations kept after burn-in, before thinning.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_acceptance: f64,
    /// Initial proposal standard deviation in unconstrained coordinates.
    pub initial_scale: f64,
    /// Adaptation batch length.
    pub batch: usize,
    pub seed: u64,
}

impl Default for RwmConfig {
    fn default() -> Self {
        RwmConfig {
            iterations: 10_000,
            burn_in: 4_000,
            thin: 1,
            target_acceptance: 0.25,
            initial_scale: 0.05,
            batch: 50,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub log_target: Vec<f64>,
    pub acceptance_rate: f64,
    pub burn_in_acceptance: f64,
    pub scale: f64,
}

impl Chain {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[k]).collect()
    }
}

fn sample_covariance(xs: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = xs.len();
    let d = xs.first()?.len();
    if n <= d + 1 {
        return None;
    }
    let mut mean = DVector::zeros(d);
    for x in xs {
        mean += DVector::from_column_slice(x);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in xs {
        let c = DVector::from_column_slice(x) - &mean;
        cov += &c * c.transpose();
    }
    Some(cov / (n - 1) as f64)
}

/// Samples `exp(log_target)` on `ℝ^d` from `z0`.
///
/// The first half of burn-in uses isotropic proposals; the second half
/// switches to the covariance of the first-half draws scaled by `2.38/√d`.
/// The scale is adapted per batch throughout burn-in and then frozen.
pub fn rwm<F: FnMut(&[f64]) -> f64>(mut log_target: F, z0: &[f64], config: &RwmConfig) -> Result<Chain, InferenceError> {
    let d = z0.len();
    if d == 0 {
        return Err(InferenceError::Invalid("empty parameter vector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = DVector::from_column_slice(z0);
    let mut lp = log_target(z.as_slice());
    if !lp.is_finite() {
        return Err(InferenceError::Sampler(format!("log target is not finite at the start {z0:?}")));
    }
    let mut chol = DMatrix::<f64>::identity(d, d);
    let mut log_scale = config.initial_scale.ln();
    let batch = config.batch.max(1);
    let half = config.burn_in / 2;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(half);
    let (mut acc_batch, mut acc_burn, mut n_batch, mut k_batch) = (0usize, 0usize, 0usize, 1usize);
    let mut draws = Vec::new();
    let mut trace = Vec::new();
    let mut acc_main = 0usize;
    let total = config.burn_in + config.iterations;
    for it in 0..total {
        if it == half && half > 0 {
            if let Some(c) = sample_covariance(&history).and_then(|c| c.cholesky()) {
                chol = c.l();
                log_scale = (2.38 / (d as f64).sqrt()).ln();
                k_batch = 1;
            }
        }
        let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prop = &z + (&chol * eps) * log_scale.exp();
        let lp_new = log_target(prop.as_slice());
        let u: f64 = rng.random();
        let accept = lp_new.is_finite() && u.ln() < lp_new - lp;
        if accept {
            z = prop;
            lp = lp_new;
        }
        if it < config.burn_in {
            acc_burn += accept as usize;
            acc_batch += accept as usize;
            n_batch += 1;
            if it < half {
                history.push(z.as_slice().to_vec());
            }
            if n_batch == batch {
                let rate = acc_batch as f64 / batch as f64;
                log_scale += (rate - config.target_acceptance) / (k_batch as f64).sqrt();
                k_batch += 1;
                acc_batch = 0;
                n_batch = 0;
            }
        } else {
            acc_main += accept as usize;
            if (it - config.burn_in) % config.thin.max(1) == 0 {
                draws.push(z.as_slice().to_vec());
                trace.push(lp);
            }
        }
    }
    if config.burn_in > 0 && acc_burn == 0 {
        return Err(InferenceError::Sampler(
            "every burn-in proposal was rejected; reduce the initial scale".into(),
        ));
    }
    Ok(Chain {
        draws,
        log_target: trace,
        acceptance_rate: acc_main as f64 / config.iterations.max(1) as f64,
        burn_in_acceptance: acc_burn as f64 / config.burn_in.max(1) as f64,
        scale: log_scale.exp(),
    })
}

/// Prior density: the family's default `ln_prior` restricted to optional
/// per-parameter support bounds `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub family: Family,
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Prior {
    pub fn new(family: Family) -> Self {
        Prior { family, bounds: None }
    }

    pub fn with_bounds(family: Family, bounds: Vec<(f64, f64)>) -> Result<Self, InferenceError> {
        if bounds.len() != family.dim() {
            return Err(InferenceError::Invalid(format!(
                "{} prior bounds given for {} parameters",
                bounds.len(),
                family.dim()
            )));
        }
        if let Some((i, (lo, hi))) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
            return Err(InferenceError::Invalid(format!("empty prior bound [{lo}, {hi}] for {}", family.names()[i])));
        }
        Ok(Prior { family, bounds: Some(bounds) })
    }

    pub fn ln_density(&self, theta: &[f64]) -> f64 {
        if let Some(b) = &self.bounds {
            if theta.iter().zip(b).any(|(v, (lo, hi))| !(v >= lo && v <= hi)) {
                return f64::NEG_INFINITY;
            }
        }
        self.family.ln_prior(theta)
    }
}

/// Unnormalized log posterior `log l(θ) + log π(θ)`.
pub fn posterior_eval(prior: &Prior, data: &TimeSeries, method: Method, theta: &[f64]) -> f64 {
    let lp = prior.ln_density(theta);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    prior.family.log_likelihood_or_neg_inf(theta, data, method) + lp
}

/// Posterior draws `∝ l(θ)·π(θ)`, returned in the original parameterization.
pub fn posterior_sample(
    prior: &Prior,
    data: &TimeSeries,
    method: Method,
    start: &[f64],
    config: &RwmConfig,
) -> Result<Chain, InferenceError> {
    if !prior.ln_density(start).is_finite() {
        return Err(InferenceError::Invalid(format!("start {start:?} is outside the prior support")));
    }
    let tr = prior.family.transforms();
    let target = |z: &[f64]| {
        let theta = from_real(&tr, z);
        let jac: f64 = tr.iter().zip(z).map(|(t, &v)| t.ln_jacobian(v)).sum();
        posterior_eval(prior, data, method, &theta) + jac
    };
    let mut chain = rwm(target, &to_real(&tr, start), config)?;
    for d in chain.draws.iter_mut() {
        *d = from_real(&tr, d);
    }
    Ok(chain)
}
