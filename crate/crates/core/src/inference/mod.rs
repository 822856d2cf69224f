//! Likelihood inference for discretely observed BAJD and Heston series:
//! exact and expansion likelihoods, maximum likelihood, random-walk
//! Metropolis posteriors, Kolmogorov–Smirnov comparisons and simulators.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affine::AffineError;
use crate::apps::{AppError, BajdParams, HestonParams};
use crate::oracle::OracleError;

pub mod ks;
pub mod likelihood;
pub mod mcmc;
pub mod mle;
pub mod simulate;

pub use ks::{kolmogorov_sf, ks_one_sample, ks_two_sample, KsResult};
pub use likelihood::{bajd_log_likelihood, heston_log_likelihood, LogLikelihood};
pub use mcmc::{posterior_eval, posterior_sample, rwm, Chain, Prior, RwmConfig};
pub use mle::{maximize, mle_fit, MleConfig, MleReport};
pub use simulate::{bajd_inverse_cdf, simulate_bajd_exact, simulate_heston, InverseCdfDraw};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
    #[error("sampler failed: {0}")]
    Sampler(String),
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Equally spaced observations `X_1, …, X_N` following the state `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub dt: f64,
    pub x0: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(dt: f64, x0: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, InferenceError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(InferenceError::Data(format!("spacing must be positive, got {dt}")));
        }
        let d = x0.len();
        if d == 0 {
            return Err(InferenceError::Data("empty initial state".into()));
        }
        if let Some(i) = values.iter().position(|v| v.len() != d) {
            return Err(InferenceError::Data(format!(
                "observation {} has {} components, expected {d}",
                i + 1,
                values[i].len()
            )));
        }
        if x0.iter().chain(values.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(InferenceError::Data("non-finite observation".into()));
        }
        Ok(TimeSeries { dt, x0, values })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Consecutive pairs `(X_{i−1}, X_i)`, starting from `x0`.
    pub fn transitions(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        std::iter::once(self.x0.as_slice())
            .chain(self.values.iter().map(|v| v.as_slice()))
            .zip(self.values.iter().map(|v| v.as_slice()))
    }

    /// Column `k` of the observations, without `x0`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }

    /// CSV with header `index,<names…>`; row 0 holds `x0`.
    pub fn write_csv<W: std::io::Write>(&self, w: W, names: &[&str]) -> Result<(), InferenceError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        out.write_record(&header)?;
        for (i, row) in std::iter::once(&self.x0).chain(&self.values).enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, dt: f64) -> Result<Self, InferenceError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Result<Vec<f64>, _> = rec.iter().skip(1).map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| InferenceError::Data(format!("row {}: {e}", i + 2)))?;
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(InferenceError::Data("no rows".into()));
        }
        let x0 = rows.remove(0);
        TimeSeries::new(dt, x0, rows)
    }

    pub fn from_path(path: &Path, dt: f64) -> Result<Self, InferenceError> {
        TimeSeries::read_csv(std::fs::File::open(path)?, dt)
    }
}

/// How transition densities are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fourier inversion of the exact characteristic function.
    Oracle,
    /// Order-`J` polynomial expansion.
    Expansion(u32),
    /// Gaussian density with the exact conditional mean and covariance.
    Qml,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Oracle => write!(f, "oracle"),
            Method::Expansion(j) => write!(f, "expansion({j})"),
            Method::Qml => write!(f, "qml"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    /// `oracle`, `qml`, `expansion` (order 4) or `expansion:J`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(Method::Oracle),
            "qml" => Ok(Method::Qml),
            "expansion" => Ok(Method::Expansion(4)),
            _ => match s.strip_prefix("expansion:").map(str::parse::<u32>) {
                Some(Ok(j)) => Ok(Method::Expansion(j)),
                _ => Err(format!("unknown method `{s}`; expected oracle, expansion[:J] or qml")),
            },
        }
    }
}

/// Reparameterization of one coordinate onto the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// `θ = e^z` for positive parameters.
    Log,
    /// `θ = tanh z` for correlations.
    Tanh,
}

impl Transform {
    pub fn to_real(&self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Log => theta.ln(),
            Transform::Tanh => theta.atanh(),
        }
    }

    pub fn from_real(&self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
            Transform::Tanh => z.tanh(),
        }
    }

    /// `log |dθ/dz|`.
    pub fn ln_jacobian(&self, z: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => z,
            Transform::Tanh => {
                let c = z.cosh();
                -2.0 * c.ln()
            }
        }
    }
}

pub fn to_real(transforms: &[Transform], theta: &[f64]) -> Vec<f64> {
    transforms.iter().zip(theta).map(|(t, &v)| t.to_real(v)).collect()
}

pub fn from_real(transforms: &[Transform], z: &[f64]) -> Vec<f64> {
    transforms.iter().zip(z).map(|(t, &v)| t.from_real(v)).collect()
}

/// Model families with a fixed parameter ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `(κθ, κ, σ, l, ν)`.
    Bajd,
    /// `(κ_V, κθ_V, σ, κθ_X, ρ)`.
    Heston,
}

impl Family {
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            Family::Bajd => &["kappa_theta", "kappa", "sigma", "l", "nu"],
            Family::Heston => &["kappa_v", "kappa_theta_v", "sigma", "kappa_theta_x", "rho"],
        }
    }

    pub fn dim(&self) -> usize {
        5
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            Family::Bajd => &["y"],
            Family::Heston => &["v", "x"],
        }
    }

    pub fn transforms(&self) -> Vec<Transform> {
        match self {
            Family::Bajd => vec![Transform::Log; 5],
            Family::Heston => vec![
                Transform::Log,
                Transform::Log,
                Transform::Log,
                Transform::Identity,
                Transform::Tanh,
            ],
        }
    }

    pub fn bajd_params(theta: &[f64]) -> Option<BajdParams> {
        BajdParams::new(theta[0], theta[1], theta[2], theta[3], theta[4]).ok()
    }

    pub fn heston_params(theta: &[f64]) -> Option<HestonParams> {
        HestonParams::new(theta[0], theta[1], theta[2], theta[3], theta[4]).ok()
    }

    /// Log of the improper prior kernel; `−∞` outside its support.
    ///
    /// BAJD: `1{2κθ > σ², κ > 0, σ > 0, l > 0, ν > 0} / (σ κθ l ν)`.
    /// Heston: `1{2κθ_V > σ², |ρ| < 1, σ > 0, κ_V > 0} / (σ κθ_V)`.
    pub fn ln_prior(&self, theta: &[f64]) -> f64 {
        match self {
            Family::Bajd => {
                let (kt, k, s, l, nu) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
                if 2.0 * kt > s * s && k > 0.0 && s > 0.0 && l > 0.0 && nu > 0.0 {
                    -(s * kt * l * nu).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Family::Heston => {
                let (kv, ktv, s, rho) = (theta[0], theta[1], theta[2], theta[4]);
                if 2.0 * ktv > s * s && rho.abs() < 1.0 && s > 0.0 && kv > 0.0 && theta[3].is_finite() {
                    -(s * ktv).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn log_likelihood(&self, theta: &[f64], data: &TimeSeries, method: Method) -> Result<LogLikelihood, InferenceError> {
        match self {
            Family::Bajd => {
                let p = Family::bajd_params(theta).ok_or_else(|| InferenceError::Invalid(format!("{theta:?}")))?;
                bajd_log_likelihood(&p, data, method)
            }
            Family::Heston => {
                let p = Family::heston_params(theta).ok_or_else(|| InferenceError::Invalid(format!("{theta:?}")))?;
                heston_log_likelihood(&p, data, method)
            }
        }
    }

    /// Log-likelihood with infeasible or failing points mapped to `−∞`.
    pub fn log_likelihood_or_neg_inf(&self, theta: &[f64], data: &TimeSeries, method: Method) -> f64 {
        if !self.feasible(theta) {
            return f64::NEG_INFINITY;
        }
        self.log_likelihood(theta, data, method)
            .map(|l| l.value)
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Support of the prior, also used as the optimizer's constraint set.
    pub fn feasible(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && self.ln_prior(theta).is_finite()
    }
}
