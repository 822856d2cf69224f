//! Application pipelines: BAJD and Heston densities, option pricing and
//! portfolio credit loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affine::AffineError;
use crate::expand::ExpandError;
use crate::oracle::OracleError;
use crate::quad::QuadError;
use crate::weights::WeightError;

pub mod bajd;
pub mod credit;
pub mod heston;
pub mod pricing;

pub use bajd::{bajd_expansion, integrated_bajd_expansion, BajdParams, BajdTransition, FittedExpansion};
pub use credit::{asb_recursion, portfolio_loss, CreditPortfolio, LossDistribution, Obligor};
pub use heston::{
    heston_expansion, heston_expansion_with, heston_marginal_expansion, HestonParams, HestonTransition, PriceWeight,
};
pub use pricing::{black_scholes_call, call_from_expansion, implied_vol, oracle_call, price_call, CallPrice};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("regularity gate failed: {inequality} violated")]
    Gate { inequality: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Whether failed regularity gates abort a pipeline or are only recorded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    #[default]
    Enforce,
    Report,
}

/// Outcome of one regularity condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCheck {
    pub name: String,
    /// The inequality as text, e.g. `2κθ > σ²`.
    pub inequality: String,
    /// Left- and right-hand sides as evaluated.
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

impl GateCheck {
    pub fn new(name: &str, inequality: &str, lhs: f64, rhs: f64, passed: bool) -> Self {
        GateCheck {
            name: name.to_string(),
            inequality: inequality.to_string(),
            lhs,
            rhs,
            passed,
        }
    }

    pub fn describe(&self) -> String {
        format!("{} ({} vs {})", self.inequality, self.lhs, self.rhs)
    }
}

/// Applies the gate mode to a list of checks.
pub fn enforce(gates: &[GateCheck], mode: GateMode) -> Result<(), AppError> {
    if mode == GateMode::Report {
        for g in gates.iter().filter(|g| !g.passed) {
            log::warn!("regularity gate {} failed: {}", g.name, g.describe());
        }
        return Ok(());
    }
    match gates.iter().find(|g| !g.passed) {
        Some(g) => Err(AppError::Gate {
            inequality: g.describe(),
        }),
        None => Ok(()),
    }
}
