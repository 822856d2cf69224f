//! Portfolio default counts with intensities `λ_i = X_i + a_i Y`, where the
//! idiosyncratic `X_i` and the common factor `Y` are independent BAJDs.

use serde::{Deserialize, Serialize};

use super::bajd::{integrated_bajd_expansion, BajdParams};
use super::{AppError, GateMode};
use crate::oracle;
use crate::quad::CompositeRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obligor {
    pub params: BajdParams,
    /// Initial idiosyncratic intensity.
    pub x0: f64,
    /// Loading `a_i` on the common factor.
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditPortfolio {
    pub obligors: Vec<Obligor>,
    pub common: BajdParams,
    /// Initial value of the common factor.
    pub y0: f64,
}

impl CreditPortfolio {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.obligors.is_empty() {
            return Err(AppError::Invalid("portfolio has no obligors".into()));
        }
        let mut sum = 0.0;
        for (i, o) in self.obligors.iter().enumerate() {
            if !(o.loading >= 0.0) {
                return Err(AppError::Invalid(format!("obligor {i}: loading must be nonnegative")));
            }
            if !(o.x0 >= 0.0) {
                return Err(AppError::Invalid(format!("obligor {i}: x0 must be nonnegative")));
            }
            o.params.validate()?;
            sum += o.loading;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AppError::Invalid(format!("loadings must sum to one, got {sum}")));
        }
        self.common.validate()?;
        Ok(())
    }
}

/// Distribution of the number of defaults by `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub pmf: Vec<f64>,
    /// Mass of the negative part of the common-factor pseudo-density.
    pub negative_mass: f64,
    pub warnings: Vec<String>,
}

/// Number-of-defaults pmf for independent default indicators with
/// probabilities `qs`.
pub fn asb_recursion(qs: &[f64]) -> Result<Vec<f64>, AppError> {
    let mut p = vec![0.0; qs.len() + 1];
    p[0] = 1.0;
    for (i, &q) in qs.iter().enumerate() {
        if !(0.0..=1.0).contains(&q) {
            return Err(AppError::Invalid(format!("default probability {q} outside [0, 1]")));
        }
        for k in (1..=i + 1).rev() {
            p[k] = p[k] * (1.0 - q) + p[k - 1] * q;
        }
        p[0] *= 1.0 - q;
    }
    Ok(p)
}

fn asb_into(qs: &[f64], p: &mut [f64]) {
    p.iter_mut().for_each(|v| *v = 0.0);
    p[0] = 1.0;
    for (i, &q) in qs.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            p[k] = p[k] * (1.0 - q) + p[k - 1] * q;
        }
        p[0] *= 1.0 - q;
    }
}

/// `E_t[exp(−∫_t^T X_s ds)]` for each obligor.
pub fn idiosyncratic_survival(portfolio: &CreditPortfolio, horizon: f64) -> Result<Vec<f64>, AppError> {
    portfolio
        .obligors
        .iter()
        .map(|o| Ok(oracle::integrated_mgf(&o.params.model(), -1.0, o.x0, horizon)?))
        .collect()
}

/// Unconditional pmf `P(k) = ∫ P(k | z) g_Z^(J)(z) dz`, with all obligors
/// alive at `t`.
pub fn portfolio_loss(
    portfolio: &CreditPortfolio,
    t: f64,
    maturity: f64,
    order: u32,
    mode: GateMode,
) -> Result<LossDistribution, AppError> {
    portfolio.validate()?;
    let horizon = maturity - t;
    if !(horizon > 0.0) {
        return Err(AppError::Invalid(format!("maturity {maturity} must exceed t = {t}")));
    }
    let surv = idiosyncratic_survival(portfolio, horizon)?;
    let fit = integrated_bajd_expansion(&portfolio.common, portfolio.y0, horizon, order, mode)?;
    let e = fit.expansion;
    let s = e.standardization.matrix[0][0];
    let d = e.standardization.gamma_shape.unwrap_or(0.0);
    let centre = d + 1.0;
    let spread = centre.sqrt();
    // ξ = s·z is Gamma(1 + D)-distributed under the weight
    let split = (centre - 12.0 * spread).max(0.0);
    let top = centre + 60.0 * spread + 60.0;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b, panels) in [(0.0, split, 40), (split, top, 200)] {
        if b > a {
            let r = CompositeRule::new(a, b, panels, 20);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
    }
    let n = portfolio.obligors.len();
    let mut pmf = vec![0.0; n + 1];
    let mut cond = vec![0.0; n + 1];
    let mut qs = vec![0.0; n];
    let mut negative = 0.0;
    for (&xi, &w) in nodes.iter().zip(&weights) {
        let g = e.standardized_density(&[xi]);
        if g == 0.0 {
            continue;
        }
        if g < 0.0 {
            negative -= w * g;
        }
        let z = xi / s;
        for ((q, o), sv) in qs.iter_mut().zip(&portfolio.obligors).zip(&surv) {
            *q = (1.0 - sv * (-o.loading * z).exp()).clamp(0.0, 1.0);
        }
        asb_into(&qs, &mut cond);
        for (p, c) in pmf.iter_mut().zip(&cond) {
            *p += w * g * c;
        }
    }
    let mut warnings = e.warnings.clone();
    if negative > 1e-3 {
        let msg = format!("pseudo-density negative mass {negative:.3e} exceeds 1e-3");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(LossDistribution {
        pmf,
        negative_mass: negative,
        warnings,
    })
}
