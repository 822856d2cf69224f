//! Basic affine jump-diffusion `dY = (κθ − κY)dt + σ√Y dW + dK` with
//! compound-Poisson exponential jumps (intensity `l`, mean `ν`).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{enforce, AppError, GateCheck, GateMode};
use crate::affine::{
    check_assumption2, exp_moment_at, AffineError, AffineModel, ExpMomentOutcome, JumpLaw, JumpMeasure,
    MomentPropagator,
};
use crate::expand::{standardize_1d, Expansion};
use crate::poly::MultiIndex;
use crate::weights::{GammaWeight, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BajdParams {
    pub kappa_theta: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub l: f64,
    pub nu: f64,
}

impl BajdParams {
    pub fn new(kappa_theta: f64, kappa: f64, sigma: f64, l: f64, nu: f64) -> Result<Self, AffineError> {
        let p = BajdParams {
            kappa_theta,
            kappa,
            sigma,
            l,
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AffineError> {
        let bad = |m: String| Err(AffineError::Inadmissible(m));
        let all = [self.kappa_theta, self.kappa, self.sigma, self.l, self.nu];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite BAJD parameter".into());
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.kappa_theta < 0.0 {
            return bad(format!("kappa_theta must be nonnegative, got {}", self.kappa_theta));
        }
        if self.l < 0.0 {
            return bad(format!("l must be nonnegative, got {}", self.l));
        }
        if self.nu < 0.0 {
            return bad(format!("nu must be nonnegative, got {}", self.nu));
        }
        Ok(())
    }

    /// `2κθ > σ²`, the condition for transition densities.
    pub fn feller(&self) -> bool {
        2.0 * self.kappa_theta > self.sigma * self.sigma
    }

    pub fn stationary_mean(&self) -> f64 {
        (self.kappa_theta + self.l * self.nu) / self.kappa
    }

    fn jumps(&self, dim: usize) -> Option<JumpMeasure> {
        if self.l > 0.0 && self.nu > 0.0 {
            let mut comps = vec![JumpLaw::None; dim];
            comps[0] = JumpLaw::Exponential(self.nu);
            Some(JumpMeasure::new(self.l, comps))
        } else {
            None
        }
    }

    pub fn model(&self) -> AffineModel {
        AffineModel::new(
            1,
            0,
            DMatrix::zeros(0, 0),
            vec![DMatrix::from_element(1, 1, 0.5 * self.sigma * self.sigma)],
            DVector::from_element(1, self.kappa_theta),
            DMatrix::from_element(1, 1, -self.kappa),
            self.jumps(1),
            vec![None],
        )
        .expect("validated BAJD parameters are admissible")
    }

    /// The pair `(Y, Z)` with `dZ = Y dt`.
    pub fn integrated_model(&self) -> AffineModel {
        let mut alpha_y = DMatrix::zeros(2, 2);
        alpha_y[(0, 0)] = 0.5 * self.sigma * self.sigma;
        AffineModel::new(
            2,
            0,
            DMatrix::zeros(0, 0),
            vec![alpha_y, DMatrix::zeros(2, 2)],
            DVector::from_vec(vec![self.kappa_theta, 0.0]),
            DMatrix::from_row_slice(2, 2, &[-self.kappa, 0.0, 1.0, 0.0]),
            self.jumps(2),
            vec![None, None],
        )
        .expect("validated BAJD parameters are admissible")
    }
}

/// An expansion together with the regularity conditions checked for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedExpansion {
    pub expansion: Expansion,
    pub gates: Vec<GateCheck>,
}

fn exp_moment_gate(name: &str, outcome: ExpMomentOutcome, s: f64, horizon: f64) -> GateCheck {
    let (passed, t) = match outcome {
        ExpMomentOutcome::Finite => (true, horizon),
        ExpMomentOutcome::BlowUp { time } | ExpMomentOutcome::JumpPole { time } => (false, time),
    };
    let kind = match outcome {
        ExpMomentOutcome::JumpPole { .. } => "jump-transform pole",
        _ => "Riccati blow-up",
    };
    let ineq = if passed {
        format!("E[exp({s:.6e}·Y)] < ∞")
    } else {
        format!("E[exp({s:.6e}·Y)] < ∞ ({kind} at t = {t:.6e})")
    };
    GateCheck::new(name, &ineq, t, horizon, passed)
}

/// Order-`order` Gamma expansion of `Y_Δ | Y_0 = y0`.
pub fn bajd_expansion(p: &BajdParams, y0: f64, dt: f64, order: u32, mode: GateMode) -> Result<FittedExpansion, AppError> {
    p.validate()?;
    let model = p.model();
    let prop = MomentPropagator::new(&model, dt, order.max(2))?;
    let mom = prop.moments(&[y0]);
    let mu1 = mom.order(1).ok_or_else(|| AppError::Invalid("missing first moment".into()))?;
    let mu2 = mom.order(2).ok_or_else(|| AppError::Invalid("missing second moment".into()))?;
    let std = standardize_1d(mu1, mu2)?;
    let d = std.gamma_shape.expect("Gamma standardization");
    let s = std.matrix[0][0];
    let s2 = p.sigma * p.sigma;
    let bound = 2.0 * p.kappa_theta / s2 - 1.0;
    let gates = vec![
        GateCheck::new("density", "2κθ > σ²", 2.0 * p.kappa_theta, s2, p.feller()),
        GateCheck::new("assumption2", "⌈D/2⌉ < 2κθ/σ² − 1", (d / 2.0).ceil(), bound, check_assumption2(d, bound)),
        exp_moment_gate("exp_moment", exp_moment_at(&model, &[Complex64::new(s, 0.0)], dt), s, dt),
    ];
    enforce(&gates, mode)?;
    let w = Weight::Gamma(GammaWeight::new(d)?);
    let expansion = Expansion::fit(w, std, |a| mom.get(a), order)?;
    Ok(FittedExpansion { expansion, gates })
}

/// Order-`order` Gamma expansion of `Z = ∫_0^T Y_s ds | Y_0 = y0`.
pub fn integrated_bajd_expansion(
    p: &BajdParams,
    y0: f64,
    horizon: f64,
    order: u32,
    mode: GateMode,
) -> Result<FittedExpansion, AppError> {
    p.validate()?;
    let aug = p.integrated_model();
    let mom = MomentPropagator::new(&aug, horizon, order.max(2))?.moments(&[y0, 0.0]);
    let z = |n: u32| mom.get(&MultiIndex::new(vec![0, n]));
    let mu1 = z(1).ok_or_else(|| AppError::Invalid("missing first moment".into()))?;
    let mu2 = z(2).ok_or_else(|| AppError::Invalid("missing second moment".into()))?;
    let std = standardize_1d(mu1, mu2)?;
    let d = std.gamma_shape.expect("Gamma standardization");
    let s = std.matrix[0][0];
    let s2 = p.sigma * p.sigma;
    let bound = p.kappa_theta / s2 - 1.0;
    let mut gates = vec![GateCheck::new("density", "κθ > σ²", p.kappa_theta, s2, p.kappa_theta > s2)];
    enforce(&gates, mode)?;
    // existence is the only condition imposed on Z; the L² conditions are
    // recorded without aborting
    gates.push(GateCheck::new(
        "assumption2 (advisory)",
        "⌈D/2⌉ < κθ/σ² − 1",
        (d / 2.0).ceil(),
        bound,
        check_assumption2(d, bound),
    ));
    gates.push(exp_moment_gate(
        "exp_moment (advisory)",
        exp_moment_at(&aug, &[Complex64::new(0.0, 0.0), Complex64::new(s, 0.0)], horizon),
        s,
        horizon,
    ));
    let w = Weight::Gamma(GammaWeight::new(d)?);
    let expansion = Expansion::fit(w, std, |a| z(a.entries()[0]), order)?;
    Ok(FittedExpansion { expansion, gates })
}

/// Transition log-density of the BAJD by expansion, sharing the moment
/// propagator across initial states.
#[derive(Debug, Clone)]
pub struct BajdTransition {
    pub params: BajdParams,
    pub dt: f64,
    pub order: u32,
    prop: MomentPropagator,
}

impl BajdTransition {
    pub fn new(params: BajdParams, dt: f64, order: u32) -> Result<Self, AppError> {
        params.validate()?;
        let prop = MomentPropagator::new(&params.model(), dt, order.max(2))?;
        Ok(BajdTransition { params, dt, order, prop })
    }

    /// `log g^(J)(y | y0)`; `−∞` where the pseudo-density is not positive.
    pub fn ln_density(&self, y0: f64, y: f64) -> f64 {
        let mu = self.prop.moments_vec(&[y0]);
        let var = mu[2] - mu[1] * mu[1];
        if !(var > 0.0) || !(y > 0.0) {
            return f64::NEG_INFINITY;
        }
        let s = mu[1] / var;
        let d = mu[1] * s - 1.0;
        let Ok(w) = GammaWeight::new(d) else {
            return f64::NEG_INFINITY;
        };
        let basis = w.laguerre_basis(self.order);
        let xi = s * y;
        let mut ratio = 1.0;
        let mut spow: Vec<f64> = Vec::with_capacity(self.order as usize + 1);
        let mut acc = 1.0;
        for _ in 0..=self.order {
            spow.push(acc);
            acc *= s;
        }
        for h in basis.elements.iter().skip(1) {
            let dense = h.dense_coefficients();
            let c: f64 = dense.iter().enumerate().map(|(k, a)| a * spow[k] * mu[k]).sum();
            ratio += c * h.horner(xi);
        }
        if !(ratio > 0.0) {
            return f64::NEG_INFINITY;
        }
        s.ln() + w.ln_density(xi) + ratio.ln()
    }
}
