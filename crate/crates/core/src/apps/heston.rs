//! Heston stochastic variance model for the state `(V, X)`:
//! `dV = (κθ_V − κ_V V)dt + σ√V dW^V`,
//! `dX = (κθ_X − V/2)dt + √V(ρ dW^V + √(1−ρ²) dW^X)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bajd::FittedExpansion;
use super::{enforce, AppError, GateCheck, GateMode};
use crate::affine::{check_assumption2, check_density_existence, AffineError, AffineModel, MomentPropagator};
use crate::expand::{standardize_2d, standardize_location_scale, Expansion};
use crate::poly::MultiIndex;
use crate::weights::{BilateralGammaWeight, GammaWeight, GaussianWeight, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    pub kappa_v: f64,
    pub kappa_theta_v: f64,
    pub sigma: f64,
    pub kappa_theta_x: f64,
    pub rho: f64,
}

impl HestonParams {
    pub fn new(kappa_v: f64, kappa_theta_v: f64, sigma: f64, kappa_theta_x: f64, rho: f64) -> Result<Self, AffineError> {
        let p = HestonParams {
            kappa_v,
            kappa_theta_v,
            sigma,
            kappa_theta_x,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AffineError> {
        let bad = |m: String| Err(AffineError::Inadmissible(m));
        let all = [self.kappa_v, self.kappa_theta_v, self.sigma, self.kappa_theta_x, self.rho];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite Heston parameter".into());
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if self.kappa_theta_v < 0.0 {
            return bad(format!("kappa_theta_v must be nonnegative, got {}", self.kappa_theta_v));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        Ok(())
    }

    pub fn feller(&self) -> bool {
        2.0 * self.kappa_theta_v > self.sigma * self.sigma
    }

    pub fn model(&self) -> AffineModel {
        let s = self.sigma;
        AffineModel::new(
            1,
            1,
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_row_slice(
                2,
                2,
                &[0.5 * s * s, 0.5 * self.rho * s, 0.5 * self.rho * s, 0.5],
            )],
            DVector::from_vec(vec![self.kappa_theta_v, self.kappa_theta_x]),
            DMatrix::from_row_slice(2, 2, &[-self.kappa_v, 0.0, -0.5, 0.0]),
            None,
            vec![None],
        )
        .expect("validated Heston parameters are admissible")
    }
}

/// Weight family for the log-price coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceWeight {
    /// Bilateral Gamma with `C` set to the excess kurtosis; Gaussian when
    /// the kurtosis is not positive.
    #[default]
    BilateralGamma,
    Gaussian,
}

fn price_factor(kind: PriceWeight, kurtosis: f64, warnings: &mut Vec<String>) -> Result<Weight, AppError> {
    match kind {
        PriceWeight::Gaussian => Ok(Weight::Gaussian(GaussianWeight::standard())),
        PriceWeight::BilateralGamma if kurtosis > 0.0 && kurtosis.is_finite() => {
            Ok(Weight::BilateralGamma(BilateralGammaWeight::new(kurtosis)?))
        }
        PriceWeight::BilateralGamma => {
            let msg = format!("excess kurtosis {kurtosis:.3e} is not positive; using a Gaussian weight");
            log::warn!("{msg}");
            warnings.push(msg);
            Ok(Weight::Gaussian(GaussianWeight::standard()))
        }
    }
}

fn density_gates(p: &HestonParams) -> Vec<GateCheck> {
    let report = check_density_existence(&p.model());
    let s2 = p.sigma * p.sigma;
    vec![
        GateCheck::new("density", "2κθ_V > σ²", 2.0 * p.kappa_theta_v, s2, p.feller()),
        GateCheck::new(
            "rank",
            "rank 𝒦 = 2",
            if report.kcal_full_rank { 2.0 } else { 1.0 },
            2.0,
            report.kcal_full_rank,
        ),
    ]
}

/// Product-weight (`γ × γ_b`) expansion of `(V_Δ, X_Δ) | (v0, x0)`.
pub fn heston_expansion(
    p: &HestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    order: u32,
    mode: GateMode,
) -> Result<FittedExpansion, AppError> {
    heston_expansion_with(p, x0, v0, dt, order, mode, PriceWeight::BilateralGamma)
}

pub fn heston_expansion_with(
    p: &HestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    order: u32,
    mode: GateMode,
    kind: PriceWeight,
) -> Result<FittedExpansion, AppError> {
    p.validate()?;
    let mut gates = density_gates(p);
    enforce(&gates, mode)?;
    // moments of (V, X − x0)
    let mom = MomentPropagator::new(&p.model(), dt, order.max(4))?.moments(&[v0, 0.0]);
    let m = |a: u32, b: u32| mom.get(&MultiIndex::new(vec![a, b])).unwrap_or(f64::NAN);
    let mean = [m(1, 0), m(0, 1)];
    let cov = [
        [m(2, 0) - mean[0] * mean[0], m(1, 1) - mean[0] * mean[1]],
        [m(1, 1) - mean[0] * mean[1], m(0, 2) - mean[1] * mean[1]],
    ];
    let std = standardize_2d(mean, cov)?;
    let d = std.gamma_shape.expect("Gamma factor");
    let xi = std.transform_moments(|a| mom.get(a), 4)?;
    let q = |a: u32, b: u32| xi[&MultiIndex::new(vec![a, b])];
    let kurt = excess_kurtosis(q(0, 1), q(0, 2), q(0, 3), q(0, 4));
    let mut warnings = Vec::new();
    let w = Weight::product(vec![Weight::Gamma(GammaWeight::new(d)?), price_factor(kind, kurt, &mut warnings)?])?;
    let bound = 2.0 * p.kappa_theta_v / (p.sigma * p.sigma) - 1.0;
    gates.push(GateCheck::new(
        "assumption2 (advisory)",
        "⌈D/2⌉ < 2κθ_V/σ² − 1",
        (d / 2.0).ceil(),
        bound,
        check_assumption2(d, bound),
    ));
    let mut expansion = Expansion::fit(w, std.clone(), |a| mom.get(a), order)?;
    expansion.standardization = std.with_origin(&[0.0, x0]);
    expansion.warnings.extend(warnings);
    Ok(FittedExpansion { expansion, gates })
}

fn excess_kurtosis(m1: f64, m2: f64, m3: f64, m4: f64) -> f64 {
    let var = m2 - m1 * m1;
    let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
    c4 / (var * var) - 3.0
}

/// Scalar expansion of `X_Δ | (v0, x0)` around a bilateral Gamma weight.
pub fn heston_marginal_expansion(
    p: &HestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    order: u32,
    mode: GateMode,
) -> Result<FittedExpansion, AppError> {
    p.validate()?;
    let gates = density_gates(p);
    enforce(&gates, mode)?;
    let mom = MomentPropagator::new(&p.model(), dt, order.max(4))?.moments(&[v0, 0.0]);
    let mx = |n: u32| mom.get(&MultiIndex::new(vec![0, n]));
    let raw = |a: &MultiIndex| mx(a.entries()[0]);
    let nan = f64::NAN;
    let (m1, m2, m3, m4) = (
        mx(1).unwrap_or(nan),
        mx(2).unwrap_or(nan),
        mx(3).unwrap_or(nan),
        mx(4).unwrap_or(nan),
    );
    let std = standardize_location_scale(m1, m2 - m1 * m1)?;
    let kurt = excess_kurtosis(m1, m2, m3, m4);
    let mut warnings = Vec::new();
    let w = price_factor(PriceWeight::BilateralGamma, kurt, &mut warnings)?;
    let mut expansion = Expansion::fit(w, std.clone(), raw, order)?;
    expansion.standardization = std.with_origin(&[x0]);
    expansion.warnings.extend(warnings);
    Ok(FittedExpansion { expansion, gates })
}

/// Order-4-or-lower product expansion of the Heston transition evaluated
/// with closed-form bases, for likelihood work.
#[derive(Debug, Clone)]
pub struct HestonTransition {
    pub params: HestonParams,
    pub dt: f64,
    pub order: u32,
    pub kind: PriceWeight,
    prop: MomentPropagator,
    /// Position of `(a, b)` in the propagator basis.
    pos: Vec<Vec<usize>>,
}

/// Per-initial-state pieces of the expansion.
#[derive(Debug, Clone)]
pub struct HestonTransitionFit {
    a11: f64,
    a21: f64,
    a22: f64,
    b2: f64,
    x0: f64,
    gamma: GammaWeight,
    price: Weight,
    /// Dense orthonormal polynomial coefficients, indexed by degree.
    lag: Vec<Vec<f64>>,
    pri: Vec<Vec<f64>>,
    /// `(i, j, c_ij)` with `1 ≤ i + j ≤ J`.
    coeffs: Vec<(usize, usize, f64)>,
}

pub const TRANSITION_MAX_ORDER: u32 = 4;

fn binom(n: usize, k: usize) -> f64 {
    crate::poly::binomial(n as u32, k as u32)
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

impl HestonTransition {
    pub fn new(params: HestonParams, dt: f64, order: u32, kind: PriceWeight) -> Result<Self, AppError> {
        if order > TRANSITION_MAX_ORDER {
            return Err(AppError::Invalid(format!(
                "closed-form transition supports order ≤ {TRANSITION_MAX_ORDER}, got {order}"
            )));
        }
        params.validate()?;
        let prop = MomentPropagator::new(&params.model(), dt, 4)?;
        let mut pos = vec![vec![usize::MAX; 5]; 5];
        for (i, a) in prop.basis().iter().enumerate() {
            let e = a.entries();
            pos[e[0] as usize][e[1] as usize] = i;
        }
        Ok(HestonTransition {
            params,
            dt,
            order,
            kind,
            prop,
            pos,
        })
    }

    pub fn fit(&self, v0: f64, x0: f64) -> Option<HestonTransitionFit> {
        let mu = self.prop.moments_vec(&[v0, 0.0]);
        let m = |a: usize, b: usize| mu[self.pos[a][b]];
        let (mu1, mu2) = (m(1, 0), m(0, 1));
        let a1 = m(2, 0) - mu1 * mu1;
        let b = m(1, 1) - mu1 * mu2;
        let a2 = m(0, 2) - mu2 * mu2;
        if !(a1 > 0.0) {
            return None;
        }
        let cond = a2 - b * b / a1;
        if !(cond > 0.0) {
            return None;
        }
        let a11 = mu1 / a1;
        let sq = cond.sqrt();
        let a21 = -b / (a1 * sq);
        let a22 = 1.0 / sq;
        let b2 = (b * mu1 / a1 - mu2) / sq;
        let d = mu1 * mu1 / a1 - 1.0;
        let gamma = GammaWeight::new(d).ok()?;
        // E[ξ1^i ξ2^j] with ξ1 = a11 u1, ξ2 = a21 u1 + a22 u2 + b2
        let mut xi = [[0.0f64; 5]; 5];
        let mut p21 = [1.0f64; 5];
        let mut p22 = [1.0f64; 5];
        let mut pb = [1.0f64; 5];
        let mut p11 = [1.0f64; 5];
        for k in 1..5 {
            p21[k] = p21[k - 1] * a21;
            p22[k] = p22[k - 1] * a22;
            pb[k] = pb[k - 1] * b2;
            p11[k] = p11[k - 1] * a11;
        }
        for i in 0..=4usize {
            for j in 0..=(4 - i) {
                let mut acc = 0.0;
                for p in 0..=j {
                    for q in 0..=(j - p) {
                        let r = j - p - q;
                        let mult = binom(j, p) * binom(j - p, q);
                        acc += mult * p21[p] * p22[q] * pb[r] * m(i + p, q);
                    }
                }
                xi[i][j] = p11[i] * acc;
            }
        }
        let kurt = excess_kurtosis(xi[0][1], xi[0][2], xi[0][3], xi[0][4]);
        let j = self.order as usize;
        let lag: Vec<Vec<f64>> = gamma
            .laguerre_basis(self.order)
            .elements
            .iter()
            .map(|h| h.dense_coefficients())
            .collect();
        let (price, pri) = match self.kind {
            PriceWeight::BilateralGamma if kurt > 0.0 && kurt.is_finite() => {
                let w = BilateralGammaWeight::new(kurt).ok()?;
                let (polys, norms) = w.closed_form_table();
                let pri: Vec<Vec<f64>> = polys
                    .iter()
                    .zip(&norms)
                    .take(j + 1)
                    .map(|(p, n)| p.dense_coefficients().iter().map(|c| c / n).collect())
                    .collect();
                (Weight::BilateralGamma(w), pri)
            }
            _ => {
                let hermite: [&[f64]; 5] = [
                    &[1.0],
                    &[0.0, 1.0],
                    &[-1.0, 0.0, 1.0],
                    &[0.0, -3.0, 0.0, 1.0],
                    &[3.0, 0.0, -6.0, 0.0, 1.0],
                ];
                let pri: Vec<Vec<f64>> = (0..=j)
                    .map(|n| {
                        let f: f64 = (1..=n).map(|k| k as f64).product::<f64>().sqrt();
                        hermite[n].iter().map(|c| c / f).collect()
                    })
                    .collect();
                (Weight::Gaussian(GaussianWeight::standard()), pri)
            }
        };
        let mut coeffs = Vec::new();
        for tot in 1..=j {
            for i in (0..=tot).rev() {
                let jj = tot - i;
                let mut c = 0.0;
                for (a, la) in lag[i].iter().enumerate() {
                    for (bb, pb) in pri[jj].iter().enumerate() {
                        c += la * pb * xi[a][bb];
                    }
                }
                coeffs.push((i, jj, c));
            }
        }
        Some(HestonTransitionFit {
            a11,
            a21,
            a22,
            b2,
            x0,
            gamma,
            price,
            lag,
            pri,
            coeffs,
        })
    }

    pub fn ln_density(&self, v0: f64, x0: f64, v: f64, x: f64) -> f64 {
        match self.fit(v0, x0) {
            Some(f) => f.ln_density(v, x),
            None => f64::NEG_INFINITY,
        }
    }
}

impl HestonTransitionFit {
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        if i == 0 && j == 0 {
            return 1.0;
        }
        self.coeffs
            .iter()
            .find(|(a, b, _)| *a == i && *b == j)
            .map(|c| c.2)
            .unwrap_or(0.0)
    }

    /// `log g^(J)(v, x)`; `−∞` where the pseudo-density is not positive.
    pub fn ln_density(&self, v: f64, x: f64) -> f64 {
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        let u2 = x - self.x0;
        let xi1 = self.a11 * v;
        let xi2 = self.a21 * v + self.a22 * u2 + self.b2;
        let l: Vec<f64> = self.lag.iter().map(|c| horner(c, xi1)).collect();
        let h: Vec<f64> = self.pri.iter().map(|c| horner(c, xi2)).collect();
        let mut ratio = 1.0;
        for &(i, j, c) in &self.coeffs {
            ratio += c * l[i] * h[j];
        }
        if !(ratio > 0.0) {
            return f64::NEG_INFINITY;
        }
        (self.a11 * self.a22).abs().ln() + self.gamma.ln_density(xi1) + self.price.ln_density(&[xi2]) + ratio.ln()
    }
}
