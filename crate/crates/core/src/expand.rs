//! Orthonormal expansions `g^(J)(y) = w(ς(y))(1 + Σ c_α H_α(ς(y)))·|det ς|`
//! around an auxiliary weight after an affine standardization `ς`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{MultiIndex, Polynomial};
use crate::quad::{self, Tolerance};
use crate::weights::{basis_for, OrthonormalBasis, Weight, WeightError};

/// Highest supported expansion order.
pub const MAX_ORDER: u32 = 12;
/// Orders above this are accepted but flagged for loss of precision.
pub const PRECISION_WARNING_ORDER: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpandError {
    #[error("nonpositive variance {0}")]
    NonpositiveVariance(f64),
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,
    #[error("missing moment of order {0:?}")]
    MissingMoment(MultiIndex),
    #[error("expansion order {0} exceeds the supported maximum {MAX_ORDER}")]
    OrderTooHigh(u32),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation needs a one-dimensional expansion")]
    NotUnivariate,
    #[error("operation needs a Gamma weight")]
    NotGamma,
    #[error("exponential moment diverges: scaled argument {0} ≥ 1")]
    ExpMomentBoundary(f64),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

/// Affine map `ξ = A y + b` into the coordinates of the weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Row-major `A`.
    pub matrix: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    /// Row-major `A⁻¹`.
    pub inverse: Vec<Vec<f64>>,
    /// `|det A|`.
    pub jacobian: f64,
    /// Shape offset `D` of the Gamma factor, when there is one.
    pub gamma_shape: Option<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Standardization {
    pub fn new(matrix: DMatrix<f64>, shift: Vec<f64>, gamma_shape: Option<f64>) -> Result<Self, ExpandError> {
        let inv = matrix.clone().try_inverse().ok_or(ExpandError::SingularCovariance)?;
        let det = matrix.determinant();
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(ExpandError::SingularCovariance);
        }
        Ok(Standardization {
            matrix: to_rows(&matrix),
            shift,
            inverse: to_rows(&inv),
            jacobian: det.abs(),
            gamma_shape,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Standardization::new(DMatrix::identity(dim, dim), vec![0.0; dim], None).expect("identity is invertible")
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.shift)
            .map(|(row, b)| row.iter().zip(y).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    pub fn invert(&self, xi: &[f64]) -> Vec<f64> {
        let centred: Vec<f64> = xi.iter().zip(&self.shift).map(|(x, b)| x - b).collect();
        self.inverse
            .iter()
            .map(|row| row.iter().zip(&centred).map(|(a, v)| a * v).sum())
            .collect()
    }

    /// The same map applied to `y − origin`.
    pub fn with_origin(&self, origin: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, row) in self.matrix.iter().enumerate() {
            out.shift[i] -= row.iter().zip(origin).map(|(a, o)| a * o).sum::<f64>();
        }
        out
    }

    /// Moments of `ξ` for all `|β| ≤ order` from raw moments of `y`.
    pub fn transform_moments<F>(&self, raw: F, order: u32) -> Result<HashMap<MultiIndex, f64>, ExpandError>
    where
        F: Fn(&MultiIndex) -> Option<f64>,
    {
        let d = self.dim();
        let mut out = HashMap::new();
        for beta in MultiIndex::graded(d, order) {
            let p = Polynomial::monomial(beta.clone(), 1.0)
                .compose_affine(&self.matrix, &self.shift)
                .map_err(|_| ExpandError::DimensionMismatch { expected: d, got: beta.dim() })?;
            let v = p.apply_moments(|a| raw(a).ok_or_else(|| ExpandError::MissingMoment(a.clone())))?;
            out.insert(beta, v);
        }
        Ok(out)
    }
}

/// Scalar Gamma standardization `ξ = s·y` with `s = μ₁/(μ₂ − μ₁²)` and
/// `D = μ₁²/(μ₂ − μ₁²) − 1`, so that `E[ξ] = Var[ξ] = D + 1`.
pub fn standardize_1d(mu1: f64, mu2: f64) -> Result<Standardization, ExpandError> {
    let var = mu2 - mu1 * mu1;
    if !(var > 0.0) || !var.is_finite() {
        return Err(ExpandError::NonpositiveVariance(var));
    }
    let s = mu1 / var;
    let d = mu1 * mu1 / var - 1.0;
    Standardization::new(DMatrix::from_element(1, 1, s), vec![0.0], Some(d))
}

/// Location-scale standardization `ξ = (y − mean)/sd`.
pub fn standardize_location_scale(mean: f64, var: f64) -> Result<Standardization, ExpandError> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(ExpandError::NonpositiveVariance(var));
    }
    let sd = var.sqrt();
    Standardization::new(DMatrix::from_element(1, 1, 1.0 / sd), vec![-mean / sd], None)
}

/// Bivariate standardization `ς(u) = Υ₂(Υ₁u + υ₁)` for a nonnegative first
/// and real second coordinate with
/// `Υ₁ = ((1,0),(−b/a₁,1))`, `υ₁ = (0, bμ₁/a₁ − μ₂)` and
/// `Υ₂ = diag(μ₁/a₁, 1/√(a₂ − b²/a₁))`.
pub fn standardize_2d(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Standardization, ExpandError> {
    let (mu1, mu2) = (mean[0], mean[1]);
    let (a1, b, a2) = (cov[0][0], cov[0][1], cov[1][1]);
    if !(a1 > 0.0) {
        return Err(ExpandError::NonpositiveVariance(a1));
    }
    let cond = a2 - b * b / a1;
    if !(cond > 0.0) || !cond.is_finite() {
        return Err(ExpandError::SingularCovariance);
    }
    let up1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -b / a1, 1.0]);
    let low1 = [0.0, b * mu1 / a1 - mu2];
    let up2 = DMatrix::from_row_slice(2, 2, &[mu1 / a1, 0.0, 0.0, 1.0 / cond.sqrt()]);
    let shift = vec![up2[(0, 0)] * low1[0], up2[(1, 1)] * low1[1]];
    let d = mu1 * mu1 / a1 - 1.0;
    Standardization::new(&up2 * &up1, shift, Some(d))
}

/// `c_α = Σ_β [ξ^β]H_α · μ_β`, with `c_0 = 1`.
pub fn expansion_coefficients<F>(moments: F, basis: &OrthonormalBasis, order: u32) -> Result<Vec<f64>, ExpandError>
where
    F: Fn(&MultiIndex) -> Option<f64>,
{
    let mut out = Vec::new();
    for (alpha, h) in basis.indices.iter().zip(&basis.elements) {
        if alpha.order() > order {
            continue;
        }
        if alpha.is_zero() {
            out.push(1.0);
            continue;
        }
        let c = h.apply_moments(|b| moments(b).ok_or_else(|| ExpandError::MissingMoment(b.clone())))?;
        out.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorMode {
    /// Evaluate the pseudo-density as is, negative values included.
    #[default]
    Off,
    /// Clamp negative values at zero.
    Clamp,
}

/// Fitted pseudo-density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub weight: Weight,
    pub basis: OrthonormalBasis,
    pub standardization: Standardization,
    /// Coefficients aligned with `basis.indices`.
    pub coeffs: Vec<f64>,
    pub order: u32,
    /// `1 + Σ c_α H_α` collected into monomials of `ξ`.
    pub ratio: Polynomial,
    #[serde(default)]
    pub floor: FloorMode,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Expansion {
    /// Fits an order-`order` expansion from raw moments of the original
    /// variable, which must be available through `order`.
    pub fn fit<F>(weight: Weight, standardization: Standardization, raw: F, order: u32) -> Result<Self, ExpandError>
    where
        F: Fn(&MultiIndex) -> Option<f64>,
    {
        let basis = basis_for(&weight, order)?;
        Self::fit_with_basis(basis, standardization, raw, order)
    }

    pub fn fit_with_basis<F>(
        basis: OrthonormalBasis,
        standardization: Standardization,
        raw: F,
        order: u32,
    ) -> Result<Self, ExpandError>
    where
        F: Fn(&MultiIndex) -> Option<f64>,
    {
        if order > MAX_ORDER {
            return Err(ExpandError::OrderTooHigh(order));
        }
        if basis.dim() != standardization.dim() {
            return Err(ExpandError::DimensionMismatch {
                expected: basis.dim(),
                got: standardization.dim(),
            });
        }
        let mut warnings = Vec::new();
        if order > PRECISION_WARNING_ORDER {
            let msg = format!("order {order} expansion: coefficients lose precision in double arithmetic");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let basis = if basis.order > order { basis.truncate(order) } else { basis };
        let std_moments = standardization.transform_moments(&raw, order)?;
        let coeffs = expansion_coefficients(|b| std_moments.get(b).copied(), &basis, order)?;
        let mut ratio = Polynomial::zero(basis.dim());
        for (c, h) in coeffs.iter().zip(&basis.elements) {
            ratio = ratio.add(&h.scale(*c)).expect("same dimension");
        }
        Ok(Expansion {
            weight: basis.weight.clone(),
            basis,
            standardization,
            coeffs,
            order,
            ratio,
            floor: FloorMode::Off,
            warnings,
        })
    }

    pub fn dim(&self) -> usize {
        self.standardization.dim()
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> Option<f64> {
        self.basis.indices.iter().position(|a| a == alpha).map(|i| self.coeffs[i])
    }

    pub fn with_floor(mut self, floor: FloorMode) -> Self {
        self.floor = floor;
        self
    }

    /// Pseudo-likelihood ratio `1 + Σ c_α H_α(ξ)` at a standardized point.
    pub fn ratio_at(&self, xi: &[f64]) -> f64 {
        if xi.len() == 1 {
            self.ratio.horner(xi[0])
        } else {
            self.ratio.eval(xi).expect("dimension checked")
        }
    }

    /// Density in the standardized coordinates, without the Jacobian.
    pub fn standardized_density(&self, xi: &[f64]) -> f64 {
        let w = self.weight.density(xi);
        if w == 0.0 {
            return 0.0;
        }
        w * self.ratio_at(xi)
    }

    /// `g^(J)(y)`; negative values are returned unless flooring is on.
    pub fn density(&self, y: &[f64]) -> f64 {
        let xi = self.standardization.apply(y);
        let g = self.standardized_density(&xi) * self.standardization.jacobian;
        match self.floor {
            FloorMode::Off => g,
            FloorMode::Clamp => g.max(0.0),
        }
    }

    pub fn density_1d(&self, y: f64) -> f64 {
        self.density(&[y])
    }

    fn univariate(&self) -> Result<(f64, f64), ExpandError> {
        if self.dim() != 1 {
            return Err(ExpandError::NotUnivariate);
        }
        Ok((self.standardization.matrix[0][0], self.standardization.shift[0]))
    }

    /// `∫_{−∞}^y g^(J)` from closed-form partial moments of the weight.
    pub fn cdf(&self, y: f64) -> Result<f64, ExpandError> {
        let (a, b) = self.univariate()?;
        let xi = a * y + b;
        let r = self.ratio.dense_coefficients();
        let pm = self.weight.partial_moments(xi, r.len().saturating_sub(1) as u32)?;
        let lower: f64 = r.iter().zip(&pm).map(|(c, m)| c * m).sum();
        Ok(if a > 0.0 { lower } else { 1.0 - lower })
    }

    /// `E^(J)[e^{aY}]` for a Gamma-weight expansion, in closed form.
    pub fn mgf(&self, a: f64) -> Result<f64, ExpandError> {
        let (s, b) = self.univariate()?;
        let Weight::Gamma(g) = &self.weight else {
            return Err(ExpandError::NotGamma);
        };
        let q = a / s;
        if q >= 1.0 {
            return Err(ExpandError::ExpMomentBoundary(q));
        }
        let r = self.ratio.dense_coefficients();
        let mut acc = 0.0;
        for (n, c) in r.iter().enumerate() {
            acc += c * g.exp_moment(q, n as u32)?;
        }
        Ok((-q * b).exp() * acc)
    }

    /// `∫ ξ^β g^(J)` in standardized coordinates.
    pub fn standardized_moment(&self, beta: &MultiIndex) -> Result<f64, ExpandError> {
        let mut acc = 0.0;
        for (k, c) in self.ratio.terms() {
            acc += c * self.weight.moment(&k.add(beta))?;
        }
        Ok(acc)
    }

    /// Mean of the original variable under `g^(J)`.
    pub fn mean(&self) -> Result<Vec<f64>, ExpandError> {
        let d = self.dim();
        let m: Vec<f64> = (0..d)
            .map(|k| self.standardized_moment(&MultiIndex::unit(d, k, 1)))
            .collect::<Result<_, _>>()?;
        Ok(self.standardization.invert(&m))
    }

    /// Support of the original variable, as an interval, for a univariate
    /// expansion.
    pub fn support(&self) -> Result<(f64, f64), ExpandError> {
        let (a, b) = self.univariate()?;
        let lo = self.weight.support_lower();
        let (y0, y1) = ((lo - b) / a, (f64::INFINITY - b) / a);
        Ok(if a > 0.0 { (y0, y1) } else { (y1, y0) })
    }

    /// Mass of the negative part of a univariate pseudo-density.
    pub fn negative_mass(&self) -> Result<f64, ExpandError> {
        self.univariate()?;
        let lo = self.weight.support_lower();
        let est = quad::integrate(
            |xi| (-self.standardized_density(&[xi])).max(0.0),
            lo,
            f64::INFINITY,
            Tolerance::new(1e-12, 1e-8),
        )
        .map_err(|e| ExpandError::Quadrature(e.to_string()))?;
        Ok(est.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("expansion serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
