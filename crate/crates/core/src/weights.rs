//! Auxiliary weight densities, their moments, and orthonormal polynomial
//! bases.
//!
//! Three univariate families are provided: the Gamma density
//! `γ(ξ;D) = ξ^D e^{−ξ}/Γ(1+D)`, the standardized bilateral Gamma density
//! `γ_b(ξ;C)` (mean 0, variance 1, excess kurtosis `C`) and the Gaussian.
//! Products of these act on several coordinates.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};
use thiserror::Error;

use crate::poly::{MultiIndex, Polynomial};
use crate::quad::{integrate, Tolerance};
use crate::special::{ln_bessel_k, norm_cdf};

/// Highest bilateral Gamma moment order served from the cumulant table.
pub const BILATERAL_MAX_MOMENT: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("invalid weight parameter: {0}")]
    InvalidParameter(String),
    #[error("moment order {order} exceeds the supported maximum {max}")]
    MomentOrder { order: u32, max: u32 },
    #[error("numerically degenerate moment structure at basis index {0}")]
    Degenerate(MultiIndex),
    #[error("factor basis has order {have}, need {need}")]
    InsufficientOrder { have: u32, need: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exponential moment diverges at a = {0}")]
    ExpMomentBoundary(f64),
    #[error("operation not available for this weight: {0}")]
    Unsupported(&'static str),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

/// `Γ(1+D, 1)` density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaWeight {
    pub d: f64,
}

/// Standardized bilateral Gamma density with excess kurtosis `c`.
///
/// Equivalently the law of `G₁ − G₂` for independent Gamma variables with
/// shape `3/C` and rate `√(6/C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralGammaWeight {
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWeight {
    pub mean: f64,
    pub variance: f64,
}

impl GammaWeight {
    pub fn new(d: f64) -> Result<Self, WeightError> {
        if !(d > -1.0) || !d.is_finite() {
            return Err(WeightError::InvalidParameter(format!(
                "Gamma weight needs D > -1, got {d}"
            )));
        }
        Ok(GammaWeight { d })
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return match self.d {
                d if d > 0.0 => f64::NEG_INFINITY,
                d if d == 0.0 => 0.0,
                _ => f64::INFINITY,
            };
        }
        self.d * x.ln() - x - ln_gamma(1.0 + self.d)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    pub fn moment(&self, n: u32) -> f64 {
        (1..=n).map(|i| self.d + f64::from(i)).product()
    }

    /// `∫_0^K ξ^n γ(ξ;D) dξ`.
    pub fn partial_moment(&self, k: f64, n: u32) -> f64 {
        if k <= 0.0 {
            return 0.0;
        }
        if k.is_infinite() {
            return self.moment(n);
        }
        self.moment(n) * gamma_lr(1.0 + self.d + f64::from(n), k)
    }

    /// `∫ e^{aξ} ξ^n γ(ξ;D) dξ = Γ(1+D+n)/Γ(1+D) (1−a)^{−(1+D+n)}`, `a < 1`.
    pub fn exp_moment(&self, a: f64, n: u32) -> Result<f64, WeightError> {
        if a >= 1.0 {
            return Err(WeightError::ExpMomentBoundary(a));
        }
        let shape = 1.0 + self.d + f64::from(n);
        Ok(self.moment(n) * (-shape * (1.0 - a).ln()).exp())
    }

    /// Orthonormal generalized Laguerre polynomials, positive leading
    /// coefficient, with the norms of the classical `L_n^{(D)}`.
    pub fn laguerre_basis(&self, order: u32) -> OrthonormalBasis {
        let d = self.d;
        let mut elements = Vec::new();
        let mut norms = Vec::new();
        for n in 0..=order {
            // (−1)^n L_n^{(D)}(ξ) = Σ_k (−1)^{n+k} Γ(n+D+1)/(Γ(n−k+1)Γ(D+k+1)) ξ^k / k!
            let mut coeffs = vec![0.0; n as usize + 1];
            for k in 0..=n {
                let ln_mag = ln_gamma(f64::from(n) + d + 1.0)
                    - ln_gamma(f64::from(n - k) + 1.0)
                    - ln_gamma(d + f64::from(k) + 1.0)
                    - ln_gamma(f64::from(k) + 1.0);
                let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
                coeffs[k as usize] = sign * ln_mag.exp();
            }
            let norm = ((1..=n).map(|i| (f64::from(i) + d) / f64::from(i)).product::<f64>()).sqrt();
            let p = Polynomial::from_dense(&coeffs).scale(1.0 / norm);
            elements.push(p);
            norms.push(norm);
        }
        OrthonormalBasis {
            weight: Weight::Gamma(*self),
            order,
            indices: (0..=order).map(|n| MultiIndex::new(vec![n])).collect(),
            elements,
            norms,
        }
    }
}

impl BilateralGammaWeight {
    pub fn new(c: f64) -> Result<Self, WeightError> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(WeightError::InvalidParameter(format!(
                "bilateral Gamma weight needs C > 0, got {c}"
            )));
        }
        Ok(BilateralGammaWeight { c })
    }

    /// Gamma shape `3/C` of each side.
    pub fn shape(&self) -> f64 {
        3.0 / self.c
    }

    /// Gamma rate `√(6/C)` of each side.
    pub fn rate(&self) -> f64 {
        (6.0 / self.c).sqrt()
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        let s = self.shape();
        let c = self.rate();
        let nu = s - 0.5;
        let ax = x.abs();
        let ln_norm = 2.0 * s * c.ln() - 0.5 * std::f64::consts::PI.ln() - ln_gamma(s);
        if ax == 0.0 {
            if nu > 0.0 {
                // K_ν(z) ~ Γ(ν)/2 (2/z)^ν
                return c.ln() + ln_gamma(nu) - (2.0 * std::f64::consts::PI.sqrt()).ln() - ln_gamma(s);
            }
            return f64::INFINITY;
        }
        ln_norm + nu * (ax / (2.0 * c)).ln() + ln_bessel_k(nu, c * ax)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    /// Cumulants `κ_{2k} = (2k)!/k · s / c^{2k}`; odd cumulants vanish.
    fn cumulant(&self, n: u32) -> f64 {
        if n % 2 == 1 || n == 0 {
            return 0.0;
        }
        let k = n / 2;
        let s = self.shape();
        let ln_fact = ln_gamma(f64::from(n) + 1.0);
        s / f64::from(k) * (ln_fact - f64::from(k) * (6.0 / self.c).ln()).exp()
    }

    /// Raw moments from the cumulant recursion
    /// `m_n = Σ_{j=1}^{n} C(n−1, j−1) κ_j m_{n−j}`.
    pub fn moments(&self, max: u32) -> Result<Vec<f64>, WeightError> {
        if max > BILATERAL_MAX_MOMENT {
            return Err(WeightError::MomentOrder {
                order: max,
                max: BILATERAL_MAX_MOMENT,
            });
        }
        let kappa: Vec<f64> = (0..=max).map(|n| self.cumulant(n)).collect();
        let mut m = vec![0.0; max as usize + 1];
        m[0] = 1.0;
        for n in 1..=max as usize {
            let mut acc = 0.0;
            for j in (2..=n).step_by(2) {
                acc += crate::poly::binomial((n - 1) as u32, (j - 1) as u32) * kappa[j] * m[n - j];
            }
            m[n] = acc;
        }
        Ok(m)
    }

    pub fn moment(&self, n: u32) -> Result<f64, WeightError> {
        Ok(self.moments(n)?[n as usize])
    }

    /// `∫_a^∞ ξ^n γ_b(ξ) dξ` for `a ≥ 0`.
    fn upper_partial(&self, a: f64, n: u32) -> Result<f64, WeightError> {
        let tol = Tolerance::new(1e-15, 1e-12);
        let f = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            (f64::from(n) * x.ln() + self.ln_density(x)).exp()
        };
        let nu = self.shape() - 0.5;
        let r = if a == 0.0 && nu <= 0.0 {
            // integrable singularity at the origin: split off [0,1]
            let head = integrate(f, 0.0, 1.0, tol).map_err(|e| WeightError::Quadrature(e.to_string()))?;
            let tail = integrate(f, 1.0, f64::INFINITY, tol)
                .map_err(|e| WeightError::Quadrature(e.to_string()))?;
            head.value + tail.value
        } else {
            integrate(f, a, f64::INFINITY, tol)
                .map_err(|e| WeightError::Quadrature(e.to_string()))?
                .value
        };
        Ok(r)
    }

    /// Lower partial moment `Γ_b(K, n) = ∫_{−∞}^K ξ^n γ_b(ξ) dξ`.
    pub fn partial_moment(&self, k: f64, n: u32) -> Result<f64, WeightError> {
        if k == f64::INFINITY {
            return self.moment(n);
        }
        if k == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if k <= 0.0 {
            let u = self.upper_partial(-k, n)?;
            Ok(if n % 2 == 0 { u } else { -u })
        } else {
            Ok(self.moment(n)? - self.upper_partial(k, n)?)
        }
    }

    /// Non-normalized orthogonal polynomials and norms as printed for
    /// orders 0–4.
    pub fn closed_form_table(&self) -> (Vec<Polynomial>, Vec<f64>) {
        let c = self.c;
        let k4 = 2.0 * (5.0 * c * c + 21.0 * c + 18.0) / (3.0 * (c + 2.0));
        let polys = vec![
            Polynomial::from_dense(&[1.0]),
            Polynomial::from_dense(&[0.0, 1.0]),
            Polynomial::from_dense(&[-1.0, 0.0, 1.0]),
            Polynomial::from_dense(&[0.0, -c - 3.0, 0.0, 1.0]),
            Polynomial::from_dense(&[k4 - c - 3.0, 0.0, -k4, 0.0, 1.0]),
        ];
        let norms = vec![
            1.0,
            1.0,
            (c + 2.0).sqrt(),
            (7.0 * c * c / 3.0 + 9.0 * c + 6.0).sqrt(),
            (2.0 * (55.0 * c.powi(4) + 363.0 * c.powi(3) + 822.0 * c * c + 756.0 * c + 216.0)
                / (9.0 * (c + 2.0)))
                .sqrt(),
        ];
        (polys, norms)
    }
}

impl GaussianWeight {
    pub fn new(mean: f64, variance: f64) -> Result<Self, WeightError> {
        if !(variance > 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(WeightError::InvalidParameter(format!(
                "Gaussian weight needs variance > 0, got {variance}"
            )));
        }
        Ok(GaussianWeight { mean, variance })
    }

    pub fn standard() -> Self {
        GaussianWeight {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        let z = x - self.mean;
        -0.5 * z * z / self.variance - 0.5 * (2.0 * std::f64::consts::PI * self.variance).ln()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    pub fn moments(&self, max: u32) -> Vec<f64> {
        let mut m = vec![0.0; max as usize + 1];
        m[0] = 1.0;
        for n in 1..=max as usize {
            m[n] = self.mean * m[n - 1];
            if n >= 2 {
                m[n] += (n - 1) as f64 * self.variance * m[n - 2];
            }
        }
        m
    }

    /// `∫_{−∞}^K ξ^n φ(ξ) dξ` by the integration-by-parts recursion.
    pub fn partial_moments(&self, k: f64, max: u32) -> Vec<f64> {
        let sd = self.variance.sqrt();
        let mut t = vec![0.0; max as usize + 1];
        if k == f64::NEG_INFINITY {
            return t;
        }
        if k == f64::INFINITY {
            return self.moments(max);
        }
        let f = self.density(k);
        t[0] = norm_cdf((k - self.mean) / sd);
        let mut kp = 1.0; // K^{n−1}
        for n in 1..=max as usize {
            t[n] = self.mean * t[n - 1] - self.variance * kp * f;
            if n >= 2 {
                t[n] += (n - 1) as f64 * self.variance * t[n - 2];
            }
            kp *= k;
        }
        t
    }
}

/// Univariate or product weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Gamma(GammaWeight),
    BilateralGamma(BilateralGammaWeight),
    Gaussian(GaussianWeight),
    Product { factors: Vec<Weight> },
}

impl Weight {
    pub fn product(factors: Vec<Weight>) -> Result<Self, WeightError> {
        if factors.iter().any(|f| f.dim() != 1) {
            return Err(WeightError::InvalidParameter(
                "product factors must be univariate".into(),
            ));
        }
        if factors.is_empty() {
            return Err(WeightError::InvalidParameter("empty product".into()));
        }
        Ok(Weight::Product { factors })
    }

    pub fn dim(&self) -> usize {
        match self {
            Weight::Product { factors } => factors.len(),
            _ => 1,
        }
    }

    pub fn factors(&self) -> Vec<&Weight> {
        match self {
            Weight::Product { factors } => factors.iter().collect(),
            w => vec![w],
        }
    }

    pub fn ln_density(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Gamma(w) => w.ln_density(x[0]),
            Weight::BilateralGamma(w) => w.ln_density(x[0]),
            Weight::Gaussian(w) => w.ln_density(x[0]),
            Weight::Product { factors } => factors
                .iter()
                .zip(x)
                .map(|(f, &xi)| f.ln_density(&[xi]))
                .sum(),
        }
    }

    /// Density value; zero outside the support.
    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "weight dimension mismatch");
        self.ln_density(x).exp()
    }

    /// Raw moments `λ_0 … λ_max` of a univariate weight.
    pub fn moments_1d(&self, max: u32) -> Result<Vec<f64>, WeightError> {
        match self {
            Weight::Gamma(w) => Ok((0..=max).map(|n| w.moment(n)).collect()),
            Weight::BilateralGamma(w) => w.moments(max),
            Weight::Gaussian(w) => Ok(w.moments(max)),
            Weight::Product { .. } => Err(WeightError::Unsupported("moments_1d on a product")),
        }
    }

    pub fn moment(&self, n: &MultiIndex) -> Result<f64, WeightError> {
        if n.dim() != self.dim() {
            return Err(WeightError::DimensionMismatch {
                expected: self.dim(),
                got: n.dim(),
            });
        }
        match self {
            Weight::Product { factors } => {
                let mut acc = 1.0;
                for (f, &e) in factors.iter().zip(n.entries()) {
                    acc *= f.moment(&MultiIndex::new(vec![e]))?;
                }
                Ok(acc)
            }
            w => {
                let e = n.entries()[0];
                Ok(w.moments_1d(e)?[e as usize])
            }
        }
    }

    /// Moment lookup table for all multi-indices of order ≤ `max`.
    pub fn moment_table(&self, max: u32) -> Result<MomentTable, WeightError> {
        let per: Vec<Vec<f64>> = self
            .factors()
            .iter()
            .map(|f| f.moments_1d(max))
            .collect::<Result<_, _>>()?;
        Ok(MomentTable { per })
    }

    /// Lower partial moments `∫_{−∞}^K ξ^n w(ξ) dξ`, `n = 0..=max`.
    pub fn partial_moments(&self, k: f64, max: u32) -> Result<Vec<f64>, WeightError> {
        match self {
            Weight::Gamma(w) => Ok((0..=max).map(|n| w.partial_moment(k, n)).collect()),
            Weight::BilateralGamma(w) => (0..=max).map(|n| w.partial_moment(k, n)).collect(),
            Weight::Gaussian(w) => Ok(w.partial_moments(k, max)),
            Weight::Product { .. } => Err(WeightError::Unsupported("partial moments of a product")),
        }
    }

    /// Lower end of the support of a univariate weight.
    pub fn support_lower(&self) -> f64 {
        match self {
            Weight::Gamma(_) => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Product-form moment lookup `λ_α = Π λ^{(i)}_{α_i}`.
#[derive(Debug, Clone)]
pub struct MomentTable {
    per: Vec<Vec<f64>>,
}

impl MomentTable {
    pub fn get(&self, alpha: &MultiIndex) -> f64 {
        alpha
            .entries()
            .iter()
            .zip(&self.per)
            .map(|(&e, m)| m[e as usize])
            .product()
    }
}

/// Orthonormal polynomials `H_α`, `|α| ≤ order`, in graded order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalBasis {
    pub weight: Weight,
    pub order: u32,
    pub indices: Vec<MultiIndex>,
    pub elements: Vec<Polynomial>,
    /// Norms of the unnormalized polynomials prior to scaling.
    pub norms: Vec<f64>,
}

impl OrthonormalBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.weight.dim()
    }

    pub fn element(&self, alpha: &MultiIndex) -> Option<&Polynomial> {
        self.indices
            .iter()
            .position(|a| a == alpha)
            .map(|i| &self.elements[i])
    }

    /// Truncates to elements with `|α| ≤ order`.
    pub fn truncate(&self, order: u32) -> OrthonormalBasis {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.indices[i].order() <= order)
            .collect();
        OrthonormalBasis {
            weight: self.weight.clone(),
            order: order.min(self.order),
            indices: keep.iter().map(|&i| self.indices[i].clone()).collect(),
            elements: keep.iter().map(|&i| self.elements[i].clone()).collect(),
            norms: keep.iter().map(|&i| self.norms[i]).collect(),
        }
    }
}

fn inner(p: &Polynomial, q: &Polynomial, lambda: &MomentTable) -> f64 {
    let mut acc = 0.0;
    for (a, ca) in p.terms() {
        for (b, cb) in q.terms() {
            acc += ca * cb * lambda.get(&a.add(b));
        }
    }
    acc
}

/// Gram–Schmidt orthonormalization of the graded monomials under `w`,
/// using closed-form moments. Each vector is orthogonalized twice.
pub fn gram_schmidt(w: &Weight, order: u32) -> Result<OrthonormalBasis, WeightError> {
    let d = w.dim();
    let lambda = w.moment_table(2 * order)?;
    let indices = MultiIndex::graded(d, order);
    let mut elements: Vec<Polynomial> = Vec::with_capacity(indices.len());
    let mut norms = Vec::with_capacity(indices.len());
    for alpha in &indices {
        let mono = Polynomial::monomial(alpha.clone(), 1.0);
        let mut h = mono.clone();
        for _pass in 0..2 {
            for prev in &elements {
                let proj = inner(&h, prev, &lambda);
                h = h.sub(&prev.scale(proj)).expect("same dimension");
            }
        }
        let nn = inner(&h, &h, &lambda);
        let scale = inner(&mono, &mono, &lambda).max(1.0);
        if !(nn > 1e-13 * scale) || !nn.is_finite() {
            return Err(WeightError::Degenerate(alpha.clone()));
        }
        let norm = nn.sqrt();
        let mut hn = h.scale(1.0 / norm);
        if hn.coeff(alpha) < 0.0 {
            hn = hn.scale(-1.0);
        }
        elements.push(hn);
        norms.push(norm);
    }
    Ok(OrthonormalBasis {
        weight: w.clone(),
        order,
        indices,
        elements,
        norms,
    })
}

fn embed(p: &Polynomial, dim: usize, k: usize) -> Polynomial {
    let mut out = Polynomial::zero(dim);
    for (idx, c) in p.terms() {
        out.add_term(MultiIndex::unit(dim, k, idx.entries()[0]), c);
    }
    out
}

/// Tensor-product basis `H_α(ξ) = Π_i H^i_{α_i}(ξ_i)` for `|α| ≤ order`.
pub fn product_basis(factors: &[OrthonormalBasis], order: u32) -> Result<OrthonormalBasis, WeightError> {
    if let Some(f) = factors.iter().find(|f| f.order < order) {
        return Err(WeightError::InsufficientOrder {
            have: f.order,
            need: order,
        });
    }
    if let Some(f) = factors.iter().find(|f| f.dim() != 1) {
        return Err(WeightError::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    let d = factors.len();
    let weight = Weight::product(factors.iter().map(|f| f.weight.clone()).collect())?;
    let indices = MultiIndex::graded(d, order);
    let mut elements = Vec::with_capacity(indices.len());
    let mut norms = Vec::with_capacity(indices.len());
    for alpha in &indices {
        let mut p = Polynomial::one(d);
        let mut norm = 1.0;
        for (k, (&e, f)) in alpha.entries().iter().zip(factors).enumerate() {
            let i = e as usize;
            p = p.mul(&embed(&f.elements[i], d, k)).expect("same dimension");
            norm *= f.norms[i];
        }
        elements.push(p);
        norms.push(norm);
    }
    Ok(OrthonormalBasis {
        weight,
        order,
        indices,
        elements,
        norms,
    })
}

/// Basis for a univariate weight: closed-form Laguerre for Gamma,
/// Gram–Schmidt otherwise.
pub fn basis_for(w: &Weight, order: u32) -> Result<OrthonormalBasis, WeightError> {
    match w {
        Weight::Gamma(g) => Ok(g.laguerre_basis(order)),
        Weight::Product { factors } => {
            let fb: Vec<OrthonormalBasis> = factors
                .iter()
                .map(|f| basis_for(f, order))
                .collect::<Result<_, _>>()?;
            product_basis(&fb, order)
        }
        _ => gram_schmidt(w, order),
    }
}

/// Printed non-normalized Laguerre polynomials `H̃_0 … H̃_4` and norms.
pub fn laguerre_closed_form_table(d: f64) -> (Vec<Polynomial>, Vec<f64>) {
    let polys = vec![
        Polynomial::from_dense(&[1.0]),
        Polynomial::from_dense(&[d + 1.0, -1.0]),
        Polynomial::from_dense(&[d * d + 3.0 * d + 2.0, -2.0 * (d + 2.0), 1.0]).scale(0.5),
        Polynomial::from_dense(&[
            d.powi(3) + 6.0 * d * d + 11.0 * d + 6.0,
            -3.0 * (d * d + 5.0 * d + 6.0),
            3.0 * (d + 3.0),
            -1.0,
        ])
        .scale(1.0 / 6.0),
        Polynomial::from_dense(&[
            (d + 1.0) * (d + 2.0) * (d + 3.0) * (d + 4.0),
            -4.0 * (d + 2.0) * (d + 3.0) * (d + 4.0),
            6.0 * (d + 3.0) * (d + 4.0),
            -4.0 * (d + 4.0),
            1.0,
        ])
        .scale(1.0 / 24.0),
    ];
    let norms = (0..=4u32)
        .map(|n| ((1..=n).map(|i| f64::from(i) + d).product::<f64>() / (1..=n).map(f64::from).product::<f64>()).sqrt())
        .collect();
    (polys, norms)
}
