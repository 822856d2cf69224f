//! Affine jump-diffusions on the canonical state space `ℝ₊^m × ℝ^n`.
//!
//! The generator is written without the customary ½ on the diffusion term:
//!
//! ```text
//! 𝒜f(x) = Σ_{kl} (A + Σ_i x_i α_i)_{kl} ∂_k∂_l f + (b + βx)ᵀ∇f
//!        + ∫ (f(x+ξ) − f(x)) (m(dξ) + Σ_i x_i μ_i(dξ))
//! ```
//!
//! where `A = diag(0, a)`. Jumps have finite variation and enter in
//! non-compensated form, so `b` is the drift net of jump compensation.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::oracle::{self, OracleError};
use crate::poly::{MultiIndex, Polynomial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("initial state {0:?} lies outside the state space")]
    OutsideStateSpace(Vec<f64>),
    #[error("negative horizon {0}")]
    NegativeTime(f64),
    #[error("non-finite conditional moment at order {0}")]
    MomentBlowUp(u32),
    #[error("{0}")]
    Model(String),
}

/// Distribution of one coordinate of a jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    /// The coordinate does not jump.
    None,
    /// Deterministic jump of the given size.
    Point(f64),
    /// Exponentially distributed jump with the given mean.
    Exponential(f64),
}

impl JumpLaw {
    pub fn moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match *self {
            JumpLaw::None => 0.0,
            JumpLaw::Point(c) => c.powi(k as i32),
            JumpLaw::Exponential(nu) => (1..=k).map(f64::from).product::<f64>() * nu.powi(k as i32),
        }
    }

    /// `E[e^{zξ}]`, or `None` past the pole of the exponential law.
    pub fn transform(&self, z: Complex64) -> Option<Complex64> {
        match *self {
            JumpLaw::None => Some(Complex64::new(1.0, 0.0)),
            JumpLaw::Point(c) => Some((z * c).exp()),
            JumpLaw::Exponential(nu) => {
                let w = z * nu;
                if w.re >= 1.0 {
                    None
                } else {
                    Some((Complex64::new(1.0, 0.0) - w).inv())
                }
            }
        }
    }

    fn nonnegative(&self) -> bool {
        match *self {
            JumpLaw::None => true,
            JumpLaw::Point(c) => c >= 0.0,
            JumpLaw::Exponential(nu) => nu >= 0.0,
        }
    }
}

/// Finite jump measure `intensity · law`, with independent coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpMeasure {
    pub intensity: f64,
    pub components: Vec<JumpLaw>,
}

impl JumpMeasure {
    pub fn new(intensity: f64, components: Vec<JumpLaw>) -> Self {
        JumpMeasure {
            intensity,
            components,
        }
    }

    /// `∫ ξ^γ ν(dξ)` without the intensity.
    pub fn law_moment(&self, gamma: &MultiIndex) -> f64 {
        self.components
            .iter()
            .zip(gamma.entries())
            .map(|(c, &k)| c.moment(k))
            .product()
    }

    /// `E[e^{ψᵀξ}]` of the jump law; `None` at or beyond a pole.
    pub fn law_transform(&self, psi: &[Complex64]) -> Option<Complex64> {
        let mut acc = Complex64::new(1.0, 0.0);
        for (c, &z) in self.components.iter().zip(psi) {
            acc *= c.transform(z)?;
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineModel {
    pub m: usize,
    pub n: usize,
    /// `n×n` diffusion block of the real-valued coordinates.
    pub a: DMatrix<f64>,
    /// `m` state-proportional diffusion matrices, each `d×d`.
    pub alpha: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
    /// Drift matrix: the drift is `b + βx`.
    pub beta: DMatrix<f64>,
    pub jump_m: Option<JumpMeasure>,
    pub jump_mu: Vec<Option<JumpMeasure>>,
}

fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let sym = (m + m.transpose()) * 0.5;
    if (m - &sym).abs().max() > 1e-12 * (1.0 + m.abs().max()) {
        return false;
    }
    let eig = sym.symmetric_eigenvalues();
    let scale = 1.0 + m.abs().max();
    eig.iter().all(|&e| e >= -1e-12 * scale)
}

impl AffineModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        n: usize,
        a: DMatrix<f64>,
        alpha: Vec<DMatrix<f64>>,
        b: DVector<f64>,
        beta: DMatrix<f64>,
        jump_m: Option<JumpMeasure>,
        jump_mu: Vec<Option<JumpMeasure>>,
    ) -> Result<Self, AffineError> {
        let model = AffineModel {
            m,
            n,
            a,
            alpha,
            b,
            beta,
            jump_m,
            jump_mu,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    /// Full constant diffusion matrix `diag(0_m, a)`.
    pub fn a_full(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        out.view_mut((self.m, self.m), (self.n, self.n)).copy_from(&self.a);
        out
    }

    pub fn validate(&self) -> Result<(), AffineError> {
        let d = self.dim();
        let shape = |s: String| Err(AffineError::Shape(s));
        if d == 0 {
            return shape("state dimension must be positive".into());
        }
        if self.a.nrows() != self.n || self.a.ncols() != self.n {
            return shape(format!("a must be {0}x{0}", self.n));
        }
        if self.alpha.len() != self.m {
            return shape(format!("need {} alpha matrices, got {}", self.m, self.alpha.len()));
        }
        if self.alpha.iter().any(|al| al.nrows() != d || al.ncols() != d) {
            return shape(format!("alpha matrices must be {d}x{d}"));
        }
        if self.b.len() != d {
            return shape(format!("b must have length {d}"));
        }
        if self.beta.nrows() != d || self.beta.ncols() != d {
            return shape(format!("beta must be {d}x{d}"));
        }
        if self.jump_mu.len() != self.m {
            return shape(format!("need {} state-proportional jump slots", self.m));
        }
        let jumps = self.jump_m.iter().chain(self.jump_mu.iter().flatten());
        for j in jumps {
            if j.components.len() != d {
                return shape(format!("jump laws must have {d} components"));
            }
            if !(j.intensity >= 0.0) {
                return Err(AffineError::Inadmissible(format!(
                    "jump intensity {} must be nonnegative",
                    j.intensity
                )));
            }
            if j.components[..self.m].iter().any(|c| !c.nonnegative()) {
                return Err(AffineError::Inadmissible(
                    "jumps of nonnegative coordinates must be nonnegative".into(),
                ));
            }
        }
        if !is_psd(&self.a) {
            return Err(AffineError::Inadmissible("a is not positive semidefinite".into()));
        }
        for (i, al) in self.alpha.iter().enumerate() {
            if !is_psd(al) {
                return Err(AffineError::Inadmissible(format!("alpha_{i} is not positive semidefinite")));
            }
            for k in 0..self.m {
                for l in 0..self.m {
                    if (k != i || l != i) && al[(k, l)] != 0.0 {
                        return Err(AffineError::Inadmissible(format!(
                            "alpha_{i} has nonzero entry ({k},{l}) in the nonnegative block"
                        )));
                    }
                }
            }
        }
        for i in 0..self.m {
            if self.b[i] < 0.0 {
                return Err(AffineError::Inadmissible(format!("b_{i} = {} < 0", self.b[i])));
            }
            for k in 0..d {
                let v = self.beta[(i, k)];
                if k >= self.m && v != 0.0 {
                    return Err(AffineError::Inadmissible(format!(
                        "drift of nonnegative coordinate {i} depends on real coordinate {k}"
                    )));
                }
                if k < self.m && k != i && v < 0.0 {
                    return Err(AffineError::Inadmissible(format!("beta[{i},{k}] < 0")));
                }
            }
        }
        Ok(())
    }

    pub fn in_state_space(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite()) && x[..self.m].iter().all(|&v| v >= 0.0)
    }

    /// Diffusion matrix `A + Σ x_i α_i` at `x`.
    pub fn diffusion_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.a_full();
        for (i, al) in self.alpha.iter().enumerate() {
            out += al * x[i];
        }
        out
    }

    /// The generator applied to a polynomial.
    pub fn generator(&self, p: &Polynomial) -> Polynomial {
        let d = self.dim();
        let mut out = Polynomial::zero(d);
        for (alpha, c) in p.terms() {
            for (idx, v) in self.generator_monomial(alpha) {
                out.add_term(idx, c * v);
            }
        }
        out
    }

    /// Terms of `𝒜 x^α`.
    fn generator_monomial(&self, alpha: &MultiIndex) -> Vec<(MultiIndex, f64)> {
        let d = self.dim();
        let e = alpha.entries();
        let mut out: Vec<(MultiIndex, f64)> = Vec::new();
        let shifted = |sub: &[(usize, u32)], add: Option<usize>| -> Option<MultiIndex> {
            let mut v = e.to_vec();
            for &(k, s) in sub {
                if v[k] < s {
                    return None;
                }
                v[k] -= s;
            }
            if let Some(i) = add {
                v[i] += 1;
            }
            Some(MultiIndex::new(v))
        };
        let a_full = self.a_full();
        for k in 0..d {
            for l in 0..d {
                let factor = if k == l {
                    f64::from(e[k]) * (f64::from(e[k]) - 1.0)
                } else {
                    f64::from(e[k]) * f64::from(e[l])
                };
                if factor == 0.0 {
                    continue;
                }
                let sub: Vec<(usize, u32)> = if k == l { vec![(k, 2)] } else { vec![(k, 1), (l, 1)] };
                let akl = a_full[(k, l)];
                if akl != 0.0 {
                    if let Some(idx) = shifted(&sub, None) {
                        out.push((idx, factor * akl));
                    }
                }
                for (i, al) in self.alpha.iter().enumerate() {
                    let v = al[(k, l)];
                    if v != 0.0 {
                        if let Some(idx) = shifted(&sub, Some(i)) {
                            out.push((idx, factor * v));
                        }
                    }
                }
            }
        }
        for k in 0..d {
            if e[k] == 0 {
                continue;
            }
            let ek = f64::from(e[k]);
            if self.b[k] != 0.0 {
                out.push((shifted(&[(k, 1)], None).unwrap(), ek * self.b[k]));
            }
            for l in 0..d {
                let v = self.beta[(k, l)];
                if v != 0.0 {
                    out.push((shifted(&[(k, 1)], Some(l)).unwrap(), ek * v));
                }
            }
        }
        // ∫((x+ξ)^α − x^α)ν(dξ) = Σ_{0<γ≤α} C(α,γ) x^{α−γ} ∫ξ^γ ν(dξ)
        let jump_terms = |jm: &JumpMeasure, times: Option<usize>, out: &mut Vec<(MultiIndex, f64)>| {
            if jm.intensity == 0.0 {
                return;
            }
            for gamma in alpha.divisors() {
                if gamma.is_zero() {
                    continue;
                }
                let mom = jm.law_moment(&gamma);
                if mom == 0.0 {
                    continue;
                }
                let mut rest = alpha.checked_sub(&gamma).unwrap().entries().to_vec();
                if let Some(i) = times {
                    rest[i] += 1;
                }
                out.push((MultiIndex::new(rest), jm.intensity * alpha.binomial(&gamma) * mom));
            }
        };
        if let Some(jm) = &self.jump_m {
            jump_terms(jm, None, &mut out);
        }
        for (i, jm) in self.jump_mu.iter().enumerate() {
            if let Some(jm) = jm {
                jump_terms(jm, Some(i), &mut out);
            }
        }
        out
    }
}

/// Matrix of the generator restricted to polynomials of degree ≤ k.
#[derive(Debug, Clone)]
pub struct QMatrix {
    pub degree: u32,
    pub basis: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
    pub q: DMatrix<f64>,
}

impl QMatrix {
    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Coefficient vector of a polynomial of degree ≤ k.
    pub fn coefficients(&self, p: &Polynomial) -> Option<DVector<f64>> {
        let mut v = DVector::zeros(self.len());
        for (idx, c) in p.terms() {
            v[self.position(idx)?] = c;
        }
        Some(v)
    }
}

pub fn build_q_matrix(model: &AffineModel, k: u32) -> QMatrix {
    let d = model.dim();
    let basis = MultiIndex::graded(d, k);
    let index: HashMap<MultiIndex, usize> =
        basis.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    let mut q = DMatrix::zeros(basis.len(), basis.len());
    for (j, alpha) in basis.iter().enumerate() {
        for (idx, v) in model.generator_monomial(alpha) {
            let i = index[&idx];
            q[(i, j)] += v;
        }
    }
    QMatrix {
        degree: k,
        basis,
        index,
        q,
    }
}

/// `e^{Qt}` for a fixed model, horizon and degree; maps an initial state to
/// all conditional moments of order ≤ k.
#[derive(Debug, Clone)]
pub struct MomentPropagator {
    pub qm: QMatrix,
    pub t: f64,
    transition: DMatrix<f64>,
}

impl MomentPropagator {
    pub fn new(model: &AffineModel, t: f64, k: u32) -> Result<Self, AffineError> {
        if t < 0.0 {
            return Err(AffineError::NegativeTime(t));
        }
        let qm = build_q_matrix(model, k);
        let transition = (&qm.q * t).exp();
        if transition.iter().any(|v| !v.is_finite()) {
            return Err(AffineError::MomentBlowUp(k));
        }
        // evaluation uses the transpose: μ = (e^{Qt})ᵀ · monomials(x0)
        Ok(MomentPropagator {
            qm,
            t,
            transition: transition.transpose(),
        })
    }

    pub fn basis(&self) -> &[MultiIndex] {
        &self.qm.basis
    }

    /// Conditional moments aligned with `basis()`.
    pub fn moments_vec(&self, x0: &[f64]) -> Vec<f64> {
        let monos = DVector::from_iterator(self.qm.len(), self.qm.basis.iter().map(|a| a.monomial(x0)));
        let mu = &self.transition * monos;
        mu.iter().copied().collect()
    }

    pub fn moments(&self, x0: &[f64]) -> ConditionalMoments {
        ConditionalMoments {
            values: self
                .qm
                .basis
                .iter()
                .cloned()
                .zip(self.moments_vec(x0))
                .collect(),
        }
    }

    /// `E[p(X_t) | X_0 = x0]` for a polynomial of degree ≤ k.
    pub fn expectation(&self, p: &Polynomial, x0: &[f64]) -> Option<f64> {
        let mu = self.moments_vec(x0);
        let mut acc = 0.0;
        for (idx, c) in p.terms() {
            acc += c * mu[self.qm.position(idx)?];
        }
        Some(acc)
    }

    /// Moments as polynomials in the initial state.
    pub fn moment_polynomial(&self, alpha: &MultiIndex) -> Option<Polynomial> {
        let j = self.qm.position(alpha)?;
        let d = alpha.dim();
        let mut p = Polynomial::zero(d);
        for (i, idx) in self.qm.basis.iter().enumerate() {
            p.add_term(idx.clone(), self.transition[(j, i)]);
        }
        Some(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub values: BTreeMap<MultiIndex, f64>,
}

impl ConditionalMoments {
    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.values.get(alpha).copied()
    }

    /// Univariate shortcut: `E[X_t^n]` for a scalar model.
    pub fn order(&self, n: u32) -> Option<f64> {
        self.get(&MultiIndex::new(vec![n]))
    }
}

pub fn conditional_moments(
    model: &AffineModel,
    x0: &[f64],
    t: f64,
    k: u32,
) -> Result<ConditionalMoments, AffineError> {
    if !model.in_state_space(x0) {
        return Err(AffineError::OutsideStateSpace(x0.to_vec()));
    }
    Ok(MomentPropagator::new(model, t, k)?.moments(x0))
}

/// Smoothness class of a transition density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// Even the `p = 0` bound fails.
    None,
    Finite(u32),
    /// No nonnegative factor restricts smoothness.
    Unbounded,
}

impl Smoothness {
    pub fn as_option(&self) -> Option<u32> {
        match *self {
            Smoothness::None => None,
            Smoothness::Finite(p) => Some(p),
            Smoothness::Unbounded => Some(u32::MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpMomentOutcome {
    Finite,
    /// The Riccati solution left every bound before the horizon; finiteness
    /// is unverified rather than disproved.
    BlowUp { time: f64 },
    /// The solution reached the singularity of a jump transform.
    JumpPole { time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub density_exists: bool,
    pub smoothness_p: Smoothness,
    /// Right-hand side of the smoothness inequality `p < bound`.
    pub smoothness_bound: f64,
    pub kcal_full_rank: bool,
    pub assumption2_ok: Option<bool>,
    pub exp_moment: Option<ExpMomentOutcome>,
}

const BOUNDARY_SLACK: f64 = 1e-12;

/// Largest integer `p ≥ 0` with `p < bound`, evaluated with slack.
fn largest_p_below(bound: f64) -> Smoothness {
    if bound.is_infinite() && bound > 0.0 {
        return Smoothness::Unbounded;
    }
    let p = (bound - BOUNDARY_SLACK).ceil() - 1.0;
    if p < 0.0 || !p.is_finite() {
        Smoothness::None
    } else {
        Smoothness::Finite(p as u32)
    }
}

fn numerical_rank(k: &DMatrix<f64>) -> usize {
    let sv = k.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let thr = (k.nrows().max(k.ncols()) as f64) * smax * f64::EPSILON;
    sv.iter().filter(|&&s| s > thr).count()
}

/// The rank matrix `[Σα_i, diag(0,a), diag(0,β_JJ a), …, diag(0,β_JJ^{n−1} a)]`.
pub fn kcal_matrix(model: &AffineModel) -> DMatrix<f64> {
    let d = model.dim();
    let (m, n) = (model.m, model.n);
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut sum = DMatrix::zeros(d, d);
    for al in &model.alpha {
        sum += al;
    }
    blocks.push(sum);
    if n > 0 {
        let bjj = model.beta.view((m, m), (n, n)).into_owned();
        let mut pw = DMatrix::<f64>::identity(n, n);
        for _ in 0..n {
            let mut blk = DMatrix::zeros(d, d);
            blk.view_mut((m, m), (n, n)).copy_from(&(&pw * &model.a));
            blocks.push(blk);
            pw = &bjj * pw;
        }
    }
    let cols = blocks.len() * d;
    let mut out = DMatrix::zeros(d, cols);
    for (i, blk) in blocks.iter().enumerate() {
        out.view_mut((0, i * d), (d, d)).copy_from(blk);
    }
    out
}

/// Density existence and smoothness of the transition law.
pub fn check_density_existence(model: &AffineModel) -> RegularityReport {
    let k = kcal_matrix(model);
    let full_rank = numerical_rank(&k) == model.dim();
    let mut bound = f64::INFINITY;
    for i in 0..model.m {
        let aii = model.alpha[i][(i, i)];
        if aii > 0.0 {
            bound = bound.min(model.b[i] / aii - 1.0);
        }
    }
    let p = largest_p_below(bound);
    RegularityReport {
        density_exists: full_rank && p != Smoothness::None,
        smoothness_p: p,
        smoothness_bound: bound,
        kcal_full_rank: full_rank,
        assumption2_ok: None,
        exp_moment: None,
    }
}

/// Smoothness of the density of `∫_0^t X_s ds` for a scalar nonnegative
/// model: `p < b/(2α) − 1`.
pub fn check_integrated_existence(model: &AffineModel) -> Result<RegularityReport, AffineError> {
    if model.m != 1 || model.n != 0 {
        return Err(AffineError::Model(
            "integrated existence check needs a scalar nonnegative model".into(),
        ));
    }
    let alpha = model.alpha[0][(0, 0)];
    let bound = if alpha > 0.0 {
        model.b[0] / (2.0 * alpha) - 1.0
    } else {
        f64::INFINITY
    };
    let p = largest_p_below(bound);
    Ok(RegularityReport {
        density_exists: p != Smoothness::None,
        smoothness_p: p,
        smoothness_bound: bound,
        kcal_full_rank: alpha > 0.0,
        assumption2_ok: None,
        exp_moment: None,
    })
}

/// Square-integrability of `g/w` for a Gamma weight with shape offset `D`:
/// `⌈D/2⌉ < bound`, where `bound` is the right-hand side of the smoothness
/// inequality.
pub fn check_assumption2(d: f64, bound: f64) -> bool {
    d > -1.0 && (d / 2.0).ceil() < bound - BOUNDARY_SLACK
}

/// Probes `E[e^{qᵀX_T}]` at the corners of `[−ε₁,ε₁]^m × [−ε₂,ε₂]^n` by
/// integrating the real Riccati system.
pub fn exp_moment_check(
    model: &AffineModel,
    eps1: f64,
    eps2: f64,
    horizon: f64,
) -> ExpMomentOutcome {
    let d = model.dim();
    let mut worst = ExpMomentOutcome::Finite;
    for mask in 0..(1usize << d) {
        let q: Vec<Complex64> = (0..d)
            .map(|k| {
                let e = if k < model.m { eps1 } else { eps2 };
                let s = if mask & (1 << k) != 0 { -1.0 } else { 1.0 };
                Complex64::new(s * e, 0.0)
            })
            .collect();
        let outcome = exp_moment_at(model, &q, horizon);
        worst = match (worst, outcome) {
            (ExpMomentOutcome::Finite, o) => o,
            (w, ExpMomentOutcome::Finite) => w,
            (ExpMomentOutcome::BlowUp { time: a }, ExpMomentOutcome::BlowUp { time: b }) => {
                ExpMomentOutcome::BlowUp { time: a.min(b) }
            }
            (ExpMomentOutcome::JumpPole { time: a }, o) | (o, ExpMomentOutcome::JumpPole { time: a }) => {
                let t = match o {
                    ExpMomentOutcome::BlowUp { time } | ExpMomentOutcome::JumpPole { time } => time.min(a),
                    ExpMomentOutcome::Finite => a,
                };
                ExpMomentOutcome::JumpPole { time: t }
            }
        };
    }
    worst
}

/// Finiteness of `E[e^{qᵀX_T}]` for a single real direction `q`.
pub fn exp_moment_at(model: &AffineModel, q: &[Complex64], horizon: f64) -> ExpMomentOutcome {
    if q.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return ExpMomentOutcome::Finite;
    }
    match oracle::solve_riccati(model, q, horizon) {
        Ok(_) => ExpMomentOutcome::Finite,
        Err(OracleError::JumpPole { t }) => ExpMomentOutcome::JumpPole { time: t },
        Err(OracleError::StepCollapse { t }) | Err(OracleError::BlowUp { t }) => {
            ExpMomentOutcome::BlowUp { time: t }
        }
        Err(_) => ExpMomentOutcome::BlowUp { time: 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn bajd(kt: f64, k: f64, s: f64, l: f64, nu: f64) -> AffineModel {
        AffineModel::new(
            1,
            0,
            DMatrix::zeros(0, 0),
            vec![DMatrix::from_element(1, 1, 0.5 * s * s)],
            DVector::from_element(1, kt),
            DMatrix::from_element(1, 1, -k),
            Some(JumpMeasure::new(l, vec![JumpLaw::Exponential(nu)])),
            vec![None],
        )
        .unwrap()
    }

    pub(crate) fn heston(kv: f64, ktv: f64, s: f64, ktx: f64, rho: f64) -> AffineModel {
        AffineModel::new(
            1,
            1,
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_row_slice(2, 2, &[0.5 * s * s, 0.5 * rho * s, 0.5 * rho * s, 0.5])],
            DVector::from_vec(vec![ktv, ktx]),
            DMatrix::from_row_slice(2, 2, &[-kv, 0.0, -0.5, 0.0]),
            None,
            vec![None],
        )
        .unwrap()
    }

    #[test]
    fn bajd_q_matrix_matches_print() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (kt, k, s, l, nu) = (
                rng.random_range(0.01..1.0),
                rng.random_range(0.1..3.0),
                rng.random_range(0.05..1.0),
                rng.random_range(0.0..5.0),
                rng.random_range(0.001..0.5),
            );
            let q = build_q_matrix(&bajd(kt, k, s, l, nu), 4).q;
            let s2 = s * s;
            #[rustfmt::skip]
            let expected = DMatrix::from_row_slice(5, 5, &[
                0.0, kt + l * nu, 2.0 * l * nu * nu, 6.0 * l * nu.powi(3), 24.0 * l * nu.powi(4),
                0.0, -k, s2 + 2.0 * kt + 2.0 * l * nu, 6.0 * l * nu * nu, 24.0 * l * nu.powi(3),
                0.0, 0.0, -2.0 * k, 3.0 * s2 + 3.0 * kt + 3.0 * l * nu, 12.0 * l * nu * nu,
                0.0, 0.0, 0.0, -3.0 * k, 6.0 * s2 + 4.0 * kt + 4.0 * l * nu,
                0.0, 0.0, 0.0, 0.0, -4.0 * k,
            ]);
            for i in 0..5 {
                for j in 0..5 {
                    assert_relative_eq!(q[(i, j)], expected[(i, j)], max_relative = 1e-14, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn heston_q_matrix_matches_print() {
        let (kv, ktv, s, ktx, rho) = (1.3, 0.05, 0.3, 0.02, -0.6);
        let q = build_q_matrix(&heston(kv, ktv, s, ktx, rho), 2).q;
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(6, 6, &[
            0.0, ktv, ktx, 0.0, 0.0, 0.0,
            0.0, -kv, -0.5, s * s + 2.0 * ktv, ktx + rho * s, 1.0,
            0.0, 0.0, 0.0, 0.0, ktv, 2.0 * ktx,
            0.0, 0.0, 0.0, -2.0 * kv, -0.5, 0.0,
            0.0, 0.0, 0.0, 0.0, -kv, -1.0,
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        assert!((q - expected).abs().max() < 1e-15);
    }

    #[test]
    fn pure_drift_is_superdiagonal() {
        let m = AffineModel::new(
            0,
            1,
            DMatrix::zeros(1, 1),
            vec![],
            DVector::from_element(1, 0.7),
            DMatrix::zeros(1, 1),
            None,
            vec![],
        )
        .unwrap();
        let q = build_q_matrix(&m, 5).q;
        for i in 0..6 {
            for j in 0..6 {
                let e = if j == i + 1 { j as f64 * 0.7 } else { 0.0 };
                assert_eq!(q[(i, j)], e);
            }
        }
    }

    #[test]
    fn moments_at_zero_time_are_monomials() {
        let m = heston(1.0, 0.04, 0.2, 0.03, -0.5);
        let x0 = [0.04, 5.0];
        let mom = conditional_moments(&m, &x0, 0.0, 4).unwrap();
        for (a, v) in &mom.values {
            assert_eq!(*v, a.monomial(&x0));
        }
    }

    #[test]
    fn cir_mean_closed_form() {
        let (kt, k, s) = (0.06, 1.5, 0.3);
        let m = bajd(kt, k, s, 0.0, 0.01);
        let (y0, t) = (0.1, 0.7);
        let mu = conditional_moments(&m, &[y0], t, 2).unwrap();
        let theta = kt / k;
        let e = (-k * t).exp();
        assert_relative_eq!(mu.order(1).unwrap(), y0 * e + theta * (1.0 - e), max_relative = 1e-13);
        // CIR variance: y0 σ²/κ (e − e²) + θσ²/(2κ)(1−e)²
        let var = y0 * s * s / k * (e - e * e) + theta * s * s / (2.0 * k) * (1.0 - e).powi(2);
        let got = mu.order(2).unwrap() - mu.order(1).unwrap().powi(2);
        assert_relative_eq!(got, var, max_relative = 1e-11);
    }

    #[test]
    fn upper_triangular_exactly() {
        let models = [bajd(0.3, 1.1, 0.4, 2.0, 0.05), heston(1.0, 0.04, 0.2, 0.03, -0.8)];
        for m in &models {
            let qm = build_q_matrix(m, 6);
            for (i, ai) in qm.basis.iter().enumerate() {
                for (j, aj) in qm.basis.iter().enumerate() {
                    if ai.order() > aj.order() {
                        assert_eq!(qm.q[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn regularity_gates() {
        // 2b/α = 2 for the square-root process: boundary is sharp
        let m = bajd(0.5, 1.0, 1.0, 0.0, 0.0);
        let r = check_density_existence(&m);
        assert_eq!(r.smoothness_p, Smoothness::None);
        assert!(!r.density_exists);
        // BAJD: p = ⌈2κθ/σ²⌉ − 2
        let m = bajd(0.05, 1.0, 0.2, 3.0, 0.01);
        let r = check_density_existence(&m);
        assert!(r.density_exists);
        assert_eq!(r.smoothness_p, Smoothness::Finite(1));
        let m = bajd(0.0625, 1.0, 0.2, 3.0, 0.01); // 2κθ/σ² = 3.125
        assert_eq!(check_density_existence(&m).smoothness_p, Smoothness::Finite(2));
        // Heston full rank
        let h = heston(1.0, 0.04, 0.2, 0.03, -0.8);
        let r = check_density_existence(&h);
        assert!(r.kcal_full_rank && r.density_exists);
        // degenerate correlation loses rank
        let h = AffineModel::new(
            1,
            1,
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_row_slice(2, 2, &[0.02, 0.1, 0.1, 0.5])],
            DVector::from_vec(vec![0.04, 0.03]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -0.5, 0.0]),
            None,
            vec![None],
        )
        .unwrap();
        assert!(!check_density_existence(&h).kcal_full_rank);
    }

    #[test]
    fn integrated_gates() {
        let m = bajd(0.00150602, 0.4648, 0.01, 1.0, 0.0002);
        let r = check_integrated_existence(&m).unwrap();
        assert_eq!(r.smoothness_p, Smoothness::Finite(14));
        let m = bajd(0.0, 0.4648, 0.01, 1.0, 0.0002);
        assert_eq!(check_integrated_existence(&m).unwrap().smoothness_p, Smoothness::None);
        // b = 4α: bound 1 → p = 0
        let s: f64 = 0.2;
        let m = bajd(4.0 * 0.5 * s * s, 1.0, s, 0.0, 0.0);
        assert_eq!(check_integrated_existence(&m).unwrap().smoothness_p, Smoothness::Finite(0));
        assert!(check_integrated_existence(&heston(1.0, 0.04, 0.2, 0.0, 0.0)).is_err());
    }

    #[test]
    fn assumption2_arithmetic() {
        assert!(check_assumption2(3.0, 10.0 - 1.0));
        assert!(!check_assumption2(20.0, 2.5 - 1.0));
    }

    #[test]
    fn exp_moment_probes() {
        let m = bajd(0.06, 1.0, 0.3, 1.0, 0.05);
        assert_eq!(exp_moment_check(&m, 0.0, 0.0, 5.0), ExpMomentOutcome::Finite);
        assert_eq!(exp_moment_check(&m, 2.0, 0.0, 1.0), ExpMomentOutcome::Finite);
        // CIR Laplace transform explodes when q c_t ≥ 1, c_t = σ²(1−e^{−κt})/(2κ)... here
        // the explosion time for q is t* = −log(1 − 2κ/(qσ²))/κ
        let (k, s) = (1.0, 0.5);
        let cir = bajd(0.2, k, s, 0.0, 0.0);
        let q = 20.0;
        let tstar = -(1.0 - 2.0 * k / (q * s * s)).ln() / k;
        match exp_moment_check(&cir, q, 0.0, 2.0 * tstar) {
            ExpMomentOutcome::BlowUp { time } => assert!((time - tstar).abs() < 1e-3 * tstar, "{time} vs {tstar}"),
            o => panic!("expected blow-up, got {o:?}"),
        }
        assert_eq!(exp_moment_check(&cir, q, 0.0, 0.5 * tstar), ExpMomentOutcome::Finite);
        // jump pole: 1/(1 − νψ) with ψ ≥ 1/ν
        let jm = bajd(0.2, 1.0, 0.01, 1.0, 0.5);
        assert!(matches!(exp_moment_check(&jm, 3.0, 0.0, 1.0), ExpMomentOutcome::JumpPole { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn semigroup_tower(s in 0.01f64..2.0, t in 0.01f64..2.0, v0 in 0.01f64..0.2, x0 in -1.0f64..1.0) {
            let m = heston(1.2, 0.05, 0.3, 0.02, -0.4);
            let k = 4;
            let x = [v0, x0];
            let direct = MomentPropagator::new(&m, s + t, k).unwrap().moments(&x);
            let pt = MomentPropagator::new(&m, t, k).unwrap();
            let ms = MomentPropagator::new(&m, s, k).unwrap().moments(&x);
            for (alpha, v) in &direct.values {
                let poly = pt.moment_polynomial(alpha).unwrap();
                let tower: f64 = poly.terms().map(|(b, c)| c * ms.get(b).unwrap()).sum();
                prop_assert!((tower - v).abs() <= 1e-9 * v.abs().max(1e-3), "{} vs {}", tower, v);
            }
        }

        #[test]
        fn variance_positive(t in 0.001f64..5.0, y0 in 0.0f64..1.0) {
            let m = bajd(0.04, 1.0, 0.2, 3.0, 0.01);
            let mu = conditional_moments(&m, &[y0], t, 2).unwrap();
            prop_assert!(mu.order(2).unwrap() - mu.order(1).unwrap().powi(2) > 0.0);
        }
    }

    #[test]
    fn small_time_rate_is_linear() {
        let m = bajd(0.04, 1.0, 0.2, 3.0, 0.01);
        let y0 = 0.07;
        let err = |t: f64| {
            let mu = conditional_moments(&m, &[y0], t, 3).unwrap();
            (mu.order(3).unwrap() - y0.powi(3)).abs()
        };
        let r = err(1e-3) / err(1e-4);
        assert!((r - 10.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn generator_on_polynomial() {
        let m = bajd(0.04, 1.0, 0.2, 3.0, 0.01);
        let p = Polynomial::from_dense(&[1.0, 2.0, 3.0]);
        let g = m.generator(&p);
        let qm = build_q_matrix(&m, 2);
        let v = &qm.q * qm.coefficients(&p).unwrap();
        for (i, a) in qm.basis.iter().enumerate() {
            assert_relative_eq!(g.coeff(a), v[i], epsilon = 1e-15);
        }
    }
}
