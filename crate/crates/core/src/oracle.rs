//! Reference transition laws computed from the characteristic function.
//!
//! `E[exp(ψ₀ᵀX_t) | X_0 = x] = exp(φ(t) + ψ(t)ᵀx)` where `(φ, ψ)` solve the
//! generalised Riccati system of the model. Densities follow by Fourier
//! inversion: a cosine expansion on a truncated interval for scalar laws and
//! a Bessel-kernel representation for the Heston joint transition.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::affine::{self, AffineError, AffineModel, JumpLaw, JumpMeasure};
use crate::apps::{BajdParams, HestonParams};
use crate::poly::MultiIndex;
use crate::quad::{self, CompositeRule, QuadError, Tolerance};
use crate::special::ln_scaled_bessel_i;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("Riccati solution reached a jump-transform pole at t = {t}")]
    JumpPole { t: f64 },
    #[error("Riccati step size collapsed at t = {t}")]
    StepCollapse { t: f64 },
    #[error("Riccati solution exceeded the blow-up bound at t = {t}")]
    BlowUp { t: f64 },
    #[error("characteristic function not integrable: {0}")]
    NonIntegrable(String),
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("{0}")]
    Domain(String),
}

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const CI: Complex64 = Complex64::new(0.0, 1.0);

const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-12;
const BLOW_UP: f64 = 1e10;

/// Solution `(φ, ψ)` of the Riccati system at horizon `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharSolution {
    pub phi: Complex64,
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl CharSolution {
    pub fn ln_value(&self, x0: &[f64]) -> Complex64 {
        self.psi.iter().zip(x0).fold(self.phi, |acc, (p, &x)| acc + p * x)
    }

    pub fn value(&self, x0: &[f64]) -> Complex64 {
        self.ln_value(x0).exp()
    }
}

struct Pole;

fn jump_term(j: &Option<JumpMeasure>, psi: &[Complex64]) -> Result<Complex64, Pole> {
    match j {
        None => Ok(C0),
        Some(j) => {
            let l = j.law_transform(psi).ok_or(Pole)?;
            Ok((l - C1) * j.intensity)
        }
    }
}

fn quad_form(m: &nalgebra::DMatrix<f64>, psi: &[Complex64]) -> Complex64 {
    let d = psi.len();
    let mut acc = C0;
    for k in 0..d {
        let mut row = C0;
        for l in 0..d {
            let c = m[(k, l)];
            if c != 0.0 {
                row += psi[l] * c;
            }
        }
        acc += psi[k] * row;
    }
    acc
}

/// Right-hand side with state `[ψ_1..ψ_d, φ]`.
fn riccati_rhs(model: &AffineModel, a_full: &nalgebra::DMatrix<f64>, y: &[Complex64], out: &mut [Complex64]) -> Result<(), Pole> {
    let d = model.dim();
    let psi = &y[..d];
    for i in 0..d {
        let mut v = C0;
        for k in 0..d {
            let c = model.beta[(k, i)];
            if c != 0.0 {
                v += psi[k] * c;
            }
        }
        if i < model.m {
            v += quad_form(&model.alpha[i], psi);
            v += jump_term(&model.jump_mu[i], psi)?;
        }
        out[i] = v;
    }
    let mut phi = quad_form(a_full, psi);
    for k in 0..d {
        phi += psi[k] * model.b[k];
    }
    phi += jump_term(&model.jump_m, psi)?;
    out[d] = phi;
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates the Riccati system from `ψ(0) = ψ₀`, `φ(0) = 0` to `t` with
/// an adaptive Dormand–Prince scheme.
pub fn solve_riccati(model: &AffineModel, psi0: &[Complex64], t: f64) -> Result<CharSolution, OracleError> {
    let d = model.dim();
    if psi0.len() != d {
        return Err(AffineError::Shape(format!("ψ₀ has length {}, model dimension is {d}", psi0.len())).into());
    }
    if !(t >= 0.0) {
        return Err(AffineError::NegativeTime(t).into());
    }
    let a_full = model.a_full();
    let n = d + 1;
    let mut y: Vec<Complex64> = psi0.iter().copied().chain(std::iter::once(C0)).collect();
    if t == 0.0 {
        return Ok(CharSolution {
            phi: C0,
            psi: psi0.to_vec(),
            t,
        });
    }
    let mut k: Vec<Vec<Complex64>> = vec![vec![C0; n]; 7];
    let mut tmp = vec![C0; n];
    let mut ynew = vec![C0; n];
    if riccati_rhs(model, &a_full, &y, &mut k[0]).is_err() {
        return Err(OracleError::JumpPole { t: 0.0 });
    }
    let scale = y.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let slope = k[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut h = if slope > 0.0 { (0.01 * scale / slope).min(t) } else { t };
    h = h.max(1e-6 * t);
    let mut s = 0.0;
    let mut pole_hit = false;
    let min_step = 1e-14 * t;

    while s < t {
        if h < min_step {
            return Err(if pole_hit {
                OracleError::JumpPole { t: s }
            } else {
                OracleError::StepCollapse { t: s }
            });
        }
        let last = s + h >= t;
        if last {
            h = t - s;
        }
        let stages: [&[f64]; 5] = [
            &[A21],
            &[A31, A32],
            &[A41, A42, A43],
            &[A51, A52, A53, A54],
            &[A61, A62, A63, A64, A65],
        ];
        let mut ok = true;
        for (si, coeffs) in stages.iter().enumerate() {
            for j in 0..n {
                let mut acc = y[j];
                for (c, kk) in coeffs.iter().zip(k.iter()) {
                    acc += kk[j] * (h * c);
                }
                tmp[j] = acc;
            }
            if riccati_rhs(model, &a_full, &tmp, &mut k[si + 1]).is_err() {
                ok = false;
                break;
            }
        }
        if ok {
            for j in 0..n {
                ynew[j] = y[j] + (k[0][j] * B1 + k[2][j] * B3 + k[3][j] * B4 + k[4][j] * B5 + k[5][j] * B6) * h;
            }
            if riccati_rhs(model, &a_full, &ynew, &mut k[6]).is_err() {
                ok = false;
            }
        }
        if !ok {
            pole_hit = true;
            h *= 0.25;
            continue;
        }
        let mut err: f64 = 0.0;
        for j in 0..n {
            let e = (k[0][j] * E1 + k[2][j] * E3 + k[3][j] * E4 + k[4][j] * E5 + k[5][j] * E6 + k[6][j] * E7) * h;
            let sc = ATOL + RTOL * y[j].norm().max(ynew[j].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            s = if last { t } else { s + h };
            std::mem::swap(&mut y, &mut ynew);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            pole_hit = false;
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() > BLOW_UP) {
                return Err(OracleError::BlowUp { t: s });
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    let phi = y[d];
    y.truncate(d);
    Ok(CharSolution { phi, psi: y, t })
}

/// `E[exp(i uᵀX_t) | X_0 = x0]`.
pub fn char_fn(model: &AffineModel, u: &[f64], x0: &[f64], t: f64) -> Result<Complex64, OracleError> {
    let psi0: Vec<Complex64> = u.iter().map(|&v| CI * v).collect();
    Ok(solve_riccati(model, &psi0, t)?.value(x0))
}

/// `E[exp(qᵀX_t) | X_0 = x0]` for real `q`.
pub fn mgf(model: &AffineModel, q: &[f64], x0: &[f64], t: f64) -> Result<f64, OracleError> {
    let psi0: Vec<Complex64> = q.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let z = solve_riccati(model, &psi0, t)?.value(x0);
    Ok(z.re)
}

/// Augments a scalar nonnegative model `X` to the pair `(X, ∫X ds)`.
pub fn integrated_model(model: &AffineModel) -> Result<AffineModel, OracleError> {
    if model.m != 1 || model.n != 0 {
        return Err(OracleError::Domain("integrated model needs a scalar nonnegative model".into()));
    }
    let mut al = nalgebra::DMatrix::zeros(2, 2);
    al[(0, 0)] = model.alpha[0][(0, 0)];
    let extend = |j: &Option<JumpMeasure>| {
        j.as_ref().map(|j| JumpMeasure::new(j.intensity, vec![j.components[0], JumpLaw::None]))
    };
    let out = AffineModel::new(
        2,
        0,
        nalgebra::DMatrix::zeros(0, 0),
        vec![al, nalgebra::DMatrix::zeros(2, 2)],
        nalgebra::DVector::from_vec(vec![model.b[0], 0.0]),
        nalgebra::DMatrix::from_row_slice(2, 2, &[model.beta[(0, 0)], 0.0, 1.0, 0.0]),
        extend(&model.jump_m),
        vec![extend(&model.jump_mu[0]), None],
    )?;
    Ok(out)
}

/// `E[exp(i v ∫_0^t X_s ds) | X_0 = y0]`.
pub fn integrated_char_fn(model: &AffineModel, v: f64, y0: f64, t: f64) -> Result<Complex64, OracleError> {
    let aug = integrated_model(model)?;
    Ok(solve_riccati(&aug, &[C0, CI * v], t)?.value(&[y0, 0.0]))
}

/// `E[exp(q ∫_0^t X_s ds) | X_0 = y0]` for real `q`.
pub fn integrated_mgf(model: &AffineModel, q: f64, y0: f64, t: f64) -> Result<f64, OracleError> {
    let aug = integrated_model(model)?;
    Ok(solve_riccati(&aug, &[C0, Complex64::new(q, 0.0)], t)?.value(&[y0, 0.0]).re)
}

/// Closed-form `(φ, ψ)` of the BAJD at horizon `t` for the transform
/// argument `z` (`z = iu` for the characteristic function).
pub fn bajd_exponent(p: &BajdParams, z: Complex64, t: f64) -> (Complex64, Complex64) {
    let s2 = p.sigma * p.sigma;
    let e = (-p.kappa * t).exp();
    let cinf = s2 / (2.0 * p.kappa);
    let ct = cinf * (1.0 - e);
    let den = C1 - z * ct;
    let psi = z * e / den;
    let mut phi = -(2.0 * p.kappa_theta / s2) * den.ln();
    if p.l > 0.0 && p.nu > 0.0 {
        let gap = cinf - p.nu;
        let jump = if gap.abs() > 1e-8 * cinf.max(p.nu) {
            ((C1 - z * p.nu).ln() - (C1 - z * (cinf - gap * e)).ln()) * (p.nu / (p.kappa * gap))
        } else {
            z * (1.0 - e) * p.nu / (p.kappa * (C1 - z * p.nu))
        };
        phi += jump * p.l;
    }
    (phi, psi)
}

pub fn bajd_char_fn(p: &BajdParams, u: f64, x0: f64, t: f64) -> Complex64 {
    let (phi, psi) = bajd_exponent(p, CI * u, t);
    (phi + psi * x0).exp()
}

/// Heston `(V, X)` model helper: coefficients of the `ψ_V` Riccati equation
/// `ψ' = aψ² + bψ + c` for the frequency `u` of `X`.
#[derive(Debug, Clone, Copy)]
struct HestonRiccati {
    a: f64,
    r: Complex64,
    e: Complex64,
    sqrt_e: Complex64,
    k: Complex64,
    ln_k: Complex64,
    g: Complex64,
}

impl HestonRiccati {
    fn new(p: &HestonParams, u: f64, dt: f64) -> Self {
        let a = 0.5 * p.sigma * p.sigma;
        let b = Complex64::new(-p.kappa_v, u * p.rho * p.sigma);
        let c = Complex64::new(-0.5 * u * u, -0.5 * u);
        let mut d = (b * b - c * (4.0 * a)).sqrt();
        if d.re < 0.0 {
            d = -d;
        }
        let r = (-b - d) / (2.0 * a);
        let e = (-d * dt).exp();
        let sqrt_e = (-d * (0.5 * dt)).exp();
        let one_minus_e = C1 - e;
        let k = one_minus_e * a / d;
        let ln_k = a.ln() + one_minus_e.ln() - d.ln();
        let g = (b + d) / (b - d);
        HestonRiccati {
            a,
            r,
            e,
            sqrt_e,
            k,
            ln_k,
            g,
        }
    }
}

/// `E[exp(iuX_t) | V_0 = v0, X_0 = x0]` for the Heston model.
pub fn heston_char_fn(p: &HestonParams, u: f64, v0: f64, x0: f64, t: f64) -> Complex64 {
    heston_ln_char_fn(p, u, v0, x0, t).exp()
}

pub fn heston_ln_char_fn(p: &HestonParams, u: f64, v0: f64, x0: f64, t: f64) -> Complex64 {
    if u == 0.0 {
        return C0;
    }
    let h = HestonRiccati::new(p, u, t);
    let g = h.g;
    // 1 + rK = (1 − gE)/(1 − g), evaluated on a branch continuous in t
    let ln_1rk = (C1 - g * h.e).ln() - (C1 - g).ln();
    let one_rk = ln_1rk.exp();
    let psi_v = h.r - h.r * h.e / one_rk;
    CI * u * (x0 + p.kappa_theta_x * t) + (h.r * t - ln_1rk / h.a) * p.kappa_theta_v + psi_v * v0
}

/// Cosine-series density of a scalar law on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosDensity {
    pub a: f64,
    pub b: f64,
    /// Series coefficients with the `k = 0` term already halved.
    pub coeffs: Vec<f64>,
    /// Size of the discarded coefficient tail.
    pub truncation: f64,
}

pub const COS_MAX_TERMS: usize = 4096;
const COS_MIN_TERMS: usize = 64;
const COS_TAIL: f64 = 1e-13;
const COS_TAIL_RUN: usize = 8;

impl CosDensity {
    /// Builds the expansion from a characteristic function, adding terms
    /// until eight consecutive values fall below `1e-13` or `max_terms`.
    pub fn from_char_fn<F>(mut cf: F, a: f64, b: f64, max_terms: usize) -> Result<Self, OracleError>
    where
        F: FnMut(f64) -> Result<Complex64, OracleError>,
    {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(OracleError::Domain(format!("invalid COS interval [{a}, {b}]")));
        }
        let w = b - a;
        let mut coeffs = Vec::with_capacity(256);
        let mut run = 0;
        let mut tail_mag = 0.0;
        for k in 0..max_terms.max(1) {
            let u = k as f64 * PI / w;
            let phi = cf(u)?;
            if !phi.re.is_finite() || !phi.im.is_finite() {
                return Err(OracleError::NonIntegrable(format!("non-finite value at u = {u}")));
            }
            let mut c = 2.0 / w * (phi * Complex64::new(0.0, -u * a).exp()).re;
            if k == 0 {
                c *= 0.5;
            }
            coeffs.push(c);
            if phi.norm() < COS_TAIL {
                run += 1;
                tail_mag += c.abs();
            } else {
                run = 0;
                tail_mag = 0.0;
            }
            if run >= COS_TAIL_RUN && k + 1 >= COS_MIN_TERMS {
                break;
            }
        }
        let truncation = if run >= COS_TAIL_RUN {
            tail_mag
        } else {
            coeffs.iter().rev().take(COS_TAIL_RUN).map(|c| c.abs()).sum::<f64>()
        };
        Ok(CosDensity {
            a,
            b,
            coeffs,
            truncation,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.a || x > self.b {
            return 0.0;
        }
        cosine_sum(&self.coeffs, PI * (x - self.a) / (self.b - self.a))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.a {
            return 0.0;
        }
        if x >= self.b {
            return 1.0;
        }
        let w = self.b - self.a;
        let theta = PI * (x - self.a) / w;
        let mut acc = self.coeffs[0] * (x - self.a);
        // sin(kθ) by the Chebyshev recurrence
        let two_c = 2.0 * theta.cos();
        let (mut s_prev, mut s_cur) = (0.0, theta.sin());
        for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
            acc += c * s_cur * w / (k as f64 * PI);
            let s_next = two_c * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = s_next;
        }
        acc
    }

    /// `∫ (e^y − K)^+ f(y) dy`, the undiscounted call payoff on `e^X`.
    pub fn call_payoff(&self, strike: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        let c = strike.ln().max(a);
        if c >= b {
            return 0.0;
        }
        let w = b - a;
        let (ec, eb) = (c.exp(), b.exp());
        let mut acc = 0.0;
        for (k, &coef) in self.coeffs.iter().enumerate() {
            let om = k as f64 * PI / w;
            let (sd, cd) = (om * (b - a)).sin_cos();
            let (sc, cc) = (om * (c - a)).sin_cos();
            let chi = (cd * eb - cc * ec + om * sd * eb - om * sc * ec) / (1.0 + om * om);
            let psi = if k == 0 { b - c } else { (sd - sc) / om };
            acc += coef * (chi - strike * psi);
        }
        acc
    }
}

fn cosine_sum(coeffs: &[f64], theta: f64) -> f64 {
    let two_c = 2.0 * theta.cos();
    let (mut c_prev, mut c_cur) = (theta.cos(), 1.0);
    let mut acc = 0.0;
    for &c in coeffs {
        acc += c * c_cur;
        let c_next = two_c * c_cur - c_prev;
        c_prev = c_cur;
        c_cur = c_next;
    }
    acc
}

/// Truncation interval `mean ± L·sd`, clipped at zero for nonnegative laws.
pub fn cos_interval(mean: f64, var: f64, nonnegative: bool) -> (f64, f64) {
    const L: f64 = 14.0;
    let sd = var.max(0.0).sqrt();
    let mut a = mean - L * sd;
    let b = mean + L * sd;
    if nonnegative {
        a = a.max(0.0);
    }
    (a, b)
}

/// COS density of coordinate `coord` of `X_t` given `X_0 = x0`, using the
/// Riccati characteristic function and a moment-based interval.
pub fn coordinate_density(model: &AffineModel, coord: usize, x0: &[f64], t: f64) -> Result<CosDensity, OracleError> {
    let d = model.dim();
    if coord >= d {
        return Err(AffineError::Shape(format!("coordinate {coord} out of range for dimension {d}")).into());
    }
    let mom = affine::conditional_moments(model, x0, t, 2)?;
    let e1 = MultiIndex::unit(d, coord, 1);
    let e2 = MultiIndex::unit(d, coord, 2);
    let m1 = mom.get(&e1).unwrap_or(0.0);
    let m2 = mom.get(&e2).unwrap_or(0.0);
    let (a, b) = cos_interval(m1, m2 - m1 * m1, coord < model.m);
    let mut u = vec![0.0; d];
    CosDensity::from_char_fn(
        |v| {
            u[coord] = v;
            char_fn(model, &u, x0, t)
        },
        a,
        b,
        COS_MAX_TERMS,
    )
}

/// Transition density of the BAJD from the closed-form exponent.
pub fn bajd_density(p: &BajdParams, x0: f64, t: f64) -> Result<CosDensity, OracleError> {
    let mom = affine::conditional_moments(&p.model(), &[x0], t, 2)?;
    let m1 = mom.order(1).unwrap_or(0.0);
    let m2 = mom.order(2).unwrap_or(0.0);
    let (a, b) = cos_interval(m1, m2 - m1 * m1, true);
    CosDensity::from_char_fn(|u| Ok(bajd_char_fn(p, u, x0, t)), a, b, COS_MAX_TERMS)
}

/// Log transition density of the square-root diffusion
/// `dY = (b − κY)dt + σ√Y dW`: `Y_t/c` is noncentral χ² with
/// `4b/σ²` degrees of freedom.
pub fn cir_ln_density(b: f64, kappa: f64, sigma: f64, x0: f64, t: f64, y: f64) -> f64 {
    if !(y > 0.0) {
        return f64::NEG_INFINITY;
    }
    let e = (-kappa * t).exp();
    let c = sigma * sigma * (1.0 - e) / (4.0 * kappa);
    let q = 2.0 * b / (sigma * sigma) - 1.0;
    let lam = x0 * e / c;
    let x = y / c;
    let zeta = Complex64::new((lam * x).sqrt(), 0.0);
    -(2.0 * c).ln() - 0.5 * (x + lam) + q * (0.5 * x).ln() + ln_scaled_bessel_i(q, zeta).re
}

/// Density of `∫_0^t Y_s ds` for the BAJD started at `y0`.
pub fn integrated_bajd_density(p: &BajdParams, y0: f64, t: f64) -> Result<CosDensity, OracleError> {
    let aug = p.integrated_model();
    let mom = affine::conditional_moments(&aug, &[y0, 0.0], t, 2)?;
    let e1 = MultiIndex::new(vec![0, 1]);
    let e2 = MultiIndex::new(vec![0, 2]);
    let m1 = mom.get(&e1).unwrap_or(0.0);
    let m2 = mom.get(&e2).unwrap_or(0.0);
    let (a, b) = cos_interval(m1, m2 - m1 * m1, true);
    CosDensity::from_char_fn(
        |v| Ok(solve_riccati(&aug, &[C0, CI * v], t)?.value(&[y0, 0.0])),
        a,
        b,
        COS_MAX_TERMS,
    )
}

/// Cosine-series evaluator sharing `φ(u_k), ψ(u_k)` across initial states,
/// for likelihoods of scalar models on a fixed interval.
#[derive(Debug, Clone)]
pub struct CosGrid {
    pub a: f64,
    pub b: f64,
    phi: Vec<Complex64>,
    psi: Vec<Complex64>,
}

impl CosGrid {
    /// `exponent(u)` returns `(φ(u), ψ(u))` with the phase of `e^{−iua}`
    /// not yet applied.
    pub fn new<F>(mut exponent: F, a: f64, b: f64, terms: usize) -> Result<Self, OracleError>
    where
        F: FnMut(f64) -> Result<(Complex64, Complex64), OracleError>,
    {
        if !(b > a) {
            return Err(OracleError::Domain(format!("invalid COS interval [{a}, {b}]")));
        }
        let w = b - a;
        let mut phi = Vec::with_capacity(terms);
        let mut psi = Vec::with_capacity(terms);
        for k in 0..terms {
            let u = k as f64 * PI / w;
            let (f, s) = exponent(u)?;
            phi.push(f - CI * (u * a));
            psi.push(s);
        }
        Ok(CosGrid { a, b, phi, psi })
    }

    pub fn bajd(p: &BajdParams, t: f64, a: f64, b: f64, terms: usize) -> Result<Self, OracleError> {
        CosGrid::new(|u| Ok(bajd_exponent(p, CI * u, t)), a, b, terms)
    }

    /// As [`CosGrid::new`], but stops once the terms are negligible for every
    /// initial state at least `x0`, so the tail is never evaluated.
    pub fn new_for<F>(mut exponent: F, a: f64, b: f64, max_terms: usize, x0: f64) -> Result<Self, OracleError>
    where
        F: FnMut(f64) -> Result<(Complex64, Complex64), OracleError>,
    {
        if !(b > a) {
            return Err(OracleError::Domain(format!("invalid COS interval [{a}, {b}]")));
        }
        let w = b - a;
        let mut phi = Vec::new();
        let mut psi = Vec::new();
        let mut run = 0;
        for k in 0..max_terms {
            let u = k as f64 * PI / w;
            let (f, s) = exponent(u)?;
            let f = f - CI * (u * a);
            run = if (f + s * x0).re < COS_TAIL.ln() { run + 1 } else { 0 };
            phi.push(f);
            psi.push(s);
            if run >= COS_TAIL_RUN && k + 1 >= COS_MIN_TERMS {
                break;
            }
        }
        Ok(CosGrid { a, b, phi, psi })
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// Drops the tail of terms that are negligible for every initial state
    /// with `ψ`-weight at least that of `x0`. For scalar laws with
    /// `Re ψ ≤ 0` the smallest state decays slowest.
    pub fn truncate_for(&mut self, x0: f64) {
        let mut run = 0;
        let mut keep = self.phi.len();
        for (k, (f, s)) in self.phi.iter().zip(&self.psi).enumerate() {
            if (f + s * x0).re < COS_TAIL.ln() {
                run += 1;
            } else {
                run = 0;
            }
            if run >= COS_TAIL_RUN && k + 1 >= COS_MIN_TERMS {
                keep = k + 1;
                break;
            }
        }
        self.phi.truncate(keep);
        self.psi.truncate(keep);
    }

    pub fn density(&self, x0: f64, x: f64) -> f64 {
        if x < self.a || x > self.b {
            return 0.0;
        }
        let w = self.b - self.a;
        let theta = PI * (x - self.a) / w;
        let two_c = 2.0 * theta.cos();
        let (mut c_prev, mut c_cur) = (theta.cos(), 1.0);
        let mut acc = 0.0;
        for (k, (f, s)) in self.phi.iter().zip(&self.psi).enumerate() {
            let z = f + s * x0;
            let mut c = z.re.exp() * z.im.cos();
            if k == 0 {
                c *= 0.5;
            }
            acc += c * c_cur;
            let c_next = two_c * c_cur - c_prev;
            c_prev = c_cur;
            c_cur = c_next;
        }
        2.0 / w * acc
    }
}

/// Heston joint transition density `g(v, x | v0, x0)` over a step `dt`.
#[derive(Debug, Clone)]
pub struct HestonJointOracle {
    pub params: HestonParams,
    pub dt: f64,
    nu_prime: f64,
    panels: usize,
    order: usize,
    /// Gauss–Legendre nodes and weights on `[0, 1]`.
    unit_rule: CompositeRule,
}

impl HestonJointOracle {
    pub fn new(params: HestonParams, dt: f64) -> Self {
        Self::with_rule(params, dt, 4, 24)
    }

    pub fn with_rule(params: HestonParams, dt: f64, panels: usize, order: usize) -> Self {
        let nu_prime = 2.0 * params.kappa_theta_v / (params.sigma * params.sigma);
        HestonJointOracle {
            params,
            dt,
            nu_prime,
            panels,
            order,
            unit_rule: CompositeRule::new(0.0, 1.0, panels, order),
        }
    }

    pub fn rule(&self) -> (usize, usize) {
        (self.panels, self.order)
    }

    /// `log F(u; v)`, where `F(u; v) = ∫ e^{iux} g(v, x) dx`.
    pub fn ln_partial_transform(&self, u: f64, v0: f64, x0: f64, v: f64) -> Complex64 {
        let p = &self.params;
        let dt = self.dt;
        let h = HestonRiccati::new(p, u, dt);
        let mu = self.nu_prime - 1.0;
        let zeta = (h.sqrt_e * (2.0 * (v0 * v).sqrt())) / h.k;
        CI * u * (x0 + p.kappa_theta_x * dt) + h.r * (p.kappa_theta_v * dt) + h.r * (v0 - v)
            - (h.e * v0 + v) / h.k
            - h.ln_k * self.nu_prime
            + mu * v.ln()
            + ln_scaled_bessel_i(mu, zeta)
    }

    fn cutoff(&self, v0: f64, v: f64) -> f64 {
        let rho = self.params.rho;
        let s2 = ((1.0 - rho * rho) * self.dt * 0.5 * (v0 + v)).max(1e-300);
        10.0 / s2.sqrt()
    }

    /// Density by composite Gauss–Legendre over `u ∈ [0, U]` with a
    /// transition-dependent cutoff.
    pub fn density(&self, v0: f64, x0: f64, v: f64, x: f64) -> f64 {
        if !(v > 0.0) || !(v0 >= 0.0) {
            return 0.0;
        }
        let big_u = self.cutoff(v0, v);
        let mut acc = 0.0;
        for (&s, &w) in self.unit_rule.nodes.iter().zip(&self.unit_rule.weights) {
            let u = s * big_u;
            let z = self.ln_partial_transform(u, v0, x0, v) - CI * (u * x);
            acc += w * z.re.exp() * z.im.cos();
        }
        acc * big_u / PI
    }

    /// Same density by adaptive quadrature, for validation.
    pub fn density_adaptive(&self, v0: f64, x0: f64, v: f64, x: f64, tol: Tolerance) -> Result<f64, OracleError> {
        if !(v > 0.0) {
            return Ok(0.0);
        }
        let big_u = 1.5 * self.cutoff(v0, v);
        let est = quad::integrate(
            |u| {
                let z = self.ln_partial_transform(u, v0, x0, v) - CI * (u * x);
                z.re.exp() * z.im.cos()
            },
            0.0,
            big_u,
            tol,
        )?;
        Ok(est.value / PI)
    }

    pub fn ln_density(&self, v0: f64, x0: f64, v: f64, x: f64) -> f64 {
        let g = self.density(v0, x0, v, x);
        if g > 0.0 {
            g.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// COS density of `X_t` under Heston, given `(v0, x0)`.
pub fn heston_marginal_density(p: &HestonParams, v0: f64, x0: f64, t: f64) -> Result<CosDensity, OracleError> {
    let mom = affine::conditional_moments(&p.model(), &[v0, 0.0], t, 2)?;
    let e1 = MultiIndex::new(vec![0, 1]);
    let e2 = MultiIndex::new(vec![0, 2]);
    let m1 = mom.get(&e1).unwrap_or(0.0);
    let m2 = mom.get(&e2).unwrap_or(0.0);
    let (a, b) = cos_interval(x0 + m1, m2 - m1 * m1, false);
    CosDensity::from_char_fn(|u| Ok(heston_char_fn(p, u, v0, x0, t)), a, b, COS_MAX_TERMS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bajd() -> BajdParams {
        BajdParams::new(0.04, 1.0, 0.2, 3.0, 0.01).unwrap()
    }

    fn heston() -> HestonParams {
        HestonParams::new(1.0, 0.04, 0.2, 0.03, -0.8).unwrap()
    }

    #[test]
    fn riccati_matches_bajd_closed_form() {
        let p = bajd();
        let m = p.model();
        for &u in &[0.0, 0.7, 5.0, 40.0, 300.0, 2500.0] {
            for &t in &[0.01, 1.0 / 12.0, 1.0, 5.0] {
                let sol = solve_riccati(&m, &[CI * u], t).unwrap();
                let (phi, psi) = bajd_exponent(&p, CI * u, t);
                assert!((sol.phi - phi).norm() < 1e-8 * (1.0 + phi.norm()), "u={u} t={t}: {} vs {}", sol.phi, phi);
                assert!((sol.psi[0] - psi).norm() < 1e-8 * (1.0 + psi.norm()));
            }
        }
        // real argument below the explosion
        let sol = solve_riccati(&m, &[Complex64::new(3.0, 0.0)], 1.0).unwrap();
        let (phi, psi) = bajd_exponent(&p, Complex64::new(3.0, 0.0), 1.0);
        assert_relative_eq!(sol.phi.re, phi.re, max_relative = 1e-9);
        assert_relative_eq!(sol.psi[0].re, psi.re, max_relative = 1e-9);
    }

    #[test]
    fn bajd_limit_branch_is_continuous() {
        // σ²/(2κ) = ν puts the jump term on its limiting branch
        let p = BajdParams::new(0.04, 1.0, 0.2, 2.0, 0.02).unwrap();
        let q = BajdParams::new(0.04, 1.0, 0.2, 2.0, 0.02 * (1.0 + 1e-6)).unwrap();
        let z = CI * 3.0;
        let (a, _) = bajd_exponent(&p, z, 1.0);
        let (b, _) = bajd_exponent(&q, z, 1.0);
        assert!((a - b).norm() < 1e-6);
    }

    #[test]
    fn char_fn_derivatives_match_moments() {
        let p = bajd();
        let m = p.model();
        let (x0, t, h) = (0.05, 0.5, 1e-4);
        let mom = affine::conditional_moments(&m, &[x0], t, 2).unwrap();
        let f = |q: f64| mgf(&m, &[q], &[x0], t).unwrap();
        let d1 = (f(h) - f(-h)) / (2.0 * h);
        let d2 = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        assert_relative_eq!(d1, mom.order(1).unwrap(), max_relative = 1e-6);
        assert_relative_eq!(d2, mom.order(2).unwrap(), max_relative = 1e-4);
    }

    #[test]
    fn cos_recovers_gamma_density() {
        // CIR with no jumps and x0 = 0 is Gamma(2κθ/σ², scale c_t)
        let p = BajdParams::new(0.06, 1.0, 0.2, 0.0, 0.0).unwrap();
        let t = 0.5;
        let dens = bajd_density(&p, 0.0, t).unwrap();
        let shape = 2.0 * p.kappa_theta / (p.sigma * p.sigma);
        let c = p.sigma * p.sigma * (1.0 - (-p.kappa * t).exp()) / (2.0 * p.kappa);
        let gamma = |x: f64| (-(x / c) + (shape - 1.0) * (x / c).ln() - statrs::function::gamma::ln_gamma(shape)).exp() / c;
        for &x in &[0.005, 0.01, 0.02, 0.03, 0.06] {
            assert_relative_eq!(dens.density(x), gamma(x), max_relative = 1e-6);
        }
        let cdf = statrs::function::gamma::gamma_lr(shape, 0.02 / c);
        assert!((dens.cdf(0.02) - cdf).abs() < 1e-7);
    }

    #[test]
    fn noncentral_chi2_matches_cos() {
        let p = BajdParams::new(0.06, 1.0, 0.2, 0.0, 0.0).unwrap();
        for &(x0, t) in &[(0.04, 0.5), (0.1, 1.0 / 12.0), (0.01, 2.0)] {
            let d = bajd_density(&p, x0, t).unwrap();
            for &y in &[0.01, 0.03, 0.05, 0.09] {
                let g = cir_ln_density(p.kappa_theta, p.kappa, p.sigma, x0, t, y).exp();
                assert!((g - d.density(y)).abs() < 1e-6 * (1.0 + g), "x0={x0} t={t} y={y}: {g} vs {}", d.density(y));
            }
        }
    }

    #[test]
    fn cos_density_normalises() {
        let p = bajd();
        let d = bajd_density(&p, 0.05, 1.0 / 12.0).unwrap();
        let mass = quad::integrate(|x| d.density(x), d.a, d.b, Tolerance::new(1e-12, 1e-10)).unwrap();
        assert!((mass.value - 1.0).abs() < 1e-8);
        assert!((d.cdf(d.b - 1e-12) - 1.0).abs() < 1e-8);
        let mean = quad::integrate(|x| x * d.density(x), d.a, d.b, Tolerance::new(1e-14, 1e-10)).unwrap();
        let mom = affine::conditional_moments(&p.model(), &[0.05], 1.0 / 12.0, 1).unwrap();
        assert_relative_eq!(mean.value, mom.order(1).unwrap(), max_relative = 1e-7);
    }

    #[test]
    fn grid_matches_single_density() {
        let p = bajd();
        let t = 1.0 / 12.0;
        let grid = CosGrid::bajd(&p, t, 0.0, 0.3, 2048).unwrap();
        for &x0 in &[0.02, 0.05, 0.09] {
            let d = bajd_density(&p, x0, t).unwrap();
            for &x in &[0.02, 0.04, 0.07] {
                let g = grid.density(x0, x);
                assert!((g - d.density(x)).abs() < 1e-6 * (1.0 + d.density(x)), "x0={x0} x={x}: {g} vs {}", d.density(x));
            }
        }
    }

    #[test]
    fn coordinate_density_agrees_with_closed_form() {
        let p = bajd();
        let t = 0.25;
        let a = coordinate_density(&p.model(), 0, &[0.04], t).unwrap();
        let b = bajd_density(&p, 0.04, t).unwrap();
        for &x in &[0.01, 0.03, 0.05, 0.08] {
            assert_relative_eq!(a.density(x), b.density(x), max_relative = 1e-7, epsilon = 1e-9);
        }
    }

    #[test]
    fn integrated_density_matches_moments() {
        let p = BajdParams::new(0.04, 1.0, 0.2, 1.0, 0.01).unwrap();
        let (y0, t) = (0.05, 2.0);
        let d = integrated_bajd_density(&p, y0, t).unwrap();
        let mom = affine::conditional_moments(&p.integrated_model(), &[y0, 0.0], t, 2).unwrap();
        let m1 = mom.get(&MultiIndex::new(vec![0, 1])).unwrap();
        let tol = Tolerance::new(1e-14, 1e-10);
        let mean = quad::integrate(|x| x * d.density(x), d.a, d.b, tol).unwrap();
        assert_relative_eq!(mean.value, m1, max_relative = 1e-7);
        let mgf_q = integrated_mgf(&p.model(), 2.0, y0, t).unwrap();
        let mgf_num = quad::integrate(|x| (2.0 * x).exp() * d.density(x), d.a, d.b, tol).unwrap();
        assert_relative_eq!(mgf_q, mgf_num.value, max_relative = 1e-7);
    }

    #[test]
    fn cos_call_matches_black_scholes_limit() {
        // a Gaussian log-price reproduces Black–Scholes
        let (s0, k, sig, t) = (100.0f64, 105.0, 0.2, 0.5);
        let m = s0.ln() - 0.5 * sig * sig * t;
        let var = sig * sig * t;
        let (a, b) = cos_interval(m, var, false);
        let d = CosDensity::from_char_fn(|u| Ok(Complex64::new(-0.5 * var * u * u, u * m).exp()), a, b, 4096).unwrap();
        let d1 = ((s0 / k).ln() + 0.5 * sig * sig * t) / (sig * t.sqrt());
        let d2 = d1 - sig * t.sqrt();
        let bs = s0 * crate::special::norm_cdf(d1) - k * crate::special::norm_cdf(d2);
        assert_relative_eq!(d.call_payoff(k), bs, max_relative = 1e-9);
    }

    #[test]
    fn heston_marginal_matches_riccati() {
        let p = heston();
        let m = p.model();
        for &u in &[0.3, 2.0, 15.0, 80.0] {
            for &t in &[1.0 / 52.0, 1.0, 3.0] {
                let a = heston_char_fn(&p, u, 0.04, 0.1, t);
                let b = char_fn(&m, &[0.0, u], &[0.04, 0.1], t).unwrap();
                assert!((a - b).norm() < 1e-8, "u={u} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn heston_joint_partial_transform_matches_riccati() {
        // ∫ e^{wv} F(u; v) dv = E[e^{iuX + wV}]
        let p = heston();
        let (v0, x0, dt) = (0.04, 0.0, 1.0 / 52.0);
        let o = HestonJointOracle::new(p, dt);
        let w = -3.0;
        for &u in &[0.0, 1.5, 10.0] {
            let tol = Tolerance::new(1e-14, 1e-11);
            let re = quad::integrate(|v| ((o.ln_partial_transform(u, v0, x0, v)).exp() * (w * v).exp()).re, 0.0, 0.5, tol).unwrap();
            let im = quad::integrate(|v| ((o.ln_partial_transform(u, v0, x0, v)).exp() * (w * v).exp()).im, 0.0, 0.5, tol).unwrap();
            let sol = solve_riccati(&p.model(), &[Complex64::new(w, 0.0), CI * u], dt).unwrap();
            let want = sol.value(&[v0, x0]);
            assert!((Complex64::new(re.value, im.value) - want).norm() < 1e-8, "u={u}: {re:?} {im:?} vs {want}");
        }
    }

    #[test]
    fn heston_joint_density_integrates_to_one() {
        let p = heston();
        let (v0, x0, dt) = (0.04, 5.1, 1.0 / 52.0);
        let o = HestonJointOracle::new(p, dt);
        let tol = Tolerance::new(1e-10, 1e-7);
        let sd_x = (v0 * dt).sqrt();
        let mass = quad::integrate(
            |v| {
                quad::integrate(|x| o.density(v0, x0, v, x), x0 - 12.0 * sd_x, x0 + 12.0 * sd_x, tol)
                    .map(|e| e.value)
                    .unwrap_or(f64::NAN)
            },
            0.0,
            0.12,
            tol,
        )
        .unwrap();
        assert!((mass.value - 1.0).abs() < 1e-5, "mass {}", mass.value);
        let fast = o.density(v0, x0, 0.041, x0 + 0.001);
        let slow = o.density_adaptive(v0, x0, 0.041, x0 + 0.001, Tolerance::new(1e-12, 1e-10)).unwrap();
        assert_relative_eq!(fast, slow, max_relative = 1e-6);
    }

    #[test]
    fn blow_up_and_pole_are_reported() {
        let p = BajdParams::new(0.2, 1.0, 0.5, 0.0, 0.0).unwrap();
        assert!(matches!(
            solve_riccati(&p.model(), &[Complex64::new(20.0, 0.0)], 5.0),
            Err(OracleError::BlowUp { .. }) | Err(OracleError::StepCollapse { .. })
        ));
        let j = BajdParams::new(0.2, 1.0, 0.01, 1.0, 0.5).unwrap();
        assert!(matches!(
            solve_riccati(&j.model(), &[Complex64::new(3.0, 0.0)], 1.0),
            Err(OracleError::JumpPole { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn char_fn_is_bounded_and_hermitian(u in -50.0f64..50.0, x0 in 0.0f64..0.2, t in 0.01f64..3.0) {
            let p = bajd();
            let a = bajd_char_fn(&p, u, x0, t);
            let b = bajd_char_fn(&p, -u, x0, t);
            prop_assert!(a.norm() <= 1.0 + 1e-12);
            prop_assert!((a - b.conj()).norm() < 1e-12);
        }
    }
}
