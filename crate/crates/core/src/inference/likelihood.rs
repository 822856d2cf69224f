//! Log-likelihoods `Σ log g(X_i | X_{i−1})` under the exact, expansion and
//! Gaussian transition densities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{InferenceError, Method, TimeSeries};
use crate::affine::MomentPropagator;
use crate::apps::{heston_expansion_with, BajdParams, BajdTransition, GateMode, HestonParams, HestonTransition, PriceWeight};
use num_complex::Complex64;

use crate::oracle::{bajd_exponent, cos_interval, CosGrid, HestonJointOracle, COS_MAX_TERMS};

const CI: Complex64 = Complex64::new(0.0, 1.0);

pub use crate::apps::heston::TRANSITION_MAX_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    /// `−∞` as soon as one transition density is not positive.
    pub value: f64,
    /// Transitions at which the density was not positive.
    pub negative: usize,
}

impl LogLikelihood {
    fn accumulate(terms: impl Iterator<Item = f64>) -> Self {
        let mut value = 0.0;
        let mut negative = 0;
        for t in terms {
            if t.is_finite() {
                value += t;
            } else {
                negative += 1;
            }
        }
        if negative > 0 {
            value = f64::NEG_INFINITY;
        }
        LogLikelihood { value, negative }
    }
}

fn check_bajd_data(data: &TimeSeries) -> Result<(), InferenceError> {
    if data.dim() != 1 {
        return Err(InferenceError::Data(format!("BAJD data must be scalar, got dimension {}", data.dim())));
    }
    if data.x0[0] < 0.0 {
        return Err(InferenceError::Data(format!("initial state {} is negative", data.x0[0])));
    }
    if let Some(i) = data.values.iter().position(|v| !(v[0] > 0.0)) {
        return Err(InferenceError::Data(format!("observation {} = {} is not positive", i + 1, data.values[i][0])));
    }
    Ok(())
}

fn check_heston_data(data: &TimeSeries) -> Result<(), InferenceError> {
    if data.dim() != 2 {
        return Err(InferenceError::Data(format!("Heston data must be (v, x) pairs, got dimension {}", data.dim())));
    }
    if data.x0[0] < 0.0 {
        return Err(InferenceError::Data(format!("initial variance {} is negative", data.x0[0])));
    }
    if let Some(i) = data.values.iter().position(|v| !(v[0] > 0.0)) {
        return Err(InferenceError::Data(format!("variance at observation {} = {} is not positive", i + 1, data.values[i][0])));
    }
    Ok(())
}

fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    if !(var > 0.0) {
        return f64::NEG_INFINITY;
    }
    -0.5 * ((2.0 * PI * var).ln() + (x - mean).powi(2) / var)
}

/// BAJD log-likelihood of a scalar series.
pub fn bajd_log_likelihood(p: &BajdParams, data: &TimeSeries, method: Method) -> Result<LogLikelihood, InferenceError> {
    check_bajd_data(data)?;
    if data.is_empty() {
        return Ok(LogLikelihood { value: 0.0, negative: 0 });
    }
    let dt = data.dt;
    let pairs = data.transitions().map(|(a, b)| (a[0], b[0]));
    match method {
        Method::Oracle => {
            let prop = MomentPropagator::new(&p.model(), dt, 2)?;
            let prev = std::iter::once(data.x0[0]).chain(data.values.iter().map(|v| v[0]));
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for y in prev.take(data.len()) {
                lo = lo.min(y);
                hi = hi.max(y);
            }
            let obs_max = data.values.iter().map(|v| v[0]).fold(0.0, f64::max);
            let m = prop.moments_vec(&[hi]);
            let (_, b) = cos_interval(m[1], m[2] - m[1] * m[1], true);
            let b = b.max(1.05 * obs_max);
            let grid = CosGrid::new_for(|u| Ok(bajd_exponent(p, CI * u, dt)), 0.0, b, COS_MAX_TERMS, lo)?;
            Ok(LogLikelihood::accumulate(pairs.map(|(y0, y)| {
                let g = grid.density(y0, y);
                if g > 0.0 {
                    g.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })))
        }
        Method::Expansion(j) => {
            let tr = BajdTransition::new(*p, dt, j)?;
            Ok(LogLikelihood::accumulate(pairs.map(|(y0, y)| tr.ln_density(y0, y))))
        }
        Method::Qml => {
            let prop = MomentPropagator::new(&p.model(), dt, 2)?;
            Ok(LogLikelihood::accumulate(pairs.map(|(y0, y)| {
                let m = prop.moments_vec(&[y0]);
                normal_ln_pdf(y, m[1], m[2] - m[1] * m[1])
            })))
        }
    }
}

/// Heston log-likelihood of a series of `(v, x)` pairs.
pub fn heston_log_likelihood(p: &HestonParams, data: &TimeSeries, method: Method) -> Result<LogLikelihood, InferenceError> {
    check_heston_data(data)?;
    if data.is_empty() {
        return Ok(LogLikelihood { value: 0.0, negative: 0 });
    }
    let dt = data.dt;
    let pairs = data.transitions();
    match method {
        Method::Oracle => {
            let o = HestonJointOracle::new(*p, dt);
            Ok(LogLikelihood::accumulate(pairs.map(|(a, b)| o.ln_density(a[0], a[1], b[0], b[1]))))
        }
        Method::Expansion(j) if j <= TRANSITION_MAX_ORDER => {
            let tr = HestonTransition::new(*p, dt, j, PriceWeight::BilateralGamma)?;
            Ok(LogLikelihood::accumulate(pairs.map(|(a, b)| tr.ln_density(a[0], a[1], b[0], b[1]))))
        }
        Method::Expansion(j) => {
            let mut terms = Vec::with_capacity(data.len());
            for (a, b) in pairs {
                let e = heston_expansion_with(p, a[1], a[0], dt, j, GateMode::Report, PriceWeight::BilateralGamma)?;
                let g = e.expansion.density(b);
                terms.push(if g > 0.0 { g.ln() } else { f64::NEG_INFINITY });
            }
            Ok(LogLikelihood::accumulate(terms.into_iter()))
        }
        Method::Qml => {
            let prop = MomentPropagator::new(&p.model(), dt, 2)?;
            let pos = |a: u32, b: u32| {
                prop.basis()
                    .iter()
                    .position(|m| m.entries() == [a, b])
                    .expect("second-order basis")
            };
            let (i10, i01, i20, i11, i02) = (pos(1, 0), pos(0, 1), pos(2, 0), pos(1, 1), pos(0, 2));
            Ok(LogLikelihood::accumulate(pairs.map(|(a, b)| {
                let m = prop.moments_vec(&[a[0], 0.0]);
                let (mv, mx) = (m[i10], m[i01]);
                let svv = m[i20] - mv * mv;
                let svx = m[i11] - mv * mx;
                let sxx = m[i02] - mx * mx;
                let det = svv * sxx - svx * svx;
                if !(det > 0.0) || !(svv > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let (dv, dx) = (b[0] - mv, b[1] - a[1] - mx);
                let q = (sxx * dv * dv - 2.0 * svx * dv * dx + svv * dx * dx) / det;
                -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * q
            })))
        }
    }
}
