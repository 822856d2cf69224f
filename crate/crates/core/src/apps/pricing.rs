//! European calls on `S = e^X` under Heston, by expansion and by Fourier
//! inversion, with Black–Scholes implied volatilities.

use serde::{Deserialize, Serialize};

use super::heston::{heston_marginal_expansion, HestonParams};
use super::{AppError, GateMode};
use crate::expand::Expansion;
use crate::oracle;
use crate::quad::{self, Tolerance};
use crate::special::norm_cdf;
use crate::weights::Weight;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallPrice {
    pub strike: f64,
    /// Discounted price `e^{−rΔ}(HA − K·HB)`.
    pub price: f64,
    /// `∫_{log K}^∞ e^ξ g(ξ) dξ`.
    pub ha: f64,
    /// `∫_{log K}^∞ g(ξ) dξ`.
    pub hb: f64,
}

/// Call price from a fitted scalar expansion of the terminal log-price.
pub fn call_from_expansion(e: &Expansion, strike: f64, r: f64, dt: f64) -> Result<CallPrice, AppError> {
    if !(strike > 0.0) {
        return Err(AppError::Invalid(format!("strike must be positive, got {strike}")));
    }
    if e.dim() != 1 {
        return Err(AppError::Invalid("call pricing needs a scalar expansion".into()));
    }
    let a = e.standardization.matrix[0][0];
    let b = e.standardization.shift[0];
    let (mean, sd) = (-b / a, 1.0 / a);
    // e^y g(y) must decay: the weight's exponential rate in y exceeds one
    if let Weight::BilateralGamma(w) = &e.weight {
        if w.rate() * a <= 1.0 {
            return Err(AppError::Invalid(format!(
                "e^X is not integrable against the weight: decay rate {} ≤ 1",
                w.rate() * a
            )));
        }
    }
    let k = strike.ln();
    let hb = 1.0 - e.cdf(k)?;
    let upper = mean + 40.0 * sd;
    let ha = if k >= upper {
        0.0
    } else {
        let tol = Tolerance::new(1e-14, 1e-11);
        let f = |y: f64| y.exp() * e.density_1d(y);
        let mut pts = vec![k];
        if mean > k && mean < upper {
            pts.push(mean);
        }
        pts.push(upper);
        quad::integrate_with_breaks(f, &pts, tol)?.value
    };
    let price = (-r * dt).exp() * (ha - strike * hb);
    if price < 0.0 {
        log::warn!("negative expansion call price {price} at K = {strike}");
    }
    Ok(CallPrice { strike, price, ha, hb })
}

/// `C^(J)(Δ, K)` from the bilateral Gamma expansion of `X_Δ`.
#[allow(clippy::too_many_arguments)]
pub fn price_call(
    p: &HestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    strike: f64,
    r: f64,
    order: u32,
    mode: GateMode,
) -> Result<CallPrice, AppError> {
    let e = heston_marginal_expansion(p, x0, v0, dt, order, mode)?.expansion;
    call_from_expansion(&e, strike, r, dt)
}

/// Reference price from the Heston characteristic function.
pub fn oracle_call(p: &HestonParams, x0: f64, v0: f64, dt: f64, strike: f64, r: f64) -> Result<f64, AppError> {
    let d = oracle::heston_marginal_density(p, v0, x0, dt)?;
    Ok((-r * dt).exp() * d.call_payoff(strike))
}

pub fn black_scholes_call(s0: f64, strike: f64, r: f64, t: f64, vol: f64) -> f64 {
    let df = (-r * t).exp();
    if vol <= 0.0 || t <= 0.0 {
        return (s0 - strike * df).max(0.0);
    }
    let sd = vol * t.sqrt();
    let d1 = ((s0 / strike).ln() + r * t) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    s0 * norm_cdf(d1) - strike * df * norm_cdf(d2)
}

/// Black–Scholes implied volatility by bisection on `[1e-6, 5]`; `None`
/// outside the no-arbitrage bounds.
pub fn implied_vol(price: f64, s0: f64, strike: f64, r: f64, t: f64) -> Option<f64> {
    let lower = (s0 - strike * (-r * t).exp()).max(0.0);
    if !(price > lower) || !(price < s0) {
        return None;
    }
    let (mut lo, mut hi) = (1e-6, 5.0);
    if black_scholes_call(s0, strike, r, t, hi) < price {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if black_scholes_call(s0, strike, r, t, mid) < price {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig5() -> (HestonParams, f64, f64, f64, f64) {
        let p = HestonParams::new(1.0, 0.04, 0.2, 0.03, -0.8).unwrap();
        (p, 5.1, 0.04, 1.0 / 52.0, 0.03)
    }

    #[test]
    fn implied_vol_inverts_black_scholes() {
        for &vol in &[0.05, 0.2, 0.9] {
            let c = black_scholes_call(100.0, 110.0, 0.03, 0.5, vol);
            assert_relative_eq!(implied_vol(c, 100.0, 110.0, 0.03, 0.5).unwrap(), vol, max_relative = 1e-9);
        }
        assert!(implied_vol(1e-9, 100.0, 50.0, 0.0, 1.0).is_none());
    }

    #[test]
    fn limits_and_parity() {
        let (p, x0, v0, dt, r) = fig5();
        let e = heston_marginal_expansion(&p, x0, v0, dt, 4, GateMode::Enforce).unwrap().expansion;
        // K → 0 gives the discounted forward of the expansion
        let tiny = call_from_expansion(&e, 1e-3, r, dt).unwrap();
        let tol = Tolerance::new(1e-12, 1e-11);
        let a = e.standardization.matrix[0][0];
        let mean = -e.standardization.shift[0] / a;
        let fwd = quad::integrate(|y| y.exp() * e.density_1d(y), mean - 40.0 / a, mean + 40.0 / a, tol).unwrap().value;
        assert_relative_eq!(tiny.price, (-r * dt).exp() * fwd - 1e-3 * (-r * dt).exp(), max_relative = 1e-8);
        // the model forward is e^{x0 + rΔ}
        assert_relative_eq!(fwd, (x0 + r * dt).exp(), max_relative = 1e-6);
        let deep = call_from_expansion(&e, (x0 + 2.0).exp(), r, dt).unwrap();
        assert!(deep.price.abs() < 1e-10);
        for &lk in &[5.05, 5.1, 5.15] {
            let c = call_from_expansion(&e, f64::exp(lk), r, dt).unwrap();
            let below = quad::integrate(|y| y.exp() * e.density_1d(y), mean - 40.0 / a, lk, tol).unwrap().value;
            assert_relative_eq!(c.ha + below, fwd, max_relative = 1e-9);
        }
    }

    #[test]
    fn expansion_tracks_oracle_iv() {
        let (p, x0, v0, dt, r) = fig5();
        let s0 = f64::exp(x0);
        let e = heston_marginal_expansion(&p, x0, v0, dt, 4, GateMode::Enforce).unwrap().expansion;
        let mut prev = f64::INFINITY;
        for i in 0..9 {
            let lk = 5.09 + 0.01 * i as f64;
            let k = lk.exp();
            let c4 = call_from_expansion(&e, k, r, dt).unwrap().price;
            let co = oracle_call(&p, x0, v0, dt, k, r).unwrap();
            let iv4 = implied_vol(c4, s0, k, r, dt).unwrap();
            let ivo = implied_vol(co, s0, k, r, dt).unwrap();
            assert!((iv4 - ivo).abs() < 0.005, "logK {lk}: {iv4} vs {ivo}");
            assert!(c4 <= prev + 1e-8);
            prev = c4;
        }
    }
}
