//! Simulators for test data: exact inverse-CDF draws for the BAJD and a
//! substepped scheme for Heston.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{InferenceError, TimeSeries};
use crate::apps::{BajdParams, HestonParams};
use crate::oracle::{bajd_density, CosDensity};

/// Floor `c` of the logistic substitution `y = c + L·e^w/(1 + e^w)`.
pub const LOGISTIC_FLOOR: f64 = 1e-6;
/// Stopping rule `|G(y) − u| < ε`.
pub const CDF_TOLERANCE: f64 = 1e-6;
const NEWTON_ITERATIONS: usize = 20;
const BISECTION_ITERATIONS: usize = 200;

/// One inverse-CDF draw with its iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseCdfDraw {
    pub value: f64,
    pub iterations: usize,
    pub bisection: bool,
}

fn logistic(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

/// Solves `G(y) = u` by Newton–Raphson in `w`, with `y = c + L·s(w)`, started
/// from the logistic inverse of `start`. A bracket is maintained throughout
/// and bisection takes over after 20 Newton steps or when a step leaves it.
pub fn bajd_inverse_cdf(dens: &CosDensity, u: f64, start: f64) -> Result<InverseCdfDraw, InferenceError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(InferenceError::Invalid(format!("uniform {u} outside (0, 1)")));
    }
    let c = LOGISTIC_FLOOR;
    let scale = dens.b.max(1.0);
    let y_of = |w: f64| c + scale * logistic(w);
    let s0 = ((start - c) / scale).clamp(1e-12, 1.0 - 1e-12);
    let mut w = (s0 / (1.0 - s0)).ln();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for it in 0..NEWTON_ITERATIONS {
        let y = y_of(w);
        let f = dens.cdf(y) - u;
        if f.abs() < CDF_TOLERANCE {
            return Ok(InverseCdfDraw {
                value: y,
                iterations: it + 1,
                bisection: false,
            });
        }
        if f < 0.0 {
            lo = lo.max(w);
        } else {
            hi = hi.min(w);
        }
        let s = logistic(w);
        let slope = dens.density(y) * scale * s * (1.0 - s);
        let mut next = w - f / slope;
        if !(slope > 0.0) || !next.is_finite() || next <= lo || next >= hi {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => w,
            };
        }
        w = next;
    }
    // bracket in y, then bisect
    let (mut a, mut b) = (if lo.is_finite() { y_of(lo) } else { dens.a }, if hi.is_finite() { y_of(hi) } else { dens.b });
    for it in 0..BISECTION_ITERATIONS {
        let m = 0.5 * (a + b);
        let f = dens.cdf(m) - u;
        if f.abs() < CDF_TOLERANCE || b - a < 1e-15 * b.abs().max(1.0) {
            return Ok(InverseCdfDraw {
                value: m,
                iterations: NEWTON_ITERATIONS + it + 1,
                bisection: true,
            });
        }
        if f < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Err(InferenceError::Sampler(format!("inverse CDF did not converge for u = {u}")))
}

/// Exact BAJD path by inverse-CDF sampling from the Fourier-inverted
/// transition law.
pub fn simulate_bajd_exact(p: &BajdParams, y0: f64, dt: f64, n: usize, seed: u64) -> Result<TimeSeries, InferenceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = y0;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let dens = bajd_density(p, y, dt)?;
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        y = bajd_inverse_cdf(&dens, u, y)?.value;
        values.push(vec![y]);
    }
    TimeSeries::new(dt, vec![y0], values)
}

/// Heston path of `(V, X)` pairs on a grid of spacing `dt`.
///
/// Each of the `substeps` uses the exact conditional mean of `V` with a
/// Gaussian shock scaled by `√V⁺`, reflected at zero, and integrates `X`
/// with the conditional-mean integral of `V` over the substep. With `σ = 0`
/// the scheme is exact.
pub fn simulate_heston(
    p: &HestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    n: usize,
    substeps: usize,
    seed: u64,
) -> Result<TimeSeries, InferenceError> {
    if substeps == 0 {
        return Err(InferenceError::Invalid("substeps must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = dt / substeps as f64;
    let k = p.kappa_v;
    let theta = p.kappa_theta_v / k;
    let e = (-k * h).exp();
    let mean_int = (1.0 - e) / k;
    let v_sd = ((1.0 - e * e) / (2.0 * k)).sqrt();
    let rho_c = (1.0 - p.rho * p.rho).sqrt();
    let (mut v, mut x) = (v0, x0);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..substeps {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let vp = v.max(0.0);
            let int_v = (theta * h + (vp - theta) * mean_int).max(0.0);
            let sd = int_v.sqrt();
            x += p.kappa_theta_x * h - 0.5 * int_v + sd * (p.rho * z1 + rho_c * z2);
            v = (theta + (vp - theta) * e + p.sigma * vp.sqrt() * v_sd * z1).abs();
        }
        values.push(vec![v, x]);
    }
    TimeSeries::new(dt, vec![v0, x0], values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::conditional_moments;
    use crate::poly::MultiIndex;

    fn bajd() -> BajdParams {
        BajdParams::new(0.04, 1.0, 0.2, 3.0, 0.01).unwrap()
    }

    #[test]
    fn median_draw_hits_half() {
        let p = bajd();
        let dens = bajd_density(&p, 0.07, 1.0 / 12.0).unwrap();
        let d = bajd_inverse_cdf(&dens, 0.5, 0.07).unwrap();
        assert!((dens.cdf(d.value) - 0.5).abs() < 1e-6);
        assert!(d.iterations <= 8, "{d:?}");
    }

    #[test]
    fn extreme_uniforms_still_converge() {
        let p = bajd();
        let dens = bajd_density(&p, 0.07, 1.0 / 12.0).unwrap();
        for &u in &[1e-9, 1e-6, 0.999999, 1.0 - 1e-12] {
            let d = bajd_inverse_cdf(&dens, u, 0.07).unwrap();
            assert!((dens.cdf(d.value) - u).abs() < 1e-6, "u={u}: {d:?}");
        }
    }

    #[test]
    fn seeded_paths_are_reproducible() {
        let p = bajd();
        let a = simulate_bajd_exact(&p, 0.07, 1.0 / 12.0, 20, 7).unwrap();
        let b = simulate_bajd_exact(&p, 0.07, 1.0 / 12.0, 20, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_bajd_exact(&p, 0.07, 1.0 / 12.0, 20, 8).unwrap();
        assert_ne!(a, c);
        let h = HestonParams::new(1.0, 0.04, 0.2, 0.03, -0.8).unwrap();
        assert_eq!(
            simulate_heston(&h, 5.0, 0.04, 1.0 / 52.0, 10, 20, 3).unwrap(),
            simulate_heston(&h, 5.0, 0.04, 1.0 / 52.0, 10, 20, 3).unwrap()
        );
    }

    #[test]
    fn bajd_series_hovers_around_stationary_mean() {
        let p = bajd();
        let s = simulate_bajd_exact(&p, p.stationary_mean(), 1.0 / 12.0, 400, 11).unwrap();
        let m = s.column(0).iter().sum::<f64>() / s.len() as f64;
        assert!((m - 0.07).abs() < 0.015, "{m}");
    }

    #[test]
    fn heston_without_vol_of_vol_is_exact() {
        let p = HestonParams::new(1.0, 0.04, 1e-12, 0.03, -0.5).unwrap();
        let (x0, v0, dt) = (5.0, 0.02, 0.25);
        let n = 20000;
        let mut xs = Vec::with_capacity(n);
        for s in 0..n as u64 {
            let path = simulate_heston(&p, x0, v0, dt, 1, 7, s).unwrap();
            let v = path.values[0][0];
            let vt = 0.04 + (v0 - 0.04) * (-dt).exp();
            assert!((v - vt).abs() < 1e-9);
            xs.push(path.values[0][1]);
        }
        let int_v = 0.04 * dt + (v0 - 0.04) * (1.0 - (-dt).exp());
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (int_v / n as f64).sqrt();
        assert!((mean - (x0 + 0.03 * dt - 0.5 * int_v)).abs() < 4.0 * se);
        assert!((var / int_v - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn heston_moments_match_within_mc_error() {
        let p = HestonParams::new(1.0, 0.04, 0.2, 0.03, -0.8).unwrap();
        let (x0, v0, dt) = (5.0, 0.04, 1.0 / 52.0);
        let n = 20000;
        let mut vs = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        for s in 0..n as u64 {
            let path = simulate_heston(&p, x0, v0, dt, 1, 20, 1000 + s).unwrap();
            vs.push(path.values[0][0]);
            xs.push(path.values[0][1] - x0);
        }
        let mom = conditional_moments(&p.model(), &[v0, 0.0], dt, 2).unwrap();
        let m = |a, b| mom.get(&MultiIndex::new(vec![a, b])).unwrap();
        let mean = |z: &[f64]| z.iter().sum::<f64>() / z.len() as f64;
        let (mv, mx) = (mean(&vs), mean(&xs));
        let sv = (m(2, 0) - m(1, 0).powi(2)).sqrt();
        let sx = (m(0, 2) - m(0, 1).powi(2)).sqrt();
        let nn = (n as f64).sqrt();
        assert!((mv - m(1, 0)).abs() < 4.0 * sv / nn, "{mv} vs {}", m(1, 0));
        assert!((mx - m(0, 1)).abs() < 4.0 * sx / nn, "{mx} vs {}", m(0, 1));
        let cov: f64 = vs.iter().zip(&xs).map(|(v, x)| (v - mv) * (x - mx)).sum::<f64>() / n as f64;
        assert!(cov < 0.0);
        let corr = cov / (sv * sx);
        let target = (m(1, 1) - m(1, 0) * m(0, 1)) / (sv * sx);
        assert!((corr - target).abs() < 0.05, "{corr} vs {target}");
    }
}
