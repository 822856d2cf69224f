//! Special functions not covered by statrs: modified Bessel functions of
//! the second kind (real argument, log scale) and the scaled modified
//! Bessel function of the first kind at complex argument.

use num_complex::Complex64;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use crate::quad::gauss_legendre;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `log K_ν(x)` for `x > 0`, from the integral
/// `K_ν(x) = ∫_0^∞ exp(−x cosh t) cosh(νt) dt` summed by the trapezoid rule
/// in log space.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "ln_bessel_k requires x > 0");
    let nu = nu.abs();
    let log_integrand = |t: f64| {
        let c = if t < 1e-3 {
            // cosh t − 1 without cancellation
            let s = (0.5 * t).sinh();
            2.0 * s * s
        } else {
            t.cosh() - 1.0
        };
        // log cosh(νt) = νt + log((1 + e^{−2νt})/2)
        -x * c + nu * t + (0.5 * (1.0 + (-2.0 * nu * t).exp())).ln()
    };
    // peak of the log integrand: x sinh t = ν
    let t_peak = (nu / x).asinh();
    let peak = log_integrand(t_peak);
    let width = 1.0 / (x * t_peak.cosh()).sqrt().max(1e-3);
    let h = (0.25 * width).clamp(1e-4, 0.1);
    let mut sum = 0.5 * (log_integrand(0.0) - peak).exp();
    let mut t = h;
    loop {
        let l = log_integrand(t);
        let term = (l - peak).exp();
        sum += term;
        if t > t_peak && l - peak < -40.0 {
            break;
        }
        t += h;
    }
    peak - x + (sum * h).ln()
}

pub fn bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).exp()
}

/// `log Φ_μ(ζ)` where `Φ_μ(ζ) = (ζ/2)^{−μ} I_μ(ζ)` is entire and even in ζ.
/// Requires `μ > −1`.
pub fn ln_scaled_bessel_i(mu: f64, zeta: Complex64) -> Complex64 {
    let z = if zeta.re < 0.0 { -zeta } else { zeta };
    let r = z.norm();
    if r <= 15.0 {
        return series(mu, z);
    }
    if mu >= DEBYE_MIN_ORDER {
        return ln_bessel_i_debye(mu, z) - mu * (z * 0.5).ln();
    }
    if r >= (25.0f64).max(2.0 * mu * mu) {
        return ln_bessel_i_asymptotic(mu, z) - mu * (z * 0.5).ln();
    }
    // near the positive axis the power series loses little to cancellation
    if r - z.re < 12.0 && r <= 600.0 {
        return series(mu, z);
    }
    ln_bessel_i_integral(mu, z) - mu * (z * 0.5).ln()
}

const DEBYE_MIN_ORDER: f64 = 10.0;
const DEBYE_TERMS: usize = 14;

/// Dense coefficients of the Debye polynomials `U_k(p)`, generated from
/// `U_{k+1} = ½p²(1−p²)U_k' + ⅛∫_0^p (1−5t²)U_k(t)dt`.
fn debye_polynomials() -> &'static Vec<Vec<f64>> {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = vec![vec![1.0]];
        for k in 0..DEBYE_TERMS {
            let u = &out[k];
            let mut next = vec![0.0; u.len() + 3];
            // ½p²(1−p²)U'
            for (j, &c) in u.iter().enumerate().skip(1) {
                let dj = c * j as f64;
                next[j + 1] += 0.5 * dj;
                next[j + 3] -= 0.5 * dj;
            }
            // ⅛∫(1−5t²)U
            for (j, &c) in u.iter().enumerate() {
                next[j + 1] += 0.125 * c / (j as f64 + 1.0);
                next[j + 3] -= 0.625 * c / (j as f64 + 3.0);
            }
            while next.last() == Some(&0.0) {
                next.pop();
            }
            out.push(next);
        }
        out
    })
}

/// `log I_μ(z)` from the uniform large-order expansion of `I_μ(μw)`.
fn ln_bessel_i_debye(mu: f64, z: Complex64) -> Complex64 {
    let w = z / mu;
    let one = Complex64::new(1.0, 0.0);
    let s = (one + w * w).sqrt();
    let p = s.inv();
    let eta = s + (w / (one + s)).ln();
    let mut sum = one;
    let mut last = f64::INFINITY;
    let mut mu_pow = 1.0;
    for uk in debye_polynomials().iter().skip(1) {
        mu_pow *= mu;
        let val = uk.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * p + c);
        let term = val / mu_pow;
        let tn = term.norm();
        if tn > last {
            break;
        }
        last = tn;
        sum += term;
        if tn < 1e-17 {
            break;
        }
    }
    mu * eta - 0.5 * (2.0 * PI * mu).ln() - 0.5 * s.ln() + sum.ln()
}

fn series(mu: f64, z: Complex64) -> Complex64 {
    let q = z * z * 0.25;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for j in 0..500 {
        let jf = j as f64;
        term = term * q / ((jf + 1.0) * (mu + jf + 1.0));
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum.ln() - ln_gamma(mu + 1.0)
}

/// `log I_μ(z)` for large `|z|`, `Re z ≥ 0`, keeping the exponentially
/// small second branch that matters off the real axis.
fn ln_bessel_i_asymptotic(mu: f64, z: Complex64) -> Complex64 {
    let four_mu2 = 4.0 * mu * mu;
    let inv = z.inv();
    let mut a = 1.0f64;
    let mut pw = Complex64::new(1.0, 0.0);
    let mut s1 = Complex64::new(1.0, 0.0);
    let mut s2 = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (four_mu2 - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0);
        pw *= inv;
        let t = pw * a;
        let tn = t.norm();
        if tn > last || tn == 0.0 {
            break;
        }
        last = tn;
        if k % 2 == 1 {
            s1 -= t;
        } else {
            s1 += t;
        }
        s2 += t;
        if tn < 1e-17 {
            break;
        }
    }
    let sign = if z.im >= 0.0 { 1.0 } else { -1.0 };
    let phase = Complex64::from_polar(1.0, sign * PI * (mu + 0.5));
    let second = (-2.0 * z).exp() * phase * s2;
    z - 0.5 * (2.0 * PI * z).ln() + (s1 + second).ln()
}

/// `log I_μ(z)` from Schläfli's integral, `Re z > 0`:
/// `e^{−z} I_μ(z) = (1/π)∫_0^π e^{z(cos t−1)} cos(μt) dt
///                 − (sin μπ/π)∫_0^∞ e^{−z(1+cosh t)−μt} dt`.
fn ln_bessel_i_integral(mu: f64, z: Complex64) -> Complex64 {
    let (x, w) = gauss_legendre(24);
    let r = z.norm();
    let panels = 2 + ((z.im.abs() + mu.abs() + 2.0 * r.sqrt()) / 3.0).ceil() as usize;
    let h = PI / panels as f64;
    let mut first = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = h * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            let t = lo + 0.5 * h * (xi + 1.0);
            first += (z * (t.cos() - 1.0)).exp() * (mu * t).cos() * (0.5 * h * wi);
        }
    }
    first /= PI;
    let s = (mu * PI).sin();
    let mut second = Complex64::new(0.0, 0.0);
    if s.abs() > 1e-15 {
        // e^{−2z} factor: the integrand is at most e^{−2 Re z}
        let zr = z.re.max(1e-300);
        let t_max = ((40.0 / zr).max(0.0) + 1.0).acosh().max(1.0);
        let n_osc = (z.im.abs() * t_max.cosh() / PI).ceil() as usize;
        let panels2 = (8 + n_osc).min(20_000);
        let h2 = t_max / panels2 as f64;
        for p in 0..panels2 {
            let lo = h2 * p as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let t = lo + 0.5 * h2 * (xi + 1.0);
                second += (-z * (1.0 + t.cosh()) - mu * t).exp() * (0.5 * h2 * wi);
            }
        }
        second *= s / PI;
    }
    z + (first - second).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_phi_half(z: Complex64) -> Complex64 {
        // Φ_{1/2}(z) = (z/2)^{−1/2} √(2/(πz)) sinh z = 2 sinh z /(z √π)
        (2.0 * z.sinh() / (z * PI.sqrt())).ln()
    }

    fn ln_phi_three_halves(z: Complex64) -> Complex64 {
        // I_{3/2}(z) = √(2/(πz)) (cosh z − sinh z / z)
        let i = (2.0 / (PI * z)).sqrt() * (z.cosh() - z.sinh() / z);
        i.ln() - 1.5 * (z * 0.5).ln()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        let d = a - b;
        // compare modulo 2πi on the imaginary part
        let im = (d.im / (2.0 * PI)).round() * 2.0 * PI;
        (d.re.abs() < tol) && ((d.im - im).abs() < tol)
    }

    #[test]
    fn half_integer_orders_across_regions() {
        let pts = [
            Complex64::new(0.3, 0.1),
            Complex64::new(5.0, -3.0),
            Complex64::new(14.0, 2.0),
            Complex64::new(18.0, 6.0),
            Complex64::new(20.0, -12.0),
            Complex64::new(3.0, 19.0),
            Complex64::new(40.0, 10.0),
            Complex64::new(80.0, -50.0),
            Complex64::new(-7.0, 4.0),
        ];
        for z in pts {
            let got = ln_scaled_bessel_i(0.5, z);
            assert!(close(got, ln_phi_half(z), 1e-9), "mu=1/2 z={z}: {got}");
            let got = ln_scaled_bessel_i(1.5, z);
            assert!(
                close(got, ln_phi_three_halves(z), 1e-9),
                "mu=3/2 z={z}: {got} vs {}",
                ln_phi_three_halves(z)
            );
        }
    }

    #[test]
    fn regions_agree_for_generic_order() {
        // force each representation at a common point
        for mu in [0.3, 2.7, 7.2] {
            for z in [Complex64::new(20.0, 3.0), Complex64::new(16.0, -9.0)] {
                let a = series(mu, z);
                let b = ln_bessel_i_integral(mu, z) - mu * (z * 0.5).ln();
                assert!(close(a, b, 1e-9), "mu={mu} z={z}: {a} vs {b}");
            }
            let z = Complex64::new(60.0, 20.0);
            let b = ln_bessel_i_integral(mu, z);
            let c = ln_bessel_i_asymptotic(mu, z);
            assert!(close(b, c, 1e-9), "mu={mu}: {b} vs {c}");
        }
    }

    #[test]
    fn debye_matches_integral_for_large_order() {
        let u = debye_polynomials();
        assert!((u[1][1] - 3.0 / 24.0).abs() < 1e-15 && (u[1][3] + 5.0 / 24.0).abs() < 1e-15);
        assert!((u[2][2] - 81.0 / 1152.0).abs() < 1e-15 && (u[2][6] - 385.0 / 1152.0).abs() < 1e-15);
        for mu in [10.0, 12.3, 31.0, 80.0] {
            // the power series is reliable close to the positive axis
            for z in [
                Complex64::new(14.0, 3.0),
                Complex64::new(16.0, 2.0),
                Complex64::new(30.0, -12.0),
                Complex64::new(120.0, 40.0),
                Complex64::new(400.0, -30.0),
            ] {
                let a = ln_bessel_i_debye(mu, z) - mu * (z * 0.5).ln();
                let b = series(mu, z);
                assert!(close(a, b, 1e-10), "mu={mu} z={z}: {a} vs {b}");
            }
        }
        // the integral representation is accurate when |z| dominates μ²
        for (mu, z) in [(10.0, Complex64::new(120.0, 90.0)), (12.3, Complex64::new(200.0, -150.0))] {
            let a = ln_bessel_i_debye(mu, z);
            let b = ln_bessel_i_integral(mu, z);
            assert!(close(a, b, 1e-10), "mu={mu} z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn series_near_positive_axis() {
        for mu in [0.3, 4.0] {
            let z = Complex64::new(90.0, 20.0);
            let a = series(mu, z);
            let b = ln_bessel_i_integral(mu, z) - mu * (z * 0.5).ln();
            assert!(close(a, b, 1e-9), "mu={mu}: {a} vs {b}");
        }
    }

    #[test]
    fn bessel_k_half_integer() {
        // K_{1/2}(x) = √(π/(2x)) e^{−x}
        for x in [1e-6, 0.01, 0.5, 3.0, 40.0, 700.0] {
            let exact = 0.5 * (PI / (2.0 * x)).ln() - x;
            assert!((ln_bessel_k(0.5, x) - exact).abs() < 1e-10, "x={x}");
            // K_{5/2}(x) = √(π/(2x)) e^{−x} (1 + 3/x + 3/x²)
            let exact = exact + (1.0 + 3.0 / x + 3.0 / (x * x)).ln();
            assert!((ln_bessel_k(2.5, x) - exact).abs() < 1e-10, "x={x}");
        }
        // large order, small argument
        let x: f64 = 1e-3;
        let nu = 20.5;
        let approx = ln_gamma(nu) + (nu - 1.0) * 2f64.ln() - nu * x.ln();
        assert!((ln_bessel_k(nu, x) - approx).abs() < 1e-4);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        let v = norm_cdf(1.959963984540054);
        assert!((v - 0.975).abs() < 1e-11, "{v}");
        assert!(norm_cdf(-40.0) >= 0.0);
    }
}
