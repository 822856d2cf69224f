//! Python bindings for the `ajdx` crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ajdx::apps::{self, AppError, GateMode};
use ajdx::inference::{self, InferenceError, Method, TimeSeries};
use ajdx::oracle;
use ajdx::poly::MultiIndex;

fn app_err(e: AppError) -> PyErr {
    match e {
        AppError::Gate { .. } | AppError::Invalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn inf_err(e: InferenceError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn gate_mode(enforce: bool) -> GateMode {
    if enforce {
        GateMode::Enforce
    } else {
        GateMode::Report
    }
}

fn method(s: &str) -> PyResult<Method> {
    s.parse().map_err(PyValueError::new_err)
}

/// Basic affine jump-diffusion parameters (κθ, κ, σ, l, ν).
#[pyclass(name = "BajdParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyBajdParams(apps::BajdParams);

#[pymethods]
impl PyBajdParams {
    #[new]
    fn new(kappa_theta: f64, kappa: f64, sigma: f64, l: f64, nu: f64) -> PyResult<Self> {
        apps::BajdParams::new(kappa_theta, kappa, sigma, l, nu).map(Self).map_err(value_err)
    }

    #[getter]
    fn kappa_theta(&self) -> f64 {
        self.0.kappa_theta
    }
    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn l(&self) -> f64 {
        self.0.l
    }
    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu
    }

    fn stationary_mean(&self) -> f64 {
        self.0.stationary_mean()
    }

    fn feller(&self) -> bool {
        self.0.feller()
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "BajdParams(kappa_theta={}, kappa={}, sigma={}, l={}, nu={})",
            p.kappa_theta, p.kappa, p.sigma, p.l, p.nu
        )
    }
}

/// Heston parameters (κ_V, κθ_V, σ, κθ_X, ρ).
#[pyclass(name = "HestonParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyHestonParams(apps::HestonParams);

#[pymethods]
impl PyHestonParams {
    #[new]
    fn new(kappa_v: f64, kappa_theta_v: f64, sigma: f64, kappa_theta_x: f64, rho: f64) -> PyResult<Self> {
        apps::HestonParams::new(kappa_v, kappa_theta_v, sigma, kappa_theta_x, rho)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn kappa_v(&self) -> f64 {
        self.0.kappa_v
    }
    #[getter]
    fn kappa_theta_v(&self) -> f64 {
        self.0.kappa_theta_v
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }
    #[getter]
    fn kappa_theta_x(&self) -> f64 {
        self.0.kappa_theta_x
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.0.rho
    }

    fn feller(&self) -> bool {
        self.0.feller()
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "HestonParams(kappa_v={}, kappa_theta_v={}, sigma={}, kappa_theta_x={}, rho={})",
            p.kappa_v, p.kappa_theta_v, p.sigma, p.kappa_theta_x, p.rho
        )
    }
}

/// A fitted expansion with the regularity checks made for it.
#[pyclass(name = "Expansion", frozen)]
struct PyExpansion(apps::FittedExpansion);

#[pymethods]
impl PyExpansion {
    #[getter]
    fn order(&self) -> u32 {
        self.0.expansion.order
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.expansion.dim()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.expansion.warnings.clone()
    }

    /// `[(name, inequality, lhs, rhs, passed)]`
    fn gates(&self) -> Vec<(String, String, f64, f64, bool)> {
        self.0
            .gates
            .iter()
            .map(|g| (g.name.clone(), g.inequality.clone(), g.lhs, g.rhs, g.passed))
            .collect()
    }

    /// `[(alpha, c_alpha)]` in basis order.
    fn coefficients(&self) -> Vec<(Vec<u32>, f64)> {
        let e = &self.0.expansion;
        e.basis
            .indices
            .iter()
            .zip(&e.coeffs)
            .map(|(a, &c)| (a.entries().to_vec(), c))
            .collect()
    }

    fn coefficient(&self, alpha: Vec<u32>) -> Option<f64> {
        self.0.expansion.coefficient(&MultiIndex::new(alpha))
    }

    /// Density at a point of the state space.
    fn density(&self, y: Vec<f64>) -> PyResult<f64> {
        if y.len() != self.0.expansion.dim() {
            return Err(PyValueError::new_err(format!(
                "expected a point of dimension {}",
                self.0.expansion.dim()
            )));
        }
        Ok(self.0.expansion.density(&y))
    }

    fn cdf(&self, y: f64) -> PyResult<f64> {
        self.0.expansion.cdf(y).map_err(value_err)
    }

    fn mgf(&self, a: f64) -> PyResult<f64> {
        self.0.expansion.mgf(a).map_err(value_err)
    }

    fn mean(&self) -> PyResult<Vec<f64>> {
        self.0.expansion.mean().map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.0.expansion.to_json()
    }
}

#[pyfunction]
#[pyo3(signature = (params, y0, dt, order, enforce = true))]
fn bajd_expansion(params: &PyBajdParams, y0: f64, dt: f64, order: u32, enforce: bool) -> PyResult<PyExpansion> {
    apps::bajd_expansion(&params.0, y0, dt, order, gate_mode(enforce))
        .map(PyExpansion)
        .map_err(app_err)
}

/// Expansion of `∫_0^T Y_s ds` given `Y_0 = y0`.
#[pyfunction]
#[pyo3(signature = (params, y0, horizon, order, enforce = true))]
fn integrated_bajd_expansion(
    params: &PyBajdParams,
    y0: f64,
    horizon: f64,
    order: u32,
    enforce: bool,
) -> PyResult<PyExpansion> {
    apps::integrated_bajd_expansion(&params.0, y0, horizon, order, gate_mode(enforce))
        .map(PyExpansion)
        .map_err(app_err)
}

/// Joint expansion of `(V_Δ, X_Δ)`.
#[pyfunction]
#[pyo3(signature = (params, x0, v0, dt, order, enforce = true))]
fn heston_expansion(
    params: &PyHestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    order: u32,
    enforce: bool,
) -> PyResult<PyExpansion> {
    apps::heston_expansion(&params.0, x0, v0, dt, order, gate_mode(enforce))
        .map(PyExpansion)
        .map_err(app_err)
}

/// Oracle transition density of the BAJD on `ys`.
#[pyfunction]
fn bajd_oracle_density(params: &PyBajdParams, y0: f64, dt: f64, ys: Vec<f64>) -> PyResult<Vec<f64>> {
    let d = oracle::bajd_density(&params.0, y0, dt).map_err(value_err)?;
    Ok(ys.iter().map(|&y| d.density(y)).collect())
}

/// Oracle density of `∫_0^T Y_s ds` on `zs`.
#[pyfunction]
fn integrated_bajd_oracle_density(params: &PyBajdParams, y0: f64, horizon: f64, zs: Vec<f64>) -> PyResult<Vec<f64>> {
    let d = oracle::integrated_bajd_density(&params.0, y0, horizon).map_err(value_err)?;
    Ok(zs.iter().map(|&z| d.density(z)).collect())
}

/// Call price on `e^{X_Δ}` by expansion, as `(price, H_A, H_B)`.
#[pyfunction]
#[pyo3(signature = (params, x0, v0, dt, strike, r, order, enforce = true))]
#[allow(clippy::too_many_arguments)]
fn price_call(
    params: &PyHestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    strike: f64,
    r: f64,
    order: u32,
    enforce: bool,
) -> PyResult<(f64, f64, f64)> {
    let c = apps::price_call(&params.0, x0, v0, dt, strike, r, order, gate_mode(enforce)).map_err(app_err)?;
    Ok((c.price, c.ha, c.hb))
}

#[pyfunction]
fn oracle_call(params: &PyHestonParams, x0: f64, v0: f64, dt: f64, strike: f64, r: f64) -> PyResult<f64> {
    apps::oracle_call(&params.0, x0, v0, dt, strike, r).map_err(app_err)
}

#[pyfunction]
fn implied_vol(price: f64, s0: f64, strike: f64, r: f64, t: f64) -> Option<f64> {
    apps::implied_vol(price, s0, strike, r, t)
}

/// Number-of-defaults pmf for independent defaults.
#[pyfunction]
fn asb_recursion(qs: Vec<f64>) -> PyResult<Vec<f64>> {
    apps::asb_recursion(&qs).map_err(app_err)
}

/// Exact BAJD path `Y_Δ, …, Y_{nΔ}` started at `y0`.
#[pyfunction]
fn simulate_bajd(params: &PyBajdParams, y0: f64, dt: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let ts = inference::simulate_bajd_exact(&params.0, y0, dt, n, seed).map_err(inf_err)?;
    Ok(ts.column(0))
}

/// Heston path as `[(V, X)]`.
#[pyfunction]
#[pyo3(signature = (params, x0, v0, dt, n, seed, substeps = 20))]
fn simulate_heston(
    params: &PyHestonParams,
    x0: f64,
    v0: f64,
    dt: f64,
    n: usize,
    seed: u64,
    substeps: usize,
) -> PyResult<Vec<(f64, f64)>> {
    let ts = inference::simulate_heston(&params.0, x0, v0, dt, n, substeps, seed).map_err(inf_err)?;
    Ok(ts.column(0).into_iter().zip(ts.column(1)).collect())
}

/// BAJD log-likelihood of `ys` given `y0`; `method` is `oracle`, `qml`,
/// `expansion` or `expansion:J`.
#[pyfunction]
#[pyo3(signature = (params, y0, dt, ys, method = "oracle"))]
fn bajd_log_likelihood(params: &PyBajdParams, y0: f64, dt: f64, ys: Vec<f64>, method: &str) -> PyResult<f64> {
    let data = TimeSeries::new(dt, vec![y0], ys.into_iter().map(|y| vec![y]).collect()).map_err(inf_err)?;
    let ll = inference::bajd_log_likelihood(&params.0, &data, self::method(method)?).map_err(inf_err)?;
    Ok(ll.value)
}

/// Two-sample Kolmogorov–Smirnov test as `(statistic, p_value)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = inference::ks_two_sample(&a, &b).map_err(inf_err)?;
    Ok((r.statistic, r.p_value))
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    ajdx::cli::main_with(std::iter::once("ajdx".to_string()).chain(args))
}

#[pymodule]
fn ajdx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBajdParams>()?;
    m.add_class::<PyHestonParams>()?;
    m.add_class::<PyExpansion>()?;
    m.add_function(wrap_pyfunction!(bajd_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(integrated_bajd_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(heston_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(bajd_oracle_density, m)?)?;
    m.add_function(wrap_pyfunction!(integrated_bajd_oracle_density, m)?)?;
    m.add_function(wrap_pyfunction!(price_call, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_call, m)?)?;
    m.add_function(wrap_pyfunction!(implied_vol, m)?)?;
    m.add_function(wrap_pyfunction!(asb_recursion, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_bajd, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_heston, m)?)?;
    m.add_function(wrap_pyfunction!(bajd_log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
