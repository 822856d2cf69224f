//! Command-line front end. Every command writes its tables into `--out`
//! together with `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::affine::{check_density_existence, conditional_moments};
use crate::apps::{
    bajd_expansion, call_from_expansion, heston_expansion_with, heston_marginal_expansion, implied_vol,
    integrated_bajd_expansion, portfolio_loss, AppError, FittedExpansion, GateMode,
};
use crate::config::{Config, ConfigError, GridSpec, ModelKind, ModelSpec};
use crate::inference::{
    mle_fit, posterior_sample, simulate_bajd_exact, simulate_heston, Family, InferenceError, Method, TimeSeries,
};
use crate::oracle::{self, CosDensity, OracleError};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failed regularity gates.
pub const EXIT_GATE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 1;

const DEFAULT_ORDER: u32 = 4;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_POINTS: usize = 201;
const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "ajdx", version, about = "Polynomial density expansions for affine jump-diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Oracle,
    Expansion,
    Qml,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML or JSON configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Expansion order.
    #[arg(long = "J")]
    pub order: Option<u32>,
    /// Evaluation grid `start:end:count`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Log-strike grid `start:end:count`.
    #[arg(long)]
    pub strikes: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Number of simulated datasets.
    #[arg(long)]
    pub datasets: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conditional moments of the state.
    Moments(Common),
    /// Fit an expansion and write it as JSON.
    Expand {
        #[command(flatten)]
        common: Common,
        /// Also write the coefficients `c_α` on their own.
        #[arg(long)]
        emit_coeffs: bool,
    },
    /// Expansion and oracle densities on a grid.
    Density(Common),
    /// Call prices and implied volatilities by expansion and oracle.
    Price(Common),
    /// Portfolio default-count distribution.
    Loss(Common),
    /// Maximum likelihood estimates.
    Fit(Common),
    /// Random-walk Metropolis posterior draws.
    Posterior(Common),
    /// Simulated time series.
    Simulate(Common),
    /// Oracle-versus-expansion error curves.
    Validate(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Moments(c) => ("moments", c),
            Command::Expand { common, .. } => ("expand", common),
            Command::Density(c) => ("density", c),
            Command::Price(c) => ("price", c),
            Command::Loss(c) => ("loss", c),
            Command::Fit(c) => ("fit", c),
            Command::Posterior(c) => ("posterior", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Validate(c) => ("validate", c),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Gate(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Gate(_) => EXIT_GATE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AppError> for CliError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Gate { .. } => CliError::Gate(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::App(a) => a.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::affine::AffineError> for CliError {
    fn from(e: crate::affine::AffineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::expand::ExpandError> for CliError {
    fn from(e: crate::expand::ExpandError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn unsupported(command: &str, kind: ModelKind, supported: &[&str]) -> CliError {
    config_error(format!(
        "command `{command}` does not support model kind {}; use one of {}",
        kind.name(),
        supported.join(", ")
    ))
}

/// Shortest round-trip representation, `nan` for undefined values.
fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

fn ln_ratio(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        a.ln() - b.ln()
    } else {
        f64::NAN
    }
}

/// Points where the oracle density is at least this fraction of its peak
/// on the grid count towards the bulk error.
pub const BULK_FRACTION: f64 = 1e-3;

/// Sup of `|err|` over all finite entries and over the bulk of `oracle`.
fn sup_errors(oracle: &[f64], err: &[f64]) -> (f64, f64) {
    let peak = oracle.iter().copied().fold(0.0, f64::max);
    let (mut all, mut bulk) = (0.0f64, 0.0f64);
    for (o, e) in oracle.iter().zip(err) {
        if e.is_finite() {
            all = all.max(e.abs());
            if *o >= BULK_FRACTION * peak {
                bulk = bulk.max(e.abs());
            }
        }
    }
    (all, bulk)
}

/// Resolved options shared by the commands.
struct Run<'a> {
    cfg: &'a Config,
    common: &'a Common,
    out: PathBuf,
    outputs: Vec<String>,
    summary: BTreeMap<String, Value>,
}

impl Run<'_> {
    fn order(&self) -> u32 {
        self.common.order.or(self.cfg.raw.run.order).unwrap_or(DEFAULT_ORDER)
    }

    fn seed(&self) -> u64 {
        self.common.seed.or(self.cfg.raw.run.seed).unwrap_or(DEFAULT_SEED)
    }

    fn mode(&self) -> GateMode {
        self.cfg.gate_mode()
    }

    fn dt(&self) -> Result<f64, CliError> {
        self.cfg
            .raw
            .run
            .dt
            .ok_or_else(|| config_error(format!("{}: missing key `dt` in [run]", self.cfg.source)))
    }

    fn method(&self) -> Result<Method, CliError> {
        let j = self.order();
        Ok(match self.common.method {
            Some(MethodArg::Oracle) => Method::Oracle,
            Some(MethodArg::Qml) => Method::Qml,
            Some(MethodArg::Expansion) => Method::Expansion(j),
            None => match &self.cfg.raw.run.method {
                Some(s) => match s.parse::<Method>().map_err(config_error)? {
                    Method::Expansion(_) if self.common.order.is_some() => Method::Expansion(j),
                    m => m,
                },
                None => Method::Oracle,
            },
        })
    }

    fn datasets(&self) -> usize {
        self.common.datasets.unwrap_or(self.cfg.raw.data.datasets).max(1)
    }

    fn grid(&self, flag: &Option<String>, key: &Option<String>, name: &str) -> Result<Option<GridSpec>, CliError> {
        match flag {
            Some(s) => GridSpec::parse(s).map(Some).map_err(|e| config_error(format!("--{name}: {e}"))),
            None => Ok(key.as_deref().map(|s| GridSpec::parse(s).expect("validated with the configuration"))),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.path(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        self.write_text(name, &s)
    }

    fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, key: &str, v: Value) {
        self.summary.insert(key.to_string(), v);
    }
}

fn state_names(spec: &ModelSpec) -> Vec<String> {
    match spec {
        ModelSpec::Bajd { .. } => vec!["y".into()],
        ModelSpec::IntegratedBajd { .. } => vec!["y".into(), "z".into()],
        ModelSpec::Heston { .. } => vec!["v".into(), "x".into()],
        ModelSpec::Generic { model, .. } => (1..=model.dim()).map(|i| format!("x{i}")).collect(),
    }
}

fn fit_expansion(run: &Run, order: u32) -> Result<FittedExpansion, CliError> {
    let dt = run.dt()?;
    let mode = run.mode();
    let weight = run.cfg.raw.run.weight.unwrap_or_default();
    Ok(match &run.cfg.model {
        ModelSpec::Bajd { params, y0 } => bajd_expansion(params, *y0, dt, order, mode)?,
        ModelSpec::IntegratedBajd { params, y0 } => integrated_bajd_expansion(params, *y0, dt, order, mode)?,
        ModelSpec::Heston { params, v0, x0 } => heston_expansion_with(params, *x0, *v0, dt, order, mode, weight)?,
        ModelSpec::Generic { .. } => return Err(unsupported("expand", ModelKind::GenericAffine, &["bajd", "integrated_bajd", "heston"])),
    })
}

/// Scalar expansion and oracle density of the plotted coordinate.
fn scalar_pair(run: &Run, order: u32, command: &str) -> Result<(FittedExpansion, CosDensity), CliError> {
    let dt = run.dt()?;
    let mode = run.mode();
    Ok(match &run.cfg.model {
        ModelSpec::Bajd { params, y0 } => (
            bajd_expansion(params, *y0, dt, order, mode)?,
            oracle::bajd_density(params, *y0, dt)?,
        ),
        ModelSpec::IntegratedBajd { params, y0 } => (
            integrated_bajd_expansion(params, *y0, dt, order, mode)?,
            oracle::integrated_bajd_density(params, *y0, dt)?,
        ),
        ModelSpec::Heston { params, v0, x0 } => (
            heston_marginal_expansion(params, *x0, *v0, dt, order, mode)?,
            oracle::heston_marginal_density(params, *v0, *x0, dt)?,
        ),
        ModelSpec::Generic { .. } => {
            return Err(unsupported(command, ModelKind::GenericAffine, &["bajd", "integrated_bajd", "heston"]))
        }
    })
}

/// `mean ± 6 sd` of the plotted coordinate, clipped for nonnegative laws.
fn default_grid(run: &Run) -> Result<GridSpec, CliError> {
    let dt = run.dt()?;
    let spec = &run.cfg.model;
    let (coord, nonneg) = match spec {
        ModelSpec::Bajd { .. } => (0, true),
        ModelSpec::IntegratedBajd { .. } => (1, true),
        _ => (1, false),
    };
    let model = spec.affine_model();
    let x0 = spec.initial_state();
    let mom = conditional_moments(&model, &x0, dt, 2)?;
    let d = model.dim();
    let m1 = mom.get(&crate::poly::MultiIndex::unit(d, coord, 1)).unwrap_or(f64::NAN);
    let m2 = mom.get(&crate::poly::MultiIndex::unit(d, coord, 2)).unwrap_or(f64::NAN);
    let sd = (m2 - m1 * m1).max(0.0).sqrt();
    let (mut lo, hi) = (m1 - 6.0 * sd, m1 + 6.0 * sd);
    if nonneg {
        lo = lo.max((hi - lo.max(0.0)) / (DEFAULT_POINTS as f64 * 2.0));
    }
    if !(hi > lo) {
        return Err(CliError::Runtime(format!("degenerate default grid around mean {m1}")));
    }
    Ok(GridSpec {
        start: lo,
        end: hi,
        count: DEFAULT_POINTS,
    })
}

fn cmd_moments(run: &mut Run) -> Result<(), CliError> {
    let dt = run.dt()?;
    let j = run.order();
    let model = run.cfg.model.affine_model();
    let x0 = run.cfg.model.initial_state();
    let mom = conditional_moments(&model, &x0, dt, j)?;
    let names = state_names(&run.cfg.model);
    let mut header: Vec<String> = names.iter().map(|n| format!("power_{n}")).collect();
    header.push("moment".into());
    let rows: Vec<Vec<String>> = mom
        .values
        .iter()
        .map(|(a, v)| a.entries().iter().map(|e| e.to_string()).chain([num(*v)]).collect())
        .collect();
    run.write_csv("moments.csv", &header, &rows)?;
    run.note("order", json!(j));
    Ok(())
}

fn coefficients_json(e: &crate::expand::Expansion) -> Value {
    let list: Vec<Value> = e
        .basis
        .indices
        .iter()
        .zip(&e.coeffs)
        .map(|(a, c)| json!({"alpha": a.entries(), "c": c}))
        .collect();
    json!({"order": e.order, "coefficients": list})
}

fn cmd_expand(run: &mut Run, emit_coeffs: bool) -> Result<(), CliError> {
    let j = run.order();
    let fit = fit_expansion(run, j)?;
    run.write_json(
        "expansion.json",
        &json!({"model": run.cfg.model.kind().name(), "order": j, "gates": fit.gates, "expansion": fit.expansion}),
    )?;
    if emit_coeffs {
        run.write_json("coeffs.json", &coefficients_json(&fit.expansion))?;
    }
    let failed: Vec<String> = fit.gates.iter().filter(|g| !g.passed).map(|g| g.describe()).collect();
    run.note("failed_gates", json!(failed));
    Ok(())
}

fn cmd_density(run: &mut Run) -> Result<(), CliError> {
    let j = run.order();
    let (fit, oracle) = scalar_pair(run, j, "density")?;
    let grid = match run.grid(&run.common.grid, &run.cfg.raw.run.grid, "grid")? {
        Some(g) => g,
        None => default_grid(run)?,
    };
    let e = &fit.expansion;
    let xs = grid.points();
    let g: Vec<f64> = xs.iter().map(|&x| e.density_1d(x)).collect();
    let o: Vec<f64> = xs.iter().map(|&x| oracle.density(x)).collect();
    let d: Vec<f64> = g.iter().zip(&o).map(|(a, b)| ln_ratio(*a, *b)).collect();
    let (sup, bulk) = sup_errors(&o, &d);
    let rows: Vec<Vec<String>> = (0..xs.len()).map(|i| vec![num(xs[i]), num(g[i]), num(o[i]), num(d[i])]).collect();
    let header = ["xi", "g_expansion", "g_oracle", "log_diff"].map(String::from);
    run.write_csv("density.csv", &header, &rows)?;
    run.note("order", json!(j));
    run.note("sup_abs_log_diff", json!(sup));
    run.note("bulk_sup_abs_log_diff", json!(bulk));
    Ok(())
}

fn heston_parts(run: &Run, command: &str) -> Result<(crate::apps::HestonParams, f64, f64), CliError> {
    match &run.cfg.model {
        ModelSpec::Heston { params, v0, x0 } => Ok((*params, *v0, *x0)),
        m => Err(unsupported(command, m.kind(), &["heston"])),
    }
}

/// Call prices by expansion at `order` and by the oracle over log-strikes.
fn price_table(run: &Run, orders: &[u32]) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>, f64), CliError> {
    let (p, v0, x0) = heston_parts(run, "price")?;
    let dt = run.dt()?;
    let r = run.cfg.raw.run.rate.unwrap_or(p.kappa_theta_x);
    let grid = match run.grid(&run.common.strikes, &run.cfg.raw.run.strikes, "strikes")? {
        Some(g) => g,
        None => return Err(config_error(format!("{}: give --strikes or `strikes` in [run]", run.cfg.source))),
    };
    let logk = grid.points();
    let mut by_order = Vec::new();
    for &j in orders {
        let e = heston_marginal_expansion(&p, x0, v0, dt, j, run.mode())?.expansion;
        let prices = logk
            .iter()
            .map(|k| call_from_expansion(&e, k.exp(), r, dt).map(|c| c.price))
            .collect::<Result<Vec<_>, _>>()?;
        by_order.push(prices);
    }
    let dens = oracle::heston_marginal_density(&p, v0, x0, dt)?;
    let df = (-r * dt).exp();
    let exact = logk.iter().map(|k| df * dens.call_payoff(k.exp())).collect();
    Ok((logk, by_order, exact, r))
}

fn iv(run: &Run, price: f64, logk: f64, r: f64) -> Result<f64, CliError> {
    let (_, _, x0) = heston_parts(run, "price")?;
    Ok(implied_vol(price, x0.exp(), logk.exp(), r, run.dt()?).unwrap_or(f64::NAN))
}

fn cmd_price(run: &mut Run) -> Result<(), CliError> {
    let j = run.order();
    let (logk, by_order, exact, r) = price_table(run, &[j])?;
    let mut rows = Vec::with_capacity(logk.len());
    let mut sup: f64 = 0.0;
    for (i, &k) in logk.iter().enumerate() {
        let (c, o) = (by_order[0][i], exact[i]);
        let (ivj, ivo) = (iv(run, c, k, r)?, iv(run, o, k, r)?);
        if (ivj - ivo).is_finite() {
            sup = sup.max((ivj - ivo).abs());
        }
        rows.push(vec![num(k), num(c), num(o), num(ivj), num(ivo)]);
    }
    let header = ["logK", "C_expansion", "C_oracle", "IV_expansion", "IV_oracle"].map(String::from);
    run.write_csv("price.csv", &header, &rows)?;
    run.note("order", json!(j));
    run.note("rate", json!(r));
    run.note("sup_abs_iv_diff", json!(sup));
    Ok(())
}

fn cmd_loss(run: &mut Run) -> Result<(), CliError> {
    let Some((portfolio, t, maturity)) = run.cfg.portfolio.clone() else {
        return Err(config_error(format!("{}: command `loss` needs a [credit] section", run.cfg.source)));
    };
    let j = run.order();
    let dist = portfolio_loss(&portfolio, t, maturity, j, run.mode())?;
    let rows: Vec<Vec<String>> = dist.pmf.iter().enumerate().map(|(k, p)| vec![k.to_string(), num(*p)]).collect();
    run.write_csv("loss.csv", &["defaults".to_string(), "probability".to_string()], &rows)?;
    run.note("order", json!(j));
    run.note("negative_mass", json!(dist.negative_mass));
    run.note("warnings", json!(dist.warnings));
    Ok(())
}

fn family_parts(run: &Run, command: &str) -> Result<(Family, Vec<f64>), CliError> {
    match (run.cfg.model.family(), run.cfg.model.theta()) {
        (Some(f), Some(t)) => Ok((f, t)),
        _ => Err(unsupported(command, run.cfg.model.kind(), &["bajd", "heston"])),
    }
}

/// Simulated series `i`, with the burn-in dropped, or the configured file.
fn dataset(run: &Run, i: usize) -> Result<TimeSeries, CliError> {
    let data = &run.cfg.raw.data;
    let dt = run.dt()?;
    if let Some(p) = &data.path {
        let base = run.cfg_dir();
        return Ok(TimeSeries::from_path(&base.join(p), dt)?);
    }
    let seed = run.seed().wrapping_add(i as u64);
    let total = data.burn_in + data.n;
    let full = match &run.cfg.model {
        ModelSpec::Bajd { params, y0 } => simulate_bajd_exact(params, *y0, dt, total, seed)?,
        ModelSpec::Heston { params, v0, x0 } => simulate_heston(params, *x0, *v0, dt, total, data.substeps, seed)?,
        m => return Err(unsupported("simulate", m.kind(), &["bajd", "heston"])),
    };
    if data.burn_in == 0 {
        return Ok(full);
    }
    let x0 = full.values[data.burn_in - 1].clone();
    Ok(TimeSeries::new(dt, x0, full.values[data.burn_in..].to_vec())?)
}

impl Run<'_> {
    fn cfg_dir(&self) -> PathBuf {
        self.common
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    fn dataset_count(&self) -> usize {
        if self.cfg.raw.data.path.is_some() {
            1
        } else {
            self.datasets()
        }
    }
}

fn cmd_simulate(run: &mut Run) -> Result<(), CliError> {
    let (family, _) = family_parts(run, "simulate")?;
    let n = run.datasets();
    let names = family.state_names();
    for i in 0..n {
        let s = dataset(run, i)?;
        let name = if n == 1 { "series.csv".to_string() } else { format!("series_{i:03}.csv") };
        let mut buf = Vec::new();
        s.write_csv(&mut buf, names)?;
        run.write_text(&name, &String::from_utf8(buf).expect("CSV is UTF-8"))?;
    }
    run.note("datasets", json!(n));
    Ok(())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

fn cmd_fit(run: &mut Run) -> Result<(), CliError> {
    let (family, truth) = family_parts(run, "fit")?;
    let method = run.method()?;
    let n = run.dataset_count();
    let mut header = vec!["dataset".to_string()];
    header.extend(family.names().iter().map(|s| s.to_string()));
    header.extend(["log_likelihood", "success", "iterations", "evaluations", "gradient_norm"].map(String::from));
    let mut rows = Vec::with_capacity(n);
    let mut estimates = Vec::with_capacity(n);
    let mut successes = 0;
    for i in 0..n {
        let data = dataset(run, i)?;
        let r = mle_fit(family, &data, method, &truth, &run.cfg.raw.mle)?;
        let mut row = vec![i.to_string()];
        row.extend(r.estimate.iter().map(|v| num(*v)));
        row.extend([
            num(r.log_likelihood),
            r.success.to_string(),
            r.iterations.to_string(),
            r.evaluations.to_string(),
            num(r.gradient_norm),
        ]);
        rows.push(row);
        successes += r.success as usize;
        estimates.push(r.estimate);
    }
    run.write_csv("fit.csv", &header, &rows)?;
    let mut params = BTreeMap::new();
    for (k, name) in family.names().iter().enumerate() {
        let col: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
        let (m, sd) = mean_sd(&col);
        params.insert(name.to_string(), json!({"mean": m, "sd": sd, "bias": m - truth[k], "start": truth[k]}));
    }
    run.note("method", json!(method.to_string()));
    run.note("datasets", json!(n));
    run.note("successes", json!(successes));
    run.note("parameters", json!(params));
    Ok(())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

fn cmd_posterior(run: &mut Run) -> Result<(), CliError> {
    let (family, truth) = family_parts(run, "posterior")?;
    let method = run.method()?;
    let data = dataset(run, 0)?;
    let prior = run.cfg.prior.clone().expect("bajd and heston configurations carry a prior");
    let cfg = run.cfg.raw.mcmc.rwm(run.seed());
    let chain = posterior_sample(&prior, &data, method, &truth, &cfg)?;
    let mut header = vec!["draw".to_string()];
    header.extend(family.names().iter().map(|s| s.to_string()));
    header.push("log_target".into());
    let rows: Vec<Vec<String>> = chain
        .draws
        .iter()
        .zip(&chain.log_target)
        .enumerate()
        .map(|(i, (d, lp))| std::iter::once(i.to_string()).chain(d.iter().map(|v| num(*v))).chain([num(*lp)]).collect())
        .collect();
    run.write_csv("chain.csv", &header, &rows)?;
    let mut params = BTreeMap::new();
    for (k, name) in family.names().iter().enumerate() {
        let mut col = chain.column(k);
        let (m, sd) = mean_sd(&col);
        col.sort_by(f64::total_cmp);
        params.insert(
            name.to_string(),
            json!({"mean": m, "sd": sd, "q025": quantile(&col, 0.025), "median": quantile(&col, 0.5), "q975": quantile(&col, 0.975)}),
        );
    }
    run.note("method", json!(method.to_string()));
    run.note("acceptance_rate", json!(chain.acceptance_rate));
    run.note("burn_in_acceptance", json!(chain.burn_in_acceptance));
    run.note("draws", json!(chain.draws.len()));
    run.note("parameters", json!(params));
    Ok(())
}

fn cmd_validate(run: &mut Run) -> Result<(), CliError> {
    let j = run.order();
    match run.cfg.model.clone() {
        ModelSpec::Generic { model, .. } => {
            let r = check_density_existence(&model);
            run.note("density_exists", json!(r.density_exists));
            run.note("kcal_full_rank", json!(r.kcal_full_rank));
            run.note("smoothness_p", json!(r.smoothness_p.as_option()));
            run.note("smoothness_bound", json!(r.smoothness_bound));
            Ok(())
        }
        ModelSpec::Heston { .. } => {
            let orders = [2, j];
            let (logk, by_order, exact, r) = price_table(run, &orders)?;
            let mut rows = Vec::new();
            let mut sup = [0.0f64; 2];
            for (i, &k) in logk.iter().enumerate() {
                let ivo = iv(run, exact[i], k, r)?;
                let mut row = vec![num(k), num(ivo)];
                let mut errs = Vec::new();
                for (s, p) in by_order.iter().enumerate() {
                    let v = iv(run, p[i], k, r)?;
                    let e = v - ivo;
                    if e.is_finite() {
                        sup[s] = sup[s].max(e.abs());
                    }
                    row.push(num(v));
                    errs.push(num(e));
                }
                row.extend(errs);
                rows.push(row);
            }
            let header = ["logK", "IV_oracle", "IV_2", &format!("IV_{j}"), "IV_err_2", &format!("IV_err_{j}")]
                .map(String::from);
            run.write_csv("validate.csv", &header, &rows)?;
            run.note("sup_abs_iv_err", json!({"2": sup[0], j.to_string(): sup[1]}));
            Ok(())
        }
        spec => {
            let (low, _) = scalar_pair(run, 2, "validate")?;
            let (high, oracle) = scalar_pair(run, j, "validate")?;
            let grid = match run.grid(&run.common.grid, &run.cfg.raw.run.grid, "grid")? {
                Some(g) => g,
                None => default_grid(run)?,
            };
            let xs = grid.points();
            let o: Vec<f64> = xs.iter().map(|&x| oracle.density(x)).collect();
            let g2: Vec<f64> = xs.iter().map(|&x| low.expansion.density_1d(x)).collect();
            let gj: Vec<f64> = xs.iter().map(|&x| high.expansion.density_1d(x)).collect();
            let e2: Vec<f64> = g2.iter().zip(&o).map(|(a, b)| ln_ratio(*a, *b)).collect();
            let ej: Vec<f64> = gj.iter().zip(&o).map(|(a, b)| ln_ratio(*a, *b)).collect();
            let rows: Vec<Vec<String>> = (0..xs.len())
                .map(|i| vec![num(xs[i]), num(o[i]), num(g2[i]), num(gj[i]), num(e2[i]), num(ej[i])])
                .collect();
            let (s2, b2) = sup_errors(&o, &e2);
            let (sj, bj) = sup_errors(&o, &ej);
            let header = ["xi", "g_oracle", "g_2", &format!("g_{j}"), "log_err_2", &format!("log_err_{j}")]
                .map(String::from);
            run.write_csv("validate.csv", &header, &rows)?;
            run.note("sup_abs_log_err", json!({"2": s2, j.to_string(): sj}));
            run.note("bulk_sup_abs_log_err", json!({"2": b2, j.to_string(): bj}));
            if let ModelSpec::IntegratedBajd { params, y0 } = spec {
                let dt = run.dt()?;
                let points = run.cfg.raw.run.mgf_points.clone().unwrap_or(vec![-10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0]);
                let mut rows = Vec::new();
                for a in points {
                    let exact = oracle::integrated_mgf(&params.model(), a, y0, dt)?;
                    let l2 = low.expansion.mgf(a).map(|v| ln_ratio(v, exact)).unwrap_or(f64::NAN);
                    let lj = high.expansion.mgf(a).map(|v| ln_ratio(v, exact)).unwrap_or(f64::NAN);
                    rows.push(vec![num(a), num(exact.ln()), num(l2), num(lj)]);
                }
                let header = ["a", "log_mgf_oracle", "log_err_2", &format!("log_err_{j}")].map(String::from);
                run.write_csv("mgf.csv", &header, &rows)?;
            }
            Ok(())
        }
    }
}

/// Runs a parsed command line and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    let (name, common) = cli.command.parts();
    let cfg = Config::from_path(&common.config)?;
    if let Some(j) = common.order {
        if j > crate::expand::MAX_ORDER {
            return Err(config_error(format!("--J {j} exceeds the maximum order {}", crate::expand::MAX_ORDER)));
        }
    }
    fs::create_dir_all(&common.out)?;
    let mut run = Run {
        cfg: &cfg,
        common,
        out: common.out.clone(),
        outputs: Vec::new(),
        summary: BTreeMap::new(),
    };
    match &cli.command {
        Command::Moments(_) => cmd_moments(&mut run)?,
        Command::Expand { emit_coeffs, .. } => cmd_expand(&mut run, *emit_coeffs)?,
        Command::Density(_) => cmd_density(&mut run)?,
        Command::Price(_) => cmd_price(&mut run)?,
        Command::Loss(_) => cmd_loss(&mut run)?,
        Command::Fit(_) => cmd_fit(&mut run)?,
        Command::Posterior(_) => cmd_posterior(&mut run)?,
        Command::Simulate(_) => cmd_simulate(&mut run)?,
        Command::Validate(_) => cmd_validate(&mut run)?,
    }
    let manifest = json!({
        "format": MANIFEST_FORMAT,
        "command": name,
        "versions": {"ajdx": env!("CARGO_PKG_VERSION")},
        "config": common.config.display().to_string(),
        "config_sha256": cfg.sha256,
        "model": cfg.model.kind().name(),
        "seed": run.seed(),
        "order": run.order(),
        "options": {
            "grid": common.grid,
            "strikes": common.strikes,
            "method": common.method.map(|m| format!("{m:?}").to_lowercase()),
            "datasets": common.datasets,
        },
        "summary": run.summary,
        "outputs": run.outputs,
    });
    let mut outputs = run.outputs.clone();
    run.write_json("manifest.json", &manifest)?;
    outputs.push("manifest.json".into());
    Ok(outputs)
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("configuration error: {m}"),
                CliError::Gate(m) => eprintln!("{m}"),
                CliError::Runtime(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}
