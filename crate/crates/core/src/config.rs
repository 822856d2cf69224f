//! Run configuration: strict TOML (or JSON) with per-kind parameter tables
//! and error messages that point at the offending line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::affine::{AffineModel, JumpLaw, JumpMeasure};
use crate::apps::{BajdParams, CreditPortfolio, GateMode, HestonParams, Obligor, PriceWeight};
use crate::inference::{Family, MleConfig, Prior, RwmConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.source, self.message),
            (Some(l), None) => write!(f, "{}:{l}: {}", self.source, self.message),
            _ => write!(f, "{}: {}", self.source, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bajd,
    IntegratedBajd,
    Heston,
    GenericAffine,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Bajd => "bajd",
            ModelKind::IntegratedBajd => "integrated_bajd",
            ModelKind::Heston => "heston",
            ModelKind::GenericAffine => "generic_affine",
        }
    }
}

/// Map of named numbers that rejects repeated keys in every input format.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParamMap(pub BTreeMap<String, f64>);

impl<'de> Deserialize<'de> for ParamMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ParamMap;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a table of numeric parameters")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<ParamMap, A::Error> {
                let mut out = BTreeMap::new();
                while let Some((k, v)) = map.next_entry::<String, f64>()? {
                    if out.insert(k.clone(), v).is_some() {
                        return Err(serde::de::Error::custom(format!("duplicate key `{k}`")));
                    }
                }
                Ok(ParamMap(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// Initial value of a scalar BAJD (default: stationary mean).
    pub y0: Option<f64>,
    /// Heston initial variance (default: `κθ_V/κ_V`).
    pub v0: Option<f64>,
    /// Heston initial log-price.
    pub x0: Option<f64>,
    /// Initial state of a generic affine model.
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Transition horizon Δ.
    pub dt: Option<f64>,
    pub order: Option<u32>,
    pub gate_mode: Option<GateMode>,
    pub weight: Option<PriceWeight>,
    /// Discount rate for option prices (default: `κθ_X`).
    pub rate: Option<f64>,
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub strikes: Option<String>,
    pub method: Option<String>,
    /// Points `a` at which `validate` compares `E[e^{aZ}]`.
    pub mgf_points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// CSV series to read instead of simulating, relative to the config.
    pub path: Option<String>,
    /// Observations kept per simulated series.
    pub n: usize,
    /// Leading simulated observations discarded.
    pub burn_in: usize,
    /// Heston simulation substeps per observation.
    pub substeps: usize,
    pub datasets: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            n: 500,
            burn_in: 100,
            substeps: 20,
            datasets: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_acceptance: f64,
    pub initial_scale: f64,
    pub batch: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        let r = RwmConfig::default();
        McmcSection {
            iterations: r.iterations,
            burn_in: r.burn_in,
            thin: r.thin,
            target_acceptance: r.target_acceptance,
            initial_scale: r.initial_scale,
            batch: r.batch,
        }
    }
}

impl McmcSection {
    pub fn rwm(&self, seed: u64) -> RwmConfig {
        RwmConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            target_acceptance: self.target_acceptance,
            initial_scale: self.initial_scale,
            batch: self.batch,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// `[lo, hi]` per parameter, keyed by parameter name.
    pub bounds: Option<BTreeMap<String, [f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObligorSection {
    pub kappa_theta: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub l: f64,
    pub nu: f64,
    pub x0: f64,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreditSection {
    #[serde(default)]
    pub t: f64,
    pub maturity: f64,
    pub obligors: Vec<ObligorSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSection {
    pub m: usize,
    pub n: usize,
    /// `n×n` diffusion block of the real coordinates.
    #[serde(default)]
    pub a: Vec<Vec<f64>>,
    /// `m` matrices of size `d×d`.
    #[serde(default)]
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    #[serde(default)]
    pub jump_intensity: f64,
    /// Exponential jump mean per coordinate, zero for no jump.
    #[serde(default)]
    pub jump_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub params: ParamMap,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub mle: MleConfig,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub prior: PriorSection,
    pub credit: Option<CreditSection>,
    pub generic: Option<GenericSection>,
}

/// Validated model with its initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Bajd { params: BajdParams, y0: f64 },
    IntegratedBajd { params: BajdParams, y0: f64 },
    Heston { params: HestonParams, v0: f64, x0: f64 },
    Generic { model: AffineModel, x0: Vec<f64> },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Bajd { .. } => ModelKind::Bajd,
            ModelSpec::IntegratedBajd { .. } => ModelKind::IntegratedBajd,
            ModelSpec::Heston { .. } => ModelKind::Heston,
            ModelSpec::Generic { .. } => ModelKind::GenericAffine,
        }
    }

    pub fn affine_model(&self) -> AffineModel {
        match self {
            ModelSpec::Bajd { params, .. } => params.model(),
            ModelSpec::IntegratedBajd { params, .. } => params.integrated_model(),
            ModelSpec::Heston { params, .. } => params.model(),
            ModelSpec::Generic { model, .. } => model.clone(),
        }
    }

    /// Initial state of [`ModelSpec::affine_model`].
    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            ModelSpec::Bajd { y0, .. } => vec![*y0],
            ModelSpec::IntegratedBajd { y0, .. } => vec![*y0, 0.0],
            ModelSpec::Heston { v0, x0, .. } => vec![*v0, *x0],
            ModelSpec::Generic { x0, .. } => x0.clone(),
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            ModelSpec::Bajd { .. } => Some(Family::Bajd),
            ModelSpec::Heston { .. } => Some(Family::Heston),
            _ => None,
        }
    }

    /// Parameter vector in the family's ordering.
    pub fn theta(&self) -> Option<Vec<f64>> {
        match self {
            ModelSpec::Bajd { params: p, .. } => Some(vec![p.kappa_theta, p.kappa, p.sigma, p.l, p.nu]),
            ModelSpec::Heston { params: p, .. } => {
                Some(vec![p.kappa_v, p.kappa_theta_v, p.sigma, p.kappa_theta_x, p.rho])
            }
            _ => None,
        }
    }
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub raw: RawConfig,
    pub model: ModelSpec,
    pub prior: Option<Prior>,
    pub portfolio: Option<(CreditPortfolio, f64, f64)>,
    /// SHA-256 of the configuration bytes.
    pub sha256: String,
    pub text: String,
    pub source: String,
}

const BAJD_KEYS: [&str; 5] = ["kappa_theta", "kappa", "sigma", "l", "nu"];
const HESTON_KEYS: [&str; 5] = ["kappa_v", "kappa_theta_v", "sigma", "kappa_theta_x", "rho"];

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Toml,
    Json,
}

struct Locator<'a> {
    text: &'a str,
    format: Format,
    source: &'a str,
}

impl Locator<'_> {
    fn error(&self, line: Option<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source: self.source.to_string(),
            line,
            column: None,
            message: message.into(),
        }
    }

    /// Line of the header of `section` (1-based).
    fn section_line(&self, section: &str) -> Option<usize> {
        match self.format {
            Format::Toml => self.text.lines().position(|l| {
                let t = l.trim();
                t == format!("[{section}]") || t == format!("[[{section}]]")
            }),
            Format::Json => {
                let pat = format!("\"{section}\"");
                self.text.lines().position(|l| l.contains(&pat))
            }
        }
        .map(|i| i + 1)
    }

    /// Line of `key` inside `section`; `index` picks the n-th block of an
    /// array of tables.
    fn key_line(&self, section: &str, key: &str, index: usize) -> Option<usize> {
        match self.format {
            Format::Toml => {
                let mut current = String::new();
                let mut seen = 0usize;
                for (i, l) in self.text.lines().enumerate() {
                    let t = l.trim();
                    if let Some(h) = t.strip_prefix("[[").and_then(|s| s.strip_suffix("]]")) {
                        current = h.trim().to_string();
                        if current == section {
                            seen += 1;
                        }
                        continue;
                    }
                    if let Some(h) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                        current = h.trim().to_string();
                        if current == section {
                            seen += 1;
                        }
                        continue;
                    }
                    if current == section && seen == index + 1 {
                        let k = t.split('=').next().unwrap_or("").trim().trim_matches('"');
                        if t.contains('=') && k == key {
                            return Some(i + 1);
                        }
                    }
                }
                None
            }
            Format::Json => {
                let start = self.section_line(section).unwrap_or(1);
                let pat = format!("\"{key}\"");
                let mut seen = 0usize;
                for (i, l) in self.text.lines().enumerate().skip(start - 1) {
                    if l.contains(&pat) {
                        if seen == index {
                            return Some(i + 1);
                        }
                        seen += 1;
                    }
                }
                None
            }
        }
    }

    fn at_key(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self.key_line(section, key, 0).or_else(|| self.section_line(section));
        self.error(line, message)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

fn take_params(loc: &Locator, map: &ParamMap, kind: ModelKind, keys: &[&str]) -> Result<Vec<f64>, ConfigError> {
    if let Some(k) = map.0.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(loc.at_key(
            "params",
            k,
            format!("unknown parameter `{k}` for model kind {}; expected {}", kind.name(), keys.join(", ")),
        ));
    }
    keys.iter()
        .map(|k| {
            map.0.get(*k).copied().ok_or_else(|| {
                loc.error(
                    loc.section_line("params"),
                    format!("missing parameter `{k}` for model kind {}", kind.name()),
                )
            })
        })
        .collect()
}

/// Points a validation message at the first parameter it names.
fn param_error(loc: &Locator, keys: &[&str], message: String) -> ConfigError {
    let mut named: Vec<&&str> = keys.iter().filter(|k| message.contains(**k)).collect();
    // prefer the longest match, so `kappa_theta` wins over `kappa`
    named.sort_by_key(|k| std::cmp::Reverse(k.len()));
    match named.first() {
        Some(k) => loc.at_key("params", k, message),
        None => loc.error(loc.section_line("params"), message),
    }
}

fn reject_state(loc: &Locator, state: &StateSection, kind: ModelKind, allowed: &[&str]) -> Result<(), ConfigError> {
    let present = [
        ("y0", state.y0.is_some()),
        ("v0", state.v0.is_some()),
        ("x0", state.x0.is_some()),
        ("x", state.x.is_some()),
    ];
    for (k, set) in present {
        if set && !allowed.contains(&k) {
            return Err(loc.at_key("state", k, format!("state key `{k}` does not apply to model kind {}", kind.name())));
        }
    }
    Ok(())
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize) -> Option<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn generic_model(loc: &Locator, g: &GenericSection) -> Result<AffineModel, ConfigError> {
    let d = g.m + g.n;
    let shape = |key: &str, what: String| loc.at_key("generic", key, what);
    let a = matrix(&g.a, g.n, g.n).ok_or_else(|| shape("a", format!("`a` must be {}×{}", g.n, g.n)))?;
    if g.alpha.len() != g.m {
        return Err(shape("alpha", format!("`alpha` must list {} matrices", g.m)));
    }
    let alpha = g
        .alpha
        .iter()
        .map(|m| matrix(m, d, d).ok_or_else(|| shape("alpha", format!("each `alpha` matrix must be {d}×{d}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if g.b.len() != d {
        return Err(shape("b", format!("`b` must have {d} entries")));
    }
    let beta = matrix(&g.beta, d, d).ok_or_else(|| shape("beta", format!("`beta` must be {d}×{d}")))?;
    let jumps = if g.jump_intensity > 0.0 {
        if g.jump_means.len() != d {
            return Err(shape("jump_means", format!("`jump_means` must have {d} entries")));
        }
        let laws = g
            .jump_means
            .iter()
            .map(|&m| if m > 0.0 { JumpLaw::Exponential(m) } else { JumpLaw::None })
            .collect();
        Some(JumpMeasure::new(g.jump_intensity, laws))
    } else {
        None
    };
    AffineModel::new(g.m, g.n, a, alpha, DVector::from_vec(g.b.clone()), beta, jumps, vec![None; g.m])
        .map_err(|e| loc.error(loc.section_line("generic"), e.to_string()))
}

fn build_prior(loc: &Locator, raw: &RawConfig, family: Family) -> Result<Prior, ConfigError> {
    let Some(bounds) = &raw.prior.bounds else {
        return Ok(Prior::new(family));
    };
    let names = family.names();
    if let Some(k) = bounds.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(loc.at_key("prior.bounds", k, format!("unknown parameter `{k}` in prior bounds")));
    }
    let b = names
        .iter()
        .map(|n| bounds.get(*n).map_or((f64::NEG_INFINITY, f64::INFINITY), |v| (v[0], v[1])))
        .collect();
    Prior::with_bounds(family, b).map_err(|e| loc.error(loc.section_line("prior.bounds"), e.to_string()))
}

fn build_portfolio(loc: &Locator, c: &CreditSection, common: BajdParams, y0: f64) -> Result<CreditPortfolio, ConfigError> {
    let mut obligors = Vec::with_capacity(c.obligors.len());
    for (i, o) in c.obligors.iter().enumerate() {
        let params = BajdParams::new(o.kappa_theta, o.kappa, o.sigma, o.l, o.nu).map_err(|e| {
            let line = loc.key_line("credit.obligors", "kappa_theta", i).or_else(|| loc.section_line("credit"));
            loc.error(line, format!("obligor {i}: {e}"))
        })?;
        obligors.push(Obligor {
            params,
            x0: o.x0,
            loading: o.loading,
        });
    }
    let p = CreditPortfolio { obligors, common, y0 };
    p.validate().map_err(|e| loc.error(loc.section_line("credit"), e.to_string()))?;
    if !(c.maturity > c.t) {
        return Err(loc.at_key("credit", "maturity", format!("maturity {} must exceed t = {}", c.maturity, c.t)));
    }
    Ok(p)
}

impl Config {
    /// Parses TOML, or JSON when the source ends in `.json` or the text
    /// starts with `{`.
    pub fn parse(text: &str, source: &str) -> Result<Config, ConfigError> {
        let format = if source.ends_with(".json") || text.trim_start().starts_with('{') {
            Format::Json
        } else {
            Format::Toml
        };
        let loc = Locator { text, format, source };
        let raw: RawConfig = match format {
            Format::Toml => toml::from_str(text).map_err(|e| {
                let (line, column) = match e.span() {
                    Some(s) => {
                        let (l, c) = line_col(text, s.start);
                        (Some(l), Some(c))
                    }
                    None => (None, None),
                };
                ConfigError {
                    source: source.to_string(),
                    line,
                    column,
                    message: e.message().trim().to_string(),
                }
            })?,
            Format::Json => serde_json::from_str(text).map_err(|e| ConfigError {
                source: source.to_string(),
                line: Some(e.line()),
                column: Some(e.column()),
                message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
            })?,
        };
        let kind = raw.model.kind;
        let model = match kind {
            ModelKind::Bajd | ModelKind::IntegratedBajd => {
                let v = take_params(&loc, &raw.params, kind, &BAJD_KEYS)?;
                let params = BajdParams::new(v[0], v[1], v[2], v[3], v[4])
                    .map_err(|e| param_error(&loc, &BAJD_KEYS, e.to_string()))?;
                reject_state(&loc, &raw.state, kind, &["y0"])?;
                let y0 = raw.state.y0.unwrap_or_else(|| params.stationary_mean());
                if !(y0 >= 0.0) {
                    return Err(loc.at_key("state", "y0", format!("y0 must be nonnegative, got {y0}")));
                }
                if kind == ModelKind::Bajd {
                    ModelSpec::Bajd { params, y0 }
                } else {
                    ModelSpec::IntegratedBajd { params, y0 }
                }
            }
            ModelKind::Heston => {
                let v = take_params(&loc, &raw.params, kind, &HESTON_KEYS)?;
                let params = HestonParams::new(v[0], v[1], v[2], v[3], v[4])
                    .map_err(|e| param_error(&loc, &HESTON_KEYS, e.to_string()))?;
                if !(params.kappa_v > 0.0) {
                    return Err(loc.at_key("params", "kappa_v", "kappa_v must be positive"));
                }
                reject_state(&loc, &raw.state, kind, &["v0", "x0"])?;
                let v0 = raw.state.v0.unwrap_or(params.kappa_theta_v / params.kappa_v);
                if !(v0 >= 0.0) {
                    return Err(loc.at_key("state", "v0", format!("v0 must be nonnegative, got {v0}")));
                }
                let x0 = raw
                    .state
                    .x0
                    .ok_or_else(|| loc.error(loc.section_line("state"), "missing state key `x0` for model kind heston"))?;
                ModelSpec::Heston { params, v0, x0 }
            }
            ModelKind::GenericAffine => {
                if let Some(k) = raw.params.0.keys().next() {
                    return Err(loc.at_key("params", k, "generic_affine models are given in [generic], not [params]"));
                }
                let g = raw
                    .generic
                    .as_ref()
                    .ok_or_else(|| loc.error(None, "model kind generic_affine needs a [generic] section"))?;
                let model = generic_model(&loc, g)?;
                reject_state(&loc, &raw.state, kind, &["x"])?;
                let x0 = raw
                    .state
                    .x
                    .clone()
                    .ok_or_else(|| loc.error(loc.section_line("state"), "missing state key `x` for model kind generic_affine"))?;
                if !model.in_state_space(&x0) {
                    return Err(loc.at_key("state", "x", format!("initial state {x0:?} lies outside the state space")));
                }
                ModelSpec::Generic { model, x0 }
            }
        };
        if raw.generic.is_some() && kind != ModelKind::GenericAffine {
            return Err(loc.error(loc.section_line("generic"), "[generic] only applies to model kind generic_affine"));
        }
        if let Some(dt) = raw.run.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(loc.at_key("run", "dt", format!("dt must be positive, got {dt}")));
            }
        }
        if let Some(j) = raw.run.order {
            if j > crate::expand::MAX_ORDER {
                return Err(loc.at_key("run", "order", format!("order {j} exceeds the maximum {}", crate::expand::MAX_ORDER)));
            }
        }
        if let Some(m) = &raw.run.method {
            m.parse::<crate::inference::Method>().map_err(|e| loc.at_key("run", "method", e.to_string()))?;
        }
        for (key, spec) in [("grid", &raw.run.grid), ("strikes", &raw.run.strikes)] {
            if let Some(s) = spec {
                GridSpec::parse(s).map_err(|e| loc.at_key("run", key, e))?;
            }
        }
        let prior = match model.family() {
            Some(f) => Some(build_prior(&loc, &raw, f)?),
            None if raw.prior.bounds.is_some() => {
                return Err(loc.error(loc.section_line("prior"), "[prior] applies to bajd and heston models only"));
            }
            None => None,
        };
        let portfolio = match (&raw.credit, &model) {
            (Some(c), ModelSpec::Bajd { params, y0 }) => Some((build_portfolio(&loc, c, *params, *y0)?, c.t, c.maturity)),
            (Some(_), _) => {
                return Err(loc.error(loc.section_line("credit"), "[credit] needs model kind bajd for the common factor"));
            }
            (None, _) => None,
        };
        let sha256 = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Config {
            raw,
            model,
            prior,
            portfolio,
            sha256,
            text: text.to_string(),
            source: source.to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: path.display().to_string(),
            line: None,
            column: None,
            message: format!("cannot read configuration: {e}"),
        })?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn gate_mode(&self) -> GateMode {
        self.raw.run.gate_mode.unwrap_or_default()
    }
}

/// `start:end:count` with `count ≥ 2` equally spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn parse(s: &str) -> Result<GridSpec, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{s}` must have the form start:end:count"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("grid `{s}`: `{p}` is not a number"));
        let (start, end) = (num(parts[0])?, num(parts[1])?);
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("grid `{s}`: `{}` is not a point count", parts[2]))?;
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(format!("grid `{s}`: end must exceed start"));
        }
        if count < 2 {
            return Err(format!("grid `{s}`: at least 2 points are needed"));
        }
        Ok(GridSpec { start, end, count })
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + h * i as f64).collect()
    }
}
