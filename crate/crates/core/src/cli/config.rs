//! Scenario files: flat `key = value` text.
//!
//! ```text
//! # comment
//! [market]
//! mu = 0.06, 0.08          # one entry per risky asset
//! sigma = 0.2, 0, 0.05, 0.29  # n x k, row-major
//! r = 0.02                 # omit for a market without a riskless asset
//! mu@10 = 0.05, 0.07       # value from t = 10 on
//!
//! [consumption]
//! c0 = 1
//! b = 0.1
//! rho = 0.4, 0
//! ```
//!
//! A key outside any section may carry its section as a prefix
//! (`market.r = 0.02`). Numbers may be written as fractions (`1/250`).

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::market::{MarketParams, ParameterCurve};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Funds,
    ClosedForm,
    Hjb,
    Simulate,
    VerifyDecomposition,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Funds => "funds",
            Task::ClosedForm => "closed_form",
            Task::Hjb => "hjb",
            Task::Simulate => "simulate",
            Task::VerifyDecomposition => "verify_decomposition",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "funds" => Task::Funds,
            "closed_form" => Task::ClosedForm,
            "hjb" => Task::Hjb,
            "simulate" => Task::Simulate,
            "verify_decomposition" => Task::VerifyDecomposition,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Closed form when it exists, otherwise the HJB policy.
    Auto,
    ClosedFormFeedback,
    HjbPolicy,
    FixedMix,
    TwoFund,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Auto => "auto",
            StrategyKind::ClosedFormFeedback => "closed_form_feedback",
            StrategyKind::HjbPolicy => "hjb_policy",
            StrategyKind::FixedMix => "fixed_mix",
            StrategyKind::TwoFund => "two_fund",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "auto" => StrategyKind::Auto,
            "closed_form_feedback" => StrategyKind::ClosedFormFeedback,
            "hjb_policy" => StrategyKind::HjbPolicy,
            "fixed_mix" => StrategyKind::FixedMix,
            "two_fund" => StrategyKind::TwoFund,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjbSettings {
    pub nodes: usize,
    /// Overrides the default truncation.
    pub z_max: Option<f64>,
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub antithetic: bool,
    pub strategies: Vec<StrategyKind>,
    /// Fractions of wealth per risky asset for `fixed_mix`.
    pub mix: Option<Vec<f64>>,
    pub dump_paths: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: MarketParams<f64>,
    pub w0: f64,
    pub c0: f64,
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub out: PathBuf,
    pub hjb: HjbSettings,
    pub sim: SimSettings,
    pub verify_samples: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "market.mu",
    "market.sigma",
    "market.k",
    "market.r",
    "consumption.c0",
    "consumption.a",
    "consumption.b",
    "consumption.rho",
    "mortality.lambda",
    "scenario.w0",
    "scenario.tasks",
    "scenario.seed",
    "scenario.out",
    "hjb.nodes",
    "hjb.z_max",
    "hjb.kappa",
    "hjb.tol",
    "hjb.max_iter",
    "simulate.paths",
    "simulate.dt",
    "simulate.horizon",
    "simulate.antithetic",
    "simulate.strategy",
    "simulate.mix",
    "simulate.dump_paths",
    "verify.samples",
];

/// Keys that accept `key@t` overrides.
const CURVE_KEYS: &[&str] = &[
    "market.mu",
    "market.sigma",
    "consumption.a",
    "consumption.b",
    "mortality.lambda",
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Default)]
struct RawConfig {
    plain: BTreeMap<String, Entry>,
    /// key -> [(t, entry)]
    timed: BTreeMap<String, Vec<(f64, Entry)>>,
}

fn tokenize(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut section: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(lineno, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::at(lineno, "empty section name"));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::at(lineno, format!("expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::at(lineno, "missing key"));
        }
        let (base, time) = match key.split_once('@') {
            Some((b, t)) => {
                let t = parse_number(t.trim())
                    .ok_or_else(|| ConfigError::at(lineno, format!("bad time `{t}` in `{key}`")))?;
                (b.trim(), Some(t))
            }
            None => (key, None),
        };
        let full = match (&section, base.contains('.')) {
            (_, true) => base.to_string(),
            (Some(s), false) => format!("{s}.{base}"),
            (None, false) => {
                return Err(ConfigError::at(
                    lineno,
                    format!("key `{base}` needs a section or a `section.` prefix"),
                ))
            }
        };
        if !KNOWN_KEYS.contains(&full.as_str()) {
            return Err(ConfigError::at(lineno, format!("unknown key `{full}`")));
        }
        let entry = Entry {
            line: lineno,
            value,
        };
        match time {
            None => {
                if let Some(prev) = raw.plain.insert(full.clone(), entry) {
                    return Err(ConfigError::at(
                        lineno,
                        format!("`{full}` already set on line {}", prev.line),
                    ));
                }
            }
            Some(t) => {
                if !CURVE_KEYS.contains(&full.as_str()) {
                    return Err(ConfigError::at(
                        lineno,
                        format!("`{full}` cannot vary in time"),
                    ));
                }
                raw.timed.entry(full).or_default().push((t, entry));
            }
        }
    }
    Ok(raw)
}

fn parse_number(s: &str) -> Option<f64> {
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

fn parse_list(e: &Entry, key: &str) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(|x| {
            parse_number(x.trim()).ok_or_else(|| {
                ConfigError::at(e.line, format!("`{key}`: `{}` is not a number", x.trim()))
            })
        })
        .collect()
}

fn parse_scalar(e: &Entry, key: &str) -> Result<f64, ConfigError> {
    match parse_list(e, key)?.as_slice() {
        [v] => Ok(*v),
        v => Err(ConfigError::at(
            e.line,
            format!("`{key}` takes one number, got {}", v.len()),
        )),
    }
}

fn parse_count(e: &Entry, key: &str) -> Result<usize, ConfigError> {
    e.value
        .parse::<usize>()
        .map_err(|_| ConfigError::at(e.line, format!("`{key}` must be a non-negative integer")))
}

fn parse_bool(e: &Entry, key: &str) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::at(
            e.line,
            format!("`{key}` must be true or false"),
        )),
    }
}

impl RawConfig {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.plain.get(key)
    }

    fn require(&self, key: &str) -> Result<&Entry, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError::general(format!("missing required key `{key}`")))
    }

    fn scalar_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.get(key).map_or(Ok(default), |e| parse_scalar(e, key))
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.get(key).map_or(Ok(default), |e| parse_count(e, key))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.get(key).map_or(Ok(default), |e| parse_bool(e, key))
    }

    /// Base value plus any `key@t` overrides, as a piecewise-constant curve.
    fn curve<V: Clone>(
        &self,
        key: &str,
        base: V,
        parse: impl Fn(&Entry) -> Result<V, ConfigError>,
    ) -> Result<ParameterCurve<f64, V>, ConfigError> {
        let Some(timed) = self.timed.get(key) else {
            return Ok(ParameterCurve::constant(base));
        };
        let mut timed = timed.clone();
        timed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = Vec::new();
        let mut values = vec![base];
        for (t, e) in &timed {
            breaks.push(*t);
            values.push(parse(e)?);
        }
        ParameterCurve::piecewise(breaks, values)
            .map_err(|m| ConfigError::at(timed[0].1.line, format!("`{key}`: {m}")))
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw = tokenize(text)?;

    let mu_entry = raw.require("market.mu")?;
    let mu = parse_list(mu_entry, "market.mu")?;
    let n = mu.len();
    let sigma_entry = raw.require("market.sigma")?;
    let sigma_len = parse_list(sigma_entry, "market.sigma")?.len();
    let k = match raw.get("market.k") {
        Some(e) => parse_count(e, "market.k")?,
        None if sigma_len % n == 0 => sigma_len / n,
        None => {
            return Err(ConfigError::at(
                sigma_entry.line,
                format!("sigma has {sigma_len} entries, not a multiple of n = {n}"),
            ))
        }
    };
    if k < n {
        return Err(ConfigError::general(format!(
            "need at least as many Brownian motions as assets (k = {k} < n = {n})"
        )));
    }
    let matrix = |e: &Entry| -> Result<Matrix<f64>, ConfigError> {
        let v = parse_list(e, "market.sigma")?;
        if v.len() != n * k {
            return Err(ConfigError::at(
                e.line,
                format!("sigma needs n * k = {} entries, got {}", n * k, v.len()),
            ));
        }
        Ok(Matrix::from_row_major(n, k, v).expect("length checked"))
    };
    let vector = |e: &Entry| -> Result<Vec<f64>, ConfigError> {
        let v = parse_list(e, "market.mu")?;
        if v.len() != n {
            return Err(ConfigError::at(
                e.line,
                format!("mu needs {n} entries, got {}", v.len()),
            ));
        }
        Ok(v)
    };
    let scalar = |key: &'static str| move |e: &Entry| parse_scalar(e, key);

    let sigma_base = matrix(sigma_entry)?;
    let a0 = raw.scalar_or("consumption.a", 0.0)?;
    let b0 = raw.scalar_or("consumption.b", 0.0)?;
    let lambda0 = parse_scalar(raw.require("mortality.lambda")?, "mortality.lambda")?;
    let rho = match raw.get("consumption.rho") {
        Some(e) => {
            let v = parse_list(e, "consumption.rho")?;
            if v.len() != k {
                return Err(ConfigError::at(
                    e.line,
                    format!("rho needs k = {k} entries, got {}", v.len()),
                ));
            }
            v
        }
        None => vec![0.0; k],
    };
    let params = MarketParams {
        mu: raw.curve("market.mu", mu, vector)?,
        sigma: raw.curve("market.sigma", sigma_base, matrix)?,
        r: raw
            .get("market.r")
            .map(|e| parse_scalar(e, "market.r"))
            .transpose()?,
        a: raw.curve("consumption.a", a0, scalar("consumption.a"))?,
        b: raw.curve("consumption.b", b0, scalar("consumption.b"))?,
        rho,
        lambda: raw.curve("mortality.lambda", lambda0, scalar("mortality.lambda"))?,
    };

    let tasks_entry = raw.require("scenario.tasks")?;
    let mut tasks = Vec::new();
    for name in tasks_entry
        .value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let task = Task::parse(name)
            .ok_or_else(|| ConfigError::at(tasks_entry.line, format!("unknown task `{name}`")))?;
        if !tasks.contains(&task) {
            tasks.push(task);
        }
    }
    if tasks.is_empty() {
        return Err(ConfigError::at(tasks_entry.line, "task list is empty"));
    }
    tasks.sort();

    let seed = match raw.get("scenario.seed") {
        Some(e) => e
            .value
            .parse::<u64>()
            .map_err(|_| ConfigError::at(e.line, "`scenario.seed` must be an unsigned integer"))?,
        None => 0,
    };

    let strategies = match raw.get("simulate.strategy") {
        Some(e) => {
            let mut v = Vec::new();
            for name in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                v.push(StrategyKind::parse(name).ok_or_else(|| {
                    ConfigError::at(e.line, format!("unknown strategy `{name}`"))
                })?);
            }
            if v.is_empty() {
                return Err(ConfigError::at(e.line, "strategy list is empty"));
            }
            v
        }
        None => vec![StrategyKind::Auto],
    };
    let mix = match raw.get("simulate.mix") {
        Some(e) => {
            let v = parse_list(e, "simulate.mix")?;
            if v.len() != n {
                return Err(ConfigError::at(
                    e.line,
                    format!("mix needs {n} entries, got {}", v.len()),
                ));
            }
            Some(v)
        }
        None => None,
    };
    if strategies.contains(&StrategyKind::FixedMix) && mix.is_none() {
        return Err(ConfigError::general(
            "strategy fixed_mix needs `simulate.mix`",
        ));
    }

    Ok(ScenarioConfig {
        params,
        w0: parse_scalar(raw.require("scenario.w0")?, "scenario.w0")?,
        c0: raw.scalar_or("consumption.c0", 1.0)?,
        tasks,
        seed,
        out: raw
            .get("scenario.out")
            .map_or_else(|| PathBuf::from("out"), |e| PathBuf::from(&e.value)),
        hjb: HjbSettings {
            nodes: raw.count_or("hjb.nodes", 4001)?,
            z_max: raw
                .get("hjb.z_max")
                .map(|e| parse_scalar(e, "hjb.z_max"))
                .transpose()?,
            kappa: raw.scalar_or("hjb.kappa", crate::hjb::DEFAULT_KAPPA)?,
            tol: raw.scalar_or("hjb.tol", 1e-10)?,
            max_iter: raw.count_or("hjb.max_iter", 200)?,
        },
        sim: SimSettings {
            paths: raw.count_or("simulate.paths", 100_000)?,
            dt: raw.scalar_or("simulate.dt", 1.0 / 250.0)?,
            horizon: raw.scalar_or("simulate.horizon", 200.0)?,
            antithetic: raw.bool_or("simulate.antithetic", false)?,
            strategies,
            mix,
            dump_paths: raw.bool_or("simulate.dump_paths", false)?,
        },
        verify_samples: raw.count_or("verify.samples", 10_000)?,
    })
}
