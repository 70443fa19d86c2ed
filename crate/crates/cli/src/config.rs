//! Experiment configuration: a flat `key = value` text format.
//!
//! ```text
//! # problem
//! problem = logistic_nonconvex
//! lambda_reg = 0.1
//! synth.n = 2000
//! synth.d = 50
//!
//! # runs
//! methods = scnm, scn, sgd
//! seeds = 1..10
//! iterations = 2000
//! M = 1e6
//! sgd.sgd_step = 0.1
//! ```
//!
//! Run keys given without a prefix apply to every method; `<label>.<key>`
//! applies to one method and wins over the unprefixed key. Later lines
//! win over earlier ones, and command-line overrides are applied last.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use cubic_momentum::engine::{EngineError, Method, Momentum, OutputSet, RunConfig};
use cubic_momentum::estimators::{GradVariant, ScheduleSource};
use cubic_momentum::problems::ProblemConstants;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Raw settings; a repeated key keeps its last value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut settings = Settings::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: raw.trim().to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: raw.trim().to_string(),
                });
            }
            settings.set(key, value.trim());
        }
        Ok(settings)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, text: &str) -> Result<(), ConfigError> {
        let (key, value) = text.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: text.to_string(),
        })?;
        self.set(key.trim(), value.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }
}

/// Keys accepted per method (prefixed or not).
pub const RUN_KEYS: [&str; 16] = [
    "method",
    "iterations",
    "M",
    "grad_variant",
    "alpha",
    "beta",
    "schedule",
    "batch",
    "batch_g",
    "batch_h",
    "initial_batch",
    "split_sampling",
    "exact_oracle",
    "sgd_step",
    "record_every",
    "output_set",
];

/// Experiment-wide keys.
pub const GLOBAL_KEYS: [&str; 18] = [
    "problem",
    "lambda_reg",
    "dataset",
    "subsample",
    "subsample_seed",
    "synth.n",
    "synth.d",
    "synth.seed",
    "synth.noise",
    "methods",
    "seeds",
    "out",
    "svg",
    "constants.L",
    "constants.L_g",
    "constants.sigma_g",
    "constants.sigma_h",
    "constants.delta_h",
];

pub const DEFAULT_LAMBDA_REG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    LogisticNonconvex,
    LogisticConvex,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::LogisticNonconvex => "logistic_nonconvex",
            ProblemKind::LogisticConvex => "logistic_convex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        n: usize,
        d: usize,
        seed: u64,
        noise: f64,
    },
    LibSvm {
        path: PathBuf,
        subsample: Option<usize>,
        subsample_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    /// File-name safe series label.
    pub label: String,
    /// Per-run template; the seed is set per run.
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    /// Regularizer weight (nonconvex) or ridge weight (convex).
    pub lambda_reg: f64,
    /// `false` when `lambda_reg` fell back to [`DEFAULT_LAMBDA_REG`].
    pub lambda_reg_given: bool,
    pub data: DataSource,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub constants: Option<ProblemConstants>,
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.to_string(),
            value: v.to_string(),
            reason: "expected true or false".into(),
        }),
    }
}

/// Parses `1,2,5..8` (ranges inclusive). An empty list is an error.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = |reason: &str| ConfigError::Value {
        key: "seeds".into(),
        value: text.to_string(),
        reason: reason.to_string(),
    };
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad("bad range start"))?;
            let b: u64 = b.trim().parse().map_err(|_| bad("bad range end"))?;
            if a > b {
                return Err(bad("empty range"));
            }
            seeds.extend(a..=b);
        } else {
            seeds.push(part.parse().map_err(|_| bad("not an unsigned integer"))?);
        }
    }
    if seeds.is_empty() {
        return Err(ConfigError::Invalid("seed list is empty".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(ConfigError::Invalid(format!("seed {dup} listed twice")));
    }
    Ok(seeds)
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ExperimentSpec {
    pub fn from_settings(s: &Settings) -> Result<Self, ConfigError> {
        let labels: Vec<String> = s
            .get("methods")
            .unwrap_or("scnm, scn, sgd")
            .split(',')
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if labels.is_empty() {
            return Err(ConfigError::Invalid("method list is empty".into()));
        }
        for (k, label) in labels.iter().enumerate() {
            if !valid_label(label) {
                return Err(ConfigError::Invalid(format!(
                    "method label `{label}` must use only letters, digits, `_` and `-`"
                )));
            }
            if labels[..k].contains(label) {
                return Err(ConfigError::Invalid(format!(
                    "method `{label}` listed twice"
                )));
            }
        }
        for key in s.keys() {
            let known = GLOBAL_KEYS.contains(&key)
                || RUN_KEYS.contains(&key)
                || key
                    .split_once('.')
                    .is_some_and(|(l, k)| labels.iter().any(|x| x == l) && RUN_KEYS.contains(&k));
            if !known {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
        }
        let seeds = parse_seeds(s.get("seeds").unwrap_or("1..10"))?;

        let problem = match s.get("problem").unwrap_or("logistic_nonconvex") {
            "logistic_nonconvex" => ProblemKind::LogisticNonconvex,
            "logistic_convex" => ProblemKind::LogisticConvex,
            other => {
                return Err(ConfigError::Value {
                    key: "problem".into(),
                    value: other.into(),
                    reason: "expected logistic_nonconvex or logistic_convex".into(),
                })
            }
        };
        let lambda_given: Option<f64> = s.parsed("lambda_reg")?;
        let data = match s.get("dataset") {
            Some(path) => DataSource::LibSvm {
                path: PathBuf::from(path),
                subsample: s.parsed("subsample")?,
                subsample_seed: s.parsed("subsample_seed")?.unwrap_or(0),
            },
            None => DataSource::Synthetic {
                n: s.parsed("synth.n")?.unwrap_or(2000),
                d: s.parsed("synth.d")?.unwrap_or(50),
                seed: s.parsed("synth.seed")?.unwrap_or(42),
                noise: s.parsed("synth.noise")?.unwrap_or(0.1),
            },
        };
        let constants = parse_constants(s)?;

        let mut methods = Vec::with_capacity(labels.len());
        for label in labels {
            let config = method_config(s, &label)?;
            methods.push(MethodSpec { label, config });
        }

        Ok(ExperimentSpec {
            problem,
            lambda_reg: lambda_given.unwrap_or(DEFAULT_LAMBDA_REG),
            lambda_reg_given: lambda_given.is_some(),
            data,
            methods,
            seeds,
            out_dir: PathBuf::from(s.get("out").unwrap_or("results")),
            svg: s
                .get("svg")
                .map(|v| parse_bool("svg", v))
                .transpose()?
                .unwrap_or(false),
            constants,
        })
    }
}

fn parse_constants(s: &Settings) -> Result<Option<ProblemConstants>, ConfigError> {
    let keys = [
        "constants.L",
        "constants.L_g",
        "constants.sigma_g",
        "constants.sigma_h",
        "constants.delta_h",
    ];
    let given: Vec<Option<f64>> = keys.iter().map(|k| s.parsed(k)).collect::<Result<_, _>>()?;
    if given.iter().all(Option::is_none) {
        return Ok(None);
    }
    let [Some(l), Some(lg), Some(sg), Some(sh)] = [given[0], given[1], given[2], given[3]] else {
        return Err(ConfigError::Invalid(
            "constants.L, constants.L_g, constants.sigma_g and constants.sigma_h must be given together".into(),
        ));
    };
    let k = ProblemConstants::new(l, lg, sg, sh, given[4].unwrap_or(sh));
    if !k.is_consistent() {
        return Err(ConfigError::Invalid(
            "problem constants must be finite and >= 0".into(),
        ));
    }
    Ok(Some(k))
}

/// Looks up `<label>.<key>`, then `<key>`.
fn run_value<'a>(s: &'a Settings, label: &str, key: &str) -> Option<(String, &'a str)> {
    let scoped = format!("{label}.{key}");
    if let Some(v) = s.get(&scoped) {
        return Some((scoped, v));
    }
    s.get(key).map(|v| (key.to_string(), v))
}

fn run_parsed<T: FromStr>(s: &Settings, label: &str, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    run_value(s, label, key)
        .map(|(k, v)| {
            v.parse::<T>().map_err(|e| ConfigError::Value {
                key: k,
                value: v.to_string(),
                reason: e.to_string(),
            })
        })
        .transpose()
}

fn method_config(s: &Settings, label: &str) -> Result<RunConfig, ConfigError> {
    // the label doubles as the method name unless `<label>.method` is set
    let method_name = s.get(&format!("{label}.method")).unwrap_or(label);
    let method: Method = method_name
        .parse()
        .map_err(|e: EngineError| ConfigError::Value {
            key: format!("{label}.method"),
            value: method_name.to_string(),
            reason: e.to_string(),
        })?;
    let mut c = RunConfig {
        method,
        iterations: 2000,
        m: 1e6,
        ..RunConfig::default()
    };
    if let Some(v) = run_parsed(s, label, "iterations")? {
        c.iterations = v;
    }
    if let Some(v) = run_parsed(s, label, "M")? {
        c.m = v;
    }
    if let Some(v) = run_parsed::<GradVariant>(s, label, "grad_variant")? {
        c.grad_variant = v;
    }
    let (mut alpha, mut beta) = (0.1, 0.01);
    if let Some(v) = run_parsed(s, label, "alpha")? {
        alpha = v;
    }
    if let Some(v) = run_parsed(s, label, "beta")? {
        beta = v;
    }
    c.momentum = match run_value(s, label, "schedule") {
        None => Momentum::Manual { alpha, beta },
        Some((key, v)) => match v.parse::<ScheduleSource>() {
            Ok(ScheduleSource::Manual) => Momentum::Manual { alpha, beta },
            Ok(src) => Momentum::Schedule(src),
            Err(e) => {
                return Err(ConfigError::Value {
                    key,
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            }
        },
    };
    if let Some(v) = run_parsed(s, label, "batch")? {
        c.batch_g = v;
        c.batch_h = v;
    }
    if let Some(v) = run_parsed(s, label, "batch_g")? {
        c.batch_g = v;
    }
    if let Some(v) = run_parsed(s, label, "batch_h")? {
        c.batch_h = v;
    }
    c.initial_batch = run_parsed(s, label, "initial_batch")?;
    if let Some((k, v)) = run_value(s, label, "split_sampling") {
        c.split_sampling = parse_bool(&k, v)?;
    }
    if let Some((k, v)) = run_value(s, label, "exact_oracle") {
        c.exact_oracle = parse_bool(&k, v)?;
    }
    if let Some(v) = run_parsed(s, label, "sgd_step")? {
        c.sgd_step = v;
    }
    if let Some(v) = run_parsed(s, label, "record_every")? {
        c.record_full_metrics_every = v;
    }
    if let Some((k, v)) = run_value(s, label, "output_set") {
        c.output_set = match v {
            "with_initial" => OutputSet::WithInitial,
            "exclude_initial" => OutputSet::ExcludeInitial,
            _ => {
                return Err(ConfigError::Value {
                    key: k,
                    value: v.to_string(),
                    reason: "expected with_initial or exclude_initial".into(),
                })
            }
        };
    }
    Ok(c)
}
