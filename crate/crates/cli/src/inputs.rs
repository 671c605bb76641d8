//! Parameter, integrator and config-file inputs.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use viral3cm::{ExperimentConfig, IntegratorConfig, Method, Parameters, State};

use crate::{CliError, SimulateArgs};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// λ = 0.1089, μ = 0.01089, k = 1.179e-3, δ = 0.366, p = 1427, c = 3.
    Table1Means,
}

#[derive(Args, Debug)]
pub struct ParamArgs {
    /// Start from a built-in parameter set.
    #[arg(long, value_enum, conflicts_with = "params")]
    pub preset: Option<Preset>,
    /// Start from a parameter file (.toml or .json).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// T-cell production rate, cells/μL/day.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// T-cell death rate, 1/day.
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Infection rate, μL/(copies·day).
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    /// Infected-cell death rate, 1/day.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Virion production per infected cell, copies/(cell·day).
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    /// Virion clearance rate, 1/day.
    #[arg(long, allow_negative_numbers = true)]
    pub c: Option<f64>,
}

impl ParamArgs {
    /// Preset or file first, then individual flags on top.
    pub fn resolve(&self) -> Result<Parameters, CliError> {
        let base = match (&self.preset, &self.params) {
            (Some(Preset::Table1Means), _) => Some(Parameters::TABLE1_MEANS),
            (None, Some(path)) => Some(load_file::<Parameters>(path)?),
            (None, None) => None,
        };
        let pick = |flag: Option<f64>, from_base: fn(&Parameters) -> f64, name: &str| {
            flag.or(base.as_ref().map(from_base))
                .ok_or_else(|| CliError::Config(format!("missing parameter `{name}` (use --{name}, --preset or --params)")))
        };
        let params = Parameters::new(
            pick(self.lambda, Parameters::lambda, "lambda")?,
            pick(self.mu, Parameters::mu, "mu")?,
            pick(self.k, Parameters::k, "k")?,
            pick(self.delta, Parameters::delta, "delta")?,
            pick(self.p, Parameters::p, "p")?,
            pick(self.c, Parameters::c, "c")?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Rk45,
    Rk4,
}

#[derive(Args, Debug)]
pub struct IntegratorArgs {
    /// Integration scheme.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Step size for rk4, days.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Record every n-th step.
    #[arg(long)]
    pub record_stride: Option<u64>,
}

impl IntegratorArgs {
    pub fn resolve(&self) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            method: match self.method {
                Some(MethodArg::Rk4) => Method::FixedRk4,
                Some(MethodArg::Rk45) => Method::AdaptiveRk45,
                None => d.method,
            },
            dt: self.dt.unwrap_or(d.dt),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            record_stride: self.record_stride.unwrap_or(d.record_stride),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub params: Parameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: Parameters,
    pub init: State,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

impl SimulateConfig {
    pub fn from_args(args: &SimulateArgs) -> Result<Self, CliError> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("missing --{name}")));
        let cfg = SimulateConfig {
            params: args.params.resolve()?,
            init: State::new(need(args.t0, "t0")?, args.i0.unwrap_or(0.0), need(args.v0, "v0")?),
            t_end: need(args.t_end, "t-end")?,
            integrator: args.integrator.resolve(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.init.check_admissible().map_err(|e| CliError::Config(format!("initial state: {e}")))?;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(CliError::Config(format!("invalid `t_end`: must be positive, got {}", self.t_end)));
        }
        self.integrator.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Reads a `.toml` or `.json` document; unknown keys are errors.
pub fn load_file<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
        Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
        _ => return Err(CliError::Config(format!("{}: expected a .toml or .json file", path.display()))),
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, CliError> {
    load_file(path)
}
