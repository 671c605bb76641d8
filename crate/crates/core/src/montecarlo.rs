//! Randomized persistence trials and their aggregation.
//!
//! Trial `i` always draws its parameters from `SeedSpec(master_seed, i)` and,
//! when an initial-condition grid is configured, starts from cell
//! `i / trials_per_cell`. All reductions are integer tallies keyed by cell
//! index (plus index-sorted exemplar lists), so results do not depend on the
//! number of workers or on scheduling order.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{state_at, IntegrationError, IntegratorConfig};
use crate::model::{reproduction_number, Parameters, State};
use crate::stochastic::{sample_parameters, Scenario, ScenarioSpec, ScenarioTag, SeedSpec, StochasticError, PRNG_IDENTITY};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Exemplars kept per disagreement direction.
pub const MAX_EXEMPLARS: usize = 10;

/// Failed trials whose details are kept in an estimate.
pub const MAX_FAILURE_DETAILS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PersistenceCriterion {
    /// Persist iff `R > 1`.
    AsymptoticR,
    /// Persist iff `V(horizon_days) >= threshold`.
    FiniteTime { horizon_days: f64, threshold: f64 },
}

impl PersistenceCriterion {
    pub const DEFAULT_HORIZON_DAYS: f64 = 100.0;
    pub const DEFAULT_THRESHOLD: f64 = 50.0;

    /// `V(100) >= 50` copies/μL.
    pub fn finite_time_default() -> Self {
        PersistenceCriterion::FiniteTime {
            horizon_days: Self::DEFAULT_HORIZON_DAYS,
            threshold: Self::DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let PersistenceCriterion::FiniteTime { horizon_days, threshold } = *self {
            if !(horizon_days.is_finite() && horizon_days > 0.0) {
                return Err(ConfigError::invalid("criterion.horizon_days", format!("must be positive, got {horizon_days}")));
            }
            if !(threshold.is_finite() && threshold > 0.0) {
                return Err(ConfigError::invalid("criterion.threshold", format!("must be positive, got {threshold}")));
            }
        }
        Ok(())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            PersistenceCriterion::AsymptoticR => "asymptotic_r",
            PersistenceCriterion::FiniteTime { .. } => "finite_time",
        }
    }
}

/// Inclusive detection threshold: a load exactly at the threshold persists.
pub fn persists_at_horizon(v_at_horizon: f64, threshold: f64) -> bool {
    v_at_horizon >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcGrid {
    /// Initial healthy T-cell densities, cells/μL.
    pub t0_values: Vec<f64>,
    /// Initial virion densities, copies/μL.
    pub v0_values: Vec<f64>,
    /// Initial infected T-cell density shared by every cell, cells/μL.
    #[serde(default)]
    pub i0: f64,
}

impl Default for IcGrid {
    /// T0 ∈ {100, …, 1000} × V0 ∈ {100, …, 500}, I0 = 0: 50 cells.
    fn default() -> Self {
        IcGrid {
            t0_values: (1..=10).map(|i| 100.0 * i as f64).collect(),
            v0_values: (1..=5).map(|i| 100.0 * i as f64).collect(),
            i0: 0.0,
        }
    }
}

impl IcGrid {
    pub fn n_cells(&self) -> usize {
        self.t0_values.len() * self.v0_values.len()
    }

    /// Cell initial states, T0-major.
    pub fn cells(&self) -> Vec<State> {
        self.t0_values
            .iter()
            .flat_map(|&t0| self.v0_values.iter().map(move |&v0| State::new(t0, self.i0, v0)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.t0_values.is_empty() || self.v0_values.is_empty() {
            return Err(ConfigError::invalid("init.grid", "grid axes must be non-empty"));
        }
        for (field, values) in [("init.t0_values", &self.t0_values), ("init.v0_values", &self.v0_values)] {
            if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(ConfigError::invalid(field, format!("values must be positive, got {bad}")));
            }
        }
        if !(self.i0.is_finite() && self.i0 >= 0.0) {
            return Err(ConfigError::invalid("init.i0", format!("must be non-negative, got {}", self.i0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConditions {
    State { t_cells: f64, infected: f64, virions: f64 },
    Grid {
        t0_values: Vec<f64>,
        v0_values: Vec<f64>,
        #[serde(default)]
        i0: f64,
    },
}

impl InitialConditions {
    pub fn single(state: State) -> Self {
        InitialConditions::State { t_cells: state.t_cells, infected: state.infected, virions: state.virions }
    }

    pub fn grid(grid: IcGrid) -> Self {
        InitialConditions::Grid { t0_values: grid.t0_values, v0_values: grid.v0_values, i0: grid.i0 }
    }

    pub fn as_grid(&self) -> Option<IcGrid> {
        match self {
            InitialConditions::Grid { t0_values, v0_values, i0 } => {
                Some(IcGrid { t0_values: t0_values.clone(), v0_values: v0_values.clone(), i0: *i0 })
            }
            InitialConditions::State { .. } => None,
        }
    }

    fn cell_states(&self) -> Vec<State> {
        match self {
            InitialConditions::State { t_cells, infected, virions } => vec![State::new(*t_cells, *infected, *virions)],
            InitialConditions::Grid { .. } => self.as_grid().map(|g| g.cells()).unwrap_or_default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            InitialConditions::State { t_cells, infected, virions } => State::new(*t_cells, *infected, *virions)
                .check_admissible()
                .map_err(|e| ConfigError::invalid("init", e.to_string())),
            InitialConditions::Grid { .. } => self.as_grid().map_or(Ok(()), |g| g.validate()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub criterion: PersistenceCriterion,
    pub trials: u64,
    pub master_seed: u64,
    pub init: InitialConditions,
    #[serde(default)]
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("invalid scenario: {0}")]
    Scenario(#[from] StochasticError),
    #[error("invalid integrator settings: {0}")]
    Integrator(#[from] IntegrationError),
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), reason: reason.into() }
    }
}

impl ExperimentConfig {
    /// Checks every field and resolves the scenario.
    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be at least 1"));
        }
        self.criterion.validate()?;
        self.init.validate()?;
        self.integrator.validate()?;
        Ok(self.scenario.resolve()?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub params: Parameters,
    pub r: f64,
    /// Present only under [`PersistenceCriterion::FiniteTime`].
    pub v_at_horizon: Option<f64>,
    pub persisted: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error("trial {trial_index}: parameter sampling failed: {source}")]
    SamplingFailed { trial_index: u64, source: StochasticError },
    #[error("trial {trial_index}: integration failed: {source}")]
    IntegrationFailed { trial_index: u64, source: IntegrationError },
}

impl TrialError {
    pub fn trial_index(&self) -> u64 {
        match self {
            TrialError::SamplingFailed { trial_index, .. } | TrialError::IntegrationFailed { trial_index, .. } => {
                *trial_index
            }
        }
    }
}

/// One trial with given parameters. `AsymptoticR` never integrates and
/// ignores `init`.
pub fn run_trial(
    trial_index: u64,
    params: &Parameters,
    init: State,
    criterion: &PersistenceCriterion,
    integrator: &IntegratorConfig,
) -> Result<TrialOutcome, TrialError> {
    let r = reproduction_number(params);
    match *criterion {
        PersistenceCriterion::AsymptoticR => {
            Ok(TrialOutcome { trial_index, params: *params, r, v_at_horizon: None, persisted: r > 1.0 })
        }
        PersistenceCriterion::FiniteTime { horizon_days, threshold } => {
            let end = state_at(params, init, horizon_days, integrator)
                .map_err(|source| TrialError::IntegrationFailed { trial_index, source })?;
            Ok(TrialOutcome {
                trial_index,
                params: *params,
                r,
                v_at_horizon: Some(end.virions),
                persisted: persists_at_horizon(end.virions, threshold),
            })
        }
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if successes == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let high = if successes == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (low, high)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub scenario: ScenarioTag,
    pub criterion: PersistenceCriterion,
    pub prng: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedTrial {
    pub trial_index: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellEstimate {
    pub init: State,
    pub n_trials: u64,
    pub n_failed: u64,
    pub n_extinct: u64,
    pub p_extinct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceEstimate {
    /// Completed trials: `n_extinct + n_persist`.
    pub n_trials: u64,
    pub n_extinct: u64,
    pub n_persist: u64,
    pub n_failed: u64,
    /// Configured trials left over after an even split across grid cells.
    pub n_dropped: u64,
    pub p_extinct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Per-cell breakdown, present when a grid was used.
    pub cells: Option<Vec<CellEstimate>>,
    pub failures: Vec<FailedTrial>,
    pub provenance: Provenance,
}

impl PersistenceEstimate {
    /// Unweighted mean of the per-cell extinction probabilities.
    pub fn cell_mean_p_extinct(&self) -> Option<f64> {
        let cells = self.cells.as_ref()?;
        Some(cells.iter().map(|c| c.p_extinct).sum::<f64>() / cells.len() as f64)
    }

    /// Largest `|p_cell / p_pooled - 1|` over the grid.
    pub fn max_relative_cell_deviation(&self) -> Option<f64> {
        let cells = self.cells.as_ref()?;
        if self.p_extinct == 0.0 {
            return None;
        }
        Some(cells.iter().map(|c| (c.p_extinct / self.p_extinct - 1.0).abs()).fold(0.0, f64::max))
    }

    /// Mean extinction probability for each T0, averaged over V0.
    pub fn marginal_by_t0(&self) -> Vec<(f64, f64)> {
        self.marginal(|s| s.t_cells)
    }

    /// Mean extinction probability for each V0, averaged over T0.
    pub fn marginal_by_v0(&self) -> Vec<(f64, f64)> {
        self.marginal(|s| s.virions)
    }

    fn marginal(&self, key: impl Fn(&State) -> f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        for cell in self.cells.iter().flatten() {
            let k = key(&cell.init);
            match out.iter_mut().find(|(x, _, _)| *x == k) {
                Some(entry) => {
                    entry.1 += cell.p_extinct;
                    entry.2 += 1;
                }
                None => out.push((k, cell.p_extinct, 1)),
            }
        }
        out.into_iter().map(|(k, sum, n)| (k, sum / n as f64)).collect()
    }
}

/// Row of the optional per-trial log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialLogRow {
    pub trial_index: u64,
    pub r: f64,
    pub v_at_horizon: Option<f64>,
    pub persisted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exemplar {
    pub trial_index: u64,
    pub params: Parameters,
    pub init: State,
    pub r: f64,
    pub v_at_horizon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DisagreementSet {
    pub count: u64,
    /// Lowest trial indices first, at most [`MAX_EXEMPLARS`].
    pub exemplars: Vec<Exemplar>,
}

impl DisagreementSet {
    fn push(&mut self, ex: Exemplar) {
        self.count += 1;
        self.exemplars.push(ex);
        self.trim();
    }

    fn merge(mut self, other: DisagreementSet) -> Self {
        self.count += other.count;
        self.exemplars.extend(other.exemplars);
        self.trim();
        self
    }

    fn trim(&mut self) {
        self.exemplars.sort_by_key(|e| e.trial_index);
        self.exemplars.truncate(MAX_EXEMPLARS);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementSummary {
    pub n_trials: u64,
    pub n_failed: u64,
    pub extinct_asymptotic: u64,
    pub extinct_finite_time: u64,
    pub p_extinct_asymptotic: f64,
    pub p_extinct_finite_time: f64,
    /// `R > 1` yet `V(horizon)` below threshold.
    pub r_above_one_below_threshold: DisagreementSet,
    /// `R <= 1` yet `V(horizon)` at or above threshold.
    pub r_at_most_one_above_threshold: DisagreementSet,
    pub provenance: Provenance,
}

/// How trials map onto initial conditions.
struct Plan {
    scenario: Scenario,
    inits: Vec<State>,
    per_cell: u64,
    total: u64,
    dropped: u64,
    grid: bool,
}

impl Plan {
    fn new(config: &ExperimentConfig) -> Result<Self, ConfigError> {
        let scenario = config.validate()?;
        let inits = config.init.cell_states();
        let n_cells = inits.len() as u64;
        let per_cell = config.trials / n_cells;
        if per_cell == 0 {
            return Err(ConfigError::invalid(
                "trials",
                format!("{} trials cannot cover {} initial-condition cells", config.trials, n_cells),
            ));
        }
        let total = per_cell * n_cells;
        let dropped = config.trials - total;
        if dropped > 0 {
            warn!("{dropped} trials do not divide evenly over {n_cells} cells and are dropped");
        }
        Ok(Plan { scenario, inits, per_cell, total, dropped, grid: matches!(config.init, InitialConditions::Grid { .. }) })
    }

    fn cell_of(&self, trial_index: u64) -> usize {
        (trial_index / self.per_cell) as usize
    }

    fn run(&self, config: &ExperimentConfig, trial_index: u64) -> Result<TrialOutcome, TrialError> {
        let params = sample_parameters(&self.scenario, SeedSpec::new(config.master_seed, trial_index))
            .map_err(|source| TrialError::SamplingFailed { trial_index, source })?;
        let init = self.inits[self.cell_of(trial_index)];
        run_trial(trial_index, &params, init, &config.criterion, &config.integrator)
    }
}

/// Runs `body` on a dedicated pool of `workers` threads, or on the global
/// pool when `workers` is `None`.
fn with_workers<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T, ConfigError> {
    match workers {
        None => Ok(body()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| ConfigError::Workers(e.to_string()))?;
            Ok(pool.install(body))
        }
    }
}

#[derive(Clone, Default)]
struct CellTally {
    extinct: u64,
    persist: u64,
    failed: u64,
}

#[derive(Clone)]
struct Tally {
    cells: Vec<CellTally>,
    failures: Vec<FailedTrial>,
}

impl Tally {
    fn new(n_cells: usize) -> Self {
        Tally { cells: vec![CellTally::default(); n_cells], failures: Vec::new() }
    }

    fn record(&mut self, cell: usize, result: &Result<TrialOutcome, TrialError>) {
        let tally = &mut self.cells[cell];
        match result {
            Ok(outcome) if outcome.persisted => tally.persist += 1,
            Ok(_) => tally.extinct += 1,
            Err(e) => {
                tally.failed += 1;
                self.failures.push(FailedTrial { trial_index: e.trial_index(), message: e.to_string() });
                self.trim_failures();
            }
        }
    }

    fn merge(mut self, other: Tally) -> Self {
        for (a, b) in self.cells.iter_mut().zip(other.cells) {
            a.extinct += b.extinct;
            a.persist += b.persist;
            a.failed += b.failed;
        }
        self.failures.extend(other.failures);
        self.trim_failures();
        self
    }

    fn trim_failures(&mut self) {
        self.failures.sort_by_key(|f| f.trial_index);
        self.failures.truncate(MAX_FAILURE_DETAILS);
    }
}

fn provenance(config: &ExperimentConfig, scenario: &Scenario) -> Provenance {
    Provenance {
        master_seed: config.master_seed,
        scenario: scenario.tag,
        criterion: config.criterion,
        prng: PRNG_IDENTITY,
    }
}

fn summarize(config: &ExperimentConfig, plan: &Plan, tally: Tally) -> PersistenceEstimate {
    let extinct: u64 = tally.cells.iter().map(|c| c.extinct).sum();
    let persist: u64 = tally.cells.iter().map(|c| c.persist).sum();
    let failed: u64 = tally.cells.iter().map(|c| c.failed).sum();
    let n = extinct + persist;
    let (ci_low, ci_high) = wilson_interval(extinct, n, Z_95);
    let cells = plan.grid.then(|| {
        tally
            .cells
            .iter()
            .zip(plan.inits.iter())
            .map(|(c, init)| {
                let n_cell = c.extinct + c.persist;
                let (lo, hi) = wilson_interval(c.extinct, n_cell, Z_95);
                CellEstimate {
                    init: *init,
                    n_trials: n_cell,
                    n_failed: c.failed,
                    n_extinct: c.extinct,
                    p_extinct: if n_cell == 0 { 0.0 } else { c.extinct as f64 / n_cell as f64 },
                    ci_low: lo,
                    ci_high: hi,
                }
            })
            .collect()
    });
    PersistenceEstimate {
        n_trials: n,
        n_extinct: extinct,
        n_persist: persist,
        n_failed: failed,
        n_dropped: plan.dropped,
        p_extinct: if n == 0 { 0.0 } else { extinct as f64 / n as f64 },
        ci_low,
        ci_high,
        cells,
        failures: tally.failures,
        provenance: provenance(config, &plan.scenario),
    }
}

/// Runs every trial of `config` and aggregates extinction counts.
pub fn estimate(config: &ExperimentConfig, workers: Option<usize>) -> Result<PersistenceEstimate, ConfigError> {
    let plan = Plan::new(config)?;
    let n_cells = plan.inits.len();
    let tally = with_workers(workers, || {
        (0..plan.total)
            .into_par_iter()
            .fold(
                || Tally::new(n_cells),
                |mut acc, i| {
                    acc.record(plan.cell_of(i), &plan.run(config, i));
                    acc
                },
            )
            .reduce(|| Tally::new(n_cells), Tally::merge)
    })?;
    Ok(summarize(config, &plan, tally))
}

/// Like [`estimate`], also returning one log row per completed trial in
/// trial-index order.
pub fn estimate_with_log(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<(PersistenceEstimate, Vec<TrialLogRow>), ConfigError> {
    let plan = Plan::new(config)?;
    let results: Vec<Result<TrialOutcome, TrialError>> =
        with_workers(workers, || (0..plan.total).into_par_iter().map(|i| plan.run(config, i)).collect())?;
    let mut tally = Tally::new(plan.inits.len());
    let mut rows = Vec::with_capacity(results.len());
    for (i, result) in results.iter().enumerate() {
        tally.record(plan.cell_of(i as u64), result);
        if let Ok(o) = result {
            rows.push(TrialLogRow { trial_index: o.trial_index, r: o.r, v_at_horizon: o.v_at_horizon, persisted: o.persisted });
        }
    }
    Ok((summarize(config, &plan, tally), rows))
}

/// [`estimate`] over an initial-condition grid; the result always carries the
/// per-cell breakdown.
pub fn ic_sweep(config: &ExperimentConfig, workers: Option<usize>) -> Result<PersistenceEstimate, ConfigError> {
    if config.init.as_grid().is_none() {
        return Err(ConfigError::invalid("init", "an initial-condition sweep needs `kind = \"grid\"`"));
    }
    estimate(config, workers)
}

#[derive(Clone)]
struct DisagreementTally {
    failed: u64,
    completed: u64,
    extinct_asymptotic: u64,
    extinct_finite_time: u64,
    above: DisagreementSet,
    below: DisagreementSet,
}

impl DisagreementTally {
    fn new() -> Self {
        DisagreementTally {
            failed: 0,
            completed: 0,
            extinct_asymptotic: 0,
            extinct_finite_time: 0,
            above: DisagreementSet::default(),
            below: DisagreementSet::default(),
        }
    }

    fn merge(self, other: Self) -> Self {
        DisagreementTally {
            failed: self.failed + other.failed,
            completed: self.completed + other.completed,
            extinct_asymptotic: self.extinct_asymptotic + other.extinct_asymptotic,
            extinct_finite_time: self.extinct_finite_time + other.extinct_finite_time,
            above: self.above.merge(other.above),
            below: self.below.merge(other.below),
        }
    }
}

/// Compares the asymptotic and finite-time verdicts trial by trial.
pub fn criterion_disagreement(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<DisagreementSummary, ConfigError> {
    if !matches!(config.criterion, PersistenceCriterion::FiniteTime { .. }) {
        return Err(ConfigError::invalid("criterion", "disagreement analysis needs `type = \"finite_time\"`"));
    }
    let plan = Plan::new(config)?;
    let tally = with_workers(workers, || {
        (0..plan.total)
            .into_par_iter()
            .fold(DisagreementTally::new, |mut acc, i| {
                match plan.run(config, i) {
                    Err(_) => acc.failed += 1,
                    Ok(o) => {
                        acc.completed += 1;
                        let asymptotic_persists = o.r > 1.0;
                        acc.extinct_asymptotic += u64::from(!asymptotic_persists);
                        acc.extinct_finite_time += u64::from(!o.persisted);
                        if asymptotic_persists != o.persisted {
                            let ex = Exemplar {
                                trial_index: i,
                                params: o.params,
                                init: plan.inits[plan.cell_of(i)],
                                r: o.r,
                                v_at_horizon: o.v_at_horizon.unwrap_or(f64::NAN),
                            };
                            if asymptotic_persists {
                                acc.above.push(ex);
                            } else {
                                acc.below.push(ex);
                            }
                        }
                    }
                }
                acc
            })
            .reduce(DisagreementTally::new, DisagreementTally::merge)
    })?;
    let n = tally.completed;
    let frac = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(DisagreementSummary {
        n_trials: n,
        n_failed: tally.failed,
        extinct_asymptotic: tally.extinct_asymptotic,
        extinct_finite_time: tally.extinct_finite_time,
        p_extinct_asymptotic: frac(tally.extinct_asymptotic),
        p_extinct_finite_time: frac(tally.extinct_finite_time),
        r_above_one_below_threshold: tally.above,
        r_at_most_one_above_threshold: tally.below,
        provenance: provenance(config, &plan.scenario),
    })
}
