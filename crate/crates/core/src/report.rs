//! Serialized output documents and CSV tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::integrator::Trajectory;
use crate::montecarlo::{
    CellEstimate, DisagreementSummary, FailedTrial, PersistenceCriterion, PersistenceEstimate, TrialLogRow,
};
use crate::stochastic::ScenarioTag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionDoc {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub horizon_days: Option<f64>,
    pub threshold: Option<f64>,
}

impl From<PersistenceCriterion> for CriterionDoc {
    fn from(c: PersistenceCriterion) -> Self {
        match c {
            PersistenceCriterion::AsymptoticR => CriterionDoc { kind: c.type_name(), horizon_days: None, threshold: None },
            PersistenceCriterion::FiniteTime { horizon_days, threshold } => {
                CriterionDoc { kind: c.type_name(), horizon_days: Some(horizon_days), threshold: Some(threshold) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalDoc {
    pub value: f64,
    pub p_extinct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateDocument {
    pub scenario: ScenarioTag,
    pub criterion: CriterionDoc,
    pub trials: u64,
    pub failed: u64,
    pub extinct: u64,
    pub persist: u64,
    pub p_extinct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
    pub prng: &'static str,
    pub dropped: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_mean_p_extinct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_relative_cell_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_by_t0: Option<Vec<MarginalDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginal_by_v0: Option<Vec<MarginalDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<CellEstimate>>,
    pub failures: Vec<FailedTrial>,
}

impl EstimateDocument {
    pub fn new(est: &PersistenceEstimate) -> Self {
        let marginal = |m: Vec<(f64, f64)>| m.into_iter().map(|(value, p_extinct)| MarginalDoc { value, p_extinct }).collect();
        let grid = est.cells.is_some();
        EstimateDocument {
            scenario: est.provenance.scenario,
            criterion: est.provenance.criterion.into(),
            trials: est.n_trials,
            failed: est.n_failed,
            extinct: est.n_extinct,
            persist: est.n_persist,
            p_extinct: est.p_extinct,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            master_seed: est.provenance.master_seed,
            prng: est.provenance.prng,
            dropped: est.n_dropped,
            cell_mean_p_extinct: est.cell_mean_p_extinct(),
            max_relative_cell_deviation: est.max_relative_cell_deviation(),
            marginal_by_t0: grid.then(|| marginal(est.marginal_by_t0())),
            marginal_by_v0: grid.then(|| marginal(est.marginal_by_v0())),
            cells: est.cells.clone(),
            failures: est.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementDocument<'a> {
    pub scenario: ScenarioTag,
    pub criterion: CriterionDoc,
    pub master_seed: u64,
    pub prng: &'static str,
    #[serde(flatten)]
    pub summary: &'a DisagreementSummary,
}

impl<'a> DisagreementDocument<'a> {
    pub fn new(summary: &'a DisagreementSummary) -> Self {
        DisagreementDocument {
            scenario: summary.provenance.scenario,
            criterion: summary.provenance.criterion.into(),
            master_seed: summary.provenance.master_seed,
            prng: summary.provenance.prng,
            summary,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document serializes");
    s.push('\n');
    s
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,T,I,V\n");
    for s in &traj.samples {
        let _ = writeln!(out, "{},{},{},{}", s.t, s.state.t_cells, s.state.infected, s.state.virions);
    }
    out
}

/// Per-cell table; empty body when the estimate carries no grid.
pub fn sweep_csv(est: &PersistenceEstimate) -> String {
    let mut out = String::from("T0,V0,trials,extinct,p_extinct,ci_low,ci_high\n");
    for c in est.cells.iter().flatten() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.init.t_cells, c.init.virions, c.n_trials, c.n_extinct, c.p_extinct, c.ci_low, c.ci_high
        );
    }
    out
}

/// `v_at_horizon` is left empty for asymptotic runs.
pub fn trial_log_csv(rows: &[TrialLogRow]) -> String {
    let mut out = String::from("trial_index,R,v_at_horizon,persisted\n");
    for r in rows {
        let v = r.v_at_horizon.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.trial_index, r.r, v, r.persisted);
    }
    out
}
