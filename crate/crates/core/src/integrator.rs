//! Explicit Runge–Kutta integration of the model.
//!
//! Two schemes are available: the classical fixed-step RK4 and the
//! Dormand–Prince 5(4) embedded pair with local error control. Both land
//! exactly on the requested end time by shortening the final step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rhs_array, ModelError, Parameters, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integrator setting `{field}`: {value}")]
    InvalidConfig { field: &'static str, value: f64 },
    #[error("invalid initial state: {0}")]
    InvalidInitialState(#[from] ModelError),
    #[error("end time must be finite and positive (got {0})")]
    InvalidHorizon(f64),
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudgetExceeded { max_steps: u64, t: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
}

impl IntegrationError {
    /// Short machine-readable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            IntegrationError::InvalidConfig { .. } => "invalid_config",
            IntegrationError::InvalidInitialState(_) => "invalid_initial_state",
            IntegrationError::InvalidHorizon(_) => "invalid_horizon",
            IntegrationError::StepBudgetExceeded { .. } => "step_budget_exceeded",
            IntegrationError::NonFiniteState { .. } => "non_finite_state",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedRk4,
    AdaptiveRk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step size in days, used by [`Method::FixedRk4`].
    pub dt: f64,
    /// Relative tolerance, used by [`Method::AdaptiveRk45`].
    pub rel_tol: f64,
    /// Absolute tolerance, used by [`Method::AdaptiveRk45`].
    pub abs_tol: f64,
    /// Upper bound on attempted steps (accepted plus rejected).
    pub max_steps: u64,
    /// Every n-th accepted step is stored in a [`Trajectory`].
    pub record_stride: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::AdaptiveRk45,
            dt: 0.01,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 10_000_000,
            record_stride: 10,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed_rk4(dt: f64) -> Self {
        IntegratorConfig { method: Method::FixedRk4, dt, ..Default::default() }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig { method: Method::AdaptiveRk45, rel_tol, abs_tol, ..Default::default() }
    }

    pub fn with_record_stride(self, record_stride: u64) -> Self {
        IntegratorConfig { record_stride, ..self }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let positive = |field: &'static str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(IntegrationError::InvalidConfig { field, value })
            }
        };
        positive("dt", self.dt)?;
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidConfig { field: "max_steps", value: 0.0 });
        }
        if self.record_stride == 0 {
            return Err(IntegrationError::InvalidConfig { field: "record_stride", value: 0.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub state: State,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub params: Parameters,
    pub config: IntegratorConfig,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }
}

/// Integrates from `t = 0` to `t_end`, recording the initial state, every
/// `record_stride`-th accepted step and the final state at exactly `t_end`.
pub fn integrate(
    params: &Parameters,
    init: State,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(IntegrationError::InvalidHorizon(t_end));
    }
    let mut samples = vec![Sample { t: 0.0, state: init }];
    let stride = config.record_stride.max(1);
    let final_state = drive(params, init, t_end, config, |n, t, y| {
        if n % stride == 0 && t < t_end {
            samples.push(Sample { t, state: State::from_array(*y) });
        }
    })?;
    samples.push(Sample { t: t_end, state: final_state });
    Ok(Trajectory { samples, params: *params, config: *config })
}

/// State at exactly `t_query`, without recording intermediate samples.
pub fn state_at(
    params: &Parameters,
    init: State,
    t_query: f64,
    config: &IntegratorConfig,
) -> Result<State, IntegrationError> {
    if !(t_query.is_finite() && t_query >= 0.0) {
        return Err(IntegrationError::InvalidHorizon(t_query));
    }
    if t_query == 0.0 {
        config.validate()?;
        init.check_admissible()?;
        return Ok(init);
    }
    drive(params, init, t_query, config, |_, _, _| {})
}

/// Runs the configured scheme to `t_end`, calling `on_step(n, t, y)` after
/// the n-th accepted step (n starts at 1).
fn drive<F>(
    params: &Parameters,
    init: State,
    t_end: f64,
    config: &IntegratorConfig,
    on_step: F,
) -> Result<State, IntegrationError>
where
    F: FnMut(u64, f64, &[f64; 3]),
{
    config.validate()?;
    init.check_admissible()?;
    let y = match config.method {
        Method::FixedRk4 => fixed_rk4(params, init.to_array(), t_end, config, on_step)?,
        Method::AdaptiveRk45 => dormand_prince(params, init.to_array(), t_end, config, on_step)?,
    };
    Ok(State::from_array(y))
}

#[inline]
fn axpy(y: &[f64; 3], h: f64, terms: &[(f64, &[f64; 3])]) -> [f64; 3] {
    let mut out = *y;
    for (coef, k) in terms {
        for i in 0..3 {
            out[i] += h * coef * k[i];
        }
    }
    out
}

fn all_finite(y: &[f64; 3]) -> bool {
    y.iter().all(|v| v.is_finite())
}

fn rk4_step(params: &Parameters, y: &[f64; 3], h: f64) -> [f64; 3] {
    let k1 = rhs_array(params, y);
    let k2 = rhs_array(params, &axpy(y, h, &[(0.5, &k1)]));
    let k3 = rhs_array(params, &axpy(y, h, &[(0.5, &k2)]));
    let k4 = rhs_array(params, &axpy(y, h, &[(1.0, &k3)]));
    axpy(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
}

fn fixed_rk4<F>(
    params: &Parameters,
    mut y: [f64; 3],
    t_end: f64,
    config: &IntegratorConfig,
    mut on_step: F,
) -> Result<[f64; 3], IntegrationError>
where
    F: FnMut(u64, f64, &[f64; 3]),
{
    // Grid points are i*dt (not accumulated sums); the last one is t_end.
    let n_steps = ((t_end / config.dt) - 1e-9).ceil().max(1.0) as u64;
    let mut t = 0.0;
    for i in 1..=n_steps {
        if i > config.max_steps {
            return Err(IntegrationError::StepBudgetExceeded { max_steps: config.max_steps, t });
        }
        let t_next = if i == n_steps { t_end } else { i as f64 * config.dt };
        y = rk4_step(params, &y, t_next - t);
        if !all_finite(&y) {
            return Err(IntegrationError::NonFiniteState { t: t_next });
        }
        t = t_next;
        on_step(i, t, &y);
    }
    Ok(y)
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Consecutive non-finite trial steps tolerated before giving up.
const MAX_NON_FINITE_RETRIES: u32 = 60;

/// RMS of the componentwise error scaled by `abs_tol + rel_tol·max(|y|, |y_new|)`.
fn error_norm(err: &[f64; 3], y: &[f64; 3], y_new: &[f64; 3], config: &IntegratorConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        let scale = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
        acc += (err[i] / scale).powi(2);
    }
    (acc / 3.0).sqrt()
}

/// Starting step from the usual derivative-based heuristic.
fn initial_step(params: &Parameters, y: &[f64; 3], f0: &[f64; 3], t_end: f64, config: &IntegratorConfig) -> f64 {
    let scaled_norm = |v: &[f64; 3]| {
        let mut acc = 0.0;
        for i in 0..3 {
            let scale = config.abs_tol + config.rel_tol * y[i].abs();
            acc += (v[i] / scale).powi(2);
        }
        (acc / 3.0).sqrt()
    };
    let d0 = scaled_norm(y);
    let d1 = scaled_norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end);
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = rhs_array(params, &y1);
    let diff = [f1[0] - f0[0], f1[1] - f0[1], f1[2] - f0[2]];
    let d2 = scaled_norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(1.0 / 5.0) };
    let h = (100.0 * h0).min(h1).min(t_end);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6_f64.min(t_end)
    }
}

fn dormand_prince<F>(
    params: &Parameters,
    mut y: [f64; 3],
    t_end: f64,
    config: &IntegratorConfig,
    mut on_step: F,
) -> Result<[f64; 3], IntegrationError>
where
    F: FnMut(u64, f64, &[f64; 3]),
{
    let mut t = 0.0;
    let mut k1 = rhs_array(params, &y);
    let mut h = initial_step(params, &y, &k1, t_end, config);
    let mut attempts: u64 = 0;
    let mut accepted: u64 = 0;
    let mut non_finite_retries = 0;
    let mut last_rejected = false;

    while t < t_end {
        if attempts >= config.max_steps {
            return Err(IntegrationError::StepBudgetExceeded { max_steps: config.max_steps, t });
        }
        attempts += 1;

        // Stretch or shorten to land exactly on t_end.
        let mut reaches_end = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            reaches_end = true;
        }

        let k2 = rhs_array(params, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs_array(params, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs_array(params, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs_array(params, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs_array(params, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs_array(params, &y_new);

        let mut err = [0.0; 3];
        for i in 0..3 {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err_norm = error_norm(&err, &y, &y_new, config);

        if !all_finite(&y_new) || !all_finite(&k7) || !err_norm.is_finite() {
            non_finite_retries += 1;
            if non_finite_retries > MAX_NON_FINITE_RETRIES {
                return Err(IntegrationError::NonFiniteState { t: t + h });
            }
            h *= MIN_FACTOR;
            last_rejected = true;
            continue;
        }
        non_finite_retries = 0;

        if err_norm <= 1.0 {
            t = if reaches_end { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            accepted += 1;
            on_step(accepted, t, &y);
            let factor = if err_norm == 0.0 { MAX_FACTOR } else { SAFETY * err_norm.powf(-0.2) };
            let max_factor = if last_rejected { 1.0 } else { MAX_FACTOR };
            h *= factor.clamp(MIN_FACTOR, max_factor);
            last_rejected = false;
        } else {
            h *= (SAFETY * err_norm.powf(-0.2)).max(MIN_FACTOR);
            last_rejected = true;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extinction_equilibrium, persistence_equilibrium};

    fn low_r() -> Parameters {
        Parameters::new(0.043, 0.0043, 1.9e-4, 0.8, 98.0, 3.0).unwrap()
    }

    #[test]
    fn rejects_bad_config_and_inputs() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(10.0, 0.0, 1.0);
        let bad = IntegratorConfig { dt: 0.0, ..IntegratorConfig::fixed_rk4(0.1) };
        assert!(matches!(integrate(&prm, init, 1.0, &bad), Err(IntegrationError::InvalidConfig { field: "dt", .. })));
        let bad = IntegratorConfig { record_stride: 0, ..Default::default() };
        assert!(matches!(integrate(&prm, init, 1.0, &bad), Err(IntegrationError::InvalidConfig { .. })));
        assert!(matches!(
            integrate(&prm, State::new(-1.0, 0.0, 0.0), 1.0, &Default::default()),
            Err(IntegrationError::InvalidInitialState(_))
        ));
        assert!(matches!(integrate(&prm, init, 0.0, &Default::default()), Err(IntegrationError::InvalidHorizon(_))));
        assert!(matches!(state_at(&prm, init, -1.0, &Default::default()), Err(IntegrationError::InvalidHorizon(_))));
    }

    #[test]
    fn step_budget_is_enforced() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(1000.0, 0.0, 0.001);
        let cfg = IntegratorConfig { max_steps: 5, ..IntegratorConfig::fixed_rk4(0.01) };
        assert!(matches!(integrate(&prm, init, 1.0, &cfg), Err(IntegrationError::StepBudgetExceeded { max_steps: 5, .. })));
        let cfg = IntegratorConfig { max_steps: 5, ..Default::default() };
        assert!(matches!(state_at(&prm, init, 100.0, &cfg), Err(IntegrationError::StepBudgetExceeded { .. })));
    }

    #[test]
    fn overflow_is_reported_as_non_finite() {
        // Huge production with a far-too-large fixed step diverges.
        let prm = Parameters::new(1.0, 0.01, 1.0, 0.1, 1e6, 3.0).unwrap();
        let cfg = IntegratorConfig::fixed_rk4(1.0);
        let err = integrate(&prm, State::new(1000.0, 0.0, 100.0), 200.0, &cfg).unwrap_err();
        assert_eq!(err.kind(), "non_finite_state");
    }

    #[test]
    fn final_sample_lands_on_end_time() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(1000.0, 0.0, 0.001);
        for cfg in [IntegratorConfig::fixed_rk4(0.002), IntegratorConfig::default()] {
            let traj = integrate(&prm, init, 7.77, &cfg).unwrap();
            assert_eq!(traj.samples[0].t, 0.0);
            assert_eq!(traj.last().t, 7.77);
            assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
        }
    }

    #[test]
    fn short_horizon_below_one_step() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(1000.0, 0.0, 0.001);
        let traj = integrate(&prm, init, 0.004, &IntegratorConfig::fixed_rk4(0.01)).unwrap();
        assert_eq!(traj.samples.len(), 2);
        assert_eq!(traj.last().t, 0.004);
    }

    #[test]
    fn record_stride_thins_output() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(1000.0, 0.0, 0.001);
        let dense = integrate(&prm, init, 0.2, &IntegratorConfig::fixed_rk4(0.002).with_record_stride(1)).unwrap();
        let sparse = integrate(&prm, init, 0.2, &IntegratorConfig::fixed_rk4(0.002).with_record_stride(10)).unwrap();
        assert_eq!(dense.samples.len(), 101);
        assert_eq!(sparse.samples.len(), 11);
        assert_eq!(dense.last(), sparse.last());
    }

    #[test]
    fn equilibrium_start_is_a_fixed_point() {
        for prm in [Parameters::TABLE1_MEANS, low_r()] {
            let init = extinction_equilibrium(&prm);
            for cfg in [IntegratorConfig::default(), IntegratorConfig::fixed_rk4(0.05)] {
                let traj = integrate(&prm, init, 50.0, &cfg).unwrap();
                for s in &traj.samples {
                    assert!((s.state.t_cells - init.t_cells).abs() <= 1e-10);
                    assert!(s.state.infected.abs() <= 1e-10 && s.state.virions.abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn state_at_zero_and_consistency_with_integrate() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(1000.0, 0.0, 0.001);
        let cfg = IntegratorConfig::default();
        assert_eq!(state_at(&prm, init, 0.0, &cfg).unwrap(), init);
        let traj = integrate(&prm, init, 25.0, &cfg).unwrap();
        assert_eq!(state_at(&prm, init, 25.0, &cfg).unwrap(), traj.last().state);
    }

    #[test]
    fn rk4_and_rk45_agree_at_sixty_days() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(1000.0, 0.0, 0.001);
        let a = state_at(&prm, init, 60.0, &IntegratorConfig::fixed_rk4(0.002)).unwrap();
        let b = state_at(&prm, init, 60.0, &IntegratorConfig::adaptive(1e-10, 1e-12)).unwrap();
        for (x, y) in a.to_array().iter().zip(b.to_array().iter()) {
            assert!((x - y).abs() <= 1e-4 * y.abs(), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn approaches_persistence_equilibrium_by_day_100() {
        let prm = Parameters::TABLE1_MEANS;
        let end = state_at(&prm, State::new(1000.0, 0.0, 0.001), 100.0, &Default::default()).unwrap();
        let pp = persistence_equilibrium(&prm).state;
        assert!((end.t_cells / pp.t_cells - 1.0).abs() < 0.05);
        assert!((end.virions / pp.virions - 1.0).abs() < 0.05);
    }

    #[test]
    fn subthreshold_virions_decay() {
        let prm = low_r();
        let traj = integrate(&prm, State::new(10.0, 0.0, 100.0), 100.0, &IntegratorConfig::default().with_record_stride(1))
            .unwrap();
        let v: Vec<f64> = traj.samples.iter().map(|s| s.state.virions).collect();
        assert!(*v.last().unwrap() < v[0]);
        assert!(*v.last().unwrap() < 1e-9);
        // After the initial transient the load only falls, until it reaches
        // the absolute-tolerance noise floor.
        let after: Vec<&Sample> = traj.samples.iter().filter(|s| s.t >= 1.0 && s.state.virions > 1e-6).collect();
        assert!(after.len() > 10);
        for w in after.windows(2) {
            assert!(w[1].state.virions <= w[0].state.virions, "{:?} -> {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn bit_identical_reruns() {
        let prm = Parameters::TABLE1_MEANS;
        let init = State::new(500.0, 0.0, 300.0);
        let a = integrate(&prm, init, 60.0, &Default::default()).unwrap();
        let b = integrate(&prm, init, 60.0, &Default::default()).unwrap();
        assert_eq!(a, b);
    }
}
