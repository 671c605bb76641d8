//! Simulation and analysis of the three-component in-host HIV model.
//!
//! * [`model`]: parameters, state, vector field, Jacobian, reproduction
//!   number and the two equilibria.
//! * [`cubic`] and [`stability`]: characteristic polynomials, eigenvalues,
//!   Routh–Hurwitz and the local stability report.
//! * [`integrator`]: fixed-step RK4 and adaptive Dormand–Prince integration.
//! * [`stochastic`]: parameter distributions, sampling scenarios and seeding.
//! * [`montecarlo`]: persistence trials, estimates, initial-condition sweeps
//!   and criterion disagreement.
//! * [`report`]: the JSON and CSV documents written by the command-line tool.

pub mod cubic;
pub mod integrator;
pub mod model;
pub mod montecarlo;
pub mod report;
pub mod stability;
pub mod stochastic;

pub use cubic::{cubic_roots, routh_hurwitz_stable, CubicCoefficients};
pub use integrator::{integrate, state_at, IntegrationError, IntegratorConfig, Method, Trajectory};
pub use model::{
    extinction_equilibrium, jacobian, persistence_equilibrium, reproduction_number, rhs, ModelError, Parameters,
    State,
};
pub use montecarlo::{
    criterion_disagreement, estimate, ic_sweep, run_trial, ConfigError, ExperimentConfig, IcGrid, InitialConditions,
    PersistenceCriterion, PersistenceEstimate,
};
pub use stability::{characteristic_coefficients_persistence, classify, StabilityReport, StableEquilibrium};
pub use stochastic::{builtin_scenarios, sample_parameters, Distribution, Scenario, ScenarioTag, SeedSpec};
