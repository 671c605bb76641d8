//! Local stability of the two steady states.

use num_complex::Complex64;
use serde::Serialize;

use crate::cubic::{eigenvalues, CubicCoefficients};
use crate::model::{
    extinction_equilibrium, jacobian, persistence_equilibrium, reproduction_number, Parameters, State,
};

/// `|R - 1|` at or below this is reported as [`StableEquilibrium::Boundary`].
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StableEquilibrium {
    Extinction,
    Persistence,
    /// `R = 1`: the two equilibria coincide and linearization is inconclusive.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub r: f64,
    pub extinction_eq: State,
    pub persistence_eq: State,
    pub persistence_eq_admissible: bool,
    pub persistence_coefficients: CubicCoefficients,
    pub eigenvalues_at_extinction: [Complex64; 3],
    pub eigenvalues_at_persistence: [Complex64; 3],
    pub stable_equilibrium: StableEquilibrium,
}

/// Coefficients of the characteristic cubic of the Jacobian at the
/// persistence equilibrium:
///
/// ```text
///     a1 = c + δ + kλp/(cδ)
///     a2 = kλp/δ + kλp/c
///     a3 = kλp - cδμ
/// ```
pub fn characteristic_coefficients_persistence(params: &Parameters) -> CubicCoefficients {
    let (lambda, mu, k, delta, p, c) = params.as_tuple();
    let klp = k * lambda * p;
    CubicCoefficients::new(c + delta + klp / (c * delta), klp / delta + klp / c, klp - c * delta * mu)
}

pub fn stable_equilibrium_for(r: f64) -> StableEquilibrium {
    if (r - 1.0).abs() <= BOUNDARY_TOLERANCE {
        StableEquilibrium::Boundary
    } else if r < 1.0 {
        StableEquilibrium::Extinction
    } else {
        StableEquilibrium::Persistence
    }
}

/// Assembles a full [`StabilityReport`] for one parameter set.
pub fn classify(params: &Parameters) -> StabilityReport {
    let r = reproduction_number(params);
    let extinction_eq = extinction_equilibrium(params);
    let persistence = persistence_equilibrium(params);
    StabilityReport {
        r,
        extinction_eq,
        persistence_eq: persistence.state,
        persistence_eq_admissible: persistence.admissible,
        persistence_coefficients: characteristic_coefficients_persistence(params),
        eigenvalues_at_extinction: eigenvalues(&jacobian(params, &extinction_eq)),
        eigenvalues_at_persistence: eigenvalues(&jacobian(params, &persistence.state)),
        stable_equilibrium: stable_equilibrium_for(r),
    }
}

pub fn max_real_part(roots: &[Complex64]) -> f64 {
    roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}
