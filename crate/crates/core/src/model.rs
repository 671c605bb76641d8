//! The three-component (T, I, V) in-host infection model.
//!
//! ```text
//!     dT/dt = λ - μT - kTV
//!     dI/dt = kTV - δI
//!     dV/dt = pI - cV
//! ```
//!
//! `T` is the healthy T-cell density (cells/μL), `I` the infected T-cell
//! density (cells/μL) and `V` the free virion density (copies/μL). Time is
//! measured in days.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A 3×3 real matrix stored row-major.
pub type Matrix3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` must be finite and strictly positive (got {value})")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("state component `{name}` must be finite (got {value})")]
    NonFiniteState { name: &'static str, value: f64 },
    #[error("state component `{name}` must be non-negative (got {value})")]
    NegativeState { name: &'static str, value: f64 },
}

/// The six rate constants of the model.
///
/// Every field is finite and strictly positive; [`Parameters::new`] and
/// deserialization both enforce this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParameters")]
pub struct Parameters {
    /// T-cell growth rate, μL⁻¹·day⁻¹.
    lambda: f64,
    /// T-cell death rate, day⁻¹.
    mu: f64,
    /// Infection rate, μL·day⁻¹.
    k: f64,
    /// Infected T-cell death rate, day⁻¹.
    delta: f64,
    /// Virion production rate, day⁻¹.
    p: f64,
    /// Virion clearance rate, day⁻¹.
    c: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    lambda: f64,
    mu: f64,
    k: f64,
    delta: f64,
    p: f64,
    c: f64,
}

impl TryFrom<RawParameters> for Parameters {
    type Error = ModelError;

    fn try_from(raw: RawParameters) -> Result<Self, Self::Error> {
        Parameters::new(raw.lambda, raw.mu, raw.k, raw.delta, raw.p, raw.c)
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter { name, value })
    }
}

impl Parameters {
    /// Mean values observed in the clinical cohort the model was fitted to.
    pub const TABLE1_MEANS: Parameters = Parameters {
        lambda: 0.1089,
        mu: 0.01089,
        k: 1.179e-3,
        delta: 0.3660,
        p: 1427.0,
        c: 3.0,
    };

    /// Lower ends of the observed parameter ranges.
    pub const TABLE1_MIN: Parameters = Parameters {
        lambda: 0.043,
        mu: 0.0043,
        k: 1.9e-4,
        delta: 0.13,
        p: 98.0,
        c: 3.0,
    };

    /// Upper ends of the observed parameter ranges.
    pub const TABLE1_MAX: Parameters = Parameters {
        lambda: 0.2,
        mu: 0.02,
        k: 4.8e-3,
        delta: 0.8,
        p: 7.1e3,
        c: 3.0,
    };

    pub fn new(lambda: f64, mu: f64, k: f64, delta: f64, p: f64, c: f64) -> Result<Self, ModelError> {
        Ok(Parameters {
            lambda: check_positive("lambda", lambda)?,
            mu: check_positive("mu", mu)?,
            k: check_positive("k", k)?,
            delta: check_positive("delta", delta)?,
            p: check_positive("p", p)?,
            c: check_positive("c", c)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn c(&self) -> f64 {
        self.c
    }

    /// `(lambda, mu, k, delta, p, c)`
    pub fn as_tuple(&self) -> (f64, f64, f64, f64, f64, f64) {
        (self.lambda, self.mu, self.k, self.delta, self.p, self.c)
    }

    /// Returns a copy with `k` replaced, validating the new value.
    pub fn with_k(&self, k: f64) -> Result<Self, ModelError> {
        Ok(Parameters { k: check_positive("k", k)?, ..*self })
    }
}

/// Population densities at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    /// Healthy T-cells, cells/μL.
    pub t_cells: f64,
    /// Infected T-cells, cells/μL.
    pub infected: f64,
    /// Free virions, copies/μL.
    pub virions: f64,
}

impl State {
    pub const ZERO: State = State { t_cells: 0.0, infected: 0.0, virions: 0.0 };

    pub const fn new(t_cells: f64, infected: f64, virions: f64) -> Self {
        State { t_cells, infected, virions }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        State::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t_cells, self.infected, self.virions]
    }

    pub fn is_finite(&self) -> bool {
        self.t_cells.is_finite() && self.infected.is_finite() && self.virions.is_finite()
    }

    fn named(&self) -> [(&'static str, f64); 3] {
        [("t_cells", self.t_cells), ("infected", self.infected), ("virions", self.virions)]
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        for (name, value) in self.named() {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteState { name, value });
            }
        }
        Ok(())
    }

    /// Finite and componentwise non-negative; required of initial conditions.
    pub fn check_admissible(&self) -> Result<(), ModelError> {
        self.check_finite()?;
        for (name, value) in self.named() {
            if value < 0.0 {
                return Err(ModelError::NegativeState { name, value });
            }
        }
        Ok(())
    }
}

/// Time derivative of the state, `(dT/dt, dI/dt, dV/dt)`.
#[inline]
pub fn rhs(params: &Parameters, state: &State) -> [f64; 3] {
    rhs_array(params, &state.to_array())
}

#[inline]
pub(crate) fn rhs_array(params: &Parameters, y: &[f64; 3]) -> [f64; 3] {
    let infection = params.k * y[0] * y[2];
    [
        params.lambda - params.mu * y[0] - infection,
        infection - params.delta * y[1],
        params.p * y[1] - params.c * y[2],
    ]
}

/// Jacobian of [`rhs`] with respect to `(T, I, V)`.
pub fn jacobian(params: &Parameters, state: &State) -> Matrix3 {
    let (t, v) = (state.t_cells, state.virions);
    let Parameters { mu, k, delta, p, c, .. } = *params;
    [
        [-k * v - mu, 0.0, -k * t],
        [k * v, -delta, k * t],
        [0.0, p, -c],
    ]
}

/// Basic reproduction number `kpλ / (cδμ)`.
pub fn reproduction_number(params: &Parameters) -> f64 {
    (params.k * params.p * params.lambda) / (params.c * params.delta * params.mu)
}

/// The virus-free steady state `(λ/μ, 0, 0)`.
pub fn extinction_equilibrium(params: &Parameters) -> State {
    State::new(params.lambda / params.mu, 0.0, 0.0)
}

/// The endemic steady state, returned together with its admissibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PersistenceEquilibrium {
    pub state: State,
    /// All three components strictly positive (equivalently `R > 1`).
    pub admissible: bool,
}

/// `(cδ/(pk), λ/δ - μc/(kp), pλ/(cδ) - μ/k)`.
///
/// Always returned; when `R <= 1` the infected and virion components are
/// non-positive and `admissible` is false.
pub fn persistence_equilibrium(params: &Parameters) -> PersistenceEquilibrium {
    let Parameters { lambda, mu, k, delta, p, c } = *params;
    let state = State::new(
        c * delta / (p * k),
        lambda / delta - mu * c / (k * p),
        p * lambda / (c * delta) - mu / k,
    );
    let admissible = state.t_cells > 0.0 && state.infected > 0.0 && state.virions > 0.0;
    PersistenceEquilibrium { state, admissible }
}

/// The same equilibrium written through `R`:
/// `(λ/(μR), λ(R-1)/(δR), μ(R-1)/k)`.
pub fn persistence_equilibrium_r_form(params: &Parameters) -> State {
    let r = reproduction_number(params);
    let Parameters { lambda, mu, k, delta, .. } = *params;
    State::new(lambda / (mu * r), lambda * (r - 1.0) / (delta * r), mu * (r - 1.0) / k)
}
