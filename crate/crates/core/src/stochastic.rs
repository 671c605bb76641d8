//! Parameter distributions, the two built-in sampling scenarios, and the
//! per-trial seeding contract.
//!
//! Every trial owns its generator: a ChaCha8 stream keyed by the master seed
//! and selected by the trial index, so a trial's parameters never depend on
//! which worker ran it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Parameters};

/// Recorded in every output so results can be regenerated.
pub const PRNG_IDENTITY: &str = "ChaCha8 (rand_chacha 0.9): seed_from_u64(master_seed), set_stream(trial_index)";

/// Consecutive truncated-normal rejections tolerated before giving up.
pub const MAX_REJECTIONS: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StochasticError {
    #[error("invalid distribution for `{param}`: {reason}")]
    InvalidDistribution { param: &'static str, reason: String },
    #[error("truncated normal rejected {rejections} consecutive draws (mean {mean}, sd {sd}, window [{lo}, {hi}])")]
    RejectionBudgetExceeded { rejections: u32, mean: f64, sd: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Parameters(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Constant { value: f64 },
    /// Half-open `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
    /// Normal(mean, sd) conditioned on `[lo, hi]`.
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            Distribution::Constant { value } if !value.is_finite() => Err("value must be finite".into()),
            Distribution::Constant { .. } => Ok(()),
            Distribution::Uniform { lo, hi } => {
                if !finite(&[lo, hi]) {
                    Err("bounds must be finite".into())
                } else if lo >= hi {
                    Err(format!("lo ({lo}) must be below hi ({hi})"))
                } else {
                    Ok(())
                }
            }
            Distribution::Triangular { lo, mode, hi } => {
                if !finite(&[lo, mode, hi]) {
                    Err("bounds must be finite".into())
                } else if lo >= hi {
                    Err(format!("lo ({lo}) must be below hi ({hi})"))
                } else if !(lo <= mode && mode <= hi) {
                    Err(format!("mode ({mode}) must lie in [{lo}, {hi}]"))
                } else {
                    Ok(())
                }
            }
            Distribution::TruncatedNormal { mean, sd, lo, hi } => {
                if !finite(&[mean, sd, lo, hi]) {
                    Err("parameters must be finite".into())
                } else if sd <= 0.0 {
                    Err(format!("sd ({sd}) must be positive"))
                } else if lo >= hi {
                    Err(format!("lo ({lo}) must be below hi ({hi})"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Smallest value the distribution can produce.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { lo, .. }
            | Distribution::Triangular { lo, .. }
            | Distribution::TruncatedNormal { lo, .. } => lo,
        }
    }

    /// Analytic mean, where it has a closed form used by the tests.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            Distribution::Constant { value } => Some(value),
            Distribution::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            Distribution::Triangular { lo, mode, hi } => Some((lo + mode + hi) / 3.0),
            Distribution::TruncatedNormal { .. } => None,
        }
    }

    /// Inverse CDF at `u ∈ [0, 1)` for the distributions that use one.
    pub fn inverse_cdf(&self, u: f64) -> Option<f64> {
        match *self {
            Distribution::Constant { value } => Some(value),
            Distribution::Uniform { lo, hi } => Some(lo + u * (hi - lo)),
            Distribution::Triangular { lo, mode, hi } => {
                let width = hi - lo;
                if u <= (mode - lo) / width {
                    Some(lo + (u * width * (mode - lo)).sqrt())
                } else {
                    Some(hi - ((1.0 - u) * width * (hi - mode)).sqrt())
                }
            }
            Distribution::TruncatedNormal { .. } => None,
        }
    }

    /// One draw. `Constant` consumes no randomness, `Uniform` and
    /// `Triangular` exactly one `u64`, `TruncatedNormal` a variable number.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, StochasticError> {
        match *self {
            Distribution::Constant { value } => Ok(value),
            Distribution::Uniform { lo, hi } => {
                let x = lo + rng.random::<f64>() * (hi - lo);
                // Rounding can land on hi when the interval is tiny relative to lo.
                Ok(if x < hi { x } else { lo })
            }
            Distribution::Triangular { .. } => {
                let u = rng.random::<f64>();
                Ok(self.inverse_cdf(u).expect("triangular has an inverse cdf"))
            }
            Distribution::TruncatedNormal { mean, sd, lo, hi } => {
                for _ in 0..MAX_REJECTIONS {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = mean + sd * z;
                    if (lo..=hi).contains(&x) {
                        return Ok(x);
                    }
                }
                Err(StochasticError::RejectionBudgetExceeded { rejections: MAX_REJECTIONS, mean, sd, lo, hi })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    /// Truncated normals for λ, μ, k, δ and p.
    TruncatedNormal,
    /// Uniform k and p, triangular μ and δ, λ = 10μ.
    UniformTriangular,
}

impl ScenarioTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioTag::TruncatedNormal => "truncated_normal",
            ScenarioTag::UniformTriangular => "uniform_triangular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    Independent { distribution: Distribution },
    /// λ = 10μ, which pins the extinction equilibrium at T = 10 cells/μL.
    TenTimesMu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tag: ScenarioTag,
    pub lambda: LambdaRule,
    pub mu: Distribution,
    pub k: Distribution,
    pub delta: Distribution,
    pub p: Distribution,
    pub c: Distribution,
}

/// Truncated normal over `[min, max]` centred on `mean` with the default
/// spread `sd = (max - min) / 4`.
pub fn default_truncated_normal(min: f64, mean: f64, max: f64) -> Distribution {
    Distribution::TruncatedNormal { mean, sd: (max - min) / 4.0, lo: min, hi: max }
}

impl Scenario {
    pub fn truncated_normal() -> Self {
        let (lo, mid, hi) = (Parameters::TABLE1_MIN, Parameters::TABLE1_MEANS, Parameters::TABLE1_MAX);
        Scenario {
            tag: ScenarioTag::TruncatedNormal,
            lambda: LambdaRule::Independent {
                distribution: default_truncated_normal(lo.lambda(), mid.lambda(), hi.lambda()),
            },
            mu: default_truncated_normal(lo.mu(), mid.mu(), hi.mu()),
            k: default_truncated_normal(lo.k(), mid.k(), hi.k()),
            delta: default_truncated_normal(lo.delta(), mid.delta(), hi.delta()),
            p: default_truncated_normal(lo.p(), mid.p(), hi.p()),
            c: Distribution::Constant { value: 3.0 },
        }
    }

    pub fn uniform_triangular() -> Self {
        Scenario {
            tag: ScenarioTag::UniformTriangular,
            lambda: LambdaRule::TenTimesMu,
            mu: Distribution::Triangular { lo: 0.0043, mode: 0.01089, hi: 0.02 },
            k: Distribution::Uniform { lo: 1.9e-4, hi: 4.8e-3 },
            delta: Distribution::Triangular { lo: 0.13, mode: 0.366, hi: 0.8 },
            p: Distribution::Uniform { lo: 98.0, hi: 7100.0 },
            c: Distribution::Constant { value: 3.0 },
        }
    }

    pub fn builtin(tag: ScenarioTag) -> Self {
        match tag {
            ScenarioTag::TruncatedNormal => Scenario::truncated_normal(),
            ScenarioTag::UniformTriangular => Scenario::uniform_triangular(),
        }
    }

    /// Every distribution valid and supported on positive reals.
    pub fn validate(&self) -> Result<(), StochasticError> {
        let mut entries: Vec<(&'static str, &Distribution)> =
            vec![("k", &self.k), ("p", &self.p), ("mu", &self.mu), ("delta", &self.delta), ("c", &self.c)];
        if let LambdaRule::Independent { distribution } = &self.lambda {
            entries.push(("lambda", distribution));
        }
        for (param, dist) in entries {
            dist.validate().map_err(|reason| StochasticError::InvalidDistribution { param, reason })?;
            if dist.lower_bound() <= 0.0 {
                return Err(StochasticError::InvalidDistribution {
                    param,
                    reason: format!("support must be strictly positive (lower bound {})", dist.lower_bound()),
                });
            }
        }
        Ok(())
    }
}

/// The two sampling scenarios: `(truncated normal, uniform/triangular)`.
pub fn builtin_scenarios() -> (Scenario, Scenario) {
    (Scenario::truncated_normal(), Scenario::uniform_triangular())
}

/// Config-file form of a scenario: a built-in plus per-parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub builtin: ScenarioTag,
    #[serde(default, skip_serializing_if = "Overrides::is_empty")]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Overriding λ switches it to an independent draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Distribution>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }
}

impl ScenarioSpec {
    pub fn builtin(tag: ScenarioTag) -> Self {
        ScenarioSpec { builtin: tag, overrides: Overrides::default() }
    }

    pub fn resolve(&self) -> Result<Scenario, StochasticError> {
        let mut s = Scenario::builtin(self.builtin);
        let o = &self.overrides;
        if let Some(d) = o.lambda {
            s.lambda = LambdaRule::Independent { distribution: d };
        }
        s.mu = o.mu.unwrap_or(s.mu);
        s.k = o.k.unwrap_or(s.k);
        s.delta = o.delta.unwrap_or(s.delta);
        s.p = o.p.unwrap_or(s.p);
        s.c = o.c.unwrap_or(s.c);
        s.validate()?;
        Ok(s)
    }
}

/// Identifies one trial's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        SeedSpec { master_seed, trial_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trial_index);
        rng
    }
}

/// Draws a parameter set in the fixed order k, p, μ, δ, λ, c.
pub fn sample_parameters(scenario: &Scenario, seed: SeedSpec) -> Result<Parameters, StochasticError> {
    let mut rng = seed.rng();
    let k = scenario.k.sample(&mut rng)?;
    let p = scenario.p.sample(&mut rng)?;
    let mu = scenario.mu.sample(&mut rng)?;
    let delta = scenario.delta.sample(&mut rng)?;
    let lambda = match scenario.lambda {
        LambdaRule::Independent { distribution } => distribution.sample(&mut rng)?,
        LambdaRule::TenTimesMu => 10.0 * mu,
    };
    let c = scenario.c.sample(&mut rng)?;
    Ok(Parameters::new(lambda, mu, k, delta, p, c)?)
}
