//! Pricing policies: four contextual-bandit learners and four fixed
//! baseline quotes behind one interface.
//!
//! The bandit policies are LinUCB (direct revenue estimation with a linear
//! confidence bound) and three variants sharing a regularized-logistic
//! booking-status backbone: upper confidence bound (LRUCB), Thompson
//! sampling (LRTS), and epsilon-greedy (EG). The baselines always quote
//! their own arm and learn nothing.
//!
//! Selection reads policy state immutably; randomness comes from a caller
//! supplied seeded generator, so identical (state, t, rng) yields identical
//! decisions. Updates observe feedback for the chosen arm only.

mod linucb;
mod logistic;

pub use linucb::{LinUcbArmState, LinUcbPolicy};
pub use logistic::{LogisticArmState, LogisticPolicy, LogisticVariant, NewtonOutcome, StatusMode};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ArmId, ArmQuotes, BookingRequest, PerArm};
use crate::reward::booking_preference;

/// Deterministic generator threaded through selection.
pub type PolicyRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("ridge matrix is not positive definite for arm {arm}; state is corrupt")]
    SingularMatrix { arm: ArmId },
    #[error("context dimension mismatch: state has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("epsilon schedule invalid: epsilon0 {epsilon0}, floor {floor}")]
    InvalidEpsilonSchedule { epsilon0: f64, floor: f64 },
    #[error("lambda must be > 0, got {lambda}")]
    InvalidLambda { lambda: f64 },
    #[error("snapshot kind does not match policy {policy}")]
    SnapshotMismatch { policy: String },
}

/// One pricing decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub chosen_arm: ArmId,
    /// The score each arm received; the chosen arm attains the maximum
    /// unless `explored` is set.
    pub estimated_reward_per_arm: PerArm<f64>,
    /// True only when epsilon-greedy's uniform-random branch fired.
    pub explored: bool,
}

/// Realized outcome of the chosen arm, computed by the replay engine from
/// the logged bid. Each policy consumes the part it learns from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    /// Realized booking status (the logistic backbone's label).
    pub status: bool,
    /// Realized expected revenue in USD (LinUCB's regression target).
    pub revenue: f64,
}

/// Common interface over the eight pricing policies.
pub trait Policy: Send {
    /// Chooses an arm for request `req` with context `features` at step `t`
    /// (the request ordinal within the current run, used by decaying
    /// exploration schedules). State is read-only; randomness comes from
    /// `rng`.
    fn select(
        &self,
        t: u64,
        features: &[f64],
        req: &BookingRequest,
        arms: &ArmQuotes,
        rng: &mut PolicyRng,
    ) -> Result<PolicyDecision, PolicyError>;

    /// Observes feedback for the chosen arm only (partial feedback).
    fn update(&mut self, features: &[f64], chosen: ArmId, feedback: &Feedback);

    /// Returns to the cold-start state.
    fn reset(&mut self);

    /// Serializable snapshot of the learned state.
    fn state(&self) -> PolicyState;

    /// Replaces the learned state from a snapshot of the same kind/shape.
    fn restore(&mut self, state: &PolicyState) -> Result<(), PolicyError>;
}

/// Serializable learned state, embedded in versioned snapshot files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyState {
    LinUcb { arms: Vec<LinUcbArmState> },
    Logistic { arms: Vec<LogisticArmState> },
    Baseline,
}

/// Argmax over arms with the fixed-order tie-break (earlier arm wins ties).
pub(crate) fn argmax_arm(scores: &PerArm<f64>) -> ArmId {
    let mut best = ArmId::OwnVwaf;
    for arm in ArmId::ALL {
        if *scores.get(arm) > *scores.get(best) {
            best = arm;
        }
    }
    best
}

/// Converts a booking-status estimate into an estimated revenue for one arm:
/// `status_estimate * booking_preference(bid, price) * market_value * price`.
///
/// The preference factor is exact because the borrower bid is observed
/// before the quote goes out; only the status is learned.
pub fn cb_score_arm(status_estimate: f64, bid: f64, price: f64, market_value: f64) -> f64 {
    status_estimate * booking_preference(bid, price) * market_value * price
}

// ---------------------------------------------------------------------------
// Epsilon-greedy exploration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonDecay {
    Constant,
    InverseT,
}

/// Exploration-rate schedule for epsilon-greedy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub epsilon0: f64,
    pub decay: EpsilonDecay,
    pub floor: f64,
}

impl EpsilonSchedule {
    pub fn new(epsilon0: f64, decay: EpsilonDecay, floor: f64) -> Result<Self, PolicyError> {
        if !(epsilon0 > 0.0 && epsilon0 <= 1.0 && (0.0..1.0).contains(&floor) && floor <= epsilon0)
        {
            return Err(PolicyError::InvalidEpsilonSchedule { epsilon0, floor });
        }
        Ok(EpsilonSchedule {
            epsilon0,
            decay,
            floor,
        })
    }

    /// Effective epsilon at step `t`, always within `[floor, epsilon0]`.
    pub fn epsilon(&self, t: u64) -> f64 {
        match self.decay {
            EpsilonDecay::Constant => self.epsilon0,
            EpsilonDecay::InverseT => (self.epsilon0 / (t as f64 + 1.0)).max(self.floor),
        }
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            epsilon0: 0.1,
            decay: EpsilonDecay::Constant,
            floor: 0.0,
        }
    }
}

/// With probability `epsilon` replaces the greedy decision by a uniform
/// random arm flagged as explored; otherwise passes the greedy decision
/// through.
pub fn eg_select(greedy: PolicyDecision, epsilon: f64, rng: &mut PolicyRng) -> PolicyDecision {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let arm = ArmId::from_index(rng.random_range(0..4)).expect("index < 4");
        PolicyDecision {
            chosen_arm: arm,
            explored: true,
            ..greedy
        }
    } else {
        greedy
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// A fixed non-bandit pricing policy: always quotes its own arm, never
/// looks at context, never learns.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    arm: ArmId,
}

impl BaselinePolicy {
    pub fn new(arm: ArmId) -> Self {
        BaselinePolicy { arm }
    }
}

impl Policy for BaselinePolicy {
    fn select(
        &self,
        _t: u64,
        _features: &[f64],
        _req: &BookingRequest,
        _arms: &ArmQuotes,
        _rng: &mut PolicyRng,
    ) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision {
            chosen_arm: self.arm,
            estimated_reward_per_arm: PerArm::from_fn(|a| f64::from(u8::from(a == self.arm))),
            explored: false,
        })
    }

    fn update(&mut self, _features: &[f64], _chosen: ArmId, _feedback: &Feedback) {}

    fn reset(&mut self) {}

    fn state(&self) -> PolicyState {
        PolicyState::Baseline
    }

    fn restore(&mut self, state: &PolicyState) -> Result<(), PolicyError> {
        match state {
            PolicyState::Baseline => Ok(()),
            _ => Err(PolicyError::SnapshotMismatch {
                policy: self.arm.label().to_string(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Policy specification (config surface)
// ---------------------------------------------------------------------------

/// Whether Algorithm 1's `q <- lambda` initialization reads lambda as a
/// precision (default) or as a variance. Internally q is always a
/// precision; variance mode initializes it to 1/lambda.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QInit {
    #[default]
    Precision,
    Variance,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    1.0
}

/// Declarative policy configuration, as read from replay config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    LinUcb {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Lrucb {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        alpha_per_arm: Option<[f64; 4]>,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        q_init: QInit,
    },
    Lrts {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        q_init: QInit,
    },
    Eg {
        #[serde(default)]
        epsilon: EpsilonSchedule,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        q_init: QInit,
    },
    OwnVwaf,
    MlBased,
    MarketVwaf,
    RuleBased,
}

impl PolicySpec {
    /// Stable report/CLI name.
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::LinUcb { .. } => "linucb",
            PolicySpec::Lrucb { .. } => "lrucb",
            PolicySpec::Lrts { .. } => "lrts",
            PolicySpec::Eg { .. } => "eg",
            PolicySpec::OwnVwaf => "own-vwaf",
            PolicySpec::MlBased => "ml-based",
            PolicySpec::MarketVwaf => "market-vwaf",
            PolicySpec::RuleBased => "rule-based",
        }
    }

    /// Parses a CLI policy name into a spec with default parameters.
    pub fn from_name(name: &str) -> Option<PolicySpec> {
        match name {
            "linucb" => Some(PolicySpec::LinUcb { alpha: 1.0 }),
            "lrucb" => Some(PolicySpec::Lrucb {
                alpha: 1.0,
                alpha_per_arm: None,
                lambda: 1.0,
                q_init: QInit::Precision,
            }),
            "lrts" => Some(PolicySpec::Lrts {
                lambda: 1.0,
                q_init: QInit::Precision,
            }),
            "eg" => Some(PolicySpec::Eg {
                epsilon: EpsilonSchedule::default(),
                lambda: 1.0,
                q_init: QInit::Precision,
            }),
            "own-vwaf" => Some(PolicySpec::OwnVwaf),
            "ml-based" => Some(PolicySpec::MlBased),
            "market-vwaf" => Some(PolicySpec::MarketVwaf),
            "rule-based" => Some(PolicySpec::RuleBased),
            _ => None,
        }
    }

    /// The full eight-policy roster: the four baselines, then the four
    /// bandit policies, all with default parameters.
    pub fn default_roster() -> Vec<PolicySpec> {
        [
            "own-vwaf",
            "ml-based",
            "market-vwaf",
            "rule-based",
            "linucb",
            "lrucb",
            "eg",
            "lrts",
        ]
        .iter()
        .map(|n| PolicySpec::from_name(n).expect("roster names are valid"))
        .collect()
    }

    /// Instantiates the policy for context dimension `d`.
    pub fn build(&self, d: usize) -> Result<Box<dyn Policy>, PolicyError> {
        let q0 = |lambda: f64, q_init: QInit| -> Result<f64, PolicyError> {
            if lambda.is_nan() || lambda <= 0.0 {
                return Err(PolicyError::InvalidLambda { lambda });
            }
            Ok(match q_init {
                QInit::Precision => lambda,
                QInit::Variance => 1.0 / lambda,
            })
        };
        Ok(match *self {
            PolicySpec::LinUcb { alpha } => Box::new(LinUcbPolicy::new(d, alpha)),
            PolicySpec::Lrucb {
                alpha,
                alpha_per_arm,
                lambda,
                q_init,
            } => {
                let alphas = alpha_per_arm.unwrap_or([alpha; 4]);
                Box::new(LogisticPolicy::new(
                    d,
                    q0(lambda, q_init)?,
                    LogisticVariant::Ucb {
                        alpha_per_arm: alphas,
                    },
                ))
            }
            PolicySpec::Lrts { lambda, q_init } => Box::new(LogisticPolicy::new(
                d,
                q0(lambda, q_init)?,
                LogisticVariant::Thompson,
            )),
            PolicySpec::Eg {
                epsilon,
                lambda,
                q_init,
            } => {
                EpsilonSchedule::new(epsilon.epsilon0, epsilon.decay, epsilon.floor)?;
                Box::new(LogisticPolicy::new(
                    d,
                    q0(lambda, q_init)?,
                    LogisticVariant::EpsilonGreedy { schedule: epsilon },
                ))
            }
            PolicySpec::OwnVwaf => Box::new(BaselinePolicy::new(ArmId::OwnVwaf)),
            PolicySpec::MlBased => Box::new(BaselinePolicy::new(ArmId::MlBased)),
            PolicySpec::MarketVwaf => Box::new(BaselinePolicy::new(ArmId::MarketVwaf)),
            PolicySpec::RuleBased => Box::new(BaselinePolicy::new(ArmId::RuleBased)),
        })
    }

    pub fn is_bandit(&self) -> bool {
        matches!(
            self,
            PolicySpec::LinUcb { .. }
                | PolicySpec::Lrucb { .. }
                | PolicySpec::Lrts { .. }
                | PolicySpec::Eg { .. }
        )
    }
}
