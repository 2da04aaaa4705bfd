//! Online Bayesian logistic regression of booking status, one independent
//! model per arm, with a diagonal Gaussian posterior maintained by Laplace
//! approximation.
//!
//! Each observation updates the posterior mode `m` by minimizing
//!
//! ```text
//! g(w) = 1/2 * sum_i q_i (w_i - m_i)^2 + ln(1 + exp(-(2y-1) w.x))
//! ```
//!
//! with a damped Newton iteration, then sharpens the diagonal precision
//! `q_i += x_i^2 p (1 - p)` at the new mode. Three selection variants share
//! this state: a confidence bonus added in logit space (LRUCB), posterior
//! sampling (LRTS), and plain exploitation wrapped in epsilon-greedy (EG).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{ArmId, ArmQuotes, BookingRequest, PerArm};
use crate::policies::{
    argmax_arm, cb_score_arm, eg_select, EpsilonSchedule, Feedback, Policy, PolicyDecision,
    PolicyError, PolicyRng, PolicyState,
};

const MAX_NEWTON_ITERS: u32 = 20;
const GRAD_TOL: f64 = 1e-6;
const MAX_BACKTRACKS: u32 = 30;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(u))` without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of one posterior update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewtonOutcome {
    pub converged: bool,
    pub iterations: u32,
}

/// Diagonal Gaussian posterior over logistic weights for one arm.
///
/// `q` is a precision throughout: larger means more certain. It never
/// decreases, so posterior width shrinks monotonically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticArmState {
    m: Vec<f64>,
    q: Vec<f64>,
}

impl LogisticArmState {
    /// Fresh posterior: mode zero, every coordinate at precision `q0 > 0`.
    pub fn new(d: usize, q0: f64) -> Self {
        debug_assert!(q0 > 0.0);
        LogisticArmState {
            m: vec![0.0; d],
            q: vec![q0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.m
    }

    pub fn precision(&self) -> &[f64] {
        &self.q
    }

    /// Exploitation estimate `sigmoid(m.x)`.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.m, x))
    }

    /// Optimistic estimate with the bonus added in logit space:
    /// `sigmoid(m.x + alpha * sqrt(sum x_i^2 / q_i))`. Equals the
    /// exploitation estimate at `alpha = 0` and dominates it for
    /// `alpha >= 0`.
    pub fn ucb(&self, x: &[f64], alpha: f64) -> f64 {
        let width: f64 = x
            .iter()
            .zip(&self.q)
            .map(|(xi, qi)| xi * xi / qi)
            .sum::<f64>()
            .sqrt();
        sigmoid(dot(&self.m, x) + alpha * width)
    }

    /// Posterior-sample estimate: draws `p_i ~ N(m_i, 1/q_i)` per
    /// coordinate and returns `sigmoid(p.x)`. Always consumes exactly
    /// `dim` draws so the caller's generator stream stays aligned.
    pub fn thompson(&self, x: &[f64], rng: &mut PolicyRng) -> f64 {
        let z: f64 = self
            .m
            .iter()
            .zip(&self.q)
            .zip(x)
            .map(|((mi, qi), xi)| {
                let n: f64 = rng.sample(StandardNormal);
                (mi + n / qi.sqrt()) * xi
            })
            .sum();
        sigmoid(z)
    }

    fn objective(&self, w: &[f64], x: &[f64], s: f64) -> f64 {
        let prior: f64 = w
            .iter()
            .zip(&self.m)
            .zip(&self.q)
            .map(|((wi, mi), qi)| 0.5 * qi * (wi - mi) * (wi - mi))
            .sum();
        prior + softplus(-s * dot(w, x))
    }

    fn gradient(&self, w: &[f64], x: &[f64], s: f64) -> Vec<f64> {
        let z = dot(w, x);
        let g = -s * sigmoid(-s * z);
        w.iter()
            .zip(&self.m)
            .zip(&self.q)
            .zip(x)
            .map(|(((wi, mi), qi), xi)| qi * (wi - mi) + g * xi)
            .collect()
    }

    /// Observes label `y` under context `x`: moves the mode to the
    /// regularized-likelihood minimizer (damped Newton, at most
    /// `MAX_NEWTON_ITERS` steps, gradient tolerance `GRAD_TOL`), then
    /// sharpens the precision at the new mode. A zero context is a no-op.
    ///
    /// Non-convergence is logged and reported, not fatal: the last damped
    /// iterate is still a descent point and the precision update keeps the
    /// posterior valid.
    pub fn update(&mut self, x: &[f64], y: bool) -> NewtonOutcome {
        debug_assert_eq!(x.len(), self.m.len());
        let s = if y { 1.0 } else { -1.0 };
        let mut w = self.m.clone();
        let mut iterations = 0u32;
        let mut converged = false;
        loop {
            let grad = self.gradient(&w, x, s);
            let grad_norm = dot(&grad, &grad).sqrt();
            if grad_norm <= GRAD_TOL {
                converged = true;
                break;
            }
            if iterations >= MAX_NEWTON_ITERS {
                break;
            }
            // Newton direction -H^-1 grad with H = diag(q) + c x x^T via
            // the rank-one inverse identity; q > 0 keeps H positive
            // definite for any c >= 0.
            let p = sigmoid(dot(&w, x));
            let c = p * (1.0 - p);
            let dinv_g: Vec<f64> = grad.iter().zip(&self.q).map(|(gi, qi)| gi / qi).collect();
            let dinv_x: Vec<f64> = x.iter().zip(&self.q).map(|(xi, qi)| xi / qi).collect();
            let coef = c * dot(x, &dinv_g) / (1.0 + c * dot(x, &dinv_x));
            let delta: Vec<f64> = dinv_g
                .iter()
                .zip(&dinv_x)
                .map(|(gi, xi)| -(gi - coef * xi))
                .collect();
            let f0 = self.objective(&w, x, s);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                let cand: Vec<f64> = w
                    .iter()
                    .zip(&delta)
                    .map(|(wi, di)| wi + scale * di)
                    .collect();
                if self.objective(&cand, x, s) <= f0 {
                    w = cand;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            iterations += 1;
            if !accepted {
                // at the floor of float resolution; treat as stationary
                break;
            }
        }
        self.m = w;
        let p = sigmoid(dot(&self.m, x));
        for (qi, xi) in self.q.iter_mut().zip(x) {
            *qi += xi * xi * p * (1.0 - p);
        }
        if !converged {
            log::warn!(
                "posterior mode update stopped after {iterations} iterations without reaching \
                 gradient tolerance"
            );
        }
        NewtonOutcome {
            converged,
            iterations,
        }
    }
}

/// How a booking-status estimate is read off the posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatusMode {
    Ucb { alpha: f64 },
    Thompson,
    Greedy,
}

/// Booking-status estimate for one arm under the given mode.
pub fn estimate_status(
    state: &LogisticArmState,
    x: &[f64],
    mode: StatusMode,
    rng: &mut PolicyRng,
) -> f64 {
    match mode {
        StatusMode::Ucb { alpha } => state.ucb(x, alpha),
        StatusMode::Thompson => state.thompson(x, rng),
        StatusMode::Greedy => state.predict_mean(x),
    }
}

/// Selection flavor over the shared logistic backbone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogisticVariant {
    Ucb { alpha_per_arm: [f64; 4] },
    Thompson,
    EpsilonGreedy { schedule: EpsilonSchedule },
}

/// LRUCB, LRTS, or EG depending on the variant.
#[derive(Debug, Clone)]
pub struct LogisticPolicy {
    d: usize,
    q0: f64,
    variant: LogisticVariant,
    arms: PerArm<LogisticArmState>,
}

impl LogisticPolicy {
    pub fn new(d: usize, q0: f64, variant: LogisticVariant) -> Self {
        LogisticPolicy {
            d,
            q0,
            variant,
            arms: PerArm::from_fn(|_| LogisticArmState::new(d, q0)),
        }
    }

    pub fn arm_state(&self, arm: ArmId) -> &LogisticArmState {
        self.arms.get(arm)
    }
}

impl Policy for LogisticPolicy {
    fn select(
        &self,
        t: u64,
        features: &[f64],
        req: &BookingRequest,
        arms: &ArmQuotes,
        rng: &mut PolicyRng,
    ) -> Result<PolicyDecision, PolicyError> {
        if features.len() != self.d {
            return Err(PolicyError::DimensionMismatch {
                expected: self.d,
                got: features.len(),
            });
        }
        let mut scores = [0.0; 4];
        for arm in ArmId::ALL {
            let mode = match self.variant {
                LogisticVariant::Ucb { alpha_per_arm } => StatusMode::Ucb {
                    alpha: alpha_per_arm[arm.index()],
                },
                LogisticVariant::Thompson => StatusMode::Thompson,
                LogisticVariant::EpsilonGreedy { .. } => StatusMode::Greedy,
            };
            let status = estimate_status(self.arms.get(arm), features, mode, rng);
            scores[arm.index()] = cb_score_arm(status, req.bid, arms.price(arm), req.market_value);
        }
        let scores = PerArm(scores);
        let greedy = PolicyDecision {
            chosen_arm: argmax_arm(&scores),
            estimated_reward_per_arm: scores,
            explored: false,
        };
        Ok(match self.variant {
            LogisticVariant::EpsilonGreedy { schedule } => {
                eg_select(greedy, schedule.epsilon(t), rng)
            }
            _ => greedy,
        })
    }

    fn update(&mut self, features: &[f64], chosen: ArmId, feedback: &Feedback) {
        debug_assert_eq!(features.len(), self.d);
        self.arms.get_mut(chosen).update(features, feedback.status);
    }

    fn reset(&mut self) {
        self.arms = PerArm::from_fn(|_| LogisticArmState::new(self.d, self.q0));
    }

    fn state(&self) -> PolicyState {
        PolicyState::Logistic {
            arms: self.arms.iter().map(|(_, s)| s.clone()).collect(),
        }
    }

    fn restore(&mut self, state: &PolicyState) -> Result<(), PolicyError> {
        match state {
            PolicyState::Logistic { arms }
                if arms.len() == 4 && arms.iter().all(|s| s.dim() == self.d) =>
            {
                for arm in ArmId::ALL {
                    *self.arms.get_mut(arm) = arms[arm.index()].clone();
                }
                Ok(())
            }
            _ => Err(PolicyError::SnapshotMismatch {
                policy: "logistic".to_string(),
            }),
        }
    }
}
