//! Disjoint LinUCB: an independent ridge regression of realized revenue per
//! arm, scored with an upper confidence bound in the design-matrix metric.

use serde::{Deserialize, Serialize};

use crate::domain::{ArmId, ArmQuotes, BookingRequest, PerArm};
use crate::linalg;
use crate::policies::{
    argmax_arm, Feedback, Policy, PolicyDecision, PolicyError, PolicyRng, PolicyState,
};

/// Per-arm ridge state: `a = I + sum x xT`, `b = sum reward * x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinUcbArmState {
    d: usize,
    /// Row-major `d x d`, symmetric positive definite by construction.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinUcbArmState {
    pub fn new(d: usize) -> Self {
        LinUcbArmState {
            d,
            a: linalg::identity(d),
            b: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Ridge coefficients `a^-1 b`. None if the matrix lost positive
    /// definiteness, which indicates corrupted state.
    pub fn theta(&self) -> Option<Vec<f64>> {
        let l = linalg::cholesky_factor(&self.a, self.d)?;
        Some(linalg::cholesky_solve(&l, self.d, &self.b))
    }

    /// `theta . x + alpha * sqrt(x^T a^-1 x)`. The radicand is clamped at
    /// zero against floating-point dust; it is nonnegative for any true SPD
    /// state.
    pub fn score(&self, x: &[f64], alpha: f64) -> Option<f64> {
        let l = linalg::cholesky_factor(&self.a, self.d)?;
        let theta = linalg::cholesky_solve(&l, self.d, &self.b);
        let a_inv_x = linalg::cholesky_solve(&l, self.d, x);
        let width = linalg::dot(x, &a_inv_x).max(0.0).sqrt();
        Some(linalg::dot(&theta, x) + alpha * width)
    }

    /// Rank-one design update plus target accumulation.
    pub fn update(&mut self, x: &[f64], reward: f64) {
        linalg::add_outer(&mut self.a, self.d, x);
        for (bi, xi) in self.b.iter_mut().zip(x) {
            *bi += reward * xi;
        }
    }
}

/// LinUCB over the four quote arms, learning revenue directly.
#[derive(Debug, Clone)]
pub struct LinUcbPolicy {
    d: usize,
    alpha: f64,
    arms: PerArm<LinUcbArmState>,
}

impl LinUcbPolicy {
    /// `alpha` scales the confidence bonus; zero degenerates to pure ridge
    /// exploitation.
    pub fn new(d: usize, alpha: f64) -> Self {
        LinUcbPolicy {
            d,
            alpha,
            arms: PerArm::from_fn(|_| LinUcbArmState::new(d)),
        }
    }

    pub fn arm_state(&self, arm: ArmId) -> &LinUcbArmState {
        self.arms.get(arm)
    }
}

impl Policy for LinUcbPolicy {
    fn select(
        &self,
        _t: u64,
        features: &[f64],
        _req: &BookingRequest,
        _arms: &ArmQuotes,
        _rng: &mut PolicyRng,
    ) -> Result<PolicyDecision, PolicyError> {
        if features.len() != self.d {
            return Err(PolicyError::DimensionMismatch {
                expected: self.d,
                got: features.len(),
            });
        }
        let mut scores = [0.0; 4];
        for arm in ArmId::ALL {
            scores[arm.index()] = self
                .arms
                .get(arm)
                .score(features, self.alpha)
                .ok_or(PolicyError::SingularMatrix { arm })?;
        }
        let scores = PerArm(scores);
        Ok(PolicyDecision {
            chosen_arm: argmax_arm(&scores),
            estimated_reward_per_arm: scores,
            explored: false,
        })
    }

    fn update(&mut self, features: &[f64], chosen: ArmId, feedback: &Feedback) {
        debug_assert_eq!(features.len(), self.d);
        self.arms.get_mut(chosen).update(features, feedback.revenue);
    }

    fn reset(&mut self) {
        self.arms = PerArm::from_fn(|_| LinUcbArmState::new(self.d));
    }

    fn state(&self) -> PolicyState {
        PolicyState::LinUcb {
            arms: self.arms.iter().map(|(_, s)| s.clone()).collect(),
        }
    }

    fn restore(&mut self, state: &PolicyState) -> Result<(), PolicyError> {
        match state {
            PolicyState::LinUcb { arms }
                if arms.len() == 4 && arms.iter().all(|s| s.d == self.d) =>
            {
                for arm in ArmId::ALL {
                    *self.arms.get_mut(arm) = arms[arm.index()].clone();
                }
                Ok(())
            }
            _ => Err(PolicyError::SnapshotMismatch {
                policy: "linucb".to_string(),
            }),
        }
    }
}
