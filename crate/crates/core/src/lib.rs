//! Contextual-bandit pricing engine for the securities-lending market.
//!
//! An agent lender receives borrow requests carrying a borrower bid and must
//! quote a lending fee. This crate models that decision as a four-armed
//! contextual bandit: the arms are candidate prices (the lender's own book
//! VWAF, an ML-predicted rate, the market VWAF, and a rule-based rate), the
//! context is a small vector of market supply/demand signals, and the reward
//! is the revenue propensity of the quote: booking preference times booking
//! status, scaled by loan market value and fee.
//!
//! Modules:
//!
//! - [`domain`]: shared value types (requests, contexts, arm quotes) with
//!   validation.
//! - [`reward`]: booking preference, booking status, revenue propensity,
//!   expected revenue, the per-request oracle, and regret accounting.
//! - [`policies`]: LinUCB, the regularized-logistic backbone (UCB, Thompson
//!   sampling, epsilon-greedy variants), and the four fixed baseline quotes.
//! - [`replay`]: offline evaluation over sliding train/test windows, with
//!   full-feedback and replay-match update gating.
//! - [`data`]: transaction-log ingestion, VWAF/EWMA feature derivation, and
//!   a seeded synthetic market generator.

pub mod data;
pub mod domain;
pub mod linalg;
pub mod policies;
pub mod replay;
pub mod reward;

pub use domain::{
    ArmId, ArmQuotes, BenchmarkMode, BookingRequest, ContextVector, DomainError, PerArm,
    RewardComponents, SpoofConfig,
};
pub use policies::{Feedback, Policy, PolicyDecision, PolicySpec};
pub use replay::{ReplayConfig, ReplayError, ReplayMode, ReplayReport};
pub use reward::{RegretLedger, RewardError};
