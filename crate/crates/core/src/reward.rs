//! Reward model: booking preference, booking status with anti-spoofing,
//! revenue propensity, expected revenue, the per-request oracle, and regret
//! accounting.
//!
//! The whole reward is a deterministic function of the borrower bid, the
//! quoted fee, the anti-spoofing threshold, and the loan market value:
//!
//! - booking preference is 0 when the bid is below the ask, else ask/bid;
//! - booking status is 0 on a non-match or when the bid falls below
//!   `delta * benchmark` (a spoofing request), else 1;
//! - revenue propensity is the product of the two, in [0, 1];
//! - expected revenue scales propensity by market value and the quoted fee.
//!
//! Because the reward is deterministic, the oracle arm and per-step regret
//! are exactly computable for every logged request.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    ArmId, ArmQuotes, BenchmarkMode, BookingRequest, RewardComponents, SpoofConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("chosen revenue {chosen} exceeds oracle revenue {oracle}; oracle is not maximal")]
    NegativeRegretStep { oracle: f64, chosen: f64 },
    #[error("benchmark mode is fixed-value but no fixed value is configured")]
    MissingFixedValue,
}

/// Fee-closeness reward in [0, 1]: 0 when `bid < ask`, else `ask / bid`.
///
/// The degenerate `bid = ask = 0` case is treated as no economic match and
/// returns 0; use [`booking_preference_flagged`] to observe it.
pub fn booking_preference(bid: f64, ask: f64) -> f64 {
    booking_preference_flagged(bid, ask).0
}

/// [`booking_preference`] plus a flag that is true only in the undefined
/// `bid = ask = 0` case, so callers can keep a warning counter.
pub fn booking_preference_flagged(bid: f64, ask: f64) -> (f64, bool) {
    debug_assert!(bid >= 0.0 && ask >= 0.0);
    if bid < ask {
        (0.0, false)
    } else if bid == 0.0 {
        // bid = ask = 0: 0/0 is undefined, treated as no match.
        (0.0, true)
    } else {
        (ask / bid, false)
    }
}

/// Binary match indicator with anti-spoofing: 0 when the preference is 0 or
/// the bid falls below `delta * benchmark`, else 1.
///
/// A benchmark of 0 disables spoof filtering (no nonnegative bid is below
/// the threshold).
pub fn booking_status(bid: f64, ask: f64, spoof: &SpoofConfig, benchmark: f64) -> bool {
    booking_preference(bid, ask) != 0.0 && bid >= spoof.delta * benchmark
}

/// The bandit reward in [0, 1]: booking preference times booking status.
pub fn revenue_propensity(bid: f64, ask: f64, spoof: &SpoofConfig, benchmark: f64) -> f64 {
    let bp = booking_preference(bid, ask);
    if booking_status(bid, ask, spoof, benchmark) {
        bp
    } else {
        0.0
    }
}

/// Monetary reward: revenue propensity times loan market value times fee.
pub fn expected_revenue(rp: f64, market_value: f64, price: f64) -> f64 {
    debug_assert!(rp >= 0.0 && market_value >= 0.0 && price >= 0.0);
    rp * market_value * price
}

/// Evaluates one arm price against one request and returns the full reward
/// decomposition, with the type's product invariants holding by construction.
pub fn reward_components(
    req: &BookingRequest,
    price: f64,
    spoof: &SpoofConfig,
    benchmark: f64,
) -> RewardComponents {
    let bp = booking_preference(req.bid, price);
    let status = booking_status(req.bid, price, spoof, benchmark);
    let rp = if status { bp } else { 0.0 };
    RewardComponents {
        booking_preference: bp,
        booking_status: status,
        revenue_propensity: rp,
        expected_revenue: expected_revenue(rp, req.market_value, price),
    }
}

/// The revenue-maximizing arm for a request, with its realized revenue.
///
/// Ties break toward the lowest price, then toward the fixed arm order,
/// which biases toward conservative quoting and keeps replays reproducible.
pub fn oracle_arm(
    req: &BookingRequest,
    arms: &ArmQuotes,
    spoof: &SpoofConfig,
    benchmark: f64,
) -> (ArmId, f64) {
    let mut best_arm = ArmId::OwnVwaf;
    let mut best_rev = f64::NEG_INFINITY;
    let mut best_price = f64::INFINITY;
    for (arm, price) in arms.iter() {
        let rp = revenue_propensity(req.bid, price, spoof, benchmark);
        let rev = expected_revenue(rp, req.market_value, price);
        if rev > best_rev || (rev == best_rev && price < best_price) {
            best_arm = arm;
            best_rev = rev;
            best_price = price;
        }
    }
    (best_arm, best_rev)
}

// ---------------------------------------------------------------------------
// Regret accounting
// ---------------------------------------------------------------------------

/// One oracle-vs-policy comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub oracle_arm: ArmId,
    pub chosen_arm: ArmId,
    pub oracle_revenue: f64,
    pub chosen_revenue: f64,
}

/// Running regret over a replay: the cumulative revenue gap between the
/// oracle arm and the policy's arm, each step nonnegative by construction
/// of the oracle.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RegretLedger {
    cumulative_regret: f64,
    records: Vec<RegretRecord>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one step. Rejects `chosen_revenue > oracle_revenue`, which
    /// would signal a broken oracle.
    pub fn push(&mut self, record: RegretRecord) -> Result<(), RewardError> {
        if record.chosen_revenue > record.oracle_revenue {
            return Err(RewardError::NegativeRegretStep {
                oracle: record.oracle_revenue,
                chosen: record.chosen_revenue,
            });
        }
        self.cumulative_regret += record.oracle_revenue - record.chosen_revenue;
        self.records.push(record);
        Ok(())
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.cumulative_regret
    }

    pub fn records(&self) -> &[RegretRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Benchmark resolution
// ---------------------------------------------------------------------------

/// Anything that can report the current market VWAF of a security.
pub trait VwafSource {
    fn market_vwaf(&self, security_id: &str) -> Option<f64>;
}

impl VwafSource for std::collections::HashMap<String, f64> {
    fn market_vwaf(&self, security_id: &str) -> Option<f64> {
        self.get(security_id).copied()
    }
}

/// Resolves the anti-spoofing benchmark `C` for one security.
///
/// Fixed-value mode returns the configured fee; market-VWAF mode returns the
/// security's current market VWAF, or 0 (spoofing disabled) when the source
/// has never seen the security.
pub fn resolve_benchmark(
    security_id: &str,
    spoof: &SpoofConfig,
    source: &dyn VwafSource,
) -> Result<f64, RewardError> {
    match spoof.benchmark_mode {
        BenchmarkMode::FixedValue => spoof.fixed_value.ok_or(RewardError::MissingFixedValue),
        BenchmarkMode::MarketVwaf => Ok(source.market_vwaf(security_id).unwrap_or(0.0)),
    }
}
