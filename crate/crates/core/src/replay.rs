//! Offline replay evaluation over sliding train/test windows.
//!
//! Each window replays the log in timestamp order: every policy sees each
//! request, selects an arm, the realized reward of that arm is computed
//! from the logged bid, and the policy is updated when the feedback gate
//! admits it. Only the test segment feeds the report. Learning continues
//! through the test segment unless frozen, matching a purely online
//! evaluation.
//!
//! Two feedback gates exist. Full feedback updates on every request:
//! realized rewards here are a deterministic function of the logged bid and
//! the candidate price, so counterfactual outcomes are exactly computable.
//! Replay-match updates only when the chosen arm equals the logged arm,
//! reproducing classic logged-bandit replay.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LogEvent;
use crate::domain::{ArmId, BenchmarkMode, BookingRequest, PerArm, SpoofConfig};
use crate::policies::{Feedback, PolicyDecision, PolicyError, PolicySpec, PolicyState};
use crate::reward::{self, RegretLedger, RegretRecord, RewardError};

const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("invalid replay config: {reason}")]
    InvalidConfig { reason: String },
    #[error("window starting at day {start_day} has an empty {segment} segment")]
    EmptyWindow {
        start_day: i64,
        segment: &'static str,
    },
    #[error("log spans {days_available} day(s); a window needs {days_required}")]
    InsufficientSpan {
        days_available: i64,
        days_required: i64,
    },
    #[error("request {request_id} lacks a logged arm, required by replay-match mode")]
    MissingLoggedArm { request_id: String },
    #[error("empty decision sequence")]
    EmptySequence,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Feedback gating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    #[default]
    FullFeedback,
    ReplayMatch,
}

/// Full replay configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub mode: ReplayMode,
    pub train_days: u32,
    pub test_days: u32,
    pub spoof: SpoofConfig,
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
    /// Disable test-segment updates (ablation).
    pub freeze_test: bool,
    /// Append a constant intercept to the context vector.
    pub include_bias: bool,
    /// Shifts day boundaries away from midnight UTC.
    pub tz_offset_hours: i32,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            mode: ReplayMode::FullFeedback,
            train_days: 4,
            test_days: 1,
            spoof: SpoofConfig::default(),
            seed: 42,
            policies: PolicySpec::default_roster(),
            freeze_test: false,
            include_bias: true,
            tz_offset_hours: 0,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        let fail = |reason: String| Err(ReplayError::InvalidConfig { reason });
        if self.train_days == 0 || self.test_days == 0 {
            return fail("train_days and test_days must be >= 1".into());
        }
        if self.policies.is_empty() {
            return fail("at least one policy is required".into());
        }
        if !(self.spoof.delta > 0.0 && self.spoof.delta <= 1.0) {
            return fail(format!("delta {} must lie in (0, 1]", self.spoof.delta));
        }
        if self.spoof.benchmark_mode == BenchmarkMode::FixedValue
            && self.spoof.fixed_value.is_none()
        {
            return fail("fixed benchmark mode requires a fixed value".into());
        }
        Ok(())
    }

    fn context_dim(&self) -> usize {
        crate::domain::ContextVector::N_FEATURES + usize::from(self.include_bias)
    }
}

/// Whether the policy may learn from this request's outcome.
pub fn update_gate(
    mode: ReplayMode,
    decision: &PolicyDecision,
    request: &BookingRequest,
) -> Result<bool, ReplayError> {
    match mode {
        ReplayMode::FullFeedback => Ok(true),
        ReplayMode::ReplayMatch => match request.logged_arm {
            Some(logged) => Ok(logged == decision.chosen_arm),
            None => Err(ReplayError::MissingLoggedArm {
                request_id: request.request_id.clone(),
            }),
        },
    }
}

/// Arm-selection frequencies over a decision sequence.
pub fn compute_selection_ratios(decisions: &[ArmId]) -> Result<PerArm<f64>, ReplayError> {
    if decisions.is_empty() {
        return Err(ReplayError::EmptySequence);
    }
    let mut counts = [0u64; 4];
    for d in decisions {
        counts[d.index()] += 1;
    }
    let n = decisions.len() as f64;
    Ok(PerArm(counts.map(|c| c as f64 / n)))
}

/// Presentation merge for the ratio table: the rule arm folds into the ML
/// arm, leaving three rows that still sum to 1.
pub fn merge_rule_into_ml(ratios: &PerArm<f64>) -> [(&'static str, f64); 3] {
    [
        (ArmId::OwnVwaf.label(), *ratios.get(ArmId::OwnVwaf)),
        (
            "ml_based/rule_based",
            ratios.get(ArmId::MlBased) + ratios.get(ArmId::RuleBased),
        ),
        (ArmId::MarketVwaf.label(), *ratios.get(ArmId::MarketVwaf)),
    ]
}

/// One policy's test-segment results on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyWindowReport {
    pub policy: String,
    /// Sum of realized expected revenue over test requests, USD.
    pub revenue: f64,
    /// Cumulative test-segment regret against the oracle arm.
    pub regret: f64,
    /// Fraction of test requests whose chosen arm actually booked.
    pub hit_rate: f64,
    /// Fraction of test decisions equal to the logged arm; present when
    /// every test request carries one.
    pub match_rate: Option<f64>,
    pub selection_ratios: PerArm<f64>,
    pub test_requests: u64,
    /// Updates applied over the whole window (train + test).
    pub updates: u64,
    pub updates_per_arm: PerArm<u64>,
    /// Test decisions taken on the epsilon-greedy random branch.
    pub explored: u64,
}

/// One sliding window's results. Day numbers are relative to the log start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: usize,
    pub start_day: i64,
    pub test_start_day: i64,
    pub end_day: i64,
    pub train_requests: u64,
    pub test_requests: u64,
    /// Pointwise-optimal revenue over the test segment.
    pub oracle_revenue: f64,
    /// Requests where a zero bid met a zero price (0/0 preference treated
    /// as no match).
    pub degenerate_bids: u64,
    pub policies: Vec<PolicyWindowReport>,
}

/// The full evaluation: one report per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub windows: Vec<WindowReport>,
}

impl ReplayReport {
    /// Sum of a policy's test revenue across windows.
    pub fn total_revenue(&self, policy: &str) -> f64 {
        self.windows
            .iter()
            .flat_map(|w| &w.policies)
            .filter(|p| p.policy == policy)
            .map(|p| p.revenue)
            .sum()
    }
}

/// Per-request record from an instrumented replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub policy: String,
    pub request_id: String,
    pub chosen_arm: ArmId,
    pub logged_arm: Option<ArmId>,
    pub in_test: bool,
    pub updated: bool,
    pub explored: bool,
}

fn day_index(timestamp_ms: i64, tz_offset_hours: i32) -> i64 {
    (timestamp_ms + i64::from(tz_offset_hours) * 3_600_000).div_euclid(DAY_MS)
}

fn benchmark_for(event: &LogEvent, spoof: &SpoofConfig) -> f64 {
    match spoof.benchmark_mode {
        // the market-VWAF quote is, by definition, the current market VWAF
        BenchmarkMode::MarketVwaf => event.arms.price(ArmId::MarketVwaf),
        BenchmarkMode::FixedValue => spoof.fixed_value.expect("validated by ReplayConfig"),
    }
}

fn feature_vec(event: &LogEvent, include_bias: bool) -> Vec<f64> {
    let mut ctx = event.context;
    ctx.include_bias = include_bias;
    ctx.features()
}

struct PolicyRun {
    report: PolicyWindowReport,
    state: PolicyState,
    trace: Vec<StepTrace>,
}

#[allow(clippy::too_many_arguments)]
fn run_policy(
    events: &[LogEvent],
    split: usize,
    config: &ReplayConfig,
    spec: &PolicySpec,
    policy_index: usize,
    window_index: usize,
    warm: Option<&PolicyState>,
    want_trace: bool,
) -> Result<PolicyRun, ReplayError> {
    let mut policy = spec.build(config.context_dim())?;
    if let Some(state) = warm {
        policy.restore(state)?;
    }
    // one independent stream per (window, policy) so windows and policies
    // can run in parallel without sharing generator state
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(window_index as u64 * 64 + policy_index as u64);

    let mut revenue = 0.0;
    let mut ledger = RegretLedger::new();
    let mut decisions: Vec<ArmId> = Vec::with_capacity(events.len() - split);
    let mut hits = 0u64;
    let mut matches = 0u64;
    let mut logged_seen = 0u64;
    let mut updates = 0u64;
    let mut updates_per_arm = [0u64; 4];
    let mut explored = 0u64;
    let mut trace = Vec::new();

    for (t, event) in events.iter().enumerate() {
        let features = feature_vec(event, config.include_bias);
        let decision = policy.select(t as u64, &features, &event.request, &event.arms, &mut rng)?;
        let chosen = decision.chosen_arm;
        let price = event.arms.price(chosen);
        let benchmark = benchmark_for(event, &config.spoof);
        let comps = reward::reward_components(&event.request, price, &config.spoof, benchmark);
        let in_test = t >= split;

        if in_test {
            revenue += comps.expected_revenue;
            let (oracle, oracle_revenue) =
                reward::oracle_arm(&event.request, &event.arms, &config.spoof, benchmark);
            ledger.push(RegretRecord {
                oracle_arm: oracle,
                chosen_arm: chosen,
                oracle_revenue,
                chosen_revenue: comps.expected_revenue,
            })?;
            decisions.push(chosen);
            hits += u64::from(comps.booking_status);
            if let Some(logged) = event.request.logged_arm {
                logged_seen += 1;
                matches += u64::from(logged == chosen);
            }
            explored += u64::from(decision.explored);
        }

        let gate = update_gate(config.mode, &decision, &event.request)?;
        let updated = gate && !(in_test && config.freeze_test);
        if updated {
            policy.update(
                &features,
                chosen,
                &Feedback {
                    status: comps.booking_status,
                    revenue: comps.expected_revenue,
                },
            );
            updates += 1;
            updates_per_arm[chosen.index()] += 1;
        }
        if want_trace {
            trace.push(StepTrace {
                policy: spec.name().to_string(),
                request_id: event.request.request_id.clone(),
                chosen_arm: chosen,
                logged_arm: event.request.logged_arm,
                in_test,
                updated,
                explored: decision.explored,
            });
        }
    }

    let test_requests = decisions.len() as u64;
    let report = PolicyWindowReport {
        policy: spec.name().to_string(),
        revenue,
        regret: ledger.cumulative_regret(),
        hit_rate: hits as f64 / test_requests as f64,
        match_rate: (logged_seen == test_requests).then(|| matches as f64 / test_requests as f64),
        selection_ratios: compute_selection_ratios(&decisions)?,
        test_requests,
        updates,
        updates_per_arm: PerArm(updates_per_arm),
        explored,
    };
    Ok(PolicyRun {
        report,
        state: policy.state(),
        trace,
    })
}

type WindowOutcome = (WindowReport, HashMap<String, PolicyState>, Vec<StepTrace>);

fn window_report(
    events: &[LogEvent],
    config: &ReplayConfig,
    window_index: usize,
    start_day: i64,
    log_first_day: i64,
    warm: Option<&HashMap<String, PolicyState>>,
    want_trace: bool,
) -> Result<WindowOutcome, ReplayError> {
    let boundary = start_day + i64::from(config.train_days);
    let split = events
        .partition_point(|e| day_index(e.request.timestamp_ms, config.tz_offset_hours) < boundary);
    if split == 0 {
        return Err(ReplayError::EmptyWindow {
            start_day: start_day - log_first_day,
            segment: "train",
        });
    }
    if split == events.len() {
        return Err(ReplayError::EmptyWindow {
            start_day: start_day - log_first_day,
            segment: "test",
        });
    }

    let mut oracle_revenue = 0.0;
    let mut degenerate_bids = 0u64;
    for event in &events[split..] {
        let benchmark = benchmark_for(event, &config.spoof);
        oracle_revenue +=
            reward::oracle_arm(&event.request, &event.arms, &config.spoof, benchmark).1;
        let degenerate = event
            .arms
            .iter()
            .any(|(_, price)| reward::booking_preference_flagged(event.request.bid, price).1);
        degenerate_bids += u64::from(degenerate);
    }

    let runs: Vec<PolicyRun> = config
        .policies
        .par_iter()
        .enumerate()
        .map(|(pi, spec)| {
            run_policy(
                events,
                split,
                config,
                spec,
                pi,
                window_index,
                warm.and_then(|m| m.get(spec.name())),
                want_trace,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut states = HashMap::new();
    let mut traces = Vec::new();
    let mut policies = Vec::with_capacity(runs.len());
    for (run, spec) in runs.into_iter().zip(&config.policies) {
        states.insert(spec.name().to_string(), run.state);
        traces.extend(run.trace);
        policies.push(run.report);
    }

    Ok((
        WindowReport {
            window_index,
            start_day: start_day - log_first_day,
            test_start_day: boundary - log_first_day,
            end_day: start_day + i64::from(config.train_days + config.test_days)
                - 1
                - log_first_day,
            train_requests: split as u64,
            test_requests: (events.len() - split) as u64,
            oracle_revenue,
            degenerate_bids,
            policies,
        },
        states,
        traces,
    ))
}

/// Replays one window. `events` must be the window's requests, sorted by
/// timestamp; `start_day` is the window's first (absolute) day index and
/// `log_first_day` the log's, for relative labeling.
pub fn run_window(
    events: &[LogEvent],
    config: &ReplayConfig,
    window_index: usize,
    start_day: i64,
    log_first_day: i64,
    warm: Option<&HashMap<String, PolicyState>>,
) -> Result<WindowReport, ReplayError> {
    config.validate()?;
    window_report(
        events,
        config,
        window_index,
        start_day,
        log_first_day,
        warm,
        false,
    )
    .map(|(report, _, _)| report)
}

/// [`run_window`] plus the per-request decision trace, for instrumentation.
pub fn run_window_traced(
    events: &[LogEvent],
    config: &ReplayConfig,
    window_index: usize,
    start_day: i64,
    log_first_day: i64,
    warm: Option<&HashMap<String, PolicyState>>,
) -> Result<(WindowReport, Vec<StepTrace>), ReplayError> {
    config.validate()?;
    window_report(
        events,
        config,
        window_index,
        start_day,
        log_first_day,
        warm,
        true,
    )
    .map(|(report, _, traces)| (report, traces))
}

/// Replays every day-aligned sliding window of the log; policies start cold
/// per window (or from `warm` snapshots) so windows are independent.
pub fn sliding_windows(
    events: &[LogEvent],
    config: &ReplayConfig,
    warm: Option<&HashMap<String, PolicyState>>,
) -> Result<ReplayReport, ReplayError> {
    sliding_windows_with_states(events, config, warm).map(|(report, _)| report)
}

/// [`sliding_windows`] returning the last window's end-of-run policy
/// states, for warm-starting a later run.
pub fn sliding_windows_with_states(
    events: &[LogEvent],
    config: &ReplayConfig,
    warm: Option<&HashMap<String, PolicyState>>,
) -> Result<(ReplayReport, HashMap<String, PolicyState>), ReplayError> {
    config.validate()?;
    if events.is_empty() {
        return Err(ReplayError::InsufficientSpan {
            days_available: 0,
            days_required: i64::from(config.train_days + config.test_days),
        });
    }
    debug_assert!(events
        .windows(2)
        .all(|w| w[0].request.timestamp_ms <= w[1].request.timestamp_ms));
    let tz = config.tz_offset_hours;
    let first_day = day_index(events[0].request.timestamp_ms, tz);
    let last_day = day_index(events[events.len() - 1].request.timestamp_ms, tz);
    let days_available = last_day - first_day + 1;
    let days_required = i64::from(config.train_days + config.test_days);
    if days_available < days_required {
        return Err(ReplayError::InsufficientSpan {
            days_available,
            days_required,
        });
    }

    let starts: Vec<i64> = (first_day..=last_day - days_required + 1).collect();
    let mut results: Vec<(WindowReport, HashMap<String, PolicyState>)> = starts
        .par_iter()
        .enumerate()
        .map(|(wi, &start)| {
            let lo = events.partition_point(|e| day_index(e.request.timestamp_ms, tz) < start);
            let hi = events
                .partition_point(|e| day_index(e.request.timestamp_ms, tz) < start + days_required);
            window_report(&events[lo..hi], config, wi, start, first_day, warm, false)
                .map(|(report, states, _)| (report, states))
        })
        .collect::<Result<_, _>>()?;

    let (_, last_states) = results.last().expect("at least one window");
    let last_states = last_states.clone();
    let windows = results.drain(..).map(|(report, _)| report).collect();
    Ok((ReplayReport { windows }, last_states))
}
