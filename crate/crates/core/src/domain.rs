//! Shared value types for the pricing engine.
//!
//! Fees are decimal fractions per annum (0.02 = 2%/yr), never basis points;
//! ingestion converts bp inputs behind a config flag. All types here are
//! immutable after construction and safe to share across threads.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Validation errors for domain values. Each names the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("bid must be >= 0, got {bid}")]
    NegativeBid { bid: f64 },
    #[error("quantity must be > 0, got {quantity}")]
    NonPositiveQuantity { quantity: u64 },
    #[error("market_value must be >= 0, got {market_value}")]
    NegativeMarketValue { market_value: f64 },
    #[error("arm price for {arm} must be >= 0, got {price}")]
    NegativeArmPrice { arm: ArmId, price: f64 },
    #[error("spoof delta must lie in (0, 1], got {delta}")]
    InvalidDelta { delta: f64 },
}

// ---------------------------------------------------------------------------
// Arms
// ---------------------------------------------------------------------------

/// The four candidate pricing strategies, in fixed tie-break order.
///
/// The order doubles as the deterministic tie-break: when two arms score
/// equally, the earlier variant wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmId {
    /// The agent lender's own book value-weighted average fee.
    OwnVwaf,
    /// Supervised-model predicted rate.
    MlBased,
    /// Market-wide value-weighted average fee.
    MarketVwaf,
    /// Rule-based desk rate.
    RuleBased,
}

impl ArmId {
    /// All arms in tie-break order.
    pub const ALL: [ArmId; 4] = [
        ArmId::OwnVwaf,
        ArmId::MlBased,
        ArmId::MarketVwaf,
        ArmId::RuleBased,
    ];

    /// Dense index in [0, 4).
    pub fn index(self) -> usize {
        match self {
            ArmId::OwnVwaf => 0,
            ArmId::MlBased => 1,
            ArmId::MarketVwaf => 2,
            ArmId::RuleBased => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<ArmId> {
        ArmId::ALL.get(i).copied()
    }

    /// Stable snake_case label used in reports and file schemas.
    pub fn label(self) -> &'static str {
        match self {
            ArmId::OwnVwaf => "own_vwaf",
            ArmId::MlBased => "ml_based",
            ArmId::MarketVwaf => "market_vwaf",
            ArmId::RuleBased => "rule_based",
        }
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A value per arm, indexed by [`ArmId`].
///
/// Serializes as an ordered map keyed by arm label so that emitted records
/// are byte-stable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerArm<T>(pub [T; 4]);

impl<T> PerArm<T> {
    pub fn get(&self, arm: ArmId) -> &T {
        &self.0[arm.index()]
    }

    pub fn get_mut(&mut self, arm: ArmId) -> &mut T {
        &mut self.0[arm.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArmId, &T)> {
        ArmId::ALL.iter().map(move |&a| (a, &self.0[a.index()]))
    }

    pub fn from_fn(mut f: impl FnMut(ArmId) -> T) -> Self {
        PerArm([
            f(ArmId::OwnVwaf),
            f(ArmId::MlBased),
            f(ArmId::MarketVwaf),
            f(ArmId::RuleBased),
        ])
    }
}

impl<T: Serialize> Serialize for PerArm<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        for (arm, v) in self.iter() {
            map.serialize_entry(arm.label(), v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de> + Default + Copy> Deserialize<'de> for PerArm<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PerArmVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de> + Default + Copy> Visitor<'de> for PerArmVisitor<T> {
            type Value = PerArm<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map keyed by arm label")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out = PerArm([T::default(); 4]);
                while let Some((key, value)) = access.next_entry::<String, T>()? {
                    let arm = ArmId::ALL
                        .iter()
                        .find(|a| a.label() == key)
                        .ok_or_else(|| serde::de::Error::custom(format!("unknown arm {key}")))?;
                    out.0[arm.index()] = value;
                }
                Ok(out)
            }
        }

        deserializer.deserialize_map(PerArmVisitor(std::marker::PhantomData))
    }
}

/// The complete set of four candidate prices attached to a request.
///
/// Totality is an invariant: a request lacking any of the four arm prices is
/// rejected at ingestion, so this type always holds all four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmQuotes(PerArm<f64>);

impl ArmQuotes {
    /// Build from the four prices, in [`ArmId::ALL`] order. Prices must be
    /// nonnegative.
    pub fn new(prices: [f64; 4]) -> Result<Self, DomainError> {
        for (arm, &price) in ArmId::ALL.iter().zip(prices.iter()) {
            if price.is_nan() || price < 0.0 {
                return Err(DomainError::NegativeArmPrice { arm: *arm, price });
            }
        }
        Ok(ArmQuotes(PerArm(prices)))
    }

    pub fn price(&self, arm: ArmId) -> f64 {
        *self.0.get(arm)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArmId, f64)> + '_ {
        self.0.iter().map(|(a, &p)| (a, p))
    }
}

// ---------------------------------------------------------------------------
// Requests and contexts
// ---------------------------------------------------------------------------

/// One logged borrower request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookingRequest {
    /// Opaque identifier, unique within a log.
    pub request_id: String,
    /// Epoch milliseconds (UTC).
    pub timestamp_ms: i64,
    /// Opaque security identifier.
    pub security_id: String,
    /// Borrower's proposed lending fee, decimal fraction per annum.
    pub bid: f64,
    /// Shares requested.
    pub quantity: u64,
    /// Market value of the intended loan, USD.
    pub market_value: f64,
    /// Arm historically assigned by the logging policy, when known.
    pub logged_arm: Option<ArmId>,
    /// Logged accept/reject outcome, when known.
    pub logged_status: Option<bool>,
}

/// Validates a request against the domain invariants and returns it
/// unchanged iff they all hold.
pub fn validate_request(req: BookingRequest) -> Result<BookingRequest, DomainError> {
    if req.bid.is_nan() || req.bid < 0.0 {
        return Err(DomainError::NegativeBid { bid: req.bid });
    }
    if req.quantity == 0 {
        return Err(DomainError::NonPositiveQuantity {
            quantity: req.quantity,
        });
    }
    if req.market_value.is_nan() || req.market_value < 0.0 {
        return Err(DomainError::NegativeMarketValue {
            market_value: req.market_value,
        });
    }
    Ok(req)
}

/// The five market features, each in [0, 1], plus an optional constant bias.
///
/// Out-of-range inputs clamp rather than error; the constructor reports how
/// many features it clamped so ingestion can keep a warning counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    /// Market demand-to-supply ratio.
    pub utilization: f64,
    /// The agent lender's share of market supply.
    pub market_share: f64,
    /// Supply available outside the platform, relative to market supply.
    pub alt_supply: f64,
    /// Demand-side return-over-notional signal.
    pub return_signal: f64,
    /// Bid over its per-security EWMA, clamped to [0, 1].
    pub bid_signal_scaled: f64,
    /// Whether [`ContextVector::features`] appends a constant 1.0 intercept.
    pub include_bias: bool,
}

impl ContextVector {
    /// Number of raw features, excluding the bias term.
    pub const N_FEATURES: usize = 5;

    /// Builds a context, clamping every feature into [0, 1]. Returns the
    /// vector and the number of features that were out of range. Non-finite
    /// inputs clamp to 0 and count as clamped.
    pub fn clamped(raw: [f64; 5], include_bias: bool) -> (Self, u32) {
        let mut clamped = 0u32;
        let mut v = [0.0f64; 5];
        for (dst, &x) in v.iter_mut().zip(raw.iter()) {
            if x.is_finite() && (0.0..=1.0).contains(&x) {
                *dst = x;
            } else {
                *dst = if x.is_finite() {
                    x.clamp(0.0, 1.0)
                } else {
                    0.0
                };
                clamped += 1;
            }
        }
        (
            ContextVector {
                utilization: v[0],
                market_share: v[1],
                alt_supply: v[2],
                return_signal: v[3],
                bid_signal_scaled: v[4],
                include_bias,
            },
            clamped,
        )
    }

    /// Context dimension as seen by policies (5, or 6 with the bias term).
    pub fn dim(&self) -> usize {
        Self::N_FEATURES + usize::from(self.include_bias)
    }

    /// The five raw features, without the bias term.
    pub fn raw(&self) -> [f64; 5] {
        [
            self.utilization,
            self.market_share,
            self.alt_supply,
            self.return_signal,
            self.bid_signal_scaled,
        ]
    }

    /// The feature vector handed to policies; the bias, when configured,
    /// is the trailing 1.0.
    pub fn features(&self) -> Vec<f64> {
        let mut out = vec![
            self.utilization,
            self.market_share,
            self.alt_supply,
            self.return_signal,
            self.bid_signal_scaled,
        ];
        if self.include_bias {
            out.push(1.0);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Rewards and spoof detection
// ---------------------------------------------------------------------------

/// The decomposed reward of evaluating one arm against one request.
///
/// Constructed only by [`crate::reward::reward_components`], which enforces
/// `revenue_propensity = booking_preference * booking_status` and
/// `expected_revenue = revenue_propensity * market_value * price`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    /// Fee-closeness term in [0, 1]: ask/bid on a match, 0 otherwise.
    pub booking_preference: f64,
    /// Binary match indicator after anti-spoofing.
    pub booking_status: bool,
    /// booking_preference * booking_status, in [0, 1].
    pub revenue_propensity: f64,
    /// revenue_propensity * market_value * price, USD.
    pub expected_revenue: f64,
}

/// How the anti-spoofing benchmark `C` is resolved per security.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    /// Use the security's current market VWAF; unknown securities resolve to
    /// 0, which disables spoof filtering for them.
    MarketVwaf,
    /// Use a single configured fee for every security.
    FixedValue,
}

/// Anti-spoofing configuration: a bid below `delta * benchmark` is treated
/// as a spoofing request and never books.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpoofConfig {
    /// Threshold multiplier in (0, 1].
    pub delta: f64,
    pub benchmark_mode: BenchmarkMode,
    /// Benchmark fee used in [`BenchmarkMode::FixedValue`] mode.
    pub fixed_value: Option<f64>,
}

impl SpoofConfig {
    pub fn new(
        delta: f64,
        benchmark_mode: BenchmarkMode,
        fixed_value: Option<f64>,
    ) -> Result<Self, DomainError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(DomainError::InvalidDelta { delta });
        }
        Ok(SpoofConfig {
            delta,
            benchmark_mode,
            fixed_value,
        })
    }
}

impl Default for SpoofConfig {
    /// delta = 0.85 against the per-security market VWAF.
    fn default() -> Self {
        SpoofConfig {
            delta: 0.85,
            benchmark_mode: BenchmarkMode::MarketVwaf,
            fixed_value: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(bid: f64, quantity: u64, market_value: f64) -> BookingRequest {
        BookingRequest {
            request_id: "r1".into(),
            timestamp_ms: 0,
            security_id: "SEC1".into(),
            bid,
            quantity,
            market_value,
            logged_arm: None,
            logged_status: None,
        }
    }

    #[test]
    fn validate_accepts_well_formed_request() {
        let req = request(0.02, 100, 1e6);
        assert_eq!(validate_request(req.clone()), Ok(req));
    }

    #[test]
    fn validate_rejects_negative_bid() {
        assert_eq!(
            validate_request(request(-0.01, 100, 1e6)),
            Err(DomainError::NegativeBid { bid: -0.01 })
        );
    }

    #[test]
    fn validate_rejects_zero_quantity() {
        assert_eq!(
            validate_request(request(0.02, 0, 1e6)),
            Err(DomainError::NonPositiveQuantity { quantity: 0 })
        );
    }

    #[test]
    fn validate_rejects_negative_market_value() {
        assert_eq!(
            validate_request(request(0.02, 100, -1.0)),
            Err(DomainError::NegativeMarketValue { market_value: -1.0 })
        );
    }

    #[test]
    fn validate_rejects_nan_bid() {
        assert!(validate_request(request(f64::NAN, 100, 1e6)).is_err());
    }

    #[test]
    fn arm_order_is_the_tie_break_order() {
        assert!(ArmId::OwnVwaf < ArmId::MlBased);
        assert!(ArmId::MlBased < ArmId::MarketVwaf);
        assert!(ArmId::MarketVwaf < ArmId::RuleBased);
        for (i, arm) in ArmId::ALL.iter().enumerate() {
            assert_eq!(arm.index(), i);
            assert_eq!(ArmId::from_index(i), Some(*arm));
        }
    }

    #[test]
    fn arm_quotes_reject_negative_price() {
        let err = ArmQuotes::new([0.01, -0.02, 0.03, 0.04]).unwrap_err();
        assert_eq!(
            err,
            DomainError::NegativeArmPrice {
                arm: ArmId::MlBased,
                price: -0.02
            }
        );
    }

    #[test]
    fn context_clamps_and_counts() {
        let (ctx, clamped) = ContextVector::clamped([1.5, -0.2, 0.5, f64::NAN, 1.0], true);
        assert_eq!(clamped, 3);
        assert_eq!(ctx.utilization, 1.0);
        assert_eq!(ctx.market_share, 0.0);
        assert_eq!(ctx.return_signal, 0.0);
        assert_eq!(ctx.bid_signal_scaled, 1.0);
        assert_eq!(ctx.dim(), 6);
        assert_eq!(ctx.features().len(), 6);
        assert_eq!(*ctx.features().last().unwrap(), 1.0);
    }

    #[test]
    fn context_without_bias_has_dim_5() {
        let (ctx, clamped) = ContextVector::clamped([0.1, 0.2, 0.3, 0.4, 0.5], false);
        assert_eq!(clamped, 0);
        assert_eq!(ctx.dim(), 5);
        assert_eq!(ctx.features(), vec![0.1, 0.2, 0.3, 0.4, 0.5]);
    }

    #[test]
    fn spoof_config_validates_delta() {
        assert!(SpoofConfig::new(0.85, BenchmarkMode::MarketVwaf, None).is_ok());
        assert!(SpoofConfig::new(1.0, BenchmarkMode::MarketVwaf, None).is_ok());
        assert!(SpoofConfig::new(0.0, BenchmarkMode::MarketVwaf, None).is_err());
        assert!(SpoofConfig::new(1.1, BenchmarkMode::MarketVwaf, None).is_err());
    }

    #[test]
    fn per_arm_serializes_as_ordered_map() {
        let ratios = PerArm([0.5, 0.25, 0.125, 0.125]);
        let json = serde_json::to_string(&ratios).unwrap();
        assert_eq!(
            json,
            r#"{"own_vwaf":0.5,"ml_based":0.25,"market_vwaf":0.125,"rule_based":0.125}"#
        );
        let back: PerArm<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ratios);
    }
}
