//! Seeded synthetic market generator.
//!
//! Real securities-lending logs are proprietary, so experiments run on a
//! generated market instead: each security follows a mean-reverting latent
//! fair-fee path inside the specials band, borrower bids form around the
//! fair fee with demand-driven aggressiveness, and the four quote arms
//! bracket it in a fixed aggressiveness order. A regime-shift schedule
//! moves the demand level so that no single arm stays optimal for the whole
//! horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{canonical_request_id, DataError, Ewma, LogEvent};
use crate::domain::{ArmId, ArmQuotes, BenchmarkMode, BookingRequest, ContextVector, SpoofConfig};
use crate::reward::booking_status;

const DAY_MS: i64 = 86_400_000;
// requests land between 09:00 and 16:00 UTC
const DAY_OPEN_MS: i64 = 32_400_000;
const DAY_CLOSE_MS: i64 = 57_600_000;

/// One scheduled market-regime change, applied from `day` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub day: u32,
    /// Added to the market-wide demand level.
    pub demand_shift: f64,
    /// Added to the bid aggressiveness multiplier.
    #[serde(default)]
    pub bid_shift: f64,
}

/// Generator parameters. The default scenario is 7 days, two demand
/// regimes, and a 5% spoof rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_securities: usize,
    pub days: u32,
    /// Inclusive range of total requests per day.
    pub requests_per_day: (u32, u32),
    /// Fee level of general-collateral names.
    pub gc_floor: f64,
    /// Fee band of hard-to-borrow names.
    pub specials_band: (f64, f64),
    /// Fraction of securities generated as general collateral.
    pub gc_fraction: f64,
    /// Fraction of bids replaced by deliberate low-ball spoofing bids.
    pub spoof_rate: f64,
    /// Threshold the spoof bids are injected below, relative to the market
    /// rate.
    pub spoof_delta: f64,
    /// Market-wide demand level on day 0, in [0, 1].
    pub base_demand: f64,
    pub regime_shifts: Vec<RegimeShift>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 42,
            n_securities: 24,
            days: 7,
            requests_per_day: (150, 250),
            gc_floor: 0.0025,
            specials_band: (0.01, 0.10),
            gc_fraction: 0.0,
            spoof_rate: 0.05,
            spoof_delta: 0.85,
            base_demand: 0.25,
            regime_shifts: vec![RegimeShift {
                day: 3,
                demand_shift: 0.4,
                bid_shift: 0.0,
            }],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |reason: &str| {
            Err(DataError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if self.days == 0 {
            return fail("days must be >= 1");
        }
        if self.n_securities == 0 {
            return fail("n_securities must be >= 1");
        }
        if self.requests_per_day.0 == 0 || self.requests_per_day.0 > self.requests_per_day.1 {
            return fail("requests_per_day must be a nonempty ascending range");
        }
        if self.gc_floor.is_nan() || self.gc_floor <= 0.0 {
            return fail("gc_floor must be positive");
        }
        if !(self.specials_band.0 > 0.0 && self.specials_band.0 < self.specials_band.1) {
            return fail("specials_band must be a positive ascending range");
        }
        if !(0.0..=1.0).contains(&self.gc_fraction) {
            return fail("gc_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.spoof_rate) {
            return fail("spoof_rate must lie in [0, 1]");
        }
        if !(self.spoof_delta > 0.0 && self.spoof_delta <= 1.0) {
            return fail("spoof_delta must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.base_demand) {
            return fail("base_demand must lie in [0, 1]");
        }
        for s in &self.regime_shifts {
            if s.day >= self.days {
                return fail("regime shift scheduled at or past the horizon");
            }
            if !(s.demand_shift.is_finite() && s.bid_shift.is_finite()) {
                return fail("regime shift drifts must be finite");
            }
        }
        Ok(())
    }
}

/// Counters describing one generated log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub requests: u64,
    pub spoof_injected: u64,
    pub days: u32,
    pub securities: usize,
    pub gc_securities: usize,
}

struct Security {
    fair: f64,
    anchor: f64,
    band: (f64, f64),
    demand_bias: f64,
    share_base: f64,
    ewma_bid: Ewma,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates a full log, sorted by timestamp, deterministic under the
/// config seed.
pub fn generate_synthetic(
    config: &SyntheticConfig,
) -> Result<(Vec<LogEvent>, SyntheticSummary), DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spoof_cfg = SpoofConfig {
        delta: config.spoof_delta,
        benchmark_mode: BenchmarkMode::MarketVwaf,
        fixed_value: None,
    };

    let n_gc = (config.n_securities as f64 * config.gc_fraction).floor() as usize;
    let mut securities: Vec<Security> = (0..config.n_securities)
        .map(|i| {
            // GC names sit just above the floor and stay safely below the
            // specials scope even after the market markup
            let (band, anchor) = if i < n_gc {
                let band = (config.gc_floor * 0.8, config.gc_floor * 2.0);
                (band, config.gc_floor * rng.random_range(0.9..1.4))
            } else {
                let band = config.specials_band;
                (band, rng.random_range(band.0..band.1))
            };
            Security {
                fair: anchor,
                anchor,
                band,
                demand_bias: normal(&mut rng) * 0.10,
                share_base: (0.35 + normal(&mut rng) * 0.08).clamp(0.05, 0.9),
                ewma_bid: Ewma::with_half_life(20.0),
            }
        })
        .collect();

    let mut events = Vec::new();
    let mut spoof_injected = 0u64;
    for day in 0..config.days {
        let active: Vec<&RegimeShift> = config
            .regime_shifts
            .iter()
            .filter(|s| s.day <= day)
            .collect();
        let demand_level = config.base_demand + active.iter().map(|s| s.demand_shift).sum::<f64>();
        let bid_level: f64 = active.iter().map(|s| s.bid_shift).sum();

        for s in securities.iter_mut() {
            let sigma = 0.04 * s.anchor;
            s.fair = (s.fair + 0.25 * (s.anchor - s.fair) + normal(&mut rng) * sigma)
                .clamp(s.band.0, s.band.1);
        }

        let n_req = rng.random_range(config.requests_per_day.0..=config.requests_per_day.1);
        let mut slots: Vec<(i64, usize)> = (0..n_req)
            .map(|_| {
                (
                    i64::from(day) * DAY_MS + rng.random_range(DAY_OPEN_MS..DAY_CLOSE_MS),
                    rng.random_range(0..config.n_securities),
                )
            })
            .collect();
        slots.sort_unstable();

        for (ts, sec_idx) in slots {
            let s = &mut securities[sec_idx];
            let demand = (demand_level + s.demand_bias + normal(&mut rng) * 0.05).clamp(0.02, 0.98);
            let interest = (demand + normal(&mut rng) * 0.18).clamp(0.0, 1.0);

            // fixed aggressiveness order: own <= ml <= market <= rule
            let own = s.fair * 0.88 * (normal(&mut rng) * 0.04).exp();
            let ml = own * (1.06 + (normal(&mut rng) * 0.04).abs());
            let market = ml * (1.06 + (normal(&mut rng) * 0.05).abs());
            let rule = market * (1.08 + (normal(&mut rng) * 0.06).abs());

            let mut bid = s.fair
                * (0.82 + 0.55 * interest + bid_level).max(0.05)
                * (normal(&mut rng) * 0.06).exp();
            let is_spoof = rng.random::<f64>() < config.spoof_rate;
            if is_spoof {
                bid = market * config.spoof_delta * rng.random_range(0.3..0.9);
                spoof_injected += 1;
            }

            let quantity = ((normal(&mut rng) * 0.7 + 9.2).exp().round() as u64).max(1);
            let market_value = quantity as f64 * rng.random_range(20.0..120.0);

            let utilization = (demand + normal(&mut rng) * 0.04).clamp(0.0, 1.0);
            let share = (s.share_base + normal(&mut rng) * 0.03).clamp(0.0, 1.0);
            let alt = (1.0 - demand + normal(&mut rng) * 0.08).clamp(0.0, 1.0);
            let ret = (demand + normal(&mut rng) * 0.07).clamp(0.0, 1.0);
            let bss = match s.ewma_bid.value() {
                Some(e) if e > 0.0 => (bid / e).clamp(0.0, 1.0),
                _ => 1.0,
            };
            s.ewma_bid.update(bid);
            let (context, clamps) =
                ContextVector::clamped([utilization, share, alt, ret, bss], true);
            debug_assert_eq!(clamps, 0);

            let arms = ArmQuotes::new([own, ml, market, rule]).expect("generated prices positive");
            let logged = ArmId::from_index(rng.random_range(0..4)).expect("index < 4");
            let status = booking_status(bid, arms.price(logged), &spoof_cfg, market);

            events.push(LogEvent {
                request: BookingRequest {
                    request_id: String::new(),
                    timestamp_ms: ts,
                    security_id: format!("SEC{sec_idx:03}"),
                    bid,
                    quantity,
                    market_value,
                    logged_arm: Some(logged),
                    logged_status: Some(status),
                },
                context,
                arms,
            });
        }
    }

    for (i, e) in events.iter_mut().enumerate() {
        e.request.request_id = canonical_request_id(i);
    }
    let summary = SyntheticSummary {
        requests: events.len() as u64,
        spoof_injected,
        days: config.days,
        securities: config.n_securities,
        gc_securities: n_gc,
    };
    Ok((events, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ingest_reader, write_canonical, SchemaConfig};
    use crate::reward::oracle_arm;

    #[test]
    fn fixed_seed_is_byte_deterministic() {
        let config = SyntheticConfig::default();
        let (a, sa) = generate_synthetic(&config).unwrap();
        let (b, sb) = generate_synthetic(&config).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(a, b);
        let schema = SchemaConfig::default();
        let mut bytes_a = Vec::new();
        let mut bytes_b = Vec::new();
        write_canonical(&a, &schema, &mut bytes_a).unwrap();
        write_canonical(&b, &schema, &mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert!(a
            .windows(2)
            .all(|w| w[0].request.timestamp_ms <= w[1].request.timestamp_ms));
        let (c, _) = generate_synthetic(&SyntheticConfig { seed: 43, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn arm_prices_keep_the_aggressiveness_order() {
        let (events, _) = generate_synthetic(&SyntheticConfig::default()).unwrap();
        for e in &events {
            let own = e.arms.price(ArmId::OwnVwaf);
            let ml = e.arms.price(ArmId::MlBased);
            let market = e.arms.price(ArmId::MarketVwaf);
            let rule = e.arms.price(ArmId::RuleBased);
            assert!(own <= ml && ml <= market && market <= rule);
            assert!(own > 0.0);
        }
    }

    #[test]
    fn spoof_rate_is_honored() {
        let config = SyntheticConfig {
            spoof_rate: 0.1,
            requests_per_day: (1400, 1500),
            ..SyntheticConfig::default()
        };
        let (events, summary) = generate_synthetic(&config).unwrap();
        assert!(summary.requests >= 9_800);
        let frac = summary.spoof_injected as f64 / summary.requests as f64;
        assert!((frac - 0.1).abs() <= 0.01, "spoof fraction {frac}");
        // spoofed bids never book at the market quote
        let spoof = SpoofConfig::default();
        let mut booked_below = 0;
        for e in &events {
            let c = e.arms.price(ArmId::MarketVwaf);
            if e.request.bid < spoof.delta * c && e.request.logged_status == Some(true) {
                booked_below += 1;
            }
        }
        assert_eq!(booked_below, 0);
    }

    #[test]
    fn regimes_move_the_oracle_arm() {
        let (events, _) = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let spoof = SpoofConfig::default();
        let mut counts = [0u32; 4];
        for e in &events {
            let benchmark = e.arms.price(ArmId::MarketVwaf);
            let (arm, _) = oracle_arm(&e.request, &e.arms, &spoof, benchmark);
            counts[arm.index()] += 1;
        }
        let total: u32 = counts.iter().sum();
        let big = counts
            .iter()
            .filter(|&&c| f64::from(c) / f64::from(total) >= 0.2)
            .count();
        assert!(big >= 2, "oracle counts {counts:?} lack regime diversity");
    }

    #[test]
    fn generated_logs_ingest_cleanly() {
        let (events, _) = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let schema = SchemaConfig::default();
        let mut buf = Vec::new();
        write_canonical(&events, &schema, &mut buf).unwrap();
        let out = ingest_reader(buf.as_slice(), &schema).unwrap();
        assert_eq!(out.events, events);
        assert_eq!(out.summary.clamped_features, 0);
        assert_eq!(out.summary.rejected_rows, 0);
        assert_eq!(out.summary.gc_filtered, 0);
    }

    #[test]
    fn gc_names_fall_to_the_ingestion_filter() {
        let config = SyntheticConfig {
            gc_fraction: 0.25,
            ..SyntheticConfig::default()
        };
        let (events, summary) = generate_synthetic(&config).unwrap();
        assert_eq!(summary.gc_securities, 6);
        let schema = SchemaConfig::default();
        let mut buf = Vec::new();
        write_canonical(&events, &schema, &mut buf).unwrap();
        let out = ingest_reader(buf.as_slice(), &schema).unwrap();
        assert!(out.summary.gc_filtered > 0);
        for e in &out.events {
            assert!(e.arms.price(ArmId::MarketVwaf) >= schema.gc_threshold);
        }
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let ok = SyntheticConfig::default();
        assert!(ok.validate().is_ok());
        let cases = [
            SyntheticConfig {
                days: 0,
                ..ok.clone()
            },
            SyntheticConfig {
                n_securities: 0,
                ..ok.clone()
            },
            SyntheticConfig {
                requests_per_day: (10, 5),
                ..ok.clone()
            },
            SyntheticConfig {
                specials_band: (0.1, 0.01),
                ..ok.clone()
            },
            SyntheticConfig {
                spoof_rate: 1.5,
                ..ok.clone()
            },
            SyntheticConfig {
                gc_fraction: -0.1,
                ..ok.clone()
            },
            SyntheticConfig {
                spoof_delta: 0.0,
                ..ok.clone()
            },
            SyntheticConfig {
                regime_shifts: vec![RegimeShift {
                    day: 7,
                    demand_shift: 0.1,
                    bid_shift: 0.0,
                }],
                ..ok.clone()
            },
        ];
        for bad in cases {
            assert!(
                matches!(bad.validate(), Err(DataError::InvalidConfig { .. })),
                "{bad:?} should be invalid"
            );
        }
    }
}
