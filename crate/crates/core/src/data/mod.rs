//! Transaction-log ingestion, market-state aggregates, feature assembly,
//! and the canonical log format.
//!
//! The on-disk format is delimited text with a header row, one request per
//! line. Column names come from [`SchemaConfig`]; only the identity, bid,
//! size, and three of the four arm-price columns are hard requirements.
//! Everything else is derived from running per-security aggregates when a
//! cell (or a whole column) is missing, and every derivation or clamp is
//! counted in the [`IngestSummary`] rather than silently absorbed.

mod synthetic;

pub use synthetic::{generate_synthetic, RegimeShift, SyntheticConfig, SyntheticSummary};

use std::collections::HashMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    validate_request, ArmId, ArmQuotes, BookingRequest, ContextVector, DomainError,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing required column {name:?}")]
    MissingColumn { name: String },
    #[error("no data rows")]
    EmptyFile,
    #[error("line {line}: {source}")]
    Domain { line: u64, source: DomainError },
    #[error("portfolio is empty")]
    EmptyPortfolio,
    #[error("invalid generator config: {reason}")]
    InvalidConfig { reason: String },
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// Column names of the log format. Defaults match the canonical writer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnNames {
    pub timestamp: String,
    pub security_id: String,
    pub bid: String,
    pub quantity: String,
    pub market_value: String,
    pub own_vwaf: String,
    pub ml_rate: String,
    pub market_vwaf: String,
    pub rule_rate: String,
    pub utilization: String,
    pub market_share: String,
    pub alt_supply: String,
    pub return_signal: String,
    pub bid_signal_scaled: String,
    pub offered_rate: String,
    pub accept_flag: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        ColumnNames {
            timestamp: "timestamp".into(),
            security_id: "security_id".into(),
            bid: "bid".into(),
            quantity: "quantity".into(),
            market_value: "market_value".into(),
            own_vwaf: "own_vwaf".into(),
            ml_rate: "ml_rate".into(),
            market_vwaf: "market_vwaf".into(),
            rule_rate: "rule_rate".into(),
            utilization: "utilization".into(),
            market_share: "market_share".into(),
            alt_supply: "alt_supply".into(),
            return_signal: "return_signal".into(),
            bid_signal_scaled: "bid_signal_scaled".into(),
            offered_rate: "offered_rate".into(),
            accept_flag: "accept_flag".into(),
        }
    }
}

/// Ingestion behavior knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub columns: ColumnNames,
    /// Strict mode fails on the first bad row; lenient mode skips it and
    /// counts it in the summary.
    pub strict: bool,
    /// Drop general-collateral names, identified by a market VWAF below
    /// `gc_threshold`. The market rate is used rather than the bid so that
    /// low-ball bids on hard-to-borrow names are not mistaken for GC flow.
    pub gc_filter: bool,
    pub gc_threshold: f64,
    /// Half-life, in observations per security, of the bid EWMA behind
    /// `bid_signal_scaled`.
    pub ewma_half_life: f64,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            columns: ColumnNames::default(),
            strict: true,
            gc_filter: true,
            gc_threshold: 0.01,
            ewma_half_life: 20.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Running aggregates
// ---------------------------------------------------------------------------

/// Exponentially weighted moving average with a half-life measured in
/// observations. Empty until the first update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ewma {
    alpha: f64,
    value: Option<f64>,
}

impl Ewma {
    pub fn with_half_life(half_life: f64) -> Self {
        debug_assert!(half_life > 0.0);
        Ewma {
            alpha: 1.0 - 0.5f64.powf(1.0 / half_life),
            value: None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn update(&mut self, x: f64) {
        self.value = Some(match self.value {
            None => x,
            Some(v) => v + self.alpha * (x - v),
        });
    }
}

/// Streaming value-weighted average fee.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningVwaf {
    weighted: f64,
    notional: f64,
}

impl RunningVwaf {
    pub fn push(&mut self, fee: f64, notional: f64) {
        debug_assert!(notional > 0.0);
        self.weighted += fee * notional;
        self.notional += notional;
    }

    pub fn value(&self) -> Option<f64> {
        (self.notional > 0.0).then(|| self.weighted / self.notional)
    }
}

/// Value-weighted average fee of a loan portfolio, given `(fee, notional)`
/// pairs.
pub fn compute_vwaf(loans: &[(f64, f64)]) -> Result<f64, DataError> {
    let mut acc = RunningVwaf::default();
    for &(fee, notional) in loans {
        acc.push(fee, notional);
    }
    acc.value().ok_or(DataError::EmptyPortfolio)
}

/// Running aggregates for one security, inputs to [`derive_features`].
///
/// `demand` is an EWMA of requested quantity and `supply` the maximum
/// quantity seen, stand-ins for the platform inventory numbers a real feed
/// would carry; callers holding true inventory can seed the supply fields
/// directly.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityState {
    pub ewma_bid: Ewma,
    pub demand: f64,
    pub supply: f64,
    pub lender_supply: f64,
    pub market_supply: f64,
    pub alternative_supply: f64,
    /// Last seen proprietary demand signal, passed through when present.
    pub return_signal: Option<f64>,
    /// Fees of this lender's accepted loans, for own-VWAF derivation.
    pub own_book: RunningVwaf,
    demand_ewma: Ewma,
}

impl SecurityState {
    fn new(half_life: f64) -> Self {
        SecurityState {
            ewma_bid: Ewma::with_half_life(half_life),
            demand: 0.0,
            supply: 0.0,
            lender_supply: 0.0,
            market_supply: 0.0,
            alternative_supply: 0.0,
            return_signal: None,
            own_book: RunningVwaf::default(),
            demand_ewma: Ewma::with_half_life(half_life),
        }
    }

    /// Folds one request into the aggregates. `accepted_fee` is the booked
    /// fee when the logged outcome was an accept.
    pub fn observe(&mut self, req: &BookingRequest, accepted_fee: Option<f64>) {
        self.ewma_bid.update(req.bid);
        self.demand_ewma.update(req.quantity as f64);
        self.demand = self.demand_ewma.value().unwrap_or(0.0);
        self.supply = self.supply.max(req.quantity as f64);
        if let Some(fee) = accepted_fee {
            self.own_book
                .push(fee, req.market_value.max(f64::MIN_POSITIVE));
        }
    }
}

/// Per-security market state accumulated over a log, in timestamp order.
#[derive(Debug, Clone)]
pub struct MarketState {
    half_life: f64,
    securities: HashMap<String, SecurityState>,
}

impl MarketState {
    pub fn new(half_life: f64) -> Self {
        MarketState {
            half_life,
            securities: HashMap::new(),
        }
    }

    pub fn security(&self, id: &str) -> Option<&SecurityState> {
        self.securities.get(id)
    }

    pub fn security_mut(&mut self, id: &str) -> &mut SecurityState {
        let half_life = self.half_life;
        self.securities
            .entry(id.to_string())
            .or_insert_with(|| SecurityState::new(half_life))
    }
}

/// Assembles the five features for a request from its security's running
/// aggregates, clamping into [0, 1]. Returns the context and the number of
/// clamped features.
///
/// With no supply information the share and alternative-supply features sit
/// at 0: "no information" reads as "no inventory". A missing return signal
/// falls back to a neutral 0.5. The bid signal uses the EWMA *before* this
/// request's bid, so a bid equal to the running average scores exactly 1.
pub fn derive_features(
    req: &BookingRequest,
    state: &SecurityState,
    include_bias: bool,
) -> (ContextVector, u32) {
    ContextVector::clamped(derived_raw_features(req, state), include_bias)
}

// Raw feature values before the [0, 1] clamp. The ratio clamps baked into
// the utilization and alternative-supply formulas are part of their
// definitions and not counted as data clamps; a bid signal above 1 is.
fn derived_raw_features(req: &BookingRequest, state: &SecurityState) -> [f64; 5] {
    let utilization = if state.supply > 0.0 {
        (state.demand / state.supply).min(1.0)
    } else if state.demand > 0.0 {
        1.0
    } else {
        0.0
    };
    let market_share = if state.market_supply > 0.0 {
        state.lender_supply / state.market_supply
    } else {
        0.0
    };
    let alt_supply = if state.market_supply > 0.0 {
        (state.alternative_supply / state.market_supply).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let return_signal = state.return_signal.unwrap_or(0.5);
    let bid_signal = match state.ewma_bid.value() {
        Some(e) if e > 0.0 => req.bid / e,
        _ => 1.0,
    };
    [
        utilization,
        market_share,
        alt_supply,
        return_signal,
        bid_signal,
    ]
}

// ---------------------------------------------------------------------------
// Log records
// ---------------------------------------------------------------------------

/// One fully resolved log line: the request, its feature vector, and the
/// four candidate prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub request: BookingRequest,
    pub context: ContextVector,
    pub arms: ArmQuotes,
}

/// What ingestion did beyond straight parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: u64,
    pub events: u64,
    /// Bad rows skipped in lenient mode.
    pub rejected_rows: u64,
    /// Rows dropped by the general-collateral filter.
    pub gc_filtered: u64,
    /// Individual feature values clamped into [0, 1].
    pub clamped_features: u64,
    /// Rows where at least one feature had to be derived from aggregates.
    pub derived_feature_rows: u64,
    /// Rows whose own-VWAF price came from the running book (or its
    /// market-VWAF fallback) rather than a column.
    pub derived_own_vwaf_rows: u64,
    /// Rows whose logged arm was synthesized from the offered rate.
    pub synthesized_logged_arms: u64,
}

/// Ingestion result: events sorted by timestamp plus the bookkeeping
/// summary.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub events: Vec<LogEvent>,
    pub summary: IngestSummary,
}

/// Canonical request id for the row at `index` in timestamp order.
pub(crate) fn canonical_request_id(index: usize) -> String {
    format!("r{index:06}")
}

// A raw row after the first parsing pass, before sorting and derivation.
struct RawRow {
    line: u64,
    timestamp_ms: i64,
    security_id: String,
    bid: f64,
    quantity: u64,
    market_value: f64,
    own_vwaf: Option<f64>,
    ml_rate: f64,
    market_vwaf: f64,
    rule_rate: f64,
    features: [Option<f64>; 5],
    offered_rate: Option<f64>,
    accept_flag: Option<bool>,
}

/// Ingests a log from a reader. See [`ingest`] for the file-path wrapper.
pub fn ingest_reader<R: io::Read>(
    reader: R,
    schema: &SchemaConfig,
) -> Result<IngestOutput, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let names = &schema.columns;
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| -> Result<usize, DataError> {
        find(name).ok_or_else(|| DataError::MissingColumn {
            name: name.to_string(),
        })
    };
    let idx_timestamp = need(&names.timestamp)?;
    let idx_security = need(&names.security_id)?;
    let idx_bid = need(&names.bid)?;
    let idx_quantity = need(&names.quantity)?;
    let idx_market_value = need(&names.market_value)?;
    let idx_ml = need(&names.ml_rate)?;
    let idx_market = need(&names.market_vwaf)?;
    let idx_rule = need(&names.rule_rate)?;
    let idx_own = find(&names.own_vwaf);
    let idx_offered = find(&names.offered_rate);
    let idx_accept = find(&names.accept_flag);
    if idx_own.is_none() && (idx_offered.is_none() || idx_accept.is_none()) {
        // without a column the own quote comes from the running book, which
        // needs logged outcomes to exist at all
        return Err(DataError::MissingColumn {
            name: names.own_vwaf.clone(),
        });
    }
    let idx_features = [
        find(&names.utilization),
        find(&names.market_share),
        find(&names.alt_supply),
        find(&names.return_signal),
        find(&names.bid_signal_scaled),
    ];

    let mut summary = IngestSummary::default();
    let mut rows: Vec<RawRow> = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line: u64 = 1; // header was line 1
    while rdr.read_record(&mut record)? {
        line = record.position().map_or(line + 1, |p| p.line());
        summary.rows_read += 1;
        match parse_row(
            &record,
            line,
            RowIndices {
                timestamp: idx_timestamp,
                security: idx_security,
                bid: idx_bid,
                quantity: idx_quantity,
                market_value: idx_market_value,
                own: idx_own,
                ml: idx_ml,
                market: idx_market,
                rule: idx_rule,
                features: idx_features,
                offered: idx_offered,
                accept: idx_accept,
            },
        ) {
            Ok(row) => rows.push(row),
            Err(e) => {
                if schema.strict {
                    return Err(e);
                }
                summary.rejected_rows += 1;
            }
        }
    }
    if summary.rows_read == 0 {
        return Err(DataError::EmptyFile);
    }

    rows.sort_by_key(|r| r.timestamp_ms);

    let mut market = MarketState::new(schema.ewma_half_life);
    let mut events = Vec::with_capacity(rows.len());
    for row in rows {
        if schema.gc_filter && row.market_vwaf < schema.gc_threshold {
            summary.gc_filtered += 1;
            continue;
        }
        match assemble_event(row, &mut market, &mut summary) {
            Ok(event) => events.push(event),
            Err(e) => {
                if schema.strict {
                    return Err(e);
                }
                summary.rejected_rows += 1;
            }
        }
    }
    if events.is_empty() {
        return Err(DataError::EmptyFile);
    }
    for (i, event) in events.iter_mut().enumerate() {
        event.request.request_id = canonical_request_id(i);
    }
    summary.events = events.len() as u64;
    Ok(IngestOutput { events, summary })
}

struct RowIndices {
    timestamp: usize,
    security: usize,
    bid: usize,
    quantity: usize,
    market_value: usize,
    own: Option<usize>,
    ml: usize,
    market: usize,
    rule: usize,
    features: [Option<usize>; 5],
    offered: Option<usize>,
    accept: Option<usize>,
}

fn parse_row(record: &csv::StringRecord, line: u64, idx: RowIndices) -> Result<RawRow, DataError> {
    let cell = |i: usize| record.get(i).unwrap_or("");
    let opt_cell = |i: Option<usize>| i.map(cell).filter(|s| !s.is_empty());
    let parse_f64 = |i: usize, what: &str| -> Result<f64, DataError> {
        cell(i).parse::<f64>().map_err(|_| DataError::Parse {
            line,
            message: format!("{what} {:?} is not a number", cell(i)),
        })
    };
    let parse_opt_f64 = |i: Option<usize>, what: &str| -> Result<Option<f64>, DataError> {
        opt_cell(i)
            .map(|s| {
                s.parse::<f64>().map_err(|_| DataError::Parse {
                    line,
                    message: format!("{what} {s:?} is not a number"),
                })
            })
            .transpose()
    };
    let security_id = cell(idx.security).to_string();
    if security_id.is_empty() {
        return Err(DataError::Parse {
            line,
            message: "empty security_id".into(),
        });
    }
    let accept_flag = match opt_cell(idx.accept) {
        None => None,
        Some(s) => Some(match s.to_ascii_lowercase().as_str() {
            "1" | "true" | "y" => true,
            "0" | "false" | "n" => false,
            other => {
                return Err(DataError::Parse {
                    line,
                    message: format!("accept_flag {other:?} is not a boolean"),
                })
            }
        }),
    };
    let mut features = [None; 5];
    let feature_names = [
        "utilization",
        "market_share",
        "alt_supply",
        "return_signal",
        "bid_signal_scaled",
    ];
    for (slot, (i, name)) in features
        .iter_mut()
        .zip(idx.features.iter().zip(feature_names))
    {
        *slot = parse_opt_f64(*i, name)?;
    }
    Ok(RawRow {
        line,
        timestamp_ms: cell(idx.timestamp)
            .parse::<i64>()
            .map_err(|_| DataError::Parse {
                line,
                message: format!(
                    "timestamp {:?} is not epoch milliseconds",
                    cell(idx.timestamp)
                ),
            })?,
        security_id,
        bid: parse_f64(idx.bid, "bid")?,
        quantity: cell(idx.quantity)
            .parse::<u64>()
            .map_err(|_| DataError::Parse {
                line,
                message: format!(
                    "quantity {:?} is not a nonnegative integer",
                    cell(idx.quantity)
                ),
            })?,
        market_value: parse_f64(idx.market_value, "market_value")?,
        own_vwaf: parse_opt_f64(idx.own, "own_vwaf")?,
        ml_rate: parse_f64(idx.ml, "ml_rate")?,
        market_vwaf: parse_f64(idx.market, "market_vwaf")?,
        rule_rate: parse_f64(idx.rule, "rule_rate")?,
        features,
        offered_rate: parse_opt_f64(idx.offered, "offered_rate")?,
        accept_flag,
    })
}

/// The arm whose price is nearest `rate`; ties go to the lower price, then
/// to the fixed arm order.
pub fn nearest_arm(arms: &ArmQuotes, rate: f64) -> ArmId {
    let mut best = ArmId::OwnVwaf;
    let mut best_dist = f64::INFINITY;
    let mut best_price = f64::INFINITY;
    for (arm, price) in arms.iter() {
        let dist = (price - rate).abs();
        if dist < best_dist || (dist == best_dist && price < best_price) {
            best = arm;
            best_dist = dist;
            best_price = price;
        }
    }
    best
}

fn assemble_event(
    row: RawRow,
    market: &mut MarketState,
    summary: &mut IngestSummary,
) -> Result<LogEvent, DataError> {
    let line = row.line;
    let domain = |source: DomainError| DataError::Domain { line, source };

    let own = match row.own_vwaf {
        Some(v) => v,
        None => {
            summary.derived_own_vwaf_rows += 1;
            market
                .security_mut(&row.security_id)
                .own_book
                .value()
                // empty book: quote at the market level until loans exist
                .unwrap_or(row.market_vwaf)
        }
    };
    let arms =
        ArmQuotes::new([own, row.ml_rate, row.market_vwaf, row.rule_rate]).map_err(domain)?;

    let mut request = BookingRequest {
        request_id: String::new(),
        timestamp_ms: row.timestamp_ms,
        security_id: row.security_id,
        bid: row.bid,
        quantity: row.quantity,
        market_value: row.market_value,
        logged_arm: None,
        logged_status: None,
    };
    request = validate_request(request).map_err(domain)?;
    if let Some(rate) = row.offered_rate {
        request.logged_arm = Some(nearest_arm(&arms, rate));
        summary.synthesized_logged_arms += 1;
    }
    request.logged_status = row.accept_flag;

    let state = market.security_mut(&request.security_id);
    let derived_raw = derived_raw_features(&request, state);
    let mut raw = [0.0; 5];
    let mut any_derived = false;
    for i in 0..5 {
        match row.features[i] {
            Some(v) => raw[i] = v,
            None => {
                raw[i] = derived_raw[i];
                any_derived = true;
            }
        }
    }
    if any_derived {
        summary.derived_feature_rows += 1;
    }
    let (context, clamps) = ContextVector::clamped(raw, true);
    summary.clamped_features += u64::from(clamps);

    if let Some(v) = row.features[3] {
        state.return_signal = Some(v);
    }
    let accepted_fee = match (request.logged_status, row.offered_rate) {
        (Some(true), Some(rate)) => Some(rate),
        _ => None,
    };
    state.observe(&request, accepted_fee);

    Ok(LogEvent {
        request,
        context,
        arms,
    })
}

/// Ingests a log file. Errors carry line numbers where applicable.
pub fn ingest<P: AsRef<Path>>(path: P, schema: &SchemaConfig) -> Result<IngestOutput, DataError> {
    let file = std::fs::File::open(path)?;
    ingest_reader(io::BufReader::new(file), schema)
}

// ---------------------------------------------------------------------------
// Canonical writer
// ---------------------------------------------------------------------------

/// Writes events in the canonical column order with fully populated
/// features, so the file round-trips through [`ingest_reader`] unchanged.
/// Floats use the shortest representation that parses back exactly.
pub fn write_canonical<W: io::Write>(
    events: &[LogEvent],
    schema: &SchemaConfig,
    writer: W,
) -> Result<(), DataError> {
    let n = &schema.columns;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        n.timestamp.as_str(),
        n.security_id.as_str(),
        n.bid.as_str(),
        n.quantity.as_str(),
        n.market_value.as_str(),
        n.own_vwaf.as_str(),
        n.ml_rate.as_str(),
        n.market_vwaf.as_str(),
        n.rule_rate.as_str(),
        n.utilization.as_str(),
        n.market_share.as_str(),
        n.alt_supply.as_str(),
        n.return_signal.as_str(),
        n.bid_signal_scaled.as_str(),
        n.offered_rate.as_str(),
        n.accept_flag.as_str(),
    ])?;
    for e in events {
        let offered = e
            .request
            .logged_arm
            .map(|arm| e.arms.price(arm).to_string())
            .unwrap_or_default();
        let accept = e
            .request
            .logged_status
            .map(|s| if s { "1" } else { "0" }.to_string())
            .unwrap_or_default();
        w.write_record([
            e.request.timestamp_ms.to_string(),
            e.request.security_id.clone(),
            e.request.bid.to_string(),
            e.request.quantity.to_string(),
            e.request.market_value.to_string(),
            e.arms.price(ArmId::OwnVwaf).to_string(),
            e.arms.price(ArmId::MlBased).to_string(),
            e.arms.price(ArmId::MarketVwaf).to_string(),
            e.arms.price(ArmId::RuleBased).to_string(),
            e.context.utilization.to_string(),
            e.context.market_share.to_string(),
            e.context.alt_supply.to_string(),
            e.context.return_signal.to_string(),
            e.context.bid_signal_scaled.to_string(),
            offered,
            accept,
        ])?;
    }
    w.flush().map_err(DataError::Io)?;
    Ok(())
}

/// File wrapper around [`write_canonical`].
pub fn write_canonical_file<P: AsRef<Path>>(
    events: &[LogEvent],
    schema: &SchemaConfig,
    path: P,
) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_canonical(events, schema, io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SchemaConfig {
        SchemaConfig::default()
    }

    const HEADER: &str = "timestamp,security_id,bid,quantity,market_value,own_vwaf,ml_rate,market_vwaf,rule_rate,utilization,market_share,alt_supply,return_signal,bid_signal_scaled,offered_rate,accept_flag";

    fn row(ts: i64, sec: &str, bid: f64) -> String {
        format!("{ts},{sec},{bid},100,1000000,0.02,0.022,0.025,0.03,0.5,0.4,0.3,0.6,0.9,0.022,1")
    }

    #[test]
    fn vwaf_hand_arithmetic() {
        // (0.02*300 + 0.04*100) / 400 = 10/400
        assert_eq!(
            compute_vwaf(&[(0.02, 300.0), (0.04, 100.0)]).unwrap(),
            0.025
        );
        assert_eq!(compute_vwaf(&[(0.02, 100.0), (0.04, 100.0)]).unwrap(), 0.03);
        assert_eq!(compute_vwaf(&[(0.071, 5.0)]).unwrap(), 0.071);
        assert!(matches!(compute_vwaf(&[]), Err(DataError::EmptyPortfolio)));
    }

    #[test]
    fn vwaf_stays_within_input_fee_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..20);
            let loans: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0.001..0.2), rng.random_range(1.0..1e6)))
                .collect();
            let v = compute_vwaf(&loans).unwrap();
            let lo = loans.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
            let hi = loans.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        }
    }

    #[test]
    fn ewma_half_life_semantics() {
        let mut e = Ewma::with_half_life(1.0);
        assert_eq!(e.value(), None);
        e.update(10.0);
        assert_eq!(e.value(), Some(10.0));
        // half-life 1: each update closes half the gap
        e.update(20.0);
        assert!((e.value().unwrap() - 15.0).abs() < 1e-12);
        e.update(20.0);
        assert!((e.value().unwrap() - 17.5).abs() < 1e-12);
    }

    #[test]
    fn derive_features_formulas() {
        let req = BookingRequest {
            request_id: "r".into(),
            timestamp_ms: 0,
            security_id: "SEC".into(),
            bid: 0.03,
            quantity: 10,
            market_value: 1e5,
            logged_arm: None,
            logged_status: None,
        };
        let mut s = SecurityState::new(20.0);
        s.demand = 80.0;
        s.supply = 80.0;
        s.lender_supply = 0.0;
        s.market_supply = 100.0;
        s.alternative_supply = 250.0;
        let (ctx, clamps) = derive_features(&req, &s, true);
        assert_eq!(ctx.utilization, 1.0); // demand equals supply
        assert_eq!(ctx.market_share, 0.0); // no lender supply
        assert_eq!(ctx.alt_supply, 1.0); // clamped from 2.5
        assert_eq!(ctx.return_signal, 0.5); // neutral stand-in
        assert_eq!(ctx.bid_signal_scaled, 1.0); // no EWMA yet
        assert_eq!(clamps, 0); // alt_supply clamps before assembly

        s.ewma_bid.update(0.03);
        let (ctx, _) = derive_features(&req, &s, true);
        assert_eq!(ctx.bid_signal_scaled, 1.0); // bid equal to its EWMA

        s.ewma_bid = Ewma::with_half_life(20.0);
        s.ewma_bid.update(0.06);
        let (ctx, _) = derive_features(&req, &s, true);
        assert_eq!(ctx.bid_signal_scaled, 0.5);

        s.demand = 40.0;
        s.lender_supply = 30.0;
        let (ctx, _) = derive_features(&req, &s, true);
        assert_eq!(ctx.utilization, 0.5);
        assert_eq!(ctx.market_share, 0.3);
    }

    #[test]
    fn ingest_well_formed_rows_sorted() {
        let csv = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row(3000, "B", 0.03),
            row(1000, "A", 0.02),
            row(2000, "A", 0.025),
        );
        let out = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.summary.rows_read, 3);
        assert_eq!(out.summary.events, 3);
        assert_eq!(out.summary.rejected_rows, 0);
        let ts: Vec<i64> = out.events.iter().map(|e| e.request.timestamp_ms).collect();
        assert_eq!(ts, vec![1000, 2000, 3000]);
        let ids: Vec<&str> = out
            .events
            .iter()
            .map(|e| e.request.request_id.as_str())
            .collect();
        assert_eq!(ids, vec!["r000000", "r000001", "r000002"]);
        let e = &out.events[0];
        assert_eq!(e.request.security_id, "A");
        assert_eq!(e.arms.price(ArmId::MlBased), 0.022);
        assert_eq!(e.request.logged_arm, Some(ArmId::MlBased));
        assert_eq!(e.request.logged_status, Some(true));
        assert_eq!(e.context.utilization, 0.5);
    }

    #[test]
    fn ingest_bad_number_strict_vs_lenient() {
        let csv = format!(
            "{HEADER}\n{}\n2000,A,abc,100,1000000,0.02,0.022,0.025,0.03,0.5,0.4,0.3,0.6,0.9,,\n",
            row(1000, "A", 0.02),
        );
        let err = ingest_reader(csv.as_bytes(), &schema()).unwrap_err();
        match err {
            DataError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("bid"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        let mut lenient = schema();
        lenient.strict = false;
        let out = ingest_reader(csv.as_bytes(), &lenient).unwrap();
        assert_eq!(out.summary.rejected_rows, 1);
        assert_eq!(out.summary.events, 1);
    }

    #[test]
    fn ingest_missing_required_column() {
        let csv = "timestamp,security_id,bid,quantity,own_vwaf,ml_rate,market_vwaf,rule_rate\n1,A,0.02,100,0.02,0.022,0.025,0.03\n";
        match ingest_reader(csv.as_bytes(), &schema()).unwrap_err() {
            DataError::MissingColumn { name } => assert_eq!(name, "market_value"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_empty_inputs() {
        assert!(matches!(
            ingest_reader(&b""[..], &schema()).unwrap_err(),
            DataError::EmptyFile
        ));
        let header_only = format!("{HEADER}\n");
        assert!(matches!(
            ingest_reader(header_only.as_bytes(), &schema()).unwrap_err(),
            DataError::EmptyFile
        ));
    }

    #[test]
    fn gc_filter_uses_market_rate_not_bid() {
        // low-ball bid on a special must survive; a GC name must not
        let special_spoofed =
            "1000,A,0.001,100,1000000,0.02,0.022,0.025,0.03,0.5,0.4,0.3,0.6,0.1,,";
        let gc_name = "2000,B,0.002,100,1000000,0.002,0.0022,0.0025,0.003,0.5,0.4,0.3,0.6,1,,";
        let csv = format!("{HEADER}\n{special_spoofed}\n{gc_name}\n");
        let out = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.summary.gc_filtered, 1);
        assert_eq!(out.summary.events, 1);
        assert_eq!(out.events[0].request.security_id, "A");

        let mut no_filter = schema();
        no_filter.gc_filter = false;
        let out = ingest_reader(csv.as_bytes(), &no_filter).unwrap();
        assert_eq!(out.summary.gc_filtered, 0);
        assert_eq!(out.summary.events, 2);
    }

    #[test]
    fn missing_features_are_derived_and_counted() {
        let header = "timestamp,security_id,bid,quantity,market_value,own_vwaf,ml_rate,market_vwaf,rule_rate";
        let csv = format!(
            "{header}\n1000,A,0.02,100,1000000,0.02,0.022,0.025,0.03\n2000,A,0.04,100,1000000,0.02,0.022,0.025,0.03\n"
        );
        let out = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.summary.derived_feature_rows, 2);
        let first = &out.events[0];
        assert_eq!(first.context.bid_signal_scaled, 1.0); // first bid per security
        assert_eq!(first.context.return_signal, 0.5);
        let second = &out.events[1];
        // 0.04 over an EWMA of 0.02 clamps to 1, and the clamp is counted
        assert_eq!(second.context.bid_signal_scaled, 1.0);
        assert_eq!(out.summary.clamped_features, 1);
        assert_eq!(second.context.utilization, 1.0); // demand EWMA vs max quantity
        assert_eq!(out.events[0].request.logged_arm, None);
    }

    #[test]
    fn out_of_range_features_clamp_and_count() {
        let csv = format!(
            "{HEADER}\n1000,A,0.02,100,1000000,0.02,0.022,0.025,0.03,1.5,-0.2,0.3,0.6,0.9,,\n"
        );
        let out = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.summary.clamped_features, 2);
        assert_eq!(out.events[0].context.utilization, 1.0);
        assert_eq!(out.events[0].context.market_share, 0.0);
    }

    #[test]
    fn domain_violation_reported_with_line() {
        let csv = format!(
            "{HEADER}\n1000,A,-0.5,100,1000000,0.02,0.022,0.025,0.03,0.5,0.4,0.3,0.6,0.9,,\n"
        );
        match ingest_reader(csv.as_bytes(), &schema()).unwrap_err() {
            DataError::Domain { line, source } => {
                assert_eq!(line, 2);
                assert!(matches!(source, DomainError::NegativeBid { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn own_vwaf_derived_from_booked_loans() {
        let header = "timestamp,security_id,bid,quantity,market_value,ml_rate,market_vwaf,rule_rate,offered_rate,accept_flag";
        let csv = format!(
            "{header}\n\
             1000,A,0.03,100,300,0.022,0.025,0.03,0.02,1\n\
             2000,A,0.05,100,100,0.022,0.025,0.03,0.04,1\n\
             3000,A,0.03,100,1000,0.022,0.025,0.03,0.022,0\n"
        );
        let out = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(out.summary.derived_own_vwaf_rows, 3);
        // empty book falls back to the market rate
        assert_eq!(out.events[0].arms.price(ArmId::OwnVwaf), 0.025);
        // one loan at 0.02
        assert_eq!(out.events[1].arms.price(ArmId::OwnVwaf), 0.02);
        // (0.02*300 + 0.04*100) / 400; the reject does not enter the book
        assert_eq!(out.events[2].arms.price(ArmId::OwnVwaf), 0.025);
    }

    #[test]
    fn nearest_arm_tie_breaks_to_lower_price() {
        let arms = ArmQuotes::new([0.02, 0.03, 0.04, 0.05]).unwrap();
        assert_eq!(nearest_arm(&arms, 0.03), ArmId::MlBased);
        assert_eq!(nearest_arm(&arms, 0.049), ArmId::RuleBased);
        assert_eq!(nearest_arm(&arms, 0.0), ArmId::OwnVwaf);
        // a representable midpoint produces an exact tie; the lower price wins
        let arms = ArmQuotes::new([0.25, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(nearest_arm(&arms, 0.75), ArmId::MlBased);
    }

    #[test]
    fn canonical_write_ingest_round_trip() {
        let csv = format!(
            "{HEADER}\n{}\n{}\n{}\n",
            row(1000, "A", 0.021),
            row(2000, "B", 0.034),
            row(3000, "A", 0.027),
        );
        let first = ingest_reader(csv.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_canonical(&first.events, &schema(), &mut buf).unwrap();
        let second = ingest_reader(buf.as_slice(), &schema()).unwrap();
        assert_eq!(first.events, second.events);
        // canonical output is already fully populated: no derivations
        assert_eq!(second.summary.derived_feature_rows, 0);
        assert_eq!(second.summary.clamped_features, 0);
        let mut buf2 = Vec::new();
        write_canonical(&second.events, &schema(), &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
