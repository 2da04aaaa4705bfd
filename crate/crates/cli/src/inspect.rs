//! `lendfee inspect`: ingest a log and print what is in it.

use std::path::Path;

use anyhow::Context;
use lendfee_core::data::{ingest, SchemaConfig};

use crate::{Failure, WithCode};

const DAY_MS: i64 = 86_400_000;

/// Gregorian date from days since the Unix epoch (valid over the whole i64
/// day range; standard era-based conversion).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (yoe + era * 400 + i64::from(m <= 2), m, d)
}

fn date_label(timestamp_ms: i64) -> String {
    let (y, m, d) = civil_from_days(timestamp_ms.div_euclid(DAY_MS));
    format!("{y:04}-{m:02}-{d:02}")
}

const FEE_BANDS: [(f64, f64, &str); 6] = [
    (0.0, 0.0025, "[0%, 0.25%)"),
    (0.0025, 0.01, "[0.25%, 1%)"),
    (0.01, 0.02, "[1%, 2%)"),
    (0.02, 0.05, "[2%, 5%)"),
    (0.05, 0.10, "[5%, 10%)"),
    (0.10, f64::INFINITY, "[10%, inf)"),
];

pub fn run(log: &Path) -> Result<(), Failure> {
    let out = ingest(log, &SchemaConfig::default())
        .with_context(|| format!("ingesting {}", log.display()))
        .with_code(2)?;
    let s = &out.summary;

    println!("rows read               {}", s.rows_read);
    println!("events                  {}", s.events);
    println!("rejected rows           {}", s.rejected_rows);
    println!("gc filtered             {}", s.gc_filtered);
    println!("clamped features        {}", s.clamped_features);
    println!("derived-feature rows    {}", s.derived_feature_rows);
    println!("derived own-vwaf rows   {}", s.derived_own_vwaf_rows);
    println!("synthesized logged arms {}", s.synthesized_logged_arms);

    let first = out.events.first().expect("ingest rejects empty logs");
    let last = out.events.last().expect("ingest rejects empty logs");
    let days = (last.request.timestamp_ms.div_euclid(DAY_MS)
        - first.request.timestamp_ms.div_euclid(DAY_MS))
        + 1;
    println!(
        "date span               {} .. {} ({} day(s))",
        date_label(first.request.timestamp_ms),
        date_label(last.request.timestamp_ms),
        days
    );

    println!();
    println!("{:<18} {:>9} {:>9} {:>9}", "feature", "min", "mean", "max");
    let names = [
        "utilization",
        "market_share",
        "alt_supply",
        "return_signal",
        "bid_signal_scaled",
    ];
    for (i, name) in names.iter().enumerate() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for e in &out.events {
            let v = e.context.raw()[i];
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        let mean = sum / out.events.len() as f64;
        println!("{name:<18} {min:>9.4} {mean:>9.4} {max:>9.4}");
    }

    println!();
    println!("bid fee bands");
    for (lo, hi, label) in FEE_BANDS {
        let count = out
            .events
            .iter()
            .filter(|e| e.request.bid >= lo && e.request.bid < hi)
            .count();
        println!("  {label:<12} {count}");
    }
    Ok(())
}
