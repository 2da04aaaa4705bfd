//! Report rendering. Machine-readable files carry exact values (floats in
//! shortest round-trip form); the human tables round for the terminal.

use std::fmt::Write as _;

use lendfee_core::domain::ArmId;
use lendfee_core::replay::{merge_rule_into_ml, ReplayReport, WindowReport};

fn window_label(w: &WindowReport) -> String {
    format!("d{}-d{}", w.start_day, w.end_day)
}

/// One structured record per window.
pub fn reports_jsonl(report: &ReplayReport) -> String {
    let mut out = String::new();
    for w in &report.windows {
        out.push_str(&serde_json::to_string(w).expect("report serializes"));
        out.push('\n');
    }
    out
}

/// Revenue table: one row per policy, one column per window, exact values.
pub fn revenue_csv(report: &ReplayReport) -> String {
    let mut out = String::from("policy");
    for w in &report.windows {
        let _ = write!(out, ",{}", window_label(w));
    }
    out.push('\n');
    let first = &report.windows[0];
    for (pi, p) in first.policies.iter().enumerate() {
        out.push_str(&p.policy);
        for w in &report.windows {
            let _ = write!(out, ",{}", w.policies[pi].revenue);
        }
        out.push('\n');
    }
    out
}

/// Selection-ratio table: one row per (window, policy), exact values.
pub fn ratios_csv(report: &ReplayReport, merge_rule: bool) -> String {
    let mut out = String::from("window,policy");
    if merge_rule {
        out.push_str(",own_vwaf,ml_based/rule_based,market_vwaf\n");
    } else {
        for arm in ArmId::ALL {
            let _ = write!(out, ",{}", arm.label());
        }
        out.push('\n');
    }
    for w in &report.windows {
        for p in &w.policies {
            let _ = write!(out, "{},{}", window_label(w), p.policy);
            if merge_rule {
                for (_, ratio) in merge_rule_into_ml(&p.selection_ratios) {
                    let _ = write!(out, ",{ratio}");
                }
            } else {
                for (_, ratio) in p.selection_ratios.iter() {
                    let _ = write!(out, ",{ratio}");
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Terminal summary: revenue per window (2 decimals), an oracle reference
/// line, and selection ratios aggregated over windows.
pub fn human_summary(report: &ReplayReport, merge_rule: bool) -> String {
    let mut out = String::new();
    let first = &report.windows[0];
    let name_width = first
        .policies
        .iter()
        .map(|p| p.policy.len())
        .max()
        .unwrap_or(6)
        .max("oracle".len());

    out.push_str("test-window revenue (USD)\n");
    let _ = write!(out, "{:<name_width$}", "policy");
    for w in &report.windows {
        let _ = write!(out, " {:>12}", window_label(w));
    }
    out.push('\n');
    for (pi, p) in first.policies.iter().enumerate() {
        let _ = write!(out, "{:<name_width$}", p.policy);
        for w in &report.windows {
            let _ = write!(out, " {:>12.2}", w.policies[pi].revenue);
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<name_width$}", "oracle");
    for w in &report.windows {
        let _ = write!(out, " {:>12.2}", w.oracle_revenue);
    }
    out.push_str("\n\nselection ratios (all windows)\n");

    let labels: Vec<&str> = if merge_rule {
        vec![
            ArmId::OwnVwaf.label(),
            "ml_based/rule_based",
            ArmId::MarketVwaf.label(),
        ]
    } else {
        ArmId::ALL.iter().map(|a| a.label()).collect()
    };
    let _ = write!(out, "{:<name_width$}", "policy");
    for label in &labels {
        let _ = write!(out, " {label:>19}");
    }
    out.push('\n');
    for (pi, p) in first.policies.iter().enumerate() {
        // weight each window by its test size
        let mut totals = [0.0f64; 4];
        let mut n = 0.0;
        for w in &report.windows {
            let pol = &w.policies[pi];
            let tests = pol.test_requests as f64;
            for (arm, ratio) in pol.selection_ratios.iter() {
                totals[arm.index()] += ratio * tests;
            }
            n += tests;
        }
        let ratios: Vec<f64> = if merge_rule {
            vec![totals[0] / n, (totals[1] + totals[3]) / n, totals[2] / n]
        } else {
            totals.iter().map(|t| t / n).collect()
        };
        let _ = write!(out, "{:<name_width$}", p.policy);
        for r in ratios {
            let _ = write!(out, " {r:>19.3}");
        }
        out.push('\n');
    }
    out
}
