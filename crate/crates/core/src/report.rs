//! CSV emission and ingestion for trial summaries, event logs and
//! distribution tables.

use std::io::{Read, Write};

use crate::analysis::DistributionRow;
use crate::dynamics::TrialResult;
use crate::error::{Error, Result};

pub const TRIAL_SUMMARY_HEADER: [&str; 2] = ["trial", "k_star"];

pub const EVENT_LOG_HEADER: [&str; 11] = [
    "trial", "k", "id_a", "id_b", "size_a", "size_b", "xi", "p_star", "strat_a", "strat_b", "merged",
];

pub const DISTRIBUTION_HEADER: [&str; 5] = ["T", "empirical_freq", "theory_pmf", "bound_lower", "bound_upper"];

/// `trial,k_star`, one row per trial in index order.
pub fn write_trial_summary<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_SUMMARY_HEADER)?;
    for (i, r) in results.iter().enumerate() {
        w.write_record([i.to_string(), r.k_star.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back `(trial, k_star)` pairs written by [`write_trial_summary`].
pub fn read_trial_summary<R: Read>(input: R) -> Result<Vec<(u64, u64)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRIAL_SUMMARY_HEADER {
        return Err(Error::Schema(format!(
            "expected header {:?}, found {:?}",
            TRIAL_SUMMARY_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let parse = |i: usize| {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| Error::Schema(format!("row {}: bad value in column {}", line + 2, TRIAL_SUMMARY_HEADER[i])))
        };
        rows.push((parse(0)?, parse(1)?));
    }
    Ok(rows)
}

/// One row per step of every trial that recorded its events.
pub fn write_event_log<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_LOG_HEADER)?;
    for (i, r) in results.iter().enumerate() {
        for e in &r.events {
            w.write_record([
                i.to_string(),
                e.time.to_string(),
                e.pair.0.to_string(),
                e.pair.1.to_string(),
                e.sizes.0.to_string(),
                e.sizes.1.to_string(),
                e.xi.to_string(),
                e.p_star.to_string(),
                e.strategies.0.label().to_string(),
                e.strategies.1.label().to_string(),
                e.delta().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `T,empirical_freq,theory_pmf,bound_lower,bound_upper`; absent columns are
/// left empty.
pub fn write_distribution<W: Write>(out: W, rows: &[DistributionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DISTRIBUTION_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            cell(r.empirical_freq),
            cell(r.theory_pmf),
            cell(r.bound_lower),
            cell(r.bound_upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}
