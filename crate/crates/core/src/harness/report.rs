use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{HarnessError, OptLevel};
use crate::afe::RuleId;
use crate::runtime::Counters;

/// One run of one benchmark cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub kernel: String,
    pub opt_level: OptLevel,
    pub n_workers: usize,
    pub repeat: usize,
    pub seed: Option<u64>,
    pub counters: Counters,
    pub checksum: u64,
    pub exception: Option<String>,
    pub elapsed_us: u64,
    /// AFE rule firings, in order.
    pub rule_log: Vec<RuleId>,
}

pub fn write_jsonl(reports: &[Report], mut out: impl Write) -> Result<(), HarnessError> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<Report>, HarnessError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Aggregate of the repeats of one (kernel, level, workers) cell. Async
/// and finish counts of load-balanced levels depend on idle-worker races,
/// hence the ranges.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub kernel: String,
    pub opt_level: OptLevel,
    pub n_workers: usize,
    pub runs: usize,
    pub median_us: u64,
    pub mean_us: f64,
    pub asyncs_min: u64,
    pub asyncs_max: u64,
    pub finishes_min: u64,
    pub finishes_max: u64,
    pub advances: u64,
    pub checksum: String,
}

pub fn summarize(reports: &[Report]) -> Vec<Summary> {
    let mut cells: BTreeMap<(&str, OptLevel, usize), Vec<&Report>> = BTreeMap::new();
    for r in reports {
        cells.entry((&r.kernel, r.opt_level, r.n_workers)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((kernel, opt_level, n_workers), runs)| {
            let mut times: Vec<u64> = runs.iter().map(|r| r.elapsed_us).collect();
            times.sort_unstable();
            let asyncs = runs.iter().map(|r| r.counters.asyncs);
            let finishes = runs.iter().map(|r| r.counters.finishes);
            Summary {
                kernel: kernel.to_string(),
                opt_level,
                n_workers,
                runs: runs.len(),
                median_us: times[times.len() / 2],
                mean_us: times.iter().sum::<u64>() as f64 / times.len() as f64,
                asyncs_min: asyncs.clone().min().unwrap_or(0),
                asyncs_max: asyncs.max().unwrap_or(0),
                finishes_min: finishes.clone().min().unwrap_or(0),
                finishes_max: finishes.max().unwrap_or(0),
                advances: runs[0].counters.advances,
                checksum: format!("{:016x}", runs[0].checksum),
            }
        })
        .collect()
}

pub fn write_csv(summaries: &[Summary], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
