//! Result files written by [`write_results`]:
//!
//! * `trials.jsonl`: one [`TrialRecord`] per line.
//! * `aggregate.csv`: `algorithm,sweep_value,trials,succeeded,min_rate_mean,min_rate_stderr,mean_rate_mean,mean_rate_stderr`,
//!   over succeeded trials; stderr is the sample standard deviation over `sqrt(n)`.
//! * `convergence.csv`: `seed,sweep_value,algorithm,iteration,gamma,slot_power_w`,
//!   one row per trace entry with slot powers joined by `;`.
//! * `heatmap.csv`: `seed,sweep_value,algorithm,user,subcarrier,bits`.
//! * `multiplex_cdf.csv`: `seed,sweep_value,algorithm,users,cdf`.
//!
//! An empty sweep value means no sweep. Rates are bits/s.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::Algorithm;
use super::run::TrialRecord;
use crate::{Error, Result};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const MULTIPLEX_FILE: &str = "multiplex_cdf.csv";

pub const AGGREGATE_HEADER: &str =
    "algorithm,sweep_value,trials,succeeded,min_rate_mean,min_rate_stderr,mean_rate_mean,mean_rate_stderr";
pub const CONVERGENCE_HEADER: &str = "seed,sweep_value,algorithm,iteration,gamma,slot_power_w";
pub const HEATMAP_HEADER: &str = "seed,sweep_value,algorithm,user,subcarrier,bits";
pub const MULTIPLEX_HEADER: &str = "seed,sweep_value,algorithm,users,cdf";

fn sweep_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sample mean and standard error; the error is 0 for fewer than two values.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// One aggregate row per (algorithm, sweep value), in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub sweep_value: Option<f64>,
    pub trials: usize,
    pub succeeded: usize,
    pub min_rate: (f64, f64),
    pub mean_rate: (f64, f64),
}

pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Algorithm, Option<f64>)> = Vec::new();
    for r in records {
        let key = (r.algorithm, r.sweep_value);
        if !keys.iter().any(|k| k.0 == key.0 && k.1.map(f64::to_bits) == key.1.map(f64::to_bits)) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(algorithm, sweep_value)| {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.sweep_value.map(f64::to_bits) == sweep_value.map(f64::to_bits))
                .collect();
            let min: Vec<f64> = group.iter().filter_map(|r| r.min_experience_rate).collect();
            let mean: Vec<f64> = group.iter().filter_map(|r| r.mean_experience_rate).collect();
            AggregateRow {
                algorithm,
                sweep_value,
                trials: group.len(),
                succeeded: group.iter().filter(|r| r.succeeded()).count(),
                min_rate: mean_stderr(&min),
                mean_rate: mean_stderr(&mean),
            }
        })
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes all result files into `dir`, creating it if needed; returns the
/// paths written.
pub fn write_results(records: &[TrialRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut trials = String::new();
    for r in records {
        trials.push_str(&serde_json::to_string(r).expect("trial record serializes"));
        trials.push('\n');
    }

    let mut agg = format!("{AGGREGATE_HEADER}\n");
    for row in aggregate(records) {
        let _ = writeln!(
            agg,
            "{},{},{},{},{},{},{},{}",
            row.algorithm.name(),
            sweep_cell(row.sweep_value),
            row.trials,
            row.succeeded,
            row.min_rate.0,
            row.min_rate.1,
            row.mean_rate.0,
            row.mean_rate.1
        );
    }

    let mut conv = format!("{CONVERGENCE_HEADER}\n");
    let mut heat = format!("{HEATMAP_HEADER}\n");
    let mut mux = format!("{MULTIPLEX_HEADER}\n");
    for r in records {
        let prefix = format!("{},{},{}", r.seed, sweep_cell(r.sweep_value), r.algorithm.name());
        for it in &r.trace {
            let powers: Vec<String> = it.per_slot_power.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(conv, "{prefix},{},{},{}", it.iteration, it.gamma, powers.join(";"));
        }
        for (k, row) in r.delivered_bits.iter().enumerate() {
            for (n, bits) in row.iter().enumerate() {
                let _ = writeln!(heat, "{prefix},{k},{n},{bits}");
            }
        }
        for (c, f) in r.multiplex_cdf.iter().enumerate() {
            let _ = writeln!(mux, "{prefix},{c},{f}");
        }
    }

    let files = [
        (TRIALS_FILE, trials),
        (AGGREGATE_FILE, agg),
        (CONVERGENCE_FILE, conv),
        (HEATMAP_FILE, heat),
        (MULTIPLEX_FILE, mux),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

/// Parses `trials.jsonl` back into records.
pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// The raw log with every `wall_time` field removed, for determinism checks.
pub fn strip_wall_time(jsonl: &str) -> String {
    let mut out = String::new();
    for line in jsonl.lines() {
        let mut v: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => {
                out.push_str(line);
                out.push('\n');
                continue;
            }
        };
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time");
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
