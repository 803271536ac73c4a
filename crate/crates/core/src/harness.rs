//! Replicated experiment sweeps with CSV output.
//!
//! Every (sweep value, replicate) job draws its plume source and mission
//! seed from the master seed and the replicate index alone, so each sweep
//! value sees the same sources and the table is a pure function of the
//! spec.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{apply_override, ConfigError, ExperimentSpec};
use crate::geometry::Point;
use crate::mission::{run_mission, MissionError, MissionResult};

/// Column set of every experiment table.
pub const RESULT_HEADER: &str =
    "kind,sweep_key,sweep_value,replicate,seed,source_x,source_y,mission_time_s,FN,FP,total,acquired,status";

/// Source position and mission seed of replicate `r`.
pub fn replicate_draw(spec: &ExperimentSpec, r: usize) -> (Point, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.mission.seed);
    rng.set_stream(r as u64);
    let b = spec.source_box;
    let x = rng.random_range(b.x_min..b.x_max);
    let y = rng.random_range(b.y_min..b.y_max);
    (Point::new(x, y), rng.next_u64())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Done {
        mission_time: f64,
        false_negative: f64,
        false_positive: f64,
        total: f64,
        acquired: bool,
    },
    /// The mission could not be planned or run; the message says why.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataRow {
    pub sweep_value: String,
    pub replicate: usize,
    pub seed: u64,
    pub source: Point,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub sweep_value: String,
    /// Completed runs the statistics are taken over.
    pub n: usize,
    pub failed: usize,
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub sweep_key: String,
    pub rows: Vec<DataRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation (n - 1); the deviation of a single
/// value is 0 and both are NaN for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn aggregate(sweep_value: &str, rows: &[&DataRow]) -> Aggregate {
    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut failed = 0;
    for r in rows {
        match &r.outcome {
            Outcome::Done {
                mission_time,
                false_negative,
                false_positive,
                total,
                acquired,
            } => {
                let v = [
                    *mission_time,
                    *false_negative,
                    *false_positive,
                    *total,
                    f64::from(u8::from(*acquired)),
                ];
                for (c, x) in cols.iter_mut().zip(v) {
                    c.push(x);
                }
            }
            Outcome::Failed(_) => failed += 1,
        }
    }
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for i in 0..5 {
        (mean[i], std[i]) = mean_std(&cols[i]);
    }
    Aggregate {
        sweep_value: sweep_value.to_string(),
        n: cols[0].len(),
        failed,
        mean,
        std,
    }
}

/// Runs one mission per sweep value and replicate, in parallel, and
/// collects the rows in (sweep value, replicate) order. Failed missions
/// become flagged rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable, ConfigError> {
    let (sweep_key, values) = match &spec.sweep {
        Some(s) => (s.key.clone(), s.values.clone()),
        None => (String::new(), vec![String::new()]),
    };
    let mut variants = Vec::with_capacity(values.len());
    for v in &values {
        let mut s = spec.clone();
        if !sweep_key.is_empty() {
            apply_override(&mut s, &sweep_key, v)?;
        }
        variants.push(s);
    }

    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|i| (0..spec.replicates).map(move |r| (i, r)))
        .collect();
    let rows: Vec<DataRow> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (source, seed) = replicate_draw(spec, r);
            let mut config = variants[i].mission.clone();
            config.source.position = source;
            config.seed = seed;
            DataRow {
                sweep_value: values[i].clone(),
                replicate: r,
                seed,
                source,
                outcome: outcome(run_mission(&config)),
            }
        })
        .collect();

    let aggregates = values
        .iter()
        .map(|v| {
            let group: Vec<&DataRow> = rows.iter().filter(|r| &r.sweep_value == v).collect();
            aggregate(v, &group)
        })
        .collect();
    Ok(ResultTable {
        sweep_key,
        rows,
        aggregates,
    })
}

fn outcome(result: Result<MissionResult, MissionError>) -> Outcome {
    match result {
        Ok(m) => Outcome::Done {
            mission_time: m.mission_time,
            false_negative: m.report.false_negative,
            false_positive: m.report.false_positive,
            total: m.report.total,
            acquired: m.report.plume_acquired,
        },
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ResultTable {
    /// Long-format CSV: one `data` row per mission, then a `mean` and a
    /// `std` row per sweep value. Failed missions have empty numeric cells
    /// and `infeasible: <reason>` as status; aggregates skip them and
    /// report how many completed.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(RESULT_HEADER);
        out.push('\n');
        let key = csv_field(&self.sweep_key);
        for r in &self.rows {
            let value = csv_field(&r.sweep_value);
            let _ = write!(
                out,
                "data,{key},{value},{},{},{},{},",
                r.replicate, r.seed, r.source.x, r.source.y
            );
            match &r.outcome {
                Outcome::Done {
                    mission_time,
                    false_negative,
                    false_positive,
                    total,
                    acquired,
                } => {
                    let _ = writeln!(
                        out,
                        "{mission_time},{false_negative},{false_positive},{total},{},ok",
                        u8::from(*acquired)
                    );
                }
                Outcome::Failed(msg) => {
                    let _ = writeln!(out, ",,,,,{}", csv_field(&format!("infeasible: {msg}")));
                }
            }
        }
        for a in &self.aggregates {
            let value = csv_field(&a.sweep_value);
            for (kind, v) in [("mean", &a.mean), ("std", &a.std)] {
                let _ = writeln!(
                    out,
                    "{kind},{key},{value},,,,,{},{},{},{},{},n={} failed={}",
                    v[0], v[1], v[2], v[3], v[4], a.n, a.failed
                );
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv())
    }

    pub fn aggregate_for(&self, sweep_value: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.sweep_value == sweep_value)
    }
}
