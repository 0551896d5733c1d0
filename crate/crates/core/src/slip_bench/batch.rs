//! Batches of trials and their summary table.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::scenario::ScenarioConfig;
use super::trial::{run_trial, TrialMetrics};
use super::BenchError;
use crate::tactile_sim::sub_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub label: String,
    pub seed: u64,
    pub result: Result<TrialMetrics, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, count: 0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, std: var.sqrt(), count: n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub rows: Vec<BatchRow>,
    pub onset_detection_delay: Stat,
    pub offset_detection_delay: Stat,
    pub reaction_to_stop_delay: Stat,
    pub pre_stop_displacement: Stat,
    pub stabilized_fraction: f64,
    pub failed: usize,
}

pub const METRIC_COLUMNS: [&str; 9] = [
    "onset_detection_delay_s",
    "offset_detection_delay_s",
    "reaction_to_stop_delay_s",
    "pre_stop_displacement_m",
    "stabilized",
    "reinforcements",
    "slip_start_s",
    "slip_stop_s",
    "max_wrench_ratio",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Metric cells in [`METRIC_COLUMNS`] order.
pub fn metric_cells(m: &TrialMetrics) -> Vec<String> {
    vec![
        opt(m.onset_detection_delay),
        opt(m.offset_detection_delay),
        opt(m.reaction_to_stop_delay),
        m.pre_stop_displacement.to_string(),
        (m.stabilized as u8).to_string(),
        m.reinforcements.to_string(),
        opt(m.slip_start),
        opt(m.slip_stop),
        m.max_wrench_ratio.to_string(),
    ]
}

impl BatchSummary {
    pub fn from_rows(rows: Vec<BatchRow>) -> Self {
        let ok: Vec<&TrialMetrics> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
        let collect = |f: &dyn Fn(&TrialMetrics) -> Option<f64>| Stat::of(&ok.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
        let stabilized_fraction = if ok.is_empty() { f64::NAN } else { ok.iter().filter(|m| m.stabilized).count() as f64 / ok.len() as f64 };
        Self {
            onset_detection_delay: collect(&|m| m.onset_detection_delay),
            offset_detection_delay: collect(&|m| m.offset_detection_delay),
            reaction_to_stop_delay: collect(&|m| m.reaction_to_stop_delay),
            pre_stop_displacement: collect(&|m| Some(m.pre_stop_displacement)),
            stabilized_fraction,
            failed: rows.len() - ok.len(),
            rows,
        }
    }

    /// One row per trial, then `mean` and `std` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| BenchError::Io(e.to_string());
        let mut header = vec!["label".to_string(), "seed".into(), "status".into()];
        header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(io)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone(), r.seed.to_string()];
            match &r.result {
                Ok(m) => {
                    rec.push("ok".into());
                    rec.extend(metric_cells(m));
                }
                Err(e) => {
                    rec.push(format!("error: {e}"));
                    rec.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len()));
                }
            }
            w.write_record(&rec).map_err(io)?;
        }
        let stats = [self.onset_detection_delay, self.offset_detection_delay, self.reaction_to_stop_delay, self.pre_stop_displacement];
        for (name, pick) in [("mean", 0), ("std", 1)] {
            let mut rec = vec![name.to_string(), String::new(), format!("n={}", self.rows.len() - self.failed)];
            rec.extend(stats.iter().map(|s| if pick == 0 { s.mean.to_string() } else { s.std.to_string() }));
            rec.push(if pick == 0 { self.stabilized_fraction.to_string() } else { String::new() });
            rec.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len() - 5));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| BenchError::Io(e.to_string()))
    }

    /// Human-readable mean ± std table.
    pub fn render_table(&self) -> String {
        let ms = |s: Stat| format!("{:8.1} ± {:6.1} ms  (n={})", s.mean * 1e3, s.std * 1e3, s.count);
        let mm = |s: Stat| format!("{:8.2} ± {:6.2} mm  (n={})", s.mean * 1e3, s.std * 1e3, s.count);
        format!(
            "slip onset detection delay   {}\nslip offset detection delay  {}\nreaction -> slip stop delay  {}\npre-stop displacement        {}\nstabilized                   {:.0}%  failed trials {}\n",
            ms(self.onset_detection_delay),
            ms(self.offset_detection_delay),
            ms(self.reaction_to_stop_delay),
            mm(self.pre_stop_displacement),
            self.stabilized_fraction * 100.0,
            self.failed
        )
    }
}

/// Runs labelled scenarios on `jobs` worker threads, in input order.
pub fn run_labelled(trials: Vec<(String, ScenarioConfig)>, jobs: usize) -> Result<BatchSummary, BenchError> {
    if trials.is_empty() {
        return Err(BenchError::EmptyBatch);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Io(e.to_string()))?;
    let rows = pool.install(|| {
        trials
            .into_par_iter()
            .map(|(label, s)| BatchRow { label, seed: s.seed, result: run_trial(&s).map(|(m, _)| m).map_err(|e| e.to_string()) })
            .collect::<Vec<_>>()
    });
    Ok(BatchSummary::from_rows(rows))
}

/// Runs every scenario with every seed.
pub fn run_batch(scenarios: &[ScenarioConfig], seeds: &[u64], jobs: usize) -> Result<BatchSummary, BenchError> {
    if scenarios.is_empty() || seeds.is_empty() {
        return Err(BenchError::EmptyBatch);
    }
    let trials = scenarios
        .iter()
        .flat_map(|s| {
            seeds.iter().map(move |&seed| {
                let mut s = s.clone();
                s.seed = seed;
                (s.name.clone(), s)
            })
        })
        .collect();
    run_labelled(trials, jobs)
}

/// Draws `n` scenarios with parameters uniform in the template's
/// `[batch.ranges]`; trial `i` gets seed `seed + i`.
pub fn sample_scenarios(template: &ScenarioConfig, n: usize, seed: u64) -> Result<Vec<ScenarioConfig>, BenchError> {
    if n == 0 {
        return Err(BenchError::EmptyBatch);
    }
    let mut rng = sub_rng(seed, 0xBA7C);
    let ranges = template.batch.as_ref().map(|b| b.ranges.clone()).unwrap_or_default();
    (0..n)
        .map(|i| {
            let mut s = template.clone();
            for (key, [lo, hi]) in &ranges {
                let v = if hi > lo { rng.random_range(*lo..=*hi) } else { *lo };
                s.set_param(key, v)?;
            }
            s.seed = seed.wrapping_add(i as u64);
            Ok(s)
        })
        .collect()
}
