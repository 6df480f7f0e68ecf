//! Deterministic artifact writers.
//!
//! Numbers are formatted with Rust's shortest round-trip float display, so
//! a given configuration and seed always produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cpumdp::simulator::TrajectoryStats;

/// Simple in-memory CSV table with a fixed header.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<I: IntoIterator<Item = T>, T: Into<String>>(header: I) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<I: IntoIterator<Item = T>, T: Into<String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().map(Into::into).collect();
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.header.join(",")).expect("string write");
        for row in &self.rows {
            writeln!(out, "{}", row.join(",")).expect("string write");
        }
        out
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes `contents` under `dir`, creating the directory first.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Per-run table: one row per run plus a trailing mean row.
pub fn runs_csv(stats: &[TrajectoryStats<f64>]) -> String {
    let mut table = CsvTable::new([
        "run_id",
        "discounted_reward",
        "raw_reward",
        "net_core_delta",
        "frac_highest_state",
    ]);
    let mut sums = [0.0f64; 4];
    for (run, t) in stats.iter().enumerate() {
        let frac: f64 = t.frac_highest();
        table.row([
            run.to_string(),
            fmt_f64(t.discounted_reward),
            fmt_f64(t.raw_reward),
            t.net_core_delta.to_string(),
            fmt_f64(frac),
        ]);
        sums[0] += t.discounted_reward;
        sums[1] += t.raw_reward;
        sums[2] += t.net_core_delta as f64;
        sums[3] += frac;
    }
    let n = stats.len() as f64;
    table.row([
        "mean".to_string(),
        fmt_f64(sums[0] / n),
        fmt_f64(sums[1] / n),
        fmt_f64(sums[2] / n),
        fmt_f64(sums[3] / n),
    ]);
    table.render()
}

/// JSON twin of [`runs_csv`]: `{"runs": [...], "mean": {...}}`.
pub fn runs_json(stats: &[TrajectoryStats<f64>]) -> String {
    #[derive(serde::Serialize)]
    struct Row {
        run_id: u64,
        discounted_reward: f64,
        raw_reward: f64,
        net_core_delta: i64,
        frac_highest_state: f64,
    }
    #[derive(serde::Serialize)]
    struct Mean {
        discounted_reward: f64,
        raw_reward: f64,
        net_core_delta: f64,
        frac_highest_state: f64,
    }
    #[derive(serde::Serialize)]
    struct Doc {
        runs: Vec<Row>,
        mean: Mean,
    }

    let rows: Vec<Row> = stats
        .iter()
        .enumerate()
        .map(|(run, t)| Row {
            run_id: run as u64,
            discounted_reward: t.discounted_reward,
            raw_reward: t.raw_reward,
            net_core_delta: t.net_core_delta,
            frac_highest_state: t.frac_highest(),
        })
        .collect();
    let n = stats.len() as f64;
    let mean = Mean {
        discounted_reward: rows.iter().map(|r| r.discounted_reward).sum::<f64>() / n,
        raw_reward: rows.iter().map(|r| r.raw_reward).sum::<f64>() / n,
        net_core_delta: rows.iter().map(|r| r.net_core_delta as f64).sum::<f64>() / n,
        frac_highest_state: rows.iter().map(|r| r.frac_highest_state).sum::<f64>() / n,
    };
    let mut out =
        serde_json::to_string_pretty(&Doc { runs: rows, mean }).expect("document serializes");
    out.push('\n');
    out
}
