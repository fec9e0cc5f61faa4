use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::delta_table_rows;
use super::{CampaignReport, OutcomeClass, RunReport};
use crate::config::{OutputFormat, Tier};
use crate::machine::RunEnd;

/// Files produced by [`write_report`], in the order they are written.
pub const REPORT_FILES: [&str; 4] = ["report.json", "runs.csv", "outcome_distribution.csv", "delta_tables.csv"];

/// One line of `runs.csv`: the per-run facts the aggregates are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_index: u64,
    pub benchmark: String,
    pub engine: String,
    pub tier: Option<Tier>,
    pub seed: u64,
    pub outcome: OutcomeClass,
    /// `exited`, `trapped` or `timed_out`.
    pub end: String,
    pub exit_code: Option<u8>,
    pub cycles: u64,
    pub delta: f64,
    pub divergent_from_zero: bool,
    pub fault_count: u64,
}

impl From<&RunReport> for RunRow {
    fn from(r: &RunReport) -> Self {
        let end = match r.end {
            RunEnd::Exited { .. } => "exited",
            RunEnd::Trapped { .. } => "trapped",
            RunEnd::TimedOut { .. } => "timed_out",
        };
        Self {
            run_index: r.run_index,
            benchmark: r.benchmark.clone(),
            engine: r.engine.clone(),
            tier: r.tier,
            seed: r.seed,
            outcome: r.outcome,
            end: end.to_string(),
            exit_code: r.exit_code(),
            cycles: r.cycles,
            delta: r.delta,
            divergent_from_zero: r.divergent_from_zero,
            fault_count: r.fault_count(),
        }
    }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

/// Writes the report files into `dir` (which must exist) and returns the
/// paths written. JSON is `report.json`; CSV is the three tables.
pub fn write_report(dir: &Path, report: &CampaignReport, formats: &[OutputFormat]) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if formats.contains(&OutputFormat::Json) {
        let path = dir.join(REPORT_FILES[0]);
        let mut text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        written.push(path);
    }
    if !formats.contains(&OutputFormat::Csv) {
        return Ok(written);
    }

    let path = dir.join(REPORT_FILES[1]);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for r in &report.runs {
        w.serialize(RunRow::from(r)).map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(REPORT_FILES[2]);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record([
        "engine",
        "benchmark",
        "tier",
        "n_runs",
        "crash_pct",
        "sdc_pct",
        "masked_pct",
        "timeout_pct",
        "crash",
        "sdc",
        "masked",
        "timeout",
    ])
    .map_err(csv_err)?;
    for c in &report.cells {
        let p = c.percentages;
        let h = c.histogram;
        let mut rec = vec![
            c.engine.clone(),
            c.benchmark.clone(),
            c.tier.map_or("-", Tier::name).to_string(),
            c.n_runs.to_string(),
        ];
        rec.extend([p.crash, p.sdc, p.masked, p.timeout].map(|v| format!("{v:.1}")));
        rec.extend([h.crash, h.sdc, h.masked, h.timeout].map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(REPORT_FILES[3]);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let mut header = vec!["engine".to_string(), "benchmark".to_string()];
    for t in Tier::ALL {
        header.push(format!("{t}_sdc"));
        header.push(format!("{t}_masked"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for row in delta_table_rows(&report.cells) {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

pub fn read_report(path: &Path) -> io::Result<CampaignReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn read_runs_csv(path: &Path) -> io::Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}
