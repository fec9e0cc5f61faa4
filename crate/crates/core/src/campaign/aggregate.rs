use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{OutcomeClass, RunRow};
use crate::config::Tier;

/// Outcome counts of one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub crash: u64,
    pub sdc: u64,
    pub masked: u64,
    pub timeout: u64,
}

impl Histogram {
    pub fn add(&mut self, o: OutcomeClass) {
        *self.slot(o) += 1;
    }

    fn slot(&mut self, o: OutcomeClass) -> &mut u64 {
        match o {
            OutcomeClass::Crash => &mut self.crash,
            OutcomeClass::Sdc => &mut self.sdc,
            OutcomeClass::Masked => &mut self.masked,
            OutcomeClass::Timeout => &mut self.timeout,
        }
    }

    pub fn get(&self, o: OutcomeClass) -> u64 {
        match o {
            OutcomeClass::Crash => self.crash,
            OutcomeClass::Sdc => self.sdc,
            OutcomeClass::Masked => self.masked,
            OutcomeClass::Timeout => self.timeout,
        }
    }

    pub fn total(&self) -> u64 {
        self.crash + self.sdc + self.masked + self.timeout
    }

    /// Percentages rounded to one decimal with the largest-remainder rule,
    /// so that they add up to exactly 100.0 (unless the cell is empty).
    pub fn percentages(&self) -> Percentages {
        let n = self.total();
        let mut tenths = [0u64; 4];
        if n > 0 {
            let mut rem = [(0u64, 0usize); 4];
            for (i, o) in OutcomeClass::ALL.into_iter().enumerate() {
                let scaled = self.get(o) * 1000;
                tenths[i] = scaled / n;
                rem[i] = (scaled % n, i);
            }
            let missing = 1000 - tenths.iter().sum::<u64>();
            // Largest remainder first; ties go to the earlier class.
            rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in rem.iter().take(missing as usize) {
                tenths[i] += 1;
            }
        }
        let p = |i: usize| tenths[i] as f64 / 10.0;
        Percentages {
            crash: p(0),
            sdc: p(1),
            masked: p(2),
            timeout: p(3),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentages {
    pub crash: f64,
    pub sdc: f64,
    pub masked: f64,
    pub timeout: f64,
}

/// Aggregate of one (benchmark, engine, tier) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub benchmark: String,
    pub engine: String,
    pub tier: Option<Tier>,
    pub n_runs: u64,
    pub histogram: Histogram,
    pub percentages: Percentages,
    /// Mean deviation over SDC runs; `None` when there were none.
    pub delta_sdc: Option<f64>,
    /// Mean deviation over Masked runs; `None` when there were none.
    pub delta_masked: Option<f64>,
    /// Runs in which a counter that is zero in the golden run moved.
    pub divergent_runs: u64,
    pub faults_injected: u64,
}

impl CellSummary {
    pub fn label(&self) -> String {
        match self.tier {
            Some(t) => format!("{}/{}/{}", self.benchmark, self.engine, t),
            None => format!("{}/{}", self.benchmark, self.engine),
        }
    }
}

/// Groups rows by (benchmark, engine, tier) in order of first appearance.
pub fn aggregate(rows: &[RunRow]) -> Vec<CellSummary> {
    struct Acc {
        cell: CellSummary,
        sdc: (f64, u64),
        masked: (f64, u64),
    }
    let mut cells: Vec<Acc> = Vec::new();
    for r in rows {
        let idx = match cells
            .iter()
            .position(|a| a.cell.benchmark == r.benchmark && a.cell.engine == r.engine && a.cell.tier == r.tier)
        {
            Some(i) => i,
            None => {
                cells.push(Acc {
                    cell: CellSummary {
                        benchmark: r.benchmark.clone(),
                        engine: r.engine.clone(),
                        tier: r.tier,
                        n_runs: 0,
                        histogram: Histogram::default(),
                        percentages: Percentages::default(),
                        delta_sdc: None,
                        delta_masked: None,
                        divergent_runs: 0,
                        faults_injected: 0,
                    },
                    sdc: (0.0, 0),
                    masked: (0.0, 0),
                });
                cells.len() - 1
            }
        };
        let a = &mut cells[idx];
        a.cell.n_runs += 1;
        a.cell.histogram.add(r.outcome);
        a.cell.divergent_runs += r.divergent_from_zero as u64;
        a.cell.faults_injected += r.fault_count;
        let bucket = match r.outcome {
            OutcomeClass::Sdc => Some(&mut a.sdc),
            OutcomeClass::Masked => Some(&mut a.masked),
            _ => None,
        };
        if let Some((sum, n)) = bucket {
            *sum += r.delta;
            *n += 1;
        }
    }
    cells
        .into_iter()
        .map(|mut a| {
            let mean = |(sum, n): (f64, u64)| (n > 0).then(|| sum / n as f64);
            a.cell.percentages = a.cell.histogram.percentages();
            a.cell.delta_sdc = mean(a.sdc);
            a.cell.delta_masked = mean(a.masked);
            a.cell
        })
        .collect()
}

/// A disagreement between a stored cell and the one recomputed from the
/// per-run rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub cell: String,
    pub field: String,
    pub stored: String,
    pub recomputed: String,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} stored {} recomputed {}",
            self.cell, self.field, self.stored, self.recomputed
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        _ => false,
    }
}

/// Recomputes the cells from `rows` and lists every field that differs
/// from `stored`.
pub fn audit(stored: &[CellSummary], rows: &[RunRow]) -> Vec<Mismatch> {
    let fresh = aggregate(rows);
    let mut out = Vec::new();
    let mut push = |cell: &str, field: &str, s: String, r: String| {
        out.push(Mismatch {
            cell: cell.to_string(),
            field: field.to_string(),
            stored: s,
            recomputed: r,
        })
    };
    for s in stored {
        let label = s.label();
        let Some(r) = fresh.iter().find(|r| r.label() == label) else {
            push(&label, "cell", "present".into(), "missing".into());
            continue;
        };
        if s.n_runs != r.n_runs {
            push(&label, "n_runs", s.n_runs.to_string(), r.n_runs.to_string());
        }
        for o in OutcomeClass::ALL {
            if s.histogram.get(o) != r.histogram.get(o) {
                push(&label, o.name(), s.histogram.get(o).to_string(), r.histogram.get(o).to_string());
            }
        }
        if s.percentages != r.percentages {
            push(
                &label,
                "percentages",
                format!("{:?}", s.percentages),
                format!("{:?}", r.percentages),
            );
        }
        if !same(s.delta_sdc, r.delta_sdc) {
            push(&label, "delta_sdc", opt(s.delta_sdc), opt(r.delta_sdc));
        }
        if !same(s.delta_masked, r.delta_masked) {
            push(&label, "delta_masked", opt(s.delta_masked), opt(r.delta_masked));
        }
        if s.divergent_runs != r.divergent_runs {
            push(&label, "divergent_runs", s.divergent_runs.to_string(), r.divergent_runs.to_string());
        }
        if s.faults_injected != r.faults_injected {
            push(&label, "faults_injected", s.faults_injected.to_string(), r.faults_injected.to_string());
        }
    }
    for r in &fresh {
        if !stored.iter().any(|s| s.label() == r.label()) {
            push(&r.label(), "cell", "missing".into(), "present".into());
        }
    }
    out
}

/// Table cell for a mean deviation: two decimals, or `-` for an empty
/// category.
pub fn delta_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn engines_in_order(cells: &[CellSummary]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells {
        if !out.contains(&c.engine) {
            out.push(c.engine.clone());
        }
    }
    out
}

fn benchmarks_for(cells: &[CellSummary], engine: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cells.iter().filter(|c| c.engine == engine) {
        if !out.contains(&c.benchmark) {
            out.push(c.benchmark.clone());
        }
    }
    out
}

/// Rows of the deviation tables: one table per engine, one row per
/// benchmark, SDC and Masked columns for each tier.
pub(crate) fn delta_table_rows(cells: &[CellSummary]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for engine in engines_in_order(cells) {
        for bench in benchmarks_for(cells, &engine) {
            let mut row = vec![engine.clone(), bench.clone()];
            for tier in Tier::ALL {
                let c = cells
                    .iter()
                    .find(|c| c.engine == engine && c.benchmark == bench && c.tier == Some(tier));
                row.push(delta_cell(c.and_then(|c| c.delta_sdc)));
                row.push(delta_cell(c.and_then(|c| c.delta_masked)));
            }
            rows.push(row);
        }
    }
    rows
}

/// Plain-text rendering of the outcome distribution and the deviation
/// tables.
pub fn render_tables(cells: &[CellSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Outcome distribution (%)");
    let _ = writeln!(
        s,
        "{:<8} {:<12} {:<7} {:>6} {:>7} {:>7} {:>7} {:>8}",
        "engine", "benchmark", "tier", "runs", "crash", "sdc", "masked", "timeout"
    );
    for c in cells {
        let p = c.percentages;
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:<7} {:>6} {:>7.1} {:>7.1} {:>7.1} {:>8.1}",
            c.engine,
            c.benchmark,
            c.tier.map_or("-", Tier::name),
            c.n_runs,
            p.crash,
            p.sdc,
            p.masked,
            p.timeout
        );
    }
    for engine in engines_in_order(cells) {
        let _ = writeln!(s, "\nCounter deviation, engine {engine} (mean %, SDC / Masked)");
        let _ = write!(s, "{:<12}", "benchmark");
        for t in Tier::ALL {
            let _ = write!(s, " {:>9} {:>9}", format!("{t}-sdc"), format!("{t}-mask"));
        }
        let _ = writeln!(s);
        for row in delta_table_rows(cells).into_iter().filter(|r| r[0] == engine) {
            let _ = write!(s, "{:<12}", row[1]);
            for v in &row[2..] {
                let _ = write!(s, " {v:>9}");
            }
            let _ = writeln!(s);
        }
    }
    s
}
