//! Statistical fault-injection campaigns.
//!
//! A campaign runs every benchmark fault-free once (the golden run), then
//! for each (benchmark, engine, tier) cell performs `n` faulty runs, each
//! with its own seed, classifies them against the golden run and
//! aggregates outcome counts and counter deviations.

mod aggregate;
mod io;

pub use aggregate::{aggregate, audit, render_tables, CellSummary, Histogram, Mismatch, Percentages};
pub use io::{read_report, read_runs_csv, write_report, RunRow, REPORT_FILES};

use serde::{Deserialize, Serialize};

use crate::asm::{load, ProgramImage};
use crate::config::{Benchmark, CampaignConfig, ConfigError, MachineSettings, ResolvedEngine, Tier};
use crate::injector::{FaultConfig, FaultRecord, InjectorSet};
use crate::machine::{run, HpcVector, MachineState, RunEnd, TrapCause};
use crate::memsys::MemorySystem;
use crate::rng::derive_seed;

/// Version of the report layout written by [`write_report`].
pub const SCHEMA_VERSION: u32 = 1;

/// Two-sided z value for the supported confidence levels.
pub fn z_value(confidence: f64) -> Option<f64> {
    if (confidence - 0.95).abs() < 1e-9 {
        Some(1.9600)
    } else if (confidence - 0.99).abs() < 1e-9 {
        Some(2.5758)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SampleSizeError {
    #[error("margin of error must be in (0, 1), got {0}")]
    Margin(f64),
    #[error("no z value for confidence {0}; pass one explicitly")]
    Confidence(f64),
}

/// Worst-case (p = 0.5) sample size for margin `e` at the given confidence.
pub fn sample_size(e: f64, confidence: f64) -> Result<u64, SampleSizeError> {
    let z = z_value(confidence).ok_or(SampleSizeError::Confidence(confidence))?;
    sample_size_with_z(e, z)
}

pub fn sample_size_with_z(e: f64, z: f64) -> Result<u64, SampleSizeError> {
    if !(e > 0.0 && e < 1.0) {
        return Err(SampleSizeError::Margin(e));
    }
    Ok((z * z * 0.25 / (e * e)).round() as u64)
}

impl Tier {
    pub fn sample_size(self) -> u64 {
        sample_size(self.margin(), self.confidence()).expect("tier parameters are supported")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Crash,
    Sdc,
    Masked,
    Timeout,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 4] = [
        OutcomeClass::Crash,
        OutcomeClass::Sdc,
        OutcomeClass::Masked,
        OutcomeClass::Timeout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Crash => "crash",
            OutcomeClass::Sdc => "sdc",
            OutcomeClass::Masked => "masked",
            OutcomeClass::Timeout => "timeout",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl std::fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::Deserialize;

    pub fn serialize<S: serde::Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        STANDARD
            .decode(String::deserialize(d)?)
            .map_err(serde::de::Error::custom)
    }
}

/// Fault-free reference execution of one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenReference {
    /// Output bytes, base64 encoded in JSON.
    #[serde(with = "b64")]
    pub output: Vec<u8>,
    pub exit_code: u8,
    pub hpc: HpcVector,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GoldenError {
    #[error("golden run trapped: {0:?}")]
    Trapped(TrapCause),
    #[error("golden run did not finish within {limit} cycles")]
    TimedOut { limit: u64 },
    #[error("{0}")]
    Load(#[from] crate::asm::LoadError),
    #[error("{0}")]
    Memory(#[from] crate::memsys::MemConfigError),
}

fn fresh_machine(image: &ProgramImage, settings: &MachineSettings) -> Result<(MachineState, MemorySystem), GoldenError> {
    let mut mem = MemorySystem::new(settings.memory())?;
    let mut state = MachineState::default();
    load(image, &mut mem, &mut state)?;
    Ok((state, mem))
}

/// Runs `image` with no injectors. A trap or a run past
/// `settings.golden_cycle_limit` is an error, not an outcome.
pub fn golden_run(image: &ProgramImage, settings: &MachineSettings) -> Result<GoldenReference, GoldenError> {
    let (state, mut mem) = fresh_machine(image, settings)?;
    let trace = run(state, &mut mem, InjectorSet::empty(), settings.golden_cycle_limit);
    match trace.end {
        RunEnd::Exited { code } => Ok(GoldenReference {
            output: trace.state.output,
            exit_code: code,
            hpc: trace.state.hpc,
            cycles: trace.state.cycle,
        }),
        RunEnd::Trapped { cause } => Err(GoldenError::Trapped(cause)),
        RunEnd::TimedOut { .. } => Err(GoldenError::TimedOut {
            limit: settings.golden_cycle_limit,
        }),
    }
}

/// Outcome of a finished run. Counter differences play no part.
pub fn classify(end: &RunEnd, output: &[u8], golden: &GoldenReference) -> OutcomeClass {
    match *end {
        RunEnd::Trapped { .. } => OutcomeClass::Crash,
        RunEnd::TimedOut { .. } => OutcomeClass::Timeout,
        RunEnd::Exited { code } if code == golden.exit_code && output == golden.output => OutcomeClass::Masked,
        RunEnd::Exited { .. } => OutcomeClass::Sdc,
    }
}

/// Mean absolute percentage deviation of the counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub value: f64,
    /// Counters with a nonzero golden value, over which the mean is taken.
    pub counters: usize,
    /// Some counter that was zero in the golden run is nonzero here.
    pub divergent_from_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DeltaError {
    #[error("every golden counter is zero")]
    AllZero,
    #[error("counter vectors differ in length ({0} vs {1})")]
    Length(usize, usize),
}

pub fn delta_mean(golden: &HpcVector, faulty: &HpcVector) -> Result<Delta, DeltaError> {
    delta_mean_counters(&golden.to_array(), &faulty.to_array())
}

/// `mean over i with golden[i] > 0 of |golden[i] - faulty[i]| / golden[i] * 100`.
/// Counters that are zero in the golden run are left out of both the sum
/// and the count.
pub fn delta_mean_counters(golden: &[u64], faulty: &[u64]) -> Result<Delta, DeltaError> {
    if golden.len() != faulty.len() {
        return Err(DeltaError::Length(golden.len(), faulty.len()));
    }
    let mut sum = 0.0;
    let mut counters = 0;
    let mut divergent_from_zero = false;
    for (&g, &f) in golden.iter().zip(faulty) {
        if g == 0 {
            divergent_from_zero |= f != 0;
            continue;
        }
        sum += g.abs_diff(f) as f64 / g as f64 * 100.0;
        counters += 1;
    }
    if counters == 0 {
        return Err(DeltaError::AllZero);
    }
    Ok(Delta {
        value: sum / counters as f64,
        counters,
        divergent_from_zero,
    })
}

/// Everything recorded about one faulty run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub benchmark: String,
    pub engine: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tier: Option<Tier>,
    pub run_index: u64,
    pub seed: u64,
    pub outcome: OutcomeClass,
    pub end: RunEnd,
    pub cycles: u64,
    #[serde(with = "b64")]
    pub output: Vec<u8>,
    pub hpc: HpcVector,
    pub delta: f64,
    pub divergent_from_zero: bool,
    pub faults: Vec<FaultRecord>,
}

impl RunReport {
    /// Injections that actually changed or pinned state.
    pub fn fault_count(&self) -> u64 {
        self.faults.iter().filter(|r| !r.is_skipped()).count() as u64
    }

    pub fn exit_code(&self) -> Option<u8> {
        match self.end {
            RunEnd::Exited { code } => Some(code),
            _ => None,
        }
    }
}

/// Label used for a cell that runs every engine at once.
pub const MULTI_ENGINE: &str = "multi";

/// One faulty run of `image` with the given injectors. The cycle budget is
/// `timeout_factor` times the golden cycle count.
pub fn faulty_run(
    image: &ProgramImage,
    settings: &MachineSettings,
    golden: &GoldenReference,
    configs: &[FaultConfig],
    seed: u64,
) -> Result<(RunEnd, MachineState, Vec<FaultRecord>), GoldenError> {
    let (state, mut mem) = fresh_machine(image, settings)?;
    let mut injectors = InjectorSet::from_configs(configs, seed);
    if let Some(p) = settings.sweep_period {
        injectors = injectors.with_sweep(p);
    }
    let budget = golden.cycles.saturating_mul(settings.timeout_factor);
    let trace = run(state, &mut mem, injectors, budget);
    Ok((trace.end, trace.state, trace.faults))
}

/// Runs and classifies one faulty execution.
#[allow(clippy::too_many_arguments)]
pub fn run_single(
    benchmark: &Benchmark,
    engine_label: &str,
    tier: Option<Tier>,
    run_index: u64,
    settings: &MachineSettings,
    golden: &GoldenReference,
    configs: &[FaultConfig],
    seed: u64,
) -> Result<RunReport, GoldenError> {
    let (end, state, faults) = faulty_run(&benchmark.image, settings, golden, configs, seed)?;
    let outcome = classify(&end, &state.output, golden);
    let delta = delta_mean(&golden.hpc, &state.hpc).expect("golden mcycle is nonzero");
    Ok(RunReport {
        benchmark: benchmark.name.clone(),
        engine: engine_label.to_string(),
        tier,
        run_index,
        seed,
        outcome,
        end,
        cycles: state.cycle,
        output: state.output,
        hpc: state.hpc,
        delta: delta.value,
        divergent_from_zero: delta.divergent_from_zero,
        faults,
    })
}

/// FNV-1a, used to key seeds by cell name.
fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of run `run_index` in the cell (benchmark, engine, tier).
pub fn run_seed(base_seed: u64, benchmark: &str, engine: &str, tier: Tier, run_index: u64) -> u64 {
    let cell = fnv1a(&format!("{benchmark}/{engine}/{tier}"));
    derive_seed(derive_seed(base_seed, cell), run_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Golden reference per benchmark, in benchmark order.
    pub golden: Vec<GoldenEntry>,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenEntry {
    pub benchmark: String,
    #[serde(flatten)]
    pub reference: GoldenReference,
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("benchmark `{benchmark}`: {source}")]
    Golden {
        benchmark: String,
        #[source]
        source: GoldenError,
    },
    #[error("campaign has no engines configured")]
    NoEngines,
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One (benchmark, engine, tier) cell of a campaign plan.
#[derive(Debug, Clone)]
pub struct Cell {
    pub benchmark: usize,
    pub engine: String,
    pub configs: Vec<FaultConfig>,
    pub seed: u64,
    pub tier: Tier,
    pub runs: u64,
}

/// Cells in report order: benchmark, then engine, then tier.
pub fn plan(cfg: &CampaignConfig, benchmarks: &[Benchmark]) -> Result<Vec<Cell>, CampaignError> {
    let engines: Vec<ResolvedEngine> = cfg.resolved_engines()?;
    if engines.is_empty() {
        return Err(CampaignError::NoEngines);
    }
    let groups: Vec<(String, Vec<FaultConfig>, u64)> = if cfg.campaign.multi_engine {
        vec![(
            MULTI_ENGINE.to_string(),
            engines.iter().map(|e| e.config).collect(),
            cfg.campaign.seed,
        )]
    } else {
        engines
            .iter()
            .map(|e| (e.id.name().to_string(), vec![e.config], e.seed))
            .collect()
    };
    let mut cells = Vec::new();
    for b in 0..benchmarks.len() {
        for (label, configs, seed) in &groups {
            for &tier in &cfg.campaign.tiers {
                cells.push(Cell {
                    benchmark: b,
                    engine: label.clone(),
                    configs: configs.clone(),
                    seed: *seed,
                    tier,
                    runs: cfg
                        .campaign
                        .tier_runs
                        .get(&tier)
                        .copied()
                        .unwrap_or_else(|| tier.sample_size()),
                });
            }
        }
    }
    Ok(cells)
}

/// Runs a whole campaign. Runs execute on `cfg.campaign.parallelism`
/// threads; the report does not depend on the thread count or on the
/// order in which runs finish.
pub fn run_campaign(cfg: &CampaignConfig, benchmarks: &[Benchmark]) -> Result<CampaignReport, CampaignError> {
    use rayon::prelude::*;

    cfg.validate()?;
    let cells = plan(cfg, benchmarks)?;
    let settings = &cfg.machine;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.campaign.parallelism)
        .build()
        .map_err(|e| CampaignError::Pool(e.to_string()))?;

    let golden: Vec<GoldenReference> = pool.install(|| {
        benchmarks
            .par_iter()
            .map(|b| {
                golden_run(&b.image, settings).map_err(|source| CampaignError::Golden {
                    benchmark: b.name.clone(),
                    source,
                })
            })
            .collect::<Result<_, _>>()
    })?;

    let jobs: Vec<(&Cell, u64)> = cells
        .iter()
        .flat_map(|c| (0..c.runs).map(move |i| (c, i)))
        .collect();
    let runs: Vec<RunReport> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, i)| {
                let bench = &benchmarks[cell.benchmark];
                let seed = run_seed(cell.seed, &bench.name, &cell.engine, cell.tier, i);
                run_single(
                    bench,
                    &cell.engine,
                    Some(cell.tier),
                    i,
                    settings,
                    &golden[cell.benchmark],
                    &cell.configs,
                    seed,
                )
                .map_err(|source| CampaignError::Golden {
                    benchmark: bench.name.clone(),
                    source,
                })
            })
            .collect::<Result<_, _>>()
    })?;

    let rows: Vec<RunRow> = runs.iter().map(RunRow::from).collect();
    Ok(CampaignReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.campaign.seed,
        config: cfg.echo(),
        golden: benchmarks
            .iter()
            .zip(golden)
            .map(|(b, reference)| GoldenEntry {
                benchmark: b.name.clone(),
                reference,
            })
            .collect(),
        cells: aggregate(&rows),
        runs,
    })
}
