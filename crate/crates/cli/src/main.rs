//! `faultsim` command-line driver. Every subcommand is a thin wrapper over
//! library calls in the `faultsim` crate.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Parser, Subcommand};
use faultsim::campaign::{
    audit, golden_run, read_report, read_runs_csv, render_tables, run_campaign, run_single, write_report,
    GoldenEntry, GoldenError, OutcomeClass, REPORT_FILES,
};
use faultsim::config::{Benchmark, CampaignConfig, ConfigError};
use faultsim::EngineId;

/// Environment variable that overrides the campaign output directory.
const OUT_ENV: &str = "FAULTSIM_OUT";

#[derive(Parser)]
#[command(name = "faultsim", version, about = "Fault-injection campaigns on an RV32IM machine model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a program and print its image descriptor as JSON.
    Assemble {
        program: String,
        /// Write the descriptor here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a program without faults; its output goes to stdout and its
    /// exit code becomes ours.
    Run {
        program: String,
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Fault-free reference run: output, exit code and counters as JSON.
    Golden {
        program: String,
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// One faulty run. Exit status: 0 Masked, 10 SDC, 20 Crash, 30 Timeout.
    Inject {
        program: String,
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Engine block to use: reg, l1i, l1d, l2 or mem.
        #[arg(short, long)]
        engine: String,
        /// Run seed; defaults to the engine's configured seed.
        #[arg(short, long)]
        seed: Option<u64>,
    },
    /// Full campaign described by a config file.
    Campaign {
        config: PathBuf,
        /// Output directory (overrides FAULTSIM_OUT and the config).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Recompute the aggregates from runs.csv and compare with report.json.
    Analyze {
        /// report.json or the directory holding it.
        report: PathBuf,
    },
}

/// A failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn golden(benchmark: &str, e: GoldenError) -> Self {
        Self {
            code: 3,
            message: format!("{benchmark}: {e}"),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    if e.kind() == io::ErrorKind::NotFound {
        Failure::input(format!("{}: no such file", path.display()))
    } else {
        Failure::input(format!("{}: {e}", path.display()))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { path, source } => io_failure(&path, source),
            other => Failure::input(other.to_string()),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assemble { program, output } => cmd_assemble(&program, output.as_deref()),
        Command::Run { program, config } => cmd_run(&program, config.as_deref()),
        Command::Golden { program, config } => cmd_golden(&program, config.as_deref()),
        Command::Inject {
            program,
            config,
            engine,
            seed,
        } => cmd_inject(&program, config.as_deref(), &engine, seed),
        Command::Campaign { config, out } => cmd_campaign(&config, out),
        Command::Analyze { report } => cmd_analyze(&report),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("faultsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<CampaignConfig, Failure> {
    match path {
        Some(p) => Ok(CampaignConfig::from_file(p)?),
        None => Ok(CampaignConfig::default()),
    }
}

fn load_program(spec: &str) -> Result<Benchmark, Failure> {
    Ok(Benchmark::resolve(spec, Path::new("."))?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    writeln!(io::stdout(), "{text}").map_err(|e| Failure::input(format!("stdout: {e}")))
}

fn cmd_assemble(program: &str, output: Option<&Path>) -> CmdResult {
    let bench = load_program(program)?;
    let mut text = bench.image.to_json();
    text.push('\n');
    match output {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e))?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_run(program: &str, config: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?;
    let bench = load_program(program)?;
    match golden_run(&bench.image, &cfg.machine) {
        Ok(g) => {
            let mut out = io::stdout();
            out.write_all(&g.output)
                .and_then(|_| out.flush())
                .map_err(|e| Failure::input(format!("stdout: {e}")))?;
            eprintln!("cycles {}, instructions {}", g.cycles, g.hpc.minstret);
            Ok(g.exit_code)
        }
        Err(GoldenError::Trapped(cause)) => {
            eprintln!("faultsim: trapped: {cause:?}");
            Ok(20)
        }
        Err(GoldenError::TimedOut { limit }) => {
            eprintln!("faultsim: no exit within {limit} cycles");
            Ok(30)
        }
        Err(e) => Err(Failure::golden(&bench.name, e)),
    }
}

fn cmd_golden(program: &str, config: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?;
    let bench = load_program(program)?;
    let reference = golden_run(&bench.image, &cfg.machine).map_err(|e| Failure::golden(&bench.name, e))?;
    print_json(&GoldenEntry {
        benchmark: bench.name,
        reference,
    })?;
    Ok(0)
}

fn outcome_status(o: OutcomeClass) -> u8 {
    match o {
        OutcomeClass::Masked => 0,
        OutcomeClass::Sdc => 10,
        OutcomeClass::Crash => 20,
        OutcomeClass::Timeout => 30,
    }
}

fn cmd_inject(program: &str, config: Option<&Path>, engine: &str, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(config)?;
    let id = EngineId::from_name(engine)
        .ok_or_else(|| Failure::input(format!("--engine: unknown engine `{engine}` (expected reg, l1i, l1d, l2 or mem)")))?;
    let resolved = cfg.engine(id)?;
    let bench = load_program(program)?;
    let golden = golden_run(&bench.image, &cfg.machine).map_err(|e| Failure::golden(&bench.name, e))?;
    let report = run_single(
        &bench,
        id.name(),
        None,
        0,
        &cfg.machine,
        &golden,
        &[resolved.config],
        seed.unwrap_or(resolved.seed),
    )
    .map_err(|e| Failure::golden(&bench.name, e))?;
    print_json(&report)?;
    Ok(outcome_status(report.outcome))
}

fn cmd_campaign(config: &Path, out: Option<PathBuf>) -> CmdResult {
    let cfg = CampaignConfig::from_file(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let benchmarks = cfg.load_benchmarks(base)?;
    let out = out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.directory.clone());

    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    let staging = out.join(format!(".staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_failure(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| io_failure(&staging, e))?;

    let written = run_campaign(&cfg, &benchmarks)
        .map_err(|e| Failure {
            code: 3,
            message: e.to_string(),
        })
        .and_then(|report| {
            write_report(&staging, &report, &cfg.output.formats)
                .map(|_| report)
                .map_err(|e| io_failure(&staging, e))
        })
        .and_then(|report| finalize(&out, &staging).map(|_| report));
    let report = match written {
        Ok(r) => r,
        Err(f) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(f);
        }
    };
    print!("{}", render_tables(&report.cells));
    eprintln!("report written to {}", out.display());
    Ok(0)
}

/// Moves the staged files into `out`. A report already there is first moved
/// to a `previous-<timestamp>` subdirectory. `report.json` is moved last, so
/// its presence marks a complete report.
fn finalize(out: &Path, staging: &Path) -> Result<(), Failure> {
    let existing: Vec<&str> = REPORT_FILES.iter().copied().filter(|f| out.join(f).exists()).collect();
    if !existing.is_empty() {
        let stamp = humantime::format_rfc3339_seconds(SystemTime::now())
            .to_string()
            .replace(':', "");
        let mut keep = out.join(format!("previous-{stamp}"));
        let mut n = 1;
        while keep.exists() {
            keep = out.join(format!("previous-{stamp}-{n}"));
            n += 1;
        }
        fs::create_dir(&keep).map_err(|e| io_failure(&keep, e))?;
        for f in &existing {
            fs::rename(out.join(f), keep.join(f)).map_err(|e| io_failure(&out.join(f), e))?;
        }
    }
    for f in REPORT_FILES.iter().skip(1).chain(&REPORT_FILES[..1]) {
        let src = staging.join(f);
        if src.exists() {
            fs::rename(&src, out.join(f)).map_err(|e| io_failure(&src, e))?;
        }
    }
    fs::remove_dir(staging).map_err(|e| io_failure(staging, e))
}

fn cmd_analyze(path: &Path) -> CmdResult {
    let report_path = if path.is_dir() {
        path.join(REPORT_FILES[0])
    } else {
        path.to_path_buf()
    };
    let runs_path = report_path.with_file_name(REPORT_FILES[1]);
    let report = read_report(&report_path).map_err(|e| io_failure(&report_path, e))?;
    let rows = read_runs_csv(&runs_path).map_err(|e| io_failure(&runs_path, e))?;
    let mismatches = audit(&report.cells, &rows);
    print!("{}", render_tables(&faultsim::campaign::aggregate(&rows)));
    if mismatches.is_empty() {
        println!("audit clean");
        Ok(0)
    } else {
        for m in &mismatches {
            eprintln!("mismatch {m}");
        }
        eprintln!("audit failed: {} mismatching field(s)", mismatches.len());
        Ok(1)
    }
}
