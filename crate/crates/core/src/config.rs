//! Campaign configuration file (TOML).
//!
//! ```toml
//! [machine]
//! ram_size = 8388608
//! timeout_factor = 10
//! [machine.l1d]
//! size_bytes = 65536
//! block_bytes = 64
//! associativity = 4
//!
//! [benchmarks]
//! paths = ["builtin:crc", "kernels/mine.s"]
//!
//! [engines.mem]
//! probability = 1e-4
//! fault_type = "bit_flip"
//! faulty_bits = 1
//!
//! [campaign]
//! tiers = ["low"]
//! seed = 42
//! parallelism = 8
//!
//! [output]
//! directory = "out"
//! ```
//!
//! Unknown keys are rejected everywhere. Validation errors name the
//! offending key by its dotted path, e.g. `engines.mem.probability`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asm::{assemble, AsmError, ProgramImage};
use crate::injector::{EngineId, EngineTarget, FaultConfig, FaultType, FaultyBits, TargetClass};
use crate::kernels;
use crate::memsys::{CacheGeometry, CacheId, MemoryConfig, StallLatencies, RAM_BASE};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{path}:{}", fmt_asm(.error))]
    Assembly { path: PathBuf, error: AsmError },
}

fn fmt_asm(e: &AsmError) -> String {
    if e.line == 0 {
        format!(" {}", e.kind)
    } else {
        format!("{}: {}", e.line, e.kind)
    }
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

/// Machine model and run limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineSettings {
    pub ram_size: u32,
    pub l1i: CacheGeometry,
    pub l1d: CacheGeometry,
    pub l2: CacheGeometry,
    pub latencies: StallLatencies,
    /// Faulty runs get `timeout_factor` times the golden cycle count.
    pub timeout_factor: u64,
    /// Cycle ceiling for golden runs.
    pub golden_cycle_limit: u64,
    /// Optional periodic re-application of permanent faults.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_period: Option<u64>,
}

impl Default for MachineSettings {
    fn default() -> Self {
        let m = MemoryConfig::default();
        Self {
            ram_size: m.ram_size,
            l1i: m.l1i,
            l1d: m.l1d,
            l2: m.l2,
            latencies: m.latencies,
            timeout_factor: 10,
            golden_cycle_limit: 1_000_000_000,
            sweep_period: None,
        }
    }
}

impl MachineSettings {
    pub fn memory(&self) -> MemoryConfig {
        MemoryConfig {
            ram_size: self.ram_size,
            l1i: self.l1i,
            l1d: self.l1d,
            l2: self.l2,
            latencies: self.latencies,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use crate::memsys::MemConfigError as E;
        self.memory().validate().map_err(|e| {
            let key = match &e {
                E::Geometry { cache, .. } | E::BlockLargerThanL2(cache) => format!("machine.{}", cache_key(*cache)),
                E::RamSize(_) => "machine.ram_size".to_string(),
            };
            invalid(key, e.to_string())
        })?;
        if self.timeout_factor == 0 {
            return Err(invalid("machine.timeout_factor", "must be at least 1"));
        }
        if self.golden_cycle_limit == 0 {
            return Err(invalid("machine.golden_cycle_limit", "must be at least 1"));
        }
        if self.sweep_period == Some(0) {
            return Err(invalid("machine.sweep_period", "must be at least 1"));
        }
        Ok(())
    }
}

fn cache_key(c: CacheId) -> &'static str {
    match c {
        CacheId::L1I => "l1i",
        CacheId::L1D => "l1d",
        CacheId::L2 => "l2",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Assembly files, relative to the config file, or `builtin:<name>` for
    /// a bundled kernel.
    pub paths: Vec<String>,
}

/// One `[engines.<name>]` block. Keys that only make sense for another
/// engine are rejected when the block is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineBlock {
    pub probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_type: Option<FaultType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faulty_bits: Option<FaultyBits>,
    /// Replaces the campaign seed for this engine's runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_class: Option<TargetClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pc_target: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub register: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corruption_size: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_start: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_end: Option<u32>,
}

impl EngineBlock {
    /// Resolves the block into an injector configuration for `engine`.
    /// `ram_size` supplies the default memory target range and bounds it.
    pub fn resolve(&self, engine: EngineId, ram_size: u32) -> Result<FaultConfig, ConfigError> {
        let key = |field: &str| format!("engines.{}.{field}", engine.name());
        let foreign: &[(&str, bool)] = match engine {
            EngineId::Reg => &[
                ("corruption_size", self.corruption_size.is_some()),
                ("target_start", self.target_start.is_some()),
                ("target_end", self.target_end.is_some()),
            ],
            EngineId::Mem => &[
                ("target_class", self.target_class.is_some()),
                ("pc_target", self.pc_target.is_some()),
                ("register", self.register.is_some()),
                ("corruption_size", self.corruption_size.is_some()),
            ],
            _ => &[
                ("target_class", self.target_class.is_some()),
                ("pc_target", self.pc_target.is_some()),
                ("register", self.register.is_some()),
                ("target_start", self.target_start.is_some()),
                ("target_end", self.target_end.is_some()),
            ],
        };
        if let Some((field, _)) = foreign.iter().find(|(_, present)| *present) {
            return Err(invalid(key(field), format!("not a parameter of the {engine} engine")));
        }
        let target = match engine {
            EngineId::Reg => EngineTarget::Register {
                class: self.target_class.unwrap_or(TargetClass::Random),
                pc_target: self.pc_target.unwrap_or(0),
                register: self.register,
            },
            EngineId::Mem => EngineTarget::Memory {
                target_start: self.target_start.unwrap_or(RAM_BASE),
                target_end: self
                    .target_end
                    .unwrap_or_else(|| (RAM_BASE as u64 + ram_size as u64 - 1).min(u32::MAX as u64) as u32),
            },
            _ => EngineTarget::Cache {
                cache: engine.cache().expect("cache engine"),
                corruption_size: self.corruption_size.unwrap_or(1),
            },
        };
        let cfg = FaultConfig {
            probability: self.probability,
            start: self.start.unwrap_or(0),
            end: self.end.unwrap_or(u64::MAX),
            fault_type: self.fault_type.unwrap_or(FaultType::BitFlip),
            mask: self.mask.unwrap_or(0),
            faulty_bits: self.faulty_bits.unwrap_or(FaultyBits::Count(1)),
            target,
        };
        cfg.validate(ram_size).map_err(|e| invalid(key(e.field), e.message))?;
        Ok(cfg)
    }
}

/// Campaign tier: margin of error and confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    Medium,
    High,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Low, Tier::Medium, Tier::High];

    pub fn margin(self) -> f64 {
        match self {
            Tier::Low | Tier::Medium => 0.05,
            Tier::High => 0.01,
        }
    }

    pub fn confidence(self) -> f64 {
        match self {
            Tier::Low => 0.95,
            Tier::Medium | Tier::High => 0.99,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
        }
    }

    pub fn from_name(s: &str) -> Option<Tier> {
        Tier::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub tiers: Vec<Tier>,
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Does not affect
    /// results.
    #[serde(skip_serializing)]
    pub parallelism: usize,
    /// Replaces the computed sample size of a tier, e.g. `high = 663`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub tier_runs: BTreeMap<Tier, u64>,
    /// Restricts the campaign to these engines; all configured engines by
    /// default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engines: Option<Vec<EngineId>>,
    /// Runs every configured engine at once in a single cell instead of one
    /// cell per engine.
    pub multi_engine: bool,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            tiers: vec![Tier::Low],
            seed: 0,
            parallelism: 0,
            tier_runs: BTreeMap::new(),
            engines: None,
            multi_engine: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("faultsim-out"),
            formats: vec![OutputFormat::Json, OutputFormat::Csv],
        }
    }
}

/// The whole configuration file. Serializing it gives the echo stored in
/// reports, which leaves out execution-only settings (parallelism and the
/// output section).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub machine: MachineSettings,
    pub benchmarks: BenchmarkSection,
    pub engines: BTreeMap<String, EngineBlock>,
    pub campaign: CampaignSection,
    #[serde(skip_serializing)]
    pub output: OutputSection,
}

/// An assembled benchmark program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Benchmark {
    pub name: String,
    pub image: ProgramImage,
}

impl Benchmark {
    pub fn builtin(name: &str) -> Option<Self> {
        Some(Self {
            name: name.to_string(),
            image: kernels::image(name)?,
        })
    }

    /// Assembles a source file, or loads an image descriptor if the file
    /// ends in `.json`. The benchmark is named after the file stem.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let image = if path.extension().is_some_and(|e| e == "json") {
            ProgramImage::from_json(&text).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        } else {
            assemble(&text).map_err(|error| ConfigError::Assembly {
                path: path.to_path_buf(),
                error,
            })?
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Self { name, image })
    }

    /// `builtin:<name>` or a path resolved against `base_dir`.
    pub fn resolve(spec: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        match spec.strip_prefix("builtin:") {
            Some(name) => Self::builtin(name).ok_or_else(|| {
                invalid(
                    "benchmarks.paths",
                    format!("unknown bundled kernel `{name}` (have {})", kernels::NAMES.join(", ")),
                )
            }),
            None => Self::from_file(&base_dir.join(spec)),
        }
    }
}

/// An engine configuration ready to run, with the seed its runs derive
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEngine {
    pub id: EngineId,
    pub config: FaultConfig,
    pub seed: u64,
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, Path::new("<config>"))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without touching the file
    /// system.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.machine.validate()?;
        for name in self.engines.keys() {
            if EngineId::from_name(name).is_none() {
                return Err(invalid(
                    format!("engines.{name}"),
                    "unknown engine (expected reg, l1i, l1d, l2 or mem)",
                ));
            }
        }
        self.resolved_engines()?;
        if let Some(list) = &self.campaign.engines {
            for e in list {
                if !self.engines.contains_key(e.name()) {
                    return Err(invalid("campaign.engines", format!("engine `{e}` has no [engines.{e}] block")));
                }
            }
        }
        if self.campaign.tiers.is_empty() {
            return Err(invalid("campaign.tiers", "at least one tier is required"));
        }
        for (tier, n) in &self.campaign.tier_runs {
            if *n == 0 {
                return Err(invalid(format!("campaign.tier_runs.{tier}"), "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Configured engines in canonical order, restricted to
    /// `campaign.engines` when given.
    pub fn resolved_engines(&self) -> Result<Vec<ResolvedEngine>, ConfigError> {
        let mut out = Vec::new();
        for id in EngineId::ALL {
            let Some(block) = self.engines.get(id.name()) else { continue };
            if let Some(list) = &self.campaign.engines {
                if !list.contains(&id) {
                    continue;
                }
            }
            out.push(ResolvedEngine {
                id,
                config: block.resolve(id, self.machine.ram_size)?,
                seed: block.seed.unwrap_or(self.campaign.seed),
            });
        }
        Ok(out)
    }

    pub fn engine(&self, id: EngineId) -> Result<ResolvedEngine, ConfigError> {
        let block = self
            .engines
            .get(id.name())
            .ok_or_else(|| invalid(format!("engines.{id}"), "engine block missing from config"))?;
        Ok(ResolvedEngine {
            id,
            config: block.resolve(id, self.machine.ram_size)?,
            seed: block.seed.unwrap_or(self.campaign.seed),
        })
    }

    /// Assembles every listed benchmark. Relative paths are resolved against
    /// `base_dir`, normally the directory holding the config file.
    pub fn load_benchmarks(&self, base_dir: &Path) -> Result<Vec<Benchmark>, ConfigError> {
        if self.benchmarks.paths.is_empty() {
            return Err(invalid("benchmarks.paths", "no benchmarks listed"));
        }
        let mut out: Vec<Benchmark> = Vec::new();
        for spec in &self.benchmarks.paths {
            let b = Benchmark::resolve(spec, base_dir)?;
            if out.iter().any(|o| o.name == b.name) {
                return Err(invalid("benchmarks.paths", format!("two benchmarks are named `{}`", b.name)));
            }
            out.push(b);
        }
        Ok(out)
    }

    /// Echo stored in reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
