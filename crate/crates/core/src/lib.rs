//! Fault-injection framework for a small RV32IM machine model.
//!
//! The crate bundles a cycle-counting interpreter ([`machine`]) over a
//! write-back cache hierarchy ([`memsys`]), an assembler for benchmark
//! kernels ([`asm`]), register, cache and main-memory fault injectors
//! ([`injector`]) and a statistical campaign runner ([`campaign`]).

pub mod asm;
pub mod campaign;
pub mod config;
pub mod isa;
pub mod injector;
pub mod kernels;
pub mod machine;
pub mod memsys;
pub mod rng;

pub use injector::{
    apply_fault, random_mask, next_delay, EngineId, FaultConfig, FaultKind, FaultRecord, FaultType, FaultyBits,
    InjectorSet, PermanentFaultRegistry, TargetClass,
};
pub use asm::{assemble, load, AsmError, ProgramImage};
pub use machine::{run, HpcVector, MachineState, RunEnd, RunTrace, Status, TrapCause, TrapKind};
pub use memsys::{CacheGeometry, CacheId, MemoryConfig, MemorySystem, RAM_BASE};
pub use campaign::{
    classify, delta_mean, golden_run, run_campaign, sample_size, CampaignError, CampaignReport, CellSummary,
    GoldenReference, OutcomeClass, RunReport,
};
pub use config::{Benchmark, CampaignConfig, ConfigError, MachineSettings, Tier};
