//! Fault injection: mask algebra, event scheduling, the register, cache and
//! main-memory engines, and the permanent-fault registry.
//!
//! Each engine fires at random cycles. On every cycle the probability of an
//! event is `probability`, so gaps between events are geometric. An event
//! inside the engine's activation window corrupts its target with a bit
//! flip or a stuck-at fault; stuck-at faults are also recorded in the
//! [`PermanentFaultRegistry`] and stay in force until the run ends.

mod engine;
pub mod registry;

pub use engine::{sweep, Injector, InjectorSet};
pub use registry::{FaultLocation, PermanentFault, PermanentFaultRegistry, RegistryError, StuckAt};

use std::fmt;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::machine::{MachineState, RegClass};
use crate::memsys::{CacheId, Cell, MemorySystem, RAM_BASE};

/// Configured fault type. `Random` is resolved per injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultType {
    BitFlip,
    #[serde(rename = "stuck_at_0")]
    StuckAt0,
    #[serde(rename = "stuck_at_1")]
    StuckAt1,
    Random,
}

/// A resolved fault type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    BitFlip,
    #[serde(rename = "stuck_at_0")]
    StuckAt0,
    #[serde(rename = "stuck_at_1")]
    StuckAt1,
}

impl FaultKind {
    pub const ALL: [FaultKind; 3] = [FaultKind::BitFlip, FaultKind::StuckAt0, FaultKind::StuckAt1];

    pub fn stuck_at(self) -> Option<StuckAt> {
        match self {
            FaultKind::BitFlip => None,
            FaultKind::StuckAt0 => Some(StuckAt::Zero),
            FaultKind::StuckAt1 => Some(StuckAt::One),
        }
    }
}

/// Number of bits set in a generated mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultyBits {
    Count(u32),
    /// Uniform over `1..=width`, drawn per injection.
    Random,
}

impl Serialize for FaultyBits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FaultyBits::Count(n) => s.serialize_u32(*n),
            FaultyBits::Random => s.serialize_str("random"),
        }
    }
}

impl<'de> Deserialize<'de> for FaultyBits {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u32),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) => Ok(FaultyBits::Count(n)),
            Repr::Word(w) if w == "random" => Ok(FaultyBits::Random),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a bit count or \"random\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    Integer,
    Float,
    Random,
}

/// The five injection engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EngineId {
    #[serde(rename = "reg")]
    Reg,
    #[serde(rename = "l1i")]
    CacheL1I,
    #[serde(rename = "l1d")]
    CacheL1D,
    #[serde(rename = "l2")]
    CacheL2,
    #[serde(rename = "mem")]
    Mem,
}

impl EngineId {
    pub const ALL: [EngineId; 5] = [
        EngineId::Reg,
        EngineId::CacheL1I,
        EngineId::CacheL1D,
        EngineId::CacheL2,
        EngineId::Mem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EngineId::Reg => "reg",
            EngineId::CacheL1I => "l1i",
            EngineId::CacheL1D => "l1d",
            EngineId::CacheL2 => "l2",
            EngineId::Mem => "mem",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn cache(self) -> Option<CacheId> {
        match self {
            EngineId::CacheL1I => Some(CacheId::L1I),
            EngineId::CacheL1D => Some(CacheId::L1D),
            EngineId::CacheL2 => Some(CacheId::L2),
            _ => None,
        }
    }

    /// Stable numeric id used for seed derivation.
    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Engine-specific targeting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum EngineTarget {
    Register {
        class: TargetClass,
        /// 0 disables PC targeting.
        pc_target: u32,
        /// Pins the victim register instead of sampling one.
        register: Option<u8>,
    },
    Cache {
        cache: CacheId,
        corruption_size: u32,
    },
    Memory {
        target_start: u32,
        target_end: u32,
    },
}

/// Parameter block of one injector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Per-cycle activation probability.
    pub probability: f64,
    pub start: u64,
    pub end: u64,
    pub fault_type: FaultType,
    /// 0 means "generate a mask with `faulty_bits` bits set".
    pub mask: u32,
    pub faulty_bits: FaultyBits,
    pub target: EngineTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct FaultConfigError {
    pub field: &'static str,
    pub message: String,
}

fn bad(field: &'static str, message: impl Into<String>) -> FaultConfigError {
    FaultConfigError {
        field,
        message: message.into(),
    }
}

impl FaultConfig {
    fn with_target(probability: f64, target: EngineTarget) -> Self {
        Self {
            probability,
            start: 0,
            end: u64::MAX,
            fault_type: FaultType::BitFlip,
            mask: 0,
            faulty_bits: FaultyBits::Count(1),
            target,
        }
    }

    /// Register engine over both classes, single-bit flips, always active.
    pub fn register(probability: f64) -> Self {
        Self::with_target(
            probability,
            EngineTarget::Register {
                class: TargetClass::Random,
                pc_target: 0,
                register: None,
            },
        )
    }

    pub fn cache(cache: CacheId, probability: f64) -> Self {
        Self::with_target(
            probability,
            EngineTarget::Cache {
                cache,
                corruption_size: 1,
            },
        )
    }

    pub fn memory(probability: f64, target_start: u32, target_end: u32) -> Self {
        Self::with_target(
            probability,
            EngineTarget::Memory {
                target_start,
                target_end,
            },
        )
    }

    pub fn window(mut self, start: u64, end: u64) -> Self {
        self.start = start;
        self.end = end;
        self
    }

    pub fn fault_type(mut self, t: FaultType) -> Self {
        self.fault_type = t;
        self
    }

    pub fn mask(mut self, mask: u32) -> Self {
        self.mask = mask;
        self
    }

    pub fn faulty_bits(mut self, bits: FaultyBits) -> Self {
        self.faulty_bits = bits;
        self
    }

    pub fn engine(&self) -> EngineId {
        match self.target {
            EngineTarget::Register { .. } => EngineId::Reg,
            EngineTarget::Cache { cache, .. } => match cache {
                CacheId::L1I => EngineId::CacheL1I,
                CacheId::L1D => EngineId::CacheL1D,
                CacheId::L2 => EngineId::CacheL2,
            },
            EngineTarget::Memory { .. } => EngineId::Mem,
        }
    }

    /// Width in bits of one injection target.
    pub fn width(&self) -> u32 {
        match self.target {
            EngineTarget::Register { .. } => 32,
            _ => 8,
        }
    }

    /// Checks value ranges. `ram_size` bounds the memory engine's target
    /// range.
    pub fn validate(&self, ram_size: u32) -> Result<(), FaultConfigError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(bad(
                "probability",
                format!("must be in [0, 1], got {}", self.probability),
            ));
        }
        if self.start > self.end {
            return Err(bad("start", format!("start {} is after end {}", self.start, self.end)));
        }
        let width = self.width();
        if width < 32 && self.mask >> width != 0 {
            return Err(bad("mask", format!("{:#x} does not fit in {width} bits", self.mask)));
        }
        if let FaultyBits::Count(k) = self.faulty_bits {
            if !(1..=width).contains(&k) {
                return Err(bad("faulty_bits", format!("must be in [1, {width}], got {k}")));
            }
        }
        match self.target {
            EngineTarget::Register {
                class, register, ..
            } => {
                if let Some(r) = register {
                    if r >= 32 {
                        return Err(bad("register", format!("index {r} out of range")));
                    }
                    match class {
                        TargetClass::Random => {
                            return Err(bad("register", "pinning a register needs an explicit target_class"))
                        }
                        TargetClass::Integer if r == 0 => {
                            return Err(bad("register", "x0 is hardwired to zero"));
                        }
                        _ => {}
                    }
                }
            }
            EngineTarget::Cache { corruption_size, .. } => {
                if corruption_size == 0 {
                    return Err(bad("corruption_size", "must be at least 1"));
                }
            }
            EngineTarget::Memory {
                target_start,
                target_end,
            } => {
                if target_start > target_end {
                    return Err(bad("target_start", "target_start is after target_end"));
                }
                let end = RAM_BASE as u64 + ram_size as u64;
                if target_start < RAM_BASE || target_end as u64 >= end {
                    return Err(bad(
                        "target_end",
                        format!("range {target_start:#x}..={target_end:#x} is outside RAM"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Where a fault landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSite {
    Register {
        class: RegClass,
        index: u8,
    },
    CacheByte {
        cache: CacheId,
        set: u32,
        way: u32,
        offset: u32,
        address: Option<u32>,
    },
    Ram {
        address: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// The target cache held no valid block.
    NoValidBlock,
    /// The stuck-at fault would contradict one already in force.
    Contradictory,
}

/// One injected (or skipped) fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub cycle: u64,
    pub engine: EngineId,
    pub site: Option<FaultSite>,
    pub mask: u32,
    pub fault_type: Option<FaultKind>,
    pub value_before: u32,
    pub value_after: u32,
    pub skipped: Option<SkipReason>,
}

impl FaultRecord {
    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

pub fn apply_fault(value: u32, mask: u32, kind: FaultKind) -> u32 {
    match kind {
        FaultKind::BitFlip => value ^ mask,
        FaultKind::StuckAt0 => value & !mask,
        FaultKind::StuckAt1 => value | mask,
    }
}

/// Mask of width `width` with exactly `faulty_bits` bits set, uniformly over
/// all such masks.
pub fn random_mask<R: Rng + ?Sized>(faulty_bits: u32, width: u32, rng: &mut R) -> u32 {
    assert!(
        (1..=width).contains(&faulty_bits) && width <= 32,
        "faulty_bits {faulty_bits} out of range for width {width}"
    );
    index::sample(rng, width as usize, faulty_bits as usize)
        .into_iter()
        .fold(0u32, |m, bit| m | (1 << bit))
}

/// Cycles until the next event when each cycle fires independently with
/// probability `p`. `None` when `p` is zero (the engine never fires).
pub fn next_delay<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Option<u64> {
    if p <= 0.0 || p.is_nan() {
        return None;
    }
    if p >= 1.0 {
        return Some(1);
    }
    let failures = Geometric::new(p).expect("0 < p < 1").sample(rng);
    Some(failures.saturating_add(1))
}

fn resolve_kind<R: Rng + ?Sized>(t: FaultType, rng: &mut R) -> FaultKind {
    match t {
        FaultType::BitFlip => FaultKind::BitFlip,
        FaultType::StuckAt0 => FaultKind::StuckAt0,
        FaultType::StuckAt1 => FaultKind::StuckAt1,
        FaultType::Random => FaultKind::ALL[rng.random_range(0..3)],
    }
}

fn resolve_mask<R: Rng + ?Sized>(cfg: &FaultConfig, rng: &mut R) -> u32 {
    if cfg.mask != 0 {
        return cfg.mask;
    }
    let width = cfg.width();
    let k = match cfg.faulty_bits {
        FaultyBits::Count(k) => k,
        FaultyBits::Random => rng.random_range(1..=width),
    };
    random_mask(k, width, rng)
}

fn in_window(cfg: &FaultConfig, cycle: u64) -> bool {
    cfg.start <= cycle && cycle <= cfg.end
}

/// Register engine event at `cycle`. Fires when PC targeting is off and the
/// cycle is inside the window, or when the current PC equals the target.
/// Returns `None` when the gate rejects the event.
pub fn reg_inject_event<R: Rng + ?Sized>(
    cfg: &FaultConfig,
    cycle: u64,
    state: &mut MachineState,
    registry: &mut PermanentFaultRegistry,
    rng: &mut R,
) -> Option<FaultRecord> {
    let EngineTarget::Register {
        class,
        pc_target,
        register,
    } = cfg.target
    else {
        panic!("register engine driven with a {:?} config", cfg.engine());
    };
    let gate = (pc_target == 0 && in_window(cfg, cycle)) || (pc_target != 0 && state.pc == pc_target);
    if !gate {
        return None;
    }
    let class = match class {
        TargetClass::Integer => RegClass::Integer,
        TargetClass::Float => RegClass::Float,
        TargetClass::Random => {
            if rng.random_bool(0.5) {
                RegClass::Integer
            } else {
                RegClass::Float
            }
        }
    };
    let index = match (register, class) {
        (Some(r), _) => r,
        // x0 is hardwired; sampling it would only inflate the masked rate.
        (None, RegClass::Integer) => rng.random_range(1..32u8),
        (None, RegClass::Float) => rng.random_range(0..32u8),
    };
    let mask = resolve_mask(cfg, rng);
    let kind = resolve_kind(cfg.fault_type, rng);
    let before = state.read_reg(class, index, registry);
    let after = apply_fault(before, mask, kind);
    let mut record = FaultRecord {
        cycle,
        engine: EngineId::Reg,
        site: Some(FaultSite::Register { class, index }),
        mask,
        fault_type: Some(kind),
        value_before: before,
        value_after: after,
        skipped: None,
    };
    if let Some(stuck) = kind.stuck_at() {
        let entry = PermanentFault {
            location: FaultLocation::Register { class, index },
            mask,
            stuck,
        };
        if registry.register(entry).is_err() {
            record.value_after = before;
            record.skipped = Some(SkipReason::Contradictory);
            return Some(record);
        }
    }
    state.write_reg(class, index, after, registry);
    Some(record)
}

/// Cache engine event: corrupts `corruption_size` randomly chosen bytes of
/// one randomly chosen valid block. Mask and fault type are resolved per
/// byte.
pub fn cache_inject_event<R: Rng + ?Sized>(
    cfg: &FaultConfig,
    cycle: u64,
    mem: &mut MemorySystem,
    registry: &mut PermanentFaultRegistry,
    rng: &mut R,
) -> Option<Vec<FaultRecord>> {
    let EngineTarget::Cache {
        cache,
        corruption_size,
    } = cfg.target
    else {
        panic!("cache engine driven with a {:?} config", cfg.engine());
    };
    if !in_window(cfg, cycle) {
        return None;
    }
    let engine = cfg.engine();
    let block = match mem.sample_valid_block(cache, rng) {
        Ok(b) => b,
        Err(_) => {
            return Some(vec![FaultRecord {
                cycle,
                engine,
                site: None,
                mask: 0,
                fault_type: None,
                value_before: 0,
                value_after: 0,
                skipped: Some(SkipReason::NoValidBlock),
            }])
        }
    };
    let c = mem.cache(cache);
    let block_bytes = c.block_bytes();
    let block_addr = c.block_addr(block.set, block.way);
    let mut records = Vec::with_capacity(corruption_size as usize);
    for _ in 0..corruption_size {
        let offset = rng.random_range(0..block_bytes);
        let mask = resolve_mask(cfg, rng);
        let kind = resolve_kind(cfg.fault_type, rng);
        let cell = Cell::Cache {
            cache,
            set: block.set,
            way: block.way,
            offset,
        };
        let before = mem.peek(cell, registry).expect("sampled cell is valid") as u32;
        let after = apply_fault(before, mask, kind);
        let mut record = FaultRecord {
            cycle,
            engine,
            site: Some(FaultSite::CacheByte {
                cache,
                set: block.set,
                way: block.way,
                offset,
                address: Some(block_addr + offset),
            }),
            mask,
            fault_type: Some(kind),
            value_before: before,
            value_after: after,
            skipped: None,
        };
        if let Some(stuck) = kind.stuck_at() {
            let entry = PermanentFault {
                location: FaultLocation::CacheCell {
                    cache,
                    set: block.set,
                    way: block.way,
                    offset,
                },
                mask,
                stuck,
            };
            if registry.register(entry).is_err() {
                record.value_after = before;
                record.skipped = Some(SkipReason::Contradictory);
                records.push(record);
                continue;
            }
        }
        mem.poke(cell, after as u8, registry).expect("sampled cell is valid");
        records.push(record);
    }
    Some(records)
}

/// Main-memory engine event: corrupts one byte at a uniformly chosen
/// address in `[target_start, target_end]`, directly in RAM.
pub fn mem_inject_event<R: Rng + ?Sized>(
    cfg: &FaultConfig,
    cycle: u64,
    mem: &mut MemorySystem,
    registry: &mut PermanentFaultRegistry,
    rng: &mut R,
) -> Option<FaultRecord> {
    let EngineTarget::Memory {
        target_start,
        target_end,
    } = cfg.target
    else {
        panic!("memory engine driven with a {:?} config", cfg.engine());
    };
    if !in_window(cfg, cycle) {
        return None;
    }
    let address = rng.random_range(target_start..=target_end);
    let cell = Cell::Ram(address);
    let before = mem.peek(cell, registry).expect("target range validated against RAM") as u32;
    let mask = resolve_mask(cfg, rng);
    let kind = resolve_kind(cfg.fault_type, rng);
    let after = apply_fault(before, mask, kind);
    let mut record = FaultRecord {
        cycle,
        engine: EngineId::Mem,
        site: Some(FaultSite::Ram { address }),
        mask,
        fault_type: Some(kind),
        value_before: before,
        value_after: after,
        skipped: None,
    };
    if let Some(stuck) = kind.stuck_at() {
        let entry = PermanentFault {
            location: FaultLocation::Ram { addr: address },
            mask,
            stuck,
        };
        if registry.register(entry).is_err() {
            record.value_after = before;
            record.skipped = Some(SkipReason::Contradictory);
            return Some(record);
        }
    }
    mem.poke(cell, after as u8, registry).expect("target range validated against RAM");
    Some(record)
}
