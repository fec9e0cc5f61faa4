//! Permanent (stuck-at) fault bookkeeping.
//!
//! Entries are keyed by physical cell: a register, one byte of one cache
//! way, or one RAM byte. The machine and the memory system consult the
//! registry on every read of a cell and after every write to it, so a
//! stuck bit is observed at every architectural access for the rest of the
//! run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::machine::RegClass;
use crate::memsys::CacheId;

/// Physical location of a permanent fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultLocation {
    Register { class: RegClass, index: u8 },
    CacheCell { cache: CacheId, set: u32, way: u32, offset: u32 },
    Ram { addr: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StuckAt {
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermanentFault {
    pub location: FaultLocation,
    pub mask: u32,
    pub stuck: StuckAt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("contradictory permanent fault at {location:?}: bits {overlap:#x} already stuck at the opposite value")]
    Contradictory { location: FaultLocation, overlap: u32 },
    #[error("empty stuck-at mask at {0:?}")]
    EmptyMask(FaultLocation),
}

/// Combined stuck-at masks for one cell. Stuck-at-0 and stuck-at-1 bits are
/// disjoint, so applying them in either order gives the same result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Stuck {
    clear: u32,
    set: u32,
}

impl Stuck {
    #[inline]
    fn apply(self, v: u32) -> u32 {
        (v & !self.clear) | self.set
    }
}

type CellKey = (u32, u32, u32);

#[derive(Debug, Clone, Default)]
pub struct PermanentFaultRegistry {
    entries: Vec<PermanentFault>,
    regs: [[Stuck; 32]; 2],
    any_reg: bool,
    cells: [BTreeMap<CellKey, Stuck>; 3],
    ram: BTreeMap<u32, Stuck>,
}

fn class_slot(class: RegClass) -> usize {
    match class {
        RegClass::Integer => 0,
        RegClass::Float => 1,
    }
}

fn cache_slot(cache: CacheId) -> usize {
    match cache {
        CacheId::L1I => 0,
        CacheId::L1D => 1,
        CacheId::L2 => 2,
    }
}

impl PermanentFaultRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[PermanentFault] {
        &self.entries
    }

    fn stuck_at(&self, location: FaultLocation) -> Stuck {
        match location {
            FaultLocation::Register { class, index } => self.regs[class_slot(class)][index as usize & 31],
            FaultLocation::CacheCell {
                cache,
                set,
                way,
                offset,
            } => self.cells[cache_slot(cache)]
                .get(&(set, way, offset))
                .copied()
                .unwrap_or_default(),
            FaultLocation::Ram { addr } => self.ram.get(&addr).copied().unwrap_or_default(),
        }
    }

    fn stuck_mut(&mut self, location: FaultLocation) -> &mut Stuck {
        match location {
            FaultLocation::Register { class, index } => {
                self.any_reg = true;
                &mut self.regs[class_slot(class)][index as usize & 31]
            }
            FaultLocation::CacheCell {
                cache,
                set,
                way,
                offset,
            } => self.cells[cache_slot(cache)]
                .entry((set, way, offset))
                .or_default(),
            FaultLocation::Ram { addr } => self.ram.entry(addr).or_default(),
        }
    }

    /// Checks whether `fault` could be registered without contradicting an
    /// existing entry.
    pub fn check(&self, fault: &PermanentFault) -> Result<(), RegistryError> {
        if fault.mask == 0 {
            return Err(RegistryError::EmptyMask(fault.location));
        }
        let existing = self.stuck_at(fault.location);
        let overlap = match fault.stuck {
            StuckAt::Zero => existing.set & fault.mask,
            StuckAt::One => existing.clear & fault.mask,
        };
        if overlap != 0 {
            return Err(RegistryError::Contradictory {
                location: fault.location,
                overlap,
            });
        }
        Ok(())
    }

    pub fn register(&mut self, fault: PermanentFault) -> Result<(), RegistryError> {
        self.check(&fault)?;
        let slot = self.stuck_mut(fault.location);
        match fault.stuck {
            StuckAt::Zero => slot.clear |= fault.mask,
            StuckAt::One => slot.set |= fault.mask,
        }
        self.entries.push(fault);
        Ok(())
    }

    /// Applies every entry registered for `location` to `value`.
    pub fn enforce(&self, location: FaultLocation, value: u32) -> u32 {
        if self.entries.is_empty() {
            return value;
        }
        self.stuck_at(location).apply(value)
    }

    #[inline]
    pub fn enforce_reg(&self, class: RegClass, index: u8, value: u32) -> u32 {
        if !self.any_reg {
            return value;
        }
        self.regs[class_slot(class)][index as usize & 31].apply(value)
    }

    #[inline]
    pub fn enforce_cell(&self, cache: CacheId, set: u32, way: u32, offset: u32, value: u8) -> u8 {
        let map = &self.cells[cache_slot(cache)];
        if map.is_empty() {
            return value;
        }
        match map.get(&(set, way, offset)) {
            Some(s) => s.apply(value as u32) as u8,
            None => value,
        }
    }

    /// Enforces all cells of one cache way covering `bytes`, which starts at
    /// byte `first_offset` of the block.
    pub fn enforce_cells(&self, cache: CacheId, set: u32, way: u32, first_offset: u32, bytes: &mut [u8]) {
        let map = &self.cells[cache_slot(cache)];
        if map.is_empty() || bytes.is_empty() {
            return;
        }
        let last = first_offset + bytes.len() as u32 - 1;
        for (&(_, _, off), s) in map.range((set, way, first_offset)..=(set, way, last)) {
            let b = &mut bytes[(off - first_offset) as usize];
            *b = s.apply(*b as u32) as u8;
        }
    }

    #[inline]
    pub fn enforce_ram(&self, addr: u32, value: u8) -> u8 {
        if self.ram.is_empty() {
            return value;
        }
        match self.ram.get(&addr) {
            Some(s) => s.apply(value as u32) as u8,
            None => value,
        }
    }

    pub fn enforce_ram_range(&self, addr: u32, bytes: &mut [u8]) {
        if self.ram.is_empty() || bytes.is_empty() {
            return;
        }
        let last = addr + bytes.len() as u32 - 1;
        for (&a, s) in self.ram.range(addr..=last) {
            let b = &mut bytes[(a - addr) as usize];
            *b = s.apply(*b as u32) as u8;
        }
    }
}
