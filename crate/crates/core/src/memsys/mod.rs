//! Flat RAM behind a two-level cache hierarchy: split L1 (instruction and
//! data) over a unified L2, all write-back and write-allocate with LRU
//! replacement.
//!
//! The caches hold real data. A byte corrupted inside a dirty block reaches
//! RAM when the block is evicted, while corruption in a clean block is
//! silently dropped on eviction. Injectors use [`MemorySystem::poke`] and
//! [`MemorySystem::peek`], which touch a single physical cell and leave
//! replacement state, dirty bits and event counters alone.

mod cache;

pub use cache::{
    BlockRef, Cache, CacheBlock, CacheGeometry, CacheId, CacheMetadata, GeometryError, NoValidBlock,
    MAX_BLOCK_BYTES,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::injector::registry::PermanentFaultRegistry;

/// First byte of mapped RAM.
pub const RAM_BASE: u32 = 0x8000_0000;

/// Extra cycles charged to an access, by the level that serviced it. An L1
/// hit costs nothing beyond the base cycle of the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StallLatencies {
    pub l1_hit: u32,
    pub l2_hit: u32,
    pub memory: u32,
}

impl Default for StallLatencies {
    fn default() -> Self {
        Self {
            l1_hit: 0,
            l2_hit: 10,
            memory: 80,
        }
    }
}

impl StallLatencies {
    pub const ZERO: StallLatencies = StallLatencies {
        l1_hit: 0,
        l2_hit: 0,
        memory: 0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    pub ram_size: u32,
    pub l1i: CacheGeometry,
    pub l1d: CacheGeometry,
    pub l2: CacheGeometry,
    pub latencies: StallLatencies,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            ram_size: 8 << 20,
            l1i: CacheGeometry::new(16 << 10, 64, 4),
            l1d: CacheGeometry::new(64 << 10, 64, 4),
            l2: CacheGeometry::new(256 << 10, 64, 4),
            latencies: StallLatencies::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MemConfigError {
    #[error("{cache:?}: {source}")]
    Geometry {
        cache: CacheId,
        #[source]
        source: GeometryError,
    },
    #[error("{0:?} block size must not exceed the L2 block size")]
    BlockLargerThanL2(CacheId),
    #[error("ram_size must be a non-zero multiple of the L2 block size and at most 2 GiB, got {0}")]
    RamSize(u32),
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), MemConfigError> {
        for (cache, g) in [(CacheId::L1I, self.l1i), (CacheId::L1D, self.l1d), (CacheId::L2, self.l2)] {
            g.validate().map_err(|source| MemConfigError::Geometry { cache, source })?;
        }
        for (cache, g) in [(CacheId::L1I, self.l1i), (CacheId::L1D, self.l1d)] {
            if g.block_bytes > self.l2.block_bytes {
                return Err(MemConfigError::BlockLargerThanL2(cache));
            }
        }
        if self.ram_size == 0 || self.ram_size > 0x8000_0000 || self.ram_size % self.l2.block_bytes != 0 {
            return Err(MemConfigError::RamSize(self.ram_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Fetch,
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MemFault {
    #[error("access outside mapped RAM at {0:#010x}")]
    OutOfBounds(u32),
    #[error("misaligned access at {0:#010x}")]
    Misaligned(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    /// Loaded or fetched value, zero-extended. Zero for stores.
    pub value: u32,
    pub stall: u32,
}

/// Hierarchy event counts since the last reset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemEvents {
    pub l1i_accesses: u64,
    pub l1i_misses: u64,
    pub l1d_accesses: u64,
    pub l1d_misses: u64,
    pub l1d_writebacks: u64,
    pub l2_accesses: u64,
    pub l2_misses: u64,
    pub l2_writebacks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    L1I,
    L1D,
    L2,
    Ram,
}

/// One physical byte cell, addressed the way an injector sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Cache { cache: CacheId, set: u32, way: u32, offset: u32 },
    Ram(u32),
}

impl Cell {
    pub fn level(&self) -> Level {
        match self {
            Cell::Cache { cache: CacheId::L1I, .. } => Level::L1I,
            Cell::Cache { cache: CacheId::L1D, .. } => Level::L1D,
            Cell::Cache { cache: CacheId::L2, .. } => Level::L2,
            Cell::Ram(_) => Level::Ram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid cell {0:?}")]
pub struct InvalidCell(pub Cell);

/// Metadata of all three caches plus event counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySnapshot {
    pub l1i: CacheMetadata,
    pub l1d: CacheMetadata,
    pub l2: CacheMetadata,
    pub events: MemEvents,
}

#[derive(Debug, Clone)]
pub struct MemorySystem {
    config: MemoryConfig,
    ram: Vec<u8>,
    l1i: Cache,
    l1d: Cache,
    l2: Cache,
    events: MemEvents,
}

impl MemorySystem {
    pub fn new(config: MemoryConfig) -> Result<Self, MemConfigError> {
        config.validate()?;
        let mk = |cache, geom| Cache::new(cache, geom).map_err(|source| MemConfigError::Geometry { cache, source });
        Ok(Self {
            ram: vec![0; config.ram_size as usize],
            l1i: mk(CacheId::L1I, config.l1i)?,
            l1d: mk(CacheId::L1D, config.l1d)?,
            l2: mk(CacheId::L2, config.l2)?,
            events: MemEvents::default(),
            config,
        })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn ram_base(&self) -> u32 {
        RAM_BASE
    }

    /// One past the last mapped byte.
    pub fn ram_end(&self) -> u64 {
        RAM_BASE as u64 + self.ram.len() as u64
    }

    pub fn ram(&self) -> &[u8] {
        &self.ram
    }

    pub fn events(&self) -> &MemEvents {
        &self.events
    }

    pub fn cache(&self, id: CacheId) -> &Cache {
        match id {
            CacheId::L1I => &self.l1i,
            CacheId::L1D => &self.l1d,
            CacheId::L2 => &self.l2,
        }
    }

    fn cache_mut(&mut self, id: CacheId) -> &mut Cache {
        match id {
            CacheId::L1I => &mut self.l1i,
            CacheId::L1D => &mut self.l1d,
            CacheId::L2 => &mut self.l2,
        }
    }

    /// True when `[addr, addr + len)` lies inside RAM.
    pub fn in_ram(&self, addr: u32, len: u32) -> bool {
        addr >= RAM_BASE && addr as u64 + len as u64 <= self.ram_end()
    }

    #[inline]
    fn ram_index(&self, addr: u32) -> usize {
        (addr - RAM_BASE) as usize
    }

    /// Zeroes RAM, drops all cache contents and clears the event counters.
    pub fn reset(&mut self) {
        self.ram.fill(0);
        self.l1i.reset();
        self.l1d.reset();
        self.l2.reset();
        self.events = MemEvents::default();
    }

    /// Copies `bytes` straight into RAM, bypassing the caches.
    pub fn write_ram(&mut self, addr: u32, bytes: &[u8]) -> Result<(), MemFault> {
        if !self.in_ram(addr, bytes.len() as u32) {
            return Err(MemFault::OutOfBounds(addr));
        }
        let i = self.ram_index(addr);
        self.ram[i..i + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    /// Raw RAM byte, ignoring caches and permanent faults.
    pub fn ram_byte(&self, addr: u32) -> Option<u8> {
        self.in_ram(addr, 1).then(|| self.ram[self.ram_index(addr)])
    }

    pub fn fetch(&mut self, addr: u32, faults: &PermanentFaultRegistry) -> Result<Access, MemFault> {
        self.access(AccessKind::Fetch, addr, 4, 0, faults)
    }

    pub fn load(&mut self, addr: u32, width: u32, faults: &PermanentFaultRegistry) -> Result<Access, MemFault> {
        self.access(AccessKind::Load, addr, width, 0, faults)
    }

    pub fn store(
        &mut self,
        addr: u32,
        width: u32,
        value: u32,
        faults: &PermanentFaultRegistry,
    ) -> Result<Access, MemFault> {
        self.access(AccessKind::Store, addr, width, value, faults)
    }

    /// Architectural access of `width` ∈ {1, 2, 4} bytes, naturally aligned.
    /// Fetches go through L1I, loads and stores through L1D; both miss into
    /// L2 and then RAM. `data` is used only for stores.
    pub fn access(
        &mut self,
        kind: AccessKind,
        addr: u32,
        width: u32,
        data: u32,
        faults: &PermanentFaultRegistry,
    ) -> Result<Access, MemFault> {
        debug_assert!(matches!(width, 1 | 2 | 4));
        if addr % width != 0 {
            return Err(MemFault::Misaligned(addr));
        }
        if !self.in_ram(addr, width) {
            return Err(MemFault::OutOfBounds(addr));
        }
        let id = match kind {
            AccessKind::Fetch => CacheId::L1I,
            AccessKind::Load | AccessKind::Store => CacheId::L1D,
        };
        match id {
            CacheId::L1I => self.events.l1i_accesses += 1,
            _ => self.events.l1d_accesses += 1,
        }

        let mut stall = self.config.latencies.l1_hit;
        let (set, way) = match self.cache(id).lookup(addr) {
            Some(hit) => hit,
            None => {
                match id {
                    CacheId::L1I => self.events.l1i_misses += 1,
                    _ => self.events.l1d_misses += 1,
                }
                let (set, way, s) = self.fill_l1(id, addr, faults);
                stall = s;
                (set, way)
            }
        };

        let cache = self.cache_mut(id);
        cache.touch(set, way);
        let off = cache.offset(addr);
        let mut value = 0u32;
        if kind == AccessKind::Store {
            let block = cache.block_mut(set, way);
            for i in 0..width {
                let b = (data >> (8 * i)) as u8;
                block[(off + i) as usize] = faults.enforce_cell(id, set, way, off + i, b);
            }
            cache.set_dirty(set, way);
        } else {
            let block = cache.block(set, way);
            for i in 0..width {
                let b = faults.enforce_cell(id, set, way, off + i, block[(off + i) as usize]);
                value |= (b as u32) << (8 * i);
            }
        }
        Ok(Access { value, stall })
    }

    /// Brings the block containing `addr` into L1 `id`, writing back a dirty
    /// victim first. Returns the way used and the stall charged.
    fn fill_l1(&mut self, id: CacheId, addr: u32, faults: &PermanentFaultRegistry) -> (u32, u32, u32) {
        let mut buf = [0u8; MAX_BLOCK_BYTES as usize];
        let (set, way, bsize) = {
            let l1 = self.cache(id);
            let set = l1.set_index(addr);
            (set, l1.victim(set), l1.block_bytes() as usize)
        };
        let l1 = self.cache(id);
        if l1.is_valid(set, way) && l1.is_dirty(set, way) {
            let victim = l1.block_addr(set, way);
            buf[..bsize].copy_from_slice(l1.block(set, way));
            faults.enforce_cells(id, set, way, 0, &mut buf[..bsize]);
            self.write_to_l2(victim, &buf[..bsize], faults);
            if id == CacheId::L1D {
                self.events.l1d_writebacks += 1;
            }
        }
        let base = addr & !(bsize as u32 - 1);
        let stall = self.read_from_l2(base, &mut buf[..bsize], faults);
        let l1 = self.cache_mut(id);
        l1.install(set, way, base);
        let block = l1.block_mut(set, way);
        block.copy_from_slice(&buf[..bsize]);
        faults.enforce_cells(id, set, way, 0, block);
        (set, way, stall)
    }

    /// Reads `out.len()` bytes at `base` (inside one L2 block) through L2,
    /// allocating on miss.
    fn read_from_l2(&mut self, base: u32, out: &mut [u8], faults: &PermanentFaultRegistry) -> u32 {
        self.events.l2_accesses += 1;
        let (set, way, stall) = match self.l2.lookup(base) {
            Some((set, way)) => (set, way, self.config.latencies.l2_hit),
            None => {
                self.events.l2_misses += 1;
                let (set, way) = self.fill_l2(base, faults);
                (set, way, self.config.latencies.memory)
            }
        };
        self.l2.touch(set, way);
        let off = self.l2.offset(base);
        out.copy_from_slice(&self.l2.block(set, way)[off as usize..off as usize + out.len()]);
        faults.enforce_cells(CacheId::L2, set, way, off, out);
        stall
    }

    /// Accepts an L1 victim into L2, allocating the block if L2 does not
    /// hold it.
    fn write_to_l2(&mut self, base: u32, bytes: &[u8], faults: &PermanentFaultRegistry) {
        let (set, way) = match self.l2.lookup(base) {
            Some(hit) => hit,
            None => self.fill_l2(base, faults),
        };
        self.l2.touch(set, way);
        let off = self.l2.offset(base);
        let block = self.l2.block_mut(set, way);
        let dst = &mut block[off as usize..off as usize + bytes.len()];
        dst.copy_from_slice(bytes);
        faults.enforce_cells(CacheId::L2, set, way, off, dst);
        self.l2.set_dirty(set, way);
    }

    /// Loads the L2 block containing `addr` from RAM into a victim way.
    fn fill_l2(&mut self, addr: u32, faults: &PermanentFaultRegistry) -> (u32, u32) {
        let set = self.l2.set_index(addr);
        let way = self.l2.victim(set);
        let bsize = self.l2.block_bytes() as usize;
        if self.l2.is_valid(set, way) && self.l2.is_dirty(set, way) {
            let victim = self.l2.block_addr(set, way);
            let i = self.ram_index(victim);
            self.ram[i..i + bsize].copy_from_slice(self.l2.block(set, way));
            faults.enforce_cells(CacheId::L2, set, way, 0, &mut self.ram[i..i + bsize]);
            faults.enforce_ram_range(victim, &mut self.ram[i..i + bsize]);
            self.events.l2_writebacks += 1;
        }
        let base = addr & !(bsize as u32 - 1);
        let i = self.ram_index(base);
        self.l2.install(set, way, base);
        let block = self.l2.block_mut(set, way);
        block.copy_from_slice(&self.ram[i..i + bsize]);
        faults.enforce_ram_range(base, block);
        faults.enforce_cells(CacheId::L2, set, way, 0, block);
        (set, way)
    }

    /// Byte at `addr` as a data access would see it (L1D, else L2, else RAM),
    /// without allocating, touching LRU state or counting events.
    pub fn read_coherent(&self, addr: u32, faults: &PermanentFaultRegistry) -> Result<u8, MemFault> {
        if !self.in_ram(addr, 1) {
            return Err(MemFault::OutOfBounds(addr));
        }
        for id in [CacheId::L1D, CacheId::L2] {
            let c = self.cache(id);
            if let Some((set, way)) = c.lookup(addr) {
                let off = c.offset(addr);
                return Ok(faults.enforce_cell(id, set, way, off, c.block(set, way)[off as usize]));
            }
        }
        Ok(faults.enforce_ram(addr, self.ram[self.ram_index(addr)]))
    }

    /// Writes back every dirty block and invalidates all three caches.
    /// Event counters are left untouched.
    pub fn flush_all(&mut self, faults: &PermanentFaultRegistry) {
        // L1D first so the newest data wins; L2 copies of the same block are
        // refreshed so the later L2 pass stays consistent.
        let sets = self.l1d.num_sets();
        let ways = self.l1d.ways();
        let bsize = self.l1d.block_bytes() as usize;
        let mut buf = [0u8; MAX_BLOCK_BYTES as usize];
        for set in 0..sets {
            for way in 0..ways {
                if !(self.l1d.is_valid(set, way) && self.l1d.is_dirty(set, way)) {
                    continue;
                }
                let addr = self.l1d.block_addr(set, way);
                buf[..bsize].copy_from_slice(self.l1d.block(set, way));
                faults.enforce_cells(CacheId::L1D, set, way, 0, &mut buf[..bsize]);
                if let Some((s2, w2)) = self.l2.lookup(addr) {
                    let off = self.l2.offset(addr) as usize;
                    let dst = &mut self.l2.block_mut(s2, w2)[off..off + bsize];
                    dst.copy_from_slice(&buf[..bsize]);
                    faults.enforce_cells(CacheId::L2, s2, w2, off as u32, dst);
                }
                let i = self.ram_index(addr);
                self.ram[i..i + bsize].copy_from_slice(&buf[..bsize]);
                faults.enforce_ram_range(addr, &mut self.ram[i..i + bsize]);
            }
        }
        let sets = self.l2.num_sets();
        let ways = self.l2.ways();
        let bsize = self.l2.block_bytes() as usize;
        for set in 0..sets {
            for way in 0..ways {
                if !(self.l2.is_valid(set, way) && self.l2.is_dirty(set, way)) {
                    continue;
                }
                let addr = self.l2.block_addr(set, way);
                buf[..bsize].copy_from_slice(self.l2.block(set, way));
                faults.enforce_cells(CacheId::L2, set, way, 0, &mut buf[..bsize]);
                let i = self.ram_index(addr);
                self.ram[i..i + bsize].copy_from_slice(&buf[..bsize]);
                faults.enforce_ram_range(addr, &mut self.ram[i..i + bsize]);
            }
        }
        for id in CacheId::ALL {
            let c = self.cache_mut(id);
            for set in 0..c.num_sets() {
                for way in 0..c.ways() {
                    c.invalidate(set, way);
                }
            }
        }
    }

    /// Drops every cached block without writing anything back.
    pub fn invalidate_caches(&mut self) {
        for id in CacheId::ALL {
            self.cache_mut(id).reset();
        }
    }

    pub fn sample_valid_block<R: Rng + ?Sized>(&self, cache: CacheId, rng: &mut R) -> Result<BlockRef, NoValidBlock> {
        self.cache(cache).sample_valid_block(rng)
    }

    fn check_cell(&self, cell: Cell) -> Result<(), InvalidCell> {
        let ok = match cell {
            Cell::Cache {
                cache,
                set,
                way,
                offset,
            } => {
                let c = self.cache(cache);
                set < c.num_sets() && way < c.ways() && offset < c.block_bytes()
            }
            Cell::Ram(addr) => self.in_ram(addr, 1),
        };
        ok.then_some(()).ok_or(InvalidCell(cell))
    }

    /// Reads one physical cell. Cache cells are read regardless of the
    /// block's valid bit.
    pub fn peek(&self, cell: Cell, faults: &PermanentFaultRegistry) -> Result<u8, InvalidCell> {
        self.check_cell(cell)?;
        Ok(match cell {
            Cell::Cache {
                cache,
                set,
                way,
                offset,
            } => faults.enforce_cell(cache, set, way, offset, self.cache(cache).block(set, way)[offset as usize]),
            Cell::Ram(addr) => faults.enforce_ram(addr, self.ram[self.ram_index(addr)]),
        })
    }

    /// Overwrites one physical cell in place. No dirty bit, LRU or counter
    /// changes.
    pub fn poke(&mut self, cell: Cell, value: u8, faults: &PermanentFaultRegistry) -> Result<(), InvalidCell> {
        self.check_cell(cell)?;
        match cell {
            Cell::Cache {
                cache,
                set,
                way,
                offset,
            } => {
                self.cache_mut(cache).block_mut(set, way)[offset as usize] =
                    faults.enforce_cell(cache, set, way, offset, value)
            }
            Cell::Ram(addr) => {
                let i = self.ram_index(addr);
                self.ram[i] = faults.enforce_ram(addr, value);
            }
        }
        Ok(())
    }

    pub fn peek_byte(&self, cell: Cell) -> Result<u8, InvalidCell> {
        self.peek(cell, &PermanentFaultRegistry::default())
    }

    pub fn poke_byte(&mut self, cell: Cell, value: u8) -> Result<(), InvalidCell> {
        self.poke(cell, value, &PermanentFaultRegistry::default())
    }

    /// Cell holding the L1D copy of `addr`, if L1D currently caches it.
    pub fn l1d_cell(&self, addr: u32) -> Option<Cell> {
        self.cell_for(CacheId::L1D, addr)
    }

    pub fn cell_for(&self, cache: CacheId, addr: u32) -> Option<Cell> {
        let c = self.cache(cache);
        c.lookup(addr).map(|(set, way)| Cell::Cache {
            cache,
            set,
            way,
            offset: c.offset(addr),
        })
    }

    pub fn snapshot(&self) -> HierarchySnapshot {
        HierarchySnapshot {
            l1i: self.l1i.metadata(),
            l1d: self.l1d.metadata(),
            l2: self.l2.metadata(),
            events: self.events,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::injector::registry::{FaultLocation, PermanentFault, StuckAt};

    fn small() -> MemoryConfig {
        MemoryConfig {
            ram_size: 64 << 10,
            l1i: CacheGeometry::new(256, 16, 2),
            l1d: CacheGeometry::new(256, 16, 2),
            l2: CacheGeometry::new(1024, 16, 4),
            latencies: StallLatencies::default(),
        }
    }

    fn none() -> PermanentFaultRegistry {
        PermanentFaultRegistry::default()
    }

    #[test]
    fn cold_load_misses_both_levels() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.write_ram(RAM_BASE + 0x40, &[1, 2, 3, 4]).unwrap();
        let a = m.load(RAM_BASE + 0x40, 4, &none()).unwrap();
        assert_eq!(a.value, 0x0403_0201);
        assert_eq!(a.stall, 80);
        assert_eq!(m.events().l1d_misses, 1);
        assert_eq!(m.events().l2_misses, 1);
        let again = m.load(RAM_BASE + 0x42, 2, &none()).unwrap();
        assert_eq!(again.value, 0x0403);
        assert_eq!(again.stall, 0);
        assert_eq!(m.events().l1d_misses, 1);
    }

    #[test]
    fn store_then_load_hits() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.store(RAM_BASE + 8, 4, 0xcafe_f00d, &none()).unwrap();
        let misses = m.events().l1d_misses;
        assert_eq!(m.load(RAM_BASE + 8, 4, &none()).unwrap().value, 0xcafe_f00d);
        assert_eq!(m.events().l1d_misses, misses);
        // RAM is stale until writeback.
        assert_eq!(m.ram_byte(RAM_BASE + 8), Some(0));
    }

    #[test]
    fn l2_hit_costs_l2_latency() {
        let mut m = MemorySystem::new(small()).unwrap();
        let l1_stride = 16 * m.cache(CacheId::L1D).num_sets(); // 128
        // Three blocks mapping to the same 2-way L1D set: the third evicts the
        // first from L1D, but all three stay in the 4-way L2.
        for i in 0..3 {
            m.load(RAM_BASE + i * l1_stride, 4, &none()).unwrap();
        }
        let a = m.load(RAM_BASE, 4, &none()).unwrap();
        assert_eq!(a.stall, 10);
    }

    #[test]
    fn out_of_bounds_and_misaligned() {
        let mut m = MemorySystem::new(small()).unwrap();
        assert_eq!(m.load(0x1000, 4, &none()), Err(MemFault::OutOfBounds(0x1000)));
        let end = m.ram_end() as u32;
        assert_eq!(m.load(end - 2, 4, &none()), Err(MemFault::Misaligned(end - 2)));
        assert_eq!(m.load(end, 4, &none()), Err(MemFault::OutOfBounds(end)));
        assert_eq!(m.load(RAM_BASE + 2, 4, &none()), Err(MemFault::Misaligned(RAM_BASE + 2)));
        assert_eq!(m.fetch(RAM_BASE + 1, &none()), Err(MemFault::Misaligned(RAM_BASE + 1)));
    }

    #[test]
    fn flush_writes_back_stores() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.store(RAM_BASE + 0x100, 1, 0x77, &none()).unwrap();
        m.flush_all(&none());
        assert_eq!(m.ram_byte(RAM_BASE + 0x100), Some(0x77));
        assert_eq!(m.cache(CacheId::L1D).valid_blocks(), 0);
        assert_eq!(m.cache(CacheId::L2).valid_blocks(), 0);
    }

    #[test]
    fn flush_on_empty_hierarchy_is_noop() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.write_ram(RAM_BASE, &[9; 32]).unwrap();
        let before = m.ram().to_vec();
        m.flush_all(&none());
        assert_eq!(m.ram(), &before[..]);
    }

    #[test]
    fn peek_poke_ram() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.poke_byte(Cell::Ram(RAM_BASE + 5), 0x5a).unwrap();
        assert_eq!(m.peek_byte(Cell::Ram(RAM_BASE + 5)), Ok(0x5a));
        assert!(m.poke_byte(Cell::Ram(0x10), 1).is_err());
        let bad = Cell::Cache {
            cache: CacheId::L1D,
            set: 99,
            way: 0,
            offset: 0,
        };
        assert_eq!(m.peek_byte(bad), Err(InvalidCell(bad)));
    }

    #[test]
    fn poked_l1d_byte_visible_to_loads() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.load(RAM_BASE + 0x20, 4, &none()).unwrap();
        let cell = m.l1d_cell(RAM_BASE + 0x21).unwrap();
        let before = m.snapshot();
        m.poke_byte(cell, 0xee).unwrap();
        assert_eq!(m.snapshot(), before);
        assert_eq!(m.load(RAM_BASE + 0x20, 4, &none()).unwrap().value, 0x0000_ee00);
    }

    #[test]
    fn stuck_ram_cell_survives_writeback() {
        let mut m = MemorySystem::new(small()).unwrap();
        let mut reg = none();
        reg.register(PermanentFault {
            location: FaultLocation::Ram { addr: RAM_BASE + 3 },
            mask: 0x80,
            stuck: StuckAt::One,
        })
        .unwrap();
        m.store(RAM_BASE, 4, 0, &reg).unwrap();
        m.flush_all(&reg);
        assert_eq!(m.ram_byte(RAM_BASE + 3), Some(0x80));
        assert_eq!(m.load(RAM_BASE, 4, &reg).unwrap().value, 0x8000_0000);
    }

    #[test]
    fn read_coherent_prefers_nearest_level() {
        let mut m = MemorySystem::new(small()).unwrap();
        m.store(RAM_BASE + 4, 1, 0x42, &none()).unwrap();
        let ev = *m.events();
        assert_eq!(m.read_coherent(RAM_BASE + 4, &none()), Ok(0x42));
        assert_eq!(m.read_coherent(RAM_BASE + 0x800, &none()), Ok(0));
        assert_eq!(*m.events(), ev);
    }
}
