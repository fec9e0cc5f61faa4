use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest supported block size. Fills and writebacks stage a block on the
/// stack.
pub const MAX_BLOCK_BYTES: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheId {
    L1I,
    L1D,
    L2,
}

impl CacheId {
    pub const ALL: [CacheId; 3] = [CacheId::L1I, CacheId::L1D, CacheId::L2];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    pub size_bytes: u32,
    pub block_bytes: u32,
    pub associativity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("{field} must be a power of two, got {value}")]
    NotPowerOfTwo { field: &'static str, value: u32 },
    #[error("block_bytes must be between 4 and {MAX_BLOCK_BYTES}, got {0}")]
    BlockSize(u32),
    #[error("size_bytes {size} is smaller than one set of {assoc} x {block}-byte blocks")]
    TooSmall { size: u32, block: u32, assoc: u32 },
}

impl CacheGeometry {
    pub const fn new(size_bytes: u32, block_bytes: u32, associativity: u32) -> Self {
        Self {
            size_bytes,
            block_bytes,
            associativity,
        }
    }

    pub fn sets(&self) -> u32 {
        self.size_bytes / (self.block_bytes * self.associativity)
    }

    pub fn blocks(&self) -> u32 {
        self.size_bytes / self.block_bytes
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for (field, value) in [
            ("size_bytes", self.size_bytes),
            ("block_bytes", self.block_bytes),
            ("associativity", self.associativity),
        ] {
            if !value.is_power_of_two() {
                return Err(GeometryError::NotPowerOfTwo { field, value });
            }
        }
        if !(4..=MAX_BLOCK_BYTES).contains(&self.block_bytes) {
            return Err(GeometryError::BlockSize(self.block_bytes));
        }
        if (self.size_bytes as u64) < self.block_bytes as u64 * self.associativity as u64 {
            return Err(GeometryError::TooSmall {
                size: self.size_bytes,
                block: self.block_bytes,
                assoc: self.associativity,
            });
        }
        Ok(())
    }
}

/// A specific way of a specific set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub cache: CacheId,
    pub set: u32,
    pub way: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no valid block in {0:?}")]
pub struct NoValidBlock(pub CacheId);

/// Snapshot of one block, for inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheBlock {
    pub tag: u32,
    pub valid: bool,
    pub dirty: bool,
    pub data: Vec<u8>,
    /// 0 = most recently used within its set.
    pub lru_rank: u32,
}

/// Set-associative cache array with LRU replacement. Holds data; hierarchy
/// policy (write-back, write-allocate) lives in `MemorySystem`.
#[derive(Debug, Clone)]
pub struct Cache {
    id: CacheId,
    geom: CacheGeometry,
    sets: u32,
    offset_bits: u32,
    set_bits: u32,
    tags: Vec<u32>,
    valid: Vec<bool>,
    dirty: Vec<bool>,
    stamps: Vec<u64>,
    data: Vec<u8>,
    clock: u64,
}

impl Cache {
    pub fn new(id: CacheId, geom: CacheGeometry) -> Result<Self, GeometryError> {
        geom.validate()?;
        let sets = geom.sets();
        let lines = (sets * geom.associativity) as usize;
        Ok(Self {
            id,
            geom,
            sets,
            offset_bits: geom.block_bytes.trailing_zeros(),
            set_bits: sets.trailing_zeros(),
            tags: vec![0; lines],
            valid: vec![false; lines],
            dirty: vec![false; lines],
            stamps: vec![0; lines],
            data: vec![0; geom.size_bytes as usize],
            clock: 0,
        })
    }

    pub fn id(&self) -> CacheId {
        self.id
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geom
    }

    pub fn block_bytes(&self) -> u32 {
        self.geom.block_bytes
    }

    pub fn num_sets(&self) -> u32 {
        self.sets
    }

    pub fn ways(&self) -> u32 {
        self.geom.associativity
    }

    #[inline]
    fn line(&self, set: u32, way: u32) -> usize {
        (set * self.geom.associativity + way) as usize
    }

    #[inline]
    pub fn set_index(&self, addr: u32) -> u32 {
        (addr >> self.offset_bits) & (self.sets - 1)
    }

    #[inline]
    pub fn tag(&self, addr: u32) -> u32 {
        addr.checked_shr(self.offset_bits + self.set_bits).unwrap_or(0)
    }

    #[inline]
    pub fn offset(&self, addr: u32) -> u32 {
        addr & (self.geom.block_bytes - 1)
    }

    /// Address of the first byte held by a valid block.
    pub fn block_addr(&self, set: u32, way: u32) -> u32 {
        let tag = self.tags[self.line(set, way)];
        let hi = (tag as u64) << (self.offset_bits + self.set_bits);
        (hi as u32) | (set << self.offset_bits)
    }

    #[inline]
    pub fn lookup(&self, addr: u32) -> Option<(u32, u32)> {
        let set = self.set_index(addr);
        let tag = self.tag(addr);
        let base = self.line(set, 0);
        (0..self.geom.associativity).find_map(|way| {
            let i = base + way as usize;
            (self.valid[i] && self.tags[i] == tag).then_some((set, way))
        })
    }

    #[inline]
    pub fn touch(&mut self, set: u32, way: u32) {
        self.clock += 1;
        let i = self.line(set, way);
        self.stamps[i] = self.clock;
    }

    /// Replacement choice for `set`: first invalid way, else least recently
    /// used.
    pub fn victim(&self, set: u32) -> u32 {
        let base = self.line(set, 0);
        let ways = self.geom.associativity as usize;
        if let Some(w) = (0..ways).find(|&w| !self.valid[base + w]) {
            return w as u32;
        }
        (0..ways).min_by_key(|&w| self.stamps[base + w]).unwrap_or(0) as u32
    }

    pub fn is_valid(&self, set: u32, way: u32) -> bool {
        self.valid[self.line(set, way)]
    }

    pub fn is_dirty(&self, set: u32, way: u32) -> bool {
        self.dirty[self.line(set, way)]
    }

    pub fn set_dirty(&mut self, set: u32, way: u32) {
        let i = self.line(set, way);
        debug_assert!(self.valid[i]);
        self.dirty[i] = true;
    }

    pub fn block(&self, set: u32, way: u32) -> &[u8] {
        let b = self.geom.block_bytes as usize;
        let start = self.line(set, way) * b;
        &self.data[start..start + b]
    }

    pub fn block_mut(&mut self, set: u32, way: u32) -> &mut [u8] {
        let b = self.geom.block_bytes as usize;
        let start = self.line(set, way) * b;
        &mut self.data[start..start + b]
    }

    /// Makes (set, way) a clean, valid copy of the block containing `addr`.
    /// Data is left for the caller to fill.
    pub(crate) fn install(&mut self, set: u32, way: u32, addr: u32) {
        let i = self.line(set, way);
        self.tags[i] = self.tag(addr);
        self.valid[i] = true;
        self.dirty[i] = false;
    }

    pub(crate) fn invalidate(&mut self, set: u32, way: u32) {
        let i = self.line(set, way);
        self.valid[i] = false;
        self.dirty[i] = false;
    }

    /// Drops every block without writing anything back and clears the data
    /// arrays.
    pub fn reset(&mut self) {
        self.valid.fill(false);
        self.dirty.fill(false);
        self.tags.fill(0);
        self.stamps.fill(0);
        self.data.fill(0);
        self.clock = 0;
    }

    pub fn valid_blocks(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Picks one of the currently valid blocks uniformly at random.
    pub fn sample_valid_block<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BlockRef, NoValidBlock> {
        let n = self.valid_blocks();
        if n == 0 {
            return Err(NoValidBlock(self.id));
        }
        let pick = rng.random_range(0..n);
        let line = self
            .valid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .nth(pick)
            .map(|(i, _)| i)
            .expect("pick < number of valid blocks");
        let ways = self.geom.associativity as usize;
        Ok(BlockRef {
            cache: self.id,
            set: (line / ways) as u32,
            way: (line % ways) as u32,
        })
    }

    pub fn inspect(&self, set: u32, way: u32) -> CacheBlock {
        let i = self.line(set, way);
        let base = self.line(set, 0);
        let ways = self.geom.associativity as usize;
        let lru_rank = (0..ways)
            .filter(|&w| base + w != i && self.valid[base + w] && self.stamps[base + w] > self.stamps[i])
            .count() as u32;
        CacheBlock {
            tag: self.tags[i],
            valid: self.valid[i],
            dirty: self.dirty[i],
            data: self.block(set, way).to_vec(),
            lru_rank,
        }
    }

    /// Replacement and validity state (everything but the data bytes).
    pub fn metadata(&self) -> CacheMetadata {
        CacheMetadata {
            tags: self.tags.clone(),
            valid: self.valid.clone(),
            dirty: self.dirty.clone(),
            stamps: self.stamps.clone(),
            clock: self.clock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheMetadata {
    pub tags: Vec<u32>,
    pub valid: Vec<bool>,
    pub dirty: Vec<bool>,
    pub stamps: Vec<u64>,
    pub clock: u64,
}
