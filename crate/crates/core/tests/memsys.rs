use std::collections::VecDeque;

use faultsim::injector::PermanentFaultRegistry;
use faultsim::memsys::{AccessKind, Cell, MemEvents};
use faultsim::rng::rng_from_seed;
use faultsim::{assemble, load, run, CacheGeometry, CacheId, InjectorSet, MachineState, MemoryConfig, MemorySystem, RAM_BASE};
use proptest::prelude::*;

fn small() -> MemoryConfig {
    MemoryConfig {
        ram_size: 1 << 16,
        l1i: CacheGeometry {
            size_bytes: 512,
            block_bytes: 32,
            associativity: 2,
        },
        l1d: CacheGeometry {
            size_bytes: 1024,
            block_bytes: 32,
            associativity: 2,
        },
        l2: CacheGeometry {
            size_bytes: 4096,
            block_bytes: 64,
            associativity: 4,
        },
        ..MemoryConfig::default()
    }
}

/// Reference cache: each set is a recency list of (block address, dirty),
/// most recent first.
struct RefCache {
    sets: Vec<VecDeque<(u32, bool)>>,
    ways: usize,
    block: u32,
}

impl RefCache {
    fn new(g: CacheGeometry) -> Self {
        let n = g.size_bytes / g.block_bytes / g.associativity;
        Self {
            sets: (0..n).map(|_| VecDeque::new()).collect(),
            ways: g.associativity as usize,
            block: g.block_bytes,
        }
    }

    fn base(&self, addr: u32) -> u32 {
        addr / self.block * self.block
    }

    fn set(&mut self, addr: u32) -> &mut VecDeque<(u32, bool)> {
        let n = self.sets.len() as u32;
        &mut self.sets[(addr / self.block % n) as usize]
    }

    /// Moves the block to the front if present.
    fn hit(&mut self, addr: u32) -> bool {
        let b = self.base(addr);
        let set = self.set(addr);
        match set.iter().position(|&(a, _)| a == b) {
            Some(i) => {
                let line = set.remove(i).unwrap();
                set.push_front(line);
                true
            }
            None => false,
        }
    }

    /// Inserts at the front; returns the evicted line if the set was full.
    fn insert(&mut self, addr: u32, dirty: bool) -> Option<(u32, bool)> {
        let b = self.base(addr);
        let ways = self.ways;
        let set = self.set(addr);
        let out = if set.len() == ways { set.pop_back() } else { None };
        set.push_front((b, dirty));
        out
    }

    fn mark_dirty(&mut self, addr: u32) {
        let b = self.base(addr);
        let set = self.set(addr);
        set.iter_mut().find(|(a, _)| *a == b).unwrap().1 = true;
    }

    fn clear(&mut self) {
        self.sets.iter_mut().for_each(VecDeque::clear);
    }
}

struct RefHierarchy {
    l1i: RefCache,
    l1d: RefCache,
    l2: RefCache,
    ev: MemEvents,
}

impl RefHierarchy {
    fn new(c: &MemoryConfig) -> Self {
        Self {
            l1i: RefCache::new(c.l1i),
            l1d: RefCache::new(c.l1d),
            l2: RefCache::new(c.l2),
            ev: MemEvents::default(),
        }
    }

    fn l2_fill(&mut self, addr: u32, dirty: bool) {
        if let Some((_, true)) = self.l2.insert(addr, dirty) {
            self.ev.l2_writebacks += 1;
        }
    }

    fn l2_write(&mut self, addr: u32) {
        if self.l2.hit(addr) {
            self.l2.mark_dirty(addr);
        } else {
            self.l2_fill(addr, true);
        }
    }

    fn l2_read(&mut self, addr: u32) {
        self.ev.l2_accesses += 1;
        if !self.l2.hit(addr) {
            self.ev.l2_misses += 1;
            self.l2_fill(addr, false);
        }
    }

    fn access(&mut self, kind: AccessKind, addr: u32) {
        let store = kind == AccessKind::Store;
        let data = kind != AccessKind::Fetch;
        if data {
            self.ev.l1d_accesses += 1;
        } else {
            self.ev.l1i_accesses += 1;
        }
        let l1 = if data { &mut self.l1d } else { &mut self.l1i };
        if l1.hit(addr) {
            if store {
                l1.mark_dirty(addr);
            }
            return;
        }
        if data {
            self.ev.l1d_misses += 1;
        } else {
            self.ev.l1i_misses += 1;
        }
        // Evict before filling, as the hierarchy does.
        let l1 = if data { &mut self.l1d } else { &mut self.l1i };
        let ways = l1.ways;
        let set = l1.set(addr);
        if set.len() == ways {
            let (victim, dirty) = set.pop_back().unwrap();
            if dirty {
                if data {
                    self.ev.l1d_writebacks += 1;
                }
                self.l2_write(victim);
            }
        }
        self.l2_read(addr);
        let l1 = if data { &mut self.l1d } else { &mut self.l1i };
        l1.insert(addr, store);
    }

    fn flush(&mut self) {
        self.l1i.clear();
        self.l1d.clear();
        self.l2.clear();
    }
}

#[derive(Debug, Clone)]
enum Op {
    Access { kind: AccessKind, slot: u32, width: u32, value: u32 },
    Flush,
}

/// Addresses drawn from a few heavily conflicting blocks.
fn addr_of(slot: u32, width: u32) -> u32 {
    let block = slot % 24;
    let within = (slot / 24) % 16 * 4;
    let a = RAM_BASE + (block % 3) * 64 + (block / 3) * 1024 + within;
    a & !(width - 1)
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        20 => (0..3u8, any::<u32>(), prop::sample::select(vec![1u32, 2, 4]), any::<u32>()).prop_map(
            |(k, slot, width, value)| {
                let kind = [AccessKind::Fetch, AccessKind::Load, AccessKind::Store][k as usize];
                let width = if kind == AccessKind::Fetch { 4 } else { width };
                Op::Access { kind, slot, width, value }
            }
        ),
        1 => Just(Op::Flush),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loads_match_shadow_and_events_match_reference(ops in prop::collection::vec(op(), 1..400)) {
        let cfg = small();
        let none = PermanentFaultRegistry::new();
        let mut mem = MemorySystem::new(cfg).unwrap();
        let mut shadow = vec![0u8; cfg.ram_size as usize];
        let mut reference = RefHierarchy::new(&cfg);
        for op in ops {
            match op {
                Op::Flush => {
                    mem.flush_all(&none);
                    reference.flush();
                    prop_assert_eq!(mem.ram(), &shadow[..]);
                }
                Op::Access { kind, slot, width, value } => {
                    let addr = addr_of(slot, width);
                    let got = mem.access(kind, addr, width, value, &none).unwrap();
                    reference.access(kind, addr);
                    let i = (addr - RAM_BASE) as usize;
                    match kind {
                        AccessKind::Store => {
                            shadow[i..i + width as usize].copy_from_slice(&value.to_le_bytes()[..width as usize]);
                        }
                        AccessKind::Load => {
                            let mut want = [0u8; 4];
                            want[..width as usize].copy_from_slice(&shadow[i..i + width as usize]);
                            prop_assert_eq!(got.value, u32::from_le_bytes(want), "load {:#x}", addr);
                        }
                        AccessKind::Fetch => {}
                    }
                }
            }
            prop_assert_eq!(*mem.events(), reference.ev);
        }
        mem.flush_all(&none);
        prop_assert_eq!(mem.ram(), &shadow[..]);
    }

    #[test]
    fn peek_and_poke_leave_metadata_alone(
        ops in prop::collection::vec(op(), 1..100),
        pokes in prop::collection::vec((any::<u32>(), any::<u8>(), 0..4u8), 1..50),
    ) {
        let none = PermanentFaultRegistry::new();
        let mut mem = MemorySystem::new(small()).unwrap();
        for op in ops {
            if let Op::Access { kind, slot, width, value } = op {
                mem.access(kind, addr_of(slot, width), width, value, &none).unwrap();
            }
        }
        let before = mem.snapshot();
        for (slot, value, level) in pokes {
            let cell = match level {
                0 => Cell::Ram(addr_of(slot, 1)),
                l => {
                    let id = CacheId::ALL[l as usize - 1];
                    let c = mem.cache(id);
                    Cell::Cache {
                        cache: id,
                        set: slot % c.num_sets(),
                        way: (slot >> 8) % c.ways(),
                        offset: (slot >> 16) % c.block_bytes(),
                    }
                }
            };
            mem.poke(cell, value, &none).unwrap();
            prop_assert_eq!(mem.peek(cell, &none).unwrap(), value);
        }
        prop_assert_eq!(mem.snapshot(), before);
    }
}

#[test]
fn valid_block_sampling_is_uniform() {
    let none = PermanentFaultRegistry::new();
    let mut mem = MemorySystem::new(MemoryConfig::default()).unwrap();
    // 100 distinct L1D blocks.
    for k in 0..100u32 {
        mem.load(RAM_BASE + k * 64 * 3, 4, &none).unwrap();
    }
    assert_eq!(mem.cache(CacheId::L1D).valid_blocks(), 100);
    let draws = 10_000u32;
    let mut counts = std::collections::HashMap::new();
    let mut rng = rng_from_seed(77);
    for _ in 0..draws {
        let b = mem.sample_valid_block(CacheId::L1D, &mut rng).unwrap();
        assert!(mem.cache(CacheId::L1D).is_valid(b.set, b.way));
        *counts.entry((b.set, b.way)).or_insert(0u32) += 1;
    }
    assert_eq!(counts.len(), 100);
    let expected = draws as f64 / 100.0;
    let sigma = (draws as f64 * 0.01 * 0.99).sqrt();
    let mut chi2 = 0.0;
    for &c in counts.values() {
        assert!((c as f64 - expected).abs() < 5.0 * sigma, "count {c}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 99 degrees of freedom; the 0.999 quantile is about 148.2.
    assert!(chi2 < 148.2, "chi-square {chi2}");
}

#[test]
fn conflict_evictions_write_dirty_data_back() {
    // Store to B, then touch enough lines mapping to B's L1D and L2 sets to
    // push B out of both levels.
    let b = RAM_BASE + 0x4_0040;
    let src = format!(
        "_start:
            li s0, {b:#x}
            li t0, 0xCAFEF00D
            sw t0, 0(s0)
            li t1, 0x10000
            li t2, 10
            mv t3, s0
        loop:
            add t3, t3, t1
            lw t4, 0(t3)
            addi t2, t2, -1
            bnez t2, loop
            li a0, 0
            li a7, 93
            ecall
        "
    );
    let image = assemble(&src).unwrap();
    let mut mem = MemorySystem::new(MemoryConfig::default()).unwrap();
    let mut state = MachineState::default();
    load(&image, &mut mem, &mut state).unwrap();
    let trace = run(state, &mut mem, InjectorSet::empty(), 1_000_000);
    assert_eq!(trace.end, faultsim::RunEnd::Exited { code: 0 });
    assert_eq!(mem.ram()[(b - RAM_BASE) as usize..][..4], 0xCAFE_F00Du32.to_le_bytes());
    assert_eq!(trace.state.hpc.dcache_writebacks, 1);
    assert!(mem.events().l2_writebacks >= 1);
}
