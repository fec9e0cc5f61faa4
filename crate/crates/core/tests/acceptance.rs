//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, even when others fail.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use faultsim::campaign::{
    classify, delta_mean_counters, golden_run, run_campaign, run_single, sample_size, write_report, OutcomeClass,
};
use faultsim::config::{Benchmark, CampaignConfig, MachineSettings, OutputFormat, Tier};
use faultsim::injector::{
    EngineTarget, FaultLocation, PermanentFault, StuckAt,
};
use faultsim::machine::{step, RegClass};
use faultsim::memsys::MemoryConfig;
use faultsim::rng::rng_from_seed;
use faultsim::{
    apply_fault, assemble, load, next_delay, random_mask, CacheId, EngineId, FaultConfig, FaultKind, FaultType,
    FaultyBits, InjectorSet, MachineState, MemorySystem, PermanentFaultRegistry, TargetClass, RAM_BASE,
};
use rand::Rng;

// Pinned tolerances and sizes.
const AC1_SIZES: [(Tier, u64); 3] = [(Tier::Low, 384), (Tier::Medium, 663), (Tier::High, 16587)];
const AC2_TRIPLES: usize = 1_000_000;
const AC3_PAIRS: usize = 10_000;
const AC3_ABS_TOL: f64 = 1e-9;
const AC4_PROBS: [f64; 3] = [0.5, 0.01, 0.001];
const AC4_GAPS: usize = 100_000;
const AC4_REL_TOL: f64 = 0.03;
const AC5_THREADS: usize = 8;
const AC6_CI_RUNS: u64 = 663;
const AC6_MEM_CRASH_MAX: f64 = 0.10;
const AC7_WRITES: usize = 100;
const AC9_PROGRAMS: usize = 10_000;
const AC10_INJECTIONS: usize = 10_000;

type Check = fn() -> String;

fn main() {
    let checks: [(&str, &str, Check); 10] = [
        ("AC1", "sample sizes", ac1_sample_sizes),
        ("AC2", "fault algebra", ac2_fault_algebra),
        ("AC3", "mean counter deviation oracle", ac3_delta_oracle),
        ("AC4", "scheduler gaps", ac4_scheduler),
        ("AC5", "serial/parallel determinism", ac5_determinism),
        ("AC6", "L1I vs memory crash rates", ac6_crash_rates),
        ("AC7", "stuck-at persistence", ac7_persistence),
        ("AC8", "cache propagation channels", ac8_cache_channels),
        ("AC9", "classification totality", ac9_totality),
        ("AC10", "injection side-effect isolation", ac10_isolation),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| id.eq_ignore_ascii_case(f)) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{id} PASS {name} ({secs:.1}s): {detail}"),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("{id} FAIL {name} ({secs:.1}s): {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ac1_sample_sizes() -> String {
    for (tier, n) in AC1_SIZES {
        assert_eq!(tier.sample_size(), n, "{tier}");
        assert_eq!(sample_size(tier.margin(), tier.confidence()).unwrap(), n, "{tier}");
    }
    "384 / 663 / 16587".into()
}

fn ac2_fault_algebra() -> String {
    let mut rng = rng_from_seed(0xA2);
    let mut registry = PermanentFaultRegistry::new();
    for _ in 0..AC2_TRIPLES {
        let v: u32 = rng.random();
        let m: u32 = rng.random();
        let kind = FaultKind::ALL[rng.random_range(0..3)];
        let once = apply_fault(v, m, kind);
        match kind {
            FaultKind::BitFlip => assert_eq!(apply_fault(once, m, kind), v, "flip involution {v:#x} {m:#x}"),
            FaultKind::StuckAt0 => {
                assert_eq!(once & m, 0);
                assert_eq!(apply_fault(once, m, kind), once, "stuck-at-0 idempotence");
            }
            FaultKind::StuckAt1 => {
                assert_eq!(once & m, m);
                assert_eq!(apply_fault(once, m, kind), once, "stuck-at-1 idempotence");
            }
        }

        let width = if rng.random_bool(0.5) { 32 } else { 8 };
        let k = rng.random_range(1..=width);
        let mask = random_mask(k, width, &mut rng);
        assert_eq!(mask.count_ones(), k);
        assert!(width == 32 || mask < 1 << width);

        // Enforcement on a random register cell. Conflicting registrations
        // are refused, so the registry stays consistent.
        let index = rng.random_range(0..32u8);
        let location = FaultLocation::Register {
            class: RegClass::Integer,
            index,
        };
        let stuck = if rng.random_bool(0.5) { StuckAt::Zero } else { StuckAt::One };
        let fault = PermanentFault {
            location,
            mask: m | 1,
            stuck,
        };
        if registry.len() > 4096 {
            registry = PermanentFaultRegistry::new();
        }
        let _ = registry.register(fault);
        let read = registry.enforce(location, v);
        for e in registry.entries().iter().filter(|e| e.location == location) {
            match e.stuck {
                StuckAt::Zero => assert_eq!(read & e.mask, 0),
                StuckAt::One => assert_eq!(read & e.mask, e.mask),
            }
        }
    }
    format!("{AC2_TRIPLES} triples")
}

/// Brute-force reference: term by term, summed from the last counter.
fn delta_oracle(golden: &[u64], faulty: &[u64]) -> (f64, bool) {
    let mut terms = Vec::new();
    let mut divergent = false;
    for i in (0..golden.len()).rev() {
        if golden[i] == 0 {
            divergent = divergent || faulty[i] != 0;
        } else {
            let g = golden[i] as f64;
            terms.push(((faulty[i] as f64 - g) / g).abs());
        }
    }
    (100.0 * terms.iter().sum::<f64>() / terms.len() as f64, divergent)
}

fn ac3_delta_oracle() -> String {
    let mut rng = rng_from_seed(0xA3);
    let mut worst = 0.0f64;
    for _ in 0..AC3_PAIRS {
        let mut golden = [0u64; 20];
        let mut faulty = [0u64; 20];
        for i in 0..20 {
            golden[i] = if rng.random_bool(0.3) { 0 } else { rng.random_range(1..1_000_000) };
            faulty[i] = match rng.random_range(0..4) {
                0 => golden[i],
                1 => 0,
                _ => rng.random_range(0..3 * golden[i].max(1)),
            };
        }
        golden[0] = golden[0].max(1);
        let got = delta_mean_counters(&golden, &faulty).unwrap();
        let (want, divergent) = delta_oracle(&golden, &faulty);
        let diff = (got.value - want).abs();
        assert!(diff < AC3_ABS_TOL, "{golden:?} {faulty:?}: {} vs {want}", got.value);
        assert_eq!(got.divergent_from_zero, divergent);
        worst = worst.max(diff);
    }
    format!("{AC3_PAIRS} pairs, max |diff| {worst:.1e}")
}

fn ac4_scheduler() -> String {
    let mut out = Vec::new();
    for (i, p) in AC4_PROBS.into_iter().enumerate() {
        let mut rng = rng_from_seed(0xA4 + i as u64);
        let sum: u64 = (0..AC4_GAPS).map(|_| next_delay(p, &mut rng).unwrap()).sum();
        let mean = sum as f64 / AC4_GAPS as f64;
        let rel = (mean * p - 1.0).abs();
        assert!(rel < AC4_REL_TOL, "p={p}: mean {mean} vs {}", 1.0 / p);
        out.push(format!("p={p}: {:.2}%", rel * 100.0));
    }
    out.join(", ")
}

fn ac5_determinism() -> String {
    let text = |threads: usize| {
        format!(
            "[benchmarks]\npaths = [\"builtin:crc\"]\n[engines.mem]\nprobability = 1e-3\n\
             [campaign]\ntiers = [\"low\"]\nseed = 2024\nparallelism = {threads}\n"
        )
    };
    let mut files = Vec::new();
    for threads in [1, AC5_THREADS] {
        let cfg = CampaignConfig::from_toml(&text(threads)).unwrap();
        let benches = cfg.load_benchmarks(std::path::Path::new(".")).unwrap();
        let report = run_campaign(&cfg, &benches).unwrap();
        assert_eq!(report.runs.len(), 384);
        let dir = tempfile::tempdir().unwrap();
        write_report(dir.path(), &report, &[OutputFormat::Json]).unwrap();
        files.push(std::fs::read(dir.path().join("report.json")).unwrap());
    }
    assert!(files[0] == files[1], "report.json differs between 1 and {AC5_THREADS} threads");
    format!("384 runs, report.json {} bytes identical", files[0].len())
}

fn ac6_crash_rates() -> String {
    let full = std::env::var_os("FAULTSIM_AC6_FULL").is_some();
    let mut out = Vec::new();
    for name in faultsim::kernels::NAMES {
        let bench = Benchmark::builtin(name).unwrap();
        let golden = golden_run(&bench.image, &MachineSettings::default()).unwrap();
        let p = 1.0 / golden.cycles as f64;
        let runs = if full { String::new() } else { format!("[campaign.tier_runs]\nhigh = {AC6_CI_RUNS}\n") };
        let cfg = CampaignConfig::from_toml(&format!(
            "[benchmarks]\npaths = [\"builtin:{name}\"]\n\
             [engines.l1i]\nprobability = {p:e}\nfault_type = \"bit_flip\"\nfaulty_bits = 1\n\
             [engines.mem]\nprobability = {p:e}\nfault_type = \"bit_flip\"\nfaulty_bits = 1\n\
             [campaign]\ntiers = [\"high\"]\nseed = 6\n{runs}"
        ))
        .unwrap();
        let report = run_campaign(&cfg, &[bench]).unwrap();
        let rate = |engine: &str| {
            let c = report.cells.iter().find(|c| c.engine == engine).unwrap();
            c.histogram.crash as f64 / c.n_runs as f64
        };
        let (l1i, mem) = (rate("l1i"), rate("mem"));
        out.push(format!("{name}: l1i {:.1}% mem {:.1}%", l1i * 100.0, mem * 100.0));
        assert!(l1i > mem, "{name}: l1i crash {l1i} not above mem crash {mem}");
        assert!(mem < AC6_MEM_CRASH_MAX, "{name}: mem crash rate {mem}");
    }
    out.join("; ")
}

fn ac7_persistence() -> String {
    let mut rng = rng_from_seed(0xA7);
    let mut registry = PermanentFaultRegistry::new();
    let reg_mask = 0x8000_0101;
    registry
        .register(PermanentFault {
            location: FaultLocation::Register {
                class: RegClass::Integer,
                index: 9,
            },
            mask: reg_mask,
            stuck: StuckAt::Zero,
        })
        .unwrap();
    let addr = RAM_BASE + 0x1234;
    let byte_mask = 0x5a;
    registry
        .register(PermanentFault {
            location: FaultLocation::Ram { addr },
            mask: byte_mask,
            stuck: StuckAt::Zero,
        })
        .unwrap();

    let mut state = MachineState::new(RAM_BASE, 0);
    let mut mem = MemorySystem::new(MemoryConfig::default()).unwrap();
    // A stuck bit in the L1D cell that will hold `cached`.
    let cached = RAM_BASE + 0x8000;
    mem.load(cached, 1, &registry).unwrap();
    let Some(faultsim::memsys::Cell::Cache { set, way, offset, .. }) = mem.l1d_cell(cached) else {
        panic!("line not cached")
    };
    registry
        .register(PermanentFault {
            location: FaultLocation::CacheCell {
                cache: CacheId::L1D,
                set,
                way,
                offset,
            },
            mask: byte_mask,
            stuck: StuckAt::Zero,
        })
        .unwrap();

    for i in 0..AC7_WRITES {
        state.write_x(9, rng.random::<u32>() | reg_mask, &registry);
        assert_eq!(state.read_x(9, &registry) & reg_mask, 0, "register write {i}");

        // The RAM cell: each write is pushed out of the caches before it is
        // read back.
        mem.store(addr, 1, rng.random::<u32>() | byte_mask, &registry).unwrap();
        mem.flush_all(&registry);
        assert_eq!(mem.ram_byte(addr).unwrap() as u32 & byte_mask, 0, "RAM byte write {i}");
        assert_eq!(mem.load(addr, 1, &registry).unwrap().value & byte_mask, 0, "RAM byte read {i}");

        // The cache cell: written and read while resident.
        mem.store(cached, 1, rng.random::<u32>() | byte_mask, &registry).unwrap();
        assert_eq!(mem.load(cached, 1, &registry).unwrap().value & byte_mask, 0, "L1D byte write {i}");
        assert_eq!(
            mem.l1d_cell(cached),
            Some(faultsim::memsys::Cell::Cache {
                cache: CacheId::L1D,
                set,
                way,
                offset
            }),
            "line moved to another way"
        );
    }
    format!("{AC7_WRITES} writes each to a register, a RAM byte and an L1D byte")
}

/// Addresses mapping to the same L1D and L2 set as `addr`, enough to evict
/// it from both levels.
fn conflicting(mem: &MemorySystem, addr: u32) -> Vec<u32> {
    let l2 = mem.cache(CacheId::L2);
    let stride = l2.num_sets() * l2.block_bytes();
    (1..=2 * l2.ways() + 2).map(|k| addr + k * stride).collect()
}

fn ac8_cache_channels() -> String {
    let none = PermanentFaultRegistry::new();
    let addr = RAM_BASE + 0x4000;

    // Dirty block: corruption in L1D reaches RAM on writeback.
    let mut mem = MemorySystem::new(MemoryConfig::default()).unwrap();
    mem.store(addr, 4, 0x1122_3344, &none).unwrap();
    let cell = mem.l1d_cell(addr).unwrap();
    mem.poke(cell, 0x44 ^ 0xff, &none).unwrap();
    for a in conflicting(&mem, addr) {
        mem.load(a, 4, &none).unwrap();
    }
    assert!(mem.l1d_cell(addr).is_none() && mem.cell_for(CacheId::L2, addr).is_none());
    assert_eq!(mem.ram_byte(addr), Some(0x44 ^ 0xff), "dirty corruption lost");
    assert_eq!(mem.load(addr, 4, &none).unwrap().value, 0x1122_33bb);

    // Clean block: corruption in L1D disappears when the block is dropped.
    let mut mem = MemorySystem::new(MemoryConfig::default()).unwrap();
    mem.write_ram(addr, &0x5566_7788u32.to_le_bytes()).unwrap();
    mem.load(addr, 4, &none).unwrap();
    let cell = mem.l1d_cell(addr).unwrap();
    mem.poke(cell, 0x00, &none).unwrap();
    assert_eq!(mem.load(addr, 4, &none).unwrap().value, 0x5566_7700);
    for a in conflicting(&mem, addr) {
        mem.load(a, 4, &none).unwrap();
    }
    assert_eq!(mem.ram_byte(addr), Some(0x88), "clean corruption written back");
    assert_eq!(mem.load(addr, 4, &none).unwrap().value, 0x5566_7788);
    "dirty survives, clean discarded".into()
}

fn random_config<R: Rng>(rng: &mut R, ram_size: u32) -> FaultConfig {
    let p = [1.0, 0.1, 0.01, 1e-3][rng.random_range(0..4)];
    let mut cfg = match EngineId::ALL[rng.random_range(0..5)] {
        EngineId::Reg => {
            let mut c = FaultConfig::register(p);
            c.target = EngineTarget::Register {
                class: [TargetClass::Integer, TargetClass::Float, TargetClass::Random][rng.random_range(0..3)],
                pc_target: 0,
                register: None,
            };
            c
        }
        EngineId::CacheL1I => FaultConfig::cache(CacheId::L1I, p),
        EngineId::CacheL1D => FaultConfig::cache(CacheId::L1D, p),
        EngineId::CacheL2 => FaultConfig::cache(CacheId::L2, p),
        EngineId::Mem => {
            if rng.random_bool(0.5) {
                FaultConfig::memory(p, RAM_BASE, RAM_BASE + 1023)
            } else {
                FaultConfig::memory(p, RAM_BASE, RAM_BASE + ram_size - 1)
            }
        }
    };
    if let EngineTarget::Cache { corruption_size, .. } = &mut cfg.target {
        *corruption_size = rng.random_range(1..=4);
    }
    cfg.fault_type = [FaultType::BitFlip, FaultType::StuckAt0, FaultType::StuckAt1, FaultType::Random]
        [rng.random_range(0..4)];
    cfg.faulty_bits = if rng.random_bool(0.2) {
        FaultyBits::Random
    } else {
        FaultyBits::Count(rng.random_range(1..=cfg.width().min(4)))
    };
    if rng.random_bool(0.2) {
        let start = rng.random_range(0..200);
        cfg = cfg.window(start, start + rng.random_range(0..200));
    }
    cfg.validate(ram_size).unwrap();
    cfg
}

fn ac9_totality() -> String {
    let mut rng = rng_from_seed(0xA9);
    let settings = MachineSettings::default();
    let mut counts = [0u64; 4];
    for i in 0..AC9_PROGRAMS {
        let len = rng.random_range(5..40);
        let src = common::random_safe_program(&mut rng, len);
        let bench = Benchmark {
            name: format!("fuzz{i}"),
            image: assemble(&src).unwrap_or_else(|e| panic!("{e}\n{src}")),
        };
        let golden = golden_run(&bench.image, &settings).unwrap_or_else(|e| panic!("golden: {e}\n{src}"));
        let cfg = random_config(&mut rng, settings.ram_size);
        let seed: u64 = rng.random();
        let report = catch_unwind(AssertUnwindSafe(|| {
            run_single(&bench, cfg.engine().name(), None, 0, &settings, &golden, &[cfg], seed)
        }))
        .unwrap_or_else(|_| panic!("panic on program {i} with {cfg:?} seed {seed}\n{src}"))
        .unwrap();
        let again = classify(&report.end, &report.output, &golden);
        assert_eq!(again, report.outcome);
        counts[OutcomeClass::ALL.iter().position(|&o| o == report.outcome).unwrap()] += 1;
    }
    assert_eq!(counts.iter().sum::<u64>(), AC9_PROGRAMS as u64);
    format!(
        "{AC9_PROGRAMS} programs: crash {} sdc {} masked {} timeout {}",
        counts[0], counts[1], counts[2], counts[3]
    )
}

fn ac10_isolation() -> String {
    let image = faultsim::kernels::image("qsort").unwrap();
    let configs = [
        FaultConfig::register(0.01),
        FaultConfig::cache(CacheId::L1I, 0.01),
        FaultConfig::cache(CacheId::L1D, 0.01).fault_type(FaultType::Random),
        FaultConfig::cache(CacheId::L2, 0.01),
        FaultConfig::memory(0.01, RAM_BASE, RAM_BASE + (8 << 20) - 1).fault_type(FaultType::Random),
    ];
    let mut mem = MemorySystem::new(MemoryConfig::default()).unwrap();
    let mut injections = 0;
    let mut run = 0u64;
    while injections < AC10_INJECTIONS {
        let mut state = MachineState::default();
        load(&image, &mut mem, &mut state).unwrap();
        let mut set = InjectorSet::from_configs(&configs, run);
        run += 1;
        while state.is_running() && state.cycle < 200_000 {
            let before = (state.cycle, state.hpc, mem.snapshot());
            let n = set.records().len();
            set.deliver_due(&mut state, &mut mem, &mut faultsim::machine::NoHooks);
            let fired = set.records()[n..].iter().filter(|r| !r.is_skipped()).count();
            if fired > 0 {
                assert_eq!(state.cycle, before.0, "cycle moved by injection");
                assert_eq!(state.hpc, before.1, "counter moved by injection");
                assert_eq!(mem.snapshot(), before.2, "cache metadata or events moved by injection");
                injections += fired;
            }
            step(&mut state, &mut mem, set.registry());
        }
    }
    format!("{injections} injections over {run} runs")
}
