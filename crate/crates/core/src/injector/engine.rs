use std::time::Instant;

use super::registry::{FaultLocation, PermanentFaultRegistry};
use super::{cache_inject_event, mem_inject_event, next_delay, reg_inject_event, EngineTarget, FaultConfig, FaultRecord};
use crate::machine::{ExecHooks, MachineState};
use crate::memsys::{Cell, MemorySystem};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// One engine with its own random stream and pending event.
#[derive(Debug, Clone)]
pub struct Injector {
    cfg: FaultConfig,
    rng: SimRng,
    next_event: Option<u64>,
}

impl Injector {
    /// The first event is drawn relative to cycle 0.
    pub fn new(cfg: FaultConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let next_event = next_delay(cfg.probability, &mut rng);
        Self { cfg, rng, next_event }
    }

    pub fn config(&self) -> &FaultConfig {
        &self.cfg
    }

    /// Cycle of the pending event, `None` if the engine never fires.
    pub fn next_event(&self) -> Option<u64> {
        self.next_event
    }

    /// Consumes the pending event at `cycle` and schedules the next one.
    fn fire(
        &mut self,
        cycle: u64,
        state: &mut MachineState,
        mem: &mut MemorySystem,
        registry: &mut PermanentFaultRegistry,
        out: &mut Vec<FaultRecord>,
    ) {
        match self.cfg.target {
            EngineTarget::Register { .. } => {
                out.extend(reg_inject_event(&self.cfg, cycle, state, registry, &mut self.rng));
            }
            EngineTarget::Cache { .. } => {
                if let Some(recs) = cache_inject_event(&self.cfg, cycle, mem, registry, &mut self.rng) {
                    out.extend(recs);
                }
            }
            EngineTarget::Memory { .. } => {
                out.extend(mem_inject_event(&self.cfg, cycle, mem, registry, &mut self.rng));
            }
        }
        self.next_event = next_delay(self.cfg.probability, &mut self.rng).map(|d| cycle.saturating_add(d));
    }
}

/// The engines active in one run together with the run's permanent-fault
/// registry and the records emitted so far.
#[derive(Debug, Clone, Default)]
pub struct InjectorSet {
    injectors: Vec<Injector>,
    registry: PermanentFaultRegistry,
    records: Vec<FaultRecord>,
    sweep_period: Option<u64>,
    next_sweep: u64,
}

impl InjectorSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(cfg: FaultConfig, run_seed: u64) -> Self {
        Self::from_configs(&[cfg], run_seed)
    }

    /// Each engine draws from a stream keyed by the run seed and the engine
    /// id, so adding an engine leaves the others' draws untouched. Repeated
    /// engines of the same kind are told apart by their occurrence number.
    pub fn from_configs(configs: &[FaultConfig], run_seed: u64) -> Self {
        let mut seen = [0u64; 5];
        let injectors = configs
            .iter()
            .map(|cfg| {
                let id = cfg.engine().index();
                let occurrence = seen[id as usize];
                seen[id as usize] += 1;
                Injector::new(*cfg, derive_seed(derive_seed(run_seed, id), occurrence))
            })
            .collect();
        Self {
            injectors,
            ..Self::default()
        }
    }

    /// Additionally re-applies every permanent fault to physical storage
    /// every `period` cycles. Reads are enforced regardless, so this only
    /// changes what raw inspection of the state shows.
    pub fn with_sweep(mut self, period: u64) -> Self {
        self.sweep_period = (period > 0).then_some(period);
        self.next_sweep = period;
        self
    }

    pub fn injectors(&self) -> &[Injector] {
        &self.injectors
    }

    pub fn registry(&self) -> &PermanentFaultRegistry {
        &self.registry
    }

    pub fn records(&self) -> &[FaultRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<FaultRecord> {
        std::mem::take(&mut self.records)
    }

    /// Fires every event scheduled at or before the current cycle, in engine
    /// order, then runs a sweep if one is due.
    pub fn deliver_due<H: ExecHooks + ?Sized>(
        &mut self,
        state: &mut MachineState,
        mem: &mut MemorySystem,
        hooks: &mut H,
    ) {
        let now = state.cycle;
        for inj in &mut self.injectors {
            while let Some(at) = inj.next_event.filter(|&c| c <= now) {
                let first = self.records.len();
                let t0 = Instant::now();
                inj.fire(at, state, mem, &mut self.registry, &mut self.records);
                let elapsed = t0.elapsed();
                for r in &self.records[first..] {
                    hooks.on_injection(r, elapsed);
                }
            }
        }
        if let Some(period) = self.sweep_period {
            if now >= self.next_sweep {
                sweep(&self.registry, state, mem);
                self.next_sweep = now.saturating_add(period);
            }
        }
    }
}

/// Writes every registered stuck-at pattern back into the physical cell it
/// names.
pub fn sweep(registry: &PermanentFaultRegistry, state: &mut MachineState, mem: &mut MemorySystem) {
    for entry in registry.entries() {
        match entry.location {
            FaultLocation::Register { class, index } => {
                let v = state.reg(class, index as usize);
                state.write_reg(class, index, v, registry);
            }
            FaultLocation::CacheCell {
                cache,
                set,
                way,
                offset,
            } => {
                let cell = Cell::Cache {
                    cache,
                    set,
                    way,
                    offset,
                };
                if let Ok(v) = mem.peek(cell, registry) {
                    let _ = mem.poke(cell, v, registry);
                }
            }
            FaultLocation::Ram { addr } => {
                let cell = Cell::Ram(addr);
                if let Ok(v) = mem.peek(cell, registry) {
                    let _ = mem.poke(cell, v, registry);
                }
            }
        }
    }
}
