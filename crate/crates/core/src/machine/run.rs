use serde::{Deserialize, Serialize};

use super::{step_with, ExecHooks, MachineState, NoHooks, Status, TrapCause};
use crate::injector::{FaultRecord, InjectorSet};
use crate::memsys::MemorySystem;

/// How a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunEnd {
    Exited { code: u8 },
    Trapped { cause: TrapCause },
    /// The cycle count passed the budget.
    TimedOut { cycle: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    pub end: RunEnd,
    pub state: MachineState,
    pub faults: Vec<FaultRecord>,
}

impl RunTrace {
    pub fn output(&self) -> &[u8] {
        &self.state.output
    }
}

pub fn run(state: MachineState, mem: &mut MemorySystem, injectors: InjectorSet, cycle_budget: u64) -> RunTrace {
    run_with_hooks(state, mem, injectors, cycle_budget, &mut NoHooks)
}

/// Steps until the program exits, traps, or the cycle count exceeds
/// `cycle_budget`. Before each instruction, every injector event due at the
/// current cycle is delivered.
pub fn run_with_hooks<H: ExecHooks + ?Sized>(
    mut state: MachineState,
    mem: &mut MemorySystem,
    mut injectors: InjectorSet,
    cycle_budget: u64,
    hooks: &mut H,
) -> RunTrace {
    let end = loop {
        match state.status {
            Status::Exited(code) => break RunEnd::Exited { code },
            Status::Trapped(cause) => break RunEnd::Trapped { cause },
            Status::Running => {}
        }
        if state.cycle > cycle_budget {
            break RunEnd::TimedOut { cycle: state.cycle };
        }
        injectors.deliver_due(&mut state, mem, hooks);
        step_with(&mut state, mem, injectors.registry(), hooks);
    };
    RunTrace {
        end,
        state,
        faults: injectors.take_records(),
    }
}
