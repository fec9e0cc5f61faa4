//! Cycle-counting RV32IM interpreter: architectural state, trap model,
//! the two supported syscalls and the performance counters.

mod hpc;
mod run;

pub use hpc::HpcVector;
pub use run::{run, run_with_hooks, RunEnd, RunTrace};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::injector::registry::PermanentFaultRegistry;
use crate::injector::FaultRecord;
use crate::isa::{self, BranchOp, ImmOp, Instruction, LoadOp, RegOp, StoreOp};
use crate::memsys::{MemFault, MemorySystem};

/// `a7` value of the exit syscall.
pub const SYS_EXIT: u32 = 93;
/// `a7` value of the write syscall.
pub const SYS_WRITE: u32 = 64;

const REG_A0: usize = 10;
const REG_A1: usize = 11;
const REG_A2: usize = 12;
const REG_A7: usize = 17;

const EBADF: i32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegClass {
    Integer,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    IllegalInstruction,
    MisalignedAccess,
    AccessOutOfBounds,
    MisalignedFetch,
    EcallUnknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrapCause {
    pub kind: TrapKind,
    pub pc_at_trap: u32,
    /// Faulting instruction word, faulting address, or the unknown syscall
    /// number, depending on `kind`.
    pub detail: u32,
}

impl TrapCause {
    fn new(kind: TrapKind, pc_at_trap: u32, detail: u32) -> Self {
        Self {
            kind,
            pc_at_trap,
            detail,
        }
    }

    fn from_mem(fault: MemFault, pc: u32) -> Self {
        match fault {
            MemFault::OutOfBounds(a) => Self::new(TrapKind::AccessOutOfBounds, pc, a),
            MemFault::Misaligned(a) => Self::new(TrapKind::MisalignedAccess, pc, a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Running,
    Exited(u8),
    Trapped(TrapCause),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Exited(u8),
    Trapped(TrapCause),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyscallEffect {
    Continue,
    Exit(u8),
    Trap(TrapCause),
}

/// Observation points for tracing and instrumentation. All methods default
/// to no-ops.
pub trait ExecHooks {
    fn on_retire(&mut self, _pc: u32, _inst: &Instruction) {}
    fn on_injection(&mut self, _record: &FaultRecord, _elapsed: Duration) {}
}

pub struct NoHooks;

impl ExecHooks for NoHooks {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineState {
    pub pc: u32,
    xregs: [u32; 32],
    fregs: [u32; 32],
    pub cycle: u64,
    pub hpc: HpcVector,
    pub status: Status,
    /// Bytes written to fd 1.
    pub output: Vec<u8>,
}

impl Default for MachineState {
    fn default() -> Self {
        Self::new(0, 0)
    }
}

impl MachineState {
    pub fn new(pc: u32, sp: u32) -> Self {
        let mut xregs = [0; 32];
        xregs[2] = sp;
        Self {
            pc,
            xregs,
            fregs: [0; 32],
            cycle: 0,
            hpc: HpcVector::default(),
            status: Status::Running,
            output: Vec::new(),
        }
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }

    /// Stored integer register value, without permanent-fault enforcement.
    pub fn x(&self, i: usize) -> u32 {
        self.xregs[i & 31]
    }

    pub fn f(&self, i: usize) -> u32 {
        self.fregs[i & 31]
    }

    pub fn xregs(&self) -> &[u32; 32] {
        &self.xregs
    }

    pub fn fregs(&self) -> &[u32; 32] {
        &self.fregs
    }

    pub fn reg(&self, class: RegClass, i: usize) -> u32 {
        match class {
            RegClass::Integer => self.x(i),
            RegClass::Float => self.f(i),
        }
    }

    #[inline]
    pub fn read_x(&self, i: u8, faults: &PermanentFaultRegistry) -> u32 {
        if i == 0 {
            return 0;
        }
        faults.enforce_reg(RegClass::Integer, i, self.xregs[i as usize & 31])
    }

    #[inline]
    pub fn write_x(&mut self, i: u8, v: u32, faults: &PermanentFaultRegistry) {
        if i != 0 {
            self.xregs[i as usize & 31] = faults.enforce_reg(RegClass::Integer, i, v);
        }
    }

    #[inline]
    pub fn read_f(&self, i: u8, faults: &PermanentFaultRegistry) -> u32 {
        faults.enforce_reg(RegClass::Float, i, self.fregs[i as usize & 31])
    }

    #[inline]
    pub fn write_f(&mut self, i: u8, v: u32, faults: &PermanentFaultRegistry) {
        self.fregs[i as usize & 31] = faults.enforce_reg(RegClass::Float, i, v);
    }

    /// Writes a register with enforcement, as an injector does. Writes to x0
    /// are dropped.
    pub fn write_reg(&mut self, class: RegClass, i: u8, v: u32, faults: &PermanentFaultRegistry) {
        match class {
            RegClass::Integer => self.write_x(i, v, faults),
            RegClass::Float => self.write_f(i, v, faults),
        }
    }

    pub fn read_reg(&self, class: RegClass, i: u8, faults: &PermanentFaultRegistry) -> u32 {
        match class {
            RegClass::Integer => self.read_x(i, faults),
            RegClass::Float => self.read_f(i, faults),
        }
    }
}

pub fn step(state: &mut MachineState, mem: &mut MemorySystem, faults: &PermanentFaultRegistry) -> StepOutcome {
    step_with(state, mem, faults, &mut NoHooks)
}

/// Fetches, executes and retires one instruction. Terminal states are
/// absorbing: stepping an exited or trapped machine changes nothing.
pub fn step_with<H: ExecHooks + ?Sized>(
    state: &mut MachineState,
    mem: &mut MemorySystem,
    faults: &PermanentFaultRegistry,
    hooks: &mut H,
) -> StepOutcome {
    match state.status {
        Status::Running => {}
        Status::Exited(c) => return StepOutcome::Exited(c),
        Status::Trapped(t) => return StepOutcome::Trapped(t),
    }
    let events_before = *mem.events();
    let mut stall = 0u64;
    let result = execute(state, mem, faults, &mut stall, hooks);

    state.cycle += 1 + stall;
    let ev = mem.events();
    let h = &mut state.hpc;
    h.mcycle = state.cycle;
    h.mtime = state.cycle;
    h.icache_misses += ev.l1i_misses - events_before.l1i_misses;
    h.dcache_misses += ev.l1d_misses - events_before.l1d_misses;
    h.dcache_writebacks += ev.l1d_writebacks - events_before.l1d_writebacks;

    match result {
        Ok(Flow::Next(pc)) => {
            state.pc = pc;
            StepOutcome::Continue
        }
        Ok(Flow::Exit(code)) => {
            state.status = Status::Exited(code);
            StepOutcome::Exited(code)
        }
        Err(trap) => {
            state.status = Status::Trapped(trap);
            StepOutcome::Trapped(trap)
        }
    }
}

enum Flow {
    Next(u32),
    Exit(u8),
}

fn predicted_taken(offset: i32) -> bool {
    offset < 0
}

fn execute<H: ExecHooks + ?Sized>(
    state: &mut MachineState,
    mem: &mut MemorySystem,
    faults: &PermanentFaultRegistry,
    stall: &mut u64,
    hooks: &mut H,
) -> Result<Flow, TrapCause> {
    let pc = state.pc;
    if pc % 4 != 0 {
        return Err(TrapCause::new(TrapKind::MisalignedFetch, pc, pc));
    }
    let fetched = mem
        .fetch(pc, faults)
        .map_err(|_| TrapCause::new(TrapKind::AccessOutOfBounds, pc, pc))?;
    *stall += fetched.stall as u64;
    let inst = isa::decode(fetched.value).map_err(|e| TrapCause::new(TrapKind::IllegalInstruction, pc, e.0))?;

    let next = pc.wrapping_add(4);
    let mut flow = Flow::Next(next);
    let mut mispredict = false;

    macro_rules! x {
        ($r:expr) => {
            state.read_x($r, faults)
        };
    }

    match inst {
        Instruction::Lui { rd, imm } => {
            state.write_x(rd, imm << 12, faults);
            state.hpc.int_arith += 1;
        }
        Instruction::Auipc { rd, imm } => {
            state.write_x(rd, pc.wrapping_add(imm << 12), faults);
            state.hpc.int_arith += 1;
        }
        Instruction::Jal { rd, offset } => {
            state.write_x(rd, next, faults);
            flow = Flow::Next(pc.wrapping_add(offset as u32));
            state.hpc.jal += 1;
        }
        Instruction::Jalr { rd, rs1, offset } => {
            let target = x!(rs1).wrapping_add(offset as u32) & !1;
            state.write_x(rd, next, faults);
            flow = Flow::Next(target);
            // No target predictor: every indirect jump mispredicts.
            mispredict = true;
            state.hpc.jalr += 1;
        }
        Instruction::Branch {
            op,
            rs1,
            rs2,
            offset,
        } => {
            let (a, b) = (x!(rs1), x!(rs2));
            let taken = match op {
                BranchOp::Beq => a == b,
                BranchOp::Bne => a != b,
                BranchOp::Blt => (a as i32) < (b as i32),
                BranchOp::Bge => (a as i32) >= (b as i32),
                BranchOp::Bltu => a < b,
                BranchOp::Bgeu => a >= b,
            };
            let target = pc.wrapping_add(offset as u32);
            let actual = if taken { target } else { next };
            // Judged on the fetched path, so a taken branch to pc + 4 is
            // predicted correctly either way.
            let predicted = if predicted_taken(offset) { target } else { next };
            flow = Flow::Next(actual);
            mispredict = actual != predicted;
            state.hpc.cond_branches += 1;
        }
        Instruction::Load {
            op,
            rd,
            rs1,
            offset,
        } => {
            let addr = x!(rs1).wrapping_add(offset as u32);
            let a = mem
                .load(addr, op.width(), faults)
                .map_err(|e| TrapCause::from_mem(e, pc))?;
            *stall += a.stall as u64;
            let v = match op {
                LoadOp::Lb => a.value as u8 as i8 as i32 as u32,
                LoadOp::Lh => a.value as u16 as i16 as i32 as u32,
                LoadOp::Lw | LoadOp::Lbu | LoadOp::Lhu => a.value,
            };
            state.write_x(rd, v, faults);
            state.hpc.int_loads += 1;
        }
        Instruction::Store {
            op,
            rs1,
            rs2,
            offset,
        } => {
            let addr = x!(rs1).wrapping_add(offset as u32);
            let v = x!(rs2);
            let width = op.width();
            let v = match op {
                StoreOp::Sb => v & 0xff,
                StoreOp::Sh => v & 0xffff,
                StoreOp::Sw => v,
            };
            let a = mem
                .store(addr, width, v, faults)
                .map_err(|e| TrapCause::from_mem(e, pc))?;
            *stall += a.stall as u64;
            state.hpc.int_stores += 1;
        }
        Instruction::OpImm { op, rd, rs1, imm } => {
            let a = x!(rs1);
            let i = imm as u32;
            let v = match op {
                ImmOp::Addi => a.wrapping_add(i),
                ImmOp::Slti => ((a as i32) < imm) as u32,
                ImmOp::Sltiu => (a < i) as u32,
                ImmOp::Xori => a ^ i,
                ImmOp::Ori => a | i,
                ImmOp::Andi => a & i,
                ImmOp::Slli => a << (i & 31),
                ImmOp::Srli => a >> (i & 31),
                ImmOp::Srai => ((a as i32) >> (i & 31)) as u32,
            };
            state.write_x(rd, v, faults);
            state.hpc.int_arith += 1;
        }
        Instruction::Op { op, rd, rs1, rs2 } => {
            let (a, b) = (x!(rs1), x!(rs2));
            let v = alu(op, a, b);
            state.write_x(rd, v, faults);
            if op.is_mul() {
                state.hpc.mul += 1;
            } else if op.is_div() {
                state.hpc.div += 1;
            } else {
                state.hpc.int_arith += 1;
            }
        }
        Instruction::Fence { .. } => {
            state.hpc.system += 1;
        }
        Instruction::Ecall => {
            match syscall(state, mem, faults) {
                SyscallEffect::Continue => {}
                SyscallEffect::Exit(code) => flow = Flow::Exit(code),
                SyscallEffect::Trap(t) => return Err(t),
            }
            state.hpc.system += 1;
        }
        Instruction::Flw { rd, rs1, offset } => {
            let addr = x!(rs1).wrapping_add(offset as u32);
            let a = mem.load(addr, 4, faults).map_err(|e| TrapCause::from_mem(e, pc))?;
            *stall += a.stall as u64;
            state.write_f(rd, a.value, faults);
            state.hpc.fp_mem += 1;
        }
        Instruction::Fsw { rs1, rs2, offset } => {
            let addr = x!(rs1).wrapping_add(offset as u32);
            let v = state.read_f(rs2, faults);
            let a = mem
                .store(addr, 4, v, faults)
                .map_err(|e| TrapCause::from_mem(e, pc))?;
            *stall += a.stall as u64;
            state.hpc.fp_mem += 1;
        }
        Instruction::FmvWX { rd, rs1 } => {
            let v = x!(rs1);
            state.write_f(rd, v, faults);
            state.hpc.fp_other += 1;
        }
        Instruction::FmvXW { rd, rs1 } => {
            let v = state.read_f(rs1, faults);
            state.write_x(rd, v, faults);
            state.hpc.fp_other += 1;
        }
    }
    state.hpc.minstret += 1;
    if mispredict {
        state.hpc.mispredicts += 1;
    }
    hooks.on_retire(pc, &inst);
    Ok(flow)
}

fn alu(op: RegOp, a: u32, b: u32) -> u32 {
    let (sa, sb) = (a as i32, b as i32);
    match op {
        RegOp::Add => a.wrapping_add(b),
        RegOp::Sub => a.wrapping_sub(b),
        RegOp::Sll => a << (b & 31),
        RegOp::Slt => (sa < sb) as u32,
        RegOp::Sltu => (a < b) as u32,
        RegOp::Xor => a ^ b,
        RegOp::Srl => a >> (b & 31),
        RegOp::Sra => (sa >> (b & 31)) as u32,
        RegOp::Or => a | b,
        RegOp::And => a & b,
        RegOp::Mul => a.wrapping_mul(b),
        RegOp::Mulh => ((sa as i64 * sb as i64) >> 32) as u32,
        RegOp::Mulhsu => ((sa as i64 * b as u64 as i64) >> 32) as u32,
        RegOp::Mulhu => ((a as u64 * b as u64) >> 32) as u32,
        RegOp::Div => {
            if b == 0 {
                u32::MAX
            } else {
                sa.wrapping_div(sb) as u32
            }
        }
        RegOp::Divu => {
            if b == 0 {
                u32::MAX
            } else {
                a / b
            }
        }
        RegOp::Rem => {
            if b == 0 {
                a
            } else {
                sa.wrapping_rem(sb) as u32
            }
        }
        RegOp::Remu => {
            if b == 0 {
                a
            } else {
                a % b
            }
        }
    }
}

/// Services an `ecall` at the current PC: `exit` (93) and `write` (64) to
/// fd 1. Writes to other descriptors return `-EBADF`.
pub fn syscall(state: &mut MachineState, mem: &MemorySystem, faults: &PermanentFaultRegistry) -> SyscallEffect {
    let pc = state.pc;
    let a7 = state.read_x(REG_A7 as u8, faults);
    match a7 {
        SYS_EXIT => SyscallEffect::Exit((state.read_x(REG_A0 as u8, faults) & 0xff) as u8),
        SYS_WRITE => {
            let fd = state.read_x(REG_A0 as u8, faults);
            let buf = state.read_x(REG_A1 as u8, faults);
            let len = state.read_x(REG_A2 as u8, faults);
            if fd != 1 {
                state.write_x(REG_A0 as u8, (-EBADF) as u32, faults);
                return SyscallEffect::Continue;
            }
            if len > 0 && !mem.in_ram(buf, len) {
                return SyscallEffect::Trap(TrapCause::new(TrapKind::AccessOutOfBounds, pc, buf));
            }
            state.output.reserve(len as usize);
            for i in 0..len {
                match mem.read_coherent(buf + i, faults) {
                    Ok(b) => state.output.push(b),
                    Err(e) => return SyscallEffect::Trap(TrapCause::from_mem(e, pc)),
                }
            }
            state.write_x(REG_A0 as u8, len, faults);
            SyscallEffect::Continue
        }
        other => SyscallEffect::Trap(TrapCause::new(TrapKind::EcallUnknown, pc, other)),
    }
}
