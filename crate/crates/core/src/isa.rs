//! RV32IM instruction forms, plus the single-precision FP load/store/move
//! subset, with a strict decoder and the matching encoder.
//!
//! The decoder only accepts canonical encodings: any word it accepts
//! re-encodes to exactly the same bits. Everything else is reported as
//! illegal, which is how corrupted instruction words turn into traps.

use std::fmt;

use serde::{Deserialize, Serialize};

const OPC_LOAD: u32 = 0x03;
const OPC_LOAD_FP: u32 = 0x07;
const OPC_MISC_MEM: u32 = 0x0f;
const OPC_OP_IMM: u32 = 0x13;
const OPC_AUIPC: u32 = 0x17;
const OPC_STORE: u32 = 0x23;
const OPC_STORE_FP: u32 = 0x27;
const OPC_OP: u32 = 0x33;
const OPC_LUI: u32 = 0x37;
const OPC_OP_FP: u32 = 0x53;
const OPC_BRANCH: u32 = 0x63;
const OPC_JALR: u32 = 0x67;
const OPC_JAL: u32 = 0x6f;
const OPC_SYSTEM: u32 = 0x73;

const ECALL_WORD: u32 = 0x0000_0073;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchOp {
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoadOp {
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
}

impl LoadOp {
    pub fn width(self) -> u32 {
        match self {
            LoadOp::Lb | LoadOp::Lbu => 1,
            LoadOp::Lh | LoadOp::Lhu => 2,
            LoadOp::Lw => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StoreOp {
    Sb,
    Sh,
    Sw,
}

impl StoreOp {
    pub fn width(self) -> u32 {
        match self {
            StoreOp::Sb => 1,
            StoreOp::Sh => 2,
            StoreOp::Sw => 4,
        }
    }
}

/// Register-immediate ALU operations. For the shifts the immediate is the
/// shift amount (0..32).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImmOp {
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
}

/// Register-register operations, including the M extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
}

impl RegOp {
    pub fn is_mul(self) -> bool {
        matches!(self, RegOp::Mul | RegOp::Mulh | RegOp::Mulhsu | RegOp::Mulhu)
    }

    pub fn is_div(self) -> bool {
        matches!(self, RegOp::Div | RegOp::Divu | RegOp::Rem | RegOp::Remu)
    }

    fn funct(self) -> (u32, u32) {
        use RegOp::*;
        // (funct7, funct3)
        match self {
            Add => (0x00, 0),
            Sub => (0x20, 0),
            Sll => (0x00, 1),
            Slt => (0x00, 2),
            Sltu => (0x00, 3),
            Xor => (0x00, 4),
            Srl => (0x00, 5),
            Sra => (0x20, 5),
            Or => (0x00, 6),
            And => (0x00, 7),
            Mul => (0x01, 0),
            Mulh => (0x01, 1),
            Mulhsu => (0x01, 2),
            Mulhu => (0x01, 3),
            Div => (0x01, 4),
            Divu => (0x01, 5),
            Rem => (0x01, 6),
            Remu => (0x01, 7),
        }
    }
}

/// A decoded instruction. Register fields are indices in `0..32`; offsets and
/// immediates are sign-extended values, except `Lui`/`Auipc` whose `imm` is
/// the 20-bit upper immediate (before shifting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Lui { rd: u8, imm: u32 },
    Auipc { rd: u8, imm: u32 },
    Jal { rd: u8, offset: i32 },
    Jalr { rd: u8, rs1: u8, offset: i32 },
    Branch { op: BranchOp, rs1: u8, rs2: u8, offset: i32 },
    Load { op: LoadOp, rd: u8, rs1: u8, offset: i32 },
    Store { op: StoreOp, rs1: u8, rs2: u8, offset: i32 },
    OpImm { op: ImmOp, rd: u8, rs1: u8, imm: i32 },
    Op { op: RegOp, rd: u8, rs1: u8, rs2: u8 },
    /// `pred`/`succ` are the 4-bit IORW sets. Executes as a no-op.
    Fence { pred: u8, succ: u8 },
    Ecall,
    Flw { rd: u8, rs1: u8, offset: i32 },
    Fsw { rs1: u8, rs2: u8, offset: i32 },
    /// `f[rd] = x[rs1]`
    FmvWX { rd: u8, rs1: u8 },
    /// `x[rd] = f[rs1]`
    FmvXW { rd: u8, rs1: u8 },
}

/// The word does not decode to any supported instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal instruction {0:#010x}")]
pub struct IllegalInstruction(pub u32);

#[inline]
fn rd(w: u32) -> u8 {
    ((w >> 7) & 0x1f) as u8
}
#[inline]
fn rs1(w: u32) -> u8 {
    ((w >> 15) & 0x1f) as u8
}
#[inline]
fn rs2(w: u32) -> u8 {
    ((w >> 20) & 0x1f) as u8
}
#[inline]
fn funct3(w: u32) -> u32 {
    (w >> 12) & 0x7
}
#[inline]
fn funct7(w: u32) -> u32 {
    w >> 25
}
#[inline]
fn imm_i(w: u32) -> i32 {
    (w as i32) >> 20
}
#[inline]
fn imm_s(w: u32) -> i32 {
    (((w & 0xfe00_0000) as i32) >> 20) | ((w >> 7) & 0x1f) as i32
}
#[inline]
fn imm_b(w: u32) -> i32 {
    (((w & 0x8000_0000) as i32) >> 19)
        | (((w >> 7) & 0x1) << 11) as i32
        | (((w >> 25) & 0x3f) << 5) as i32
        | (((w >> 8) & 0xf) << 1) as i32
}
#[inline]
fn imm_j(w: u32) -> i32 {
    (((w & 0x8000_0000) as i32) >> 11)
        | (w & 0x000f_f000) as i32
        | (((w >> 20) & 0x1) << 11) as i32
        | (((w >> 21) & 0x3ff) << 1) as i32
}

pub fn decode(w: u32) -> Result<Instruction, IllegalInstruction> {
    use Instruction::*;
    let illegal = Err(IllegalInstruction(w));
    let inst = match w & 0x7f {
        OPC_LUI => Lui {
            rd: rd(w),
            imm: w >> 12,
        },
        OPC_AUIPC => Auipc {
            rd: rd(w),
            imm: w >> 12,
        },
        OPC_JAL => Jal {
            rd: rd(w),
            offset: imm_j(w),
        },
        OPC_JALR => {
            if funct3(w) != 0 {
                return illegal;
            }
            Jalr {
                rd: rd(w),
                rs1: rs1(w),
                offset: imm_i(w),
            }
        }
        OPC_BRANCH => {
            let op = match funct3(w) {
                0 => BranchOp::Beq,
                1 => BranchOp::Bne,
                4 => BranchOp::Blt,
                5 => BranchOp::Bge,
                6 => BranchOp::Bltu,
                7 => BranchOp::Bgeu,
                _ => return illegal,
            };
            Branch {
                op,
                rs1: rs1(w),
                rs2: rs2(w),
                offset: imm_b(w),
            }
        }
        OPC_LOAD => {
            let op = match funct3(w) {
                0 => LoadOp::Lb,
                1 => LoadOp::Lh,
                2 => LoadOp::Lw,
                4 => LoadOp::Lbu,
                5 => LoadOp::Lhu,
                _ => return illegal,
            };
            Load {
                op,
                rd: rd(w),
                rs1: rs1(w),
                offset: imm_i(w),
            }
        }
        OPC_STORE => {
            let op = match funct3(w) {
                0 => StoreOp::Sb,
                1 => StoreOp::Sh,
                2 => StoreOp::Sw,
                _ => return illegal,
            };
            Store {
                op,
                rs1: rs1(w),
                rs2: rs2(w),
                offset: imm_s(w),
            }
        }
        OPC_OP_IMM => {
            let (op, imm) = match funct3(w) {
                0 => (ImmOp::Addi, imm_i(w)),
                2 => (ImmOp::Slti, imm_i(w)),
                3 => (ImmOp::Sltiu, imm_i(w)),
                4 => (ImmOp::Xori, imm_i(w)),
                6 => (ImmOp::Ori, imm_i(w)),
                7 => (ImmOp::Andi, imm_i(w)),
                1 if funct7(w) == 0 => (ImmOp::Slli, rs2(w) as i32),
                5 if funct7(w) == 0 => (ImmOp::Srli, rs2(w) as i32),
                5 if funct7(w) == 0x20 => (ImmOp::Srai, rs2(w) as i32),
                _ => return illegal,
            };
            OpImm {
                op,
                rd: rd(w),
                rs1: rs1(w),
                imm,
            }
        }
        OPC_OP => {
            use RegOp::*;
            let op = match (funct7(w), funct3(w)) {
                (0x00, 0) => Add,
                (0x20, 0) => Sub,
                (0x00, 1) => Sll,
                (0x00, 2) => Slt,
                (0x00, 3) => Sltu,
                (0x00, 4) => Xor,
                (0x00, 5) => Srl,
                (0x20, 5) => Sra,
                (0x00, 6) => Or,
                (0x00, 7) => And,
                (0x01, 0) => Mul,
                (0x01, 1) => Mulh,
                (0x01, 2) => Mulhsu,
                (0x01, 3) => Mulhu,
                (0x01, 4) => Div,
                (0x01, 5) => Divu,
                (0x01, 6) => Rem,
                (0x01, 7) => Remu,
                _ => return illegal,
            };
            Op {
                op,
                rd: rd(w),
                rs1: rs1(w),
                rs2: rs2(w),
            }
        }
        OPC_MISC_MEM => {
            // Plain FENCE only: fm = 0, rs1 = rd = 0. FENCE.I and FENCE.TSO
            // are not part of the supported set.
            if funct3(w) != 0 || rd(w) != 0 || rs1(w) != 0 || (w >> 28) != 0 {
                return illegal;
            }
            Fence {
                pred: ((w >> 24) & 0xf) as u8,
                succ: ((w >> 20) & 0xf) as u8,
            }
        }
        OPC_SYSTEM => {
            if w != ECALL_WORD {
                return illegal;
            }
            Ecall
        }
        OPC_LOAD_FP => {
            if funct3(w) != 2 {
                return illegal;
            }
            Flw {
                rd: rd(w),
                rs1: rs1(w),
                offset: imm_i(w),
            }
        }
        OPC_STORE_FP => {
            if funct3(w) != 2 {
                return illegal;
            }
            Fsw {
                rs1: rs1(w),
                rs2: rs2(w),
                offset: imm_s(w),
            }
        }
        OPC_OP_FP => {
            if funct3(w) != 0 || rs2(w) != 0 {
                return illegal;
            }
            match funct7(w) {
                0x70 => FmvXW {
                    rd: rd(w),
                    rs1: rs1(w),
                },
                0x78 => FmvWX {
                    rd: rd(w),
                    rs1: rs1(w),
                },
                _ => return illegal,
            }
        }
        _ => return illegal,
    };
    Ok(inst)
}

fn enc_r(opcode: u32, rd: u8, f3: u32, rs1: u8, rs2: u8, f7: u32) -> u32 {
    (f7 << 25)
        | ((rs2 as u32 & 0x1f) << 20)
        | ((rs1 as u32 & 0x1f) << 15)
        | (f3 << 12)
        | ((rd as u32 & 0x1f) << 7)
        | opcode
}

fn enc_i(opcode: u32, rd: u8, f3: u32, rs1: u8, imm: i32) -> u32 {
    ((imm as u32 & 0xfff) << 20)
        | ((rs1 as u32 & 0x1f) << 15)
        | (f3 << 12)
        | ((rd as u32 & 0x1f) << 7)
        | opcode
}

fn enc_s(opcode: u32, f3: u32, rs1: u8, rs2: u8, imm: i32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7f) << 25)
        | ((rs2 as u32 & 0x1f) << 20)
        | ((rs1 as u32 & 0x1f) << 15)
        | (f3 << 12)
        | ((imm & 0x1f) << 7)
        | opcode
}

fn enc_b(f3: u32, rs1: u8, rs2: u8, offset: i32) -> u32 {
    let imm = offset as u32;
    (((imm >> 12) & 0x1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | ((rs2 as u32 & 0x1f) << 20)
        | ((rs1 as u32 & 0x1f) << 15)
        | (f3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 0x1) << 7)
        | OPC_BRANCH
}

fn enc_j(rd: u8, offset: i32) -> u32 {
    let imm = offset as u32;
    (((imm >> 20) & 0x1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 0x1) << 20)
        | (((imm >> 12) & 0xff) << 12)
        | ((rd as u32 & 0x1f) << 7)
        | OPC_JAL
}

/// Encodes `inst`. Fields outside their encodable range are truncated;
/// callers that build instructions from untrusted values (the assembler)
/// range-check first.
pub fn encode(inst: &Instruction) -> u32 {
    use Instruction::*;
    match *inst {
        Lui { rd, imm } => ((imm & 0xfffff) << 12) | ((rd as u32 & 0x1f) << 7) | OPC_LUI,
        Auipc { rd, imm } => ((imm & 0xfffff) << 12) | ((rd as u32 & 0x1f) << 7) | OPC_AUIPC,
        Jal { rd, offset } => enc_j(rd, offset),
        Jalr { rd, rs1, offset } => enc_i(OPC_JALR, rd, 0, rs1, offset),
        Branch {
            op,
            rs1,
            rs2,
            offset,
        } => {
            let f3 = match op {
                BranchOp::Beq => 0,
                BranchOp::Bne => 1,
                BranchOp::Blt => 4,
                BranchOp::Bge => 5,
                BranchOp::Bltu => 6,
                BranchOp::Bgeu => 7,
            };
            enc_b(f3, rs1, rs2, offset)
        }
        Load {
            op,
            rd,
            rs1,
            offset,
        } => {
            let f3 = match op {
                LoadOp::Lb => 0,
                LoadOp::Lh => 1,
                LoadOp::Lw => 2,
                LoadOp::Lbu => 4,
                LoadOp::Lhu => 5,
            };
            enc_i(OPC_LOAD, rd, f3, rs1, offset)
        }
        Store {
            op,
            rs1,
            rs2,
            offset,
        } => {
            let f3 = match op {
                StoreOp::Sb => 0,
                StoreOp::Sh => 1,
                StoreOp::Sw => 2,
            };
            enc_s(OPC_STORE, f3, rs1, rs2, offset)
        }
        OpImm { op, rd, rs1, imm } => match op {
            ImmOp::Addi => enc_i(OPC_OP_IMM, rd, 0, rs1, imm),
            ImmOp::Slti => enc_i(OPC_OP_IMM, rd, 2, rs1, imm),
            ImmOp::Sltiu => enc_i(OPC_OP_IMM, rd, 3, rs1, imm),
            ImmOp::Xori => enc_i(OPC_OP_IMM, rd, 4, rs1, imm),
            ImmOp::Ori => enc_i(OPC_OP_IMM, rd, 6, rs1, imm),
            ImmOp::Andi => enc_i(OPC_OP_IMM, rd, 7, rs1, imm),
            ImmOp::Slli => enc_r(OPC_OP_IMM, rd, 1, rs1, (imm & 0x1f) as u8, 0),
            ImmOp::Srli => enc_r(OPC_OP_IMM, rd, 5, rs1, (imm & 0x1f) as u8, 0),
            ImmOp::Srai => enc_r(OPC_OP_IMM, rd, 5, rs1, (imm & 0x1f) as u8, 0x20),
        },
        Op { op, rd, rs1, rs2 } => {
            let (f7, f3) = op.funct();
            enc_r(OPC_OP, rd, f3, rs1, rs2, f7)
        }
        Fence { pred, succ } => {
            ((pred as u32 & 0xf) << 24) | ((succ as u32 & 0xf) << 20) | OPC_MISC_MEM
        }
        Ecall => ECALL_WORD,
        Flw { rd, rs1, offset } => enc_i(OPC_LOAD_FP, rd, 2, rs1, offset),
        Fsw { rs1, rs2, offset } => enc_s(OPC_STORE_FP, 2, rs1, rs2, offset),
        FmvXW { rd, rs1 } => enc_r(OPC_OP_FP, rd, 0, rs1, 0, 0x70),
        FmvWX { rd, rs1 } => enc_r(OPC_OP_FP, rd, 0, rs1, 0, 0x78),
    }
}

fn fence_set(bits: u8) -> String {
    let mut s = String::new();
    for (bit, c) in [(8, 'i'), (4, 'o'), (2, 'r'), (1, 'w')] {
        if bits & bit != 0 {
            s.push(c);
        }
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}

/// Disassembly in the syntax the bundled assembler accepts. Branch and jump
/// targets are printed as PC-relative byte offsets.
impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        match *self {
            Lui { rd, imm } => write!(f, "lui x{rd}, {imm:#x}"),
            Auipc { rd, imm } => write!(f, "auipc x{rd}, {imm:#x}"),
            Jal { rd, offset } => write!(f, "jal x{rd}, {offset}"),
            Jalr { rd, rs1, offset } => write!(f, "jalr x{rd}, {offset}(x{rs1})"),
            Branch {
                op,
                rs1,
                rs2,
                offset,
            } => {
                let m = format!("{op:?}").to_lowercase();
                write!(f, "{m} x{rs1}, x{rs2}, {offset}")
            }
            Load {
                op,
                rd,
                rs1,
                offset,
            } => {
                let m = format!("{op:?}").to_lowercase();
                write!(f, "{m} x{rd}, {offset}(x{rs1})")
            }
            Store {
                op,
                rs1,
                rs2,
                offset,
            } => {
                let m = format!("{op:?}").to_lowercase();
                write!(f, "{m} x{rs2}, {offset}(x{rs1})")
            }
            OpImm { op, rd, rs1, imm } => {
                let m = format!("{op:?}").to_lowercase();
                write!(f, "{m} x{rd}, x{rs1}, {imm}")
            }
            Op { op, rd, rs1, rs2 } => {
                let m = format!("{op:?}").to_lowercase();
                write!(f, "{m} x{rd}, x{rs1}, x{rs2}")
            }
            Fence { pred, succ } => write!(f, "fence {}, {}", fence_set(pred), fence_set(succ)),
            Ecall => f.write_str("ecall"),
            Flw { rd, rs1, offset } => write!(f, "flw f{rd}, {offset}(x{rs1})"),
            Fsw { rs1, rs2, offset } => write!(f, "fsw f{rs2}, {offset}(x{rs1})"),
            FmvXW { rd, rs1 } => write!(f, "fmv.x.w x{rd}, f{rs1}"),
            FmvWX { rd, rs1 } => write!(f, "fmv.w.x f{rd}, x{rs1}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nop_word() {
        assert_eq!(
            decode(0x0000_0013),
            Ok(Instruction::OpImm {
                op: ImmOp::Addi,
                rd: 0,
                rs1: 0,
                imm: 0
            })
        );
        assert_eq!(decode(0x0000_0013).unwrap().to_string(), "addi x0, x0, 0");
    }

    #[test]
    fn zero_word_is_illegal() {
        assert_eq!(decode(0), Err(IllegalInstruction(0)));
        assert!(decode(0xffff_ffff).is_err());
    }

    #[test]
    fn mul_golden_vector() {
        let i = decode(0x02A3_0333).unwrap();
        assert_eq!(
            i,
            Instruction::Op {
                op: RegOp::Mul,
                rd: 6,
                rs1: 6,
                rs2: 10
            }
        );
        assert_eq!(i.to_string(), "mul x6, x6, x10");
    }

    #[test]
    fn reference_encodings() {
        // Hand-assembled against the base ISA tables.
        let cases: &[(u32, &str)] = &[
            (0x0000_006f, "jal x0, 0"),
            (0x0000_8067, "jalr x0, 0(x1)"),
            (0xfe20_8ee3, "beq x1, x2, -4"),
            (0x00c5_2283, "lw x5, 12(x10)"),
            (0xfe55_2e23, "sw x5, -4(x10)"),
            (0x4010_d093, "srai x1, x1, 1"),
            (0x4020_80b3, "sub x1, x1, x2"),
            (0x0000_0073, "ecall"),
            (0x0ff0_000f, "fence iorw, iorw"),
            (0x1234_5537, "lui x10, 0x12345"),
            (0x0005_2007, "flw f0, 0(x10)"),
            (0xe000_0553, "fmv.x.w x10, f0"),
            (0xf005_0053, "fmv.w.x f0, x10"),
        ];
        for &(word, text) in cases {
            let i = decode(word).unwrap_or_else(|e| panic!("{text}: {e}"));
            assert_eq!(i.to_string(), text);
            assert_eq!(encode(&i), word, "{text}");
        }
    }

    #[test]
    fn rejects_unsupported_system_and_fence_forms() {
        assert!(decode(0x0010_0073).is_err()); // ebreak
        assert!(decode(0x0000_100f).is_err()); // fence.i
        assert!(decode(0x8330_000f).is_err()); // fence.tso
        assert!(decode(0x3000_2073).is_err()); // csrrs
    }

    fn reg() -> impl Strategy<Value = u8> {
        0u8..32
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        use Instruction::*;
        let imm12 = -2048i32..2048;
        prop_oneof![
            (reg(), 0u32..0x10_0000).prop_map(|(rd, imm)| Lui { rd, imm }),
            (reg(), 0u32..0x10_0000).prop_map(|(rd, imm)| Auipc { rd, imm }),
            (reg(), -(1i32 << 19)..(1 << 19)).prop_map(|(rd, o)| Jal { rd, offset: o * 2 }),
            (reg(), reg(), imm12.clone()).prop_map(|(rd, rs1, offset)| Jalr { rd, rs1, offset }),
            (
                prop::sample::select(vec![
                    BranchOp::Beq,
                    BranchOp::Bne,
                    BranchOp::Blt,
                    BranchOp::Bge,
                    BranchOp::Bltu,
                    BranchOp::Bgeu
                ]),
                reg(),
                reg(),
                -2048i32..2048
            )
                .prop_map(|(op, rs1, rs2, o)| Branch {
                    op,
                    rs1,
                    rs2,
                    offset: o * 2
                }),
            (
                prop::sample::select(vec![
                    LoadOp::Lb,
                    LoadOp::Lh,
                    LoadOp::Lw,
                    LoadOp::Lbu,
                    LoadOp::Lhu
                ]),
                reg(),
                reg(),
                imm12.clone()
            )
                .prop_map(|(op, rd, rs1, offset)| Load {
                    op,
                    rd,
                    rs1,
                    offset
                }),
            (
                prop::sample::select(vec![StoreOp::Sb, StoreOp::Sh, StoreOp::Sw]),
                reg(),
                reg(),
                imm12.clone()
            )
                .prop_map(|(op, rs1, rs2, offset)| Store {
                    op,
                    rs1,
                    rs2,
                    offset
                }),
            (
                prop::sample::select(vec![
                    ImmOp::Addi,
                    ImmOp::Slti,
                    ImmOp::Sltiu,
                    ImmOp::Xori,
                    ImmOp::Ori,
                    ImmOp::Andi
                ]),
                reg(),
                reg(),
                imm12.clone()
            )
                .prop_map(|(op, rd, rs1, imm)| OpImm { op, rd, rs1, imm }),
            (
                prop::sample::select(vec![ImmOp::Slli, ImmOp::Srli, ImmOp::Srai]),
                reg(),
                reg(),
                0i32..32
            )
                .prop_map(|(op, rd, rs1, imm)| OpImm { op, rd, rs1, imm }),
            (
                prop::sample::select(vec![
                    RegOp::Add,
                    RegOp::Sub,
                    RegOp::Sll,
                    RegOp::Slt,
                    RegOp::Sltu,
                    RegOp::Xor,
                    RegOp::Srl,
                    RegOp::Sra,
                    RegOp::Or,
                    RegOp::And,
                    RegOp::Mul,
                    RegOp::Mulh,
                    RegOp::Mulhsu,
                    RegOp::Mulhu,
                    RegOp::Div,
                    RegOp::Divu,
                    RegOp::Rem,
                    RegOp::Remu
                ]),
                reg(),
                reg(),
                reg()
            )
                .prop_map(|(op, rd, rs1, rs2)| Op { op, rd, rs1, rs2 }),
            (0u8..16, 0u8..16).prop_map(|(pred, succ)| Fence { pred, succ }),
            Just(Ecall),
            (reg(), reg(), imm12.clone()).prop_map(|(rd, rs1, offset)| Flw { rd, rs1, offset }),
            (reg(), reg(), imm12).prop_map(|(rs1, rs2, offset)| Fsw { rs1, rs2, offset }),
            (reg(), reg()).prop_map(|(rd, rs1)| FmvWX { rd, rs1 }),
            (reg(), reg()).prop_map(|(rd, rs1)| FmvXW { rd, rs1 }),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(inst in arb_instruction()) {
            prop_assert_eq!(decode(encode(&inst)), Ok(inst));
        }

        #[test]
        fn accepted_words_reencode_exactly(word in any::<u32>()) {
            if let Ok(inst) = decode(word) {
                prop_assert_eq!(encode(&inst), word);
            }
        }
    }
}
