//! Two-pass assembler for the supported instruction subset.
//!
//! Syntax: one statement per line, `#` starts a comment, labels end with
//! `:` and may share a line with a statement. Registers are written as
//! `xN`/`fN` or by ABI name. Operands of branches and jumps are labels or
//! numeric PC-relative byte offsets; immediates may be `symbol`,
//! `symbol+N`, `symbol-N` or plain numbers (decimal, `0x`, `0b`, or a
//! character literal such as `'a'`).
//!
//! Directives: `.org ADDR` (starts a new segment), `.word`, `.half`,
//! `.byte`, `.ascii "..."`, `.asciz "..."`, `.space N`, `.align K` (pads to
//! a `2^K` boundary) and `.equ NAME, VALUE`.
//!
//! Pseudo-instructions: `nop`, `li`, `la`, `mv`, `not`, `neg`, `seqz`,
//! `snez`, `sltz`, `sgtz`, `j`, `jr`, `ret`, `call`, `beqz`, `bnez`,
//! `blez`, `bgez`, `bltz`, `bgtz`, `bgt`, `ble`, `bgtu`, `bleu`, plus the
//! one-operand forms of `jal` and `jalr` and the operand-less `fence`.

mod image;

pub use image::{load, ImageError, LoadError, ProgramImage, Segment};

use std::collections::BTreeMap;
use std::fmt;

use crate::isa::{encode, BranchOp, ImmOp, Instruction, LoadOp, RegOp, StoreOp};
use crate::memsys::RAM_BASE;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("immediate {value} out of range [{min}, {max}]")]
    ImmediateOutOfRange { value: i64, min: i64, max: i64 },
    #[error("`{mnemonic}` takes {expected} operand(s), found {found}")]
    OperandCount {
        mnemonic: String,
        expected: usize,
        found: usize,
    },
    #[error("bad operand `{0}`")]
    BadOperand(String),
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("branch or jump offset {0} is not a multiple of 2")]
    OddOffset(i64),
    #[error("instruction at {0:#010x} is not word aligned")]
    Misaligned(u32),
    #[error("address {0:#x} outside the 32-bit address space")]
    AddressOverflow(u64),
    #[error("{0}")]
    Image(#[from] ImageError),
}

/// Assembly error with the 1-based source line it was found on (0 when the
/// error concerns the whole image).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "line {}: {}", self.line, self.kind)
        }
    }
}

impl std::error::Error for AsmError {}

type Res<T> = Result<T, AsmErrorKind>;

pub fn assemble(source: &str) -> Result<ProgramImage, AsmError> {
    let lines = parse_lines(source)?;
    let (symbols, placed) = pass_one(&lines)?;
    let mut segments: Vec<Segment> = Vec::new();
    for item in &placed {
        let bytes = emit(item, &symbols).map_err(|kind| AsmError { line: item.line, kind })?;
        match segments.last_mut() {
            Some(seg) if seg.base as u64 + seg.data.len() as u64 == item.addr as u64 => {
                seg.data.extend_from_slice(&bytes)
            }
            _ => segments.push(Segment {
                base: item.addr,
                data: bytes,
            }),
        }
    }
    segments.retain(|s| !s.data.is_empty());
    let entry = symbols
        .get("_start")
        .copied()
        .or_else(|| segments.first().map(|s| s.base))
        .unwrap_or(RAM_BASE);
    ProgramImage::new(entry, segments, symbols).map_err(|e| AsmError {
        line: 0,
        kind: e.into(),
    })
}

#[derive(Debug, Clone)]
enum Stmt {
    Directive { name: String, args: Vec<String> },
    Inst { mnemonic: String, ops: Vec<String> },
}

#[derive(Debug)]
struct Line {
    no: usize,
    labels: Vec<String>,
    stmt: Option<Stmt>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut in_char = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_str || in_char => escaped = true,
            '"' if !in_char => in_str = !in_str,
            '\'' if !in_str => in_char = !in_char,
            '#' if !in_str && !in_char => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Splits on commas outside string and character literals.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_str = false;
    let mut in_char = false;
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            escaped = false;
            cur.push(c);
            continue;
        }
        match c {
            '\\' if in_str || in_char => {
                escaped = true;
                cur.push(c);
            }
            '"' if !in_char => {
                in_str = !in_str;
                cur.push(c);
            }
            '\'' if !in_str => {
                in_char = !in_char;
                cur.push(c);
            }
            ',' if !in_str && !in_char => out.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    let last = cur.trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last.to_string());
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_lines(source: &str) -> Result<Vec<Line>, AsmError> {
    let mut lines = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let no = i + 1;
        let mut rest = strip_comment(raw).trim();
        let mut labels = Vec::new();
        while let Some(colon) = rest.find(':') {
            let candidate = rest[..colon].trim();
            if !is_ident(candidate) {
                break;
            }
            labels.push(candidate.to_string());
            rest = rest[colon + 1..].trim();
        }
        let stmt = if rest.is_empty() {
            None
        } else {
            let (head, tail) = match rest.find(char::is_whitespace) {
                Some(p) => (&rest[..p], rest[p..].trim()),
                None => (rest, ""),
            };
            let head = head.to_ascii_lowercase();
            let args = split_operands(tail);
            Some(if head.starts_with('.') {
                Stmt::Directive { name: head, args }
            } else {
                Stmt::Inst {
                    mnemonic: head,
                    ops: args,
                }
            })
        };
        lines.push(Line { no, labels, stmt });
    }
    Ok(lines)
}

/// A statement placed at its final address.
#[derive(Debug)]
struct Placed {
    line: usize,
    addr: u32,
    size: u32,
    stmt: Stmt,
}

fn pass_one(lines: &[Line]) -> Result<(BTreeMap<String, u32>, Vec<Placed>), AsmError> {
    let mut symbols = BTreeMap::new();
    let mut placed = Vec::new();
    let mut pc: u64 = RAM_BASE as u64;
    for line in lines {
        let err = |kind| AsmError { line: line.no, kind };
        if pc > u32::MAX as u64 + 1 {
            return Err(err(AsmErrorKind::AddressOverflow(pc)));
        }
        for label in &line.labels {
            if symbols.insert(label.clone(), pc as u32).is_some() {
                return Err(err(AsmErrorKind::DuplicateLabel(label.clone())));
            }
        }
        let Some(stmt) = &line.stmt else { continue };
        let size: u64 = match stmt {
            Stmt::Directive { name, args } => match name.as_str() {
                ".org" => {
                    expect_ops(name, args, 1).map_err(err)?;
                    let v = eval(&args[0], &symbols).map_err(err)?;
                    pc = address(v).map_err(err)? as u64;
                    continue;
                }
                ".equ" | ".set" => {
                    expect_ops(name, args, 2).map_err(err)?;
                    if !is_ident(&args[0]) {
                        return Err(err(AsmErrorKind::BadOperand(args[0].clone())));
                    }
                    let v = eval(&args[1], &symbols).map_err(err)?;
                    if symbols.insert(args[0].clone(), v as u32).is_some() {
                        return Err(err(AsmErrorKind::DuplicateLabel(args[0].clone())));
                    }
                    continue;
                }
                ".align" => {
                    expect_ops(name, args, 1).map_err(err)?;
                    let k = eval(&args[0], &symbols).map_err(err)?;
                    let k = check_range(k, 0, 12).map_err(err)?;
                    let a = 1u64 << k;
                    pc.next_multiple_of(a) - pc
                }
                ".space" | ".zero" => {
                    expect_ops(name, args, 1).map_err(err)?;
                    let n = eval(&args[0], &symbols).map_err(err)?;
                    check_range(n, 0, u32::MAX as i64).map_err(err)? as u64
                }
                ".word" => 4 * args.len() as u64,
                ".half" => 2 * args.len() as u64,
                ".byte" => args.len() as u64,
                ".ascii" | ".asciz" => {
                    let mut n = 0;
                    for a in args {
                        n += parse_string(a).map_err(err)?.len() as u64;
                        if name == ".asciz" {
                            n += 1;
                        }
                    }
                    n
                }
                _ => return Err(err(AsmErrorKind::UnknownDirective(name.clone()))),
            },
            Stmt::Inst { mnemonic, ops } => {
                if pc % 4 != 0 {
                    return Err(err(AsmErrorKind::Misaligned(pc as u32)));
                }
                4 * inst_words(mnemonic, ops).map_err(err)? as u64
            }
        };
        if pc + size > u32::MAX as u64 + 1 {
            return Err(err(AsmErrorKind::AddressOverflow(pc + size)));
        }
        placed.push(Placed {
            line: line.no,
            addr: pc as u32,
            size: size as u32,
            stmt: stmt.clone(),
        });
        pc += size;
    }
    Ok((symbols, placed))
}

fn expect_ops(mnemonic: &str, ops: &[String], n: usize) -> Res<()> {
    if ops.len() != n {
        return Err(AsmErrorKind::OperandCount {
            mnemonic: mnemonic.to_string(),
            expected: n,
            found: ops.len(),
        });
    }
    Ok(())
}

fn check_range(v: i64, min: i64, max: i64) -> Res<i64> {
    if v < min || v > max {
        return Err(AsmErrorKind::ImmediateOutOfRange { value: v, min, max });
    }
    Ok(v)
}

fn address(v: i64) -> Res<u32> {
    if !(0..=u32::MAX as i64).contains(&v) {
        return Err(AsmErrorKind::AddressOverflow(v as u64));
    }
    Ok(v as u32)
}

/// Number of words `li` expands to. Decided from the operand alone so that
/// both passes agree.
fn li_words(value: &str) -> u32 {
    match eval(value, &BTreeMap::new()) {
        Ok(v) => {
            let v = v as i32;
            if (-2048..2048).contains(&v) || v & 0xfff == 0 {
                1
            } else {
                2
            }
        }
        // Symbolic: always lui + addi.
        Err(_) => 2,
    }
}

fn inst_words(mnemonic: &str, ops: &[String]) -> Res<u32> {
    Ok(match mnemonic {
        "li" => {
            expect_ops(mnemonic, ops, 2)?;
            li_words(&ops[1])
        }
        "la" => 2,
        _ if is_known_mnemonic(mnemonic) => 1,
        _ => return Err(AsmErrorKind::UnknownMnemonic(mnemonic.to_string())),
    })
}

fn is_known_mnemonic(m: &str) -> bool {
    branch_op(m).is_some()
        || load_op(m).is_some()
        || store_op(m).is_some()
        || imm_op(m).is_some()
        || reg_op(m).is_some()
        || matches!(
            m,
            "lui"
                | "auipc"
                | "jal"
                | "jalr"
                | "fence"
                | "ecall"
                | "flw"
                | "fsw"
                | "fmv.w.x"
                | "fmv.x.w"
                | "nop"
                | "mv"
                | "not"
                | "neg"
                | "seqz"
                | "snez"
                | "sltz"
                | "sgtz"
                | "j"
                | "jr"
                | "ret"
                | "call"
                | "beqz"
                | "bnez"
                | "blez"
                | "bgez"
                | "bltz"
                | "bgtz"
                | "bgt"
                | "ble"
                | "bgtu"
                | "bleu"
        )
}

fn branch_op(m: &str) -> Option<BranchOp> {
    Some(match m {
        "beq" => BranchOp::Beq,
        "bne" => BranchOp::Bne,
        "blt" => BranchOp::Blt,
        "bge" => BranchOp::Bge,
        "bltu" => BranchOp::Bltu,
        "bgeu" => BranchOp::Bgeu,
        _ => return None,
    })
}

fn load_op(m: &str) -> Option<LoadOp> {
    Some(match m {
        "lb" => LoadOp::Lb,
        "lh" => LoadOp::Lh,
        "lw" => LoadOp::Lw,
        "lbu" => LoadOp::Lbu,
        "lhu" => LoadOp::Lhu,
        _ => return None,
    })
}

fn store_op(m: &str) -> Option<StoreOp> {
    Some(match m {
        "sb" => StoreOp::Sb,
        "sh" => StoreOp::Sh,
        "sw" => StoreOp::Sw,
        _ => return None,
    })
}

fn imm_op(m: &str) -> Option<ImmOp> {
    Some(match m {
        "addi" => ImmOp::Addi,
        "slti" => ImmOp::Slti,
        "sltiu" => ImmOp::Sltiu,
        "xori" => ImmOp::Xori,
        "ori" => ImmOp::Ori,
        "andi" => ImmOp::Andi,
        "slli" => ImmOp::Slli,
        "srli" => ImmOp::Srli,
        "srai" => ImmOp::Srai,
        _ => return None,
    })
}

fn reg_op(m: &str) -> Option<RegOp> {
    use RegOp::*;
    Some(match m {
        "add" => Add,
        "sub" => Sub,
        "sll" => Sll,
        "slt" => Slt,
        "sltu" => Sltu,
        "xor" => Xor,
        "srl" => Srl,
        "sra" => Sra,
        "or" => Or,
        "and" => And,
        "mul" => Mul,
        "mulh" => Mulh,
        "mulhsu" => Mulhsu,
        "mulhu" => Mulhu,
        "div" => Div,
        "divu" => Divu,
        "rem" => Rem,
        "remu" => Remu,
        _ => return None,
    })
}

const ABI_X: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2",
    "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

const ABI_F: [&str; 32] = [
    "ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1", "fa0", "fa1", "fa2", "fa3", "fa4", "fa5", "fa6",
    "fa7", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9", "fs10", "fs11", "ft8", "ft9", "ft10", "ft11",
];

fn numbered(s: &str, prefix: char) -> Option<u8> {
    let n = s.strip_prefix(prefix)?;
    if n.is_empty() || (n.len() > 1 && n.starts_with('0')) {
        return None;
    }
    n.parse::<u8>().ok().filter(|&i| i < 32)
}

fn xreg(s: &str) -> Res<u8> {
    let s = s.trim().to_ascii_lowercase();
    if s == "fp" {
        return Ok(8);
    }
    numbered(&s, 'x')
        .or_else(|| ABI_X.iter().position(|&n| n == s).map(|i| i as u8))
        .ok_or(AsmErrorKind::BadRegister(s))
}

fn freg(s: &str) -> Res<u8> {
    let s = s.trim().to_ascii_lowercase();
    numbered(&s, 'f')
        .or_else(|| ABI_F.iter().position(|&n| n == s).map(|i| i as u8))
        .ok_or(AsmErrorKind::BadRegister(s))
}

fn parse_number(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b.trim_start()),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else if body.starts_with('\'') {
        let inner = body.strip_prefix('\'')?.strip_suffix('\'')?;
        let bytes = unescape(inner)?;
        if bytes.len() != 1 {
            return None;
        }
        bytes[0] as i64
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit() || b == b'_') {
        body.replace('_', "").parse().ok()?
    } else {
        return None;
    };
    if v > u32::MAX as i64 {
        return None;
    }
    Some(if neg { -v } else { v })
}

/// Evaluates `term (('+'|'-') term)*` where a term is a number or symbol.
fn eval(expr: &str, symbols: &BTreeMap<String, u32>) -> Res<i64> {
    let expr = expr.trim();
    if let Some(v) = parse_number(expr) {
        return Ok(v);
    }
    let mut total = 0i64;
    let mut sign = 1i64;
    let mut start = 0;
    let bytes = expr.as_bytes();
    let mut terms = Vec::new();
    for (i, &b) in bytes.iter().enumerate() {
        if (b == b'+' || b == b'-') && i > 0 {
            terms.push((sign, &expr[start..i]));
            sign = if b == b'+' { 1 } else { -1 };
            start = i + 1;
        }
    }
    terms.push((sign, &expr[start..]));
    for (sign, term) in terms {
        let term = term.trim();
        let v = if let Some(n) = parse_number(term) {
            n
        } else if is_ident(term) {
            *symbols
                .get(term)
                .ok_or_else(|| AsmErrorKind::UndefinedLabel(term.to_string()))? as i64
        } else {
            return Err(AsmErrorKind::BadOperand(expr.to_string()));
        };
        total += sign * v;
    }
    Ok(total)
}

fn unescape(s: &str) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next()? {
            'n' => out.push(b'\n'),
            't' => out.push(b'\t'),
            'r' => out.push(b'\r'),
            '0' => out.push(0),
            '\\' => out.push(b'\\'),
            '"' => out.push(b'"'),
            '\'' => out.push(b'\''),
            'x' => {
                let hex: String = chars.by_ref().take(2).collect();
                out.push(u8::from_str_radix(&hex, 16).ok()?);
            }
            _ => return None,
        }
    }
    Some(out)
}

fn parse_string(s: &str) -> Res<Vec<u8>> {
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .and_then(unescape)
        .ok_or_else(|| AsmErrorKind::BadOperand(s.to_string()))
}

/// `offset(reg)`, `(reg)` or a bare offset of zero register form.
fn mem_operand(s: &str, symbols: &BTreeMap<String, u32>) -> Res<(i32, u8)> {
    let s = s.trim();
    let open = s.find('(').ok_or_else(|| AsmErrorKind::BadOperand(s.to_string()))?;
    let close = s
        .strip_suffix(')')
        .map(|r| r.len())
        .ok_or_else(|| AsmErrorKind::BadOperand(s.to_string()))?;
    let base = xreg(&s[open + 1..close])?;
    let off_str = s[..open].trim();
    let off = if off_str.is_empty() { 0 } else { eval(off_str, symbols)? };
    Ok((imm12(off)?, base))
}

fn imm12(v: i64) -> Res<i32> {
    check_range(v, -2048, 2047).map(|v| v as i32)
}

fn shamt(v: i64) -> Res<i32> {
    check_range(v, 0, 31).map(|v| v as i32)
}

fn upper20(v: i64) -> Res<u32> {
    check_range(v, 0, 0xfffff).map(|v| v as u32)
}

/// Target of a branch or jump: a label (resolved against `pc`) or a literal
/// PC-relative offset.
fn target(s: &str, pc: u32, symbols: &BTreeMap<String, u32>, min: i64, max: i64) -> Res<i32> {
    let off = match parse_number(s) {
        Some(n) => n,
        None => eval(s, symbols)? - pc as i64,
    };
    if off % 2 != 0 {
        return Err(AsmErrorKind::OddOffset(off));
    }
    check_range(off, min, max).map(|v| v as i32)
}

fn branch_target(s: &str, pc: u32, symbols: &BTreeMap<String, u32>) -> Res<i32> {
    target(s, pc, symbols, -4096, 4094)
}

fn jal_target(s: &str, pc: u32, symbols: &BTreeMap<String, u32>) -> Res<i32> {
    target(s, pc, symbols, -(1 << 20), (1 << 20) - 2)
}

/// Splits a 32-bit constant into `lui`/`addi` parts.
fn hi_lo(v: u32) -> (u32, i32) {
    let lo = ((v & 0xfff) as i32) << 20 >> 20;
    let hi = v.wrapping_sub(lo as u32) >> 12;
    (hi, lo)
}

fn fence_set(s: &str) -> Res<u8> {
    let s = s.trim().to_ascii_lowercase();
    if s == "0" {
        return Ok(0);
    }
    let mut bits = 0u8;
    let mut last = 16u8;
    for c in s.chars() {
        let b = match c {
            'i' => 8,
            'o' => 4,
            'r' => 2,
            'w' => 1,
            _ => return Err(AsmErrorKind::BadOperand(s.clone())),
        };
        if b >= last {
            return Err(AsmErrorKind::BadOperand(s.clone()));
        }
        last = b;
        bits |= b;
    }
    if bits == 0 {
        return Err(AsmErrorKind::BadOperand(s));
    }
    Ok(bits)
}

fn emit(item: &Placed, symbols: &BTreeMap<String, u32>) -> Res<Vec<u8>> {
    let bytes = match &item.stmt {
        Stmt::Directive { name, args } => emit_directive(name, args, item, symbols)?,
        Stmt::Inst { mnemonic, ops } => {
            let insts = expand(mnemonic, ops, item.addr, symbols)?;
            insts.iter().flat_map(|i| encode(i).to_le_bytes()).collect()
        }
    };
    debug_assert_eq!(bytes.len() as u32, item.size);
    Ok(bytes)
}

fn emit_directive(name: &str, args: &[String], item: &Placed, symbols: &BTreeMap<String, u32>) -> Res<Vec<u8>> {
    let mut out = Vec::with_capacity(item.size as usize);
    match name {
        ".word" => {
            for a in args {
                let v = check_range(eval(a, symbols)?, i32::MIN as i64, u32::MAX as i64)?;
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        ".half" => {
            for a in args {
                let v = check_range(eval(a, symbols)?, i16::MIN as i64, u16::MAX as i64)?;
                out.extend_from_slice(&(v as u16).to_le_bytes());
            }
        }
        ".byte" => {
            for a in args {
                let v = check_range(eval(a, symbols)?, i8::MIN as i64, u8::MAX as i64)?;
                out.push(v as u8);
            }
        }
        ".ascii" | ".asciz" => {
            for a in args {
                out.extend(parse_string(a)?);
                if name == ".asciz" {
                    out.push(0);
                }
            }
        }
        ".space" | ".zero" | ".align" => out.resize(item.size as usize, 0),
        _ => return Err(AsmErrorKind::UnknownDirective(name.to_string())),
    }
    Ok(out)
}

/// Translates one source instruction, pseudo or real, into machine
/// instructions.
fn expand(m: &str, ops: &[String], pc: u32, symbols: &BTreeMap<String, u32>) -> Res<Vec<Instruction>> {
    use Instruction::*;
    let n = |k: usize| expect_ops(m, ops, k);
    let addi = |rd, rs1, imm| OpImm {
        op: ImmOp::Addi,
        rd,
        rs1,
        imm,
    };
    let one = |i: Instruction| Ok(vec![i]);

    if let Some(op) = branch_op(m) {
        n(3)?;
        return one(Branch {
            op,
            rs1: xreg(&ops[0])?,
            rs2: xreg(&ops[1])?,
            offset: branch_target(&ops[2], pc, symbols)?,
        });
    }
    if let Some(op) = load_op(m) {
        n(2)?;
        let (offset, rs1) = mem_operand(&ops[1], symbols)?;
        return one(Load {
            op,
            rd: xreg(&ops[0])?,
            rs1,
            offset,
        });
    }
    if let Some(op) = store_op(m) {
        n(2)?;
        let (offset, rs1) = mem_operand(&ops[1], symbols)?;
        return one(Store {
            op,
            rs1,
            rs2: xreg(&ops[0])?,
            offset,
        });
    }
    if let Some(op) = imm_op(m) {
        n(3)?;
        let v = eval(&ops[2], symbols)?;
        let imm = match op {
            ImmOp::Slli | ImmOp::Srli | ImmOp::Srai => shamt(v)?,
            _ => imm12(v)?,
        };
        return one(OpImm {
            op,
            rd: xreg(&ops[0])?,
            rs1: xreg(&ops[1])?,
            imm,
        });
    }
    if let Some(op) = reg_op(m) {
        n(3)?;
        return one(Op {
            op,
            rd: xreg(&ops[0])?,
            rs1: xreg(&ops[1])?,
            rs2: xreg(&ops[2])?,
        });
    }
    // Pseudo branches against zero and with swapped operands.
    let zero_branch = |op, swap: bool| -> Res<Vec<Instruction>> {
        n(2)?;
        let r = xreg(&ops[0])?;
        let (rs1, rs2) = if swap { (0, r) } else { (r, 0) };
        Ok(vec![Branch {
            op,
            rs1,
            rs2,
            offset: branch_target(&ops[1], pc, symbols)?,
        }])
    };
    let swapped_branch = |op| -> Res<Vec<Instruction>> {
        n(3)?;
        Ok(vec![Branch {
            op,
            rs1: xreg(&ops[1])?,
            rs2: xreg(&ops[0])?,
            offset: branch_target(&ops[2], pc, symbols)?,
        }])
    };
    match m {
        "lui" | "auipc" => {
            n(2)?;
            let rd = xreg(&ops[0])?;
            let imm = upper20(eval(&ops[1], symbols)?)?;
            one(if m == "lui" { Lui { rd, imm } } else { Auipc { rd, imm } })
        }
        "jal" => match ops.len() {
            1 => one(Jal {
                rd: 1,
                offset: jal_target(&ops[0], pc, symbols)?,
            }),
            _ => {
                n(2)?;
                one(Jal {
                    rd: xreg(&ops[0])?,
                    offset: jal_target(&ops[1], pc, symbols)?,
                })
            }
        },
        "jalr" => match ops.len() {
            1 => one(Jalr {
                rd: 1,
                rs1: xreg(&ops[0])?,
                offset: 0,
            }),
            2 => {
                let (offset, rs1) = mem_operand(&ops[1], symbols)?;
                one(Jalr {
                    rd: xreg(&ops[0])?,
                    rs1,
                    offset,
                })
            }
            _ => {
                n(3)?;
                one(Jalr {
                    rd: xreg(&ops[0])?,
                    rs1: xreg(&ops[1])?,
                    offset: imm12(eval(&ops[2], symbols)?)?,
                })
            }
        },
        "fence" => match ops.len() {
            0 => one(Fence { pred: 0xf, succ: 0xf }),
            _ => {
                n(2)?;
                one(Fence {
                    pred: fence_set(&ops[0])?,
                    succ: fence_set(&ops[1])?,
                })
            }
        },
        "ecall" => {
            n(0)?;
            one(Ecall)
        }
        "flw" => {
            n(2)?;
            let (offset, rs1) = mem_operand(&ops[1], symbols)?;
            one(Flw {
                rd: freg(&ops[0])?,
                rs1,
                offset,
            })
        }
        "fsw" => {
            n(2)?;
            let (offset, rs1) = mem_operand(&ops[1], symbols)?;
            one(Fsw {
                rs1,
                rs2: freg(&ops[0])?,
                offset,
            })
        }
        "fmv.w.x" => {
            n(2)?;
            one(FmvWX {
                rd: freg(&ops[0])?,
                rs1: xreg(&ops[1])?,
            })
        }
        "fmv.x.w" => {
            n(2)?;
            one(FmvXW {
                rd: xreg(&ops[0])?,
                rs1: freg(&ops[1])?,
            })
        }
        "nop" => {
            n(0)?;
            one(addi(0, 0, 0))
        }
        "li" => {
            n(2)?;
            let rd = xreg(&ops[0])?;
            let v = check_range(eval(&ops[1], symbols)?, i32::MIN as i64, u32::MAX as i64)? as u32;
            let (hi, lo) = hi_lo(v);
            Ok(match li_words(&ops[1]) {
                1 if (-2048..2048).contains(&(v as i32)) => vec![addi(rd, 0, v as i32)],
                1 => vec![Lui { rd, imm: v >> 12 }],
                _ => vec![Lui { rd, imm: hi }, addi(rd, rd, lo)],
            })
        }
        "la" => {
            n(2)?;
            let rd = xreg(&ops[0])?;
            let dest = address(eval(&ops[1], symbols)?)?;
            let (hi, lo) = hi_lo(dest.wrapping_sub(pc));
            Ok(vec![Auipc { rd, imm: hi }, addi(rd, rd, lo)])
        }
        "mv" => {
            n(2)?;
            one(addi(xreg(&ops[0])?, xreg(&ops[1])?, 0))
        }
        "not" => {
            n(2)?;
            one(OpImm {
                op: ImmOp::Xori,
                rd: xreg(&ops[0])?,
                rs1: xreg(&ops[1])?,
                imm: -1,
            })
        }
        "neg" | "snez" | "sltz" | "sgtz" => {
            n(2)?;
            let rd = xreg(&ops[0])?;
            let rs = xreg(&ops[1])?;
            let (op, rs1, rs2) = match m {
                "neg" => (RegOp::Sub, 0, rs),
                "snez" => (RegOp::Sltu, 0, rs),
                "sltz" => (RegOp::Slt, rs, 0),
                _ => (RegOp::Slt, 0, rs),
            };
            one(Op { op, rd, rs1, rs2 })
        }
        "seqz" => {
            n(2)?;
            one(OpImm {
                op: ImmOp::Sltiu,
                rd: xreg(&ops[0])?,
                rs1: xreg(&ops[1])?,
                imm: 1,
            })
        }
        "j" => {
            n(1)?;
            one(Jal {
                rd: 0,
                offset: jal_target(&ops[0], pc, symbols)?,
            })
        }
        "call" => {
            n(1)?;
            one(Jal {
                rd: 1,
                offset: jal_target(&ops[0], pc, symbols)?,
            })
        }
        "jr" => {
            n(1)?;
            one(Jalr {
                rd: 0,
                rs1: xreg(&ops[0])?,
                offset: 0,
            })
        }
        "ret" => {
            n(0)?;
            one(Jalr {
                rd: 0,
                rs1: 1,
                offset: 0,
            })
        }
        "beqz" => zero_branch(BranchOp::Beq, false),
        "bnez" => zero_branch(BranchOp::Bne, false),
        "bltz" => zero_branch(BranchOp::Blt, false),
        "bgez" => zero_branch(BranchOp::Bge, false),
        "blez" => zero_branch(BranchOp::Bge, true),
        "bgtz" => zero_branch(BranchOp::Blt, true),
        "bgt" => swapped_branch(BranchOp::Blt),
        "ble" => swapped_branch(BranchOp::Bge),
        "bgtu" => swapped_branch(BranchOp::Bltu),
        "bleu" => swapped_branch(BranchOp::Bgeu),
        _ => Err(AsmErrorKind::UnknownMnemonic(m.to_string())),
    }
}
