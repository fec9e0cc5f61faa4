//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;

/// Scratch registers the generated programs compute in. `s0` holds the
/// buffer base and is never written.
const REGS: [&str; 12] = ["t0", "t1", "t2", "t3", "t4", "t5", "t6", "s1", "s2", "s3", "s4", "s5"];

const RR: [&str; 16] = [
    "add", "sub", "xor", "or", "and", "sll", "srl", "sra", "slt", "sltu", "mul", "mulh", "div", "divu", "rem", "remu",
];
const RI: [&str; 6] = ["addi", "xori", "ori", "andi", "slti", "sltiu"];
const SH: [&str; 3] = ["slli", "srli", "srai"];
const BR: [&str; 6] = ["beq", "bne", "blt", "bge", "bltu", "bgeu"];

/// Assembly text of a short straight-line program that always exits
/// normally when run without faults. Memory traffic stays inside a
/// 256-byte buffer; branches only jump forward. The buffer is written to
/// stdout before exiting.
pub fn random_safe_program<R: Rng>(rng: &mut R, len: usize) -> String {
    let mut s = String::from("_start:\n    la s0, buf\n");
    let reg = |rng: &mut R| *REGS.choose(rng).unwrap();
    for i in 0..len {
        s.push_str(&format!("L{i}:\n    "));
        let line = match rng.random_range(0..10) {
            0..=2 => format!("{} {}, {}, {}", RR.choose(rng).unwrap(), reg(rng), reg(rng), reg(rng)),
            3 | 4 => format!(
                "{} {}, {}, {}",
                RI.choose(rng).unwrap(),
                reg(rng),
                reg(rng),
                rng.random_range(-2048..2048)
            ),
            5 => format!("{} {}, {}, {}", SH.choose(rng).unwrap(), reg(rng), reg(rng), rng.random_range(0..32)),
            6 => match rng.random_range(0..4) {
                0 => format!("lw {}, {}(s0)", reg(rng), 4 * rng.random_range(0..64)),
                1 => format!("lbu {}, {}(s0)", reg(rng), rng.random_range(0..256)),
                2 => format!("lh {}, {}(s0)", reg(rng), 2 * rng.random_range(0..128)),
                _ => format!("flw f{}, {}(s0)", rng.random_range(0..32), 4 * rng.random_range(0..64)),
            },
            7 => match rng.random_range(0..4) {
                0 => format!("sw {}, {}(s0)", reg(rng), 4 * rng.random_range(0..64)),
                1 => format!("sb {}, {}(s0)", reg(rng), rng.random_range(0..256)),
                2 => format!("sh {}, {}(s0)", reg(rng), 2 * rng.random_range(0..128)),
                _ => format!("fsw f{}, {}(s0)", rng.random_range(0..32), 4 * rng.random_range(0..64)),
            },
            8 => format!(
                "{} {}, {}, L{}",
                BR.choose(rng).unwrap(),
                reg(rng),
                reg(rng),
                rng.random_range(i + 1..=len)
            ),
            _ => match rng.random_range(0..3) {
                0 => format!("lui {}, {}", reg(rng), rng.random_range(0..1 << 20)),
                1 => format!("fmv.w.x f{}, {}", rng.random_range(0..32), reg(rng)),
                _ => format!("fmv.x.w {}, f{}", reg(rng), rng.random_range(0..32)),
            },
        };
        s.push_str(&line);
        s.push('\n');
    }
    s.push_str(&format!(
        "L{len}:\n    li a0, 1\n    mv a1, s0\n    li a2, 256\n    li a7, 64\n    ecall\n    \
         li a0, 0\n    li a7, 93\n    ecall\n    .align 2\nbuf:\n    .space 256\n"
    ));
    s
}
