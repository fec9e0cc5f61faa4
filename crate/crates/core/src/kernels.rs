//! Benchmark kernels shipped as assembly source.
//!
//! | name       | character                         |
//! |------------|-----------------------------------|
//! | `bitcount` | ALU bound, short inner loop       |
//! | `qsort`    | pointer chasing, recursive calls  |
//! | `crc`      | streaming over a byte buffer      |
//!
//! Each kernel prints an 8-digit hex digest and a newline, then exits 0.

use crate::asm::{assemble, ProgramImage};

pub const BITCOUNT: &str = include_str!("../kernels/bitcount.s");
pub const QSORT: &str = include_str!("../kernels/qsort.s");
pub const CRC: &str = include_str!("../kernels/crc.s");

pub const NAMES: [&str; 3] = ["bitcount", "qsort", "crc"];

pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "bitcount" => Some(BITCOUNT),
        "qsort" => Some(QSORT),
        "crc" => Some(CRC),
        _ => None,
    }
}

/// Assembled image of a bundled kernel.
pub fn image(name: &str) -> Option<ProgramImage> {
    source(name).map(|s| assemble(s).expect("bundled kernels assemble"))
}
