use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::machine::MachineState;
use crate::memsys::{MemorySystem, RAM_BASE};

/// Bytes placed at a fixed base address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub base: u32,
    #[serde(with = "b64")]
    pub data: Vec<u8>,
}

impl Segment {
    /// One past the last byte.
    pub fn end(&self) -> u64 {
        self.base as u64 + self.data.len() as u64
    }

    fn contains(&self, addr: u32) -> bool {
        (self.base as u64..self.end()).contains(&(addr as u64))
    }
}

mod b64 {
    use super::*;

    pub fn serialize<S: serde::Serializer>(data: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("segments at {a:#010x} and {b:#010x} overlap")]
    Overlap { a: u32, b: u32 },
    #[error("segment at {0:#010x} lies below RAM or past the end of the address space")]
    OutOfRange(u32),
    #[error("entry point {0:#010x} is not inside any segment")]
    EntryOutsideSegments(u32),
    #[error("malformed image descriptor: {0}")]
    Descriptor(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("segment {base:#010x}+{len:#x} does not fit in RAM")]
    SegmentOutsideRam { base: u32, len: usize },
}

/// An assembled program: non-overlapping segments, an entry point inside
/// one of them and the symbol table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgramImage {
    entry: u32,
    segments: Vec<Segment>,
    symbols: BTreeMap<String, u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    entry: u32,
    segments: Vec<Segment>,
    #[serde(default)]
    symbols: BTreeMap<String, u32>,
}

impl ProgramImage {
    /// Segments are stored sorted by base address.
    pub fn new(entry: u32, mut segments: Vec<Segment>, symbols: BTreeMap<String, u32>) -> Result<Self, ImageError> {
        segments.sort_by_key(|s| s.base);
        for s in &segments {
            if s.base < RAM_BASE || s.end() > 1 << 32 {
                return Err(ImageError::OutOfRange(s.base));
            }
        }
        for pair in segments.windows(2) {
            if pair[0].end() > pair[1].base as u64 {
                return Err(ImageError::Overlap {
                    a: pair[0].base,
                    b: pair[1].base,
                });
            }
        }
        if !segments.iter().any(|s| s.contains(entry)) {
            return Err(ImageError::EntryOutsideSegments(entry));
        }
        Ok(Self {
            entry,
            segments,
            symbols,
        })
    }

    pub fn entry(&self) -> u32 {
        self.entry
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn symbols(&self) -> &BTreeMap<String, u32> {
        &self.symbols
    }

    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    pub fn byte_at(&self, addr: u32) -> Option<u8> {
        self.segments
            .iter()
            .find(|s| s.contains(addr))
            .map(|s| s.data[(addr - s.base) as usize])
    }

    /// Flat JSON descriptor with base64 segment payloads.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("image serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ImageError> {
        let d: Descriptor = serde_json::from_str(text).map_err(|e| ImageError::Descriptor(e.to_string()))?;
        Self::new(d.entry, d.segments, d.symbols)
    }
}

/// Resets `mem` (RAM zeroed, caches invalid, counters cleared), copies the
/// segments into RAM and resets `state` to the entry point with the stack
/// pointer at the 16-byte aligned top of RAM.
pub fn load(image: &ProgramImage, mem: &mut MemorySystem, state: &mut MachineState) -> Result<(), LoadError> {
    for s in &image.segments {
        if !mem.in_ram(s.base, s.data.len() as u32) || s.data.len() > u32::MAX as usize {
            return Err(LoadError::SegmentOutsideRam {
                base: s.base,
                len: s.data.len(),
            });
        }
    }
    mem.reset();
    for s in &image.segments {
        mem.write_ram(s.base, &s.data).expect("checked above");
    }
    let top = mem.ram_end().min(u32::MAX as u64) as u32 & !15;
    *state = MachineState::new(image.entry, top);
    Ok(())
}
