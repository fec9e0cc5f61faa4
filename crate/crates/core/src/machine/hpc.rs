use serde::{Deserialize, Serialize};

/// The twenty monitored hardware performance counters, named after the
/// RISC-V CSRs that hold them. `mhpmcounter30`/`31` (TLB misses) stay at
/// zero because no TLB is modeled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpcVector {
    pub mcycle: u64,
    pub mtime: u64,
    pub minstret: u64,
    /// Integer loads.
    #[serde(rename = "mhpmcounter4")]
    pub int_loads: u64,
    /// Integer stores.
    #[serde(rename = "mhpmcounter5")]
    pub int_stores: u64,
    /// System instructions (`ecall`, `fence`).
    #[serde(rename = "mhpmcounter7")]
    pub system: u64,
    /// Integer arithmetic, logic, shifts, `lui`, `auipc`.
    #[serde(rename = "mhpmcounter8")]
    pub int_arith: u64,
    #[serde(rename = "mhpmcounter9")]
    pub cond_branches: u64,
    #[serde(rename = "mhpmcounter10")]
    pub jal: u64,
    #[serde(rename = "mhpmcounter11")]
    pub jalr: u64,
    #[serde(rename = "mhpmcounter12")]
    pub mul: u64,
    /// Divisions and remainders.
    #[serde(rename = "mhpmcounter13")]
    pub div: u64,
    #[serde(rename = "mhpmcounter14")]
    pub fp_mem: u64,
    #[serde(rename = "mhpmcounter15")]
    pub fp_other: u64,
    /// Branch and jump mispredictions.
    #[serde(rename = "mhpmcounter22")]
    pub mispredicts: u64,
    #[serde(rename = "mhpmcounter27")]
    pub icache_misses: u64,
    #[serde(rename = "mhpmcounter28")]
    pub dcache_misses: u64,
    #[serde(rename = "mhpmcounter29")]
    pub dcache_writebacks: u64,
    #[serde(rename = "mhpmcounter30")]
    pub itlb_misses: u64,
    #[serde(rename = "mhpmcounter31")]
    pub dtlb_misses: u64,
}

impl HpcVector {
    pub const LEN: usize = 20;

    pub const NAMES: [&'static str; Self::LEN] = [
        "mcycle",
        "mtime",
        "minstret",
        "mhpmcounter4",
        "mhpmcounter5",
        "mhpmcounter7",
        "mhpmcounter8",
        "mhpmcounter9",
        "mhpmcounter10",
        "mhpmcounter11",
        "mhpmcounter12",
        "mhpmcounter13",
        "mhpmcounter14",
        "mhpmcounter15",
        "mhpmcounter22",
        "mhpmcounter27",
        "mhpmcounter28",
        "mhpmcounter29",
        "mhpmcounter30",
        "mhpmcounter31",
    ];

    /// Counters in `NAMES` order.
    pub fn to_array(&self) -> [u64; Self::LEN] {
        [
            self.mcycle,
            self.mtime,
            self.minstret,
            self.int_loads,
            self.int_stores,
            self.system,
            self.int_arith,
            self.cond_branches,
            self.jal,
            self.jalr,
            self.mul,
            self.div,
            self.fp_mem,
            self.fp_other,
            self.mispredicts,
            self.icache_misses,
            self.dcache_misses,
            self.dcache_writebacks,
            self.itlb_misses,
            self.dtlb_misses,
        ]
    }

    pub fn from_array(a: [u64; Self::LEN]) -> Self {
        Self {
            mcycle: a[0],
            mtime: a[1],
            minstret: a[2],
            int_loads: a[3],
            int_stores: a[4],
            system: a[5],
            int_arith: a[6],
            cond_branches: a[7],
            jal: a[8],
            jalr: a[9],
            mul: a[10],
            div: a[11],
            fp_mem: a[12],
            fp_other: a[13],
            mispredicts: a[14],
            icache_misses: a[15],
            dcache_misses: a[16],
            dcache_writebacks: a[17],
            itlb_misses: a[18],
            dtlb_misses: a[19],
        }
    }

    /// Sum of the per-class retired-instruction counters.
    pub fn class_total(&self) -> u64 {
        self.int_loads
            + self.int_stores
            + self.system
            + self.int_arith
            + self.cond_branches
            + self.jal
            + self.jalr
            + self.mul
            + self.div
            + self.fp_mem
            + self.fp_other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_roundtrip_and_names() {
        let a: [u64; 20] = std::array::from_fn(|i| i as u64 * 3 + 1);
        let h = HpcVector::from_array(a);
        assert_eq!(h.to_array(), a);
        let json = serde_json::to_value(h).unwrap();
        for (i, name) in HpcVector::NAMES.iter().enumerate() {
            assert_eq!(json[name], a[i], "{name}");
        }
    }
}
