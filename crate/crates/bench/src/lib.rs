//! Criterion benchmarks for `faultsim`; see `benches/`.
