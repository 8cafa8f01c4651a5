//! Criterion benchmarks for `cbl-core`; see `benches/`.
