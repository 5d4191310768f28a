//! Criterion benchmarks for the numeric hot paths; see `benches/`.
