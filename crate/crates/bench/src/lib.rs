//! Criterion benchmarks for the gupsim pipeline live in `benches/`.
