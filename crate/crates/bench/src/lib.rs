//! Benchmarks for the samplers live in `benches/`.
