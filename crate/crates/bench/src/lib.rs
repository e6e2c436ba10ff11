//! Criterion benchmarks for senseforge; see `benches/`.
