//! Criterion benchmarks for the multibt engine live under `benches/`.
