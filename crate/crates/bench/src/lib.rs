//! Criterion benchmarks for the lab kernels; see `benches/`.
