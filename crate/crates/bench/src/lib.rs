//! Criterion benchmarks for the sampler and GIRF hot paths; see `benches/`.
