//! Benchmarks for the sbm-deepwalk pipeline live in `benches/`.
