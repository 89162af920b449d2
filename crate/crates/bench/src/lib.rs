//! Criterion benchmarks for the filters and full scenario runs; see `benches/`.
