//! Benchmarks for the key-rate estimators live under `benches/`.
