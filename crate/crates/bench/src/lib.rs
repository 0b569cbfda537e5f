//! Criterion benchmarks for the rendering pipeline; see `benches/pipeline.rs`.
