//! Criterion benchmarks for `flexmarket-core`; run with `cargo bench -p flexmarket-bench`.
