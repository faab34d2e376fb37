//! Benchmark-only crate; the workloads live in `benches/`.
//!
//! Run with `cargo bench -p sldp-bench` (or `cargo bench -p sldp-bench -- --test`
//! for a single-iteration smoke pass).
