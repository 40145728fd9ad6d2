//! Benchmark-only crate; see benches/control_step.rs.
