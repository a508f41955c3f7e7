//! Holds the `acceptance` test target; no library code.
//!
//! Kept as its own package so that `cargo test --workspace` runs every other
//! crate's tests before the acceptance binary.
