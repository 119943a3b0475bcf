//! Acceptance checks for `gaptae` live in `tests/acceptance.rs`; run them with
//! `cargo test -p gaptae-validation`.
