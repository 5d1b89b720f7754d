//! Runs every code snippet in the guide as a doc-test, keeping the book and
//! the library in sync. Compiled only under `cargo test --doc`.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/formulas.md")]
mod formulas {}
#[doc = include_str!("../../../book/src/traces.md")]
mod traces {}
#[doc = include_str!("../../../book/src/monitoring.md")]
mod monitoring {}
#[doc = include_str!("../../../book/src/boolean-encoding.md")]
mod boolean_encoding {}
#[doc = include_str!("../../../book/src/robust-encoding.md")]
mod robust_encoding {}
#[doc = include_str!("../../../book/src/snn.md")]
mod snn {}
#[doc = include_str!("../../../book/src/synthesis.md")]
mod synthesis {}
#[doc = include_str!("../../../book/src/mpc.md")]
mod mpc {}
#[doc = include_str!("../../../book/src/solver.md")]
mod solver {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
