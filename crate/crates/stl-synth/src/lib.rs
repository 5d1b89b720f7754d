//! Control synthesis for signal temporal logic via mixed-integer linear
//! programming.
//!
//! The pipeline: write a specification in a small STL text language
//! ([`formula`]), describe the plant as an affine discrete-time system
//! ([`trace`]), compile specification plus dynamics into a mixed-integer
//! linear program ([`encoder`]), solve it with the built-in deterministic
//! branch-and-bound solver or export it as an LP file ([`milp`]), and wrap
//! the whole thing in open-loop or receding-horizon synthesis
//! ([`synthesis`]). An independent robustness monitor ([`semantics`])
//! cross-checks every synthesized trajectory.
//!
//! ```
//! use stl_synth::formula::parse;
//! use stl_synth::semantics::{robustness, satisfies};
//! use stl_synth::trace::Run;
//!
//! let phi = parse("G[0,2] (x1 > 3)").unwrap();
//! let run = Run::new(
//!     vec![vec![5.0], vec![4.0], vec![6.0]],
//!     vec![vec![]; 2],
//!     vec![vec![]; 2],
//!     1.0,
//! )
//! .unwrap();
//! assert!(satisfies(&run, &phi, 0).unwrap());
//! assert_eq!(robustness(&run, &phi, 0).unwrap().0, 1.0);
//! ```

pub mod cli;
pub mod encoder;
pub mod formula;
pub mod milp;
pub mod semantics;
pub mod synthesis;
pub mod trace;

#[cfg(doctest)]
mod book;
