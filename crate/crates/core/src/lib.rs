//! Simulation of quantum synchronization between two-level systems.
//!
//! The crate covers three pieces of machinery:
//!
//! * [`liouville`]: dense Lindblad generators, exact propagation by matrix
//!   exponential and an RK4 cross-check.
//! * [`dasim`]: two driven qubits in two coupled lossy cavities, evolved
//!   either directly or as a digital-analog Trotter sequence of local gates,
//!   Jaynes-Cummings and hopping blocks and cavity loss maps.
//! * [`qmlfb`]: a three-qubit agent/register/environment learning loop with
//!   an optional measure-and-reinitialize feedback on the register.
//!
//! Figures of merit (entropy, mutual information, fidelity) live in
//! [`metrics`]. The guide under `book/` walks through the physics; its code
//! listings are compiled and run as doctests of this crate.

pub mod dasim;
pub mod error;
pub mod linalg;
pub mod liouville;
pub mod metrics;
pub mod qcore;
pub mod qmlfb;
pub mod random;
pub mod schedule;
pub mod timeseries;

pub use error::{Error, Result};
pub use qcore::{DensityMatrix, HilbertLayout, PureState};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    mod conventions {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/cavities.md")]
    mod cavities {}
    #[doc = include_str!("../../../book/src/feedback.md")]
    mod feedback {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
