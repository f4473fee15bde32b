//! Discontinuous control-Lyapunov feedback for asymptotically controllable
//! systems, simulated under sampling-solution semantics, with numerical
//! checks of the resulting input-to-state stability estimates.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`]: systems, partitions, signals and trajectories.
//! - [`clf`]: control-Lyapunov functions, the comparison functions derived
//!   from them, and the ISS envelope.
//! - [`feedback`]: the `K1 + K2` construction and the damping feedback.
//! - [`sampler`]: sample-and-hold integration, rate guards, Gronwall gaps and
//!   per-step decrease checks.
//! - [`euler`]: refinement studies whose limits are Euler solutions.
//! - [`models`]: the nonholonomic integrator, the scalar test plants and the
//!   fully nonlinear counterexample with its weak-ISS certificate.
//! - [`campaign`]: batch verification over admissible cases.

pub mod campaign;
pub mod clf;
pub mod error;
pub mod euler;
pub mod feedback;
pub mod linalg;
pub mod models;
pub mod sampler;
pub mod types;

pub use error::{Error, Result};
