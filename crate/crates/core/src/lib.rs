//! Newmark time integration for linear second-order systems
//! `M q̈ + C q̇ + K q = F(t)`, with backward error analysis of the scheme
//! and compensated systems built from it.
//!
//! * [`model`]: systems, forcings and the first-order view.
//! * [`integrators`]: Newmark, generalized-α, RK4, explicit Euler.
//! * [`bea`]: distorted vector field and distorted second-order system.
//! * [`compensation`]: damping and fourth-order compensation.
//! * [`harness`]: scenarios, convergence studies, energy traces, benchmarks.
//! * [`io`]: scenario files, Matrix Market, SVG.

pub mod bea;
pub mod compensation;
pub mod error;
pub mod harness;
pub mod integrators;
pub mod io;
pub mod linalg;
pub mod model;

pub use compensation::{damping_compensation, fourth_order_compensation, CompensatedSystem, CompensationKind};
pub use error::{Error, Result};
pub use integrators::{integrate, Method, State, StepperConfig, Trajectory};
pub use linalg::{Matrix, Vector};
pub use model::{DerivativeMode, Forcing, SecondOrderSystem};
