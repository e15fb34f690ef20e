//! Linear and nonlinear stochastic Schrödinger equations on truncated Fock
//! spaces.
//!
//! Every numerical type is generic over a [`scalar::Real`] field; the
//! aliases at the crate root fix it to `f64`, which all documented
//! tolerances assume.

// `!(x <= tol)` is the idiom for "fails or is NaN" throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod girsanov;
pub mod hilbert;
pub mod lindblad;
pub mod model;
pub mod nsse;
pub mod scalar;
pub mod sse_linear;
pub mod stationary;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

pub type State = hilbert::QuantumState<f64>;
pub type Operator = hilbert::FockOperator<f64>;
pub type Model = model::ModelSpec<f64>;
pub type Params = model::OscillatorParams<f64>;
pub type ModelPreset = model::Preset<f64>;
pub type Config = trajectory::SolverConfig<f64>;
pub type Traj = trajectory::Trajectory<f64>;
pub type Density = lindblad::DensityMatrix<f64>;
