//! Quantum trajectories of a spin coupled to a harmonic oscillator whose
//! position is continuously and weakly measured.
//!
//! The crate provides the stochastic Schrodinger integrator ([`sse`]), the
//! classical limit ([`classical`]), a Gaussian moment closure ([`cumulant`]),
//! entanglement and classicality measures ([`diagnostics`]) and a parallel
//! ensemble runner ([`ensemble`]).

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classical;
pub mod config;
pub mod cumulant;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod hilbert;
pub mod krylov;
pub mod noise;
pub mod output;
pub mod params;
pub mod sparse;
pub mod sse;

pub use config::{parse_config, Mode, Preset, RunConfig};
pub use ensemble::{run_ensemble, EnsembleResult, EnsembleSpec};
pub use error::{Error, Result};
pub use hilbert::{build_operators, Operators, QuantumState};
pub use noise::NoiseStream;
pub use params::{BasisSpec, ModelParams, Spin};
pub use sse::{run_trajectory, Scheme, SseConfig, TrajectoryRecord};
