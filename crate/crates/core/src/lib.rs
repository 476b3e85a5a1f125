//! Simulation of a controlled-Z gate between two atoms in remote cavities,
//! mediated by a set of dispersive bosonic ("fibre") modes.
//!
//! The dynamics is restricted to the zero- and single-excitation sector of
//! two atoms, two cavity modes and `N` fibre modes, which keeps the Hilbert
//! space dimension at `2N + 9`. On top of the propagators the crate builds
//! the code-space channel of the gate, its Haar-averaged fidelity (sampled
//! and exact) and grid sweeps over the second cavity's couplings.
//!
//! Grid points and Monte-Carlo batches run on rayon when the `parallel`
//! feature is enabled (the default); otherwise everything runs sequentially
//! with bit-identical results.

pub mod cli;
pub mod dynamics;
mod error;
pub mod fidelity;
pub mod hilbert;
pub mod model;
pub mod operator;
pub mod oracle;
pub mod par;
pub mod sweep;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

pub use dynamics::{DensityMatrix, IntegratorConfig, StateVector};
pub use fidelity::{CodeChannel, CodeInput, McEstimate};
pub use hilbert::{AtomicDensity, Basis, BasisState};
pub use model::{JumpOperator, ModelParams, Preset, SpectrumPreset};
pub use operator::SparseMatrix;
pub use sweep::{Estimator, GridSpec, Peak, SweepResult, SweepRow};
