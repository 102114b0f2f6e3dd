//! Quantum-kernel classification toolkit.
//!
//! Classical feature vectors are angle-encoded into simulated qubit registers
//! ([`feature_maps`]), turned into fidelity or projected quantum kernels
//! ([`kernels`]), and classified with a soft-margin SVM trained by sequential
//! minimal optimization ([`svm`]). The [`pipeline`] module wires these into
//! stratified cross-validation, grid search and shot-noise sweeps.

pub mod error;
pub mod feature_maps;
pub mod kernels;
pub mod pipeline;
pub mod seeding;
pub mod state;
pub mod svm;
pub mod validation;

pub use error::{Error, Result};
pub use feature_maps::{encode, FeatureMapFamily, FeatureMapSpec};
pub use kernels::{GramMatrix, KernelSpec, ProjectionMode, ProjectionStrategy, ShotConfig};
pub use state::{DensityMatrix, Gate, Pauli, PauliObservable, Statevector};
pub use svm::{SvmModel, TrainConfig};
