//! Simulation and analysis of quantum process tomography for small NMR spin
//! systems: pulse-level dynamics, channel algebra, synthetic tomography and
//! error decomposition.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod matio;
pub mod optim;
pub mod pulsesim;
pub mod qpt;
pub mod random;
pub mod relax;
pub mod spinsys;
pub mod superop;

pub use error::{Error, ErrorCategory, Result};
pub use linalg::CMat;
pub use spinsys::{DensityMatrix, PauliProduct, SpinSystem};
pub use superop::{Basis, ChoiMatrix, KrausSet, Supermatrix};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
