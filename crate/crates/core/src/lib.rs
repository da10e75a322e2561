//! Simulation and analysis of coherent acoustic control of a single
//! silicon-vacancy (SiV) spin in diamond.
//!
//! The crate covers the whole chain from microwave input power to the
//! normalized spin population that an optical readout would report:
//!
//! - [`siv_model`]: ground-state Hamiltonian of the SiV (orbital ⊗ spin) under
//!   magnetic field and strain, and its reduction to an effective spin qubit.
//! - [`dynamics`]: Lindblad master-equation integrator with a rotating-frame
//!   path and the analytic two-level oracle.
//! - [`saw_device`]: interdigital transducer response, S-parameters, focused
//!   beam strain and the power → Rabi-frequency calibration chain.
//! - [`sequence`]: optical / acoustic pulse sequences and their compilation
//!   into piecewise master equations.
//! - [`experiments`]: ODAR, Rabi and Ramsey drivers plus the photon
//!   histogram observable.
//! - [`fitting`]: Levenberg–Marquardt fits used to reduce the scans.
//! - [`io`]: experiment configs, result files and plots.
//!
//! Units: every public interface takes and returns cyclic frequencies (Hz),
//! seconds, watts and tesla. Operators handed to [`dynamics`] are in angular
//! units (rad/s); the conversion happens once, in [`sequence::compile`].

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fitting;
pub mod io;
pub mod saw_device;
pub mod sequence;
pub mod siv_model;

pub use dynamics::{DensityMatrix, DriveTerm, Envelope, EvolutionResult, Operator};
pub use error::{Error, Result};
pub use experiments::{DetectionHistogram, ExperimentContext, ScanResult};
pub use fitting::FitResult;
pub use saw_device::{CalibrationPoint, IdtSpec};
pub use sequence::{CompiledSchedule, Pulse, PulseKind, PulseSequence};
pub use siv_model::{QubitReduction, SivModelParams, StrainInput};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

pub(crate) const TWO_PI: f64 = std::f64::consts::TAU;
