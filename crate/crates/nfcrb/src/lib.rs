//! Near-field ISAC transmit design with a fluid-antenna target and an
//! extremely large transmitting/reflecting surface.
//!
//! The crate covers the full pipeline:
//!
//! * [`geometry`] — array geometry, near/far-field steering vectors and their
//!   analytic derivatives, line-of-sight channel construction;
//! * [`fisher`] — closed-form Fisher information blocks and the Cramér-Rao
//!   bound for the target range/angle;
//! * [`conic`] — a small conic-program builder over complex matrix variables
//!   with an interior-point backend;
//! * [`optimizer`] — the double-loop penalty/dual (outer) and block
//!   coordinate descent (inner) design of the beamformers, sensing
//!   covariance, surface coefficients and antenna position;
//! * [`oracle`] — independent numeric oracles (finite-difference FIM, grid
//!   maximum-likelihood, random feasible search) used for validation;
//! * [`harness`] — config parsing, sweeps, CSV emission and the validation
//!   report behind the `nfcrb` CLI.

pub mod conic;
pub mod error;
pub(crate) mod linalg;
pub mod fisher;
pub mod geometry;
pub mod harness;
pub mod optimizer;
pub mod oracle;

pub use error::Error;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real vector.
pub type RVec = nalgebra::DVector<f64>;
