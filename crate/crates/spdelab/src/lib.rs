//! Numerical laboratory for stochastic evolution equations with monotone
//! drift on the unit interval: linear heat and p-Laplace families driven by
//! truncated Q-Wiener noise.
//!
//! The crate simulates paths with a semi-implicit Euler scheme, audits the
//! structural hypotheses of the monotone framework on sampled fields, and
//! estimates the fractional time regularity of the nonlinear quantity
//! `G(u)` (square-root Laplacian of the solution in the linear case, the
//! companion flux of the gradient for p-Laplace) through difference
//! quotients, Sobolev-Slobodeckij seminorms and power-law exponent fits.
//! A scalar checker validates the discrete time-difference Ito identity
//! underlying the whole construction.
//!
//! Everything downstream of a `(config, master seed)` pair is deterministic,
//! including Monte Carlo ensembles dispatched across worker threads.

pub mod config;
pub mod field;
pub mod noise;
pub mod operators;
pub mod regularity;
pub mod runner;
pub mod stepper;

pub use config::{ExperimentConfig, Mode};
pub use field::{Grid1D, NodeField, SpectralBasis};
pub use noise::{NoiseSpec, WienerIncrements};
pub use operators::{DiffusionSpec, DriftSpec, GValue, HypothesisReport, PLaplaceSpec};
pub use regularity::{GPath, ItoLedger};
pub use stepper::{StepperConfig, Trajectory};
