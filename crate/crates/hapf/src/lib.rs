//! Deterministic time-domain simulator of a three-phase hybrid active power
//! filter: shunt tuned LC banks plus a hysteresis-controlled voltage-source
//! converter compensating a six-pulse rectifier load.
//!
//! The crate is organized around the signal path. [`frames`] holds the
//! Clarke transforms and instantaneous power algebra, [`estimator`] splits
//! load power and synthesizes the compensation current reference, [`dc_bus`]
//! regulates the converter capacitor, [`hysteresis`] turns current errors
//! into switching states, [`circuit`] advances the switched plant with a
//! fixed-step backward-Euler solver, [`analysis`] measures harmonic spectra
//! and THD, and [`runner`] ties a scenario together and writes artifacts.
//!
//! ```
//! use hapf::frames::{clarke_forward, instantaneous_power, PhaseTriple};
//!
//! let e = clarke_forward(PhaseTriple::new(311.0, -155.5, -155.5));
//! let i = clarke_forward(PhaseTriple::new(10.0, -5.0, -5.0));
//! let s = instantaneous_power(e, i);
//! // Aligned voltage and current carry real power only.
//! assert!(s.p > 0.0);
//! assert!(s.q.abs() < 1e-9 * s.p);
//! ```

pub mod analysis;
pub mod circuit;
pub mod dc_bus;
pub mod estimator;
pub mod frames;
pub mod hysteresis;
pub mod runner;
pub mod scenario;

pub use circuit::{CircuitParams, Mode, SimState};
pub use frames::{AlphaBeta, PhaseTriple, PowerPair};
pub use scenario::Scenario;
