//! Simulation and thermodynamic analysis of an autonomous single-electron
//! shuttle engine.
//!
//! * [`model`]: rates, Fermi factors, charging energy and force.
//! * [`engine`]: jump–diffusion trajectories with a per-trajectory heat and work ledger.
//! * [`ensemble`]: deterministic parallel ensembles and phase-space snapshots.
//! * [`thermo`]: ensemble energies, entropies and first/second-law audits.
//! * [`reduced`]: the time-dependent master equation of the dot driven by an ideal oscillator.
//! * [`stroke`]: four-stroke partition of the cycle and the stroke-wise propagator.

pub mod engine;
pub mod ensemble;
pub mod model;
pub mod reduced;
pub mod stats;
pub mod stroke;
pub mod thermo;
pub mod units;

pub use engine::{ShuttleState, ThermoLedger};
pub use model::{Lead, Occupation, Params};
