//! Soliton injection in classical ferromagnetic Heisenberg chains and remote
//! control of a spin-½ qubit by the passing soliton.
//!
//! The pipeline: thermalize the chain ([`thermal`]), drive its first site with
//! a travelling-wave waveform ([`dynamics`]), locate and characterize the
//! generated soliton ([`tracker`]), and replay its field into the qubit's
//! Bloch equation ([`qubit`]). [`harness`] wires these into config-driven
//! experiments, sweeps and exports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod qubit;
pub mod soliton;
pub mod thermal;
pub mod tracker;
pub mod vec3;

pub use chain::{chain_energy, ground_state, to_physical_units, ChainParams, PhysicalUnits, SpinConfig};
pub use dynamics::{
    integrate_step, make_drive, run_injection, DriveKind, DriveProtocol, EnergyLedger, Integrator,
    Trajectory,
};
pub use error::{Error, Result};
pub use harness::{export_figure_data, run_experiment, sweep_grid, ExperimentConfig, SweepAxis};
pub use qubit::{
    backaction_ratio, evolve_qubit, extract_asymptotics, smeared_field, AsymptoticState,
    BlochState, CouplingProfile, FieldSource, QubitParams,
};
pub use soliton::{tw_profile, tw_scales, Direction, SolitonScales, SolitonSpec};
pub use thermal::{sample_thermal, thermal_diagnostics, ThermalSpec};
pub use tracker::{estimate_beta_eff, track_core, TrackOptions, TrackResult};
