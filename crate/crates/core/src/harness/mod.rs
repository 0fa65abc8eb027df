//! Config-driven experiments: a TOML [`ExperimentConfig`] runs through
//! thermalize → inject → track → qubit → export, and every file written is
//! listed with its checksum in the bundle's [`Manifest`].

pub mod config;
pub mod export;
pub mod manifest;
pub mod run;
pub mod sweep;

pub use config::{
    ExperimentConfig, QubitSection, QubitSource, RunSection, SweepSection, ThermalSection, TrackingSection,
    SCHEMA_VERSION,
};
pub use export::{export_figure_data, FigureKind};
pub use manifest::{Artifact, Manifest, Status};
pub use run::{run_experiment, run_seed, Bundle, RunSummary, SeedRecords};
pub use sweep::{sweep_grid, SweepAxis, SweepRow, SweepTable};
