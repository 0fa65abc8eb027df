//! Driven time evolution of the chain.

pub mod drive;
pub mod injection;
pub mod integrator;
pub mod io;

pub use drive::{make_drive, DriveDescriptor, DriveKind, DriveProtocol, DEFAULT_WINDOW};
pub use injection::{default_stride, run_injection, run_injection_with, EnergyLedger, Trajectory, MAX_FRAMES};
pub use integrator::{integrate_step, integrate_step_with, Integrator};
