use serde::{Deserialize, Serialize};

use super::drive::{make_drive, DriveKind, DriveProtocol};
use super::integrator::{Integrator, Stepper};
use crate::chain::{chain_energy, energy_unchecked, ChainParams, SpinConfig};
use crate::error::{Error, Result};
use crate::soliton::{tw_profile, SolitonSpec};
use crate::vec3::Vec3;

/// Stored-frame budget used by [`default_stride`].
pub const MAX_FRAMES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyLedger {
    /// Chain energy (sites 1..N) at the first and last step.
    pub e_initial: f64,
    pub e_final: f64,
    /// `∫ -Σ ḃ_n·s_n dt` over the run (trapezoidal per step).
    pub work_integral: f64,
    /// Chain-drive coupling energy at the first and last step.
    pub coupling_initial: f64,
    pub coupling_final: f64,
}

impl EnergyLedger {
    pub fn delta_e(&self) -> f64 {
        self.e_final - self.e_initial
    }

    /// Work minus the change of chain plus coupling energy; zero for exact
    /// dynamics.
    pub fn imbalance(&self) -> f64 {
        self.work_integral - (self.delta_e() + self.coupling_final - self.coupling_initial)
    }
}

/// A sampled run: frames every `stride` steps starting at `times[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ChainParams,
    pub drive: DriveProtocol,
    pub dt: f64,
    pub stride: usize,
    pub times: Vec<f64>,
    pub frames: Vec<SpinConfig>,
    /// Drive waveform `s₀(t)` at each stored time.
    pub drive_record: Vec<Vec3>,
    pub ledger: EnergyLedger,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one frame")
    }

    /// Frames of the exact travelling profile on the lattice: the core is at
    /// site `x0` at time `t0` and moves with the closed-form velocity.
    pub fn analytic_tw(
        params: &ChainParams,
        spec: &SolitonSpec,
        x0: f64,
        t0: f64,
        interval: f64,
        n_frames: usize,
    ) -> Result<Trajectory> {
        params.validate()?;
        let drive = make_drive(*spec, params.h, DriveKind::IdealTw, None)?;
        let sc = *drive.scales().expect("ideal drive has scales");
        let sign = spec.direction.sign();
        let times: Vec<f64> = (0..n_frames).map(|k| t0 + k as f64 * interval).collect();
        let frames = times
            .iter()
            .map(|t| {
                let core = x0 + sign * sc.v * (t - t0);
                let spins = (1..=params.n)
                    .map(|n| tw_profile(spec, (n as f64 - core) / sc.lambda))
                    .collect();
                SpinConfig::from_raw(spins)
            })
            .collect();
        let drive_record = times.iter().map(|t| drive.waveform(*t)).collect();
        Ok(Trajectory {
            params: *params,
            drive,
            dt: interval,
            stride: 1,
            times,
            frames,
            drive_record,
            ledger: EnergyLedger {
                e_initial: 0.0,
                e_final: 0.0,
                work_integral: 0.0,
                coupling_initial: 0.0,
                coupling_final: 0.0,
            },
        })
    }

    /// Sample time of frame `k`; shared by the runner and the file reader.
    pub(crate) fn sample_time(t0: f64, dt: f64, stride: usize, k: usize) -> f64 {
        t0 + (k * stride) as f64 * dt
    }
}

/// Stride keeping a run of `steps` steps within [`MAX_FRAMES`] stored frames.
pub fn default_stride(steps: u64) -> usize {
    (steps.div_ceil(MAX_FRAMES as u64 - 1)).max(1) as usize
}

/// Integrates from the opening of the drive window (`t = 0` when undriven)
/// up to `t_end`, storing every `sample_stride`-th step.
pub fn run_injection(
    params: &ChainParams,
    drive: &DriveProtocol,
    initial: &SpinConfig,
    t_end: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<Trajectory> {
    run_injection_with(params, drive, initial, t_end, dt, sample_stride, Integrator::Strang2)
}

pub fn run_injection_with(
    params: &ChainParams,
    drive: &DriveProtocol,
    initial: &SpinConfig,
    t_end: f64,
    dt: f64,
    sample_stride: usize,
    scheme: Integrator,
) -> Result<Trajectory> {
    params.validate()?;
    let e_initial = chain_energy(initial, params)?;
    if sample_stride == 0 {
        return Err(Error::Domain("sample stride must be >= 1".into()));
    }
    let stepper = Stepper::new(params, drive, dt, scheme)?;
    let t0 = drive.start_time();
    if !(t_end > t0) {
        return Err(Error::Domain(format!("t_end = {t_end} precedes run start {t0}")));
    }
    let steps = ((t_end - t0) / dt).round() as u64;
    let step_time = |k: u64| t0 + k as f64 * dt;

    let mut spins = initial.spins().to_vec();
    let n_frames = steps as usize / sample_stride + 1;
    let mut times = Vec::with_capacity(n_frames);
    let mut frames = Vec::with_capacity(n_frames);
    let mut drive_record = Vec::with_capacity(n_frames);
    let mut record = |k: u64, spins: &[Vec3]| {
        let t = Trajectory::sample_time(t0, dt, sample_stride, k as usize / sample_stride);
        times.push(t);
        frames.push(SpinConfig::from_raw(spins.to_vec()));
        drive_record.push(drive.waveform(t));
    };
    record(0, &spins);

    let coupling_initial = drive.coupling_energy(&spins, t0);
    let mut work = 0.0;
    let mut power = drive.power(&spins, t0);
    for k in 0..steps {
        let t = step_time(k);
        stepper.step(&mut spins, t, dt, k)?;
        let next = drive.power(&spins, step_time(k + 1));
        work += 0.5 * dt * (power + next);
        power = next;
        if (k + 1) % sample_stride as u64 == 0 {
            record(k + 1, &spins);
        }
    }
    let t_final = step_time(steps);
    let ledger = EnergyLedger {
        e_initial,
        e_final: energy_unchecked(&spins, params.h),
        work_integral: work,
        coupling_initial,
        coupling_final: drive.coupling_energy(&spins, t_final),
    };
    Ok(Trajectory {
        params: *params,
        drive: drive.clone(),
        dt,
        stride: sample_stride,
        times,
        frames,
        drive_record,
        ledger,
    })
}
