use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, QubitSection, QubitSource};
use super::export::{export_records, write_qubit_trace, FigureKind, QUBIT_TRACE_FILE, TRAJECTORY_FILE};
use super::manifest::Manifest;
use crate::dynamics::io::write_trajectory;
use crate::dynamics::{default_stride, run_injection_with, DriveKind, DriveProtocol, Trajectory};
use crate::error::{Error, Result};
use crate::qubit::{
    analytic_post_window, analytic_span, backaction_ratio, evolve_qubit, extract_asymptotics_with, AsymptoticState, BlochState,
    BlochTrajectory, FieldSource, ASYMPTOTIC_FIELD_TOL, GAUSSIAN_CUTOFF, MAX_FRAME_SPACING,
};
use crate::thermal::{harmonic_correlators, sample_thermal, thermal_diagnostics, EDGE_EXCLUSION};
use crate::tracker::{estimate_beta_eff_with, track_core, TrackResult};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.toml";
/// Fraction of the chain a TW-speed soliton covers in the default run time.
pub const DEFAULT_TRANSIT_FRACTION: f64 = 0.8;
/// The post-transit qubit window opens once the core is this many soliton
/// lengths past the qubit.
pub const TRANSIT_CLEARANCE_LAMBDAS: f64 = 10.0;

/// Headline numbers of one seeded run; `None` where a stage did not apply.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub t_red: f64,
    pub velocity: Option<f64>,
    pub beta_eff_velocity: Option<f64>,
    pub beta_eff_shape: Option<f64>,
    pub lambda_fit: Option<f64>,
    pub delta_e: f64,
    pub work: f64,
    pub az_out: Option<f64>,
    pub aperp_out: Option<f64>,
    pub omega: Option<f64>,
    pub qubit_norm_error: Option<f64>,
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "seed",
    "t_red",
    "velocity",
    "beta_eff_velocity",
    "beta_eff_shape",
    "lambda_fit",
    "delta_e",
    "work",
    "az_out",
    "aperp_out",
    "omega",
    "qubit_norm_error",
];

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

impl RunSummary {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.t_red.to_string(),
            opt(self.velocity),
            opt(self.beta_eff_velocity),
            opt(self.beta_eff_shape),
            opt(self.lambda_fit),
            self.delta_e.to_string(),
            self.work.to_string(),
            opt(self.az_out),
            opt(self.aperp_out),
            opt(self.omega),
            opt(self.qubit_norm_error),
        ]
    }
}

/// Output of [`run_experiment`]: one summary per seed, files under `dir`.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub runs: Vec<RunSummary>,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.dir.join(seed_dir_name(seed))
    }
}

pub fn seed_dir_name(seed: u64) -> String {
    format!("seed-{seed}")
}

/// In-memory records of one seeded run.
#[derive(Debug, Clone)]
pub struct SeedRecords {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub track: Option<TrackResult>,
    pub bloch: Option<BlochTrajectory>,
    pub asymptotics: Option<AsymptoticState>,
}

/// Runs thermalize → inject → track → qubit → export for every seed,
/// writing `seed-<seed>/` bundles, `summary.csv`, a resolved `config.toml`
/// and `manifest.txt` under `run.output_dir`.
///
/// A failing stage aborts the experiment; files written so far are kept and
/// the manifest is marked failed with the stage name.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Bundle> {
    config.validate()?;
    let digest = config.digest();
    let root = config.run.output_dir.clone();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut manifest = Manifest::new(&root, &digest);
    let cfg_path = root.join(CONFIG_FILE);
    config.save(&cfg_path)?;
    manifest.record(&cfg_path)?;

    let mut runs = Vec::new();
    let mut failure = None;
    for &seed in &config.run.seeds {
        match run_seed(config, seed, &root.join(seed_dir_name(seed)), Some(&mut manifest)) {
            Ok(rec) => runs.push(rec.summary),
            Err((stage, e)) => {
                failure = Some((stage, e));
                break;
            }
        }
    }
    let summary_path = root.join(SUMMARY_FILE);
    write_summary(&runs, &summary_path)?;
    manifest.record(&summary_path)?;
    if let Some((stage, e)) = failure {
        manifest.fail(stage, &e);
        manifest.write()?;
        return Err(Error::Stage {
            stage,
            digest,
            source: Box::new(e),
        });
    }
    manifest.write()?;
    Ok(Bundle { dir: root, runs, manifest })
}

fn write_summary(runs: &[RunSummary], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", SUMMARY_COLUMNS.join(",")).map_err(io)?;
    for r in runs {
        writeln!(w, "{}", r.csv_fields().join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Default end time: drive window plus a TW-speed transit of 80% of the chain.
pub fn default_t_end(config: &ExperimentConfig, drive: &DriveProtocol) -> Option<f64> {
    config.run.t_end.or_else(|| {
        drive
            .scales()
            .map(|s| drive.half_duration() + DEFAULT_TRANSIT_FRACTION * config.chain.n as f64 / s.v)
    })
}

/// Largest stride keeping chain frames dense enough for the qubit replay.
fn qubit_stride_limit(q: &QubitSection, h: f64, dt: f64) -> usize {
    let bound = q.mu.abs() + q.delta.abs();
    if bound == 0.0 {
        return usize::MAX;
    }
    ((MAX_FRAME_SPACING / (bound * h * dt)) * (1.0 - 1e-9)).floor().max(1.0) as usize
}

/// Executes one seed in memory, optionally writing its bundle into `dir`
/// and recording the files in `manifest`. Errors carry the stage name.
pub fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    mut manifest: Option<&mut Manifest>,
) -> std::result::Result<SeedRecords, (&'static str, Error)> {
    let writing = manifest.is_some();
    let mut emit = |path: &Path| -> Result<()> {
        match manifest.as_deref_mut() {
            Some(m) => m.record(path),
            None => Ok(()),
        }
    };
    if writing {
        std::fs::create_dir_all(dir).map_err(|e| ("export", Error::io(dir, e)))?;
    }
    let params = config.chain;
    let h = params.h;

    // thermalize
    let tspec = config.thermal.spec(seed);
    let initial = sample_thermal(&params, &tspec).map_err(|e| ("thermalize", e))?;
    if writing && tspec.t_red > 0.0 && params.n >= 2 * EDGE_EXCLUSION + 2 {
        let path = dir.join("thermal.csv");
        (|| -> Result<()> {
            let diag = thermal_diagnostics(std::slice::from_ref(&initial), &params)?;
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            diag.write_csv(BufWriter::new(f)).map_err(|e| Error::io(&path, e))?;
            emit(&path)
        })()
        .map_err(|e| ("thermalize", e))?;
    }

    // inject
    let (traj, drive) = (|| -> Result<(Trajectory, DriveProtocol)> {
        let drive = config.drive.build(h)?;
        let t_end = default_t_end(config, &drive)
            .ok_or_else(|| Error::Config("cannot pick t_end for this drive; set run.t_end".into()))?;
        let dt = config.run.dt;
        let steps = ((t_end - drive.start_time()) / dt).round().max(1.0) as u64;
        let stride = match (config.run.sample_stride, &config.qubit) {
            (Some(s), _) => s,
            (None, Some(q)) if q.source == QubitSource::Generated => {
                default_stride(steps).min(qubit_stride_limit(q, h, dt))
            }
            (None, _) => default_stride(steps),
        };
        let traj = run_injection_with(&params, &drive, &initial, t_end, dt, stride, config.run.integrator)?;
        Ok((traj, drive))
    })()
    .map_err(|e| ("inject", e))?;
    if writing && config.run.write_trajectory {
        let path = dir.join(TRAJECTORY_FILE);
        (|| -> Result<()> {
            write_trajectory(&traj, &path)?;
            emit(&path)?;
            emit(&crate::dynamics::io::meta_path(&path))
        })()
        .map_err(|e| ("inject", e))?;
    }

    // track
    let track = if drive.kind == DriveKind::None {
        None
    } else {
        let opts = config.tracking_options();
        let tr = track_core(&traj, &opts)
            .and_then(|t| estimate_beta_eff_with(&traj, &t, h, &opts))
            .map_err(|e| ("track", e))?;
        if writing {
            (|| -> Result<()> {
                let path = dir.join("track.txt");
                let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
                tr.write_record(BufWriter::new(f)).map_err(|e| Error::io(&path, e))?;
                emit(&path)?;
                let path = dir.join("core.csv");
                let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
                tr.write_positions_csv(BufWriter::new(f)).map_err(|e| Error::io(&path, e))?;
                emit(&path)
            })()
            .map_err(|e| ("track", e))?;
        }
        Some(tr)
    };

    // qubit
    let (bloch, asym) = match &config.qubit {
        None => (None, None),
        Some(q) => {
            let (bt, asym) =
                evolve_configured_qubit(q, &drive, &traj, track.as_ref(), tspec.t_red).map_err(|e| ("qubit", e))?;
            if writing {
                (|| -> Result<()> {
                    let path = dir.join("qubit.txt");
                    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
                    asym.write_record(&mut w).map_err(|e| Error::io(&path, e))?;
                    if drive.kind != DriveKind::None {
                        let ba = backaction_ratio(&q.params(), drive.spec.beta, h, q.s_over_hbar)?;
                        writeln!(w, "backaction_ratio = {}", ba.ratio).map_err(|e| Error::io(&path, e))?;
                        writeln!(w, "backaction_non_negligible = {}", ba.non_negligible)
                            .map_err(|e| Error::io(&path, e))?;
                    }
                    writeln!(w, "norm_error = {}", bt.max_norm_error()).map_err(|e| Error::io(&path, e))?;
                    w.flush().map_err(|e| Error::io(&path, e))?;
                    drop(w);
                    emit(&path)?;
                    let path = dir.join(QUBIT_TRACE_FILE);
                    write_qubit_trace(&bt, &path)?;
                    emit(&path)
                })()
                .map_err(|e| ("qubit", e))?;
            }
            (Some(bt), Some(asym))
        }
    };

    // export
    if writing {
        for name in &config.run.exports {
            let kind: FigureKind = name.parse().map_err(|e| ("export", e))?;
            if kind.needs_qubit() && bloch.is_none() {
                continue;
            }
            let files = export_records(kind, dir, Some(&traj), bloch.as_ref(), config.run.density_site_every)
                .map_err(|e| ("export", e))?;
            for f in files {
                emit(&f).map_err(|e| ("export", e))?;
            }
        }
    }

    let summary = RunSummary {
        seed,
        t_red: tspec.t_red,
        velocity: track.as_ref().map(|t| t.velocity),
        beta_eff_velocity: track.as_ref().and_then(|t| t.beta_eff_velocity),
        beta_eff_shape: track.as_ref().and_then(|t| t.beta_eff_shape),
        lambda_fit: track.as_ref().and_then(|t| t.lambda_fit),
        delta_e: traj.ledger.delta_e(),
        work: traj.ledger.work_integral,
        az_out: asym.map(|a| a.az_out),
        aperp_out: asym.map(|a| a.aperp_out),
        omega: asym.and_then(|a| a.omega),
        qubit_norm_error: bloch.as_ref().map(BlochTrajectory::max_norm_error),
    };
    Ok(SeedRecords {
        summary,
        trajectory: traj,
        track,
        bloch,
        asymptotics: asym,
    })
}

/// Default post-transit field tolerance: tight for the ideal source; for a
/// replayed chain, room for radiated spin waves plus six thermal standard
/// deviations of the transverse spin.
pub fn default_field_tol(source: QubitSource, t_red: f64, h: f64) -> f64 {
    match source {
        QubitSource::Analytic => ASYMPTOTIC_FIELD_TOL,
        QubitSource::Generated => 0.05 + 6.0 * (2.0 * harmonic_correlators(t_red, h).0).sqrt(),
    }
}

fn evolve_configured_qubit(
    q: &QubitSection,
    drive: &DriveProtocol,
    traj: &Trajectory,
    track: Option<&TrackResult>,
    t_red: f64,
) -> Result<(BlochTrajectory, AsymptoticState)> {
    let qp = q.params();
    let h = traj.params.h;
    let tol = q.field_tol.unwrap_or_else(|| default_field_tol(q.source, t_red, h));
    match q.source {
        QubitSource::Analytic => {
            if drive.kind == DriveKind::None {
                return Err(Error::Config("analytic qubit source needs a soliton drive".into()));
            }
            let spec = drive.spec;
            let span = analytic_span(&spec, h, qp.alpha, drive.window);
            let window = analytic_post_window(&spec, h, qp.alpha, drive.window);
            let bt = evolve_qubit(FieldSource::AnalyticTw { spec, h }, &qp, BlochState::up(), span, q.dtau)?;
            let asym = extract_asymptotics_with(&bt, &qp, window, tol)?;
            Ok((bt, asym))
        }
        QubitSource::Generated => {
            let (span, window) = generated_span(traj, track, &qp, drive.window)?;
            let bt = evolve_qubit(FieldSource::Trajectory(traj), &qp, BlochState::up(), span, q.dtau)?;
            let asym = extract_asymptotics_with(&bt, &qp, window, tol)?;
            Ok((bt, asym))
        }
    }
}

/// Qubit span and asymptotic window for a replayed chain, placed on the
/// tracked transit the way the analytic source places them: the qubit is
/// prepared `Ξ` soliton lengths before the core reaches it, and `a^z` is
/// averaged over `Ξ` lengths of travel once the core has cleared the qubit
/// by [`TRANSIT_CLEARANCE_LAMBDAS`], stopping short of any reflected core.
/// Without a tracked core the whole run is used.
fn generated_span(
    traj: &Trajectory,
    track: Option<&TrackResult>,
    qp: &crate::qubit::QubitParams,
    window_widths: f64,
) -> Result<((f64, f64), (f64, f64))> {
    let h = traj.params.h;
    let full = (h * traj.t0(), h * traj.t_last());
    let Some(track) = track else {
        return Ok((full, (0.5 * (full.0 + full.1), full.1)));
    };
    let site = qp.site(traj.params.n) as f64;
    let lambda = track
        .lambda_fit
        .or_else(|| traj.drive.scales().map(|s| s.lambda))
        .unwrap_or(1.0);
    let pad = GAUSSIAN_CUTOFF * qp.alpha;
    let main = track.main_leg();
    if !(main.velocity > 0.0) {
        return Err(Error::Precondition("tracked core does not move towards the qubit".into()));
    }
    let at = |x: f64| h * (x - main.intercept) / main.velocity;
    let prepare = at(site - window_widths * lambda - pad).max(full.0);
    let start = at(site + TRANSIT_CLEARANCE_LAMBDAS * lambda + pad);
    let mut end = at(site + (TRANSIT_CLEARANCE_LAMBDAS + window_widths) * lambda + pad).min(full.1);
    for leg in &track.legs {
        if leg.t_start > main.t_end && leg.velocity < 0.0 {
            end = end.min(h * (site + TRANSIT_CLEARANCE_LAMBDAS * lambda + pad - leg.intercept) / leg.velocity);
        }
    }
    if !(end - start > 0.0) {
        return Err(Error::Precondition(format!(
            "no post-transit window: core clears the qubit at tau = {start:.3}, run ends at {end:.3}"
        )));
    }
    Ok(((prepare, end), (start, end)))
}
