use std::collections::BTreeSet;
use std::path::Path;

use spinwire::dynamics::DriveDescriptor;
use spinwire::harness::{
    export_figure_data, run_experiment, sweep_grid, ExperimentConfig, Manifest, QubitSection, QubitSource, Status,
    SweepAxis,
};
use spinwire::{tw_scales, ChainParams, Error, QubitParams};

fn config(n: usize, h: f64, tan_beta: f64, dir: &Path) -> ExperimentConfig {
    ExperimentConfig::new(ChainParams::new(n, h).unwrap(), DriveDescriptor::ideal_tan_beta(tan_beta), dir)
}

fn with_qubit(mut cfg: ExperimentConfig, source: QubitSource) -> ExperimentConfig {
    cfg.qubit = Some(QubitSection::new(QubitParams::new(1.0, 1.0, 0.0), source));
    cfg
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn all_files(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel);
            }
        }
    }
    out
}

fn assert_manifest_complete(root: &Path) {
    let text = std::fs::read_to_string(root.join("manifest.txt")).unwrap();
    let m = Manifest::parse(root, &text).unwrap();
    let listed: BTreeSet<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    let mut on_disk = all_files(root);
    on_disk.remove("manifest.txt");
    assert_eq!(listed, on_disk);
    assert!(m.verify().unwrap().is_empty());
}

#[test]
fn wide_soliton_density_slope_matches_tw_velocity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(1000, 0.05, 0.2, dir.path());
    cfg.run.exports = vec!["density".into()];
    cfg.run.write_trajectory = false;
    cfg.run.t_end = Some(1800.0);
    let bundle = run_experiment(&cfg).unwrap();
    let v_tw = tw_scales(0.2f64.atan(), 0.05).unwrap().v;

    // Per-frame s^z minimum straight from the exported CSV.
    let rows = read_csv(&bundle.seed_dir(0).join("density.csv"));
    let mut frames: Vec<(f64, f64, f64)> = Vec::new();
    for r in rows {
        match frames.last_mut() {
            Some(f) if f.0 == r[0] => {
                if r[2] < f.2 {
                    *f = (r[0], r[1], r[2]);
                }
            }
            _ => frames.push((r[0], r[1], r[2])),
        }
    }
    let pts: Vec<(f64, f64)> = frames
        .iter()
        .filter(|f| f.2 < 0.95 && f.1 > 150.0 && f.1 < 850.0)
        .map(|f| (f.0, f.1))
        .collect();
    assert!(pts.len() > 100);
    let m = pts.len() as f64;
    let (tm, nm) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let slope = pts.iter().map(|p| (p.0 - tm) * (p.1 - nm)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - tm).powi(2)).sum::<f64>();
    assert!((slope / v_tw - 1.0).abs() < 0.02, "slope {slope} vs {v_tw}");
    assert!((bundle.runs[0].velocity.unwrap() / v_tw - 1.0).abs() < 0.02);
    assert_manifest_complete(dir.path());
}

#[test]
fn generated_soliton_flips_qubit_and_exports_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_qubit(config(500, 0.2, 2.0, dir.path()), QubitSource::Generated);
    cfg.run.t_end = Some(800.0);
    let bundle = run_experiment(&cfg).unwrap();
    let run = &bundle.runs[0];
    assert!(run.az_out.unwrap() < -0.9, "az_out {:?}", run.az_out);
    assert!(run.qubit_norm_error.unwrap() < 1e-10);
    let seed_dir = bundle.seed_dir(0);

    let path = read_csv(&seed_dir.join("bloch_path.csv"));
    assert_eq!(path[0][2], 1.0);
    assert!(path.last().unwrap()[2] < -0.9);

    // a^z turns over within one soliton time-width of the s̃^z dip.
    let ts = read_csv(&seed_dir.join("timeseries.csv"));
    let k_field = (0..ts.len()).min_by(|&a, &b| ts[a][2].total_cmp(&ts[b][2])).unwrap();
    let dz: Vec<f64> = ts.windows(2).map(|w| (w[1][1] - w[0][1]).abs()).collect();
    let k_fast = (0..dz.len()).max_by(|&a, &b| dz[a].total_cmp(&dz[b])).unwrap();
    let width_tau = 0.2 * tw_scales(2.0f64.atan(), 0.2).unwrap().tau;
    assert!((ts[k_fast][0] - ts[k_field][0]).abs() < width_tau);

    // Core trace in the density export is the tracker's.
    let core = read_csv(&seed_dir.join("core.csv"));
    let rows = read_csv(&seed_dir.join("density.csv"));
    let mut checked = 0;
    let times: BTreeSet<u64> = rows.iter().map(|r| r[0].to_bits()).collect();
    for c in core.iter().filter(|c| times.contains(&c[0].to_bits())).step_by(20) {
        let frame: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] == c[0]).collect();
        let min = frame.iter().min_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
        let below: Vec<_> = frame.iter().filter(|r| r[2] < 0.0).collect();
        assert!(below.iter().all(|r| (r[1] - min[1]).abs() <= 3.0), "dip is not unique");
        assert!((min[1] - c[1]).abs() < 1.0);
        checked += 1;
    }
    assert!(checked > 3);

    // Re-export from disk reproduces the in-run files.
    let before = std::fs::read(seed_dir.join("timeseries.csv")).unwrap();
    export_figure_data(&seed_dir, "timeseries").unwrap();
    assert_eq!(std::fs::read(seed_dir.join("timeseries.csv")).unwrap(), before);
    let before = std::fs::read(seed_dir.join("density.csv")).unwrap();
    export_figure_data(&seed_dir, "density").unwrap();
    assert_eq!(std::fs::read(seed_dir.join("density.csv")).unwrap(), before);
    assert!(matches!(export_figure_data(&seed_dir, "movie"), Err(Error::UnknownKind(_))));
    assert_manifest_complete(dir.path());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = with_qubit(config(200, 0.2, 2.0, a.path()), QubitSource::Generated);
    cfg.thermal.t_red = 0.002;
    cfg.run.seeds = vec![11, 12];
    cfg.run.t_end = Some(380.0);
    cfg.tracking = Some(spinwire::harness::TrackingSection {
        end_margin_lambdas: Some(2.0),
        ..Default::default()
    });
    run_experiment(&cfg).unwrap();
    cfg.run.output_dir = b.path().to_path_buf();
    run_experiment(&cfg).unwrap();
    let (fa, fb) = (all_files(a.path()), all_files(b.path()));
    assert_eq!(fa, fb);
    for f in &fa {
        if f == "config.toml" || f == "manifest.txt" {
            continue; // these embed the output directory
        }
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failing_stage_is_named_and_marked() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(200, 0.2, 2.0, dir.path());
    cfg.run.t_end = Some(5.0);
    let err = run_experiment(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, digest, .. } => {
            assert_eq!(*stage, "track");
            assert_eq!(digest, &cfg.digest());
        }
        other => panic!("unexpected {other}"),
    }
    assert!(matches!(err.root(), Error::NoSoliton | Error::InsufficientFrames { .. }));
    let text = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let m = Manifest::parse(dir.path(), &text).unwrap();
    assert!(matches!(m.status, Status::Failed { ref stage, .. } if stage == "track"));
    // The trajectory written before the failure is kept and listed.
    assert!(m.artifacts.iter().any(|a| a.path == "seed-0/trajectory.bin"));
    assert_manifest_complete(dir.path());
}

#[test]
fn analytic_beta_sweep_flips_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_qubit(config(120, 0.2, 2.0, dir.path()), QubitSource::Analytic);
    cfg.drive = DriveDescriptor {
        beta: Some(0.3),
        tan_beta: None,
        ..cfg.drive
    };
    cfg.run.exports = vec![];
    cfg.run.write_trajectory = false;
    let table = sweep_grid(&cfg, &[SweepAxis::floats("drive.beta", &[0.3, 0.6, 0.9])]).unwrap();
    assert_eq!(table.rows.len(), 3);
    for row in &table.rows {
        let s = row.summary.as_ref().unwrap_or_else(|| panic!("{:?}", row.error));
        assert!(s.az_out.unwrap() < -0.99, "{row:?}");
        assert!((s.omega.unwrap() - 2.0).abs() < 1e-3, "{row:?}");
    }
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("cell,drive.beta,status,"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn empty_sweep_matches_single_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = config(150, 0.2, 2.0, a.path());
    cfg.run.exports = vec![];
    let table = sweep_grid(&cfg, &[]).unwrap();
    assert_eq!(table.rows.len(), 1);
    cfg.run.output_dir = b.path().to_path_buf();
    let bundle = run_experiment(&cfg).unwrap();
    assert_eq!(table.rows[0].summary.as_ref().unwrap(), &bundle.runs[0]);
}

#[test]
fn temperature_sweep_detects_soliton_in_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(500, 0.2, 2.0, dir.path());
    cfg.run.exports = vec![];
    cfg.run.write_trajectory = false;
    cfg.run.t_end = Some(600.0);
    cfg.run.seeds = vec![5];
    let table = sweep_grid(&cfg, &[SweepAxis::floats("thermal.t_red", &[0.0, 0.002, 0.01])]).unwrap();
    assert_eq!(table.rows.len(), 3);
    for row in &table.rows {
        let s = row.summary.as_ref().unwrap_or_else(|| panic!("{:?}", row.error));
        assert!(s.velocity.unwrap() > 0.0);
    }
    let seeds: BTreeSet<u64> = table.rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn sweep_keeps_going_past_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(100, 0.2, 2.0, dir.path());
    cfg.run.exports = vec![];
    cfg.run.write_trajectory = false;
    cfg.run.t_end = Some(150.0);
    let axes = [
        SweepAxis::floats("chain.h", &[0.2, -1.0]),
        SweepAxis::floats("drive.tan_beta", &[1.5, 2.0, 3.0]),
    ];
    let table = sweep_grid(&cfg, &axes).unwrap();
    assert_eq!(table.rows.len(), 6);
    let failed: Vec<_> = table.rows.iter().filter(|r| r.summary.is_none()).collect();
    assert_eq!(failed.len(), 3);
    assert!(failed.iter().all(|r| r.values[0] == toml::Value::Float(-1.0) && r.error.is_some()));

    assert!(matches!(
        sweep_grid(&cfg, &[SweepAxis::floats("chain.spin_length", &[1.0])]),
        Err(Error::Config(_))
    ));
    let mut small = cfg.clone();
    small.sweep = Some(spinwire::harness::SweepSection {
        axes: Default::default(),
        threads: Some(2),
        max_cells: 4,
    });
    assert!(matches!(sweep_grid(&small, &axes), Err(Error::Config(_))));
}
