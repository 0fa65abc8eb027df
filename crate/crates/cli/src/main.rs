//! `spinwire` — run soliton-injection experiments from a TOML config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinwire::harness::{
    export_figure_data, run_experiment, sweep_grid, ExperimentConfig, Manifest, QubitSource, RunSummary, SweepAxis,
};
use spinwire::soliton::{tw_scales, VALIDITY_WARN};
use spinwire::thermal::{harmonic_correlators, sample_thermal, thermal_diagnostics};
use spinwire::Error;

#[derive(Parser)]
#[command(name = "spinwire", version, about = "Soliton injection in classical spin chains and qubit control")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `run.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed, overriding `run.seeds`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thermalize, inject and track; no qubit stage.
    Inject,
    /// Sample thermal initial states and report their correlators.
    Thermalize {
        /// Also write each sampled configuration as `initial-seed-<seed>.csv`.
        #[arg(long)]
        write_configs: bool,
    },
    /// Full pipeline including the qubit stage.
    Qubit {
        /// Drive the qubit with the ideal travelling soliton instead of the
        /// simulated chain.
        #[arg(long)]
        analytic: bool,
    },
    /// Cartesian parameter sweep; axes come from `[sweep]` and `--axis`.
    Sweep {
        /// `path=v1,v2,...`, e.g. `drive.tan_beta=0.5,1,2`.
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-export figure data from a seed bundle directory.
    Export {
        /// Bundle directory, e.g. `out/seed-0`.
        #[arg(long)]
        bundle: PathBuf,
        /// `density`, `bloch` or `timeseries`.
        #[arg(long)]
        kind: String,
    },
    /// Print TW soliton scales.
    Scales {
        /// Reduced field; with no arguments the three reference cases are shown.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long = "tan-beta", value_delimiter = ',')]
        tan_beta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Domain(_) | Error::Shape(_) | Error::UnknownKind(_) | Error::Format(_) => 2,
        Error::Numerical { .. } | Error::Stability(_) | Error::Invariant(_) | Error::Precondition(_) => 3,
        Error::NoSoliton | Error::InsufficientFrames { .. } | Error::Supersonic { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(cli: &Cli) -> spinwire::Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --config <file>".into()))?;
    // An unreadable config file is a usage error, not a run failure.
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        e => e,
    })?;
    if let Some(out) = &cli.out {
        cfg.run.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.run.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn say(cli: &Cli, line: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", line.as_ref());
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn report_runs(cli: &Cli, runs: &[RunSummary], dir: &Path) {
    say(cli, format!("wrote {}", dir.display()));
    for r in runs {
        say(
            cli,
            format!(
                "seed {:>6}  v {}  beta'(v) {}  beta'(shape) {}  dE {:.6}  az_out {}  omega {}",
                r.seed,
                fmt_opt(r.velocity),
                fmt_opt(r.beta_eff_velocity),
                fmt_opt(r.beta_eff_shape),
                r.delta_e,
                fmt_opt(r.az_out),
                fmt_opt(r.omega),
            ),
        );
    }
}

fn run(cli: &Cli) -> spinwire::Result<()> {
    match &cli.command {
        Command::Inject => {
            let mut cfg = load(cli)?;
            cfg.qubit = None;
            let bundle = run_experiment(&cfg)?;
            report_runs(cli, &bundle.runs, &bundle.dir);
        }
        Command::Qubit { analytic } => {
            let mut cfg = load(cli)?;
            let q = cfg
                .qubit
                .as_mut()
                .ok_or_else(|| Error::Config("config has no [qubit] section".into()))?;
            if *analytic {
                q.source = QubitSource::Analytic;
            }
            cfg.validate()?;
            let bundle = run_experiment(&cfg)?;
            report_runs(cli, &bundle.runs, &bundle.dir);
        }
        Command::Thermalize { write_configs } => thermalize(cli, &load(cli)?, *write_configs)?,
        Command::Sweep { axes, threads } => {
            let mut cfg = load(cli)?;
            let mut all: Vec<SweepAxis> = cfg
                .sweep
                .as_ref()
                .map(|s| s.axes.iter().map(|(p, v)| SweepAxis::new(p.clone(), v.clone())).collect())
                .unwrap_or_default();
            for spec in axes {
                let axis = SweepAxis::parse(spec)?;
                all.retain(|a| a.path != axis.path);
                all.push(axis);
            }
            if let Some(t) = threads {
                let sweep = cfg.sweep.get_or_insert_with(|| spinwire::harness::SweepSection {
                    axes: Default::default(),
                    threads: None,
                    max_cells: spinwire::harness::config::DEFAULT_MAX_CELLS,
                });
                sweep.threads = Some(*t);
            }
            let table = sweep_grid(&cfg, &all)?;
            let failed = table.rows.iter().filter(|r| r.summary.is_none()).count();
            say(
                cli,
                format!(
                    "wrote {} ({} cells, {} failed)",
                    table.dir.join(spinwire::harness::sweep::SWEEP_FILE).display(),
                    table.rows.len(),
                    failed
                ),
            );
        }
        Command::Export { bundle, kind } => {
            for f in export_figure_data(bundle, kind)? {
                say(cli, format!("wrote {}", f.display()));
            }
        }
        Command::Scales { h, tan_beta, beta } => scales(cli, *h, tan_beta, beta)?,
    }
    Ok(())
}

fn thermalize(cli: &Cli, cfg: &ExperimentConfig, write_configs: bool) -> spinwire::Result<()> {
    let root = &cfg.run.output_dir;
    std::fs::create_dir_all(root).map_err(|e| Error::Config(format!("{}: {e}", root.display())))?;
    let mut manifest = Manifest::new(root, cfg.digest());
    let mut configs = Vec::new();
    for &seed in &cfg.run.seeds {
        let sample = sample_thermal(&cfg.chain, &cfg.thermal.spec(seed))?;
        if write_configs {
            let path = root.join(format!("initial-seed-{seed}.csv"));
            let io = |e: std::io::Error| Error::Config(format!("{}: {e}", path.display()));
            let mut w = BufWriter::new(File::create(&path).map_err(io)?);
            writeln!(w, "n,sx,sy,sz").map_err(io)?;
            for (i, s) in sample.spins().iter().enumerate() {
                writeln!(w, "{},{},{},{}", i + 1, s[0], s[1], s[2]).map_err(io)?;
            }
            w.flush().map_err(io)?;
            drop(w);
            manifest.record(&path)?;
        }
        configs.push(sample);
    }
    let diag = thermal_diagnostics(&configs, &cfg.chain)?;
    let path = root.join("thermal_diagnostics.csv");
    let file = File::create(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    diag.write_csv(BufWriter::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    manifest.record(&path)?;
    manifest.write()?;
    let (onsite, nn) = harmonic_correlators(cfg.thermal.t_red, cfg.chain.h);
    say(cli, format!("{} configurations, T = {}", diag.configs, cfg.thermal.t_red));
    say(
        cli,
        format!(
            "<(sx)^2>        = {:.6e} +- {:.1e}  (harmonic {:.6e})",
            diag.onsite_x.mean, diag.onsite_x.stderr, onsite
        ),
    );
    say(
        cli,
        format!(
            "<(sx - sx')^2>  = {:.6e} +- {:.1e}  (harmonic {:.6e})",
            diag.nn_diff_x.mean, diag.nn_diff_x.stderr, nn
        ),
    );
    say(cli, format!("wrote {}", path.display()));
    Ok(())
}

fn scales(cli: &Cli, h: Option<f64>, tan_beta: &[f64], beta: &[f64]) -> spinwire::Result<()> {
    let mut cases: Vec<(f64, f64)> = Vec::new();
    match h {
        None if tan_beta.is_empty() && beta.is_empty() => {
            cases.extend([(0.05, 0.2f64.atan()), (0.05, 2f64.atan()), (1.0, 3f64.atan())]);
        }
        None => return Err(Error::Config("--tan-beta/--beta need --h".into())),
        Some(h) => {
            cases.extend(tan_beta.iter().map(|t| (h, t.atan())));
            cases.extend(beta.iter().map(|&b| (h, b)));
            if cases.is_empty() {
                return Err(Error::Config("give --tan-beta or --beta".into()));
            }
        }
    }
    say(
        cli,
        format!(
            "{:>8} {:>10} {:>10} {:>12} {:>12} {:>12} {:>10} {:>9}",
            "h", "tan_beta", "beta", "lambda", "tau", "epsilon", "v", "d/lambda"
        ),
    );
    for (h, b) in cases {
        let s = tw_scales(b, h)?;
        let flag = if s.validity_ratio > VALIDITY_WARN { " !" } else { "" };
        say(
            cli,
            format!(
                "{:>8} {:>10.6} {:>10.6} {:>12.6} {:>12.6} {:>12.6} {:>10.6} {:>9.4}{flag}",
                h,
                b.tan(),
                b,
                s.lambda,
                s.tau,
                s.epsilon,
                s.v,
                s.validity_ratio
            ),
        );
    }
    Ok(())
}
