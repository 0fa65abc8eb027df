use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dynamics::io::{read_trajectory, write_density_csv};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::qubit::BlochTrajectory;

pub const TRAJECTORY_FILE: &str = "trajectory.bin";
pub const QUBIT_TRACE_FILE: &str = "qubit_trace.csv";
/// The density export keeps at most this many frames.
pub const DENSITY_MAX_FRAMES: usize = 500;
const HEATMAP_CELLS: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Density,
    Bloch,
    Timeseries,
}

impl FigureKind {
    pub const ALL: [FigureKind; 3] = [FigureKind::Density, FigureKind::Bloch, FigureKind::Timeseries];

    pub fn name(self) -> &'static str {
        match self {
            FigureKind::Density => "density",
            FigureKind::Bloch => "bloch",
            FigureKind::Timeseries => "timeseries",
        }
    }

    pub fn needs_qubit(self) -> bool {
        self != FigureKind::Density
    }
}

impl FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the figure data of `kind` into `dir` from in-memory records and
/// returns the files written.
pub fn export_records(
    kind: FigureKind,
    dir: &Path,
    traj: Option<&Trajectory>,
    bloch: Option<&BlochTrajectory>,
    site_every: usize,
) -> Result<Vec<PathBuf>> {
    match kind {
        FigureKind::Density => {
            let traj = traj.ok_or_else(|| Error::Precondition("density export needs a trajectory".into()))?;
            let csv = dir.join("density.csv");
            let frame_every = traj.len().div_ceil(DENSITY_MAX_FRAMES).max(1);
            write_density_csv(traj, create(&csv)?, frame_every, site_every).map_err(|e| Error::io(&csv, e))?;
            let svg = dir.join("density.svg");
            std::fs::write(&svg, density_svg(traj)).map_err(|e| Error::io(&svg, e))?;
            Ok(vec![csv, svg])
        }
        FigureKind::Bloch => {
            let bt = bloch.ok_or_else(|| Error::Precondition("bloch export needs a qubit record".into()))?;
            let path = dir.join("bloch_path.csv");
            bt.write_path_csv(create(&path)?, 1).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        FigureKind::Timeseries => {
            let bt = bloch.ok_or_else(|| Error::Precondition("timeseries export needs a qubit record".into()))?;
            let path = dir.join("timeseries.csv");
            bt.write_timeseries_csv(create(&path)?, 1).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}

/// Re-exports figure data from a seed bundle directory written by
/// `run_experiment`; `kind` is `density`, `bloch` or `timeseries`.
pub fn export_figure_data(bundle: &Path, kind: &str) -> Result<Vec<PathBuf>> {
    let kind: FigureKind = kind.parse()?;
    match kind {
        FigureKind::Density => {
            let traj = read_trajectory(&bundle.join(TRAJECTORY_FILE))?;
            export_records(kind, bundle, Some(&traj), None, 1)
        }
        _ => {
            let bt = read_qubit_trace(&bundle.join(QUBIT_TRACE_FILE))?;
            export_records(kind, bundle, None, Some(&bt), 1)
        }
    }
}

pub fn write_qubit_trace(bt: &BlochTrajectory, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "tau,ax,ay,az,stilde_x,stilde_y,stilde_z").map_err(io)?;
    for ((t, a), s) in bt.taus.iter().zip(&bt.states).zip(&bt.field) {
        writeln!(w, "{t},{},{},{},{},{},{}", a[0], a[1], a[2], s[0], s[1], s[2]).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_qubit_trace(path: &Path) -> Result<BlochTrajectory> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bt = BlochTrajectory {
        taus: Vec::new(),
        states: Vec::new(),
        field: Vec::new(),
    };
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if k == 0 {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("{}:{}: not numeric", path.display(), k + 1)))?;
        if v.len() != 7 {
            return Err(Error::Format(format!("{}:{}: expected 7 columns", path.display(), k + 1)));
        }
        bt.taus.push(v[0]);
        bt.states.push([v[1], v[2], v[3]]);
        bt.field.push([v[4], v[5], v[6]]);
    }
    if bt.taus.is_empty() {
        return Err(Error::Format(format!("{} holds no samples", path.display())));
    }
    Ok(bt)
}

/// White (`s^z = 1`) through green (`0`) to blue (`-1`).
fn shade(sz: f64) -> (u8, u8, u8) {
    let lerp = |a: f64, b: f64, u: f64| (a + (b - a) * u).round() as u8;
    let sz = sz.clamp(-1.0, 1.0);
    if sz >= 0.0 {
        let u = 1.0 - sz;
        (lerp(255.0, 40.0, u), lerp(255.0, 170.0, u), lerp(255.0, 80.0, u))
    } else {
        let u = -sz;
        (lerp(40.0, 20.0, u), lerp(170.0, 40.0, u), lerp(80.0, 160.0, u))
    }
}

/// Self-contained SVG heatmap of `s^z_n(t)`: sites left to right, time
/// upward, block-averaged onto at most 240×240 cells.
pub fn density_svg(traj: &Trajectory) -> String {
    let (nf, ns) = (traj.len(), traj.params.n);
    let (rows, cols) = (nf.min(HEATMAP_CELLS), ns.min(HEATMAP_CELLS));
    let (cw, ch) = (3usize, 2usize);
    let (ml, mb, mt, mr) = (50usize, 30usize, 10usize, 10usize);
    let (w, h) = (ml + cols * cw + mr, mt + rows * ch + mb);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for r in 0..rows {
        let (f0, f1) = (r * nf / rows, ((r + 1) * nf / rows).max(r * nf / rows + 1));
        for c in 0..cols {
            let (s0, s1) = (c * ns / cols, ((c + 1) * ns / cols).max(c * ns / cols + 1));
            let mut sum = 0.0;
            for frame in &traj.frames[f0..f1] {
                sum += frame.spins()[s0..s1].iter().map(|s| s[2]).sum::<f64>();
            }
            let (rr, gg, bb) = shade(sum / ((f1 - f0) * (s1 - s0)) as f64);
            let x = ml + c * cw;
            let y = mt + (rows - 1 - r) * ch;
            let _ = writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="#{rr:02x}{gg:02x}{bb:02x}"/>"##
            );
        }
    }
    let (x1, y1) = (ml + cols * cw, mt + rows * ch);
    let _ = writeln!(
        out,
        r#"<g font-family="sans-serif" font-size="11" fill="black"><text x="{ml}" y="{}">1</text><text x="{x1}" y="{}" text-anchor="end">n = {ns}</text><text x="{}" y="{}" text-anchor="end">t = {:.1}</text><text x="{}" y="{y1}" text-anchor="end">{:.1}</text></g>"#,
        y1 + 15,
        y1 + 15,
        ml - 4,
        mt + 10,
        traj.t_last(),
        ml - 4,
        traj.t0()
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainParams;
    use crate::soliton::SolitonSpec;

    fn traj() -> Trajectory {
        let params = ChainParams::new(80, 0.2).unwrap();
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        Trajectory::analytic_tw(&params, &spec, 20.0, 0.0, 5.0, 12).unwrap()
    }

    #[test]
    fn unknown_kind_is_a_usage_error() {
        assert!(matches!("spectrum".parse::<FigureKind>(), Err(Error::UnknownKind(k)) if k == "spectrum"));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(export_figure_data(dir.path(), "pdf"), Err(Error::UnknownKind(_))));
    }

    #[test]
    fn density_files_and_svg_are_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let files = export_records(FigureKind::Density, dir.path(), Some(&traj()), None, 1).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 1 + 12 * 80);
        let svg = std::fs::read_to_string(&files[1]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect x=").count(), 12 * 80);
    }

    #[test]
    fn qubit_exports_need_a_record() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_records(FigureKind::Bloch, dir.path(), Some(&traj()), None, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn qubit_trace_round_trips() {
        let bt = BlochTrajectory {
            taus: vec![0.0, 0.5],
            states: vec![[0.0, 0.0, 1.0], [0.6, 0.0, 0.8]],
            field: vec![[0.0, 0.0, 1.0], [0.1, -0.2, 0.9]],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(QUBIT_TRACE_FILE);
        write_qubit_trace(&bt, &path).unwrap();
        assert_eq!(read_qubit_trace(&path).unwrap(), bt);
        let files = export_figure_data(dir.path(), "timeseries").unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text, "tau,az,stilde_z\n0,1,1\n0.5,0.8,0.9\n");
    }

    #[test]
    fn shading_endpoints() {
        assert_eq!(shade(1.0), (255, 255, 255));
        assert_eq!(shade(0.0), (40, 170, 80));
        assert_eq!(shade(-1.0), (20, 40, 160));
    }
}
