use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, DEFAULT_MAX_CELLS};
use super::manifest::{Manifest, MANIFEST_FILE};
use super::run::{opt, run_experiment, RunSummary};
use crate::error::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";
const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    /// Dotted config path, e.g. `drive.tan_beta`.
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl SweepAxis {
    pub fn new(path: impl Into<String>, values: impl IntoIterator<Item = toml::Value>) -> Self {
        SweepAxis {
            path: path.into(),
            values: values.into_iter().collect(),
        }
    }

    pub fn floats(path: impl Into<String>, values: &[f64]) -> Self {
        Self::new(path, values.iter().map(|&v| toml::Value::Float(v)))
    }

    /// Parses `path=v1,v2,...`; values are read as TOML scalars, falling
    /// back to bare strings.
    pub fn parse(spec: &str) -> Result<Self> {
        let (path, list) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("axis `{spec}` is not of the form path=v1,v2")))?;
        let values = list
            .split(',')
            .map(|raw| {
                let raw = raw.trim();
                toml::from_str::<toml::Table>(&format!("v = {raw}"))
                    .ok()
                    .and_then(|mut t| t.remove("v"))
                    .unwrap_or_else(|| toml::Value::String(raw.to_string()))
            })
            .collect::<Vec<_>>();
        if path.trim().is_empty() || values.is_empty() {
            return Err(Error::Config(format!("axis `{spec}` has no path or values")));
        }
        Ok(SweepAxis::new(path.trim(), values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub values: Vec<toml::Value>,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub dir: PathBuf,
    pub axes: Vec<String>,
    pub rows: Vec<SweepRow>,
}

fn scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Seed of cell `k`: cell 0 keeps the base seed, later cells are spread by a
/// fixed odd stride.
pub fn cell_seed(base: u64, cell: usize) -> u64 {
    base.wrapping_add((cell as u64).wrapping_mul(SEED_STRIDE))
}

/// Runs the Cartesian product of `axes` over `base`, each cell with its own
/// seed and `cell-<k>/` output directory, on a worker pool of
/// `sweep.threads` width. Cell failures are recorded in their row.
pub fn sweep_grid(base: &ExperimentConfig, axes: &[SweepAxis]) -> Result<SweepTable> {
    base.validate()?;
    let limit = base.sweep.as_ref().map_or(DEFAULT_MAX_CELLS, |s| s.max_cells);
    let mut cells: usize = 1;
    for axis in axes {
        if axis.values.is_empty() {
            return Err(Error::Config(format!("axis `{}` has no values", axis.path)));
        }
        // Path check only: the value itself may legitimately fail per cell.
        if let Err(e) = base.with_value(&axis.path, &axis.values[0]) {
            let mut probe = base.to_toml_string()?.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?;
            if !path_exists(&mut probe, &axis.path) {
                return Err(e);
            }
        }
        cells = cells
            .checked_mul(axis.values.len())
            .filter(|&c| c <= limit)
            .ok_or_else(|| Error::Config(format!("sweep exceeds {limit} cells")))?;
    }
    let root = base.run.output_dir.clone();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let base_seed = base.run.seeds[0];

    let run_cell = |k: usize| -> SweepRow {
        let mut rem = k;
        let mut values = vec![toml::Value::Boolean(false); axes.len()];
        for (i, axis) in axes.iter().enumerate().rev() {
            values[i] = axis.values[rem % axis.values.len()].clone();
            rem /= axis.values.len();
        }
        let seed = cell_seed(base_seed, k);
        let outcome = (|| -> Result<RunSummary> {
            let mut cfg = base.clone();
            for (axis, v) in axes.iter().zip(&values) {
                cfg = cfg.with_value(&axis.path, v)?;
            }
            cfg.sweep = None;
            cfg.run.seeds = vec![seed];
            cfg.run.output_dir = root.join(format!("cell-{k}"));
            let bundle = run_experiment(&cfg)?;
            Ok(bundle.runs.into_iter().next().expect("one seed per cell"))
        })();
        let (summary, error) = match outcome {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        SweepRow {
            cell: k,
            values,
            seed,
            summary,
            error,
        }
    };

    let threads = base.sweep.as_ref().and_then(|s| s.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| (0..cells).into_par_iter().map(run_cell).collect());

    let table = SweepTable {
        dir: root.clone(),
        axes: axes.iter().map(|a| a.path.clone()).collect(),
        rows,
    };
    let csv = root.join(SWEEP_FILE);
    table.write_csv(&csv)?;
    let mut manifest = Manifest::new(&root, base.digest());
    manifest.record(&csv)?;
    for row in &table.rows {
        let cell_manifest = root.join(format!("cell-{}", row.cell)).join(MANIFEST_FILE);
        if cell_manifest.exists() {
            manifest.record(&cell_manifest)?;
        }
    }
    manifest.write()?;
    Ok(table)
}

fn path_exists(doc: &mut toml::Table, path: &str) -> bool {
    let mut table = &*doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        match table.get(*key) {
            Some(toml::Value::Table(t)) if i + 1 < keys.len() => table = t,
            Some(_) if i + 1 == keys.len() => return true,
            _ => return false,
        }
    }
    false
}

impl SweepTable {
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["cell".to_string()];
        cols.extend(self.axes.iter().cloned());
        cols.extend(
            [
                "status",
                "seed",
                "velocity",
                "beta_eff_velocity",
                "beta_eff_shape",
                "delta_e",
                "work",
                "az_out",
                "omega",
                "error",
            ]
            .map(String::from),
        );
        cols
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", self.header().join(",")).map_err(io)?;
        for row in &self.rows {
            let mut f = vec![row.cell.to_string()];
            f.extend(row.values.iter().map(|v| csv_escape(&scalar(v))));
            match &row.summary {
                Some(s) => f.extend([
                    "ok".to_string(),
                    row.seed.to_string(),
                    opt(s.velocity),
                    opt(s.beta_eff_velocity),
                    opt(s.beta_eff_shape),
                    s.delta_e.to_string(),
                    s.work.to_string(),
                    opt(s.az_out),
                    opt(s.omega),
                    String::new(),
                ]),
                None => {
                    f.extend(["failed".to_string(), row.seed.to_string()]);
                    f.extend(std::iter::repeat_n("nan".to_string(), 7));
                    f.push(csv_escape(row.error.as_deref().unwrap_or("")));
                }
            }
            writeln!(w, "{}", f.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a = SweepAxis::parse("drive.beta=0.3, 0.6,0.9").unwrap();
        assert_eq!(a.path, "drive.beta");
        assert_eq!(a.values, vec![toml::Value::Float(0.3), toml::Value::Float(0.6), toml::Value::Float(0.9)]);
        let k = SweepAxis::parse("drive.kind=ideal-tw,none").unwrap();
        assert_eq!(k.values[1], toml::Value::String("none".into()));
        let n = SweepAxis::parse("chain.n=100").unwrap();
        assert_eq!(n.values[0], toml::Value::Integer(100));
        assert!(SweepAxis::parse("drive.beta").is_err());
    }

    #[test]
    fn cell_seeds_are_distinct() {
        assert_eq!(cell_seed(7, 0), 7);
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|k| cell_seed(7, k)).collect();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn escaping() {
        assert_eq!(csv_escape("a,b"), "\"a,b\"");
        assert_eq!(csv_escape("plain"), "plain");
    }
}
