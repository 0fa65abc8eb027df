use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::ChainParams;
use crate::dynamics::{DriveDescriptor, Integrator};
use crate::error::{Error, Result};
use crate::qubit::QubitParams;
use crate::thermal::{ThermalSpec, DEFAULT_SWEEPS};
use crate::tracker::TrackOptions;

pub const SCHEMA_VERSION: u32 = 1;
/// Upper bound on sweep cells unless the config raises it.
pub const DEFAULT_MAX_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub chain: ChainParams,
    pub drive: DriveDescriptor,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit: Option<QubitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingSection>,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    #[serde(default)]
    pub t_red: f64,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
}

impl Default for ThermalSection {
    fn default() -> Self {
        ThermalSection {
            t_red: 0.0,
            sweeps: DEFAULT_SWEEPS,
        }
    }
}

impl ThermalSection {
    pub fn spec(&self, seed: u64) -> ThermalSpec {
        ThermalSpec {
            t_red: self.t_red,
            seed,
            sweeps: self.sweeps,
        }
    }
}

fn default_sweeps() -> usize {
    DEFAULT_SWEEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QubitSource {
    /// Replay the simulated chain.
    #[default]
    Generated,
    /// Ideal travelling soliton with the drive's `β`.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSection {
    pub delta: f64,
    pub mu: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit_site: Option<usize>,
    #[serde(default)]
    pub source: QubitSource,
    #[serde(default = "default_dtau")]
    pub dtau: f64,
    /// Bound on `|s̃ - ẑ|` in the post-transit window; chosen from the
    /// source and temperature when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_tol: Option<f64>,
    /// `S/ħ` of the chain spins, for the back-action estimate.
    #[serde(default = "default_s_over_hbar")]
    pub s_over_hbar: f64,
}

fn default_dtau() -> f64 {
    0.01
}

fn default_s_over_hbar() -> f64 {
    1.0
}

impl QubitSection {
    pub fn new(params: QubitParams, source: QubitSource) -> Self {
        QubitSection {
            delta: params.delta,
            mu: params.mu,
            alpha: params.alpha,
            qubit_site: params.qubit_site,
            source,
            dtau: default_dtau(),
            field_tol: None,
            s_over_hbar: default_s_over_hbar(),
        }
    }

    pub fn params(&self) -> QubitParams {
        QubitParams {
            delta: self.delta,
            mu: self.mu,
            alpha: self.alpha,
            qubit_site: self.qubit_site,
        }
    }
}

/// Tracker overrides; unset fields follow [`TrackOptions::for_beta`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_margin_lambdas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gap_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_half_width_lambdas: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// End of the integration; by default the drive window plus the time a
    /// TW-speed soliton needs to cover 80% of the chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_stride: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "yes")]
    pub write_trajectory: bool,
    /// Figure-data kinds exported after the run.
    #[serde(default = "default_exports")]
    pub exports: Vec<String>,
    /// Every `density_site_every`-th site goes into the density CSV.
    #[serde(default = "one")]
    pub density_site_every: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn default_exports() -> Vec<String> {
    vec!["density".into(), "bloch".into(), "timeseries".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted config paths (e.g. `drive.beta`) mapped to the values to try.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<toml::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
}

fn default_max_cells() -> usize {
    DEFAULT_MAX_CELLS
}

impl ExperimentConfig {
    /// Minimal config: ideal drive, zero temperature, no qubit.
    pub fn new(chain: ChainParams, drive: DriveDescriptor, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            schema: SCHEMA_VERSION,
            chain,
            drive,
            thermal: ThermalSection::default(),
            qubit: None,
            tracking: None,
            run: RunSection {
                dt: default_dt(),
                t_end: None,
                sample_stride: None,
                seeds: default_seeds(),
                output_dir: output_dir.into(),
                integrator: Integrator::default(),
                write_trajectory: true,
                exports: default_exports(),
                density_site_every: 1,
            },
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// Checks every sub-record; physics-domain failures are reported as
    /// configuration errors naming the section.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let section = |name: &str, r: Result<()>| r.map_err(|e| Error::Config(format!("[{name}] {e}")));
        section("chain", self.chain.validate())?;
        section("drive", self.drive.build(self.chain.h).map(|_| ()))?;
        section("thermal", self.thermal.spec(0).validate())?;
        if let Some(q) = &self.qubit {
            section("qubit", q.params().validate())?;
            if !(q.dtau > 0.0) {
                return Err(Error::Config(format!("[qubit] dtau must be > 0, got {}", q.dtau)));
            }
            if !(q.s_over_hbar > 0.0) {
                return Err(Error::Config(format!("[qubit] s_over_hbar must be > 0, got {}", q.s_over_hbar)));
            }
            if q.source == QubitSource::Analytic && self.drive.beta().is_err() {
                return Err(Error::Config("[qubit] analytic source needs a drive with beta".into()));
            }
            if let Some(site) = q.qubit_site {
                if site == 0 || site > self.chain.n {
                    return Err(Error::Config(format!("[qubit] site {site} outside 1..={}", self.chain.n)));
                }
            }
        }
        let run = &self.run;
        if !(run.dt > 0.0) {
            return Err(Error::Config(format!("[run] dt must be > 0, got {}", run.dt)));
        }
        if run.sample_stride == Some(0) {
            return Err(Error::Config("[run] sample_stride must be >= 1".into()));
        }
        if run.seeds.is_empty() {
            return Err(Error::Config("[run] seeds must not be empty".into()));
        }
        let mut seen = run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != run.seeds.len() {
            return Err(Error::Config("[run] seeds must be distinct".into()));
        }
        if run.density_site_every == 0 {
            return Err(Error::Config("[run] density_site_every must be >= 1".into()));
        }
        for kind in &run.exports {
            kind.parse::<super::FigureKind>()
                .map_err(|e| Error::Config(format!("[run] {e}")))?;
        }
        if self.drive.kind == crate::dynamics::DriveKind::None && run.t_end.is_none() {
            return Err(Error::Config("[run] t_end is required when the drive is none".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn digest(&self) -> String {
        let text = self.to_toml_string().unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn tracking_options(&self) -> TrackOptions {
        let mut opts = match self.drive.beta() {
            Ok(beta) => TrackOptions::for_beta(beta),
            Err(_) => TrackOptions::default(),
        };
        if let Some(t) = &self.tracking {
            if let Some(v) = t.threshold {
                opts.threshold = v;
            }
            if let Some(v) = t.end_margin_lambdas {
                opts.end_margin_lambdas = v;
            }
            if let Some(v) = t.min_frames {
                opts.min_frames = v;
            }
            if let Some(v) = t.max_gap_frames {
                opts.max_gap_frames = v;
            }
            if let Some(v) = t.fit_half_width_lambdas {
                opts.fit_half_width_lambdas = v;
            }
        }
        opts
    }

    /// Copy with the value at a dotted path replaced; the result is
    /// re-validated, so unknown paths or ill-typed values are config errors.
    pub fn with_value(&self, path: &str, value: &toml::Value) -> Result<Self> {
        let text = self.to_toml_string()?;
        let mut doc: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys
            .split_last()
            .filter(|(l, _)| !l.is_empty())
            .ok_or_else(|| Error::Config(format!("empty config path `{path}`")))?;
        let mut table = &mut doc;
        for key in parents {
            table = table
                .entry(key.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}` in `{path}` is not a section")))?;
        }
        table.insert(last.to_string(), value.clone());
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("setting `{path}`: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::QubitParams;

    fn sample() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            ChainParams::new(500, 0.2).unwrap(),
            DriveDescriptor::ideal_tan_beta(2.0),
            "out/flip",
        );
        cfg.thermal.t_red = 0.002;
        cfg.run.seeds = vec![3, 4];
        cfg.qubit = Some(QubitSection {
            field_tol: Some(0.2),
            ..QubitSection::new(QubitParams::new(1.0, 1.0, 0.0), QubitSource::Generated)
        });
        cfg.tracking = Some(TrackingSection {
            threshold: Some(0.8),
            ..Default::default()
        });
        cfg
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = sample();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn parses_handwritten_document() {
        let text = r#"
            schema = 1
            [chain]
            n = 1000
            h = 0.05
            [drive]
            kind = "ideal-tw"
            tan_beta = 0.2
            [run]
            output_dir = "out"
            t_end = 100.0
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.chain.n, 1000);
        assert_eq!(cfg.run.dt, 0.01);
        assert_eq!(cfg.thermal.t_red, 0.0);
        assert!(cfg.qubit.is_none());
    }

    #[test]
    fn unknown_keys_and_schema_are_rejected() {
        let base = sample().to_toml_string().unwrap();
        let extra = base.replace("[chain]", "[chain]\nspin_length = 2.0");
        assert!(matches!(ExperimentConfig::from_toml_str(&extra), Err(Error::Config(_))));
        let wrong = base.replace("schema = 1", "schema = 7");
        assert!(matches!(ExperimentConfig::from_toml_str(&wrong), Err(Error::Config(_))));
    }

    #[test]
    fn domain_errors_become_config_errors() {
        let mut cfg = sample();
        cfg.chain.h = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = sample();
        cfg.run.exports = vec!["spectrum".into()];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = sample();
        cfg.run.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.digest(), b.digest());
        b.thermal.t_red = 0.01;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn dotted_paths_set_values() {
        let cfg = sample();
        let c = cfg.with_value("thermal.t_red", &toml::Value::Float(0.01)).unwrap();
        assert_eq!(c.thermal.t_red, 0.01);
        let c = cfg.with_value("qubit.mu", &toml::Value::Float(0.5)).unwrap();
        assert_eq!(c.qubit.unwrap().params().mu, 0.5);
        assert!(cfg.with_value("chain.bogus", &toml::Value::Float(1.0)).is_err());
        assert!(cfg.with_value("chain.n", &toml::Value::String("x".into())).is_err());
    }

    #[test]
    fn tracking_overrides_apply() {
        let opts = sample().tracking_options();
        assert_eq!(opts.threshold, 0.8);
        assert_eq!(opts.min_frames, TrackOptions::default().min_frames);
    }
}
