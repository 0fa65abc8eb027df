//! Chain parameters, spin configurations, the Heisenberg Hamiltonian and
//! unit conversion.
//!
//! Everything runs in reduced units `J = S = d = 1`: time in `1/(JS)`, energy
//! in `JS²`. The reduced field `h = γH/(JS)` is the only tunable chain
//! parameter. Sites are stored 0-based; site index `i` is chain site `n = i + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soliton::SolitonScales;
use crate::vec3::{self, Vec3, Z_HAT};

/// Tolerance on `| |s_n| - 1 |` for a valid configuration.
pub const UNIT_TOL: f64 = 1e-12;

/// `k_B / ħ` in `1/(s·K)`.
pub const KB_OVER_HBAR: f64 = 1.380_649e-23 / 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    /// Exchange constant; fixed to 1 in reduced units.
    #[serde(default = "one")]
    pub j: f64,
    /// Spin magnitude; fixed to 1 in reduced units.
    #[serde(default = "one")]
    pub s: f64,
    /// Lattice spacing; fixed to 1 in reduced units.
    #[serde(default = "one")]
    pub d: f64,
    /// Number of sites.
    pub n: usize,
    /// Reduced field `γH/(JS)`.
    pub h: f64,
}

fn one() -> f64 {
    1.0
}

impl ChainParams {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        let p = ChainParams {
            j: 1.0,
            s: 1.0,
            d: 1.0,
            n,
            h,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j > 0.0) {
            return Err(Error::Domain(format!("J must be > 0 (ferromagnetic), got {}", self.j)));
        }
        if !(self.s > 0.0) || !(self.d > 0.0) {
            return Err(Error::Domain(format!("S and d must be > 0, got S={} d={}", self.s, self.d)));
        }
        if self.n < 2 {
            return Err(Error::Domain(format!("N must be >= 2, got {}", self.n)));
        }
        if !(self.h >= 0.0) || !self.h.is_finite() {
            return Err(Error::Domain(format!("h must be finite and >= 0, got {}", self.h)));
        }
        Ok(())
    }
}

/// Physical scales used only to present reduced results in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalUnits {
    /// `JS²` expressed in kelvin.
    pub js2_kelvin: f64,
    /// Chain spin magnitude in units of ħ.
    pub s_over_hbar: f64,
    #[serde(default = "kb_over_hbar")]
    pub kb_over_hbar: f64,
}

fn kb_over_hbar() -> f64 {
    KB_OVER_HBAR
}

impl PhysicalUnits {
    pub fn new(js2_kelvin: f64, s_over_hbar: f64) -> Self {
        PhysicalUnits {
            js2_kelvin,
            s_over_hbar,
            kb_over_hbar: KB_OVER_HBAR,
        }
    }

    /// Frequency scale `JS` in `1/s`, i.e. `k_B·JS² / (ħ·(S/ħ))`.
    pub fn frequency_scale(&self) -> Result<f64> {
        if !(self.js2_kelvin > 0.0) {
            return Err(Error::Domain(format!(
                "exchange energy scale must be positive, got {} K",
                self.js2_kelvin
            )));
        }
        if !(self.s_over_hbar >= 1.0) {
            return Err(Error::Domain(format!(
                "S/hbar must be >= 1, got {}",
                self.s_over_hbar
            )));
        }
        Ok(self.kb_over_hbar * self.js2_kelvin / self.s_over_hbar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalEstimate {
    pub velocity_spacings_per_s: f64,
    pub traversal_time_s: f64,
}

/// Soliton speed and chain traversal time in physical units.
pub fn to_physical_units(
    params: &ChainParams,
    phys: &PhysicalUnits,
    scales: &SolitonScales,
) -> Result<PhysicalEstimate> {
    let velocity = scales.v * phys.frequency_scale()?;
    Ok(PhysicalEstimate {
        velocity_spacings_per_s: velocity,
        traversal_time_s: params.n as f64 / velocity,
    })
}

/// The chain state at one instant: one unit vector per site.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfig {
    spins: Vec<Vec3>,
}

impl SpinConfig {
    pub fn new(spins: Vec<Vec3>) -> Result<Self> {
        let cfg = SpinConfig { spins };
        cfg.check_unit()?;
        Ok(cfg)
    }

    /// Wraps without checking norms; used internally where the integrator
    /// guarantees them.
    pub(crate) fn from_raw(spins: Vec<Vec3>) -> Self {
        SpinConfig { spins }
    }

    pub fn uniform(n: usize, s: Vec3) -> Self {
        SpinConfig { spins: vec![s; n] }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[Vec3] {
        &self.spins
    }

    pub(crate) fn spins_mut(&mut self) -> &mut [Vec3] {
        &mut self.spins
    }

    pub fn into_inner(self) -> Vec<Vec3> {
        self.spins
    }

    pub fn max_norm_error(&self) -> f64 {
        self.spins
            .iter()
            .map(|s| (vec3::norm(s) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_unit(&self) -> Result<()> {
        for (i, s) in self.spins.iter().enumerate() {
            let err = (vec3::norm(s) - 1.0).abs();
            if !(err <= UNIT_TOL) {
                return Err(Error::Invariant(format!(
                    "spin at site {} has norm error {:.3e}",
                    i + 1,
                    err
                )));
            }
        }
        Ok(())
    }

    pub fn sz(&self) -> impl Iterator<Item = f64> + '_ {
        self.spins.iter().map(|s| s[2])
    }
}

/// Open-chain energy in units of `JS²`:
/// `-Σ_{n<N} s_n·s_{n+1} - h Σ_n s_n^z`.
pub fn chain_energy(config: &SpinConfig, params: &ChainParams) -> Result<f64> {
    if config.len() != params.n {
        return Err(Error::Shape(format!(
            "configuration has {} sites, parameters say N = {}",
            config.len(),
            params.n
        )));
    }
    config.check_unit()?;
    Ok(energy_unchecked(config.spins(), params.h))
}

pub(crate) fn energy_unchecked(spins: &[Vec3], h: f64) -> f64 {
    let exchange: f64 = spins.windows(2).map(|w| vec3::dot(&w[0], &w[1])).sum();
    let zeeman: f64 = spins.iter().map(|s| s[2]).sum();
    -exchange - h * zeeman
}

/// Minimum-energy configuration: all spins along `ẑ`, also at `h = 0` where
/// the direction is a convention.
pub fn ground_state(params: &ChainParams) -> SpinConfig {
    SpinConfig::uniform(params.n, Z_HAT)
}
