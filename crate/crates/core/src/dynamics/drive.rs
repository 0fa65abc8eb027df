//! Boundary drives that inject a soliton from the `n = 0` end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::soliton::{tw_profile, tw_profile_derivative, tw_scales, Direction, SolitonScales, SolitonSpec};
use crate::vec3::{self, Vec3, Z_HAT};

/// Default half-width `Ξ` of the active driving window in units of `ξ`.
pub const DEFAULT_WINDOW: f64 = 12.0;

/// Site fields `e^{-n/ℓ}` below this are dropped.
const DECAY_CUTOFF: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveKind {
    /// A virtual spin `s₀(t)` following the soliton waveform is the left
    /// neighbour of site 1.
    IdealTw,
    /// No virtual spin; the waveform acts as an applied field on sites
    /// `n ≥ 1` attenuated as `strength · e^{-n/ℓ}`.
    DecayingTw,
    /// Free open end.
    None,
}

impl DriveKind {
    pub fn code(self) -> u8 {
        match self {
            DriveKind::None => 0,
            DriveKind::IdealTw => 1,
            DriveKind::DecayingTw => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DriveKind::None),
            1 => Some(DriveKind::IdealTw),
            2 => Some(DriveKind::DecayingTw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveProtocol {
    pub kind: DriveKind,
    pub spec: SolitonSpec,
    pub h: f64,
    /// Penetration length `ℓ` (decaying drive only).
    pub ell: Option<f64>,
    /// Window half-width `Ξ`; the drive is active for `|t| ≤ Ξ τ_β`.
    pub window: f64,
    /// Peak site field of the decaying drive, in units of `JS`.
    pub strength: f64,
    scales: Option<SolitonScales>,
    /// `e^{-n/ℓ}` for sites `n = 1, 2, ...` (decaying drive only).
    decay: Vec<f64>,
}

/// Serializable description of a drive; `tan_beta` takes precedence over `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveDescriptor {
    pub kind: DriveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tan_beta: Option<f64>,
    #[serde(default)]
    pub phi0: f64,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

impl DriveDescriptor {
    pub fn none() -> Self {
        DriveDescriptor {
            kind: DriveKind::None,
            beta: None,
            tan_beta: None,
            phi0: 0.0,
            direction: Direction::Forward,
            ell: None,
            window: DEFAULT_WINDOW,
            strength: None,
        }
    }

    pub fn ideal_tan_beta(tan_beta: f64) -> Self {
        DriveDescriptor {
            kind: DriveKind::IdealTw,
            tan_beta: Some(tan_beta),
            ..Self::none()
        }
    }

    pub fn beta(&self) -> Result<f64> {
        match (self.tan_beta, self.beta) {
            (Some(t), _) => Ok(t.atan()),
            (None, Some(b)) => Ok(b),
            (None, None) => Err(Error::Config("drive needs `beta` or `tan_beta`".into())),
        }
    }

    pub fn build(&self, h: f64) -> Result<DriveProtocol> {
        if self.kind == DriveKind::None {
            return Ok(DriveProtocol::none(h));
        }
        let spec = SolitonSpec::new(self.beta()?)?
            .with_phi0(self.phi0)
            .with_direction(self.direction);
        let mut drive = make_drive(spec, h, self.kind, self.ell)?.with_window(self.window)?;
        if let Some(s) = self.strength {
            drive = drive.with_strength(s)?;
        }
        Ok(drive)
    }
}

impl From<&DriveProtocol> for DriveDescriptor {
    fn from(d: &DriveProtocol) -> Self {
        if d.kind == DriveKind::None {
            return DriveDescriptor::none();
        }
        DriveDescriptor {
            kind: d.kind,
            beta: Some(d.spec.beta),
            tan_beta: None,
            phi0: d.spec.phi0,
            direction: d.spec.direction,
            ell: d.ell,
            window: d.window,
            strength: (d.kind == DriveKind::DecayingTw).then_some(d.strength),
        }
    }
}

/// Builds a drive whose waveform is the travelling profile seen at `n = 0`,
/// `s₀(t) = s_β(-t/τ_β)`, active over `|t| ≤ Ξ τ_β` and `ẑ` outside.
pub fn make_drive(spec: SolitonSpec, h: f64, kind: DriveKind, ell: Option<f64>) -> Result<DriveProtocol> {
    if kind == DriveKind::None {
        return Ok(DriveProtocol::none(h));
    }
    spec.validate()?;
    let scales = tw_scales(spec.beta, h)?;
    let mut drive = DriveProtocol {
        kind,
        spec,
        h,
        ell: None,
        window: DEFAULT_WINDOW,
        strength: 1.0,
        scales: Some(scales),
        decay: Vec::new(),
    };
    if kind == DriveKind::DecayingTw {
        let ell = ell.ok_or_else(|| Error::Config("decaying-tw drive requires `ell`".into()))?;
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::Config(format!("penetration length must be > 0, got {ell}")));
        }
        drive.ell = Some(ell);
        drive.strength = 1.0 / ell;
        let sites = (-DECAY_CUTOFF.ln() * ell).ceil() as usize;
        drive.decay = (1..=sites).map(|n| (-(n as f64) / ell).exp()).collect();
    }
    Ok(drive)
}

impl DriveProtocol {
    pub fn none(h: f64) -> Self {
        DriveProtocol {
            kind: DriveKind::None,
            spec: SolitonSpec {
                beta: std::f64::consts::FRAC_PI_4,
                phi0: 0.0,
                direction: Direction::Forward,
            },
            h,
            ell: None,
            window: DEFAULT_WINDOW,
            strength: 0.0,
            scales: None,
            decay: Vec::new(),
        }
    }

    pub fn with_window(mut self, window: f64) -> Result<Self> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::Config(format!("drive window must be > 0, got {window}")));
        }
        self.window = window;
        Ok(self)
    }

    pub fn with_strength(mut self, strength: f64) -> Result<Self> {
        if self.kind != DriveKind::DecayingTw {
            return Err(Error::Config("`strength` only applies to the decaying-tw drive".into()));
        }
        if !(strength > 0.0) || !strength.is_finite() {
            return Err(Error::Config(format!("drive strength must be > 0, got {strength}")));
        }
        self.strength = strength;
        Ok(self)
    }

    pub fn scales(&self) -> Option<&SolitonScales> {
        self.scales.as_ref()
    }

    /// Half-duration `Ξ τ_β` of the active window (zero when undriven).
    pub fn half_duration(&self) -> f64 {
        self.scales.map_or(0.0, |s| self.window * s.tau)
    }

    /// Time at which a run starts: the opening edge of the drive window.
    pub fn start_time(&self) -> f64 {
        -self.half_duration()
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.kind != DriveKind::None && t.abs() <= self.half_duration()
    }

    /// Injected waveform `s_β(-t/τ_β)`, `ẑ` outside the window.
    pub fn waveform(&self, t: f64) -> Vec3 {
        match self.scales {
            Some(sc) if self.is_active(t) => tw_profile(&self.spec, -t / sc.tau),
            _ => Z_HAT,
        }
    }

    /// Time derivative of [`waveform`](Self::waveform).
    pub fn waveform_rate(&self, t: f64) -> Vec3 {
        match self.scales {
            Some(sc) if self.is_active(t) => {
                vec3::scale(&tw_profile_derivative(&self.spec, -t / sc.tau), -1.0 / sc.tau)
            }
            _ => [0.0; 3],
        }
    }

    /// Enforced left neighbour of site 1, if any.
    pub fn boundary_spin(&self, t: f64) -> Option<Vec3> {
        match self.kind {
            DriveKind::IdealTw => Some(self.waveform(t)),
            _ => None,
        }
    }

    /// Number of leading sites that receive an explicit drive field.
    pub fn field_sites(&self) -> usize {
        self.decay.len()
    }

    /// Applied drive field on 0-based site `i` (decaying drive only).
    pub fn site_field(&self, i: usize, waveform: &Vec3) -> Vec3 {
        match self.decay.get(i) {
            Some(w) => vec3::scale(waveform, self.strength * w),
            None => [0.0; 3],
        }
    }

    pub fn site_weight(&self, i: usize) -> f64 {
        self.decay.get(i).map_or(0.0, |w| self.strength * w)
    }

    /// Energy of the chain's coupling to the drive, `-Σ b_n(t)·s_n`
    /// (for the ideal drive, the boundary bond `-s₀·s₁`).
    pub fn coupling_energy(&self, spins: &[Vec3], t: f64) -> f64 {
        match self.kind {
            DriveKind::None => 0.0,
            DriveKind::IdealTw => -vec3::dot(&self.waveform(t), &spins[0]),
            DriveKind::DecayingTw => {
                let w = self.waveform(t);
                -spins
                    .iter()
                    .zip(&self.decay)
                    .map(|(s, k)| self.strength * k * vec3::dot(&w, s))
                    .sum::<f64>()
            }
        }
    }

    /// Power delivered by the explicit time dependence of the drive,
    /// `-Σ ḃ_n(t)·s_n`.
    pub fn power(&self, spins: &[Vec3], t: f64) -> f64 {
        if !self.is_active(t) {
            return 0.0;
        }
        let rate = self.waveform_rate(t);
        match self.kind {
            DriveKind::None => 0.0,
            DriveKind::IdealTw => -vec3::dot(&rate, &spins[0]),
            DriveKind::DecayingTw => -spins
                .iter()
                .zip(&self.decay)
                .map(|(s, k)| self.strength * k * vec3::dot(&rate, s))
                .sum::<f64>(),
        }
    }

    /// Upper bound on the drive's contribution to any local field.
    pub fn max_field(&self) -> f64 {
        match self.kind {
            DriveKind::None => 0.0,
            DriveKind::IdealTw => 1.0,
            DriveKind::DecayingTw => self.site_weight(0),
        }
    }
}
