//! A spin-½ qubit driven by the chain through its smeared soliton field.
//!
//! In dimensionless time `τ = h t` the Bloch vector obeys
//! `∂_τ a = a × [δ ẑ + μ s̃(τ)]`, `s̃ = Σ_n p_n s_n(τ)`, with Gaussian weights
//! `p_n ∝ exp(-n²/2α²)` around the qubit's site. The chain is replayed
//! one-way; [`backaction_ratio`] quantifies why that is safe.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::SpinConfig;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::soliton::{tw_profile, SolitonSpec};
use crate::vec3::{self, Vec3, Z_HAT};

/// Gaussian weights are kept out to `±GAUSSIAN_CUTOFF·α`.
pub const GAUSSIAN_CUTOFF: f64 = 6.0;
/// Largest frame spacing in τ allowed per unit of `|μ| + |δ|`.
pub const MAX_FRAME_SPACING: f64 = 0.1;
/// Largest allowed `dτ·(|μ| + |δ|)`.
pub const MAX_ROTATION_STEP: f64 = 0.25;
/// Default bound on `|s̃ - ẑ|` inside an asymptotic window.
pub const ASYMPTOTIC_FIELD_TOL: f64 = 1e-4;
/// Back-action ratios at or above this are flagged.
pub const BACKACTION_WARN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    /// `γ_σ/γ`.
    pub delta: f64,
    /// `gS/(γH)`.
    pub mu: f64,
    /// Interaction range in lattice spacings.
    #[serde(default)]
    pub alpha: f64,
    /// Chain site (1-based) the qubit sits next to; `None` means mid-chain.
    #[serde(default)]
    pub qubit_site: Option<usize>,
}

impl QubitParams {
    pub fn new(delta: f64, mu: f64, alpha: f64) -> Self {
        QubitParams {
            delta,
            mu,
            alpha,
            qubit_site: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || !self.mu.is_finite() {
            return Err(Error::Domain("delta and mu must be finite".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn site(&self, n_sites: usize) -> usize {
        self.qubit_site.unwrap_or(n_sites / 2)
    }

    /// Precession frequency far from any soliton, `μ + δ`.
    pub fn free_frequency(&self) -> f64 {
        self.mu + self.delta
    }

    fn rate_bound(&self) -> f64 {
        self.mu.abs() + self.delta.abs()
    }
}

/// Normalized weights `p_m` for offsets `m = -w..=w` from the qubit site.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingProfile {
    weights: Vec<f64>,
    /// Amplitude `A` of `A exp(-m²/2α²)`.
    pub normalization: f64,
}

impl CouplingProfile {
    pub fn gaussian(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
        }
        if alpha == 0.0 {
            return Ok(CouplingProfile {
                weights: vec![1.0],
                normalization: 1.0,
            });
        }
        let w = (GAUSSIAN_CUTOFF * alpha).ceil() as i64;
        let raw: Vec<f64> = (-w..=w)
            .map(|m| (-((m * m) as f64) / (2.0 * alpha * alpha)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        Ok(CouplingProfile {
            weights: raw.iter().map(|r| r / sum).collect(),
            normalization: 1.0 / sum,
        })
    }

    pub fn half_width(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(offset, p)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let w = self.half_width() as i64;
        self.weights.iter().enumerate().map(move |(k, p)| (k as i64 - w, *p))
    }
}

/// `s̃ = Σ_m p_m s_{site+m}` for a 1-based `site`.
pub fn smeared_field(frame: &SpinConfig, profile: &CouplingProfile, site: usize) -> Result<Vec3> {
    let w = profile.half_width();
    if site < 1 + w || site + w > frame.len() {
        return Err(Error::Shape(format!(
            "coupling window {}±{w} exceeds chain of {} sites",
            site,
            frame.len()
        )));
    }
    let spins = frame.spins();
    let mut acc = [0.0; 3];
    for (m, p) in profile.iter() {
        let s = &spins[(site as i64 - 1 + m) as usize];
        acc = vec3::axpy(&acc, p, s);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub a: Vec3,
}

impl BlochState {
    pub fn new(a: Vec3) -> Result<Self> {
        if (vec3::norm(&a) - 1.0).abs() > 1e-10 {
            return Err(Error::Invariant(format!("Bloch vector norm {} is not 1", vec3::norm(&a))));
        }
        Ok(BlochState { a })
    }

    pub fn up() -> Self {
        BlochState { a: Z_HAT }
    }
}

/// What the qubit sees.
#[derive(Debug, Clone, Copy)]
pub enum FieldSource<'a> {
    /// Ideal travelling soliton past the qubit at `n = 0`:
    /// `s_n(τ) = s_β(n √h sin β - τ sin 2β)`.
    AnalyticTw { spec: SolitonSpec, h: f64 },
    /// Replay of a simulated chain with `τ = h t`, linearly interpolated
    /// between frames.
    Trajectory(&'a Trajectory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochTrajectory {
    pub taus: Vec<f64>,
    pub states: Vec<Vec3>,
    /// `s̃` at each stored τ.
    pub field: Vec<Vec3>,
}

impl BlochTrajectory {
    pub fn max_norm_error(&self) -> f64 {
        self.states
            .iter()
            .map(|a| (vec3::norm(a) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> Vec3 {
        *self.states.last().expect("non-empty")
    }

    /// `τ, a^x, a^y, a^z` rows, every `every`-th sample plus the last.
    pub fn write_csv<W: Write>(&self, mut w: W, every: usize) -> std::io::Result<()> {
        writeln!(w, "tau,ax,ay,az")?;
        for k in sampled(self.taus.len(), every) {
            let a = &self.states[k];
            writeln!(w, "{},{},{},{}", self.taus[k], a[0], a[1], a[2])?;
        }
        w.flush()
    }

    /// `τ, a^z, s̃^z` rows.
    pub fn write_timeseries_csv<W: Write>(&self, mut w: W, every: usize) -> std::io::Result<()> {
        writeln!(w, "tau,az,stilde_z")?;
        for k in sampled(self.taus.len(), every) {
            writeln!(w, "{},{},{}", self.taus[k], self.states[k][2], self.field[k][2])?;
        }
        w.flush()
    }

    /// Bloch-sphere path `a^x, a^y, a^z`.
    pub fn write_path_csv<W: Write>(&self, mut w: W, every: usize) -> std::io::Result<()> {
        writeln!(w, "ax,ay,az")?;
        for k in sampled(self.taus.len(), every) {
            let a = &self.states[k];
            writeln!(w, "{},{},{}", a[0], a[1], a[2])?;
        }
        w.flush()
    }
}

fn sampled(len: usize, every: usize) -> impl Iterator<Item = usize> {
    let every = every.max(1);
    (0..len).filter(move |k| k % every == 0 || *k + 1 == len)
}

struct FrameField {
    tau0: f64,
    dtau: f64,
    values: Vec<Vec3>,
}

impl FrameField {
    fn at(&self, tau: f64) -> Vec3 {
        let x = (tau - self.tau0) / self.dtau;
        let k = (x.floor().max(0.0) as usize).min(self.values.len() - 2);
        vec3::lerp(&self.values[k], &self.values[k + 1], x - k as f64)
    }
}

fn analytic_field(spec: &SolitonSpec, h: f64, profile: &CouplingProfile, tau: f64) -> Vec3 {
    let k = h.sqrt() * spec.beta.sin();
    let shift = tau * (2.0 * spec.beta).sin();
    profile.iter().fold([0.0; 3], |acc, (m, p)| {
        vec3::axpy(&acc, p, &tw_profile(spec, m as f64 * k - shift))
    })
}

/// Integrates the Bloch equation over `tau_span` by exact rotations about the
/// field at each step midpoint.
pub fn evolve_qubit(
    source: FieldSource<'_>,
    qp: &QubitParams,
    a0: BlochState,
    tau_span: (f64, f64),
    dtau: f64,
) -> Result<BlochTrajectory> {
    qp.validate()?;
    BlochState::new(a0.a)?;
    let (tau_a, tau_b) = tau_span;
    if !(tau_b > tau_a) {
        return Err(Error::Domain(format!("empty tau span [{tau_a}, {tau_b}]")));
    }
    if !(dtau > 0.0) || dtau * qp.rate_bound() > MAX_ROTATION_STEP {
        return Err(Error::Stability(format!(
            "dtau = {dtau} with |mu|+|delta| = {} exceeds {MAX_ROTATION_STEP}",
            qp.rate_bound()
        )));
    }
    let profile = CouplingProfile::gaussian(qp.alpha)?;

    let frame_field = match source {
        FieldSource::AnalyticTw { spec, h } => {
            spec.validate()?;
            if !(h > 0.0) {
                return Err(Error::Domain(format!("h must be > 0, got {h}")));
            }
            None
        }
        FieldSource::Trajectory(traj) => {
            if traj.len() < 2 {
                return Err(Error::Shape("trajectory needs at least two frames".into()));
            }
            let h = traj.params.h;
            let spacing = h * traj.frame_interval();
            let bound = qp.rate_bound();
            if bound > 0.0 && spacing > MAX_FRAME_SPACING / bound {
                return Err(Error::Precondition(format!(
                    "frame spacing {spacing:.4} in tau exceeds {:.4}; lower the sample stride",
                    MAX_FRAME_SPACING / bound
                )));
            }
            let (cover_a, cover_b) = (h * traj.t0(), h * traj.t_last());
            let slack = 1e-9 * (1.0 + cover_a.abs().max(cover_b.abs()));
            if tau_a < cover_a - slack || tau_b > cover_b + slack {
                return Err(Error::Shape(format!(
                    "frames cover tau in [{cover_a}, {cover_b}], requested [{tau_a}, {tau_b}]"
                )));
            }
            let site = qp.site(traj.params.n);
            let values = traj
                .frames
                .iter()
                .map(|f| smeared_field(f, &profile, site))
                .collect::<Result<Vec<_>>>()?;
            Some(FrameField {
                tau0: cover_a,
                dtau: spacing,
                values,
            })
        }
    };
    let field_at = |tau: f64| -> Vec3 {
        match (&source, &frame_field) {
            (FieldSource::AnalyticTw { spec, h }, _) => analytic_field(spec, *h, &profile, tau),
            (_, Some(ff)) => ff.at(tau),
            _ => unreachable!("trajectory source always has frame data"),
        }
    };

    let steps = ((tau_b - tau_a) / dtau).ceil().max(1.0) as usize;
    let step = (tau_b - tau_a) / steps as f64;
    let z = [0.0, 0.0, qp.delta];
    let mut taus = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut field = Vec::with_capacity(steps + 1);
    let mut a = a0.a;
    taus.push(tau_a);
    states.push(a);
    field.push(field_at(tau_a));
    for k in 0..steps {
        let tau = tau_a + k as f64 * step;
        let omega = vec3::axpy(&z, qp.mu, &field_at(tau + 0.5 * step));
        a = vec3::precess(&a, &omega, step);
        let t_next = tau_a + (k + 1) as f64 * step;
        taus.push(t_next);
        states.push(a);
        field.push(field_at(t_next));
    }
    Ok(BlochTrajectory { taus, states, field })
}

/// τ interval over which a drive-injected soliton is simulated for an
/// analytic source: from the drive-window start `-Ξ/sin 2β` to `3Ξ/sin 2β`
/// past the transit, padded by the coupling range.
pub fn analytic_span(spec: &SolitonSpec, h: f64, alpha: f64, window: f64) -> (f64, f64) {
    let (rate, pad) = span_scales(spec, h, alpha);
    (-(window + pad) / rate, (3.0 * window + pad) / rate)
}

/// Post-transit window `[2Ξ, 3Ξ]/sin 2β` of [`analytic_span`]: far enough
/// into the tail (`sech 2Ξ`) that a nearly polar `a` still has a clean phase.
pub fn analytic_post_window(spec: &SolitonSpec, h: f64, alpha: f64, window: f64) -> (f64, f64) {
    let (rate, pad) = span_scales(spec, h, alpha);
    ((2.0 * window + pad) / rate, (3.0 * window + pad) / rate)
}

fn span_scales(spec: &SolitonSpec, h: f64, alpha: f64) -> (f64, f64) {
    let pad = GAUSSIAN_CUTOFF * alpha * h.sqrt() * spec.beta.sin();
    ((2.0 * spec.beta).sin(), pad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticState {
    pub az_out: f64,
    pub aperp_out: f64,
    /// Rate of the uniform precession `a ∝ (cos(φ - ωτ), sin(φ - ωτ))`;
    /// `None` when the state is polar and the phase is undefined.
    pub omega: Option<f64>,
    pub phi: Option<f64>,
    /// RMS residual of the phase fit.
    pub phase_residual: Option<f64>,
}

impl AsymptoticState {
    pub fn write_record<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
        writeln!(w, "az_out = {}", self.az_out)?;
        writeln!(w, "aperp_out = {}", self.aperp_out)?;
        writeln!(w, "omega = {}", opt(self.omega))?;
        writeln!(w, "phi = {}", opt(self.phi))?;
        writeln!(w, "phase_residual = {}", opt(self.phase_residual))?;
        w.flush()
    }
}

pub fn extract_asymptotics(traj: &BlochTrajectory, qp: &QubitParams, window: (f64, f64)) -> Result<AsymptoticState> {
    extract_asymptotics_with(traj, qp, window, ASYMPTOTIC_FIELD_TOL)
}

/// Mean `a^z` and a least-squares phase fit over a post-transit window.
/// Fails if `|s̃ - ẑ|` exceeds `field_tol` anywhere in the window.
pub fn extract_asymptotics_with(
    traj: &BlochTrajectory,
    _qp: &QubitParams,
    window: (f64, f64),
    field_tol: f64,
) -> Result<AsymptoticState> {
    let idx: Vec<usize> = (0..traj.taus.len())
        .filter(|&k| traj.taus[k] >= window.0 && traj.taus[k] <= window.1)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Precondition(format!(
            "asymptotic window [{}, {}] holds {} samples",
            window.0,
            window.1,
            idx.len()
        )));
    }
    for &k in &idx {
        let dev = vec3::norm(&vec3::sub(&traj.field[k], &Z_HAT));
        if dev > field_tol {
            return Err(Error::Precondition(format!(
                "window overlaps the transit: |s̃ - ẑ| = {dev:.3e} at tau = {}",
                traj.taus[k]
            )));
        }
    }
    let m = idx.len() as f64;
    let az = idx.iter().map(|&k| traj.states[k][2]).sum::<f64>() / m;
    let aperp = idx.iter().map(|&k| traj.states[k][0].hypot(traj.states[k][1])).sum::<f64>() / m;

    let (omega, phi, residual) = if aperp < 1e-9 {
        (None, None, None)
    } else {
        let mut psi = Vec::with_capacity(idx.len());
        let mut prev: Option<f64> = None;
        for &k in &idx {
            let raw = traj.states[k][1].atan2(traj.states[k][0]);
            let un = match prev {
                None => raw,
                Some(p) => p + wrap(raw - p),
            };
            psi.push(un);
            prev = Some(un);
        }
        let taus: Vec<f64> = idx.iter().map(|&k| traj.taus[k]).collect();
        let tm = taus.iter().sum::<f64>() / m;
        let pm = psi.iter().sum::<f64>() / m;
        let (mut stt, mut stp) = (0.0, 0.0);
        for (t, p) in taus.iter().zip(&psi) {
            stt += (t - tm) * (t - tm);
            stp += (t - tm) * (p - pm);
        }
        let slope = stp / stt;
        let intercept = pm - slope * tm;
        let rms = (taus
            .iter()
            .zip(&psi)
            .map(|(t, p)| (p - intercept - slope * t).powi(2))
            .sum::<f64>()
            / m)
            .sqrt();
        (Some(-slope), Some(wrap(intercept)), Some(rms))
    };
    Ok(AsymptoticState {
        az_out: az,
        aperp_out: aperp,
        omega,
        phi,
        phase_residual: residual,
    })
}

fn wrap(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    x - tau * ((x + std::f64::consts::PI) / tau).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackAction {
    pub ratio: f64,
    pub non_negligible: bool,
}

/// Qubit energy gain on a full flip relative to the soliton energy,
/// `(μ+δ)/8 · (ħ/S) · √h / sin β`.
pub fn backaction_ratio(qp: &QubitParams, beta: f64, h: f64, s_over_hbar: f64) -> Result<BackAction> {
    if qp.mu < 0.0 || qp.delta < 0.0 || !(h > 0.0) || !(s_over_hbar > 0.0) {
        return Err(Error::Domain("back-action ratio needs mu, delta >= 0 and h, S/hbar > 0".into()));
    }
    if !(beta > 0.0) || beta.sin() < 1e-12 {
        return Err(Error::Domain(format!("back-action ratio diverges as beta -> 0 (beta = {beta})")));
    }
    let ratio = (qp.mu + qp.delta) / 8.0 / s_over_hbar * h.sqrt() / beta.sin();
    Ok(BackAction {
        ratio,
        non_negligible: ratio >= BACKACTION_WARN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ground_state, ChainParams};
    use crate::vec3::X_HAT;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flip(beta: f64, dtau: f64) -> (BlochTrajectory, AsymptoticState) {
        let h = 0.2;
        let spec = SolitonSpec::new(beta).unwrap();
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        let span = analytic_span(&spec, h, 0.0, 12.0);
        let bt = evolve_qubit(FieldSource::AnalyticTw { spec, h }, &qp, BlochState::up(), span, dtau).unwrap();
        let window = analytic_post_window(&spec, h, 0.0, 12.0);
        let asym = extract_asymptotics(&bt, &qp, window).unwrap();
        (bt, asym)
    }

    #[test]
    fn gaussian_normalization() {
        let p = CouplingProfile::gaussian(1.0).unwrap();
        assert_eq!(p.half_width(), 6);
        assert_relative_eq!(p.normalization, 0.398_942, epsilon = 1e-6);
        assert_relative_eq!(p.weights()[6], 0.398_942, epsilon = 1e-6);
        assert_relative_eq!(p.weights()[7], 0.398_942 * (-0.5f64).exp(), epsilon = 1e-6);
        assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let point = CouplingProfile::gaussian(0.0).unwrap();
        assert_eq!(point.weights(), &[1.0]);
        assert!(CouplingProfile::gaussian(-1.0).is_err());
    }

    #[test]
    fn smeared_field_cases() {
        let params = ChainParams::new(40, 0.2).unwrap();
        let g = ground_state(&params);
        for alpha in [0.0, 0.7, 2.5] {
            let p = CouplingProfile::gaussian(alpha).unwrap();
            let s = smeared_field(&g, &p, 20).unwrap();
            assert!((s[2] - 1.0).abs() < 1e-12 && s[0] == 0.0);
        }
        let mut spins = vec![Z_HAT; 40];
        spins[19] = X_HAT;
        let cfg = SpinConfig::new(spins).unwrap();
        assert_eq!(smeared_field(&cfg, &CouplingProfile::gaussian(0.0).unwrap(), 20).unwrap(), X_HAT);
        let wide = CouplingProfile::gaussian(1.0).unwrap();
        assert!(vec3::norm(&smeared_field(&cfg, &wide, 20).unwrap()) < 1.0);
        assert!(matches!(smeared_field(&cfg, &wide, 3), Err(Error::Shape(_))));
        assert!(matches!(smeared_field(&cfg, &wide, 36), Err(Error::Shape(_))));
    }

    #[test]
    fn decoupled_qubit_precesses_uniformly() {
        let spec = SolitonSpec::new(0.8).unwrap();
        let qp = QubitParams::new(1.0, 0.0, 0.0);
        let bt = evolve_qubit(
            FieldSource::AnalyticTw { spec, h: 0.2 },
            &qp,
            BlochState::new(X_HAT).unwrap(),
            (-20.0, 20.0),
            0.01,
        )
        .unwrap();
        assert!(bt.states.iter().all(|a| a[2].abs() < 1e-15));
        let asym = extract_asymptotics_with(&bt, &qp, (-20.0, 20.0), f64::INFINITY).unwrap();
        assert!((asym.omega.unwrap() - 1.0).abs() < 1e-10);
        assert!(asym.phase_residual.unwrap() < 1e-9);
    }

    #[test]
    fn ideal_soliton_flips_qubit() {
        for tan_beta in [0.5f64, 1.0, 2.0] {
            let (bt, asym) = flip(tan_beta.atan(), 0.002);
            assert!((asym.az_out + 1.0).abs() < 1e-3, "tan beta {tan_beta}: {}", asym.az_out);
            assert!(bt.max_norm_error() < 1e-10);
            assert!((asym.omega.unwrap() - 2.0).abs() < 1e-3, "tan beta {tan_beta}: {:?}", asym.omega);
        }
    }

    #[test]
    fn precession_before_and_after_transit() {
        let beta: f64 = 0.7;
        let h = 0.2;
        let spec = SolitonSpec::new(beta).unwrap();
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        let rate = (2.0 * beta).sin();
        // tilted start so the phase is defined before the transit
        let a0 = BlochState::new(vec3::normalized(&[0.6, 0.0, 0.8])).unwrap();
        let span = (-30.0 / rate, 30.0 / rate);
        let bt = evolve_qubit(FieldSource::AnalyticTw { spec, h }, &qp, a0, span, 0.002).unwrap();
        for window in [(span.0, -12.0 / rate), (12.0 / rate, span.1)] {
            let a = extract_asymptotics(&bt, &qp, window).unwrap();
            assert!((a.omega.unwrap() - 2.0).abs() < 1e-3);
            assert!(a.phase_residual.unwrap() < 1e-3);
            assert!((a.aperp_out - (1.0 - a.az_out * a.az_out).sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn window_over_transit_is_rejected() {
        let (bt, _) = flip(0.6, 0.005);
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        assert!(matches!(extract_asymptotics(&bt, &qp, (-1.0, 1.0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn converges_at_second_order() {
        let h = 0.2;
        let spec = SolitonSpec::new(0.9).unwrap();
        // off the flip point so a^z_out is not at an extremum
        let qp = QubitParams::new(1.0, 0.6, 0.0);
        let span = analytic_span(&spec, h, 0.0, 12.0);
        let az = |d| {
            evolve_qubit(FieldSource::AnalyticTw { spec, h }, &qp, BlochState::up(), span, d)
                .unwrap()
                .final_state()[2]
        };
        let exact = az(0.0005);
        let (e1, e2) = ((az(0.04) - exact).abs(), (az(0.02) - exact).abs());
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn polar_state_has_no_phase() {
        let spec = SolitonSpec::new(0.8).unwrap();
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        let bt = evolve_qubit(FieldSource::AnalyticTw { spec, h: 0.2 }, &qp, BlochState::up(), (-40.0, -30.0), 0.01)
            .unwrap();
        let a = extract_asymptotics(&bt, &qp, (-40.0, -30.0)).unwrap();
        assert!((a.az_out - 1.0).abs() < 1e-12);
        assert!(a.omega.is_none());
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let spec = SolitonSpec::new(0.8).unwrap();
        let src = FieldSource::AnalyticTw { spec, h: 0.2 };
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        assert!(evolve_qubit(src, &qp, BlochState { a: [0.0, 0.0, 2.0] }, (0.0, 1.0), 0.01).is_err());
        assert!(matches!(evolve_qubit(src, &qp, BlochState::up(), (0.0, 1.0), 0.5), Err(Error::Stability(_))));
        assert!(evolve_qubit(src, &qp, BlochState::up(), (1.0, 0.0), 0.01).is_err());
    }

    #[test]
    fn trajectory_source_coverage_and_spacing() {
        let params = ChainParams::new(60, 0.2).unwrap();
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        let traj = Trajectory::analytic_tw(&params, &spec, 10.0, 0.0, 0.2, 50).unwrap();
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        let src = FieldSource::Trajectory(&traj);
        assert!(evolve_qubit(src, &qp, BlochState::up(), (0.0, 1.9), 0.01).is_ok());
        assert!(matches!(evolve_qubit(src, &qp, BlochState::up(), (0.0, 3.0), 0.01), Err(Error::Shape(_))));
        let coarse = Trajectory::analytic_tw(&params, &spec, 10.0, 0.0, 1.0, 20).unwrap();
        assert!(matches!(
            evolve_qubit(FieldSource::Trajectory(&coarse), &qp, BlochState::up(), (0.0, 1.0), 0.01),
            Err(Error::Precondition(_))
        ));
    }

    /// Replaying analytic frames reproduces the analytic source.
    #[test]
    fn trajectory_replay_matches_analytic() {
        let h = 0.2;
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        let sc = crate::soliton::tw_scales(spec.beta, h).unwrap();
        let params = ChainParams::new(200, h).unwrap();
        let site = 100usize;
        // core reaches the qubit site at t = 0
        let t0 = -300.0;
        let x0 = site as f64 + sc.v * t0;
        let interval = 0.05;
        let frames = (600.0 / interval) as usize + 1;
        let traj = Trajectory::analytic_tw(&params, &spec, x0, t0, interval, frames).unwrap();
        let mut qp = QubitParams::new(1.0, 1.0, 0.0);
        qp.qubit_site = Some(site);
        let span = (h * -250.0, h * 250.0);
        let a = evolve_qubit(FieldSource::Trajectory(&traj), &qp, BlochState::up(), span, 0.002).unwrap();
        let b = evolve_qubit(FieldSource::AnalyticTw { spec, h }, &qp, BlochState::up(), span, 0.002).unwrap();
        let (fa, fb) = (a.final_state(), b.final_state());
        assert!(vec3::norm(&vec3::sub(&fa, &fb)) < 1e-3, "{fa:?} vs {fb:?}");
    }

    #[test]
    fn backaction_values() {
        let qp = QubitParams::new(1.0, 1.0, 0.0);
        let r = backaction_ratio(&qp, 2.0f64.atan(), 0.2, 1.0).unwrap();
        assert_relative_eq!(r.ratio, 0.125, epsilon = 1e-15);
        assert!(!r.non_negligible);
        let zero = backaction_ratio(&QubitParams::new(0.0, 0.0, 0.0), 0.5, 0.2, 1.0).unwrap();
        assert_eq!(zero.ratio, 0.0);
        let mut last = f64::INFINITY;
        for s in [1.0, 2.0, 10.0, 1e3] {
            let r = backaction_ratio(&qp, 0.5, 0.2, s).unwrap().ratio;
            assert!(r < last);
            last = r;
        }
        assert!(backaction_ratio(&qp, 0.0, 0.2, 1.0).is_err());
        assert!(backaction_ratio(&qp, 0.01, 1.0, 1.0).unwrap().non_negligible);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn smearing_is_bounded(alpha in 0.0f64..3.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let spins: Vec<Vec3> = (0..60).map(|_| vec3::normalized(&[
                rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])).collect();
            let cfg = SpinConfig::new(spins).unwrap();
            let p = CouplingProfile::gaussian(alpha).unwrap();
            prop_assert!(vec3::norm(&smeared_field(&cfg, &p, 30).unwrap()) <= 1.0 + 1e-12);
        }
    }
}
