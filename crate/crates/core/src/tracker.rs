//! Locating the generated soliton and estimating its effective amplitude.
//!
//! The core is the `s^z` minimum, refined by a parabola through the minimal
//! site and its neighbours. Usable positions are split into legs at gaps
//! (the core leaving the tracked region, e.g. while reflecting off the far
//! end); each leg gets a least-squares velocity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::soliton::beta_from_velocity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOptions {
    /// A frame is usable only if `min s^z` is below this.
    pub threshold: f64,
    /// Cores closer than this many soliton lengths to either end are ignored.
    pub end_margin_lambdas: f64,
    /// Soliton length used for the margin; defaults to the injected `λ_β`.
    #[serde(default)]
    pub lambda: Option<f64>,
    pub min_frames: usize,
    /// Frames further apart than this many frame intervals start a new leg.
    pub max_gap_frames: usize,
    #[serde(default)]
    pub time_range: Option<(f64, f64)>,
    /// Shape-fit half-window in soliton lengths.
    pub fit_half_width_lambdas: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            threshold: 0.9,
            end_margin_lambdas: 5.0,
            lambda: None,
            min_frames: 10,
            max_gap_frames: 3,
            time_range: None,
            fit_half_width_lambdas: 6.0,
        }
    }
}

impl TrackOptions {
    /// Threshold that still admits a shallow dip of depth `2 sin²β`:
    /// `max(0.9, cos²β)`, halfway between the dip bottom and `1`.
    pub fn for_beta(beta: f64) -> Self {
        TrackOptions {
            threshold: 0.9f64.max(beta.cos().powi(2)),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorePoint {
    pub frame: usize,
    pub t: f64,
    /// Chain site (1-based), sub-lattice interpolated.
    pub n: f64,
    pub min_sz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leg {
    /// Index range into `core_positions`.
    pub first: usize,
    pub last: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub velocity: f64,
    pub intercept: f64,
}

impl Leg {
    pub fn frames(&self) -> usize {
        self.last - self.first + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackResult {
    pub core_positions: Vec<CorePoint>,
    pub legs: Vec<Leg>,
    /// Velocity of the first leg with enough frames.
    pub velocity: f64,
    pub beta_eff_velocity: Option<f64>,
    pub beta_eff_shape: Option<f64>,
    pub lambda_fit: Option<f64>,
    pub shape_residual: Option<f64>,
    pub shape_time: Option<f64>,
}

impl TrackResult {
    pub fn main_leg(&self) -> &Leg {
        self.legs
            .iter()
            .find(|l| l.velocity == self.velocity)
            .expect("velocity comes from a leg")
    }

    /// Whether any leg's core passes chain site `site`.
    pub fn reaches(&self, site: f64) -> bool {
        self.legs.iter().any(|l| {
            let pts = &self.core_positions[l.first..=l.last];
            let lo = pts.iter().map(|p| p.n).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p.n).fold(f64::NEG_INFINITY, f64::max);
            lo <= site && site <= hi
        })
    }

    pub fn write_record<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
        writeln!(w, "velocity = {}", self.velocity)?;
        writeln!(w, "beta_eff_velocity = {}", opt(self.beta_eff_velocity))?;
        writeln!(w, "beta_eff_shape = {}", opt(self.beta_eff_shape))?;
        writeln!(w, "lambda_fit = {}", opt(self.lambda_fit))?;
        writeln!(w, "shape_residual = {}", opt(self.shape_residual))?;
        writeln!(w, "shape_time = {}", opt(self.shape_time))?;
        writeln!(w, "usable_frames = {}", self.core_positions.len())?;
        writeln!(w, "legs = {}", self.legs.len())?;
        for (k, l) in self.legs.iter().enumerate() {
            writeln!(w, "leg{k}_velocity = {}", l.velocity)?;
            writeln!(w, "leg{k}_t_start = {}", l.t_start)?;
            writeln!(w, "leg{k}_t_end = {}", l.t_end)?;
        }
        w.flush()
    }

    pub fn write_positions_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,n,min_sz")?;
        for p in &self.core_positions {
            writeln!(w, "{},{},{}", p.t, p.n, p.min_sz)?;
        }
        w.flush()
    }
}

/// Sub-lattice position of the `s^z` minimum (1-based) and its value.
pub fn locate_minimum(sz: &[f64]) -> (f64, f64) {
    let (i, &min) = sz
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty frame");
    let mut offset = 0.0;
    if i > 0 && i + 1 < sz.len() {
        let (l, c, r) = (sz[i - 1], sz[i], sz[i + 1]);
        let curv = l - 2.0 * c + r;
        if curv > 0.0 {
            offset = (0.5 * (l - r) / curv).clamp(-0.5, 0.5);
        }
    }
    (i as f64 + 1.0 + offset, min)
}

fn fit_line(points: &[CorePoint]) -> (f64, f64) {
    let m = points.len() as f64;
    let tm = points.iter().map(|p| p.t).sum::<f64>() / m;
    let nm = points.iter().map(|p| p.n).sum::<f64>() / m;
    let (mut stt, mut stn) = (0.0, 0.0);
    for p in points {
        stt += (p.t - tm) * (p.t - tm);
        stn += (p.t - tm) * (p.n - nm);
    }
    let slope = stn / stt;
    (slope, nm - slope * tm)
}

pub fn track_core(traj: &Trajectory, opts: &TrackOptions) -> Result<TrackResult> {
    if !(opts.threshold > -1.0 && opts.threshold < 1.0) {
        return Err(Error::Domain(format!("threshold must lie in (-1, 1), got {}", opts.threshold)));
    }
    let lambda = opts
        .lambda
        .or_else(|| traj.drive.scales().map(|s| s.lambda))
        .unwrap_or(1.0);
    let margin = opts.end_margin_lambdas * lambda;
    let n = traj.params.n as f64;
    let mut sz = vec![0.0; traj.params.n];
    let mut any_dip = false;
    let mut points = Vec::new();
    for (k, (t, frame)) in traj.times.iter().zip(&traj.frames).enumerate() {
        if let Some((a, b)) = opts.time_range {
            if *t < a || *t > b {
                continue;
            }
        }
        for (dst, s) in sz.iter_mut().zip(frame.spins()) {
            *dst = s[2];
        }
        let (pos, min) = locate_minimum(&sz);
        if min >= opts.threshold {
            continue;
        }
        any_dip = true;
        if pos < 1.0 + margin || pos > n - margin {
            continue;
        }
        points.push(CorePoint {
            frame: k,
            t: *t,
            n: pos,
            min_sz: min,
        });
    }
    if !any_dip {
        return Err(Error::NoSoliton);
    }
    let mut legs = Vec::new();
    let mut start = 0;
    for i in 1..=points.len() {
        let split = i == points.len() || points[i].frame - points[i - 1].frame > opts.max_gap_frames;
        if split && i > start {
            let seg = &points[start..i];
            let (velocity, intercept) = if seg.len() >= 2 { fit_line(seg) } else { (f64::NAN, f64::NAN) };
            legs.push(Leg {
                first: start,
                last: i - 1,
                t_start: seg[0].t,
                t_end: seg[seg.len() - 1].t,
                velocity,
                intercept,
            });
            start = i;
        }
    }
    let velocity = legs
        .iter()
        .find(|l| l.frames() >= opts.min_frames.max(2))
        .map(|l| l.velocity)
        .ok_or(Error::InsufficientFrames {
            found: legs.iter().map(Leg::frames).max().unwrap_or(0),
            required: opts.min_frames,
        })?;
    Ok(TrackResult {
        core_positions: points,
        legs,
        velocity,
        beta_eff_velocity: None,
        beta_eff_shape: None,
        lambda_fit: None,
        shape_residual: None,
        shape_time: None,
    })
}

/// Result of fitting `1 - A sech²((n - c)/λ)` to a profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeFit {
    pub depth: f64,
    pub center: f64,
    pub lambda: f64,
    pub rms: f64,
}

/// Least-squares fit with the depth `A` solved linearly for each
/// `(center, ln λ)` visited by a Nelder-Mead search.
pub fn fit_sech2(sites: &[f64], sz: &[f64], center0: f64, lambda0: f64) -> ShapeFit {
    let eval = |c: f64, lam: f64| -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for (x, y) in sites.iter().zip(sz) {
            let g = 1.0 / ((x - c) / lam).cosh().powi(2);
            num += (1.0 - y) * g;
            den += g * g;
        }
        let a = if den > 0.0 { num / den } else { 0.0 };
        let sse: f64 = sites
            .iter()
            .zip(sz)
            .map(|(x, y)| {
                let g = 1.0 / ((x - c) / lam).cosh().powi(2);
                (y - (1.0 - a * g)).powi(2)
            })
            .sum();
        (a, sse)
    };
    let cost = |p: &[f64; 2]| eval(p[0], p[1].exp()).1;
    let best = nelder_mead(cost, [center0, lambda0.ln()], [0.25, 0.1], 1e-14, 2000);
    let (a, sse) = eval(best[0], best[1].exp());
    ShapeFit {
        depth: a,
        center: best[0],
        lambda: best[1].exp(),
        rms: (sse / sites.len() as f64).sqrt(),
    }
}

fn nelder_mead<F: Fn(&[f64; 2]) -> f64>(f: F, x0: [f64; 2], step: [f64; 2], ftol: f64, max_iter: usize) -> [f64; 2] {
    let mut simplex = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut vals = simplex.map(|p| f(&p));
    for _ in 0..max_iter {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.map(|i| simplex[i]);
        vals = idx.map(|i| vals[i]);
        if (vals[2] - vals[0]).abs() <= ftol * (vals[0].abs() + 1e-300) + 1e-300 {
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |k: f64| [
            centroid[0] + k * (simplex[2][0] - centroid[0]),
            centroid[1] + k * (simplex[2][1] - centroid[1]),
        ];
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[2] = xe;
                vals[2] = fe;
            } else {
                simplex[2] = xr;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = xr;
            vals[2] = fr;
        } else {
            let xc = if fr < vals[2] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < vals[2].min(fr) {
                simplex[2] = xc;
                vals[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    vals[k] = f(&simplex[k]);
                }
            }
        }
    }
    let i = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    simplex[i]
}

/// Fills both `β′` estimates: from the velocity via `v = 2√h cos β′`, and
/// from a `1 - 2 sin²β′ sech²((n - n*)/λ′)` fit of the main-leg frame
/// closest to mid-chain.
pub fn estimate_beta_eff(traj: &Trajectory, track: &TrackResult, h: f64) -> Result<TrackResult> {
    estimate_beta_eff_with(traj, track, h, &TrackOptions::default())
}

pub fn estimate_beta_eff_with(
    traj: &Trajectory,
    track: &TrackResult,
    h: f64,
    opts: &TrackOptions,
) -> Result<TrackResult> {
    if !track.velocity.is_finite() {
        return Err(Error::Precondition("track has no valid velocity".into()));
    }
    let beta_v = beta_from_velocity(track.velocity, h)?;
    let leg = track.main_leg();
    let mid = 0.5 * (traj.params.n as f64 + 1.0);
    let point = track.core_positions[leg.first..=leg.last]
        .iter()
        .min_by(|a, b| (a.n - mid).abs().total_cmp(&(b.n - mid).abs()))
        .expect("leg is non-empty");
    let lambda0 = opts
        .lambda
        .or_else(|| traj.drive.scales().map(|s| s.lambda))
        .unwrap_or_else(|| 1.0 / (h.sqrt() * beta_v.sin()));
    let half = (opts.fit_half_width_lambdas * lambda0).max(3.0);
    let frame = &traj.frames[point.frame];
    let lo = ((point.n - half).floor().max(1.0)) as usize;
    let hi = ((point.n + half).ceil().min(traj.params.n as f64)) as usize;
    let sites: Vec<f64> = (lo..=hi).map(|n| n as f64).collect();
    let sz: Vec<f64> = (lo..=hi).map(|n| frame.spins()[n - 1][2]).collect();
    let fit = fit_sech2(&sites, &sz, point.n, lambda0);
    let beta_s = (0.5 * fit.depth).clamp(0.0, 1.0).sqrt().asin();
    Ok(TrackResult {
        beta_eff_velocity: Some(beta_v),
        beta_eff_shape: Some(beta_s),
        lambda_fit: Some(fit.lambda),
        shape_residual: Some(fit.rms),
        shape_time: Some(point.t),
        ..track.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ground_state, ChainParams};
    use crate::dynamics::{run_injection, DriveProtocol};
    use crate::soliton::{tw_scales, SolitonSpec};
    use proptest::prelude::*;

    #[test]
    fn parabola_is_exact_for_quadratics() {
        let sz: Vec<f64> = (1..=9).map(|n| 0.1 * (n as f64 - 4.3).powi(2) - 0.5).collect();
        let (pos, _) = locate_minimum(&sz);
        assert!((pos - 4.3).abs() < 1e-12);
    }

    #[test]
    fn analytic_tw_velocity_and_beta() {
        let h = 0.2;
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        let params = ChainParams::new(400, h).unwrap();
        let traj = Trajectory::analytic_tw(&params, &spec, 30.0, 0.0, 2.0, 400).unwrap();
        let track = track_core(&traj, &TrackOptions::default()).unwrap();
        let v = tw_scales(spec.beta, h).unwrap().v;
        assert!((track.velocity / v - 1.0).abs() < 1e-3, "{} vs {v}", track.velocity);
        let full = estimate_beta_eff(&traj, &track, h).unwrap();
        let (bv, bs) = (full.beta_eff_velocity.unwrap(), full.beta_eff_shape.unwrap());
        assert!((bv - spec.beta).abs() < 1e-3 && (bs - spec.beta).abs() < 1e-3, "{bv} {bs}");
        assert!(full.shape_residual.unwrap() < 1e-8);
    }

    #[test]
    fn no_soliton_in_ground_state() {
        let params = ChainParams::new(50, 0.2).unwrap();
        let traj = run_injection(&params, &DriveProtocol::none(0.2), &ground_state(&params), 5.0, 0.01, 10).unwrap();
        assert!(matches!(track_core(&traj, &TrackOptions::default()), Err(Error::NoSoliton)));
    }

    #[test]
    fn too_few_frames() {
        let params = ChainParams::new(200, 0.2).unwrap();
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        let traj = Trajectory::analytic_tw(&params, &spec, 50.0, 0.0, 1.0, 5).unwrap();
        assert!(matches!(
            track_core(&traj, &TrackOptions::default()),
            Err(Error::InsufficientFrames { .. })
        ));
    }

    #[test]
    fn supersonic_velocity_is_rejected() {
        let params = ChainParams::new(300, 0.2).unwrap();
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        let traj = Trajectory::analytic_tw(&params, &spec, 40.0, 0.0, 2.0, 100).unwrap();
        let mut track = track_core(&traj, &TrackOptions::default()).unwrap();
        track.velocity = 1.0;
        for leg in &mut track.legs {
            leg.velocity = 1.0;
        }
        assert!(matches!(estimate_beta_eff(&traj, &track, 0.2), Err(Error::Supersonic { .. })));
    }

    #[test]
    fn translation_invariance() {
        let params = ChainParams::new(400, 0.2).unwrap();
        let spec = SolitonSpec::from_tan_beta(1.5).unwrap();
        let a = Trajectory::analytic_tw(&params, &spec, 40.0, 0.0, 3.0, 200).unwrap();
        let b = Trajectory::analytic_tw(&params, &spec, 47.0, 0.0, 3.0, 200).unwrap();
        let (ta, tb) = (track_core(&a, &TrackOptions::default()).unwrap(), track_core(&b, &TrackOptions::default()).unwrap());
        assert!((ta.velocity - tb.velocity).abs() < 1e-9);
        for (p, q) in ta.core_positions.iter().zip(&tb.core_positions) {
            assert!((q.n - p.n - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn record_and_csv() {
        let params = ChainParams::new(300, 0.2).unwrap();
        let spec = SolitonSpec::from_tan_beta(2.0).unwrap();
        let traj = Trajectory::analytic_tw(&params, &spec, 40.0, 0.0, 2.0, 100).unwrap();
        let t = estimate_beta_eff(&traj, &track_core(&traj, &TrackOptions::default()).unwrap(), 0.2).unwrap();
        let mut rec = Vec::new();
        t.write_record(&mut rec).unwrap();
        let rec = String::from_utf8(rec).unwrap();
        assert!(rec.lines().any(|l| l.starts_with("beta_eff_shape = ")));
        let mut csv = Vec::new();
        t.write_positions_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + t.core_positions.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn analytic_estimates_unbiased(beta in 0.1f64..1.4) {
            let h = 0.2;
            let spec = SolitonSpec::new(beta).unwrap();
            let sc = tw_scales(beta, h).unwrap();
            let n = (30.0 * sc.lambda) as usize + 200;
            let params = ChainParams::new(n, h).unwrap();
            let x0 = 8.0 * sc.lambda;
            let frames = 200;
            let interval = (n as f64 - 16.0 * sc.lambda) / sc.v / frames as f64;
            let traj = Trajectory::analytic_tw(&params, &spec, x0, 0.0, interval, frames).unwrap();
            let opts = TrackOptions::for_beta(beta);
            let track = track_core(&traj, &opts).unwrap();
            let full = estimate_beta_eff_with(&traj, &track, h, &opts).unwrap();
            prop_assert!((full.beta_eff_velocity.unwrap() - beta).abs() < 2e-3);
            prop_assert!((full.beta_eff_shape.unwrap() - beta).abs() < 1e-3);
        }
    }
}
