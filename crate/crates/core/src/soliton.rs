//! Closed-form Tjon-Wright soliton of the continuum ferromagnetic chain.
//!
//! With `ξ = (x - v t)/λ` the profile is
//! `θ = 2 asin(sin β sech ξ)`, `φ = φ₀ + ξ cot β + atan(tan β tanh ξ)`,
//! and the amplitude `β ∈ (0, π/2)` fixes every scale:
//! `λ = 1/(√h sin β)`, `τ = 1/(h sin 2β)`, `ε = 8 √h sin β`, `v = 2 √h cos β`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Continuum approximation is flagged as degrading at or above this `√h sin β`.
pub const VALIDITY_WARN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Toward increasing site index.
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonSpec {
    pub beta: f64,
    pub phi0: f64,
    pub direction: Direction,
}

impl SolitonSpec {
    pub fn new(beta: f64) -> Result<Self> {
        let spec = SolitonSpec {
            beta,
            phi0: 0.0,
            direction: Direction::Forward,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_tan_beta(tan_beta: f64) -> Result<Self> {
        Self::new(tan_beta.atan())
    }

    pub fn with_phi0(mut self, phi0: f64) -> Self {
        self.phi0 = phi0;
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !self.phi0.is_finite() {
            return Err(Error::Domain("phi0 must be finite".into()));
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must lie in (0, pi/2), got {beta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolitonScales {
    pub beta: f64,
    pub h: f64,
    /// Length in lattice spacings.
    pub lambda: f64,
    /// Time scale in `1/(JS)`.
    pub tau: f64,
    /// Energy in `JS²`.
    pub epsilon: f64,
    /// Velocity in `d·JS`.
    pub v: f64,
    /// `√h sin β`; the continuum picture needs this `≪ 1`.
    pub validity_ratio: f64,
    pub continuum_warning: bool,
}

pub fn tw_scales(beta: f64, h: f64) -> Result<SolitonScales> {
    check_beta(beta)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("h must be > 0 for a soliton, got {h}")));
    }
    let sqrt_h = h.sqrt();
    let (sin, cos) = beta.sin_cos();
    let ratio = sqrt_h * sin;
    Ok(SolitonScales {
        beta,
        h,
        lambda: 1.0 / ratio,
        tau: 1.0 / (h * (2.0 * beta).sin()),
        epsilon: 8.0 * sqrt_h * sin,
        v: 2.0 * sqrt_h * cos,
        validity_ratio: ratio,
        continuum_warning: ratio >= VALIDITY_WARN,
    })
}

/// Amplitude that travels at speed `v` in field `h`, from `v = 2 √h cos β`.
pub fn beta_from_velocity(v: f64, h: f64) -> Result<f64> {
    let ratio = v.abs() / (2.0 * h.sqrt());
    if !(ratio <= 1.0) {
        return Err(Error::Supersonic { ratio });
    }
    Ok(ratio.acos())
}

/// Polar angles `(θ, φ)` of the profile at `ξ`.
pub fn tw_angles(spec: &SolitonSpec, xi: f64) -> (f64, f64) {
    let xi = spec.direction.sign() * xi;
    let (sin_b, cos_b) = spec.beta.sin_cos();
    let sech = 1.0 / xi.cosh();
    let theta = 2.0 * (sin_b * sech).asin();
    let phi = spec.phi0 + xi * cos_b / sin_b + (sin_b / cos_b * xi.tanh()).atan();
    (theta, phi)
}

pub fn tw_profile(spec: &SolitonSpec, xi: f64) -> Vec3 {
    let (theta, phi) = tw_angles(spec, xi);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// `d s / d ξ` of [`tw_profile`], analytically.
pub fn tw_profile_derivative(spec: &SolitonSpec, xi: f64) -> Vec3 {
    let sign = spec.direction.sign();
    let (theta, phi) = tw_angles(spec, xi);
    let x = sign * xi;
    let (sin_b, cos_b) = spec.beta.sin_cos();
    let tan_b = sin_b / cos_b;
    let sech = 1.0 / x.cosh();
    let tanh = x.tanh();
    let u = sin_b * sech;
    let dtheta = -2.0 * u * tanh / (1.0 - u * u).sqrt();
    let dphi = cos_b / sin_b + tan_b * sech * sech / (1.0 + tan_b * tan_b * tanh * tanh);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [
        sign * (dtheta * ct * cp - dphi * st * sp),
        sign * (dtheta * ct * sp + dphi * st * cp),
        sign * (-dtheta * st),
    ]
}
