//! Handle-point unicycle bridge and the corner slowing-power profile δ̃(s).

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, logistic, softplus, SmoothParams, Vec2, WaypointPath};
use crate::power::UnicyclePower;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnicycleParams {
    /// ℓ, center-to-handle distance.
    pub handle: f64,
    pub eps_omega: f64,
    pub beta_tilde: f64,
    /// Lower bound on the activation distance; the profile uses
    /// max(d_tilde, 2·max(d̃ₐ, d)).
    pub d_tilde: f64,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self { handle: 0.1, eps_omega: 0.01, beta_tilde: 300.0, d_tilde: 0.2 }
    }
}

impl UnicycleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.handle > 0.0
            && self.eps_omega > 0.0
            && self.eps_omega < 0.5
            && self.beta_tilde > 0.0
            && self.d_tilde > 0.0
            && [self.handle, self.eps_omega, self.beta_tilde, self.d_tilde].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("invalid unicycle parameters: {self:?}")))
        }
    }
}

/// (v, ω) that move the handle point with velocity u.
pub fn to_unicycle(u: Vec2, theta: f64, handle: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * u.x + s * u.y, (-s * u.x + c * u.y) / handle)
}

/// Handle velocity produced by (v, ω); inverse of [`to_unicycle`].
pub fn handle_velocity(v: f64, omega: f64, theta: f64, handle: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(v * c - handle * omega * s, v * s + handle * omega * c)
}

/// Flips ω when reversing; ω = 0 at v = 0.
pub fn twoway(v: f64, omega: f64) -> (f64, f64) {
    if v > 0.0 {
        (v, omega)
    } else if v < 0.0 {
        (v, -omega)
    } else {
        (v, 0.0)
    }
}

/// Peak |ω| at a corner of angle ψ tracked at speed v_r.
pub fn omega_bound(v_r: f64, handle: f64, psi: f64) -> f64 {
    let psi = if psi > FRAC_PI_2 { std::f64::consts::PI - psi } else { psi };
    v_r / handle * psi.sin()
}

/// d̃ₐ = ℓ(π/2)ln(ψ/ε_ω).
pub fn attenuation_distance(handle: f64, psi: f64, eps_omega: f64) -> Result<f64> {
    if !(eps_omega > 0.0 && psi >= eps_omega) {
        return Err(Error::InvalidAngles { psi, eps_omega });
    }
    Ok(handle * FRAC_PI_2 * (psi / eps_omega).ln())
}

/// δ̃(s) = Σᵢ (amplitudeᵢ + floor)·σ̃ᵢ(s), in joules per unit of s, so δ̃·η is a power.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlowingProfile {
    pub centers: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub half_width: f64,
    pub beta_tilde: f64,
    pub floor: f64,
}

impl SlowingProfile {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn window(&self, i: usize, s: f64) -> f64 {
        let c = self.centers[i];
        logistic(self.beta_tilde * (s - (c - self.half_width))) * logistic(-self.beta_tilde * (s - (c + self.half_width)))
    }

    /// σ̃ᵢ(s).
    pub fn window_value(&self, i: usize, s: f64) -> f64 {
        self.window(i, s)
    }

    pub fn power(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.centers.len() {
            acc += (self.amplitudes[i] + self.floor) * self.window(i, s);
        }
        acc
    }

    /// ∫ₛ¹ δ̃ in closed form.
    pub fn integral_exact(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..self.centers.len() {
            let a = self.centers[i] - self.half_width;
            let b = self.centers[i] + self.half_width;
            acc += (self.amplitudes[i] + self.floor) * window_antiderivative_diff(self.beta_tilde, a, b, s, 1.0);
        }
        acc
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a + self.floor))
    }
}

/// ∫ₓʸ σ(β(τ−a))·σ(−β(τ−b)) dτ via
/// σ(β(τ−a))σ(−β(τ−b)) = [σ(β(τ−a)) − σ(β(τ−b))] / (1 − e^{−β(b−a)}).
fn window_antiderivative_diff(beta: f64, a: f64, b: f64, x: f64, y: f64) -> f64 {
    let f = |t: f64| softplus(beta * (t - a)) - softplus(beta * (t - b));
    let denom = beta * -(-beta * (b - a)).exp_m1();
    (f(y) - f(x)) / denom
}

/// δ̃(s).
pub fn slowing_power(profile: &SlowingProfile, s: f64) -> f64 {
    profile.power(s)
}

/// ∫ₛ¹ δ̃ by composite Simpson with 256 panels.
pub fn slowing_integral(profile: &SlowingProfile, s: f64) -> f64 {
    slowing_integral_with(profile, s, 256)
}

/// ∫ₛ¹ δ̃ by composite Simpson with `panels` panels (rounded up to even).
pub fn slowing_integral_with(profile: &SlowingProfile, s: f64, panels: usize) -> f64 {
    if s >= 1.0 || profile.is_empty() {
        return 0.0;
    }
    let n = panels.max(2).div_ceil(2) * 2;
    let h = (1.0 - s) / n as f64;
    let mut acc = profile.power(s) + profile.power(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * profile.power(s + k as f64 * h);
    }
    acc * h / 3.0
}

/// Windows at every interior waypoint that turns by more than ε_ω.
///
/// Each corner amplitude is the peak rotation excess reachable while |ω|
/// stays below the corner bound, scaled by L/v_r.
pub fn build_slowing_profile(
    path: &WaypointPath,
    model: &UnicyclePower,
    v_r: f64,
    params: &UnicycleParams,
    d: f64,
) -> Result<SlowingProfile> {
    params.validate()?;
    if !(v_r > 0.0) {
        return Err(Error::NonPositiveReturnSpeed(v_r));
    }
    let l = path.total_length();
    let scale = l / v_r;
    let mut centers = Vec::new();
    let mut amplitudes = Vec::new();
    let mut reach = d;
    for (k, &psi) in path.turn_angles().iter().enumerate() {
        if psi <= params.eps_omega {
            continue;
        }
        let omega = omega_bound(v_r, params.handle, psi);
        let peak = model.peak_rotation_excess(omega);
        centers.push(path.breakpoints()[k + 1]);
        amplitudes.push(scale * peak);
        // attenuation is governed by the effective angle used in omega_bound
        let psi_eff = if psi > FRAC_PI_2 { std::f64::consts::PI - psi } else { psi };
        let da = attenuation_distance(params.handle, psi_eff.max(params.eps_omega), params.eps_omega)?;
        reach = reach.max(da);
    }
    let d_tilde = params.d_tilde.max(2.0 * reach);
    let floor = if centers.is_empty() {
        0.0
    } else {
        scale * model.rotation_excess(v_r / params.handle * params.eps_omega)
    };
    Ok(SlowingProfile { centers, amplitudes, half_width: d_tilde / (2.0 * l), beta_tilde: params.beta_tilde, floor })
}

/// One step of the corner-tracking experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSample {
    pub t: f64,
    pub s: f64,
    /// Arc distance of the reference past `corner_s` (negative before it).
    pub past_corner: f64,
    pub v: f64,
    pub omega: f64,
}

/// Drives a handle-point unicycle with u = ẋ_r + k_p(x_r − x) while the
/// reference moves along the smoothed path at constant speed v_r.
pub fn simulate_reference_tracking(
    path: &WaypointPath,
    smooth: &SmoothParams,
    v_r: f64,
    handle: f64,
    k_p: f64,
    dt: f64,
    corner_s: f64,
) -> Vec<CornerSample> {
    let mut theta = path.unit_dirs()[0].y.atan2(path.unit_dirs()[0].x);
    let start = geometry::smooth_point(path, smooth, 0.0);
    let mut center = start - Vec2::new(theta.cos(), theta.sin()) * handle;
    let mut s: f64 = 0.0;
    let mut t = 0.0;
    let mut arc = 0.0;
    let mut arc_corner = None;
    let mut out = Vec::new();
    while s < 1.0 {
        let sample = geometry::evaluate(path, smooth, s);
        let speed = sample.tangent_full.norm();
        if speed <= 0.0 {
            break;
        }
        let rate = v_r / speed;
        if arc_corner.is_none() && s >= corner_s {
            arc_corner = Some(arc);
        }
        let x = center + Vec2::new(theta.cos(), theta.sin()) * handle;
        let u = sample.tangent_full * rate + (sample.point - x) * k_p;
        let (v, w) = to_unicycle(u, theta, handle);
        let (v, w) = twoway(v, w);
        out.push(CornerSample { t, s, past_corner: arc, v, omega: w });
        center += Vec2::new(theta.cos(), theta.sin()) * (v * dt);
        theta += w * dt;
        s = (s + rate * dt).min(1.0);
        arc += v_r * dt;
        t += dt;
    }
    let arc_corner = arc_corner.unwrap_or(arc);
    for c in &mut out {
        c.past_corner -= arc_corner;
    }
    out
}
