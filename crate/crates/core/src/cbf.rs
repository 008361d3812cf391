//! Energy, bound and tracking barrier functions and their QP rows over z = [η, u₁, u₂].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, PathDynamics, SmoothParams, TangentMode, Vec2, WaypointPath};
use crate::power::ParabolicPower;
use crate::qp::Qp3;
use crate::unicycle::SlowingProfile;

/// δ_m = δ − d.
pub fn modified_radius(delta: f64, d: f64) -> Result<f64> {
    if d > 0.0 && d < delta && delta.is_finite() {
        Ok(delta - d)
    } else {
        Err(Error::InvalidRadii { delta, d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionSpec", into = "RegionSpec")]
pub struct ChargingRegion {
    center: Vec2,
    radius: f64,
    tracking_radius: f64,
    effective_radius: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSpec {
    center: Vec2,
    radius: f64,
    tracking_radius: f64,
}

impl TryFrom<RegionSpec> for ChargingRegion {
    type Error = Error;
    fn try_from(r: RegionSpec) -> Result<Self> {
        ChargingRegion::new(r.center, r.radius, r.tracking_radius)
    }
}

impl From<ChargingRegion> for RegionSpec {
    fn from(r: ChargingRegion) -> Self {
        RegionSpec { center: r.center, radius: r.radius, tracking_radius: r.tracking_radius }
    }
}

impl ChargingRegion {
    pub fn new(center: Vec2, radius: f64, tracking_radius: f64) -> Result<Self> {
        let effective_radius = modified_radius(radius, tracking_radius)?;
        Ok(Self { center, radius, tracking_radius, effective_radius })
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    /// δ.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// d.
    pub fn tracking_radius(&self) -> f64 {
        self.tracking_radius
    }

    /// δ_m.
    pub fn effective_radius(&self) -> f64 {
        self.effective_radius
    }

    pub fn contains(&self, x: Vec2) -> bool {
        x.dist(self.center) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfGains {
    pub gamma_e: f64,
    pub gamma_b: f64,
    pub gamma_d: f64,
}

impl Default for CbfGains {
    fn default() -> Self {
        Self { gamma_e: 0.5, gamma_b: 1.0, gamma_d: 1.0 }
    }
}

impl CbfGains {
    pub fn validate(&self) -> Result<()> {
        if [self.gamma_e, self.gamma_b, self.gamma_d].iter().all(|g| *g > 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("CBF gains must be positive: {self:?}")))
        }
    }
}

/// Consumed energy E and budget E_nom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyState {
    pub consumed: f64,
    pub budget: f64,
}

impl EnergyState {
    pub fn new(consumed: f64, budget: f64) -> Self {
        Self { consumed, budget }
    }

    pub fn available(&self) -> f64 {
        self.budget - self.consumed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CbfSnapshot {
    pub h_e: f64,
    pub h_b: f64,
    pub h_d: f64,
}

/// Rows in fixed order: energy, bound, tracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpRows {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub u_nom3: [f64; 3],
}

impl QpRows {
    pub fn to_qp(&self) -> Qp3 {
        Qp3 { a: self.a, b: self.b, z_nom: self.u_nom3 }
    }
}

/// Parameters shared by every row builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfConfig {
    pub model: ParabolicPower,
    pub v_r: f64,
    pub gains: CbfGains,
    pub region: ChargingRegion,
}

impl CbfConfig {
    /// P(v_r)/v_r, the nominal return energy per meter.
    pub fn energy_per_meter(&self) -> f64 {
        self.model.eval(self.v_r) / self.v_r
    }
}

/// h_e = E_nom − E − (P(v_r)/v_r)(L(1−s) − δ_m) − extra_integral.
pub fn h_energy(
    energy: EnergyState,
    model: &ParabolicPower,
    v_r: f64,
    length: f64,
    s: f64,
    delta_m: f64,
    extra_integral: f64,
) -> f64 {
    let c = model.eval(v_r) / v_r;
    energy.budget - energy.consumed - c * (length * (1.0 - s) - delta_m) - extra_integral
}

/// h_b = s.
pub fn h_bound(s: f64) -> f64 {
    s
}

/// h_d = ½(d² − ‖x − x_r‖²).
pub fn h_track(d: f64, x: Vec2, x_r: Vec2) -> f64 {
    0.5 * (d * d - (x - x_r).norm_sq())
}

/// Path quantities the rows need at the current s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub x_r: Vec2,
    pub dxr_ds: Vec2,
    pub dxr_dt: Vec2,
    pub l_dot: f64,
    pub length: f64,
}

impl PathState {
    pub fn evaluate(path: &WaypointPath, params: &SmoothParams, s: f64, head_rate: Vec2, mode: TangentMode) -> Self {
        let sample = geometry::evaluate(path, params, s);
        let (l_dot, dxr_dt) = if head_rate == Vec2::ZERO {
            (0.0, Vec2::ZERO)
        } else {
            let d = geometry::path_time_derivative(path, params, s, head_rate);
            (d.l_dot, d.xr_partial_t)
        };
        Self { x_r: sample.point, dxr_ds: sample.tangent(mode), dxr_dt, l_dot, length: path.total_length() }
    }

    pub fn from_parts(path: &WaypointPath, params: &SmoothParams, s: f64, dynamics: &PathDynamics, mode: TangentMode) -> Self {
        let sample = geometry::evaluate(path, params, s);
        Self {
            x_r: sample.point,
            dxr_ds: sample.tangent(mode),
            dxr_dt: dynamics.xr_partial_t,
            l_dot: dynamics.l_dot,
            length: path.total_length(),
        }
    }
}

/// Rows for the single-integrator robot.
pub fn build_qp_si(
    cfg: &CbfConfig,
    geom: &PathState,
    s: f64,
    x: Vec2,
    energy: EnergyState,
    u_nom: Vec2,
    measured_power: f64,
) -> (QpRows, CbfSnapshot) {
    build_rows(cfg, geom, s, x, energy, u_nom, measured_power, 0.0, 0.0, 0.0)
}

/// Rows for the unicycle: the energy row gains δ̃(s) on η, and h_e subtracts ∫ₛ¹δ̃.
/// `profile_rate` is ∂/∂t of that integral while the path moves; it joins Δ_ω on the right.
#[allow(clippy::too_many_arguments)]
pub fn build_qp_unicycle(
    cfg: &CbfConfig,
    geom: &PathState,
    s: f64,
    x: Vec2,
    energy: EnergyState,
    u_nom: Vec2,
    measured_power: f64,
    profile: &SlowingProfile,
    profile_rate: f64,
    delta_omega: f64,
) -> (QpRows, CbfSnapshot) {
    let slow = profile.power(s);
    let extra = profile.integral_exact(s);
    build_rows(cfg, geom, s, x, energy, u_nom, measured_power, slow, extra, delta_omega + profile_rate)
}

#[allow(clippy::too_many_arguments)]
fn build_rows(
    cfg: &CbfConfig,
    geom: &PathState,
    s: f64,
    x: Vec2,
    energy: EnergyState,
    u_nom: Vec2,
    measured_power: f64,
    slow: f64,
    extra: f64,
    delta_omega: f64,
) -> (QpRows, CbfSnapshot) {
    let c = cfg.energy_per_meter();
    let h_e = h_energy(energy, &cfg.model, cfg.v_r, geom.length, s, cfg.region.effective_radius(), extra);
    let h_b = h_bound(s);
    let h_d = h_track(cfg.region.tracking_radius(), x, geom.x_r);
    let g = &cfg.gains;
    let e = x - geom.x_r;
    let a = [
        [c * geom.length + slow, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [e.dot(geom.dxr_ds), -e.x, -e.y],
    ];
    let b = [
        -g.gamma_e * h_e + measured_power + delta_omega + c * geom.l_dot * (1.0 - s),
        -g.gamma_b * h_b,
        -g.gamma_d * h_d - e.dot(geom.dxr_dt),
    ];
    (QpRows { a, b, u_nom3: [0.0, u_nom.x, u_nom.y] }, CbfSnapshot { h_e, h_b, h_d })
}

/// Tracking row alone (energy and bound rows padded with inert zeros).
pub fn build_qp_tracking(cfg: &CbfConfig, geom: &PathState, eta: f64, x: Vec2, u_nom: Vec2) -> QpRows {
    let h_d = h_track(cfg.region.tracking_radius(), x, geom.x_r);
    let e = x - geom.x_r;
    let xr_dot = geom.dxr_ds * eta + geom.dxr_dt;
    QpRows {
        a: [[0.0; 3], [0.0; 3], [0.0, -e.x, -e.y]],
        b: [0.0, 0.0, -cfg.gains.gamma_d * h_d - e.dot(xr_dot)],
        u_nom3: [0.0, u_nom.x, u_nom.y],
    }
}
