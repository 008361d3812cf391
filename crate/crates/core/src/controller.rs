//! Per-step controller: head tracking and freezing, QP assembly and solve,
//! path-parameter integration, and replanning admission with SPC fallback.
//! Also hosts the fixed-threshold baseline.

use serde::{Deserialize, Serialize};

use crate::cbf::{
    build_qp_si, build_qp_tracking, build_qp_unicycle, h_energy, CbfConfig, CbfGains, CbfSnapshot, ChargingRegion,
    EnergyState, PathState,
};
use crate::error::{Error, Result};
use crate::geometry::{logistic, spc_update, SmoothParams, TangentMode, Vec2, WaypointPath};
use crate::power::{ParabolicPower, UnicyclePower};
use crate::qp::solve;
use crate::unicycle::{build_slowing_profile, SlowingProfile, UnicycleParams};

/// Head waypoints closer than this to the next waypoint are merged into it.
pub const MERGE_DISTANCE: f64 = 1e-6;

/// How the head tracker is switched off once the return starts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadGate {
    /// Hard stop once s > σ; released only by an admission.
    #[default]
    Step,
    /// Head rate scaled by 1 − σ(β(s − offset)); the frozen flag still latches at σ.
    Sigmoid { beta: f64, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub v_r: f64,
    #[serde(default)]
    pub gains: CbfGains,
    pub region: ChargingRegion,
    pub u_max: f64,
    pub k_w: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub replan_period: f64,
    #[serde(default)]
    pub smooth: SmoothParams,
    #[serde(default)]
    pub tangent: TangentMode,
    #[serde(default)]
    pub head_gate: HeadGate,
}

impl ControllerConfig {
    pub fn new(v_r: f64, region: ChargingRegion) -> Self {
        Self {
            v_r,
            gains: CbfGains::default(),
            region,
            u_max: 1.0,
            k_w: 10.0,
            sigma: 1e-3,
            kappa: 0.9,
            replan_period: 5.0,
            smooth: SmoothParams::default(),
            tangent: TangentMode::Full,
            head_gate: HeadGate::Step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.v_r > 0.0 && self.v_r.is_finite()) {
            return Err(Error::NonPositiveReturnSpeed(self.v_r));
        }
        self.gains.validate()?;
        self.smooth.validate()?;
        let d = self.region.tracking_radius();
        if self.v_r + self.gains.gamma_d * (d * d / 2.0) / d > self.u_max {
            return bad(format!(
                "v_r + gamma_d*d/2 = {} exceeds u_max = {}",
                self.v_r + self.gains.gamma_d * d / 2.0,
                self.u_max
            ));
        }
        if !(self.k_w > 0.0) {
            return bad(format!("k_w must be positive, got {}", self.k_w));
        }
        if !(self.sigma > 0.0 && self.sigma < 0.1) {
            return bad(format!("sigma must lie in (0, 0.1), got {}", self.sigma));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::KappaOutOfRange(self.kappa));
        }
        if !(self.replan_period > 0.0) {
            return bad(format!("replan_period must be positive, got {}", self.replan_period));
        }
        if let HeadGate::Sigmoid { beta, offset } = self.head_gate {
            if !(beta > 0.0 && offset.is_finite()) {
                return bad("sigmoid head gate needs beta > 0".into());
            }
        }
        Ok(())
    }
}

/// Dynamics and power model the controller plans with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobotModel {
    SingleIntegrator { power: ParabolicPower },
    Unicycle { power: UnicyclePower, params: UnicycleParams, slowing: bool },
}

impl RobotModel {
    /// Speed-only model used in h_e.
    pub fn nominal(&self) -> ParabolicPower {
        match self {
            RobotModel::SingleIntegrator { power } => *power,
            RobotModel::Unicycle { power, .. } => power.translational(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Frozen,
    Arrived,
    PathAdmitted,
    PathRejectedSpcUsed,
    QpInfeasible,
    Saturated,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Frozen => "frozen",
            Event::Arrived => "arrived",
            Event::PathAdmitted => "path_admitted",
            Event::PathRejectedSpcUsed => "path_rejected_spc_used",
            Event::QpInfeasible => "qp_infeasible",
            Event::Saturated => "saturated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub s: f64,
    pub head: Vec2,
    pub frozen: bool,
    pub path: WaypointPath,
    pub last_power: f64,
    pub last_u: Vec2,
    /// Head velocity ξ from the latest step.
    pub head_rate: Vec2,
    /// Slowing profile of the current path (empty unless unicycle slowing is on).
    pub profile: SlowingProfile,
    /// Time rate of the reserved slowing energy at fixed s caused by head motion.
    pub profile_rate: f64,
}

impl ControllerState {
    /// Fresh state on `path` with the head at its first waypoint.
    pub fn new(path: WaypointPath) -> Self {
        Self {
            s: 0.0,
            head: path.head(),
            frozen: false,
            path,
            last_power: 0.0,
            last_u: Vec2::ZERO,
            head_rate: Vec2::ZERO,
            profile: SlowingProfile::empty(),
            profile_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotSample {
    pub x: Vec2,
    pub energy: EnergyState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: Vec2,
    pub eta: f64,
    pub snapshot: CbfSnapshot,
    pub qp_active_set: [bool; 3],
    pub events: Vec<Event>,
    pub x_r: Vec2,
    pub path_length: f64,
    pub l_dot: f64,
    pub saturated: bool,
}

/// Result of checking a candidate path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvaluation {
    pub length: f64,
    pub h_e: f64,
    pub suff_ok: bool,
    pub d_suff_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmitKind {
    Admitted,
    SpcFallback,
    /// Candidate rejected and SPC would create a segment too short to smooth; path kept.
    Kept,
    /// Return in progress; no-op.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmitOutcome {
    pub kind: AdmitKind,
    pub h_e_before: f64,
    pub h_e_after: f64,
    /// ‖x − head‖ at the time of the call.
    pub head_gap: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    pub model: RobotModel,
    pub budget: f64,
}

impl Controller {
    pub fn new(config: ControllerConfig, model: RobotModel, budget: f64) -> Result<Self> {
        config.validate()?;
        if !(budget > 0.0) {
            return Err(Error::ConfigInvalid(format!("budget must be positive, got {budget}")));
        }
        if let RobotModel::Unicycle { params, power, .. } = &model {
            params.validate()?;
            power.validate()?;
        }
        model.nominal().validate()?;
        Ok(Self { config, model, budget })
    }

    pub fn cbf_config(&self) -> CbfConfig {
        CbfConfig { model: self.model.nominal(), v_r: self.config.v_r, gains: self.config.gains, region: self.config.region }
    }

    fn slowing_enabled(&self) -> bool {
        matches!(self.model, RobotModel::Unicycle { slowing: true, .. })
    }

    /// Profile for `path`, empty when slowing is off.
    pub fn profile_for(&self, path: &WaypointPath) -> Result<SlowingProfile> {
        match &self.model {
            RobotModel::Unicycle { power, params, slowing: true } => {
                build_slowing_profile(path, power, self.config.v_r, params, self.config.region.tracking_radius())
            }
            _ => Ok(SlowingProfile::empty()),
        }
    }

    /// Initial state on `path`; the profile is built eagerly.
    pub fn init_state(&self, path: WaypointPath) -> Result<ControllerState> {
        let mut st = ControllerState::new(path);
        st.profile = self.profile_for(&st.path)?;
        Ok(st)
    }

    /// Moves the head toward x by one Euler step and returns ξ.
    pub fn update_head(&self, st: &mut ControllerState, x: Vec2, dt: f64) -> Vec2 {
        let gate = match self.config.head_gate {
            HeadGate::Step => {
                if st.frozen {
                    0.0
                } else {
                    1.0
                }
            }
            HeadGate::Sigmoid { beta, offset } => 1.0 - logistic(beta * (st.s - offset)),
        };
        if gate == 0.0 {
            st.head_rate = Vec2::ZERO;
            return Vec2::ZERO;
        }
        let xi = (st.head - x) * (-self.config.k_w * gate);
        st.head += xi * dt;
        st.head_rate = xi;
        xi
    }

    /// Re-seats waypoint 0 at the head; merges it into waypoint 1 once they meet.
    /// Returns the head rate that applies to the rebuilt path.
    fn refresh_path(&self, st: &mut ControllerState, xi: Vec2, dt: f64) -> Result<Vec2> {
        st.profile_rate = 0.0;
        if st.path.head() == st.head {
            return Ok(xi);
        }
        let w = st.path.waypoints();
        let mut pts = Vec::with_capacity(w.len());
        pts.push(st.head);
        let skip = if w.len() > 2 && st.head.dist(w[1]) <= MERGE_DISTANCE { 2 } else { 1 };
        pts.extend_from_slice(&w[skip..]);
        match WaypointPath::new(pts) {
            Ok(p) => {
                st.path = p;
                if self.slowing_enabled() {
                    let before = st.profile.integral_exact(st.s);
                    st.profile = self.profile_for(&st.path)?;
                    st.profile_rate = (st.profile.integral_exact(st.s) - before) / dt;
                }
                Ok(xi)
            }
            // head sitting on the station of a two-point path; keep the old geometry
            Err(Error::DegenerateSegment(_)) => Ok(Vec2::ZERO),
            Err(e) => Err(e),
        }
    }

    fn h_e_of(&self, path: &WaypointPath, profile: &SlowingProfile, s: f64, energy: EnergyState) -> f64 {
        let extra = if self.slowing_enabled() { profile.integral_exact(s) } else { 0.0 };
        h_energy(energy, &self.model.nominal(), self.config.v_r, path.total_length(), s, self.config.region.effective_radius(), extra)
    }

    /// Current h_e of the state.
    pub fn current_h_e(&self, st: &ControllerState, energy: EnergyState) -> f64 {
        self.h_e_of(&st.path, &st.profile, st.s, energy)
    }

    /// One control step for the ES-CBF controller.
    pub fn step(&self, st: &mut ControllerState, robot: RobotSample, mission_u: Vec2, dt: f64) -> Result<ControlOutput> {
        let xi = self.update_head(st, robot.x, dt);
        let xi = self.refresh_path(st, xi, dt)?;
        let cfg = self.cbf_config();
        let geom = PathState::evaluate(&st.path, &self.config.smooth, st.s, xi, self.config.tangent);
        let (rows, snapshot) = if self.slowing_enabled() {
            build_qp_unicycle(&cfg, &geom, st.s, robot.x, robot.energy, mission_u, st.last_power, &st.profile, st.profile_rate, 0.0)
        } else {
            build_qp_si(&cfg, &geom, st.s, robot.x, robot.energy, mission_u, st.last_power)
        };
        let sol = solve(&rows.to_qp())?;
        let eta = sol.z[0];
        let mut events = Vec::new();
        st.s = (st.s + eta * dt).clamp(0.0, 1.0);
        if !st.frozen && st.s > self.config.sigma {
            st.frozen = true;
            st.head_rate = Vec2::ZERO;
            events.push(Event::Frozen);
        }
        let (u, saturated) = saturate(Vec2::new(sol.z[1], sol.z[2]), self.config.u_max);
        if saturated {
            events.push(Event::Saturated);
        }
        if st.frozen && self.config.region.contains(robot.x) {
            events.push(Event::Arrived);
        }
        st.last_u = u;
        Ok(ControlOutput {
            u,
            eta,
            snapshot,
            qp_active_set: sol.active,
            events,
            x_r: geom.x_r,
            path_length: geom.length,
            l_dot: geom.l_dot,
            saturated,
        })
    }

    /// Checks the two admission conditions for `candidate` at s = 0.
    pub fn evaluate_path(&self, candidate: &WaypointPath, energy: EnergyState, u_nom: Vec2, head_rate: Vec2) -> Result<PathEvaluation> {
        let profile = self.profile_for(candidate)?;
        let h_e = self.h_e_of(candidate, &profile, 0.0, energy);
        let nominal = self.model.nominal();
        let c = nominal.eval(self.config.v_r) / self.config.v_r;
        let l_dot = -candidate.unit_dirs()[0].dot(head_rate);
        let lhs = -nominal.eval(u_nom.norm()) - c * l_dot;
        Ok(PathEvaluation {
            length: candidate.total_length(),
            h_e,
            suff_ok: h_e >= 0.0,
            d_suff_ok: lhs >= -self.config.gains.gamma_e * h_e,
        })
    }

    /// Admits `candidate` when both conditions hold, otherwise applies SPC to the current path.
    ///
    /// SPC anchors at the tracked head so that length, turning and h_e are unchanged.
    pub fn admit_path(
        &self,
        st: &mut ControllerState,
        candidate: &WaypointPath,
        x: Vec2,
        energy: EnergyState,
        u_nom: Vec2,
    ) -> Result<AdmitOutcome> {
        let head_gap = x.dist(st.head);
        let before = self.current_h_e(st, energy);
        if st.frozen {
            return Ok(AdmitOutcome { kind: AdmitKind::Frozen, h_e_before: before, h_e_after: before, head_gap });
        }
        let allowed = 1e-6 * candidate.total_length().max(1.0);
        let gap = candidate.head().dist(x);
        if gap > allowed {
            return Err(Error::HeadMismatch { gap, allowed });
        }
        let eval = self.evaluate_path(candidate, energy, u_nom, st.head_rate)?;
        if eval.suff_ok && eval.d_suff_ok {
            st.path = candidate.clone();
            st.s = 0.0;
            st.head = x;
            st.frozen = false;
            st.profile = self.profile_for(&st.path)?;
            return Ok(AdmitOutcome { kind: AdmitKind::Admitted, h_e_before: before, h_e_after: eval.h_e, head_gap });
        }
        let first = st.path.seg_lengths()[0];
        let kappa = self.config.kappa;
        let inserted_interior = st.path.len() >= 3;
        let min_interior = 20.0 * st.path.total_length() / self.config.smooth.beta;
        let too_short = (inserted_interior && kappa * first < min_interior) || (1.0 - kappa) * first <= 1e3 * MERGE_DISTANCE;
        if too_short {
            return Ok(AdmitOutcome { kind: AdmitKind::Kept, h_e_before: before, h_e_after: before, head_gap });
        }
        let spc = spc_update(&st.path, st.head, kappa)?;
        let profile = self.profile_for(&spc)?;
        let after = self.h_e_of(&spc, &profile, st.s, energy);
        st.path = spc;
        st.profile = profile;
        Ok(AdmitOutcome { kind: AdmitKind::SpcFallback, h_e_before: before, h_e_after: after, head_gap })
    }
}

/// Scales u onto the u_max ball if needed.
pub fn saturate(u: Vec2, u_max: f64) -> (Vec2, bool) {
    let n = u.norm();
    if n > u_max {
        (u * (u_max / n), true)
    } else {
        (u, false)
    }
}

/// When the baseline starts its return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineTrigger {
    /// Return once (E_nom − E)/E_nom ≤ τ.
    #[default]
    AvailableBelow,
    /// Return once E/E_nom > τ.
    ConsumedAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub tau: f64,
    #[serde(default)]
    pub trigger: BaselineTrigger,
}

impl BaselineConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let c = Self { tau, trigger: BaselineTrigger::default() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau < 1.0 {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("tau must lie in (0, 1), got {}", self.tau)))
        }
    }

    pub fn fires(&self, energy: EnergyState) -> bool {
        match self.trigger {
            BaselineTrigger::AvailableBelow => energy.available() / energy.budget <= self.tau,
            BaselineTrigger::ConsumedAbove => energy.consumed / energy.budget > self.tau,
        }
    }
}

/// Fixed-threshold return: tracking row only, s advancing at v_r/L after the trigger.
#[derive(Debug, Clone)]
pub struct BaselineController {
    pub inner: Controller,
    pub baseline: BaselineConfig,
}

impl BaselineController {
    pub fn new(inner: Controller, baseline: BaselineConfig) -> Result<Self> {
        baseline.validate()?;
        Ok(Self { inner, baseline })
    }

    pub fn step(&self, st: &mut ControllerState, robot: RobotSample, mission_u: Vec2, dt: f64) -> Result<ControlOutput> {
        let ctl = &self.inner;
        let mut events = Vec::new();
        if !st.frozen && self.baseline.fires(robot.energy) {
            st.frozen = true;
            events.push(Event::Frozen);
        }
        let xi = ctl.update_head(st, robot.x, dt);
        let xi = ctl.refresh_path(st, xi, dt)?;
        let cfg = ctl.cbf_config();
        let eta = if st.frozen { ctl.config.v_r / st.path.total_length() } else { 0.0 };
        let geom = PathState::evaluate(&st.path, &ctl.config.smooth, st.s, xi, ctl.config.tangent);
        let rows = build_qp_tracking(&cfg, &geom, eta, robot.x, mission_u);
        let sol = solve(&rows.to_qp())?;
        let snapshot = CbfSnapshot {
            h_e: ctl.current_h_e(st, robot.energy),
            h_b: st.s,
            h_d: crate::cbf::h_track(cfg.region.tracking_radius(), robot.x, geom.x_r),
        };
        st.s = (st.s + eta * dt).clamp(0.0, 1.0);
        let (u, saturated) = saturate(Vec2::new(sol.z[1], sol.z[2]), ctl.config.u_max);
        if saturated {
            events.push(Event::Saturated);
        }
        if st.frozen && ctl.config.region.contains(robot.x) {
            events.push(Event::Arrived);
        }
        st.last_u = u;
        Ok(ControlOutput {
            u,
            eta,
            snapshot,
            qp_active_set: sol.active,
            events,
            x_r: geom.x_r,
            path_length: geom.length,
            l_dot: geom.l_dot,
            saturated,
        })
    }

    /// The baseline takes every planner path while the mission is running.
    pub fn admit_path(&self, st: &mut ControllerState, candidate: &WaypointPath, x: Vec2, energy: EnergyState) -> Result<AdmitOutcome> {
        let before = self.inner.current_h_e(st, energy);
        let head_gap = x.dist(st.head);
        if st.frozen {
            return Ok(AdmitOutcome { kind: AdmitKind::Frozen, h_e_before: before, h_e_after: before, head_gap });
        }
        st.path = candidate.clone();
        st.s = 0.0;
        st.head = x;
        st.profile = self.inner.profile_for(&st.path)?;
        let after = self.inner.current_h_e(st, energy);
        Ok(AdmitOutcome { kind: AdmitKind::Admitted, h_e_before: before, h_e_after: after, head_gap })
    }
}
