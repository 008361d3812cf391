//! Fixed-step scenario runner, synthetic planner and run metrics.

mod metrics;
mod planner;

pub use metrics::{metrics, Metrics, MetricsAccumulator};
pub use planner::{synth_planner, synth_planner_with, Rect};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cbf::{h_track, EnergyState};
use crate::controller::{
    AdmitKind, AdmitOutcome, BaselineConfig, BaselineController, ControlOutput, Controller, ControllerConfig,
    ControllerState, Event, RobotModel, RobotSample,
};
use crate::error::{Error, Result};
use crate::geometry::{smooth_point, Vec2, WaypointPath};
use crate::power::{ParabolicPower, UnicyclePower};
use crate::trace::TraceRecord;
use crate::unicycle::{to_unicycle, twoway, UnicycleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerModel {
    Parabolic(ParabolicPower),
    Unicycle(UnicyclePower),
}

impl PowerModel {
    pub fn translational(&self) -> ParabolicPower {
        match self {
            PowerModel::Parabolic(p) => *p,
            PowerModel::Unicycle(u) => u.translational(),
        }
    }

    /// Unicycle form; a parabolic model gets zero rotation terms.
    pub fn unicycle(&self) -> UnicyclePower {
        match self {
            PowerModel::Parabolic(p) => UnicyclePower { mu0: p.m0, mu1: p.m1, mu2: p.m2, mu1p: 0.0, mu2p: 0.0, payload: p.payload },
            PowerModel::Unicycle(u) => *u,
        }
    }
}

/// Δp added to the simulated draw over [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceWindow {
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
    pub delta_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub model: PowerModel,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceWindow>,
}

impl PowerConfig {
    pub fn delta_p(&self, t: f64) -> f64 {
        self.disturbances
            .iter()
            .filter(|w| t >= w.start && w.end.is_none_or(|e| t < e))
            .map(|w| w.delta_p)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub position: Vec2,
    pub speed: f64,
}

/// Goals drawn uniformly in `bounds` at least `min_station_distance` from the station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGoals {
    pub count: usize,
    pub speed: f64,
    pub bounds: Rect,
    #[serde(default)]
    pub min_station_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    #[serde(default)]
    pub goals: Vec<Goal>,
    #[serde(default)]
    pub random: Option<RandomGoals>,
    #[serde(default)]
    pub cycle: bool,
    #[serde(default = "default_reach")]
    pub reach_radius: f64,
}

fn default_reach() -> f64 {
    0.1
}

impl Mission {
    pub fn empty() -> Self {
        Self { goals: Vec::new(), random: None, cycle: false, reach_radius: default_reach() }
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty() && self.random.is_none_or(|r| r.count == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedPath {
    pub t: f64,
    pub waypoints: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Planner {
    /// Direct path to the station, never replanned.
    None,
    /// Each entry is proposed once at the first replan tick at or after `t`,
    /// with the robot position prepended.
    Scripted { paths: Vec<TimedPath> },
    Random { bounds: Rect, n_min: usize, n_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variant {
    SingleIntegrator,
    Unicycle {
        theta0: f64,
        params: UnicycleParams,
        #[serde(default = "default_true")]
        slowing: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Escbf,
    Baseline(BaselineConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub initial_x: Vec2,
    pub station: Vec2,
    pub budget: f64,
    pub controller_config: ControllerConfig,
    #[serde(default)]
    pub controller: ControllerKind,
    pub power: PowerConfig,
    pub mission: Mission,
    pub planner: Planner,
    pub dt: f64,
    pub max_time: f64,
    pub variant: Variant,
    /// Start with the head frozen, i.e. already returning.
    #[serde(default)]
    pub start_frozen: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return bad(format!("dt must lie in (0, 0.01], got {}", self.dt));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return bad(format!("budget must be positive, got {}", self.budget));
        }
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            return bad(format!("max_time must be positive, got {}", self.max_time));
        }
        if !self.initial_x.is_finite() || !self.station.is_finite() {
            return bad("positions must be finite".into());
        }
        if self.station.dist(self.controller_config.region.center()) > 1e-9 {
            return bad("station must coincide with the charging-region center".into());
        }
        self.controller_config.validate()?;
        if let ControllerKind::Baseline(b) = &self.controller {
            b.validate()?;
        }
        match &self.power.model {
            PowerModel::Parabolic(p) => p.validate()?,
            PowerModel::Unicycle(u) => u.validate()?,
        }
        if let Variant::Unicycle { params, .. } = &self.variant {
            params.validate()?;
        }
        for g in &self.mission.goals {
            if !(g.speed >= 0.0) || !g.position.is_finite() {
                return bad(format!("invalid goal {g:?}"));
            }
        }
        if let Some(r) = &self.mission.random {
            r.bounds.validate()?;
        }
        match &self.planner {
            Planner::Random { bounds, n_min, n_max } => {
                bounds.validate()?;
                if *n_min < 2 || n_max < n_min {
                    return bad(format!("planner waypoint range must satisfy 2 <= n_min <= n_max, got {n_min}..{n_max}"));
                }
            }
            Planner::Scripted { paths } => {
                if paths.iter().any(|p| p.waypoints.is_empty()) {
                    return bad("scripted paths need at least one waypoint".into());
                }
            }
            Planner::None => {}
        }
        Ok(())
    }

    pub fn robot_model(&self) -> RobotModel {
        match &self.variant {
            Variant::SingleIntegrator => RobotModel::SingleIntegrator { power: self.power.model.translational() },
            Variant::Unicycle { params, slowing, .. } => {
                RobotModel::Unicycle { power: self.power.model.unicycle(), params: *params, slowing: *slowing }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Arrived,
    MaxTime,
    QpInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub t: f64,
    pub kind: AdmitKind,
    pub h_e_before: f64,
    pub h_e_after: f64,
    pub head_gap: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub admissions: Vec<AdmissionRecord>,
    pub status: RunStatus,
    pub final_path: WaypointPath,
    pub warnings: Vec<String>,
}

struct MissionTracker {
    goals: Vec<Goal>,
    idx: usize,
    cycle: bool,
    reach: f64,
}

impl MissionTracker {
    fn new(m: &Mission, station: Vec2, rng: &mut ChaCha8Rng) -> Self {
        let mut goals = m.goals.clone();
        if let Some(r) = &m.random {
            for _ in 0..r.count {
                let mut p = r.bounds.sample(rng);
                for _ in 0..1000 {
                    if p.dist(station) >= r.min_station_distance {
                        break;
                    }
                    p = r.bounds.sample(rng);
                }
                goals.push(Goal { position: p, speed: r.speed });
            }
        }
        Self { goals, idx: 0, cycle: m.cycle, reach: m.reach_radius }
    }

    fn command(&mut self, x: Vec2) -> Vec2 {
        for _ in 0..=self.goals.len() {
            if self.idx >= self.goals.len() {
                if self.cycle && !self.goals.is_empty() {
                    self.idx = 0;
                } else {
                    return Vec2::ZERO;
                }
            }
            let g = self.goals[self.idx];
            let d = g.position - x;
            if d.norm() <= self.reach {
                self.idx += 1;
                continue;
            }
            return d.normalized() * g.speed;
        }
        Vec2::ZERO
    }
}

enum Driver {
    Escbf(Controller),
    Baseline(BaselineController),
}

impl Driver {
    fn controller(&self) -> &Controller {
        match self {
            Driver::Escbf(c) => c,
            Driver::Baseline(b) => &b.inner,
        }
    }

    fn step(&self, st: &mut ControllerState, robot: RobotSample, u: Vec2, dt: f64) -> Result<ControlOutput> {
        match self {
            Driver::Escbf(c) => c.step(st, robot, u, dt),
            Driver::Baseline(b) => b.step(st, robot, u, dt),
        }
    }

    fn admit(&self, st: &mut ControllerState, cand: &WaypointPath, x: Vec2, e: EnergyState, u: Vec2) -> Result<AdmitOutcome> {
        match self {
            Driver::Escbf(c) => c.admit_path(st, cand, x, e, u),
            Driver::Baseline(b) => b.admit_path(st, cand, x, e),
        }
    }
}

struct Body {
    /// Controlled point (handle point for the unicycle).
    x: Vec2,
    center: Vec2,
    theta: f64,
}

/// Candidate waypoints from the planner, with the robot position first.
fn propose(planner: &Planner, x: Vec2, station: Vec2, now: f64, used: &mut usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec2>> {
    match planner {
        Planner::None => None,
        Planner::Scripted { paths } => {
            let mut pick = None;
            while *used < paths.len() && paths[*used].t <= now + 1e-12 {
                pick = Some(&paths[*used]);
                *used += 1;
            }
            pick.map(|p| {
                let mut pts = vec![x];
                let skip = usize::from(p.waypoints[0].dist(x) <= 1e-9);
                pts.extend_from_slice(&p.waypoints[skip..]);
                pts
            })
        }
        Planner::Random { bounds, n_min, n_max } => synth_planner_with(rng, x, station, *bounds, (*n_min, *n_max)).ok(),
    }
}

/// Runs `scenario` to arrival, `max_time`, or a QP failure.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput> {
    scenario.validate()?;
    let model = scenario.robot_model();
    let base = Controller::new(scenario.controller_config, model, scenario.budget)?;
    let driver = match scenario.controller {
        ControllerKind::Escbf => Driver::Escbf(base),
        ControllerKind::Baseline(b) => Driver::Baseline(BaselineController::new(base, b)?),
    };
    let ctl = driver.controller();
    let cfg = &scenario.controller_config;
    let dt = scenario.dt;
    let mut mission_rng = ChaCha8Rng::seed_from_u64(seed);
    mission_rng.set_stream(1);
    let mut planner_rng = ChaCha8Rng::seed_from_u64(seed);
    planner_rng.set_stream(2);
    let mut mission = MissionTracker::new(&scenario.mission, scenario.station, &mut mission_rng);

    let (handle, mut body) = match scenario.variant {
        Variant::SingleIntegrator => (0.0, Body { x: scenario.initial_x, center: scenario.initial_x, theta: 0.0 }),
        Variant::Unicycle { theta0, params, .. } => {
            let dir = Vec2::new(theta0.cos(), theta0.sin());
            (params.handle, Body { x: scenario.initial_x, center: scenario.initial_x - dir * params.handle, theta: theta0 })
        }
    };
    let unicycle_power = scenario.power.model.unicycle();
    let si_power = scenario.power.model.translational();
    let is_unicycle = matches!(scenario.variant, Variant::Unicycle { .. });

    let mut warnings = Vec::new();
    let mut used_scripts = 0usize;
    let initial = propose(&scenario.planner, body.x, scenario.station, 0.0, &mut used_scripts, &mut planner_rng)
        .unwrap_or_else(|| vec![body.x, scenario.station]);

    let mut trace: Vec<TraceRecord> = Vec::with_capacity(((scenario.max_time / dt) as usize + 2).min(1 << 22));
    let mut acc = MetricsAccumulator::new(scenario.budget);
    let mut admissions = Vec::new();

    // nothing to do: already home with no mission
    if scenario.mission.is_empty() && cfg.region.contains(body.x) {
        let path = WaypointPath::new(initial.clone()).unwrap_or_else(|_| {
            WaypointPath::new(vec![body.x, body.x + Vec2::new(cfg.region.radius(), 0.0)]).expect("nonzero segment")
        });
        let rec = TraceRecord {
            t: 0.0,
            x: body.x,
            theta: is_unicycle.then_some(body.theta),
            energy: 0.0,
            h_e: ctl.current_h_e(&ControllerState::new(path.clone()), EnergyState::new(0.0, scenario.budget)),
            h_b: 0.0,
            h_d: 0.5 * cfg.region.tracking_radius().powi(2),
            s: 0.0,
            length: path.total_length(),
            u: Vec2::ZERO,
            v: is_unicycle.then_some(0.0),
            omega: is_unicycle.then_some(0.0),
            power: 0.0,
            events: vec![Event::Arrived],
        };
        acc.push(&rec);
        trace.push(rec);
        return Ok(RunOutput {
            metrics: acc.finish(),
            trace,
            admissions,
            status: RunStatus::Arrived,
            final_path: path,
            warnings,
        });
    }

    let path = WaypointPath::new(initial)
        .map_err(|e| Error::ConfigInvalid(format!("initial path from the planner is invalid: {e}")))?;
    let mut st = ctl.init_state(path)?;
    st.frozen = scenario.start_frozen;
    let h0 = ctl.current_h_e(&st, EnergyState::new(0.0, scenario.budget));
    if h0 < 0.0 {
        warnings.push(format!("initial h_e = {h0:.3} J < 0: the budget cannot cover the initial path"));
    }

    let mut energy = 0.0f64;
    let mut next_replan = cfg.replan_period;
    let mut status = RunStatus::MaxTime;
    let mut saturation_warned = false;
    let steps = (scenario.max_time / dt).round() as u64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let e_state = EnergyState::new(energy, scenario.budget);
        let u_nom = mission.command(body.x);
        let mut extra_events = Vec::new();
        if t + 1e-12 >= next_replan {
            next_replan += cfg.replan_period;
            if !st.frozen {
                if let Some(pts) = propose(&scenario.planner, body.x, scenario.station, t, &mut used_scripts, &mut planner_rng) {
                    if let Ok(cand) = WaypointPath::new(pts) {
                        let out = driver.admit(&mut st, &cand, body.x, e_state, u_nom)?;
                        match out.kind {
                            AdmitKind::Admitted => extra_events.push(Event::PathAdmitted),
                            AdmitKind::SpcFallback => {
                                extra_events.push(Event::PathRejectedSpcUsed);
                                if out.head_gap > cfg.region.tracking_radius() {
                                    warnings.push(format!("t={t:.3}: SPC with robot {:.3} m from the head", out.head_gap));
                                }
                            }
                            AdmitKind::Kept | AdmitKind::Frozen => {}
                        }
                        admissions.push(AdmissionRecord {
                            t,
                            kind: out.kind,
                            h_e_before: out.h_e_before,
                            h_e_after: out.h_e_after,
                            head_gap: out.head_gap,
                        });
                    }
                }
            }
        }
        let s_before = st.s;
        let robot = RobotSample { x: body.x, energy: e_state };
        let out = match driver.step(&mut st, robot, u_nom, dt) {
            Ok(o) => o,
            Err(Error::Infeasible) => {
                let x_r = smooth_point(&st.path, &cfg.smooth, st.s);
                let mut events = extra_events;
                events.push(Event::QpInfeasible);
                let rec = TraceRecord {
                    t,
                    x: body.x,
                    theta: is_unicycle.then_some(body.theta),
                    energy,
                    h_e: ctl.current_h_e(&st, e_state),
                    h_b: st.s,
                    h_d: h_track(cfg.region.tracking_radius(), body.x, x_r),
                    s: st.s,
                    length: st.path.total_length(),
                    u: Vec2::ZERO,
                    v: is_unicycle.then_some(0.0),
                    omega: is_unicycle.then_some(0.0),
                    power: 0.0,
                    events,
                };
                acc.push(&rec);
                trace.push(rec);
                status = RunStatus::QpInfeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        if out.saturated && !saturation_warned {
            saturation_warned = true;
            warnings.push(format!("t={t:.3}: control saturated at u_max; the return-speed fixed point may be lost"));
        }
        let delta_p = scenario.power.delta_p(t);
        let (v, omega, raw_power) = if is_unicycle {
            let (v, w) = to_unicycle(out.u, body.theta, handle);
            let (v, w) = twoway(v, w);
            (Some(v), Some(w), unicycle_power.power(v, w))
        } else {
            (None, None, si_power.eval(out.u.norm()))
        };
        let power = (raw_power + delta_p).max(0.0);
        let mut events = extra_events;
        events.extend_from_slice(&out.events);
        let arrived = out.events.contains(&Event::Arrived);
        let rec = TraceRecord {
            t,
            x: body.x,
            theta: is_unicycle.then_some(body.theta),
            energy,
            h_e: out.snapshot.h_e,
            h_b: out.snapshot.h_b,
            h_d: out.snapshot.h_d,
            s: s_before,
            length: out.path_length,
            u: out.u,
            v,
            omega,
            power,
            events,
        };
        acc.push(&rec);
        trace.push(rec);
        if arrived {
            status = RunStatus::Arrived;
            break;
        }
        // integrate
        if let (Some(v), Some(w)) = (v, omega) {
            body.center += Vec2::new(body.theta.cos(), body.theta.sin()) * (v * dt);
            body.theta += w * dt;
            body.x = body.center + Vec2::new(body.theta.cos(), body.theta.sin()) * handle;
        } else {
            body.x += out.u * dt;
        }
        energy += power * dt;
        st.last_power = power;
    }
    Ok(RunOutput { metrics: acc.finish(), trace, admissions, status, final_path: st.path.clone(), warnings })
}

/// Draws `count` seeds from a master seed.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.gen()).collect()
}
