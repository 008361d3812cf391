//! Energy-sufficient return-to-base control.
//!
//! A robot follows a smoothed polyline back to a charging station while a
//! small QP filters the mission command against three barrier functions:
//! remaining energy versus what the return costs, progress along the path
//! and distance to the reference point. The [`sim`] module runs whole
//! scenarios with a synthetic planner and records per-step traces.

pub mod cbf;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod plot;
pub mod power;
pub mod qp;
pub mod scenario_file;
pub mod sim;
pub mod trace;
pub mod unicycle;

pub use cbf::{ChargingRegion, CbfGains, EnergyState};
pub use controller::{
    AdmitKind, BaselineConfig, BaselineController, BaselineTrigger, Controller, ControllerConfig, ControllerState, Event,
    HeadGate, RobotModel,
};
pub use error::{Error, Result};
pub use geometry::{SmoothParams, TangentMode, Vec2, WaypointPath};
pub use power::{ParabolicPower, UnicyclePower};
pub use sim::{run, Metrics, RunOutput, RunStatus, Scenario};
pub use trace::TraceRecord;
