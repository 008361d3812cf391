use serde::{Deserialize, Serialize};

use crate::controller::Event;
use crate::error::{Error, Result};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// E_nom − E at arrival in joules; `None` without arrival.
    /// Negative values mean the arrival step itself crossed the budget.
    pub eoa: Option<f64>,
    pub budget: f64,
    pub min_h_e: f64,
    pub min_h_d: f64,
    pub budget_violated: bool,
    pub arrival_time: Option<f64>,
    pub saturation_steps: usize,
    pub distance_traveled: f64,
    pub final_energy: f64,
    pub steps: usize,
}

impl Metrics {
    /// EOA as a fraction of the budget.
    pub fn eoa_fraction(&self) -> Option<f64> {
        self.eoa.map(|e| e / self.budget)
    }
}

/// Streaming form of [`metrics`].
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    budget: f64,
    m: Metrics,
    last_x: Option<crate::geometry::Vec2>,
}

impl MetricsAccumulator {
    pub fn new(budget: f64) -> Self {
        Self {
            budget,
            m: Metrics {
                eoa: None,
                budget,
                min_h_e: f64::INFINITY,
                min_h_d: f64::INFINITY,
                budget_violated: false,
                arrival_time: None,
                saturation_steps: 0,
                distance_traveled: 0.0,
                final_energy: 0.0,
                steps: 0,
            },
            last_x: None,
        }
    }

    pub fn push(&mut self, r: &TraceRecord) {
        let m = &mut self.m;
        m.steps += 1;
        m.min_h_e = m.min_h_e.min(r.h_e);
        m.min_h_d = m.min_h_d.min(r.h_d);
        // only the approach counts; the arrival record is already inside the region
        if r.energy > self.budget && !r.has(Event::Arrived) {
            m.budget_violated = true;
        }
        if r.has(Event::Saturated) {
            m.saturation_steps += 1;
        }
        if let Some(p) = self.last_x {
            m.distance_traveled += p.dist(r.x);
        }
        self.last_x = Some(r.x);
        m.final_energy = r.energy;
        if r.has(Event::Arrived) && m.arrival_time.is_none() {
            m.arrival_time = Some(r.t);
            m.eoa = Some(self.budget - r.energy);
        }
    }

    pub fn finish(&self) -> Metrics {
        self.m
    }
}

pub fn metrics(trace: &[TraceRecord], budget: f64) -> Result<Metrics> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut acc = MetricsAccumulator::new(budget);
    for r in trace {
        acc.push(r);
    }
    Ok(acc.finish())
}
