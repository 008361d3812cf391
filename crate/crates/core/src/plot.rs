//! Minimal SVG line plots of a trace.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Vec2, WaypointPath};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Panel {
    EnergyBarrier,
    Energy,
    Progress,
    Length,
    Trajectory,
}

impl Panel {
    pub const ALL: [Panel; 5] = [Panel::EnergyBarrier, Panel::Energy, Panel::Progress, Panel::Length, Panel::Trajectory];

    pub fn name(self) -> &'static str {
        match self {
            Panel::EnergyBarrier => "he",
            Panel::Energy => "E",
            Panel::Progress => "s",
            Panel::Length => "L",
            Panel::Trajectory => "traj",
        }
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Panel::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown panel {s:?}; expected one of he, E, s, L, traj")))
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

struct Frame {
    lo: Vec2,
    hi: Vec2,
}

impl Frame {
    fn fit(points: impl Iterator<Item = Vec2>, equal_aspect: bool) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points.filter(|p| p.is_finite()) {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.is_finite() {
            lo = Vec2::ZERO;
            hi = Vec2::new(1.0, 1.0);
        }
        let pad = |a: f64, b: f64| if b - a < 1e-12 { (a - 0.5, b + 0.5) } else { (a, b) };
        let (x0, x1) = pad(lo.x, hi.x);
        let (y0, y1) = pad(lo.y, hi.y);
        let mut f = Frame { lo: Vec2::new(x0, y0), hi: Vec2::new(x1, y1) };
        if equal_aspect {
            let sx = (f.hi.x - f.lo.x) / (W - 2.0 * MARGIN);
            let sy = (f.hi.y - f.lo.y) / (H - 2.0 * MARGIN);
            let s = sx.max(sy);
            let c = (f.lo + f.hi) * 0.5;
            let half = Vec2::new(s * (W - 2.0 * MARGIN), s * (H - 2.0 * MARGIN)) * 0.5;
            f = Frame { lo: c - half, hi: c + half };
        }
        f
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        let x = MARGIN + (p.x - self.lo.x) / (self.hi.x - self.lo.x) * (W - 2.0 * MARGIN);
        let y = H - MARGIN - (p.y - self.lo.y) / (self.hi.y - self.lo.y) * (H - 2.0 * MARGIN);
        (x, y)
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[Vec2], color: &str, dashed: bool) {
    // thin long traces so the file stays small
    let stride = (pts.len() / 4000).max(1);
    let mut d = String::new();
    for (i, p) in pts.iter().enumerate() {
        if i % stride != 0 && i + 1 != pts.len() {
            continue;
        }
        let (x, y) = frame.map(*p);
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, d.trim_end());
}

fn axes(out: &mut String, frame: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" font-size="11">{:.4}</text>"#, H - MARGIN + 14.0, frame.lo.x);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.4}</text>"#, W - MARGIN, H - MARGIN + 14.0, frame.hi.x);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.4}</text>"#, MARGIN - 4.0, H - MARGIN, frame.lo.y);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.4}</text>"#, MARGIN - 4.0, MARGIN + 10.0, frame.hi.y);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
}

/// Renders one panel. `path` overlays the given polyline on the trajectory panel.
pub fn render(trace: &[TraceRecord], panel: Panel, path: Option<&WaypointPath>) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    match panel {
        Panel::Trajectory => {
            let pts: Vec<Vec2> = trace.iter().map(|r| r.x).collect();
            let extra = path.map(|p| p.waypoints().to_vec()).unwrap_or_default();
            let frame = Frame::fit(pts.iter().chain(extra.iter()).copied(), true);
            axes(&mut out, &frame, "x1 [m]", "x2 [m]");
            if !extra.is_empty() {
                polyline(&mut out, &frame, &extra, "#999999", true);
            }
            polyline(&mut out, &frame, &pts, "#1f77b4", false);
        }
        _ => {
            let value = |r: &TraceRecord| match panel {
                Panel::EnergyBarrier => r.h_e,
                Panel::Energy => r.energy,
                Panel::Progress => r.s,
                Panel::Length => r.length,
                Panel::Trajectory => unreachable!(),
            };
            let pts: Vec<Vec2> = trace.iter().map(|r| Vec2::new(r.t, value(r))).collect();
            let frame = Frame::fit(pts.iter().copied(), false);
            let ylabel = match panel {
                Panel::EnergyBarrier => "h_e [J]",
                Panel::Energy => "E [J]",
                Panel::Progress => "s",
                _ => "L [m]",
            };
            axes(&mut out, &frame, "t [s]", ylabel);
            if panel == Panel::EnergyBarrier && frame.lo.y < 0.0 && frame.hi.y > 0.0 {
                let (x0, y0) = frame.map(Vec2::new(frame.lo.x, 0.0));
                let (x1, _) = frame.map(Vec2::new(frame.hi.x, 0.0));
                let _ = writeln!(out, r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="#d62728" stroke-dasharray="6,4"/>"##);
            }
            polyline(&mut out, &frame, &pts, "#1f77b4", false);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
