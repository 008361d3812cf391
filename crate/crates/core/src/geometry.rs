//! Waypoint paths, double-sigmoid smoothing, moving-head derivatives and
//! sequential path construction (SPC).
//!
//! Waypoint, segment and breakpoint indices are 0-based: segment `i` joins
//! waypoints `i` and `i + 1`, interior waypoints are `1..n-1`.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest admissible segment, in meters.
pub const MIN_SEGMENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector, or zero for the zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Numerically stable logistic function.
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Ordered polyline with its derived lengths, breakpoints and turn angles.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    waypoints: Vec<Vec2>,
    seg_lengths: Vec<f64>,
    cum_lengths: Vec<f64>,
    rem_lengths: Vec<f64>,
    total_length: f64,
    breakpoints: Vec<f64>,
    turn_angles: Vec<f64>,
    unit_dirs: Vec<Vec2>,
}

impl WaypointPath {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewWaypoints);
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::ConfigInvalid(format!("waypoint {bad} is not finite")));
        }
        let n = points.len();
        let mut seg_lengths = Vec::with_capacity(n - 1);
        let mut unit_dirs = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let d = points[i + 1] - points[i];
            let len = d.norm();
            if len <= MIN_SEGMENT {
                return Err(Error::DegenerateSegment(i));
            }
            seg_lengths.push(len);
            unit_dirs.push(d / len);
        }
        let mut cum_lengths = vec![0.0; n];
        for i in 1..n {
            cum_lengths[i] = cum_lengths[i - 1] + seg_lengths[i - 1];
        }
        // suffix sums keep L̄ exact near the path end
        let mut rem_lengths = vec![0.0; n];
        for i in (0..n - 1).rev() {
            rem_lengths[i] = rem_lengths[i + 1] + seg_lengths[i];
        }
        let total_length = cum_lengths[n - 1];
        let mut breakpoints: Vec<f64> = cum_lengths.iter().map(|l| l / total_length).collect();
        breakpoints[0] = 0.0;
        breakpoints[n - 1] = 1.0;
        let turn_angles = (1..n - 1)
            .map(|i| angle_between(unit_dirs[i - 1], unit_dirs[i]))
            .collect();
        Ok(Self {
            waypoints: points,
            seg_lengths,
            cum_lengths,
            rem_lengths,
            total_length,
            breakpoints,
            turn_angles,
            unit_dirs,
        })
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn seg_lengths(&self) -> &[f64] {
        &self.seg_lengths
    }

    pub fn cum_lengths(&self) -> &[f64] {
        &self.cum_lengths
    }

    pub fn rem_lengths(&self) -> &[f64] {
        &self.rem_lengths
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Turn angles of the interior waypoints; entry `k` belongs to waypoint `k + 1`.
    pub fn turn_angles(&self) -> &[f64] {
        &self.turn_angles
    }

    pub fn unit_dirs(&self) -> &[Vec2] {
        &self.unit_dirs
    }

    pub fn head(&self) -> Vec2 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Vec2 {
        self.waypoints[self.waypoints.len() - 1]
    }

    /// ψ at interior waypoint `i` (1 ≤ i ≤ n-2).
    pub fn turn_angle(&self, i: usize) -> Result<f64> {
        let n = self.waypoints.len();
        if i == 0 || i + 1 >= n {
            return Err(Error::IndexOutOfRange { index: i, lo: 1, hi: n.saturating_sub(2) });
        }
        Ok(self.turn_angles[i - 1])
    }

    /// Σ|ψᵢ| over interior waypoints.
    pub fn total_turning(&self) -> f64 {
        self.turn_angles.iter().map(|a| a.abs()).sum()
    }

    /// L·(1 − s).
    pub fn remaining_length(&self, s: f64) -> f64 {
        self.total_length * (1.0 - s)
    }

    /// One "x y" line per waypoint, round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.waypoints {
            let _ = writeln!(out, "{:.16e} {:.16e}", p.x, p.y);
        }
        out
    }

    /// Parses the format written by [`WaypointPath::to_text`]; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<f64> {
                let tok = it.next().ok_or_else(|| Error::Parse { line: idx + 1, msg: "expected two numbers".into() })?;
                tok.parse::<f64>().map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })
            };
            let x = next()?;
            let y = next()?;
            if it.next().is_some() {
                return Err(Error::Parse { line: idx + 1, msg: "trailing tokens".into() });
            }
            pts.push(Vec2::new(x, y));
        }
        Self::new(pts)
    }
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    // atan2 keeps near-collinear angles accurate where acos loses half the digits
    a.cross(b).abs().atan2(a.dot(b))
}

/// Convenience wrapper over [`WaypointPath::new`].
pub fn build_path(points: &[Vec2]) -> Result<WaypointPath> {
    WaypointPath::new(points.to_vec())
}

/// Sigmoid steepness β and the endpoint shift ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothParams {
    pub beta: f64,
    pub eps_end: f64,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self { beta: 500.0, eps_end: 10.0 / 500.0 }
    }
}

impl SmoothParams {
    pub fn new(beta: f64, eps_end: f64) -> Result<Self> {
        let p = Self { beta, eps_end };
        p.validate()?;
        Ok(p)
    }

    /// β with ε = 10/β.
    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, 10.0 / beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::ConfigInvalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eps_end > 0.0 && self.eps_end.is_finite()) {
            return Err(Error::ConfigInvalid(format!("eps_end must be positive, got {}", self.eps_end)));
        }
        if self.beta * self.eps_end < 10.0 * (1.0 - 1e-12) {
            return Err(Error::ConfigInvalid(format!(
                "beta * eps_end must be at least 10, got {}",
                self.beta * self.eps_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentMode {
    /// Exact derivative of the blended curve.
    #[default]
    Full,
    /// L·Σσᵢêᵢ, the large-β approximation.
    Simplified,
}

#[derive(Debug, Clone, Copy)]
struct Edges {
    rise: f64,
    fall: f64,
}

#[inline]
fn edges(params: &SmoothParams, path: &WaypointPath, i: usize, s: f64) -> Edges {
    let m = path.segment_count();
    let bp = &path.breakpoints;
    let a = if i == 0 { bp[0] - params.eps_end } else { bp[i] };
    let b = if i + 1 == m { bp[m] + params.eps_end } else { bp[i + 1] };
    Edges { rise: logistic(params.beta * (s - a)), fall: logistic(-params.beta * (s - b)) }
}

/// σᵢ(s) for segment `i`.
pub fn double_sigmoid(params: &SmoothParams, path: &WaypointPath, i: usize, s: f64) -> Result<f64> {
    let m = path.segment_count();
    if i >= m {
        return Err(Error::IndexOutOfRange { index: i, lo: 0, hi: m - 1 });
    }
    let e = edges(params, path, i, s);
    Ok(e.rise * e.fall)
}

/// Rising and falling edges of segment `i`, exposed for the partition-of-unity checks.
pub fn sigmoid_edges(params: &SmoothParams, path: &WaypointPath, i: usize, s: f64) -> Result<(f64, f64)> {
    let m = path.segment_count();
    if i >= m {
        return Err(Error::IndexOutOfRange { index: i, lo: 0, hi: m - 1 });
    }
    let e = edges(params, path, i, s);
    Ok((e.rise, e.fall))
}

/// Point, tangents and (optionally) the moving-head time derivative at one s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub point: Vec2,
    pub tangent_full: Vec2,
    pub tangent_simplified: Vec2,
}

impl PathSample {
    pub fn tangent(&self, mode: TangentMode) -> Vec2 {
        match mode {
            TangentMode::Full => self.tangent_full,
            TangentMode::Simplified => self.tangent_simplified,
        }
    }
}

/// The blend is evaluated relative to the final waypoint, so the curve is
/// invariant under translation of the whole path.
pub fn evaluate(path: &WaypointPath, params: &SmoothParams, s: f64) -> PathSample {
    let anchor = path.end();
    let bp = &path.breakpoints;
    let w = &path.waypoints;
    let mut point = Vec2::ZERO;
    let mut t_full = Vec2::ZERO;
    let mut t_simple = Vec2::ZERO;
    for i in 0..path.segment_count() {
        let e = edges(params, path, i, s);
        let sig = e.rise * e.fall;
        if sig == 0.0 {
            continue;
        }
        let span = bp[i + 1] - bp[i];
        let seg = w[i + 1] - w[i];
        let wbar = (w[i] - anchor) + seg * ((s - bp[i]) / span);
        point += wbar * sig;
        t_full += seg * (sig / span) + wbar * (params.beta * sig * (e.fall - e.rise));
        t_simple += path.unit_dirs[i] * sig;
    }
    PathSample { point: point + anchor, tangent_full: t_full, tangent_simplified: t_simple * path.total_length }
}

/// p(s).
pub fn smooth_point(path: &WaypointPath, params: &SmoothParams, s: f64) -> Vec2 {
    evaluate(path, params, s).point
}

/// ∂p/∂s in the requested mode.
pub fn smooth_tangent(path: &WaypointPath, params: &SmoothParams, s: f64, mode: TangentMode) -> Vec2 {
    evaluate(path, params, s).tangent(mode)
}

/// L(1 − s).
pub fn remaining_length(path: &WaypointPath, s: f64) -> f64 {
    path.remaining_length(s)
}

/// Rates induced by moving the head waypoint w₁ with velocity ξ.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDynamics {
    pub l_dot: f64,
    /// ṡ for every breakpoint; the two endpoints are pinned at 0 and 1, so their rates are zero.
    pub s_dot_breakpoints: Vec<f64>,
    pub xr_partial_t: Vec2,
}

/// L̇, ṡᵢ and the exact ∂x_r/∂t for head velocity ξ.
///
/// ∂x_r/∂t accounts for the shifting breakpoints inside both the sigmoids and
/// the per-segment interpolation, plus the direct motion of w₁ in segment 0.
pub fn path_time_derivative(path: &WaypointPath, params: &SmoothParams, s: f64, head_rate: Vec2) -> PathDynamics {
    let n = path.len();
    let l = path.total_length;
    let l_dot = -path.unit_dirs[0].dot(head_rate);
    let scale = l_dot / (l * l);
    let mut s_dot = vec![0.0; n];
    for (i, sd) in s_dot.iter_mut().enumerate().take(n - 1).skip(1) {
        *sd = path.rem_lengths[i] * scale;
    }
    let anchor = path.end();
    let bp = &path.breakpoints;
    let w = &path.waypoints;
    let beta = params.beta;
    let mut xr_t = Vec2::ZERO;
    for i in 0..path.segment_count() {
        let e = edges(params, path, i, s);
        let sig = e.rise * e.fall;
        if sig == 0.0 {
            continue;
        }
        let span = bp[i + 1] - bp[i];
        let seg = w[i + 1] - w[i];
        let r = (s - bp[i]) / span;
        let wbar = (w[i] - anchor) + seg * r;
        let d_rise = -beta * e.rise * (1.0 - e.rise) * s_dot[i];
        let d_fall = beta * e.fall * (1.0 - e.fall) * s_dot[i + 1];
        let d_sig = d_rise * e.fall + e.rise * d_fall;
        let span_sq = span * span;
        let dr = -((bp[i + 1] - s) * s_dot[i] + (s - bp[i]) * s_dot[i + 1]) / span_sq;
        let mut d_wbar = seg * dr;
        if i == 0 {
            d_wbar += head_rate * (1.0 - r);
        }
        xr_t += wbar * d_sig + d_wbar * sig;
    }
    PathDynamics { l_dot, s_dot_breakpoints: s_dot, xr_partial_t: xr_t }
}

/// Inserts a collinear waypoint behind the head so that length and total turning are unchanged.
pub fn spc_update(path: &WaypointPath, x: Vec2, kappa: f64) -> Result<WaypointPath> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::KappaOutOfRange(kappa));
    }
    let gap = x.dist(path.head());
    let allowed = 1e-6 * path.total_length;
    if gap > allowed {
        return Err(Error::HeadMismatch { gap, allowed });
    }
    let w = path.waypoints();
    let mut pts = Vec::with_capacity(w.len() + 1);
    pts.push(x);
    pts.push(x * kappa + w[1] * (1.0 - kappa));
    pts.extend_from_slice(&w[1..]);
    WaypointPath::new(pts)
}
