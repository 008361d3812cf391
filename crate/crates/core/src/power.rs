//! Power models and converged-return-speed analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// P(u) = m0 + m1‖u‖ + m2‖u‖² + payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicPower {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    #[serde(default)]
    pub payload: f64,
}

impl Default for ParabolicPower {
    /// The fitted speed-only coefficients, no payload.
    fn default() -> Self {
        Self { m0: 1.234, m1: 31.4578, m2: 27.8126, payload: 0.0 }
    }
}

/// Roots of the converged-speed equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergedSpeed {
    /// `low <= high`; equal at the double root.
    Roots { low: f64, high: f64 },
    NoRealRoot,
}

impl ConvergedSpeed {
    pub fn low(&self) -> Option<f64> {
        match *self {
            ConvergedSpeed::Roots { low, .. } => Some(low),
            ConvergedSpeed::NoRealRoot => None,
        }
    }
}

impl ParabolicPower {
    pub fn with_payload(mut self, payload: f64) -> Self {
        self.payload = payload;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.m0, self.m1, self.m2].iter().all(|c| *c > 0.0 && c.is_finite())
            && self.payload >= 0.0
            && self.payload.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("parabolic power needs m0, m1, m2 > 0 and payload >= 0: {self:?}")))
        }
    }

    /// Constant term including payload; this is what the root analysis sees.
    pub fn base(&self) -> f64 {
        self.m0 + self.payload
    }

    pub fn power(&self, speed: f64) -> Result<f64> {
        if speed < 0.0 || speed.is_nan() {
            return Err(Error::NegativeSpeed(speed));
        }
        Ok(self.eval(speed))
    }

    #[inline]
    pub fn eval(&self, speed: f64) -> f64 {
        self.m0 + self.m1 * speed + self.m2 * speed * speed + self.payload
    }

    /// √(m0/m2) with the payload folded into m0.
    pub fn max_return_speed(&self) -> f64 {
        (self.base() / self.m2).sqrt()
    }

    /// Solves ‖u‖ = (P(u) + Δp)·v_r / P(v_r).
    ///
    /// The linear coefficient cancels, leaving m2 v_r λ² − (m0 + m2 v_r²) λ + (m0 + Δp) v_r = 0
    /// with m0 meaning the constant term including payload.
    pub fn converged_speed(&self, v_r: f64, dist: Disturbance) -> Result<ConvergedSpeed> {
        if !(v_r > 0.0) {
            return Err(Error::NonPositiveReturnSpeed(v_r));
        }
        let m0 = self.base();
        let m2 = self.m2;
        let a = m2 * v_r;
        let b = m0 + m2 * v_r * v_r;
        let gap = m0 - m2 * v_r * v_r;
        let disc = gap * gap - 4.0 * m2 * v_r * v_r * dist.delta_p;
        if disc < 0.0 {
            return Ok(ConvergedSpeed::NoRealRoot);
        }
        let root = disc.sqrt();
        if dist.delta_p == 0.0 {
            // exact closed form avoids cancellation
            let (l1, l2) = (v_r, m0 / (m2 * v_r));
            return Ok(ConvergedSpeed::Roots { low: l1.min(l2), high: l1.max(l2) });
        }
        // stable quadratic formula: q = (b + √D)/2, roots q/a and c/q
        let c = (m0 + dist.delta_p) * v_r;
        let q = 0.5 * (b + root);
        let r1 = q / a;
        let r2 = c / q;
        Ok(ConvergedSpeed::Roots { low: r1.min(r2), high: r1.max(r2) })
    }

    /// Largest Δp for which the converged-speed equation keeps real roots.
    pub fn stability_margin(&self, v_r: f64) -> Result<f64> {
        if !(v_r > 0.0) {
            return Err(Error::NonPositiveReturnSpeed(v_r));
        }
        let num = self.base() - self.m2 * v_r * v_r;
        let r = num / (2.0 * v_r * self.m2.sqrt());
        Ok(r * r)
    }
}

/// Free-function form of [`ParabolicPower::power`].
pub fn power_si(model: &ParabolicPower, speed: f64) -> Result<f64> {
    model.power(speed)
}

/// P_u(v, ω) = max(0, μ0 + μ1|v| + μ2 v² + μ1'|ω| + μ2' ω²) + payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnicyclePower {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu1p: f64,
    pub mu2p: f64,
    #[serde(default)]
    pub payload: f64,
}

impl Default for UnicyclePower {
    fn default() -> Self {
        Self { mu0: 1.234, mu1: 31.4578, mu2: 27.8126, mu1p: 179.9095, mu2p: -107.7343, payload: 0.0 }
    }
}

impl UnicyclePower {
    pub fn with_payload(mut self, payload: f64) -> Self {
        self.payload = payload;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu0, self.mu1, self.mu2, self.mu1p, self.mu2p, self.payload].iter().all(|c| c.is_finite());
        if finite && self.mu0 > 0.0 && self.payload >= 0.0 {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("unicycle power needs mu0 > 0 and payload >= 0: {self:?}")))
        }
    }

    #[inline]
    pub fn power(&self, v: f64, omega: f64) -> f64 {
        let (v, w) = (v.abs(), omega.abs());
        (self.mu0 + self.mu1 * v + self.mu2 * v * v + self.mu1p * w + self.mu2p * w * w).max(0.0) + self.payload
    }

    /// Speed-only slice used by the controller's nominal model.
    pub fn translational(&self) -> ParabolicPower {
        ParabolicPower { m0: self.mu0, m1: self.mu1, m2: self.mu2, payload: self.payload }
    }

    /// P_u(0, ω) − P_u(0, 0), floored at zero.
    pub fn rotation_excess(&self, omega: f64) -> f64 {
        (self.power(0.0, omega) - self.power(0.0, 0.0)).max(0.0)
    }

    /// Largest rotation excess over |ω| ∈ [0, omega_max]. The fitted ω² term is
    /// negative, so the excess is not monotone in |ω|.
    pub fn peak_rotation_excess(&self, omega_max: f64) -> f64 {
        let w = omega_max.abs();
        let mut best = self.rotation_excess(w);
        if self.mu2p < 0.0 {
            let vertex = -self.mu1p / (2.0 * self.mu2p);
            if vertex > 0.0 && vertex < w {
                best = best.max(self.rotation_excess(vertex));
            }
        }
        best
    }
}

/// Free-function form of [`UnicyclePower::power`].
pub fn power_unicycle(model: &UnicyclePower, v: f64, omega: f64) -> f64 {
    model.power(v, omega)
}

/// Additive actual-minus-model power.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub delta_p: f64,
}

impl Disturbance {
    pub fn new(delta_p: f64) -> Self {
        Self { delta_p }
    }
}
