use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self> {
        let r = Self { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y {
            Ok(())
        } else {
            Err(Error::BoundsInvalid)
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec2 {
        Vec2::new(rng.gen_range(self.min.x..=self.max.x), rng.gen_range(self.min.y..=self.max.y))
    }
}

/// Shortest segment the generator accepts, as a fraction of the direct distance.
const MIN_SEGMENT_FRACTION: f64 = 0.05;
/// Largest lateral excursion, as a fraction of the direct distance.
const LATERAL_FRACTION: f64 = 0.35;

/// Seeded random polyline from `x` to `station`.
pub fn synth_planner(seed: u64, x: Vec2, station: Vec2, bounds: Rect, n_range: (usize, usize)) -> Result<Vec<Vec2>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_planner_with(&mut rng, x, station, bounds, n_range)
}

/// [`synth_planner`] drawing from an existing generator.
///
/// Interior points sit at jittered, evenly spaced fractions of the straight
/// line plus a lateral offset, clamped into `bounds`. Draws that leave a
/// segment shorter than 5% of the direct distance are retried; after 64
/// failures the direct path is returned.
pub fn synth_planner_with<R: Rng>(rng: &mut R, x: Vec2, station: Vec2, bounds: Rect, n_range: (usize, usize)) -> Result<Vec<Vec2>> {
    bounds.validate()?;
    if !bounds.contains(x) || !bounds.contains(station) {
        return Err(Error::BoundsInvalid);
    }
    let (lo, hi) = n_range;
    if lo < 2 || hi < lo {
        return Err(Error::ConfigInvalid(format!("waypoint count range must satisfy 2 <= min <= max, got {n_range:?}")));
    }
    let direct = station - x;
    let dist = direct.norm();
    if dist <= 1e-6 {
        return Err(Error::DegenerateSegment(0));
    }
    let n = rng.gen_range(lo..=hi);
    let k = n - 2;
    if k == 0 {
        return Ok(vec![x, station]);
    }
    let normal = direct.perp() / dist;
    let min_seg = MIN_SEGMENT_FRACTION * dist;
    for _ in 0..64 {
        let mut pts = Vec::with_capacity(n);
        pts.push(x);
        for j in 0..k {
            let frac = (j as f64 + 1.0 + 0.6 * (rng.gen::<f64>() - 0.5)) / (k as f64 + 1.0);
            let lateral = LATERAL_FRACTION * dist * rng.gen_range(-1.0..=1.0);
            pts.push(bounds.clamp(x + direct * frac + normal * lateral));
        }
        pts.push(station);
        if pts.windows(2).all(|w| w[0].dist(w[1]) >= min_seg) {
            return Ok(pts);
        }
    }
    Ok(vec![x, station])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> Rect {
        Rect::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)).unwrap()
    }

    #[test]
    fn direct_when_two_points() {
        let p = synth_planner(3, Vec2::new(4.0, 1.0), Vec2::ZERO, bounds(), (2, 2)).unwrap();
        assert_eq!(p, vec![Vec2::new(4.0, 1.0), Vec2::ZERO]);
    }

    #[test]
    fn deterministic() {
        let a = synth_planner(9, Vec2::new(4.0, 1.0), Vec2::ZERO, bounds(), (3, 7)).unwrap();
        let b = synth_planner(9, Vec2::new(4.0, 1.0), Vec2::ZERO, bounds(), (3, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outside_bounds_rejected() {
        let r = synth_planner(1, Vec2::new(40.0, 1.0), Vec2::ZERO, bounds(), (3, 4));
        assert!(matches!(r, Err(Error::BoundsInvalid)));
    }
}
