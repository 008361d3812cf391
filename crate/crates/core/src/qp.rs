//! Exact solver for min ‖z − z_nom‖² s.t. A·z ≥ B with three variables and three rows.
//!
//! A row of zeros with a non-positive right-hand side is always satisfied, so
//! callers that need fewer constraints pad with such rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Qp3 {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub z_nom: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub z: [f64; 3],
    /// Rows held at equality by the accepted candidate.
    pub active: [bool; 3],
    /// Multipliers of the objective ‖z − z_nom‖²; zero for inactive rows.
    pub lambda: [f64; 3],
    pub objective: f64,
}

impl QpSolution {
    pub fn active_rows(&self) -> Vec<usize> {
        (0..3).filter(|&i| self.active[i]).collect()
    }
}

const PIVOT_REL: f64 = 1e-12;
const FEAS_REL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Per-row feasibility tolerance, 1e−9·max(1, ‖row‖‖z‖, |b|).
pub fn row_tolerance(row: &[f64; 3], b: f64, z: &[f64; 3]) -> f64 {
    FEAS_REL * 1f64.max(norm(row) * norm(z)).max(b.abs())
}

impl Qp3 {
    pub fn new(a: [[f64; 3]; 3], b: [f64; 3], z_nom: [f64; 3]) -> Result<Self> {
        let qp = Self { a, b, z_nom };
        if !qp.is_finite() {
            return Err(Error::ConfigInvalid("QP entries must be finite".into()));
        }
        Ok(qp)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().chain(&self.b).chain(&self.z_nom).all(|v| v.is_finite())
    }

    /// Largest scaled violation of A·z ≥ B (zero when feasible).
    pub fn violation(&self, z: &[f64; 3]) -> f64 {
        (0..3).map(|i| (self.b[i] - dot(&self.a[i], z)).max(0.0)).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, z: &[f64; 3]) -> bool {
        (0..3).all(|i| dot(&self.a[i], z) >= self.b[i] - row_tolerance(&self.a[i], self.b[i], z))
    }
}

/// Solves the k×k system G μ = r (k ≤ 3) by complete pivoting; directions
/// whose pivot falls below 1e−12 of the largest diagonal entry get μ = 0.
fn solve_small(g: &mut [[f64; 3]; 3], r: &mut [f64; 3], k: usize) -> [f64; 3] {
    let mut perm = [0usize, 1, 2];
    let scale = (0..k).map(|i| g[i][i].abs()).fold(0.0, f64::max);
    let thr = PIVOT_REL * scale;
    let mut rank = 0;
    for c in 0..k {
        let (mut bi, mut bj, mut best) = (c, c, -1.0);
        for i in c..k {
            for j in c..k {
                if g[i][j].abs() > best {
                    best = g[i][j].abs();
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= thr || best == 0.0 {
            break;
        }
        g.swap(c, bi);
        r.swap(c, bi);
        for row in g.iter_mut().take(k) {
            row.swap(c, bj);
        }
        perm.swap(c, bj);
        for i in c + 1..k {
            let f = g[i][c] / g[c][c];
            if f != 0.0 {
                for j in c..k {
                    g[i][j] -= f * g[c][j];
                }
                r[i] -= f * r[c];
            }
        }
        rank += 1;
    }
    let mut y = [0.0; 3];
    for i in (0..rank).rev() {
        let mut acc = r[i];
        for j in i + 1..rank {
            acc -= g[i][j] * y[j];
        }
        y[i] = acc / g[i][i];
    }
    let mut mu = [0.0; 3];
    for c in 0..k {
        mu[perm[c]] = y[c];
    }
    mu
}

/// Exact minimizer by enumerating all eight active sets.
pub fn solve(qp: &Qp3) -> Result<QpSolution> {
    if !qp.is_finite() {
        return Err(Error::ConfigInvalid("QP entries must be finite".into()));
    }
    let mut best: Option<QpSolution> = None;
    for mask in 0u8..8 {
        let idx: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let k = idx.len();
        let mut z = qp.z_nom;
        let mut lambda = [0.0; 3];
        if k > 0 {
            let mut g = [[0.0; 3]; 3];
            let mut r = [0.0; 3];
            for (p, &i) in idx.iter().enumerate() {
                for (q, &j) in idx.iter().enumerate() {
                    g[p][q] = dot(&qp.a[i], &qp.a[j]);
                }
                r[p] = qp.b[i] - dot(&qp.a[i], &qp.z_nom);
            }
            let mu = solve_small(&mut g, &mut r, k);
            for (p, &i) in idx.iter().enumerate() {
                for c in 0..3 {
                    z[c] += mu[p] * qp.a[i][c];
                }
                lambda[i] = 2.0 * mu[p];
            }
            if lambda.iter().any(|&l| l < -DUAL_TOL) {
                continue;
            }
            let consistent = idx
                .iter()
                .all(|&i| (dot(&qp.a[i], &z) - qp.b[i]).abs() <= row_tolerance(&qp.a[i], qp.b[i], &z));
            if !consistent {
                continue;
            }
        }
        if !qp.is_feasible(&z) {
            continue;
        }
        let d = [z[0] - qp.z_nom[0], z[1] - qp.z_nom[1], z[2] - qp.z_nom[2]];
        let objective = dot(&d, &d);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            let mut active = [false; 3];
            for &i in &idx {
                active[i] = true;
            }
            best = Some(QpSolution { z, active, lambda, objective });
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Dykstra alternating projections onto the half-spaces; a slow but
/// independent cross-check for [`solve`].
pub fn oracle_solve(qp: &Qp3, iterations: usize) -> Result<[f64; 3]> {
    let mut x = qp.z_nom;
    let mut incr = [[0.0; 3]; 3];
    let norms: Vec<f64> = qp.a.iter().map(|r| dot(r, r)).collect();
    for _ in 0..iterations {
        let mut change = 0.0;
        for i in 0..3 {
            let y = [x[0] + incr[i][0], x[1] + incr[i][1], x[2] + incr[i][2]];
            let mut proj = y;
            if norms[i] > 0.0 {
                let slack = qp.b[i] - dot(&qp.a[i], &y);
                if slack > 0.0 {
                    let t = slack / norms[i];
                    for c in 0..3 {
                        proj[c] += t * qp.a[i][c];
                    }
                }
            }
            for c in 0..3 {
                incr[i][c] = y[c] - proj[c];
                change += (proj[c] - x[c]).abs();
            }
            x = proj;
        }
        if change <= 1e-16 * (1.0 + norm(&x)) {
            break;
        }
    }
    let residual = (0..3)
        .map(|i| (qp.b[i] - dot(&qp.a[i], &x)).max(0.0) / 1f64.max(norm(&qp.a[i])))
        .fold(0.0, f64::max);
    if residual > 1e-7 {
        return Err(Error::NotConverged { residual });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO_ROW: [f64; 3] = [0.0; 3];

    #[test]
    fn unconstrained_returns_nominal() {
        let qp = Qp3::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [-5.0; 3], [1.0, 2.0, 3.0]).unwrap();
        let sol = solve(&qp).unwrap();
        assert_eq!(sol.z, qp.z_nom);
        assert_eq!(sol.active, [false; 3]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn single_row_projection() {
        let a = [1.0, -2.0, 0.5];
        let zn = [0.3, 0.1, -0.4];
        let b = 2.0;
        let qp = Qp3::new([a, ZERO_ROW, ZERO_ROW], [b, 0.0, 0.0], zn).unwrap();
        let sol = solve(&qp).unwrap();
        let t = (b - dot(&a, &zn)) / dot(&a, &a);
        for c in 0..3 {
            assert!((sol.z[c] - (zn[c] + t * a[c])).abs() < 1e-14);
        }
        assert!(sol.active[0]);
    }

    #[test]
    fn axis_projections() {
        let qp = Qp3::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], ZERO_ROW], [1.0, 1.0, 0.0], [0.0; 3]).unwrap();
        let sol = solve(&qp).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-15 && (sol.z[1] - 1.0).abs() < 1e-15 && sol.z[2] == 0.0);
        assert!((sol.objective - 2.0).abs() < 1e-14);
    }

    #[test]
    fn duplicate_rows_are_handled() {
        let r = [1.0, 1.0, 0.0];
        let qp = Qp3::new([r, r, r], [1.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let sol = solve(&qp).unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-12 && (sol.z[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn opposing_rows_are_infeasible() {
        let qp = Qp3::new([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], ZERO_ROW], [1.0, 0.0, 0.0], [0.0; 3]).unwrap();
        assert!(matches!(solve(&qp), Err(Error::Infeasible)));
        assert!(matches!(oracle_solve(&qp, 10_000), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn oracle_unconstrained() {
        let qp = Qp3::new([ZERO_ROW; 3], [0.0; 3], [0.5, -1.0, 2.0]).unwrap();
        let z = oracle_solve(&qp, 100).unwrap();
        for c in 0..3 {
            assert!((z[c] - qp.z_nom[c]).abs() < 1e-8);
        }
    }
}
