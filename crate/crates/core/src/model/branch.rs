//! Steady states of the box model, traced along `y` so turning points need
//! no special handling: for fixed `y` the `z` equation has a single root in
//! `(0, 1)`, and `F` then follows from the `y` equation.

use serde::{Deserialize, Serialize};

use super::cessi;
use crate::error::{OpmError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BranchPoint {
    pub f: f64,
    pub y: f64,
    pub z: f64,
    pub stable: bool,
}

pub type Equilibrium = BranchPoint;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Fold {
    pub f: f64,
    pub y: f64,
    pub z: f64,
    /// `true` where `F(y)` has a local maximum (end of the lower branch).
    pub is_max: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchTable {
    pub mu: f64,
    pub eps: f64,
    /// The whole curve sampled along `y`.
    pub curve: Vec<BranchPoint>,
    /// Equilibria for each requested `F`, sorted by `y`.
    pub equilibria: Vec<(f64, Vec<Equilibrium>)>,
    /// `None` when the grid is too small to ask for saddle-nodes.
    pub folds: Option<Vec<Fold>>,
}

impl BranchTable {
    /// Saddle-node closing the lower branch.
    pub fn f_c2(&self) -> Option<Fold> {
        self.folds.as_ref()?.iter().find(|f| f.is_max).copied()
    }

    /// Saddle-node opening the upper branch.
    pub fn f_c1(&self) -> Option<Fold> {
        let c2 = self.f_c2()?;
        self.folds.as_ref()?.iter().find(|f| !f.is_max && f.y > c2.y).copied()
    }
}

/// The unique `z` in `(0, 1)` with `z' = 0` at the given `y`.
pub fn solve_z(mu: f64, eps: f64, y: f64) -> Result<f64> {
    let g = |z: f64| cessi::rhs(mu, eps, 0.0, y, z)[1];
    let (mut lo, mut hi) = (0.0, 1.0);
    if g(lo) <= 0.0 || g(hi) >= 0.0 {
        return Err(OpmError::RootNotFound(format!("z equation not bracketed at y = {y}")));
    }
    let mut z = 0.5;
    for _ in 0..200 {
        let gz = g(z);
        if gz > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let dg = cessi::jacobian(mu, eps, y, z)[1][1];
        let mut next = z - gz / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() < 1e-15 || hi - lo < 1e-15 {
            return Ok(next);
        }
        z = next;
    }
    Err(OpmError::RootNotFound(format!("z Newton did not converge at y = {y}")))
}

fn point(mu: f64, eps: f64, y: f64) -> Result<BranchPoint> {
    let z = solve_z(mu, eps, y)?;
    let f = y * (1.0 + mu * (z - y) * (z - y));
    let j = cessi::jacobian(mu, eps, y, z);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    Ok(BranchPoint { f, y, z, stable: tr < 0.0 && det > 0.0 })
}

fn f_of_y(mu: f64, eps: f64, y: f64) -> f64 {
    point(mu, eps, y).map(|p| p.f).unwrap_or(f64::NAN)
}

/// Trace the steady-state curve and locate equilibria for each `F` in
/// `f_grid` together with the saddle-node values.
pub fn cessi_steady_branch(mu: f64, eps: f64, f_grid: &[f64]) -> Result<BranchTable> {
    if !(mu > 0.0 && eps > 0.0) {
        return Err(OpmError::InvalidArgument("mu and eps must be positive".into()));
    }
    let f_top = f_grid.iter().cloned().fold(1.0f64, f64::max);
    let y_max = 3.0f64.max(1.5 * f_top);
    let samples = 6000;
    let mut curve = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let y = y_max * i as f64 / samples as f64;
        curve.push(point(mu, eps, y)?);
    }

    let folds = if f_grid.len() < 2 {
        None
    } else {
        let mut out = Vec::new();
        for i in 1..samples {
            let (a, b, c) = (curve[i - 1].f, curve[i].f, curve[i + 1].f);
            let is_max = b > a && b >= c;
            let is_min = b < a && b <= c;
            if is_max || is_min {
                let sign = if is_max { -1.0 } else { 1.0 };
                let y = crate::defect::golden_section(
                    |y| sign * f_of_y(mu, eps, y),
                    curve[i - 1].y,
                    curve[i + 1].y,
                    1e-13,
                );
                let p = point(mu, eps, y)?;
                out.push(Fold { f: p.f, y: p.y, z: p.z, is_max });
            }
        }
        Some(out)
    };

    let mut equilibria = Vec::with_capacity(f_grid.len());
    for &f in f_grid {
        let mut list = Vec::new();
        for i in 0..samples {
            let (a, b) = (curve[i].f - f, curve[i + 1].f - f);
            if a == 0.0 {
                list.push(curve[i]);
                continue;
            }
            if a * b < 0.0 {
                let (mut lo, mut hi) = (curve[i].y, curve[i + 1].y);
                let increasing = b > a;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let v = f_of_y(mu, eps, mid) - f;
                    if (v > 0.0) == increasing {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                list.push(point(mu, eps, 0.5 * (lo + hi))?);
            }
        }
        equilibria.push((f, list));
    }

    Ok(BranchTable { mu, eps, curve, equilibria, folds })
}

/// Lower-branch (smallest `y`) equilibrium at a single `F`.
pub fn lower_equilibrium(mu: f64, eps: f64, f: f64) -> Result<Equilibrium> {
    let table = cessi_steady_branch(mu, eps, &[f])?;
    table.equilibria[0]
        .1
        .first()
        .copied()
        .ok_or_else(|| OpmError::RootNotFound(format!("no equilibrium at F = {f}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_and_lower_state() {
        let t = cessi_steady_branch(6.2, 0.1, &[0.85, 0.855, 0.86]).unwrap();
        let c1 = t.f_c1().unwrap();
        let c2 = t.f_c2().unwrap();
        assert!((c1.f - 0.8513).abs() < 1e-3, "F_c1 = {}", c1.f);
        assert!((c2.f - 0.8821).abs() < 1e-3, "F_c2 = {}", c2.f);
        let eq = &t.equilibria[1].1;
        assert_eq!(eq.len(), 3);
        assert!((eq[0].y - 0.4130).abs() < 1e-3 && (eq[0].z - 0.8285).abs() < 1e-3);
        assert_eq!(eq.iter().map(|e| e.stable).collect::<Vec<_>>(), vec![true, false, true]);
        for e in eq {
            let r = cessi::rhs(6.2, 0.1, 0.855, e.y, e.z);
            assert!(r[0].abs() < 1e-10 && r[1].abs() < 1e-10);
        }
    }

    #[test]
    fn nearly_linear_model_has_no_folds() {
        let t = cessi_steady_branch(1e-8, 0.1, &[0.5, 0.9]).unwrap();
        assert!(t.folds.as_ref().unwrap().is_empty());
        assert!(t.equilibria.iter().all(|(_, e)| e.len() == 1));
    }

    #[test]
    fn single_point_grid_skips_fold_detection() {
        let t = cessi_steady_branch(6.2, 0.1, &[0.855]).unwrap();
        assert!(t.folds.is_none());
        assert_eq!(t.equilibria[0].1.len(), 3);
    }
}
