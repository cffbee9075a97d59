use crate::error::{OpmError, Result};
use crate::model::EigenModel;
use crate::param::Parameterization;
use crate::spectral::C64;

use super::{rk4_conjugate, Coordinates, Trajectory};

/// Largest imaginary residue tolerated when mapping back to physical space.
pub const REAL_OUTPUT_TOL: f64 = 1e-6;

/// Resolved amplitudes `X` closed by `Phi`:
/// `X_j' = lambda_j X_j + F_j + B^j(u, u)` with `u = (X, Phi(X))`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub eigen: EigenModel,
    pub m_c: usize,
    pub param: Option<Parameterization>,
}

pub fn assemble_reduced(eigen: &EigenModel, m_c: usize, param: Option<&Parameterization>) -> Result<ReducedSystem> {
    let n = eigen.dim();
    if m_c == 0 || m_c > n {
        return Err(OpmError::DimensionMismatch { expected: n, got: m_c });
    }
    if let Some(p) = param {
        if p.m_c != m_c || p.n != n {
            return Err(OpmError::DimensionMismatch { expected: m_c, got: p.m_c });
        }
    } else if m_c != n {
        return Err(OpmError::InvalidArgument("a truncated system needs a parameterization".into()));
    }
    Ok(ReducedSystem { eigen: eigen.clone(), m_c, param: param.cloned() })
}

impl ReducedSystem {
    /// Full amplitude vector `(X, Phi(X))`.
    pub fn lift(&self, x: &[C64], memory: Option<&[C64]>) -> Result<Vec<C64>> {
        let mut u = x[..self.m_c].to_vec();
        if let Some(p) = &self.param {
            u.extend(p.evaluate(x, memory)?);
        }
        Ok(u)
    }

    pub fn rhs(&self, x: &[C64], memory: Option<&[C64]>, out: &mut [C64]) -> Result<()> {
        let u = self.lift(x, memory)?;
        self.eigen.rhs_rows(&u, 0..self.m_c, out);
        Ok(())
    }

    /// Deterministic RK4 run with conjugacy projection; rows hold
    /// interleaved real/imaginary parts of `X`.
    pub fn integrate(&self, x0: &[C64], t0: f64, dt: f64, steps: usize, stride: usize) -> Result<Trajectory> {
        if self.param.as_ref().is_some_and(|p| p.has_memory()) {
            return Err(OpmError::InvalidArgument("memory-carrying closures need the stochastic driver".into()));
        }
        let stride = stride.max(1);
        let m = self.m_c;
        let pairing = &self.eigen.basis.pairing[..m];
        let mut traj = Trajectory::new(2 * m, t0, dt * stride as f64, Coordinates::EigenSplit);
        let mut row = vec![0.0; 2 * m];
        let mut failure = None;
        rk4_conjugate(
            |_, x, out| {
                if let Err(e) = self.rhs(x, None, out) {
                    failure.get_or_insert(e);
                }
            },
            x0,
            pairing,
            t0,
            dt,
            steps,
            |k, _, x| {
                if k % stride == 0 {
                    split_into(x, &mut row);
                    traj.push(&row);
                }
            },
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(traj)
    }
}

pub(crate) fn split_into(x: &[C64], row: &mut [f64]) {
    for (i, v) in x.iter().enumerate() {
        row[2 * i] = v.re;
        row[2 * i + 1] = v.im;
    }
}

pub(crate) fn join(row: &[f64]) -> Vec<C64> {
    row.chunks(2).map(|c| C64::new(c[0], c[1])).collect()
}

/// Physical reconstruction `ref + sum_j X_j e_j + sum_n Phi_n(X) e_n` of a
/// reduced run (memory-free closures).
pub fn reconstruct(reduced: &Trajectory, eigen: &EigenModel, param: Option<&Parameterization>) -> Result<Trajectory> {
    let n = eigen.dim();
    let mut out = Trajectory::new(n, reduced.t0, reduced.dt, Coordinates::Physical);
    for k in 0..reduced.len() {
        let x = join(reduced.row(k));
        let mut u = x.clone();
        if let Some(p) = param {
            u.extend(p.evaluate(&x, None)?);
        }
        if u.len() != n {
            return Err(OpmError::DimensionMismatch { expected: n, got: u.len() });
        }
        let (state, residue) = eigen.to_physical(&u);
        if residue > REAL_OUTPUT_TOL {
            return Err(OpmError::NonRealOutput { residue });
        }
        out.push(&state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rb9d, to_eigen_model};
    use crate::param::build_zero;

    #[test]
    fn galerkin_with_all_modes_is_the_full_model() {
        let m = rb9d::model(14.0);
        let e = to_eigen_model(&m, &[0.01; 9]).unwrap();
        let sys = assemble_reduced(&e, 9, None).unwrap();
        let y: Vec<C64> = e.to_eigen(&[0.02, -0.01, 0.03, 0.0, 0.01, 0.0, 0.02, -0.02, 0.01]);
        let mut out = vec![C64::new(0.0, 0.0); 9];
        sys.rhs(&y, None, &mut out).unwrap();
        let full = e.rhs(&y);
        for (a, b) in out.iter().zip(&full) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_closure_reconstructs_reference() {
        let m = rb9d::model(14.0);
        let reference = vec![0.01; 9];
        let e = to_eigen_model(&m, &reference).unwrap();
        let z = build_zero(&e, 3).unwrap();
        let mut traj = Trajectory::new(6, 0.0, 1.0, Coordinates::EigenSplit);
        traj.push(&[0.0; 6]);
        let phys = reconstruct(&traj, &e, Some(&z)).unwrap();
        for (a, b) in phys.row(0).iter().zip(&reference) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
