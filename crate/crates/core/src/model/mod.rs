//! Polynomial models `y' = L y + B(y, y) + C(y, y, y) + F`, their rewriting
//! about a reference state, and the eigen-coordinate form used by every
//! closure in the crate.

mod branch;
pub mod cessi;
mod mean;
pub mod rb9d;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};
use crate::spectral::{decompose, inner, inner_real, SpectralBasis, C64};

pub use branch::{cessi_steady_branch, lower_equilibrium, BranchPoint, BranchTable, Equilibrium, Fold};
pub use mean::{estimate_mean_state, extrapolate_mean_state, newton_steady_state, MeanState};

/// Governing system with a bilinear tensor and an optional trilinear one.
///
/// Tensor layout is row-major with the output index first:
/// `B(p, q)_j = sum_{k,l} bilinear[(j*n + k)*n + l] p_k q_l`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub name: String,
    pub n: usize,
    pub linear: DMatrix<f64>,
    pub bilinear: Vec<f64>,
    pub cubic: Option<Vec<f64>>,
    pub forcing: Vec<f64>,
    /// Diffusion vector multiplying a single scalar Wiener process.
    pub noise: Option<Vec<f64>>,
    pub params: BTreeMap<String, f64>,
}

impl QuadraticModel {
    pub fn new(name: &str, linear: DMatrix<f64>, bilinear: Vec<f64>, forcing: Vec<f64>) -> Result<Self> {
        let n = linear.nrows();
        if linear.ncols() != n {
            return Err(OpmError::DimensionMismatch { expected: n, got: linear.ncols() });
        }
        if bilinear.len() != n * n * n {
            return Err(OpmError::DimensionMismatch { expected: n * n * n, got: bilinear.len() });
        }
        if forcing.len() != n {
            return Err(OpmError::DimensionMismatch { expected: n, got: forcing.len() });
        }
        Ok(Self {
            name: name.to_string(),
            n,
            linear,
            bilinear,
            cubic: None,
            forcing,
            noise: None,
            params: BTreeMap::new(),
        })
    }

    pub fn with_cubic(mut self, cubic: Vec<f64>) -> Result<Self> {
        let n = self.n;
        if cubic.len() != n * n * n * n {
            return Err(OpmError::DimensionMismatch { expected: n.pow(4), got: cubic.len() });
        }
        self.cubic = Some(cubic);
        Ok(self)
    }

    pub fn with_noise(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.n {
            return Err(OpmError::DimensionMismatch { expected: self.n, got: sigma.len() });
        }
        self.noise = Some(sigma);
        Ok(self)
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    #[inline]
    pub fn t2(&self, j: usize, k: usize, l: usize) -> f64 {
        self.bilinear[(j * self.n + k) * self.n + l]
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(OpmError::DimensionMismatch { expected: self.n, got: v.len() });
        }
        Ok(())
    }

    /// `B(p, q)` for real arguments.
    pub fn bilinear_apply(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            let block = &self.bilinear[j * n * n..(j + 1) * n * n];
            let mut acc = 0.0;
            for k in 0..n {
                if p[k] == 0.0 {
                    continue;
                }
                let row = &block[k * n..(k + 1) * n];
                let s: f64 = row.iter().zip(q).map(|(t, b)| t * b).sum();
                acc += p[k] * s;
            }
            *o = acc;
        }
        out
    }

    /// `B(p, q)` for complex arguments (no conjugation).
    pub fn bilinear_apply_c(&self, p: &[C64], q: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (j, o) in out.iter_mut().enumerate() {
            for k in 0..n {
                for l in 0..n {
                    let t = self.t2(j, k, l);
                    if t != 0.0 {
                        *o += p[k] * q[l] * t;
                    }
                }
            }
        }
        out
    }

    pub fn cubic_apply_c(&self, p: &[C64], q: &[C64], r: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut out = vec![C64::new(0.0, 0.0); n];
        if let Some(c) = &self.cubic {
            for (j, o) in out.iter_mut().enumerate() {
                for k in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            let t = c[((j * n + k) * n + l) * n + m];
                            if t != 0.0 {
                                *o += p[k] * q[l] * r[m] * t;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Right-hand side at a real state, written into `out`.
    pub fn rhs_into(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let mut acc = self.forcing[j];
            for k in 0..n {
                acc += self.linear[(j, k)] * y[k];
            }
            let block = &self.bilinear[j * n * n..(j + 1) * n * n];
            for k in 0..n {
                if y[k] == 0.0 {
                    continue;
                }
                let row = &block[k * n..(k + 1) * n];
                let s: f64 = row.iter().zip(y).map(|(t, b)| t * b).sum();
                acc += y[k] * s;
            }
            if let Some(c) = &self.cubic {
                for k in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            let t = c[((j * n + k) * n + l) * n + m];
                            if t != 0.0 {
                                acc += t * y[k] * y[l] * y[m];
                            }
                        }
                    }
                }
            }
            out[j] = acc;
        }
    }

    pub fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.rhs_into(y, &mut out);
        out
    }

    /// Jacobian `L + B(ref, .) + B(., ref)` (plus the cubic contribution).
    pub fn linearize_at(&self, reference: &[f64]) -> Result<DMatrix<f64>> {
        self.check(reference)?;
        let n = self.n;
        let r = reference;
        let mut a = self.linear.clone();
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let t = self.t2(j, k, l);
                    if t != 0.0 {
                        a[(j, l)] += t * r[k];
                        a[(j, k)] += t * r[l];
                    }
                }
            }
        }
        if let Some(c) = &self.cubic {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            let t = c[((j * n + k) * n + l) * n + m];
                            if t != 0.0 {
                                a[(j, k)] += t * r[l] * r[m];
                                a[(j, l)] += t * r[k] * r[m];
                                a[(j, m)] += t * r[k] * r[l];
                            }
                        }
                    }
                }
            }
        }
        Ok(a)
    }

    /// The same system written for the fluctuation `delta = y - reference`.
    /// The constant term of the result is the residual `rhs(reference)`.
    pub fn shifted(&self, reference: &[f64]) -> Result<QuadraticModel> {
        let n = self.n;
        let linear = self.linearize_at(reference)?;
        let mut bilinear = self.bilinear.clone();
        if let Some(c) = &self.cubic {
            let r = reference;
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            let t = c[((j * n + k) * n + l) * n + m];
                            if t == 0.0 {
                                continue;
                            }
                            bilinear[(j * n + l) * n + m] += t * r[k];
                            bilinear[(j * n + k) * n + m] += t * r[l];
                            bilinear[(j * n + k) * n + l] += t * r[m];
                        }
                    }
                }
            }
        }
        Ok(QuadraticModel {
            name: self.name.clone(),
            n,
            linear,
            bilinear,
            cubic: self.cubic.clone(),
            forcing: self.rhs(reference),
            noise: self.noise.clone(),
            params: self.params.clone(),
        })
    }

    /// Largest absolute entry of the bilinear and cubic tensors.
    pub fn nonlinearity_scale(&self) -> f64 {
        let b = self.bilinear.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let c = self
            .cubic
            .as_ref()
            .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(0.0);
        b.max(c)
    }
}

/// Fluctuation dynamics about a reference state in the eigenbasis of the
/// linearization there:
/// `y_j' = lambda_j y_j + sum_{kl} B^j_kl y_k y_l (+ cubic) + F_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenModel {
    pub basis: SpectralBasis,
    /// `B^j_kl = <B(e_k, e_l), e*_j>`, flattened as `(j*n + k)*n + l`.
    pub interaction: Vec<C64>,
    /// `C^j_klm = <C(e_k, e_l, e_m), e*_j>` when the model is cubic.
    pub cubic: Option<Vec<C64>>,
    pub forcing: Vec<C64>,
    pub reference: Vec<f64>,
    pub noise: Option<Vec<C64>>,
    /// The fluctuation model in physical coordinates.
    pub physical: QuadraticModel,
}

/// Rewrite `model` about `reference` in the eigenbasis of its linearization.
pub fn to_eigen_model(model: &QuadraticModel, reference: &[f64]) -> Result<EigenModel> {
    let shifted = model.shifted(reference)?;
    let basis = decompose(&shifted.linear)?;
    Ok(eigen_from_parts(shifted, basis, reference))
}

/// Rewrite `model` about `reference` using an externally supplied basis.
/// Used when the spectrum is a surrogate obtained elsewhere.
pub fn eigen_from_parts(shifted: QuadraticModel, basis: SpectralBasis, reference: &[f64]) -> EigenModel {
    let n = shifted.n;
    let mut interaction = vec![C64::new(0.0, 0.0); n * n * n];
    for k in 0..n {
        for l in 0..n {
            let b = shifted.bilinear_apply_c(&basis.right[k], &basis.right[l]);
            for j in 0..n {
                interaction[(j * n + k) * n + l] = inner(&b, &basis.adjoint[j]);
            }
        }
    }
    let cubic = shifted.cubic.as_ref().map(|_| {
        let mut c = vec![C64::new(0.0, 0.0); n.pow(4)];
        for k in 0..n {
            for l in 0..n {
                for m in 0..n {
                    let v = shifted.cubic_apply_c(&basis.right[k], &basis.right[l], &basis.right[m]);
                    for j in 0..n {
                        c[((j * n + k) * n + l) * n + m] = inner(&v, &basis.adjoint[j]);
                    }
                }
            }
        }
        c
    });
    let forcing = basis.project(&shifted.forcing);
    let noise = shifted.noise.as_ref().map(|s| basis.project(s));
    EigenModel {
        basis,
        interaction,
        cubic,
        forcing,
        reference: reference.to_vec(),
        noise,
        physical: shifted,
    }
}

impl EigenModel {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.basis.lambdas
    }

    #[inline]
    pub fn b(&self, j: usize, k: usize, l: usize) -> C64 {
        let n = self.dim();
        self.interaction[(j * n + k) * n + l]
    }

    /// Physical state to eigen amplitudes of the fluctuation.
    pub fn to_eigen(&self, x: &[f64]) -> Vec<C64> {
        let d: Vec<f64> = x.iter().zip(&self.reference).map(|(a, b)| a - b).collect();
        self.basis.project(&d)
    }

    /// Eigen amplitudes back to a physical state; returns the state and the
    /// largest imaginary residue dropped.
    pub fn to_physical(&self, y: &[C64]) -> (Vec<f64>, f64) {
        let (d, res) = self.basis.lift_real(y);
        (d.iter().zip(&self.reference).map(|(a, b)| a + b).collect(), res)
    }

    /// Deterministic eigen-coordinate right-hand side at amplitudes `y`.
    pub fn rhs(&self, y: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out = vec![C64::new(0.0, 0.0); n];
        self.rhs_rows(y, 0..n, &mut out);
        out
    }

    /// Rows `rows` of the eigen right-hand side evaluated on a full amplitude
    /// vector; `out` is indexed from the first row.
    pub fn rhs_rows(&self, y: &[C64], rows: std::ops::Range<usize>, out: &mut [C64]) {
        let n = self.dim();
        let start = rows.start;
        for j in rows {
            let mut acc = self.basis.lambdas[j] * y[j] + self.forcing[j];
            let block = &self.interaction[j * n * n..(j + 1) * n * n];
            for k in 0..n {
                let row = &block[k * n..(k + 1) * n];
                let s: C64 = row.iter().zip(y).map(|(t, b)| t * b).sum();
                acc += y[k] * s;
            }
            if let Some(c) = &self.cubic {
                let cb = &c[j * n * n * n..(j + 1) * n * n * n];
                for k in 0..n {
                    for l in 0..n {
                        let ykl = y[k] * y[l];
                        let row = &cb[(k * n + l) * n..(k * n + l + 1) * n];
                        let s: C64 = row.iter().zip(y).map(|(t, b)| t * b).sum();
                        acc += ykl * s;
                    }
                }
            }
            out[j - start] = acc;
        }
    }

    /// Projection of a physical vector (e.g. a forcing perturbation).
    pub fn project(&self, v: &[f64]) -> Vec<C64> {
        self.basis.project(v)
    }

    pub fn project_onto(&self, v: &[f64], mode: usize) -> C64 {
        inner_real(v, &self.basis.adjoint[mode])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn zero_reference_linearizes_to_l() {
        let m = rb9d::model(14.22);
        let a = m.linearize_at(&[0.0; 9]).unwrap();
        assert_eq!(a, m.linear);
    }

    #[test]
    fn rb9d_jacobian_matches_central_differences() {
        let m = rb9d::model(14.22);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_state(&mut rng, 9, 2.0);
        let a = m.linearize_at(&x).unwrap();
        let h = 1e-6;
        for k in 0..9 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = m.rhs(&xp);
            let fm = m.rhs(&xm);
            for j in 0..9 {
                let fd = (fp[j] - fm[j]) / (2.0 * h);
                assert!((fd - a[(j, k)]).abs() < 1e-6, "({j},{k}): {fd} vs {}", a[(j, k)]);
            }
        }
    }

    #[test]
    fn shifted_model_reproduces_rhs() {
        let cases = [cessi::model(6.2, 0.1, 0.855, 0.0), rb9d::model(14.1)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in cases {
            let r = random_state(&mut rng, m.n, 1.0);
            let s = m.shifted(&r).unwrap();
            for _ in 0..20 {
                let d = random_state(&mut rng, m.n, 1.0);
                let y: Vec<f64> = d.iter().zip(&r).map(|(a, b)| a + b).collect();
                let f1 = m.rhs(&y);
                let f2 = s.rhs(&d);
                for (a, b) in f1.iter().zip(&f2) {
                    assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
                }
            }
        }
    }

    #[test]
    fn eigen_rhs_matches_physical_rhs() {
        let m = rb9d::model(14.22);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_state(&mut rng, 9, 3.0);
        let em = to_eigen_model(&m, &r).unwrap();
        for _ in 0..20 {
            let x = random_state(&mut rng, 9, 2.0);
            let y = em.to_eigen(&x);
            let lhs = em.rhs(&y);
            let rhs = em.basis.project(&m.rhs(&x));
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).norm() < 1e-8 * (1.0 + b.norm()), "{a} vs {b}");
            }
            let (back, res) = em.to_physical(&y);
            assert!(res < 1e-10);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
