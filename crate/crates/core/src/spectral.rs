//! Complex eigendecomposition of small dense real matrices.
//!
//! The basis returned by [`decompose`] carries right eigenvectors `e_j` and
//! adjoint eigenvectors `e*_j` (eigenvectors of the conjugate transpose)
//! normalized so that `<e_j, e*_k> = delta_jk`, with the inner product on
//! `C^N` taken linear in its first slot: `<x, y> = sum_i x_i conj(y_i)`.
//!
//! Modes are ordered by descending real part. Complex conjugate pairs sit on
//! adjacent indices with the positive-imaginary member first; among modes
//! with equal real part, smaller `|Im|` comes first.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};

pub type C64 = Complex64;

/// Relative Frobenius residual above which a matrix is rejected as defective.
pub const DIAGONALIZABLE_TOL: f64 = 1e-6;

/// Whether a mode is real or the index of its complex-conjugate partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    Real,
    Conjugate(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub lambdas: Vec<C64>,
    pub right: Vec<Vec<C64>>,
    pub adjoint: Vec<Vec<C64>>,
    pub pairing: Vec<Pairing>,
}

/// `<x, y> = sum_i x_i conj(y_i)`.
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

/// Inner product of a real vector against a complex one.
pub fn inner_real(x: &[f64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| b.conj() * *a).sum()
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// Mode amplitudes `y_j = <x, e*_j>` of a physical vector.
    pub fn project(&self, x: &[f64]) -> Vec<C64> {
        self.adjoint.iter().map(|a| inner_real(x, a)).collect()
    }

    pub fn project_complex(&self, x: &[C64]) -> Vec<C64> {
        self.adjoint.iter().map(|a| inner(x, a)).collect()
    }

    /// `sum_j y_j e_j`; the result is complex in general.
    pub fn lift(&self, y: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (yj, e) in y.iter().zip(&self.right) {
            for (o, ei) in out.iter_mut().zip(e) {
                *o += yj * ei;
            }
        }
        out
    }

    /// Lift a set of amplitudes and return the real part together with the
    /// largest imaginary residue encountered.
    pub fn lift_real(&self, y: &[C64]) -> (Vec<f64>, f64) {
        let z = self.lift(y);
        let residue = z.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        (z.iter().map(|c| c.re).collect(), residue)
    }

    /// `sum_j lambda_j e_j (e*_j)^H`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, k| {
            (0..n)
                .map(|j| self.lambdas[j] * self.right[j][i] * self.adjoint[j][k].conj())
                .sum()
        })
    }

    /// Largest deviation of `<e_j, e*_k>` from the identity.
    pub fn biorthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { 1.0 } else { 0.0 };
                let d = (inner(&self.right[j], &self.adjoint[k]) - target).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Projection onto conjugate-symmetric amplitude vectors: pair members
    /// are averaged so that `y_{j+1} = conj(y_j)` exactly, real modes drop
    /// their imaginary part.
    pub fn enforce_conjugacy(&self, y: &mut [C64]) {
        enforce_conjugacy(&self.pairing, y);
    }

    /// Whether the first `m` modes are closed under conjugation.
    pub fn splits_pair(&self, m: usize) -> bool {
        self.pairing[..m.min(self.dim())]
            .iter()
            .any(|p| matches!(p, Pairing::Conjugate(k) if *k >= m))
    }
}

/// See [`SpectralBasis::enforce_conjugacy`]. Only indices present in `y`
/// are touched, so a prefix of the pairing map can drive a reduced state.
pub fn enforce_conjugacy(pairing: &[Pairing], y: &mut [C64]) {
    let m = y.len();
    for j in 0..m {
        match pairing[j] {
            Pairing::Real => y[j].im = 0.0,
            Pairing::Conjugate(k) if k > j && k < m => {
                let a = 0.5 * (y[j].re + y[k].re);
                let b = 0.5 * (y[j].im - y[k].im);
                y[j] = C64::new(a, b);
                y[k] = C64::new(a, -b);
            }
            _ => {}
        }
    }
}

/// One eigenvalue, or the positive-imaginary member of a conjugate pair.
struct Root {
    lambda: C64,
    paired: bool,
}

/// Eigendecomposition of a real square matrix with biorthogonal adjoints.
pub fn decompose(matrix: &DMatrix<f64>) -> Result<SpectralBasis> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(OpmError::DimensionMismatch {
            expected: n,
            got: matrix.ncols(),
        });
    }
    if n == 0 {
        return Err(OpmError::InvalidArgument("empty matrix".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(OpmError::InvalidArgument("matrix has non-finite entries".into()));
    }
    let scale = matrix.norm().max(f64::MIN_POSITIVE);
    let imag_tol = 1e-10 * scale;

    let raw = matrix.complex_eigenvalues();
    let mut roots: Vec<Root> = Vec::with_capacity(n);
    let mut negatives = 0usize;
    for l in raw.iter() {
        if l.im.abs() <= imag_tol {
            roots.push(Root {
                lambda: C64::new(l.re, 0.0),
                paired: false,
            });
        } else if l.im > 0.0 {
            roots.push(Root {
                lambda: *l,
                paired: true,
            });
        } else {
            negatives += 1;
        }
    }
    let positives = roots.iter().filter(|r| r.paired).count();
    if positives != negatives {
        return Err(OpmError::NonDiagonalizable {
            residual: f64::INFINITY,
        });
    }

    roots.sort_by(|a, b| {
        b.lambda
            .re
            .total_cmp(&a.lambda.re)
            .then(a.lambda.im.abs().total_cmp(&b.lambda.im.abs()))
    });

    let mut lambdas = Vec::with_capacity(n);
    let mut pairing = Vec::with_capacity(n);
    for r in &roots {
        if r.paired {
            let j = lambdas.len();
            lambdas.push(r.lambda);
            lambdas.push(r.lambda.conj());
            pairing.push(Pairing::Conjugate(j + 1));
            pairing.push(Pairing::Conjugate(j));
        } else {
            lambdas.push(r.lambda);
            pairing.push(Pairing::Real);
        }
    }

    let a = matrix.map(|v| C64::new(v, 0.0));
    let ah = a.adjoint();
    let cluster_tol = 1e-8 * scale;

    let mut right: Vec<Vec<C64>> = vec![Vec::new(); n];
    let mut adjoint: Vec<Vec<C64>> = vec![Vec::new(); n];
    let mut in_cluster = vec![false; n];

    let mut j = 0;
    while j < n {
        if !right[j].is_empty() {
            j += 1;
            continue;
        }
        // Modes sharing (numerically) the same eigenvalue get a joint null space.
        let members: Vec<usize> = (j..n)
            .filter(|&k| right[k].is_empty() && (lambdas[k] - lambdas[j]).norm() < cluster_tol)
            .collect();
        let vecs = null_space(&a, lambdas[j], members.len());
        for (&k, v) in members.iter().zip(vecs) {
            right[k] = v;
        }
        if members.len() > 1 {
            for &k in &members {
                in_cluster[k] = true;
            }
        }
        if let Pairing::Conjugate(p) = pairing[j] {
            if p > j && right[p].is_empty() {
                right[p] = right[j].iter().map(|c| c.conj()).collect();
            }
        }
        j += 1;
    }
    for (k, p) in pairing.iter().enumerate() {
        if *p == Pairing::Real {
            for c in right[k].iter_mut() {
                c.im = 0.0;
            }
        }
    }

    if in_cluster.iter().any(|&c| c) {
        // Repeated eigenvalues: the adjoint basis is the dual basis.
        let v = DMatrix::from_fn(n, n, |i, k| right[k][i]);
        let inv = v.try_inverse().ok_or(OpmError::NonDiagonalizable {
            residual: f64::INFINITY,
        })?;
        for k in 0..n {
            adjoint[k] = (0..n).map(|i| inv[(k, i)].conj()).collect();
        }
    } else {
        for k in 0..n {
            if !adjoint[k].is_empty() {
                continue;
            }
            let w = null_space(&ah, lambdas[k].conj(), 1).remove(0);
            let s = inner(&right[k], &w);
            if s.norm() < 1e-12 {
                return Err(OpmError::NonDiagonalizable {
                    residual: f64::INFINITY,
                });
            }
            let scale = C64::new(1.0, 0.0) / s.conj();
            adjoint[k] = w.iter().map(|c| c * scale).collect();
            if pairing[k] == Pairing::Real {
                for c in adjoint[k].iter_mut() {
                    c.im = 0.0;
                }
            }
            if let Pairing::Conjugate(p) = pairing[k] {
                if p > k {
                    adjoint[p] = adjoint[k].iter().map(|c| c.conj()).collect();
                }
            }
        }
        // Separate null-space solves leave cross terms <e_j, e*_k> near
        // 1e-10; one dual-basis correction W <- W (W^H V)^-H removes them.
        let v = DMatrix::from_fn(n, n, |i, k| right[k][i]);
        let w = DMatrix::from_fn(n, n, |i, k| adjoint[k][i]);
        if let Some(m_inv) = (w.adjoint() * &v).try_inverse() {
            let w = w * m_inv.adjoint();
            for k in 0..n {
                match pairing[k] {
                    Pairing::Conjugate(p) if p < k => {
                        adjoint[k] = adjoint[p].iter().map(|c| c.conj()).collect();
                    }
                    Pairing::Real => adjoint[k] = (0..n).map(|i| C64::new(w[(i, k)].re, 0.0)).collect(),
                    _ => adjoint[k] = w.column(k).iter().copied().collect(),
                }
            }
        }
    }

    // Two-sided Rayleigh quotient polishes the eigenvalues.
    for k in 0..n {
        if let Pairing::Conjugate(p) = pairing[k] {
            if p < k {
                lambdas[k] = lambdas[p].conj();
                continue;
            }
        }
        let ev = DVector::from_column_slice(&right[k]);
        let av = &a * ev;
        let num = inner(av.as_slice(), &adjoint[k]);
        let den = inner(&right[k], &adjoint[k]);
        let refined = num / den;
        lambdas[k] = if pairing[k] == Pairing::Real {
            C64::new(refined.re, 0.0)
        } else {
            refined
        };
    }

    let basis = SpectralBasis {
        lambdas,
        right,
        adjoint,
        pairing,
    };
    let residual = (basis.reconstruct() - &a).norm() / scale;
    if residual > DIAGONALIZABLE_TOL || !residual.is_finite() {
        return Err(OpmError::NonDiagonalizable { residual });
    }
    Ok(basis)
}

/// `count` orthonormal vectors spanning the (numerical) kernel of `a - lambda I`,
/// each phase-fixed so its largest-magnitude component is real positive.
fn null_space(a: &DMatrix<C64>, lambda: C64, count: usize) -> Vec<Vec<C64>> {
    let n = a.nrows();
    let shifted = a - DMatrix::from_diagonal_element(n, n, lambda);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    (0..count)
        .map(|c| {
            let row = n - 1 - c;
            let mut v: Vec<C64> = (0..n).map(|i| v_t[(row, i)].conj()).collect();
            fix_phase(&mut v);
            v
        })
        .collect()
}

fn fix_phase(v: &mut [C64]) {
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let pivot = v[best];
    if pivot.norm() == 0.0 {
        return;
    }
    let rot = pivot.conj() / pivot.norm();
    for c in v.iter_mut() {
        *c *= rot;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_gives_unit_axes() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = decompose(&m).unwrap();
        assert!((b.lambdas[0] - C64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((b.lambdas[1] - C64::new(-2.0, 0.0)).norm() < 1e-14);
        assert!((b.right[0][0] - 1.0).norm() < 1e-14 && b.right[0][1].norm() < 1e-14);
        assert!((b.right[1][1] - 1.0).norm() < 1e-14 && b.right[1][0].norm() < 1e-14);
        assert!((b.adjoint[0][0] - 1.0).norm() < 1e-14);
        assert!((b.adjoint[1][1] - 1.0).norm() < 1e-14);
        assert_eq!(b.pairing, vec![Pairing::Real, Pairing::Real]);
    }

    #[test]
    fn rotation_generator_pairs_modes() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let b = decompose(&m).unwrap();
        assert!((b.lambdas[0] - C64::new(0.0, 1.0)).norm() < 1e-12);
        assert!((b.lambdas[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert_eq!(b.pairing, vec![Pairing::Conjugate(1), Pairing::Conjugate(0)]);

        // Analytic eigenvectors of [[0,-1],[1,0]]: (1, -i)/sqrt2 for +i.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let analytic = [C64::new(s, 0.0), C64::new(0.0, -s)];
        let overlap = inner(&b.right[0], &analytic).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
        for j in 0..2 {
            for k in 0..2 {
                let ip = inner(&b.right[j], &b.adjoint[k]);
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((ip - target).norm() < 1e-10, "<e_{j}, e*_{k}> = {ip}");
            }
        }
    }

    #[test]
    fn repeated_eigenvalue_still_decomposes() {
        let m = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -3.0]);
        let b = decompose(&m).unwrap();
        assert!(b.biorthogonality_defect() < 1e-10);
    }

    #[test]
    fn jordan_block_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        assert!(matches!(
            decompose(&m),
            Err(OpmError::NonDiagonalizable { .. })
        ));
    }

    #[test]
    fn conjugacy_projection_is_idempotent() {
        let pairing = vec![Pairing::Real, Pairing::Conjugate(2), Pairing::Conjugate(1)];
        let mut y = vec![
            C64::new(1.0, 0.3),
            C64::new(0.5, 0.2),
            C64::new(0.7, -0.1),
        ];
        enforce_conjugacy(&pairing, &mut y);
        let once = y.clone();
        enforce_conjugacy(&pairing, &mut y);
        assert_eq!(once, y);
        assert_eq!(y[0].im, 0.0);
        assert_eq!(y[1], y[2].conj());
        assert!((y[1] - C64::new(0.6, 0.15)).norm() < 1e-15);
    }
}
