//! Manifold parameterizations of the unresolved modes.
//!
//! Every parameterization here has the per-mode form
//! `Phi_n(X) = K^n + sum_i L^n_i X_i + sum_ij Q^n_ij X_i X_j`, optionally plus
//! an exogenous memory term `sigma_n I_n(t)` (and `e^{lambda_n tau} zeta_n`).
//! They differ only in how the tables are filled.

pub mod coeffs;
pub mod horizon;
mod memory;

use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};
use crate::model::EigenModel;
use crate::spectral::C64;

pub use memory::MemoryTerm;

use coeffs::{coeff_d, coeff_forcing, coeff_u, coeff_v, Divergent};

/// Interaction coefficients below this magnitude are treated as absent.
pub const NEGLIGIBLE_INTERACTION: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    OpmConst,
    OpmTimeDep,
    Im,
    Fmt,
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeParam {
    /// Index of the unresolved mode in the full basis.
    pub mode: usize,
    #[serde(with = "horizon")]
    pub tau: f64,
    pub lambda: C64,
    pub constant: C64,
    pub linear: Vec<C64>,
    /// Symmetrized quadratic table, `m_c x m_c` row-major.
    pub quadratic: Vec<C64>,
    /// Noise loading `sigma_n` of the memory term.
    pub noise: C64,
    /// Initial value `q_n(t - tau)`.
    pub zeta: C64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameterization {
    pub kind: ParamKind,
    pub m_c: usize,
    pub n: usize,
    pub modes: Vec<ModeParam>,
}

fn zero_c() -> C64 {
    C64::new(0.0, 0.0)
}

fn sym_b(eigen: &EigenModel, n: usize, i: usize, j: usize) -> C64 {
    (eigen.b(n, i, j) + eigen.b(n, j, i)) * 0.5
}

fn divergent(triple: (usize, usize, usize)) -> impl Fn(Divergent) -> OpmError {
    move |Divergent(real_part)| OpmError::DivergentLimit { triple, real_part }
}

fn check_dims(eigen: &EigenModel, m_c: usize) -> Result<()> {
    let n = eigen.dim();
    if m_c == 0 || m_c >= n {
        return Err(OpmError::InvalidArgument(format!("need 0 < m_c < N, got m_c = {m_c}, N = {n}")));
    }
    Ok(())
}

fn empty_mode(eigen: &EigenModel, m_c: usize, mode: usize, tau: f64) -> ModeParam {
    ModeParam {
        mode,
        tau,
        lambda: eigen.lambdas()[mode],
        constant: zero_c(),
        linear: vec![zero_c(); m_c],
        quadratic: vec![zero_c(); m_c * m_c],
        noise: zero_c(),
        zeta: zero_c(),
    }
}

/// Closed-form OPM coefficients of a single unresolved mode `n` for a
/// backward horizon `tau` (finite or `+inf`).
pub fn opm_mode(eigen: &EigenModel, m_c: usize, n: usize, tau: f64) -> Result<ModeParam> {
    if !(tau >= 0.0) {
        return Err(OpmError::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
    }
    let lam = eigen.lambdas();
    let f = &eigen.forcing;
    let ln = lam[n];
    let mut p = empty_mode(eigen, m_c, n, tau);
    for i in 0..m_c {
        for j in 0..m_c {
            let b = sym_b(eigen, n, i, j);
            if b.norm() > NEGLIGIBLE_INTERACTION {
                let d = coeff_d(tau, lam[i], lam[j], ln).map_err(divergent((i, j, n)))?;
                p.quadratic[i * m_c + j] = d * b;
            }
            let bij = eigen.b(n, i, j);
            if bij.norm() > NEGLIGIBLE_INTERACTION && (f[i] * f[j]).norm() > 0.0 {
                let u = coeff_u(tau, lam[i], lam[j], ln).map_err(divergent((i, j, n)))?;
                p.constant += u * bij * f[i] * f[j];
            }
            let cross = eigen.b(n, i, j) + eigen.b(n, j, i);
            if cross.norm() > NEGLIGIBLE_INTERACTION && f[j].norm() > 0.0 {
                let v = coeff_v(tau, lam[i], lam[j], ln).map_err(divergent((i, j, n)))?;
                p.linear[i] += v * f[j] * cross;
            }
        }
    }
    if f[n].norm() > 0.0 {
        let e = coeff_forcing(tau, ln).map_err(divergent((n, n, n)))?;
        p.constant += e * f[n];
    }
    Ok(p)
}

/// OPM for constant forcing; `taus[k]` is the horizon of mode `m_c + k`.
pub fn build_opm_const(eigen: &EigenModel, m_c: usize, taus: &[f64]) -> Result<Parameterization> {
    check_dims(eigen, m_c)?;
    let n = eigen.dim();
    if taus.len() != n - m_c {
        return Err(OpmError::DimensionMismatch { expected: n - m_c, got: taus.len() });
    }
    let modes = (m_c..n)
        .map(|mode| opm_mode(eigen, m_c, mode, taus[mode - m_c]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Parameterization { kind: ParamKind::OpmConst, m_c, n, modes })
}

/// OPM with an exogenous memory term per unresolved mode, loaded by the
/// projected noise `sigma_n`. The backward equation carries no noise.
pub fn build_opm_timedep(eigen: &EigenModel, m_c: usize, taus: &[f64]) -> Result<Parameterization> {
    let mut p = build_opm_const(eigen, m_c, taus)?;
    let noise = eigen
        .noise
        .as_ref()
        .ok_or_else(|| OpmError::InvalidArgument("time-dependent OPM needs a noise vector".into()))?;
    for m in p.modes.iter_mut() {
        m.noise = noise[m.mode];
    }
    p.kind = ParamKind::OpmTimeDep;
    Ok(p)
}

/// Leading-order invariant-manifold coefficients `B^n_ij / delta^n_ij`.
/// Only interacting triples are checked for the spectral condition.
pub fn build_im(eigen: &EigenModel, m_c: usize) -> Result<Parameterization> {
    check_dims(eigen, m_c)?;
    let n = eigen.dim();
    let lam = eigen.lambdas();
    let mut modes = Vec::with_capacity(n - m_c);
    for mode in m_c..n {
        let mut p = empty_mode(eigen, m_c, mode, f64::INFINITY);
        for i in 0..m_c {
            for j in 0..m_c {
                let b = sym_b(eigen, mode, i, j);
                if b.norm() <= NEGLIGIBLE_INTERACTION {
                    continue;
                }
                let delta = lam[i] + lam[j] - lam[mode];
                if delta.re <= 0.0 {
                    return Err(OpmError::ResonanceViolation { triple: (i, j, mode), real_part: delta.re });
                }
                p.quadratic[i * m_c + j] = b / delta;
            }
        }
        modes.push(p);
    }
    Ok(Parameterization { kind: ParamKind::Im, m_c, n, modes })
}

/// `-B^n_ij / lambda_n`, plus `-F_n / lambda_n` when the reference state is
/// not a steady state.
pub fn build_fmt(eigen: &EigenModel, m_c: usize) -> Result<Parameterization> {
    check_dims(eigen, m_c)?;
    let n = eigen.dim();
    let lam = eigen.lambdas();
    let mut modes = Vec::with_capacity(n - m_c);
    for mode in m_c..n {
        let ln = lam[mode];
        if ln.norm() < coeffs::ZERO_LAMBDA {
            return Err(OpmError::ZeroEigenvalue { mode });
        }
        let mut p = empty_mode(eigen, m_c, mode, f64::INFINITY);
        for i in 0..m_c {
            for j in 0..m_c {
                p.quadratic[i * m_c + j] = -sym_b(eigen, mode, i, j) / ln;
            }
        }
        p.constant = -eigen.forcing[mode] / ln;
        modes.push(p);
    }
    Ok(Parameterization { kind: ParamKind::Fmt, m_c, n, modes })
}

/// Galerkin truncation: every unresolved amplitude set to zero.
pub fn build_zero(eigen: &EigenModel, m_c: usize) -> Result<Parameterization> {
    check_dims(eigen, m_c)?;
    let n = eigen.dim();
    let modes = (m_c..n).map(|mode| empty_mode(eigen, m_c, mode, 0.0)).collect();
    Ok(Parameterization { kind: ParamKind::Zero, m_c, n, modes })
}

impl ModeParam {
    /// `K + L X + Q X X` (no memory contribution).
    pub fn eval(&self, x: &[C64]) -> C64 {
        let m = self.linear.len();
        let mut acc = self.constant;
        for i in 0..m {
            acc += self.linear[i] * x[i];
            let row = &self.quadratic[i * m..(i + 1) * m];
            let s: C64 = row.iter().zip(x).map(|(q, b)| q * b).sum();
            acc += x[i] * s;
        }
        acc
    }

    /// `e^{lambda tau} zeta + sigma I`.
    pub fn memory_part(&self, memory: C64) -> C64 {
        let start = if self.zeta.norm() == 0.0 || self.tau.is_infinite() {
            zero_c()
        } else {
            (self.lambda * self.tau).exp() * self.zeta
        };
        start + self.noise * memory
    }
}

impl Parameterization {
    pub fn unresolved(&self) -> usize {
        self.n - self.m_c
    }

    pub fn taus(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.tau).collect()
    }

    pub fn has_memory(&self) -> bool {
        self.kind == ParamKind::OpmTimeDep
    }

    /// Deterministic part of every unresolved amplitude.
    pub fn evaluate_const(&self, x: &[C64]) -> Vec<C64> {
        self.modes.iter().map(|m| m.eval(&x[..self.m_c])).collect()
    }

    /// All unresolved amplitudes; `memory[k]` is `I` of mode `m_c + k`.
    pub fn evaluate(&self, x: &[C64], memory: Option<&[C64]>) -> Result<Vec<C64>> {
        if x.len() < self.m_c {
            return Err(OpmError::DimensionMismatch { expected: self.m_c, got: x.len() });
        }
        let mut out = self.evaluate_const(x);
        if self.has_memory() {
            let mem = memory.ok_or(OpmError::UninitializedMemory { time: f64::NAN })?;
            if mem.len() != out.len() {
                return Err(OpmError::DimensionMismatch { expected: out.len(), got: mem.len() });
            }
            for ((o, m), v) in out.iter_mut().zip(&self.modes).zip(mem) {
                *o += m.memory_part(*v);
            }
        }
        Ok(out)
    }

    /// Fresh memory terms for every unresolved mode, at rest at `t0`.
    pub fn memory_at_rest(&self, dt: f64, t0: f64) -> Result<Vec<MemoryTerm>> {
        self.modes.iter().map(|m| MemoryTerm::at_rest(m.lambda, m.tau, dt, t0)).collect()
    }

    /// Coefficient tables as JSON rows for inspection.
    pub fn coefficient_rows(&self) -> serde_json::Value {
        let mut rows = Vec::new();
        for m in &self.modes {
            for i in 0..self.m_c {
                for j in 0..self.m_c {
                    let q = m.quadratic[i * self.m_c + j];
                    rows.push(serde_json::json!({
                        "mode": m.mode + 1, "i": i + 1, "j": j + 1, "term": "quadratic",
                        "re": q.re, "im": q.im, "tau": tau_json(m.tau),
                    }));
                }
                let l = m.linear[i];
                rows.push(serde_json::json!({
                    "mode": m.mode + 1, "i": i + 1, "term": "linear", "re": l.re, "im": l.im,
                    "tau": tau_json(m.tau),
                }));
            }
            rows.push(serde_json::json!({
                "mode": m.mode + 1, "term": "constant", "re": m.constant.re, "im": m.constant.im,
                "tau": tau_json(m.tau),
            }));
        }
        serde_json::json!({ "kind": format!("{:?}", self.kind), "m_c": self.m_c, "rows": rows })
    }
}

/// JSON has no infinity; encode it as a string.
pub fn tau_json(tau: f64) -> serde_json::Value {
    if tau.is_infinite() {
        serde_json::Value::String("inf".into())
    } else {
        serde_json::json!(tau)
    }
}

/// Finite-difference residual of the homological equation satisfied by a
/// finite-horizon parameterization when the resolved forcing vanishes:
/// `D Phi(X) Lambda_c X - Lambda_s Phi(X) - [G(X) - e^{tau Lambda_s} G(e^{-tau Lambda_c} X)]
///  - [F_s - e^{tau Lambda_s} F_s]`. With `limit = true` the exponential
/// corrections are dropped, which is the `tau -> inf` form of the equation.
pub fn homological_residual(
    param: &Parameterization,
    eigen: &EigenModel,
    x_samples: &[Vec<C64>],
    h: f64,
    limit: bool,
) -> f64 {
    let m_c = param.m_c;
    let lam = eigen.lambdas();
    let mut worst: f64 = 0.0;
    for x in x_samples {
        let v: Vec<C64> = (0..m_c).map(|i| lam[i] * x[i]).collect();
        let plus: Vec<C64> = (0..m_c).map(|i| x[i] + v[i] * h).collect();
        let minus: Vec<C64> = (0..m_c).map(|i| x[i] - v[i] * h).collect();
        let fp = param.evaluate_const(&plus);
        let fm = param.evaluate_const(&minus);
        let f0 = param.evaluate_const(x);
        for (k, m) in param.modes.iter().enumerate() {
            let n = m.mode;
            let ln = lam[n];
            let derivative = (fp[k] - fm[k]) / (2.0 * h);
            let lhs = derivative - ln * f0[k];
            let g = |y: &[C64]| -> C64 {
                let mut acc = zero_c();
                for i in 0..m_c {
                    for j in 0..m_c {
                        acc += eigen.b(n, i, j) * y[i] * y[j];
                    }
                }
                acc
            };
            let fn_ = eigen.forcing[n];
            let rhs = if limit || m.tau.is_infinite() {
                g(x) + fn_
            } else {
                let back: Vec<C64> = (0..m_c).map(|i| (-lam[i] * m.tau).exp() * x[i]).collect();
                let e = (ln * m.tau).exp();
                g(x) - e * g(&back) + fn_ - e * fn_
            };
            worst = worst.max((lhs - rhs).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{to_eigen_model, QuadraticModel};
    use nalgebra::DMatrix;

    /// Three-mode diagonal system with a single quadratic coupling.
    pub(crate) fn toy(forcing: [f64; 3]) -> EigenModel {
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, -1.0, -4.0]));
        let mut b = vec![0.0; 27];
        b[(2 * 3 + 0) * 3 + 1] = 1.0; // x0 x1 -> mode 2
        b[(2 * 3 + 0) * 3 + 0] = 0.5;
        b[(0 * 3 + 1) * 3 + 2] = -1.0;
        let m = QuadraticModel::new("toy", l, b, forcing.to_vec()).unwrap();
        to_eigen_model(&m, &[0.0; 3]).unwrap()
    }

    #[test]
    fn zero_taus_give_zero_parameterization() {
        let e = toy([0.1, 0.2, 0.3]);
        let p = build_opm_const(&e, 2, &[0.0]).unwrap();
        let v = p.evaluate_const(&[C64::new(0.3, 0.0), C64::new(-1.0, 0.0)]);
        assert_eq!(v[0], zero_c());
    }

    #[test]
    fn infinite_tau_matches_im_without_forcing() {
        let e = toy([0.0; 3]);
        let opm = build_opm_const(&e, 2, &[f64::INFINITY]).unwrap();
        let im = build_im(&e, 2).unwrap();
        for (a, b) in opm.modes[0].quadratic.iter().zip(&im.modes[0].quadratic) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn fmt_is_minus_b_over_lambda() {
        let e = toy([0.0; 3]);
        let p = build_fmt(&e, 2).unwrap();
        let x = [C64::new(0.7, 0.0), C64::new(-0.2, 0.0)];
        let expect = -(0.5 * 0.49 + 1.0 * 0.7 * -0.2) / -4.0;
        assert!((p.evaluate_const(&x)[0] - C64::new(expect, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn homological_residual_vanishes_for_opm() {
        let e = toy([0.0, 0.0, 0.4]);
        let p = build_opm_const(&e, 2, &[1.3]).unwrap();
        let xs = vec![vec![C64::new(0.3, 0.0), C64::new(-0.8, 0.0)], vec![C64::new(1.1, 0.0), C64::new(0.4, 0.0)]];
        assert!(homological_residual(&p, &e, &xs, 1e-5, false) < 1e-6);
        // A zero closure leaves the whole right-hand side as residual.
        let mut z = build_zero(&e, 2).unwrap();
        z.modes[0].tau = 1.3;
        let x = &xs[0];
        let decay = (-4.0f64 * 1.3).exp();
        let g = |a: f64, b: f64| 0.5 * a * a + a * b;
        let back = (x[0].re * (0.5f64 * 1.3).exp(), x[1].re * 1.3f64.exp());
        let expect = (g(x[0].re, x[1].re) - decay * g(back.0, back.1) + 0.4 * (1.0 - decay)).abs();
        let single = homological_residual(&z, &e, &xs[..1], 1e-5, false);
        assert!((single - expect).abs() < 1e-12, "{single} vs {expect}");
    }
}
