//! Closed-form time integrals behind the parameterization coefficients.
//!
//! Everything reduces to three moments over the backward window `[-tau, 0]`:
//! `E_k(mu) = int s^k e^{mu s} ds` for `k = 0, 1, 2`. With `s = -tau u` these
//! are `tau^{k+1} (-1)^k g_k(-mu tau)` where `g_k(x) = int_0^1 u^k e^{x u} du`.
//! `tau = +inf` is accepted and resolved by the analytic limits, which exist
//! only when `Re(mu) > 0`.

use crate::spectral::C64;

/// Threshold below which an eigenvalue is treated as exactly zero when
/// picking a branch of `U` and `V`.
pub const ZERO_LAMBDA: f64 = 1e-8;

/// Real part of a denominator whose `tau = +inf` limit does not exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergent(pub f64);

fn g(k: u32, x: C64) -> C64 {
    if x.norm() < 1.0 {
        // sum_m x^m / (m! (m + k + 1))
        let mut term = C64::new(1.0, 0.0);
        let mut sum = C64::new(1.0 / (k as f64 + 1.0), 0.0);
        for m in 1..60 {
            term = term * x / m as f64;
            let add = term / (m as f64 + k as f64 + 1.0);
            sum += add;
            if add.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        return sum;
    }
    let ex = x.exp();
    let mut acc = (ex - 1.0) / x;
    for j in 1..=k {
        acc = (ex - acc * j as f64) / x;
    }
    acc
}

fn check_limit(mu: C64) -> Result<(), Divergent> {
    if mu.re > 0.0 {
        Ok(())
    } else {
        Err(Divergent(mu.re))
    }
}

/// `int_{-tau}^0 e^{mu s} ds`.
pub fn e1(mu: C64, tau: f64) -> Result<C64, Divergent> {
    if tau == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    if tau.is_infinite() {
        check_limit(mu)?;
        return Ok(1.0 / mu);
    }
    Ok(g(0, -mu * tau) * tau)
}

/// `int_{-tau}^0 s e^{mu s} ds`.
pub fn e2(mu: C64, tau: f64) -> Result<C64, Divergent> {
    if tau == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    if tau.is_infinite() {
        check_limit(mu)?;
        return Ok(-1.0 / (mu * mu));
    }
    Ok(-g(1, -mu * tau) * (tau * tau))
}

/// `int_{-tau}^0 s^2 e^{mu s} ds`.
pub fn e3(mu: C64, tau: f64) -> Result<C64, Divergent> {
    if tau == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    if tau.is_infinite() {
        check_limit(mu)?;
        return Ok(2.0 / (mu * mu * mu));
    }
    Ok(g(2, -mu * tau) * (tau * tau * tau))
}

fn is_zero(l: C64) -> bool {
    l.norm() < ZERO_LAMBDA
}

/// `D^n_ij = (1 - e^{-delta tau}) / delta` with `delta = l_i + l_j - l_n`
/// (`tau` when `delta = 0`, `1/delta` when `tau = +inf`).
pub fn coeff_d(tau: f64, li: C64, lj: C64, ln: C64) -> Result<C64, Divergent> {
    let delta = li + lj - ln;
    if delta.norm() < ZERO_LAMBDA && tau.is_finite() {
        return Ok(C64::new(tau, 0.0));
    }
    e1(delta, tau)
}

/// Coefficient of `B^n_ij F_i F_j` in the forcing-forcing part of `R_n`.
pub fn coeff_u(tau: f64, li: C64, lj: C64, ln: C64) -> Result<C64, Divergent> {
    match (is_zero(li), is_zero(lj)) {
        (false, false) => {
            let num = coeff_d(tau, li, lj, ln)? - e1(li - ln, tau)? - e1(lj - ln, tau)? + e1(-ln, tau)?;
            Ok(num / (li * lj))
        }
        (false, true) => Ok((e2(li - ln, tau)? - e2(-ln, tau)?) / li),
        (true, false) => Ok((e2(lj - ln, tau)? - e2(-ln, tau)?) / lj),
        (true, true) => e3(-ln, tau),
    }
}

/// Coefficient of `F_j (B^n_ij + B^n_ji) X_i` in the linear part of `R_n`.
pub fn coeff_v(tau: f64, li: C64, lj: C64, ln: C64) -> Result<C64, Divergent> {
    if is_zero(lj) {
        e2(li - ln, tau)
    } else {
        Ok((coeff_d(tau, li, lj, ln)? - e1(li - ln, tau)?) / lj)
    }
}

/// Multiplier of `F_n` in the constant term: `-(1 - e^{tau l_n}) / l_n`.
pub fn coeff_forcing(tau: f64, ln: C64) -> Result<C64, Divergent> {
    e1(-ln, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn empty_window_gives_zero() {
        for f in [coeff_d, coeff_u, coeff_v] {
            assert_eq!(f(0.0, c(-0.3, 1.0), c(0.2, 0.0), c(-2.0, 0.5)).unwrap(), c(0.0, 0.0));
        }
    }

    #[test]
    fn resonant_d_is_tau() {
        let d = coeff_d(2.5, c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)).unwrap();
        assert!((d - c(2.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn infinite_tau_limits() {
        let d = coeff_d(f64::INFINITY, c(-1.0, 0.0), c(-1.0, 0.0), c(-5.0, 0.0)).unwrap();
        assert!((d - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert_eq!(
            coeff_d(f64::INFINITY, c(-1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)),
            Err(Divergent(-1.0))
        );
    }

    #[test]
    fn closed_branch_formulas_agree() {
        // The generic two-nonzero U written out as in the closed form.
        let (tau, li, lj, ln) = (0.8, c(-0.4, 0.7), c(0.3, -0.2), c(-2.0, 0.4));
        let d = li + lj - ln;
        let ex = |z: C64| (1.0 - (-tau * z).exp()) / z;
        let written = (ex(d) - ex(li - ln) - ex(lj - ln) - (1.0 - (tau * ln).exp()) / ln) / (li * lj);
        assert!((coeff_u(tau, li, lj, ln).unwrap() - written).norm() < 1e-13);
        // lambda_i = lambda_j = 0 branch.
        let ln = c(-2.0, 0.0);
        let et = (tau * ln).exp();
        let written = tau * tau * et / ln - 2.0 / ln * (tau * et / ln + (1.0 - et) / (ln * ln));
        let got = coeff_u(tau, c(0.0, 0.0), c(0.0, 0.0), ln).unwrap();
        assert!((got - written).norm() < 1e-13);
    }
}
