//! Time-mean states, their linear extrapolation in the control parameter,
//! and steady states by Newton iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::QuadraticModel;
use crate::error::{OpmError, Result};
use crate::reduce::rk4_real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanState {
    pub mean: Vec<f64>,
    /// State at the end of the averaging window; seeds continuation runs.
    pub last: Vec<f64>,
}

/// Time average of an RK4 trajectory over `window` after dropping `transient`.
pub fn estimate_mean_state(
    model: &QuadraticModel,
    x0: &[f64],
    transient: f64,
    window: f64,
    dt: f64,
) -> Result<MeanState> {
    if !(dt > 0.0 && window > 0.0 && transient >= 0.0) {
        return Err(OpmError::InvalidArgument("need dt > 0, window > 0, transient >= 0".into()));
    }
    let n = model.n;
    let skip = (transient / dt).round() as usize;
    let keep = ((window / dt).round() as usize).max(1);
    let mut sum = vec![0.0; n];
    let mut count = 0usize;
    let mut last = x0.to_vec();
    rk4_real(
        |_, x, out| model.rhs_into(x, out),
        x0,
        0.0,
        dt,
        skip + keep,
        |k, _, x| {
            if k > skip {
                for (s, v) in sum.iter_mut().zip(x) {
                    *s += v;
                }
                count += 1;
            }
            if k == skip + keep {
                last.copy_from_slice(x);
            }
        },
    )?;
    let mean = sum.iter().map(|s| s / count as f64).collect();
    Ok(MeanState { mean, last })
}

/// Componentwise least-squares line through `(r_i, C_i)` evaluated at `r_p`.
pub fn extrapolate_mean_state(samples: &[(f64, Vec<f64>)], r_p: f64) -> Result<Vec<f64>> {
    let mut rs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    if rs.len() < 2 {
        return Err(OpmError::InsufficientSamples { needed: 2, got: rs.len() });
    }
    let n = samples[0].1.len();
    if let Some(bad) = samples.iter().find(|s| s.1.len() != n) {
        return Err(OpmError::DimensionMismatch { expected: n, got: bad.1.len() });
    }
    let m = samples.len() as f64;
    let r_mean = samples.iter().map(|s| s.0).sum::<f64>() / m;
    let srr: f64 = samples.iter().map(|s| (s.0 - r_mean).powi(2)).sum();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let c_mean = samples.iter().map(|s| s.1[i]).sum::<f64>() / m;
        let src: f64 = samples.iter().map(|s| (s.0 - r_mean) * (s.1[i] - c_mean)).sum();
        let slope = src / srr;
        *o = c_mean + slope * (r_p - r_mean);
    }
    Ok(out)
}

/// Newton iteration on `rhs = 0` from `seed`.
pub fn newton_steady_state(model: &QuadraticModel, seed: &[f64]) -> Result<Vec<f64>> {
    let n = model.n;
    let mut x = seed.to_vec();
    for _ in 0..100 {
        let f = model.rhs(&x);
        let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-13 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            return Ok(x);
        }
        let j: DMatrix<f64> = model.linearize_at(&x)?;
        let step = j
            .lu()
            .solve(&DVector::from_vec(f))
            .ok_or_else(|| OpmError::RootNotFound("singular Jacobian in Newton".into()))?;
        for k in 0..n {
            x[k] -= step[k];
        }
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    Err(OpmError::RootNotFound("Newton did not converge to a steady state".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cessi, rb9d};

    #[test]
    fn two_samples_on_a_line_are_recovered() {
        let s = vec![(1.0, vec![1.0, -2.0]), (2.0, vec![3.0, -4.0])];
        let e = extrapolate_mean_state(&s, 4.0).unwrap();
        assert!((e[0] - 7.0).abs() < 1e-12 && (e[1] + 8.0).abs() < 1e-12);
        assert!(matches!(
            extrapolate_mean_state(&s[..1], 4.0),
            Err(OpmError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn stable_equilibrium_is_its_own_mean() {
        let m = cessi::model(6.2, 0.1, 0.855, 0.0);
        let eq = crate::model::branch::lower_equilibrium(6.2, 0.1, 0.855).unwrap();
        let ms = estimate_mean_state(&m, &[eq.y, eq.z], 1.0, 5.0, 1e-3).unwrap();
        assert!((ms.mean[0] - eq.y).abs() < 1e-6 && (ms.mean[1] - eq.z).abs() < 1e-6);
    }

    #[test]
    fn newton_finds_a_convective_steady_state() {
        let m = rb9d::model(14.22);
        let seed = [0.0, 1.0, 0.0, -1.0, 0.5, 0.0, 0.0, 0.0, 1.0];
        if let Ok(x) = newton_steady_state(&m, &seed) {
            let f = m.rhs(&x);
            assert!(f.iter().all(|v| v.abs() < 1e-9));
        }
    }
}
