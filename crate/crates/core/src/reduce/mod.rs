//! Time integration (RK4 with conjugacy projection, Euler-Maruyama),
//! reduced-system assembly and full-state reconstruction.

mod system;
mod trajectory;

pub use system::{assemble_reduced, reconstruct, ReducedSystem};
pub use trajectory::{Coordinates, Trajectory};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{OpmError, Result};
use crate::spectral::{enforce_conjugacy, Pairing, C64};

/// States with a norm above this are reported as a blow-up.
pub const DIVERGENCE_NORM: f64 = 1e6;

fn norm_real(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn norm_complex(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Classical RK4 for a real autonomous or non-autonomous system.
///
/// `observe(k, t, x)` is called for the initial state (`k = 0`) and after
/// each of the `steps` steps.
pub fn rk4_real<F, O>(mut f: F, x0: &[f64], t0: f64, dt: f64, steps: usize, mut observe: O) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(usize, f64, &[f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    observe(0, t0, &x);
    for s in 0..steps {
        let t = t0 + s as f64 * dt;
        f(t, &x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        f(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        f(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        f(t + dt, &tmp, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let nrm = norm_real(&x);
        let t1 = t0 + (s + 1) as f64 * dt;
        if !(nrm <= DIVERGENCE_NORM) {
            return Err(OpmError::Diverged { time: t1, norm: nrm });
        }
        observe(s + 1, t1, &x);
    }
    Ok(x)
}

/// RK4 on complex amplitudes; after every step conjugate pairs are averaged
/// onto an exactly conjugate pair and real modes drop their imaginary part.
pub fn rk4_conjugate<F, O>(
    mut f: F,
    x0: &[C64],
    pairing: &[Pairing],
    t0: f64,
    dt: f64,
    steps: usize,
    mut observe: O,
) -> Result<Vec<C64>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, f64, &[C64]),
{
    let n = x0.len();
    let z = C64::new(0.0, 0.0);
    let mut x = x0.to_vec();
    enforce_conjugacy(pairing, &mut x);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![z; n], vec![z; n], vec![z; n], vec![z; n], vec![z; n]);
    observe(0, t0, &x);
    for s in 0..steps {
        let t = t0 + s as f64 * dt;
        f(t, &x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + k1[i] * (0.5 * dt);
        }
        f(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + k2[i] * (0.5 * dt);
        }
        f(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + k3[i] * dt;
        }
        f(t + dt, &tmp, &mut k4);
        for i in 0..n {
            x[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
        }
        enforce_conjugacy(pairing, &mut x);
        let nrm = norm_complex(&x);
        let t1 = t0 + (s + 1) as f64 * dt;
        if !(nrm <= DIVERGENCE_NORM) {
            return Err(OpmError::Diverged { time: t1, norm: nrm });
        }
        observe(s + 1, t1, &x);
    }
    Ok(x)
}

/// Record of Brownian increments `dW_k`, one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl NoiseRecord {
    /// `steps` independent `N(0, dt)` increments from a seeded stream.
    pub fn generate(seed: u64, dt: f64, steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = dt.sqrt();
        let increments = (0..steps)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * s
            })
            .collect();
        Self { dt, increments }
    }

    pub fn zeros(dt: f64, steps: usize) -> Self {
        Self { dt, increments: vec![0.0; steps] }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// FNV-1a over the raw bits; equal records give equal checksums.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in std::iter::once(self.dt).chain(self.increments.iter().copied()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Euler-Maruyama for `dx = f(t, x) dt + g dW` with a scalar Wiener process
/// and constant diffusion vector `g`, driven by a recorded increment path.
pub fn euler_maruyama<F, O>(
    mut drift: F,
    diffusion: &[f64],
    x0: &[f64],
    t0: f64,
    noise: &NoiseRecord,
    mut observe: O,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(usize, f64, &[f64]),
{
    let n = x0.len();
    if diffusion.len() != n {
        return Err(OpmError::DimensionMismatch { expected: n, got: diffusion.len() });
    }
    let dt = noise.dt;
    let mut x = x0.to_vec();
    let mut k = vec![0.0; n];
    observe(0, t0, &x);
    for (s, dw) in noise.increments.iter().enumerate() {
        let t = t0 + s as f64 * dt;
        drift(t, &x, &mut k);
        for i in 0..n {
            x[i] += k[i] * dt + diffusion[i] * dw;
        }
        let t1 = t0 + (s + 1) as f64 * dt;
        let nrm = norm_real(&x);
        if !(nrm <= DIVERGENCE_NORM) {
            return Err(OpmError::Diverged { time: t1, norm: nrm });
        }
        observe(s + 1, t1, &x);
    }
    Ok(x)
}

/// Collect an RK4 run into a [`Trajectory`], keeping every `stride`-th state.
pub fn integrate_rk4<F>(f: F, x0: &[f64], t0: f64, dt: f64, steps: usize, stride: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let stride = stride.max(1);
    let mut traj = Trajectory::new(x0.len(), t0, dt * stride as f64, Coordinates::Physical);
    rk4_real(f, x0, t0, dt, steps, |k, _, x| {
        if k % stride == 0 {
            traj.push(x);
        }
    })?;
    Ok(traj)
}

/// Collect an Euler-Maruyama run into a [`Trajectory`] that carries its
/// increment record.
pub fn integrate_em<F>(drift: F, diffusion: &[f64], x0: &[f64], t0: f64, noise: &NoiseRecord) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut traj = Trajectory::new(x0.len(), t0, noise.dt, Coordinates::Physical);
    euler_maruyama(drift, diffusion, x0, t0, noise, |_, _, x| traj.push(x))?;
    traj.increments = Some(noise.increments.clone());
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential_decay() {
        let x = rk4_real(|_, x, o| o[0] = -x[0], &[1.0], 0.0, 5e-3, 200, |_, _, _| {}).unwrap();
        assert!((x[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // x' = x cos(t), x(0) = 1, exact solution exp(sin t).
        let exact = 2f64.sin().exp();
        let run = |dt: f64| {
            let steps = (2.0 / dt).round() as usize;
            let x = rk4_real(|t, x, o| o[0] = x[0] * t.cos(), &[1.0], 0.0, dt, steps, |_, _, _| {}).unwrap();
            (x[0] - exact).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn zero_noise_em_is_explicit_euler() {
        let noise = NoiseRecord::zeros(1e-2, 100);
        let x = euler_maruyama(|_, x, o| o[0] = -2.0 * x[0], &[1.0], &[1.0], 0.0, &noise, |_, _, _| {}).unwrap();
        let mut e = 1.0f64;
        for _ in 0..100 {
            e += -2.0 * e * 1e-2;
        }
        assert_eq!(x[0], e);
    }

    #[test]
    fn ou_stationary_variance() {
        let noise = NoiseRecord::generate(42, 1e-2, 100_000);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut cnt = 0.0;
        euler_maruyama(|_, x, o| o[0] = -x[0], &[1.0], &[0.0], 0.0, &noise, |k, _, x| {
            if k > 1000 {
                sum += x[0];
                sq += x[0] * x[0];
                cnt += 1.0;
            }
        })
        .unwrap();
        let var = sq / cnt - (sum / cnt).powi(2);
        assert!((var - 0.5).abs() < 0.05 * 0.5, "variance {var}");
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let noise = NoiseRecord::generate(7, 1e-3, 5000);
        let f = |_: f64, x: &[f64], o: &mut [f64]| o[0] = x[0] - x[0].powi(3);
        let a = integrate_em(f, &[0.5], &[0.1], 0.0, &noise).unwrap();
        let b = integrate_em(f, &[0.5], &[0.1], 0.0, &noise).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(noise.checksum(), NoiseRecord::generate(7, 1e-3, 5000).checksum());
    }

    #[test]
    fn divergence_is_reported() {
        let r = rk4_real(|_, x, o| o[0] = x[0] * x[0], &[10.0], 0.0, 1e-2, 1000, |_, _, _| {});
        assert!(matches!(r, Err(OpmError::Diverged { .. })));
    }
}
