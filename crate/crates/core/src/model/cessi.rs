//! Two-box salinity/temperature model with cubic exchange:
//!
//! ```text
//! y' = F - y [1 + mu (z - y)^2]
//! z' = -(z - 1)/eps - z [1 + mu (z - y)^2]
//! ```
//!
//! State ordering is `(y, z)`. Noise, when present, enters the `y` equation.

use nalgebra::DMatrix;

use super::QuadraticModel;

pub const MU: f64 = 6.2;
pub const EPS: f64 = 0.1;
pub const F_REF: f64 = 0.855;

/// The model as a polynomial system. `sigma = 0` leaves it deterministic.
pub fn model(mu: f64, eps: f64, f: f64, sigma: f64) -> QuadraticModel {
    let n = 2;
    let linear = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -(1.0 / eps + 1.0)]);
    let mut cubic = vec![0.0; 16];
    let idx = |j: usize, k: usize, l: usize, m: usize| ((j * n + k) * n + l) * n + m;
    // y (z - y)^2 = y z^2 - 2 y^2 z + y^3
    cubic[idx(0, 0, 1, 1)] = -mu;
    cubic[idx(0, 0, 0, 1)] = 2.0 * mu;
    cubic[idx(0, 0, 0, 0)] = -mu;
    // z (z - y)^2 = z^3 - 2 y z^2 + y^2 z
    cubic[idx(1, 1, 1, 1)] = -mu;
    cubic[idx(1, 0, 1, 1)] = 2.0 * mu;
    cubic[idx(1, 0, 0, 1)] = -mu;
    let mut m = QuadraticModel::new("cessi", linear, vec![0.0; 8], vec![f, 1.0 / eps])
        .expect("fixed dimensions")
        .with_cubic(cubic)
        .expect("fixed dimensions");
    if sigma != 0.0 {
        m = m.with_noise(vec![sigma, 0.0]).expect("fixed dimensions");
    }
    m.params.insert("mu".into(), mu);
    m.params.insert("eps".into(), eps);
    m.params.insert("F".into(), f);
    m.params.insert("sigma".into(), sigma);
    m
}

/// Direct evaluation of the right-hand side, independent of the tensors.
pub fn rhs(mu: f64, eps: f64, f: f64, y: f64, z: f64) -> [f64; 2] {
    let q = 1.0 + mu * (z - y) * (z - y);
    [f - y * q, -(z - 1.0) / eps - z * q]
}

/// Jacobian of [`rhs`] in closed form.
pub fn jacobian(mu: f64, eps: f64, y: f64, z: f64) -> [[f64; 2]; 2] {
    let d = z - y;
    [
        [-1.0 - mu * d * d + 2.0 * mu * y * d, -2.0 * mu * y * d],
        [2.0 * mu * z * d, -1.0 / eps - 1.0 - mu * d * d - 2.0 * mu * z * d],
    ]
}

/// Slow-manifold reduction `y' = F - y [1 + mu (1 - y)^2]`.
pub fn slow_rhs(mu: f64, f: f64, y: f64) -> f64 {
    f - y * (1.0 + mu * (1.0 - y) * (1.0 - y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensors_match_hand_written_rhs() {
        let m = model(MU, EPS, F_REF, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let y: f64 = rng.random_range(-2.0..2.0);
            let z: f64 = rng.random_range(-2.0..2.0);
            let a = m.rhs(&[y, z]);
            let b = rhs(MU, EPS, F_REF, y, z);
            assert!((a[0] - b[0]).abs() < 1e-12 * (1.0 + b[0].abs()));
            assert!((a[1] - b[1]).abs() < 1e-12 * (1.0 + b[1].abs()));
        }
    }

    #[test]
    fn closed_form_jacobian_matches_tensor_linearization() {
        let m = model(MU, EPS, F_REF, 0.0);
        let a = m.linearize_at(&[0.413, 0.8285]).unwrap();
        let j = jacobian(MU, EPS, 0.413, 0.8285);
        for r in 0..2 {
            for c in 0..2 {
                assert!((a[(r, c)] - j[r][c]).abs() < 1e-12);
            }
        }
    }
}
