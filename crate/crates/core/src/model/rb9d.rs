//! Nine-mode Galerkin truncation of three-dimensional Rayleigh-Benard
//! convection in a square cell, `C' = L C + B(C, C)`.

use nalgebra::DMatrix;

use super::QuadraticModel;

pub const PRANDTL: f64 = 0.5;
pub const ASPECT: f64 = 0.5;

/// `(b1, ..., b6)` for horizontal wavenumber `a`.
pub fn b_coefficients(a: f64) -> [f64; 6] {
    let a2 = a * a;
    [
        4.0 * (1.0 + a2) / (1.0 + 2.0 * a2),
        (1.0 + 2.0 * a2) / (2.0 * (1.0 + a2)),
        2.0 * (1.0 - a2) / (1.0 + a2),
        a2 / (1.0 + a2),
        8.0 * a2 / (1.0 + 2.0 * a2),
        4.0 / (1.0 + 2.0 * a2),
    ]
}

pub fn model(r: f64) -> QuadraticModel {
    model_with(r, PRANDTL, ASPECT)
}

pub fn model_with(r: f64, sigma: f64, a: f64) -> QuadraticModel {
    let [b1, b2, b3, b4, b5, b6] = b_coefficients(a);
    let n = 9;
    let mut l = DMatrix::zeros(n, n);
    l[(0, 0)] = -sigma * b1;
    l[(0, 6)] = -sigma * b2;
    l[(1, 1)] = -sigma;
    l[(1, 8)] = -sigma / 2.0;
    l[(2, 2)] = -sigma * b1;
    l[(2, 7)] = sigma * b2;
    l[(3, 3)] = -sigma;
    l[(3, 8)] = sigma / 2.0;
    l[(4, 4)] = -sigma * b5;
    l[(5, 5)] = -b6;
    l[(6, 0)] = -r;
    l[(6, 6)] = -b1;
    l[(7, 2)] = r;
    l[(7, 7)] = -b1;
    l[(8, 1)] = -r;
    l[(8, 3)] = r;
    l[(8, 8)] = -1.0;

    let mut t = vec![0.0; n * n * n];
    let mut set = |j: usize, k: usize, l: usize, v: f64| t[((j - 1) * n + (k - 1)) * n + (l - 1)] = v;
    set(1, 2, 4, -1.0);
    set(1, 4, 4, b4);
    set(1, 3, 5, b3);
    set(2, 1, 4, 1.0);
    set(2, 2, 5, -1.0);
    set(2, 4, 5, 1.0);
    set(3, 2, 4, 1.0);
    set(3, 2, 2, -b4);
    set(3, 1, 5, -b3);
    set(4, 2, 3, -1.0);
    set(4, 2, 5, -1.0);
    set(4, 4, 5, 1.0);
    set(5, 2, 2, 0.5);
    set(5, 4, 4, -0.5);
    set(6, 2, 9, 1.0);
    set(6, 4, 9, -1.0);
    set(7, 5, 8, 2.0);
    set(7, 4, 9, -1.0);
    set(8, 5, 7, -2.0);
    set(8, 2, 9, 1.0);
    set(9, 2, 6, -2.0);
    set(9, 2, 8, -1.0);
    set(9, 4, 6, 2.0);
    set(9, 4, 7, 1.0);

    let mut m = QuadraticModel::new("rb9d", l, t, vec![0.0; n]).expect("fixed dimensions");
    m.params.insert("r".into(), r);
    m.params.insert("sigma".into(), sigma);
    m.params.insert("a".into(), a);
    m
}

/// The nine equations written out term by term.
pub fn rhs(r: f64, sigma: f64, a: f64, c: &[f64]) -> [f64; 9] {
    let [b1, b2, b3, b4, b5, b6] = b_coefficients(a);
    let (c1, c2, c3, c4, c5, c6, c7, c8, c9) = (c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]);
    [
        -sigma * b1 * c1 - c2 * c4 + b4 * c4 * c4 + b3 * c3 * c5 - sigma * b2 * c7,
        -sigma * c2 + c1 * c4 - c2 * c5 + c4 * c5 - sigma / 2.0 * c9,
        -sigma * b1 * c3 + c2 * c4 - b4 * c2 * c2 - b3 * c1 * c5 + sigma * b2 * c8,
        -sigma * c4 - c2 * c3 - c2 * c5 + c4 * c5 + sigma / 2.0 * c9,
        -sigma * b5 * c5 + 0.5 * c2 * c2 - 0.5 * c4 * c4,
        -b6 * c6 + c2 * c9 - c4 * c9,
        -b1 * c7 - r * c1 + 2.0 * c5 * c8 - c4 * c9,
        -b1 * c8 + r * c3 - 2.0 * c5 * c7 + c2 * c9,
        -c9 - c2 * (r + 2.0 * c6 + c8) + c4 * (r + 2.0 * c6 + c7),
    ]
}
