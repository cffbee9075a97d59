use nalgebra::DMatrix;
use opm_core::defect::{golden_section, optimize_tau, SearchConfig, TrainingSet};
use opm_core::experiments::cessi::{folds, LastCrossing};
use opm_core::model::{cessi, cessi_steady_branch, rb9d, to_eigen_model, QuadraticModel};
use opm_core::param::{build_im, build_opm_const, horizon};
use opm_core::reduce::rk4_real;
use opm_core::spectral::decompose;
use opm_core::verify::random_system;
use opm_core::{Pairing, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct Wrapped {
    #[serde(with = "horizon")]
    tau: f64,
}

fn tau_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(f64::INFINITY), 0.0..1e6f64, Just(0.0)]
}

/// Four modes: a slow rotating pair and a fast rotating pair.
fn two_pair_model(b: Vec<f64>, slow: (f64, f64), fast: (f64, f64)) -> QuadraticModel {
    let mut l = DMatrix::zeros(4, 4);
    l[(0, 0)] = slow.0;
    l[(1, 1)] = slow.0;
    l[(0, 1)] = slow.1;
    l[(1, 0)] = -slow.1;
    l[(2, 2)] = fast.0;
    l[(3, 3)] = fast.0;
    l[(2, 3)] = fast.1;
    l[(3, 2)] = -fast.1;
    QuadraticModel::new("pairs", l, b, vec![0.0; 4]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn horizons_survive_json(tau in tau_strategy()) {
        let w = Wrapped { tau };
        let back: Wrapped = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn raising_the_threshold_never_moves_the_transition_earlier(
        series in prop::collection::vec(-2.0..2.0f64, 2..200),
        lo in -2.0..2.0f64,
        bump in 0.0..1.0f64,
    ) {
        let (mut a, mut b) = (LastCrossing::new(lo), LastCrossing::new(lo + bump));
        for (k, y) in series.iter().enumerate() {
            a.push(k, *y);
            b.push(k, *y);
        }
        if let (Some(i), Some(j)) = (a.index(), b.index()) {
            prop_assert!(j >= i);
        }
        // Tipping at the higher threshold implies tipping at the lower one.
        if b.index().is_some() {
            prop_assert!(a.index().is_some());
        }
    }

    #[test]
    fn random_spectra_are_biorthogonal_and_paired(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(9, 9, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let basis = decompose(&m).unwrap();
        prop_assert!(basis.biorthogonality_defect() < 1e-8);
        let err = (basis.reconstruct() - m.map(|v| C64::new(v, 0.0))).norm();
        prop_assert!(err < 1e-9 * m.norm().max(1.0), "reconstruction error {err}");
        for (j, p) in basis.pairing.iter().enumerate() {
            if let Pairing::Conjugate(k) = p {
                prop_assert_eq!(j.abs_diff(*k), 1);
                prop_assert!((basis.lambdas[*k] - basis.lambdas[j].conj()).norm() < 1e-10);
            }
        }
        for w in basis.lambdas.windows(2) {
            prop_assert!(w[0].re >= w[1].re - 1e-12);
        }
    }

    #[test]
    fn conjugate_modes_get_conjugate_coefficients(
        b in prop::collection::vec(-1.0..1.0f64, 64),
        slow in (-0.3..-0.05f64, 0.2..1.5f64),
        fast in (-3.0..-1.0f64, 0.5..3.0f64),
        tau in prop_oneof![0.1..20.0f64, Just(f64::INFINITY)],
    ) {
        let e = to_eigen_model(&two_pair_model(b, slow, fast), &[0.0; 4]).unwrap();
        let p = build_opm_const(&e, 2, &[tau, tau]).unwrap();
        let partner = |j: usize| match e.basis.pairing[j] {
            Pairing::Conjugate(k) => k,
            Pairing::Real => j,
        };
        for mode in &p.modes {
            let twin = &p.modes[partner(mode.mode) - 2];
            prop_assert_eq!(partner(mode.mode), twin.mode);
            for i in 0..2 {
                for j in 0..2 {
                    let q = mode.quadratic[i * 2 + j];
                    let q_twin = twin.quadratic[partner(i) * 2 + partner(j)];
                    prop_assert!((q.conj() - q_twin).norm() <= 1e-12 * q.norm().max(1.0), "{q} vs {q_twin}");
                }
            }
        }
    }

    #[test]
    fn long_horizons_approach_the_invariant_manifold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_system(&mut rng, 4, 2, false);
        let e = to_eigen_model(&m, &[0.0; 4]).unwrap();
        let l = e.lambdas();
        let gap = (2..4)
            .flat_map(|n| (0..2).flat_map(move |i| (0..2).map(move |j| (l[i] + l[j] - l[n]).re)))
            .fold(f64::INFINITY, f64::min);
        prop_assume!(gap > 0.3);
        let far = build_opm_const(&e, 2, &[50.0, 50.0]).unwrap();
        let im = build_im(&e, 2).unwrap();
        for (a, b) in far.modes.iter().zip(&im.modes) {
            for (x, y) in a.quadratic.iter().zip(&b.quadratic) {
                prop_assert!((x - y).norm() <= 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn golden_section_stays_below_its_bracket(
        slope in -1.0..1.0f64,
        curv in 0.01..1.0f64,
        quart in 0.0..1.0f64,
        a in -3.0..0.0f64,
        w in 0.1..3.0f64,
    ) {
        let f = |x: f64| slope * x + curv * x * x + quart * x.powi(4);
        let x = golden_section(f, a, a + w, 1e-7);
        prop_assert!(x >= a && x <= a + w);
        prop_assert!(f(x) <= f(a).max(f(a + w)));
        let best = (0..=1000).map(|i| f(a + w * i as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
        // f is convex, so its steepest slope on the bracket is at an end; an
        // x-tolerance of 1e-7 costs at most that slope times 1e-7 in f.
        let df = |x: f64| slope + 2.0 * curv * x + 4.0 * quart * x.powi(3);
        let steepest = df(a).abs().max(df(a + w).abs());
        prop_assert!(f(x) <= best + 2e-7 * steepest + 1e-12);
    }

    #[test]
    fn box_model_branch_is_consistent(frac in 0.01..0.99f64) {
        let fo = folds(cessi::MU, cessi::EPS).unwrap();
        let f = fo.f_c1 + frac * (fo.f_c2 - fo.f_c1);
        let t = cessi_steady_branch(cessi::MU, cessi::EPS, &[f]).unwrap();
        let eq = &t.equilibria[0].1;
        prop_assert_eq!(eq.len(), 3);
        for (k, p) in eq.iter().enumerate() {
            let r = cessi::rhs(cessi::MU, cessi::EPS, f, p.y, p.z);
            prop_assert!(r[0].abs() < 1e-10 && r[1].abs() < 1e-10);
            prop_assert_eq!(p.stable, k != 1);
        }
    }

    #[test]
    fn eigen_coordinates_round_trip(x in prop::collection::vec(-2.0..2.0f64, 9), r in 13.0..15.0f64) {
        let mean = [0.05, -0.02, 0.3, 0.01, 0.0, 0.1, -0.2, 0.04, 0.02];
        let e = to_eigen_model(&rb9d::model(r), &mean).unwrap();
        let (back, residue) = e.to_physical(&e.to_eigen(&x));
        prop_assert!(residue < 1e-10);
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}, cond {}", e.basis.biorthogonality_defect());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn refined_minima_never_exceed_their_grid_neighbours(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_system(&mut rng, 3, 1, true);
        let e = to_eigen_model(&m, &[0.0; 3]).unwrap();
        let dt = 0.01;
        let mut samples = Vec::new();
        let x0: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -0.3..0.3)).collect();
        let run = rk4_real(|_, x, o| m.rhs_into(x, o), &x0, 0.0, dt, 600, |k, _, x| {
            if k >= 100 {
                samples.push(e.to_eigen(x));
            }
        });
        prop_assume!(run.is_ok());
        let data = TrainingSet::deterministic(dt, samples);
        let cfg = SearchConfig { points: 40, ..SearchConfig::default() };
        for n in 1..3 {
            let p = optimize_tau(&data, &e, 1, n, &cfg).unwrap();
            for min in &p.minima {
                let k = p.taus.partition_point(|t| *t < min.tau);
                if p.taus.get(k) == Some(&min.tau) {
                    prop_assert!(min.value <= p.values[k]);
                } else {
                    prop_assert!(min.value <= p.values[k - 1].min(p.values[k]), "refined {} at {}", min.value, min.tau);
                }
            }
        }
    }
}
