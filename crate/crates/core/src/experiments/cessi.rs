//! Noise-driven tipping in the two-box salinity model.
//!
//! A one-mode OPM closure is trained at a fixed forcing `f_ref` between the
//! two saddle-nodes, then run while the forcing drifts slowly through the
//! end of the lower branch. The closed equation is integrated both in the
//! eigen amplitude `X` and in the original salinity variable `Y`.

use serde::{Deserialize, Serialize};

use crate::defect::{optimize_tau, DefectProfile, SearchConfig, TrainingSet};
use crate::error::{OpmError, Result};
use crate::experiments::stream_seed;
use crate::model::{cessi, cessi_steady_branch, to_eigen_model, EigenModel, Equilibrium};
use crate::param::{build_opm_timedep, MemoryTerm, Parameterization};
use crate::reduce::{euler_maruyama, NoiseRecord};
use crate::spectral::C64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CessiConfig {
    pub mu: f64,
    pub eps: f64,
    pub f_ref: f64,
    /// Noise on the `y` equation during training and validation.
    pub sigma: f64,
    pub dt: f64,
    pub train_start: f64,
    pub train_end: f64,
    pub search: SearchConfig,
    /// Use this horizon instead of searching.
    #[serde(with = "crate::param::horizon::option")]
    pub tau: Option<f64>,
    /// Length of the out-of-sample comparison run.
    pub validation_length: f64,
    pub seed: u64,
}

impl Default for CessiConfig {
    fn default() -> Self {
        Self {
            mu: cessi::MU,
            eps: cessi::EPS,
            f_ref: cessi::F_REF,
            sigma: cessi::EPS.sqrt(),
            dt: 1e-3,
            train_start: 20.0,
            train_end: 80.0,
            search: SearchConfig { with_memory: true, ..SearchConfig::default() },
            tau: None,
            validation_length: 300.0,
            seed: 7,
        }
    }
}

impl CessiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.train_start >= 0.0) || !(self.train_end > self.train_start) {
            return Err(OpmError::InvalidArgument("need dt > 0 and 0 <= train_start < train_end".into()));
        }
        if !(self.mu > 0.0) || !(self.eps > 0.0) {
            return Err(OpmError::InvalidArgument("mu and eps must be positive".into()));
        }
        Ok(())
    }

    fn steps(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Both saddle-nodes of the steady branch and the state closing the lower
/// branch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Folds {
    pub f_c1: f64,
    pub f_c2: f64,
    /// `y` of the steady state at `f_c2`: the tipping threshold.
    pub y_c: f64,
}

pub fn folds(mu: f64, eps: f64) -> Result<Folds> {
    let t = cessi_steady_branch(mu, eps, &[0.0, 1.0, 2.0])?;
    match (t.f_c1(), t.f_c2()) {
        (Some(a), Some(b)) => Ok(Folds { f_c1: a.f, f_c2: b.f, y_c: b.y }),
        _ => Err(OpmError::RootNotFound("the steady branch has no saddle-node pair".into())),
    }
}

/// Trained one-mode reduced SDE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CessiClosure {
    pub mu: f64,
    pub eps: f64,
    pub f_ref: f64,
    pub equilibrium: Equilibrium,
    /// Upper stable and middle (unstable) states at `f_ref`.
    pub upper: Equilibrium,
    pub middle: Equilibrium,
    pub eigen: EigenModel,
    pub param: Parameterization,
    #[serde(with = "crate::param::horizon")]
    pub tau: f64,
    pub profile: Option<DefectProfile>,
}

fn states_at(mu: f64, eps: f64, f: f64) -> Result<[Equilibrium; 3]> {
    let t = cessi_steady_branch(mu, eps, &[f])?;
    let eq = &t.equilibria[0].1;
    if eq.len() != 3 {
        return Err(OpmError::InvalidArgument(format!("F = {f} does not lie between the saddle-nodes")));
    }
    Ok([eq[0], eq[1], eq[2]])
}

/// Euler-Maruyama run of the full model; `observe(k, y, z)` sees every state.
pub fn simulate_full<O: FnMut(usize, f64, f64)>(
    mu: f64,
    eps: f64,
    forcing: impl Fn(f64) -> f64,
    sigma: f64,
    y0: [f64; 2],
    noise: &NoiseRecord,
    mut observe: O,
) -> Result<[f64; 2]> {
    let x = euler_maruyama(
        |t, x, out| {
            let r = cessi::rhs(mu, eps, forcing(t), x[0], x[1]);
            out[0] = r[0];
            out[1] = r[1];
        },
        &[sigma, 0.0],
        &y0,
        0.0,
        noise,
        |k, _, x| observe(k, x[0], x[1]),
    )?;
    Ok([x[0], x[1]])
}

/// Train the closure of the fast mode on a noisy full-model path.
pub fn cessi_opm_pipeline(cfg: &CessiConfig) -> Result<CessiClosure> {
    cfg.validate()?;
    let [lower, middle, upper] = states_at(cfg.mu, cfg.eps, cfg.f_ref)?;
    let model = cessi::model(cfg.mu, cfg.eps, cfg.f_ref, cfg.sigma);
    let eigen = to_eigen_model(&model, &[lower.y, lower.z])?;
    let (tau, profile) = match cfg.tau {
        Some(t) => (t, None),
        None => {
            let data = training_set(cfg, &eigen, lower)?;
            let p = optimize_tau(&data, &eigen, 1, 1, &cfg.search)?;
            (p.selected_tau, Some(p))
        }
    };
    let param = build_opm_timedep(&eigen, 1, &[tau])?;
    Ok(CessiClosure {
        mu: cfg.mu,
        eps: cfg.eps,
        f_ref: cfg.f_ref,
        equilibrium: lower,
        upper,
        middle,
        eigen,
        param,
        tau,
        profile,
    })
}

/// Eigen amplitudes of a full-model path on `[train_start, train_end]`,
/// started at the lower state, with the increments that drove it.
pub fn training_set(cfg: &CessiConfig, eigen: &EigenModel, start: Equilibrium) -> Result<TrainingSet> {
    let noise = NoiseRecord::generate(stream_seed(cfg.seed, "cessi-train", 0), cfg.dt, cfg.steps(cfg.train_end));
    let offset = cfg.steps(cfg.train_start);
    let mut samples = Vec::with_capacity(noise.len() + 1 - offset);
    simulate_full(cfg.mu, cfg.eps, |_| cfg.f_ref, cfg.sigma, [start.y, start.z], &noise, |k, y, z| {
        if k >= offset {
            samples.push(eigen.to_eigen(&[y, z]));
        }
    })?;
    Ok(TrainingSet { dt: cfg.dt, samples, noise: Some(noise), offset })
}

/// Scalars of the closed equation in real arithmetic.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClosureScalars {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `e_1 = (e11, e12)`, `e_2 = (e21, e22)`.
    pub e11: f64,
    pub e12: f64,
    pub e21: f64,
    pub e22: f64,
    pub e1_star: [f64; 2],
    pub e2_star: [f64; 2],
    /// Coefficient of `X^2` in `Phi_2`.
    pub quadratic: f64,
    #[serde(with = "crate::param::horizon")]
    pub tau: f64,
}

impl CessiClosure {
    pub fn scalars(&self) -> ClosureScalars {
        let b = &self.eigen.basis;
        let l = self.eigen.lambdas();
        ClosureScalars {
            lambda1: l[0].re,
            lambda2: l[1].re,
            e11: b.right[0][0].re,
            e12: b.right[0][1].re,
            e21: b.right[1][0].re,
            e22: b.right[1][1].re,
            e1_star: [b.adjoint[0][0].re, b.adjoint[0][1].re],
            e2_star: [b.adjoint[1][0].re, b.adjoint[1][1].re],
            quadratic: self.param.modes[0].quadratic[0].re,
            tau: self.tau,
        }
    }

    /// `Phi_2(X) = Q X^2 + Z`, where `Z = sigma_2 I` is passed in.
    pub fn phi2(&self, x: f64, z: f64) -> f64 {
        self.param.modes[0].eval(&[C64::new(x, 0.0)]).re + z
    }

    /// Deterministic part of `X'` at forcing `f_ref`.
    pub fn x_drift(&self, x: f64, z: f64) -> f64 {
        let u = [C64::new(x, 0.0), C64::new(self.phi2(x, z), 0.0)];
        let mut out = [C64::new(0.0, 0.0)];
        self.eigen.rhs_rows(&u, 0..1, &mut out);
        out[0].re
    }

    /// `(y, z)` reconstructed from the resolved amplitude and the memory.
    pub fn lift(&self, x: f64, z: f64) -> [f64; 2] {
        let s = self.scalars();
        let p = self.phi2(x, z);
        [self.equilibrium.y + s.e11 * x + s.e21 * p, self.equilibrium.z + s.e12 * x + s.e22 * p]
    }

    /// Noise loadings `(sigma_1, sigma_2)` for noise `sigma` on `y`.
    pub fn loadings(&self, sigma: f64) -> (f64, f64) {
        let s = self.scalars();
        (sigma * s.e1_star[0], sigma * s.e2_star[0])
    }

    /// `Z` memory with rate `lambda_2` over the horizon, at rest at `t0`.
    pub fn memory(&self, dt: f64) -> Result<MemoryTerm> {
        MemoryTerm::at_rest(self.eigen.lambdas()[1], self.tau, dt, 0.0)
    }

    pub fn original_coordinates(&self) -> OriginalCoordinates {
        let s = self.scalars();
        OriginalCoordinates {
            mu: self.mu,
            eps: self.eps,
            f_ref: self.f_ref,
            ybar: self.equilibrium.y,
            zbar: self.equilibrium.z,
            gamma: s.e21 * s.quadratic,
            gamma2: s.e22 * s.quadratic,
            s,
        }
    }

    /// The reduced SDE in `X` on a recorded path. `forcing(t)` replaces
    /// `f_ref`; its excess enters through the projection on `e*_1`.
    /// `observe(k, x, z)` sees every state.
    pub fn simulate_x<O: FnMut(usize, f64, f64)>(
        &self,
        x0: f64,
        sigma: f64,
        forcing: impl Fn(f64) -> f64,
        noise: &NoiseRecord,
        mut observe: O,
    ) -> Result<f64> {
        let (s1, s2) = self.loadings(sigma);
        let g1 = self.scalars().e1_star[0];
        let mut mem = self.memory(noise.dt)?;
        let mut x = x0;
        let dt = noise.dt;
        observe(0, x, 0.0);
        for (k, &dw) in noise.increments.iter().enumerate() {
            let t = k as f64 * dt;
            let z = s2 * mem.value().re;
            let drift = self.x_drift(x, z) + g1 * (forcing(t) - self.f_ref);
            x += drift * dt + s1 * dw;
            mem.step_noise(dw);
            if !x.is_finite() {
                return Err(OpmError::Diverged { time: t + dt, norm: x.abs() });
            }
            observe(k + 1, x, s2 * mem.value().re);
        }
        Ok(x)
    }
}

/// How the forcing excess `F(t) - f_ref` enters the `Y` equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftForm {
    /// `g(t) = <(F(t) - f_ref, 0), e*_1>` added to `Y'` as it stands.
    Additive,
    /// `alpha g(t)`: the exact image of the forcing entering `X'`, which
    /// keeps the `Y` and `X` equations algebraically equivalent.
    #[default]
    Chain,
}

/// The closed equation rewritten for `Y`, the salinity variable itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OriginalCoordinates {
    pub mu: f64,
    pub eps: f64,
    pub f_ref: f64,
    pub ybar: f64,
    pub zbar: f64,
    /// `e21 Q` and `e22 Q`.
    pub gamma: f64,
    pub gamma2: f64,
    pub s: ClosureScalars,
}

impl OriginalCoordinates {
    pub fn discriminant(&self, y: f64, z: f64) -> f64 {
        self.s.e11 * self.s.e11 - 4.0 * self.gamma * (self.s.e21 * z + self.ybar - y)
    }

    /// `alpha = dY/dX` on the branch through the reference state. The root
    /// carries the sign of `e11` so the branch does not depend on how the
    /// eigenvector is oriented.
    pub fn alpha(&self, y: f64, z: f64) -> Result<f64> {
        let d = self.discriminant(y, z);
        if d < 0.0 {
            return Err(OpmError::NegativeDiscriminant { value: d, time: f64::NAN, state: y });
        }
        Ok(d.sqrt().copysign(self.s.e11))
    }

    /// `X = varphi(Y, Z)`, the resolved amplitude behind `Y`.
    pub fn varphi(&self, y: f64, z: f64) -> Result<f64> {
        let a = self.alpha(y, z)?;
        // Cancellation-free form of (a - e11) / (2 gamma), valid at gamma = 0.
        Ok(2.0 * (y - self.ybar - self.s.e21 * z) / (a + self.s.e11))
    }

    /// `z = Psi(Y, Z)`.
    pub fn psi(&self, y: f64, z: f64) -> Result<f64> {
        let x = self.varphi(y, z)?;
        Ok(self.zbar + self.gamma2 * x * x + self.s.e12 * x + self.s.e22 * z)
    }

    /// `<F(Y, Psi), e*_1>` with the right-hand side at `f_ref`.
    pub fn projected_rhs(&self, y: f64, z: f64) -> Result<f64> {
        let zz = self.psi(y, z)?;
        let r = cessi::rhs(self.mu, self.eps, self.f_ref, y, zz);
        Ok(r[0] * self.s.e1_star[0] + r[1] * self.s.e1_star[1])
    }

    /// Deterministic drift of `Y` at forcing `f` (memory held fixed).
    pub fn drift(&self, y: f64, z: f64, f: f64, form: DriftForm) -> Result<f64> {
        let a = self.alpha(y, z)?;
        let g = (f - self.f_ref) * self.s.e1_star[0];
        let g = match form {
            DriftForm::Additive => g,
            DriftForm::Chain => a * g,
        };
        Ok(a * self.projected_rhs(y, z)? + g)
    }

    /// Euler-Maruyama run of the `Y` equation; the memory `Z` advances on
    /// the same increments. `observe(k, y)` sees every state.
    pub fn simulate<O: FnMut(usize, f64)>(
        &self,
        y0: f64,
        sigma: f64,
        forcing: impl Fn(f64) -> f64,
        form: DriftForm,
        noise: &NoiseRecord,
        mut observe: O,
    ) -> Result<f64> {
        let s1 = sigma * self.s.e1_star[0];
        let s2 = sigma * self.s.e2_star[0];
        let mut mem = MemoryTerm::at_rest(C64::new(self.s.lambda2, 0.0), self.s.tau, noise.dt, 0.0)?;
        let dt = noise.dt;
        let mut y = y0;
        observe(0, y);
        for (k, &dw) in noise.increments.iter().enumerate() {
            let t = k as f64 * dt;
            let z = s2 * mem.value().re;
            let step = self
                .alpha(y, z)
                .and_then(|a| Ok(self.drift(y, z, forcing(t), form)? * dt + a * s1 * dw))
                .map_err(|e| match e {
                    OpmError::NegativeDiscriminant { value, state, .. } => {
                        OpmError::NegativeDiscriminant { value, time: t, state }
                    }
                    e => e,
                })?;
            let dz = s2 * mem.step_noise(dw).re;
            y += step + self.s.e21 * dz;
            if !y.is_finite() {
                return Err(OpmError::Diverged { time: t + dt, norm: y.abs() });
            }
            observe(k + 1, y);
        }
        Ok(y)
    }
}

/// Slow-manifold reduction `y' = F - y [1 + mu (1 - y)^2] + sigma W'`.
pub fn simulate_slow<O: FnMut(usize, f64)>(
    mu: f64,
    forcing: impl Fn(f64) -> f64,
    sigma: f64,
    y0: f64,
    noise: &NoiseRecord,
    mut observe: O,
) -> Result<f64> {
    let x = euler_maruyama(
        |t, x, out| out[0] = cessi::slow_rhs(mu, forcing(t), x[0]),
        &[sigma],
        &[y0],
        0.0,
        noise,
        |k, _, x| observe(k, x[0]),
    )?;
    Ok(x[0])
}

/// Out-of-sample comparison at fixed forcing on a fresh noise path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Validation {
    /// Fraction of time spent above the middle (unstable) state.
    pub upper_occupancy_full: f64,
    pub upper_occupancy_reduced: f64,
    pub crossings_full: usize,
    pub crossings_reduced: usize,
    pub noise_checksum: u64,
}

/// Tracks how often and how long a series sits above a level.
#[derive(Debug, Default, Clone, Copy)]
struct Occupancy {
    above: usize,
    total: usize,
    crossings: usize,
    last: Option<bool>,
}

impl Occupancy {
    fn push(&mut self, v: f64, level: f64) {
        let up = v > level;
        if self.last.is_some_and(|l| l != up) {
            self.crossings += 1;
        }
        self.last = Some(up);
        self.above += up as usize;
        self.total += 1;
    }

    fn fraction(&self) -> f64 {
        self.above as f64 / self.total.max(1) as f64
    }
}

/// Full model and reduced `X` equation on one common path; `y` of each is
/// handed to `observe(k, y_full, y_reduced)` on a `stride` grid.
pub fn validate_closure<O: FnMut(usize, f64, f64)>(
    closure: &CessiClosure,
    cfg: &CessiConfig,
    stride: usize,
    mut observe: O,
) -> Result<Validation> {
    let noise = NoiseRecord::generate(stream_seed(cfg.seed, "cessi-validate", 0), cfg.dt, cfg.steps(cfg.validation_length));
    let eq = closure.equilibrium;
    let level = closure.middle.y;
    let mut full_y = Vec::with_capacity(noise.len() + 1);
    let mut occ_full = Occupancy::default();
    simulate_full(cfg.mu, cfg.eps, |_| cfg.f_ref, cfg.sigma, [eq.y, eq.z], &noise, |_, y, _| {
        occ_full.push(y, level);
        full_y.push(y);
    })?;
    let mut occ_red = Occupancy::default();
    let stride = stride.max(1);
    closure.simulate_x(0.0, cfg.sigma, |_| cfg.f_ref, &noise, |k, x, z| {
        let y = closure.lift(x, z)[0];
        occ_red.push(y, level);
        if k % stride == 0 {
            observe(k, full_y[k], y);
        }
    })?;
    Ok(Validation {
        upper_occupancy_full: occ_full.fraction(),
        upper_occupancy_reduced: occ_red.fraction(),
        crossings_full: occ_full.crossings,
        crossings_reduced: occ_red.crossings,
        noise_checksum: noise.checksum(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TippingConfig {
    pub f0: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub n_realizations: usize,
    pub bins: usize,
    /// Runs stop at `F = f_c2 + f_margin`.
    pub f_margin: f64,
    pub drift_form: DriftForm,
    pub seed: u64,
}

impl Default for TippingConfig {
    fn default() -> Self {
        Self {
            f0: 0.85,
            kappa: 2e-4,
            sigma: cessi::EPS.sqrt() / 50.0,
            n_realizations: 2000,
            bins: 30,
            f_margin: 0.05,
            drift_form: DriftForm::Chain,
            seed: 11,
        }
    }
}

/// `sup { t_k : y_k <= threshold }` as a sample index, tracked online.
/// A series that ends at or below the threshold has not tipped.
#[derive(Debug, Clone, Copy)]
pub struct LastCrossing {
    pub threshold: f64,
    last_below: Option<usize>,
    final_value: f64,
}

impl LastCrossing {
    pub fn new(threshold: f64) -> Self {
        Self { threshold, last_below: None, final_value: f64::NAN }
    }

    pub fn push(&mut self, k: usize, y: f64) {
        if y <= self.threshold {
            self.last_below = Some(k);
        }
        self.final_value = y;
    }

    /// Index of the transition, or `None` if the series never settled above.
    pub fn index(&self) -> Option<usize> {
        if !(self.final_value > self.threshold) {
            return None;
        }
        Some(self.last_below.unwrap_or(0))
    }
}

/// One realization: every model consumed the same increments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TippingRun {
    pub seed: u64,
    pub f_full: Option<f64>,
    pub f_reduced: Option<f64>,
    pub f_slow: Option<f64>,
    /// Error code when the reduced model broke down (e.g. negative
    /// discriminant).
    pub reduced_error: Option<String>,
    pub noise_checksum: u64,
}

/// The drift `F(t) = f0 + kappa t` and the threshold to cross.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TippingSetup {
    pub folds: Folds,
    pub f0: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub dt: f64,
    pub steps: usize,
    pub f_max: f64,
    pub start: [f64; 2],
    pub drift_form: DriftForm,
}

impl TippingSetup {
    pub fn new(cfg: &TippingConfig, closure: &CessiClosure, dt: f64) -> Result<Self> {
        if !(cfg.kappa > 0.0) || !(cfg.sigma >= 0.0) {
            return Err(OpmError::InvalidArgument("tipping needs kappa > 0 and sigma >= 0".into()));
        }
        let folds = folds(closure.mu, closure.eps)?;
        if cfg.f0 >= folds.f_c2 {
            return Err(OpmError::InvalidArgument(format!("F0 = {} is past the fold F_c2 = {}", cfg.f0, folds.f_c2)));
        }
        let f_max = folds.f_c2 + cfg.f_margin;
        let steps = ((f_max - cfg.f0) / cfg.kappa / dt).round() as usize;
        let start = crate::model::lower_equilibrium(closure.mu, closure.eps, cfg.f0)?;
        Ok(Self {
            folds,
            f0: cfg.f0,
            kappa: cfg.kappa,
            sigma: cfg.sigma,
            dt,
            steps,
            f_max,
            start: [start.y, start.z],
            drift_form: cfg.drift_form,
        })
    }

    pub fn forcing(&self, t: f64) -> f64 {
        self.f0 + self.kappa * t
    }

    fn f_at(&self, k: usize) -> f64 {
        self.forcing(k as f64 * self.dt)
    }

    /// Full, reduced and slow models on the path of `seed`.
    pub fn run(&self, closure: &CessiClosure, y_form: &OriginalCoordinates, seed: u64) -> Result<TippingRun> {
        let noise = NoiseRecord::generate(seed, self.dt, self.steps);
        let thr = self.folds.y_c;
        let forcing = |t: f64| self.forcing(t);

        let mut full = LastCrossing::new(thr);
        simulate_full(closure.mu, closure.eps, forcing, self.sigma, self.start, &noise, |k, y, _| full.push(k, y))?;

        let mut red = LastCrossing::new(thr);
        let reduced = y_form.simulate(self.start[0], self.sigma, forcing, self.drift_form, &noise, |k, y| red.push(k, y));

        let mut slow = LastCrossing::new(thr);
        let slow_end = simulate_slow(closure.mu, forcing, self.sigma, self.start[0], &noise, |k, y| slow.push(k, y));

        let (f_reduced, reduced_error) = match reduced {
            Ok(_) => (red.index().map(|k| self.f_at(k)), None),
            Err(e) if e.is_validity_breach() => (None, Some(e.code().to_string())),
            Err(e) => return Err(e),
        };
        let f_slow = match slow_end {
            Ok(_) => slow.index().map(|k| self.f_at(k)),
            // A blow-up of the crude model counts as no prediction.
            Err(OpmError::Diverged { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(TippingRun {
            seed,
            f_full: full.index().map(|k| self.f_at(k)),
            f_reduced,
            f_slow,
            reduced_error,
            noise_checksum: noise.checksum(),
        })
    }
}

/// Counts over common bins for the full and reduced transition values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramPair {
    pub edges: Vec<f64>,
    pub full: Vec<usize>,
    pub reduced: Vec<usize>,
}

impl HistogramPair {
    pub fn build(full: &[f64], reduced: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 || (full.is_empty() && reduced.is_empty()) {
            return Err(OpmError::TooShort("histogram needs bins and data".into()));
        }
        let all = full.iter().chain(reduced);
        let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = all.cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1e-12;
        }
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
        let count = |v: &[f64]| {
            let mut c = vec![0usize; bins];
            for x in v {
                let i = (((x - lo) / w) as usize).min(bins - 1);
                c[i] += 1;
            }
            c
        };
        Ok(Self { edges, full: count(full), reduced: count(reduced) })
    }

    /// `1 - TV`, the shared mass of the two normalized histograms.
    pub fn overlap(&self) -> f64 {
        let nf = self.full.iter().sum::<usize>().max(1) as f64;
        let nr = self.reduced.iter().sum::<usize>().max(1) as f64;
        self.full.iter().zip(&self.reduced).map(|(a, b)| (*a as f64 / nf).min(*b as f64 / nr)).sum()
    }
}

/// Aggregate outcome of an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TippingSummary {
    pub setup: TippingSetup,
    pub n: usize,
    pub tipped_full: usize,
    pub tipped_reduced: usize,
    pub tipped_slow: usize,
    pub reduced_failures: usize,
    pub histogram: Option<HistogramPair>,
    pub overlap: Option<f64>,
    /// Statistics of `|F_full - F_reduced|` over realizations where both tipped.
    pub median_abs_delta: Option<f64>,
    pub abs_delta_quantiles: Vec<(f64, f64)>,
    pub within: Vec<(f64, f64)>,
    pub mean_full: Option<f64>,
    pub mean_reduced: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TippingEnsemble {
    pub runs: Vec<TippingRun>,
    pub summary: TippingSummary,
}

/// Seed of realization `i`.
pub fn realization_seed(base: u64, i: usize) -> u64 {
    stream_seed(base, "tipping", i as u64)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

pub fn run_tipping_ensemble(closure: &CessiClosure, cfg: &TippingConfig, dt: f64) -> Result<TippingEnsemble> {
    if cfg.n_realizations == 0 {
        return Err(OpmError::InvalidArgument("need at least one realization".into()));
    }
    let setup = TippingSetup::new(cfg, closure, dt)?;
    let y_form = closure.original_coordinates();
    let one = |i: usize| setup.run(closure, &y_form, realization_seed(cfg.seed, i));
    #[cfg(feature = "parallel")]
    let runs: Result<Vec<TippingRun>> = {
        use rayon::prelude::*;
        (0..cfg.n_realizations).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Result<Vec<TippingRun>> = (0..cfg.n_realizations).map(one).collect();
    let runs = runs?;
    let summary = summarize(setup, &runs, cfg.bins)?;
    Ok(TippingEnsemble { runs, summary })
}

pub fn summarize(setup: TippingSetup, runs: &[TippingRun], bins: usize) -> Result<TippingSummary> {
    let full: Vec<f64> = runs.iter().filter_map(|r| r.f_full).collect();
    let reduced: Vec<f64> = runs.iter().filter_map(|r| r.f_reduced).collect();
    let mut delta: Vec<f64> = runs
        .iter()
        .filter_map(|r| Some((r.f_full? - r.f_reduced?).abs()))
        .collect();
    delta.sort_by(f64::total_cmp);
    let histogram = if full.is_empty() || reduced.is_empty() { None } else { Some(HistogramPair::build(&full, &reduced, bins)?) };
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let (quantiles, within) = if delta.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (
            [0.5, 0.9, 0.99].iter().map(|&q| (q, quantile(&delta, q))).collect(),
            [0.001, 0.002, 0.003, 0.005]
                .iter()
                .map(|&d| (d, delta.iter().filter(|&&v| v <= d).count() as f64 / delta.len() as f64))
                .collect(),
        )
    };
    Ok(TippingSummary {
        setup,
        n: runs.len(),
        tipped_full: full.len(),
        tipped_reduced: reduced.len(),
        tipped_slow: runs.iter().filter(|r| r.f_slow.is_some()).count(),
        reduced_failures: runs.iter().filter(|r| r.reduced_error.is_some()).count(),
        overlap: histogram.as_ref().map(|h| h.overlap()),
        histogram,
        median_abs_delta: (!delta.is_empty()).then(|| quantile(&delta, 0.5)),
        abs_delta_quantiles: quantiles,
        within,
        mean_full: mean(&full),
        mean_reduced: mean(&reduced),
    })
}
