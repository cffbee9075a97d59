//! Forecasting period doubling and the onset of chaos in the 9-mode
//! Rayleigh-Benard truncation from data collected before the transition.

use serde::{Deserialize, Serialize};

use crate::defect::{correlation, mode_closure, optimize_tau, select_tau, DefectProfile, SearchConfig, TrainingSet};
use crate::error::{OpmError, Result};
use crate::experiments::diagnostics::{classify_series, energy_fraction, lag_embed, SeriesReport, WelchConfig};
use crate::model::{estimate_mean_state, extrapolate_mean_state, newton_steady_state, rb9d, to_eigen_model, EigenModel};
use crate::param::{build_fmt, build_im, build_opm_const, Parameterization};
use crate::reduce::{assemble_reduced, reconstruct, rk4_real, Trajectory};
use crate::spectral::C64;

/// Which state the training amplitudes are measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingCenter {
    /// The time mean of the training run itself.
    DataMean,
    /// The extrapolated mean at the prediction parameter.
    Extrapolated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RbConfig {
    pub m_c: usize,
    pub r_d: f64,
    pub r_p: f64,
    /// Width of the window `[r_d - width, r_d]` of mean-state samples.
    pub interval_width: f64,
    pub mean_samples: usize,
    pub prandtl: f64,
    pub aspect: f64,
    pub dt: f64,
    pub transient: f64,
    pub window: f64,
    pub training_length: f64,
    /// Keep every `training_stride`-th training sample.
    pub training_stride: usize,
    pub center: TrainingCenter,
    pub search: SearchConfig,
    /// Skip the search and use these horizons (one per unresolved mode).
    #[serde(with = "crate::param::horizon::option_vec")]
    pub taus: Option<Vec<f64>>,
    pub predict_transient: f64,
    pub predict_length: f64,
    pub welch_segment: usize,
    /// Physical component (0-based) used for the regime classification.
    pub component: usize,
    pub initial: Vec<f64>,
    pub lag: usize,
    pub embed_dim: usize,
}

impl Default for RbConfig {
    fn default() -> Self {
        Self {
            m_c: 3,
            r_d: 13.91,
            r_p: 14.0,
            interval_width: 0.02,
            mean_samples: 5,
            prandtl: rb9d::PRANDTL,
            aspect: rb9d::ASPECT,
            dt: 5e-3,
            transient: 500.0,
            window: 2000.0,
            training_length: 500.0,
            training_stride: 2,
            center: TrainingCenter::DataMean,
            search: SearchConfig::default(),
            taus: None,
            predict_transient: 1000.0,
            predict_length: 2000.0,
            welch_segment: 32768,
            component: 2,
            initial: vec![0.1, 0.05, -0.02, 0.03, 0.01, 0.0, 0.2, -0.1, 0.05],
            lag: 50,
            embed_dim: 3,
        }
    }
}

impl RbConfig {
    pub fn experiment_one() -> Self {
        Self::default()
    }

    pub fn experiment_two() -> Self {
        Self { m_c: 5, r_d: 14.10, r_p: 14.22, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_p < self.r_d {
            return Err(OpmError::InvalidArgument(format!("r_p = {} lies below r_d = {}", self.r_p, self.r_d)));
        }
        if self.m_c == 0 || self.m_c >= 9 {
            return Err(OpmError::InvalidArgument(format!("m_c must lie in 1..9, got {}", self.m_c)));
        }
        if self.initial.len() != 9 {
            return Err(OpmError::DimensionMismatch { expected: 9, got: self.initial.len() });
        }
        if self.mean_samples < 2 {
            return Err(OpmError::InsufficientSamples { needed: 2, got: self.mean_samples });
        }
        if !(self.dt > 0.0) || self.component >= 9 {
            return Err(OpmError::InvalidArgument("need dt > 0 and a component in 0..9".into()));
        }
        Ok(())
    }

    fn model(&self, r: f64) -> crate::model::QuadraticModel {
        rb9d::model_with(r, self.prandtl, self.aspect)
    }

    fn welch(&self) -> WelchConfig {
        WelchConfig { segment: self.welch_segment }
    }
}

/// Full-model data access that refuses any parameter beyond the training
/// bound, so that nothing past the transition leaks into the closure.
#[derive(Debug, Clone)]
pub struct TrainingLoader<'a> {
    cfg: &'a RbConfig,
    bound: f64,
}

impl<'a> TrainingLoader<'a> {
    pub fn new(cfg: &'a RbConfig) -> Self {
        Self { cfg, bound: cfg.r_d }
    }

    fn check(&self, r: f64) -> Result<()> {
        if r > self.bound + 1e-12 {
            return Err(OpmError::LookAhead { requested: r, bound: self.bound });
        }
        Ok(())
    }

    /// Mean state at `r`, continuing from `x0`.
    pub fn mean_state(&self, r: f64, x0: &[f64]) -> Result<crate::model::MeanState> {
        self.check(r)?;
        estimate_mean_state(&self.cfg.model(r), x0, self.cfg.transient, self.cfg.window, self.cfg.dt)
    }

    /// Full-model trajectory of `length` time units at `r` from `x0`.
    pub fn trajectory(&self, r: f64, x0: &[f64], length: f64, stride: usize) -> Result<Trajectory> {
        self.check(r)?;
        full_trajectory(&self.cfg.model(r), x0, self.cfg.dt, length, stride)
    }
}

fn full_trajectory(model: &crate::model::QuadraticModel, x0: &[f64], dt: f64, length: f64, stride: usize) -> Result<Trajectory> {
    let steps = (length / dt).round() as usize;
    crate::reduce::integrate_rk4(|_, x, o| model.rhs_into(x, o), x0, 0.0, dt, steps, stride)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Mean-state samples over the training interval and their extrapolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extrapolation {
    pub samples: Vec<(f64, Vec<f64>)>,
    pub extrapolated: Vec<f64>,
    /// State at the end of the last sample run (at `r_d`).
    pub last_state: Vec<f64>,
}

pub fn extrapolate(cfg: &RbConfig) -> Result<Extrapolation> {
    cfg.validate()?;
    let loader = TrainingLoader::new(cfg);
    let r0 = cfg.r_d - cfg.interval_width;
    let mut x = cfg.initial.clone();
    let mut samples = Vec::with_capacity(cfg.mean_samples);
    for i in 0..cfg.mean_samples {
        let r = if cfg.mean_samples == 1 {
            cfg.r_d
        } else {
            r0 + cfg.interval_width * i as f64 / (cfg.mean_samples - 1) as f64
        };
        let m = loader.mean_state(r, &x)?;
        x = m.last.clone();
        samples.push((r, m.mean));
    }
    let extrapolated = extrapolate_mean_state(&samples, cfg.r_p)?;
    Ok(Extrapolation { samples, extrapolated, last_state: x })
}

/// Relative error of the extrapolated mean against a directly estimated one.
pub fn extrapolation_error(cfg: &RbConfig, ext: &Extrapolation) -> Result<(f64, Vec<f64>)> {
    let truth = estimate_mean_state(&cfg.model(cfg.r_p), &ext.last_state, cfg.transient, cfg.window, cfg.dt)?.mean;
    let diff: Vec<f64> = ext.extrapolated.iter().zip(&truth).map(|(a, b)| a - b).collect();
    Ok((norm(&diff) / norm(&truth), truth))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeChoice {
    pub mode: usize,
    pub profile: DefectProfile,
    #[serde(with = "crate::param::horizon")]
    pub tau: f64,
    /// Mean correlation at each reported minimum, in the profile's order.
    pub correlations: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Training {
    pub choices: Vec<ModeChoice>,
    #[serde(with = "crate::param::horizon::vec")]
    pub taus: Vec<f64>,
    pub training_mean: Vec<f64>,
    /// Final state of the training run, seeding the prediction.
    pub last_state: Vec<f64>,
}

/// Surrogate eigen model at `r_p` about the extrapolated mean.
pub fn surrogate(cfg: &RbConfig, ext: &Extrapolation) -> Result<EigenModel> {
    let eigen = to_eigen_model(&cfg.model(cfg.r_p), &ext.extrapolated)?;
    if eigen.basis.splits_pair(cfg.m_c) {
        return Err(OpmError::InvalidArgument(format!("m_c = {} splits a conjugate pair", cfg.m_c)));
    }
    Ok(eigen)
}

fn training_set(eigen: &EigenModel, traj: &Trajectory, center: &[f64]) -> TrainingSet {
    let samples = (0..traj.len())
        .map(|k| {
            let d: Vec<f64> = traj.row(k).iter().zip(center).map(|(a, b)| a - b).collect();
            eigen.basis.project(&d)
        })
        .collect();
    TrainingSet::deterministic(traj.dt, samples)
}

/// Optimize the horizon of every unresolved mode on training data at `r_d`
/// with coefficients taken from the surrogate spectrum.
pub fn train(cfg: &RbConfig, ext: &Extrapolation, eigen: &EigenModel) -> Result<Training> {
    let loader = TrainingLoader::new(cfg);
    let traj = loader.trajectory(cfg.r_d, &ext.last_state, cfg.training_length, cfg.training_stride)?;
    let n = eigen.dim();
    let data_mean: Vec<f64> = (0..n).map(|i| traj.component(i).iter().sum::<f64>() / traj.len() as f64).collect();
    let center = match cfg.center {
        TrainingCenter::DataMean => data_mean.clone(),
        TrainingCenter::Extrapolated => ext.extrapolated.clone(),
    };
    let data = training_set(eigen, &traj, &center);
    let last_state = traj.last().map(|r| r.to_vec()).unwrap_or_else(|| ext.last_state.clone());
    if let Some(t) = &cfg.taus {
        if t.len() != n - cfg.m_c {
            return Err(OpmError::DimensionMismatch { expected: n - cfg.m_c, got: t.len() });
        }
        return Ok(Training { choices: vec![], taus: t.clone(), training_mean: data_mean, last_state });
    }
    let mut taus = vec![0.0; n - cfg.m_c];
    let mut choices = Vec::new();
    for mode in cfg.m_c..n {
        // Conjugate partners share the profile of their first member.
        if let crate::spectral::Pairing::Conjugate(p) = eigen.basis.pairing[mode] {
            if p < mode {
                taus[mode - cfg.m_c] = taus[p - cfg.m_c];
                continue;
            }
        }
        let profile = optimize_tau(&data, eigen, cfg.m_c, mode, &cfg.search)?;
        let partner = match eigen.basis.pairing[mode] {
            crate::spectral::Pairing::Conjugate(p) => Some(p),
            crate::spectral::Pairing::Real => None,
        };
        let mut correlations = Vec::new();
        for m in &profile.minima {
            correlations.push(mode_correlation(&data, eigen, cfg.m_c, mode, partner, m.tau).unwrap_or(f64::NAN));
        }
        let lookup: Vec<(f64, f64)> = profile.minima.iter().map(|m| m.tau).zip(correlations.iter().cloned()).collect();
        let tau = select_tau(&profile, |t| lookup.iter().find(|(a, _)| *a == t).map(|(_, c)| *c).filter(|c| c.is_finite()));
        taus[mode - cfg.m_c] = tau;
        choices.push(ModeChoice { mode, profile, tau, correlations });
    }
    Ok(Training { choices, taus, training_mean: data_mean, last_state })
}

fn mode_correlation(
    data: &TrainingSet,
    eigen: &EigenModel,
    m_c: usize,
    mode: usize,
    partner: Option<usize>,
    tau: f64,
) -> Result<f64> {
    let mut closures = vec![mode_closure(eigen, m_c, mode, tau, false)?];
    if let Some(p) = partner {
        closures.push(mode_closure(eigen, m_c, p, tau, false)?);
    }
    Ok(correlation(data, &closures, m_c)?.1)
}

/// Physical run plus its diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub report: SeriesReport,
    pub mean: Vec<f64>,
    /// Share of the fluctuation variance per eigen mode of the reference basis.
    pub energy_fractions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub physical: Trajectory,
    pub summary: RunReport,
}

fn analyse(cfg: &RbConfig, physical: Trajectory, eigen: &EigenModel) -> Result<RunOutput> {
    let series = physical.component(cfg.component);
    let report = classify_series(&series, physical.dt, &cfg.welch())?;
    let n = physical.dim;
    let mean: Vec<f64> = (0..n).map(|i| physical.component(i).iter().sum::<f64>() / physical.len() as f64).collect();
    // Real and imaginary parts as separate columns: the variance of a
    // complex amplitude is the sum of the two.
    let mut columns = vec![Vec::with_capacity(physical.len()); 2 * n];
    for k in 0..physical.len() {
        for (j, v) in eigen.to_eigen(physical.row(k)).iter().enumerate() {
            columns[2 * j].push(v.re);
            columns[2 * j + 1].push(v.im);
        }
    }
    let energy_fractions = (0..n)
        .map(|j| Ok(energy_fraction(&columns, 2 * j)? + energy_fraction(&columns, 2 * j + 1)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput { physical, summary: RunReport { report, mean, energy_fractions } })
}

/// Full model at `r`, continuing from `x0`.
pub fn run_full(cfg: &RbConfig, r: f64, x0: &[f64], eigen: &EigenModel) -> Result<RunOutput> {
    let model = cfg.model(r);
    let warm_steps = (cfg.predict_transient / cfg.dt).round() as usize;
    let start = rk4_real(|_, x, o| model.rhs_into(x, o), x0, 0.0, cfg.dt, warm_steps, |_, _, _| {})?;
    let traj = full_trajectory(&model, &start, cfg.dt, cfg.predict_length, 1)?;
    analyse(cfg, traj, eigen)
}

/// Reduced model closed by `param`, started from the resolved part of `x0`.
pub fn run_reduced(cfg: &RbConfig, eigen: &EigenModel, param: &Parameterization, x0: &[f64]) -> Result<RunOutput> {
    let sys = assemble_reduced(eigen, param.m_c, Some(param))?;
    let y0 = eigen.to_eigen(x0);
    let mut x: Vec<C64> = y0[..param.m_c].to_vec();
    let warm_steps = (cfg.predict_transient / cfg.dt).round() as usize;
    let warm = sys.integrate(&x, 0.0, cfg.dt, warm_steps, warm_steps.max(1))?;
    if let Some(last) = warm.last() {
        x = last.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
    }
    let steps = (cfg.predict_length / cfg.dt).round() as usize;
    let reduced = sys.integrate(&x, 0.0, cfg.dt, steps, 1)?;
    let physical = reconstruct(&reduced, eigen, Some(param))?;
    analyse(cfg, physical, eigen)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionReport {
    pub m_c: usize,
    pub r_d: f64,
    pub r_p: f64,
    pub extrapolated_mean: Vec<f64>,
    pub true_mean: Option<Vec<f64>>,
    pub extrapolation_error: Option<f64>,
    pub lambdas: Vec<(f64, f64)>,
    #[serde(with = "crate::param::horizon::vec")]
    pub taus: Vec<f64>,
    pub choices: Vec<ModeChoice>,
    pub reduced: RunReport,
    pub full_at_p: Option<RunReport>,
    pub full_at_d: Option<RunReport>,
}

#[derive(Debug, Clone)]
pub struct TransitionOutput {
    pub report: TransitionReport,
    pub reduced: Trajectory,
    pub full_at_p: Option<Trajectory>,
    pub param: Parameterization,
}

/// Steps 1 to 4: extrapolate the mean, build the surrogate spectrum, train
/// the horizons at `r_d`, integrate the closed reduced model at `r_p`.
/// With `validate` set, the full model is also run at `r_d` and `r_p` for
/// comparison; those runs never feed the closure.
pub fn predict_transition(cfg: &RbConfig, validate: bool) -> Result<TransitionOutput> {
    let ext = extrapolate(cfg)?;
    let eigen = surrogate(cfg, &ext)?;
    let training = train(cfg, &ext, &eigen)?;
    let param = build_opm_const(&eigen, cfg.m_c, &training.taus)?;
    let reduced = run_reduced(cfg, &eigen, &param, &training.last_state)?;
    let (mut full_p, mut full_d, mut truth, mut err) = (None, None, None, None);
    let mut full_traj = None;
    if validate {
        let (e, t) = extrapolation_error(cfg, &ext)?;
        err = Some(e);
        truth = Some(t);
        let fp = run_full(cfg, cfg.r_p, &training.last_state, &eigen)?;
        let fd = run_full(cfg, cfg.r_d, &training.last_state, &eigen)?;
        full_p = Some(fp.summary);
        full_d = Some(fd.summary);
        full_traj = Some(fp.physical);
    }
    let report = TransitionReport {
        m_c: cfg.m_c,
        r_d: cfg.r_d,
        r_p: cfg.r_p,
        extrapolated_mean: ext.extrapolated.clone(),
        true_mean: truth,
        extrapolation_error: err,
        lambdas: eigen.lambdas().iter().map(|l| (l.re, l.im)).collect(),
        taus: training.taus.clone(),
        choices: training.choices,
        reduced: reduced.summary,
        full_at_p: full_p,
        full_at_d: full_d,
    };
    Ok(TransitionOutput { report, reduced: reduced.physical, full_at_p: full_traj, param })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    SteadyState,
    MeanState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineReport {
    pub reference: Reference,
    pub reference_state: Vec<f64>,
    pub im: std::result::Result<RunReport, String>,
    pub fmt: std::result::Result<RunReport, String>,
    /// Energy share of each unresolved mode in the full run, about this reference.
    pub unresolved_energy: Vec<f64>,
}

/// Invariant-manifold and FMT closures about a steady state near the mean,
/// or about the mean itself, integrated at `r_p`.
pub fn baselines(cfg: &RbConfig, reference: Reference) -> Result<BaselineReport> {
    cfg.validate()?;
    let model = cfg.model(cfg.r_p);
    let mean = estimate_mean_state(&model, &cfg.initial, cfg.transient, cfg.window, cfg.dt)?;
    let state = match reference {
        Reference::MeanState => mean.mean.clone(),
        Reference::SteadyState => newton_steady_state(&model, &mean.mean)?,
    };
    let eigen = to_eigen_model(&model, &state)?;
    if eigen.basis.splits_pair(cfg.m_c) {
        return Err(OpmError::InvalidArgument(format!("m_c = {} splits a conjugate pair", cfg.m_c)));
    }
    let full = run_full(cfg, cfg.r_p, &mean.last, &eigen)?;
    let unresolved_energy = full.summary.energy_fractions[cfg.m_c..].to_vec();
    let attempt = |p: Result<Parameterization>| -> std::result::Result<RunReport, String> {
        let p = p.map_err(|e| e.to_string())?;
        run_reduced(cfg, &eigen, &p, &mean.last).map(|o| o.summary).map_err(|e| e.to_string())
    };
    Ok(BaselineReport {
        reference,
        reference_state: state,
        im: attempt(build_im(&eigen, cfg.m_c)),
        fmt: attempt(build_fmt(&eigen, cfg.m_c)),
        unresolved_energy,
    })
}

/// Delay embedding of a physical component, for plotting attractors.
pub fn embedding(cfg: &RbConfig, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    lag_embed(&traj.component(cfg.component), cfg.lag, cfg.embed_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loader_refuses_look_ahead() {
        let cfg = RbConfig::experiment_one();
        let loader = TrainingLoader::new(&cfg);
        let err = loader.mean_state(cfg.r_p, &cfg.initial).unwrap_err();
        assert!(matches!(err, OpmError::LookAhead { .. }));
        let err = loader.trajectory(13.92, &cfg.initial, 1.0, 1).unwrap_err();
        assert!(matches!(err, OpmError::LookAhead { .. }));
    }
}
