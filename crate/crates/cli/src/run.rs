//! Experiment drivers: each runs one pipeline and fills a result directory.

use opm_core::experiments::cessi::{
    cessi_opm_pipeline, folds, realization_seed, run_tipping_ensemble, simulate_full, simulate_slow, validate_closure,
    CessiClosure, TippingSetup,
};
use opm_core::experiments::diagnostics::{psd, WelchConfig};
use opm_core::experiments::output::ResultDir;
use opm_core::experiments::rb::{self, baselines, predict_transition};
use opm_core::model::{cessi, cessi_steady_branch, lower_equilibrium, rb9d, to_eigen_model};
use opm_core::reduce::{Coordinates, NoiseRecord, Trajectory};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentKind, ModelName, RunConfig};
use crate::error::CliError;

type Outcome = Result<Map<String, Value>, CliError>;

/// Dispatch on the experiment kind. The returned map becomes summary.json.
pub fn execute(cfg: &RunConfig, out: &ResultDir) -> Outcome {
    match cfg.kind {
        ExperimentKind::CessiClosure => cessi_closure(cfg, out),
        ExperimentKind::CessiTipping => cessi_tipping(cfg, out),
        ExperimentKind::RbPredict => rb_predict(cfg, out),
        ExperimentKind::RbBaseline => rb_baseline(cfg),
        ExperimentKind::DefectScan => defect_scan(cfg, out),
        ExperimentKind::ModelInfo => model_info(cfg, out),
    }
}

fn value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Run(e.into()))
}

fn closure_summary(c: &CessiClosure, m: &mut Map<String, Value>) -> Result<(), CliError> {
    m.insert("tau".into(), opm_core::param::tau_json(c.tau));
    m.insert("closure".into(), value(&c.scalars())?);
    m.insert("reference_state".into(), json!({ "y": c.equilibrium.y, "z": c.equilibrium.z }));
    if let Some(p) = &c.profile {
        m.insert("defect_at_zero".into(), json!(p.values.first()));
        m.insert("defect_minima".into(), value(&p.minima)?);
        m.insert("defect_non_increasing".into(), json!(p.is_non_increasing(1e-12)));
    }
    Ok(())
}

fn cessi_closure(cfg: &RunConfig, out: &ResultDir) -> Outcome {
    let c = cfg.cessi()?;
    let stride = cfg.output()?.stride;
    let closure = cessi_opm_pipeline(&c)?;
    if let Some(p) = &closure.profile {
        out.defect_profiles([p])?;
    }
    let mut traj = Trajectory::new(2, 0.0, c.dt * stride as f64, Coordinates::Physical);
    let validation = validate_closure(&closure, &c, stride, |_, yf, yr| traj.push(&[yf, yr]))?;
    let file = out.trajectory("validation_y_full_reduced", &traj)?;
    let mut m = Map::new();
    closure_summary(&closure, &mut m)?;
    m.insert("folds".into(), value(&folds(c.mu, c.eps)?)?);
    m.insert("validation".into(), value(&validation)?);
    m.insert(
        "occupancy_relative_gap".into(),
        json!((validation.upper_occupancy_reduced - validation.upper_occupancy_full).abs()
            / validation.upper_occupancy_full.max(f64::MIN_POSITIVE)),
    );
    m.insert("trajectory".into(), json!(file));
    Ok(m)
}

/// `y` of the full, reduced and slow models along the path of realization 0.
fn sample_paths(closure: &CessiClosure, setup: &TippingSetup, seed: u64, stride: usize) -> Result<Trajectory, CliError> {
    let noise = NoiseRecord::generate(realization_seed(seed, 0), setup.dt, setup.steps);
    let forcing = |t: f64| setup.forcing(t);
    let rows = setup.steps + 1;
    let (mut full, mut red, mut slow) = (vec![f64::NAN; rows], vec![f64::NAN; rows], vec![f64::NAN; rows]);
    simulate_full(closure.mu, closure.eps, forcing, setup.sigma, setup.start, &noise, |k, y, _| full[k] = y)?;
    let y_form = closure.original_coordinates();
    // A validity breach ends the reduced path; the rest stays NaN.
    let _ = y_form.simulate(setup.start[0], setup.sigma, forcing, setup.drift_form, &noise, |k, y| red[k] = y);
    let _ = simulate_slow(closure.mu, forcing, setup.sigma, setup.start[0], &noise, |k, y| slow[k] = y);
    let mut traj = Trajectory::new(4, 0.0, setup.dt * stride as f64, Coordinates::Physical);
    for k in (0..rows).step_by(stride) {
        traj.push(&[setup.forcing(k as f64 * setup.dt), full[k], red[k], slow[k]]);
    }
    Ok(traj)
}

fn cessi_tipping(cfg: &RunConfig, out: &ResultDir) -> Outcome {
    let c = cfg.cessi()?;
    let t = cfg.tipping()?;
    let stride = cfg.output()?.stride;
    let closure = cessi_opm_pipeline(&c)?;
    let ens = run_tipping_ensemble(&closure, &t, c.dt)?;
    out.transitions(&ens.runs)?;
    let paths = sample_paths(&closure, &ens.summary.setup, t.seed, stride * 10)?;
    let file = out.trajectory("tipping_f_full_reduced_slow", &paths)?;
    let mut m = Map::new();
    closure_summary(&closure, &mut m)?;
    let s = &ens.summary;
    m.insert("ensemble".into(), value(s)?);
    m.insert("slow_tip_fraction".into(), json!(s.tipped_slow as f64 / s.n as f64));
    let mut sums: Vec<u64> = ens.runs.iter().map(|r| r.noise_checksum).collect();
    sums.sort_unstable();
    let combined = sums.iter().fold(0u64, |a, &b| a.rotate_left(5) ^ b);
    m.insert("noise_checksum".into(), json!(combined.to_string()));
    m.insert("trajectory".into(), json!(file));
    Ok(m)
}

/// A run report with its regime label under `classifier`.
fn run_json(r: &rb::RunReport) -> Value {
    let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("classifier".into(), json!(r.report.regime.label()));
    }
    v
}

fn thin(traj: &Trajectory, stride: usize) -> Trajectory {
    let mut t = Trajectory::new(traj.dim, traj.t0, traj.dt * stride as f64, traj.coords);
    for k in (0..traj.len()).step_by(stride) {
        t.push(traj.row(k));
    }
    t
}

fn rb_predict(cfg: &RunConfig, out: &ResultDir) -> Outcome {
    let rc = cfg.rb()?;
    let stride = cfg.output()?.stride;
    let result = predict_transition(&rc, cfg.validate_full()?)?;
    let rep = &result.report;
    out.defect_profiles(rep.choices.iter().map(|c| &c.profile))?;
    let welch = WelchConfig { segment: rc.welch_segment };
    let mut runs = vec![("reduced", &result.reduced)];
    if let Some(f) = &result.full_at_p {
        runs.push(("full_p", f));
    }
    let mut files = Map::new();
    for (label, traj) in runs {
        out.psd(label, &psd(&traj.component(rc.component), traj.dt, &welch)?)?;
        files.insert(label.into(), json!(out.trajectory(label, &thin(traj, stride))?));
        let cloud = rb::embedding(&rc, traj)?;
        let rows: Vec<Vec<f64>> = cloud.into_iter().step_by(stride).collect();
        let header: Vec<String> = (0..rc.embed_dim).map(|d| format!("lag{d}")).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.table(&format!("embedding_{label}.csv"), &header, &rows)?;
    }
    let mut m = Map::new();
    m.insert("m_c".into(), json!(rep.m_c));
    m.insert("r_d".into(), json!(rep.r_d));
    m.insert("r_p".into(), json!(rep.r_p));
    m.insert("extrapolated_mean".into(), json!(rep.extrapolated_mean));
    m.insert("extrapolation_error".into(), json!(rep.extrapolation_error));
    m.insert("lambdas".into(), json!(rep.lambdas));
    m.insert("taus".into(), Value::Array(rep.taus.iter().map(|t| opm_core::param::tau_json(*t)).collect()));
    m.insert(
        "minima".into(),
        Value::Array(
            rep.choices
                .iter()
                .map(|c| {
                    json!({
                        "mode": c.mode,
                        "minima": value(&c.profile.minima).unwrap_or(Value::Null),
                        "correlations": c.correlations,
                        "selected_tau": opm_core::param::tau_json(c.tau),
                    })
                })
                .collect(),
        ),
    );
    m.insert("reduced".into(), run_json(&rep.reduced));
    if let Some(f) = &rep.full_at_p {
        m.insert("full_at_p".into(), run_json(f));
    }
    if let Some(f) = &rep.full_at_d {
        m.insert("full_at_d".into(), run_json(f));
    }
    m.insert("trajectories".into(), Value::Object(files));
    Ok(m)
}

fn rb_baseline(cfg: &RunConfig) -> Outcome {
    let rc = cfg.rb()?;
    let mut m = Map::new();
    m.insert("m_c".into(), json!(rc.m_c));
    m.insert("r_p".into(), json!(rc.r_p));
    for reference in cfg.references()? {
        let b = baselines(&rc, reference)?;
        let side = |r: &Result<rb::RunReport, String>| match r {
            Ok(r) => run_json(r),
            Err(e) => json!({ "error": e }),
        };
        m.insert(
            value(&reference)?.as_str().unwrap_or("reference").to_string(),
            json!({
                "reference_state": b.reference_state,
                "im": side(&b.im),
                "fmt": side(&b.fmt),
                "unresolved_energy": b.unresolved_energy,
            }),
        );
    }
    Ok(m)
}

fn defect_scan(cfg: &RunConfig, out: &ResultDir) -> Outcome {
    let mut m = Map::new();
    match cfg.model()? {
        ModelName::Cessi => {
            let mut c = cfg.cessi()?;
            c.tau = None;
            let closure = cessi_opm_pipeline(&c)?;
            if let Some(p) = &closure.profile {
                out.defect_profiles([p])?;
            }
            closure_summary(&closure, &mut m)?;
        }
        ModelName::Rb9d => {
            let mut rc = cfg.rb()?;
            rc.taus = None;
            let ext = rb::extrapolate(&rc)?;
            let eigen = rb::surrogate(&rc, &ext)?;
            let training = rb::train(&rc, &ext, &eigen)?;
            out.defect_profiles(training.choices.iter().map(|c| &c.profile))?;
            m.insert("r_d".into(), json!(rc.r_d));
            m.insert("r_p".into(), json!(rc.r_p));
            m.insert("taus".into(), Value::Array(training.taus.iter().map(|t| opm_core::param::tau_json(*t)).collect()));
            m.insert("choices".into(), value(&training.choices)?);
        }
    }
    m.insert("model".into(), value(&cfg.model()?)?);
    Ok(m)
}

fn model_info(cfg: &RunConfig, out: &ResultDir) -> Outcome {
    let info = cfg.model_info()?;
    let mut m = Map::new();
    m.insert("model".into(), value(&info.model)?);
    match info.model {
        ModelName::Cessi => {
            let c = cfg.cessi()?;
            let fl = folds(c.mu, c.eps)?;
            let eq = lower_equilibrium(c.mu, c.eps, c.f_ref)?;
            let e = to_eigen_model(&cessi::model(c.mu, c.eps, c.f_ref, c.sigma), &[eq.y, eq.z])?;
            let grid: Vec<f64> = (0..=60).map(|i| 0.80 + 0.0025 * i as f64).collect();
            let table = cessi_steady_branch(c.mu, c.eps, &grid)?;
            let rows: Vec<Vec<f64>> =
                table.curve.iter().map(|p| vec![p.f, p.y, p.z, if p.stable { 1.0 } else { 0.0 }]).collect();
            out.table("branch.csv", &["f", "y", "z", "stable"], &rows)?;
            m.insert("folds".into(), value(&fl)?);
            m.insert("lower_state".into(), json!({ "f": c.f_ref, "y": eq.y, "z": eq.z }));
            m.insert("lambdas".into(), json!(e.lambdas().iter().map(|l| (l.re, l.im)).collect::<Vec<_>>()));
            m.insert(
                "noise_loadings".into(),
                json!(e.noise.as_ref().map(|v| v.iter().map(|s| s.re).collect::<Vec<_>>())),
            );
        }
        ModelName::Rb9d => {
            let rc = cfg.rb()?;
            let model = rb9d::model_with(info.r, rc.prandtl, rc.aspect);
            let e = to_eigen_model(&model, &[0.0; 9])?;
            m.insert("r".into(), json!(info.r));
            m.insert("b".into(), json!(rb9d::b_coefficients(rc.aspect)));
            m.insert(
                "lambdas_at_rest".into(),
                json!(e.lambdas().iter().map(|l| (l.re, l.im)).collect::<Vec<_>>()),
            );
        }
    }
    Ok(m)
}
