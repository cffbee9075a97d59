//! Acceptance run: one PASS/FAIL line per criterion, then a nonzero exit if
//! any failed. Built with `harness = false` so the lines always show.

use std::time::Instant;

use opm_core::experiments::cessi::{
    cessi_opm_pipeline, folds, run_tipping_ensemble, CessiConfig, TippingConfig,
};
use opm_core::experiments::diagnostics::Regime;
use opm_core::experiments::output::ResultDir;
use opm_core::experiments::rb::{baselines, predict_transition, RbConfig, Reference, TransitionOutput};
use opm_core::model::{cessi, lower_equilibrium, rb9d, to_eigen_model};
use opm_core::reduce::{assemble_reduced, rk4_real};
use opm_core::verify;
use opm_core::C64;

struct Line {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn report(id: u32, name: &'static str, start: Instant, f: impl FnOnce() -> Result<(bool, String), String>) -> Line {
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    let line = Line { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() };
    println!(
        "criterion {:>2} {}  {}: {} ({:.1} s)",
        line.id,
        if line.passed { "PASS" } else { "FAIL" },
        line.name,
        line.detail,
        line.seconds
    );
    line
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn folds_line() -> Line {
    let t = Instant::now();
    report(1, "box-model saddle-nodes", t, || {
        let f = folds(cessi::MU, cessi::EPS).map_err(e)?;
        let ok = (f.f_c1 - 0.8513).abs() <= 1e-3 && (f.f_c2 - 0.8821).abs() <= 1e-3 && t.elapsed().as_secs_f64() < 1.0;
        Ok((ok, format!("F_c1 = {:.5}, F_c2 = {:.5} (targets 0.8513, 0.8821, tol 1e-3)", f.f_c1, f.f_c2)))
    })
}

fn spectrum_line() -> Line {
    let t = Instant::now();
    report(2, "box-model spectrum at F = 0.855", t, || {
        let eq = lower_equilibrium(cessi::MU, cessi::EPS, cessi::F_REF).map_err(e)?;
        let m = cessi::model(cessi::MU, cessi::EPS, cessi::F_REF, 0.0);
        let ev = to_eigen_model(&m, &[eq.y, eq.z]).map_err(e)?;
        let l = ev.lambdas();
        let ok = (l[0].re + 0.5168).abs() <= 1e-3
            && (l[1].re + 15.7650).abs() <= 1e-3
            && l[0].im == 0.0
            && l[1].im == 0.0
            && t.elapsed().as_secs_f64() < 1.0;
        Ok((ok, format!("lambda = ({:.5}, {:.5}) (targets -0.5168, -15.7650, tol 1e-3)", l[0].re, l[1].re)))
    })
}

fn defect_line() -> Line {
    let t = Instant::now();
    report(3, "box-model defect profile", t, || {
        let c = cessi_opm_pipeline(&CessiConfig::default()).map_err(e)?;
        let p = c.profile.as_ref().ok_or("no profile")?;
        let q0 = p.values[0];
        let rise = p.values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let ok = p.taus[0] == 0.0
            && q0 == 1.0
            && p.is_non_increasing(1e-12)
            && c.tau == f64::INFINITY
            && t.elapsed().as_secs_f64() < 60.0;
        Ok((ok, format!("Q(0) = {q0}, largest rise {rise:.2e}, tau* = {}, Q(tau*) = {:.5}", c.tau, p.values.last().unwrap())))
    })
}

fn tipping_line() -> Line {
    let t = Instant::now();
    report(4, "tipping ensemble, n = 2000", t, || {
        let c = cessi_opm_pipeline(&CessiConfig::default()).map_err(e)?;
        let cfg = TippingConfig::default();
        let ens = run_tipping_ensemble(&c, &cfg, CessiConfig::default().dt).map_err(e)?;
        let s = &ens.summary;
        let overlap = s.overlap.unwrap_or(0.0);
        let median = s.median_abs_delta.unwrap_or(f64::INFINITY);
        let slow = s.tipped_slow as f64 / s.n as f64;
        let ok = s.n == 2000 && overlap >= 0.8 && median <= 0.003 && slow < 0.05 && t.elapsed().as_secs_f64() < 1800.0;
        Ok((
            ok,
            format!(
                "overlap {overlap:.4} (>= 0.8), median |dF| {median:.2e} (<= 3e-3), slow tips {:.1}% (< 5%), tipped full/reduced {}/{}",
                100.0 * slow,
                s.tipped_full,
                s.tipped_reduced
            ),
        ))
    })
}

fn run_experiment(cfg: &RbConfig) -> Result<TransitionOutput, String> {
    predict_transition(cfg, true).map_err(e)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn extrapolation_line(one: &Result<TransitionOutput, String>, two: &Result<TransitionOutput, String>, secs: f64) -> Line {
    let t = Instant::now();
    let mut line = report(5, "mean-state extrapolation", t, || {
        let (a, b) = (one.as_ref()?, two.as_ref()?);
        let ea = a.report.extrapolation_error.ok_or("no truth at r_p = 14")?;
        let eb = b.report.extrapolation_error.ok_or("no truth at r_p = 14.22")?;
        let norm_gap = |o: &TransitionOutput| {
            let truth = o.report.true_mean.as_ref().map(|v| norm(v)).unwrap_or(f64::NAN);
            (norm(&o.report.extrapolated_mean) - truth).abs() / truth
        };
        Ok((
            ea <= 1.5e-3 && eb <= 1e-2 && secs < 600.0,
            format!(
                "relative error {:.3}% at r = 14 (<= 0.15%), {:.3}% at r = 14.22 (<= 1%); norm-only gaps {:.3}%, {:.3}%",
                100.0 * ea,
                100.0 * eb,
                100.0 * norm_gap(a),
                100.0 * norm_gap(b)
            ),
        ))
    });
    line.seconds = secs;
    line
}

fn experiment_one_line(one: &Result<TransitionOutput, String>, secs: f64) -> Line {
    let t = Instant::now();
    let mut line = report(6, "period doubling at r = 14 (m_c = 3)", t, || {
        let r = &one.as_ref()?.report;
        let reduced = r.reduced.report.regime;
        let at_d = r.full_at_d.as_ref().ok_or("no full run at r_d")?.report.regime;
        let at_p = r.full_at_p.as_ref().ok_or("no full run at r_p")?.report.regime;
        Ok((
            reduced == Regime::Subharmonic && at_d == Regime::Periodic && secs < 900.0,
            format!(
                "reduced at 14: {}; full at 13.91: {}; full at 14: {}",
                reduced.label(),
                at_d.label(),
                at_p.label()
            ),
        ))
    });
    line.seconds = secs;
    line
}

fn experiment_two_line(two: &Result<TransitionOutput, String>, secs: f64) -> Line {
    let t = Instant::now();
    let mut line = report(7, "onset of chaos at r = 14.22 (m_c = 5)", t, || {
        let r = &two.as_ref()?.report;
        let reduced = &r.reduced.report;
        let full = &r.full_at_p.as_ref().ok_or("no full run at r_p")?.report;
        let choice = r.choices.iter().find(|c| c.mode == 5).ok_or("no profile for mode 6")?;
        let mins = &choice.profile.minima;
        let in_window = |lo: f64, hi: f64| {
            mins.iter().find(|m| m.tau >= lo && m.tau <= hi && (0.10..=0.25).contains(&m.value))
        };
        let (near, far) = (in_window(0.3, 1.1), in_window(1.4, 2.3));
        let selected_far = far.is_some_and(|f| (choice.tau - f.tau).abs() < 1e-9);
        let ok = reduced.regime == Regime::Chaotic
            && full.regime == Regime::Chaotic
            && near.is_some()
            && far.is_some()
            && selected_far
            && secs < 1200.0;
        let fmt = |m: Option<&opm_core::defect::Minimum>| {
            m.map(|m| format!("{:.4} at {:.3}", m.value, m.tau)).unwrap_or_else(|| "none".into())
        };
        Ok((
            ok,
            format!(
                "reduced {} ({} maxima levels, line share {:.2}), full {} ({} levels); J_6 minima {} and {}; correlations {:?}; selected tau {:.3}",
                reduced.regime.label(),
                reduced.maxima_levels,
                reduced.dominant_line_fraction,
                full.regime.label(),
                full.maxima_levels,
                fmt(near),
                fmt(far),
                choice.correlations.iter().map(|c| (c * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                choice.tau
            ),
        ))
    });
    line.seconds = secs;
    line
}

fn baselines_line() -> Line {
    let t = Instant::now();
    report(8, "IM and FMT baselines at r = 14.22 (m_c = 5)", t, || {
        let cfg = RbConfig::experiment_two();
        let mut ok = true;
        let mut parts = Vec::new();
        for reference in [Reference::SteadyState, Reference::MeanState] {
            let b = baselines(&cfg, reference).map_err(e)?;
            for (name, r) in [("IM", &b.im), ("FMT", &b.fmt)] {
                match r {
                    Ok(r) => {
                        ok &= r.report.regime != Regime::Chaotic;
                        parts.push(format!("{reference:?} {name}: {}", r.report.regime.label()));
                    }
                    Err(msg) => {
                        ok = false;
                        parts.push(format!("{reference:?} {name}: failed ({msg})"));
                    }
                }
            }
        }
        Ok((ok && t.elapsed().as_secs_f64() < 600.0, parts.join(", ")))
    })
}

fn suite_line(id: u32, name: &'static str, suite: &str) -> Line {
    let t = Instant::now();
    report(id, name, t, || {
        let r = verify::run_suite(suite, 1).ok_or("unknown suite")?.map_err(e)?;
        let worst = r.checks.iter().map(|c| c.value / c.tolerance.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Ok((
            failed.is_empty(),
            format!("{} checks, worst value/tolerance {worst:.2e}, failed {:?}", r.checks.len(), failed),
        ))
    })
}

fn realness_line(two: &Result<TransitionOutput, String>) -> Line {
    let t = Instant::now();
    report(12, "real reconstructions and RK4 order", t, || {
        let out = two.as_ref()?;
        let cfg = RbConfig::experiment_two();
        let eigen = to_eigen_model(&rb9d::model(cfg.r_p), &out.report.extrapolated_mean).map_err(e)?;
        let sys = assemble_reduced(&eigen, cfg.m_c, Some(&out.param)).map_err(e)?;
        let x0 = out.reduced.row(0);
        let y0 = eigen.to_eigen(x0);
        let traj = sys.integrate(&y0[..cfg.m_c], 0.0, cfg.dt, 20_000, 10).map_err(e)?;
        let mut residue: f64 = 0.0;
        for k in 0..traj.len() {
            let x: Vec<C64> = traj.row(k).chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            let u = sys.lift(&x, None).map_err(e)?;
            residue = residue.max(eigen.to_physical(&u).1);
        }
        // Damped rotation with a closed-form solution.
        let (a, w, tend) = (0.3, 2.0, 5.0);
        let err = |dt: f64| -> Result<f64, String> {
            let steps = (tend / dt).round() as usize;
            let x = rk4_real(|_, x, o| {
                o[0] = -a * x[0] - w * x[1];
                o[1] = w * x[0] - a * x[1];
            }, &[1.0, 0.0], 0.0, dt, steps, |_, _, _| {})
            .map_err(e)?;
            let d = (-a * tend).exp();
            Ok(((x[0] - d * (w * tend).cos()).powi(2) + (x[1] - d * (w * tend).sin()).powi(2)).sqrt())
        };
        let errs = [err(0.1)?, err(0.05)?, err(0.025)?];
        let orders: Vec<f64> = errs.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
        let ok = residue <= 1e-8 && orders.iter().all(|o| (o - 4.0).abs() < 0.3);
        Ok((ok, format!("max imaginary residue {residue:.2e} (<= 1e-8), observed RK4 orders {orders:.3?}")))
    })
}

fn determinism_line() -> Line {
    let t = Instant::now();
    report(13, "byte-identical summaries", t, || {
        let dir = tempfile::tempdir().map_err(e)?;
        let c = cessi_opm_pipeline(&CessiConfig::default()).map_err(e)?;
        let cfg = TippingConfig { n_realizations: 64, ..TippingConfig::default() };
        let mut bytes = Vec::new();
        for i in 0..2 {
            let ens = run_tipping_ensemble(&c, &cfg, 1e-3).map_err(e)?;
            let out = ResultDir::create(&dir.path().join(format!("run{i}")), false).map_err(e)?;
            out.json("summary.json", &ens.summary).map_err(e)?;
            out.transitions(&ens.runs).map_err(e)?;
            let mut b = std::fs::read(out.path().join("summary.json")).map_err(e)?;
            b.extend(std::fs::read(out.path().join("histogram.csv")).map_err(e)?);
            bytes.push(b);
        }
        let other = run_tipping_ensemble(&c, &TippingConfig { seed: cfg.seed + 1, ..cfg.clone() }, 1e-3).map_err(e)?;
        let differs = serde_json::to_vec(&other.summary).map_err(e)? != serde_json::to_vec(&run_tipping_ensemble(&c, &cfg, 1e-3).map_err(e)?.summary).map_err(e)?;
        Ok((
            bytes[0] == bytes[1] && differs,
            format!("{} bytes identical across repeats; a different seed changes the summary: {differs}", bytes[0].len()),
        ))
    })
}

fn main() {
    // Respect libtest's filtering conventions loosely: `--list` prints
    // nothing, anything else runs the whole suite.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let total = Instant::now();
    let mut lines = vec![folds_line(), spectrum_line(), defect_line(), tipping_line()];

    let t = Instant::now();
    let one = run_experiment(&RbConfig::experiment_one());
    let secs_one = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let two = run_experiment(&RbConfig::experiment_two());
    let secs_two = t.elapsed().as_secs_f64();
    lines.push(extrapolation_line(&one, &two, secs_one + secs_two));
    lines.push(experiment_one_line(&one, secs_one));
    lines.push(experiment_two_line(&two, secs_two));
    lines.push(baselines_line());
    lines.push(suite_line(9, "closed-form coefficients against quadrature", "coefficients"));
    lines.push(suite_line(10, "closed form against backward-forward integration", "bf-oracle"));
    lines.push(suite_line(11, "homological residual", "homological"));
    lines.push(realness_line(&two));
    lines.push(determinism_line());

    let failed: Vec<u32> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s{}",
        lines.len() - failed.len(),
        lines.len(),
        total.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
