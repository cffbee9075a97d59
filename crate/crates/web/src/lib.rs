//! Browser bindings: three small computations that return JSON strings for
//! the static page in `www/`.

use std::cell::OnceCell;

use opm_core::experiments::cessi::{
    cessi_opm_pipeline, simulate_full, simulate_slow, CessiClosure, CessiConfig, DriftForm, LastCrossing,
    TippingConfig, TippingSetup,
};
use opm_core::experiments::diagnostics::{classify_series, lag_embed, psd, WelchConfig};
use opm_core::model::{cessi_steady_branch, rb9d};
use opm_core::reduce::{integrate_rk4, rk4_real, NoiseRecord};
use opm_core::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Points kept per plotted series.
const PLOT_POINTS: usize = 1500;

thread_local! {
    static CLOSURE: OnceCell<CessiClosure> = const { OnceCell::new() };
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn thin<T: Copy>(v: &[T], n: usize) -> Vec<T> {
    let step = v.len().div_ceil(n.max(1)).max(1);
    v.iter().step_by(step).copied().collect()
}

pub fn bifurcation_json(mu: f64, eps: f64, f_lo: f64, f_hi: f64) -> Result<Value> {
    let t = cessi_steady_branch(mu, eps, &[f_lo, f_hi])?;
    let curve: Vec<&_> = t.curve.iter().filter(|p| p.f >= f_lo && p.f <= f_hi).collect();
    let curve = thin(&curve, 2 * PLOT_POINTS);
    Ok(json!({
        "f": curve.iter().map(|p| p.f).collect::<Vec<_>>(),
        "y": curve.iter().map(|p| p.y).collect::<Vec<_>>(),
        "stable": curve.iter().map(|p| p.stable).collect::<Vec<_>>(),
        "folds": t.folds.unwrap_or_default(),
    }))
}

/// Steady-state curve of the box model over `[f_lo, f_hi]`.
#[wasm_bindgen]
pub fn bifurcation(mu: f64, eps: f64, f_lo: f64, f_hi: f64) -> std::result::Result<String, JsValue> {
    to_js(bifurcation_json(mu, eps, f_lo, f_hi))
}

fn with_closure<T>(f: impl FnOnce(&CessiClosure) -> Result<T>) -> Result<T> {
    CLOSURE.with(|cell| {
        if cell.get().is_none() {
            let c = cessi_opm_pipeline(&CessiConfig::default())?;
            let _ = cell.set(c);
        }
        f(cell.get().expect("closure was just set"))
    })
}

pub fn tipping_json(kappa: f64, noise_scale: f64, seed: u64) -> Result<Value> {
    with_closure(|closure| {
        let cfg = TippingConfig {
            kappa,
            sigma: TippingConfig::default().sigma * noise_scale,
            ..TippingConfig::default()
        };
        let dt = CessiConfig::default().dt;
        let setup = TippingSetup::new(&cfg, closure, dt)?;
        let noise = NoiseRecord::generate(seed, dt, setup.steps);
        let forcing = |t: f64| setup.forcing(t);
        let thr = setup.folds.y_c;

        let mut full = (Vec::with_capacity(setup.steps + 1), LastCrossing::new(thr));
        simulate_full(closure.mu, closure.eps, forcing, setup.sigma, setup.start, &noise, |k, y, _| {
            full.0.push(y);
            full.1.push(k, y);
        })?;
        let mut red = (Vec::with_capacity(setup.steps + 1), LastCrossing::new(thr));
        let reduced = closure.original_coordinates().simulate(
            setup.start[0],
            setup.sigma,
            forcing,
            DriftForm::Chain,
            &noise,
            |k, y| {
                red.0.push(y);
                red.1.push(k, y);
            },
        );
        let mut slow = (Vec::with_capacity(setup.steps + 1), LastCrossing::new(thr));
        let slow_end = simulate_slow(closure.mu, forcing, setup.sigma, setup.start[0], &noise, |k, y| {
            slow.0.push(y);
            slow.1.push(k, y);
        });

        let f_at = |k: Option<usize>| k.map(|k| setup.forcing(k as f64 * dt));
        let f: Vec<f64> = (0..=setup.steps).map(|k| setup.forcing(k as f64 * dt)).collect();
        Ok(json!({
            "f": thin(&f, PLOT_POINTS),
            "full": thin(&full.0, PLOT_POINTS),
            "reduced": thin(&red.0, PLOT_POINTS),
            "slow": thin(&slow.0, PLOT_POINTS),
            "threshold": thr,
            "f_c2": setup.folds.f_c2,
            "transition": {
                "full": f_at(full.1.index()),
                "reduced": reduced.ok().and(f_at(red.1.index())),
                "slow": slow_end.ok().and(f_at(slow.1.index())),
            },
        }))
    })
}

/// One realization of the slowly forced box model: full, reduced and slow
/// paths on the same noise.
#[wasm_bindgen]
pub fn tipping(kappa: f64, noise_scale: f64, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(tipping_json(kappa, noise_scale, seed as u64))
}

pub fn convection_json(r: f64, length: f64) -> Result<Value> {
    let model = rb9d::model(r);
    let dt = 5e-3;
    let rhs = |_: f64, x: &[f64], o: &mut [f64]| model.rhs_into(x, o);
    let x0 = [0.1, 0.05, -0.02, 0.03, 0.01, 0.0, 0.2, -0.1, 0.05];
    let start = rk4_real(rhs, &x0, 0.0, dt, (300.0 / dt) as usize, |_, _, _| {})?;
    let traj = integrate_rk4(rhs, &start, 0.0, dt, (length / dt) as usize, 1)?;
    let series = traj.component(2);
    // Longest power-of-two segment that still leaves eight overlapping
    // segments, so the half-frequency line is resolved.
    let segment = 1usize << (2 * series.len() / 9).max(8).ilog2();
    let welch = WelchConfig { segment };
    let report = classify_series(&series, dt, &welch)?;
    let s = psd(&series, dt, &welch)?;
    let f_max = 6.0 * report.peak_frequency.max(s.df);
    let keep = s.freq.iter().take_while(|f| **f <= f_max).count();
    let points = lag_embed(&series, 50, 2)?;
    let points = thin(&points.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>(), 4 * PLOT_POINTS);
    Ok(json!({
        "freq": &s.freq[..keep],
        "db": &s.db[..keep],
        "embedding": points,
        "regime": report.regime.label(),
        "peak_frequency": report.peak_frequency,
        "maxima_levels": report.maxima_levels,
    }))
}

/// Spectrum and delay embedding of the convection model at `r`.
#[wasm_bindgen]
pub fn convection(r: f64, length: f64) -> std::result::Result<String, JsValue> {
    to_js(convection_json(r, length))
}
