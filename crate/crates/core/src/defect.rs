//! Parameterization defect, its per-mode minimization over the backward
//! horizon `tau`, and the parameterization correlation used to break ties.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};
use crate::model::EigenModel;
use crate::param::{opm_mode, MemoryTerm, ModeParam};
use crate::reduce::NoiseRecord;
use crate::spectral::C64;

/// Minimizer of `f` on `[a, b]` by golden-section search down to a bracket
/// of width `tol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// Training data in eigen coordinates: full amplitude vectors on a uniform
/// grid. When the closure carries memory, `noise` is the increment record
/// of the run and sample `k` is the state after `offset + k` increments.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub dt: f64,
    pub samples: Vec<Vec<C64>>,
    pub noise: Option<NoiseRecord>,
    pub offset: usize,
}

impl TrainingSet {
    pub fn deterministic(dt: f64, samples: Vec<Vec<C64>>) -> Self {
        Self { dt, samples, noise: None, offset: 0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Memory values `I(t_k)` of a mode with rate `kappa` and horizon `tau`,
    /// started at rest at the beginning of the noise record.
    pub fn memory_series(&self, kappa: C64, tau: f64) -> Result<Vec<C64>> {
        let noise = self
            .noise
            .as_ref()
            .ok_or_else(|| OpmError::InvalidArgument("memory closure needs the training noise record".into()))?;
        let needed = self.offset + self.samples.len().saturating_sub(1);
        if noise.len() < needed {
            return Err(OpmError::HistoryTooShort { needed, got: noise.len() });
        }
        let mut m = MemoryTerm::at_rest(kappa, tau, noise.dt, 0.0)?;
        let mut out = Vec::with_capacity(self.samples.len());
        for k in 0..=needed {
            if k >= self.offset {
                out.push(m.value());
            }
            if k < needed {
                m.step_noise(noise.increments[k]);
            }
        }
        Ok(out)
    }
}

/// Values of one mode's closure along the training data.
pub fn closure_series(data: &TrainingSet, mode: &ModeParam, m_c: usize) -> Result<Vec<C64>> {
    let memory = if mode.noise.norm() > 0.0 { Some(data.memory_series(mode.lambda, mode.tau)?) } else { None };
    Ok(data
        .samples
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let base = mode.eval(&y[..m_c]);
            match &memory {
                Some(mem) => base + mode.memory_part(mem[k]),
                None => base,
            }
        })
        .collect())
}

/// Raw and normalized defect of mode `mode.mode`.
pub fn defect(data: &TrainingSet, mode: &ModeParam, m_c: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(OpmError::TooShort("empty training set".into()));
    }
    let n = mode.mode;
    let energy = data.samples.iter().map(|y| y[n].norm_sqr()).sum::<f64>() / data.len() as f64;
    if energy < 1e-30 {
        return Err(OpmError::ZeroVariance { mode: n });
    }
    let phi = closure_series(data, mode, m_c)?;
    let raw = data.samples.iter().zip(&phi).map(|(y, p)| (y[n] - p).norm_sqr()).sum::<f64>() / data.len() as f64;
    Ok((raw, raw / energy))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    pub points: usize,
    pub include_zero: bool,
    pub include_infinity: bool,
    pub refine_tol: f64,
    /// Attach the memory term when the model is stochastic.
    pub with_memory: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            tau_min: 1e-3,
            tau_max: 20.0,
            points: 200,
            include_zero: true,
            include_infinity: true,
            refine_tol: 1e-3,
            with_memory: false,
        }
    }
}

impl SearchConfig {
    pub fn grid(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.points + 2);
        if self.include_zero {
            g.push(0.0);
        }
        let (lo, hi) = (self.tau_min.ln(), self.tau_max.ln());
        let p = self.points.max(2);
        for i in 0..p {
            g.push((lo + (hi - lo) * i as f64 / (p - 1) as f64).exp());
        }
        if self.include_infinity {
            g.push(f64::INFINITY);
        }
        g
    }
}

/// Relative depth a grid point must have below both neighbours to count as
/// a local minimum.
pub const MINIMUM_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Minimum {
    #[serde(with = "crate::param::horizon")]
    pub tau: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectProfile {
    pub mode: usize,
    #[serde(with = "crate::param::horizon::vec")]
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Local minima, smallest defect first.
    pub minima: Vec<Minimum>,
    #[serde(with = "crate::param::horizon")]
    pub selected_tau: f64,
}

impl DefectProfile {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau,q")?;
        for (t, q) in self.taus.iter().zip(&self.values) {
            writeln!(w, "{t},{q}")?;
        }
        Ok(())
    }

    /// Whether the values never increase along the grid.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Single-mode OPM closure at horizon `tau`, with the memory loading when
/// requested.
pub fn mode_closure(eigen: &EigenModel, m_c: usize, n: usize, tau: f64, with_memory: bool) -> Result<ModeParam> {
    let mut p = opm_mode(eigen, m_c, n, tau)?;
    if with_memory {
        if let Some(noise) = &eigen.noise {
            p.noise = noise[n];
        }
    }
    Ok(p)
}

/// Normalized defect profile of mode `n` over the search grid, with every
/// local minimum refined by golden-section search.
pub fn optimize_tau(data: &TrainingSet, eigen: &EigenModel, m_c: usize, n: usize, cfg: &SearchConfig) -> Result<DefectProfile> {
    let eval = |tau: f64| -> Result<f64> {
        let p = mode_closure(eigen, m_c, n, tau, cfg.with_memory)?;
        Ok(defect(data, &p, m_c)?.1)
    };
    let mut taus = Vec::new();
    let mut values = Vec::new();
    for tau in cfg.grid() {
        match eval(tau) {
            Ok(q) => {
                taus.push(tau);
                values.push(q);
            }
            Err(OpmError::DivergentLimit { .. }) if tau.is_infinite() => {}
            Err(e) => return Err(e),
        }
    }
    if taus.is_empty() {
        return Err(OpmError::TooShort("empty tau grid".into()));
    }
    let mut minima = Vec::new();
    let last = taus.len() - 1;
    let close = |a: f64, b: f64| (a - b).abs() <= MINIMUM_MARGIN * a.abs().max(b.abs()).max(1e-300);
    // Runs of round-off-equal values count as one candidate, so flat
    // stretches neither hide a minimum nor produce a cluster of fake ones.
    let mut s0 = 0;
    while s0 <= last {
        let mut e0 = s0;
        while e0 < last && close(values[e0], values[e0 + 1]) {
            e0 += 1;
        }
        let (s, e) = (s0, e0);
        s0 = e0 + 1;
        let k = (s..=e).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(s);
        let m = values[k];
        let margin = MINIMUM_MARGIN * m.abs().max(1e-300);
        let left_ok = s == 0 || values[s - 1] - m > margin;
        let right_ok = e == last || values[e + 1] - m > margin;
        // The zero closure is the reference point, not a candidate.
        if !(left_ok && right_ok) || (e == 0 && taus[0] == 0.0 && last > 0) {
            continue;
        }
        // A flat tail stands for its large-tau limit.
        let i = if e == last && e > s { last } else { k };
        let mut best = Minimum { tau: taus[i], value: values[i] };
        if s == e && i > 0 && i < last && taus[i + 1].is_finite() {
            let (a, b) = (taus[i - 1], taus[i + 1]);
            let mut cache_err = None;
            let t = golden_section(
                |t| match eval(t) {
                    Ok(q) => q,
                    Err(e) => {
                        cache_err.get_or_insert(e);
                        f64::INFINITY
                    }
                },
                a,
                b,
                cfg.refine_tol,
            );
            if let Some(e) = cache_err {
                return Err(e);
            }
            let q = eval(t)?;
            if q <= best.value {
                best = Minimum { tau: t, value: q };
            }
        }
        minima.push(best);
    }
    if minima.is_empty() {
        minima.push(Minimum { tau: taus[0], value: values[0] });
    }
    // Stable sort: on exact ties the larger horizon wins.
    minima.reverse();
    minima.sort_by(|a, b| a.value.total_cmp(&b.value));
    let selected_tau = minima[0].tau;
    Ok(DefectProfile { mode: n, taus, values, minima, selected_tau })
}

/// `c(t) = Re<Phi(y_c), y_s> / (|Phi(y_c)| |y_s|)` over the unresolved modes
/// covered by `closures`, and its time mean.
pub fn correlation(data: &TrainingSet, closures: &[ModeParam], m_c: usize) -> Result<(Vec<f64>, f64)> {
    if data.is_empty() {
        return Err(OpmError::TooShort("empty training set".into()));
    }
    let series = closures.iter().map(|m| closure_series(data, m, m_c)).collect::<Result<Vec<_>>>()?;
    let mut c = Vec::with_capacity(data.len());
    let mut any = false;
    for (k, y) in data.samples.iter().enumerate() {
        let mut dot = 0.0;
        let mut np = 0.0;
        let mut ny = 0.0;
        for (m, s) in closures.iter().zip(&series) {
            let p = s[k];
            let v = y[m.mode];
            dot += (p * v.conj()).re;
            np += p.norm_sqr();
            ny += v.norm_sqr();
        }
        if np > 0.0 && ny > 0.0 {
            any = true;
            c.push((dot / (np.sqrt() * ny.sqrt())).clamp(-1.0, 1.0));
        } else {
            c.push(0.0);
        }
    }
    if !any {
        return Err(OpmError::ZeroParameterization);
    }
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    Ok((c, mean))
}

/// Relative gap below which two minima count as competing.
pub const CLOSE_MINIMA: f64 = 0.15;

/// Global minimum, unless the runner-up is within [`CLOSE_MINIMA`]; then the
/// candidate with the larger mean correlation. `mean_correlation` maps a
/// minimum's `tau` to its mean correlation.
pub fn select_tau<F: FnMut(f64) -> Option<f64>>(profile: &DefectProfile, mut mean_correlation: F) -> f64 {
    let m = &profile.minima;
    if m.len() < 2 {
        return m.first().map_or(profile.selected_tau, |x| x.tau);
    }
    let (a, b) = (&m[0], &m[1]);
    if (b.value - a.value) / a.value.abs().max(f64::MIN_POSITIVE) >= CLOSE_MINIMA {
        return a.tau;
    }
    match (mean_correlation(a.tau), mean_correlation(b.tau)) {
        (Some(ca), Some(cb)) if cb > ca => b.tau,
        _ => a.tau,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let t = golden_section(|x| (x - 0.37).powi(2), 0.0, 1.0, 1e-6);
        assert!((t - 0.37).abs() < 1e-5);
    }

    fn profile(values: &[(f64, f64)]) -> DefectProfile {
        DefectProfile {
            mode: 0,
            taus: vec![],
            values: vec![],
            minima: values.iter().map(|&(tau, value)| Minimum { tau, value }).collect(),
            selected_tau: values[0].0,
        }
    }

    #[test]
    fn distant_minima_ignore_correlation() {
        let p = profile(&[(0.3, 0.1), (2.0, 0.5)]);
        assert_eq!(select_tau(&p, |t| Some(if t > 1.0 { 1.0 } else { 0.0 })), 0.3);
    }

    #[test]
    fn close_minima_follow_correlation() {
        let p = profile(&[(0.65, 0.1535), (1.8, 0.1720)]);
        assert_eq!(select_tau(&p, |t| Some(if t > 1.0 { 0.9 } else { 0.8 })), 1.8);
        assert_eq!(select_tau(&profile(&[(0.4, 0.2)]), |_| None), 0.4);
    }
}
