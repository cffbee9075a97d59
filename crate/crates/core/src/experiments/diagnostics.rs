//! Spectral and geometric diagnostics of time series.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WelchConfig {
    /// Samples per segment.
    pub segment: usize,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segment: 4096 }
    }
}

/// One-sided Welch estimate: frequencies, linear power and power in dB.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub freq: Vec<f64>,
    pub power: Vec<f64>,
    pub db: Vec<f64>,
    pub df: f64,
}

/// Welch periodogram with a Hann window and 50% overlap. The series mean is
/// removed first.
pub fn psd(series: &[f64], dt: f64, cfg: &WelchConfig) -> Result<Spectrum> {
    let m = cfg.segment;
    if m < 8 || series.len() < 8 * m / 2 + m / 2 {
        return Err(OpmError::TooShort(format!(
            "psd needs at least 8 half-overlapping segments of {m} samples, got {} samples",
            series.len()
        )));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let window: Vec<f64> = (0..m)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / m as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let half = m / 2 + 1;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    let step = m / 2;
    let mut count = 0usize;
    let mut start = 0;
    while start + m <= series.len() {
        for i in 0..m {
            buf[i] = Complex::new((series[start + i] - mean) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..half {
            acc[k] += buf[k].norm_sqr();
        }
        count += 1;
        start += step;
    }
    let fs = 1.0 / dt;
    let scale = 1.0 / (fs * wss * count as f64);
    let power: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (m % 2 == 0 && k == half - 1) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let db = power.iter().map(|p| 10.0 * p.max(1e-300).log10()).collect();
    let df = fs / m as f64;
    let freq = (0..half).map(|k| k as f64 * df).collect();
    Ok(Spectrum { freq, power, db, df })
}

/// Half-width, in bins, of the Hann main lobe.
const LOBE: usize = 2;

impl Spectrum {
    fn total(&self) -> f64 {
        self.power.iter().skip(1).sum()
    }

    /// Bin of the strongest line, DC excluded.
    pub fn peak_bin(&self) -> usize {
        (1..self.power.len()).max_by(|&a, &b| self.power[a].total_cmp(&self.power[b])).unwrap_or(0)
    }

    pub fn peak_frequency(&self) -> f64 {
        self.freq[self.peak_bin()]
    }

    fn lobe_mass(&self, k: usize) -> f64 {
        let lo = k.saturating_sub(LOBE).max(1);
        let hi = (k + LOBE).min(self.power.len() - 1);
        self.power[lo..=hi].iter().sum()
    }

    /// Fraction of the (non-DC) spectral mass carried by the strongest line.
    pub fn dominant_line_fraction(&self) -> f64 {
        let t = self.total();
        if t <= 0.0 {
            return 1.0;
        }
        self.lobe_mass(self.peak_bin()) / t
    }

    /// Strongest power within one main lobe of frequency `f`.
    pub fn power_near(&self, f: f64) -> f64 {
        let k = (f / self.df).round() as usize;
        let lo = k.saturating_sub(LOBE).max(1);
        let hi = (k + LOBE).min(self.power.len() - 1);
        if lo > hi {
            return 0.0;
        }
        self.power[lo..=hi].iter().cloned().fold(0.0, f64::max)
    }

    /// Whether there is a spectral line at half the dominant frequency,
    /// standing `ratio_db` below the dominant line at most.
    pub fn has_subharmonic(&self, ratio_db: f64) -> bool {
        let k = self.peak_bin();
        let f0 = self.freq[k];
        let sub = self.power_near(f0 / 2.0);
        let kk = ((f0 / 2.0) / self.df).round() as usize;
        if kk < 1 + LOBE {
            return false;
        }
        // Must be a genuine local peak, not the flank of something else.
        let around = self.power[kk - 1 - LOBE].max(self.power[(kk + 1 + LOBE).min(self.power.len() - 1)]);
        sub > around * 4.0 && 10.0 * (self.power[k] / sub).log10() < ratio_db
    }
}

/// Default dynamic range, in dB below the dominant line, within which a
/// half-frequency line counts as a subharmonic.
pub const SUBHARMONIC_DB: f64 = 45.0;

/// Strongest-line share above which a spectrum counts as periodic.
pub const LINE_SHARE: f64 = 0.5;

/// Distinct local-maximum levels beyond which a series counts as aperiodic.
pub const MAX_PERIODIC_LEVELS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Periodic,
    Subharmonic,
    Chaotic,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Periodic => "no subharmonic",
            Regime::Subharmonic => "subharmonic",
            Regime::Chaotic => "chaotic",
        }
    }
}

/// Spectral-flatness reading: broadband if no line carries more than
/// [`LINE_SHARE`] of the mass.
pub fn is_spectrally_flat(s: &Spectrum) -> bool {
    s.dominant_line_fraction() <= LINE_SHARE
}

/// Number of distinct levels among the local maxima of `series`, levels
/// closer than `rel_tol` times the series range being merged. A periodic
/// orbit visits finitely many levels; a chaotic one keeps adding new ones.
pub fn maxima_levels(series: &[f64], rel_tol: f64) -> (usize, usize) {
    let mut maxima: Vec<f64> = series
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] >= w[2])
        .map(|w| w[1])
        .collect();
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = rel_tol * (hi - lo).max(f64::MIN_POSITIVE);
    maxima.sort_by(f64::total_cmp);
    let mut levels = 0;
    let mut last = f64::NEG_INFINITY;
    for v in &maxima {
        if v - last > tol {
            levels += 1;
        }
        last = *v;
    }
    (levels, maxima.len())
}

/// Summary of one series: spectrum-based line statistics plus the
/// return-map level count that decides chaos.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesReport {
    pub peak_frequency: f64,
    pub dominant_line_fraction: f64,
    pub half_frequency_db: f64,
    pub maxima_levels: usize,
    pub maxima_count: usize,
    pub regime: Regime,
}

pub fn classify_series(series: &[f64], dt: f64, cfg: &WelchConfig) -> Result<SeriesReport> {
    let s = psd(series, dt, cfg)?;
    let k = s.peak_bin();
    let f0 = s.freq[k];
    let (levels, count) = maxima_levels(series, 1e-3);
    let regime = if levels > MAX_PERIODIC_LEVELS {
        Regime::Chaotic
    } else if s.has_subharmonic(SUBHARMONIC_DB) {
        Regime::Subharmonic
    } else {
        Regime::Periodic
    };
    Ok(SeriesReport {
        peak_frequency: f0,
        dominant_line_fraction: s.dominant_line_fraction(),
        half_frequency_db: 10.0 * (s.power_near(f0 / 2.0).max(1e-300) / s.power[k]).log10(),
        maxima_levels: levels,
        maxima_count: count,
        regime,
    })
}

/// Delay-coordinate points `(x_t, x_{t+lag}, ..., x_{t+(dim-1) lag})`.
pub fn lag_embed(series: &[f64], lag: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let span = lag * dim.saturating_sub(1);
    if dim == 0 || span >= series.len() {
        return Err(OpmError::TooShort(format!("lag {lag} x dim {dim} exceeds series of {}", series.len())));
    }
    Ok((0..series.len() - span).map(|t| (0..dim).map(|d| series[t + d * lag]).collect()).collect())
}

/// Variance of column `n` over the summed variance of all columns.
pub fn energy_fraction(columns: &[Vec<f64>], n: usize) -> Result<f64> {
    let var = |c: &[f64]| {
        let m = c.iter().sum::<f64>() / c.len() as f64;
        c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64
    };
    if columns.is_empty() || columns[0].len() < 2 {
        return Err(OpmError::TooShort("energy fraction needs data".into()));
    }
    let total: f64 = columns.iter().map(|c| var(c)).sum();
    if total <= 0.0 {
        return Err(OpmError::ZeroVariance { mode: n });
    }
    Ok(var(&columns[n]) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: &[(f64, f64)], dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| f.iter().map(|(fr, a)| a * (2.0 * PI * fr * i as f64 * dt).sin()).sum()).collect()
    }

    #[test]
    fn sinusoid_has_one_peak() {
        let s = psd(&tone(&[(3.0, 1.0)], 0.01, 40_000), 0.01, &WelchConfig { segment: 2048 }).unwrap();
        assert!((s.peak_frequency() - 3.0).abs() <= s.df);
        assert!(s.dominant_line_fraction() > 0.95);
        assert!(!s.has_subharmonic(SUBHARMONIC_DB));
        assert!(!is_spectrally_flat(&s));
    }

    #[test]
    fn period_two_signal_shows_subharmonic() {
        let x = tone(&[(2.0, 1.0), (1.0, 0.05)], 0.01, 40_000);
        let r = classify_series(&x, 0.01, &WelchConfig { segment: 2048 }).unwrap();
        assert_eq!(r.regime, Regime::Subharmonic);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(psd(&[0.0; 100], 1.0, &WelchConfig { segment: 64 }), Err(OpmError::TooShort(_))));
        assert!(lag_embed(&[0.0; 10], 5, 3).is_err());
    }

    #[test]
    fn lag_embedding_layout() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let p = lag_embed(&x, 2, 3).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p[1], vec![1.0, 3.0, 5.0]);
    }
}
