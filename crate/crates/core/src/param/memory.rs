//! Exogenous memory `I(t) = e^{k t} int_{t-tau}^t e^{-k s} f(s) ds`, advanced
//! through `I' = k I + f(t) - e^{k tau} f(t - tau)` instead of re-evaluating
//! the integral at each step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{OpmError, Result};
use crate::spectral::C64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryTerm {
    pub kappa: C64,
    pub tau: f64,
    pub dt: f64,
    /// Delay in steps, `None` for `tau = +inf`.
    lag: Option<usize>,
    decay: C64,
    value: C64,
    /// The last `lag` increments, oldest first.
    ring: VecDeque<f64>,
    time: f64,
}

impl MemoryTerm {
    fn base(kappa: C64, tau: f64, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0) || !(tau >= 0.0) {
            return Err(OpmError::InvalidArgument("memory term needs dt > 0 and tau >= 0".into()));
        }
        let lag = if tau.is_finite() { Some((tau / dt).round() as usize) } else { None };
        let decay = if tau.is_finite() { (kappa * tau).exp() } else { C64::new(0.0, 0.0) };
        Ok(Self {
            kappa,
            tau,
            dt,
            lag,
            decay,
            value: C64::new(0.0, 0.0),
            ring: VecDeque::with_capacity(lag.unwrap_or(0)),
            time: t0,
        })
    }

    /// Zero history: the driving signal vanished before `t0`.
    pub fn at_rest(kappa: C64, tau: f64, dt: f64, t0: f64) -> Result<Self> {
        let mut m = Self::base(kappa, tau, dt, t0)?;
        if let Some(l) = m.lag {
            m.ring.extend(std::iter::repeat_n(0.0, l));
        }
        Ok(m)
    }

    /// Initialize from recorded increments ending at `t0` (newest last) by
    /// direct quadrature of the defining integral.
    pub fn from_increments(kappa: C64, tau: f64, dt: f64, t0: f64, history: &[f64]) -> Result<Self> {
        let mut m = Self::base(kappa, tau, dt, t0)?;
        let used = match m.lag {
            Some(l) => {
                if history.len() < l {
                    return Err(OpmError::HistoryTooShort { needed: l, got: history.len() });
                }
                &history[history.len() - l..]
            }
            None => history,
        };
        let count = used.len();
        // Left-point rule, matching the Euler-Maruyama recurrence.
        let factor = C64::new(1.0, 0.0) + kappa * dt;
        let mut acc = C64::new(0.0, 0.0);
        for (i, dw) in used.iter().enumerate() {
            let age = (count - 1 - i) as i32;
            acc += factor.powi(age) * *dw;
        }
        m.value = acc;
        if m.lag.is_some() {
            m.ring.extend(used.iter().copied());
        }
        Ok(m)
    }

    /// Initialize from a deterministic signal by Simpson quadrature.
    pub fn from_signal<F: Fn(f64) -> f64>(kappa: C64, tau: f64, dt: f64, t0: f64, f: F) -> Result<Self> {
        let mut m = Self::base(kappa, tau, dt, t0)?;
        if !tau.is_finite() {
            return Err(OpmError::InvalidArgument("deterministic memory needs a finite tau".into()));
        }
        let panels = 2 * ((tau / 1e-3).ceil() as usize).max(1);
        let h = tau / panels as f64;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=panels {
            let s = t0 - tau + i as f64 * h;
            let w = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += (kappa * (t0 - s)).exp() * f(s) * w;
        }
        m.value = acc * (h / 3.0);
        Ok(m)
    }

    pub fn value(&self) -> C64 {
        self.value
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `exp(kappa tau)`, zero for an infinite window.
    pub fn decay(&self) -> C64 {
        self.decay
    }

    /// The increment leaving the window on the next step.
    pub fn delayed_increment(&self) -> f64 {
        match self.lag {
            Some(0) | None => 0.0,
            Some(_) => *self.ring.front().unwrap_or(&0.0),
        }
    }

    /// One Euler-Maruyama step driven by the Wiener increment `dw`.
    /// Returns the change applied to `I`.
    pub fn step_noise(&mut self, dw: f64) -> C64 {
        let delayed = match self.lag {
            None => 0.0,
            Some(0) => dw,
            Some(_) => {
                let old = self.ring.pop_front().unwrap_or(0.0);
                self.ring.push_back(dw);
                old
            }
        };
        let old = self.value;
        self.value = old + self.kappa * old * self.dt + dw - self.decay * delayed;
        self.time += self.dt;
        self.value - old
    }

    /// One explicit Euler step for a deterministic signal.
    pub fn step_signal(&mut self, f_now: f64, f_delayed: f64) {
        self.value += (self.kappa * self.value + f_now - self.decay * f_delayed) * self.dt;
        self.time += self.dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::NoiseRecord;

    #[test]
    fn free_decay() {
        let mut m = MemoryTerm::at_rest(C64::new(-2.0, 0.0), f64::INFINITY, 1e-3, 0.0).unwrap();
        m.value = C64::new(1.0, 0.0);
        for _ in 0..1000 {
            m.step_signal(0.0, 0.0);
        }
        assert!((m.value().re - (-2.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn infinite_window_is_an_ou_recurrence() {
        let kappa = -15.765;
        let noise = NoiseRecord::generate(3, 1e-3, 20_000);
        let mut m = MemoryTerm::at_rest(C64::new(kappa, 0.0), f64::INFINITY, 1e-3, 0.0).unwrap();
        let mut z = 0.0f64;
        for dw in &noise.increments {
            m.step_noise(*dw);
            z = z + kappa * z * 1e-3 + dw;
            assert_eq!(m.value().re, z);
        }
    }

    #[test]
    fn finite_window_needs_history() {
        let r = MemoryTerm::from_increments(C64::new(-1.0, 0.0), 1.0, 1e-2, 0.0, &[0.0; 10]);
        assert!(matches!(r, Err(OpmError::HistoryTooShort { needed: 100, got: 10 })));
    }
}
