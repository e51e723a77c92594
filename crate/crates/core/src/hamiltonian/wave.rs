use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WaveMode {
    #[default]
    ExactSquare,
    Fourier { terms: usize },
}

pub const DEFAULT_FOURIER_TERMS: usize = 51;

/// Square wave g(t) ∈ {+1, −1} on `[t_i, t_f]` with period `2L`,
/// `L = (t_f − t_i)/N`. Each period holds +1 for `2L·p0` and −1 for
/// `2L·(1 − p0)`, so the period mean is `2p0 − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenVariableWave {
    p0: f64,
    partitions: usize,
    t_i: f64,
    t_f: f64,
    mode: WaveMode,
    /// g is frozen after this time (defaults to t_f).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
}

impl HiddenVariableWave {
    pub fn new(p0: f64, partitions: usize, t_i: f64, t_f: f64, mode: WaveMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(validation(format!("p0 = {p0} outside [0, 1]")));
        }
        if partitions < 2 || !partitions.is_multiple_of(2) {
            return Err(validation(format!("partition count must be even and >= 2, got {partitions}")));
        }
        if !(t_i.is_finite() && t_f.is_finite() && t_i < t_f) {
            return Err(validation(format!("wave window requires t_i < t_f, got [{t_i}, {t_f}]")));
        }
        if let WaveMode::Fourier { terms } = mode {
            if terms == 0 {
                return Err(validation("Fourier mode needs at least one term"));
            }
        }
        Ok(Self { p0, partitions, t_i, t_f, mode, cutoff: None })
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t_i, self.t_f)
    }

    pub fn mode(&self) -> WaveMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: WaveMode) -> Self {
        self.mode = mode;
        self
    }

    /// Same period and phase, but g holds its last value after `t_cut`.
    pub fn with_cutoff(mut self, t_cut: f64) -> Result<Self> {
        if !(t_cut > self.t_i && t_cut <= self.t_f) {
            return Err(Error::OutsideWindow { t: t_cut, t_i: self.t_i, t_f: self.t_f });
        }
        self.cutoff = Some(t_cut);
        Ok(self)
    }

    /// End of the oscillation: the cutoff if set, else t_f.
    pub fn end(&self) -> f64 {
        self.cutoff.unwrap_or(self.t_f)
    }

    /// L = (t_f − t_i)/N
    pub fn half_period(&self) -> f64 {
        (self.t_f - self.t_i) / self.partitions as f64
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_period()
    }

    pub fn plus_dwell(&self) -> f64 {
        self.period() * self.p0
    }

    pub fn minus_dwell(&self) -> f64 {
        self.period() * (1.0 - self.p0)
    }

    /// Analytic period average (2p0 − 1).
    pub fn period_mean(&self) -> f64 {
        (self.plus_dwell() - self.minus_dwell()) / self.period()
    }

    /// `{t_0 = t_i, t_1, t_2, …, t_f}` with +1 on `[t_{2n}, t_{2n+1})`.
    /// Zero-length dwells (p0 ∈ {0, 1}) are kept so the even/odd
    /// labelling is preserved.
    pub fn partition_times(&self) -> Vec<f64> {
        let periods = self.partitions / 2;
        let mut out = Vec::with_capacity(2 * periods + 1);
        for n in 0..periods {
            let start = self.t_i + n as f64 * self.period();
            out.push(start);
            out.push(start + self.plus_dwell());
        }
        out.push(self.t_f);
        out
    }

    /// Interior times where the exact square wave actually changes sign.
    pub fn jump_points(&self) -> Vec<f64> {
        if self.p0 == 0.0 || self.p0 == 1.0 {
            return Vec::new();
        }
        let times = self.partition_times();
        let end = self.end();
        times[1..times.len() - 1].iter().copied().filter(|&t| t < end).collect()
    }

    fn phase(&self, t: f64) -> f64 {
        ((t - self.t_i) / self.period()).rem_euclid(1.0)
    }

    fn square(&self, t: f64) -> f64 {
        if self.phase(t) < self.p0 {
            1.0
        } else {
            -1.0
        }
    }

    /// (a_m, b_m) of the Fourier series on period 2L anchored at t_i.
    pub fn fourier_coefficients(&self, m: usize) -> (f64, f64) {
        let l = self.half_period();
        let mf = m as f64;
        let t0 = self.t_i;
        let t1 = self.t_i + self.plus_dwell();
        let t2 = self.t_i + self.period();
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        let pref = 2.0 / (mf * PI);
        let a = pref * ((mf * PI / l * t1).sin() - sign * (mf * PI / (2.0 * l) * (t0 + t2)).sin());
        let b = pref * (-(mf * PI / l * t1).cos() + sign * (mf * PI / (2.0 * l) * (t0 + t2)).cos());
        (a, b)
    }

    fn fourier(&self, t: f64, terms: usize) -> f64 {
        let l = self.half_period();
        let mut g = 2.0 * self.p0 - 1.0;
        for m in 1..=terms {
            let (a, b) = self.fourier_coefficients(m);
            let arg = m as f64 * PI * t / l;
            g += a * arg.cos() + b * arg.sin();
        }
        g
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        match self.mode {
            WaveMode::ExactSquare => self.square(t),
            WaveMode::Fourier { terms } => self.fourier(t, terms),
        }
    }

    /// g(t) for `t_i ≤ t ≤ t_f`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= self.t_i && t <= self.t_f) {
            return Err(Error::OutsideWindow { t, t_i: self.t_i, t_f: self.t_f });
        }
        Ok(self.value_extended(t))
    }

    /// Left limit of the square wave at `t` (value on the dwell ending at `t`).
    fn left_limit(&self, t: f64) -> f64 {
        if t <= self.t_i {
            return self.square(self.t_i);
        }
        let phase = self.phase(t);
        let phase = if phase == 0.0 { 1.0 } else { phase };
        if phase <= self.p0 {
            1.0
        } else {
            -1.0
        }
    }

    /// g extended outside the window: it holds g(t_i) before the window and
    /// its last value after the end of the oscillation.
    pub fn value_extended(&self, t: f64) -> f64 {
        let end = self.end();
        if t < self.t_i {
            self.eval_unchecked(self.t_i)
        } else if t > end {
            match self.mode {
                WaveMode::ExactSquare => self.left_limit(end),
                WaveMode::Fourier { .. } => self.eval_unchecked(end),
            }
        } else {
            self.eval_unchecked(t)
        }
    }

    /// Value on an integration segment with midpoint `anchor`: the exact
    /// square wave is piecewise constant between breakpoints.
    pub fn value_on_segment(&self, t: f64, anchor: f64) -> f64 {
        match self.mode {
            WaveMode::ExactSquare => self.value_extended(anchor),
            WaveMode::Fourier { .. } => self.value_extended(t),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![self.t_i, self.end()];
        if self.mode == WaveMode::ExactSquare {
            b.extend(self.jump_points());
        }
        b
    }
}
