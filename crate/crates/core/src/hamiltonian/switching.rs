use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Time profile f(t) ∈ [0, 1] that turns the anti-Hermitian term on and off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SwitchingProfile {
    /// f(t) = [tanh(γ(t−t_i)) − tanh(γ(t−t_f))]/2
    TanhWindow { gamma: f64, t_i: f64, t_f: f64 },
    /// f(t) = 1 on [t_i, t_f), 0 elsewhere.
    HardWindow { t_i: f64, t_f: f64 },
    AlwaysOn,
}

impl SwitchingProfile {
    pub fn tanh(gamma: f64, t_i: f64, t_f: f64) -> Result<Self> {
        let p = SwitchingProfile::TanhWindow { gamma, t_i, t_f };
        p.validate()?;
        Ok(p)
    }

    pub fn hard(t_i: f64, t_f: f64) -> Result<Self> {
        let p = SwitchingProfile::HardWindow { t_i, t_f };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SwitchingProfile::TanhWindow { gamma, t_i, t_f } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(validation(format!("switching gamma must be positive, got {gamma}")));
                }
                check_window(t_i, t_f)
            }
            SwitchingProfile::HardWindow { t_i, t_f } => check_window(t_i, t_f),
            SwitchingProfile::AlwaysOn => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            SwitchingProfile::TanhWindow { gamma, t_i, t_f } => {
                ((gamma * (t - t_i)).tanh() - (gamma * (t - t_f)).tanh()) / 2.0
            }
            SwitchingProfile::HardWindow { t_i, t_f } => {
                if t >= t_i && t < t_f {
                    1.0
                } else {
                    0.0
                }
            }
            SwitchingProfile::AlwaysOn => 1.0,
        }
    }

    /// Value inside an integration segment whose midpoint is `anchor`; the
    /// hard window is decided by the anchor so steps never straddle a jump.
    pub fn value_on_segment(&self, t: f64, anchor: f64) -> f64 {
        match self {
            SwitchingProfile::HardWindow { .. } => self.value(anchor),
            _ => self.value(t),
        }
    }

    pub fn window(&self) -> Option<(f64, f64)> {
        match *self {
            SwitchingProfile::TanhWindow { t_i, t_f, .. } | SwitchingProfile::HardWindow { t_i, t_f } => Some((t_i, t_f)),
            SwitchingProfile::AlwaysOn => None,
        }
    }

    /// Times the integrator must stop at.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.window().map(|(a, b)| vec![a, b]).unwrap_or_default()
    }
}

fn check_window(t_i: f64, t_f: f64) -> Result<()> {
    if !(t_i.is_finite() && t_f.is_finite() && t_i < t_f) {
        return Err(validation(format!("measurement window requires t_i < t_f, got t_i = {t_i}, t_f = {t_f}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_window_bounds() {
        let gamma = 3.0;
        let p = SwitchingProfile::tanh(gamma, 7.0, 8.0).unwrap();
        let mid = p.value(7.5);
        assert!(mid >= 1.0 - 2.0 * (-gamma * 1.0f64).exp());
        assert!(p.value(7.0 - 10.0 / gamma) <= 1e-8);
        for k in 0..200 {
            let v = p.value(k as f64 * 0.1);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn hard_window_values() {
        let p = SwitchingProfile::hard(1.0, 2.0).unwrap();
        assert_eq!(p.value(0.999), 0.0);
        assert_eq!(p.value(1.0), 1.0);
        assert_eq!(p.value(2.0), 0.0);
        assert_eq!(p.value_on_segment(1.0, 0.5), 0.0);
    }

    #[test]
    fn window_must_be_ordered() {
        assert!(SwitchingProfile::tanh(3.0, 8.0, 7.0).is_err());
        assert!(SwitchingProfile::tanh(0.0, 7.0, 8.0).is_err());
        assert!(SwitchingProfile::hard(2.0, 2.0).is_err());
    }
}
