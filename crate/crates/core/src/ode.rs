//! Adaptive Dormand–Prince 5(4) integrator with continuous output.
//!
//! The integrator works on flat `f64` state vectors. Integration is split
//! into segments at user-supplied breakpoints; inside a segment the
//! right-hand side must be smooth. The right-hand side receives the
//! midpoint of the current segment as an `anchor`, so piecewise-constant
//! coefficients can be selected without evaluating exactly on a jump.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, max_step: f64::INFINITY, max_steps: 2_000_000 }
    }
}

impl OdeOptions {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(validation("tolerances must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(validation("max_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1. / 5.;
const C3: f64 = 3. / 10.;
const C4: f64 = 4. / 5.;
const C5: f64 = 8. / 9.;
const A21: f64 = 1. / 5.;
const A31: f64 = 3. / 40.;
const A32: f64 = 9. / 40.;
const A41: f64 = 44. / 45.;
const A42: f64 = -56. / 15.;
const A43: f64 = 32. / 9.;
const A51: f64 = 19372. / 6561.;
const A52: f64 = -25360. / 2187.;
const A53: f64 = 64448. / 6561.;
const A54: f64 = -212. / 729.;
const A61: f64 = 9017. / 3168.;
const A62: f64 = -355. / 33.;
const A63: f64 = 46732. / 5247.;
const A64: f64 = 49. / 176.;
const A65: f64 = -5103. / 18656.;
const A71: f64 = 35. / 384.;
const A73: f64 = 500. / 1113.;
const A74: f64 = 125. / 192.;
const A75: f64 = -2187. / 6784.;
const A76: f64 = 11. / 84.;
const E1: f64 = 71. / 57600.;
const E3: f64 = -71. / 16695.;
const E4: f64 = 71. / 1920.;
const E5: f64 = -17253. / 339200.;
const E6: f64 = 22. / 525.;
const E7: f64 = -1. / 40.;
const D1: f64 = -12715105075. / 11282082432.;
const D3: f64 = 87487479700. / 32700410799.;
const D4: f64 = -10690763975. / 1880347072.;
const D5: f64 = 701980252875. / 199316789632.;
const D6: f64 = -1453857185. / 822651844.;
const D7: f64 = 69997945. / 29380423.;

struct Work {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    cont: [Vec<f64>; 5],
}

impl Work {
    fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        Self {
            k: [v(), v(), v(), v(), v(), v(), v()],
            tmp: v(),
            y_new: v(),
            err: v(),
            cont: [v(), v(), v(), v(), v()],
        }
    }
}

fn rms_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc) * (e / sc)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = rhs(t, anchor, y)` from `t0` and returns the state at
/// every entry of `sample_times` (sorted, within `[t0, t_end]` where
/// `t_end` is the last sample).
///
/// `post_step` runs after every accepted step and may project the state
/// back onto a constraint set; it returns `true` when it changed `y`.
pub fn solve<F, P>(
    mut rhs: F,
    mut post_step: P,
    t0: f64,
    y0: &[f64],
    sample_times: &[f64],
    breakpoints: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
    P: FnMut(f64, &mut [f64]) -> bool,
{
    opts.validate()?;
    if sample_times.is_empty() {
        return Ok((Vec::new(), OdeStats::default()));
    }
    if sample_times.windows(2).any(|w| !(w[0] <= w[1])) || !(sample_times[0] >= t0) {
        return Err(validation("sample times must be sorted and start at or after t0"));
    }
    let t_end = *sample_times.last().unwrap();
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        out.push(y0.to_vec());
        next_sample += 1;
    }
    if t_end <= t0 {
        return Ok((out, stats));
    }

    let mut stops: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > t0 && b < t_end).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(t_end);

    let mut w = Work::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h_next: Option<f64> = None;

    let mut seg_start = t0;
    for &stop in &stops {
        if stop - seg_start <= 0.0 {
            continue;
        }
        let anchor = 0.5 * (seg_start + stop);
        rhs(t, anchor, &y, &mut w.k[0]);
        stats.evaluations += 1;
        let mut h = match h_next.take() {
            Some(h) => h,
            None => {
                stats.evaluations += 1;
                initial_step(&mut rhs, t, anchor, &y, &mut w, opts, stop - t)
            }
        };
        let mut last_rejected = false;

        while t < stop {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::TooManySteps { max_steps: opts.max_steps, t_end });
            }
            h = h.min(opts.max_step);
            let h_unclamped = h;
            let remaining = stop - t;
            if remaining <= 1e-13 * t.abs().max(1.0) {
                t = stop;
                break;
            }
            let lands = h >= remaining * (1.0 - 1e-12) || remaining - h < 1e-3 * h;
            if lands {
                h = remaining;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h });
            }

            let finite = attempt(&mut rhs, t, anchor, h, &y, &mut w);
            stats.evaluations += 6;
            let e = if finite { rms_norm(&w.err, &y, &w.y_new, opts) } else { f64::INFINITY };

            if e <= 1.0 {
                let t_new = if lands { stop } else { t + h };
                build_dense(&y, h, &mut w);
                while next_sample < sample_times.len() && sample_times[next_sample] < t_new {
                    let theta = (sample_times[next_sample] - t) / h;
                    out.push(interpolate(&w.cont, theta));
                    next_sample += 1;
                }
                std::mem::swap(&mut y, &mut w.y_new);
                t = t_new;
                let changed = post_step(t, &mut y);
                while next_sample < sample_times.len() && sample_times[next_sample] <= t {
                    out.push(y.clone());
                    next_sample += 1;
                }
                if changed {
                    rhs(t, anchor, &y, &mut w.k[0]);
                    stats.evaluations += 1;
                } else {
                    let (first, rest) = w.k.split_at_mut(1);
                    first[0].copy_from_slice(&rest[5]);
                }
                stats.accepted += 1;
                let mut fac = if e > 0.0 { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
                if last_rejected {
                    fac = fac.min(1.0);
                }
                last_rejected = false;
                if lands {
                    let proposed = h * fac;
                    h_next = Some(if fac >= 1.0 { proposed.max(h_unclamped) } else { proposed });
                } else {
                    h *= fac;
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                h *= if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            }
        }
        seg_start = stop;
    }
    while next_sample < sample_times.len() {
        out.push(y.clone());
        next_sample += 1;
    }
    Ok((out, stats))
}

fn initial_step<F>(rhs: &mut F, t: f64, anchor: f64, y: &[f64], w: &mut Work, opts: &OdeOptions, span: f64) -> f64
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    let n = y.len().max(1) as f64;
    let sc: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (w.k[0].iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(opts.max_step);
    for i in 0..y.len() {
        w.tmp[i] = y[i] + h0 * w.k[0][i];
    }
    rhs(t + h0, anchor, &w.tmp, &mut w.k[1]);
    let d2 = (w.k[1].iter().zip(&w.k[0]).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span).min(opts.max_step)
}

/// One trial step; fills `w.y_new`, `w.err` and stages. Returns `false`
/// when the trial produced non-finite values.
fn attempt<F>(rhs: &mut F, t: f64, anchor: f64, h: f64, y: &[f64], w: &mut Work) -> bool
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$(($a:expr, $k:expr)),*]) => {{
            for i in 0..n {
                w.tmp[i] = y[i] + h * (0.0 $(+ $a * w.k[$k][i])*);
            }
            let (_, rest) = w.k.split_at_mut($dst);
            rhs(t + $c * h, anchor, &w.tmp, &mut rest[0]);
        }};
    }
    stage!(1, C2, [(A21, 0)]);
    stage!(2, C3, [(A31, 0), (A32, 1)]);
    stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
    stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
    stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
    for i in 0..n {
        w.y_new[i] = y[i]
            + h * (A71 * w.k[0][i] + A73 * w.k[2][i] + A74 * w.k[3][i] + A75 * w.k[4][i] + A76 * w.k[5][i]);
    }
    let (_, rest) = w.k.split_at_mut(6);
    rhs(t + h, anchor, &w.y_new, &mut rest[0]);
    let mut finite = true;
    for i in 0..n {
        w.err[i] = h
            * (E1 * w.k[0][i] + E3 * w.k[2][i] + E4 * w.k[3][i] + E5 * w.k[4][i] + E6 * w.k[5][i]
                + E7 * w.k[6][i]);
        finite &= w.y_new[i].is_finite() && w.err[i].is_finite();
    }
    finite
}

fn build_dense(y: &[f64], h: f64, w: &mut Work) {
    for i in 0..y.len() {
        let ydiff = w.y_new[i] - y[i];
        let bspl = h * w.k[0][i] - ydiff;
        w.cont[0][i] = y[i];
        w.cont[1][i] = ydiff;
        w.cont[2][i] = bspl;
        w.cont[3][i] = ydiff - h * w.k[6][i] - bspl;
        w.cont[4][i] = h
            * (D1 * w.k[0][i] + D3 * w.k[2][i] + D4 * w.k[3][i] + D5 * w.k[4][i] + D6 * w.k[5][i]
                + D7 * w.k[6][i]);
    }
}

fn interpolate(cont: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let theta1 = 1.0 - theta;
    (0..cont[0].len())
        .map(|i| {
            cont[0][i] + theta * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])))
        })
        .collect()
}

/// `n` evenly spaced samples covering `[t0, t1]` inclusive (`n ≥ 2`), or
/// a grid with spacing `step` that always ends exactly at `t1`.
pub fn uniform_grid(t0: f64, t1: f64, step: f64) -> Result<Vec<f64>> {
    if !(t1 > t0) || !(step > 0.0) || !step.is_finite() {
        return Err(validation(format!("bad sampling grid [{t0}, {t1}] step {step}")));
    }
    let n = ((t1 - t0) / step).round().max(1.0) as usize;
    if n > 10_000_000 {
        return Err(validation("sampling grid too fine"));
    }
    Ok((0..=n).map(|k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 }).collect())
}
