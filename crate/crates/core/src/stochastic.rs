//! Hidden-variable extension: single runs under the g(t)-modulated
//! two-level Hamiltonian and seeded Monte Carlo ensembles over the
//! partition count N and the end time t_f.
//!
//! Each run draws its hidden variables from its own ChaCha8 stream
//! (master seed, stream = run index), so results do not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::evolution::evolve_ode_at;
use crate::hamiltonian::{stochastic_hamiltonian, HiddenVariableWave, SwitchingProfile, WaveMode};
use crate::matrix::{c64, DensityMatrix, PureStateAmplitudes};
use crate::ode::OdeOptions;

/// Smallest population a state keeps at a sign change of g.
pub const DEFAULT_POPULATION_FLOOR: f64 = 1e-9;

/// Population above which a run counts as collapsed.
pub const OUTCOME_THRESHOLD: f64 = 0.99;

/// Runs start `SETTLE/γ` before t_i and stop `SETTLE/γ` after t_f, where
/// the tanh switch is below e^{−20}.
pub const SETTLE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Zero,
    One,
    Indeterminate,
}

pub fn classify_outcome(populations: [f64; 2]) -> Outcome {
    if populations[0] > OUTCOME_THRESHOLD {
        Outcome::Zero
    } else if populations[1] > OUTCOME_THRESHOLD {
        Outcome::One
    } else {
        Outcome::Indeterminate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcome: Outcome,
    pub populations: [f64; 2],
}

/// Span simulated for a window `[t_i, t_f]`.
pub fn run_span(gamma: f64, t_i: f64, t_f: f64) -> (f64, f64) {
    (t_i - SETTLE / gamma, t_f + SETTLE / gamma)
}

/// Lifts the smaller population of a two-level state to `floor`, keeping
/// purity and the coherence phase. Exact dynamics never reach an
/// eigenvector, so without this the log ratio ln(p0/p1) keeps the whole
/// history and the state cannot swing back within one dwell.
pub fn apply_population_floor(rho: &DensityMatrix, floor: f64) -> Result<DensityMatrix> {
    if rho.dim() != 2 {
        return Err(validation("population floor needs a two-level state"));
    }
    let m = rho.matrix();
    let (p0, p1) = (m[(0, 0)].re, m[(1, 1)].re);
    if p0.min(p1) >= floor {
        return Ok(rho.clone());
    }
    let (q0, q1) = if p0 < p1 { (floor, 1.0 - floor) } else { (1.0 - floor, floor) };
    let scale = if p0 * p1 > 0.0 { (q0 * q1 / (p0 * p1)).sqrt() } else { 0.0 };
    let mut out = m.clone();
    out[(0, 0)] = c64(q0, 0.0);
    out[(1, 1)] = c64(q1, 0.0);
    out[(0, 1)] *= scale;
    out[(1, 0)] *= scale;
    DensityMatrix::new(out)
}

fn floor_is_valid(floor: f64) -> Result<()> {
    if floor > 0.0 && floor < 1e-2 {
        Ok(())
    } else {
        Err(validation(format!("population floor must lie in (0, 0.01), got {floor}")))
    }
}

/// Wave cut at `t_f` when the run ends before the wave's window does.
fn wave_for_run(wave: HiddenVariableWave, t_f: f64) -> Result<HiddenVariableWave> {
    if t_f < wave.window().1 {
        wave.with_cutoff(t_f)
    } else {
        Ok(wave)
    }
}

/// One run with the measurement window `[t_i, t_f]` and the wave `wave`
/// (whose own window may extend beyond `t_f`; g is frozen after `t_f`).
/// The ODE is restarted at every sign change of g, where the floor is applied.
#[allow(clippy::too_many_arguments)]
pub fn single_run_with_wave(
    amplitudes: &PureStateAmplitudes,
    gamma: f64,
    t_i: f64,
    t_f: f64,
    wave: HiddenVariableWave,
    rho0: &DensityMatrix,
    floor: f64,
    opts: &OdeOptions,
) -> Result<RunResult> {
    floor_is_valid(floor)?;
    let profile = SwitchingProfile::tanh(gamma, t_i, t_f)?;
    let wave = wave_for_run(wave, t_f)?;
    let jumps = wave.jump_points();
    let h = stochastic_hamiltonian(amplitudes, gamma, profile, wave)?;
    let (t0, t1) = run_span(gamma, t_i, t_f);
    let mut marks = vec![t0];
    marks.extend(jumps.into_iter().filter(|&t| t > t0 && t < t1));
    marks.push(t1);
    let mut rho = rho0.clone();
    for (k, w) in marks.windows(2).enumerate() {
        let traj = evolve_ode_at(&h, &rho, w[0], &[w[1]], opts)?;
        rho = traj.density(0)?;
        if k + 2 < marks.len() {
            rho = apply_population_floor(&rho, floor)?;
        }
    }
    let p = rho.populations();
    let populations = [p[0], p[1]];
    Ok(RunResult { outcome: classify_outcome(populations), populations })
}

/// ∫ f over `[a, b]` for the tanh switch on `[t_i, t_f]`.
fn switch_integral(gamma: f64, t_i: f64, t_f: f64, a: f64, b: f64) -> f64 {
    fn ln_cosh(x: f64) -> f64 {
        let y = x.abs();
        y + (-2.0 * y).exp().ln_1p() - std::f64::consts::LN_2
    }
    let big_f = |t: f64| (ln_cosh(gamma * (t - t_i)) - ln_cosh(gamma * (t - t_f))) / (2.0 * gamma);
    big_f(b) - big_f(a)
}

/// Same run as [`single_run_with_wave`] for an exact-square wave, without
/// the ODE. The modulated Hamiltonian is diagonal, so
/// d/dt ln(p0/p1) = 2γ f(t) g(t) and each constant-g segment integrates in
/// closed form; the floor clamps the log ratio at every sign change.
pub fn closed_form_run(
    gamma: f64,
    t_i: f64,
    t_f: f64,
    wave: HiddenVariableWave,
    rho0: &DensityMatrix,
    floor: f64,
) -> Result<RunResult> {
    floor_is_valid(floor)?;
    if wave.mode() != WaveMode::ExactSquare {
        return Err(validation("closed-form runs need an exact-square wave"));
    }
    if rho0.dim() != 2 {
        return Err(validation("stochastic runs are two-level"));
    }
    let _ = SwitchingProfile::tanh(gamma, t_i, t_f)?;
    let wave = wave_for_run(wave, t_f)?;
    let p = rho0.populations();
    if p[1] <= 0.0 || p[0] <= 0.0 {
        let populations = [p[0], p[1]];
        return Ok(RunResult { outcome: classify_outcome(populations), populations });
    }
    let (_, t1) = run_span(gamma, t_i, t_f);
    let ell = log_ratio_at(gamma, t_i, &wave, (p[0] / p[1]).ln(), floor, t1);
    // p0 = 1/(1 + e^{−ℓ}) without overflow
    let p0 = if ell >= 0.0 { 1.0 / (1.0 + (-ell).exp()) } else { let e = ell.exp(); e / (1.0 + e) };
    let p1 = if ell >= 0.0 { let e = (-ell).exp(); e / (1.0 + e) } else { 1.0 / (1.0 + ell.exp()) };
    let populations = [p0, p1];
    Ok(RunResult { outcome: classify_outcome(populations), populations })
}

/// ln(p0/p1) at time `t` of a closed-form run whose wave is already cut at
/// t_f, starting from `ell0` at the beginning of the run span.
pub fn log_ratio_at(gamma: f64, t_i: f64, wave: &HiddenVariableWave, ell0: f64, floor: f64, t: f64) -> f64 {
    let t_f = wave.end();
    let cap = ((1.0 - floor) / floor).ln();
    let (t0, _) = run_span(gamma, t_i, t_f);
    let mut marks = vec![t0];
    marks.extend(wave.jump_points().into_iter().filter(|&j| j > t0 && j < t));
    marks.push(t.max(t0));
    let mut ell = ell0;
    for (k, w) in marks.windows(2).enumerate() {
        let g = wave.value_extended(0.5 * (w[0] + w[1]));
        ell += 2.0 * gamma * g * switch_integral(gamma, t_i, t_f, w[0], w[1]);
        if k + 2 < marks.len() {
            ell = ell.clamp(-cap, cap);
        }
    }
    ell
}

/// The run described in the single-run contract: g has N partitions on
/// exactly `[t_i, t_f]`, integrated with the ODE engine.
#[allow(clippy::too_many_arguments)]
pub fn single_run(
    amplitudes: &PureStateAmplitudes,
    gamma: f64,
    t_i: f64,
    t_f: f64,
    partitions: usize,
    g_mode: WaveMode,
    rho0: &DensityMatrix,
    opts: &OdeOptions,
) -> Result<RunResult> {
    let wave = HiddenVariableWave::new(amplitudes.p0(), partitions, t_i, t_f, g_mode)?;
    single_run_with_wave(amplitudes, gamma, t_i, t_f, wave, rho0, DEFAULT_POPULATION_FLOOR, opts)
}

/// How ensemble runs are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RunEngine {
    /// Exact log-ratio integration; exact-square waves only.
    #[default]
    ClosedForm,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionDistribution {
    Fixed { n: usize },
    UniformEven { min: usize, max: usize },
}

impl PartitionDistribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PartitionDistribution::Fixed { n } => n >= 2 && n % 2 == 0,
            PartitionDistribution::UniformEven { min, max } => min >= 2 && min % 2 == 0 && max % 2 == 0 && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(validation(format!("partition distribution {self:?} needs even counts >= 2 with min <= max")))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            PartitionDistribution::Fixed { n } => n,
            PartitionDistribution::UniformEven { min, max } => min + 2 * rng.random_range(0..=(max - min) / 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TfJitter {
    None,
    /// t_f = t_i + window_base − 2L·u with u ~ U[0, 1).
    #[default]
    FinalPeriod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub amplitudes: PureStateAmplitudes,
    pub gamma: f64,
    pub t_i: f64,
    pub window_base: f64,
    pub n_runs: usize,
    pub partitions: PartitionDistribution,
    pub tf_jitter: TfJitter,
    pub seed: u64,
    pub g_mode: WaveMode,
    pub engine: RunEngine,
    pub population_floor: f64,
    pub log_runs: bool,
    pub ode: OdeOptions,
}

impl EnsembleSpec {
    pub fn new(amplitudes: PureStateAmplitudes, gamma: f64, t_i: f64, window_base: f64, n_runs: usize, seed: u64) -> Self {
        Self {
            amplitudes,
            gamma,
            t_i,
            window_base,
            n_runs,
            partitions: PartitionDistribution::UniformEven { min: 20, max: 60 },
            tf_jitter: TfJitter::FinalPeriod,
            seed,
            g_mode: WaveMode::ExactSquare,
            engine: RunEngine::ClosedForm,
            population_floor: DEFAULT_POPULATION_FLOOR,
            log_runs: false,
            ode: OdeOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(validation("n_runs must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(validation(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.window_base > 0.0 && self.t_i.is_finite() && self.window_base.is_finite()) {
            return Err(validation("window_base must be positive"));
        }
        self.partitions.validate()?;
        floor_is_valid(self.population_floor)?;
        if self.engine == RunEngine::ClosedForm && self.g_mode != WaveMode::ExactSquare {
            return Err(validation("the closed-form engine needs g_mode = exact-square"));
        }
        self.ode.validate()
    }

    /// Smallest γ·(shorter dwell) over the partition distribution.
    pub fn collapse_figure_of_merit(&self) -> f64 {
        let n_max = match self.partitions {
            PartitionDistribution::Fixed { n } => n,
            PartitionDistribution::UniformEven { max, .. } => max,
        };
        let l = self.window_base / n_max as f64;
        let p = self.amplitudes.p0().min(self.amplitudes.p1());
        self.gamma * 2.0 * l * p
    }

    /// Hidden variables (N, t_f) of run `index`.
    pub fn hidden_variables(&self, index: usize) -> (usize, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let n = self.partitions.draw(&mut rng);
        let l = self.window_base / n as f64;
        let t_f = match self.tf_jitter {
            TfJitter::None => self.t_i + self.window_base,
            TfJitter::FinalPeriod => {
                let u: f64 = rng.random();
                self.t_i + self.window_base - 2.0 * l * u
            }
        };
        (n, t_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub partitions: usize,
    pub t_f: f64,
    pub outcome: Outcome,
    pub populations: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_runs: usize,
    pub count0: usize,
    pub count1: usize,
    pub count_indeterminate: usize,
    pub freq0: f64,
    pub freq1: f64,
    pub indeterminate: f64,
    /// √(freq0(1 − freq0)/n_runs)
    pub stderr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_run_log: Option<Vec<RunRecord>>,
}

fn run_one(spec: &EnsembleSpec, rho0: &DensityMatrix, index: usize) -> Result<RunRecord> {
    let (n, t_f) = spec.hidden_variables(index);
    let wave = HiddenVariableWave::new(spec.amplitudes.p0(), n, spec.t_i, spec.t_i + spec.window_base, spec.g_mode)?;
    let r = match spec.engine {
        RunEngine::ClosedForm => closed_form_run(spec.gamma, spec.t_i, t_f, wave, rho0, spec.population_floor)?,
        RunEngine::Ode => single_run_with_wave(
            &spec.amplitudes,
            spec.gamma,
            spec.t_i,
            t_f,
            wave,
            rho0,
            spec.population_floor,
            &spec.ode,
        )?,
    };
    Ok(RunRecord { index, partitions: n, t_f, outcome: r.outcome, populations: r.populations })
}

pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    spec.validate()?;
    let rho0 = spec.amplitudes.density();
    #[cfg(feature = "parallel")]
    let records: Vec<RunRecord> = {
        use rayon::prelude::*;
        (0..spec.n_runs).into_par_iter().map(|i| run_one(spec, &rho0, i)).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let records: Vec<RunRecord> = (0..spec.n_runs).map(|i| run_one(spec, &rho0, i)).collect::<Result<_>>()?;
    Ok(summarize(records, spec.log_runs))
}

pub fn summarize(records: Vec<RunRecord>, keep_log: bool) -> EnsembleResult {
    let n = records.len();
    let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
    let (count0, count1, count_indeterminate) = (count(Outcome::Zero), count(Outcome::One), count(Outcome::Indeterminate));
    let nf = n as f64;
    let freq0 = count0 as f64 / nf;
    let freq1 = count1 as f64 / nf;
    EnsembleResult {
        n_runs: n,
        count0,
        count1,
        count_indeterminate,
        freq0,
        freq1,
        indeterminate: count_indeterminate as f64 / nf,
        stderr: (freq0 * (1.0 - freq0) / nf).sqrt(),
        per_run_log: keep_log.then_some(records),
    }
}

/// |freq0 − |c1|²|
pub fn born_deviation(result: &EnsembleResult, amplitudes: &PureStateAmplitudes) -> f64 {
    (result.freq0 - amplitudes.p0()).abs()
}
