//! Evolution engines.
//!
//! * [`evolve_ode`]: adaptive integration of the nonlinear von Neumann
//!   equation with per-step trace and hermiticity hygiene.
//! * [`evolve_closed_form`]: the normalized propagator
//!   `e^{−iHt} ρ0 e^{iH†t} / Tr(·)` for constant `H`.
//! * [`evolve_two_level`]: the analytic two-level propagator in terms of the
//!   Pauli expansion `H = R0·I + R·σ`.
//! * [`evolve_unnormalized`]: the linear equation `ρ̇ = −i(Hρ − ρH†)`
//!   without renormalization.
//! * [`case_formula`]: closed forms for the diagonal two-level cases.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::hamiltonian::{SplitHamiltonian, SwitchedHamiltonian, SwitchingProfile};
use crate::matrix::{
    anticommutator, c64, check_matrix, check_same_dim, commutator, hermitian_eigenvalues, hermitize, mat_exp,
    pauli_coordinates, pauli_x, pauli_y, pauli_z, trace, CMatrix, DensityMatrix, PureStateAmplitudes,
};
use crate::ode::{self, OdeOptions, OdeStats};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Denominators below this count as an annihilated state.
pub const MIN_TRACE: f64 = 1e-300;

/// Integrator settings plus the uniform sampling step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveControl {
    #[serde(flatten)]
    pub ode: OdeOptions,
    pub sample_every: f64,
}

impl Default for EvolveControl {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), sample_every: 0.01 }
    }
}

impl EvolveControl {
    pub fn with_sample_every(mut self, dt: f64) -> Self {
        self.sample_every = dt;
        self
    }

    pub fn with_ode(mut self, ode: OdeOptions) -> Self {
        self.ode = ode;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub ode: OdeStats,
    /// Largest |Tr ρ − 1| seen before a renormalization.
    pub max_trace_drift: f64,
}

/// Named reference state whose overlap is reported per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub name: String,
    pub state: DensityMatrix,
}

/// Per-sample derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleObservables {
    pub bloch: Option<[f64; 3]>,
    pub populations: Vec<f64>,
    pub purity: f64,
    pub trace: f64,
    pub overlaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<CMatrix>,
    normalized: bool,
    references: Vec<Reference>,
    stats: TrajectoryStats,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<CMatrix>, normalized: bool) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::Dimension { expected: times.len().to_string(), got: states.len().to_string() });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(validation("trajectory times must be strictly increasing"));
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.shape() != first.shape()) {
                return Err(validation("trajectory states differ in dimension"));
            }
        }
        Ok(Self { times, states, normalized, references: Vec::new(), stats: TrajectoryStats::default() })
    }

    pub fn with_reference(mut self, name: impl Into<String>, state: DensityMatrix) -> Result<Self> {
        if state.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim().to_string(), got: state.dim().to_string() });
        }
        let name = name.into();
        if self.references.iter().any(|r| r.name == name) {
            return Err(validation(format!("reference `{name}` registered twice")));
        }
        self.references.push(Reference { name, state });
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn references(&self) -> &[Reference] {
        &self.references
    }

    pub fn stats(&self) -> &TrajectoryStats {
        &self.stats
    }

    pub(crate) fn set_stats(&mut self, stats: TrajectoryStats) {
        self.stats = stats;
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.nrows())
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn final_state(&self) -> Option<&CMatrix> {
        self.states.last()
    }

    /// Sample `i` as a validated density matrix; unnormalized samples are
    /// divided by their trace first.
    pub fn density(&self, i: usize) -> Result<DensityMatrix> {
        let s = &self.states[i];
        if self.normalized {
            DensityMatrix::new(s.clone())
        } else {
            let tr = trace(s).re;
            if tr.abs() < MIN_TRACE {
                return Err(Error::DegenerateEvolution { t: self.times[i], trace: tr });
            }
            DensityMatrix::new(s.unscale(tr))
        }
    }

    pub fn trace(&self, i: usize) -> f64 {
        trace(&self.states[i]).re
    }

    pub fn populations(&self, i: usize) -> Vec<f64> {
        self.states[i].diagonal().iter().map(|z| z.re).collect()
    }

    pub fn population_series(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[(k, k)].re).collect()
    }

    /// Tr ρ² of the state, or of the normalized state for unnormalized samples.
    pub fn purity(&self, i: usize) -> f64 {
        let s = &self.states[i];
        let p = (s * s).trace().re;
        if self.normalized {
            p
        } else {
            let tr = trace(s).re;
            p / (tr * tr)
        }
    }

    /// Raw Pauli coordinates (two-level only).
    pub fn bloch(&self, i: usize) -> Option<[f64; 3]> {
        if self.dim() == 2 {
            pauli_coordinates(&self.states[i]).ok()
        } else {
            None
        }
    }

    pub fn overlap_series(&self, name: &str) -> Option<Vec<f64>> {
        let r = self.references.iter().find(|r| r.name == name)?;
        Some(self.states.iter().map(|s| (r.state.matrix() * s).trace().re).collect())
    }

    pub fn observables(&self, i: usize) -> SampleObservables {
        let s = &self.states[i];
        SampleObservables {
            bloch: self.bloch(i),
            populations: self.populations(i),
            purity: self.purity(i),
            trace: self.trace(i),
            overlaps: self.references.iter().map(|r| (r.state.matrix() * s).trace().re).collect(),
        }
    }

    /// Index of the first sample with time ≥ `t`.
    pub fn index_at_or_after(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s >= t)
    }
}

/// ρ̇ = −i[H_h,ρ] − {H_a,ρ} + 2 tr(ρH_a) ρ
pub fn rhs_nonlinear(h: &SplitHamiltonian, rho: &DensityMatrix) -> Result<CMatrix> {
    check_same_dim(h.full(), rho.matrix())?;
    let r = rho.matrix();
    let s = trace(&(r * h.anti_hermitian()));
    Ok(commutator(h.hermitian(), r) * (-I) - anticommutator(h.anti_hermitian(), r) + r * (s * 2.0))
}

/// ρ̇ = −i(Hρ − ρH†), the linear part of the nonlinear equation.
pub fn rhs_unnormalized(h: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_same_dim(h, rho)?;
    Ok((h * rho - rho * h.adjoint()) * (-I))
}

/// Row-major complex matrices stored as interleaved (re, im) pairs.
pub(crate) struct Flat {
    pub(crate) n: usize,
}

impl Flat {
    pub(crate) fn pack(&self, m: &CMatrix) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                y.push(m[(i, j)].re);
                y.push(m[(i, j)].im);
            }
        }
        y
    }

    pub(crate) fn unpack(&self, y: &[f64]) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| {
            let k = 2 * (i * self.n + j);
            c64(y[k], y[k + 1])
        })
    }

    fn flatten(&self, m: &CMatrix) -> Vec<Complex64> {
        (0..self.n * self.n).map(|k| m[(k / self.n, k % self.n)]).collect()
    }
}

/// Allocation-free evaluation of H(t) and the right-hand sides.
struct Engine {
    n: usize,
    base: Vec<Complex64>,
    gain: Vec<Complex64>,
    generator: Option<Vec<Complex64>>,
    h: Vec<Complex64>,
}

impl Engine {
    fn new(ham: &SwitchedHamiltonian) -> Self {
        let flat = Flat { n: ham.dim() };
        Self {
            n: ham.dim(),
            base: flat.flatten(ham.base()),
            gain: flat.flatten(ham.gain()),
            generator: ham.modulation().map(|m| flat.flatten(&m.generator)),
            h: vec![Complex64::default(); ham.dim() * ham.dim()],
        }
    }

    fn load(&mut self, ham: &SwitchedHamiltonian, t: f64, anchor: f64) {
        let f = ham.profile().value_on_segment(t, anchor);
        let g = ham.modulation().map(|m| m.wave.value_on_segment(t, anchor));
        for k in 0..self.h.len() {
            let mut drive = self.gain[k];
            if let (Some(gen), Some(g)) = (&self.generator, g) {
                drive += gen[k] * g;
            }
            self.h[k] = self.base[k] + drive * f;
        }
    }

    #[inline]
    fn rho(y: &[f64], idx: usize) -> Complex64 {
        c64(y[2 * idx], y[2 * idx + 1])
    }

    /// Writes −i(Hρ − ρH†) into `dy`; returns tr(ρH).
    fn linear(&self, y: &[f64], dy: &mut [f64]) -> Complex64 {
        let n = self.n;
        let mut tr_rho_h = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::default();
                for k in 0..n {
                    acc += self.h[i * n + k] * Self::rho(y, k * n + j);
                    acc -= Self::rho(y, i * n + k) * self.h[j * n + k].conj();
                }
                let v = -I * acc;
                dy[2 * (i * n + j)] = v.re;
                dy[2 * (i * n + j) + 1] = v.im;
            }
            for k in 0..n {
                tr_rho_h += Self::rho(y, i * n + k) * self.h[k * n + i];
            }
        }
        tr_rho_h
    }

    /// Nonlinear equation in the equivalent form −i(Hρ − ρH†) + 2 tr(ρH_a) ρ,
    /// with tr(ρH_a) = −Im tr(ρH) for Hermitian ρ.
    fn nonlinear(&self, y: &[f64], dy: &mut [f64]) {
        let s = -self.linear(y, dy).im;
        for (d, v) in dy.iter_mut().zip(y) {
            *d += 2.0 * s * v;
        }
    }
}

/// Symmetrizes the flat state in place; optionally rescales to unit trace.
/// Returns the trace before rescaling.
pub(crate) fn hygiene(n: usize, y: &mut [f64], renormalize: bool) -> f64 {
    for i in 0..n {
        y[2 * (i * n + i) + 1] = 0.0;
        for j in (i + 1)..n {
            let a = 2 * (i * n + j);
            let b = 2 * (j * n + i);
            let re = 0.5 * (y[a] + y[b]);
            let im = 0.5 * (y[a + 1] - y[b + 1]);
            y[a] = re;
            y[a + 1] = im;
            y[b] = re;
            y[b + 1] = -im;
        }
    }
    let tr: f64 = (0..n).map(|i| y[2 * (i * n + i)]).sum();
    if renormalize && tr != 0.0 {
        for v in y.iter_mut() {
            *v /= tr;
        }
    }
    tr
}

/// Negative eigenvalues this small are integrator error and get clipped;
/// anything below is reported as an invalid state.
fn clip_tolerance(opts: &OdeOptions) -> f64 {
    crate::matrix::PSD_TOL.max(10.0 * (opts.rel_tol + opts.abs_tol))
}

/// Zeroes eigenvalues in `[−tol, 0)` and restores unit trace.
fn clip_small_negative(m: CMatrix, tol: f64) -> CMatrix {
    let min = hermitian_eigenvalues(&m)[0];
    if min >= 0.0 || min < -tol {
        return m;
    }
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| c64(v.max(0.0), 0.0));
    let v = &eig.eigenvectors;
    let r = v * CMatrix::from_diagonal(&vals) * v.adjoint();
    let r = hermitize(&r);
    let tr = trace(&r).re;
    r.unscale(tr)
}

fn check_span(t0: f64, t1: f64) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(validation(format!("time span requires t0 < t1, got [{t0}, {t1}]")));
    }
    Ok(())
}

/// Nonlinear evolution sampled every `ctrl.sample_every` on `[t0, t1]`.
pub fn evolve_ode(
    h: &SwitchedHamiltonian,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    ctrl: &EvolveControl,
) -> Result<Trajectory> {
    check_span(t0, t1)?;
    let grid = ode::uniform_grid(t0, t1, ctrl.sample_every)?;
    evolve_ode_at(h, rho0, t0, &grid, &ctrl.ode)
}

/// Nonlinear evolution from `t0` sampled at the given times (sorted, ≥ t0).
pub fn evolve_ode_at(
    h: &SwitchedHamiltonian,
    rho0: &DensityMatrix,
    t0: f64,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory> {
    integrate(h, rho0, t0, times, opts, true)
}

/// Linear (trace non-preserving) evolution on `[t0, t1]`.
pub fn evolve_unnormalized(
    h: &SwitchedHamiltonian,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    ctrl: &EvolveControl,
) -> Result<Trajectory> {
    check_span(t0, t1)?;
    let grid = ode::uniform_grid(t0, t1, ctrl.sample_every)?;
    integrate(h, rho0, t0, &grid, &ctrl.ode, false)
}

fn integrate(
    h: &SwitchedHamiltonian,
    rho0: &DensityMatrix,
    t0: f64,
    times: &[f64],
    opts: &OdeOptions,
    normalized: bool,
) -> Result<Trajectory> {
    check_same_dim(h.base(), rho0.matrix())?;
    let n = h.dim();
    let flat = Flat { n };
    let mut engine = Engine::new(h);
    let mut drift = 0.0f64;
    let rhs = |t: f64, anchor: f64, y: &[f64], dy: &mut [f64]| {
        engine.load(h, t, anchor);
        if normalized {
            engine.nonlinear(y, dy);
        } else {
            engine.linear(y, dy);
        }
    };
    let post = |_t: f64, y: &mut [f64]| {
        let tr = hygiene(n, y, normalized);
        if normalized {
            drift = drift.max((tr - 1.0).abs());
        }
        true
    };
    let (rows, ode_stats) = ode::solve(rhs, post, t0, &flat.pack(rho0.matrix()), times, &h.breakpoints(), opts)?;
    let mut states = Vec::with_capacity(rows.len());
    for (mut y, &t) in rows.into_iter().zip(times) {
        let tr = hygiene(n, &mut y, normalized);
        if !tr.is_finite() || tr.abs() < MIN_TRACE {
            return Err(Error::DegenerateEvolution { t, trace: tr });
        }
        let m = flat.unpack(&y);
        if normalized {
            let m = clip_small_negative(m, clip_tolerance(opts));
            // validates and reports the time on failure
            DensityMatrix::new(m.clone()).map_err(|e| Error::InvalidState(format!("at t = {t}: {e}")))?;
            states.push(m);
        } else {
            states.push(m);
        }
    }
    let mut traj = Trajectory::new(dedup_times(times)?, states, normalized)?;
    traj.stats = TrajectoryStats { ode: ode_stats, max_trace_drift: drift };
    Ok(traj)
}

fn dedup_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(validation("sample times must be strictly increasing"));
    }
    Ok(times.to_vec())
}

/// e^{−iHt} ρ0 e^{iH†t} without normalization.
pub fn propagate_unnormalized(h: &CMatrix, rho0: &DensityMatrix, t: f64) -> Result<CMatrix> {
    check_matrix(h)?;
    check_same_dim(h, rho0.matrix())?;
    let u = mat_exp(&(h * c64(0.0, -t)))?;
    Ok(&u * rho0.matrix() * u.adjoint())
}

/// e^{−iHt} ρ0 e^{iH†t} / Tr(·) for constant `H`.
pub fn evolve_closed_form(h: &CMatrix, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let n = propagate_unnormalized(h, rho0, t)?;
    normalize(n, t)
}

fn normalize(n: CMatrix, t: f64) -> Result<DensityMatrix> {
    let tr = trace(&n).re;
    if !(tr.is_finite() && tr > MIN_TRACE) {
        return Err(Error::DegenerateEvolution { t, trace: tr });
    }
    DensityMatrix::new(hermitize(&n.unscale(tr)))
}

/// Pauli expansion H = R0·I + R1σx + R2σy + R3σz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams {
    pub r0: Complex64,
    pub r: [Complex64; 3],
}

impl TwoLevelParams {
    pub fn new(r0: Complex64, r: [Complex64; 3]) -> Self {
        Self { r0, r }
    }

    pub fn from_matrix(h: &CMatrix) -> Result<Self> {
        check_matrix(h)?;
        if h.nrows() != 2 {
            return Err(Error::Dimension { expected: "2x2".into(), got: format!("{}x{}", h.nrows(), h.ncols()) });
        }
        let (h00, h01, h10, h11) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
        Ok(Self { r0: (h00 + h11) * 0.5, r: [(h01 + h10) * 0.5, I * (h01 - h10) * 0.5, (h00 - h11) * 0.5] })
    }

    pub fn to_matrix(&self) -> CMatrix {
        crate::matrix::identity(2) * self.r0 + self.r_dot_sigma()
    }

    fn r_dot_sigma(&self) -> CMatrix {
        pauli_x() * self.r[0] + pauli_y() * self.r[1] + pauli_z() * self.r[2]
    }

    fn r_conj_dot_sigma(&self) -> CMatrix {
        pauli_x() * self.r[0].conj() + pauli_y() * self.r[1].conj() + pauli_z() * self.r[2].conj()
    }

    /// √(R·R) on the principal branch.
    pub fn p(&self) -> Complex64 {
        self.r.iter().map(|v| v * v).sum::<Complex64>().sqrt()
    }

    /// √(R*·R*) on the principal branch.
    pub fn q(&self) -> Complex64 {
        self.r.iter().map(|v| v.conj() * v.conj()).sum::<Complex64>().sqrt()
    }
}

/// sin(pt)/p, with a Taylor series for |p|t < 1e-4.
pub fn sinc_kernel(p: Complex64, t: f64) -> Complex64 {
    let x = p * t;
    if x.norm() < 1e-4 {
        let x2 = x * x;
        (1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0) * t
    } else {
        x.sin() / p
    }
}

/// N(t) = e^{−iHt} ρ0 e^{iH†t} from the Pauli expansion, using the branch
/// choices `p` and `q` supplied by the caller.
pub fn two_level_numerator_with(
    params: &TwoLevelParams,
    p: Complex64,
    q: Complex64,
    rho0: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    if rho0.dim() != 2 {
        return Err(Error::Dimension { expected: "2".into(), got: rho0.dim().to_string() });
    }
    let rho = rho0.matrix();
    let rs = params.r_dot_sigma();
    let rcs = params.r_conj_dot_sigma();
    let (cp, cq) = ((p * t).cos(), (q * t).cos());
    let (sp, sq) = (sinc_kernel(p, t), sinc_kernel(q, t));
    let prefactor = (2.0 * params.r0.im * t).exp();
    let n = rho * (cp * cq) + rho * &rcs * (I * cp * sq) - &rs * rho * (I * cq * sp) + &rs * rho * &rcs * (sp * sq);
    Ok(n * c64(prefactor, 0.0))
}

pub fn two_level_numerator(params: &TwoLevelParams, rho0: &DensityMatrix, t: f64) -> Result<CMatrix> {
    two_level_numerator_with(params, params.p(), params.q(), rho0, t)
}

/// Normalized two-level closed form.
pub fn evolve_two_level(params: &TwoLevelParams, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    normalize(two_level_numerator(params, rho0, t)?, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    A,
    B,
    C1,
    C2,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [CaseKind::A, CaseKind::B, CaseKind::C1, CaseKind::C2];

    /// The diagonal Hamiltonian whose evolution the formula describes.
    pub fn hamiltonian(self, lambda1: f64, lambda2: f64, gamma: f64) -> CMatrix {
        let d = match self {
            CaseKind::A => [c64(lambda1, gamma), c64(lambda2, -gamma)],
            CaseKind::B => [c64(lambda1, gamma), c64(lambda2, 0.0)],
            CaseKind::C1 | CaseKind::C2 => [c64(lambda1, 0.0), c64(lambda2, -gamma)],
        };
        crate::matrix::complex_diagonal(&d)
    }

    pub fn is_normalized(self) -> bool {
        self != CaseKind::C2
    }
}

/// Closed-form ρ(t) for the diagonal cases with ω = (λ1 − λ2)/2. The C1
/// matrix is obtained by normalizing the C2 matrix, not from the B formula.
pub fn case_formula(
    which: CaseKind,
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    c: &PureStateAmplitudes,
    t: f64,
) -> CMatrix {
    let omega = (lambda1 - lambda2) / 2.0;
    let (a, b) = (c.p0(), c.p1());
    let coh = c.c1() * c.c2().conj() * Complex64::from_polar(1.0, -2.0 * omega * t);
    let from_parts = |p11: f64, p22: f64, c12: Complex64| {
        CMatrix::from_row_slice(2, 2, &[c64(p11, 0.0), c12, c12.conj(), c64(p22, 0.0)])
    };
    match which {
        CaseKind::A => {
            let g = gamma;
            from_parts(
                a / (a + b * (-4.0 * g * t).exp()),
                b / (a * (4.0 * g * t).exp() + b),
                coh / (a * (2.0 * g * t).exp() + b * (-2.0 * g * t).exp()),
            )
        }
        CaseKind::B => from_parts(
            a / (a + b * (-2.0 * gamma * t).exp()),
            b / (a * (2.0 * gamma * t).exp() + b),
            coh / (a * (gamma * t).exp() + b * (-gamma * t).exp()),
        ),
        CaseKind::C2 => from_parts(a, b * (-2.0 * gamma * t).exp(), coh * (-gamma * t).exp()),
        CaseKind::C1 => {
            let n = case_formula(CaseKind::C2, lambda1, lambda2, gamma, c, t);
            let tr = n[(0, 0)].re + n[(1, 1)].re;
            n.unscale(tr)
        }
    }
}

/// Constant-H convenience wrapper for the ODE engine.
pub fn constant(h: &CMatrix) -> Result<SwitchedHamiltonian> {
    SwitchedHamiltonian::constant(h)
}

/// Window Hamiltonian with the profile forced on, for closed-form comparisons.
pub fn always_on(h: &SwitchedHamiltonian) -> Result<SwitchedHamiltonian> {
    SwitchedHamiltonian::new(h.base().clone(), h.gain().clone(), SwitchingProfile::AlwaysOn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{sigma_z_decay, split, two_level_pm, Sign};
    use crate::matrix::{max_abs_diff, BlochState};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ket_minus() -> DensityMatrix {
        PureStateAmplitudes::new(c64(0.5f64.sqrt(), 0.), c64(-(0.5f64.sqrt()), 0.)).unwrap().density()
    }

    fn random_matrix(n: usize, seed: &[f64]) -> CMatrix {
        CMatrix::from_fn(n, n, |i, j| {
            let k = (i * n + j) * 2;
            Complex64::from_polar(seed[k % seed.len()].abs().min(1.0), 2.0 * PI * seed[(k + 1) % seed.len()])
        })
    }

    #[test]
    fn rhs_vanishes_on_hermitian_eigenstate() {
        let h = split(&pauli_z()).unwrap();
        let r = rhs_nonlinear(&h, &DensityMatrix::basis(2, 0).unwrap()).unwrap();
        assert!(r.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn rhs_projects_onto_bloch_flow() {
        let gamma = 3.0;
        let h = split(&sigma_z_decay(gamma)).unwrap();
        let b = BlochState::new(0.3, -0.4, 0.5).unwrap();
        let rho = DensityMatrix::from_bloch(&b).unwrap();
        let d = pauli_coordinates(&rhs_nonlinear(&h, &rho).unwrap()).unwrap();
        let (x, y, z) = (b.x, b.y, b.z);
        let expected = [-2. * y - gamma * x * z, 2. * x - gamma * y * z, gamma * (1. - z * z)];
        for k in 0..3 {
            assert!((d[k] - expected[k]).abs() < 1e-14, "{d:?} {expected:?}");
        }
        assert!(trace(&rhs_nonlinear(&h, &rho).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn rhs_vanishes_at_source() {
        let p = SwitchingProfile::tanh(3.0, 7.0, 8.0).unwrap();
        let h = split(&two_level_pm(Sign::Plus, 3.0, p).unwrap().window_hamiltonian()).unwrap();
        let r = rhs_nonlinear(&h, &DensityMatrix::basis(2, 1).unwrap()).unwrap();
        assert!(r.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn fast_rhs_matches_printed_form() {
        let seed = [0.3, 0.7, 0.1, 0.9, 0.5, 0.2, 0.8, 0.4, 0.6, 0.35, 0.15, 0.95, 0.45, 0.65, 0.25, 0.85, 0.05, 0.55];
        let hm = random_matrix(3, &seed);
        let ham = SwitchedHamiltonian::constant(&hm).unwrap();
        let rho = DensityMatrix::from_diagonal(&[0.2, 0.3, 0.5]).unwrap();
        let rho = evolve_closed_form(&pauli_like(3), &rho, 0.7).unwrap();
        let flat = Flat { n: 3 };
        let mut engine = Engine::new(&ham);
        engine.load(&ham, 0.0, 0.0);
        let y = flat.pack(rho.matrix());
        let mut dy = vec![0.0; y.len()];
        engine.nonlinear(&y, &mut dy);
        let printed = rhs_nonlinear(&split(&hm).unwrap(), &rho).unwrap();
        assert!(max_abs_diff(&flat.unpack(&dy), &printed) < 1e-13);
    }

    fn pauli_like(n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |i, j| if i == j { c64(i as f64, 0.) } else { c64(0.3, 0.1 * (i as f64 - j as f64)) })
    }

    #[test]
    fn hermitian_period_is_pi() {
        let rho0 = DensityMatrix::from_bloch(&BlochState::new(0.6, 0.0, 0.8).unwrap()).unwrap();
        let r = evolve_closed_form(&pauli_z(), &rho0, PI).unwrap();
        assert!(r.max_abs_diff(&rho0) < 1e-12);
    }

    #[test]
    fn closed_form_single_sided_gain() {
        // diag(1+3i, −1) pumps only the upper level: ρ11 = 1/(1 + e^{−2·3·2})
        let h = crate::matrix::complex_diagonal(&[c64(1., 3.), c64(-1., 0.)]);
        let r = evolve_closed_form(&h, &PureStateAmplitudes::equal().density(), 2.0).unwrap();
        let expected = 1.0 / (1.0 + (-12.0f64).exp());
        assert!((r.population(0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn closed_form_rejects_annihilated_state() {
        let h = crate::matrix::complex_diagonal(&[c64(0., 0.), c64(0., -400.)]);
        let r = evolve_closed_form(&h, &DensityMatrix::basis(2, 1).unwrap(), 1.0);
        assert!(matches!(r, Err(Error::DegenerateEvolution { .. })));
    }

    #[test]
    fn ode_tracks_closed_form() {
        let seed = [0.91, 0.13, 0.42, 0.77, 0.58, 0.26, 0.69, 0.31, 0.05, 0.88];
        let h = random_matrix(2, &seed);
        let rho0 = ket_minus();
        let times = [0.5, 1.0, 2.0, 5.0];
        let traj = evolve_ode_at(&constant(&h).unwrap(), &rho0, 0.0, &times, &OdeOptions::default()).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let exact = evolve_closed_form(&h, &rho0, t).unwrap();
            assert!(max_abs_diff(&traj.states()[i], exact.matrix()) < 1e-6, "t={t}");
        }
        assert!(traj.stats().max_trace_drift < 1e-10);
    }

    #[test]
    fn equator_orbit_is_circle() {
        let rho0 = DensityMatrix::from_bloch(&BlochState::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        let ctrl = EvolveControl::default().with_sample_every(0.05);
        let traj = evolve_ode(&constant(&pauli_z()).unwrap(), &rho0, 0.0, PI, &ctrl).unwrap();
        for i in 0..traj.len() {
            let b = traj.bloch(i).unwrap();
            assert!(b[2].abs() < 1e-10);
            assert!(((b[0] * b[0] + b[1] * b[1]).sqrt() - 1.0).abs() < 1e-8);
        }
        assert!(max_abs_diff(traj.final_state().unwrap(), rho0.matrix()) < 1e-8);
    }

    #[test]
    fn two_level_matches_exponential() {
        let params = TwoLevelParams::new(c64(0.3, -0.2), [c64(0.4, 0.1), c64(-0.2, 0.5), c64(0.7, -0.3)]);
        let h = params.to_matrix();
        let back = TwoLevelParams::from_matrix(&h).unwrap();
        assert!((back.r0 - params.r0).norm() < 1e-15);
        let rho0 = ket_minus();
        let a = evolve_two_level(&params, &rho0, 1.0).unwrap();
        let b = evolve_closed_form(&h, &rho0, 1.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn two_level_trivial_and_series() {
        let params = TwoLevelParams::new(c64(1.3, 0.0), [c64(0., 0.); 3]);
        let rho0 = ket_minus();
        assert!(evolve_two_level(&params, &rho0, 3.0).unwrap().max_abs_diff(&rho0) < 1e-15);
        let tiny = TwoLevelParams::new(c64(0., 0.), [c64(1e-6, 0.), c64(0., 2e-6), c64(3e-6, 1e-6)]);
        let a = evolve_two_level(&tiny, &rho0, 2.0).unwrap();
        let b = evolve_closed_form(&tiny.to_matrix(), &rho0, 2.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn two_level_reproduces_case_a() {
        let (l1, l2, gamma, t) = (0.7, -0.4, 1.3, 0.9);
        let c = PureStateAmplitudes::new(c64(0.6, 0.0), c64(0.0, 0.8)).unwrap();
        let params = TwoLevelParams::from_matrix(&CaseKind::A.hamiltonian(l1, l2, gamma)).unwrap();
        let a = evolve_two_level(&params, &c.density(), t).unwrap();
        let f = case_formula(CaseKind::A, l1, l2, gamma, &c, t);
        assert!(max_abs_diff(a.matrix(), &f) < 1e-12);
    }

    #[test]
    fn case_formulas_agree_with_propagator() {
        let (l1, l2, gamma, t) = (1.0, -1.0, 0.8, 1.7);
        let c = PureStateAmplitudes::new(c64(0.8, 0.0), c64(0.36, 0.48)).unwrap();
        for kind in CaseKind::ALL {
            let h = kind.hamiltonian(l1, l2, gamma);
            let expected = if kind.is_normalized() {
                evolve_closed_form(&h, &c.density(), t).unwrap().into_matrix()
            } else {
                propagate_unnormalized(&h, &c.density(), t).unwrap()
            };
            let got = case_formula(kind, l1, l2, gamma, &c, t);
            assert!(max_abs_diff(&got, &expected) < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn case_a_example_values() {
        let c = PureStateAmplitudes::equal();
        let m = case_formula(CaseKind::A, 1.0, -1.0, 1.0, &c, 1.0);
        assert!((m[(0, 0)].re - 1.0 / (1.0 + (-4f64).exp())).abs() < 1e-15);
        assert!((m[(1, 1)].re - 1.0 / (1.0 + 4f64.exp())).abs() < 1e-15);
        assert!((m[(0, 1)].norm() - 0.5 / 2f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_decay() {
        let h = complex_diag_c(1.0, -1.0, 1.0);
        let ctrl = EvolveControl::default().with_sample_every(0.1);
        let traj = evolve_unnormalized(&constant(&h).unwrap(), &PureStateAmplitudes::equal().density(), 0.0, 1.0, &ctrl)
            .unwrap();
        let last = traj.final_state().unwrap();
        assert!((last[(1, 1)].re - 0.5 * (-2f64).exp()).abs() < 1e-8);
        assert!((last[(0, 0)].re - 0.5).abs() < 1e-8);
        assert!((traj.trace(traj.len() - 1) - 0.5 * (1.0 + (-2f64).exp())).abs() < 1e-8);
    }

    fn complex_diag_c(l1: f64, l2: f64, gamma: f64) -> CMatrix {
        CaseKind::C2.hamiltonian(l1, l2, gamma)
    }

    #[test]
    fn unnormalized_hermitian_keeps_trace() {
        let ctrl = EvolveControl::default().with_sample_every(0.25);
        let traj =
            evolve_unnormalized(&constant(&pauli_x()).unwrap(), &DensityMatrix::basis(2, 0).unwrap(), 0.0, 3.0, &ctrl)
                .unwrap();
        for i in 0..traj.len() {
            assert!((traj.trace(i) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn trajectory_rejects_bad_times() {
        let s = vec![identity2(); 2];
        assert!(Trajectory::new(vec![1.0, 1.0], s.clone(), true).is_err());
        assert!(Trajectory::new(vec![1.0], s, true).is_err());
    }

    fn identity2() -> CMatrix {
        crate::matrix::identity(2).scale(0.5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn two_level_branch_independent(
            re in prop::array::uniform3(-1.0f64..1.0),
            im in prop::array::uniform3(-1.0f64..1.0),
            r0 in (-1.0f64..1.0, -1.0f64..1.0),
            t in 0.0f64..3.0,
        ) {
            let params = TwoLevelParams::new(c64(r0.0, r0.1), [c64(re[0], im[0]), c64(re[1], im[1]), c64(re[2], im[2])]);
            let rho0 = ket_minus();
            let a = two_level_numerator_with(&params, params.p(), params.q(), &rho0, t).unwrap();
            let b = two_level_numerator_with(&params, -params.p(), -params.q(), &rho0, t).unwrap();
            let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
            prop_assert!(max_abs_diff(&a, &b) < 1e-12 * scale);
        }

        #[test]
        fn pure_states_stay_pure(
            re in prop::array::uniform4(-1.0f64..1.0),
            im in prop::array::uniform4(-1.0f64..1.0),
            theta in 0.0f64..PI,
            t in 0.0f64..4.0,
        ) {
            let h = CMatrix::from_row_slice(2, 2, &[c64(re[0], im[0]), c64(re[1], im[1]), c64(re[2], im[2]), c64(re[3], im[3])]);
            let c = PureStateAmplitudes::new(c64(theta.cos(), 0.0), c64(0.0, theta.sin())).unwrap();
            if let Ok(r) = evolve_closed_form(&h, &c.density(), t) {
                prop_assert!(r.purity() > 1.0 - 1e-8);
            }
        }

        #[test]
        fn case_a_coherence_decays_monotonically(gamma in 0.1f64..3.0, t in 0.0f64..3.0, dt in 0.001f64..0.5) {
            let c = PureStateAmplitudes::equal();
            let a = case_formula(CaseKind::A, 1.0, -1.0, gamma, &c, t)[(0, 1)].norm();
            let b = case_formula(CaseKind::A, 1.0, -1.0, gamma, &c, t + dt)[(0, 1)].norm();
            prop_assert!(b <= a);
            prop_assert!((a - 0.5 / (2.0 * gamma * t).cosh()).abs() < 1e-12);
        }
    }
}
