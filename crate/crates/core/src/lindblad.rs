//! Lindblad master equation and the incoherent sum of two trace-decaying
//! non-Hermitian evolutions.

use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::evolution::{hygiene, propagate_unnormalized, EvolveControl, Flat, Trajectory, TrajectoryStats};
use crate::matrix::{
    c64, check_matrix, complex_diagonal, hermitian_deviation, pauli_z, real_diagonal, trace, CMatrix, DensityMatrix,
    PureStateAmplitudes,
};
use crate::ode::{self, OdeOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub operator: CMatrix,
    pub rate: f64,
}

/// ρ̇ = −i[H,ρ] + Σ rate·(LρL† − ½{L†L, ρ})
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    h: CMatrix,
    jumps: Vec<Jump>,
}

impl LindbladModel {
    pub fn new(h: CMatrix, jumps: Vec<Jump>) -> Result<Self> {
        check_matrix(&h)?;
        let dev = hermitian_deviation(&h);
        if dev > 1e-12 {
            return Err(validation(format!("Lindblad Hamiltonian must be Hermitian (deviation {dev:e})")));
        }
        for (k, j) in jumps.iter().enumerate() {
            check_matrix(&j.operator)?;
            if j.operator.shape() != h.shape() {
                return Err(Error::Dimension {
                    expected: format!("{}x{}", h.nrows(), h.ncols()),
                    got: format!("{}x{}", j.operator.nrows(), j.operator.ncols()),
                });
            }
            if !(j.rate >= 0.0 && j.rate.is_finite()) {
                return Err(validation(format!("jump {k} has invalid rate {}", j.rate)));
            }
        }
        Ok(Self { h, jumps })
    }

    /// σz dephasing whose coherence envelope is e^{−Γ_eff t}
    /// (rate Γ_eff/2 on L = σz).
    pub fn dephasing(h: CMatrix, gamma_eff: f64) -> Result<Self> {
        if h.nrows() != 2 {
            return Err(Error::Dimension { expected: "2".into(), got: h.nrows().to_string() });
        }
        Self::new(h, vec![Jump { operator: pauli_z(), rate: gamma_eff / 2.0 }])
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let i = c64(0.0, 1.0);
        let mut d = (&self.h * rho - rho * &self.h) * (-i);
        for j in &self.jumps {
            let l = &j.operator;
            let ld = l.adjoint();
            let ldl = &ld * l;
            d += (l * rho * &ld - (&ldl * rho + rho * &ldl) * c64(0.5, 0.0)) * c64(j.rate, 0.0);
        }
        d
    }
}

pub fn lindblad_evolve(
    m: &LindbladModel,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    ctrl: &EvolveControl,
) -> Result<Trajectory> {
    if !(t0 < t1) {
        return Err(validation(format!("time span requires t0 < t1, got [{t0}, {t1}]")));
    }
    let grid = ode::uniform_grid(t0, t1, ctrl.sample_every)?;
    lindblad_evolve_at(m, rho0, t0, &grid, &ctrl.ode)
}

/// Lindblad evolution sampled at `times`. The trace is not renormalized, so
/// its drift measures the integrator.
pub fn lindblad_evolve_at(
    m: &LindbladModel,
    rho0: &DensityMatrix,
    t0: f64,
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if rho0.dim() != m.dim() {
        return Err(Error::Dimension { expected: m.dim().to_string(), got: rho0.dim().to_string() });
    }
    let n = m.dim();
    let flat = Flat { n };
    let rhs = |_t: f64, _a: f64, y: &[f64], dy: &mut [f64]| {
        let d = m.rhs(&flat.unpack(y));
        dy.copy_from_slice(&flat.pack(&d));
    };
    let mut drift = 0.0f64;
    let post = |_t: f64, y: &mut [f64]| {
        let tr = hygiene(n, y, false);
        drift = drift.max((tr - 1.0).abs());
        true
    };
    let (rows, stats) = ode::solve(rhs, post, t0, &flat.pack(rho0.matrix()), times, &[], opts)?;
    let states: Vec<CMatrix> = rows
        .into_iter()
        .map(|mut y| {
            hygiene(n, &mut y, false);
            flat.unpack(&y)
        })
        .collect();
    let mut traj = Trajectory::new(times.to_vec(), states, true)?;
    traj.set_stats(TrajectoryStats { ode: stats, max_trace_drift: drift });
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncoherentSumResult {
    pub branch_ground: CMatrix,
    pub branch_excited: CMatrix,
    pub raw_sum: CMatrix,
    pub raw_trace: f64,
    pub normalized: DensityMatrix,
}

/// Branch keeping the ground population: diag(λ1, λ2 − iγ).
pub fn ground_branch_hamiltonian(lambda1: f64, lambda2: f64, gamma: f64) -> CMatrix {
    complex_diagonal(&[c64(lambda1, 0.0), c64(lambda2, -gamma)])
}

/// Branch keeping the excited population: diag(λ1 − iγ, λ2).
pub fn excited_branch_hamiltonian(lambda1: f64, lambda2: f64, gamma: f64) -> CMatrix {
    complex_diagonal(&[c64(lambda1, -gamma), c64(lambda2, 0.0)])
}

/// Sum of the two unnormalized evolutions, each computed from the matrix
/// exponential.
pub fn incoherent_sum(
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    c: &PureStateAmplitudes,
    t: f64,
) -> Result<IncoherentSumResult> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be positive, got {gamma}")));
    }
    let rho0 = c.density();
    let a = propagate_unnormalized(&ground_branch_hamiltonian(lambda1, lambda2, gamma), &rho0, t)?;
    let b = propagate_unnormalized(&excited_branch_hamiltonian(lambda1, lambda2, gamma), &rho0, t)?;
    let raw_sum = &a + &b;
    let raw_trace = trace(&raw_sum).re;
    let normalized = DensityMatrix::new(raw_sum.unscale(raw_trace))?;
    Ok(IncoherentSumResult { branch_ground: a, branch_excited: b, raw_sum, raw_trace, normalized })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub raw_trace: f64,
    pub populations: [f64; 2],
    pub coherence: f64,
    pub dephasing_coherence: f64,
    /// Max elementwise distance between the normalized sum and the dephasing solution.
    pub distance_to_dephasing: f64,
    /// Max elementwise distance between the normalized sum and diag(|c1|², |c2|²).
    pub distance_to_diagonal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DephasingComparison {
    /// Best-fit envelope rate of the dephasing model, e^{−Γ_eff t}.
    pub gamma_eff: f64,
    pub max_trace_drift: f64,
    pub rows: Vec<ComparisonRow>,
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Compares the normalized incoherent sum with σz dephasing under
/// H = diag(λ1, λ2). Γ_eff is fitted to the coherence envelope by least
/// squares; the dephasing trajectory is integrated with the Lindblad solver.
pub fn compare_to_dephasing(
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
    c: &PureStateAmplitudes,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<DephasingComparison> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[0] < w[1])) || t_grid[0] < 0.0 {
        return Err(validation("t_grid must be non-empty, strictly increasing and start at t >= 0"));
    }
    let sums = t_grid.iter().map(|&t| incoherent_sum(lambda1, lambda2, gamma, c, t)).collect::<Result<Vec<_>>>()?;
    let coh: Vec<f64> = sums.iter().map(|s| s.normalized.matrix()[(0, 1)].norm()).collect();
    let c12 = (c.c1() * c.c2().conj()).norm();
    let loss = |g: f64| t_grid.iter().zip(&coh).map(|(t, v)| (v - c12 * (-g * t).exp()).powi(2)).sum::<f64>();
    let gamma_eff = golden_section(loss, 0.0, 10.0 * gamma, 1e-10);
    let model = LindbladModel::dephasing(real_diagonal(&[lambda1, lambda2]), gamma_eff)?;
    let deph = lindblad_evolve_at(&model, &c.density(), 0.0, t_grid, opts)?;
    let diag = DensityMatrix::from_diagonal(&[c.p0(), c.p1()])?;
    let rows = t_grid
        .iter()
        .zip(&sums)
        .zip(deph.states())
        .map(|((&t, s), d)| {
            let m = s.normalized.matrix();
            ComparisonRow {
                t,
                raw_trace: s.raw_trace,
                populations: [m[(0, 0)].re, m[(1, 1)].re],
                coherence: m[(0, 1)].norm(),
                dephasing_coherence: d[(0, 1)].norm(),
                distance_to_dephasing: crate::matrix::max_abs_diff(m, d),
                distance_to_diagonal: s.normalized.max_abs_diff(&diag),
            }
        })
        .collect();
    Ok(DephasingComparison { gamma_eff, max_trace_drift: deph.stats().max_trace_drift, rows })
}
