//! Measurement scenarios: Hermitian drive, a switched collapse window and
//! the post-window persistence check.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::evolution::{evolve_ode_at, Trajectory};
use crate::hamiltonian::{
    attractor_prediction, degeneracy_case, Attractor, DegeneracyCase, SwitchedHamiltonian, SwitchingProfile,
    DEFAULT_DEGENERACY_TOL,
};
use crate::matrix::{identity, CVector, DensityMatrix};
use crate::ode::{uniform_grid, OdeOptions};

/// κ = 1 − e^{−γ(t_f − t_i)}
pub fn collapse_degree(gamma: f64, t_i: f64, t_f: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be positive, got {gamma}")));
    }
    if !(t_i.is_finite() && t_f.is_finite() && t_f >= t_i) {
        return Err(validation(format!("measurement window requires t_i <= t_f, got [{t_i}, {t_f}]")));
    }
    Ok(1.0 - (-gamma * (t_f - t_i)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementScenario {
    pub hamiltonian: SwitchedHamiltonian,
    pub initial_state: DensityMatrix,
    pub t_start: f64,
    pub t_end: f64,
    pub sample_step: f64,
    pub ode: OdeOptions,
}

impl MeasurementScenario {
    pub fn new(
        hamiltonian: SwitchedHamiltonian,
        initial_state: DensityMatrix,
        t_start: f64,
        t_end: f64,
        sample_step: f64,
    ) -> Result<Self> {
        let s = Self { hamiltonian, initial_state, t_start, t_end, sample_step, ode: OdeOptions::default() };
        s.validate()?;
        Ok(s)
    }

    pub fn with_ode(mut self, ode: OdeOptions) -> Self {
        self.ode = ode;
        self
    }

    pub fn window(&self) -> Result<(f64, f64)> {
        self.hamiltonian.profile().window().ok_or_else(|| validation("scenario needs a windowed switching profile"))
    }

    pub fn validate(&self) -> Result<()> {
        let (t_i, t_f) = self.window()?;
        if !(self.t_start < t_i && t_f < self.t_end) {
            return Err(validation(format!(
                "window [{t_i}, {t_f}] must lie strictly inside [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if !(self.sample_step > 0.0) {
            return Err(validation("sample_step must be positive"));
        }
        if self.initial_state.dim() != self.hamiltonian.dim() {
            return Err(Error::Dimension {
                expected: self.hamiltonian.dim().to_string(),
                got: self.initial_state.dim().to_string(),
            });
        }
        self.ode.validate()
    }

    /// Uniform grid with `t_i` and `t_f` inserted.
    pub fn sample_times(&self) -> Result<Vec<f64>> {
        let (t_i, t_f) = self.window()?;
        grid_with_marks(self.t_start, self.t_end, self.sample_step, &[t_i, t_f])
    }
}

/// Uniform grid on `[t0, t1]` with extra marks; grid points within 1e-9 of
/// a mark are replaced by it.
pub fn grid_with_marks(t0: f64, t1: f64, step: f64, marks: &[f64]) -> Result<Vec<f64>> {
    let mut g = uniform_grid(t0, t1, step)?;
    let tol = 1e-9 * step.max(1.0);
    for &m in marks {
        if m > t0 && m < t1 {
            g.retain(|t| (t - m).abs() > tol);
            g.push(m);
        }
    }
    g.sort_by(f64::total_cmp);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseMetrics {
    pub kappa: f64,
    /// Gap between the largest and second-largest imaginary eigenvalue parts
    /// of the window Hamiltonian; plays the role of γ in κ.
    pub gamma: f64,
    pub target_index: usize,
    pub population_at_t_i: f64,
    pub population_at_t_f: f64,
    pub final_target_population: f64,
    /// Largest loss of target population below its value at `t_f`, over
    /// samples after `t_f`.
    pub persistence_error: f64,
    /// Largest |P(t) − P(t_f)| over samples after `t_f`.
    pub post_window_drift: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub trajectory: Trajectory,
    pub metrics: CollapseMetrics,
    pub target: CVector,
}

fn attractor_of(h: &SwitchedHamiltonian) -> Result<(usize, CVector, f64)> {
    let report = attractor_prediction(&h.window_hamiltonian(), DEFAULT_DEGENERACY_TOL)?;
    match &report.attractor {
        Attractor::Unique(k) => {
            let gap = report.imaginary_gap().unwrap_or(0.0);
            Ok((*k, report.eigenvectors[*k].clone(), gap))
        }
        Attractor::DegenerateSubspace(idx) => Err(Error::DegenerateAttractor { indices: idx.clone() }),
        Attractor::None => Err(Error::DegenerateAttractor { indices: (0..h.dim()).collect() }),
    }
}

pub fn run_scenario(s: &MeasurementScenario) -> Result<ScenarioRun> {
    s.validate()?;
    let (t_i, t_f) = s.window()?;
    let (target_index, target, gamma) = attractor_of(&s.hamiltonian)?;
    let kappa = collapse_degree(gamma, t_i, t_f)?;
    let times = s.sample_times()?;
    let target_state = DensityMatrix::pure(&target)?;
    let trajectory = evolve_ode_at(&s.hamiltonian, &s.initial_state, s.t_start, &times, &s.ode)?
        .with_reference("initial", s.initial_state.clone())?
        .with_reference("target", target_state)?;
    let pops = trajectory.overlap_series("target").expect("registered");
    let at = |t: f64| trajectory.times().iter().position(|&x| x == t).expect("mark on grid");
    let (ii, fi) = (at(t_i), at(t_f));
    let p_tf = pops[fi];
    let after = &pops[fi + 1..];
    let persistence_error = after.iter().map(|p| (p_tf - p).max(0.0)).fold(0.0, f64::max);
    let post_window_drift = after.iter().map(|p| (p - p_tf).abs()).fold(0.0, f64::max);
    let mut warnings = Vec::new();
    if s.initial_state.expectation(&target)? < 1e-12 {
        warnings.push("initial state is orthogonal to the attractor; the flow cannot move it there".into());
    }
    let metrics = CollapseMetrics {
        kappa,
        gamma,
        target_index,
        population_at_t_i: pops[ii],
        population_at_t_f: p_tf,
        final_target_population: *pops.last().expect("non-empty"),
        persistence_error,
        post_window_drift,
        warnings,
    };
    Ok(ScenarioRun { trajectory, metrics, target })
}

/// (Tr ρ(t)ρ_ref, Tr ρ(t)(I − ρ_ref)) per sample.
pub fn overlap_curves(traj: &Trajectory, rho_ref: &DensityMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if rho_ref.dim() != traj.dim() {
        return Err(Error::Dimension { expected: traj.dim().to_string(), got: rho_ref.dim().to_string() });
    }
    let complement = identity(rho_ref.dim()) - rho_ref.matrix();
    let a = traj.states().iter().map(|s| (rho_ref.matrix() * s).trace().re).collect();
    let b = traj.states().iter().map(|s| (&complement * s).trace().re).collect();
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub case: DegeneracyCase,
    pub attractor: Attractor,
    pub kappa: f64,
    pub final_populations: Vec<f64>,
    /// Population outside the attracting index set at the final sample.
    pub leakage: f64,
    /// For a two-dimensional attracting subspace {i, j}: max relative
    /// deviation of p_i/p_j from its initial value.
    pub ratio_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyRun {
    pub trajectory: Trajectory,
    pub report: DegeneracyReport,
}

/// Runs one of the four-level cases from `t = 0` to
/// `t_f + (t_f − t_i)` under the tanh switching profile.
pub fn degeneracy_run(
    which: DegeneracyCase,
    gamma: f64,
    t_i: f64,
    t_f: f64,
    rho0: &DensityMatrix,
    sample_step: f64,
    ode: &OdeOptions,
) -> Result<DegeneracyRun> {
    let profile = SwitchingProfile::tanh(gamma, t_i, t_f)?;
    let h = degeneracy_case(which, gamma, profile)?;
    if rho0.dim() != 4 {
        return Err(Error::Dimension { expected: "4".into(), got: rho0.dim().to_string() });
    }
    let t_end = t_f + (t_f - t_i);
    let times = grid_with_marks(0.0, t_end, sample_step, &[t_i, t_f])?;
    let trajectory = evolve_ode_at(&h, rho0, 0.0, &times, ode)?;
    let attractor = attractor_prediction(&h.window_hamiltonian(), DEFAULT_DEGENERACY_TOL)?.attractor;
    let kept: Vec<usize> = match &attractor {
        Attractor::Unique(k) => vec![*k],
        Attractor::DegenerateSubspace(v) => v.clone(),
        Attractor::None => (0..4).collect(),
    };
    let final_populations = trajectory.populations(trajectory.len() - 1);
    let leakage = (0..4).filter(|k| !kept.contains(k)).map(|k| final_populations[k]).sum();
    let ratio_drift = match kept.as_slice() {
        [i, j] => {
            let pi = trajectory.population_series(*i);
            let pj = trajectory.population_series(*j);
            let r0 = pi[0] / pj[0];
            Some(pi.iter().zip(&pj).map(|(a, b)| ((a / b) / r0 - 1.0).abs()).fold(0.0, f64::max))
        }
        _ => None,
    };
    let report = DegeneracyReport {
        case: which,
        attractor,
        kappa: collapse_degree(gamma, t_i, t_f)?,
        final_populations,
        leakage,
        ratio_drift,
    };
    Ok(DegeneracyRun { trajectory, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{basis_unitary, two_level_pm, x_basis, x_basis_measurement, Sign};
    use crate::matrix::{max_abs_diff, PureStateAmplitudes};

    fn fig2_plus(rho0: DensityMatrix, gamma: f64, t_i: f64, t_f: f64) -> MeasurementScenario {
        let h = two_level_pm(Sign::Plus, gamma, SwitchingProfile::tanh(gamma, t_i, t_f).unwrap()).unwrap();
        MeasurementScenario::new(h, rho0, 0.0, t_f + 5.0, 0.02).unwrap()
    }

    fn ket_plus() -> DensityMatrix {
        PureStateAmplitudes::equal().density()
    }

    #[test]
    fn kappa_values() {
        assert!((collapse_degree(3.0, 7.0, 8.0).unwrap() - 0.950212931632136).abs() < 1e-12);
        assert!((collapse_degree(3.0, 6.0, 8.0).unwrap() - 0.997521247823334).abs() < 1e-12);
        assert_eq!(collapse_degree(3.0, 7.0, 7.0).unwrap(), 0.0);
        assert!(collapse_degree(3.0, 8.0, 7.0).is_err());
        assert!(collapse_degree(0.0, 7.0, 8.0).is_err());
    }

    #[test]
    fn collapse_to_zero() {
        let run = run_scenario(&fig2_plus(ket_plus(), 3.0, 7.0, 8.0)).unwrap();
        let m = &run.metrics;
        assert_eq!(m.target_index, 0);
        assert!((m.gamma - 3.0).abs() < 1e-12);
        assert!(m.final_target_population >= 0.99, "{m:?}");
        assert!(m.persistence_error < 1e-3);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn long_window_reaches_kappa_floor() {
        let run = run_scenario(&fig2_plus(ket_plus(), 5.0, 7.0, 9.0)).unwrap();
        assert!(run.metrics.final_target_population >= 1.0 - 2.0 * (-10f64).exp());
    }

    #[test]
    fn target_state_is_fixed() {
        let run = run_scenario(&fig2_plus(DensityMatrix::basis(2, 0).unwrap(), 3.0, 7.0, 8.0)).unwrap();
        let pops = run.trajectory.overlap_series("target").unwrap();
        assert!(pops.iter().all(|p| (p - 1.0).abs() < 1e-8));
    }

    #[test]
    fn source_start_warns() {
        let run = run_scenario(&fig2_plus(DensityMatrix::basis(2, 1).unwrap(), 3.0, 7.0, 8.0)).unwrap();
        assert_eq!(run.metrics.warnings.len(), 1);
        assert!(run.metrics.final_target_population < 1e-12);
    }

    #[test]
    fn degenerate_window_is_refused() {
        let p = SwitchingProfile::tanh(3.0, 6.0, 8.0).unwrap();
        let h = degeneracy_case(DegeneracyCase::C, 3.0, p).unwrap();
        let s = MeasurementScenario::new(h, DensityMatrix::maximally_mixed(4).unwrap(), 0.0, 10.0, 0.1).unwrap();
        assert!(matches!(run_scenario(&s), Err(Error::DegenerateAttractor { indices }) if indices == vec![0, 1]));
    }

    #[test]
    fn window_must_be_inside_span() {
        let h = two_level_pm(Sign::Plus, 3.0, SwitchingProfile::tanh(3.0, 7.0, 8.0).unwrap()).unwrap();
        assert!(MeasurementScenario::new(h.clone(), ket_plus(), 7.5, 12.0, 0.1).is_err());
        assert!(MeasurementScenario::new(h, ket_plus(), 0.0, 8.0, 0.1).is_err());
    }

    #[test]
    fn x_basis_is_conjugate_of_z_basis() {
        let (g, ti, tf) = (3.0, 7.0, 8.0);
        let p = SwitchingProfile::tanh(g, ti, tf).unwrap();
        let u = basis_unitary(&x_basis());
        let rho_z = DensityMatrix::from_diagonal(&[0.3, 0.7]).unwrap();
        let rho_z = crate::evolution::evolve_closed_form(&crate::matrix::pauli_x(), &rho_z, 0.4).unwrap();
        let z = MeasurementScenario::new(two_level_pm(Sign::Plus, g, p).unwrap(), rho_z.clone(), 0.0, 13.0, 0.1).unwrap();
        let x = MeasurementScenario::new(x_basis_measurement(Sign::Plus, g, p).unwrap(), rho_z.conjugate_by(&u).unwrap(), 0.0, 13.0, 0.1)
            .unwrap();
        let (rz, rx) = (run_scenario(&z).unwrap(), run_scenario(&x).unwrap());
        for (a, b) in rz.trajectory.states().iter().zip(rx.trajectory.states()) {
            assert!(max_abs_diff(&(&u * a * u.adjoint()), b) < 1e-8);
        }
    }

    #[test]
    fn overlap_curves_sum_to_one() {
        let run = run_scenario(&fig2_plus(ket_plus(), 3.0, 7.0, 8.0)).unwrap();
        let (a, b) = overlap_curves(&run.trajectory, &ket_plus()).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12);
        assert!(a.iter().zip(&b).all(|(x, y)| (x + y - 1.0).abs() < 1e-9));
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        let t = Trajectory::new(vec![0.0], vec![mixed.matrix().clone()], true).unwrap();
        let (a, b) = overlap_curves(&t, &ket_plus()).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15 && (b[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degeneracy_cases() {
        let rho0 = DensityMatrix::from_diagonal(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let opts = OdeOptions::default();
        for case in [DegeneracyCase::A, DegeneracyCase::B] {
            let r = degeneracy_run(case, 3.0, 6.0, 8.0, &rho0, 0.05, &opts).unwrap();
            assert_eq!(r.report.attractor, Attractor::Unique(0));
            assert!(r.report.final_populations[0] > 0.999);
        }
        let r = degeneracy_run(DegeneracyCase::C, 3.0, 6.0, 8.0, &rho0, 0.05, &opts).unwrap();
        assert_eq!(r.report.attractor, Attractor::DegenerateSubspace(vec![0, 1]));
        assert!(r.report.ratio_drift.unwrap() < 1e-6);
        assert!(r.report.final_populations[2] < 1e-3 && r.report.final_populations[3] < 1e-3);
    }

    #[test]
    fn degenerate_subspace_is_invariant() {
        let rho0 = DensityMatrix::from_diagonal(&[0.25, 0.75, 0.0, 0.0]).unwrap();
        let r = degeneracy_run(DegeneracyCase::C, 3.0, 6.0, 8.0, &rho0, 0.1, &OdeOptions::default()).unwrap();
        for i in 0..r.trajectory.len() {
            let p = r.trajectory.populations(i);
            assert!((p[0] - 0.25).abs() < 1e-9 && (p[1] - 0.75).abs() < 1e-9);
        }
    }

    #[test]
    fn kappa_monotone_grid() {
        let mut last_row: Option<Vec<f64>> = None;
        for &g in &[1.0, 2.0, 3.0] {
            let row: Vec<f64> = [0.5, 1.0, 1.5]
                .iter()
                .map(|&w| run_scenario(&fig2_plus(ket_plus(), g, 7.0, 7.0 + w)).unwrap().metrics.population_at_t_f)
                .collect();
            assert!(row.windows(2).all(|p| p[1] >= p[0]));
            if let Some(prev) = &last_row {
                assert!(row.iter().zip(prev).all(|(a, b)| a >= b));
            }
            last_row = Some(row);
        }
    }
}
