//! Real Bloch-ball flows for the decaying two-level Hamiltonian
//! `H = σz − i(γ/2)(I − σz)`.
//!
//! Normalized (3-d):
//! ```text
//! ẋ = −2y − γxz,   ẏ = 2x − γyz,   ż = γ(1 − z²)
//! ```
//! Unnormalized (4-d, `w` = trace):
//! ```text
//! ẋ = −2y − γx,   ẏ = 2x − γy,   ż = −γz + γw,   ẇ = γz − γw
//! ```

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::evolution::{evolve_ode, EvolveControl};
use crate::hamiltonian::{SplitHamiltonian, SwitchedHamiltonian};
use crate::matrix::{identity, max_abs_diff, pauli_z, DensityMatrix};
use crate::ode::{self, OdeOptions};

/// |Re λ| below this counts as zero.
pub const ZERO_REAL_TOL: f64 = 1e-9;

/// Finite-difference step used to cross-check the analytic Jacobian.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowVariant {
    Normalized3d,
    Unnormalized4d,
}

impl FlowVariant {
    pub fn arity(self) -> usize {
        match self {
            FlowVariant::Normalized3d => 3,
            FlowVariant::Unnormalized4d => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub variant: FlowVariant,
    pub gamma: f64,
}

impl FlowSpec {
    pub fn new(variant: FlowVariant, gamma: f64) -> Result<Self> {
        let s = Self { variant, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn normalized(gamma: f64) -> Result<Self> {
        Self::new(FlowVariant::Normalized3d, gamma)
    }

    pub fn unnormalized(gamma: f64) -> Result<Self> {
        Self::new(FlowVariant::Unnormalized4d, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(validation(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    fn check_arity(&self, state: &[f64]) -> Result<()> {
        let n = self.variant.arity();
        if state.len() != n {
            return Err(Error::Dimension { expected: n.to_string(), got: state.len().to_string() });
        }
        Ok(())
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        let g = self.gamma;
        match self.variant {
            FlowVariant::Normalized3d => {
                let (x, y, z) = (s[0], s[1], s[2]);
                out[0] = -2.0 * y - g * x * z;
                out[1] = 2.0 * x - g * y * z;
                out[2] = -g * z * z + g;
            }
            FlowVariant::Unnormalized4d => {
                let (x, y, z, w) = (s[0], s[1], s[2], s[3]);
                out[0] = -2.0 * y - g * x;
                out[1] = 2.0 * x - g * y;
                out[2] = -g * z + g * w;
                out[3] = g * z - g * w;
            }
        }
    }
}

pub fn flow_rhs(spec: &FlowSpec, state: &[f64]) -> Result<Vec<f64>> {
    spec.check_arity(state)?;
    let mut out = vec![0.0; state.len()];
    spec.eval(state, &mut out);
    Ok(out)
}

pub fn jacobian(spec: &FlowSpec, state: &[f64]) -> Result<DMatrix<f64>> {
    spec.check_arity(state)?;
    let g = spec.gamma;
    Ok(match spec.variant {
        FlowVariant::Normalized3d => {
            let (x, y, z) = (state[0], state[1], state[2]);
            DMatrix::from_row_slice(3, 3, &[-g * z, -2.0, -g * x, 2.0, -g * z, -g * y, 0.0, 0.0, -2.0 * g * z])
        }
        FlowVariant::Unnormalized4d => DMatrix::from_row_slice(
            4,
            4,
            &[-g, -2.0, 0.0, 0.0, 2.0, -g, 0.0, 0.0, 0.0, 0.0, -g, g, 0.0, 0.0, g, -g],
        ),
    })
}

/// Central-difference Jacobian with step `h`.
pub fn finite_difference_jacobian(spec: &FlowSpec, state: &[f64], h: f64) -> Result<DMatrix<f64>> {
    spec.check_arity(state)?;
    let n = state.len();
    let mut j = DMatrix::zeros(n, n);
    let (mut plus, mut minus) = (state.to_vec(), state.to_vec());
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for col in 0..n {
        plus[col] = state[col] + h;
        minus[col] = state[col] - h;
        spec.eval(&plus, &mut fp);
        spec.eval(&minus, &mut fm);
        for row in 0..n {
            j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
        plus[col] = state[col];
        minus[col] = state[col];
    }
    Ok(j)
}

/// Eigenvalues sorted by real part, then imaginary part.
pub fn sorted_eigenvalues(j: &DMatrix<f64>) -> Vec<Complex64> {
    let mut e: Vec<Complex64> = j.complex_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Sink,
    Source,
    Saddle,
    Center,
    LineOfFixedPoints,
    NonHyperbolic,
}

/// Classification from eigenvalues alone. Lines are recognized by
/// [`fixed_points`], which knows the geometry.
pub fn classify_point(eigenvalues: &[Complex64]) -> Stability {
    let neg = eigenvalues.iter().filter(|e| e.re < -ZERO_REAL_TOL).count();
    let pos = eigenvalues.iter().filter(|e| e.re > ZERO_REAL_TOL).count();
    let zero = eigenvalues.len() - neg - pos;
    match (neg, pos, zero) {
        (_, 0, 0) => Stability::Sink,
        (0, _, 0) => Stability::Source,
        (_, _, 0) => Stability::Saddle,
        (0, 0, _) if eigenvalues.iter().any(|e| e.im.abs() > ZERO_REAL_TOL) => Stability::Center,
        _ => Stability::NonHyperbolic,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub location: Vec<f64>,
    pub jacobian_eigenvalues: Vec<Complex64>,
    pub classification: Stability,
    /// Direction of the line of fixed points this point belongs to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_direction: Option<Vec<f64>>,
    /// Max |analytic − finite-difference| Jacobian entry.
    pub jacobian_fd_error: f64,
}

fn report(spec: &FlowSpec, location: Vec<f64>, line_direction: Option<Vec<f64>>) -> Result<FixedPointReport> {
    let j = jacobian(spec, &location)?;
    let fd = finite_difference_jacobian(spec, &location, FD_STEP)?;
    let err = (&j - &fd).amax();
    let eig = sorted_eigenvalues(&j);
    let mut classification = classify_point(&eig);
    if line_direction.is_some() && classification == Stability::NonHyperbolic {
        // one zero eigenvalue along the line, the rest attracting
        let zero = eig.iter().filter(|e| e.norm() <= ZERO_REAL_TOL).count();
        if zero == 1 && eig.iter().all(|e| e.re <= ZERO_REAL_TOL) {
            classification = Stability::LineOfFixedPoints;
        }
    }
    Ok(FixedPointReport { location, jacobian_eigenvalues: eig, classification, line_direction, jacobian_fd_error: err })
}

/// Representative parameters sampled along each line of fixed points.
pub const LINE_SAMPLES: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Analytic fixed points. Lines are reported at the points of
/// [`LINE_SAMPLES`] with their direction attached.
pub fn fixed_points(spec: &FlowSpec) -> Result<Vec<FixedPointReport>> {
    spec.validate()?;
    match spec.variant {
        FlowVariant::Normalized3d if spec.gamma > 0.0 => {
            Ok(vec![report(spec, vec![0.0, 0.0, 1.0], None)?, report(spec, vec![0.0, 0.0, -1.0], None)?])
        }
        FlowVariant::Normalized3d => LINE_SAMPLES
            .iter()
            .map(|&z| report(spec, vec![0.0, 0.0, z], Some(vec![0.0, 0.0, 1.0])))
            .collect(),
        FlowVariant::Unnormalized4d => {
            let dir = std::f64::consts::FRAC_1_SQRT_2;
            LINE_SAMPLES
                .iter()
                .filter(|&&s| s >= 0.0)
                .map(|&s| report(spec, vec![0.0, 0.0, s, s], Some(vec![0.0, 0.0, dir, dir])))
                .collect()
        }
    }
}

/// Integrates the flow from `start`, sampling at `times` (sorted, first ≥ 0).
pub fn integrate_flow(spec: &FlowSpec, start: &[f64], times: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<f64>>> {
    spec.check_arity(start)?;
    let t0 = times.first().copied().unwrap_or(0.0).min(0.0);
    let (rows, _) = ode::solve(|_, _, y, dy| spec.eval(y, dy), |_, _| false, t0, start, times, &[], opts)?;
    Ok(rows)
}

/// Side-by-side Bloch coordinates from the flow and from the density-matrix engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlochComparison {
    pub gamma: f64,
    pub times: Vec<f64>,
    pub flow: Vec<[f64; 3]>,
    pub engine: Vec<[f64; 3]>,
    pub max_deviation: f64,
}

/// γ such that `h` = σz − i(γ/2)(I − σz), or an error if `h` is outside that family.
pub fn family_gamma(h: &SplitHamiltonian) -> Result<f64> {
    if h.dim() != 2 {
        return Err(Error::Dimension { expected: "2".into(), got: h.dim().to_string() });
    }
    let gamma = h.anti_hermitian()[(1, 1)].re;
    let expected_anti = (identity(2) - pauli_z()).scale(gamma / 2.0);
    let dev = max_abs_diff(h.hermitian(), &pauli_z()).max(max_abs_diff(h.anti_hermitian(), &expected_anti));
    if dev > 1e-12 || gamma < 0.0 {
        return Err(validation("the Bloch flow equations hold only for H = sigma_z - i(gamma/2)(I - sigma_z), gamma >= 0"));
    }
    Ok(gamma)
}

/// Integrates the 3-d flow and the density-matrix equation independently and
/// reports the maximum coordinate deviation.
pub fn verify_bloch_consistency(
    h: &SplitHamiltonian,
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    ctrl: &EvolveControl,
) -> Result<BlochComparison> {
    let gamma = family_gamma(h)?;
    let spec = FlowSpec::normalized(gamma)?;
    let start = rho0.to_bloch()?.as_array();
    let engine = evolve_ode(&SwitchedHamiltonian::constant(h.full())?, rho0, t0, t1, ctrl)?;
    let times = engine.times().to_vec();
    let shifted: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let flow = integrate_flow(&spec, &start, &shifted, &ctrl.ode)?;
    let flow: Vec<[f64; 3]> = flow.iter().map(|r| [r[0], r[1], r[2]]).collect();
    let engine: Vec<[f64; 3]> = (0..engine.len()).map(|i| engine.bloch(i).expect("two-level")).collect();
    let max_deviation = flow
        .iter()
        .zip(&engine)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    Ok(BlochComparison { gamma, times, flow, engine, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{sigma_z_decay, split};
    use crate::matrix::{pauli_x, BlochState};
    use proptest::prelude::*;

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-9 && (a.im - im).abs() < 1e-9
    }

    #[test]
    fn printed_field_values() {
        let s = FlowSpec::normalized(3.0).unwrap();
        assert_eq!(flow_rhs(&s, &[0., 0., 1.]).unwrap(), vec![0., 0., 0.]);
        let s0 = FlowSpec::normalized(0.0).unwrap();
        assert_eq!(flow_rhs(&s0, &[0.3, -0.2, 0.5]).unwrap(), vec![0.4, 0.6, 0.0]);
        let u = FlowSpec::unnormalized(1.0).unwrap();
        assert_eq!(flow_rhs(&u, &[0., 0., 0.5, 0.5]).unwrap(), vec![0., 0., 0., 0.]);
        assert!(flow_rhs(&u, &[0., 0., 0.5]).is_err());
        assert!(FlowSpec::normalized(-1.0).is_err());
    }

    #[test]
    fn poles_for_positive_gamma() {
        let reports = fixed_points(&FlowSpec::normalized(3.0).unwrap()).unwrap();
        assert_eq!(reports.len(), 2);
        let north = &reports[0];
        assert_eq!(north.classification, Stability::Sink);
        let e = &north.jacobian_eigenvalues;
        assert!(close(e[0], -6.0, 0.0) && close(e[1], -3.0, -2.0) && close(e[2], -3.0, 2.0), "{e:?}");
        let south = &reports[1];
        assert_eq!(south.classification, Stability::Source);
        let e = &south.jacobian_eigenvalues;
        assert!(close(e[0], 3.0, -2.0) && close(e[1], 3.0, 2.0) && close(e[2], 6.0, 0.0), "{e:?}");
        assert!(north.jacobian_fd_error < 1e-8 && south.jacobian_fd_error < 1e-8);
    }

    #[test]
    fn zero_gamma_centers() {
        let reports = fixed_points(&FlowSpec::normalized(0.0).unwrap()).unwrap();
        assert_eq!(reports.len(), LINE_SAMPLES.len());
        for r in &reports {
            assert_eq!(r.classification, Stability::Center);
            assert!(r.line_direction.is_some());
        }
        let j = jacobian(&FlowSpec::normalized(0.0).unwrap(), &[0., 0., 0.3]).unwrap();
        let e = sorted_eigenvalues(&j);
        assert!(close(e[0], 0.0, -2.0) && close(e[1], 0.0, 0.0) && close(e[2], 0.0, 2.0), "{e:?}");
    }

    #[test]
    fn unnormalized_line() {
        let reports = fixed_points(&FlowSpec::unnormalized(1.0).unwrap()).unwrap();
        for r in &reports {
            assert_eq!(r.classification, Stability::LineOfFixedPoints);
            let e = &r.jacobian_eigenvalues;
            assert!(e.iter().any(|v| close(*v, 0.0, 0.0)));
            assert!(e.iter().any(|v| close(*v, -2.0, 0.0)));
        }
    }

    #[test]
    fn classification_table() {
        let c = |v: &[(f64, f64)]| classify_point(&v.iter().map(|&(r, i)| Complex64::new(r, i)).collect::<Vec<_>>());
        assert_eq!(c(&[(-1., 0.), (-2., 1.), (-2., -1.)]), Stability::Sink);
        assert_eq!(c(&[(1., 0.), (2., 0.)]), Stability::Source);
        assert_eq!(c(&[(1., 0.), (-2., 0.)]), Stability::Saddle);
        assert_eq!(c(&[(0., 2.), (0., -2.), (0., 0.)]), Stability::Center);
        assert_eq!(c(&[(0., 0.), (-1., 0.)]), Stability::NonHyperbolic);
    }

    #[test]
    fn flow_matches_engine() {
        let h = split(&sigma_z_decay(3.0)).unwrap();
        let rho0 = DensityMatrix::from_bloch(&BlochState::new(0.1, 0.0, -0.9).unwrap()).unwrap();
        let ctrl = EvolveControl::default().with_sample_every(0.05);
        let cmp = verify_bloch_consistency(&h, &rho0, 0.0, 5.0, &ctrl).unwrap();
        assert!(cmp.max_deviation < 1e-6, "{}", cmp.max_deviation);
        assert!(cmp.flow.last().unwrap()[2] > 0.999 && cmp.engine.last().unwrap()[2] > 0.999);
    }

    #[test]
    fn south_pole_is_equilibrium() {
        let h = split(&sigma_z_decay(3.0)).unwrap();
        let rho0 = DensityMatrix::basis(2, 1).unwrap();
        let cmp = verify_bloch_consistency(&h, &rho0, 0.0, 5.0, &EvolveControl::default()).unwrap();
        assert!(cmp.flow.iter().chain(&cmp.engine).all(|b| (b[2] + 1.0).abs() < 1e-12));
    }

    #[test]
    fn wrong_family_rejected() {
        let h = split(&pauli_x()).unwrap();
        let r = verify_bloch_consistency(&h, &DensityMatrix::basis(2, 0).unwrap(), 0.0, 1.0, &EvolveControl::default());
        assert!(r.is_err());
    }

    #[test]
    fn z_minus_w_decays_at_twice_gamma() {
        let gamma = 0.7;
        let spec = FlowSpec::unnormalized(gamma).unwrap();
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let rows = integrate_flow(&spec, &[0.3, 0.1, -0.4, 1.0], &times, &OdeOptions::default()).unwrap();
        for (r, t) in rows.iter().zip(&times) {
            let expected = -1.4 * (-2.0 * gamma * t).exp();
            assert!((r[2] - r[3] - expected).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sphere_and_z_monotone(theta in 0.05f64..3.09, phi in 0.0f64..std::f64::consts::TAU, gamma in 0.1f64..4.0) {
            let spec = FlowSpec::normalized(gamma).unwrap();
            let start = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
            let rows = integrate_flow(&spec, &start, &times, &OdeOptions::default()).unwrap();
            for w in rows.windows(2) {
                prop_assert!(w[1][2] >= w[0][2]);
            }
            for r in &rows {
                let norm2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                prop_assert!((norm2 - 1.0).abs() < 1e-8);
            }
        }

        #[test]
        fn zero_gamma_radius_constant(x in -0.7f64..0.7, y in -0.7f64..0.7, z in -0.7f64..0.7) {
            let spec = FlowSpec::normalized(0.0).unwrap();
            let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.2).collect();
            let rows = integrate_flow(&spec, &[x, y, z], &times, &OdeOptions::default()).unwrap();
            let r0 = (x * x + y * y).sqrt();
            for r in &rows {
                prop_assert!(((r[0] * r[0] + r[1] * r[1]).sqrt() - r0).abs() < 1e-8);
                prop_assert!((r[2] - z).abs() < 1e-15);
            }
        }

        #[test]
        fn analytic_jacobian_matches_fd(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, g in 0.0f64..5.0) {
            let spec = FlowSpec::normalized(g).unwrap();
            let a = jacobian(&spec, &[x, y, z]).unwrap();
            let f = finite_difference_jacobian(&spec, &[x, y, z], FD_STEP).unwrap();
            prop_assert!((a - f).amax() < 1e-8);
        }
    }
}
