//! Hamiltonian construction: Hermitian/anti-Hermitian split, switched
//! measurement Hamiltonians, the degeneracy study cases, the stochastic
//! hidden-variable Hamiltonian and attractor prediction.

mod attractor;
mod switching;
mod wave;

pub use attractor::{attractor_prediction, eigensystem, Attractor, AttractorReport, DEFAULT_DEGENERACY_TOL};
pub use switching::SwitchingProfile;
pub use wave::{HiddenVariableWave, WaveMode, DEFAULT_FOURIER_TERMS};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::matrix::{
    c64, check_matrix, complex_diagonal, hermitian_deviation, identity, pauli_x, pauli_z, projector, real_diagonal,
    CMatrix, CVector, PureStateAmplitudes,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// H = H_h − i·H_a with both parts Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitHamiltonian {
    full: CMatrix,
    hermitian: CMatrix,
    anti: CMatrix,
}

impl SplitHamiltonian {
    pub fn full(&self) -> &CMatrix {
        &self.full
    }

    /// H_h = (H + H†)/2
    pub fn hermitian(&self) -> &CMatrix {
        &self.hermitian
    }

    /// H_a = i(H − H†)/2
    pub fn anti_hermitian(&self) -> &CMatrix {
        &self.anti
    }

    pub fn reconstruct(&self) -> CMatrix {
        &self.hermitian - &self.anti * I
    }

    pub fn dim(&self) -> usize {
        self.full.nrows()
    }
}

pub fn split(h: &CMatrix) -> Result<SplitHamiltonian> {
    check_matrix(h)?;
    let dag = h.adjoint();
    let hermitian = (h + &dag).scale(0.5);
    let anti = (h - &dag) * (I * 0.5);
    Ok(SplitHamiltonian { full: h.clone(), hermitian, anti })
}

/// A generator multiplied by the hidden-variable wave g(t).
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    pub wave: HiddenVariableWave,
    pub generator: CMatrix,
}

/// H(t) = base + f(t)·(gain + g(t)·modulation).
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedHamiltonian {
    base: CMatrix,
    gain: CMatrix,
    profile: SwitchingProfile,
    modulation: Option<Modulation>,
}

impl SwitchedHamiltonian {
    pub fn new(base: CMatrix, gain: CMatrix, profile: SwitchingProfile) -> Result<Self> {
        check_matrix(&base)?;
        check_matrix(&gain)?;
        if base.shape() != gain.shape() {
            return Err(Error::Dimension {
                expected: format!("{}x{}", base.nrows(), base.ncols()),
                got: format!("{}x{}", gain.nrows(), gain.ncols()),
            });
        }
        let dev = hermitian_deviation(&base);
        if dev > 1e-12 {
            return Err(validation(format!("base Hamiltonian is not Hermitian (deviation {dev:e})")));
        }
        profile.validate()?;
        Ok(Self { base, gain, profile, modulation: None })
    }

    /// Constant (possibly non-Hermitian) H written as its Hermitian part
    /// plus an always-on anti-Hermitian gain.
    pub fn constant(h: &CMatrix) -> Result<Self> {
        let s = split(h)?;
        Self::new(s.hermitian.clone(), -(&s.anti * I), SwitchingProfile::AlwaysOn)
    }

    pub fn with_modulation(mut self, wave: HiddenVariableWave, generator: CMatrix) -> Result<Self> {
        check_matrix(&generator)?;
        if generator.shape() != self.base.shape() {
            return Err(Error::Dimension {
                expected: format!("{}x{}", self.base.nrows(), self.base.ncols()),
                got: format!("{}x{}", generator.nrows(), generator.ncols()),
            });
        }
        self.modulation = Some(Modulation { wave, generator });
        Ok(self)
    }

    pub fn base(&self) -> &CMatrix {
        &self.base
    }

    pub fn gain(&self) -> &CMatrix {
        &self.gain
    }

    pub fn profile(&self) -> &SwitchingProfile {
        &self.profile
    }

    pub fn modulation(&self) -> Option<&Modulation> {
        self.modulation.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    fn assemble(&self, f: f64, g: Option<f64>) -> CMatrix {
        let mut drive = self.gain.clone();
        if let (Some(m), Some(g)) = (&self.modulation, g) {
            drive += &m.generator * c64(g, 0.0);
        }
        &self.base + drive * c64(f, 0.0)
    }

    pub fn eval(&self, t: f64) -> CMatrix {
        let g = self.modulation.as_ref().map(|m| m.wave.value_extended(t));
        self.assemble(self.profile.value(t), g)
    }

    /// Evaluation inside an integration segment with midpoint `anchor`.
    pub fn eval_on_segment(&self, t: f64, anchor: f64) -> CMatrix {
        let g = self.modulation.as_ref().map(|m| m.wave.value_on_segment(t, anchor));
        self.assemble(self.profile.value_on_segment(t, anchor), g)
    }

    /// H with f = 1 and no modulation: the Hamiltonian acting inside the window.
    pub fn window_hamiltonian(&self) -> CMatrix {
        &self.base + &self.gain
    }

    /// H with the profile forced to `f`, and g frozen at `g` when modulated.
    pub fn frozen(&self, f: f64, g: f64) -> CMatrix {
        self.assemble(f, Some(g))
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.profile.breakpoints();
        if let Some(m) = &self.modulation {
            b.extend(m.wave.breakpoints());
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+", alias = "plus")]
    Plus,
    #[serde(rename = "-", alias = "minus")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn target_index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

pub fn computational_basis(n: usize) -> Vec<CVector> {
    (0..n)
        .map(|k| {
            let mut v = CVector::zeros(n);
            v[k] = c64(1.0, 0.0);
            v
        })
        .collect()
}

/// (|+⟩, |−⟩)
pub fn x_basis() -> Vec<CVector> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        CVector::from_column_slice(&[c64(a, 0.), c64(a, 0.)]),
        CVector::from_column_slice(&[c64(a, 0.), c64(-a, 0.)]),
    ]
}

/// Unitary whose columns are the basis vectors.
pub fn basis_unitary(basis: &[CVector]) -> CMatrix {
    CMatrix::from_columns(basis)
}

fn check_orthonormal(basis: &[CVector]) -> Result<()> {
    let n = basis.len();
    for (i, u) in basis.iter().enumerate() {
        if u.len() != n {
            return Err(validation(format!("basis vector {i} has length {}, expected {n}", u.len())));
        }
        for (j, v) in basis.iter().enumerate() {
            let ip = u.dotc(v);
            let expected = if i == j { 1.0 } else { 0.0 };
            if (ip - c64(expected, 0.0)).norm() > 1e-10 {
                return Err(validation(format!("basis is not orthonormal: <phi_{i}|phi_{j}> = {ip}")));
            }
        }
    }
    Ok(())
}

/// Σ λ_i |φ_i⟩⟨φ_i| + iγ f(t) |φ_j⟩⟨φ_j|
pub fn measurement_hamiltonian(
    basis: &[CVector],
    eigenvalues: &[f64],
    target: usize,
    gamma: f64,
    profile: SwitchingProfile,
) -> Result<SwitchedHamiltonian> {
    check_orthonormal(basis)?;
    if eigenvalues.len() != basis.len() {
        return Err(Error::Dimension { expected: basis.len().to_string(), got: eigenvalues.len().to_string() });
    }
    if target >= basis.len() {
        return Err(Error::IndexOutOfRange { index: target, dim: basis.len() });
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be non-negative, got {gamma}")));
    }
    let n = basis.len();
    let mut base = CMatrix::zeros(n, n);
    for (phi, &lambda) in basis.iter().zip(eigenvalues) {
        base += projector(phi) * c64(lambda, 0.0);
    }
    let gain = projector(&basis[target]) * (I * gamma);
    SwitchedHamiltonian::new(base, gain, profile)
}

/// H±(t) = σz + i(γ/2) f(t) (I ± σz)
pub fn two_level_pm(sign: Sign, gamma: f64, profile: SwitchingProfile) -> Result<SwitchedHamiltonian> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be positive, got {gamma}")));
    }
    let gain = (identity(2) + pauli_z() * c64(sign.value(), 0.0)) * (I * (gamma / 2.0));
    SwitchedHamiltonian::new(pauli_z(), gain, profile)
}

/// H = σz − i(γ/2)(I − σz), the constant two-level example with a sink at
/// the north pole for γ > 0.
pub fn sigma_z_decay(gamma: f64) -> CMatrix {
    pauli_z() - (identity(2) - pauli_z()) * (I * (gamma / 2.0))
}

/// σx outside the window and ±iεσx inside it (hard switch).
pub fn x_window_literal(sign: Sign, epsilon: f64, t_i: f64, t_f: f64) -> Result<SwitchedHamiltonian> {
    let window = pauli_x() * (I * (sign.value() * epsilon));
    let gain = window - pauli_x();
    SwitchedHamiltonian::new(pauli_x(), gain, SwitchingProfile::hard(t_i, t_f)?)
}

/// x-basis measurement H(t) = σx + iγ f(t)|±⟩⟨±| toward |+⟩ (Plus) or |−⟩.
pub fn x_basis_measurement(sign: Sign, gamma: f64, profile: SwitchingProfile) -> Result<SwitchedHamiltonian> {
    measurement_hamiltonian(&x_basis(), &[1.0, -1.0], sign.target_index(), gamma, profile)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegeneracyCase {
    A,
    B,
    C,
}

/// The 4-level diagonal cases: (a) non-degenerate real and imaginary parts,
/// (b) degenerate real parts, (c) degenerate largest imaginary part.
pub fn degeneracy_case(which: DegeneracyCase, gamma: f64, profile: SwitchingProfile) -> Result<SwitchedHamiltonian> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be positive, got {gamma}")));
    }
    let (real, imag): ([f64; 4], [f64; 4]) = match which {
        DegeneracyCase::A => ([1., 2., 3., 4.], [4., 3., 2., 1.]),
        DegeneracyCase::B => ([1., 1., 1., 4.], [4., 3., 2., 1.]),
        DegeneracyCase::C => ([1., 2., 3., 4.], [0., 0., -1., -1.]),
    };
    let gain = complex_diagonal(&imag.map(|v| c64(0.0, gamma * v)));
    SwitchedHamiltonian::new(real_diagonal(&real), gain, profile)
}

/// H(t) = σz + i(γ/2) f(t) (I + g(t) σz)
pub fn stochastic_hamiltonian(
    amplitudes: &PureStateAmplitudes,
    gamma: f64,
    profile: SwitchingProfile,
    wave: HiddenVariableWave,
) -> Result<SwitchedHamiltonian> {
    if (wave.p0() - amplitudes.p0()).abs() > 1e-12 {
        return Err(validation(format!("wave p0 = {} does not match |c1|^2 = {}", wave.p0(), amplitudes.p0())));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(validation(format!("gamma must be positive, got {gamma}")));
    }
    let half = I * (gamma / 2.0);
    SwitchedHamiltonian::new(pauli_z(), identity(2) * half, profile)?.with_modulation(wave, pauli_z() * half)
}
