//! Dense complex matrices for small Hilbert spaces (2 ≤ N ≤ 8), density
//! matrices, Bloch coordinates and the matrix exponential.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Largest |ρ − ρ†| entry that is silently hermitized on construction.
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-9;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
}

/// Complex diagonal matrix from real entries.
pub fn real_diagonal(entries: &[f64]) -> CMatrix {
    let d = DVector::from_iterator(entries.len(), entries.iter().map(|&v| c64(v, 0.)));
    CMatrix::from_diagonal(&d)
}

pub fn complex_diagonal(entries: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_column_slice(entries))
}

/// |v⟩⟨v|
pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// max |a − a†| over entries.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    max_abs_diff(a, &a.adjoint())
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Checks squareness, the supported dimension range and finiteness.
pub fn check_matrix(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if !(MIN_DIM..=MAX_DIM).contains(&a.nrows()) {
        return Err(Error::Dimension {
            expected: format!("{MIN_DIM} <= N <= {MAX_DIM}"),
            got: a.nrows().to_string(),
        });
    }
    if !is_finite(a) {
        return Err(validation("matrix has non-finite entries"));
    }
    Ok(())
}

pub(crate) fn check_same_dim(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the
/// Hermitian part of `a` is used.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 2 {
        let p = a[(0, 0)].re;
        let q = a[(1, 1)].re;
        let off = (a[(0, 1)] + a[(1, 0)].conj()) * 0.5;
        let mean = 0.5 * (p + q);
        let radius = (0.25 * (p - q) * (p - q) + off.norm_sqr()).sqrt();
        return vec![mean - radius, mean + radius];
    }
    let mut vals: Vec<f64> = SymmetricEigen::new(hermitize(a)).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn mat_exp(a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if !is_finite(a) {
        return Err(validation("mat_exp: non-finite input"));
    }
    let n = a.nrows();
    let nrm = norm1(a);
    let squarings = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(0.5f64.powi(squarings));

    let b = |k: usize| c64(PADE13[k], 0.0);
    let eye = identity(n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &scaled * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &eye * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &eye * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Analysis("mat_exp: singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(validation("mat_exp: result overflowed"));
    }
    Ok(r)
}

/// A point in (or on) the Bloch ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub const NORTH: BlochState = BlochState { x: 0., y: 0., z: 1. };
    pub const SOUTH: BlochState = BlochState { x: 0., y: 0., z: -1. };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let b = BlochState { x, y, z };
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::InvalidState("non-finite Bloch coordinates".into()));
        }
        if b.norm() > 1.0 + PSD_TOL {
            return Err(Error::InvalidState(format!("Bloch vector norm {} exceeds 1", b.norm())));
        }
        Ok(b)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &BlochState) -> f64 {
        let d = [self.x - other.x, self.y - other.y, self.z - other.z];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// (Tr Aσx, Tr Aσy, Tr Aσz) for any 2×2 matrix; imaginary residues are
/// dropped. Works for unnormalized matrices too.
pub fn pauli_coordinates(a: &CMatrix) -> Result<[f64; 3]> {
    if a.shape() != (2, 2) {
        return Err(Error::Dimension { expected: "2x2".into(), got: format!("{}x{}", a.nrows(), a.ncols()) });
    }
    let x = a[(0, 1)] + a[(1, 0)];
    let y = (a[(0, 1)] - a[(1, 0)]) * c64(0., 1.);
    let z = a[(0, 0)] - a[(1, 1)];
    Ok([x.re, y.re, z.re])
}

/// Two amplitudes c1|0⟩ + c2|1⟩ with |c1|² + |c2|² = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureStateAmplitudes {
    c1: Complex64,
    c2: Complex64,
}

impl PureStateAmplitudes {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(c1: Complex64, c2: Complex64) -> Result<Self> {
        let norm = c1.norm_sqr() + c2.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidState(format!("|c1|^2 + |c2|^2 = {norm}, expected 1")));
        }
        Ok(Self { c1, c2 })
    }

    /// Real non-negative amplitudes with |c1|² = p0.
    pub fn from_population(p0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::InvalidState(format!("population {p0} outside [0, 1]")));
        }
        Ok(Self { c1: c64(p0.sqrt(), 0.), c2: c64((1.0 - p0).sqrt(), 0.) })
    }

    pub fn equal() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self { c1: c64(a, 0.), c2: c64(a, 0.) }
    }

    pub fn c1(&self) -> Complex64 {
        self.c1
    }

    pub fn c2(&self) -> Complex64 {
        self.c2
    }

    pub fn p0(&self) -> f64 {
        self.c1.norm_sqr()
    }

    pub fn p1(&self) -> f64 {
        self.c2.norm_sqr()
    }

    pub fn swapped(&self) -> Self {
        Self { c1: self.c2, c2: self.c1 }
    }

    pub fn vector(&self) -> CVector {
        CVector::from_column_slice(&[self.c1, self.c2])
    }

    /// [[|c1|², c1c2*], [c1*c2, |c2|²]]
    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(projector(&self.vector()))
    }

    /// (r_x, r_y, r_z) = (c1c2* + c1*c2, i(c1c2* − c1*c2), |c1|² − |c2|²)
    pub fn bloch(&self) -> BlochState {
        let (c1, c2) = (self.c1, self.c2);
        let rx = c1 * c2.conj() + c1.conj() * c2;
        let ry = c64(0., 1.) * (c1 * c2.conj() - c1.conj() * c2);
        BlochState { x: rx.re, y: ry.re, z: c1.norm_sqr() - c2.norm_sqr() }
    }
}

/// Hermitian, unit-trace, positive-semidefinite N×N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates `m`. Asymmetry below [`HERMITIAN_TOL`] is absorbed by
    /// hermitizing; anything larger is rejected.
    pub fn new(m: CMatrix) -> Result<Self> {
        check_matrix(&m)?;
        let asym = hermitian_deviation(&m);
        if asym > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian: max |rho - rho^dag| = {asym:e}")));
        }
        let m = hermitize(&m);
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&m)[0];
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(m))
    }

    pub fn from_diagonal(populations: &[f64]) -> Result<Self> {
        Self::new(real_diagonal(populations))
    }

    /// |ψ⟩⟨ψ|/⟨ψ|ψ⟩
    pub fn pure(psi: &CVector) -> Result<Self> {
        let n2 = psi.norm_squared();
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        Self::new(projector(psi).unscale(n2))
    }

    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::IndexOutOfRange { index: k, dim });
        }
        let mut v = CVector::zeros(dim);
        v[k] = c64(1., 0.);
        Self::pure(&v)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::new(identity(dim).unscale(dim as f64))
    }

    /// ρ = ½(I + xσx + yσy + zσz)
    pub fn from_bloch(b: &BlochState) -> Result<Self> {
        if !(b.norm() <= 1.0 + PSD_TOL) {
            return Err(Error::InvalidState(format!("Bloch vector norm {} exceeds 1", b.norm())));
        }
        let m = (identity(2) + pauli_x().scale(b.x) + pauli_y().scale(b.y) + pauli_z().scale(b.z)).scale(0.5);
        Self::new(m)
    }

    pub fn to_bloch(&self) -> Result<BlochState> {
        let [x, y, z] = pauli_coordinates(&self.0)?;
        Ok(BlochState { x, y, z })
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Tr(ρσ)
    pub fn overlap(&self, other: &DensityMatrix) -> Result<f64> {
        check_same_dim(&self.0, &other.0)?;
        Ok(trace(&(&self.0 * &other.0)).re)
    }

    pub fn population(&self, k: usize) -> Result<f64> {
        if k >= self.dim() {
            return Err(Error::IndexOutOfRange { index: k, dim: self.dim() });
        }
        Ok(self.0[(k, k)].re)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|z| z.re).collect()
    }

    /// ⟨v|ρ|v⟩ for a normalized vector v.
    pub fn expectation(&self, v: &CVector) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim().to_string(), got: v.len().to_string() });
        }
        Ok((v.adjoint() * &self.0 * v)[(0, 0)].re)
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.0 * &self.0)).re
    }

    /// U ρ U† for unitary U.
    pub fn conjugate_by(&self, u: &CMatrix) -> Result<Self> {
        check_same_dim(&self.0, u)?;
        Self::new(u * &self.0 * u.adjoint())
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }
}
