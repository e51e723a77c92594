use nalgebra::{Schur, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_matrix, CMatrix, CVector};

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "indices", rename_all = "kebab-case")]
pub enum Attractor {
    Unique(usize),
    DegenerateSubspace(Vec<usize>),
    None,
}

/// Spectrum of H ordered by the basis index each eigenvector is mostly
/// aligned with (for diagonal H this is the diagonal order).
#[derive(Debug, Clone)]
pub struct AttractorReport {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Vec<CVector>,
    pub attractor: Attractor,
}

impl AttractorReport {
    pub fn unique_index(&self) -> Option<usize> {
        match self.attractor {
            Attractor::Unique(k) => Some(k),
            _ => None,
        }
    }

    /// Gap between the largest imaginary part and the next distinct one.
    pub fn imaginary_gap(&self) -> Option<f64> {
        let k = self.unique_index()?;
        let top = self.eigenvalues[k].im;
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, z)| top - z.im)
            .min_by(f64::total_cmp)
    }
}

fn is_diagonal(h: &CMatrix) -> bool {
    let n = h.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == Complex64::new(0.0, 0.0)))
}

fn null_vector(h: &CMatrix, lambda: Complex64) -> CVector {
    let n = h.nrows();
    let shifted = h - CMatrix::identity(n, n) * lambda;
    let svd = SVD::new(shifted, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let v: CVector = v_t.row(k).adjoint();
    v.normalize()
}

/// Eigen-decomposition with eigenvectors; errors on (numerically)
/// defective matrices.
pub fn eigensystem(h: &CMatrix) -> Result<(Vec<Complex64>, Vec<CVector>)> {
    check_matrix(h)?;
    let n = h.nrows();
    if is_diagonal(h) {
        let vals = h.diagonal().iter().copied().collect();
        let vecs = (0..n)
            .map(|k| {
                let mut v = CVector::zeros(n);
                v[k] = Complex64::new(1.0, 0.0);
                v
            })
            .collect();
        return Ok((vals, vecs));
    }
    let eig = Schur::new(h.clone())
        .eigenvalues()
        .ok_or_else(|| Error::Analysis("Schur decomposition did not converge".into()))?;
    let mut pairs: Vec<(usize, Complex64, CVector)> = eig
        .iter()
        .map(|&lambda| {
            let v = null_vector(h, lambda);
            let dominant = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (dominant, lambda, v)
        })
        .collect();
    pairs.sort_by_key(|p| p.0);

    let basis = CMatrix::from_columns(&pairs.iter().map(|p| p.2.clone()).collect::<Vec<_>>());
    let sv = basis.singular_values();
    let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < 1e-8 {
        return Err(Error::Analysis(format!(
            "matrix is defective or too close to an exceptional point (eigenvector basis singular value {smallest:e})"
        )));
    }
    Ok((pairs.iter().map(|p| p.1).collect(), pairs.into_iter().map(|p| p.2).collect()))
}

/// The eigenvector whose eigenvalue has the strictly largest imaginary part
/// attracts the normalized dynamics. Ties within `tol·max(1, |Im λ_max|)`
/// give a degenerate subspace; a fully tied spectrum has no attractor.
pub fn attractor_prediction(h: &CMatrix, tol: f64) -> Result<AttractorReport> {
    let (eigenvalues, eigenvectors) = eigensystem(h)?;
    let top = eigenvalues.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    let scale = tol * top.abs().max(1.0);
    let leading: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, z)| top - z.im <= scale)
        .map(|(k, _)| k)
        .collect();
    let attractor = if leading.len() == eigenvalues.len() {
        Attractor::None
    } else if leading.len() == 1 {
        Attractor::Unique(leading[0])
    } else {
        Attractor::DegenerateSubspace(leading)
    };
    Ok(AttractorReport { eigenvalues, eigenvectors, attractor })
}
