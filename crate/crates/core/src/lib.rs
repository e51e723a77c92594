//! Quantum measurement emulated by non-Hermitian Hamiltonian dynamics.
//!
//! Density matrices are evolved under the trace-preserving nonlinear von
//! Neumann equation `ρ̇ = −i[H_h,ρ] − {H_a,ρ} + 2 tr(ρH_a)ρ` for
//! `H = H_h − iH_a`. The crate provides three independent evolution
//! engines (adaptive ODE, normalized propagator, two-level closed form),
//! the switched measurement Hamiltonians that collapse a state onto an
//! eigenvector, Bloch-ball flows with their fixed points, a Lindblad
//! comparison, and a hidden-variable Monte Carlo extension.

pub mod bloch;
pub mod error;
pub mod evolution;
pub mod hamiltonian;
pub mod io;
pub mod lindblad;
pub mod matrix;
pub mod measurement;
pub mod ode;
pub mod stochastic;

pub use error::{Error, Result};
pub use matrix::{BlochState, CMatrix, CVector, DensityMatrix, PureStateAmplitudes};
pub use num_complex::Complex64;
