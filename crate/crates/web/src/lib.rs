//! Browser bindings for three interactive views: a Bloch-sphere trajectory
//! under σz − i(γ/2)(I − σz), the windowed σx-basis collapse from |0⟩, and
//! the four-level degeneracy cases. Every function returns a flat row-major
//! array whose stride is given by the matching `*_STRIDE` constant.

use nhcollapse::evolution::{evolve_ode, EvolveControl};
use nhcollapse::hamiltonian::{sigma_z_decay, x_window_literal, DegeneracyCase, Sign, SwitchedHamiltonian};
use nhcollapse::matrix::BlochState;
use nhcollapse::measurement::{degeneracy_run, run_scenario, MeasurementScenario};
use nhcollapse::ode::OdeOptions;
use nhcollapse::DensityMatrix;
use wasm_bindgen::prelude::*;

/// t, x, y, z
pub const BLOCH_STRIDE: usize = 4;
/// t, x, y, z, p(initial), p(orthogonal), p(+), p(−)
pub const COLLAPSE_STRIDE: usize = 8;
/// t, p0, p1, p2, p3
pub const DEGENERACY_STRIDE: usize = 5;

/// Longest trajectory the page may request.
const MAX_SAMPLES: f64 = 20_000.0;

fn check_samples(t1: f64, dt: f64) -> Result<(), String> {
    if !(dt > 0.0 && t1 > 0.0 && t1 / dt <= MAX_SAMPLES) {
        return Err(format!("need dt > 0, t1 > 0 and at most {MAX_SAMPLES} samples"));
    }
    Ok(())
}

pub fn bloch_trajectory(gamma: f64, x: f64, y: f64, z: f64, t1: f64, dt: f64) -> Result<Vec<f64>, String> {
    check_samples(t1, dt)?;
    if !(gamma >= 0.0) {
        return Err(format!("gamma must be non-negative, got {gamma}"));
    }
    let start = BlochState::new(x, y, z).map_err(|e| e.to_string())?;
    let rho0 = DensityMatrix::from_bloch(&start).map_err(|e| e.to_string())?;
    let h = SwitchedHamiltonian::constant(&sigma_z_decay(gamma)).map_err(|e| e.to_string())?;
    let traj = evolve_ode(&h, &rho0, 0.0, t1, &EvolveControl::default().with_sample_every(dt)).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(traj.len() * BLOCH_STRIDE);
    for (i, &t) in traj.times().iter().enumerate() {
        out.push(t);
        out.extend(traj.bloch(i).expect("two-level"));
    }
    Ok(out)
}

pub fn collapse_curves(plus: bool, gamma: f64, t_i: f64, t_f: f64, t_end: f64, dt: f64) -> Result<Vec<f64>, String> {
    check_samples(t_end, dt)?;
    if !(gamma >= 1.0) {
        return Err(format!("gamma must be at least 1, got {gamma}"));
    }
    let sign = if plus { Sign::Plus } else { Sign::Minus };
    let h = x_window_literal(sign, (gamma * gamma - 1.0).sqrt(), t_i, t_f).map_err(|e| e.to_string())?;
    let rho0 = DensityMatrix::basis(2, 0).map_err(|e| e.to_string())?;
    let s = MeasurementScenario::new(h, rho0, 0.0, t_end, dt).map_err(|e| e.to_string())?;
    let run = run_scenario(&s).map_err(|e| e.to_string())?;
    let traj = &run.trajectory;
    let mut out = Vec::with_capacity(traj.len() * COLLAPSE_STRIDE);
    for (i, &t) in traj.times().iter().enumerate() {
        let [x, y, z] = traj.bloch(i).expect("two-level");
        out.extend([t, x, y, z, (1.0 + z) / 2.0, (1.0 - z) / 2.0, (1.0 + x) / 2.0, (1.0 - x) / 2.0]);
    }
    Ok(out)
}

pub fn degeneracy_populations(case: &str, gamma: f64, t_i: f64, t_f: f64, dt: f64) -> Result<Vec<f64>, String> {
    let which = match case {
        "a" => DegeneracyCase::A,
        "b" => DegeneracyCase::B,
        "c" => DegeneracyCase::C,
        other => return Err(format!("unknown case `{other}`, expected a, b or c")),
    };
    check_samples(2.0 * t_f - t_i, dt)?;
    let rho0 = DensityMatrix::from_diagonal(&[0.1, 0.2, 0.3, 0.4]).map_err(|e| e.to_string())?;
    let run = degeneracy_run(which, gamma, t_i, t_f, &rho0, dt, &OdeOptions::default()).map_err(|e| e.to_string())?;
    let traj = &run.trajectory;
    let mut out = Vec::with_capacity(traj.len() * DEGENERACY_STRIDE);
    for (i, &t) in traj.times().iter().enumerate() {
        out.push(t);
        out.extend(traj.populations(i));
    }
    Ok(out)
}

#[wasm_bindgen(js_name = blochTrajectory)]
pub fn bloch_trajectory_js(gamma: f64, x: f64, y: f64, z: f64, t1: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    bloch_trajectory(gamma, x, y, z, t1, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = collapseCurves)]
pub fn collapse_curves_js(plus: bool, gamma: f64, t_i: f64, t_f: f64, t_end: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    collapse_curves(plus, gamma, t_i, t_f, t_end, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = degeneracyPopulations)]
pub fn degeneracy_populations_js(case: &str, gamma: f64, t_i: f64, t_f: f64, dt: f64) -> Result<Vec<f64>, JsError> {
    degeneracy_populations(case, gamma, t_i, t_f, dt).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[f64], stride: usize) -> Vec<&[f64]> {
        assert_eq!(v.len() % stride, 0);
        v.chunks(stride).collect()
    }

    #[test]
    fn bloch_spiral_reaches_north_pole() {
        let v = bloch_trajectory(3.0, 0.6, 0.0, -0.8, 5.0, 0.05).unwrap();
        let r = rows(&v, BLOCH_STRIDE);
        assert_eq!(r[0], [0.0, 0.6, 0.0, -0.8]);
        assert!(r.last().unwrap()[3] > 0.999);
        let flat = bloch_trajectory(0.0, 0.8, 0.0, 0.6, 3.0, 0.05).unwrap();
        assert!(rows(&flat, BLOCH_STRIDE).iter().all(|row| (row[3] - 0.6).abs() < 1e-9));
    }

    #[test]
    fn collapse_goes_to_the_signed_eigenvector() {
        for (plus, col) in [(true, 6), (false, 7)] {
            let v = collapse_curves(plus, 3.0, 7.0, 8.0, 15.0, 0.05).unwrap();
            let last = *rows(&v, COLLAPSE_STRIDE).last().unwrap();
            assert!(last[col] > 0.99, "{last:?}");
            assert!((last[4] + last[5] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degeneracy_case_c_keeps_the_ratio() {
        let v = degeneracy_populations("c", 3.0, 6.0, 8.0, 0.05).unwrap();
        for row in rows(&v, DEGENERACY_STRIDE) {
            assert!((row[1] / row[2] - 0.5).abs() < 1e-6);
        }
        let a = degeneracy_populations("a", 3.0, 6.0, 8.0, 0.05).unwrap();
        assert!(rows(&a, DEGENERACY_STRIDE).last().unwrap()[1] > 0.999);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(degeneracy_populations("d", 3.0, 6.0, 8.0, 0.05).is_err());
        assert!(bloch_trajectory(3.0, 1.0, 1.0, 0.0, 5.0, 0.05).is_err());
        assert!(bloch_trajectory(3.0, 0.0, 0.0, 1.0, 5.0, 0.0).is_err());
        assert!(collapse_curves(true, 0.5, 7.0, 8.0, 15.0, 0.05).is_err());
        assert!(collapse_curves(true, 3.0, 8.0, 7.0, 15.0, 0.05).is_err());
    }
}
