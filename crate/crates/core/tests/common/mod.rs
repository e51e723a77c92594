#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use nhcollapse::io::{execute, parse_config, ArtifactContent, RunOutput, ScenarioConfig, ScenarioParams, Table};
use nhcollapse::matrix::{c64, hermitian_eigenvalues};
use nhcollapse::CMatrix;

pub const GOLDEN: [&str; 11] =
    ["fig1a", "fig1b", "fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig2f", "fig3a", "fig3a_b", "fig3b"];

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn load(name: &str) -> ScenarioConfig {
    let path = scenario_dir().join(format!("{name}.toml"));
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn run(name: &str) -> (ScenarioConfig, RunOutput) {
    let cfg = load(name);
    let out = execute(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    (cfg, out)
}

pub fn tables(out: &RunOutput) -> Vec<(&str, &Table)> {
    out.artifacts
        .iter()
        .filter_map(|a| match &a.content {
            ArtifactContent::Table(t) => Some((a.suffix.as_str(), t)),
            ArtifactContent::Json(_) => None,
        })
        .collect()
}

pub fn report(out: &RunOutput) -> &serde_json::Value {
    out.artifacts
        .iter()
        .find_map(|a| match &a.content {
            ArtifactContent::Json(v) => Some(v),
            ArtifactContent::Table(_) => None,
        })
        .expect("report artifact")
}

pub fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap_or_else(|| panic!("missing column {name}"))
}

/// Matrix dimension of a trajectory table, `None` for other tables.
pub fn state_dim(t: &Table) -> Option<usize> {
    let n = (0..).take_while(|k| t.column_index(&format!("re_rho_{k}_{k}")).is_some()).count();
    (n > 0).then_some(n)
}

pub fn state_at(t: &Table, row: usize, n: usize) -> CMatrix {
    let r = &t.rows[row];
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let re = r[t.column_index(&format!("re_rho_{i}_{j}")).unwrap()];
            let im = r[t.column_index(&format!("im_rho_{i}_{j}")).unwrap()];
            m[(i, j)] = c64(re, im);
            m[(j, i)] = c64(re, -im);
        }
    }
    m
}

/// Worst violations over every row: (|Tr − 1|, |Im diag|, −min eigenvalue).
/// Unnormalized tables are divided by their trace first.
pub fn state_violations(t: &Table) -> Option<(f64, f64, f64)> {
    let n = state_dim(t)?;
    let w = t.column_index("w");
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for row in 0..t.rows.len() {
        let mut m = state_at(t, row, n);
        let tr: f64 = (0..n).map(|k| m[(k, k)].re).sum();
        if w.is_some() {
            m /= c64(tr, 0.0);
        } else {
            worst.0 = worst.0.max((tr - 1.0).abs());
        }
        worst.1 = worst.1.max((0..n).map(|k| m[(k, k)].im.abs()).fold(0.0, f64::max));
        let min = hermitian_eigenvalues(&m).into_iter().fold(f64::INFINITY, f64::min);
        worst.2 = worst.2.max(-min);
    }
    Some(worst)
}

/// True when the scenario starts from a pure state and keeps it normalized.
pub fn pure_start(cfg: &ScenarioConfig) -> bool {
    let initial = match &cfg.params {
        ScenarioParams::Evolve(p) => &p.initial,
        ScenarioParams::Collapse(p) => &p.initial,
        ScenarioParams::Degeneracy(p) => &p.initial,
        _ => return false,
    };
    initial.density().map(|d| d.purity() > 1.0 - 1e-12).unwrap_or(false)
}
