use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::{json, Value};

use super::config::{
    CasesParams, CollapseParams, DegeneracyParams, EnsembleParams, EvolveEngine, EvolveParams, FixedPointParams,
    LindbladParams, NamedState, ScenarioConfig, ScenarioKind, ScenarioParams, TableFormat,
};
use super::table::Table;
use crate::bloch::{fixed_points, integrate_flow, FlowSpec, FlowVariant};
use crate::error::{validation, Error, Result};
use crate::evolution::{
    case_formula, evolve_closed_form, evolve_ode, evolve_unnormalized, propagate_unnormalized, CaseKind, EvolveControl,
    Trajectory,
};
use crate::lindblad::compare_to_dephasing;
use crate::matrix::{max_abs_diff, CMatrix, PureStateAmplitudes};
use crate::measurement::{degeneracy_run, run_scenario, MeasurementScenario};
use crate::ode::uniform_grid;
use crate::stochastic::{born_deviation, run_ensemble, EnsembleSpec, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub enum ArtifactContent {
    Table(Table),
    Json(Value),
}

/// One output file: `<output.path><suffix>.<ext>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub suffix: String,
    pub content: ArtifactContent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub kind: ScenarioKind,
    /// One-line human-readable result.
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

fn table(suffix: &str, t: Table) -> Artifact {
    Artifact { suffix: suffix.to_string(), content: ArtifactContent::Table(t) }
}

fn report(v: Value) -> Artifact {
    Artifact { suffix: ".report".to_string(), content: ArtifactContent::Json(v) }
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_complex(z: Complex64) -> String {
    let re = if z.re.abs() < 1e-12 { 0.0 } else { z.re };
    if z.im.abs() < 1e-12 {
        format!("{re:.6}")
    } else {
        format!("{re:.6}{:+.6}i", z.im)
    }
}

fn with_references(mut traj: Trajectory, refs: &[NamedState]) -> Result<Trajectory> {
    for r in refs {
        traj = traj.with_reference(r.name.clone(), r.state.density()?)?;
    }
    Ok(traj)
}

fn final_summary(traj: &Trajectory) -> (Vec<f64>, f64) {
    let i = traj.len() - 1;
    (traj.populations(i), traj.purity(i))
}

pub(crate) fn ensemble_spec(p: &EnsembleParams) -> Result<EnsembleSpec> {
    let amps = PureStateAmplitudes::from_population(p.p0)?;
    let mut spec = EnsembleSpec::new(amps, p.gamma, p.t_i, p.window_base, p.n_runs, p.seed.unwrap_or(0));
    spec.partitions = p.partitions;
    spec.tf_jitter = p.tf_jitter;
    spec.g_mode = p.g_mode;
    spec.engine = p.engine;
    spec.population_floor = p.population_floor;
    spec.log_runs = p.log_runs;
    spec.ode = p.ode;
    Ok(spec)
}

fn run_evolve(p: &EvolveParams) -> Result<RunOutput> {
    let h = p.hamiltonian.build()?;
    let rho0 = p.initial.density()?;
    let ctrl = EvolveControl { ode: p.ode, sample_every: p.sample_step };
    let traj = match p.engine {
        EvolveEngine::Ode => evolve_ode(&h, &rho0, p.t0, p.t1, &ctrl)?,
        EvolveEngine::Unnormalized => evolve_unnormalized(&h, &rho0, p.t0, p.t1, &ctrl)?,
        EvolveEngine::ClosedForm => {
            let m = p
                .hamiltonian
                .constant_matrix()?
                .ok_or_else(|| validation("closed-form evolution needs a constant Hamiltonian"))?;
            let grid = uniform_grid(p.t0, p.t1, p.sample_step)?;
            let states = grid
                .iter()
                .map(|&t| evolve_closed_form(&m, &rho0, t - p.t0).map(|r| r.into_matrix()))
                .collect::<Result<Vec<_>>>()?;
            Trajectory::new(grid, states, true)?
        }
    };
    let traj = with_references(traj, &p.references)?;
    let (pops, purity) = final_summary(&traj);
    let last = traj.len() - 1;
    let summary = format!(
        "evolve: {} samples on [{}, {}], final populations {}, purity {:.6}",
        traj.len(),
        p.t0,
        p.t1,
        fmt_list(&pops),
        purity
    );
    let rep = json!({
        "kind": "evolve",
        "engine": p.engine,
        "samples": traj.len(),
        "final_time": traj.final_time(),
        "final_populations": pops,
        "final_purity": purity,
        "final_trace": traj.trace(last),
        "final_bloch": traj.bloch(last),
        "stats": traj.stats(),
    });
    Ok(RunOutput { kind: ScenarioKind::Evolve, summary, artifacts: vec![table("", Table::from_trajectory(&traj)?), report(rep)] })
}

fn run_collapse(p: &CollapseParams) -> Result<RunOutput> {
    let h = p.hamiltonian.build()?;
    let rho0 = p.initial.density()?;
    let scenario = MeasurementScenario::new(h, rho0, p.t_start, p.t_end, p.sample_step)?.with_ode(p.ode);
    let run = run_scenario(&scenario)?;
    let traj = with_references(run.trajectory, &p.references)?;
    let m = &run.metrics;
    let summary = format!(
        "collapse: attractor index {}, kappa {:.6}, target population {:.6} at t_f and {:.6} at the end, persistence error {:.2e}",
        m.target_index, m.kappa, m.population_at_t_f, m.final_target_population, m.persistence_error
    );
    let target: Vec<[f64; 2]> = run.target.iter().map(|z| [z.re, z.im]).collect();
    let rep = json!({
        "kind": "collapse",
        "metrics": m,
        "target": target,
        "final_populations": traj.populations(traj.len() - 1),
        "stats": traj.stats(),
    });
    Ok(RunOutput { kind: ScenarioKind::Collapse, summary, artifacts: vec![table("", Table::from_trajectory(&traj)?), report(rep)] })
}

fn run_degeneracy(p: &DegeneracyParams) -> Result<RunOutput> {
    let rho0 = p.initial.density()?;
    let run = degeneracy_run(p.case, p.gamma, p.t_i, p.t_f, &rho0, p.sample_step, &p.ode)?;
    let r = &run.report;
    let attractor = serde_json::to_string(&r.attractor).map_err(|e| Error::Io(e.to_string()))?;
    let summary = format!(
        "degeneracy case {}: attractor {attractor}, kappa {:.6}, final populations {}, leakage {:.2e}",
        serde_json::to_value(p.case).map_err(|e| Error::Io(e.to_string()))?.as_str().unwrap_or("?"),
        r.kappa,
        fmt_list(&r.final_populations),
        r.leakage
    );
    let rep = json!({ "kind": "degeneracy", "report": r, "stats": run.trajectory.stats() });
    Ok(RunOutput {
        kind: ScenarioKind::Degeneracy,
        summary,
        artifacts: vec![table("", Table::from_trajectory(&run.trajectory)?), report(rep)],
    })
}

fn case_name(k: CaseKind) -> &'static str {
    match k {
        CaseKind::A => "a",
        CaseKind::B => "b",
        CaseKind::C1 => "c1",
        CaseKind::C2 => "c2",
    }
}

fn run_cases(p: &CasesParams) -> Result<RunOutput> {
    let c = p.amplitudes.amplitudes()?;
    let grid = uniform_grid(p.t0, p.t1, p.sample_step)?;
    let (l1, l2, g) = (p.lambda1, p.lambda2, p.gamma);
    let rho0 = c.density();
    let mut artifacts = Vec::new();
    let mut propagator_dev = serde_json::Map::new();
    for &k in &p.cases {
        let states: Vec<CMatrix> = grid.iter().map(|&t| case_formula(k, l1, l2, g, &c, t)).collect();
        // independent route: matrix exponential of the case Hamiltonian
        let h = k.hamiltonian(l1, l2, g);
        let mut dev: f64 = 0.0;
        for (&t, s) in grid.iter().zip(&states) {
            let reference = if k.is_normalized() {
                evolve_closed_form(&h, &rho0, t)?.into_matrix()
            } else {
                propagate_unnormalized(&h, &rho0, t)?
            };
            dev = dev.max(max_abs_diff(s, &reference));
        }
        propagator_dev.insert(case_name(k).to_string(), json!(dev));
        let traj = Trajectory::new(grid.clone(), states, k.is_normalized())?;
        artifacts.push(table(&format!("_{}", case_name(k)), Table::from_trajectory(&traj)?));
    }
    let max_over = |f: &dyn Fn(f64) -> f64| grid.iter().map(|&t| f(t)).fold(0.0, f64::max);
    let b_vs_c1 = max_over(&|t| max_abs_diff(&case_formula(CaseKind::B, l1, l2, g, &c, t), &case_formula(CaseKind::C1, l1, l2, g, &c, t)));
    let b2_vs_a = max_over(&|t| {
        max_abs_diff(&case_formula(CaseKind::B, l1, l2, 2.0 * g, &c, t), &case_formula(CaseKind::A, l1, l2, g, &c, t))
    });
    let equal = (c.p0() - 0.5).abs() < 1e-12;
    let coherence_dev = equal.then(|| {
        let c12 = (c.c1() * c.c2().conj()).norm();
        max_over(&|t| (case_formula(CaseKind::A, l1, l2, g, &c, t)[(0, 1)].norm() - c12 / (2.0 * g * t).cosh()).abs())
    });
    let names: Vec<&str> = p.cases.iter().map(|&k| case_name(k)).collect();
    let worst = propagator_dev.values().filter_map(Value::as_f64).fold(0.0, f64::max);
    let summary = format!(
        "cases: {} on [{}, {}]; max|B - C1| = {:.2e}, max|B(2g) - A(g)| = {:.2e}, max deviation from propagator = {:.2e}",
        names.join(" "),
        p.t0,
        p.t1,
        b_vs_c1,
        b2_vs_a,
        worst
    );
    artifacts.push(report(json!({
        "kind": "cases",
        "cases": names,
        "b_vs_c1": b_vs_c1,
        "b_at_2gamma_vs_a": b2_vs_a,
        "a_coherence_vs_cosh_formula": coherence_dev,
        "formula_vs_propagator": propagator_dev,
    })));
    Ok(RunOutput { kind: ScenarioKind::Cases, summary, artifacts })
}

fn run_lindblad(p: &LindbladParams) -> Result<RunOutput> {
    let c = p.amplitudes.amplitudes()?;
    let grid = uniform_grid(0.0, p.t1, p.sample_step)?;
    let cmp = compare_to_dephasing(p.lambda1, p.lambda2, p.gamma, &c, &grid, &p.ode)?;
    let cols = [
        "t",
        "raw_trace",
        "p0",
        "p1",
        "coherence",
        "dephasing_coherence",
        "distance_to_dephasing",
        "distance_to_diagonal",
    ];
    let mut t = Table::new(cols.iter().map(|s| s.to_string()).collect());
    for r in &cmp.rows {
        t.push_row(vec![
            r.t,
            r.raw_trace,
            r.populations[0],
            r.populations[1],
            r.coherence,
            r.dephasing_coherence,
            r.distance_to_dephasing,
            r.distance_to_diagonal,
        ])?;
    }
    let last = cmp.rows.last().expect("non-empty grid");
    let summary = format!(
        "lindblad: gamma_eff {:.6}, at t = {} raw trace {:.6}, distance to dephasing {:.2e}, to diagonal {:.2e}",
        cmp.gamma_eff, last.t, last.raw_trace, last.distance_to_dephasing, last.distance_to_diagonal
    );
    let rep = json!({
        "kind": "lindblad",
        "gamma_eff": cmp.gamma_eff,
        "max_trace_drift": cmp.max_trace_drift,
        "final": last,
    });
    Ok(RunOutput { kind: ScenarioKind::Lindblad, summary, artifacts: vec![table("", t), report(rep)] })
}

fn run_ensemble_kind(p: &EnsembleParams) -> Result<RunOutput> {
    let seed = p.seed.ok_or_else(|| validation("ensemble needs a seed"))?;
    let spec = ensemble_spec(p)?;
    let r = run_ensemble(&spec)?;
    let dev = born_deviation(&r, &spec.amplitudes);
    let summary = format!(
        "ensemble: n = {}, freq0 = {:.4} +/- {:.4}, freq1 = {:.4}, indeterminate = {:.4}, |freq0 - p0| = {:.4}",
        r.n_runs, r.freq0, r.stderr, r.freq1, r.indeterminate, dev
    );
    let mut artifacts = Vec::new();
    if let Some(log) = &r.per_run_log {
        let cols = ["index", "partitions", "t_f", "outcome", "p0", "p1"];
        let mut t = Table::new(cols.iter().map(|s| s.to_string()).collect());
        for rec in log {
            let outcome = match rec.outcome {
                Outcome::Zero => 0.0,
                Outcome::One => 1.0,
                Outcome::Indeterminate => -1.0,
            };
            t.push_row(vec![rec.index as f64, rec.partitions as f64, rec.t_f, outcome, rec.populations[0], rec.populations[1]])?;
        }
        artifacts.push(table("_runs", t));
    }
    artifacts.push(report(json!({
        "kind": "ensemble",
        "seed": seed,
        "p0": p.p0,
        "n_runs": r.n_runs,
        "count0": r.count0,
        "count1": r.count1,
        "count_indeterminate": r.count_indeterminate,
        "freq0": r.freq0,
        "freq1": r.freq1,
        "indeterminate": r.indeterminate,
        "stderr": r.stderr,
        "born_deviation": dev,
        "collapse_figure_of_merit": spec.collapse_figure_of_merit(),
    })));
    Ok(RunOutput { kind: ScenarioKind::Ensemble, summary, artifacts })
}

fn run_fixed_points(p: &FixedPointParams) -> Result<RunOutput> {
    let spec = FlowSpec::new(p.variant, p.gamma)?;
    let points = fixed_points(&spec)?;
    let described: Vec<String> = points
        .iter()
        .map(|fp| {
            let loc: Vec<String> = fp.location.iter().map(|v| format!("{v}")).collect();
            let eig: Vec<String> = fp.jacobian_eigenvalues.iter().map(|&z| fmt_complex(z)).collect();
            let class = serde_json::to_value(fp.classification).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            format!("({}) {} [{}]", loc.join(", "), class, eig.join(", "))
        })
        .collect();
    let summary = format!("fixed-points (gamma = {}): {}", p.gamma, described.join("; "));
    let mut artifacts = Vec::new();
    if !p.starts.is_empty() {
        let grid = uniform_grid(0.0, p.t1, p.sample_step)?;
        let mut cols = vec!["t", "x", "y", "z"];
        if p.variant == FlowVariant::Unnormalized4d {
            cols.push("w");
        }
        for (k, start) in p.starts.iter().enumerate() {
            let rows = integrate_flow(&spec, start, &grid, &p.ode)?;
            let mut t = Table::new(cols.iter().map(|s| s.to_string()).collect());
            for (&time, r) in grid.iter().zip(rows) {
                let mut row = vec![time];
                row.extend(r);
                t.push_row(row)?;
            }
            artifacts.push(table(&format!("_flow{k}"), t));
        }
    }
    artifacts.push(report(json!({
        "kind": "fixed-points",
        "variant": p.variant,
        "gamma": p.gamma,
        "fixed_points": points,
    })));
    Ok(RunOutput { kind: ScenarioKind::FixedPoints, summary, artifacts })
}

/// Runs a validated scenario in memory.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunOutput> {
    match &cfg.params {
        ScenarioParams::Evolve(p) => run_evolve(p),
        ScenarioParams::Collapse(p) => run_collapse(p),
        ScenarioParams::Degeneracy(p) => run_degeneracy(p),
        ScenarioParams::Cases(p) => run_cases(p),
        ScenarioParams::Lindblad(p) => run_lindblad(p),
        ScenarioParams::Ensemble(p) => run_ensemble_kind(p),
        ScenarioParams::FixedPoints(p) => run_fixed_points(p),
    }
}

fn pretty(v: &Value) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string()))
}

/// Writes every artifact under `dir` and returns the paths written.
pub fn write_outputs(dir: &Path, stem: &str, format: TableFormat, out: &RunOutput) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for a in &out.artifacts {
        let (ext, text) = match (&a.content, format) {
            (ArtifactContent::Table(t), TableFormat::Csv) => ("csv", t.to_csv()?),
            (ArtifactContent::Table(t), TableFormat::Json) => ("json", pretty(&t.to_json())?),
            (ArtifactContent::Json(v), _) => ("json", pretty(v)?),
        };
        let path = dir.join(format!("{stem}{}.{ext}", a.suffix));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_config;

    fn run(text: &str) -> RunOutput {
        execute(&parse_config(text).unwrap()).unwrap()
    }

    fn report_of(out: &RunOutput) -> &Value {
        out.artifacts
            .iter()
            .find_map(|a| match &a.content {
                ArtifactContent::Json(v) => Some(v),
                _ => None,
            })
            .unwrap()
    }

    #[test]
    fn fixed_points_report_sink_spectrum() {
        let out = run("kind = \"fixed-points\"\n[parameters]\ngamma = 3.0\n");
        assert!(out.summary.contains("(0, 0, 1) sink [-6.000000, -3.000000-2.000000i, -3.000000+2.000000i]"), "{}", out.summary);
        let fp = &report_of(&out)["fixed_points"][0];
        assert_eq!(fp["classification"], "sink");
    }

    #[test]
    fn collapse_run_writes_table_and_report() {
        let text = "kind = \"collapse\"\n[output]\npath = \"sub/c\"\n[parameters]\nt_end = 13.0\nsample_step = 0.05\ninitial = { type = \"bloch\", x = 1.0, y = 0.0, z = 0.0 }\n[parameters.hamiltonian]\ntype = \"two-level-pm\"\nsign = \"+\"\ngamma = 3.0\nt_i = 7.0\nt_f = 8.0\n";
        let cfg = parse_config(text).unwrap();
        let out = execute(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_outputs(dir.path(), &cfg.output.path, cfg.output.format, &out).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[0].ends_with("sub/c.csv") && paths[1].ends_with("sub/c.report.json"));
        let t = Table::from_csv(&fs::read_to_string(&paths[0]).unwrap()).unwrap();
        t.check_trajectory().unwrap();
        assert!(*t.column("overlap_target").unwrap().last().unwrap() >= 0.99);
        let json_paths = write_outputs(dir.path(), "j", TableFormat::Json, &out).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&json_paths[0]).unwrap()).unwrap();
        assert_eq!(v["columns"][0], "t");
    }

    #[test]
    fn cases_identities_in_report() {
        let out = run("kind = \"cases\"\n[parameters]\nlambda1 = 1.0\nlambda2 = -0.5\ngamma = 0.7\nt1 = 3.0\nsample_step = 0.1\namplitudes = { type = \"population\", p0 = 0.5 }\n");
        let r = report_of(&out);
        assert!(r["b_vs_c1"].as_f64().unwrap() < 1e-15);
        assert!(r["b_at_2gamma_vs_a"].as_f64().unwrap() < 1e-12);
        assert!(r["a_coherence_vs_cosh_formula"].as_f64().unwrap() < 1e-10);
        for k in ["a", "b", "c1", "c2"] {
            assert!(r["formula_vs_propagator"][k].as_f64().unwrap() < 1e-10, "{k}");
        }
        assert_eq!(out.artifacts.len(), 5);
    }

    #[test]
    fn evolve_engines_agree() {
        let base = "kind = \"evolve\"\n[parameters]\nt1 = 2.0\nsample_step = 0.5\ninitial = { type = \"bloch\", x = 0.6, y = 0.0, z = -0.8 }\nhamiltonian = { type = \"sigma-z-decay\", gamma = 3.0 }\n";
        let tab = |o: &RunOutput| match &o.artifacts[0].content {
            ArtifactContent::Table(t) => t.clone(),
            _ => panic!(),
        };
        let a = tab(&run(base));
        let b = tab(&run(&format!("{base}engine = \"closed-form\"\n")));
        assert_eq!(a.columns, b.columns);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-7);
            }
        }
        let u = tab(&run(&format!("{base}engine = \"unnormalized\"\n")));
        assert!(u.column_index("w").is_some());
    }

    #[test]
    fn ensemble_log_and_report() {
        let out = run("kind = \"ensemble\"\n[parameters]\np0 = 0.7\ngamma = 500.0\nt_i = 1.0\nwindow_base = 60.0\nn_runs = 50\nseed = 3\nlog_runs = true\n");
        assert_eq!(out.artifacts.len(), 2);
        let r = report_of(&out);
        assert_eq!(r["n_runs"], 50);
        assert!(out.summary.starts_with("ensemble: n = 50"));
    }

    #[test]
    fn lindblad_and_degeneracy_run() {
        let out = run("kind = \"lindblad\"\n[parameters]\nlambda1 = 1.0\nlambda2 = -1.0\ngamma = 1.0\nt1 = 2.0\nsample_step = 0.5\namplitudes = { type = \"population\", p0 = 0.5 }\n");
        assert!(report_of(&out)["max_trace_drift"].as_f64().unwrap() < 1e-9);
        let out = run("kind = \"degeneracy\"\n[parameters]\ncase = \"a\"\ngamma = 3.0\nt_i = 6.0\nt_f = 8.0\nsample_step = 0.1\n");
        assert!(out.summary.contains("degeneracy case a"), "{}", out.summary);
    }
}
