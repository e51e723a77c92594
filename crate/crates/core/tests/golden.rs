mod common;

use std::fs;

use common::*;
use nhcollapse::io::{parse_config, to_toml, write_outputs, Table};

fn last(v: &[f64]) -> f64 {
    *v.last().unwrap()
}

#[test]
fn every_golden_state_is_a_density_matrix() {
    for name in GOLDEN {
        let (cfg, out) = run(name);
        for (suffix, t) in tables(&out) {
            t.check_trajectory().unwrap();
            let (tr, herm, neg) = state_violations(t).expect("trajectory table");
            assert!(tr < 1e-9 && herm < 1e-12 && neg < 1e-9, "{name}{suffix}: {tr:e} {herm:e} {neg:e}");
            if pure_start(&cfg) {
                let worst = col(t, "purity").iter().map(|p| (1.0 - p).abs()).fold(0.0, f64::max);
                assert!(worst < 1e-8, "{name}: purity drifts by {worst:e}");
            }
        }
    }
}

#[test]
fn fig1a_circles_the_z_axis() {
    let (_, out) = run("fig1a");
    let t = tables(&out)[0].1;
    let z = col(t, "z");
    assert!(z.iter().all(|v| (v - z[0]).abs() < 1e-9));
    let (x, y) = (col(t, "x"), col(t, "y"));
    assert!(x.iter().zip(&y).all(|(a, b)| ((a * a + b * b).sqrt() - 0.8).abs() < 1e-8));
    // back to the start after the full 2π window
    assert!((last(&x) - 0.8).abs() < 1e-8 && last(&y).abs() < 1e-8);
}

#[test]
fn fig1b_spirals_to_the_north_pole() {
    let (_, out) = run("fig1b");
    let t = tables(&out)[0].1;
    assert!(last(&col(t, "z")) > 0.999);
    assert!(last(&col(t, "overlap_north")) > 1.0 - 1e-9);
    assert!(col(t, "overlap_south")[0] > 0.85);
}

#[test]
fn fig2_windows_collapse_and_stay() {
    for (name, target) in [("fig2a", 0), ("fig2b", 0), ("fig2c", 0), ("fig2d", 1), ("fig2e", 1), ("fig2f", 1)] {
        let (_, out) = run(name);
        let t = tables(&out)[0].1;
        let times = col(t, "t");
        let p = col(t, "overlap_target");
        let before = times.iter().position(|&s| s >= 7.0).unwrap();
        assert!(p[before] < 0.6, "{name}: population before the window {}", p[before]);
        assert!(last(&p) >= 0.99, "{name}: final {}", last(&p));
        let m = &report(&out)["metrics"];
        assert!(m["persistence_error"].as_f64().unwrap() < 1e-3);
        // the target is |+⟩ for the + window and |−⟩ for the − window
        let x = last(&col(t, "x"));
        assert!(if target == 0 { x > 0.99 } else { x < -0.99 }, "{name}: x = {x}");
        if let Some(plus) = t.column("overlap_plus") {
            let minus = col(t, "overlap_minus");
            let (won, lost) = if target == 0 { (plus, minus) } else { (minus, plus) };
            assert!(last(&won) > 0.99 && last(&lost) < 0.01);
        }
        if let Some(orth) = t.column("overlap_orthogonal") {
            let init = col(t, "overlap_initial");
            assert!(init.iter().zip(&orth).all(|(a, b)| (a + b - 1.0).abs() < 1e-9));
        }
    }
}

#[test]
fn fig3_degeneracy_cases() {
    for name in ["fig3a", "fig3a_b"] {
        let (_, out) = run(name);
        let t = tables(&out)[0].1;
        assert!(last(&col(t, "t")) == 10.0);
        assert!(last(&col(t, "p0")) > 0.999, "{name}");
    }
    let (_, out) = run("fig3b");
    let t = tables(&out)[0].1;
    assert!(last(&col(t, "p2")) < 1e-3 && last(&col(t, "p3")) < 1e-3);
    for (a, b) in col(t, "p0").iter().zip(col(t, "p1")) {
        assert!((a / b - 0.5).abs() < 1e-6);
    }
}

#[test]
fn golden_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in GOLDEN {
        let (cfg, out) = run(name);
        assert_eq!(parse_config(&to_toml(&cfg).unwrap()).unwrap(), cfg, "{name}");
        let written = write_outputs(dir.path(), &cfg.output.path, cfg.output.format, &out).unwrap();
        let csv = written.iter().find(|p| p.extension().unwrap() == "csv").unwrap();
        let back = Table::from_csv(&fs::read_to_string(csv).unwrap()).unwrap();
        assert_eq!(&back, tables(&out)[0].1, "{name}");
    }
}

#[test]
fn example_scenarios_run() {
    for name in ["cases", "lindblad", "fixed_points", "ensemble"] {
        let (_, out) = run(name);
        assert!(!out.summary.contains('\n'));
        for (suffix, t) in tables(&out) {
            assert!(t.rows.iter().flatten().all(|v| v.is_finite()), "{name}{suffix}");
            if let Some((tr, herm, neg)) = state_violations(t) {
                assert!(tr < 1e-9 && herm < 1e-12 && neg < 1e-9, "{name}{suffix}");
            }
        }
    }
}
