use std::sync::Arc;

use singlab::continuation::{fold_detect, homotopy_run, singular_sequence, ContinuationOptions, TraceStatus};
use singlab::grid::{Domain, Field, Grid};
use singlab::radial::{bifurcation_constants, EpsWindow};

fn ball(n: usize, h: f64) -> Arc<Grid> {
    Arc::new(Grid::build(&Domain::Ball { n, radius: 1.0, r_inner: None }, h).unwrap())
}

fn run(n: usize, h: f64, from: f64, to: f64, steps: usize) -> singlab::continuation::ContinuationTrace {
    let g = ball(n, h);
    let opts = ContinuationOptions { steps, ..Default::default() };
    homotopy_run(&Field::constant(g.clone(), from), &Field::constant(g, to), &opts).unwrap()
}

#[test]
fn doubling_steps_reproduces_common_points() {
    let coarse = run(3, 1.0 / 64.0, 4.0, 2.0, 8);
    let fine = run(3, 1.0 / 64.0, 4.0, 2.0, 16);
    assert_eq!(coarse.status, TraceStatus::Completed);
    assert_eq!(fine.status, TraceStatus::Completed);
    let tol = ContinuationOptions::default().solve.tol;
    for (s, f) in coarse.steps.iter().zip(&coarse.fields) {
        let k = fine.steps.iter().position(|x| (x.t - s.t).abs() < 1e-12).expect("common t value");
        assert!(f.max_abs_diff(&fine.fields[k]) <= 10.0 * tol, "t = {}", s.t);
    }
}

#[test]
fn seven_dimensional_branch_completes_toward_the_cone() {
    let tr = run(7, 1.0 / 200.0, 2.0, 1.0, 10);
    assert_eq!(tr.status, TraceStatus::Completed);
    let mins: Vec<f64> = tr.steps.iter().map(|s| s.min_u).collect();
    assert!(mins.windows(2).all(|w| w[1] < w[0]));
    // data 1 lies above the n = 7 threshold 1/√6, so the centre stays well positive
    assert!(*mins.last().unwrap() > 0.2);
    assert!(tr.steps.iter().all(|s| s.lambda_min.unwrap() >= -1e-6));
}

#[test]
fn three_dimensional_fold_sits_at_the_scan_minimum() {
    let c1 = bifurcation_constants(3, 1.0, EpsWindow::default()).unwrap().c1;
    let tr = run(3, 1.0 / 128.0, 2.0, 0.5, 20);
    assert_eq!(tr.status, TraceStatus::NonexistenceDetected);
    let folds = fold_detect(&tr);
    assert_eq!(folds.len(), 1);
    let level = |t: f64| 2.0 * (1.0 - t) + 0.5 * t;
    let (a, b) = (level(folds[0].1), level(folds[0].0));
    assert!(a - 2e-3 <= c1 && c1 <= b + 2e-3, "fold levels [{a}, {b}] vs C1 = {c1}");
}

#[test]
fn disk_terminal_minimum_is_resolution_independent() {
    let mins: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
        .iter()
        .map(|&h| {
            let tr = run(2, h, 2.0, 0.05, 20);
            assert_eq!(tr.status, TraceStatus::NonexistenceDetected);
            tr.last_converged().unwrap().min_u
        })
        .collect();
    let (lo, hi) = mins.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    assert!(hi <= 2.0 * lo, "{mins:?}");
}

#[test]
fn disk_singular_sequence_runs_out() {
    let g = ball(2, 1.0 / 64.0);
    let seq = singular_sequence(&Field::constant(g, 2.0), &[0.2, 0.1, 0.05, 0.01], &ContinuationOptions::default())
        .unwrap();
    let reached: Vec<bool> = seq.iter().map(|e| e.achieved()).collect();
    // once a target fails every smaller one fails too
    let first_miss = reached.iter().position(|r| !r).expect("some target is unreachable in the plane");
    assert!(reached[first_miss..].iter().all(|r| !r));
    assert!(seq[first_miss].obstruction.as_ref().unwrap().contains("no solution"));
}
