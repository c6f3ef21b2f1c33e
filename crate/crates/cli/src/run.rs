//! Subcommand bodies. Each returns its JSON results and status; artifacts go to `out`.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use singlab::analysis::{
    box_dimension, default_tau, holder_quotient_seeded, log_trick_functional, p_integral_check, positivity_check,
    reference_p_constant, reference_w12_constant, w12_p2_check, EstimateReport, Subdomain,
};
use singlab::continuation::{homotopy_run, singular_sequence, ContinuationOptions, TraceStatus};
use singlab::grid::{Field, Grid};
use singlab::radial::{
    bifurcation_constants, integrate_radial, solve_dirichlet_radial_in, BifurcationScan, EpsWindow, SHOOT_TOL,
};
use singlab::reproduce::run_criteria;
use singlab::solver::{harmonic_extension, maximal_solution, newton_solve, SolveReport, SolveStatus};
use singlab::stability::{hardy_witness, stability_operator_for, EigenOptions};

use crate::config::{ExperimentConfig, FieldSource, SolveMethod};
use crate::output::{OutDir, RunStatus};
use crate::plots::{self, PlotKind};

#[derive(Debug)]
pub struct Failure {
    pub message: String,
    pub status: RunStatus,
}

impl From<singlab::Error> for Failure {
    fn from(e: singlab::Error) -> Self {
        use singlab::Error as E;
        let status = match e {
            E::StepUnderflow { .. } | E::EigenNotConverged { .. } | E::LinearSolve(_) | E::NonFinite(_) => {
                RunStatus::NonConvergence
            }
            E::InvalidGrid(_) | E::InvalidArgument(_) | E::Geometry(_) | E::SizeCap(_) | E::Precondition(_) => {
                RunStatus::ConfigError
            }
            _ => RunStatus::Error,
        };
        Failure { message: e.to_string(), status }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { message: e.to_string(), status: RunStatus::Error }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { message: e.to_string(), status: RunStatus::Error }
    }
}

pub type RunResult = Result<(Value, RunStatus), Failure>;

fn window(cfg: &ExperimentConfig) -> EpsWindow {
    EpsWindow { lo: cfg.radial.eps_lo, hi: cfg.radial.eps_hi, samples: cfg.radial.samples }
}

/// Value of the cone `√(m/(n−1))·r` at r = 1.
fn cone_slope(n: usize, m: f64) -> f64 {
    (m / ((n.max(2) - 1) as f64)).sqrt()
}

fn write_scan(out: &mut OutDir, scan: &BifurcationScan) -> Result<(), Failure> {
    out.write_with("scan.csv", |w| scan.write_csv(w))?;
    out.write("scan.gp", plots::scan_script("scan.csv", cone_slope(scan.n, scan.m)).as_bytes()).map_err(Failure::from)
}

fn scan_json(scan: &BifurcationScan) -> Value {
    json!({
        "n": scan.n,
        "m": scan.m,
        "c1": scan.c1,
        "c2": scan.c2,
        "eps_c1": scan.eps_c1,
        "eps_c2": scan.eps_c2,
        "c1_on_window_edge": scan.c1_on_boundary,
        "c2_on_window_edge": scan.c2_on_boundary,
        "window": [scan.window.lo, scan.window.hi],
        "samples": scan.window.samples,
        "warnings": scan.warnings,
    })
}

pub fn radial(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let p = &cfg.problem;
    let mut blocks = Vec::new();
    let mut ends = Vec::new();
    for &eps in &cfg.radial.eps {
        let prof = integrate_radial(eps, p.n, p.m, cfg.radial.r_max, SHOOT_TOL)?;
        ends.push(json!({"eps": eps, "u_end": prof.u_end(), "samples": prof.r.len()}));
        let rows = (0..prof.r.len()).map(|i| (prof.r[i], prof.u[i], prof.du[i])).collect();
        blocks.push((eps, rows));
    }
    let data = plots::profiles_data(&blocks);
    out.write("profiles.dat", data.as_bytes())?;
    let script = plots::profiles_script("profiles.dat", &plots::profile_labels(&data), cone_slope(p.n, p.m));
    out.write("profiles.gp", script.as_bytes())?;
    let scan = bifurcation_constants(p.n, p.m, window(cfg))?;
    write_scan(out, &scan)?;
    Ok((json!({"profiles": ends, "scan": scan_json(&scan)}), RunStatus::Success))
}

pub fn bifurcation(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let p = &cfg.problem;
    let scan = bifurcation_constants(p.n, p.m, window(cfg))?;
    write_scan(out, &scan)?;
    let mut counts = Vec::new();
    for &c in &cfg.radial.levels {
        let w = EpsWindow { hi: cfg.radial.eps_hi.max(2.0 * c), ..window(cfg) };
        let roots = solve_dirichlet_radial_in(p.n, p.m, c, w)?;
        counts.push(json!({"level": c, "solutions": roots.profiles.len(), "eps": roots.eps()}));
    }
    out.write("bifurcation.txt", scan.summary().as_bytes())?;
    Ok((json!({"scan": scan_json(&scan), "levels": counts}), RunStatus::Success))
}

fn boundary_data(cfg: &ExperimentConfig, grid: &Arc<Grid>) -> Result<Field, Failure> {
    let (c, s) = (cfg.solve.boundary, cfg.solve.slope);
    if grid.is_radial() || s == 0.0 {
        Ok(Field::constant(grid.clone(), c))
    } else {
        Field::from_fn(grid.clone(), |x| c + s * x[0]).map_err(Failure::from)
    }
}

fn run_solve(cfg: &ExperimentConfig) -> Result<(Field, SolveReport), Failure> {
    let grid = cfg.grid()?;
    let data = boundary_data(cfg, &grid)?;
    let opts = cfg.solve_options();
    let rep = match cfg.solve.method {
        SolveMethod::Maximal => maximal_solution(&data, &opts),
        SolveMethod::Newton => newton_solve(&data, &harmonic_extension(&data)?, &opts),
    }
    ?;
    Ok((data, rep))
}

fn solve_status(rep: &SolveReport) -> RunStatus {
    match rep.status {
        SolveStatus::Converged => RunStatus::Success,
        SolveStatus::Collapsed => RunStatus::NonexistenceDetected,
        _ => RunStatus::NonConvergence,
    }
}

pub fn solve(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let (_, rep) = run_solve(cfg)?;
    out.write_with("solution.csv", |w| rep.field.write_csv(w))?;
    let summary = rep.summary(cfg.nonlinearity());
    let history: Vec<f64> = rep.residual_history.clone();
    Ok((json!({"solve": summary, "residual_history": history, "monotone": rep.monotone}), solve_status(&rep)))
}

fn field_for(cfg: &ExperimentConfig, source: FieldSource) -> Result<(Field, Option<(Field, SolveReport)>), Failure> {
    match source {
        FieldSource::Cone => {
            let grid = cfg.grid()?;
            let s = cone_slope(grid.dim(), cfg.problem.m);
            let f = if grid.is_radial() {
                Field::from_radial_fn(grid, |r| s * r)
            } else {
                Field::from_fn(grid, |x| s * x.iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            ?;
            Ok((f, None))
        }
        FieldSource::Solution => {
            let (data, rep) = run_solve(cfg)?;
            Ok((rep.field.clone(), Some((data, rep))))
        }
    }
}

pub fn stability(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let (field, solved) = field_for(cfg, cfg.stability.field)?;
    if let Some((_, rep)) = &solved {
        if !rep.converged {
            return Ok((json!({"solve": rep.summary(cfg.nonlinearity())}), solve_status(rep)));
        }
    }
    let op = stability_operator_for(&field, cfg.nonlinearity())?;
    let opts = EigenOptions { max_iter: cfg.stability.max_iter, rel: cfg.stability.rel_tol, ..EigenOptions::default() };
    let spec = op.smallest(&opts)?;
    out.write_with("eigenvector.csv", |w| spec.eigenvector.write_csv(w))?;
    let mut results = json!({
        "spectrum": spec.summary(),
        "stable": spec.lambda_min >= -singlab::stability::STABLE_TOL,
    });
    if cfg.stability.hardy {
        let hw = hardy_witness(field.grid().dim(), field.grid().clone())?;
        results["hardy_quotient"] = json!(hw.quotient);
        results["hardy_shallow"] = json!(hw.shallow);
    }
    Ok((results, RunStatus::Success))
}

pub fn continuation(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let c = &cfg.continuation;
    let grid = cfg.grid()?;
    let opts = ContinuationOptions {
        solve: cfg.solve_options(),
        steps: c.steps,
        min_dt: c.min_dt,
        restarts: c.restarts,
        solver: c.solver,
        track_lambda: c.track_lambda,
        ..ContinuationOptions::default()
    };
    let phi0 = Field::constant(grid.clone(), c.from);
    let tr = homotopy_run(&phi0, &Field::constant(grid, c.to), &opts)?;
    out.write_with("trace.csv", |w| tr.write_csv(w))?;
    out.write("trace.gp", plots::trace_script("trace.csv").as_bytes())?;
    let mut results = json!({"trace": tr.summary()});
    if !c.targets.is_empty() {
        let seq = singular_sequence(&phi0, &c.targets, &opts)?;
        let mut csv = String::from("target,achieved,min_u,t,obstruction\n");
        let mut entries = Vec::new();
        for e in &seq {
            csv.push_str(&format!(
                "{:e},{},{},{},\"{}\"\n",
                e.target,
                e.achieved(),
                e.achieved_min.map_or("nan".into(), |v| format!("{v:.12e}")),
                e.t.map_or("nan".into(), |v| format!("{v:.12e}")),
                e.obstruction.clone().unwrap_or_default().replace('"', "'")
            ));
            entries.push(json!({
                "target": e.target,
                "achieved": e.achieved(),
                "min_u": e.achieved_min,
                "t": e.t,
                "obstruction": e.obstruction,
            }));
            if let Some(f) = &e.field {
                out.write_with(&format!("sequence_{:e}.csv", e.target), |w| f.write_csv(w))?;
            }
        }
        out.write("sequence.csv", csv.as_bytes())?;
        results["sequence"] = json!(entries);
    }
    let status = match tr.status {
        TraceStatus::Completed => RunStatus::Success,
        TraceStatus::NonexistenceDetected | TraceStatus::FoldDetected => RunStatus::NonexistenceDetected,
        TraceStatus::MaxSteps => RunStatus::NonConvergence,
    };
    Ok((results, status))
}

pub fn estimates(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let e = &cfg.estimates;
    let (field, solved) = field_for(cfg, e.field)?;
    if let Some((_, rep)) = &solved {
        if !rep.converged {
            return Ok((json!({"solve": rep.summary(cfg.nonlinearity())}), solve_status(rep)));
        }
    }
    let g = field.grid().clone();
    let mut report = EstimateReport::default();
    let mut skipped = Vec::new();
    let center = if g.is_radial() { vec![] } else { g.lower().iter().zip(g.upper()).map(|(a, b)| 0.5 * (a + b)).collect() };
    match positivity_check(&field, &center, e.rho) {
        Ok(r) => report.merge(r),
        Err(err) => skipped.push(format!("positivity: {err}")),
    }
    let floor = g.boundary_nodes().iter().map(|&i| field.values()[i]).fold(f64::INFINITY, f64::min);
    for &p in &e.p {
        let c_cal = if e.calibrate { 10.0 * reference_p_constant(p)? } else { 1.0 };
        match p_integral_check(&field, p, floor, c_cal) {
            Ok(r) => report.merge(r),
            Err(err) => skipped.push(format!("p_integral p={p}: {err}")),
        }
    }
    let c_w = if e.calibrate { 10.0 * reference_w12_constant()? } else { 1.0 };
    let boundary = match &solved {
        Some((data, _)) => data.clone(),
        None => field.clone(),
    };
    match w12_p2_check(&field, &boundary, floor, c_w) {
        Ok(r) => report.merge(r),
        Err(err) => skipped.push(format!("w12_p2: {err}")),
    }
    let sub = if e.holder_hi > 0.0 { Subdomain::Shell { r_lo: e.holder_lo, r_hi: e.holder_hi } } else { Subdomain::Whole };
    let holder = holder_quotient_seeded(&field, e.holder_alpha, &sub, cfg.problem.seed)?;
    let tau = if e.tau > 0.0 { e.tau } else { default_tau(&field) };
    match box_dimension(&field, tau, &e.scales) {
        Ok(r) => report.merge(r),
        Err(err) => skipped.push(format!("box_dimension: {err}")),
    }
    let mut results = json!({
        "holder": {"alpha": e.holder_alpha, "subdomain": sub, "quotient": holder, "seed": cfg.problem.seed},
    });
    if e.log_radius > 0.0 {
        match log_trick_functional(&field, e.log_radius) {
            Ok(lt) => results["log_trick"] = json!(lt),
            Err(err) => skipped.push(format!("log_trick: {err}")),
        }
    }
    out.write_with("estimates.csv", |w| report.write_csv(w))?;
    results["report"] = serde_json::to_value(&report)?;
    results["all_pass"] = json!(report.all_pass());
    results["skipped"] = json!(skipped);
    Ok((results, RunStatus::Success))
}

pub fn reproduce(cfg: &ExperimentConfig, out: &mut OutDir) -> RunResult {
    let outcomes = run_criteria(&cfg.reproduce.criteria)?;
    let table = singlab::reproduce::summary_table(&outcomes);
    out.write("reproduce.txt", table.as_bytes())?;
    let rows: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "id": o.id,
                "title": o.title,
                "pass": o.pass,
                "details": o.details,
                "budget_secs": o.budget_secs,
                "known_infeasible": o.known_infeasible,
            })
        })
        .collect();
    let acceptable = outcomes.iter().all(|o| o.acceptable());
    let status = if acceptable { RunStatus::Success } else { RunStatus::NonConvergence };
    let passed = outcomes.iter().filter(|o| o.pass).count();
    Ok((json!({"criteria": rows, "passed": passed, "run": outcomes.len()}), status))
}

/// Re-emits a plot script for an existing artifact, copying the data next to it.
pub fn plot(kind: PlotKind, input: &Path, out: &mut OutDir, cone_level: f64) -> RunResult {
    let data = std::fs::read_to_string(input).map_err(|e| Failure {
        message: format!("cannot read {}: {e}", input.display()),
        status: RunStatus::ConfigError,
    })?;
    let stem = kind.stem();
    let (data_name, script) = match kind {
        PlotKind::Scan => (format!("{stem}.csv"), plots::scan_script(&format!("{stem}.csv"), cone_level)),
        PlotKind::Trace => (format!("{stem}.csv"), plots::trace_script(&format!("{stem}.csv"))),
        PlotKind::Profiles => {
            let labels = plots::profile_labels(&data);
            (format!("{stem}.dat"), plots::profiles_script(&format!("{stem}.dat"), &labels, cone_level))
        }
    };
    out.write(&data_name, data.as_bytes())?;
    out.write(&format!("{stem}.gp"), script.as_bytes())?;
    Ok((json!({"kind": stem, "data": data_name, "script": format!("{stem}.gp")}), RunStatus::Success))
}
