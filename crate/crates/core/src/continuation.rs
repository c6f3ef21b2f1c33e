//! Boundary-data homotopies: march the data downward with warm-started solves, record
//! `min u` and `λ_min` along the branch, and detect folds and nonexistence.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::solver::{maximal_solution, maximal_solution_from, newton_solve, SolveOptions, SolveReport};
use crate::stability::{stability_operator_for, EigenOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSolver {
    /// Monotone iteration: follows the maximal (stable) branch.
    Maximal,
    /// Damped Newton warm-started from the previous step.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub solve: SolveOptions,
    pub steps: usize,
    /// Smallest step length tried before a failure counts.
    pub min_dt: f64,
    pub restarts: usize,
    pub solver: StepSolver,
    pub track_lambda: bool,
    /// Cap on the number of solves in one run.
    pub max_solves: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            solve: SolveOptions::default(),
            steps: 20,
            min_dt: 1e-4,
            restarts: 3,
            solver: StepSolver::Maximal,
            track_lambda: true,
            max_solves: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStatus {
    Completed,
    NonexistenceDetected,
    FoldDetected,
    MaxSteps,
}

impl TraceStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceStatus::Completed => "completed",
            TraceStatus::NonexistenceDetected => "nonexistence-detected",
            TraceStatus::FoldDetected => "fold-detected",
            TraceStatus::MaxSteps => "max-steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: f64,
    pub boundary_level: f64,
    pub min_u: f64,
    pub residual: f64,
    pub iterations: usize,
    pub lambda_min: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ContinuationTrace {
    pub steps: Vec<TraceStep>,
    /// Solution at each converged step (same order as `steps`, failure record excluded).
    pub fields: Vec<Field>,
    pub status: TraceStatus,
    pub solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub status: TraceStatus,
    pub steps: usize,
    pub solves: usize,
    pub last_converged_t: Option<f64>,
    pub last_converged_min_u: Option<f64>,
    pub failure_t: Option<f64>,
    pub folds: Vec<(f64, f64)>,
}

impl ContinuationTrace {
    pub fn converged_steps(&self) -> impl Iterator<Item = &TraceStep> {
        self.steps.iter().filter(|s| s.converged)
    }

    pub fn last_converged(&self) -> Option<&TraceStep> {
        self.converged_steps().last()
    }

    pub fn failure(&self) -> Option<&TraceStep> {
        self.steps.last().filter(|s| !s.converged)
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            status: self.status,
            steps: self.steps.len(),
            solves: self.solves,
            last_converged_t: self.last_converged().map(|s| s.t),
            last_converged_min_u: self.last_converged().map(|s| s.min_u),
            failure_t: self.failure().map(|s| s.t),
            folds: fold_detect(self),
        }
    }

    /// CSV: t, boundary_level, min_u, lambda_min, iters, status.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,boundary_level,min_u,lambda_min,iters,status")?;
        for s in &self.steps {
            let lam = s.lambda_min.map_or_else(|| "nan".to_string(), |l| format!("{l:.12e}"));
            let status = if s.converged { "converged" } else { "failed" };
            writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{},{},{}",
                s.t, s.boundary_level, s.min_u, lam, s.iterations, status
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn blend(phi0: &Field, phi1: &Field, t: f64) -> Result<Field> {
    let v = phi0.values().iter().zip(phi1.values()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    Field::new(phi0.grid().clone(), v)
}

fn boundary_level(data: &Field) -> f64 {
    data.grid()
        .boundary_nodes()
        .iter()
        .map(|&i| data.values()[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Stepper<'a> {
    opts: &'a ContinuationOptions,
    solves: usize,
}

impl Stepper<'_> {
    fn solve(&mut self, data: &Field, warm: Option<&Field>, attempt: usize) -> Result<SolveReport> {
        self.solves += 1;
        let mut so = self.opts.solve;
        so.max_iter *= 1 << attempt.min(4);
        match (self.opts.solver, warm) {
            (_, None) => maximal_solution(data, &so),
            (StepSolver::Maximal, Some(w)) => {
                if attempt == 0 {
                    maximal_solution_from(data, w, &so)
                } else {
                    // any start above the maximal solution keeps the iterates above it
                    let scaled = w.map(|v| v * (1.0 + 0.05 * attempt as f64))?;
                    maximal_solution_from(data, &scaled, &so)
                }
            }
            (StepSolver::Newton, Some(w)) => {
                let start = if attempt == 0 { w.clone() } else { w.map(|v| v * (1.0 + 0.02 * attempt as f64))? };
                newton_solve(data, &start, &so)
            }
        }
    }

    fn lambda(&self, field: &Field) -> Option<f64> {
        if !self.opts.track_lambda {
            return None;
        }
        stability_operator_for(field, self.opts.solve.nonlinearity)
            .and_then(|s| s.smallest(&EigenOptions::default()))
            .map(|r| r.lambda_min)
            .ok()
    }

    fn record(&self, t: f64, data: &Field, rep: &SolveReport) -> TraceStep {
        TraceStep {
            t,
            boundary_level: boundary_level(data),
            min_u: rep.min_u,
            residual: rep.residual,
            iterations: rep.iterations,
            lambda_min: if rep.converged { self.lambda(&rep.field) } else { None },
            converged: rep.converged,
        }
    }
}

/// Runs the linear homotopy `φ_t = (1−t)φ₀ + tφ₁` from t = 0 to 1.
pub fn homotopy_run(phi0: &Field, phi1: &Field, opts: &ContinuationOptions) -> Result<ContinuationTrace> {
    if phi0.grid() != phi1.grid() && **phi0.grid() != **phi1.grid() {
        return Err(Error::InvalidField("homotopy endpoints live on different grids".into()));
    }
    let g = phi0.grid();
    if g.boundary_nodes().iter().any(|&i| phi0.values()[i] < phi1.values()[i]) {
        return Err(Error::Precondition("homotopy needs φ₀ ≥ φ₁ on the boundary".into()));
    }
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("homotopy needs at least one step".into()));
    }
    let mut st = Stepper { opts, solves: 0 };
    let mut trace = ContinuationTrace { steps: Vec::new(), fields: Vec::new(), status: TraceStatus::Completed, solves: 0 };

    let first = st.solve(phi0, None, 0)?;
    trace.steps.push(st.record(0.0, phi0, &first));
    if !first.converged {
        trace.status = TraceStatus::NonexistenceDetected;
        trace.solves = st.solves;
        return Ok(trace);
    }
    trace.fields.push(first.field.clone());
    let identical = g.boundary_nodes().iter().all(|&i| phi0.values()[i] == phi1.values()[i]);
    if identical {
        trace.solves = st.solves;
        return Ok(trace);
    }

    let base_dt = 1.0 / opts.steps as f64;
    let mut t = 0.0;
    let mut dt = base_dt;
    let mut current = first.field;
    while t < 1.0 {
        if st.solves >= opts.max_solves {
            trace.status = TraceStatus::MaxSteps;
            break;
        }
        let t_next = if t + dt > 1.0 - 1e-12 { 1.0 } else { t + dt };
        let data = blend(phi0, phi1, t_next)?;
        let rep = st.solve(&data, Some(&current), 0)?;
        if rep.converged {
            trace.steps.push(st.record(t_next, &data, &rep));
            trace.fields.push(rep.field.clone());
            current = rep.field;
            t = t_next;
            // step back up toward the uniform schedule
            dt = (2.0 * dt).min(base_dt);
            continue;
        }
        if dt > opts.min_dt {
            dt = (0.5 * dt).max(opts.min_dt * 0.999_999);
            if dt < opts.min_dt {
                dt = opts.min_dt;
            }
            continue;
        }
        let mut rescued = None;
        for attempt in 1..=opts.restarts {
            let r = st.solve(&data, Some(&current), attempt)?;
            if r.converged {
                rescued = Some(r);
                break;
            }
        }
        match rescued {
            Some(r) => {
                trace.steps.push(st.record(t_next, &data, &r));
                trace.fields.push(r.field.clone());
                current = r.field;
                t = t_next;
            }
            None => {
                trace.steps.push(st.record(t_next, &data, &rep));
                let lambdas: Vec<f64> = trace.converged_steps().filter_map(|s| s.lambda_min).collect();
                trace.status = if opts.solver == StepSolver::Newton && lambda_trends_to_zero(&lambdas) {
                    TraceStatus::FoldDetected
                } else {
                    TraceStatus::NonexistenceDetected
                };
                break;
            }
        }
    }
    trace.solves = st.solves;
    Ok(trace)
}

fn lambda_trends_to_zero(lambdas: &[f64]) -> bool {
    let k = lambdas.len();
    if k < 2 {
        return false;
    }
    let last = lambdas[k - 1];
    let peak = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    last < lambdas[k - 2] && last.abs() < 0.5 * peak.abs()
}

/// t-intervals where `λ_min` changes sign, plus the terminal failure interval when the
/// failure follows a `λ_min → 0` trend.
pub fn fold_detect(trace: &ContinuationTrace) -> Vec<(f64, f64)> {
    let conv: Vec<&TraceStep> = trace.converged_steps().filter(|s| s.lambda_min.is_some()).collect();
    let mut out = Vec::new();
    for w in conv.windows(2) {
        let (a, b) = (w[0].lambda_min.unwrap(), w[1].lambda_min.unwrap());
        if a * b < 0.0 || (a != 0.0 && b == 0.0) {
            out.push((w[0].t, w[1].t));
        }
    }
    if let (Some(fail), Some(last)) = (trace.failure(), trace.last_converged()) {
        let lambdas: Vec<f64> = conv.iter().map(|s| s.lambda_min.unwrap()).collect();
        if lambda_trends_to_zero(&lambdas) {
            out.push((last.t, fail.t));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SequenceEntry {
    pub target: f64,
    pub field: Option<Field>,
    pub achieved_min: Option<f64>,
    pub t: Option<f64>,
    pub obstruction: Option<String>,
}

impl SequenceEntry {
    pub fn achieved(&self) -> bool {
        self.field.is_some()
    }
}

/// Drives the maximal branch down along `φ_t = φ₀·(1 − t(1 − 1e−6))` until `min u` lands
/// within 20% of each target.
pub fn singular_sequence(phi0: &Field, targets: &[f64], opts: &ContinuationOptions) -> Result<Vec<SequenceEntry>> {
    if targets.windows(2).any(|w| w[1] >= w[0]) || targets.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("targets must be positive and strictly decreasing".into()));
    }
    let phi1 = phi0.map(|v| v * 1e-6)?;
    let top = boundary_level(phi0);
    let mut st = Stepper { opts, solves: 0 };
    let first = st.solve(phi0, None, 0)?;
    let mut out = Vec::new();
    if !first.converged {
        for &tau in targets {
            out.push(SequenceEntry {
                target: tau,
                field: None,
                achieved_min: None,
                t: None,
                obstruction: Some("no solution for the initial data".into()),
            });
        }
        return Ok(out);
    }
    let (mut t, mut current, mut min_cur) = (0.0f64, first.field, first.min_u);
    let mut blocked: Option<String> = None;
    for &tau in targets {
        if tau >= top {
            out.push(SequenceEntry {
                target: tau,
                field: None,
                achieved_min: None,
                t: None,
                obstruction: Some(format!("min u cannot exceed the boundary maximum {top} (maximum principle)")),
            });
            continue;
        }
        if let Some(b) = &blocked {
            out.push(SequenceEntry { target: tau, field: None, achieved_min: None, t: None, obstruction: Some(b.clone()) });
            continue;
        }
        let (lo, hi) = (0.8 * tau, 1.2 * tau);
        let mut dt = 0.05f64.min(1.0 - t);
        let mut found = None;
        while found.is_none() && blocked.is_none() {
            // prefer landing at or just below the target, settle for the upper band
            if min_cur >= lo && min_cur <= tau {
                found = Some((current.clone(), min_cur, t));
                break;
            }
            if st.solves >= opts.max_solves {
                blocked = Some("solve budget exhausted".into());
                break;
            }
            if dt < 1e-14 || t + dt > 1.0 {
                if min_cur >= lo && min_cur <= hi {
                    found = Some((current.clone(), min_cur, t));
                } else {
                    blocked = Some(format!("min u jumps past the target window near t = {t:.6}"));
                }
                break;
            }
            let t_next = t + dt;
            let data = blend(phi0, &phi1, t_next)?;
            let mut rep = st.solve(&data, Some(&current), 0)?;
            if !rep.converged && dt <= opts.min_dt {
                for attempt in 1..=opts.restarts {
                    rep = st.solve(&data, Some(&current), attempt)?;
                    if rep.converged {
                        break;
                    }
                }
                if !rep.converged {
                    blocked = Some(format!(
                        "no solution beyond t = {t:.6} (boundary level {:.6}); last min u = {min_cur:.6}",
                        boundary_level(&blend(phi0, &phi1, t)?)
                    ));
                    break;
                }
            }
            if !rep.converged {
                dt *= 0.5;
                continue;
            }
            if rep.min_u < lo {
                dt *= 0.5;
                continue;
            }
            t = t_next;
            min_cur = rep.min_u;
            current = rep.field;
            dt = (dt * 1.5).min(1.0 - t);
        }
        match found {
            Some((f, m, tt)) => out.push(SequenceEntry { target: tau, field: Some(f), achieved_min: Some(m), t: Some(tt), obstruction: None }),
            None => out.push(SequenceEntry { target: tau, field: None, achieved_min: None, t: None, obstruction: blocked.clone() }),
        }
    }
    Ok(out)
}

/// JSON-ready summary plus the deterministic CSV.
pub fn trace_report(trace: &ContinuationTrace) -> (String, String) {
    let json = serde_json::to_string_pretty(&trace.summary()).expect("serializable summary");
    let mut s = String::new();
    let _ = write!(s, "{}", trace.to_csv_string());
    (json, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Grid};
    use std::sync::Arc;

    fn ball(n: usize, h: f64) -> Arc<Grid> {
        Arc::new(Grid::build(&Domain::Ball { n, radius: 1.0, r_inner: None }, h).unwrap())
    }

    #[test]
    fn degenerate_homotopy() {
        let g = ball(3, 1.0 / 32.0);
        let phi = Field::constant(g, 2.0);
        let tr = homotopy_run(&phi, &phi, &ContinuationOptions::default()).unwrap();
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.status, TraceStatus::Completed);
    }

    #[test]
    fn disk_homotopy_hits_nonexistence() {
        let g = ball(2, 1.0 / 32.0);
        let tr = homotopy_run(&Field::constant(g.clone(), 2.0), &Field::constant(g, 0.05), &ContinuationOptions::default())
            .unwrap();
        assert_eq!(tr.status, TraceStatus::NonexistenceDetected);
        let last = tr.last_converged().unwrap();
        assert!(last.t < 1.0 && last.min_u > 0.1);
        // min u is nonincreasing and λ stays nonnegative along the maximal branch
        let conv: Vec<_> = tr.converged_steps().collect();
        for w in conv.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].min_u <= w[0].min_u + 1e-12);
        }
        assert!(conv.iter().all(|s| s.lambda_min.unwrap() >= -1e-6));
        assert_eq!(fold_detect(&tr).len(), 1);
    }

    #[test]
    fn no_folds_on_a_comfortable_branch() {
        let g = ball(3, 1.0 / 32.0);
        let tr = homotopy_run(&Field::constant(g.clone(), 4.0), &Field::constant(g, 3.0), &ContinuationOptions::default())
            .unwrap();
        assert_eq!(tr.status, TraceStatus::Completed);
        assert!(tr.converged_steps().all(|s| s.lambda_min.unwrap() > 0.1));
        assert!(fold_detect(&tr).is_empty());
        let csv = tr.to_csv_string();
        assert!(csv.starts_with("t,boundary_level,min_u,lambda_min,iters,status"));
    }

    #[test]
    fn unreachable_target_above_boundary() {
        let g = ball(3, 1.0 / 16.0);
        let seq = singular_sequence(&Field::constant(g, 2.0), &[10.0], &ContinuationOptions::default()).unwrap();
        assert!(!seq[0].achieved());
        assert!(seq[0].obstruction.as_ref().unwrap().contains("maximum principle"));
    }

    #[test]
    fn targets_must_decrease() {
        let g = ball(3, 1.0 / 16.0);
        assert!(singular_sequence(&Field::constant(g, 2.0), &[0.1, 0.2], &ContinuationOptions::default()).is_err());
    }
}
