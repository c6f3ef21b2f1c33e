//! The acceptance suite: twelve numbered criteria, each returning a pass/fail outcome with
//! the numbers it was decided on.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    box_dimension, default_tau, dimension_bound, holder_quotient, p_threshold, threshold_from_quadratic, Subdomain,
};
use crate::continuation::{homotopy_run, singular_sequence, ContinuationOptions, TraceStatus};
use crate::error::Result;
use crate::grid::{integrate, Domain, Field, Grid};
use crate::oracle::{oracle_dense_eig, oracle_integrate_radial, oracle_quadrature, DENSE_CAP};
use crate::radial::{
    bifurcation_constants, conical_deviation, integrate_radial, solve_dirichlet_radial, EpsWindow, SHOOT_TOL,
};
use crate::solver::{maximal_solution, newton_solve, residual, Nonlinearity, SolveOptions, SolveReport, SolveStatus};
use crate::stability::{
    cutoff_family_energies, hardy_witness, stability_operator, EigenOptions, STABLE_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: String,
    pub pass: bool,
    pub details: Vec<String>,
    pub runtime_secs: f64,
    pub budget_secs: f64,
    /// Set when part of the criterion cannot hold for the stated numbers.
    pub known_infeasible: Option<String>,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<4} {:<34} {:>7.2}s / {:>5.0}s  {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.runtime_secs,
            self.budget_secs,
            self.details.join("; ")
        )
    }

    /// Passed, or failed only where infeasibility is documented.
    pub fn acceptable(&self) -> bool {
        self.pass || self.known_infeasible.is_some()
    }
}

struct Recorder {
    id: usize,
    title: &'static str,
    budget: f64,
    start: Instant,
    details: Vec<String>,
    pass: bool,
    infeasible: Option<String>,
}

impl Recorder {
    fn new(id: usize, title: &'static str, budget: f64) -> Recorder {
        Recorder { id, title, budget, start: Instant::now(), details: Vec::new(), pass: true, infeasible: None }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.pass &= ok;
        self.details.push(if ok { detail } else { format!("{detail} [fails]") });
    }

    fn finish(self) -> CriterionOutcome {
        CriterionOutcome {
            id: self.id,
            title: self.title.to_string(),
            pass: self.pass,
            details: self.details,
            runtime_secs: self.start.elapsed().as_secs_f64(),
            budget_secs: self.budget,
            known_infeasible: self.infeasible,
        }
    }
}

/// Exit status of a single solve: 0 converged, 2 collapse toward zero (no positive solution),
/// 3 anything else that did not converge.
pub fn solve_exit_code(rep: &SolveReport) -> i32 {
    match rep.status {
        SolveStatus::Converged => 0,
        SolveStatus::Collapsed => 2,
        _ => 3,
    }
}

fn ball(n: usize, h: f64) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::build(&Domain::Ball { n, radius: 1.0, r_inner: None }, h)?))
}

fn annulus(n: usize, a: f64, b: f64, h: f64) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::build(&Domain::Annulus { n, r_inner: a, r_outer: b }, h)?))
}

fn cone(g: &Arc<Grid>) -> Result<Field> {
    let s = 1.0 / ((g.dim() - 1) as f64).sqrt();
    Field::from_radial_fn(g.clone(), |r| s * r)
}

/// Cone residual on the annulus `[0.1, 1]` in ℝ⁷ under `h → h/2`.
pub fn criterion_01() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(1, "cone residual refinement", 1.0);
    let nl = Nonlinearity::default();
    let r1 = residual(&cone(&annulus(7, 0.1, 1.0, 1.0 / 100.0)?)?, nl);
    let r2 = residual(&cone(&annulus(7, 0.1, 1.0, 1.0 / 200.0)?)?, nl);
    let ratio = r1 / r2;
    rec.check(r1 < 1e-10 && r2 < 1e-10, format!("residuals {r1:.2e}, {r2:.2e} at roundoff"));
    rec.check((3.2..=4.8).contains(&ratio), format!("ratio {ratio:.3} vs [3.2, 4.8]"));
    rec.infeasible = Some(
        "the centred radial stencil is exact on linear profiles, so both residuals are roundoff and their ratio carries no order information"
            .into(),
    );
    Ok(rec.finish())
}

/// Convergence of rescaled radial profiles to `u = r` as ε decreases.
pub fn criterion_02() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(2, "radial convergence to the cone", 5.0);
    for n in [3usize, 7] {
        let m = (n - 1) as f64;
        let p05 = integrate_radial(0.05, n, m, 1.0, SHOOT_TOL)?;
        let p20 = integrate_radial(0.2, n, m, 1.0, SHOOT_TOL)?;
        let (d05, d20) = (conical_deviation(&p05), conical_deviation(&p20));
        rec.check(d05 <= d20, format!("n={n}: sup|u-r| {d05:.4} (eps 0.05) <= {d20:.4} (eps 0.2)"));
        let u1 = p05.u_end();
        rec.check((u1 - 1.0).abs() <= 0.06, format!("n={n}: u(1) = {u1:.4}"));
    }
    Ok(rec.finish())
}

/// Shooting-map constants `C1`, `C2` for n = 3, 7, 8 and the n = 3 multiplicity.
pub fn criterion_03() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(3, "bifurcation constants", 60.0);
    let scans: Vec<_> = [7usize, 8, 3]
        .par_iter()
        .map(|&n| bifurcation_constants(n, (n - 1) as f64, EpsWindow::default()))
        .collect::<Result<_>>()?;
    for s in &scans[..2] {
        let ok = (0.99..=1.01).contains(&s.c1) && (0.99..=1.01).contains(&s.c2);
        rec.check(ok, format!("n={}: C1 = {:.6}, C2 = {:.6}", s.n, s.c1, s.c2));
    }
    let s3 = &scans[2];
    rec.check(s3.c1 < 0.99, format!("n=3: C1 = {:.6}", s3.c1));
    let roots = solve_dirichlet_radial(3, 2.0, s3.c1 + 0.005)?;
    rec.check(roots.profiles.len() >= 2, format!("n=3: {} solutions at C1+0.005", roots.profiles.len()));
    Ok(rec.finish())
}

/// Cone stable for n = 7, Hardy witness negative for n ≤ 6, on the annulus `[1e−4, 1]`.
pub fn criterion_04() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(4, "stability dichotomy", 30.0);
    let h = 1e-5;
    let g7 = annulus(7, 1e-4, 1.0, h)?;
    let nodes = g7.len();
    let lam = stability_operator(&cone(&g7)?, 1.0)?.smallest(&EigenOptions::default())?.lambda_min;
    rec.check(nodes >= 4000 && lam >= -STABLE_TOL, format!("n=7 cone: lambda_min = {lam:.3e} on {nodes} nodes"));
    let quotients: Vec<(usize, f64)> = (2usize..=6)
        .into_par_iter()
        .map(|n| Ok((n, hardy_witness(n, annulus(n, 1e-4, 1.0, h)?)?.quotient)))
        .collect::<Result<_>>()?;
    for (n, q) in quotients {
        rec.check(q < 0.0, format!("n={n}: witness quotient {q:.3e}"));
    }
    Ok(rec.finish())
}

/// Maximal solution for n = 3, C = 2: agrees with the top shooting root, is stable, and
/// dominates any other Newton solution.
pub fn criterion_05() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(5, "maximal = stable = unique", 60.0);
    let g = ball(3, 1.0 / 256.0)?;
    let data = Field::constant(g.clone(), 2.0);
    let opts = SolveOptions::default();
    let max = maximal_solution(&data, &opts)?;
    rec.check(max.converged, format!("maximal solve: {:?} after {} iterations", max.status, max.iterations));
    let roots = solve_dirichlet_radial(3, 1.0, 2.0)?;
    let top = roots.largest().expect("data 2 lies above the n = 3 existence threshold");
    let diff = max.field.max_abs_diff(&top.to_field(g.clone())?);
    rec.check(diff <= 1e-4, format!("max |u - shooting| = {diff:.2e} ({} shooting roots)", roots.profiles.len()));
    let lam = stability_operator(&max.field, 1.0)?.smallest(&EigenOptions::default())?.lambda_min;
    rec.check(lam >= -STABLE_TOL, format!("lambda_min = {lam:.4}"));

    let mut others = 0;
    for (k, scale) in [0.05, 0.1, 0.2, 0.4].iter().enumerate() {
        let start = Field::from_radial_fn(g.clone(), |r| 2.0 * (scale + (1.0 - scale) * r * r))?;
        let rep = newton_solve(&data, &start, &opts)?;
        if !rep.converged || rep.field.max_abs_diff(&max.field) <= 1e-6 {
            continue;
        }
        others += 1;
        let l = stability_operator(&rep.field, 1.0)?.smallest(&EigenOptions::default())?.lambda_min;
        let below = rep.field.values().iter().zip(max.field.values()).all(|(a, b)| a <= &(b + 1e-10));
        rec.check(l < 0.0 && below, format!("second solution from start {k}: lambda_min = {l:.4}, below = {below}"));
    }
    rec.details.push(format!("{others} distinct low-start Newton solutions"));
    Ok(rec.finish())
}

/// Disk homotopy from data 2 to 0.05 ends in nonexistence at an h-independent level.
pub fn criterion_06() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(6, "nonexistence and lower bound", 120.0);
    let hs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let traces: Vec<_> = hs
        .par_iter()
        .map(|&h| {
            let g = ball(2, h)?;
            homotopy_run(&Field::constant(g.clone(), 2.0), &Field::constant(g, 0.05), &ContinuationOptions::default())
        })
        .collect::<Result<_>>()?;
    let mut mins = Vec::new();
    for (h, tr) in hs.iter().zip(&traces) {
        let last = tr.last_converged().map(|s| (s.boundary_level, s.min_u)).unwrap_or((f64::NAN, f64::NAN));
        rec.check(
            tr.status == TraceStatus::NonexistenceDetected,
            format!("h=1/{}: {} at level {:.4}, min u {:.4}", (1.0 / h).round(), tr.status.as_str(), last.0, last.1),
        );
        mins.push(last.1);
    }
    let (lo, hi) = mins.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    rec.check(lo > 0.0 && hi <= 2.0 * lo, format!("terminal min u spread {:.3}", hi / lo));
    let direct = maximal_solution(&Field::constant(ball(2, 1.0 / 64.0)?, 0.05), &SolveOptions::default())?;
    let code = solve_exit_code(&direct);
    rec.check(code == 2, format!("direct solve at 0.05: {:?}, exit {code}", direct.status));
    Ok(rec.finish())
}

/// The n = 7 singular sequence used by criteria 7 and 9.
pub fn singular_family_n7() -> Result<Vec<(f64, Field)>> {
    let g = ball(7, 1e-3)?;
    let seq = singular_sequence(&Field::constant(g, 2.0), &[0.2, 0.1, 0.05], &ContinuationOptions::default())?;
    Ok(seq.into_iter().filter_map(|e| e.field.map(|f| (e.achieved_min.unwrap(), f))).collect())
}

pub fn criterion_07() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(7, "singular sequence in n = 7", 60.0);
    let fam = singular_family_n7()?;
    rec.check(fam.len() == 3, format!("{} of 3 targets reached", fam.len()));
    let mut dists = Vec::new();
    for (m, f) in &fam {
        let d = f.max_abs_diff(&cone(f.grid())?);
        dists.push(d);
        rec.details.push(format!("min u {m:.4}, sup|u - cone| {d:.4}"));
    }
    let last_min = fam.last().map(|x| x.0).unwrap_or(f64::INFINITY);
    rec.check(last_min <= 0.05, format!("smallest min u {last_min:.4}"));
    rec.check(dists.windows(2).all(|w| w[1] < w[0]), "distance to the cone decreases".into());
    Ok(rec.finish())
}

/// Threshold arithmetic and the cone's negative-power integrals under refinement.
pub fn criterion_08() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(8, "p-integral threshold", 30.0);
    let t = p_threshold();
    let q = threshold_from_quadratic();
    rec.check((t - q).abs() <= 2.0 * f64::EPSILON * t, format!("4+2sqrt2 = {t:.17}, quadratic root {q:.17}"));
    let poly = t * t - 8.0 * t + 8.0;
    rec.check(poly.abs() <= 64.0 * f64::EPSILON * t * t, format!("n^2-8n+8 at threshold = {poly:.2e}"));
    let vals: Vec<(f64, f64)> = [1e-3, 5e-4]
        .par_iter()
        .map(|&h| {
            let c = cone(&ball(7, h)?)?;
            Ok((integrate(&c, -6.5)?, integrate(&c, -7.5)?))
        })
        .collect::<Result<_>>()?;
    let stable = (vals[1].0 - vals[0].0).abs() / vals[0].0;
    rec.check(stable < 0.05, format!("p=6.5: {:.2} -> {:.2} ({:.2}%)", vals[0].0, vals[1].0, 100.0 * stable));
    let growth = vals[1].1 / vals[0].1;
    rec.check(growth > 1.25, format!("p=7.5: {:.3e} -> {:.3e} (x{growth:.3})", vals[0].1, vals[1].1));
    Ok(rec.finish())
}

/// Hölder quotients (α = 0.9) of the n = 7 family on `[0.1, 1]`.
pub fn criterion_09() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(9, "Hoelder uniformity", 30.0);
    let fam = singular_family_n7()?;
    let shell = Subdomain::Shell { r_lo: 0.1, r_hi: 1.0 };
    let qs: Vec<f64> = fam.iter().map(|(_, f)| holder_quotient(f, 0.9, &shell)).collect::<Result<_>>()?;
    let (lo, hi) = qs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &q| (a.min(q), b.max(q)));
    rec.check(qs.len() == 3 && lo > 0.0 && hi / lo <= 3.0, format!("quotients {qs:.4?}, spread {:.3}", hi / lo));
    Ok(rec.finish())
}

pub const BOX_SCALES: [f64; 3] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];

/// Box-counting slope of the cone's sublevel set, with a full-ball control.
pub fn criterion_10() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(10, "box dimension", 30.0);
    let g = ball(7, 1e-3)?;
    let c = cone(&g)?;
    let tau = default_tau(&c);
    let rep = box_dimension(&c, tau, &BOX_SCALES)?;
    let s = rep.checks[0].value;
    rec.check(rep.all_pass(), format!("cone slope {s:.3} vs {:.3}", dimension_bound(7) + 0.5));
    let full = box_dimension(&Field::constant(g, 0.5 * tau), tau, &BOX_SCALES)?;
    let sf = full.checks[0].value;
    rec.check((sf - 7.0).abs() <= 0.7, format!("control slope {sf:.3}"));
    Ok(rec.finish())
}

/// Production paths against the oracles on the instances above.
pub fn criterion_11() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(11, "oracle agreement", 120.0);
    let shoot: Vec<(usize, f64, f64, f64)> =
        vec![(3, 2.0, 0.1, 1e-7), (3, 2.0, 0.05, 1e-7), (7, 6.0, 0.05, 1e-7), (3, 1.0, 1.914, 1e-7)];
    let diffs: Vec<f64> = shoot
        .par_iter()
        .map(|&(n, m, e, _)| {
            let a = integrate_radial(e, n, m, 1.0, SHOOT_TOL)?.u_end();
            let b = oracle_integrate_radial(e, n, m, 1.0, 1e-5)?.u_end();
            Ok((a - b).abs())
        })
        .collect::<Result<_>>()?;
    for (&(n, m, e, tol), d) in shoot.iter().zip(diffs) {
        rec.check(d <= tol, format!("shoot n={n} m={m} eps={e}: {d:.1e}"));
    }

    let opts = EigenOptions::default();
    let mut eig_cases: Vec<(String, Field)> = Vec::new();
    eig_cases.push(("cone n=7 [0.1,1]".into(), cone(&annulus(7, 0.1, 1.0, 1e-3)?)?));
    let m3 = maximal_solution(&Field::constant(ball(3, 1.0 / 256.0)?, 2.0), &SolveOptions::default())?;
    eig_cases.push(("maximal n=3 C=2".into(), m3.field));
    eig_cases.push(("cone n=4 [0.01,1]".into(), cone(&annulus(4, 0.01, 1.0, 1e-3)?)?));
    for (name, f) in &eig_cases {
        let s = stability_operator(f, 1.0)?;
        assert!(s.op.nrows() <= DENSE_CAP);
        let fast = s.smallest(&opts)?.lambda_min;
        let slow = oracle_dense_eig(&s.op)?.value;
        let d = (fast - slow).abs();
        rec.check(d <= 1e-8 * slow.abs().max(1.0), format!("eig {name}: {d:.1e}"));
    }

    let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 64.0)?);
    let quad: Vec<(String, Field, f64)> = vec![
        ("cone n=7 p=6.5".into(), cone(&ball(7, 1e-3)?)?, -6.5),
        ("cone n=2 p=2".into(), cone(&ball(2, 1.0 / 128.0)?)?, 2.0),
        ("square ramp p=-2".into(), Field::from_fn(sq, |x| 1.0 + x[0] + 0.5 * x[1])?, -2.0),
    ];
    for (name, f, p) in &quad {
        let a = integrate(f, *p)?;
        let b = oracle_quadrature(f, *p)?.value;
        let rel = (a - b).abs() / b.abs();
        rec.check(rel <= 1e-12, format!("quadrature {name}: {rel:.1e}"));
    }
    Ok(rec.finish())
}

/// Energies of the disk cutoff family for ε = 0.1, 0.01, 0.001.
pub fn criterion_12() -> Result<CriterionOutcome> {
    let mut rec = Recorder::new(12, "cutoff-family energy", 5.0);
    let eps = [0.1, 0.01, 0.001];
    let e = cutoff_family_energies(2, 1e-4, 1.0, &eps)?;
    rec.check(e.windows(2).all(|w| w[1] < w[0]), format!("energies {e:.4?} strictly decreasing"));
    rec.check(e[2] < -10.0, format!("F at eps=0.001 is {:.4} vs -10", e[2]));
    rec.infeasible = Some(
        "every member satisfies u >= eps with data 1, and the obstacle minimum at eps = 0.001 is about -3.42".into(),
    );
    Ok(rec.finish())
}

pub type CriterionFn = fn() -> Result<CriterionOutcome>;

pub const CRITERIA: [CriterionFn; 12] = [
    criterion_01,
    criterion_02,
    criterion_03,
    criterion_04,
    criterion_05,
    criterion_06,
    criterion_07,
    criterion_08,
    criterion_09,
    criterion_10,
    criterion_11,
    criterion_12,
];

/// Runs the selected criteria (1-based ids; empty means all) one after another.
pub fn run_criteria(ids: &[usize]) -> Result<Vec<CriterionOutcome>> {
    let chosen: Vec<usize> = if ids.is_empty() { (1..=12).collect() } else { ids.to_vec() };
    chosen
        .iter()
        .map(|&id| {
            let f = CRITERIA.get(id.wrapping_sub(1)).ok_or_else(|| {
                crate::error::Error::InvalidArgument(format!("no criterion {id}; valid ids are 1..=12"))
            })?;
            f()
        })
        .collect()
}

/// Plain-text table with one line per criterion.
pub fn summary_table(outcomes: &[CriterionOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        s.push_str(&o.line());
        s.push('\n');
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    s.push_str(&format!("{passed}/{} criteria pass\n", outcomes.len()));
    s
}
