//! Dirichlet solvers for `Δu = m·u^{−α}`: damped Newton and the monotone iteration
//! `v ↦ T(v)` where `Δ T(v) = m·T(v)·v^{−α−1}` with the given boundary values.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{assemble_laplacian, DiscreteLaplacian, Field, Grid, GridKind};
use crate::linalg::{solve, SystemKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub m: f64,
    pub alpha: f64,
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity { m: 1.0, alpha: 1.0 }
    }
}

impl Nonlinearity {
    pub fn new(m: f64, alpha: f64) -> Result<Self> {
        if !(m > 0.0) || !(alpha > 0.0) || !m.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("need m > 0 and α > 0, got m={m}, α={alpha}")));
        }
        Ok(Nonlinearity { m, alpha })
    }

    pub fn value(&self, u: f64) -> f64 {
        if self.alpha == 1.0 {
            self.m / u
        } else {
            self.m * u.powf(-self.alpha)
        }
    }

    /// `α·m·u^{−α−1}`, the negated derivative of the right-hand side.
    pub fn potential(&self, u: f64) -> f64 {
        if self.alpha == 1.0 {
            self.m / (u * u)
        } else {
            self.alpha * self.m * u.powf(-self.alpha - 1.0)
        }
    }

    /// `m·u^{−α−1}`, the coefficient of the linear problem defining T.
    pub fn picard_weight(&self, u: f64) -> f64 {
        if self.alpha == 1.0 {
            self.m / (u * u)
        } else {
            self.m * u.powf(-self.alpha - 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Positivity guard: each Newton iterate keeps `min u ≥ gamma · previous min u`.
    pub gamma: f64,
    /// Minimum below which an iteration counts as collapsed.
    pub floor: f64,
    pub nonlinearity: Nonlinearity,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_iter: 500, gamma: 0.1, floor: 1e-8, nonlinearity: Nonlinearity::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Collapsed,
    LinearSolveFailed,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: Field,
    pub iterations: usize,
    pub residual: f64,
    pub min_u: f64,
    pub converged: bool,
    pub status: SolveStatus,
    /// Newton step lengths; empty for the monotone iteration.
    pub damping: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Whether every monotone-iteration step was pointwise nonincreasing.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual: f64,
    pub min_u: f64,
    pub h: f64,
    pub n: usize,
    pub alpha: f64,
    pub m: f64,
    pub boundary_summary: BoundarySummary,
}

impl SolveReport {
    pub fn summary(&self, nl: Nonlinearity) -> SolveSummary {
        let g = self.field.grid();
        let b: Vec<f64> = g.boundary_nodes().iter().map(|&i| self.field.values()[i]).collect();
        SolveSummary {
            converged: self.converged,
            status: self.status,
            iterations: self.iterations,
            residual: self.residual,
            min_u: self.min_u,
            h: g.h(),
            n: g.dim(),
            alpha: nl.alpha,
            m: nl.m,
            boundary_summary: BoundarySummary {
                min: b.iter().copied().fold(f64::INFINITY, f64::min),
                max: b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            },
        }
    }
}

fn check_boundary(boundary: &Field) -> Result<()> {
    let g = boundary.grid();
    for i in g.boundary_nodes() {
        if !(boundary.values()[i] > 0.0) {
            return Err(Error::InvalidField(format!("boundary value at node {i} is not positive")));
        }
    }
    Ok(())
}

fn same_grid(a: &Field, b: &Field) -> Result<()> {
    if !Arc::ptr_eq(a.grid(), b.grid()) && **a.grid() != **b.grid() {
        return Err(Error::InvalidField("fields live on different grids".into()));
    }
    Ok(())
}

/// `max_interior |Δ_h u − m u^{−α}|`.
pub fn residual_norm(lap: &DiscreteLaplacian, u: &Field, nl: Nonlinearity) -> f64 {
    let g = u.grid();
    let lu = lap.apply(g, u.values());
    g.interior_nodes()
        .iter()
        .zip(lu)
        .map(|(&i, l)| (l - nl.value(u.values()[i])).abs())
        .fold(0.0, f64::max)
}

/// Residual of `field` for `Δu = m u^{−α}` on its own grid.
pub fn residual(field: &Field, nl: Nonlinearity) -> f64 {
    residual_norm(&assemble_laplacian(field.grid()), field, nl)
}

fn kind_of(g: &Grid, definite: bool) -> SystemKind {
    if definite || g.kind() != GridKind::Box {
        SystemKind::Spd
    } else {
        SystemKind::SymmetricIndefinite
    }
}

/// Solves `(−Δ_h + diag(q)) v = B·φ` on interior nodes, `v = φ` on the boundary.
fn solve_screened(lap: &DiscreteLaplacian, boundary: &Field, q: &[f64]) -> Result<Field> {
    let g = boundary.grid();
    let op = lap.operator().scaled(-1.0).add_diagonal(q);
    let rhs = lap.boundary_term(boundary.values());
    let v = solve(&op, &rhs, kind_of(g, true), None)?;
    boundary.with_interior(&v)
}

/// Discrete harmonic extension of the boundary values.
pub fn harmonic_extension(boundary: &Field) -> Result<Field> {
    let lap = assemble_laplacian(boundary.grid());
    let q = vec![0.0; boundary.grid().interior_nodes().len()];
    solve_screened(&lap, boundary, &q)
}

/// One application of T: the solution `v` of `Δ_h v = m v u^{−α−1}` with `v = boundary` on ∂Ω.
pub fn picard_t(boundary: &Field, u: &Field, nl: Nonlinearity) -> Result<Field> {
    same_grid(boundary, u)?;
    if !u.is_positive() {
        return Err(Error::InvalidField("T needs a positive field".into()));
    }
    let lap = assemble_laplacian(u.grid());
    picard_with(&lap, boundary, u, nl)
}

fn picard_with(lap: &DiscreteLaplacian, boundary: &Field, u: &Field, nl: Nonlinearity) -> Result<Field> {
    let q: Vec<f64> = u.grid().interior_nodes().iter().map(|&i| nl.picard_weight(u.values()[i])).collect();
    solve_screened(lap, boundary, &q)
}

/// Damped Newton iteration for `Δ_h u = m u^{−α}`.
pub fn newton_solve(boundary: &Field, initial: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    same_grid(boundary, initial)?;
    check_boundary(boundary)?;
    let nl = opts.nonlinearity;
    let mut u = initial.with_boundary_from(boundary)?;
    if !u.is_positive() {
        return Err(Error::InvalidField("initial iterate must be positive".into()));
    }
    let g = u.grid().clone();
    let lap = assemble_laplacian(&g);
    let interior = g.interior_nodes().to_vec();
    let mut res = residual_norm(&lap, &u, nl);
    let mut report = SolveReport {
        field: u.clone(),
        iterations: 0,
        residual: res,
        min_u: u.min(),
        converged: false,
        status: SolveStatus::MaxIterations,
        damping: Vec::new(),
        residual_history: vec![res],
        monotone: true,
    };
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            report.status = SolveStatus::Converged;
            report.converged = true;
            break;
        }
        report.iterations = it + 1;
        let lu = lap.apply(&g, u.values());
        let f: Vec<f64> = interior.iter().zip(&lu).map(|(&i, l)| -(l - nl.value(u.values()[i]))).collect();
        let d: Vec<f64> = interior.iter().map(|&i| nl.potential(u.values()[i])).collect();
        let jac = lap.operator().add_diagonal(&d);
        let w = match solve(&jac, &f, kind_of(&g, false), None) {
            Ok(w) => w,
            Err(_) => {
                report.status = SolveStatus::LinearSolveFailed;
                break;
            }
        };
        let min_old = interior.iter().map(|&i| u.values()[i]).fold(f64::INFINITY, f64::min);
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda > 1e-9 {
            let trial: Vec<f64> = interior.iter().zip(&w).map(|(&i, wi)| u.values()[i] + lambda * wi).collect();
            let min_new = trial.iter().copied().fold(f64::INFINITY, f64::min);
            if min_new >= opts.gamma * min_old && min_new > 0.0 {
                let cand = u.with_interior(&trial)?;
                let r = residual_norm(&lap, &cand, nl);
                if r < (1.0 - 1e-4 * lambda) * res || (lambda == 1.0 && r < res * 4.0 && res > 1e3 * opts.tol) {
                    accepted = Some((cand, r));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((cand, r)) => {
                u = cand;
                res = r;
                report.damping.push(lambda);
                report.residual_history.push(r);
                if u.min() < opts.floor {
                    report.status = SolveStatus::Collapsed;
                    break;
                }
            }
            None => {
                report.status = SolveStatus::Stalled;
                break;
            }
        }
    }
    if res <= opts.tol && u.is_positive() {
        report.status = SolveStatus::Converged;
        report.converged = true;
    }
    report.residual = res;
    report.min_u = u.min();
    report.field = u;
    Ok(report)
}

/// Maximal solution by the monotone iteration started from the harmonic extension
/// of the boundary data.
pub fn maximal_solution(boundary: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    check_boundary(boundary)?;
    let start = harmonic_extension(boundary)?;
    maximal_solution_from(boundary, &start, opts)
}

/// Monotone iteration from a supplied supersolution `start` (e.g. a maximal solution
/// for larger boundary data).
pub fn maximal_solution_from(boundary: &Field, start: &Field, opts: &SolveOptions) -> Result<SolveReport> {
    same_grid(boundary, start)?;
    check_boundary(boundary)?;
    let nl = opts.nonlinearity;
    let lap = assemble_laplacian(boundary.grid());
    let mut v = start.with_boundary_from(boundary)?;
    if !v.is_positive() {
        return Err(Error::InvalidField("starting supersolution must be positive".into()));
    }
    let mut res = residual_norm(&lap, &v, nl);
    let mut report = SolveReport {
        field: v.clone(),
        iterations: 0,
        residual: res,
        min_u: v.min(),
        converged: false,
        status: SolveStatus::MaxIterations,
        damping: Vec::new(),
        residual_history: vec![res],
        monotone: true,
    };
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            report.status = SolveStatus::Converged;
            break;
        }
        report.iterations = it + 1;
        let next = match picard_with(&lap, boundary, &v, nl) {
            Ok(f) => f,
            Err(_) => {
                report.status = SolveStatus::LinearSolveFailed;
                break;
            }
        };
        let scale = v.max().abs().max(1.0);
        if next.values().iter().zip(v.values()).any(|(a, b)| *a > *b + 1e-12 * scale) {
            report.monotone = false;
        }
        v = next;
        if !(v.min() > opts.floor) {
            report.status = SolveStatus::Collapsed;
            break;
        }
        res = residual_norm(&lap, &v, nl);
        report.residual_history.push(res);
    }
    if res <= opts.tol && v.min() > opts.floor {
        report.status = SolveStatus::Converged;
    }
    report.converged = report.status == SolveStatus::Converged;
    report.residual = res;
    report.min_u = v.min();
    report.field = v;
    Ok(report)
}

/// `x ↦ u(Cx)/C` on the grid scaled by 1/C. Nodes map to nodes exactly.
pub fn rescale_solution(field: &Field, c: f64) -> Result<Field> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {c}")));
    }
    if c == 1.0 {
        return Ok(field.clone());
    }
    let g = Arc::new(field.grid().scaled(1.0 / c)?);
    Field::new(g, field.values().iter().map(|v| v / c).collect())
}

/// Index map from `sub` nodes to `parent` nodes. Both grids must share kind, dimension and spacing.
pub fn node_map(parent: &Grid, sub: &Grid) -> Result<Vec<usize>> {
    let mismatch = || Error::Geometry("sub-grid nodes are not parent nodes".into());
    if parent.kind() != sub.kind() || parent.dim() != sub.dim() || (parent.h() - sub.h()).abs() > 1e-12 * parent.h() {
        return Err(mismatch());
    }
    let h = parent.h();
    let mut offsets = Vec::new();
    for (a, b) in parent.lower().iter().zip(sub.lower()) {
        let k = (b - a) / h;
        if k < -1e-9 || (k - k.round()).abs() > 1e-6 {
            return Err(mismatch());
        }
        offsets.push(k.round() as usize);
    }
    if sub.is_radial() && sub.has_regular_center() && (!parent.has_regular_center() || offsets[0] != 0) {
        return Err(mismatch());
    }
    let mut out = Vec::with_capacity(sub.len());
    for node in 0..sub.len() {
        let idx: Vec<usize> = sub.multi_index(node).iter().zip(&offsets).map(|(i, o)| i + o).collect();
        if idx.iter().zip(parent.shape()).any(|(i, s)| i >= s) {
            return Err(mismatch());
        }
        out.push(parent.node_at(&idx));
    }
    Ok(out)
}

pub fn restrict(field: &Field, sub: Arc<Grid>) -> Result<Field> {
    let map = node_map(field.grid(), &sub)?;
    Field::new(sub, map.iter().map(|&i| field.values()[i]).collect())
}

/// Recomputes the maximal solution on `sub` with boundary data read from `field`.
pub fn restrict_and_resolve(field: &Field, sub: Arc<Grid>, opts: &SolveOptions) -> Result<SolveReport> {
    let data = restrict(field, sub)?;
    maximal_solution(&data, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::oracle::oracle_symmetric_1d;

    fn ball(n: usize, h: f64) -> Arc<Grid> {
        Arc::new(Grid::build(&Domain::Ball { n, radius: 1.0, r_inner: None }, h).unwrap())
    }

    #[test]
    fn one_dimensional_symmetric_solution() {
        let g = Arc::new(Grid::build(&Domain::Interval { a: -1.0, b: 1.0 }, 1.0 / 200.0).unwrap());
        let data = Field::constant(g.clone(), 2.0);
        let rep = newton_solve(&data, &data, &SolveOptions::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.status);
        let v = rep.field.values();
        for i in 0..g.len() {
            assert!((v[i] - v[g.len() - 1 - i]).abs() < 1e-10);
        }
        let center = v[g.len() / 2];
        let roots = oracle_symmetric_1d(2.0);
        let best = roots.iter().map(|a| (a - center).abs()).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-4, "center {center} vs oracle {roots:?}");
    }

    #[test]
    fn picard_fixed_point_and_vanishing_potential() {
        let g = ball(3, 1.0 / 64.0);
        let data = Field::constant(g.clone(), 2.0);
        let rep = maximal_solution(&data, &SolveOptions { tol: 1e-11, ..Default::default() }).unwrap();
        assert!(rep.converged);
        let t = picard_t(&data, &rep.field, Nonlinearity::default()).unwrap();
        assert!(t.max_abs_diff(&rep.field) < 1e-9);

        let huge = Field::constant(g.clone(), 1e6);
        let v = picard_t(&data, &huge, Nonlinearity::default()).unwrap();
        assert!(v.max_abs_diff(&data) <= 1e-6 * 2.0);
    }

    #[test]
    fn picard_preserves_the_discrete_cone() {
        let g = Arc::new(Grid::build(&Domain::Annulus { n: 7, r_inner: 0.1, r_outer: 1.0 }, 0.01).unwrap());
        let cone = Field::from_radial_fn(g, |r| r / 6f64.sqrt()).unwrap();
        let v = picard_t(&cone, &cone, Nonlinearity::default()).unwrap();
        assert!(v.max_abs_diff(&cone) < 1e-10);
    }

    #[test]
    fn monotone_iteration_from_harmonic_start() {
        let g = ball(3, 1.0 / 64.0);
        let data = Field::constant(g, 2.0);
        let rep = maximal_solution(&data, &SolveOptions::default()).unwrap();
        assert!(rep.converged && rep.monotone);
        assert!(rep.residual <= 1e-8);
        // subharmonic: maximum on the boundary
        assert!(rep.field.max() <= 2.0 + 1e-12);
    }

    #[test]
    fn newton_agrees_with_maximal_for_large_data() {
        let g = ball(3, 1.0 / 64.0);
        let data = Field::constant(g, 2.0);
        let a = maximal_solution(&data, &SolveOptions::default()).unwrap();
        let b = newton_solve(&data, &data, &SolveOptions::default()).unwrap();
        assert!(b.converged);
        assert!(a.field.max_abs_diff(&b.field) < 1e-7);
    }

    #[test]
    fn small_data_on_the_disk_has_no_solution() {
        let g = ball(2, 1.0 / 64.0);
        let data = Field::constant(g, 0.05);
        let a = maximal_solution(&data, &SolveOptions::default()).unwrap();
        assert_eq!(a.status, SolveStatus::Collapsed);
        let b = newton_solve(&data, &data, &SolveOptions::default()).unwrap();
        assert!(!b.converged);
    }

    #[test]
    fn box_newton_uses_minres() {
        let g = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: -1.0, hi: 1.0 }, 1.0 / 16.0).unwrap());
        let data = Field::constant(g, 3.0);
        let rep = newton_solve(&data, &data, &SolveOptions::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.status);
        let max = maximal_solution(&data, &SolveOptions::default()).unwrap();
        assert!(max.field.max_abs_diff(&rep.field) < 1e-7);
    }

    #[test]
    fn general_exponent() {
        let g = ball(3, 1.0 / 32.0);
        let opts = SolveOptions { nonlinearity: Nonlinearity::new(1.0, 0.5).unwrap(), ..Default::default() };
        let data = Field::constant(g, 1.5);
        let a = maximal_solution(&data, &opts).unwrap();
        let b = newton_solve(&data, &data, &opts).unwrap();
        assert!(a.converged && b.converged);
        assert!(a.field.max_abs_diff(&b.field) < 1e-7);
    }

    #[test]
    fn rescaling() {
        let g = ball(3, 1.0 / 32.0);
        let f = Field::from_radial_fn(g.clone(), |r| 1.0 + r * r).unwrap();
        assert_eq!(rescale_solution(&f, 1.0).unwrap(), f);
        let cone = Field::from_radial_fn(g.clone(), |r| r / 2f64.sqrt()).unwrap();
        let s = rescale_solution(&cone, 4.0).unwrap();
        for i in 0..s.grid().len() {
            assert!((s.values()[i] - s.grid().radius(i) / 2f64.sqrt()).abs() < 1e-15);
        }
        // the residual scales by C
        let nl = Nonlinearity::default();
        let r0 = residual(&f, nl);
        let r1 = residual(&rescale_solution(&f, 0.5).unwrap(), nl);
        assert!((r1 - 0.5 * r0).abs() < 1e-9 * r0);
    }

    #[test]
    fn restriction_to_full_grid_is_identity() {
        let g = ball(3, 1.0 / 32.0);
        let data = Field::constant(g.clone(), 2.0);
        let opts = SolveOptions::default();
        let rep = maximal_solution(&data, &opts).unwrap();
        let again = restrict_and_resolve(&rep.field, g, &opts).unwrap();
        assert!(again.field.max_abs_diff(&rep.field) <= 10.0 * opts.tol);
    }

    #[test]
    fn node_map_rejects_foreign_grids() {
        let a = ball(3, 1.0 / 32.0);
        let b = Grid::build(&Domain::Annulus { n: 3, r_inner: 0.25, r_outer: 0.5 }, 1.0 / 64.0).unwrap();
        assert!(node_map(&a, &b).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config { cases: 16, ..Default::default() })]

        #[test]
        fn maximal_solutions_are_ordered_by_their_data(n in 3usize..8, lo in 1.2f64..3.0, gap in 0.01f64..1.0) {
            let g = ball(n, 1.0 / 32.0);
            let opts = SolveOptions::default();
            let a = maximal_solution(&Field::constant(g.clone(), lo), &opts).unwrap();
            let b = maximal_solution(&Field::constant(g, lo + gap), &opts).unwrap();
            proptest::prop_assert!(a.converged && b.converged);
            proptest::prop_assert!(a.field.values().iter().zip(b.field.values()).all(|(x, y)| x < y));
            // interior values sit below the data (subharmonic)
            proptest::prop_assert!(a.field.max() <= lo + 1e-12);
        }

        #[test]
        fn picard_map_is_monotone(n in 2usize..8, s in 0.3f64..0.9, lift in 0.0f64..0.5) {
            let g = ball(n, 1.0 / 32.0);
            let data = Field::constant(g.clone(), 2.0);
            let nl = Nonlinearity::default();
            let u = Field::from_radial_fn(g.clone(), |r| 2.0 * (s + (1.0 - s) * r * r)).unwrap();
            let w = u.map(|v| v + lift).unwrap().with_boundary_from(&data).unwrap();
            let (tu, tw) = (picard_t(&data, &u, nl).unwrap(), picard_t(&data, &w, nl).unwrap());
            proptest::prop_assert!(tu.values().iter().zip(tw.values()).all(|(x, y)| *x <= y + 1e-12));
        }
    }
}
