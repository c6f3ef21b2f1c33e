//! Second variation of the energy: the operator `−Δ_h − m/u²`, its smallest
//! Dirichlet eigenvalue, Rayleigh quotients, Hardy witnesses and the energy itself.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{assemble_laplacian, dirichlet_energy, integrate_with, Domain, Field, Grid};
use crate::linalg::{conjugate_gradient, SparseOperator};
use crate::solver::Nonlinearity;

/// Default threshold: `λ_min ≥ −STABLE_TOL` counts as stable.
pub const STABLE_TOL: f64 = 1e-6;

/// Symmetric form `S = W^{1/2} A W^{−1/2}` of `A = −Δ_h − diag(m/u²)` on interior nodes.
///
/// On Cartesian grids `W = h^d` and `S = A`. On radial grids `A` is not symmetric and
/// `W` is the diagonal that symmetrizes the drift stencil; it approximates the
/// shell-volume weights `|S^{n−1}| r^{n−1} h`.
#[derive(Debug, Clone)]
pub struct StabilityOperator {
    pub op: SparseOperator,
    pub weights: Vec<f64>,
    pub grid: Arc<Grid>,
    pub m: f64,
}

/// Weights making the interior Laplacian block self-adjoint.
pub fn symmetrizing_weights(grid: &Grid) -> Result<Vec<f64>> {
    let ni = grid.interior_nodes().len();
    let h = grid.h();
    if !grid.is_radial() {
        return Ok(vec![h.powi(grid.dim() as i32); ni]);
    }
    let lap = assemble_laplacian(grid);
    let a = lap.operator();
    let mut logw = vec![0.0; ni];
    for k in 0..ni.saturating_sub(1) {
        let (up, down) = (a.get(k, k + 1), a.get(k + 1, k));
        if !(up > 0.0) || !(down > 0.0) {
            let r = grid.radius(grid.interior_nodes()[k + 1]);
            return Err(Error::Precondition(format!(
                "radial stencil has a nonpositive coupling at r = {r:e}; need h < 2r/(n−1) (h = {h:e})"
            )));
        }
        logw[k + 1] = logw[k] + (up / down).ln();
    }
    let last = grid.interior_nodes()[ni - 1];
    let target = (crate::grid::unit_sphere_area(grid.dim()) * grid.radius(last).powi(grid.dim() as i32 - 1) * h).ln();
    let shift = target - logw[ni - 1];
    Ok(logw.iter().map(|l| (l + shift).exp()).collect())
}

/// Assembles `−Δ_h − diag(m/u²)` in symmetric form.
pub fn stability_operator(field: &Field, m: f64) -> Result<StabilityOperator> {
    stability_operator_for(field, Nonlinearity { m, alpha: 1.0 })
}

/// Linearization `−Δ_h − diag(α m u^{−α−1})` of `Δu = m u^{−α}`.
pub fn stability_operator_for(field: &Field, nl: Nonlinearity) -> Result<StabilityOperator> {
    let m = nl.m;
    if !field.is_positive() {
        return Err(Error::InvalidField("stability operator needs a positive field".into()));
    }
    let grid = field.grid().clone();
    let weights = symmetrizing_weights(&grid)?;
    let lap = assemble_laplacian(&grid);
    let a = lap.operator();
    let interior = grid.interior_nodes();
    let rows = (0..interior.len())
        .map(|k| {
            let u = field.values()[interior[k]];
            a.row(k)
                .map(|(j, v)| {
                    if j == k {
                        (j, -v - nl.potential(u))
                    } else {
                        // −sqrt(A_kj A_jk) equals −W_k^{1/2} A_kj W_j^{−1/2}
                        (j, -(v * a.get(j, k)).sqrt())
                    }
                })
                .collect()
        })
        .collect();
    Ok(StabilityOperator { op: SparseOperator::from_rows(interior.len(), rows, true), weights, grid, m })
}

impl StabilityOperator {
    /// Maps a vector in symmetric coordinates to the nodal eigenfunction `W^{−1/2} y`.
    pub fn to_field(&self, y: &[f64]) -> Result<Field> {
        let mut v = vec![0.0; self.grid.len()];
        for (k, &i) in self.grid.interior_nodes().iter().enumerate() {
            v[i] = y[k] / self.weights[k].sqrt();
        }
        Field::new(self.grid.clone(), v)
    }

    pub fn smallest(&self, opts: &EigenOptions) -> Result<SpectralReport> {
        let e = smallest_eigenvalue(&self.op, opts)?;
        Ok(SpectralReport {
            lambda_min: e.lambda,
            eigenvector: self.to_field(&e.vector)?,
            iterations: e.iterations,
            residual: e.residual,
            shift: e.shift,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub max_iter: usize,
    /// Relative part of the residual target `rel·|λ| + abs + 64·ε_mach·‖S‖∞`.
    pub rel: f64,
    pub abs: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { max_iter: 2000, rel: 1e-8, abs: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub shift: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub lambda_min: f64,
    /// Zero on the boundary, unit norm in the weighted discrete L².
    pub eigenvector: Field,
    pub iterations: usize,
    pub residual: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_min: f64,
    pub iters: usize,
    pub residual: f64,
    pub n: usize,
    pub h: f64,
    pub delta: Option<f64>,
}

impl SpectralReport {
    pub fn summary(&self) -> SpectralSummary {
        let g = self.eigenvector.grid();
        SpectralSummary {
            lambda_min: self.lambda_min,
            iters: self.iterations,
            residual: self.residual,
            n: g.dim(),
            h: g.h(),
            delta: if g.is_radial() && !g.has_regular_center() { g.r_inner() } else { None },
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Smallest eigenvalue of a symmetric operator by shifted inverse iteration from the
/// all-ones vector.
///
/// Tridiagonal operators get a shift just below λ_min, located with LDLᵀ inertia counts;
/// otherwise the shift is `min(−10, Gershgorin bound − 1)`. A singular shifted solve is
/// retried with the shift lowered by `2^k · 1e−10 · (1 + |σ|)`, k = 0, 1, 2, ….
pub fn smallest_eigenvalue(op: &SparseOperator, opts: &EigenOptions) -> Result<Eigenpair> {
    let n = op.nrows();
    if n == 0 || !op.is_square() {
        return Err(Error::InvalidArgument("eigenvalue of an empty or non-square operator".into()));
    }
    if op.asymmetry() > 1e-12 * op.norm_inf() {
        return Err(Error::Precondition("smallest_eigenvalue needs a symmetric operator".into()));
    }
    let norm = op.norm_inf();
    let floor = 64.0 * f64::EPSILON * norm;
    let tri = op.tridiagonal();
    let gl = op.gershgorin_lower();
    let mut sigma = match &tri {
        Some(t) => {
            let (mut lo, mut hi) = (gl - 1.0, gl.max(0.0) + 2.0 * norm + 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if t.count_below(mid) == 0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-9 * (1.0 + hi.abs()) {
                    break;
                }
            }
            lo - 1e-9 * (1.0 + lo.abs())
        }
        None => (-10.0f64).min(gl - 1.0),
    };
    let mut x = vec![1.0; n];
    normalize(&mut x);
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut jitter = 0;
    for it in 1..=opts.max_iter {
        let shifted = op.add_diagonal(&vec![-sigma; n]);
        let solved = match &tri {
            Some(_) => shifted.tridiagonal().unwrap().solve(&x),
            None => conjugate_gradient(&shifted, &x, Some(&x), 1e-13, 20 * n + 200).map(|o| o.x),
        };
        let mut y = match solved {
            Ok(y) if y.iter().all(|v| v.is_finite()) => y,
            _ => {
                sigma -= 2f64.powi(jitter) * 1e-10 * (1.0 + sigma.abs());
                jitter += 1;
                if jitter > 40 {
                    return Err(Error::EigenNotConverged { iterations: it, residual });
                }
                continue;
            }
        };
        if normalize(&mut y) == 0.0 {
            return Err(Error::EigenNotConverged { iterations: it, residual });
        }
        let ay = op.mul_vec(&y);
        lambda = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
        residual = ay.iter().zip(&y).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        x = y;
        if residual <= opts.rel * lambda.abs() + opts.abs + floor {
            // fix the sign so the (positive) ground state is reported positive
            if x.iter().sum::<f64>() < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(Eigenpair { lambda, vector: x, iterations: it, residual, shift: sigma });
        }
    }
    let _ = lambda;
    Err(Error::EigenNotConverged { iterations: opts.max_iter, residual })
}

/// `λ_min ≥ −tol` for the operator `−Δ_h − m/u²`.
pub fn is_stable(field: &Field, m: f64, tol: f64) -> Result<(bool, SpectralReport)> {
    let rep = stability_operator(field, m)?.smallest(&EigenOptions::default())?;
    Ok((rep.lambda_min >= -tol, rep))
}

/// `∫|Dζ|² − m∫ζ²/u²` evaluated as `Σ W ζ·(Aζ)` with the operator's own weights,
/// so that `λ_min ≤ quotient / Σ W ζ²` holds exactly for every test field.
pub fn rayleigh_quotient(field: &Field, test: &Field, m: f64) -> Result<f64> {
    let g = field.grid();
    if **test.grid() != **g {
        return Err(Error::InvalidField("test field lives on a different grid".into()));
    }
    if g.boundary_nodes().iter().any(|&i| test.values()[i] != 0.0) {
        return Err(Error::Precondition("test field must vanish on the boundary".into()));
    }
    let st = stability_operator(field, m)?;
    let y: Vec<f64> = g
        .interior_nodes()
        .iter()
        .zip(&st.weights)
        .map(|(&i, w)| test.values()[i] * w.sqrt())
        .collect();
    let sy = st.op.mul_vec(&y);
    Ok(y.iter().zip(&sy).map(|(a, b)| a * b).sum())
}

/// `Σ W ζ²` in the operator's weights.
pub fn weighted_norm_sq(test: &Field) -> Result<f64> {
    let g = test.grid();
    let w = symmetrizing_weights(g)?;
    Ok(g.interior_nodes().iter().zip(&w).map(|(&i, w)| w * test.values()[i].powi(2)).sum())
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

#[derive(Debug, Clone)]
pub struct HardyWitness {
    pub field: Field,
    /// Rayleigh quotient against the cone `r/√(n−1)` with m = 1.
    pub quotient: f64,
    /// True when the annulus is too shallow for a negative quotient.
    pub shallow: bool,
}

/// Test field `ζ = r^{−(n−2)/2} χ(ln r)` on a radial annulus, where χ rises from 0 to 1 by a
/// cubic smoothstep over a collar of width `min(1, L/4)` in `ln r` at each end (L the
/// log-width of the annulus).
pub fn hardy_witness(n: usize, grid: Arc<Grid>) -> Result<HardyWitness> {
    if n >= 7 {
        return Err(Error::Precondition(format!("no Hardy witness against the cone exists for n = {n} ≥ 7")));
    }
    if !grid.is_radial() || grid.has_regular_center() || grid.dim() != n {
        return Err(Error::Precondition(format!("hardy_witness needs a radial annulus grid in dimension {n}")));
    }
    let (s0, s1) = (grid.r_inner().unwrap().ln(), grid.r_outer().unwrap().ln());
    let w = (0.25 * (s1 - s0)).min(1.0);
    let a = (n as f64 - 2.0) / 2.0;
    let zeta = Field::from_radial_fn(grid.clone(), |r| {
        let s = r.ln();
        r.powf(-a) * smoothstep((s - s0) / w) * smoothstep((s1 - s) / w)
    })?;
    let mut values = zeta.values().to_vec();
    for i in grid.boundary_nodes() {
        values[i] = 0.0;
    }
    let zeta = Field::new(grid.clone(), values)?;
    let cone = Field::from_radial_fn(grid, |r| r / ((n as f64 - 1.0).max(1.0)).sqrt())?;
    let quotient = rayleigh_quotient(&cone, &zeta, 1.0)?;
    Ok(HardyWitness { field: zeta, quotient, shallow: quotient >= 0.0 })
}

/// `∫ ½|Du|² + m·G(u)` with `G = log u` for α = 1 and `u^{1−α}/(1−α)` otherwise.
pub fn energy(field: &Field, nl: Nonlinearity) -> Result<f64> {
    if !field.is_positive() {
        return Err(Error::InvalidField("energy needs a positive field".into()));
    }
    let a = nl.alpha;
    let pot = integrate_with(field, |_, u| if a == 1.0 { u.ln() } else { u.powf(1.0 - a) / (1.0 - a) });
    Ok(dirichlet_energy(field) + nl.m * pot)
}

/// Radial cutoff: 1 on `r ≤ R/2`, cubic smoothstep down to 0 at `r = R`.
pub fn cutoff(r: f64, radius: f64) -> f64 {
    1.0 - smoothstep((r - 0.5 * radius) / (0.5 * radius))
}

/// Members `u_ε = φ + χ(ε − φ)` of the cutoff family with constant data φ on the ball.
pub fn cutoff_family(grid: Arc<Grid>, phi: f64, eps: f64) -> Result<Field> {
    let radius = grid.r_outer().ok_or_else(|| Error::Geometry("cutoff family needs a radial ball".into()))?;
    Field::from_radial_fn(grid, |r| phi + cutoff(r, radius) * (eps - phi))
}

/// Energies of the cutoff family on the unit ball in ℝⁿ for each ε.
pub fn cutoff_family_energies(n: usize, h: f64, phi: f64, eps: &[f64]) -> Result<Vec<f64>> {
    let g = Arc::new(Grid::build(&Domain::Ball { n, radius: 1.0, r_inner: None }, h)?);
    eps.iter()
        .map(|&e| energy(&cutoff_family(g.clone(), phi, e)?, Nonlinearity::default()))
        .collect()
}
