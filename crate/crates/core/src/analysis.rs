//! Estimate verifiers: positivity lower bounds, negative-power integrals, Hölder quotients,
//! the logarithmic cutoff functional and box-counting dimension of sublevel sets.
//!
//! All bounds are stated for the unit-coefficient equation `Δu = 1/u`.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, integrate, integrate_with, unit_ball_volume, unit_sphere_area, Field, GridKind};
use crate::solver::{harmonic_extension, maximal_solution, SolveOptions};

/// Node count up to which Hölder quotients use every pair.
pub const ALL_PAIRS_CAP: usize = 20_000;

/// `4 + 2√2`, computed.
pub fn p_threshold() -> f64 {
    4.0 + 2.0 * 2f64.sqrt()
}

/// The larger root of `n² − 8n + 8`, from the quadratic formula.
pub fn threshold_from_quadratic() -> f64 {
    let (b, c) = (-8.0f64, 8.0f64);
    (-b + (b * b - 4.0 * c).sqrt()) / 2.0
}

/// The sublevel-set dimension bound `n − 4 − 2√2`.
pub fn dimension_bound(n: usize) -> f64 {
    n as f64 - p_threshold()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// value ≤ bound
    AtMost,
    /// value ≥ bound
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub inequality: String,
    pub params: BTreeMap<String, f64>,
    pub value: f64,
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
    /// False when the check's hypotheses fail on this instance (pass is then false too).
    pub applicable: bool,
    pub note: Option<String>,
}

impl Check {
    fn new(name: &str, inequality: &str, params: &[(&str, f64)], value: f64, bound: f64, relation: Relation) -> Check {
        let mut c = Check {
            name: name.to_string(),
            inequality: inequality.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            bound,
            relation,
            pass: false,
            applicable: true,
            note: None,
        };
        c.pass = c.recompute();
        c
    }

    fn inapplicable(mut self, note: impl Into<String>) -> Check {
        self.applicable = false;
        self.pass = false;
        self.note = Some(note.into());
        self
    }

    /// Pass/fail from the stored numbers.
    pub fn recompute(&self) -> bool {
        if !self.applicable {
            return false;
        }
        match self.relation {
            Relation::AtMost => self.value <= self.bound,
            Relation::AtLeast => self.value >= self.bound,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub checks: Vec<Check>,
}

impl EstimateReport {
    pub fn all_pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn merge(&mut self, other: EstimateReport) {
        self.checks.extend(other.checks);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    /// One row per check: name, `key=value` params joined by `;`, value, bound, pass.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "check_name,params,value,bound,pass")?;
        for c in &self.checks {
            let params: Vec<String> = c.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(w, "{},{},{:.12e},{:.12e},{}", c.name, params.join(";"), c.value, c.bound, c.pass)?;
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Point position for geometric tests: radial grids report `[r]` measured from the origin.
fn offset_norm(field: &Field, node: usize, center: &[f64]) -> f64 {
    let g = field.grid();
    if g.is_radial() {
        g.radius(node)
    } else {
        distance(&g.coords(node), center)
    }
}

fn check_ball_inside(field: &Field, center: &[f64], radius: f64) -> Result<()> {
    let g = field.grid();
    if g.is_radial() {
        if center.iter().any(|&c| c != 0.0) {
            return Err(Error::Geometry("radial grids only support balls centred at the origin".into()));
        }
        if !g.has_regular_center() {
            return Err(Error::Geometry("ball around the origin needs a grid containing the origin".into()));
        }
        if radius > g.r_outer().unwrap() * (1.0 + 1e-12) {
            return Err(Error::Geometry(format!("ball of radius {radius} leaves the grid")));
        }
        return Ok(());
    }
    if center.len() != g.dim() {
        return Err(Error::Geometry(format!("center has {} coordinates, grid has dimension {}", center.len(), g.dim())));
    }
    let hi = g.upper();
    for (k, &c) in center.iter().enumerate() {
        if c - radius < g.lower()[k] - 1e-12 || c + radius > hi[k] + 1e-12 {
            return Err(Error::Geometry(format!("ball of radius {radius} leaves the grid along axis {k}")));
        }
    }
    Ok(())
}

/// `(1/ρ²)∫_{B_{2ρ}∖B_ρ} u² ≥ ω_n ρⁿ` and `sup_{B_{2ρ}} u ≥ ρ/√(2ⁿ−1)`.
pub fn positivity_check(field: &Field, center: &[f64], rho: f64) -> Result<EstimateReport> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {rho}")));
    }
    check_ball_inside(field, center, 2.0 * rho)?;
    let g = field.grid();
    let n = g.dim();
    let origin = vec![0.0; g.coords(0).len()];
    let c = if g.is_radial() { &origin[..] } else { center };
    let mut sup = f64::NEG_INFINITY;
    let mut nodes_in = 0usize;
    let mut integral = 0.0;
    let w = g.quadrature_weights();
    for i in 0..g.len() {
        let d = offset_norm(field, i, c);
        if d <= 2.0 * rho * (1.0 + 1e-12) {
            sup = sup.max(field.values()[i]);
            nodes_in += 1;
            if d >= rho * (1.0 - 1e-12) {
                integral += w[i] * field.values()[i] * field.values()[i];
            }
        }
    }
    let lhs = integral / (rho * rho);
    let params = [("rho", rho), ("n", n as f64)];
    let mut a = Check::new(
        "positivity_l2",
        "(1/rho^2) int_{B_2rho minus B_rho} u^2 >= omega_n rho^n",
        &params,
        lhs,
        unit_ball_volume(n) * rho.powi(n as i32),
        Relation::AtLeast,
    );
    let mut b = Check::new(
        "positivity_sup",
        "sup_{B_2rho} u >= rho / sqrt(2^n - 1)",
        &params,
        sup,
        rho / (2f64.powi(n as i32) - 1.0).sqrt(),
        Relation::AtLeast,
    );
    // a few nodes across the ball is not enough to resolve either side
    let across = 2.0 * rho / g.h();
    if across < 4.0 || nodes_in < 3 {
        let note = format!("insufficient resolution: {across:.2} cells across B_2rho");
        a = a.inapplicable(note.clone());
        b = b.inapplicable(note);
    }
    Ok(EstimateReport { checks: vec![a, b] })
}

/// `∫ u^{−p} ≤ C_cal·|Ω|/ε^p`; only claimed for `2 ≤ p < 4+2√2`.
pub fn p_integral_check(field: &Field, p: f64, eps_floor: f64, c_cal: f64) -> Result<EstimateReport> {
    if !(eps_floor > 0.0) || !(c_cal > 0.0) {
        return Err(Error::InvalidArgument("floor and calibration constant must be positive".into()));
    }
    let vol = field.grid().volume();
    let bound = c_cal * vol / eps_floor.powf(p);
    let params = [("p", p), ("eps_floor", eps_floor), ("c_cal", c_cal), ("volume", vol)];
    let ineq = "int u^-p <= C_cal |Omega| / eps^p";
    let check = match integrate(field, -p) {
        Ok(v) if v.is_finite() => {
            let c = Check::new("p_integral", ineq, &params, v, bound, Relation::AtMost);
            if (2.0..p_threshold()).contains(&p) {
                c
            } else {
                c.inapplicable(format!("p = {p} outside [2, 4+2sqrt2)"))
            }
        }
        Ok(v) => Check::new("p_integral", ineq, &params, v, bound, Relation::AtMost).inapplicable("non-finite integral"),
        Err(e) => Check::new("p_integral", ineq, &params, f64::INFINITY, bound, Relation::AtMost)
            .inapplicable(format!("non-finite integral: {e}")),
    };
    Ok(EstimateReport { checks: vec![check] })
}

/// Reference constant for the p-integral bound: `ε^p ∫u^{−p} / |Ω|` on the maximal solution
/// with data 2 on the radial unit ball in ℝ³, `h = 1/128`. Multiply by 10 before use.
pub fn reference_p_constant(p: f64) -> Result<f64> {
    let u = reference_solution()?;
    Ok(2f64.powf(p) * integrate(&u, -p)? / u.grid().volume())
}

/// Reference constant for the `W^{1,2}` bound, on the same instance (harmonic extension of
/// constant data has no gradient, so the right side is `|Ω|`).
pub fn reference_w12_constant() -> Result<f64> {
    let u = reference_solution()?;
    Ok(4.0 * integrate(&u, -2.0)? / u.grid().volume())
}

fn reference_solution() -> Result<Field> {
    use crate::grid::{Domain, Grid};
    use std::sync::Arc;
    let g = Arc::new(Grid::build(&Domain::Ball { n: 3, radius: 1.0, r_inner: None }, 1.0 / 128.0)?);
    let rep = maximal_solution(&Field::constant(g, 2.0), &SolveOptions::default())?;
    if !rep.converged {
        return Err(Error::Precondition("reference instance did not converge".into()));
    }
    Ok(rep.field)
}

/// `∫ 1/u² ≤ (C/ε²)∫(1 + |Dφ|²)` with `φ` extended harmonically from the boundary.
pub fn w12_p2_check(field: &Field, boundary: &Field, eps_floor: f64, c_cal: f64) -> Result<EstimateReport> {
    let g = field.grid();
    let bmin = g.boundary_nodes().iter().map(|&i| boundary.values()[i]).fold(f64::INFINITY, f64::min);
    if bmin < eps_floor * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!("boundary data dips to {bmin} below the floor {eps_floor}")));
    }
    let ext = harmonic_extension(boundary)?;
    let grad_sq = 2.0 * dirichlet_energy(&ext);
    let rhs = c_cal / (eps_floor * eps_floor) * (g.volume() + grad_sq);
    let lhs = integrate(field, -2.0)?;
    let check = Check::new(
        "w12_p2",
        "int u^-2 <= (C/eps^2) int (1 + |D phi|^2)",
        &[("eps_floor", eps_floor), ("c_cal", c_cal), ("grad_phi_sq", grad_sq)],
        lhs,
        rhs,
        Relation::AtMost,
    );
    Ok(EstimateReport { checks: vec![check] })
}

/// Region used to restrict the Hölder quotient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Subdomain {
    Whole,
    /// `r_lo ≤ |x| ≤ r_hi`.
    Shell { r_lo: f64, r_hi: f64 },
    /// Axis-aligned box, Cartesian grids only.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Subdomain {
    fn nodes(&self, field: &Field) -> Result<Vec<usize>> {
        let g = field.grid();
        let keep = |i: usize| -> Result<bool> {
            Ok(match self {
                Subdomain::Whole => true,
                Subdomain::Shell { r_lo, r_hi } => {
                    let r = if g.is_radial() { g.radius(i) } else { distance(&g.coords(i), &vec![0.0; g.dim()]) };
                    r >= r_lo - 1e-12 && r <= r_hi + 1e-12
                }
                Subdomain::Box { lo, hi } => {
                    if g.is_radial() {
                        return Err(Error::Geometry("box subdomains need a Cartesian grid".into()));
                    }
                    let x = g.coords(i);
                    x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - 1e-12 && *v <= b + 1e-12)
                }
            })
        };
        let mut out = Vec::new();
        for i in 0..g.len() {
            if keep(i)? {
                out.push(i);
            }
        }
        Ok(out)
    }
}

/// Max of `|u(x)−u(y)|/|x−y|^α` over node pairs in the subdomain, sampled with seed 0 when
/// the subdomain exceeds [`ALL_PAIRS_CAP`] nodes.
pub fn holder_quotient(field: &Field, alpha: f64, subdomain: &Subdomain) -> Result<f64> {
    holder_quotient_seeded(field, alpha, subdomain, 0)
}

pub fn holder_quotient_seeded(field: &Field, alpha: f64, subdomain: &Subdomain, seed: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
    }
    let nodes = subdomain.nodes(field)?;
    if nodes.len() < 2 {
        return Ok(0.0);
    }
    let g = field.grid();
    // radial fields: the closest pair of points on two spheres is |r − s| apart
    let pos: Vec<Vec<f64>> =
        nodes.iter().map(|&i| if g.is_radial() { vec![g.radius(i)] } else { g.coords(i) }).collect();
    let u: Vec<f64> = nodes.iter().map(|&i| field.values()[i]).collect();
    let q = |a: usize, b: usize| -> f64 {
        let d = distance(&pos[a], &pos[b]);
        if d == 0.0 {
            0.0
        } else {
            (u[a] - u[b]).abs() / d.powf(alpha)
        }
    };
    if nodes.len() <= ALL_PAIRS_CAP {
        let best = (0..nodes.len())
            .into_par_iter()
            .map(|a| (a + 1..nodes.len()).map(|b| q(a, b)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        return Ok(best);
    }
    Ok(stratified_sample(&pos, seed, |a, b| q(a, b)))
}

/// Pairs drawn in log-spaced distance strata, a fixed number per stratum; nearest-neighbour
/// pairs are always included since they dominate for α close to 1.
fn stratified_sample(pos: &[Vec<f64>], seed: u64, q: impl Fn(usize, usize) -> f64) -> f64 {
    const PER_STRATUM: usize = 20_000;
    let len = pos.len();
    let mut best = (0..len - 1).map(|a| q(a, a + 1)).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offset = 1usize;
    while offset < len {
        let span = (2 * offset).min(len);
        for _ in 0..PER_STRATUM {
            let a = rng.gen_range(0..len);
            let k = rng.gen_range(offset..span.max(offset + 1));
            let b = if a + k < len { a + k } else if a >= k { a - k } else { continue };
            best = best.max(q(a, b));
        }
        offset *= 2;
    }
    best
}

/// Cutoff of the logarithmic trick: 1 on `B_R`, `2 − log|x|/log R` on `B_{R²}∖B_R`, 0 beyond.
pub fn log_cutoff(r: f64, radius: f64) -> f64 {
    if r <= radius {
        1.0
    } else if r <= radius * radius {
        2.0 - r.ln() / radius.ln()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogTrick {
    /// `∫ (ζ/u)ⁿ`
    pub value: f64,
    /// `∫ |Dζ|ⁿ`, which equals `|S^{n−1}|/(log R)^{n−1}` in the continuum.
    pub gradient: f64,
    pub radius: f64,
}

/// Evaluates the cutoff functional on `B_{R²}` (R > 1).
pub fn log_trick_functional(field: &Field, radius: f64) -> Result<LogTrick> {
    if !(radius > 1.0) {
        return Err(Error::InvalidArgument(format!("cutoff radius must exceed 1, got {radius}")));
    }
    let g = field.grid();
    let n = g.dim();
    let outer = radius * radius;
    let origin = vec![0.0; n];
    check_ball_inside(field, &origin, outer)?;
    let r_of = |x: &[f64]| if g.is_radial() { x[0] } else { distance(x, &origin) };
    let value = integrate_with(field, |x, u| {
        let z = log_cutoff(r_of(x), radius);
        if z == 0.0 {
            0.0
        } else {
            (z / u).powi(n as i32)
        }
    });
    if !value.is_finite() {
        return Err(Error::NonFinite("cutoff functional is not finite".into()));
    }
    let lr = radius.ln();
    let gradient = integrate_with(field, |x, _| {
        let r = r_of(x);
        if r > radius && r <= outer {
            (r * lr).powi(-(n as i32))
        } else {
            0.0
        }
    });
    Ok(LogTrick { value, gradient, radius })
}

/// Exact `∫|Dζ|ⁿ = |S^{n−1}|/(log R)^{n−1}`.
pub fn log_trick_gradient_exact(n: usize, radius: f64) -> f64 {
    unit_sphere_area(n) / radius.ln().powi(n as i32 - 1)
}

/// Box-counting slope of `{u < τ}`, checked against `n − 4 − 2√2 + 0.5`.
pub fn box_dimension(field: &Field, tau: f64, scales: &[f64]) -> Result<EstimateReport> {
    let g = field.grid();
    if scales.len() < 2 {
        return Err(Error::InvalidArgument("box counting needs at least two scales".into()));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("scales must be strictly decreasing".into()));
    }
    if scales.iter().any(|&d| d < 2.0 * g.h() * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!("scales must be at least 2h = {}", 2.0 * g.h())));
    }
    let n = g.dim();
    let counts: Vec<f64> = if g.is_radial() {
        let shells = sublevel_shells(field, tau);
        scales.iter().map(|&d| count_cubes_meeting_shells(n, d, &shells)).collect::<Result<_>>()?
    } else {
        scales.iter().map(|&d| count_cells(field, tau, d) as f64).collect()
    };
    let mut params: Vec<(String, f64)> = vec![("tau".into(), tau), ("n".into(), n as f64)];
    for (k, (&d, &c)) in scales.iter().zip(&counts).enumerate() {
        params.push((format!("delta_{k}"), d));
        params.push((format!("count_{k}"), c));
    }
    let slope = if counts.iter().all(|&c| c == 0.0) {
        f64::NEG_INFINITY
    } else if counts.iter().any(|&c| c == 0.0) {
        return Err(Error::Precondition("sublevel set vanishes at some scales but not others".into()));
    } else {
        let xs: Vec<f64> = scales.iter().map(|d| (1.0 / d).ln()).collect();
        let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
        least_squares_slope(&xs, &ys)
    };
    let p: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut c = Check::new(
        "box_dimension",
        "box-counting slope of {u < tau} <= n - 4 - 2sqrt2 + 0.5",
        &p,
        slope,
        dimension_bound(n) + 0.5,
        Relation::AtMost,
    );
    if slope == f64::NEG_INFINITY {
        c.note = Some("empty sublevel set".into());
    }
    Ok(EstimateReport { checks: vec![c] })
}

/// Default sublevel threshold: three cells of cone slope past the innermost node.
pub fn default_tau(field: &Field) -> f64 {
    let g = field.grid();
    let slope = 1.0 / ((g.dim().max(2) - 1) as f64).sqrt();
    let r_min = if g.is_radial() { g.radii()[0] } else { 0.0 };
    slope * (r_min + 3.0 * g.h())
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn count_cells(field: &Field, tau: f64, delta: f64) -> usize {
    let g = field.grid();
    let lo = g.lower().to_vec();
    let mut cells = HashSet::new();
    for (i, &u) in field.values().iter().enumerate() {
        if u < tau {
            let x = g.coords(i);
            let key: Vec<i64> = x.iter().zip(&lo).map(|(v, l)| ((v - l) / delta + 1e-9).floor() as i64).collect();
            cells.insert(key);
        }
    }
    cells.len()
}

/// Radius intervals where the radial field sits below `τ`, each node owning half a cell on
/// either side (the innermost node of a ball also owns the central cap).
fn sublevel_shells(field: &Field, tau: f64) -> Vec<(f64, f64)> {
    let g = field.grid();
    let r = g.radii();
    let h = g.h();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &u) in field.values().iter().enumerate() {
        if u >= tau {
            continue;
        }
        let a = if i == 0 && g.has_regular_center() { 0.0 } else { (r[i] - 0.5 * h).max(r[0]) };
        let b = (r[i] + 0.5 * h).min(r[r.len() - 1]);
        match out.last_mut() {
            Some(last) if a <= last.1 + 1e-12 => last.1 = b,
            _ => out.push((a, b)),
        }
    }
    out
}

/// Number of cubes `δ·(k + [0,1)ⁿ)` that meet `⋃{a ≤ |x| ≤ b}`. Counts are tallied by
/// `(Σk², Σk)` over nonnegative indices, then multiplied by the `2ⁿ` reflections.
fn count_cubes_meeting_shells(n: usize, delta: f64, shells: &[(f64, f64)]) -> Result<f64> {
    if shells.is_empty() {
        return Ok(0.0);
    }
    let b_max = shells.iter().map(|s| s.1).fold(0.0, f64::max);
    let kmax = (b_max / delta).floor() as usize;
    let s1_cap = ((b_max / delta).powi(2) + 1e-9).floor() as usize;
    let sk_cap = n * kmax;
    let states = (s1_cap + 1) * (sk_cap + 1);
    if states > 20_000_000 {
        return Err(Error::SizeCap(format!("box count at delta = {delta} needs {states} states")));
    }
    let idx = |s1: usize, sk: usize| s1 * (sk_cap + 1) + sk;
    let mut table = vec![0f64; states];
    table[idx(0, 0)] = 1.0;
    for _ in 0..n {
        let mut next = vec![0f64; states];
        for s1 in 0..=s1_cap {
            for sk in 0..=sk_cap {
                let c = table[idx(s1, sk)];
                if c == 0.0 {
                    continue;
                }
                for k in 0..=kmax {
                    let (t1, tk) = (s1 + k * k, sk + k);
                    if t1 > s1_cap {
                        break;
                    }
                    next[idx(t1, tk)] += c;
                }
            }
        }
        table = next;
    }
    let mut total = 0.0;
    for s1 in 0..=s1_cap {
        let dmin = delta * (s1 as f64).sqrt();
        for sk in 0..=sk_cap {
            let c = table[idx(s1, sk)];
            if c == 0.0 {
                continue;
            }
            let dmax = delta * ((s1 + 2 * sk + n) as f64).sqrt();
            if shells.iter().any(|&(a, b)| dmin <= b && dmax >= a) {
                total += c;
            }
        }
    }
    Ok(total * 2f64.powi(n as i32))
}

/// Whether the grid is a Cartesian box of dimension `n`.
pub fn is_cartesian(field: &Field) -> bool {
    field.grid().kind() != GridKind::Radial
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Grid};
    use crate::oracle::oracle_radial_integral;
    use std::sync::Arc;

    fn ball(n: usize, radius: f64, h: f64) -> Arc<Grid> {
        Arc::new(Grid::build(&Domain::Ball { n, radius, r_inner: None }, h).unwrap())
    }

    fn cone(g: &Arc<Grid>) -> Field {
        let s = 1.0 / ((g.dim() - 1) as f64).sqrt();
        Field::from_radial_fn(g.clone(), |r| s * r).unwrap()
    }

    #[test]
    fn threshold_arithmetic() {
        let t = p_threshold();
        assert!((t - threshold_from_quadratic()).abs() <= 4.0 * f64::EPSILON * t);
        assert!((t * t - 8.0 * t + 8.0).abs() < 1e-12);
        // n − 1 ≤ (n−2)²/4 is the same quadratic
        assert!(((t - 2.0).powi(2) / 4.0 - (t - 1.0)).abs() < 1e-12);
        assert!((dimension_bound(7) - 0.171_572_875).abs() < 1e-8);
    }

    #[test]
    fn positivity_on_cone_and_constant() {
        let g = ball(7, 1.0, 1e-3);
        let rep = positivity_check(&cone(&g), &[], 0.25).unwrap();
        assert!(rep.all_pass());
        let sup = rep.check("positivity_sup").unwrap();
        assert!((sup.value - 0.5 / 6f64.sqrt()).abs() < 1e-12);
        assert!((sup.bound - 0.25 / 127f64.sqrt()).abs() < 1e-15);

        let g2 = ball(2, 0.5, 1.0 / 256.0);
        let rep = positivity_check(&Field::constant(g2.clone(), 0.01), &[], 0.25).unwrap();
        let sup = rep.check("positivity_sup").unwrap();
        assert!(!sup.pass && sup.applicable);
        assert!((sup.bound - 0.25 / 3f64.sqrt()).abs() < 1e-15);

        let rep = positivity_check(&Field::constant(g2, 1.0), &[], 0.005).unwrap();
        assert!(rep.checks.iter().all(|c| !c.applicable && c.note.as_ref().unwrap().contains("resolution")));
    }

    #[test]
    fn positivity_geometry_errors() {
        let g = ball(3, 1.0, 1.0 / 64.0);
        assert!(matches!(positivity_check(&cone(&g), &[], 0.6), Err(Error::Geometry(_))));
        let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 32.0).unwrap());
        assert!(matches!(positivity_check(&Field::constant(sq.clone(), 1.0), &[0.2, 0.5], 0.15), Err(Error::Geometry(_))));
        assert!(positivity_check(&Field::constant(sq, 1.0), &[0.5, 0.5], 0.2).is_ok());
    }

    #[test]
    fn p_integral_of_one_is_the_volume() {
        let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 16.0).unwrap());
        let rep = p_integral_check(&Field::constant(sq, 1.0), 2.0, 1.0, 1.0).unwrap();
        let c = &rep.checks[0];
        assert!((c.value - 1.0).abs() < 1e-14);
        assert!(c.pass);
        let c7 = p_integral_check(&cone(&ball(7, 1.0, 1e-2)), 7.5, 0.1, 1.0).unwrap();
        assert!(!c7.checks[0].applicable);
    }

    #[test]
    fn p_integral_monotone_in_p() {
        let g = ball(3, 1.0, 1.0 / 64.0);
        let u = Field::from_radial_fn(g, |r| 0.3 + r * r).unwrap();
        let vals: Vec<f64> =
            [2.0, 3.0, 4.0, 5.0].iter().map(|&p| p_integral_check(&u, p, 0.3, 1.0).unwrap().checks[0].value).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn holder_basics() {
        let g = Arc::new(Grid::build(&Domain::Annulus { n: 7, r_inner: 0.1, r_outer: 1.0 }, 1e-3).unwrap());
        let q = holder_quotient(&cone(&g), 1.0, &Subdomain::Whole).unwrap();
        assert!((q - 1.0 / 6f64.sqrt()).abs() < 1e-9);
        assert_eq!(holder_quotient(&Field::constant(g.clone(), 3.0), 0.5, &Subdomain::Whole).unwrap(), 0.0);
        let small = holder_quotient(&cone(&g), 0.7, &Subdomain::Shell { r_lo: 0.4, r_hi: 0.6 }).unwrap();
        let big = holder_quotient(&cone(&g), 0.7, &Subdomain::Shell { r_lo: 0.2, r_hi: 0.9 }).unwrap();
        assert!(big >= small);
        assert!(holder_quotient(&cone(&g), 1.5, &Subdomain::Whole).is_err());
    }

    #[test]
    fn holder_sampling_is_deterministic_and_close() {
        let g = Arc::new(Grid::build(&Domain::Interval { a: 0.0, b: 1.0 }, 1.0 / 30_000.0).unwrap());
        let u = Field::from_fn(g, |x| x[0].sqrt()).unwrap();
        let a = holder_quotient(&u, 0.5, &Subdomain::Whole).unwrap();
        let b = holder_quotient(&u, 0.5, &Subdomain::Whole).unwrap();
        assert_eq!(a, b);
        // sqrt is 1/2-Hölder with constant 1, attained at the origin pair
        assert!(a <= 1.0 + 1e-12 && a > 0.99);
    }

    #[test]
    fn log_trick_on_constant_matches_quadrature_oracle() {
        let e = std::f64::consts::E;
        let outer = e * e;
        let h = outer / 4000.0;
        let g = ball(2, outer, h);
        let lt = log_trick_functional(&Field::constant(g, 1.0), e).unwrap();
        let exact = oracle_radial_integral(2, 0.0, outer, 4000, |r| log_cutoff(r, e).powi(2));
        assert!((lt.value - exact).abs() / exact < 1e-3, "{} vs {exact}", lt.value);
        assert!((lt.gradient - log_trick_gradient_exact(2, e)).abs() / lt.gradient < 0.02);
    }

    #[test]
    fn log_trick_support() {
        let e = std::f64::consts::E;
        let g = ball(2, 9.0, 9.0 / 2000.0);
        let a = Field::constant(g.clone(), 1.0);
        let b = Field::from_radial_fn(g, |r| if r > e * e + 0.01 { 5.0 + r } else { 1.0 }).unwrap();
        let (x, y) = (log_trick_functional(&a, e).unwrap(), log_trick_functional(&b, e).unwrap());
        assert_eq!(x.value, y.value);
        assert!(log_trick_functional(&a, 4.0).is_err());
    }

    #[test]
    fn box_counting_cases() {
        let g = ball(7, 1.0, 1e-3);
        let u = cone(&g);
        let tau = default_tau(&u);
        let scales = [0.4, 0.2, 0.1, 0.05];
        let rep = box_dimension(&u, tau, &scales).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.checks[0]);
        assert!(rep.checks[0].value.abs() < 1e-12);
        let empty = box_dimension(&Field::constant(g.clone(), 1.0), 0.5, &scales).unwrap();
        assert_eq!(empty.checks[0].value, f64::NEG_INFINITY);
        assert!(empty.all_pass());
        assert!(box_dimension(&u, tau, &[0.1, 0.2]).is_err());
        assert!(box_dimension(&u, tau, &[0.1, 0.001]).is_err());
    }

    #[test]
    fn box_counting_full_square() {
        let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 256.0).unwrap());
        let rep = box_dimension(&Field::constant(sq, 0.1), 1.0, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]).unwrap();
        assert!((rep.checks[0].value - 2.0).abs() < 0.1);
    }

    #[test]
    fn shell_count_small_cases() {
        // a tiny ball around the origin meets exactly the 2ⁿ cubes touching it
        assert_eq!(count_cubes_meeting_shells(3, 1.0, &[(0.0, 0.5)]).unwrap(), 8.0);
        // a disk of radius 0.9 at δ = 1/2 meets the 4x4 block of cells around the origin only
        assert_eq!(count_cubes_meeting_shells(2, 0.5, &[(0.0, 0.9)]).unwrap(), 16.0);
    }

    #[test]
    fn report_csv_and_json() {
        let g = ball(7, 1.0, 1e-2);
        let rep = positivity_check(&cone(&g), &[], 0.25).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        let back: EstimateReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
        assert!(back.checks.iter().all(|c| c.recompute() == c.pass));
    }
}
