//! Radial shooting for `u'' + (n−1)u'/r = m/u`, `u(0) = ε`, `u'(0) = 0`.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Default integrator tolerance for shooting.
pub const SHOOT_TOL: f64 = 1e-10;
/// Root tolerance on |S(ε) − C|.
pub const ROOT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub n: usize,
    pub m: f64,
    pub eps: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub tol: f64,
    pub method: String,
}

impl RadialProfile {
    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn u_end(&self) -> f64 {
        *self.u.last().unwrap()
    }

    /// Cubic Hermite interpolation of `(u, u')` between samples.
    pub fn eval(&self, r: f64) -> Option<(f64, f64)> {
        if r < 0.0 || r > self.r_max() * (1.0 + 1e-12) {
            return None;
        }
        let k = match self.r.partition_point(|&x| x <= r) {
            0 => 0,
            k if k >= self.r.len() => self.r.len() - 2,
            k => k - 1,
        };
        let (r0, r1) = (self.r[k], self.r[k + 1]);
        let dr = r1 - r0;
        let t = ((r - r0) / dr).clamp(0.0, 1.0);
        let (y0, y1, d0, d1) = (self.u[k], self.u[k + 1], self.du[k] * dr, self.du[k + 1] * dr);
        let t2 = t * t;
        let t3 = t2 * t;
        let u = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1;
        let du = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * d1)
            / dr;
        Some((u, du))
    }

    /// Samples the profile on a radial grid. Fails if the grid extends past `r_max`.
    pub fn to_field(&self, grid: std::sync::Arc<Grid>) -> Result<Field> {
        let mut v = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let r = grid.radius(i);
            let (u, _) = self
                .eval(r)
                .ok_or_else(|| Error::Geometry(format!("radius {r} outside profile range")))?;
            v.push(u);
        }
        Field::new(grid, v)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,u,du")?;
        for i in 0..self.r.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.r[i], self.u[i], self.du[i])?;
        }
        Ok(())
    }
}

/// Second-order Taylor start at `r0`.
pub fn series_start(eps: f64, n: usize, m: f64, r0: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0) || !(m > 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!("series start needs ε > 0, m > 0, n ≥ 1 (ε={eps}, m={m}, n={n})")));
    }
    if r0 < 0.0 {
        return Err(Error::InvalidArgument(format!("negative start radius {r0}")));
    }
    let a = m / (2.0 * n as f64 * eps);
    if a * r0 * r0 >= eps / 10.0 {
        return Err(Error::Precondition(format!(
            "start radius {r0} too large for the expansion at ε = {eps} (r0²·m/(2nε) = {:e} ≥ ε/10)",
            a * r0 * r0
        )));
    }
    Ok((eps + a * r0 * r0, 2.0 * a * r0))
}

/// Start radius used by the integrator; keeps the series error far below the tolerance.
pub fn default_start_radius(eps: f64, n: usize, m: f64) -> f64 {
    1e-3 * eps * (n as f64 / m).sqrt().min(1.0)
}

type State = [f64; 2];

struct Rhs {
    n1: f64,
    m: f64,
}

impl Rhs {
    fn eval(&self, r: f64, y: &State) -> State {
        [y[1], self.m / y[0] - self.n1 * y[1] / r]
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn comb(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Dormand–Prince 5(4) from the series start, recording every accepted step and
/// landing exactly on each radius in `stops` (sorted, positive).
fn dopri(eps: f64, n: usize, m: f64, stops: &[f64], tol: f64) -> Result<RadialProfile> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let r_max = *stops.last().ok_or_else(|| Error::InvalidArgument("no output radius".into()))?;
    if !(r_max > 0.0) {
        return Err(Error::InvalidArgument(format!("r_max must be positive, got {r_max}")));
    }
    let rhs = Rhs { n1: n as f64 - 1.0, m };
    let r0 = default_start_radius(eps, n, m).min(0.5 * stops[0]);
    let (u0, du0) = series_start(eps, n, m, r0)?;
    let mut prof = RadialProfile {
        n,
        m,
        eps,
        r: vec![0.0, r0],
        u: vec![eps, u0],
        du: vec![0.0, du0],
        tol,
        method: "dopri5-adaptive".into(),
    };
    let mut r = r0;
    let mut y = [u0, du0];
    let mut k1 = rhs.eval(r, &y);
    let mut h = r0;
    let mut next_stop = 0;
    while next_stop < stops.len() && stops[next_stop] <= r {
        next_stop += 1;
    }
    while next_stop < stops.len() {
        let target = stops[next_stop];
        let mut hit = false;
        if r + h >= target * (1.0 - 1e-14) {
            h = target - r;
            hit = true;
        }
        if h <= 1e-15 * r.max(1.0) {
            return Err(Error::StepUnderflow { r, h });
        }
        let k2 = rhs.eval(r + C2 * h, &comb(&y, &[(A21, &k1)], h));
        let k3 = rhs.eval(r + C3 * h, &comb(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = rhs.eval(r + C4 * h, &comb(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = rhs.eval(r + C5 * h, &comb(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
        let k6 = rhs.eval(
            r + h,
            &comb(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
        );
        let y5 = comb(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = rhs.eval(r + h, &y5);
        let mut err: f64 = 0.0;
        for c in 0..2 {
            let e = h * (E1 * k1[c] + E3 * k3[c] + E4 * k4[c] + E5 * k5[c] + E6 * k6[c] + E7 * k7[c]);
            let sc = tol * y[c].abs().max(y5[c].abs()).max(1.0);
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || y5[0] <= 0.0 {
            h *= 0.2;
            if y5[0] <= 0.0 && h < 1e-15 * r.max(1.0) {
                return Err(Error::NonFinite(format!("profile lost positivity near r = {r}")));
            }
            continue;
        }
        if err <= 1.0 {
            r = if hit { target } else { r + h };
            y = y5;
            k1 = k7;
            prof.r.push(r);
            prof.u.push(y[0]);
            prof.du.push(y[1]);
            if hit {
                next_stop += 1;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    Ok(prof)
}

/// Integrates the radial ODE from the center to `r_max` with local error `tol`.
pub fn integrate_radial(eps: f64, n: usize, m: f64, r_max: f64, tol: f64) -> Result<RadialProfile> {
    dopri(eps, n, m, &[r_max], tol)
}

/// Like [`integrate_radial`] but with exact samples at each radius in `stops` (ascending).
pub fn integrate_radial_through(eps: f64, n: usize, m: f64, stops: &[f64], tol: f64) -> Result<RadialProfile> {
    if stops.windows(2).any(|w| w[1] <= w[0]) || stops.first().is_some_and(|&s| s <= 0.0) {
        return Err(Error::InvalidArgument("stop radii must be positive and increasing".into()));
    }
    dopri(eps, n, m, stops, tol)
}

/// `S(ε) = u_ε(1)`.
pub fn shooting_map(n: usize, m: f64, eps: f64) -> Result<f64> {
    Ok(integrate_radial(eps, n, m, 1.0, SHOOT_TOL)?.u_end())
}

/// Log-spaced ε sample window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsWindow {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl Default for EpsWindow {
    fn default() -> Self {
        EpsWindow { lo: 1e-3, hi: 1e2, samples: 400 }
    }
}

impl EpsWindow {
    pub fn points(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let k = self.samples.max(2);
        (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0) || !(self.hi > self.lo) || self.samples < 3 {
            return Err(Error::InvalidArgument(format!("bad ε window {self:?}")));
        }
        Ok(())
    }
}

fn scan(n: usize, m: f64, eps: &[f64]) -> Result<Vec<f64>> {
    eps.par_iter().map(|&e| shooting_map(n, m, e)).collect()
}

/// All ε-roots of `S(ε) = C` located in the scanned window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirichletRoots {
    pub c: f64,
    pub window: EpsWindow,
    pub profiles: Vec<RadialProfile>,
}

impl DirichletRoots {
    pub fn eps(&self) -> Vec<f64> {
        self.profiles.iter().map(|p| p.eps).collect()
    }

    /// Profile with the largest center value (the pointwise largest solution).
    pub fn largest(&self) -> Option<&RadialProfile> {
        self.profiles.last()
    }
}

/// Scans the default window `[1e−3, max(1e2, 2C)]` and refines every sign change.
pub fn solve_dirichlet_radial(n: usize, m: f64, c: f64) -> Result<DirichletRoots> {
    let window = EpsWindow { hi: (2.0 * c).max(1e2), ..EpsWindow::default() };
    solve_dirichlet_radial_in(n, m, c, window)
}

pub fn solve_dirichlet_radial_in(n: usize, m: f64, c: f64, window: EpsWindow) -> Result<DirichletRoots> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("boundary value must be positive, got {c}")));
    }
    window.validate()?;
    let eps = window.points();
    let s = scan(n, m, &eps)?;
    let mut brackets = Vec::new();
    for i in 0..eps.len() - 1 {
        let (fa, fb) = (s[i] - c, s[i + 1] - c);
        if fa == 0.0 {
            brackets.push((eps[i], eps[i]));
        } else if fa * fb < 0.0 {
            brackets.push((eps[i], eps[i + 1]));
        }
    }
    if s[eps.len() - 1] == c {
        brackets.push((eps[eps.len() - 1], eps[eps.len() - 1]));
    }
    let roots: Vec<f64> = brackets
        .par_iter()
        .map(|&(a, b)| bisect_root(n, m, c, a, b))
        .collect::<Result<_>>()?;
    let profiles = roots
        .into_par_iter()
        .map(|e| integrate_radial(e, n, m, 1.0, SHOOT_TOL))
        .collect::<Result<Vec<_>>>()?;
    Ok(DirichletRoots { c, window, profiles })
}

fn bisect_root(n: usize, m: f64, c: f64, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(a);
    }
    let (mut lo, mut hi) = (a.ln(), b.ln());
    let mut flo = shooting_map(n, m, a)? - c;
    let mut best = (a, flo.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = shooting_map(n, m, mid.exp())? - c;
        if fm.abs() < best.1 {
            best = (mid.exp(), fm.abs());
        }
        if fm.abs() <= 0.1 * ROOT_TOL || hi - lo < 1e-15 {
            break;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BifurcationScan {
    pub n: usize,
    pub m: f64,
    pub window: EpsWindow,
    pub eps: Vec<f64>,
    pub s: Vec<f64>,
    pub c1: f64,
    pub eps_c1: f64,
    pub c2: f64,
    pub eps_c2: f64,
    pub c1_on_boundary: bool,
    pub c2_on_boundary: bool,
    pub warnings: Vec<String>,
}

impl BifurcationScan {
    /// Number of sign changes of `S − level` across the samples.
    pub fn crossings(&self, level: f64) -> usize {
        count_crossings(&self.s, level)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,S")?;
        for (e, s) in self.eps.iter().zip(&self.s) {
            writeln!(w, "{e:.17e},{s:.17e}")?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "C1 = {:.12}", self.c1);
        let _ = writeln!(s, "C2 = {:.12}", self.c2);
        let _ = writeln!(s, "eps_C1 = {:e}", self.eps_c1);
        let _ = writeln!(s, "eps_C2 = {:e}", self.eps_c2);
        let _ = writeln!(s, "window = [{:e}, {:e}]", self.window.lo, self.window.hi);
        let _ = writeln!(s, "samples = {}", self.window.samples);
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {w}");
        }
        s
    }
}

fn count_crossings(s: &[f64], level: f64) -> usize {
    s.windows(2).filter(|w| (w[0] - level) * (w[1] - level) < 0.0).count()
}

/// Golden-section search on ln ε; `sign = 1` minimizes S, `sign = −1` maximizes it.
fn golden(n: usize, m: f64, a: f64, b: f64, sign: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a.ln(), b.ln());
    let f = |x: f64| shooting_map(n, m, x.exp()).map(|v| sign * v);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..80 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let (x, v) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    Ok((x.exp(), sign * v))
}

/// Estimates the levels above which the Dirichlet problem on B₁ is solvable (C1)
/// and uniquely solvable (C2), relative to the sampled window.
pub fn bifurcation_constants(n: usize, m: f64, window: EpsWindow) -> Result<BifurcationScan> {
    window.validate()?;
    let mut warnings = Vec::new();
    if window.lo > 0.01 || window.hi < 10.0 {
        warnings.push(format!("window [{:e}, {:e}] does not contain [0.01, 10]", window.lo, window.hi));
    }
    let eps = window.points();
    let s = scan(n, m, &eps)?;
    let k = eps.len();

    let i1 = (0..k).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
    let c1_on_boundary = i1 == 0 || i1 == k - 1;
    let (mut eps_c1, mut c1) = (eps[i1], s[i1]);
    if c1_on_boundary {
        warnings.push(format!("minimum of S at window boundary ε = {:e}", eps[i1]));
    } else {
        let (e, v) = golden(n, m, eps[i1 - 1], eps[i1 + 1], 1.0)?;
        if v < c1 {
            eps_c1 = e;
            c1 = v;
        }
    }

    // Largest level still crossed at least twice. Crossing counts only change at
    // sample values, so probing just below each sample value is exhaustive.
    let mut best: Option<usize> = None;
    for j in 0..k {
        let level = s[j] - 1e-12 * s[j].abs().max(1.0);
        if count_crossings(&s, level) >= 2 && best.is_none_or(|b| s[j] > s[b]) {
            best = Some(j);
        }
    }
    let (mut c2, mut eps_c2, mut c2_on_boundary) = (c1, eps_c1, c1_on_boundary);
    if let Some(j) = best {
        c2 = s[j];
        eps_c2 = eps[j];
        if j == 0 || j == k - 1 {
            c2_on_boundary = true;
            warnings.push(format!("C2 level attained at window boundary ε = {:e}", eps[j]));
        } else if s[j] >= s[j - 1] && s[j] >= s[j + 1] {
            let (e, v) = golden(n, m, eps[j - 1], eps[j + 1], -1.0)?;
            if v > c2 {
                c2 = v;
                eps_c2 = e;
            }
        }
    }
    if c2 < c1 {
        c2 = c1;
    }
    Ok(BifurcationScan {
        n,
        m,
        window,
        eps,
        s,
        c1,
        eps_c1,
        c2,
        eps_c2,
        c1_on_boundary,
        c2_on_boundary,
        warnings,
    })
}

/// `sup |u(r) − r|` over the profile samples.
pub fn conical_deviation(profile: &RadialProfile) -> f64 {
    profile
        .r
        .iter()
        .zip(&profile.u)
        .map(|(r, u)| (u - r).abs())
        .fold(0.0, f64::max)
}

/// `r^{−m_rate} · sup_{r ≤ |x| ≤ 2r} |u − |x||` on a radial grid.
pub fn weighted_deviation(field: &Field, m_rate: f64, r: f64) -> Result<f64> {
    let g = field.grid();
    let (lo, hi) = match (g.r_inner(), g.r_outer()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Geometry("weighted deviation needs a radial grid".into())),
    };
    let slack = 1e-9 * g.h();
    if !(r > 0.0) || r < lo - slack || 2.0 * r > hi + slack {
        return Err(Error::Geometry(format!("[{r}, {}] not inside grid range [{lo}, {hi}]", 2.0 * r)));
    }
    let sup = (0..g.len())
        .filter(|&i| {
            let x = g.radius(i);
            x >= r - slack && x <= 2.0 * r + slack
        })
        .map(|i| (field.values()[i] - g.radius(i)).abs())
        .fold(0.0, f64::max);
    Ok(r.powf(-m_rate) * sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use std::sync::Arc;

    #[test]
    fn series_start_examples() {
        let (u, du) = series_start(1.0, 3, 2.0, 0.01).unwrap();
        assert!((u - (1.0 + 0.01f64.powi(2) / 3.0)).abs() < 1e-15);
        assert!((du - 0.02 / 3.0).abs() < 1e-15);
        let (u, _) = series_start(0.5, 7, 6.0, 0.001).unwrap();
        assert!((u - (0.5 + 6.0 * 1e-6 / (14.0 * 0.5))).abs() < 1e-15);
        assert_eq!(series_start(0.3, 5, 4.0, 0.0).unwrap(), (0.3, 0.0));
        assert!(matches!(series_start(0.01, 3, 2.0, 0.1), Err(Error::Precondition(_))));
    }

    #[test]
    fn profile_invariants() {
        for &(n, eps) in &[(3usize, 0.05), (7, 0.2), (2, 1.0)] {
            let p = integrate_radial(eps, n, (n - 1).max(1) as f64, 2.0, 1e-10).unwrap();
            assert_eq!(p.r[0], 0.0);
            assert!(p.r.windows(2).all(|w| w[1] > w[0]));
            assert!(p.u.iter().all(|&u| u > 0.0));
            assert!(p.du.iter().all(|&d| d >= 0.0));
            assert!((p.r_max() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tolerance_refinement() {
        let a = integrate_radial(0.1, 3, 2.0, 1.0, 1e-8).unwrap().u_end();
        let b = integrate_radial(0.1, 3, 2.0, 1.0, 1e-9).unwrap().u_end();
        assert!((a - b).abs() <= 1e-7);
    }

    #[test]
    fn near_constant_regime() {
        let s = shooting_map(3, 2.0, 10.0).unwrap();
        assert!(s >= 10.0 && s <= 10.0 + 2.0 / 60.0 * 1.01, "{s}");
        let big = shooting_map(3, 2.0, 1e4).unwrap();
        assert!((big / 1e4 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cone_is_an_exact_solution_of_the_rescaled_ode() {
        for n in 2..=9 {
            let rhs = Rhs { n1: n as f64 - 1.0, m: n as f64 - 1.0 };
            for &r in &[0.01, 0.3, 1.0, 5.0] {
                let f = rhs.eval(r, &[r, 1.0]);
                assert!(f[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermite_dense_output() {
        let stops: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let p = integrate_radial_through(0.3, 4, 3.0, &stops, 1e-11).unwrap();
        let q = integrate_radial(0.3, 4, 3.0, 1.0, 1e-11).unwrap();
        for &r in &stops {
            let i = p.r.iter().position(|&x| x == r).unwrap();
            let (u, du) = q.eval(r).unwrap();
            assert!((u - p.u[i]).abs() < 1e-9);
            assert!((du - p.du[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn homothety() {
        // u(Cr)/C solves the same equation with center ε/C.
        let (eps, c) = (0.1, 2.0);
        let p = integrate_radial(eps, 3, 2.0, 2.0, 1e-11).unwrap();
        let q = integrate_radial(eps / c, 3, 2.0, 1.0, 1e-11).unwrap();
        for k in 1..=20 {
            let r = k as f64 / 20.0;
            let lhs = p.eval(c * r).unwrap().0 / c;
            assert!((lhs - q.eval(r).unwrap().0).abs() < 1e-9);
        }
        // u(Cr) solves the equation with m replaced by C²m.
        let w = integrate_radial(eps, 3, 2.0 * c * c, 1.0, 1e-11).unwrap();
        for k in 1..=20 {
            let r = k as f64 / 20.0;
            assert!((p.eval(c * r).unwrap().0 - w.eval(r).unwrap().0).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_deviation_examples() {
        let g = Arc::new(Grid::build(&Domain::Ball { n: 3, radius: 1.0, r_inner: None }, 0.01).unwrap());
        let cone = Field::from_radial_fn(g.clone(), |r| r).unwrap();
        assert_eq!(weighted_deviation(&cone, 1.0, 0.25).unwrap(), 0.0);
        let bumped = Field::from_radial_fn(g.clone(), |r| r + r * r).unwrap();
        let v = weighted_deviation(&bumped, 2.0, 0.25).unwrap();
        assert!((v - 4.0).abs() < 1e-9);
        assert!(weighted_deviation(&cone, 1.0, 0.75).is_err());
    }

    #[test]
    fn weighted_deviation_decreases_with_eps() {
        let g = Arc::new(Grid::build(&Domain::Ball { n: 7, radius: 1.0, r_inner: None }, 0.01).unwrap());
        let at = |eps: f64| {
            let p = integrate_radial(eps, 7, 6.0, 1.0, 1e-10).unwrap();
            weighted_deviation(&p.to_field(g.clone()).unwrap(), 1.0, 0.5).unwrap()
        };
        let (a, b) = (at(0.1), at(0.05));
        assert!(b.is_finite() && b < a, "{b} !< {a}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config { cases: 24, ..Default::default() })]

        #[test]
        fn homothety_preserves_the_equation(n in 2usize..9, eps in 0.01f64..5.0, c in 0.3f64..4.0) {
            let m = (n - 1) as f64;
            let big = integrate_radial(eps, n, m, c, SHOOT_TOL).unwrap().u_end() / c;
            let small = shooting_map(n, m, eps / c).unwrap();
            proptest::prop_assert!((big - small).abs() <= 1e-7 * small.max(1.0));
        }

        #[test]
        fn profiles_increase_from_the_centre(n in 2usize..9, eps in 0.01f64..5.0) {
            let p = integrate_radial(eps, n, 1.0, 1.0, SHOOT_TOL).unwrap();
            proptest::prop_assert!(p.u.windows(2).all(|w| w[1] >= w[0]));
            proptest::prop_assert!(p.du.iter().all(|&d| d >= 0.0));
        }
    }
}
