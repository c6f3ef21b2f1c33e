//! Slow reference implementations used only to validate the production paths.
//!
//! Nothing here calls into `radial`, `linalg` solvers or the grid quadrature weights.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridKind};
use crate::linalg::SparseOperator;
use crate::radial::RadialProfile;

pub const DENSE_CAP: usize = 2000;
pub const QUADRATURE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub method: String,
    pub params: String,
    pub runtime_secs: f64,
}

fn ball_volume(n: usize) -> f64 {
    // ω_n = π^{n/2} / Γ(n/2 + 1), with Γ evaluated by its half-integer product
    let pi = std::f64::consts::PI;
    let mut gamma = if n % 2 == 0 { 1.0 } else { pi.sqrt() };
    let mut x = if n % 2 == 0 { 1.0 } else { 0.5 };
    while x < n as f64 / 2.0 + 1.0 - 1e-9 {
        gamma *= x;
        x += 1.0;
    }
    pi.powf(n as f64 / 2.0) / gamma
}

/// Classical RK4 with a fixed step from the center expansion.
pub fn oracle_integrate_radial(eps: f64, n: usize, m: f64, r_max: f64, step: f64) -> Result<RadialProfile> {
    if !(step > 0.0) || step > 1e-5 {
        return Err(Error::Precondition(format!("oracle step must be in (0, 1e-5], got {step}")));
    }
    if !(eps > 0.0) || !(r_max > step) {
        return Err(Error::InvalidArgument(format!("bad oracle arguments ε={eps}, r_max={r_max}")));
    }
    let nf = n as f64;
    let f = |r: f64, u: f64, v: f64| -> (f64, f64) { (v, m / u - (nf - 1.0) * v / r) };
    let steps = (r_max / step).round() as usize;
    let h = r_max / steps as f64;
    let mut r = h;
    let mut u = eps + m * h * h / (2.0 * nf * eps);
    let mut v = m * h / (nf * eps);
    let mut prof = RadialProfile {
        n,
        m,
        eps,
        r: vec![0.0, r],
        u: vec![eps, u],
        du: vec![0.0, v],
        tol: h,
        method: "rk4-fixed".into(),
    };
    for i in 1..steps {
        let (a1, b1) = f(r, u, v);
        let (a2, b2) = f(r + h / 2.0, u + h / 2.0 * a1, v + h / 2.0 * b1);
        let (a3, b3) = f(r + h / 2.0, u + h / 2.0 * a2, v + h / 2.0 * b2);
        let (a4, b4) = f(r + h, u + h * a3, v + h * b3);
        u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        r = (i + 1) as f64 * h;
        if !(u > 0.0) {
            return Err(Error::NonFinite(format!("oracle profile lost positivity at r = {r}")));
        }
        prof.r.push(r);
        prof.u.push(u);
        prof.du.push(v);
    }
    Ok(prof)
}

/// Value at radius 1 of the 1-D solution of `u'' = 1/u`, `u(0) = a`, `u'(0) = 0`.
pub fn oracle_shoot_1d(a: f64, step: f64) -> f64 {
    let steps = (1.0 / step).round() as usize;
    let h = 1.0 / steps as f64;
    let (mut u, mut v) = (a, 0.0f64);
    for _ in 0..steps {
        let (a1, b1) = (v, 1.0 / u);
        let (a2, b2) = (v + h / 2.0 * b1, 1.0 / (u + h / 2.0 * a1));
        let (a3, b3) = (v + h / 2.0 * b2, 1.0 / (u + h / 2.0 * a2));
        let (a4, b4) = (v + h * b3, 1.0 / (u + h * a3));
        u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    u
}

/// Center values `u(0)` of the even solutions of `u'' = 1/u` on [−1, 1] with `u(±1) = c`,
/// by scanning `a ∈ [1e−3, c]` and bisecting each sign change.
pub fn oracle_symmetric_1d(c: f64) -> Vec<f64> {
    let step = 1e-4;
    let k = 2000;
    let grid: Vec<f64> = (0..=k).map(|i| 1e-3 * (c / 1e-3f64).powf(i as f64 / k as f64)).collect();
    let vals: Vec<f64> = grid.iter().map(|&a| oracle_shoot_1d(a, step) - c).collect();
    let mut roots = Vec::new();
    for i in 0..k {
        if vals[i] * vals[i + 1] < 0.0 {
            let (mut lo, mut hi, flo) = (grid[i], grid[i + 1], vals[i]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let fm = oracle_shoot_1d(mid, step) - c;
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    roots
}

fn sturm_count(diag: &[f64], offsq: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let prev = if i == 0 { 0.0 } else { offsq[i - 1] };
        let denom = if q == 0.0 { 1e-300 } else { q };
        q = diag[i] - x - if i == 0 { 0.0 } else { prev / denom };
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn jacobi_min_eig(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let total: f64 = a.iter().flatten().map(|v| v * v).sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue by dense reduction: Sturm bisection for tridiagonal
/// operators (using products of symmetric off-diagonal pairs), cyclic Jacobi otherwise.
pub fn oracle_dense_eig(op: &SparseOperator) -> Result<OracleResult> {
    let start = Instant::now();
    let n = op.nrows();
    if !op.is_square() {
        return Err(Error::InvalidArgument("operator is not square".into()));
    }
    if n > DENSE_CAP {
        return Err(Error::SizeCap(format!("{n} unknowns exceed the dense oracle cap {DENSE_CAP}")));
    }
    let dense = op.to_dense();
    let banded = (0..n).all(|i| (0..n).all(|j| i.abs_diff(j) <= 1 || dense[i][j] == 0.0));
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || dense[i][j] == 0.0));
    let (value, method) = if diagonal {
        ((0..n).map(|i| dense[i][i]).fold(f64::INFINITY, f64::min), "diagonal")
    } else if banded {
        let diag: Vec<f64> = (0..n).map(|i| dense[i][i]).collect();
        let offsq: Vec<f64> = (0..n.saturating_sub(1)).map(|i| dense[i][i + 1] * dense[i + 1][i]).collect();
        let radius = (0..n)
            .map(|i| {
                let l = if i > 0 { dense[i][i - 1].abs().max(dense[i - 1][i].abs()) } else { 0.0 };
                let r = if i + 1 < n { dense[i][i + 1].abs().max(dense[i + 1][i].abs()) } else { 0.0 };
                (diag[i] - l - r, diag[i] + l + r)
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, (a, b)| (acc.0.min(a), acc.1.max(b)));
        let (mut lo, mut hi) = (radius.0 - 1.0, radius.1 + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sturm_count(&diag, &offsq, mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(lo.abs()).max(1e-300) {
                break;
            }
        }
        (0.5 * (lo + hi), "sturm-bisection")
    } else {
        let sym: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (dense[i][j] + dense[j][i])).collect()).collect();
        (jacobi_min_eig(sym), "dense-jacobi")
    };
    Ok(OracleResult {
        value,
        method: method.into(),
        params: format!("n = {n}"),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pk = if k == 0 { 1.0 } else if k == 1 { x } else { p1 };
            let pkm1 = if k == 1 { 1.0 } else { p0 };
            dp = k as f64 * (x * pk - pkm1) / (x * x - 1.0);
            let dx = pk / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn new() -> Self {
        Kahan { sum: 0.0, c: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Direct compensated summation of the nodal rule: Cartesian product trapezoid weights,
/// radial hat functions integrated against the sphere measure by Gauss–Legendre.
pub fn oracle_quadrature(field: &Field, exponent: f64) -> Result<OracleResult> {
    let start = Instant::now();
    let g = field.grid();
    if g.len() > QUADRATURE_CAP {
        return Err(Error::SizeCap(format!("{} nodes exceed the quadrature oracle cap", g.len())));
    }
    let vals: Vec<f64> = field
        .values()
        .iter()
        .map(|&u| if exponent == 0.0 { 1.0 } else { u.powf(exponent) })
        .collect();
    let h = g.h();
    let mut acc = Kahan::new();
    match g.kind() {
        GridKind::Radial => {
            let n = g.dim();
            let area = n as f64 * ball_volume(n);
            let gl = gauss_legendre(n / 2 + 3);
            for i in 0..g.len() - 1 {
                let a = g.radius(i);
                let b = g.radius(i + 1);
                for &(s, w) in &gl {
                    let r = a + (b - a) * s;
                    let jac = area * r.powi(n as i32 - 1) * (b - a) * w;
                    acc.add(jac * ((1.0 - s) * vals[i] + s * vals[i + 1]));
                }
            }
            if g.has_regular_center() {
                acc.add(ball_volume(n) * g.radius(0).powi(n as i32) * vals[0]);
            }
        }
        GridKind::Interval | GridKind::Box => {
            for (i, v) in vals.iter().enumerate() {
                let mut w = 1.0;
                for (k, &ix) in g.multi_index(i).iter().enumerate() {
                    w *= if ix == 0 || ix + 1 == g.shape()[k] { h / 2.0 } else { h };
                }
                acc.add(w * v);
            }
        }
    }
    if !acc.sum.is_finite() {
        return Err(Error::NonFinite(format!("oracle quadrature with exponent {exponent}")));
    }
    Ok(OracleResult {
        value: acc.sum,
        method: "kahan-gauss-legendre".into(),
        params: format!("nodes = {}, exponent = {exponent}", g.len()),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// High-order composite Gauss–Legendre value of `∫_{a ≤ |x| ≤ b} f(|x|) dx` in ℝⁿ.
pub fn oracle_radial_integral(n: usize, a: f64, b: f64, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
    let gl = gauss_legendre(12);
    let area = n as f64 * ball_volume(n);
    let mut acc = Kahan::new();
    let h = (b - a) / pieces as f64;
    for p in 0..pieces {
        let lo = a + p as f64 * h;
        for &(s, w) in &gl {
            let r = lo + h * s;
            acc.add(area * r.powi(n as i32 - 1) * f(r) * h * w);
        }
    }
    acc.sum
}
