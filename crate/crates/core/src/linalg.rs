//! Sparse operators and the linear solvers the PDE code runs on.
//!
//! Three solvers cover every system the lab assembles:
//! - tridiagonal elimination with partial pivoting for interval and radial grids,
//! - conjugate gradients for SPD systems on box grids,
//! - MINRES for symmetric indefinite systems (Newton steps near unstable solutions).

use crate::error::{Error, Result};

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds the operator from per-row `(column, value)` lists. Duplicate columns are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>, symmetric: bool) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range {ncols}");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let rows = diag.iter().enumerate().map(|(i, &d)| vec![(i, d)]).collect();
        Self::from_rows(diag.len(), rows, true)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Symmetry flag set at assembly time.
    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// Returns `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        assert!(self.is_square() && d.len() == self.nrows);
        let rows = (0..self.nrows)
            .map(|i| {
                let mut r: Vec<(usize, f64)> = self.row(i).collect();
                r.push((i, d[i]));
                r
            })
            .collect();
        Self::from_rows(self.ncols, rows, self.symmetric)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Largest |A_ij − A_ji| over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if j < self.nrows {
                    worst = worst.max((v - self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    /// Gershgorin lower bound on the spectrum.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.nrows)
            .map(|i| {
                let mut d = 0.0;
                let mut off = 0.0;
                for (j, v) in self.row(i) {
                    if j == i {
                        d += v;
                    } else {
                        off += v.abs();
                    }
                }
                d - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Band extraction when every entry satisfies |i − j| ≤ 1.
    pub fn tridiagonal(&self) -> Option<Tridiagonal> {
        if !self.is_square() {
            return None;
        }
        let n = self.nrows;
        let mut t = Tridiagonal {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
        };
        for i in 0..n {
            for (j, v) in self.row(i) {
                if j == i {
                    t.diag[i] = v;
                } else if j == i + 1 {
                    t.sup[i] = v;
                } else if j + 1 == i {
                    t.sub[j] = v;
                } else {
                    return None;
                }
            }
        }
        Some(t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        m
    }
}

/// Tridiagonal matrix; `sub[i] = A[i+1][i]`, `sup[i] = A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn shifted(&self, sigma: f64) -> Self {
        let mut t = self.clone();
        t.diag.iter_mut().for_each(|d| *d -= sigma);
        t
    }

    /// Gaussian elimination with partial pivoting (the LAPACK `gtsv` scheme).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut dl = self.sub.clone();
        let mut d = self.diag.clone();
        let mut du = self.sup.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = rhs.to_vec();
        let scale = d
            .iter()
            .chain(dl.iter())
            .chain(du.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * 1e-3;

        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i].abs() <= tiny {
                    return Err(Error::LinearSolve(format!("zero pivot in row {i}")));
                }
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                b[i + 1] -= fact * b[i];
                dl[i] = 0.0;
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i + 2 < n {
                    dl[i] = du[i + 1];
                    du[i + 1] = -fact * dl[i];
                }
                du[i] = temp;
                b.swap(i, i + 1);
                b[i + 1] -= fact * b[i];
            }
        }
        if d[n - 1].abs() <= tiny {
            return Err(Error::LinearSolve(format!("zero pivot in row {}", n - 1)));
        }
        // dl now holds the second superdiagonal produced by row swaps
        for i in 0..n.saturating_sub(2) {
            du2[i] = dl[i];
        }
        let mut x = b;
        x[n - 1] /= d[n - 1];
        if n > 1 {
            x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::LinearSolve("non-finite tridiagonal solution".into()))
        }
    }

    /// Number of eigenvalues below `sigma` for a symmetric tridiagonal matrix
    /// (negative pivots of the LDLᵀ factorisation of A − σI).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.len();
        let mut count = 0;
        let mut q = self.diag[0] - sigma;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let off = self.sup[i - 1] * self.sub[i - 1];
            let qq = if q == 0.0 { f64::EPSILON * (off.abs().sqrt() + 1.0) } else { q };
            q = self.diag[i] - sigma - off / qq;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }
}

#[derive(Debug, Clone)]
pub struct IterativeOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for SPD `op`. Fails on non-positive curvature.
pub fn conjugate_gradient(
    op: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    rtol: f64,
    max_iter: usize,
) -> Result<IterativeOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    if bnorm == 0.0 {
        return Ok(IterativeOutcome { x: vec![0.0; n], iterations: 0, rel_residual: 0.0 });
    }
    let ax = op.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rs.sqrt() <= rtol * bnorm {
            return Ok(IterativeOutcome { x, iterations: it, rel_residual: rs.sqrt() / bnorm });
        }
        op.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::LinearSolve(format!("CG breakdown: pᵀAp = {pap:e}")));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    let rel = rs.sqrt() / bnorm;
    if rel <= rtol {
        Ok(IterativeOutcome { x, iterations: max_iter, rel_residual: rel })
    } else {
        Err(Error::LinearSolve(format!("CG not converged after {max_iter} iterations (rel. residual {rel:e})")))
    }
}

/// MINRES for symmetric (possibly indefinite) `op`.
pub fn minres(op: &SparseOperator, b: &[f64], rtol: f64, max_iter: usize) -> Result<IterativeOutcome> {
    let n = b.len();
    let beta1 = norm(b);
    let mut x = vec![0.0; n];
    if beta1 == 0.0 {
        return Ok(IterativeOutcome { x, iterations: 0, rel_residual: 0.0 });
    }
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = b.to_vec();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0, 0.0);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    for it in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        op.mul_vec_into(&v, &mut y);
        if it >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..n {
            y[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        oldb = beta;
        beta = norm(&y);
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        if phibar <= rtol * beta1 || beta == 0.0 {
            return Ok(IterativeOutcome { x, iterations: it, rel_residual: phibar / beta1 });
        }
    }
    let rel = phibar / beta1;
    Err(Error::LinearSolve(format!("MINRES not converged after {max_iter} iterations (rel. residual {rel:e})")))
}

/// Structure hint for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Spd,
    SymmetricIndefinite,
}

/// Solves `op x = b`, using banded elimination when the operator is tridiagonal.
pub fn solve(op: &SparseOperator, b: &[f64], kind: SystemKind, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    if let Some(t) = op.tridiagonal() {
        return t.solve(b);
    }
    let max_iter = 20 * op.nrows() + 100;
    match kind {
        SystemKind::Spd => conjugate_gradient(op, b, x0, 1e-12, max_iter).map(|o| o.x),
        SystemKind::SymmetricIndefinite => minres(op, b, 1e-12, max_iter).map(|o| o.x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseOperator {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        SparseOperator::from_rows(n, rows, true)
    }

    fn laplace_2d(m: usize) -> SparseOperator {
        let idx = |i: usize, j: usize| i * m + j;
        let mut rows = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let mut r = vec![(idx(i, j), 4.0)];
                if i > 0 {
                    r.push((idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    r.push((idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    r.push((idx(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    r.push((idx(i, j + 1), -1.0));
                }
                rows.push(r);
            }
        }
        SparseOperator::from_rows(m * m, rows, true)
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let op = SparseOperator::from_rows(2, vec![vec![(0, 1.0), (0, 2.0)], vec![(1, 1.0)]], true);
        assert_eq!(op.get(0, 0), 3.0);
        assert_eq!(op.nnz(), 2);
    }

    #[test]
    fn tridiagonal_solve_matches_matvec() {
        let op = laplace_1d(50).add_diagonal(&vec![0.3; 50]);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = op.mul_vec(&x);
        let sol = op.tridiagonal().unwrap().solve(&b).unwrap();
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-11);
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_diagonal() {
        let t = Tridiagonal { sub: vec![1.0, 1.0], diag: vec![0.0, 0.0, 1.0], sup: vec![1.0, 1.0] };
        let x = [1.0, -2.0, 3.0];
        let b = [x[1], x[0] + x[2], x[1] + x[2]];
        let sol = t.solve(&b).unwrap();
        for (a, e) in sol.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13, "{sol:?}");
        }
    }

    #[test]
    fn singular_tridiagonal_is_reported() {
        let t = Tridiagonal { sub: vec![1.0], diag: vec![1.0, 1.0], sup: vec![1.0] };
        assert!(t.solve(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn cg_solves_2d_poisson() {
        let op = laplace_2d(12);
        let x: Vec<f64> = (0..144).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let b = op.mul_vec(&x);
        let out = conjugate_gradient(&op, &b, None, 1e-13, 1000).unwrap();
        for (a, e) in out.x.iter().zip(&x) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_rejects_indefinite() {
        let op = laplace_2d(6).add_diagonal(&vec![-3.0; 36]);
        let b = vec![1.0; 36];
        assert!(conjugate_gradient(&op, &b, None, 1e-12, 500).is_err());
    }

    #[test]
    fn minres_solves_indefinite() {
        let op = laplace_2d(8).add_diagonal(&vec![-2.5; 64]);
        let x: Vec<f64> = (0..64).map(|i| (i as f64).cos()).collect();
        let b = op.mul_vec(&x);
        let out = minres(&op, &b, 1e-13, 2000).unwrap();
        for (a, e) in out.x.iter().zip(&x) {
            assert!((a - e).abs() < 1e-8, "{a} vs {e}");
        }
    }

    #[test]
    fn sturm_count_brackets_known_eigenvalues() {
        // eigenvalues of tridiag(-1,2,-1) of size n: 2 - 2cos(kπ/(n+1))
        let n = 20;
        let t = laplace_1d(n).tridiagonal().unwrap();
        let lam1 = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert_eq!(t.count_below(lam1 - 1e-9), 0);
        assert_eq!(t.count_below(lam1 + 1e-9), 1);
        assert_eq!(t.count_below(4.0), n);
    }

    #[test]
    fn gershgorin_bounds_spectrum() {
        let op = laplace_1d(10).add_diagonal(&vec![-1.0; 10]);
        assert!(op.gershgorin_lower() <= -1.0 + 1e-12);
    }
}
