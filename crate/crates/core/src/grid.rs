//! Uniform grids, nodal fields, the discrete Laplacian and quadrature.
//!
//! Node ordering is lexicographic with axis 0 slowest. Radial grids store a
//! 1-D mesh in r together with the ambient dimension n.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseOperator;

/// Volume of the unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// Area of the unit sphere in ℝⁿ (n·ω_n).
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Interval,
    Box,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    /// The cube `[lo, hi]^dim`.
    Box { dim: usize, lo: f64, hi: f64 },
    /// Radial ball of radius `radius`. Without `r_inner` the innermost node is
    /// placed at the smallest lattice radius ≥ max(1/2, n/2)·h.
    Ball { n: usize, radius: f64, r_inner: Option<f64> },
    Annulus { n: usize, r_inner: f64, r_outer: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    n: usize,
    h: f64,
    shape: Vec<usize>,
    lower: Vec<f64>,
    regular_center: bool,
    boundary: Vec<bool>,
    interior: Vec<usize>,
    slot: Vec<Option<usize>>,
    weights: Vec<f64>,
}

fn cell_count(len: f64, h: f64) -> Result<usize> {
    let c = len / h;
    let k = c.round();
    if (c - k).abs() > 1e-8 * c.max(1.0) {
        return Err(Error::InvalidGrid(format!("spacing {h} does not divide length {len}")));
    }
    if k < 2.0 {
        return Err(Error::InvalidGrid(format!("fewer than 3 nodes per axis (length {len}, h {h})")));
    }
    Ok(k as usize)
}

/// ∫₀¹ (1−s)(a+hs)^k ds and ∫₀¹ s(a+hs)^k ds by a sum of nonnegative terms.
fn hat_moments(a: f64, h: f64, k: usize) -> (f64, f64) {
    let mut left = 0.0;
    let mut right = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        let term = binom * a.powi((k - j) as i32) * h.powi(j as i32);
        right += term / (j as f64 + 2.0);
        left += term / ((j as f64 + 1.0) * (j as f64 + 2.0));
        binom = binom * (k - j) as f64 / (j as f64 + 1.0);
    }
    (left, right)
}

impl Grid {
    pub fn build(domain: &Domain, h: f64) -> Result<Grid> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        match *domain {
            Domain::Interval { a, b } => {
                if !(b > a) {
                    return Err(Error::InvalidGrid(format!("empty interval [{a}, {b}]")));
                }
                let k = cell_count(b - a, h)?;
                Ok(Self::cartesian(GridKind::Interval, 1, h, k + 1, a))
            }
            Domain::Box { dim, lo, hi } => {
                if !(1..=3).contains(&dim) {
                    return Err(Error::InvalidGrid(format!("box dimension must be 1..=3, got {dim}")));
                }
                if !(hi > lo) {
                    return Err(Error::InvalidGrid(format!("empty box [{lo}, {hi}]")));
                }
                let k = cell_count(hi - lo, h)?;
                Ok(Self::cartesian(GridKind::Box, dim, h, k + 1, lo))
            }
            Domain::Ball { n, radius, r_inner } => {
                check_dim(n)?;
                if !(radius > 0.0) {
                    return Err(Error::InvalidGrid(format!("ball radius must be positive, got {radius}")));
                }
                let r0 = match r_inner {
                    Some(r0) if r0 > 0.0 => {
                        if r0 >= radius {
                            return Err(Error::InvalidGrid(format!("r0 = {r0} must be below R = {radius}")));
                        }
                        r0
                    }
                    Some(r0) if r0 < 0.0 => {
                        return Err(Error::InvalidGrid(format!("negative inner radius {r0}")));
                    }
                    _ => {
                        let r_min = (0.5f64).max(n as f64 / 2.0) * h;
                        let k = ((radius - r_min) / h + 1e-9).floor();
                        if k < 2.0 {
                            return Err(Error::InvalidGrid(format!("radius {radius} too small for h {h}")));
                        }
                        radius - k * h
                    }
                };
                let k = cell_count(radius - r0, h)?;
                Ok(Self::radial(n, h, k + 1, r0, true))
            }
            Domain::Annulus { n, r_inner, r_outer } => {
                check_dim(n)?;
                if !(r_inner > 0.0) {
                    return Err(Error::InvalidGrid(format!("annulus inner radius must be positive, got {r_inner}")));
                }
                if r_inner >= r_outer {
                    return Err(Error::InvalidGrid(format!("r0 = {r_inner} must be below R = {r_outer}")));
                }
                let k = cell_count(r_outer - r_inner, h)?;
                Ok(Self::radial(n, h, k + 1, r_inner, false))
            }
        }
    }

    fn cartesian(kind: GridKind, dim: usize, h: f64, per_axis: usize, lo: f64) -> Grid {
        let shape = vec![per_axis; dim];
        let total = per_axis.pow(dim as u32);
        let mut g = Grid {
            kind,
            n: dim,
            h,
            shape,
            lower: vec![lo; dim],
            regular_center: false,
            boundary: vec![false; total],
            interior: Vec::new(),
            slot: vec![None; total],
            weights: vec![0.0; total],
        };
        for node in 0..total {
            let idx = g.multi_index(node);
            g.boundary[node] = idx.iter().any(|&i| i == 0 || i + 1 == per_axis);
            g.weights[node] = idx
                .iter()
                .map(|&i| if i == 0 || i + 1 == per_axis { 0.5 * h } else { h })
                .product();
        }
        g.finish();
        g
    }

    fn radial(n: usize, h: f64, count: usize, r0: f64, ball: bool) -> Grid {
        let mut boundary = vec![false; count];
        boundary[count - 1] = true;
        if !ball {
            boundary[0] = true;
        }
        let area = unit_sphere_area(n);
        let mut weights = vec![0.0; count];
        for i in 0..count - 1 {
            let a = r0 + i as f64 * h;
            let (left, right) = hat_moments(a, h, n - 1);
            weights[i] += area * h * left;
            weights[i + 1] += area * h * right;
        }
        if ball {
            weights[0] += unit_ball_volume(n) * r0.powi(n as i32);
        }
        let mut g = Grid {
            kind: GridKind::Radial,
            n,
            h,
            shape: vec![count],
            lower: vec![r0],
            regular_center: ball,
            boundary,
            interior: Vec::new(),
            slot: vec![None; count],
            weights,
        };
        g.finish();
        g
    }

    fn finish(&mut self) {
        self.interior = (0..self.boundary.len()).filter(|&i| !self.boundary[i]).collect();
        for (k, &node) in self.interior.iter().enumerate() {
            self.slot[node] = Some(k);
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn is_radial(&self) -> bool {
        self.kind == GridKind::Radial
    }

    /// True for radial balls, whose innermost node is an interior node with a
    /// symmetric (regular-center) stencil.
    pub fn has_regular_center(&self) -> bool {
        self.regular_center
    }

    /// Innermost radius of a radial grid.
    pub fn r_inner(&self) -> Option<f64> {
        self.is_radial().then(|| self.lower[0])
    }

    pub fn r_outer(&self) -> Option<f64> {
        self.is_radial().then(|| self.radius(self.len() - 1))
    }

    /// Lower corner of a Cartesian grid (the inner radius for radial grids).
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.shape)
            .map(|(l, &s)| l + (s - 1) as f64 * self.h)
            .collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.boundary[i]).collect()
    }

    /// Position of `node` in the interior ordering, if interior.
    pub fn interior_slot(&self, node: usize) -> Option<usize> {
        self.slot[node]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        let mut rem = node;
        for k in (0..self.shape.len()).rev() {
            idx[k] = rem % self.shape[k];
            rem /= self.shape[k];
        }
        idx
    }

    pub fn node_at(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    /// Coordinates of a node: `[r]` on radial grids.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .zip(&self.lower)
            .map(|(&i, &l)| l + i as f64 * self.h)
            .collect()
    }

    /// Distance of a node from the origin.
    pub fn radius(&self, node: usize) -> f64 {
        if self.is_radial() {
            self.lower[0] + node as f64 * self.h
        } else {
            self.coords(node).iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.radius(i)).collect()
    }

    /// Quadrature weights; `Σ w_i f(x_i)` approximates `∫_Ω f`.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Stencil of the discrete Laplacian at an interior node as `(node, coefficient)` pairs.
    pub fn stencil(&self, node: usize) -> Vec<(usize, f64)> {
        debug_assert!(!self.boundary[node]);
        let h2 = self.h * self.h;
        if self.is_radial() {
            if node == 0 {
                let (r0, r1) = (self.radius(0), self.radius(1));
                let c = 2.0 * self.n as f64 / (r1 * r1 - r0 * r0);
                return vec![(0, -c), (1, c)];
            }
            let r = self.radius(node);
            let drift = (self.n as f64 - 1.0) / (2.0 * r * self.h);
            return vec![(node - 1, 1.0 / h2 - drift), (node, -2.0 / h2), (node + 1, 1.0 / h2 + drift)];
        }
        let mut out = Vec::with_capacity(2 * self.n + 1);
        out.push((node, -2.0 * self.n as f64 / h2));
        for axis in 0..self.n {
            let s = self.stride(axis);
            out.push((node - s, 1.0 / h2));
            out.push((node + s, 1.0 / h2));
        }
        out
    }

    /// Edges used by the gradient energy: `(a, b, weight)` such that
    /// `½ Σ weight·((u_b − u_a)/h)²` approximates `½∫|Du|²`.
    pub fn energy_edges(&self) -> Vec<(usize, usize, f64)> {
        let mut edges = Vec::new();
        if self.is_radial() {
            let w = unit_ball_volume(self.n);
            for i in 0..self.len() - 1 {
                let (a, b) = (self.radius(i), self.radius(i + 1));
                edges.push((i, i + 1, w * (b.powi(self.n as i32) - a.powi(self.n as i32))));
            }
            return edges;
        }
        for node in 0..self.len() {
            let idx = self.multi_index(node);
            for axis in 0..self.n {
                if idx[axis] + 1 == self.shape[axis] {
                    continue;
                }
                let mut w = self.h;
                for (k, &i) in idx.iter().enumerate() {
                    if k != axis {
                        w *= if i == 0 || i + 1 == self.shape[k] { 0.5 * self.h } else { self.h };
                    }
                }
                edges.push((node, node + self.stride(axis), w));
            }
        }
        edges
    }

    /// The same domain with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Grid> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {factor}")));
        }
        let mut g = self.clone();
        g.h *= factor;
        g.lower.iter_mut().for_each(|l| *l *= factor);
        let jac = factor.powi(self.n as i32);
        g.weights.iter_mut().for_each(|w| *w *= jac);
        Ok(g)
    }

    /// Radial sub-grid consisting of the nodes with `r_lo ≤ r ≤ r_hi`.
    /// A ball keeps its regular center when `r_lo` is at or below the inner radius.
    pub fn radial_subgrid(&self, r_lo: f64, r_hi: f64) -> Result<(Grid, usize)> {
        if !self.is_radial() {
            return Err(Error::InvalidGrid("radial sub-grid of a Cartesian grid".into()));
        }
        let tol = 1e-9 * self.h;
        let first = (0..self.len()).find(|&i| self.radius(i) >= r_lo - tol);
        let last = (0..self.len()).rev().find(|&i| self.radius(i) <= r_hi + tol);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) if l >= f + 2 => (f, l),
            _ => return Err(Error::InvalidGrid(format!("sub-grid [{r_lo}, {r_hi}] has fewer than 3 nodes"))),
        };
        let ball = self.regular_center && first == 0;
        Ok((Self::radial(self.n, self.h, last - first + 1, self.radius(first), ball), first))
    }

    /// Structured-text header: kind, n, h, r0 and extents.
    pub fn header(&self) -> String {
        let mut s = String::new();
        let kind = match self.kind {
            GridKind::Interval => "interval",
            GridKind::Box => "box",
            GridKind::Radial if self.regular_center => "radial-ball",
            GridKind::Radial => "radial-annulus",
        };
        let _ = writeln!(s, "kind = {kind}");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "h = {:e}", self.h);
        let r0 = self.r_inner().unwrap_or(0.0);
        let _ = writeln!(s, "r0 = {r0:e}");
        let ext: Vec<String> = self
            .lower
            .iter()
            .zip(self.upper())
            .map(|(l, u)| format!("[{l:e}, {u:e}]"))
            .collect();
        let _ = writeln!(s, "extents = {}", ext.join(" x "));
        let _ = writeln!(s, "nodes = {}", self.len());
        let _ = writeln!(s, "interior = {}", self.interior.len());
        s
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n > 64 {
        return Err(Error::InvalidGrid(format!("ambient dimension must be in 1..=64, got {n}")));
    }
    Ok(())
}

/// Discrete Laplacian split into the square interior block and the coupling to boundary nodes.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    interior: SparseOperator,
    coupling: SparseOperator,
}

impl DiscreteLaplacian {
    /// Square operator over interior nodes.
    pub fn operator(&self) -> &SparseOperator {
        &self.interior
    }

    /// Interior rows × all nodes, boundary columns only.
    pub fn coupling(&self) -> &SparseOperator {
        &self.coupling
    }

    /// `(Δ_h u)` at interior nodes for a full nodal vector.
    pub fn apply(&self, grid: &Grid, u: &[f64]) -> Vec<f64> {
        let ui: Vec<f64> = grid.interior_nodes().iter().map(|&i| u[i]).collect();
        let mut out = self.interior.mul_vec(&ui);
        let b = self.coupling.mul_vec(u);
        out.iter_mut().zip(b).for_each(|(o, v)| *o += v);
        out
    }

    /// Affine contribution of boundary values to interior rows.
    pub fn boundary_term(&self, u: &[f64]) -> Vec<f64> {
        self.coupling.mul_vec(u)
    }
}

pub fn assemble_laplacian(grid: &Grid) -> DiscreteLaplacian {
    let mut rows = Vec::with_capacity(grid.interior_nodes().len());
    let mut brows = Vec::with_capacity(grid.interior_nodes().len());
    for &node in grid.interior_nodes() {
        let mut r = Vec::new();
        let mut b = Vec::new();
        for (j, c) in grid.stencil(node) {
            match grid.interior_slot(j) {
                Some(k) => r.push((k, c)),
                None => b.push((j, c)),
            }
        }
        rows.push(r);
        brows.push(b);
    }
    let symmetric = !grid.is_radial();
    DiscreteLaplacian {
        interior: SparseOperator::from_rows(grid.interior_nodes().len(), rows, symmetric),
        coupling: SparseOperator::from_rows(grid.len(), brows, false),
    }
}

/// Nodal values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    nonnegative: bool,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {i}")));
        }
        Ok(Field { grid, values, nonnegative: false })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Field {
        let values = vec![c; grid.len()];
        Field { grid, values, nonnegative: false }
    }

    /// Samples `f` at node coordinates (`[r]` on radial grids).
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Field::new(grid, values)
    }

    /// Samples `f(|x|)`.
    pub fn from_radial_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Field> {
        let values = (0..grid.len()).map(|i| f(grid.radius(i))).collect();
        Field::new(grid, values)
    }

    /// Flags a field that may touch zero (a probe of a singular limit rather than a solution).
    pub fn mark_nonnegative(mut self) -> Field {
        self.nonnegative = true;
        self
    }

    pub fn is_flagged_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior_nodes().iter().map(|&i| self.values[i]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Copy of `self` with boundary values taken from `data`.
    pub fn with_boundary_from(&self, data: &Field) -> Result<Field> {
        if data.grid.len() != self.grid.len() {
            return Err(Error::InvalidField("boundary data lives on a different grid".into()));
        }
        let mut v = self.values.clone();
        for i in self.grid.boundary_nodes() {
            v[i] = data.values[i];
        }
        Field::new(self.grid.clone(), v)
    }

    /// Replaces interior values, keeping boundary values.
    pub fn with_interior(&self, interior: &[f64]) -> Result<Field> {
        let mut v = self.values.clone();
        for (k, &i) in self.grid.interior_nodes().iter().enumerate() {
            v[i] = interior[k];
        }
        Field::new(self.grid.clone(), v)
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn value_at_radius(&self, r: f64) -> Option<f64> {
        if !self.grid.is_radial() {
            return None;
        }
        let x = (r - self.grid.lower[0]) / self.grid.h;
        if x < -1e-9 || x > (self.grid.len() - 1) as f64 + 1e-9 {
            return None;
        }
        let i = (x.floor().max(0.0) as usize).min(self.grid.len() - 2);
        let t = x - i as f64;
        Some((1.0 - t) * self.values[i] + t * self.values[i + 1])
    }

    /// CSV with one row per node: coordinates then value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = if self.grid.is_radial() {
            vec!["r".into()]
        } else {
            (0..self.grid.dim()).map(|k| format!("x{k}")).collect()
        };
        writeln!(w, "{},value", cols.join(","))?;
        for i in 0..self.grid.len() {
            let c: Vec<String> = self.grid.coords(i).iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{},{:.17e}", c.join(","), self.values[i])?;
        }
        Ok(())
    }
}

/// Quadrature of `∫ u^p` over the grid domain.
pub fn integrate(field: &Field, weight_exponent: f64) -> Result<f64> {
    let p = weight_exponent;
    let w = field.grid.quadrature_weights();
    let mut sum = 0.0;
    for (i, (&u, &wi)) in field.values.iter().zip(w).enumerate() {
        let v = if p == 0.0 {
            1.0
        } else if p == 1.0 {
            u
        } else {
            if p < 0.0 && u == 0.0 {
                return Err(Error::NonFinite(format!("u = 0 at node {i} with exponent {p}")));
            }
            u.powf(p)
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("u^{p} not finite at node {i} (u = {u})")));
        }
        sum += wi * v;
    }
    Ok(sum)
}

/// `∫ f(x, u)` with the grid quadrature.
pub fn integrate_with(field: &Field, f: impl Fn(&[f64], f64) -> f64) -> f64 {
    let g = &field.grid;
    g.quadrature_weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| w * f(&g.coords(i), field.values[i]))
        .sum()
}

/// `½∫|D_h u|²` from one-sided differences along grid edges.
pub fn dirichlet_energy(field: &Field) -> f64 {
    let h = field.grid.h;
    field
        .grid
        .energy_edges()
        .iter()
        .map(|&(a, b, w)| {
            let d = (field.values[b] - field.values[a]) / h;
            0.5 * w * d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(d: Domain, h: f64) -> Arc<Grid> {
        Arc::new(Grid::build(&d, h).unwrap())
    }

    #[test]
    fn interval_counts() {
        let g = Grid::build(&Domain::Interval { a: 0.0, b: 1.0 }, 0.25).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.interior_nodes().len(), 3);
    }

    #[test]
    fn box_counts() {
        let g = Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 0.5).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.interior_nodes(), &[4]);
    }

    #[test]
    fn radial_ball_with_explicit_inner_radius() {
        let g = Grid::build(&Domain::Ball { n: 7, radius: 1.0, r_inner: Some(0.01) }, 0.01).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.dim(), 7);
        assert!(!g.is_boundary(0));
        assert!(g.is_boundary(99));
    }

    #[test]
    fn default_inner_radius_is_on_the_lattice() {
        let g = Grid::build(&Domain::Ball { n: 7, radius: 1.0, r_inner: None }, 1e-3).unwrap();
        let r0 = g.r_inner().unwrap();
        assert!((r0 - 0.004).abs() < 1e-12, "{r0}");
        assert!((g.r_outer().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Grid::build(&Domain::Interval { a: 0.0, b: 1.0 }, 0.0).is_err());
        assert!(Grid::build(&Domain::Interval { a: 0.0, b: 1.0 }, -0.1).is_err());
        assert!(Grid::build(&Domain::Interval { a: 0.0, b: 1.0 }, 0.6).is_err());
        assert!(Grid::build(&Domain::Annulus { n: 3, r_inner: 1.0, r_outer: 1.0 }, 0.1).is_err());
        assert!(Grid::build(&Domain::Ball { n: 3, radius: 1.0, r_inner: Some(1.5) }, 0.1).is_err());
        assert!(Grid::build(&Domain::Box { dim: 4, lo: 0.0, hi: 1.0 }, 0.25).is_err());
    }

    #[test]
    fn laplacian_of_linear_is_zero_in_1d() {
        let g = arc(Domain::Interval { a: 0.0, b: 1.0 }, 0.1);
        let u = Field::from_fn(g.clone(), |x| 3.0 * x[0] - 1.0).unwrap();
        let lap = assemble_laplacian(&g);
        for v in lap.apply(&g, u.values()) {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_of_quadratic_box() {
        for dim in 2..=3 {
            let g = arc(Domain::Box { dim, lo: -1.0, hi: 1.0 }, 0.25);
            let u = Field::from_fn(g.clone(), |x| x.iter().map(|t| t * t).sum()).unwrap();
            let lap = assemble_laplacian(&g);
            for v in lap.apply(&g, u.values()) {
                assert!((v - 2.0 * dim as f64).abs() < 1e-11, "{v}");
            }
            let rows = lap.operator();
            assert!(rows.asymmetry() == 0.0);
        }
    }

    #[test]
    fn radial_laplacian_of_r() {
        let g = arc(Domain::Annulus { n: 7, r_inner: 0.1, r_outer: 1.0 }, 0.01);
        let u = Field::from_radial_fn(g.clone(), |r| r).unwrap();
        let lap = assemble_laplacian(&g);
        for (k, v) in lap.apply(&g, u.values()).iter().enumerate() {
            let r = g.radius(g.interior_nodes()[k]);
            assert!((v - 6.0 / r).abs() <= 1e-10, "{v} vs {}", 6.0 / r);
        }
    }

    #[test]
    fn radial_laplacian_of_r_squared_including_center() {
        let g = arc(Domain::Ball { n: 4, radius: 1.0, r_inner: None }, 0.05);
        let u = Field::from_radial_fn(g.clone(), |r| r * r).unwrap();
        for v in assemble_laplacian(&g).apply(&g, u.values()) {
            assert!((v - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn interior_rows_sum_to_zero() {
        let g = arc(Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 0.125);
        let lap = assemble_laplacian(&g);
        let ones = vec![1.0; g.len()];
        for v in lap.apply(&g, &ones) {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn ball_volume_and_measure() {
        let g = arc(Domain::Ball { n: 3, radius: 1.0, r_inner: None }, 0.02);
        let one = Field::constant(g.clone(), 1.0);
        let v = integrate(&one, 1.0).unwrap();
        assert!((v - 4.0 * PI / 3.0).abs() < 0.01 * 4.0 * PI / 3.0);
        let two = Field::constant(g.clone(), 2.0);
        assert_eq!(integrate(&two, 0.0).unwrap(), g.volume());
    }

    #[test]
    fn cone_inverse_square_integral() {
        let g = arc(Domain::Annulus { n: 7, r_inner: 0.01, r_outer: 1.0 }, 0.001);
        let u = Field::from_radial_fn(g.clone(), |r| r / 6f64.sqrt()).unwrap();
        let got = integrate(&u, -2.0).unwrap();
        let s6 = 16.0 * PI.powi(3) / 15.0;
        let exact = 6.0 * s6 * (1.0 - 0.01f64.powi(5)) / 5.0;
        assert!((got - exact).abs() < 0.01 * exact, "{got} vs {exact}");
        assert!((unit_sphere_area(7) - s6).abs() < 1e-12);
    }

    #[test]
    fn zero_value_with_negative_exponent_is_an_error() {
        let g = arc(Domain::Interval { a: 0.0, b: 1.0 }, 0.25);
        let u = Field::from_fn(g, |x| x[0]).unwrap();
        assert!(matches!(integrate(&u, -1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn energy_examples() {
        let g = arc(Domain::Interval { a: 0.0, b: 1.0 }, 0.01);
        let u = Field::from_fn(g.clone(), |x| x[0]).unwrap();
        assert!((dirichlet_energy(&u) - 0.5).abs() < 1e-12);
        assert_eq!(dirichlet_energy(&Field::constant(g, 3.0)), 0.0);

        let g = arc(Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 0.1);
        let u = Field::from_fn(g, |x| x[1]).unwrap();
        assert!((dirichlet_energy(&u) - 0.5).abs() < 1e-12);

        let g = arc(Domain::Annulus { n: 7, r_inner: 0.1, r_outer: 1.0 }, 0.01);
        let u = Field::from_radial_fn(g.clone(), |r| r / 6f64.sqrt()).unwrap();
        let vol = unit_ball_volume(7) * (1.0 - 0.1f64.powi(7));
        assert!((dirichlet_energy(&u) - vol / 12.0).abs() < 1e-9 * vol);
    }

    #[test]
    fn subgrid_and_scaling() {
        let g = Grid::build(&Domain::Ball { n: 3, radius: 1.0, r_inner: None }, 1.0 / 64.0).unwrap();
        let (sub, off) = g.radial_subgrid(0.0, 0.5).unwrap();
        assert_eq!(off, 0);
        assert!(sub.has_regular_center());
        assert!((sub.r_outer().unwrap() - 0.5).abs() < 1e-12);
        let s = g.scaled(0.5).unwrap();
        assert!((s.volume() - g.volume() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn header_and_csv() {
        let g = arc(Domain::Annulus { n: 7, r_inner: 0.5, r_outer: 1.0 }, 0.25);
        let h = g.header();
        assert!(h.contains("kind = radial-annulus"));
        assert!(h.contains("n = 7"));
        let mut buf = Vec::new();
        Field::constant(g, 1.0).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("r,value"));
    }

    fn laplacian_error(domain: Domain, h: f64) -> f64 {
        let g = arc(domain, h);
        let f = |x: &[f64]| x.iter().map(|t| (1.3 * t).sin()).sum::<f64>();
        let exact = |x: &[f64]| x.iter().map(|t| -1.69 * (1.3 * t).sin()).sum::<f64>();
        let u = Field::from_fn(g.clone(), f).unwrap();
        let lu = assemble_laplacian(&g).apply(&g, u.values());
        g.interior_nodes().iter().zip(lu).map(|(&i, v)| (v - exact(&g.coords(i))).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn second_order_on_smooth_functions() {
        for domain in [Domain::Interval { a: 0.0, b: 1.0 }, Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }] {
            let ratio = laplacian_error(domain.clone(), 1.0 / 16.0) / laplacian_error(domain, 1.0 / 32.0);
            assert!((3.6..4.4).contains(&ratio), "{ratio}");
        }
        let radial = |h: f64| {
            let g = arc(Domain::Annulus { n: 5, r_inner: 0.25, r_outer: 1.0 }, h);
            let u = Field::from_radial_fn(g.clone(), |r| r.exp()).unwrap();
            let lu = assemble_laplacian(&g).apply(&g, u.values());
            g.interior_nodes()
                .iter()
                .zip(lu)
                .map(|(&i, v)| {
                    let r = g.radius(i);
                    (v - r.exp() * (1.0 + 4.0 / r)).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = radial(1.0 / 32.0) / radial(1.0 / 64.0);
        assert!((3.6..4.4).contains(&ratio), "{ratio}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config { cases: 32, ..Default::default() })]

        #[test]
        fn quadrature_is_linear_and_positive(c in 0.1f64..10.0, n in 2usize..8, k in 16usize..64) {
            let g = arc(Domain::Ball { n, radius: 1.0, r_inner: None }, 1.0 / k as f64);
            let u = Field::from_radial_fn(g.clone(), |r| 1.0 + r).unwrap();
            let cu = u.map(|v| c * v).unwrap();
            let (a, b) = (integrate(&u, 1.0).unwrap(), integrate(&cu, 1.0).unwrap());
            proptest::prop_assert!((b - c * a).abs() <= 1e-12 * b.abs());
            proptest::prop_assert!(g.quadrature_weights().iter().all(|&w| w > 0.0));
            proptest::prop_assert!((g.volume() - unit_ball_volume(n)).abs() <= 1e-12 * unit_ball_volume(n));
        }

        #[test]
        fn discrete_maximum_principle(n in 2usize..8, k in 8usize..64, a in 0.5f64..3.0, b in 0.5f64..3.0) {
            // Δ_h u ≥ 0 at interior nodes forces max u onto the boundary (here: u = a + b r²)
            let g = arc(Domain::Ball { n, radius: 1.0, r_inner: None }, 1.0 / k as f64);
            let u = Field::from_radial_fn(g.clone(), |r| a + b * r * r).unwrap();
            let lu = assemble_laplacian(&g).apply(&g, u.values());
            proptest::prop_assert!(lu.iter().all(|&v| v >= -1e-9));
            let bmax = g.boundary_nodes().iter().map(|&i| u.values()[i]).fold(f64::MIN, f64::max);
            proptest::prop_assert!(u.max() <= bmax + 1e-12);
        }
    }
}
