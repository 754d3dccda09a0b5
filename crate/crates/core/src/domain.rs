//! Uniform grids on intervals, rectangles and Ω₁×Ω₂, plus node index sets.
//!
//! State vectors live on interior nodes only (homogeneous Dirichlet data is
//! eliminated). Multi-axis layouts are flattened x-major: the last axis
//! varies fastest.

use serde::{Deserialize, Serialize};
use sprs::TriMat;

use crate::error::{GrushinError, Result};
use crate::linalg::{trapezoid_weights, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains_strictly(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }
}

/// One interval per axis, in grid axis order (x₁[, x₂][, y]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub axes: Vec<Interval>,
}

impl BoxRegion {
    pub fn new(axes: Vec<Interval>) -> Self {
        Self { axes }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::new(vec![Interval::new(lo, hi)])
    }

    pub fn measure(&self) -> f64 {
        self.axes.iter().map(Interval::length).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
}

pub fn build_interval_grid(a: f64, b: f64, n: usize) -> Result<Grid1D> {
    Grid1D::new(a, b, n)
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(GrushinError::InvalidDomain(format!(
                "need a < b, got ({a}, {b})"
            )));
        }
        if n < 3 {
            return Err(GrushinError::InvalidDomain(format!(
                "need at least 3 nodes, got {n}"
            )));
        }
        let h = (b - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
        nodes[n - 1] = b;
        Ok(Self { a, b, n, h, nodes })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn length(&self) -> f64 {
        self.b - self.a
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn interior_count(&self) -> usize {
        self.n - 2
    }
    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.n - 1]
    }
    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.n
    }
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.n).map(|i| self.is_boundary(i)).collect()
    }
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n, self.h)
    }

    /// Node indices strictly inside `iv`, interior nodes only.
    fn indices_in(&self, iv: &Interval) -> Vec<usize> {
        (1..self.n - 1)
            .filter(|&i| iv.contains_strictly(self.nodes[i]))
            .collect()
    }

    /// −d²/dx² with Dirichlet rows eliminated (interior × interior).
    pub fn neg_laplacian(&self) -> SparseMatrix {
        let m = self.interior_count();
        let c = 1.0 / (self.h * self.h);
        let mut t = TriMat::with_capacity((m, m), 3 * m);
        for i in 0..m {
            t.add_triplet(i, i, 2.0 * c);
            if i + 1 < m {
                t.add_triplet(i, i + 1, -c);
                t.add_triplet(i + 1, i, -c);
            }
        }
        t.to_csr()
    }

    pub fn subdomain_indices(&self, region: &BoxRegion) -> Result<IndexSet> {
        if region.axes.len() != 1 {
            return Err(GrushinError::InvalidDomain(format!(
                "box has {} axes, grid has 1",
                region.axes.len()
            )));
        }
        IndexSet::nonempty(self.indices_in(&region.axes[0]), region.clone(), self.n)
    }
}

/// Sorted, unique node indices together with the box that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    indices: Vec<usize>,
    region: BoxRegion,
}

impl IndexSet {
    fn nonempty(indices: Vec<usize>, region: BoxRegion, bound: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(GrushinError::EmptyRegion(format!(
                "box {:?} contains no interior node",
                region.axes
            )));
        }
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(*indices.last().unwrap() < bound);
        Ok(Self { indices, region })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn region(&self) -> &BoxRegion {
        &self.region
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    pub fn contains(&self, node: usize) -> bool {
        self.indices.binary_search(&node).is_ok()
    }
}

/// The x-domain Ω₁: an interval or a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceGrid {
    Line(Grid1D),
    Rect(Grid1D, Grid1D),
}

impl SpaceGrid {
    pub fn dim(&self) -> usize {
        match self {
            SpaceGrid::Line(_) => 1,
            SpaceGrid::Rect(..) => 2,
        }
    }

    pub fn axes(&self) -> Vec<&Grid1D> {
        match self {
            SpaceGrid::Line(g) => vec![g],
            SpaceGrid::Rect(g1, g2) => vec![g1, g2],
        }
    }

    pub fn node_count(&self) -> usize {
        self.axes().iter().map(|g| g.len()).product()
    }

    pub fn dof_count(&self) -> usize {
        self.axes().iter().map(|g| g.interior_count()).product()
    }

    /// Volume element of one interior node.
    pub fn cell_volume(&self) -> f64 {
        self.axes().iter().map(|g| g.h()).product()
    }

    pub fn measure(&self) -> f64 {
        self.axes().iter().map(|g| g.length()).product()
    }

    /// Node multi-index → flat node index.
    pub fn node_index(&self, i1: usize, i2: usize) -> usize {
        match self {
            SpaceGrid::Line(_) => i1,
            SpaceGrid::Rect(_, g2) => i1 * g2.len() + i2,
        }
    }

    /// Flat node index → (i1, i2); i2 = 0 in 1D.
    pub fn node_multi(&self, node: usize) -> (usize, usize) {
        match self {
            SpaceGrid::Line(_) => (node, 0),
            SpaceGrid::Rect(_, g2) => (node / g2.len(), node % g2.len()),
        }
    }

    pub fn node_point(&self, node: usize) -> [f64; 2] {
        let (i1, i2) = self.node_multi(node);
        match self {
            SpaceGrid::Line(g) => [g.nodes()[i1], 0.0],
            SpaceGrid::Rect(g1, g2) => [g1.nodes()[i1], g2.nodes()[i2]],
        }
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i1, i2) = self.node_multi(node);
        match self {
            SpaceGrid::Line(g) => g.is_boundary(i1),
            SpaceGrid::Rect(g1, g2) => g1.is_boundary(i1) || g2.is_boundary(i2),
        }
    }

    pub fn node_to_dof(&self, node: usize) -> Option<usize> {
        let (i1, i2) = self.node_multi(node);
        match self {
            SpaceGrid::Line(g) => (!g.is_boundary(i1)).then(|| i1 - 1),
            SpaceGrid::Rect(g1, g2) => (!g1.is_boundary(i1) && !g2.is_boundary(i2))
                .then(|| (i1 - 1) * g2.interior_count() + (i2 - 1)),
        }
    }

    pub fn dof_to_node(&self, dof: usize) -> usize {
        match self {
            SpaceGrid::Line(_) => dof + 1,
            SpaceGrid::Rect(_, g2) => {
                let m2 = g2.interior_count();
                self.node_index(dof / m2 + 1, dof % m2 + 1)
            }
        }
    }

    pub fn dof_point(&self, dof: usize) -> [f64; 2] {
        self.node_point(self.dof_to_node(dof))
    }

    /// |x| at every interior node.
    pub fn dof_radius(&self) -> Vec<f64> {
        (0..self.dof_count())
            .map(|d| {
                let p = self.dof_point(d);
                (p[0] * p[0] + p[1] * p[1]).sqrt()
            })
            .collect()
    }

    /// −Δ with Dirichlet rows eliminated, on interior dofs.
    pub fn neg_laplacian(&self) -> SparseMatrix {
        match self {
            SpaceGrid::Line(g) => g.neg_laplacian(),
            SpaceGrid::Rect(g1, g2) => {
                let (m1, m2) = (g1.interior_count(), g2.interior_count());
                let c1 = 1.0 / (g1.h() * g1.h());
                let c2 = 1.0 / (g2.h() * g2.h());
                let n = m1 * m2;
                let mut t = TriMat::with_capacity((n, n), 5 * n);
                for i in 0..m1 {
                    for j in 0..m2 {
                        let d = i * m2 + j;
                        t.add_triplet(d, d, 2.0 * c1 + 2.0 * c2);
                        if i + 1 < m1 {
                            t.add_triplet(d, d + m2, -c1);
                            t.add_triplet(d + m2, d, -c1);
                        }
                        if j + 1 < m2 {
                            t.add_triplet(d, d + 1, -c2);
                            t.add_triplet(d + 1, d, -c2);
                        }
                    }
                }
                t.to_csr()
            }
        }
    }

    /// Centered-difference gradient at interior dofs, zero Dirichlet data.
    pub fn gradient(&self, u: &[f64]) -> Vec<[f64; 2]> {
        match self {
            SpaceGrid::Line(g) => {
                let m = g.interior_count();
                let inv = 0.5 / g.h();
                (0..m)
                    .map(|i| {
                        let l = if i > 0 { u[i - 1] } else { 0.0 };
                        let r = if i + 1 < m { u[i + 1] } else { 0.0 };
                        [(r - l) * inv, 0.0]
                    })
                    .collect()
            }
            SpaceGrid::Rect(g1, g2) => {
                let (m1, m2) = (g1.interior_count(), g2.interior_count());
                let (i1, i2) = (0.5 / g1.h(), 0.5 / g2.h());
                let at = |i: isize, j: isize| -> f64 {
                    if i < 0 || j < 0 || i as usize >= m1 || j as usize >= m2 {
                        0.0
                    } else {
                        u[i as usize * m2 + j as usize]
                    }
                };
                let mut out = Vec::with_capacity(m1 * m2);
                for i in 0..m1 as isize {
                    for j in 0..m2 as isize {
                        out.push([
                            (at(i + 1, j) - at(i - 1, j)) * i1,
                            (at(i, j + 1) - at(i, j - 1)) * i2,
                        ]);
                    }
                }
                out
            }
        }
    }

    pub fn subdomain_indices(&self, region: &BoxRegion) -> Result<IndexSet> {
        let axes = self.axes();
        if region.axes.len() != axes.len() {
            return Err(GrushinError::InvalidDomain(format!(
                "box has {} axes, grid has {}",
                region.axes.len(),
                axes.len()
            )));
        }
        let per_axis: Vec<Vec<usize>> = axes
            .iter()
            .zip(&region.axes)
            .map(|(g, iv)| g.indices_in(iv))
            .collect();
        let indices = match self {
            SpaceGrid::Line(_) => per_axis[0].clone(),
            SpaceGrid::Rect(..) => {
                let mut v = Vec::new();
                for &i in &per_axis[0] {
                    for &j in &per_axis[1] {
                        v.push(self.node_index(i, j));
                    }
                }
                v
            }
        };
        IndexSet::nonempty(indices, region.clone(), self.node_count())
    }

    /// Dof-level membership mask of an index set built on this grid.
    pub fn dof_mask(&self, set: &IndexSet) -> Vec<bool> {
        let mut mask = vec![false; self.dof_count()];
        for &node in set.indices() {
            if let Some(d) = self.node_to_dof(node) {
                mask[d] = true;
            }
        }
        mask
    }

    /// Trapezoid weights at all nodes (product rule).
    pub fn quadrature_weights(&self) -> Vec<f64> {
        match self {
            SpaceGrid::Line(g) => g.quadrature_weights(),
            SpaceGrid::Rect(g1, g2) => {
                let (w1, w2) = (g1.quadrature_weights(), g2.quadrature_weights());
                w1.iter()
                    .flat_map(|a| w2.iter().map(move |b| a * b))
                    .collect()
            }
        }
    }

    /// Squared L² norm of a dof vector (interior nodes carry the full cell volume).
    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.cell_volume() * u.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Ω = Ω₁ × Ω₂ with x-major flattening: `dof = x_dof * ny_int + y_dof`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    x: SpaceGrid,
    y: Grid1D,
}

impl TensorGrid {
    pub fn new(x: SpaceGrid, y: Grid1D) -> Self {
        Self { x, y }
    }

    pub fn x(&self) -> &SpaceGrid {
        &self.x
    }
    pub fn y(&self) -> &Grid1D {
        &self.y
    }
    pub fn node_count(&self) -> usize {
        self.x.node_count() * self.y.len()
    }
    pub fn dof_count(&self) -> usize {
        self.x.dof_count() * self.y.interior_count()
    }
    pub fn cell_volume(&self) -> f64 {
        self.x.cell_volume() * self.y.h()
    }
    pub fn measure(&self) -> f64 {
        self.x.measure() * self.y.length()
    }

    pub fn node_to_dof(&self, node: usize) -> Option<usize> {
        let (xn, yn) = (node / self.y.len(), node % self.y.len());
        let xd = self.x.node_to_dof(xn)?;
        (!self.y.is_boundary(yn)).then(|| xd * self.y.interior_count() + (yn - 1))
    }

    /// Per-node trapezoid weights; positive on interior nodes, summing to |Ω|.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let wy = self.y.quadrature_weights();
        self.x
            .quadrature_weights()
            .iter()
            .flat_map(|a| wy.iter().map(move |b| a * b))
            .collect()
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count())
            .map(|n| self.node_to_dof(n).is_none())
            .collect()
    }

    /// Box axes are x-axes followed by the y-axis.
    pub fn subdomain_indices(&self, region: &BoxRegion) -> Result<IndexSet> {
        let dx = self.x.dim();
        if region.axes.len() != dx + 1 {
            return Err(GrushinError::InvalidDomain(format!(
                "box has {} axes, tensor grid has {}",
                region.axes.len(),
                dx + 1
            )));
        }
        let xbox = BoxRegion::new(region.axes[..dx].to_vec());
        let ys = self.y.indices_in(&region.axes[dx]);
        let xs = match self.x.subdomain_indices(&xbox) {
            Ok(s) => s.indices,
            Err(_) => Vec::new(),
        };
        let ny = self.y.len();
        let indices = xs
            .iter()
            .flat_map(|&xn| ys.iter().map(move |&yn| xn * ny + yn))
            .collect();
        IndexSet::nonempty(indices, region.clone(), self.node_count())
    }

    pub fn dof_mask(&self, set: &IndexSet) -> Vec<bool> {
        let mut mask = vec![false; self.dof_count()];
        for &node in set.indices() {
            if let Some(d) = self.node_to_dof(node) {
                mask[d] = true;
            }
        }
        mask
    }

    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.cell_volume() * u.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.cell_volume() * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Σ of quadrature weights over the nodes of `set`.
pub fn quadrature_measure(weights: &[f64], set: &IndexSet) -> f64 {
    set.indices().iter().map(|&i| weights[i]).sum()
}
