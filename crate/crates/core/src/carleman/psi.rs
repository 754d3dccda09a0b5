use serde::{Deserialize, Serialize};

use crate::domain::{BoxRegion, IndexSet, Interval, SpaceGrid};
use crate::error::{invalid, GrushinError, Result};

/// Shape of the 1D factor of ψ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiShape {
    /// (x−a)(b−x)·e^{κ(x−c)} with its single critical point at the centre c of ω̃₁.
    Shifted,
    /// (x−a)(b−x), critical point at the domain midpoint.
    Centered,
}

/// One factor ψ₁(x) = (x−a)(b−x)e^{κ(x−c)} with value, first and second derivative.
#[derive(Debug, Clone, Copy)]
struct Factor {
    a: f64,
    b: f64,
    c: f64,
    kappa: f64,
}

impl Factor {
    fn new(a: f64, b: f64, target: f64, shape: PsiShape) -> Self {
        match shape {
            PsiShape::Centered => Self {
                a,
                b,
                c: 0.5 * (a + b),
                kappa: 0.0,
            },
            PsiShape::Shifted => Self {
                a,
                b,
                c: target,
                kappa: (2.0 * target - a - b) / ((target - a) * (b - target)),
            },
        }
    }

    fn eval(&self, x: f64) -> [f64; 3] {
        let e = (self.kappa * (x - self.c)).exp();
        let p = (x - self.a) * (self.b - x);
        let q = (self.a + self.b - 2.0 * x) + self.kappa * p;
        let dq = -2.0 + self.kappa * (self.a + self.b - 2.0 * x);
        [p * e, q * e, (self.kappa * q + dq) * e]
    }

    /// The unique critical point in (a, b).
    fn critical_point(&self) -> f64 {
        self.c
    }
}

/// ψ sampled at every node of the x-grid, with analytic derivatives.
#[derive(Debug, Clone)]
pub struct PsiFunction {
    grid: SpaceGrid,
    omega_tilde: IndexSet,
    shape: PsiShape,
    values: Vec<f64>,
    grad: Vec<[f64; 2]>,
    hess: Vec<[[f64; 2]; 2]>,
    sup: f64,
    outside: Vec<usize>,
    m_lower: f64,
    m_upper: f64,
}

pub fn construct_psi(grid: &SpaceGrid, omega_tilde: &BoxRegion) -> Result<PsiFunction> {
    construct_psi_with(grid, omega_tilde, PsiShape::Shifted)
}

pub fn construct_psi_with(grid: &SpaceGrid, omega_tilde: &BoxRegion, shape: PsiShape) -> Result<PsiFunction> {
    let axes = grid.axes();
    if omega_tilde.axes.len() != axes.len() {
        return Err(invalid("omega_tilde", "axis count differs from the x-grid"));
    }
    for (g, iv) in axes.iter().zip(&omega_tilde.axes) {
        if !(g.a() < iv.lo && iv.hi < g.b() && iv.lo < iv.hi) {
            return Err(invalid(
                "omega_tilde",
                format!("({}, {}) is not strictly inside ({}, {})", iv.lo, iv.hi, g.a(), g.b()),
            ));
        }
    }
    let set = grid.subdomain_indices(omega_tilde)?;
    let factors: Vec<Factor> = axes
        .iter()
        .zip(&omega_tilde.axes)
        .map(|(g, iv)| Factor::new(g.a(), g.b(), 0.5 * (iv.lo + iv.hi), shape))
        .collect();
    for (f, iv) in factors.iter().zip(&omega_tilde.axes) {
        let c = f.critical_point();
        if !Interval::new(iv.lo, iv.hi).contains_strictly(c) {
            return Err(GrushinError::Verification(format!(
                "critical point {c} of ψ lies outside ω̃₁ = ({}, {})",
                iv.lo, iv.hi
            )));
        }
    }
    let n = grid.node_count();
    let mut values = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    for node in 0..n {
        let p = grid.node_point(node);
        let f1 = factors[0].eval(p[0]);
        if factors.len() == 1 {
            values.push(f1[0]);
            grad.push([f1[1], 0.0]);
            hess.push([[f1[2], 0.0], [0.0, 0.0]]);
        } else {
            let f2 = factors[1].eval(p[1]);
            values.push(f1[0] * f2[0]);
            grad.push([f1[1] * f2[0], f1[0] * f2[1]]);
            hess.push([
                [f1[2] * f2[0], f1[1] * f2[1]],
                [f1[1] * f2[1], f1[0] * f2[2]],
            ]);
        }
    }
    // boundary values are exactly zero; interior ones must be positive
    for node in 0..n {
        if grid.is_boundary_node(node) {
            values[node] = 0.0;
        } else if !(values[node] > 0.0) {
            return Err(GrushinError::Verification(format!(
                "ψ is not positive at interior node {node}"
            )));
        }
    }
    let sup: f64 = factors
        .iter()
        .map(|f| f.eval(f.critical_point())[0])
        .product();
    let outside: Vec<usize> = (0..n)
        .filter(|&node| !set.contains(node) && !is_corner(grid, node))
        .collect();
    let mut m_lower = f64::INFINITY;
    let mut m_upper = 0.0f64;
    for &node in &outside {
        let g = grad[node];
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if !(gn > 0.0) {
            let p = grid.node_point(node);
            return Err(GrushinError::Verification(format!(
                "∇ψ vanishes at node {node} ({}, {}) outside ω̃₁",
                p[0], p[1]
            )));
        }
        let h = hess[node];
        let lap = h[0][0] + h[1][1];
        m_lower = m_lower.min(gn);
        m_upper = m_upper.max(gn).max(lap.abs()).max(spectral_norm(h));
    }
    Ok(PsiFunction {
        grid: grid.clone(),
        omega_tilde: set,
        shape,
        values,
        grad,
        hess,
        sup,
        outside,
        m_lower,
        m_upper,
    })
}

/// Corners of a rectangle, where ∇(ψ₁ψ₂) = 0 unavoidably.
fn is_corner(grid: &SpaceGrid, node: usize) -> bool {
    match grid {
        SpaceGrid::Line(_) => false,
        SpaceGrid::Rect(g1, g2) => {
            let (i, j) = grid.node_multi(node);
            g1.is_boundary(i) && g2.is_boundary(j)
        }
    }
}

fn spectral_norm(h: [[f64; 2]; 2]) -> f64 {
    let (a, b, d) = (h[0][0], h[0][1], h[1][1]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean + rad).abs().max((mean - rad).abs())
}

impl PsiFunction {
    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }
    pub fn omega_tilde(&self) -> &IndexSet {
        &self.omega_tilde
    }
    pub fn shape(&self) -> PsiShape {
        self.shape
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn grad(&self, node: usize) -> [f64; 2] {
        self.grad[node]
    }
    pub fn hess(&self, node: usize) -> [[f64; 2]; 2] {
        self.hess[node]
    }
    pub fn laplacian(&self, node: usize) -> f64 {
        self.hess[node][0][0] + self.hess[node][1][1]
    }
    /// ‖ψ‖_∞ (attained at the critical point).
    pub fn sup(&self) -> f64 {
        self.sup
    }
    /// Nodes of Ω̄₁ outside ω̃₁ where the weight inequalities are checked.
    pub fn outside_nodes(&self) -> &[usize] {
        &self.outside
    }
    /// m_* = min |∇ψ| outside ω̃₁.
    pub fn m_lower(&self) -> f64 {
        self.m_lower
    }
    /// m^* = max of |∇ψ|, |Δψ|, ‖D²ψ‖ outside ω̃₁.
    pub fn m_upper(&self) -> f64 {
        self.m_upper
    }
}
