//! Mode operators G_{n,γ} = −Δ_x + μ_n|x|^{2γ}b(x), the full Grushin
//! operator on the tensor grid, and the dissipation-rate scaling law.

use rayon::prelude::*;
use sprs::TriMat;

use crate::domain::{SpaceGrid, TensorGrid};
use crate::error::{invalid, GrushinError, Result};
use crate::linalg::{
    conjugate_gradient, diagonal, dot, linear_fit, norm2, shifted, spmv, CgOptions, SparseMatrix,
};

/// Samples of b > 0 at every node of the x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientB {
    nodes: Vec<f64>,
    dofs: Vec<f64>,
    b_min: f64,
    b_max: f64,
}

impl CoefficientB {
    pub fn constant(grid: &SpaceGrid, value: f64) -> Result<Self> {
        Self::from_fn(grid, |_| value)
    }

    pub fn from_fn(grid: &SpaceGrid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let nodes: Vec<f64> = (0..grid.node_count()).map(|n| f(grid.node_point(n))).collect();
        Self::from_samples(grid, nodes)
    }

    pub fn from_samples(grid: &SpaceGrid, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() != grid.node_count() {
            return Err(invalid(
                "b",
                format!("{} samples for {} nodes", nodes.len(), grid.node_count()),
            ));
        }
        let b_min = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let b_max = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(b_min > 0.0) || !b_max.is_finite() {
            return Err(invalid("b", format!("must be positive and finite, min = {b_min}")));
        }
        let dofs = (0..grid.dof_count())
            .map(|d| nodes[grid.dof_to_node(d)])
            .collect();
        Ok(Self {
            nodes,
            dofs,
            b_min,
            b_max,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }
    pub fn b_min(&self) -> f64 {
        self.b_min
    }
    pub fn b_max(&self) -> f64 {
        self.b_max
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(invalid("gamma", format!("{gamma} outside (0, 1]")))
    }
}

/// |x|^{2γ}·b(x) at interior nodes.
pub fn degeneracy_profile(grid: &SpaceGrid, gamma: f64, b: &CoefficientB) -> Vec<f64> {
    grid.dof_radius()
        .iter()
        .zip(b.dofs())
        .map(|(r, bv)| if *r == 0.0 { 0.0 } else { r.powf(2.0 * gamma) * bv })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ModeOperator {
    mu: f64,
    gamma: f64,
    grid: SpaceGrid,
    laplacian: SparseMatrix,
    potential: Vec<f64>,
    matrix: SparseMatrix,
}

pub fn assemble_mode_operator(
    grid: &SpaceGrid,
    mu: f64,
    gamma: f64,
    b: &CoefficientB,
) -> Result<ModeOperator> {
    check_gamma(gamma)?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid("mu", format!("{mu} must be finite and ≥ 0")));
    }
    let laplacian = grid.neg_laplacian();
    let potential: Vec<f64> = degeneracy_profile(grid, gamma, b)
        .iter()
        .map(|v| mu * v)
        .collect();
    let n = laplacian.rows();
    let mut t = TriMat::with_capacity((n, n), laplacian.nnz());
    for (v, (i, j)) in laplacian.iter() {
        t.add_triplet(i, j, *v);
    }
    for (i, p) in potential.iter().enumerate() {
        t.add_triplet(i, i, *p);
    }
    Ok(ModeOperator {
        mu,
        gamma,
        grid: grid.clone(),
        laplacian,
        potential,
        matrix: t.to_csr(),
    })
}

impl ModeOperator {
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }
    pub fn laplacian(&self) -> &SparseMatrix {
        &self.laplacian
    }
    /// μ|x|^{2γ}b at interior nodes.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        spmv(&self.matrix, u, out);
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit vector in the Euclidean dof norm.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Smallest eigenvalue of an SPD matrix by inverse power iteration with
/// Jacobi-preconditioned CG inner solves.
pub fn smallest_eigenvalue_of(a: &SparseMatrix, tol: f64) -> Result<EigenPair> {
    let n = a.rows();
    let inv_diag: Vec<f64> = diagonal(a).iter().map(|d| 1.0 / d).collect();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; n];
    spmv(a, &x, &mut ax);
    let mut lambda = dot(&x, &ax);
    let mut y = vec![0.0; n];
    let max_iter = 500;
    let inner = CgOptions {
        tol: (tol * 1e-3).min(1e-12),
        max_iter: 50 * n + 1000,
    };
    for it in 1..=max_iter {
        // warm start: A⁻¹x ≈ x/λ near convergence
        for i in 0..n {
            y[i] = x[i] / lambda;
        }
        conjugate_gradient("inverse power", |v, o| spmv(a, v, o), &x, &mut y, Some(&inv_diag), inner)?;
        let nrm = norm2(&y);
        for i in 0..n {
            x[i] = y[i] / nrm;
        }
        spmv(a, &x, &mut ax);
        let next = dot(&x, &ax);
        let change = (next - lambda).abs();
        lambda = next;
        if change <= tol * lambda.abs() {
            let residual = (0..n)
                .map(|i| (ax[i] - lambda * x[i]).powi(2))
                .sum::<f64>()
                .sqrt()
                / lambda.abs();
            if lambda <= 0.0 {
                return Err(GrushinError::NotPositiveDefinite { pivot: 0, value: lambda });
            }
            return Ok(EigenPair {
                value: lambda,
                vector: x,
                iterations: it,
                residual,
            });
        }
    }
    let residual = (0..n)
        .map(|i| (ax[i] - lambda * x[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    Err(GrushinError::NoConvergence {
        what: "inverse power iteration",
        iterations: max_iter,
        residual,
    })
}

pub fn smallest_eigenvalue(op: &ModeOperator, tol: f64) -> Result<EigenPair> {
    let mut pair = smallest_eigenvalue_of(op.matrix(), tol)?;
    // ground state is sign-definite; fix the sign for reproducible output
    if pair.vector.iter().sum::<f64>() < 0.0 {
        pair.vector.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(pair)
}

/// λ_{n,γ} for each μ in `mus`, computed in parallel and returned in input order.
pub fn scaling_sweep(
    grid: &SpaceGrid,
    gamma: f64,
    b: &CoefficientB,
    mus: &[f64],
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    mus.par_iter()
        .map(|&mu| {
            let op = assemble_mode_operator(grid, mu, gamma, b)?;
            Ok((mu, smallest_eigenvalue(&op, tol)?.value))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub gamma: f64,
    pub pairs: Vec<(f64, f64)>,
    pub exponent: f64,
    pub c_star: f64,
    pub c_star_upper: f64,
    pub residual: f64,
}

impl ScalingFit {
    pub fn expected_exponent(&self) -> f64 {
        1.0 / (1.0 + self.gamma)
    }
}

pub fn fit_scaling_law(pairs: &[(f64, f64)], gamma: f64) -> Result<ScalingFit> {
    check_gamma(gamma)?;
    if pairs.len() < 5 {
        return Err(invalid("pairs", format!("need ≥ 5 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|(m, l)| !(*m > 0.0) || !(*l > 0.0)) {
        return Err(invalid("pairs", "μ and λ must be positive"));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 1e3 * (1.0 - 1e-12) {
        return Err(invalid(
            "pairs",
            format!("μ spans {:.2} decades, need ≥ 3", (hi / lo).log10()),
        ));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (exponent, _, residual) = linear_fit(&x, &y);
    let q = 1.0 / (1.0 + gamma);
    let ratios: Vec<f64> = pairs.iter().map(|(m, l)| l * m.powf(-q)).collect();
    Ok(ScalingFit {
        gamma,
        pairs: pairs.to_vec(),
        exponent,
        c_star: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        c_star_upper: ratios.iter().cloned().fold(0.0, f64::max),
        residual,
    })
}

/// Discrete G_γ = −Δ_x ⊗ I + diag(|x|^{2γ}b) ⊗ (−Δ_y) on the tensor grid.
#[derive(Debug, Clone)]
pub struct FullOperator {
    grid: TensorGrid,
    gamma: f64,
    matrix: SparseMatrix,
}

pub fn assemble_full_operator(grid: &TensorGrid, gamma: f64, b: &CoefficientB) -> Result<FullOperator> {
    check_gamma(gamma)?;
    let lx = grid.x().neg_laplacian();
    let ly = grid.y().neg_laplacian();
    let v = degeneracy_profile(grid.x(), gamma, b);
    let ny = grid.y().interior_count();
    let n = grid.dof_count();
    let mut t = TriMat::with_capacity((n, n), lx.nnz() * ny + v.len() * ly.nnz());
    for (val, (i, k)) in lx.iter() {
        for j in 0..ny {
            t.add_triplet(i * ny + j, k * ny + j, *val);
        }
    }
    for (d, vd) in v.iter().enumerate() {
        if *vd == 0.0 {
            continue;
        }
        for (val, (j, l)) in ly.iter() {
            t.add_triplet(d * ny + j, d * ny + l, vd * val);
        }
    }
    Ok(FullOperator {
        grid: grid.clone(),
        gamma,
        matrix: t.to_csr(),
    })
}

impl FullOperator {
    pub fn grid(&self) -> &TensorGrid {
        &self.grid
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        spmv(&self.matrix, u, out);
    }
}

/// `I + c·A`, the implicit-step matrix.
pub fn step_matrix(a: &SparseMatrix, c: f64) -> SparseMatrix {
    shifted(a, 1.0, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Grid1D;
    use crate::linalg::symmetry_defect;
    use std::f64::consts::PI;

    fn line(a: f64, b: f64, n: usize) -> SpaceGrid {
        SpaceGrid::Line(Grid1D::new(a, b, n).unwrap())
    }

    #[test]
    fn pure_laplacian_ground_state() {
        let g = line(0.0, 1.0, 401);
        let b = CoefficientB::constant(&g, 1.0).unwrap();
        let op = assemble_mode_operator(&g, 0.0, 0.5, &b).unwrap();
        let e = smallest_eigenvalue(&op, 1e-10).unwrap();
        assert!((e.value - PI * PI).abs() < 1e-3 * PI * PI);
        assert_eq!(symmetry_defect(op.matrix()), 0.0);
    }

    #[test]
    fn potential_vanishes_at_origin() {
        let g = line(-1.0, 1.0, 21);
        let b = CoefficientB::constant(&g, 2.0).unwrap();
        for gamma in [0.25, 0.5, 1.0] {
            let op = assemble_mode_operator(&g, 1e4, gamma, &b).unwrap();
            assert_eq!(op.potential()[9], 0.0);
            assert!(op.potential().iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn rejects_gamma_outside_range() {
        let g = line(0.0, 1.0, 11);
        let b = CoefficientB::constant(&g, 1.0).unwrap();
        assert!(assemble_mode_operator(&g, 1.0, 0.0, &b).is_err());
        assert!(assemble_mode_operator(&g, 1.0, 1.5, &b).is_err());
        assert!(CoefficientB::constant(&g, 0.0).is_err());
    }

    #[test]
    fn fit_requires_span() {
        let pairs: Vec<(f64, f64)> = (0..5).map(|k| (10f64.powi(k) * 1.1, 1.0)).collect();
        assert!(fit_scaling_law(&pairs[..4], 1.0).is_err());
        assert!(fit_scaling_law(&pairs, 1.0).is_ok());
        let narrow: Vec<(f64, f64)> = (0..5).map(|k| (1.0 + k as f64, 1.0)).collect();
        assert!(fit_scaling_law(&narrow, 1.0).is_err());
    }
}
