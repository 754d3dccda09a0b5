//! Dirichlet modes of −d²/dy² on Ω₂, dyadic blocks and block projections.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::domain::{Grid1D, IndexSet, TensorGrid};
use crate::error::{GrushinError, Result};
use crate::linalg::{linear_fit, to_dense};
use crate::registry::Registry;

/// Eigenpairs (μ_n, φ_n), n = 1..N, sampled on every node of the y-grid.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    grid: Grid1D,
    kind: &'static str,
    mu: Vec<f64>,
    mu_discrete: Vec<f64>,
    phi: Vec<Vec<f64>>,
    defect: f64,
}

/// Strategy producing the mode basis.
pub trait BasisBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    /// Returns (μ, μ_discrete, samples on all nodes).
    fn build(&self, grid: &Grid1D, count: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)>;
}

pub struct AnalyticSine;
pub struct FdEigen;

impl BasisBuilder for AnalyticSine {
    fn name(&self) -> &'static str {
        "analytic-sine"
    }
    fn build(&self, grid: &Grid1D, count: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let (a, l, h) = (grid.a(), grid.length(), grid.h());
        let amp = (2.0 / l).sqrt();
        let mut mu = Vec::with_capacity(count);
        let mut mu_d = Vec::with_capacity(count);
        let mut phi = Vec::with_capacity(count);
        for n in 1..=count {
            let k = n as f64 * PI / l;
            mu.push(k * k);
            let s = (0.5 * k * h).sin();
            mu_d.push(4.0 * s * s / (h * h));
            let mut v: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|y| amp * (k * (y - a)).sin())
                .collect();
            let last = v.len() - 1;
            v[0] = 0.0;
            v[last] = 0.0;
            phi.push(v);
        }
        Ok((mu, mu_d, phi))
    }
}

impl BasisBuilder for FdEigen {
    fn name(&self) -> &'static str {
        "fd-eigen"
    }
    fn build(&self, grid: &Grid1D, count: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let dense = to_dense(&grid.neg_laplacian());
        let eig = SymmetricEigen::new(dense);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let scale = 1.0 / grid.h().sqrt();
        let mut mu = Vec::with_capacity(count);
        let mut phi = Vec::with_capacity(count);
        for &k in order.iter().take(count) {
            mu.push(eig.eigenvalues[k]);
            let col = eig.eigenvectors.column(k);
            let sign = if col[0] < 0.0 { -1.0 } else { 1.0 };
            let mut v = vec![0.0; grid.len()];
            for (i, c) in col.iter().enumerate() {
                v[i + 1] = sign * scale * c;
            }
            phi.push(v);
        }
        Ok((mu.clone(), mu, phi))
    }
}

pub fn basis_registry() -> Registry<dyn BasisBuilder> {
    let mut map: BTreeMap<&'static str, Arc<dyn BasisBuilder>> = BTreeMap::new();
    map.insert("analytic-sine", Arc::new(AnalyticSine));
    map.insert("fd-eigen", Arc::new(FdEigen));
    Registry::from_map("mode basis", map)
}

/// Analytic sine basis (the default for an interval).
pub fn dirichlet_eigenpairs(grid_y: &Grid1D, count: usize) -> Result<ModeBasis> {
    ModeBasis::build(grid_y, count, &AnalyticSine)
}

impl ModeBasis {
    pub fn build(grid: &Grid1D, count: usize, builder: &dyn BasisBuilder) -> Result<Self> {
        if count == 0 || 2 * count > grid.interior_count() {
            return Err(GrushinError::UnderResolved(format!(
                "{count} modes need at least {} interior y-nodes, grid has {}",
                2 * count.max(1),
                grid.interior_count()
            )));
        }
        let (mu, mu_discrete, phi) = builder.build(grid, count)?;
        let mut basis = Self {
            grid: grid.clone(),
            kind: builder.name(),
            mu,
            mu_discrete,
            phi,
            defect: 0.0,
        };
        basis.defect = basis.orthonormality_defect();
        if basis.defect > 1e-10 {
            basis.reorthonormalize();
            basis.defect = basis.orthonormality_defect();
        }
        Ok(basis)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }
    pub fn kind(&self) -> &'static str {
        self.kind
    }
    pub fn len(&self) -> usize {
        self.mu.len()
    }
    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
    /// Eigenvalues μ_n, index 0 ↔ n = 1.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    /// Eigenvalues of the FD Laplacian on the sampled modes.
    pub fn mu_discrete(&self) -> &[f64] {
        &self.mu_discrete
    }
    pub fn phi(&self, idx: usize) -> &[f64] {
        &self.phi[idx]
    }
    pub fn defect(&self) -> f64 {
        self.defect
    }

    fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let h = self.grid.h();
        let n = u.len();
        h * u[1..n - 1]
            .iter()
            .zip(&v[1..n - 1])
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..self.len() {
            for n in m..self.len() {
                let target = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(&self.phi[m], &self.phi[n]) - target).abs());
            }
        }
        worst
    }

    fn reorthonormalize(&mut self) {
        for n in 0..self.len() {
            for m in 0..n {
                let c = self.inner(&self.phi[n], &self.phi[m]);
                let pm = self.phi[m].clone();
                for (a, b) in self.phi[n].iter_mut().zip(&pm) {
                    *a -= c * b;
                }
            }
            let nrm = self.inner(&self.phi[n], &self.phi[n]).sqrt();
            self.phi[n].iter_mut().for_each(|v| *v /= nrm);
        }
    }

    /// φ_n restricted to interior y-nodes.
    pub fn phi_interior(&self, idx: usize) -> &[f64] {
        let n = self.grid.len();
        &self.phi[idx][1..n - 1]
    }

    /// Coefficient fields u_n(x) = ∫ u(x,y) φ_n(y) dy for every mode.
    pub fn decompose(&self, grid: &TensorGrid, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.decompose_one(grid, u, k)).collect()
    }

    /// u_n(x) for a single mode (0-based index).
    pub fn decompose_one(&self, grid: &TensorGrid, u: &[f64], idx: usize) -> Vec<f64> {
        let ny = grid.y().interior_count();
        let h = self.grid.h();
        let p = self.phi_interior(idx);
        (0..grid.x().dof_count())
            .map(|d| {
                h * u[d * ny..(d + 1) * ny]
                    .iter()
                    .zip(p)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    /// Σ_n u_n(x) φ_n(y) over the given (mode index, coefficient) pairs.
    pub fn synthesize<'a, I>(&self, grid: &TensorGrid, parts: I) -> Vec<f64>
    where
        I: IntoIterator<Item = (usize, &'a [f64])>,
    {
        let ny = grid.y().interior_count();
        let mut out = vec![0.0; grid.dof_count()];
        for (k, coeff) in parts {
            let p = self.phi_interior(k);
            for (d, c) in coeff.iter().enumerate() {
                for (j, pj) in p.iter().enumerate() {
                    out[d * ny + j] += c * pj;
                }
            }
        }
        out
    }
}

/// Modes with μ_n ≤ 2^{2j}; `members` holds 1-based mode numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockIndex {
    pub j: u32,
    pub cutoff: f64,
    pub members: Vec<usize>,
}

impl BlockIndex {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn contains(&self, n: usize) -> bool {
        self.members.contains(&n)
    }
}

pub fn block_cutoff(j: u32) -> f64 {
    4f64.powi(j as i32)
}

pub fn block_members(basis: &ModeBasis, j: u32) -> Result<BlockIndex> {
    if j == 0 {
        return Err(crate::error::invalid("j", "blocks start at j = 1"));
    }
    let cutoff = block_cutoff(j);
    let members = basis
        .mu()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m <= cutoff)
        .map(|(i, _)| i + 1)
        .collect();
    Ok(BlockIndex { j, cutoff, members })
}

/// Smallest j ≥ 1 with μ ≤ 2^{2j}.
pub fn block_j_min(mu: f64) -> u32 {
    let mut j = 1;
    while block_cutoff(j) < mu {
        j += 1;
    }
    j
}

/// Π_j u on the tensor grid.
pub fn project_block(grid: &TensorGrid, basis: &ModeBasis, u: &[f64], j: u32) -> Result<Vec<f64>> {
    let block = block_members(basis, j)?;
    Ok(project_modes(grid, basis, u, &block.members))
}

/// Projection onto span{φ_n : n ∈ modes} (1-based numbers).
pub fn project_modes(grid: &TensorGrid, basis: &ModeBasis, u: &[f64], modes: &[usize]) -> Vec<f64> {
    let ny = grid.y().interior_count();
    let nx = grid.x().dof_count();
    let h = basis.grid().h();
    let mut out = vec![0.0; u.len()];
    for &n in modes {
        let p = basis.phi_interior(n - 1);
        for d in 0..nx {
            let row = &u[d * ny..(d + 1) * ny];
            let c = h * row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
            for (o, pj) in out[d * ny..(d + 1) * ny].iter_mut().zip(p) {
                *o += c * pj;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SpectralInequality {
    pub mu: f64,
    pub modes: usize,
    pub constant: f64,
    pub log_constant_over_sqrt_mu: f64,
    pub condition: f64,
}

/// Largest eigenvalue of the pencil (I, mass form on ω₂) over modes with μ_k ≤ μ.
pub fn spectral_inequality_constant(
    basis: &ModeBasis,
    omega2: &IndexSet,
    mu: f64,
) -> Result<SpectralInequality> {
    if omega2.is_empty() {
        return Err(GrushinError::EmptyRegion("ω₂".into()));
    }
    let k = basis.mu().iter().filter(|m| **m <= mu).count();
    if k == 0 {
        return Err(GrushinError::EmptyRegion(format!("no mode with μ ≤ {mu}")));
    }
    let w = basis.grid().quadrature_weights();
    let mut g = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (pa, pb) = (basis.phi(a), basis.phi(b));
            let s: f64 = omega2.indices().iter().map(|&i| w[i] * pa[i] * pb[i]).sum();
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    let ev = SymmetricEigen::new(g).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(0.0, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(lo > 1e-13 * hi) {
        return Err(GrushinError::Singular(format!(
            "restricted mass form on ω₂ has condition number {condition:e} ({k} modes)"
        )));
    }
    let constant = 1.0 / lo;
    Ok(SpectralInequality {
        mu,
        modes: k,
        constant,
        log_constant_over_sqrt_mu: constant.ln() / mu.sqrt(),
        condition,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthFit {
    /// Coefficient of √μ in ln C ≈ c + slope·√μ.
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn fit_spectral_growth(points: &[SpectralInequality]) -> Result<GrowthFit> {
    if points.len() < 2 {
        return Err(crate::error::invalid("points", "need at least two samples"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.mu.sqrt()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.constant.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&x, &y);
    Ok(GrowthFit {
        slope,
        intercept,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BoxRegion, SpaceGrid};

    #[test]
    fn classical_spectra() {
        let g = Grid1D::new(0.0, PI, 101).unwrap();
        let b = dirichlet_eigenpairs(&g, 5).unwrap();
        assert!((b.mu()[0] - 1.0).abs() < 1e-12);
        assert!((b.mu()[1] - 4.0).abs() < 1e-12);
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let b = dirichlet_eigenpairs(&g, 5).unwrap();
        assert!((b.mu()[1] - 4.0 * PI * PI).abs() < 1e-10);
        assert!(b.defect() < 1e-12);
    }

    #[test]
    fn resolution_guard() {
        let g = Grid1D::new(0.0, 1.0, 11).unwrap();
        assert!(dirichlet_eigenpairs(&g, 4).is_ok());
        assert!(matches!(
            dirichlet_eigenpairs(&g, 5),
            Err(GrushinError::UnderResolved(_))
        ));
    }

    #[test]
    fn block_examples() {
        let g = Grid1D::new(0.0, 1.0, 201).unwrap();
        let b = dirichlet_eigenpairs(&g, 20).unwrap();
        assert_eq!(block_members(&b, 2).unwrap().members, vec![1]);
        assert_eq!(block_members(&b, 3).unwrap().members, vec![1, 2]);
        assert_eq!(block_members(&b, 1).unwrap().members, Vec::<usize>::new());
        assert_eq!(block_members(&b, 20).unwrap().members.len(), 20);
        assert_eq!(block_j_min(16.0), 2);
        assert_eq!(block_j_min(16.0 + 1e-9), 3);
    }

    #[test]
    fn full_observation_spectral_constant_is_one() {
        let g = Grid1D::new(0.0, 1.0, 101).unwrap();
        let b = dirichlet_eigenpairs(&g, 10).unwrap();
        let full = g.subdomain_indices(&BoxRegion::interval(0.0, 1.0)).unwrap();
        let s = spectral_inequality_constant(&b, &full, 500.0).unwrap();
        assert!((s.constant - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fd_basis_matches_sine_basis() {
        let g = Grid1D::new(0.0, 1.0, 41).unwrap();
        let a = dirichlet_eigenpairs(&g, 4).unwrap();
        let f = ModeBasis::build(&g, 4, &FdEigen).unwrap();
        for k in 0..4 {
            assert!((a.mu_discrete()[k] - f.mu()[k]).abs() < 1e-9 * f.mu()[k]);
            let dev = a
                .phi(k)
                .iter()
                .zip(f.phi(k))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(dev < 1e-8, "mode {k} deviates by {dev}");
        }
    }

    #[test]
    fn projection_identity_on_block() {
        let t = TensorGrid::new(
            SpaceGrid::Line(Grid1D::new(-1.0, 1.0, 21).unwrap()),
            Grid1D::new(0.0, 1.0, 31).unwrap(),
        );
        let b = dirichlet_eigenpairs(t.y(), 10).unwrap();
        let xprof: Vec<f64> = (0..t.x().dof_count()).map(|d| (d as f64).cos()).collect();
        let u = b.synthesize(&t, [(0usize, xprof.as_slice())]);
        let p = project_block(&t, &b, &u, 2).unwrap();
        let err = u.iter().zip(&p).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}
