//! State spaces built from y-modes: a single mode system, or the first N modes
//! of the full system in coordinates c[x·N + n].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use sprs::TriMat;

use crate::domain::{BoxRegion, IndexSet, SpaceGrid, TensorGrid};
use crate::error::{invalid, GrushinError, Result};
use crate::linalg::{spmv, symmetry_defect, to_dense, SparseMatrix};
use crate::operator::{assemble_mode_operator, CoefficientB, ModeOperator};
use crate::spectral::ModeBasis;

#[derive(Debug, Clone)]
pub struct ModalSystem {
    generator: SparseMatrix,
    /// Observation form: uᵀQu = ∫_ω|u|².
    obs: SparseMatrix,
    /// Uniform dof weight, ‖u‖² = weight·|u|².
    weight: f64,
    blocks: usize,
    mus: Vec<f64>,
    gamma: f64,
    xgrid: SpaceGrid,
    omega_x: Vec<bool>,
    y: Option<YSamples>,
}

/// Mode shapes on the interior y-nodes and the indicator of ω₂ there.
#[derive(Debug, Clone)]
struct YSamples {
    phi: Vec<Vec<f64>>,
    inside: Vec<bool>,
}

impl ModalSystem {
    /// Mode system observed on ω₁.
    pub fn mode(op: &ModeOperator, omega: &IndexSet) -> Result<Self> {
        let grid = op.grid();
        let w = grid.cell_volume();
        let mask = grid.dof_mask(omega);
        let n = grid.dof_count();
        let mut tri = TriMat::new((n, n));
        for (d, m) in mask.iter().enumerate() {
            if *m {
                tri.add_triplet(d, d, w);
            }
        }
        Self::assemble(
            op.matrix().clone(),
            tri.to_csr(),
            w,
            vec![op.mu()],
            op.gamma(),
            grid.clone(),
            mask,
        )
    }

    /// First `n_modes` modes of the full system; the observation couples modes
    /// through ∫_{ω₂} φ_n φ_m. The box lists the x axes, then y.
    pub fn truncated(
        grid: &TensorGrid,
        gamma: f64,
        b: &CoefficientB,
        basis: &ModeBasis,
        n_modes: usize,
        omega: &BoxRegion,
    ) -> Result<Self> {
        if n_modes == 0 || n_modes > basis.len() {
            return Err(invalid("n_modes", format!("need 1 ≤ n_modes ≤ {}", basis.len())));
        }
        let xg = grid.x();
        let dx = xg.dim();
        if omega.axes.len() != dx + 1 {
            return Err(GrushinError::InvalidDomain("observation box needs x axes then y".into()));
        }
        let xset = xg.subdomain_indices(&BoxRegion::new(omega.axes[..dx].to_vec()))?;
        let yset = grid.y().subdomain_indices(&BoxRegion::new(vec![omega.axes[dx]]))?;
        let wy = grid.y().quadrature_weights();
        let mut gram = vec![0.0; n_modes * n_modes];
        for i in 0..n_modes {
            for j in 0..n_modes {
                let (pi, pj) = (basis.phi(i), basis.phi(j));
                gram[i * n_modes + j] = yset.indices().iter().map(|&k| wy[k] * pi[k] * pj[k]).sum();
            }
        }
        let mask = xg.dof_mask(&xset);
        let wx = xg.cell_volume();
        let dim = xg.dof_count() * n_modes;
        let mut gen = TriMat::new((dim, dim));
        let mus = basis.mu_discrete()[..n_modes].to_vec();
        for (n, &mu) in mus.iter().enumerate() {
            let op = assemble_mode_operator(xg, mu, gamma, b)?;
            for (v, (r, c)) in op.matrix().iter() {
                gen.add_triplet(r * n_modes + n, c * n_modes + n, *v);
            }
        }
        let mut obs = TriMat::new((dim, dim));
        for (x, m) in mask.iter().enumerate() {
            if *m {
                for i in 0..n_modes {
                    for j in 0..n_modes {
                        let g = gram[i * n_modes + j];
                        if g != 0.0 {
                            obs.add_triplet(x * n_modes + i, x * n_modes + j, wx * g);
                        }
                    }
                }
            }
        }
        let mut sys = Self::assemble(gen.to_csr(), obs.to_csr(), wx, mus, gamma, xg.clone(), mask)?;
        let ny = grid.y().interior_count();
        sys.y = Some(YSamples {
            phi: (0..n_modes).map(|i| basis.phi_interior(i).to_vec()).collect(),
            inside: (0..ny).map(|j| yset.contains(j + 1)).collect(),
        });
        Ok(sys)
    }

    fn assemble(
        generator: SparseMatrix,
        obs: SparseMatrix,
        weight: f64,
        mus: Vec<f64>,
        gamma: f64,
        xgrid: SpaceGrid,
        omega_x: Vec<bool>,
    ) -> Result<Self> {
        let n = generator.rows();
        if generator.cols() != n || obs.rows() != n || obs.cols() != n {
            return Err(invalid("obs", "generator and observation form must be square of equal size"));
        }
        if symmetry_defect(&generator) > 1e-12 || symmetry_defect(&obs) > 1e-12 {
            return Err(invalid("obs", "generator and observation form must be symmetric"));
        }
        if !omega_x.iter().any(|m| *m) {
            return Err(GrushinError::EmptyRegion("observation set has no dofs".into()));
        }
        Ok(Self {
            generator,
            obs,
            weight,
            blocks: mus.len(),
            mus,
            gamma,
            xgrid,
            omega_x,
            y: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.rows()
    }
    pub fn generator(&self) -> &SparseMatrix {
        &self.generator
    }
    pub fn obs(&self) -> &SparseMatrix {
        &self.obs
    }
    pub fn weight(&self) -> f64 {
        self.weight
    }
    pub fn blocks(&self) -> usize {
        self.blocks
    }
    pub fn mus(&self) -> &[f64] {
        &self.mus
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn xgrid(&self) -> &SpaceGrid {
        &self.xgrid
    }
    pub fn x_dofs(&self) -> usize {
        self.dim() / self.blocks
    }
    /// x-dofs inside ω₁.
    pub fn omega_x(&self) -> &[bool] {
        &self.omega_x
    }

    /// Lowest `band` generator eigenpairs of every block.
    pub fn band_basis(&self, band: usize) -> (DMatrix<f64>, Vec<f64>) {
        block_band_basis(&self.generator, self.blocks, band)
    }

    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.weight * u.iter().map(|v| v * v).sum::<f64>()
    }

    /// ∫_ω |u|².
    pub fn obs_sq(&self, u: &[f64]) -> f64 {
        let mut qu = vec![0.0; u.len()];
        spmv(&self.obs, u, &mut qu);
        u.iter().zip(&qu).map(|(a, b)| a * b).sum()
    }

    /// 1_ω·Σ_n h_n(x)φ_n(y) on the tensor dofs (x-major); for a single mode
    /// system, 1_{ω₁}·h on the x-dofs.
    pub fn localized_field(&self, h: &[f64]) -> Vec<f64> {
        let nx = self.x_dofs();
        match &self.y {
            None => h.iter().zip(&self.omega_x).map(|(v, m)| if *m { *v } else { 0.0 }).collect(),
            Some(ys) => {
                let ny = ys.inside.len();
                let mut out = vec![0.0; nx * ny];
                for x in (0..nx).filter(|&x| self.omega_x[x]) {
                    for j in (0..ny).filter(|&j| ys.inside[j]) {
                        out[x * ny + j] = (0..self.blocks).map(|n| h[x * self.blocks + n] * ys.phi[n][j]).sum();
                    }
                }
                out
            }
        }
    }

    /// Inside-ω indicator on the layout of `localized_field`.
    pub fn omega_indicator(&self) -> Vec<bool> {
        match &self.y {
            None => self.omega_x.clone(),
            Some(ys) => self
                .omega_x
                .iter()
                .flat_map(|mx| ys.inside.iter().map(move |my| *mx && *my))
                .collect(),
        }
    }

    /// Coefficients of block `n` (one value per x-dof).
    pub fn block(&self, u: &[f64], n: usize) -> Vec<f64> {
        u.iter().skip(n).step_by(self.blocks).copied().collect()
    }

    pub fn set_block(&self, u: &mut [f64], n: usize, values: &[f64]) {
        for (x, v) in values.iter().enumerate() {
            u[x * self.blocks + n] = *v;
        }
    }
}

/// Lowest `band` eigenpairs of each diagonal block of the generator, embedded
/// in the full dof space.
pub fn block_band_basis(generator: &SparseMatrix, blocks: usize, band: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = generator.rows();
    let nb = blocks;
    let dense = to_dense(generator);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut lam = Vec::new();
    for b in 0..nb {
        let idx: Vec<usize> = (b..n).step_by(nb).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| dense[(idx[i], idx[j])]);
        let eig = SymmetricEigen::new(sub);
        let mut order: Vec<usize> = (0..idx.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        for &k in order.iter().take(band) {
            let mut v = DVector::zeros(n);
            for (i, &d) in idx.iter().enumerate() {
                v[d] = eig.eigenvectors[(i, k)];
            }
            cols.push(v);
            lam.push(eig.eigenvalues[k]);
        }
    }
    (DMatrix::from_columns(&cols), lam)
}
