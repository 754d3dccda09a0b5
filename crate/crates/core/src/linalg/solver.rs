use std::collections::BTreeMap;
use std::sync::Arc;

use super::{conjugate_gradient, diagonal, spmv, BandedCholesky, CgOptions, SparseMatrix};
use crate::error::{GrushinError, Result};
use crate::registry::Registry;

/// A prepared solver for one fixed SPD matrix.
pub trait SpdSolver: Send + Sync {
    fn solve(&self, rhs: &[f64], out: &mut [f64]) -> Result<()>;
    fn dim(&self) -> usize;
}

/// Factory for [`SpdSolver`]s, selectable by name.
pub trait LinearSolverKind: Send + Sync {
    fn name(&self) -> &'static str;
    fn prepare(&self, a: &SparseMatrix) -> Result<Box<dyn SpdSolver>>;
}

struct BandedKind;
struct CgKind;

struct BandedSolver(BandedCholesky);

impl SpdSolver for BandedSolver {
    fn solve(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(rhs);
        self.0.solve_in_place(out);
        Ok(())
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
}

struct CgSolver {
    a: SparseMatrix,
    inv_diag: Vec<f64>,
}

impl SpdSolver for CgSolver {
    fn solve(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let opts = CgOptions {
            tol: 1e-14,
            max_iter: 20 * rhs.len() + 100,
        };
        conjugate_gradient(
            "linear solve",
            |x, y| spmv(&self.a, x, y),
            rhs,
            out,
            Some(&self.inv_diag),
            opts,
        )?;
        Ok(())
    }
    fn dim(&self) -> usize {
        self.a.rows()
    }
}

impl LinearSolverKind for BandedKind {
    fn name(&self) -> &'static str {
        "banded-cholesky"
    }
    fn prepare(&self, a: &SparseMatrix) -> Result<Box<dyn SpdSolver>> {
        Ok(Box::new(BandedSolver(BandedCholesky::factor(a)?)))
    }
}

impl LinearSolverKind for CgKind {
    fn name(&self) -> &'static str {
        "jacobi-cg"
    }
    fn prepare(&self, a: &SparseMatrix) -> Result<Box<dyn SpdSolver>> {
        let d = diagonal(a);
        if d.iter().any(|v| *v <= 0.0) {
            return Err(GrushinError::NotPositiveDefinite {
                pivot: d.iter().position(|v| *v <= 0.0).unwrap_or(0),
                value: 0.0,
            });
        }
        Ok(Box::new(CgSolver {
            a: a.clone(),
            inv_diag: d.iter().map(|v| 1.0 / v).collect(),
        }))
    }
}

pub fn linear_solver_registry() -> Registry<dyn LinearSolverKind> {
    let mut map: BTreeMap<&'static str, Arc<dyn LinearSolverKind>> = BTreeMap::new();
    map.insert("banded-cholesky", Arc::new(BandedKind));
    map.insert("jacobi-cg", Arc::new(CgKind));
    Registry::from_map("linear solver", map)
}
