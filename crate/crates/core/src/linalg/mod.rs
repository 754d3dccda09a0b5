//! Small dense/sparse kernels shared by the solvers.

mod banded;
mod cg;
mod dense;
mod solver;

pub use banded::BandedCholesky;
pub use cg::{conjugate_gradient, CgOptions, CgStats};
pub use dense::{observation_factor, StreamingQr};
pub use solver::{linear_solver_registry, LinearSolverKind, SpdSolver};

use sprs::{CsMat, TriMat};

pub type SparseMatrix = CsMat<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// `y = A x` for a CSR matrix.
pub fn spmv(a: &SparseMatrix, x: &[f64], y: &mut [f64]) {
    assert!(a.is_csr(), "spmv expects CSR storage");
    let indptr = a.indptr();
    let indptr = indptr.raw_storage();
    let idx = a.indices();
    let val = a.data();
    for (row, out) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in indptr[row]..indptr[row + 1] {
            s += val[k] * x[idx[k]];
        }
        *out = s;
    }
}

pub fn spmv_alloc(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    spmv(a, x, &mut y);
    y
}

/// Largest |a_ij - a_ji|.
pub fn symmetry_defect(a: &SparseMatrix) -> f64 {
    let t = a.transpose_view().to_csr();
    let mut worst = 0.0f64;
    for (v, (i, j)) in a.iter() {
        let w = t.get(i, j).copied().unwrap_or(0.0);
        worst = worst.max((v - w).abs());
    }
    for (v, (i, j)) in t.iter() {
        if a.get(i, j).is_none() {
            worst = worst.max(v.abs());
        }
    }
    worst
}

pub fn half_bandwidth(a: &SparseMatrix) -> usize {
    a.iter().map(|(_, (i, j))| i.abs_diff(j)).max().unwrap_or(0)
}

pub fn diagonal(a: &SparseMatrix) -> Vec<f64> {
    (0..a.rows()).map(|i| a.get(i, i).copied().unwrap_or(0.0)).collect()
}

/// `alpha * I + beta * A`, CSR.
pub fn shifted(a: &SparseMatrix, alpha: f64, beta: f64) -> SparseMatrix {
    let n = a.rows();
    let mut tri = TriMat::with_capacity((n, n), a.nnz() + n);
    for (v, (i, j)) in a.iter() {
        tri.add_triplet(i, j, beta * v);
    }
    for i in 0..n {
        tri.add_triplet(i, i, alpha);
    }
    tri.to_csr()
}

/// Dense copy, mostly for small oracles and modal solvers.
pub fn to_dense(a: &SparseMatrix) -> nalgebra::DMatrix<f64> {
    let mut m = nalgebra::DMatrix::zeros(a.rows(), a.cols());
    for (v, (i, j)) in a.iter() {
        m[(i, j)] += *v;
    }
    m
}

/// ln(e^a + e^b) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Trapezoid weights for `n` equispaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

/// Least-squares line through (x, y): returns (slope, intercept, rms residual).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}
