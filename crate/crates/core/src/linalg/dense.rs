use nalgebra::{DMatrix, SymmetricEigen};

use super::{to_dense, SparseMatrix};

/// Rows L with LᵀL = obs (eigenvalues below 1e−14·max dropped).
pub fn observation_factor(obs: &SparseMatrix) -> DMatrix<f64> {
    let n = obs.rows();
    let diagonal = obs.iter().all(|(_, (r, c))| r == c);
    if diagonal {
        let rows: Vec<(usize, f64)> = obs
            .iter()
            .filter(|(v, _)| **v > 0.0)
            .map(|(v, (r, _))| (r, v.sqrt()))
            .collect();
        let mut l = DMatrix::zeros(rows.len(), n);
        for (i, (c, v)) in rows.into_iter().enumerate() {
            l[(i, c)] = v;
        }
        return l;
    }
    let eig = SymmetricEigen::new(to_dense(obs));
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-14 * top).collect();
    let mut l = DMatrix::zeros(keep.len(), n);
    for (row, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for c in 0..n {
            l[(row, c)] = s * eig.eigenvectors[(c, i)];
        }
    }
    l
}

/// Upper-triangular factor of a tall matrix fed in row blocks.
pub struct StreamingQr {
    n: usize,
    r: Option<DMatrix<f64>>,
    pending: Vec<DMatrix<f64>>,
    pending_rows: usize,
}

impl StreamingQr {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            r: None,
            pending: Vec::new(),
            pending_rows: 0,
        }
    }

    pub fn push(&mut self, block: DMatrix<f64>) {
        self.pending_rows += block.nrows();
        self.pending.push(block);
        if self.pending_rows >= 4 * self.n {
            self.merge();
        }
    }

    fn merge(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let head = self.r.as_ref().map_or(0, |r| r.nrows());
        let mut stacked = DMatrix::zeros(head + self.pending_rows, self.n);
        if let Some(r) = &self.r {
            stacked.rows_mut(0, head).copy_from(r);
        }
        let mut at = head;
        for b in self.pending.drain(..) {
            stacked.rows_mut(at, b.nrows()).copy_from(&b);
            at += b.nrows();
        }
        self.pending_rows = 0;
        self.r = Some(stacked.qr().r());
    }

    pub fn finish(mut self) -> DMatrix<f64> {
        self.merge();
        let r = self.r.unwrap_or_else(|| DMatrix::zeros(0, self.n));
        // pad to n×n when fewer rows than columns were seen
        let mut out = DMatrix::zeros(self.n, self.n);
        out.rows_mut(0, r.nrows().min(self.n)).copy_from(&r.rows(0, r.nrows().min(self.n)));
        out
    }
}

