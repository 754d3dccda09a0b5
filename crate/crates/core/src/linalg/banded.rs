use super::{half_bandwidth, SparseMatrix};
use crate::error::{GrushinError, Result};

/// Cholesky factor of an SPD band matrix, stored row-wise: `l[i*(p+1) + k] = L[i, i-k]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    p: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.rows();
        let p = half_bandwidth(a);
        let w = p + 1;
        let mut l = vec![0.0; n * w];
        for (v, (i, j)) in a.iter() {
            if j <= i {
                l[i * w + (i - j)] += *v;
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(p);
            for j in j0..=i {
                let mut s = l[i * w + (i - j)];
                let m0 = j0.max(j.saturating_sub(p));
                for m in m0..j {
                    s -= l[i * w + (i - m)] * l[j * w + (j - m)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(GrushinError::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(Self { n, p, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.p
    }

    /// Overwrites `x` (holding the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, p, w) = (self.n, self.p, self.p + 1);
        for i in 0..n {
            let mut s = x[i];
            for j in i.saturating_sub(p)..i {
                s -= self.l[i * w + (i - j)] * x[j];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n.min(i + p + 1) {
                s -= self.l[j * w + (j - i)] * x[j];
            }
            x[i] = s / self.l[i * w];
        }
    }
}
