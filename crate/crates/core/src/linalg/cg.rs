use super::{axpy, dot, norm2};
use crate::error::{GrushinError, Result};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual target ‖r‖/‖b‖.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients for an SPD operator given as a closure.
///
/// `x` holds the initial guess on entry. `precond`, when present, is the
/// inverse diagonal used for Jacobi preconditioning.
pub fn conjugate_gradient<F>(
    what: &'static str,
    apply: F,
    b: &[f64],
    x: &mut [f64],
    precond: Option<&[f64]>,
    opts: CgOptions,
) -> Result<CgStats>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut stats = CgStats::default();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(stats);
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let precondition = |r: &[f64], z: &mut [f64]| match precond {
        Some(d) => {
            for i in 0..n {
                z[i] = d[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm2(&r) / bnorm;
    stats.history.push(rel);
    while rel > opts.tol {
        if stats.iterations >= opts.max_iter {
            let tail = stats.history.len().saturating_sub(8);
            return Err(GrushinError::Stagnation {
                what,
                history: stats.history[tail..].to_vec(),
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(GrushinError::NoConvergence {
                what,
                iterations: stats.iterations,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        stats.iterations += 1;
        rel = norm2(&r) / bnorm;
        stats.history.push(rel);
    }
    stats.relative_residual = rel;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_diagonal_system() {
        let d = [1.0, 2.0, 5.0, 10.0];
        let b = [1.0, 1.0, 1.0, 1.0];
        let mut x = [0.0; 4];
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..4 {
                out[i] = d[i] * v[i];
            }
        };
        let s = conjugate_gradient("test", apply, &b, &mut x, None, CgOptions::default()).unwrap();
        assert!(s.iterations <= 4);
        for i in 0..4 {
            assert!((x[i] - 1.0 / d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_reports_stagnation() {
        let apply = |v: &[f64], out: &mut [f64]| {
            out[0] = v[0];
            out[1] = 1e-9 * v[1];
        };
        let mut x = [0.0; 2];
        let opts = CgOptions { tol: 1e-30, max_iter: 1 };
        let err = conjugate_gradient("test", apply, &[1.0, 1.0], &mut x, None, opts).unwrap_err();
        assert!(matches!(err, GrushinError::Stagnation { .. }));
    }
}
