//! Dyadic time/frequency schedule and the δ/A/B recursion, all exponentials in log space.

use serde::Serialize;

use crate::error::{invalid, GrushinError, Result};

/// Largest ln B̃ accepted before the recursion is declared to overflow.
const LN_OVERFLOW: f64 = 700.0;

/// p(γ) = (1+γ)/(1−γ) for γ ∈ [1/2, 1), 2(1+γ)/(1−2γ) for γ ∈ (0, 1/2).
pub fn p_exponent(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("p(γ) needs γ ∈ (0,1), got {gamma}")));
    }
    Ok(if gamma >= 0.5 {
        (1.0 + gamma) / (1.0 - gamma)
    } else {
        2.0 * (1.0 + gamma) / (1.0 - 2.0 * gamma)
    })
}

/// min{(1−γ)/(1+γ), 1/p(γ)}: the open upper bound for ρ.
pub fn rho_supremum(gamma: f64) -> Result<f64> {
    let p = p_exponent(gamma)?;
    Ok(((1.0 - gamma) / (1.0 + gamma)).min(1.0 / p))
}

/// λ(2ⁿ) = c_*·2^{2n/(1+γ)}.
pub fn lambda_cutoff(n: usize, c_star: f64, gamma: f64) -> f64 {
    c_star * (2.0 * n as f64 / (1.0 + gamma)).exp2()
}

#[derive(Debug, Clone, Serialize)]
pub struct LrSchedule {
    pub t: f64,
    pub gamma: f64,
    pub rho: f64,
    pub k: f64,
    /// τ_1..τ_J (index 0 holds τ_1).
    pub tau: Vec<f64>,
    /// α_0..α_J.
    pub alpha: Vec<f64>,
    /// Whether 2/(1+γ) − ρ > 1 and ρ is inside the admissible interval.
    pub admissible: bool,
}

/// Schedule with ρ = ρ_fraction·sup; rejects inadmissible (γ, ρ).
pub fn build_schedule(t: f64, gamma: f64, rho_fraction: f64, depth: usize) -> Result<LrSchedule> {
    if !(rho_fraction > 0.0 && rho_fraction < 1.0) {
        return Err(invalid("rho_fraction", format!("must lie in (0,1), got {rho_fraction}")));
    }
    let rho = rho_fraction * rho_supremum(gamma)?;
    let s = LrSchedule::with_rho(t, gamma, rho, depth)?;
    if !s.admissible {
        return Err(GrushinError::Hypothesis(format!(
            "2/(1+γ) − ρ = {} is not > 1",
            2.0 / (1.0 + gamma) - rho
        )));
    }
    Ok(s)
}

impl LrSchedule {
    /// Schedule at an explicit ρ > 0 without the admissibility requirement
    /// (the flag records whether it holds).
    pub fn with_rho(t: f64, gamma: f64, rho: f64, depth: usize) -> Result<Self> {
        if !(t > 0.0) {
            return Err(invalid("T", format!("must be positive, got {t}")));
        }
        if !(rho > 0.0) || depth == 0 {
            return Err(invalid("rho/depth", "need ρ > 0 and depth ≥ 1"));
        }
        let k = t * (rho.exp2() - 1.0) / 2.0;
        let tau: Vec<f64> = (1..=depth).map(|j| k * (-(j as f64) * rho).exp2()).collect();
        let mut alpha = Vec::with_capacity(depth + 1);
        alpha.push(0.0);
        for tj in &tau {
            alpha.push(alpha.last().unwrap() + 2.0 * tj);
        }
        let in_range = rho_supremum(gamma).map(|s| rho < s).unwrap_or(false);
        let admissible = in_range && 2.0 / (1.0 + gamma) - rho > 1.0;
        Ok(Self {
            t,
            gamma,
            rho,
            k,
            tau,
            alpha,
            admissible,
        })
    }

    pub fn depth(&self) -> usize {
        self.tau.len()
    }

    /// τ_n for 1-based n.
    pub fn tau_n(&self, n: usize) -> f64 {
        self.tau[n - 1]
    }

    /// I_n = (T − α_{n−1} − τ_n, T − α_{n−1}).
    pub fn i_interval(&self, n: usize) -> (f64, f64) {
        let hi = self.t - self.alpha[n - 1];
        (hi - self.tau_n(n), hi)
    }

    /// J_n = (T − α_n, T − α_{n−1}).
    pub fn j_interval(&self, n: usize) -> (f64, f64) {
        (self.t - self.alpha[n], self.t - self.alpha[n - 1])
    }

    /// T − Σ_{j≤J} 2τ_j, equal to T·2^{−Jρ} analytically.
    pub fn truncation_defect(&self) -> f64 {
        self.t - self.alpha[self.depth()]
    }

    pub fn analytic_defect(&self) -> f64 {
        self.t * (-(self.depth() as f64) * self.rho).exp2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecursionConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_star: f64,
}

impl RecursionConstants {
    /// All ones.
    pub fn toy() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c_star: 1.0,
        }
    }
}

/// Sequences indexed from n = 1 (slot 0), stored as natural logs.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionState {
    pub constants: RecursionConstants,
    pub gamma: f64,
    pub ln_delta: Vec<f64>,
    pub ln_a: Vec<f64>,
    pub ln_b: Vec<f64>,
    pub ln_b_tilde: Vec<f64>,
    pub ln_lambda: Vec<f64>,
}

fn ln_add(a: f64, b: f64) -> f64 {
    crate::linalg::log_add_exp(a, b)
}

/// Runs the recursion up to n = N (needs schedule depth ≥ N).
pub fn run_recursion(schedule: &LrSchedule, c: RecursionConstants, n_max: usize) -> Result<RecursionState> {
    if !(c.c1 > 0.0 && c.c2 > 0.0 && c.c3 > 0.0 && c.c_star > 0.0) {
        return Err(invalid("constants", "C1, C2, C3, c* must be positive"));
    }
    if n_max == 0 || n_max > schedule.depth() {
        return Err(invalid("N", format!("need 1 ≤ N ≤ depth = {}", schedule.depth())));
    }
    let g = schedule.gamma;
    let rate = schedule.rho + 2.0 / (1.0 + g);
    let ln2 = std::f64::consts::LN_2;
    let mut st = RecursionState {
        constants: c,
        gamma: g,
        ln_delta: vec![0.0],
        ln_a: vec![c.c2.ln() - rate * ln2],
        ln_b: vec![c.c3.ln() - lambda_cutoff(1, c.c_star, g) * schedule.tau_n(1)],
        ln_b_tilde: Vec::new(),
        ln_lambda: vec![lambda_cutoff(1, c.c_star, g).ln()],
    };
    st.ln_b_tilde.push(st.ln_b[0] + c.c1 * 2.0);
    for n in 1..n_max {
        let bt = st.ln_b_tilde[n - 1];
        if bt > LN_OVERFLOW {
            return Err(GrushinError::Overflow {
                step: n,
                hint: format!("ln B̃ = {bt:.1} before the decay regime; increase T or c*"),
            });
        }
        let np1 = n + 1;
        let lam = lambda_cutoff(np1, c.c_star, g);
        let tau = schedule.tau_n(np1);
        let ln_delta = ln_add(0.0, bt).max(2f64.ln());
        let ln_tail = ln_delta + c.c2.ln() - (np1 as f64) * rate * ln2;
        let ln_a = st.ln_a[n - 1].max(ln_add(st.ln_b[n - 1] - lam.ln(), ln_tail));
        let ln_b = ln_add(
            ln2 + st.ln_b[n - 1] - 4.0 * lam * tau,
            ln_delta + c.c3.ln() - lam * tau,
        );
        st.ln_delta.push(ln_delta);
        st.ln_a.push(ln_a);
        st.ln_b.push(ln_b);
        st.ln_b_tilde.push(ln_b + c.c1 * (np1 as f64 * ln2).exp());
        st.ln_lambda.push(lam.ln());
    }
    Ok(st)
}

impl RecursionState {
    pub fn len(&self) -> usize {
        self.ln_delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_delta.is_empty()
    }

    /// Smallest N₀ with δ_n = 2 for every N₀ ≤ n ≤ N (n ≥ 2).
    pub fn n0_delta_two(&self) -> Option<usize> {
        let two = 2f64.ln();
        let mut n0 = None;
        for n in (2..=self.len()).rev() {
            if self.ln_delta[n - 1] == two {
                n0 = Some(n);
            } else {
                break;
            }
        }
        n0
    }

    /// Smallest N₁ with A_n = A_N for N₁ ≤ n ≤ N.
    pub fn n1_a_constant(&self) -> Option<usize> {
        let last = *self.ln_a.last()?;
        let mut n1 = self.len();
        for n in (1..self.len()).rev() {
            if self.ln_a[n - 1] == last {
                n1 = n;
            } else {
                break;
            }
        }
        (n1 < self.len()).then_some(n1)
    }

    /// 1-based index of the maximum of B̃.
    pub fn b_tilde_peak(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.ln_b_tilde.iter().enumerate() {
            if *v > self.ln_b_tilde[best] {
                best = i;
            }
        }
        best + 1
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AssembledConstant {
    pub delta_star: f64,
    pub a_inf: f64,
    pub c: f64,
    pub n0_delta2: usize,
    pub n1_a_const: usize,
}

/// C = max{δ*, max A_n}; requires the δ = 2 regime and a stabilized A.
pub fn assemble_constant(st: &RecursionState) -> Result<AssembledConstant> {
    let n0 = st
        .n0_delta_two()
        .filter(|&n0| n0 < st.len())
        .ok_or_else(|| GrushinError::RegimeNotReached(format!("δ_N ≠ 2 at N = {}", st.len())))?;
    let n1 = st
        .n1_a_constant()
        .ok_or_else(|| GrushinError::RegimeNotReached(format!("A_n still growing at N = {}", st.len())))?;
    let delta_star = st.ln_delta.iter().cloned().fold(f64::MIN, f64::max).exp();
    let a_inf = st.ln_a.iter().cloned().fold(f64::MIN, f64::max).exp();
    Ok(AssembledConstant {
        delta_star,
        a_inf,
        c: delta_star.max(a_inf),
        n0_delta2: n0,
        n1_a_const: n1,
    })
}

/// Defaults used by the CLI and the acceptance suite.
#[derive(Debug, Clone, Copy)]
pub struct LrDefaults {
    pub t: f64,
    pub gamma: f64,
    pub rho_fraction: f64,
    pub depth: usize,
}

impl Default for LrDefaults {
    fn default() -> Self {
        Self {
            t: 10.0,
            gamma: 0.5,
            rho_fraction: 0.75,
            depth: 24,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_values() {
        assert!((p_exponent(0.5).unwrap() - 3.0).abs() < 1e-14);
        assert!((p_exponent(0.25).unwrap() - 5.0).abs() < 1e-14);
        assert!((p_exponent(0.75).unwrap() - 7.0).abs() < 1e-14);
        assert!(p_exponent(1.0).is_err());
    }

    #[test]
    fn cutoffs() {
        assert!((lambda_cutoff(3, 1.0, 1.0) - 8.0).abs() < 1e-12);
        assert!((lambda_cutoff(2, 1.0, 1.0 / 3.0) - 8.0).abs() < 1e-12);
        assert!((lambda_cutoff(1, 2.0, 1.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_closed_form() {
        let s = LrSchedule::with_rho(1.0, 0.5, 0.25, 40).unwrap();
        assert!((s.k - (2f64.powf(0.25) - 1.0) / 2.0).abs() < 1e-15);
        assert!((s.k - 0.0946036).abs() < 1e-7);
        assert!((s.tau_n(1) - 0.079552).abs() < 1e-6);
        assert!((s.truncation_defect() - s.analytic_defect()).abs() < 1e-13);
        for n in 1..=s.depth() {
            let (il, ih) = s.i_interval(n);
            let (jl, jh) = s.j_interval(n);
            assert!(jl <= il && ih <= jh);
            assert!((ih - il - s.tau_n(n)).abs() < 1e-14);
            assert!((jh - jl - 2.0 * s.tau_n(n)).abs() < 1e-14);
            if n > 1 {
                assert_eq!(s.j_interval(n - 1).0, jh);
            }
        }
    }

    #[test]
    fn build_rejects_bad_fraction() {
        assert!(build_schedule(1.0, 0.5, 1.0, 8).is_err());
        assert!(build_schedule(1.0, 0.5, 0.0, 8).is_err());
        assert!(build_schedule(1.0, 1.0, 0.5, 8).is_err());
    }
}
