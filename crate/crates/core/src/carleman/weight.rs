use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::psi::PsiFunction;
use crate::domain::{IndexSet, SpaceGrid};
use crate::error::{invalid, GrushinError, Result};
use crate::registry::Registry;

/// A real number stored as sign·e^{ln_abs}; zero has sign 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: i8,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: if v > 0.0 { 1 } else { -1 },
                ln_abs: v.abs().ln(),
            }
        }
    }

    /// e^{ln_a} − e^{ln_b}.
    pub fn diff(ln_a: f64, ln_b: f64) -> Self {
        if ln_a == ln_b {
            return Self::ZERO;
        }
        let (sign, hi, lo) = if ln_a > ln_b { (1, ln_a, ln_b) } else { (-1, ln_b, ln_a) };
        Self {
            sign,
            ln_abs: hi + (-(lo - hi).exp()).ln_1p(),
        }
    }

    /// s·e^{ln_a} − e^{ln_b} for a signed first operand.
    pub fn signed_diff(a: SignedLog, ln_b: f64) -> Self {
        match a.sign {
            1 => Self::diff(a.ln_abs, ln_b),
            _ => {
                let ln_abs = if a.sign == 0 {
                    ln_b
                } else {
                    crate::linalg::log_add_exp(a.ln_abs, ln_b)
                };
                Self { sign: -1, ln_abs }
            }
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.sign >= 0
    }

    /// Linear value; may overflow to ±∞.
    pub fn to_f64(&self) -> f64 {
        self.sign as f64 * self.ln_abs.exp()
    }
}

impl fmt::Display for SignedLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            s => write!(f, "{}exp({:.6})", if s > 0 { "+" } else { "-" }, self.ln_abs),
        }
    }
}

/// β = e^{2λ‖ψ‖} − e^{λψ}, with constants C₁, C₃ in log form.
#[derive(Debug, Clone)]
pub struct CarlemanWeight {
    pub a: f64,
    pub lambda: f64,
    pub mode: &'static str,
    pub ln_c1: f64,
    pub ln_c3: f64,
    psi: PsiFunction,
}

impl CarlemanWeight {
    pub fn new(psi: &PsiFunction, a: f64, lambda: f64, ln_c1: f64, ln_c3: f64, mode: &'static str) -> Result<Self> {
        check_a(a)?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", format!("{lambda} must be positive")));
        }
        Ok(Self {
            a,
            lambda,
            mode,
            ln_c1,
            ln_c3,
            psi: psi.clone(),
        })
    }

    pub fn psi(&self) -> &PsiFunction {
        &self.psi
    }

    /// ln β at a node (β > 0 everywhere).
    pub fn ln_beta(&self, node: usize) -> f64 {
        let s = self.psi.sup();
        let psi = self.psi.values()[node];
        2.0 * self.lambda * s + (-(-self.lambda * (2.0 * s - psi)).exp_m1()).ln()
    }

    /// e^{−λ(2‖ψ‖−ψ)}, so that β = e^{2λ‖ψ‖}(1 − this).
    pub fn beta_deficit(&self, node: usize) -> f64 {
        (-self.lambda * (2.0 * self.psi.sup() - self.psi.values()[node])).exp()
    }

    /// ln of the lower bound e^{2λ‖ψ‖} − e^{λ‖ψ‖}.
    pub fn ln_beta_floor(&self) -> f64 {
        let s = self.psi.sup();
        2.0 * self.lambda * s + (-(-self.lambda * s).exp_m1()).ln()
    }

    /// ln β^* = ln max β over Ω₁ (attained where ψ = 0).
    pub fn ln_beta_max(&self) -> f64 {
        (0..self.psi.values().len())
            .map(|n| self.ln_beta(n))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// ln β_* = ln min β over the nodes of `omega1`.
    pub fn ln_beta_min_on(&self, omega1: &IndexSet) -> f64 {
        omega1
            .indices()
            .iter()
            .map(|&n| self.ln_beta(n))
            .fold(f64::INFINITY, f64::min)
    }

    /// β, ∇β, Δβ in linear scale (only sensible for moderate λ).
    pub fn linear_derivatives(&self, node: usize) -> (f64, [f64; 2], f64) {
        let l = self.lambda;
        let e = (l * self.psi.values()[node]).exp();
        let g = self.psi.grad(node);
        let gg = g[0] * g[0] + g[1] * g[1];
        let beta = (2.0 * l * self.psi.sup()).exp() - e;
        (
            beta,
            [-l * g[0] * e, -l * g[1] * e],
            -(l * l * gg + l * self.psi.laplacian(node)) * e,
        )
    }

    /// Signed-log value of the form in (ii) at `node`: min over |Z| = 1.
    fn form_ii(&self, node: usize) -> SignedLog {
        let (a, l) = (self.a, self.lambda);
        let g = self.psi.grad(node);
        let h = self.psi.hess(node);
        let gg = g[0] * g[0] + g[1] * g[1];
        let lap = h[0][0] + h[1][1];
        let iso = (a - 1.0) * (l * gg + lap);
        let s = [
            [iso + 2.0 * (l * g[0] * g[0] + h[0][0]), 2.0 * (l * g[0] * g[1] + h[0][1])],
            [2.0 * (l * g[0] * g[1] + h[0][1]), iso + 2.0 * (l * g[1] * g[1] + h[1][1])],
        ];
        let min_eig = match self.psi.grid() {
            SpaceGrid::Line(_) => s[0][0],
            SpaceGrid::Rect(..) => {
                let mean = 0.5 * (s[0][0] + s[1][1]);
                let rad = (0.25 * (s[0][0] - s[1][1]).powi(2) + s[0][1] * s[0][1]).sqrt();
                mean - rad
            }
        };
        // value = λ·min_eig·e^{λψ}
        let v = SignedLog::from_f64(min_eig);
        SignedLog {
            sign: v.sign,
            ln_abs: v.ln_abs + l.ln() + l * self.psi.values()[node],
        }
    }

    /// Signed-log value of the form in (iii) at `node`.
    fn form_iii(&self, node: usize) -> SignedLog {
        let (a, l) = (self.a, self.lambda);
        let g = self.psi.grad(node);
        let h = self.psi.hess(node);
        let gg = g[0] * g[0] + g[1] * g[1];
        let lap = h[0][0] + h[1][1];
        let hgg = h[0][0] * g[0] * g[0] + 2.0 * h[0][1] * g[0] * g[1] + h[1][1] * g[1] * g[1];
        let bracket = l * (3.0 - a) * gg * gg + (1.0 - a) * lap * gg + 2.0 * hgg;
        let v = SignedLog::from_f64(bracket);
        SignedLog {
            sign: v.sign,
            ln_abs: v.ln_abs + 3.0 * l.ln() + 3.0 * l * self.psi.values()[node],
        }
    }

    /// (∂β/∂ν at boundary nodes via one-sided differences of ψ.)
    fn boundary_normal_derivatives(&self) -> Vec<(usize, SignedLog)> {
        let grid = self.psi.grid();
        let psi = self.psi.values();
        let mut out = Vec::new();
        for node in 0..grid.node_count() {
            if !grid.is_boundary_node(node) {
                continue;
            }
            let (i, j) = grid.node_multi(node);
            let mut dpsi_dnu = None;
            let axes = grid.axes();
            for (ax, g) in axes.iter().enumerate() {
                let idx = if ax == 0 { i } else { j };
                if !g.is_boundary(idx) {
                    continue;
                }
                // inward neighbours along this axis
                let (s1, s2, outward) = if idx == 0 {
                    (idx + 1, idx + 2, -1.0)
                } else {
                    (idx - 1, idx - 2, 1.0)
                };
                let at = |k: usize| {
                    if ax == 0 {
                        psi[grid.node_index(k, j)]
                    } else {
                        psi[grid.node_index(i, k)]
                    }
                };
                // derivative in the +axis direction, second order one-sided
                let d = if idx == 0 {
                    (-3.0 * at(idx) + 4.0 * at(s1) - at(s2)) / (2.0 * g.h())
                } else {
                    (3.0 * at(idx) - 4.0 * at(s1) + at(s2)) / (2.0 * g.h())
                };
                if dpsi_dnu.is_some() {
                    // corner: normal undefined
                    dpsi_dnu = None;
                    break;
                }
                dpsi_dnu = Some(outward * d);
            }
            if let Some(dn) = dpsi_dnu {
                // ∂β/∂ν = −λ e^{λψ} ∂ψ/∂ν, ψ = 0 on the boundary
                let v = SignedLog::from_f64(-dn);
                out.push((
                    node,
                    SignedLog {
                        sign: v.sign,
                        ln_abs: v.ln_abs + self.lambda.ln(),
                    },
                ));
            }
        }
        out
    }
}

fn check_a(a: f64) -> Result<()> {
    if a > 1.0 && a < 3.0 {
        Ok(())
    } else {
        Err(invalid("a", format!("{a} outside (1, 3)")))
    }
}

#[derive(Debug, Clone)]
pub struct WeightMargins {
    pub boundary: Vec<(usize, SignedLog)>,
    /// (node, form value − C₁)
    pub form_ii: Vec<(usize, SignedLog)>,
    /// (node, form value − C₃)
    pub form_iii: Vec<(usize, SignedLog)>,
}

impl WeightMargins {
    pub fn offending(&self) -> Vec<(&'static str, usize)> {
        let mut bad = Vec::new();
        for (name, list) in [
            ("boundary", &self.boundary),
            ("ii", &self.form_ii),
            ("iii", &self.form_iii),
        ] {
            for (node, m) in list.iter() {
                if !m.is_nonnegative() {
                    bad.push((name, *node));
                }
            }
        }
        bad
    }

    pub fn all_nonnegative(&self) -> bool {
        self.offending().is_empty()
    }

    /// Smallest margin over all three families, compared in signed-log order.
    pub fn min_margin(&self) -> SignedLog {
        self.boundary
            .iter()
            .chain(&self.form_ii)
            .chain(&self.form_iii)
            .map(|(_, m)| *m)
            .min_by(|a, b| signed_log_cmp(a, b))
            .unwrap_or(SignedLog::ZERO)
    }
}

pub fn signed_log_cmp(a: &SignedLog, b: &SignedLog) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match a.sign.cmp(&b.sign) {
        Ordering::Equal => match a.sign {
            1 => a.ln_abs.total_cmp(&b.ln_abs),
            -1 => b.ln_abs.total_cmp(&a.ln_abs),
            _ => Ordering::Equal,
        },
        o => o,
    }
}

/// Node-wise margins of the boundary sign condition and the two quadratic-form bounds.
pub fn weight_margins(weight: &CarlemanWeight) -> WeightMargins {
    let outside = weight.psi.outside_nodes();
    WeightMargins {
        boundary: weight.boundary_normal_derivatives(),
        form_ii: outside
            .iter()
            .map(|&n| (n, SignedLog::signed_diff(weight.form_ii(n), weight.ln_c1)))
            .collect(),
        form_iii: outside
            .iter()
            .map(|&n| (n, SignedLog::signed_diff(weight.form_iii(n), weight.ln_c3)))
            .collect(),
    }
}

pub fn verify_weight_inequalities(weight: &CarlemanWeight) -> Result<WeightMargins> {
    let m = weight_margins(weight);
    let bad = m.offending();
    if bad.is_empty() {
        Ok(m)
    } else {
        let grid = weight.psi.grid();
        let list: Vec<String> = bad
            .iter()
            .take(20)
            .map(|(k, n)| {
                let p = grid.node_point(*n);
                format!("{k}@{n}({:.4},{:.4})", p[0], p[1])
            })
            .collect();
        Err(GrushinError::Verification(format!(
            "{} negative weight margins: {}",
            bad.len(),
            list.join(" ")
        )))
    }
}

/// Strategy choosing λ, C₁ and C₃ for a given ψ.
pub trait WeightCalibration: Send + Sync {
    fn name(&self) -> &'static str;
    fn calibrate(&self, psi: &PsiFunction, a: f64) -> Result<CarlemanWeight>;
}

/// λ and constants from the closed-form sufficient condition.
pub struct ClosedFormCalibration;

/// Smallest grid-feasible λ (bisection), times a safety factor.
pub struct SearchCalibration {
    pub safety: f64,
    pub lambda_max: f64,
}

impl Default for SearchCalibration {
    fn default() -> Self {
        Self {
            safety: 1.1,
            lambda_max: 1e8,
        }
    }
}

/// λ = max{2(a+1)m^*/((a−1)m_*²), 2(a+1)(m^*)³/((3−a)m_*⁴)}.
pub fn closed_form_lambda(m_lower: f64, m_upper: f64, a: f64) -> f64 {
    let l1 = 2.0 * (a + 1.0) * m_upper / ((a - 1.0) * m_lower * m_lower);
    let l2 = 2.0 * (a + 1.0) * m_upper.powi(3) / ((3.0 - a) * m_lower.powi(4));
    l1.max(l2)
}

impl WeightCalibration for ClosedFormCalibration {
    fn name(&self) -> &'static str {
        "closed-form"
    }
    fn calibrate(&self, psi: &PsiFunction, a: f64) -> Result<CarlemanWeight> {
        check_a(a)?;
        let (ml, mu) = (psi.m_lower(), psi.m_upper());
        let lambda = closed_form_lambda(ml, mu, a);
        let ln_c1 = ((a - 1.0) / 2.0).ln() + 2.0 * ml.ln() + 2.0 * lambda.ln();
        let ln_c3 = ((3.0 - a) / 2.0).ln() + 4.0 * ml.ln() + 4.0 * lambda.ln();
        CarlemanWeight::new(psi, a, lambda, ln_c1, ln_c3, "closed-form")
    }
}

impl SearchCalibration {
    fn feasible(psi: &PsiFunction, a: f64, lambda: f64) -> Result<bool> {
        let w = CarlemanWeight::new(psi, a, lambda, f64::NEG_INFINITY, f64::NEG_INFINITY, "search")?;
        Ok(psi
            .outside_nodes()
            .iter()
            .all(|&n| w.form_ii(n).sign > 0 && w.form_iii(n).sign > 0))
    }
}

impl WeightCalibration for SearchCalibration {
    fn name(&self) -> &'static str {
        "search"
    }
    fn calibrate(&self, psi: &PsiFunction, a: f64) -> Result<CarlemanWeight> {
        check_a(a)?;
        let mut hi = 1.0;
        while !Self::feasible(psi, a, hi)? {
            hi *= 2.0;
            if hi > self.lambda_max {
                return Err(GrushinError::NoConvergence {
                    what: "weight parameter search",
                    iterations: 0,
                    residual: hi,
                });
            }
        }
        let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if Self::feasible(psi, a, mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lambda = self.safety * hi;
        if !Self::feasible(psi, a, lambda)? {
            return Err(GrushinError::Verification(format!(
                "margins not monotone in λ: infeasible at safety-scaled λ = {lambda}"
            )));
        }
        let probe = CarlemanWeight::new(psi, a, lambda, 0.0, 0.0, "search")?;
        let outside = psi.outside_nodes();
        let ln_c1 = outside
            .iter()
            .map(|&n| probe.form_ii(n).ln_abs)
            .fold(f64::INFINITY, f64::min);
        let ln_c3 = outside
            .iter()
            .map(|&n| probe.form_iii(n).ln_abs)
            .fold(f64::INFINITY, f64::min);
        CarlemanWeight::new(psi, a, lambda, ln_c1, ln_c3, "search")
    }
}

pub fn calibration_registry() -> Registry<dyn WeightCalibration> {
    let mut map: BTreeMap<&'static str, Arc<dyn WeightCalibration>> = BTreeMap::new();
    map.insert("closed-form", Arc::new(ClosedFormCalibration));
    map.insert("search", Arc::new(SearchCalibration::default()));
    Registry::from_map("weight calibration", map)
}

pub fn calibrate_weight(psi: &PsiFunction, a: f64, mode: &str) -> Result<CarlemanWeight> {
    calibration_registry().get(mode)?.calibrate(psi, a)
}
