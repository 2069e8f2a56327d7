//! Gauge optimization.
//!
//! A trace-preserving similarity `S` maps `G̃ → S⁻¹G̃S`, `|ρ̃⟩⟩ → S⁻¹|ρ̃⟩⟩` and
//! `⟨⟨Ẽ| → ⟨⟨Ẽ|S` without changing any outcome probability. The optimizer
//! picks the `S` bringing the estimate closest to the ideal gate set:
//!
//! ```text
//! f(S) = w_G Σ_i ‖S⁻¹G̃_iS − G_i‖² + w_S (‖S⁻¹ρ̃ − ρ‖² + Σ_k ‖Ẽ_kS − E_k‖²)
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsOptions, StopReason};
use crate::error::{FbtError, Result};
use crate::gateset::NoisyGateSet;
use crate::linalg::condition_number;
use crate::pauli::Ptm;

/// Trial transforms above this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeTransform {
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
}

impl GaugeTransform {
    /// Requires a square matrix with first row `e₁` (trace preserving) and
    /// condition number at most [`MAX_CONDITION`].
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if !s.is_square() {
            return Err(FbtError::DimensionMismatch {
                expected: s.nrows(),
                got: s.ncols(),
            });
        }
        let tp_defect = (0..s.ncols())
            .map(|j| (s[(0, j)] - if j == 0 { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        if tp_defect > 1e-12 {
            return Err(FbtError::InvalidConfig(format!(
                "gauge transform must preserve the trace (first-row defect {tp_defect:.3e})"
            )));
        }
        let cond = condition_number(&s);
        if !(cond <= MAX_CONDITION) {
            return Err(FbtError::InvalidConfig(format!(
                "gauge transform condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}"
            )));
        }
        let s_inv = s.clone().try_inverse().ok_or(FbtError::Singular("gauge transform"))?;
        Ok(GaugeTransform { s, s_inv })
    }

    pub fn identity(dim: usize) -> Self {
        GaugeTransform {
            s: DMatrix::identity(dim, dim),
            s_inv: DMatrix::identity(dim, dim),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.s_inv
    }
}

/// Gate set in the new gauge. Noise channels become `Λ'_i = G_i⁻¹S⁻¹G_iΛ_iS`,
/// `Λ'_ρ = S⁻¹Λ_ρ` and `Λ'_E = Λ_E S`.
pub fn apply_gauge(gs: &NoisyGateSet, t: &GaugeTransform) -> Result<NoisyGateSet> {
    let n = gs.superop_dim();
    if t.s.nrows() != n {
        return Err(FbtError::DimensionMismatch {
            expected: n,
            got: t.s.nrows(),
        });
    }
    let mut gate_noise = Vec::with_capacity(gs.gates().len());
    for (i, g) in gs.gates().iter().enumerate() {
        let ideal_inv = g
            .ideal
            .matrix()
            .clone()
            .try_inverse()
            .ok_or(FbtError::Singular("ideal gate"))?;
        let transformed = &t.s_inv * gs.noisy_gate(i) * &t.s;
        gate_noise.push(Ptm::new(ideal_inv * transformed)?);
    }
    let prep = Ptm::new(&t.s_inv * gs.prep_noise().matrix())?;
    let effect = Ptm::new(gs.effect_noise().matrix() * &t.s)?;
    gs.with_noise(gate_noise, effect, prep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaugeOptions {
    pub gate_weight: f64,
    pub spam_weight: f64,
    pub lbfgs: LbfgsOptions,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions {
            gate_weight: 1.0,
            spam_weight: 1e-3,
            lbfgs: LbfgsOptions {
                gradient_tolerance: 1e-12,
                ..LbfgsOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct GaugeResult {
    pub gateset: NoisyGateSet,
    pub transform: GaugeTransform,
    pub objective: f64,
    /// Objective after every accepted step, starting at `S = I`.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub reason: StopReason,
}

struct Problem {
    n: usize,
    // (estimated noisy gate, ideal gate)
    gates: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    // (estimated prepared state, ideal state)
    prep: (DVector<f64>, DVector<f64>),
    // (estimated effect, ideal effect)
    effects: Vec<(DVector<f64>, DVector<f64>)>,
    w_g: f64,
    w_s: f64,
}

impl Problem {
    fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut s = DMatrix::identity(n, n);
        for r in 1..n {
            for c in 0..n {
                s[(r, c)] += x[(r - 1) * n + c];
            }
        }
        s
    }

    fn evaluate(&self, s: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        if condition_number(s) > MAX_CONDITION {
            return None;
        }
        let s_inv = s.clone().try_inverse()?;
        let s_inv_t = s_inv.transpose();
        let mut f = 0.0;
        let mut grad = DMatrix::zeros(self.n, self.n);
        for (a, target) in &self.gates {
            let sa = &s_inv * a;
            let b = &sa * s;
            let r = &b - target;
            f += self.w_g * r.norm_squared();
            // d‖S⁻¹AS − T‖² = 2⟨R, −S⁻¹dS·B + S⁻¹A·dS⟩
            grad += (-(&s_inv_t * &r * b.transpose()) + sa.transpose() * &r) * (2.0 * self.w_g);
        }
        let (rho_est, rho) = &self.prep;
        let v = &s_inv * rho_est;
        let r = &v - rho;
        f += self.w_s * r.norm_squared();
        grad -= &s_inv_t * &r * v.transpose() * (2.0 * self.w_s);
        for (e_est, e) in &self.effects {
            let r = s.tr_mul(e_est) - e;
            f += self.w_s * r.norm_squared();
            grad += e_est * r.transpose() * (2.0 * self.w_s);
        }
        Some((f, grad))
    }

    fn objective(&self, x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let (f, grad) = self.evaluate(&self.matrix(x))?;
        let n = self.n;
        let g = DVector::from_fn((n - 1) * n, |k, _| grad[(k / n + 1, k % n)]);
        Some((f, g))
    }
}

fn problem(gs: &NoisyGateSet, target: &NoisyGateSet, options: &GaugeOptions) -> Result<Problem> {
    if gs.labels() != target.labels() || gs.superop_dim() != target.superop_dim() {
        return Err(FbtError::RegistryMismatch(
            "gauge target must have the same gates as the estimate".into(),
        ));
    }
    let gates = (0..gs.gates().len())
        .map(|i| (gs.noisy_gate(i).clone(), target.noisy_gate(i).clone()))
        .collect();
    let mut effects = Vec::new();
    for e in gs.effects() {
        effects.push((
            gs.measured_effect(Some(&e.name))?,
            target.measured_effect(Some(&e.name))?,
        ));
    }
    Ok(Problem {
        n: gs.superop_dim(),
        gates,
        prep: (gs.prepared_state(), target.prepared_state()),
        effects,
        w_g: options.gate_weight,
        w_s: options.spam_weight,
    })
}

/// Gauge objective of `gs` against `target` for the transform `s`.
pub fn gauge_objective(gs: &NoisyGateSet, target: &NoisyGateSet, s: &GaugeTransform, options: &GaugeOptions) -> Result<f64> {
    let p = problem(gs, target, options)?;
    p.evaluate(s.matrix())
        .map(|(f, _)| f)
        .ok_or_else(|| FbtError::InvalidConfig("gauge transform is ill-conditioned".into()))
}

/// Gauge-optimizes `gs` against `target` (normally the ideal gate set),
/// starting from `S = I`.
pub fn gauge_optimize(gs: &NoisyGateSet, target: &NoisyGateSet, options: &GaugeOptions) -> Result<GaugeResult> {
    let p = problem(gs, target, options)?;
    let n = p.n;
    let x0 = DVector::zeros((n - 1) * n);
    let r = minimize(|x| p.objective(x), x0, &options.lbfgs)
        .ok_or(FbtError::NoConvergence("gauge objective undefined at the identity"))?;
    if !r.converged() {
        tracing::warn!(reason = ?r.reason, objective = r.f, "gauge optimization stopped early");
    }
    let transform = GaugeTransform::new(p.matrix(&r.x))?;
    let gateset = apply_gauge(gs, &transform)?;
    Ok(GaugeResult {
        gateset,
        transform,
        objective: r.f,
        trace: r.trace,
        iterations: r.iterations,
        reason: r.reason,
    })
}
