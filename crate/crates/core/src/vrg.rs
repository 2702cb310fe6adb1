//! Trajectory optimizer.
//!
//! Minimizes the cumulative prediction error `Σ_k w(ᾱ*_k, α*_k)·f_Δ(ᾱ*_k)`
//! plus `λ·(ᾱ*_K − ᾱ_K)²` over the per-step ratios α*, each confined to a box
//! of half-width γ around the base trajectory's ratios, by projected gradient
//! descent with an analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VrgError};
use crate::forward::error_weight;
use crate::profiler::ErrorProfile;
use crate::trajectory::{AlphaVector, ScheduleKind, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VrgConfig {
    /// Learning portion: box half-width around each base α.
    pub gamma: f64,
    /// Weight of the terminal-level regularizer.
    pub lambda: f64,
    /// Initial step length; adapted by backtracking.
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    /// Keeps every α inside `[eps_open, 1 − eps_open]`.
    pub eps_open: f64,
}

impl VrgConfig {
    /// Defaults for a `k`-step trajectory: γ = 0.1 up to ten steps, 0.01 beyond.
    pub fn for_steps(k: usize) -> Self {
        Self {
            gamma: if k <= 10 { 0.1 } else { 0.01 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VrgError::Precondition(m));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1".into());
        }
        if self.grad_tolerance.is_nan() || self.grad_tolerance <= 0.0 {
            return bad("grad_tolerance must be positive".into());
        }
        if !(self.eps_open > 0.0 && self.eps_open <= 1e-3) {
            return bad(format!("eps_open must lie in (0, 1e-3], got {}", self.eps_open));
        }
        Ok(())
    }
}

impl Default for VrgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            lambda: 1.0,
            step_size: 1e-2,
            max_iters: 2000,
            grad_tolerance: 1e-9,
            eps_open: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub cpe: f64,
    pub reg: f64,
    pub total: f64,
    pub per_step: Vec<f64>,
}

fn check_candidate(candidate: &[f64], base: &Trajectory) -> Result<()> {
    if candidate.len() != base.len() {
        return Err(VrgError::DimensionMismatch {
            expected: base.len(),
            got: candidate.len(),
        });
    }
    if let Some(a) = candidate.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(VrgError::Domain(format!("candidate alpha {a} is outside (0, 1)")));
    }
    Ok(())
}

fn cumulative(candidate: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 1.0;
    let mut out = Vec::with_capacity(candidate.len());
    for (k, a) in candidate.iter().enumerate() {
        acc *= a;
        if acc <= 0.0 {
            return Err(VrgError::NonFinite(format!(
                "cumulative product underflows to zero at step {}",
                k + 1
            )));
        }
        out.push(acc);
    }
    Ok(out)
}

pub fn objective(
    candidate: &AlphaVector,
    base: &Trajectory,
    profile: &ErrorProfile,
    lambda: f64,
) -> Result<ObjectiveBreakdown> {
    evaluate(candidate.as_slice(), base, profile, lambda)
}

fn evaluate(candidate: &[f64], base: &Trajectory, profile: &ErrorProfile, lambda: f64) -> Result<ObjectiveBreakdown> {
    check_candidate(candidate, base)?;
    let ab = cumulative(candidate)?;
    let per_step = ab
        .iter()
        .zip(candidate)
        .map(|(&abk, &ak)| Ok(error_weight(abk, ak)? * profile.f_delta(abk)))
        .collect::<Result<Vec<f64>>>()?;
    let cpe: f64 = per_step.iter().sum();
    let last = ab.len() - 1;
    let gap = ab[last] - base.alpha_bar()[last];
    let reg = if lambda == 0.0 { 0.0 } else { lambda * gap * gap };
    Ok(ObjectiveBreakdown {
        cpe,
        reg,
        total: cpe + reg,
        per_step,
    })
}

/// Partials of `w` written in terms of the previous level `p = ᾱ_{k−1}` and
/// the ratio `a = α_k` (so `ᾱ_k = p·a`). Returns `(w, ∂w/∂a, ∂w/∂p)`.
fn weight_partials(p: f64, a: f64) -> (f64, f64, f64) {
    if p == 1.0 {
        // First step: w = (1 − a)/a, independent of p.
        return ((1.0 - a) / a, -1.0 / (a * a), 0.0);
    }
    let s = (1.0 - p * a).sqrt();
    let r = (a * (1.0 - p)).sqrt();
    let diff = s - r;
    let num = diff * diff;
    let ab = p * a;
    let ds_da = -p / (2.0 * s);
    let ds_dp = -a / (2.0 * s);
    let dr_da = (1.0 - p) / (2.0 * r);
    let dr_dp = -a / (2.0 * r);
    let w = num / ab;
    let dw_da = 2.0 * diff * (ds_da - dr_da) / ab - num / (p * a * a);
    let dw_dp = 2.0 * diff * (ds_dp - dr_dp) / ab - num / (p * p * a);
    (w, dw_da, dw_dp)
}

/// Exact gradient of [`objective`] with respect to each α*_j. The
/// piecewise-linear Δ term uses its right-hand slope at knots.
pub fn objective_gradient(
    candidate: &AlphaVector,
    base: &Trajectory,
    profile: &ErrorProfile,
    lambda: f64,
) -> Result<Vec<f64>> {
    gradient(candidate.as_slice(), base, profile, lambda)
}

fn gradient(candidate: &[f64], base: &Trajectory, profile: &ErrorProfile, lambda: f64) -> Result<Vec<f64>> {
    check_candidate(candidate, base)?;
    let ab = cumulative(candidate)?;
    let k_len = candidate.len();
    // direct[k]: ∂(w_k f_k)/∂α_k at fixed ᾱ_{k−1};
    // via_prev[k]: ∂(w_k f_k)/∂ᾱ_{k−1} · ᾱ_{k−1}, to be divided by α_j for j < k.
    let mut direct = vec![0.0; k_len];
    let mut via_prev = vec![0.0; k_len];
    for k in 0..k_len {
        let p = if k == 0 { 1.0 } else { ab[k - 1] };
        let a = candidate[k];
        let (w, dw_da, dw_dp) = weight_partials(p, a);
        let f = profile.f_delta(ab[k]);
        let df = profile.f_delta_slope(ab[k]);
        direct[k] = dw_da * f + w * df * p;
        via_prev[k] = (dw_dp * f + w * df * a) * p;
    }
    let last = k_len - 1;
    let reg_term = 2.0 * lambda * (ab[last] - base.alpha_bar()[last]) * ab[last];

    let mut grad = vec![0.0; k_len];
    // Suffix sum of via_prev over k > j.
    let mut tail = 0.0;
    for j in (0..k_len).rev() {
        grad[j] = direct[j] + (tail + reg_term) / candidate[j];
        tail += via_prev[j];
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(VrgError::NonFinite(format!("objective gradient {grad:?}")));
    }
    Ok(grad)
}

fn bounds(base_alpha: &[f64], gamma: f64, eps_open: f64) -> Result<Vec<(f64, f64)>> {
    base_alpha
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let lo = (a - gamma).max(eps_open);
            let hi = (a + gamma).min(1.0 - eps_open);
            if lo > hi {
                Err(VrgError::Domain(format!(
                    "empty feasible interval for step {}: base alpha {a}, gamma {gamma}, eps_open {eps_open}",
                    k + 1
                )))
            } else {
                Ok((lo, hi))
            }
        })
        .collect()
}

fn clamp_into(x: &[f64], b: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(b).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
}

/// Clamp each α to `[max(eps_open, α_k − γ), min(1 − eps_open, α_k + γ)]`.
pub fn project(candidate: &AlphaVector, base_alpha: &AlphaVector, gamma: f64, eps_open: f64) -> Result<AlphaVector> {
    if candidate.len() != base_alpha.len() {
        return Err(VrgError::DimensionMismatch {
            expected: base_alpha.len(),
            got: candidate.len(),
        });
    }
    let b = bounds(base_alpha.as_slice(), gamma, eps_open)?;
    AlphaVector::new(clamp_into(candidate.as_slice(), &b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub cpe: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub trajectory: Trajectory,
    pub alpha: AlphaVector,
    pub objective: ObjectiveBreakdown,
    pub base_objective: ObjectiveBreakdown,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Norm of the gradient restricted to directions that stay in the box.
fn projected_gradient_norm(x: &[f64], g: &[f64], b: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(g)
        .zip(b)
        .map(|((&v, &gi), &(lo, hi))| {
            if (v <= lo && gi > 0.0) || (v >= hi && gi < 0.0) {
                0.0
            } else {
                gi * gi
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient descent from the base trajectory's α vector.
///
/// Each iteration steps along the negative gradient, projects onto the box
/// and backtracks until the objective decreases sufficiently; the step
/// length doubles after every accepted step. The best iterate is returned,
/// and the base trajectory itself is returned unchanged when nothing beats it.
pub fn optimize(base: &Trajectory, profile: &ErrorProfile, config: &VrgConfig) -> Result<OptimizeOutcome> {
    config.validate()?;
    let base_alpha = base.to_alpha();
    let b = bounds(base_alpha.as_slice(), config.gamma, config.eps_open)?;
    let lambda = config.lambda;

    let base_obj = evaluate(base_alpha.as_slice(), base, profile, lambda)?;
    let entry = |iter: usize, o: &ObjectiveBreakdown| TraceEntry {
        iter,
        cpe: o.cpe,
        reg: o.reg,
        total: o.total,
    };
    let mut trace = vec![entry(0, &base_obj)];
    if !base_obj.total.is_finite() {
        return Err(VrgError::NonFinite(format!(
            "objective at the base trajectory is {}",
            base_obj.total
        )));
    }

    let mut x = clamp_into(base_alpha.as_slice(), &b);
    let mut fx = evaluate(&x, base, profile, lambda)?;
    let mut best: Option<(Vec<f64>, ObjectiveBreakdown)> = None;
    if x != base_alpha.as_slice() && fx.total < base_obj.total {
        best = Some((x.clone(), fx.clone()));
    }

    let mut step = config.step_size;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=config.max_iters {
        let g = gradient(&x, base, profile, lambda)?;
        if projected_gradient_norm(&x, &g, &b) < config.grad_tolerance {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .zip(&b)
                .map(|((v, gi), (lo, hi))| (v - step * gi).clamp(*lo, *hi))
                .collect();
            let moved: f64 = trial.iter().zip(&x).map(|(t, v)| (t - v).powi(2)).sum();
            if moved == 0.0 {
                break;
            }
            // Trial points whose cumulative product underflows count as rejected.
            if let Ok(ft) = evaluate(&trial, base, profile, lambda) {
                if ft.total <= fx.total - ARMIJO / step * moved {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            converged = true;
            break;
        };
        if !fnext.total.is_finite() {
            return Err(VrgError::NonFinite(format!(
                "objective became {} at iteration {iter}; trace tail: {:?}",
                fnext.total,
                &trace[trace.len().saturating_sub(5)..]
            )));
        }
        x = next;
        fx = fnext;
        iterations = iter;
        trace.push(entry(iter, &fx));
        let beats = match &best {
            Some((_, o)) => fx.total < o.total,
            None => fx.total < base_obj.total,
        };
        if beats {
            best = Some((x.clone(), fx.clone()));
        }
        step = (step * 2.0).min(1e12);
    }

    let (trajectory, alpha, objective) = match best {
        Some((a, o)) => {
            let alpha = AlphaVector::new(a)?;
            let traj = Trajectory::from_alpha(format!("{}+vrg", base.label()), ScheduleKind::Custom, &alpha)?;
            (traj, alpha, o)
        }
        None => (base.clone(), base_alpha, base_obj.clone()),
    };
    Ok(OptimizeOutcome {
        trajectory,
        alpha,
        objective,
        base_objective: base_obj,
        trace,
        iterations,
        converged,
    })
}
