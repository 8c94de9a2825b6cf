//! Attack loss, success predicate and projection onto the feasible set
//! `S = { δ : ‖δ‖∞ ≤ ε, x + δ ∈ [0,1]^d }`.

use crate::error::{check_len, Error, Result};
use crate::model::ProbVector;

/// One untargeted attack instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSetup {
    pub x: Vec<f64>,
    pub label: usize,
    pub epsilon: f64,
    pub kappa: f64,
}

impl AttackSetup {
    pub fn new(x: Vec<f64>, label: usize, epsilon: f64, kappa: f64) -> Result<Self> {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("input entries must lie in [0, 1]"));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if kappa.is_nan() || kappa < 0.0 {
            return Err(Error::invalid("kappa must be nonnegative"));
        }
        Ok(Self {
            x,
            label,
            epsilon,
            kappa,
        })
    }
}

/// `log p_t − max_{i≠t} log p_i` and the maximising `i` (smallest index on
/// ties).
pub fn log_margin(p: &ProbVector, t: usize) -> Result<(f64, usize)> {
    if p.len() < 2 {
        return Err(Error::invalid("attack loss needs at least two classes"));
    }
    if t >= p.len() {
        return Err(Error::invalid(format!(
            "label {t} out of range for {} classes",
            p.len()
        )));
    }
    let mut best: Option<usize> = None;
    for i in (0..p.len()).filter(|&i| i != t) {
        if best.is_none_or(|b| p.get(i) > p.get(b)) {
            best = Some(i);
        }
    }
    let other = best.expect("at least two classes");
    Ok((p.ln(t) - p.ln(other), other))
}

/// `max{ log p_t − max_{i≠t} log p_i, −κ }`.
pub fn attack_loss(p: &ProbVector, t: usize, kappa: f64) -> Result<f64> {
    let (margin, _) = log_margin(p, t)?;
    Ok(margin.max(-kappa))
}

/// True iff the prediction (argmax, smallest index on ties) differs from `t`.
pub fn is_success(p: &ProbVector, t: usize) -> bool {
    p.argmax() != t
}

/// Exact Euclidean projection onto `S`, which is a box:
/// `δ_i ∈ [max(−ε, −x_i), min(ε, 1 − x_i)]`.
pub fn project(delta: &[f64], x: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let mut out = delta.to_vec();
    project_in_place(&mut out, x, epsilon)?;
    Ok(out)
}

pub fn project_in_place(delta: &mut [f64], x: &[f64], epsilon: f64) -> Result<()> {
    check_len(delta.len(), x.len())?;
    for (d, &xi) in delta.iter_mut().zip(x) {
        let lo = (-epsilon).max(-xi);
        let hi = epsilon.min(1.0 - xi);
        *d = d.clamp(lo, hi);
    }
    Ok(())
}

pub fn is_feasible(delta: &[f64], x: &[f64], epsilon: f64) -> bool {
    delta.len() == x.len()
        && delta
            .iter()
            .zip(x)
            .all(|(d, xi)| d.abs() <= epsilon && (0.0..=1.0).contains(&(xi + d)))
}
