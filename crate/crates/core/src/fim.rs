//! Fisher information and the natural-gradient step.
//!
//! The attack path never builds a `d × d` matrix: the damped outer-product
//! Fisher `F̂ = s sᵀ + γI` is kept as `(s, ‖s‖, γ)` and inverted in closed
//! form,
//!
//! ```text
//! F̂⁻¹ = ((c² + γ)⁻¹ − γ⁻¹) / c² · s sᵀ + γ⁻¹ I,      c = ‖s‖₂
//! ```
//!
//! so a step is one inner product and one vector sum. Dense builders exist
//! only for verification and ablation, and refuse `d > DENSE_LIMIT`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::model::ProbVector;

pub const DENSE_LIMIT: usize = 512;

/// Below this value of `c²` the rank-one term is dropped.
pub const C_EPS: f64 = 1e-20;

pub const DEFAULT_GAMMA: f64 = 0.01;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn guard(d: usize) -> Result<()> {
    if d > DENSE_LIMIT {
        Err(Error::DenseGuard {
            d,
            limit: DENSE_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Undamped rank-one factor `s sᵀ`, applied implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterProduct {
    s: Vec<f64>,
}

impl OuterProduct {
    pub fn score(&self) -> &[f64] {
        &self.s
    }

    /// `s (sᵀ v)`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.s.len())?;
        let k = dot(&self.s, v);
        Ok(self.s.iter().map(|si| si * k).collect())
    }

    pub fn damped(self, gamma: f64) -> Result<RankOneFisher> {
        RankOneFisher::new(self.s, gamma)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        guard(self.s.len())?;
        let s = DVector::from_column_slice(&self.s);
        Ok(&s * s.transpose())
    }
}

/// Outer-product approximation from the true label's score only.
pub fn fim_outer_product(score_true: &[f64]) -> OuterProduct {
    OuterProduct {
        s: score_true.to_vec(),
    }
}

/// Damped rank-one Fisher `s sᵀ + γI` in implicit form.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFisher {
    s: Vec<f64>,
    c: f64,
    gamma: f64,
}

impl RankOneFisher {
    pub fn new(s: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("damping gamma must be positive"));
        }
        let c = dot(&s, &s).sqrt();
        Ok(Self { s, c, gamma })
    }

    pub fn score(&self) -> &[f64] {
        &self.s
    }

    pub fn norm(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// `F̂ v` without materialising `F̂`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(v.len(), self.s.len())?;
        let k = dot(&self.s, v);
        Ok(self
            .s
            .iter()
            .zip(v)
            .map(|(si, vi)| si * k + self.gamma * vi)
            .collect())
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        guard(self.s.len())?;
        let s = DVector::from_column_slice(&self.s);
        let d = self.s.len();
        Ok(&s * s.transpose() + DMatrix::identity(d, d) * self.gamma)
    }
}

/// `Δδ = λ F̂⁻¹ g` in O(d).
pub fn natural_gradient_step(fisher: &RankOneFisher, g: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("step size lambda must be positive"));
    }
    check_len(g.len(), fisher.dim())?;
    let gamma = fisher.gamma;
    let c2 = fisher.c * fisher.c;
    if c2 < C_EPS {
        return Ok(g.iter().map(|gi| lambda * gi / gamma).collect());
    }
    // ((c²+γ)⁻¹ − γ⁻¹)/c² simplifies to −1/(γ(c²+γ)); the simplified form
    // avoids cancellation when c² ≪ γ.
    let coeff = -1.0 / (gamma * (c2 + gamma));
    let k = coeff * dot(&fisher.s, g);
    Ok(fisher
        .s
        .iter()
        .zip(g)
        .map(|(si, gi)| lambda * (k * si + gi / gamma))
        .collect())
}

/// Exact expectation `Σ_t p_t ∇log p_t ∇log p_tᵀ` over all classes.
pub fn fim_exact(p: &[f64], scores: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_len(scores.len(), p.len())?;
    let d = scores.first().map_or(0, Vec::len);
    guard(d)?;
    let mut f = DMatrix::zeros(d, d);
    for (pt, s) in p.iter().zip(scores) {
        check_len(s.len(), d)?;
        let v = DVector::from_column_slice(s);
        f += &v * v.transpose() * *pt;
    }
    Ok(f)
}

/// Convenience wrapper taking a floored [`ProbVector`].
pub fn fim_exact_probs(p: &ProbVector, scores: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    fim_exact(p.as_slice(), scores)
}

/// `(1/n) Σ_i s_i s_iᵀ` over scores of sampled classes.
pub fn fim_monte_carlo(scores_sampled: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = scores_sampled.len();
    if n == 0 {
        return Err(Error::invalid(
            "Monte Carlo Fisher needs at least one sample",
        ));
    }
    let d = scores_sampled[0].len();
    guard(d)?;
    let mut f = DMatrix::zeros(d, d);
    for s in scores_sampled {
        check_len(s.len(), d)?;
        let v = DVector::from_column_slice(s);
        f += &v * v.transpose();
    }
    Ok(f / n as f64)
}

/// Draws `n` class indices from `p` by inverse-CDF sampling.
pub fn sample_classes<R: rand::Rng + ?Sized>(p: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = p.iter().sum();
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        })
        .collect()
}

/// Materialises `s sᵀ + γI` and solves `F̂ y = g` with a dense LU
/// factorisation. Test oracle for [`natural_gradient_step`].
pub fn dense_inverse_oracle(s: &[f64], gamma: f64, g: &[f64]) -> Result<Vec<f64>> {
    check_len(g.len(), s.len())?;
    guard(s.len())?;
    let f = RankOneFisher::new(s.to_vec(), gamma)?.to_dense()?;
    let rhs = DVector::from_column_slice(g);
    let y = f
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("damped Fisher is singular"))?;
    Ok(y.iter().copied().collect())
}
