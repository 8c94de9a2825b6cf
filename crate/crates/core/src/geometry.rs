//! Numerical checks of the information geometry behind the natural gradient.
//!
//! All checks use exact model gradients and unfloored log-softmax outputs;
//! they test the mathematics, not the zeroth-order estimator.
//!
//! - the score has zero mean under the model's own distribution;
//! - the Fisher information is the Hessian of `α ↦ KL(p(·|δ) ‖ p(·|δ+α))` at
//!   `α = 0`;
//! - `KL ≈ ½ αᵀFα` for small `α`;
//! - `−F̂⁻¹∇f` solves `min ∇fᵀα s.t. ½αᵀF̂α = m`.
//!
//! Checks whose reference quantity vanishes return `None`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::fim::{dense_inverse_oracle, fim_exact, natural_gradient_step, RankOneFisher};
use crate::loss::log_margin;
use crate::model::{MlpModel, ProbVector};
use crate::rng::seeded;

/// `Σ_t p_t ln(p_t / q_t)` on floored probabilities.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    check_len(q.len(), p.len())?;
    let kl: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(a, b)| a * (a.ln() - b.ln()))
        .sum();
    Ok(kl.max(0.0))
}

/// A point `x + δ` at which KL is probed along displacement `α` with
/// finite-difference step `h`.
#[derive(Debug, Clone)]
pub struct KlProbe<'a> {
    pub model: &'a MlpModel,
    pub x: Vec<f64>,
    pub delta: Vec<f64>,
    pub h: f64,
    pub alpha: Vec<f64>,
}

impl<'a> KlProbe<'a> {
    pub fn new(
        model: &'a MlpModel,
        x: Vec<f64>,
        delta: Vec<f64>,
        h: f64,
        alpha: Vec<f64>,
    ) -> Result<Self> {
        let d = model.input_dim();
        check_len(x.len(), d)?;
        check_len(delta.len(), d)?;
        check_len(alpha.len(), d)?;
        if h.is_nan() || h <= 0.0 {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
        if x.iter()
            .zip(&delta)
            .any(|(a, b)| !(0.0..=1.0).contains(&(a + b)))
        {
            return Err(Error::invalid("x + delta must lie in [0, 1]^d"));
        }
        Ok(Self {
            model,
            x,
            delta,
            h,
            alpha,
        })
    }

    fn base(&self) -> Vec<f64> {
        self.x.iter().zip(&self.delta).map(|(a, b)| a + b).collect()
    }
}

/// `α ↦ KL(p(·|u) ‖ p(·|u + α))` from logit differences `w = z(u+α) − z(u)`:
/// with `m = Σ p_t w_t`, `KL = ln(1 + Σ p_t φ(w_t − m))` where
/// `φ(v) = eᵛ − 1 − v`. Every term is nonnegative, so small KL values keep
/// full relative precision.
struct KlSurface<'a> {
    model: &'a MlpModel,
    point: Vec<f64>,
    logits: Vec<f64>,
    p: Vec<f64>,
}

fn exp_excess(v: f64) -> f64 {
    if v.abs() < 1e-2 {
        // Taylor series to the 6th power; truncation ≪ ulp.
        let mut term = v * v / 2.0;
        let mut sum = term;
        for k in 3..=7 {
            term *= v / k as f64;
            sum += term;
        }
        sum
    } else {
        v.exp_m1() - v
    }
}

impl<'a> KlSurface<'a> {
    fn new(model: &'a MlpModel, point: Vec<f64>) -> Result<Self> {
        let logits = model.logits(&point)?;
        let p = model.log_probs(&point)?.iter().map(|v| v.exp()).collect();
        Ok(Self {
            model,
            point,
            logits,
            p,
        })
    }

    fn eval(&self, alpha: &[f64]) -> Result<f64> {
        let moved: Vec<f64> = self.point.iter().zip(alpha).map(|(a, b)| a + b).collect();
        let w: Vec<f64> = self
            .model
            .logits(&moved)?
            .iter()
            .zip(&self.logits)
            .map(|(a, b)| a - b)
            .collect();
        let m: f64 = self.p.iter().zip(&w).map(|(p, w)| p * w).sum();
        let excess: f64 = self
            .p
            .iter()
            .zip(&w)
            .map(|(p, w)| p * exp_excess(w - m))
            .sum();
        Ok(excess.ln_1p())
    }
}

fn exact_fisher(model: &MlpModel, point: &[f64]) -> Result<DMatrix<f64>> {
    let (p, scores) = model.scores_all(point)?;
    fim_exact(&p, &scores)
}

/// `‖Σ_t p_t ∇log p_t‖∞`; zero in exact arithmetic.
pub fn check_score_expectation(model: &MlpModel, x: &[f64], delta: &[f64]) -> Result<f64> {
    check_len(delta.len(), x.len())?;
    let point: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
    let (p, scores) = model.scores_all(&point)?;
    let mut mean = vec![0.0; point.len()];
    for (pt, s) in p.iter().zip(&scores) {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += pt * v;
        }
    }
    Ok(mean.iter().fold(0.0, |acc, v| acc.max(v.abs())))
}

/// Central second differences of the KL surface at `α = 0`.
pub fn kl_hessian(probe: &KlProbe<'_>) -> Result<DMatrix<f64>> {
    let d = probe.model.input_dim();
    if d > 64 {
        return Err(Error::DenseGuard { d, limit: 64 });
    }
    let surface = KlSurface::new(probe.model, probe.base())?;
    let h = probe.h;
    let mut hess = DMatrix::zeros(d, d);
    let mut a = vec![0.0; d];
    for i in 0..d {
        a[i] = h;
        let plus = surface.eval(&a)?;
        a[i] = -h;
        let minus = surface.eval(&a)?;
        a[i] = 0.0;
        hess[(i, i)] = (plus + minus) / (h * h);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                a[i] = si * h;
                a[j] = sj * h;
                let v = surface.eval(&a);
                a[i] = 0.0;
                a[j] = 0.0;
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// `‖H_KL − F‖_F / ‖F‖_F`, or `None` when `F` vanishes.
pub fn check_kl_hessian_equals_fim(probe: &KlProbe<'_>) -> Result<Option<f64>> {
    let hess = kl_hessian(probe)?;
    let fisher = exact_fisher(probe.model, &probe.base())?;
    let scale = fisher.norm();
    if scale < 1e-14 {
        return Ok(None);
    }
    Ok(Some((hess - &fisher).norm() / scale))
}

/// `KL(α) / (½ αᵀFα)`, or `None` when the quadratic form vanishes.
pub fn check_kl_taylor(probe: &KlProbe<'_>) -> Result<Option<f64>> {
    let point = probe.base();
    let fisher = exact_fisher(probe.model, &point)?;
    let alpha = DVector::from_column_slice(&probe.alpha);
    let quad = 0.5 * alpha.dot(&(&fisher * &alpha));
    if quad <= 1e-300 {
        return Ok(None);
    }
    let kl = KlSurface::new(probe.model, point)?.eval(&probe.alpha)?;
    Ok(Some(kl / quad))
}

/// Solves `min gᵀα s.t. ½ αᵀF̂α = m` by Newton's method on the KKT system
/// `(g + φF̂α, ½αᵀF̂α − m) = 0` with dense LU solves.
pub fn constrained_minimizer(fisher: &DMatrix<f64>, g: &[f64], m: f64) -> Result<Vec<f64>> {
    let d = g.len();
    if fisher.nrows() != d || fisher.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: fisher.nrows(),
        });
    }
    let g = DVector::from_column_slice(g);
    let quad = |a: &DVector<f64>| 0.5 * a.dot(&(fisher * a));
    // Start on the ellipsoid along the Euclidean steepest-descent direction.
    let mut alpha = -&g * (m / quad(&g)).sqrt();
    let fa = fisher * &alpha;
    let mut phi = -fa.dot(&g) / fa.norm_squared();

    let residual = |alpha: &DVector<f64>, phi: f64| -> DVector<f64> {
        let fa = fisher * alpha;
        let mut r = DVector::zeros(d + 1);
        r.rows_mut(0, d).copy_from(&(&g + &fa * phi));
        r[d] = quad(alpha) - m;
        r
    };
    let scale = g.norm().max(m);
    let mut r = residual(&alpha, phi);
    for _ in 0..200 {
        if r.norm() <= 1e-15 * scale {
            break;
        }
        let fa = fisher * &alpha;
        let mut jac = DMatrix::zeros(d + 1, d + 1);
        jac.view_mut((0, 0), (d, d)).copy_from(&(fisher * phi));
        jac.view_mut((0, d), (d, 1)).copy_from(&fa);
        jac.view_mut((d, 0), (1, d)).copy_from(&fa.transpose());
        let step = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::invalid("singular KKT system"))?;
        // Backtrack on the residual norm.
        let mut t = 1.0;
        loop {
            let cand_alpha = &alpha + step.rows(0, d) * t;
            let cand_phi = phi + step[d] * t;
            let cand_r = residual(&cand_alpha, cand_phi);
            if cand_r.norm() < r.norm() || t < 1e-8 {
                alpha = cand_alpha;
                phi = cand_phi;
                r = cand_r;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(alpha.iter().copied().collect())
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Default ellipsoid level `m` for [`steepest_descent_cosine`].
pub const DEFAULT_LEVEL: f64 = 1e-4;

/// Cosine between the KKT minimiser and `−F̂⁻¹g` (dense solve), or `None`
/// when `g = 0`.
pub fn steepest_descent_cosine(fisher: &RankOneFisher, g: &[f64], m: f64) -> Result<Option<f64>> {
    check_len(g.len(), fisher.dim())?;
    if fisher.dim() > 32 {
        return Err(Error::DenseGuard {
            d: fisher.dim(),
            limit: 32,
        });
    }
    if g.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let minimizer = constrained_minimizer(&fisher.to_dense()?, g, m)?;
    let natural: Vec<f64> = dense_inverse_oracle(fisher.score(), fisher.gamma(), g)?
        .into_iter()
        .map(|v| -v)
        .collect();
    Ok(Some(cosine(&minimizer, &natural)))
}

/// Builds `F̂ = s sᵀ + γI` from the exact score of the predicted class at
/// `x` and the exact loss gradient at `x + δ`, then runs
/// [`steepest_descent_cosine`].
pub fn check_steepest_descent_direction(
    model: &MlpModel,
    x: &[f64],
    delta: &[f64],
    gamma: f64,
) -> Result<Option<f64>> {
    check_len(delta.len(), x.len())?;
    let t = model.forward(x)?.argmax();
    let point: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
    let probs = model.forward(&point)?;
    let (margin, other) = log_margin(&probs, t)?;
    if margin <= 0.0 {
        return Ok(None);
    }
    let score = model.grad_logp_exact(&point, t)?;
    let other_score = model.grad_logp_exact(&point, other)?;
    let g: Vec<f64> = score.iter().zip(&other_score).map(|(a, b)| a - b).collect();
    let fisher = RankOneFisher::new(score, gamma)?;
    steepest_descent_cosine(&fisher, &g, DEFAULT_LEVEL)
}

/// A random relu model and a point `x + δ` whose relu pre-activations are
/// all at least `margin` away from zero, so finite differences of size well
/// below `margin` never cross a kink.
pub fn smooth_instance<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    hidden: usize,
    classes: usize,
    margin: f64,
) -> (MlpModel, Vec<f64>, Vec<f64>) {
    let model = MlpModel::random(&[d, hidden, classes], 2.0, rng);
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
        let delta: Vec<f64> = (0..d).map(|_| rng.random_range(-0.05..0.05)).collect();
        let point: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        if model.min_relu_margin(&point).expect("dims match") >= margin {
            return (model, x, delta);
        }
    }
}

/// A random unit direction scaled to `norm`.
pub fn random_displacement<R: Rng + ?Sized>(rng: &mut R, d: usize, norm: f64) -> Vec<f64> {
    let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.into_iter().map(|v| v * norm / n).collect()
}

/// One line of the verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// Worst observed value across the instances.
    pub worst: f64,
    pub threshold: String,
    pub passed: bool,
}

/// The full lemma suite on seeded random instances, as run by `zongd verify`.
pub fn verification_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d = rng.random_range(1..=64);
        let norm = rng.random_range(0.01..10.0);
        let s = random_displacement(&mut rng, d, norm);
        let g = random_displacement(&mut rng, d, 1.0);
        let gamma = 10f64.powf(rng.random_range(-3.0..0.0));
        let fast = natural_gradient_step(&RankOneFisher::new(s.clone(), gamma)?, &g, 1.0)?;
        let slow = dense_inverse_oracle(&s, gamma, &g)?;
        let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = slow.iter().map(|b| b * b).sum();
        worst = worst.max((num / den).sqrt());
    }
    out.push(CheckOutcome {
        name: "rank-one inverse vs dense solve (rel. L2)",
        worst,
        threshold: "<= 1e-10".into(),
        passed: worst <= 1e-10,
    });

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (m, x, delta) = smooth_instance(&mut rng, 8, 12, 3, 0.0);
        worst = worst.max(check_score_expectation(&m, &x, &delta)?);
    }
    out.push(CheckOutcome {
        name: "score expectation is zero (max abs)",
        worst,
        threshold: "<= 1e-8".into(),
        passed: worst <= 1e-8,
    });

    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..10 {
        let (m, x, delta) = smooth_instance(&mut rng, 8, 12, 4, 0.1);
        let probe = KlProbe::new(&m, x, delta, 1e-3, vec![0.0; 8])?;
        match check_kl_hessian_equals_fim(&probe)? {
            Some(e) => worst = worst.max(e),
            None => ok = false,
        }
    }
    out.push(CheckOutcome {
        name: "KL Hessian equals Fisher (rel. Frobenius)",
        worst,
        threshold: "<= 1e-3".into(),
        passed: ok && worst <= 1e-3,
    });

    let mut worst = 0.0f64;
    let mut shrinks = true;
    for _ in 0..10 {
        let (m, x, delta) = smooth_instance(&mut rng, 8, 12, 4, 0.1);
        let dir = random_displacement(&mut rng, 8, 1.0);
        let ratio_at = |norm: f64| -> Result<Option<f64>> {
            let alpha = dir.iter().map(|v| v * norm).collect();
            check_kl_taylor(&KlProbe::new(&m, x.clone(), delta.clone(), 1e-3, alpha)?)
        };
        match (ratio_at(1e-3)?, ratio_at(1e-4)?) {
            (Some(big), Some(small)) => {
                worst = worst.max((big - 1.0).abs());
                shrinks &= (small - 1.0).abs() < (big - 1.0).abs();
            }
            _ => shrinks = false,
        }
    }
    out.push(CheckOutcome {
        name: "KL / (1/2 a'Fa) at |a| = 1e-3 (max |ratio - 1|)",
        worst,
        threshold: "<= 1e-2, shrinking at |a| = 1e-4".into(),
        passed: shrinks && worst <= 1e-2,
    });

    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..10 {
        let d = rng.random_range(2..=32);
        let norm = rng.random_range(0.1..3.0);
        let s = random_displacement(&mut rng, d, norm);
        let g = random_displacement(&mut rng, d, 1.0);
        let fisher = RankOneFisher::new(s, 0.01)?;
        match steepest_descent_cosine(&fisher, &g, DEFAULT_LEVEL)? {
            Some(c) => worst = worst.max(1.0 - c),
            None => ok = false,
        }
    }
    out.push(CheckOutcome {
        name: "KKT minimiser vs -F^-1 g (1 - cosine)",
        worst,
        threshold: "<= 1e-6".into(),
        passed: ok && worst <= 1e-6,
    });

    Ok(out)
}
