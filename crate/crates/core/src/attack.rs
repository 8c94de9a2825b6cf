//! Attack loops: black-box ZO-NGD and ZO-PGD, white-box NGD and PGD.
//!
//! Every loop starts from `δ = 0`, queries the model at `x + δ` once per
//! iteration and stops as soon as that base query is misclassified. The
//! zeroth-order loops then spend `R` more queries on the shared gradient and
//! score estimate; white-box loops get exact gradients with the base query
//! (one forward and one backward pass count as a single query).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fim::{natural_gradient_step, RankOneFisher, DEFAULT_GAMMA};
use crate::loss::{attack_loss, is_feasible, is_success, log_margin, project_in_place, AttackSetup};
use crate::model::{query, Classifier, MlpModel, ProbVector, QueryLedger};
use crate::rng::seeded;
use crate::zograd::{estimate_from_base, sample_directions, DirectionMode};

pub const DEFAULT_NGD_LR: f64 = 0.05;
/// ZO-PGD / white-box PGD default step, as a multiple of ε.
pub const DEFAULT_PGD_LR_PER_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ZoNgd,
    ZoPgd,
    WbNgd,
    WbPgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ZoNgd => "zo-ngd",
            Method::ZoPgd => "zo-pgd",
            Method::WbNgd => "wb-ngd",
            Method::WbPgd => "wb-pgd",
        }
    }

    pub fn is_zeroth_order(self) -> bool {
        matches!(self, Method::ZoNgd | Method::ZoPgd)
    }

    pub fn is_natural(self) -> bool {
        matches!(self, Method::ZoNgd | Method::WbNgd)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zo-ngd" => Ok(Method::ZoNgd),
            "zo-pgd" => Ok(Method::ZoPgd),
            "wb-ngd" => Ok(Method::WbNgd),
            "wb-pgd" => Ok(Method::WbPgd),
            _ => Err(Error::Usage(format!(
                "unknown method `{s}` (expected zo-ngd, zo-pgd, wb-ngd or wb-pgd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: Method,
    pub epsilon: f64,
    pub mu: f64,
    pub gamma: f64,
    /// Step size; `None` picks the method default (see [`AttackConfig::step_size`]).
    pub lr: Option<f64>,
    /// Number of random directions `R` per estimate.
    pub samples: usize,
    pub kappa: f64,
    pub max_iters: usize,
    pub max_queries: Option<u64>,
    pub direction_mode: DirectionMode,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: Method::ZoNgd,
            epsilon: 0.2,
            mu: 1.0,
            gamma: DEFAULT_GAMMA,
            lr: None,
            samples: 40,
            kappa: 0.0,
            max_iters: 200,
            max_queries: Some(20_000),
            direction_mode: DirectionMode::Gaussian,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// The explicit `lr`, else 0.05 for natural-gradient methods and
    /// `0.01 · ε` for projected-gradient methods.
    pub fn step_size(&self) -> f64 {
        self.lr.unwrap_or(if self.method.is_natural() {
            DEFAULT_NGD_LR
        } else {
            DEFAULT_PGD_LR_PER_EPS * self.epsilon
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.epsilon) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !positive(self.mu) {
            return Err(Error::invalid("mu must be positive"));
        }
        if !positive(self.gamma) {
            return Err(Error::invalid("gamma must be positive"));
        }
        if !positive(self.step_size()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("need at least one random direction"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.kappa.is_nan() || self.kappa < 0.0 {
            return Err(Error::invalid("kappa must be nonnegative"));
        }
        if self.max_queries == Some(0) {
            return Err(Error::invalid("max_queries must be positive when set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub success: bool,
    pub queries: u64,
    /// Completed perturbation updates.
    pub iterations: usize,
    pub delta: Vec<f64>,
    /// Attack loss at every base query, in order.
    pub loss_trace: Vec<f64>,
    /// Prediction at the last queried point.
    pub final_prediction: usize,
}

enum Update {
    Natural { lr: f64, gamma: f64 },
    Projected { lr: f64 },
}

impl Update {
    fn from_config(cfg: &AttackConfig) -> Self {
        if cfg.method.is_natural() {
            Update::Natural {
                lr: cfg.step_size(),
                gamma: cfg.gamma,
            }
        } else {
            Update::Projected {
                lr: cfg.step_size(),
            }
        }
    }

    /// `δ ← Π_S(δ − step)`.
    fn apply(
        &self,
        setup: &AttackSetup,
        delta: &mut [f64],
        grad: &[f64],
        score: &[f64],
    ) -> Result<()> {
        let step = match *self {
            Update::Natural { lr, gamma } => {
                let fisher = RankOneFisher::new(score.to_vec(), gamma)?;
                natural_gradient_step(&fisher, grad, lr)?
            }
            Update::Projected { lr } => grad.iter().map(|g| lr * g).collect(),
        };
        for (d, s) in delta.iter_mut().zip(&step) {
            *d -= s;
        }
        project_in_place(delta, &setup.x, setup.epsilon)?;
        debug_assert!(is_feasible(delta, &setup.x, setup.epsilon));
        Ok(())
    }
}

fn prepare<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackSetup> {
    cfg.validate()?;
    check_len(x.len(), model.input_dim())?;
    if t >= model.num_classes() {
        return Err(Error::invalid(format!(
            "label {t} out of range for {} classes",
            model.num_classes()
        )));
    }
    AttackSetup::new(x.to_vec(), t, cfg.epsilon, cfg.kappa)
}

fn offset(x: &[f64], delta: &[f64]) -> Vec<f64> {
    x.iter().zip(delta).map(|(a, b)| a + b).collect()
}

struct Progress {
    delta: Vec<f64>,
    loss_trace: Vec<f64>,
    last_prediction: usize,
}

impl Progress {
    fn finish(self, success: bool, ledger: &QueryLedger, iterations: usize) -> AttackResult {
        AttackResult {
            success,
            queries: ledger.count(),
            iterations,
            delta: self.delta,
            loss_trace: self.loss_trace,
            final_prediction: self.last_prediction,
        }
    }
}

fn zeroth_order_loop<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
    update: Update,
) -> Result<AttackResult> {
    let setup = prepare(model, x, t, cfg)?;
    let ledger = QueryLedger::new(cfg.max_queries);
    let mut rng = seeded(cfg.seed);
    let d = x.len();
    let mut state = Progress {
        delta: vec![0.0; d],
        loss_trace: Vec::new(),
        last_prediction: t,
    };

    for k in 0..cfg.max_iters {
        let base = match query(model, &ledger, &offset(x, &state.delta)) {
            Ok(p) => p,
            Err(Error::BudgetExhausted { .. }) => return Ok(state.finish(false, &ledger, k)),
            Err(e) => return Err(e),
        };
        state.loss_trace.push(attack_loss(&base, t, cfg.kappa)?);
        state.last_prediction = base.argmax();
        if is_success(&base, t) {
            return Ok(state.finish(true, &ledger, k));
        }
        let batch = sample_directions(cfg.samples, d, cfg.direction_mode, &mut rng)?;
        let est = match estimate_from_base(
            model,
            &ledger,
            x,
            &state.delta,
            t,
            cfg.mu,
            &batch,
            cfg.kappa,
            base,
        ) {
            Ok(est) => est,
            Err(Error::BudgetExhausted { .. }) => return Ok(state.finish(false, &ledger, k)),
            Err(e) => return Err(e),
        };
        update.apply(&setup, &mut state.delta, &est.grad_f, &est.score)?;
    }
    Ok(state.finish(false, &ledger, cfg.max_iters))
}

/// Zeroth-order natural gradient descent (black box).
pub fn zo_ngd_attack<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: Method::ZoNgd,
        ..cfg.clone()
    };
    zeroth_order_loop(model, x, t, &cfg, Update::from_config(&cfg))
}

/// First-order baseline: same estimator, same accounting, plain projected
/// gradient step.
pub fn zo_pgd_baseline<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: Method::ZoPgd,
        ..cfg.clone()
    };
    zeroth_order_loop(model, x, t, &cfg, Update::from_config(&cfg))
}

/// One white-box query: forward pass plus backpropagation, charged once.
pub struct WhiteBoxQuery {
    pub probs: ProbVector,
    /// ∇f: `∇log p_t − ∇log p_{i*}`, or zero where the loss is clamped.
    pub loss_grad: Vec<f64>,
    /// ∇log p_t.
    pub score: Vec<f64>,
}

pub fn whitebox_query(
    model: &MlpModel,
    ledger: &QueryLedger,
    x: &[f64],
    t: usize,
    kappa: f64,
) -> Result<WhiteBoxQuery> {
    check_len(x.len(), model.input_dim())?;
    ledger.charge()?;
    let probs = model.forward(x)?;
    let score = model.grad_logp_exact(x, t)?;
    let (margin, other) = log_margin(&probs, t)?;
    let loss_grad = if margin > -kappa {
        let other_score = model.grad_logp_exact(x, other)?;
        score.iter().zip(&other_score).map(|(a, b)| a - b).collect()
    } else {
        vec![0.0; x.len()]
    };
    Ok(WhiteBoxQuery {
        probs,
        loss_grad,
        score,
    })
}

fn whitebox_loop(
    model: &MlpModel,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let setup = prepare(model, x, t, cfg)?;
    let update = Update::from_config(cfg);
    let ledger = QueryLedger::new(cfg.max_queries);
    let mut state = Progress {
        delta: vec![0.0; x.len()],
        loss_trace: Vec::new(),
        last_prediction: t,
    };
    for k in 0..cfg.max_iters {
        let q = match whitebox_query(model, &ledger, &offset(x, &state.delta), t, cfg.kappa) {
            Ok(q) => q,
            Err(Error::BudgetExhausted { .. }) => return Ok(state.finish(false, &ledger, k)),
            Err(e) => return Err(e),
        };
        state.loss_trace.push(attack_loss(&q.probs, t, cfg.kappa)?);
        state.last_prediction = q.probs.argmax();
        if is_success(&q.probs, t) {
            return Ok(state.finish(true, &ledger, k));
        }
        update.apply(&setup, &mut state.delta, &q.loss_grad, &q.score)?;
    }
    Ok(state.finish(false, &ledger, cfg.max_iters))
}

/// White-box natural gradient descent with the damped outer-product Fisher
/// built from the exact score.
pub fn whitebox_ngd(
    model: &MlpModel,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: Method::WbNgd,
        ..cfg.clone()
    };
    whitebox_loop(model, x, t, &cfg)
}

pub fn whitebox_pgd(
    model: &MlpModel,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        method: Method::WbPgd,
        ..cfg.clone()
    };
    whitebox_loop(model, x, t, &cfg)
}

/// Dispatches on `cfg.method`.
pub fn run_attack(
    model: &MlpModel,
    x: &[f64],
    t: usize,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    match cfg.method {
        Method::ZoNgd => zo_ngd_attack(model, x, t, cfg),
        Method::ZoPgd => zo_pgd_baseline(model, x, t, cfg),
        Method::WbNgd => whitebox_ngd(model, x, t, cfg),
        Method::WbPgd => whitebox_pgd(model, x, t, cfg),
    }
}
