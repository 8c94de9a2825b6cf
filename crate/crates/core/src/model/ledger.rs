use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_len, Error, Result};

use super::{Classifier, ProbVector};

/// Monotone counter of model evaluations with an optional hard budget.
///
/// The ledger is the only mutable state shared by an attack, so increments
/// are atomic and concurrent queries against one ledger are safe.
#[derive(Debug, Default)]
pub struct QueryLedger {
    count: AtomicU64,
    budget: Option<u64>,
}

impl QueryLedger {
    pub fn new(budget: Option<u64>) -> Self {
        Self {
            count: AtomicU64::new(0),
            budget,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    /// Reserves one query. Fails without incrementing once the budget is
    /// spent.
    pub fn charge(&self) -> Result<()> {
        match self.budget {
            None => {
                self.count.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }
            Some(budget) => self
                .count
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| {
                    (c < budget).then_some(c + 1)
                })
                .map(|_| ())
                .map_err(|_| Error::BudgetExhausted { budget }),
        }
    }
}

/// Black-box access: one counted evaluation of `model` at `x`.
pub fn query<C: Classifier + ?Sized>(
    model: &C,
    ledger: &QueryLedger,
    x: &[f64],
) -> Result<ProbVector> {
    check_len(x.len(), model.input_dim())?;
    ledger.charge()?;
    model.predict(x)
}
