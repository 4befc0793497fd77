//! Fitness evaluation: the request/result contract, the deterministic
//! surrogate, the external worker client and the cache/budget service that
//! the search strategies share.

mod cache;
pub mod external;
pub mod protocol;
mod service;
mod surrogate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::error::EvaluatorUnavailable;
use crate::model_graph::{ArchitectureGraph, TransferMap};
use crate::num::Scalar;

pub use cache::{CacheEntry, EvalCache};
pub use external::{ExternalEvaluator, WorkerSettings};
pub use service::{BudgetLedger, EvalOutcome, Evaluation, FitnessService, ServiceSnapshot, WarmStart};
pub use surrogate::{SurrogateEvaluator, SurrogateParams};

/// Opaque reference to stored trained state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelRef(pub String);

impl fmt::Display for ModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub request_id: String,
    pub graph: ArchitectureGraph,
    #[serde(default)]
    pub warm_start_from: Option<ModelRef>,
    #[serde(default, with = "crate::model_graph::transfer_pairs")]
    pub transfer_map: TransferMap,
    pub epochs: u32,
    /// Epochs already received by the warm-start source.
    #[serde(default)]
    pub warm_start_epochs: u32,
    /// Genotype behind `graph`. External workers may ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chromosome: Option<Chromosome>,
}

impl EvalRequest {
    /// Warm start and transfer map must be given together.
    pub fn is_consistent(&self) -> bool {
        self.warm_start_from.is_some() == !self.transfer_map.is_empty() && self.epochs > 0
    }

    pub fn total_epochs(&self) -> u32 {
        self.warm_start_epochs + self.epochs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct EvalResult<F> {
    pub request_id: String,
    pub fitness: F,
    #[serde(default)]
    pub model_ref: Option<ModelRef>,
    pub cost_units: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<F: Scalar> EvalResult<F> {
    pub fn failure(request_id: impl Into<String>, error: impl Into<String>, cost_units: F) -> Self {
        Self { request_id: request_id.into(), fitness: F::zero(), model_ref: None, cost_units, error: Some(error.into()) }
    }

    /// Successful results carry a fitness in [0, 1] and a model reference.
    pub fn is_well_formed(&self) -> bool {
        let cost_ok = self.cost_units >= F::zero();
        match self.error {
            Some(_) => cost_ok,
            None => {
                cost_ok && self.model_ref.is_some() && self.fitness >= F::zero() && self.fitness <= F::one()
            }
        }
    }

    pub fn cast<G: Scalar>(&self) -> EvalResult<G> {
        EvalResult {
            request_id: self.request_id.clone(),
            fitness: G::of(self.fitness.as_f64()),
            model_ref: self.model_ref.clone(),
            cost_units: G::of(self.cost_units.as_f64()),
            error: self.error.clone(),
        }
    }
}

/// Anything that can score an architecture.
///
/// A failure of one evaluation is reported inside the [`EvalResult`]; `Err`
/// means the evaluator cannot serve requests at all.
pub trait Evaluator<F: Scalar>: Send + Sync {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResult<F>, EvaluatorUnavailable>;
}

impl<F: Scalar, E: Evaluator<F> + ?Sized> Evaluator<F> for &E {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResult<F>, EvaluatorUnavailable> {
        (**self).evaluate(request)
    }
}

impl<F: Scalar, E: Evaluator<F> + ?Sized> Evaluator<F> for Box<E> {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResult<F>, EvaluatorUnavailable> {
        (**self).evaluate(request)
    }
}
