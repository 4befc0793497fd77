//! Evaluation bookkeeping shared by every search strategy: decoding, warm
//! start wiring, cache lookups and budget accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalCache, EvalRequest, EvalResult, Evaluator, ModelRef};
use crate::chromosome::{Chromosome, ChromosomeHash};
use crate::error::EvaluatorUnavailable;
use crate::model_graph::{build_transfer_map, ArchitectureGraph, Shape, TransferMap};
use crate::num::Scalar;

use super::CacheEntry;

/// Evaluation state of an individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", bound(deserialize = "F: Scalar"))]
pub enum Evaluation<F> {
    Pending,
    Scored { fitness: F, model_ref: ModelRef, trained_epochs: u32 },
    /// Invalid architecture or failed evaluation; ranks with fitness zero.
    Failed { reason: String },
}

impl<F: Scalar> Evaluation<F> {
    pub fn fitness(&self) -> Option<F> {
        match self {
            Evaluation::Pending => None,
            Evaluation::Scored { fitness, .. } => Some(*fitness),
            Evaluation::Failed { .. } => Some(F::zero()),
        }
    }

    pub fn is_pending(&self) -> bool {
        matches!(self, Evaluation::Pending)
    }

    pub fn model_ref(&self) -> Option<&ModelRef> {
        match self {
            Evaluation::Scored { model_ref, .. } => Some(model_ref),
            _ => None,
        }
    }

    pub fn trained_epochs(&self) -> u32 {
        match self {
            Evaluation::Scored { trained_epochs, .. } => *trained_epochs,
            _ => 0,
        }
    }
}

/// Trained parent whose weights seed the prefix of a deeper child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub model_ref: ModelRef,
    pub graph: ArchitectureGraph,
    pub trained_epochs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct BudgetLedger<F> {
    pub limit: Option<F>,
    pub spent: F,
    /// Evaluator calls charged to the ledger.
    pub evaluations: u64,
    pub cache_hits: u64,
}

impl<F: Scalar> BudgetLedger<F> {
    pub fn new(limit: Option<F>) -> Self {
        Self { limit, spent: F::zero(), evaluations: 0, cache_hits: 0 }
    }

    /// A new evaluation may start while any budget remains; the last one may overrun.
    pub fn can_start(&self) -> bool {
        self.limit.is_none_or(|l| self.spent < l)
    }

    pub fn exhausted(&self) -> bool {
        !self.can_start()
    }

    fn charge(&mut self, cost: F) {
        self.spent = self.spent + cost;
        self.evaluations += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome<F> {
    pub hash: ChromosomeHash,
    pub request_id: Option<String>,
    pub evaluation: Evaluation<F>,
    /// Units charged to the budget (zero for cache hits and invalid graphs).
    pub cost: F,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct ServiceSnapshot<F> {
    pub ledger: BudgetLedger<F>,
    pub cache: Vec<CacheEntry<F>>,
    pub next_request: u64,
}

enum Prepared<F> {
    Done(EvalOutcome<F>),
    Call { hash: ChromosomeHash, total_epochs: u32, request: EvalRequest },
}

pub struct FitnessService<'e, F: Scalar, E: ?Sized> {
    evaluator: &'e E,
    input_shape: Shape,
    num_classes: u32,
    ledger: BudgetLedger<F>,
    cache: EvalCache<F>,
    next_request: u64,
    parallel: bool,
}

impl<'e, F: Scalar, E: Evaluator<F> + ?Sized> FitnessService<'e, F, E> {
    pub fn new(evaluator: &'e E, input_shape: Shape, num_classes: u32, budget: Option<F>) -> Self {
        Self {
            evaluator,
            input_shape,
            num_classes,
            ledger: BudgetLedger::new(budget),
            cache: EvalCache::new(),
            next_request: 0,
            parallel: false,
        }
    }

    pub fn restore(evaluator: &'e E, input_shape: Shape, num_classes: u32, snapshot: ServiceSnapshot<F>) -> Self {
        Self {
            evaluator,
            input_shape,
            num_classes,
            ledger: snapshot.ledger,
            cache: EvalCache::restore(snapshot.cache),
            next_request: snapshot.next_request,
            parallel: false,
        }
    }

    /// Dispatch independent evaluations of a batch concurrently. Only takes
    /// effect without a budget limit, where dispatch order cannot matter.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn snapshot(&self) -> ServiceSnapshot<F> {
        ServiceSnapshot { ledger: self.ledger.clone(), cache: self.cache.snapshot(), next_request: self.next_request }
    }

    pub fn ledger(&self) -> &BudgetLedger<F> {
        &self.ledger
    }

    pub fn cache(&self) -> &EvalCache<F> {
        &self.cache
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn decode(&self, c: &Chromosome) -> Result<ArchitectureGraph, crate::error::GraphError> {
        ArchitectureGraph::decode(c, self.input_shape, self.num_classes)
    }

    fn prepare(&mut self, c: &Chromosome, warm: Option<&WarmStart>, epochs: u32, full_transfer: bool) -> Prepared<F> {
        let hash = c.hash();
        let graph = match self.decode(c) {
            Ok(g) => g,
            Err(e) => {
                return Prepared::Done(EvalOutcome {
                    hash,
                    request_id: None,
                    evaluation: Evaluation::Failed { reason: e.to_string() },
                    cost: F::zero(),
                    cached: false,
                })
            }
        };
        let transfer: Option<(TransferMap, &WarmStart)> = warm.and_then(|w| {
            let map = if full_transfer {
                graph.nodes.iter().map(|n| (n.id, n.id)).collect()
            } else {
                match build_transfer_map(&graph, &w.graph) {
                    Ok(m) => m,
                    Err(e) => {
                        log::debug!("cold start for {hash}: {e}");
                        return None;
                    }
                }
            };
            (!map.is_empty()).then_some((map, w))
        });
        let prior = transfer.as_ref().map_or(0, |(_, w)| w.trained_epochs);
        let total_epochs = prior + epochs;
        if let Some(hit) = self.cache.lookup(&hash, total_epochs) {
            let (fitness, model_ref) = (hit.fitness, hit.model_ref.clone().expect("cached results are scored"));
            self.ledger.cache_hits += 1;
            return Prepared::Done(EvalOutcome {
                hash,
                request_id: None,
                evaluation: Evaluation::Scored { fitness, model_ref, trained_epochs: total_epochs },
                cost: F::zero(),
                cached: true,
            });
        }
        let request_id = format!("r{}", self.next_request);
        self.next_request += 1;
        let (map, warm_start_from) = match transfer {
            Some((m, w)) => (m, Some(w.model_ref.clone())),
            None => (TransferMap::new(), None),
        };
        let request = EvalRequest {
            request_id,
            graph: graph.with_transfer_map(map.clone()),
            warm_start_from,
            transfer_map: map,
            epochs,
            warm_start_epochs: prior,
            chromosome: Some(c.clone()),
        };
        Prepared::Call { hash, total_epochs, request }
    }

    fn finish(&mut self, hash: ChromosomeHash, total_epochs: u32, request_id: String, result: EvalResult<F>) -> EvalOutcome<F> {
        let cost = if result.cost_units >= F::zero() { result.cost_units } else { F::zero() };
        self.ledger.charge(cost);
        let evaluation = if !result.is_well_formed() || result.request_id != request_id {
            Evaluation::Failed { reason: format!("malformed evaluator result for {request_id}") }
        } else if let Some(err) = &result.error {
            Evaluation::Failed { reason: err.clone() }
        } else {
            let model_ref = result.model_ref.clone().expect("checked by is_well_formed");
            self.cache.store(hash.clone(), total_epochs, result.clone());
            Evaluation::Scored { fitness: result.fitness, model_ref, trained_epochs: total_epochs }
        };
        EvalOutcome { hash, request_id: Some(request_id), evaluation, cost, cached: false }
    }

    fn run(&mut self, prepared: Prepared<F>) -> Result<EvalOutcome<F>, EvaluatorUnavailable> {
        match prepared {
            Prepared::Done(o) => Ok(o),
            Prepared::Call { hash, total_epochs, request } => {
                let result = self.evaluator.evaluate(&request)?;
                Ok(self.finish(hash, total_epochs, request.request_id, result))
            }
        }
    }

    /// Evaluate one chromosome. `None` when the budget is exhausted and the
    /// result is neither cached nor free.
    pub fn assess(
        &mut self,
        c: &Chromosome,
        warm: Option<&WarmStart>,
        epochs: u32,
    ) -> Result<Option<EvalOutcome<F>>, EvaluatorUnavailable> {
        self.assess_inner(c, warm, epochs, false)
    }

    /// Continue training an already-trained model with its full weights.
    pub fn retrain(
        &mut self,
        c: &Chromosome,
        source: &WarmStart,
        epochs: u32,
    ) -> Result<Option<EvalOutcome<F>>, EvaluatorUnavailable> {
        self.assess_inner(c, Some(source), epochs, true)
    }

    fn assess_inner(
        &mut self,
        c: &Chromosome,
        warm: Option<&WarmStart>,
        epochs: u32,
        full: bool,
    ) -> Result<Option<EvalOutcome<F>>, EvaluatorUnavailable> {
        let saved = self.next_request;
        let prepared = self.prepare(c, warm, epochs, full);
        if matches!(prepared, Prepared::Call { .. }) && !self.ledger.can_start() {
            self.next_request = saved;
            return Ok(None);
        }
        self.run(prepared).map(Some)
    }

    /// Evaluate a batch in order. Entries after budget exhaustion come back `None`.
    pub fn assess_batch(
        &mut self,
        items: &[(Chromosome, Option<WarmStart>)],
        epochs: u32,
    ) -> Result<Vec<Option<EvalOutcome<F>>>, EvaluatorUnavailable> {
        if !self.parallel || self.ledger.limit.is_some() {
            return items.iter().map(|(c, w)| self.assess(c, w.as_ref(), epochs)).collect();
        }

        // Concurrent path: first occurrences of each (hash, epochs) are
        // dispatched together; later duplicates resolve as cache hits
        // exactly as the sequential path would.
        let mut slots: Vec<Option<EvalOutcome<F>>> = vec![None; items.len()];
        let mut calls: Vec<(usize, ChromosomeHash, u32, EvalRequest)> = Vec::new();
        let mut deferred: Vec<usize> = Vec::new();
        for (i, (c, w)) in items.iter().enumerate() {
            let key_hash = c.hash();
            if calls.iter().any(|(_, h, _, _)| *h == key_hash) {
                deferred.push(i);
                continue;
            }
            match self.prepare(c, w.as_ref(), epochs, false) {
                Prepared::Done(o) => slots[i] = Some(o),
                Prepared::Call { hash, total_epochs, request } => calls.push((i, hash, total_epochs, request)),
            }
        }
        let evaluator = self.evaluator;
        let results: Vec<Result<EvalResult<F>, EvaluatorUnavailable>> =
            calls.par_iter().map(|(_, _, _, req)| evaluator.evaluate(req)).collect();
        let mut finished = Vec::with_capacity(calls.len());
        for ((i, hash, total, req), result) in calls.into_iter().zip(results) {
            finished.push((i, hash, total, req.request_id, result?));
        }
        for (i, hash, total, request_id, result) in finished {
            slots[i] = Some(self.finish(hash, total, request_id, result));
        }
        for i in deferred {
            let (c, w) = &items[i];
            slots[i] = self.assess(c, w.as_ref(), epochs)?;
        }
        Ok(slots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::{SurrogateEvaluator, SurrogateParams};
    use crate::rng::seeded;
    use crate::search_space::SearchSpace;

    const CIFAR: Shape = Shape::new(32, 32, 3);

    fn chromosomes(n: usize, phase: usize) -> Vec<Chromosome> {
        let space = SearchSpace::default();
        (0..n as u64)
            .map(|i| {
                let mut c = Chromosome::random(&space, phase, &mut seeded(i));
                c.phase0.pooling_present = false;
                c
            })
            .collect()
    }

    #[test]
    fn cache_hit_costs_nothing() {
        let eval = SurrogateEvaluator::<f64>::default();
        let mut svc = FitnessService::new(&eval, CIFAR, 10, None);
        let c = &chromosomes(1, 0)[0];
        let first = svc.assess(c, None, 5).unwrap().unwrap();
        let again = svc.assess(&c.clone(), None, 5).unwrap().unwrap();
        assert!(!first.cached && again.cached);
        assert_eq!(first.cost, 5.0);
        assert_eq!(again.cost, 0.0);
        assert_eq!(first.evaluation, again.evaluation);
        assert_eq!(svc.ledger().spent, 5.0);
        assert_eq!(svc.ledger().evaluations, 1);
    }

    #[test]
    fn budget_stops_new_evaluations() {
        let eval = SurrogateEvaluator::<f64>::default();
        let mut svc = FitnessService::new(&eval, CIFAR, 10, Some(7.0));
        let cs = chromosomes(3, 0);
        assert!(svc.assess(&cs[0], None, 5).unwrap().is_some());
        assert!(svc.assess(&cs[1], None, 5).unwrap().is_some());
        assert!(svc.assess(&cs[2], None, 5).unwrap().is_none());
        // cached results stay available
        assert!(svc.assess(&cs[0], None, 5).unwrap().unwrap().cached);
        assert_eq!(svc.ledger().spent, 10.0);
    }

    #[test]
    fn invalid_architecture_is_free() {
        let eval = SurrogateEvaluator::<f64>::default();
        let mut svc = FitnessService::new(&eval, Shape::new(1, 1, 3), 10, None);
        let mut c = chromosomes(1, 0).remove(0);
        c.phase0.pooling_present = true;
        let o = svc.assess(&c, None, 5).unwrap().unwrap();
        assert!(matches!(o.evaluation, Evaluation::Failed { .. }));
        assert_eq!(o.evaluation.fitness(), Some(0.0));
        assert_eq!(svc.ledger().spent, 0.0);
    }

    #[test]
    fn warm_start_adds_parent_epochs() {
        let eval = SurrogateEvaluator::<f64>::default();
        let mut svc = FitnessService::new(&eval, CIFAR, 10, None);
        let parent = chromosomes(1, 0).remove(0);
        let p = svc.assess(&parent, None, 5).unwrap().unwrap();
        let warm = WarmStart {
            model_ref: p.evaluation.model_ref().unwrap().clone(),
            graph: svc.decode(&parent).unwrap(),
            trained_epochs: 5,
        };
        let child = parent.extend(&SearchSpace::default(), &mut seeded(9));
        let o = svc.assess(&child, Some(&warm), 5).unwrap().unwrap();
        assert_eq!(o.evaluation.trained_epochs(), 10);
        assert_eq!(o.cost, 5.0);
        let expected = SurrogateParams::<f64>::default().raw_score(&child, 10).clamp(0.0, 1.0);
        assert_eq!(o.evaluation.fitness(), Some(expected));
    }

    #[test]
    fn parallel_batch_matches_sequential() {
        let eval = SurrogateEvaluator::<f64>::default();
        let mut cs = chromosomes(12, 1);
        cs.push(cs[3].clone());
        cs.push(cs[0].clone());
        let items: Vec<_> = cs.into_iter().map(|c| (c, None)).collect();
        let mut seq = FitnessService::new(&eval, CIFAR, 10, None);
        let mut par = FitnessService::new(&eval, CIFAR, 10, None).with_parallel(true);
        let a = seq.assess_batch(&items, 5).unwrap();
        let b = par.assess_batch(&items, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(seq.snapshot(), par.snapshot());
    }
}
