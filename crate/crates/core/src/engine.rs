//! The phased variable-length genetic algorithm.
//!
//! Each phase runs a generational loop over chromosomes of one length:
//! evaluate, sort, keep the elite fraction, let the rest survive by luck,
//! mutate survivors, refill by uniform crossover. After a phase, every member
//! of the next population extends the phase's best chromosome by one freshly
//! sampled block and warm-starts from its trained weights. The search stops
//! when a phase's best falls more than a threshold below the best of all
//! earlier phases.
//!
//! The engine is a resumable state machine: [`SearchState`] holds everything
//! needed to continue a run, and all randomness is drawn from streams keyed
//! by (phase, generation, slot), so resuming reproduces the exact continuation.

use std::io;

use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::error::{ConfigError, EngineError};
use crate::evaluators::{BudgetLedger, EvalOutcome, Evaluation, Evaluator, FitnessService, ServiceSnapshot, WarmStart};
use crate::journal::{now_ms, EventKind, JournalEvent};
use crate::model_graph::Shape;
use crate::num::Scalar;
use crate::rng::Streams;
use crate::search_space::SearchSpace;

/// Budgeted fixed-length runs end after this many generations without a new evaluation.
pub const IDLE_GENERATION_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations_per_phase: usize,
    /// Share of each generation carried over unchanged, rounded up.
    pub elite_fraction: f64,
    /// Survival chance of each non-elite individual.
    pub lucky_survival_prob: f64,
    pub mutation_rate: f64,
    pub fitness_epochs: u32,
    pub stop_threshold: f64,
    /// Highest phase index the search may enter.
    pub max_phases: usize,
    /// Extra epochs given to the final best individual.
    pub final_epochs: u32,
    pub master_seed: u64,
    /// Evaluate a generation's individuals concurrently (unbudgeted runs only).
    pub parallel: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            generations_per_phase: 5,
            elite_fraction: 0.5,
            lucky_survival_prob: 0.2,
            mutation_rate: 0.2,
            fitness_epochs: 5,
            stop_threshold: 0.01,
            max_phases: 50,
            final_epochs: 20,
            master_seed: 0,
            parallel: false,
        }
    }
}

fn probability(field: &'static str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ConfigError::InvalidSetting { field, reason: format!("{p} is not a probability") })
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_size < 2 {
            return Err(ConfigError::InvalidSetting {
                field: "population_size",
                reason: "crossover needs at least two individuals".into(),
            });
        }
        if self.generations_per_phase == 0 {
            return Err(ConfigError::InvalidSetting { field: "generations_per_phase", reason: "must be positive".into() });
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(ConfigError::InvalidSetting { field: "elite_fraction", reason: "must lie in (0, 1]".into() });
        }
        probability("lucky_survival_prob", self.lucky_survival_prob)?;
        probability("mutation_rate", self.mutation_rate)?;
        if self.fitness_epochs == 0 {
            return Err(ConfigError::InvalidSetting { field: "fitness_epochs", reason: "must be positive".into() });
        }
        if self.stop_threshold.is_nan() || self.stop_threshold < 0.0 {
            return Err(ConfigError::InvalidSetting { field: "stop_threshold", reason: "must be non-negative".into() });
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        let raw = self.elite_fraction * self.population_size as f64;
        // guards against 0.3 * 10 = 3.0000000000000004
        ((raw - 1e-9).ceil() as usize).clamp(1, self.population_size)
    }
}

/// Input tensor shape and class count used for decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dataset {
    pub input_shape: Shape,
    pub num_classes: u32,
}

impl Default for Dataset {
    fn default() -> Self {
        Self { input_shape: Shape::new(32, 32, 3), num_classes: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct Individual<F> {
    pub chromosome: Chromosome,
    pub evaluation: Evaluation<F>,
}

impl<F: Scalar> Individual<F> {
    pub fn pending(chromosome: Chromosome) -> Self {
        Self { chromosome, evaluation: Evaluation::Pending }
    }

    pub fn fitness(&self) -> Option<F> {
        self.evaluation.fitness()
    }

    /// Fitness for ranking; unevaluated individuals rank last.
    fn rank_key(&self) -> F {
        self.fitness().unwrap_or(F::neg_infinity())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct PhaseRecord<F> {
    pub phase_index: usize,
    /// One fitness vector per generation, sorted best first.
    pub per_generation_fitnesses: Vec<Vec<F>>,
    /// Fittest individual evaluated during the phase.
    pub best: Individual<F>,
    pub complete: bool,
}

impl<F: Scalar> PhaseRecord<F> {
    pub fn best_fitness(&self) -> F {
        self.best.fitness().unwrap_or(F::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    /// The latest phase's best fell below the best of earlier phases by more than the threshold.
    FitnessDrop { previous_best: f64, latest_best: f64 },
    MaxPhases,
    BudgetExhausted,
    /// A fixed-length run reached its generation limit.
    GenerationLimit,
    Interrupted,
}

/// True iff the best of all phases before the latest exceeds the latest
/// phase's best by more than `threshold`.
pub fn should_stop<F: Scalar>(history: &[PhaseRecord<F>], threshold: F) -> bool {
    let Some((latest, earlier)) = history.split_last() else { return false };
    let Some(previous) = earlier.iter().map(PhaseRecord::best_fitness).reduce(F::max) else {
        return false;
    };
    previous - latest.best_fitness() > threshold
}

/// Everything needed to continue a run; written as the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct SearchState<F> {
    pub config: GaConfig,
    pub space: SearchSpace,
    pub dataset: Dataset,
    pub fixed_phase: Option<usize>,
    pub started: bool,
    pub phase: usize,
    /// Generation about to be evaluated within the current phase.
    pub generation: usize,
    pub population: Vec<Individual<F>>,
    pub phase_fitnesses: Vec<Vec<F>>,
    pub phase_best: Option<Individual<F>>,
    pub history: Vec<PhaseRecord<F>>,
    /// Trained parent all individuals of the current phase extend.
    pub warm_start: Option<WarmStart>,
    pub service: ServiceSnapshot<F>,
    pub next_seq: u64,
    pub stopped: Option<StopReason>,
    /// Consecutive generations that charged nothing to the budget.
    #[serde(default)]
    pub idle_generations: usize,
}

impl<F: Scalar> SearchState<F> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fittest individual over all recorded phases; earliest wins ties.
    pub fn best(&self) -> Option<&Individual<F>> {
        best_of(self.history.iter().map(|r| &r.best))
    }
}

fn best_of<'a, F: Scalar>(it: impl Iterator<Item = &'a Individual<F>>) -> Option<&'a Individual<F>> {
    it.fold(None, |acc: Option<&Individual<F>>, x| match acc {
        Some(a) if a.rank_key() >= x.rank_key() => Some(a),
        _ => Some(x),
    })
}

/// Receives journal events and checkpoints as the search progresses.
pub trait SearchObserver<F: Scalar> {
    fn on_event(&mut self, _event: &JournalEvent<F>) -> io::Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &SearchState<F>) -> io::Result<()> {
        Ok(())
    }

    /// Polled after each checkpoint; `true` stops the run there.
    fn interrupt_requested(&mut self) -> bool {
        false
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl<F: Scalar> SearchObserver<F> for NoObserver {}

/// Observer that keeps the journal in memory.
#[derive(Debug, Default)]
pub struct MemoryJournal<F> {
    pub events: Vec<JournalEvent<F>>,
    pub checkpoints: Vec<SearchState<F>>,
    pub keep_checkpoints: bool,
    /// Interrupt after this many generation checkpoints.
    pub halt_after_generations: Option<usize>,
    generations_seen: usize,
}

impl<F: Scalar> MemoryJournal<F> {
    pub fn new() -> Self {
        Self { events: Vec::new(), checkpoints: Vec::new(), keep_checkpoints: false, halt_after_generations: None, generations_seen: 0 }
    }
}

impl<F: Scalar> SearchObserver<F> for MemoryJournal<F> {
    fn on_event(&mut self, event: &JournalEvent<F>) -> io::Result<()> {
        if matches!(event.kind, EventKind::GenerationCompleted { .. }) {
            self.generations_seen += 1;
        }
        self.events.push(event.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &SearchState<F>) -> io::Result<()> {
        if self.keep_checkpoints {
            self.checkpoints.push(state.clone());
        }
        Ok(())
    }

    fn interrupt_requested(&mut self) -> bool {
        self.halt_after_generations.is_some_and(|n| self.generations_seen >= n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<F> {
    pub best: Option<Individual<F>>,
    pub history: Vec<PhaseRecord<F>>,
    pub stop: StopReason,
    pub ledger: BudgetLedger<F>,
    pub state: SearchState<F>,
}

struct Run<'o, F: Scalar, O: ?Sized> {
    observer: &'o mut O,
    next_seq: u64,
    _f: std::marker::PhantomData<F>,
}

impl<F: Scalar, O: SearchObserver<F> + ?Sized> Run<'_, F, O> {
    fn emit(&mut self, kind: EventKind<F>) -> Result<(), EngineError> {
        let event = JournalEvent { seq: self.next_seq, timestamp_ms: now_ms(), kind };
        self.next_seq += 1;
        self.observer.on_event(&event).map_err(|e| EngineError::Checkpoint(e.to_string()))
    }
}

/// The variable-length GA over a search space and an evaluator.
pub struct VariableLengthGa<'e, F: Scalar, E: ?Sized> {
    config: GaConfig,
    space: SearchSpace,
    dataset: Dataset,
    evaluator: &'e E,
    budget: Option<F>,
    fixed_phase: Option<usize>,
}

impl<'e, F: Scalar, E: Evaluator<F> + ?Sized> VariableLengthGa<'e, F, E> {
    pub fn new(config: GaConfig, space: SearchSpace, evaluator: &'e E) -> Result<Self, EngineError> {
        config.validate()?;
        space.validate()?;
        Ok(Self { config, space, dataset: Dataset::default(), evaluator, budget: None, fixed_phase: None })
    }

    pub fn with_dataset(mut self, dataset: Dataset) -> Self {
        self.dataset = dataset;
        self
    }

    /// Cap the total cost units charged by evaluations.
    pub fn with_budget(mut self, budget: F) -> Self {
        self.budget = Some(budget);
        self
    }

    /// Run the generational loop at one fixed chromosome length, without
    /// phases or warm starts, until the budget (or, without a budget,
    /// `generations_per_phase`) runs out.
    pub fn fixed_length(mut self, phase: usize) -> Self {
        self.fixed_phase = Some(phase);
        self
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    fn streams(&self) -> Streams {
        Streams::new(self.config.master_seed)
    }

    fn service(&self, snapshot: ServiceSnapshot<F>) -> FitnessService<'e, F, E> {
        FitnessService::restore(self.evaluator, self.dataset.input_shape, self.dataset.num_classes, snapshot)
            .with_parallel(self.config.parallel)
    }

    /// State before anything has been evaluated.
    pub fn initial_state(&self) -> SearchState<F> {
        let phase = self.fixed_phase.unwrap_or(0);
        let streams = self.streams();
        let population = (0..self.config.population_size)
            .map(|i| {
                let mut rng = streams.stream("init", &[phase as u64, i as u64]);
                Individual::pending(Chromosome::random(&self.space, phase, &mut rng))
            })
            .collect();
        SearchState {
            config: self.config.clone(),
            space: self.space.clone(),
            dataset: self.dataset,
            fixed_phase: self.fixed_phase,
            started: false,
            phase,
            generation: 0,
            population,
            phase_fitnesses: Vec::new(),
            phase_best: None,
            history: Vec::new(),
            warm_start: None,
            service: ServiceSnapshot { ledger: BudgetLedger::new(self.budget), cache: Vec::new(), next_request: 0 },
            next_seq: 0,
            stopped: None,
            idle_generations: 0,
        }
    }

    /// Run from scratch until a stopping condition fires.
    pub fn run_search<O: SearchObserver<F> + ?Sized>(&self, observer: &mut O) -> Result<SearchOutcome<F>, EngineError> {
        self.resume(self.initial_state(), observer)
    }

    /// Continue a run from a checkpointed state.
    pub fn resume<O: SearchObserver<F> + ?Sized>(
        &self,
        mut state: SearchState<F>,
        observer: &mut O,
    ) -> Result<SearchOutcome<F>, EngineError> {
        if state.config != self.config || state.space != self.space || state.fixed_phase != self.fixed_phase {
            return Err(EngineError::Checkpoint("checkpoint was written with a different configuration".into()));
        }
        let mut service = self.service(state.service.clone());
        let mut run = Run { observer, next_seq: state.next_seq, _f: std::marker::PhantomData };

        if !state.started {
            run.emit(EventKind::RunStarted {
                master_seed: self.config.master_seed,
                population_size: self.config.population_size,
                generations_per_phase: self.config.generations_per_phase,
            })?;
            run.emit(EventKind::PhaseStarted { phase: state.phase })?;
            state.started = true;
            self.checkpoint(&mut state, &service, &mut run)?;
        }

        while state.stopped.is_none() {
            if run.observer.interrupt_requested() {
                return Ok(self.outcome(state, &service, StopReason::Interrupted));
            }
            self.step(&mut state, &mut service, &mut run)?;
            self.checkpoint(&mut state, &service, &mut run)?;
        }
        let stop = state.stopped.clone().expect("loop exits once stopped");
        Ok(self.outcome(state, &service, stop))
    }

    fn outcome(&self, state: SearchState<F>, service: &FitnessService<'e, F, E>, stop: StopReason) -> SearchOutcome<F> {
        SearchOutcome {
            best: state.best().cloned(),
            history: state.history.clone(),
            stop,
            ledger: service.ledger().clone(),
            state,
        }
    }

    fn checkpoint<O: SearchObserver<F> + ?Sized>(
        &self,
        state: &mut SearchState<F>,
        service: &FitnessService<'e, F, E>,
        run: &mut Run<'_, F, O>,
    ) -> Result<(), EngineError> {
        state.service = service.snapshot();
        state.next_seq = run.next_seq;
        run.observer.on_checkpoint(state).map_err(|e| EngineError::Checkpoint(e.to_string()))
    }

    /// Evaluate and rank one generation, then breed the next or close the phase.
    fn step<O: SearchObserver<F> + ?Sized>(
        &self,
        state: &mut SearchState<F>,
        service: &mut FitnessService<'e, F, E>,
        run: &mut Run<'_, F, O>,
    ) -> Result<(), EngineError> {
        let (phase, generation) = (state.phase, state.generation);
        let spent_before = service.ledger().evaluations;
        let pending: Vec<usize> =
            (0..state.population.len()).filter(|&i| state.population[i].evaluation.is_pending()).collect();
        let items: Vec<_> =
            pending.iter().map(|&i| (state.population[i].chromosome.clone(), state.warm_start.clone())).collect();
        let outcomes = service.assess_batch(&items, self.config.fitness_epochs)?;

        let mut exhausted = false;
        for (&i, outcome) in pending.iter().zip(outcomes) {
            match outcome {
                Some(o) => {
                    run.emit(evaluated_event(phase, generation, &o))?;
                    state.population[i].evaluation = o.evaluation;
                }
                None => exhausted = true,
            }
        }

        let mut ranked: Vec<Individual<F>> =
            state.population.iter().filter(|x| !x.evaluation.is_pending()).cloned().collect();
        ranked.sort_by(|a, b| b.rank_key().partial_cmp(&a.rank_key()).expect("fitness is never NaN"));
        let fitnesses: Vec<F> = ranked.iter().map(|x| x.rank_key()).collect();
        if let Some(top) = ranked.first() {
            let better = state.phase_best.as_ref().is_none_or(|b| top.rank_key() > b.rank_key());
            if better {
                state.phase_best = Some(top.clone());
            }
        }
        state.phase_fitnesses.push(fitnesses.clone());
        run.emit(EventKind::GenerationCompleted { phase, generation, fitnesses })?;

        if exhausted || (service.ledger().exhausted() && self.budget.is_some()) {
            self.close_phase(state, run, false)?;
            state.stopped = Some(StopReason::BudgetExhausted);
            run.emit(EventKind::SearchStopped { reason: StopReason::BudgetExhausted })?;
            return Ok(());
        }

        if service.ledger().evaluations == spent_before {
            state.idle_generations += 1;
        } else {
            state.idle_generations = 0;
        }
        let last_generation = match self.fixed_phase {
            // a converged population served from cache would never exhaust the budget
            Some(_) if self.budget.is_some() => state.idle_generations >= IDLE_GENERATION_LIMIT,
            _ => generation + 1 >= self.config.generations_per_phase,
        };
        if !last_generation {
            state.population = self.breed(&ranked, phase, generation)?;
            state.generation += 1;
            return Ok(());
        }

        self.close_phase(state, run, true)?;
        let threshold = F::of(self.config.stop_threshold);
        let stop = if self.fixed_phase.is_some() {
            Some(StopReason::GenerationLimit)
        } else if should_stop(&state.history, threshold) {
            let latest = state.history.last().expect("phase just closed").best_fitness();
            let previous = state.history[..state.history.len() - 1]
                .iter()
                .map(PhaseRecord::best_fitness)
                .fold(F::neg_infinity(), F::max);
            Some(StopReason::FitnessDrop { previous_best: previous.as_f64(), latest_best: latest.as_f64() })
        } else if state.phase >= self.config.max_phases {
            Some(StopReason::MaxPhases)
        } else {
            None
        };
        if let Some(reason) = stop {
            state.stopped = Some(reason.clone());
            run.emit(EventKind::SearchStopped { reason })?;
            return Ok(());
        }
        self.enter_next_phase(state, service, run)
    }

    fn close_phase<O: SearchObserver<F> + ?Sized>(
        &self,
        state: &mut SearchState<F>,
        run: &mut Run<'_, F, O>,
        complete: bool,
    ) -> Result<(), EngineError> {
        let Some(best) = state.phase_best.take() else {
            // budget ran out before anything in this phase was evaluated
            return Ok(());
        };
        run.emit(EventKind::PhaseCompleted { phase: state.phase, best: best.clone(), complete })?;
        state.history.push(PhaseRecord {
            phase_index: state.phase,
            per_generation_fitnesses: std::mem::take(&mut state.phase_fitnesses),
            best,
            complete,
        });
        Ok(())
    }

    fn enter_next_phase<O: SearchObserver<F> + ?Sized>(
        &self,
        state: &mut SearchState<F>,
        service: &FitnessService<'e, F, E>,
        run: &mut Run<'_, F, O>,
    ) -> Result<(), EngineError> {
        let parent = state.history.last().expect("phase just closed").best.clone();
        state.warm_start = match &parent.evaluation {
            Evaluation::Scored { model_ref, trained_epochs, .. } => service
                .decode(&parent.chromosome)
                .ok()
                .map(|graph| WarmStart { model_ref: model_ref.clone(), graph, trained_epochs: *trained_epochs }),
            _ => None,
        };
        state.phase += 1;
        state.generation = 0;
        let streams = self.streams();
        state.population = (0..self.config.population_size)
            .map(|i| {
                let mut rng = streams.stream("extend", &[state.phase as u64, i as u64]);
                Individual::pending(parent.chromosome.extend(&self.space, &mut rng))
            })
            .collect();
        run.emit(EventKind::PhaseStarted { phase: state.phase })
    }

    /// Next generation from a ranked one: elites, lucky survivors, mutation,
    /// then crossover until the population is full again.
    pub fn breed(&self, ranked: &[Individual<F>], phase: usize, generation: usize) -> Result<Vec<Individual<F>>, EngineError> {
        let cfg = &self.config;
        let streams = self.streams();
        let coords = [phase as u64, generation as u64];
        let mut rng = streams.stream("select", &coords);
        use rand::Rng;

        let elites = cfg.elite_count().min(ranked.len());
        let mut next: Vec<Individual<F>> = ranked[..elites].to_vec();
        for candidate in &ranked[elites..] {
            if rng.random_bool(cfg.lucky_survival_prob) {
                next.push(candidate.clone());
            }
        }
        next.truncate(cfg.population_size);
        for (i, survivor) in next.iter_mut().enumerate() {
            if rng.random_bool(cfg.mutation_rate) {
                let mut mrng = streams.stream("mutate", &[phase as u64, generation as u64, i as u64]);
                let (child, changed) = survivor.chromosome.mutate_at(&self.space, &mut mrng);
                if changed.is_some() {
                    *survivor = Individual::pending(child);
                }
            }
        }
        let parents = next.len();
        let mut k = 0u64;
        while next.len() < cfg.population_size {
            let a = rng.random_range(0..parents);
            let b = rng.random_range(0..parents);
            let mut crng = streams.stream("crossover", &[phase as u64, generation as u64, k]);
            let child = Chromosome::crossover(&next[a].chromosome, &next[b].chromosome, &mut crng)?;
            next.push(Individual::pending(child));
            k += 1;
        }
        Ok(next)
    }

    /// Retrain `best` for `extra_epochs` more epochs from its stored weights.
    ///
    /// Failures leave `best` unchanged; the error is reported alongside.
    pub fn finalize(&self, best: &Individual<F>, extra_epochs: u32) -> (Individual<F>, Option<String>) {
        finalize(best, self.evaluator, self.dataset, extra_epochs)
    }
}

fn evaluated_event<F: Scalar>(phase: usize, generation: usize, o: &EvalOutcome<F>) -> EventKind<F> {
    EventKind::IndividualEvaluated {
        phase,
        generation,
        hash: o.hash.clone(),
        request_id: o.request_id.clone(),
        fitness: o.evaluation.fitness().unwrap_or(F::zero()),
        cost: o.cost,
        cached: o.cached,
        error: match &o.evaluation {
            Evaluation::Failed { reason } => Some(reason.clone()),
            _ => None,
        },
    }
}

/// Retrain an individual from its stored model for more epochs.
pub fn finalize<F: Scalar, E: Evaluator<F> + ?Sized>(
    best: &Individual<F>,
    evaluator: &E,
    dataset: Dataset,
    extra_epochs: u32,
) -> (Individual<F>, Option<String>) {
    if extra_epochs == 0 {
        return (best.clone(), None);
    }
    let Evaluation::Scored { model_ref, trained_epochs, .. } = &best.evaluation else {
        return (best.clone(), Some("individual has no trained model".into()));
    };
    let mut service = FitnessService::new(evaluator, dataset.input_shape, dataset.num_classes, None);
    let graph = match service.decode(&best.chromosome) {
        Ok(g) => g,
        Err(e) => return (best.clone(), Some(e.to_string())),
    };
    let source = WarmStart { model_ref: model_ref.clone(), graph, trained_epochs: *trained_epochs };
    match service.retrain(&best.chromosome, &source, extra_epochs) {
        Ok(Some(o)) => match o.evaluation {
            Evaluation::Failed { reason } => (best.clone(), Some(reason)),
            evaluation => (Individual { chromosome: best.chromosome.clone(), evaluation }, None),
        },
        Ok(None) => (best.clone(), Some("budget exhausted".into())),
        Err(e) => (best.clone(), Some(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::{ModelRef, SurrogateEvaluator};

    fn record(phase: usize, best: f64) -> PhaseRecord<f64> {
        let c = Chromosome::random(&SearchSpace::default(), phase, &mut crate::rng::seeded(phase as u64));
        PhaseRecord {
            phase_index: phase,
            per_generation_fitnesses: vec![vec![best]],
            best: Individual {
                chromosome: c,
                evaluation: Evaluation::Scored { fitness: best, model_ref: ModelRef("m".into()), trained_epochs: 5 },
            },
            complete: true,
        }
    }

    #[test]
    fn stop_rule_fires_on_large_drop() {
        let history = vec![record(0, 0.70), record(1, 0.8233), record(2, 0.8070)];
        assert!(should_stop(&history, 0.01));
    }

    #[test]
    fn stop_rule_ignores_small_drop() {
        let history = vec![record(0, 0.80), record(1, 0.795)];
        assert!(!should_stop(&history, 0.01));
    }

    #[test]
    fn stop_rule_needs_two_phases() {
        assert!(!should_stop(&[record(0, 0.5)], 0.01));
        assert!(!should_stop::<f64>(&[], 0.01));
    }

    #[test]
    fn elite_count_rounds_up() {
        let mut cfg = GaConfig::default();
        assert_eq!(cfg.elite_count(), 10);
        cfg.population_size = 10;
        cfg.elite_fraction = 0.3;
        assert_eq!(cfg.elite_count(), 3);
        cfg.population_size = 7;
        cfg.elite_fraction = 0.5;
        assert_eq!(cfg.elite_count(), 4);
    }

    #[test]
    fn config_validation() {
        let bad = [
            GaConfig { population_size: 1, ..Default::default() },
            GaConfig { mutation_rate: 1.5, ..Default::default() },
            GaConfig { elite_fraction: 0.0, ..Default::default() },
            GaConfig { fitness_epochs: 0, ..Default::default() },
            GaConfig { generations_per_phase: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(GaConfig::default().validate().is_ok());
    }

    #[test]
    fn breed_fills_population() {
        let eval = SurrogateEvaluator::<f64>::default();
        let ga = VariableLengthGa::new(GaConfig::default(), SearchSpace::default(), &eval).unwrap();
        let state = ga.initial_state();
        let ranked: Vec<Individual<f64>> = state
            .population
            .iter()
            .enumerate()
            .map(|(i, x)| Individual {
                chromosome: x.chromosome.clone(),
                evaluation: Evaluation::Scored {
                    fitness: 1.0 - i as f64 / 40.0,
                    model_ref: ModelRef(format!("m{i}")),
                    trained_epochs: 5,
                },
            })
            .collect();
        let next = ga.breed(&ranked, 0, 0).unwrap();
        assert_eq!(next.len(), 20);
        // elites either survive unchanged or were mutated into pending individuals
        for (i, x) in next.iter().take(10).enumerate() {
            if !x.evaluation.is_pending() {
                assert_eq!(x, &ranked[i]);
            }
        }
        assert_eq!(next, ga.breed(&ranked, 0, 0).unwrap());
    }
}
