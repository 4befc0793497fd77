//! Comparison strategies run under the same cost budget as the variable-length GA.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::engine::{Dataset, GaConfig, Individual, SearchObserver, VariableLengthGa};
use crate::error::{ConfigError, EngineError};
use crate::evaluators::{EvalOutcome, Evaluator, FitnessService};
use crate::journal::{EventKind, JournalEvent};
use crate::num::Scalar;
use crate::rng::Streams;
use crate::search_space::{GeneField, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(alias = "vlga")]
    VariableLengthGA,
    #[serde(alias = "random")]
    RandomSearch,
    #[serde(alias = "classical")]
    ClassicalGA,
    #[serde(alias = "mutation")]
    MutationOnlyEvolution,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::VariableLengthGA, Strategy::RandomSearch, Strategy::ClassicalGA, Strategy::MutationOnlyEvolution];

    /// Short name used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            Strategy::VariableLengthGA => "vlga",
            Strategy::RandomSearch => "random",
            Strategy::ClassicalGA => "classical",
            Strategy::MutationOnlyEvolution => "mutation",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.short_name() == s || format!("{x:?}") == s)
            .ok_or_else(|| ConfigError::InvalidChoice { field: "strategy", value: s.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Inclusive main-path layer range sampled by random search.
    pub random_layer_range: [usize; 2],
    pub classical_fixed_phase: usize,
    pub classical_population_size: usize,
    /// Classical GA trains each individual this many times longer.
    pub classical_epoch_multiplier: u32,
    pub mutation_population_size: usize,
    /// Chance that a mutation-only child grows a block instead of changing a gene;
    /// `None` treats growth as one more gene field.
    pub grow_probability: Option<f64>,
    /// Stop after this many consecutive evaluations that charged nothing.
    pub max_idle_evaluations: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            random_layer_range: [2, 10],
            classical_fixed_phase: 1,
            classical_population_size: 50,
            classical_epoch_multiplier: 16,
            mutation_population_size: 20,
            grow_probability: None,
            max_idle_evaluations: 10_000,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let [lo, hi] = self.random_layer_range;
        if lo < 2 || hi < lo {
            return Err(ConfigError::InvalidSetting {
                field: "random_layer_range",
                reason: format!("[{lo}, {hi}] must satisfy 2 <= min <= max"),
            });
        }
        if self.classical_population_size < 2 || self.mutation_population_size < 2 {
            return Err(ConfigError::InvalidSetting {
                field: "population_size",
                reason: "baseline populations need at least two individuals".into(),
            });
        }
        if self.classical_epoch_multiplier == 0 {
            return Err(ConfigError::InvalidSetting { field: "classical_epoch_multiplier", reason: "must be positive".into() });
        }
        if let Some(p) = self.grow_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::InvalidSetting { field: "grow_probability", reason: format!("{p} is not a probability") });
            }
        }
        Ok(())
    }

    pub fn grow_probability(&self) -> f64 {
        self.grow_probability.unwrap_or(1.0 / (GeneField::ALL.len() as f64 + 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct TracePoint<F> {
    pub cost: F,
    pub best_fitness: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct BudgetedRun<F> {
    pub strategy: Strategy,
    pub seed: u64,
    pub budget_units: F,
    /// (cumulative cost, best fitness so far) after each charged evaluation.
    pub best_trace: Vec<TracePoint<F>>,
    /// Evaluator calls charged to the budget.
    pub evaluations: u64,
    pub spent: F,
    pub final_best: Option<Individual<F>>,
}

impl<F: Scalar> BudgetedRun<F> {
    pub fn final_best_fitness(&self) -> F {
        self.best_trace.last().map_or(F::zero(), |p| p.best_fitness)
    }
}

/// Builds a best-so-far trace from evaluation outcomes.
#[derive(Debug, Clone)]
pub struct TraceRecorder<F> {
    spent: F,
    trace: Vec<TracePoint<F>>,
    best: Option<Individual<F>>,
}

impl<F: Scalar> Default for TraceRecorder<F> {
    fn default() -> Self {
        Self { spent: F::zero(), trace: Vec::new(), best: None }
    }
}

impl<F: Scalar> TraceRecorder<F> {
    pub fn record(&mut self, chromosome: &Chromosome, outcome: &EvalOutcome<F>) {
        self.observe(outcome.evaluation.fitness().unwrap_or(F::zero()), outcome.cost, outcome.cached || outcome.request_id.is_none());
        let candidate = Individual { chromosome: chromosome.clone(), evaluation: outcome.evaluation.clone() };
        let better = match (&self.best, candidate.fitness()) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(b), Some(f)) => f > b.fitness().unwrap_or(F::neg_infinity()),
        };
        if better {
            self.best = Some(candidate);
        }
    }

    fn observe(&mut self, fitness: F, cost: F, free: bool) {
        if free {
            return;
        }
        self.spent = self.spent + cost;
        let best = self.trace.last().map_or(fitness, |p| p.best_fitness.max(fitness));
        match self.trace.last_mut() {
            Some(last) if last.cost >= self.spent => last.best_fitness = best,
            _ => self.trace.push(TracePoint { cost: self.spent, best_fitness: best }),
        }
    }

    pub fn finish(self, strategy: Strategy, seed: u64, budget: F, evaluations: u64) -> BudgetedRun<F> {
        BudgetedRun {
            strategy,
            seed,
            budget_units: budget,
            best_trace: self.trace,
            evaluations,
            spent: self.spent,
            final_best: self.best,
        }
    }
}

/// Common inputs for a budgeted run.
pub struct RunSetup<'a, F: Scalar, E: ?Sized> {
    pub space: &'a SearchSpace,
    pub ga: &'a GaConfig,
    pub baselines: &'a BaselineConfig,
    pub dataset: Dataset,
    pub evaluator: &'a E,
    pub budget: F,
    pub seed: u64,
}

impl<F: Scalar, E: Evaluator<F> + ?Sized> RunSetup<'_, F, E> {
    fn service(&self) -> FitnessService<'_, F, E> {
        FitnessService::new(self.evaluator, self.dataset.input_shape, self.dataset.num_classes, Some(self.budget))
    }

    pub fn run(&self, strategy: Strategy) -> Result<BudgetedRun<F>, EngineError> {
        match strategy {
            Strategy::VariableLengthGA => variable_length_ga(self),
            Strategy::RandomSearch => random_search(self),
            Strategy::ClassicalGA => classical_ga(self),
            Strategy::MutationOnlyEvolution => mutation_only_evolution(self),
        }
    }
}

struct TraceObserver<F> {
    recorder: TraceRecorder<F>,
    best: Option<Individual<F>>,
}

impl<F: Scalar> SearchObserver<F> for TraceObserver<F> {
    fn on_event(&mut self, event: &JournalEvent<F>) -> std::io::Result<()> {
        match &event.kind {
            EventKind::IndividualEvaluated { fitness, cost, cached, request_id, .. } => {
                self.recorder.observe(*fitness, *cost, *cached || request_id.is_none());
            }
            EventKind::PhaseCompleted { best, .. } if self.best.as_ref().is_none_or(|b| best.fitness() > b.fitness()) => {
                self.best = Some(best.clone());
            }
            _ => {}
        }
        Ok(())
    }
}

fn engine_run<F: Scalar, E: Evaluator<F> + ?Sized>(
    setup: &RunSetup<'_, F, E>,
    strategy: Strategy,
    config: GaConfig,
    fixed_phase: Option<usize>,
) -> Result<BudgetedRun<F>, EngineError> {
    let mut ga = VariableLengthGa::new(config, setup.space.clone(), setup.evaluator)?
        .with_dataset(setup.dataset)
        .with_budget(setup.budget);
    if let Some(p) = fixed_phase {
        ga = ga.fixed_length(p);
    }
    let mut observer = TraceObserver { recorder: TraceRecorder::default(), best: None };
    let outcome = ga.run_search(&mut observer)?;
    let mut run = observer.recorder.finish(strategy, setup.seed, setup.budget, outcome.ledger.evaluations);
    run.final_best = observer.best;
    Ok(run)
}

/// The variable-length GA with a budget; stops at the budget, the fitness-drop
/// rule or the phase limit, whichever comes first.
pub fn variable_length_ga<F: Scalar, E: Evaluator<F> + ?Sized>(setup: &RunSetup<'_, F, E>) -> Result<BudgetedRun<F>, EngineError> {
    let config = GaConfig { master_seed: setup.seed, ..setup.ga.clone() };
    engine_run(setup, Strategy::VariableLengthGA, config, None)
}

/// Fixed-length generational GA with long per-individual training.
pub fn classical_ga<F: Scalar, E: Evaluator<F> + ?Sized>(setup: &RunSetup<'_, F, E>) -> Result<BudgetedRun<F>, EngineError> {
    setup.baselines.validate()?;
    let config = GaConfig {
        master_seed: setup.seed,
        population_size: setup.baselines.classical_population_size,
        fitness_epochs: setup.ga.fitness_epochs * setup.baselines.classical_epoch_multiplier,
        ..setup.ga.clone()
    };
    engine_run(setup, Strategy::ClassicalGA, config, Some(setup.baselines.classical_fixed_phase))
}

/// (phase, number of extension blocks with a second layer) pairs whose layer
/// count lies in `[lo, hi]`, weighted by how many include-flag patterns give them.
fn phase_layer_weights(lo: usize, hi: usize) -> Vec<((usize, usize), f64)> {
    let mut out = Vec::new();
    for phase in 0..=hi.saturating_sub(2) {
        let mut binom = 1.0f64;
        for k in 0..=phase {
            if k > 0 {
                binom = binom * (phase - k + 1) as f64 / k as f64;
            }
            let layers = 2 + phase + k;
            if (lo..=hi).contains(&layers) {
                out.push(((phase, k), binom));
            }
        }
    }
    out
}

/// Random chromosome whose layer count lies in `[lo, hi]`, uniform over the
/// achievable (phase, include-flag pattern) combinations.
pub fn sample_in_layer_range<R: Rng + ?Sized>(space: &SearchSpace, lo: usize, hi: usize, rng: &mut R) -> Chromosome {
    let weights = phase_layer_weights(lo, hi);
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut pick = rng.random_range(0.0..total);
    let mut chosen = weights.last().expect("range admits at least one phase").0;
    for &(pk, w) in &weights {
        if pick < w {
            chosen = pk;
            break;
        }
        pick -= w;
    }
    let (phase, with_b) = chosen;
    let mut c = Chromosome::random(space, phase, rng);
    let mut flags = vec![false; phase];
    flags[..with_b].fill(true);
    for i in (1..phase).rev() {
        flags.swap(i, rng.random_range(0..=i));
    }
    for (block, flag) in c.extensions.iter_mut().zip(flags) {
        block.include_layer_b = flag;
    }
    c
}

/// Independent random architectures, each trained from scratch.
pub fn random_search<F: Scalar, E: Evaluator<F> + ?Sized>(setup: &RunSetup<'_, F, E>) -> Result<BudgetedRun<F>, EngineError> {
    setup.baselines.validate()?;
    let [lo, hi] = setup.baselines.random_layer_range;
    let streams = Streams::new(setup.seed);
    let mut service = setup.service();
    let mut recorder = TraceRecorder::default();
    let mut idle = 0;
    for i in 0u64.. {
        let c = sample_in_layer_range(setup.space, lo, hi, &mut streams.stream("random_search", &[i]));
        let Some(o) = service.assess(&c, None, setup.ga.fitness_epochs)? else { break };
        recorder.record(&c, &o);
        idle = if o.request_id.is_some() { 0 } else { idle + 1 };
        if service.ledger().exhausted() || idle >= setup.baselines.max_idle_evaluations {
            break;
        }
    }
    Ok(recorder.finish(Strategy::RandomSearch, setup.seed, setup.budget, service.ledger().evaluations))
}

/// Steady-state evolution without crossover: two random individuals meet, the
/// worse is replaced by a mutated copy of the better. A mutation either
/// changes one gene or appends a random block.
pub fn mutation_only_evolution<F: Scalar, E: Evaluator<F> + ?Sized>(
    setup: &RunSetup<'_, F, E>,
) -> Result<BudgetedRun<F>, EngineError> {
    let cfg = setup.baselines;
    cfg.validate()?;
    let streams = Streams::new(setup.seed);
    let epochs = setup.ga.fitness_epochs;
    let mut service = setup.service();
    let mut recorder = TraceRecorder::default();

    let mut population: Vec<(Chromosome, F)> = Vec::with_capacity(cfg.mutation_population_size);
    for i in 0..cfg.mutation_population_size {
        let c = Chromosome::random(setup.space, 0, &mut streams.stream("mutation_init", &[i as u64]));
        let Some(o) = service.assess(&c, None, epochs)? else { break };
        recorder.record(&c, &o);
        let fitness = o.evaluation.fitness().unwrap_or(F::zero());
        population.push((c, fitness));
    }
    let grow = cfg.grow_probability();
    let mut idle = 0;
    let mut step = 0u64;
    while population.len() >= 2 && service.ledger().can_start() && idle < cfg.max_idle_evaluations {
        let mut rng = streams.stream("tournament", &[step]);
        step += 1;
        let a = rng.random_range(0..population.len());
        let mut b = rng.random_range(0..population.len() - 1);
        if b >= a {
            b += 1;
        }
        let (winner, loser) = if population[b].1 > population[a].1 { (b, a) } else { (a, b) };
        let parent = &population[winner].0;
        let child = if rng.random_bool(grow) { parent.extend(setup.space, &mut rng) } else { parent.mutate(setup.space, &mut rng) };
        let Some(o) = service.assess(&child, None, epochs)? else { break };
        recorder.record(&child, &o);
        idle = if o.request_id.is_some() { 0 } else { idle + 1 };
        population[loser] = (child, o.evaluation.fitness().unwrap_or(F::zero()));
    }
    Ok(recorder.finish(Strategy::MutationOnlyEvolution, setup.seed, setup.budget, service.ledger().evaluations))
}

/// Mean, sample standard deviation, min and max of the final best fitness per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub mean_evaluations: f64,
}

pub fn summarize<F: Scalar>(strategy: Strategy, runs: &[BudgetedRun<F>]) -> StrategySummary {
    let values: Vec<f64> = runs.iter().filter(|r| r.strategy == strategy).map(|r| r.final_best_fitness().as_f64()).collect();
    let evals: Vec<f64> = runs.iter().filter(|r| r.strategy == strategy).map(|r| r.evaluations as f64).collect();
    let n = values.len();
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    let var = if n < 2 { 0.0 } else { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 };
    StrategySummary {
        strategy,
        runs: n,
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_evaluations: if n == 0 { 0.0 } else { evals.iter().sum::<f64>() / n as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::SurrogateEvaluator;
    use crate::rng::seeded;

    fn setup<'a>(
        space: &'a SearchSpace,
        ga: &'a GaConfig,
        base: &'a BaselineConfig,
        eval: &'a SurrogateEvaluator<f64>,
        budget: f64,
    ) -> RunSetup<'a, f64, SurrogateEvaluator<f64>> {
        RunSetup { space, ga, baselines: base, dataset: Dataset::default(), evaluator: eval, budget, seed: 3 }
    }

    #[test]
    fn layer_weights_cover_range() {
        let w = phase_layer_weights(2, 10);
        let total: f64 = w.iter().map(|(_, x)| x).sum();
        // phases 0..=8 with include counts keeping 2 + n + k <= 10
        let mut expect = 0.0;
        for n in 0..=8usize {
            for k in 0..=n {
                if 2 + n + k <= 10 {
                    expect += (1..=k).fold(1.0, |acc, j| acc * (n - k + j) as f64 / j as f64);
                }
            }
        }
        assert_eq!(total, expect);
        for _ in 0..200 {
            let c = sample_in_layer_range(&SearchSpace::default(), 4, 7, &mut seeded(1));
            assert!((4..=7).contains(&c.layer_count()));
        }
        let mut rng = seeded(2);
        for _ in 0..500 {
            let c = sample_in_layer_range(&SearchSpace::default(), 2, 10, &mut rng);
            assert!((2..=10).contains(&c.layer_count()));
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.short_name().parse::<Strategy>().unwrap(), s);
            assert_eq!(format!("{s:?}").parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn one_evaluation_budget() {
        let (space, ga, base, eval) = (SearchSpace::default(), GaConfig::default(), BaselineConfig::default(), SurrogateEvaluator::default());
        for strategy in [Strategy::VariableLengthGA, Strategy::RandomSearch, Strategy::ClassicalGA] {
            let run = setup(&space, &ga, &base, &eval, 5.0).run(strategy).unwrap();
            assert_eq!(run.evaluations, 1, "{strategy}");
            assert_eq!(run.best_trace.len(), 1, "{strategy}");
        }
    }

    #[test]
    fn traces_are_monotone_and_within_overrun() {
        let (space, ga, base, eval) = (SearchSpace::default(), GaConfig::default(), BaselineConfig::default(), SurrogateEvaluator::default());
        for strategy in Strategy::ALL {
            let run = setup(&space, &ga, &base, &eval, 400.0).run(strategy).unwrap();
            for w in run.best_trace.windows(2) {
                assert!(w[1].cost > w[0].cost && w[1].best_fitness >= w[0].best_fitness, "{strategy}");
            }
            let max_cost = (ga.fitness_epochs * base.classical_epoch_multiplier) as f64;
            assert!(run.spent <= 400.0 + max_cost, "{strategy}: {}", run.spent);
            assert_eq!(run.best_trace.last().unwrap().cost, run.spent);
            let best = run.final_best.as_ref().unwrap().fitness().unwrap();
            assert_eq!(best, run.final_best_fitness(), "{strategy}");
        }
    }

    #[test]
    fn zero_grow_probability_keeps_phase_zero() {
        let (space, ga, eval) = (SearchSpace::default(), GaConfig::default(), SurrogateEvaluator::default());
        let base = BaselineConfig { grow_probability: Some(0.0), ..Default::default() };
        let run = setup(&space, &ga, &base, &eval, 300.0).run(Strategy::MutationOnlyEvolution).unwrap();
        assert_eq!(run.final_best.unwrap().chromosome.phase(), 0);
    }

    #[test]
    fn one_child_budget_runs_one_tournament() {
        let (space, ga, base, eval) = (SearchSpace::default(), GaConfig::default(), BaselineConfig::default(), SurrogateEvaluator::default());
        let budget = (base.mutation_population_size as f64 + 1.0) * 5.0;
        let run = setup(&space, &ga, &base, &eval, budget).run(Strategy::MutationOnlyEvolution).unwrap();
        assert_eq!(run.evaluations as usize, base.mutation_population_size + 1);
    }
}
