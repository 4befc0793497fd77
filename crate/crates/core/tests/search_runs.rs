use std::collections::{HashMap, HashSet};

use vlga::engine::{GaConfig, MemoryJournal, StopReason, VariableLengthGa};
use vlga::evaluators::{Evaluation, SurrogateEvaluator};
use vlga::journal::{read_events, replay, write_events, EventKind, JournalEvent};
use vlga::report::phase_fitness_csv;
use vlga::SearchSpace;

fn small_config(seed: u64) -> GaConfig {
    GaConfig { population_size: 8, generations_per_phase: 3, master_seed: seed, ..Default::default() }
}

fn run(cfg: GaConfig) -> (vlga::SearchOutcome, MemoryJournal<f64>) {
    let eval = SurrogateEvaluator::default();
    let ga = VariableLengthGa::new(cfg, SearchSpace::default(), &eval).unwrap();
    let mut journal = MemoryJournal::new();
    journal.keep_checkpoints = true;
    let outcome = ga.run_search(&mut journal).unwrap();
    (outcome, journal)
}

fn strip(events: &[JournalEvent<f64>]) -> Vec<JournalEvent<f64>> {
    events.iter().map(JournalEvent::without_timestamp).collect()
}

#[test]
fn resuming_from_any_checkpoint_reproduces_the_run() {
    let cfg = small_config(11);
    let (straight, journal) = run(cfg.clone());
    assert!(journal.checkpoints.len() > 5);
    let eval = SurrogateEvaluator::default();
    let ga = VariableLengthGa::new(cfg, SearchSpace::default(), &eval).unwrap();
    for checkpoint in &journal.checkpoints {
        // checkpoints go through their on-disk form
        let state = vlga::SearchState::from_json(&checkpoint.to_json()).unwrap();
        let mut tail = MemoryJournal::new();
        let resumed = ga.resume(state, &mut tail).unwrap();
        assert_eq!(resumed.history, straight.history);
        assert_eq!(resumed.ledger, straight.ledger);
        let mut events: Vec<_> = journal.events.iter().filter(|e| e.seq < checkpoint.next_seq).cloned().collect();
        events.extend(tail.events);
        assert_eq!(strip(&events), strip(&journal.events));
    }
}

#[test]
fn interrupted_run_resumes_to_identical_outputs() {
    let cfg = small_config(5);
    let (straight, journal) = run(cfg.clone());
    let eval = SurrogateEvaluator::default();
    let ga = VariableLengthGa::new(cfg, SearchSpace::default(), &eval).unwrap();
    let mut first = MemoryJournal::new();
    first.keep_checkpoints = true;
    first.halt_after_generations = Some(4);
    let partial = ga.run_search(&mut first).unwrap();
    assert_eq!(partial.stop, StopReason::Interrupted);
    let state = first.checkpoints.last().unwrap().clone();
    let mut second = MemoryJournal::new();
    let finished = ga.resume(state, &mut second).unwrap();
    let mut events = first.events.clone();
    events.extend(second.events);
    assert_eq!(strip(&events), strip(&journal.events));
    assert_eq!(phase_fitness_csv(&finished.history), phase_fitness_csv(&straight.history));
}

#[test]
fn journal_replay_rebuilds_history() {
    let (outcome, journal) = run(small_config(2));
    let mut buf = Vec::new();
    write_events(&mut buf, &journal.events).unwrap();
    let events: Vec<JournalEvent<f64>> = read_events(buf.as_slice()).unwrap();
    assert_eq!(events, journal.events);
    assert_eq!(replay(&events).unwrap(), outcome.history);
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    let mut shuffled = events.clone();
    shuffled.swap(3, 4);
    assert!(replay(&shuffled).is_err());
}

#[test]
fn best_is_the_maximum_over_everything_evaluated() {
    for seed in 0..4 {
        let cfg = GaConfig { max_phases: 8, ..small_config(seed) };
        let (outcome, journal) = run(cfg.clone());
        let tracked = journal
            .events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::IndividualEvaluated { fitness, .. } => Some(*fitness),
                _ => None,
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.best.unwrap().fitness().unwrap(), tracked);
        let best_per_phase = outcome.history.iter().map(|r| r.best_fitness()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best_per_phase, tracked);
        assert!(outcome.history.len() <= cfg.max_phases + 1);
        match outcome.stop {
            StopReason::FitnessDrop { previous_best, latest_best } => {
                assert!(previous_best - latest_best > cfg.stop_threshold);
                assert_eq!(latest_best, outcome.history.last().unwrap().best_fitness());
            }
            StopReason::MaxPhases => assert_eq!(outcome.history.len(), cfg.max_phases + 1),
            other => panic!("unexpected stop {other:?}"),
        }
    }
}

#[test]
fn phase_limit_stops_the_search() {
    let (outcome, _) = run(GaConfig { max_phases: 2, stop_threshold: 1.0, ..small_config(1) });
    assert_eq!(outcome.stop, StopReason::MaxPhases);
    assert_eq!(outcome.history.iter().map(|r| r.phase_index).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(outcome.history.iter().all(|r| r.complete && r.per_generation_fitnesses.len() == 3));
}

#[test]
fn budget_ends_the_search_mid_phase() {
    let eval = SurrogateEvaluator::default();
    let ga = VariableLengthGa::new(small_config(4), SearchSpace::default(), &eval).unwrap().with_budget(100.0);
    let outcome = ga.run_search(&mut MemoryJournal::new()).unwrap();
    assert_eq!(outcome.stop, StopReason::BudgetExhausted);
    assert!(outcome.ledger.spent >= 100.0 && outcome.ledger.spent <= 105.0);
    assert!(!outcome.history.last().unwrap().complete);
}

#[test]
fn ledger_is_the_sum_of_uncached_costs() {
    let (outcome, journal) = run(small_config(8));
    let mut seen: HashMap<(usize, String), usize> = HashMap::new();
    let mut charged = 0.0;
    let mut charged_count = 0;
    for e in &journal.events {
        if let EventKind::IndividualEvaluated { phase, generation, hash, cost, cached, request_id, error, .. } = &e.kind {
            if request_id.is_none() && !*cached {
                // rejected by the decoder before reaching the evaluator
                assert_eq!(*cost, 0.0);
                assert!(error.is_some());
            } else if *cached {
                assert_eq!(*cost, 0.0);
                // served from an earlier evaluation of the same phase
                let first = seen.get(&(*phase, hash.0.clone())).copied();
                assert!(first.is_some_and(|g| g <= *generation));
            } else {
                charged += cost;
                charged_count += 1;
                seen.entry((*phase, hash.0.clone())).or_insert(*generation);
            }
        }
    }
    assert_eq!(outcome.ledger.spent, charged);
    assert_eq!(outcome.ledger.evaluations, charged_count);
    assert!(outcome.ledger.cache_hits > 0);
}

#[test]
fn elites_never_lose_fitness_without_mutation() {
    for seed in 0..20 {
        let cfg = GaConfig { mutation_rate: 0.0, generations_per_phase: 5, max_phases: 2, ..small_config(seed) };
        let (outcome, _) = run(cfg);
        for record in &outcome.history {
            let tops: Vec<f64> = record.per_generation_fitnesses.iter().map(|g| g[0]).collect();
            assert!(tops.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: {tops:?}");
        }
    }
}

#[test]
fn deeper_phases_warm_start_from_the_previous_best() {
    let (outcome, journal) = run(GaConfig { max_phases: 3, stop_threshold: 1.0, ..small_config(9) });
    for record in &outcome.history {
        let k = record.phase_index as u32;
        let epochs = record.best.evaluation.trained_epochs();
        // cold only when mutation broke the inherited prefix
        assert!(epochs == 5 || epochs == 5 * (k + 1), "phase {k}: {epochs}");
        assert_eq!(record.best.chromosome.phase(), record.phase_index);
    }
    for w in outcome.history.windows(2) {
        let parent = w[0].best.chromosome.genes();
        let start = journal
            .checkpoints
            .iter()
            .find(|s| s.phase == w[1].phase_index && s.generation == 0)
            .expect("checkpoint at phase start");
        assert_eq!(start.warm_start.as_ref().unwrap().trained_epochs, w[0].best.evaluation.trained_epochs());
        for x in &start.population {
            assert_eq!(x.chromosome.phase(), w[0].phase_index + 1);
            assert_eq!(x.chromosome.genes()[..parent.len()], parent[..]);
        }
    }
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let (a, ja) = run(small_config(3));
    let (b, jb) = run(GaConfig { parallel: true, ..small_config(3) });
    assert_eq!(a.history, b.history);
    assert_eq!(strip(&ja.events), strip(&jb.events));
}

#[test]
fn single_precision_runs_end_to_end() {
    let eval = vlga::SurrogateEvaluator32::default();
    let ga = vlga::VariableLengthGa32::new(small_config(6), SearchSpace::default(), &eval).unwrap();
    let outcome = ga.run_search(&mut MemoryJournal::new()).unwrap();
    let best = outcome.best.unwrap();
    assert!(matches!(best.evaluation, Evaluation::Scored { .. }));
    let f = best.fitness().unwrap();
    assert!(f > 0.5 && f <= 1.0);
    let hashes: HashSet<_> = outcome.history.iter().map(|r| r.best.chromosome.hash()).collect();
    assert_eq!(hashes.len(), outcome.history.len());
}

#[test]
fn checkpoint_from_another_config_is_refused() {
    let (_, journal) = run(small_config(1));
    let eval = SurrogateEvaluator::default();
    let other = VariableLengthGa::new(small_config(2), SearchSpace::default(), &eval).unwrap();
    let state = journal.checkpoints[1].clone();
    assert!(other.resume(state, &mut MemoryJournal::new()).is_err());
}
