use vlga::engine::{GaConfig, MemoryJournal, VariableLengthGa};
use vlga::evaluators::{EvalRequest, Evaluation, FitnessService, ModelRef, SurrogateParams, WarmStart};
use vlga::report::phase_fitness_csv;
use vlga::rng::seeded;
use vlga::{Chromosome, EvalResult, Evaluator, ExternalEvaluator, SearchSpace, Shape, SurrogateEvaluator, WorkerSettings};

const CIFAR: Shape = Shape::new(32, 32, 3);

fn worker(flags: &str) -> WorkerSettings {
    WorkerSettings {
        command: format!("{} {flags}", env!("CARGO_BIN_EXE_vlga-echo-worker")),
        timeout_secs: 10.0,
        ..Default::default()
    }
}

fn chromosome(seed: u64, phase: usize) -> Chromosome {
    let mut c = Chromosome::random(&SearchSpace::default(), phase, &mut seeded(seed));
    c.phase0.pooling_present = false;
    c
}

fn request(c: &Chromosome, id: &str) -> EvalRequest {
    EvalRequest {
        request_id: id.into(),
        graph: vlga::ArchitectureGraph::decode(c, CIFAR, 10).unwrap(),
        warm_start_from: None,
        transfer_map: Default::default(),
        epochs: 5,
        warm_start_epochs: 0,
        chromosome: Some(c.clone()),
    }
}

#[test]
fn scores_match_the_in_process_surrogate() {
    let ext = ExternalEvaluator::new(worker(""));
    let c = chromosome(1, 2);
    let remote: EvalResult = ext.evaluate(&request(&c, "r7")).unwrap();
    let local: EvalResult = SurrogateEvaluator::default().evaluate(&request(&c, "r7")).unwrap();
    assert_eq!(remote.fitness, local.fitness);
    assert_eq!(remote.request_id, "r7");
    assert_eq!(remote.cost_units, 5.0);
    assert!(remote.model_ref.is_some() && remote.error.is_none());
}

#[test]
fn warm_start_goes_through_the_worker_store() {
    let ext = ExternalEvaluator::new(worker(""));
    let mut svc = FitnessService::<f64, _>::new(&ext, CIFAR, 10, None);
    let parent = chromosome(2, 0);
    let p = svc.assess(&parent, None, 5).unwrap().unwrap();
    let warm = WarmStart {
        model_ref: p.evaluation.model_ref().unwrap().clone(),
        graph: svc.decode(&parent).unwrap(),
        trained_epochs: 5,
    };
    let child = parent.extend(&SearchSpace::default(), &mut seeded(3));
    let o = svc.assess(&child, Some(&warm), 5).unwrap().unwrap();
    let expected = SurrogateParams::<f64>::default().raw_score(&child, 10).clamp(0.0, 1.0);
    assert_eq!(o.evaluation, Evaluation::Scored {
        fitness: expected,
        model_ref: o.evaluation.model_ref().unwrap().clone(),
        trained_epochs: 10,
    });

    let mut bogus = request(&child, "x");
    bogus.warm_start_from = Some(ModelRef("never-trained".into()));
    let r: EvalResult = ext.evaluate(&bogus).unwrap();
    assert!(r.error.unwrap().contains("unknown model"));
    assert_eq!(r.fitness, 0.0);
}

#[test]
fn hung_worker_times_out_with_an_error_result() {
    let settings = WorkerSettings { timeout_secs: 0.3, ..worker("--hang-on-eval") };
    let ext = ExternalEvaluator::new(settings);
    let started = std::time::Instant::now();
    let r: EvalResult = ext.evaluate(&request(&chromosome(4, 0), "r0")).unwrap();
    assert!(started.elapsed() < std::time::Duration::from_secs(5));
    assert_eq!(r.fitness, 0.0);
    assert!(r.error.unwrap().contains("did not answer"));
    // the killed worker is replaced for the next request
    let again: EvalResult = ext.evaluate(&request(&chromosome(4, 0), "r1")).unwrap();
    assert!(again.error.is_some());
}

#[test]
fn crashing_and_garbled_workers_yield_error_results() {
    for flags in ["--exit-on-eval", "--garbage-on-eval"] {
        let ext = ExternalEvaluator::new(worker(flags));
        for id in ["a", "b"] {
            let r: EvalResult = ext.evaluate(&request(&chromosome(5, 1), id)).unwrap();
            assert_eq!(r.request_id, id, "{flags}");
            assert_eq!(r.fitness, 0.0, "{flags}");
            assert!(r.error.is_some(), "{flags}");
        }
    }
}

#[test]
fn failed_evaluations_rank_as_zero_and_are_not_cached() {
    let ext = ExternalEvaluator::new(worker("--exit-on-eval"));
    let mut svc = FitnessService::<f64, _>::new(&ext, CIFAR, 10, None);
    let c = chromosome(6, 0);
    let first = svc.assess(&c, None, 5).unwrap().unwrap();
    assert!(matches!(first.evaluation, Evaluation::Failed { .. }));
    assert_eq!(first.evaluation.fitness(), Some(0.0));
    let second = svc.assess(&c, None, 5).unwrap().unwrap();
    assert!(!second.cached);
    assert!(svc.cache().is_empty());
}

#[test]
fn out_of_range_fitness_is_rejected() {
    let ext = ExternalEvaluator::new(worker("--fitness 1.5"));
    let r: EvalResult = ext.evaluate(&request(&chromosome(7, 0), "r0")).unwrap();
    assert!(r.error.is_some());
}

#[test]
fn startup_failures_make_the_evaluator_unavailable() {
    let wrong_version = ExternalEvaluator::new(worker("--protocol-version 99"));
    let err = Evaluator::<f64>::evaluate(&wrong_version, &request(&chromosome(8, 0), "r0")).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");

    let missing = ExternalEvaluator::new(WorkerSettings { command: "/nonexistent/worker-binary".into(), ..worker("") });
    assert!(Evaluator::<f64>::evaluate(&missing, &request(&chromosome(8, 0), "r0")).is_err());
}

#[test]
fn dump_shapes_agrees_with_the_decoder() {
    let ext = ExternalEvaluator::new(worker(""));
    for seed in 0..5 {
        let c = chromosome(seed, 3);
        let graph = vlga::ArchitectureGraph::decode(&c, CIFAR, 10).unwrap();
        let shapes = ext.dump_shapes(&format!("s{seed}"), &graph).unwrap();
        let expected: Vec<Shape> = graph.nodes.iter().map(|n| n.shape).collect();
        assert_eq!(shapes, expected);
    }
}

#[test]
fn search_through_workers_matches_in_process_search() {
    let cfg = GaConfig { population_size: 6, generations_per_phase: 2, max_phases: 3, master_seed: 4, ..Default::default() };
    let local = SurrogateEvaluator::default();
    let a = VariableLengthGa::new(cfg.clone(), SearchSpace::default(), &local)
        .unwrap()
        .run_search(&mut MemoryJournal::new())
        .unwrap();
    // pooled workers find each other's models through a shared store
    let store = tempfile::tempdir().unwrap();
    let flags = format!("--store {}", store.path().display());
    let pooled = ExternalEvaluator::new(WorkerSettings { pool_size: 3, ..worker(&flags) });
    let b = vlga::engine::VariableLengthGa::<f64, _>::new(GaConfig { parallel: true, ..cfg }, SearchSpace::default(), &pooled)
        .unwrap()
        .run_search(&mut MemoryJournal::new())
        .unwrap();
    assert_eq!(phase_fitness_csv(&a.history), phase_fitness_csv(&b.history));
    assert_eq!(a.ledger.spent, b.ledger.spent);
}
