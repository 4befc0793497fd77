//! Hyperparameter search for convolutional networks with a variable-length
//! genetic algorithm.
//!
//! Chromosomes grow one block per phase. Each phase runs a small generational
//! GA at a fixed length, then seeds the next phase by extending its best
//! individual and warm-starting the deeper networks from its trained weights.
//! The search ends when a phase's best falls noticeably below the best seen so far.
//!
//! The numeric core is generic over [`num::Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod baselines;
pub mod chromosome;
pub mod config;
pub mod engine;
pub mod error;
pub mod evaluators;
pub mod journal;
pub mod model_graph;
pub mod num;
pub mod report;
pub mod rng;
pub mod search_space;

pub use chromosome::{Chromosome, ChromosomeHash};
pub use engine::{should_stop, Dataset, GaConfig, SearchObserver, StopReason};
pub use error::{ChromosomeError, ConfigError, EngineError, EvaluatorUnavailable, GraphError, ProtocolError};
pub use evaluators::{EvalRequest, Evaluator, ExternalEvaluator, ModelRef, WorkerSettings};
pub use model_graph::{ArchitectureGraph, Shape};
pub use search_space::SearchSpace;

pub type Individual = engine::Individual<f64>;
pub type PhaseRecord = engine::PhaseRecord<f64>;
pub type SearchState = engine::SearchState<f64>;
pub type SearchOutcome = engine::SearchOutcome<f64>;
pub type Evaluation = evaluators::Evaluation<f64>;
pub type EvalResult = evaluators::EvalResult<f64>;
pub type SurrogateEvaluator = evaluators::SurrogateEvaluator<f64>;
pub type SurrogateParams = evaluators::SurrogateParams<f64>;
pub type JournalEvent = journal::JournalEvent<f64>;
pub type VariableLengthGa<'e, E> = engine::VariableLengthGa<'e, f64, E>;

pub type Individual32 = engine::Individual<f32>;
pub type SurrogateEvaluator32 = evaluators::SurrogateEvaluator<f32>;
pub type VariableLengthGa32<'e, E> = engine::VariableLengthGa<'e, f32, E>;
