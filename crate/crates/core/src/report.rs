//! CSV outputs: per-phase fitness, strategy traces and summaries, space sizes.

use std::io;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::baselines::{BudgetedRun, Strategy, StrategySummary, TracePoint};
use crate::engine::PhaseRecord;
use crate::num::Scalar;
use crate::search_space::{layer_range_for_phase, SearchSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct PhaseFitnessRow<F> {
    pub phase: usize,
    pub generation: usize,
    /// 0 is the best of its generation.
    pub rank: usize,
    pub fitness: F,
}

pub fn phase_fitness_rows<F: Scalar>(history: &[PhaseRecord<F>]) -> Vec<PhaseFitnessRow<F>> {
    let mut rows = Vec::new();
    for record in history {
        for (generation, fitnesses) in record.per_generation_fitnesses.iter().enumerate() {
            for (rank, &fitness) in fitnesses.iter().enumerate() {
                rows.push(PhaseFitnessRow { phase: record.phase_index, generation, rank, fitness });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub strategy: Strategy,
    pub seed: u64,
    pub final_best: f64,
    pub evaluations: u64,
    pub spent: f64,
}

impl RunRow {
    pub fn of<F: Scalar>(run: &BudgetedRun<F>) -> Self {
        Self {
            strategy: run.strategy,
            seed: run.seed,
            final_best: run.final_best_fitness().as_f64(),
            evaluations: run.evaluations,
            spent: run.spent.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceRow {
    pub phase: usize,
    pub min_layers: usize,
    pub max_layers: usize,
    /// Exact decimal count of distinct chromosomes at this phase.
    pub size: String,
}

pub fn space_rows(space: &SearchSpace, phases: impl IntoIterator<Item = usize>) -> Vec<SpaceRow> {
    phases
        .into_iter()
        .map(|phase| {
            let (min_layers, max_layers) = layer_range_for_phase(phase);
            let size: BigUint = space.total_space_size(phase);
            SpaceRow { phase, min_layers, max_layers, size: size.to_string() }
        })
        .collect()
}

pub fn write_rows<T: Serialize, W: io::Write>(out: W, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn read_rows<T: serde::de::DeserializeOwned, R: io::Read>(input: R) -> io::Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn to_csv_string<T: Serialize>(rows: &[T]) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn phase_fitness_csv<F: Scalar>(history: &[PhaseRecord<F>]) -> String {
    to_csv_string(&phase_fitness_rows(history))
}

pub fn trace_csv<F: Scalar>(run: &BudgetedRun<F>) -> String {
    to_csv_string::<TracePoint<F>>(&run.best_trace)
}

pub fn runs_csv<F: Scalar>(runs: &[BudgetedRun<F>]) -> String {
    to_csv_string(&runs.iter().map(RunRow::of).collect::<Vec<_>>())
}

pub fn summary_csv(summaries: &[StrategySummary]) -> String {
    to_csv_string(summaries)
}
