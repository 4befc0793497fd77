//! Append-only run journal and replay.

use std::io::{self, BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::chromosome::ChromosomeHash;
use crate::engine::{Individual, PhaseRecord, StopReason};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", bound(deserialize = "F: Scalar"))]
pub enum EventKind<F> {
    RunStarted {
        master_seed: u64,
        population_size: usize,
        generations_per_phase: usize,
    },
    PhaseStarted {
        phase: usize,
    },
    IndividualEvaluated {
        phase: usize,
        generation: usize,
        hash: ChromosomeHash,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_id: Option<String>,
        fitness: F,
        cost: F,
        cached: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    GenerationCompleted {
        phase: usize,
        generation: usize,
        /// Sorted best first.
        fitnesses: Vec<F>,
    },
    PhaseCompleted {
        phase: usize,
        best: Individual<F>,
        /// False when the budget ran out part-way through the phase.
        complete: bool,
    },
    SearchStopped {
        reason: StopReason,
    },
    Finalized {
        best: Individual<F>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct JournalEvent<F> {
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind<F>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl<F: Scalar> JournalEvent<F> {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    /// Copy with the timestamp zeroed, for comparisons across runs.
    pub fn without_timestamp(&self) -> Self {
        Self { timestamp_ms: 0, ..self.clone() }
    }
}

pub fn write_events<F: Scalar, W: Write>(mut out: W, events: &[JournalEvent<F>]) -> io::Result<()> {
    for e in events {
        writeln!(out, "{}", e.to_line())?;
    }
    Ok(())
}

pub fn read_events<F: Scalar, R: BufRead>(input: R) -> io::Result<Vec<JournalEvent<F>>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(JournalEvent::from_line(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("sequence number {got} follows {prev}")]
    NonMonotone { prev: u64, got: u64 },
    #[error("event {seq} refers to phase {phase} outside the current one")]
    PhaseOrder { seq: u64, phase: usize },
}

/// Rebuild the per-phase history from a journal.
pub fn replay<F: Scalar>(events: &[JournalEvent<F>]) -> Result<Vec<PhaseRecord<F>>, ReplayError> {
    let mut history = Vec::new();
    let mut fitnesses: Vec<Vec<F>> = Vec::new();
    let mut current: Option<usize> = None;
    let mut prev: Option<u64> = None;
    for e in events {
        if let Some(p) = prev {
            if e.seq <= p {
                return Err(ReplayError::NonMonotone { prev: p, got: e.seq });
            }
        }
        prev = Some(e.seq);
        match &e.kind {
            EventKind::PhaseStarted { phase } => {
                current = Some(*phase);
                fitnesses.clear();
            }
            EventKind::GenerationCompleted { phase, fitnesses: f, .. } => {
                if current != Some(*phase) {
                    return Err(ReplayError::PhaseOrder { seq: e.seq, phase: *phase });
                }
                fitnesses.push(f.clone());
            }
            EventKind::PhaseCompleted { phase, best, complete } => {
                if current != Some(*phase) {
                    return Err(ReplayError::PhaseOrder { seq: e.seq, phase: *phase });
                }
                history.push(PhaseRecord {
                    phase_index: *phase,
                    per_generation_fitnesses: std::mem::take(&mut fitnesses),
                    best: best.clone(),
                    complete: *complete,
                });
            }
            _ => {}
        }
    }
    Ok(history)
}
