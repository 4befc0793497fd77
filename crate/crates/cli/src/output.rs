use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use vlga::engine::{SearchObserver, SearchState};
use vlga::journal::{EventKind, JournalEvent};

pub const JOURNAL: &str = "journal.jsonl";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const BEST_CHROMOSOME: &str = "best_chromosome.json";
pub const BEST_GRAPH: &str = "best_graph.json";
pub const PHASE_FITNESS: &str = "phase_fitness.csv";

/// Write through a temporary file so a crash never leaves a torn file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

/// Appends journal events to disk and writes checkpoints next to them.
pub struct RunFiles {
    dir: PathBuf,
    journal: BufWriter<File>,
    halt_after_generations: Option<usize>,
    generations_seen: usize,
    interrupted: Arc<AtomicBool>,
}

impl RunFiles {
    /// Start a fresh journal in `dir`.
    pub fn create(dir: &Path, interrupted: Arc<AtomicBool>) -> io::Result<Self> {
        let file = File::create(dir.join(JOURNAL))?;
        Ok(Self::with_file(dir, file, interrupted))
    }

    /// Reopen a journal, dropping events written after the checkpoint being resumed.
    pub fn reopen(dir: &Path, next_seq: u64, interrupted: Arc<AtomicBool>) -> io::Result<Self> {
        let path = dir.join(JOURNAL);
        let mut kept = Vec::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: JournalEvent<f64> =
                    JournalEvent::from_line(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                if event.seq < next_seq {
                    kept.push(line);
                }
            }
        }
        let mut text = kept.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        write_atomic(&path, text.as_bytes())?;
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(Self::with_file(dir, file, interrupted))
    }

    fn with_file(dir: &Path, file: File, interrupted: Arc<AtomicBool>) -> Self {
        Self {
            dir: dir.to_path_buf(),
            journal: BufWriter::new(file),
            halt_after_generations: None,
            generations_seen: 0,
            interrupted,
        }
    }

    pub fn halt_after(mut self, generations: Option<usize>) -> Self {
        self.halt_after_generations = generations;
        self
    }

    pub fn append(&mut self, event: &JournalEvent<f64>) -> io::Result<()> {
        writeln!(self.journal, "{}", event.to_line())?;
        self.journal.flush()
    }
}

impl SearchObserver<f64> for RunFiles {
    fn on_event(&mut self, event: &JournalEvent<f64>) -> io::Result<()> {
        if matches!(event.kind, EventKind::GenerationCompleted { .. }) {
            self.generations_seen += 1;
        }
        writeln!(self.journal, "{}", event.to_line())
    }

    fn on_checkpoint(&mut self, state: &SearchState<f64>) -> io::Result<()> {
        self.journal.flush()?;
        write_atomic(&self.dir.join(CHECKPOINT), state.to_json().as_bytes())
    }

    fn interrupt_requested(&mut self) -> bool {
        self.interrupted.load(Ordering::SeqCst)
            || self.halt_after_generations.is_some_and(|n| self.generations_seen >= n)
    }
}
