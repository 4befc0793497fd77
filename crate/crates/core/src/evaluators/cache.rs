use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::EvalResult;
use crate::chromosome::ChromosomeHash;
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "F: Scalar"))]
pub struct CacheEntry<F> {
    pub hash: ChromosomeHash,
    /// Total epochs the stored model received.
    pub epochs: u32,
    pub result: EvalResult<F>,
}

type Entries<F> = HashMap<ChromosomeHash, Vec<(u32, EvalResult<F>)>>;

/// Shared store of finished evaluations keyed by chromosome hash.
#[derive(Debug, Default)]
pub struct EvalCache<F> {
    entries: Mutex<Entries<F>>,
}

impl<F: Scalar> EvalCache<F> {
    pub fn new() -> Self {
        Self { entries: Mutex::new(HashMap::new()) }
    }

    /// Result of an earlier evaluation with the same hash and at least `epochs`
    /// epochs. The least-trained such entry wins.
    pub fn lookup(&self, hash: &ChromosomeHash, epochs: u32) -> Option<EvalResult<F>> {
        let entries = self.entries.lock().expect("cache lock");
        entries
            .get(hash)?
            .iter()
            .filter(|(e, _)| *e >= epochs)
            .min_by_key(|(e, _)| *e)
            .map(|(_, r)| r.clone())
    }

    pub fn store(&self, hash: ChromosomeHash, epochs: u32, result: EvalResult<F>) {
        let mut entries = self.entries.lock().expect("cache lock");
        let slot = entries.entry(hash).or_default();
        match slot.iter_mut().find(|(e, _)| *e == epochs) {
            Some(existing) => existing.1 = result,
            None => slot.push((epochs, result)),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in a stable order, for checkpoints.
    pub fn snapshot(&self) -> Vec<CacheEntry<F>> {
        let entries = self.entries.lock().expect("cache lock");
        let mut out: Vec<CacheEntry<F>> = entries
            .iter()
            .flat_map(|(h, v)| v.iter().map(|(e, r)| CacheEntry { hash: h.clone(), epochs: *e, result: r.clone() }))
            .collect();
        out.sort_by(|a, b| (&a.hash, a.epochs).cmp(&(&b.hash, b.epochs)));
        out
    }

    pub fn restore(entries: Vec<CacheEntry<F>>) -> Self {
        let cache = Self::new();
        for e in entries {
            cache.store(e.hash, e.epochs, e.result);
        }
        cache
    }
}
