//! Variable-length chromosome encoding and the genetic operators over it.
//!
//! A chromosome is a Phase-0 block followed by one extension block per phase.
//! Both block kinds carry exactly ten gene fields, so a chromosome of phase
//! `n` has `10 * (n + 1)` fields. Genes of disabled structures (the pooling
//! type when pooling is off, layer b when it is excluded) stay in place and
//! take part in mutation and crossover like any other gene.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ChromosomeError;
use crate::search_space::{Activation, GeneField, GeneValue, PoolKind, SearchSpace};

/// Gene fields per block (Phase-0 and extension blocks alike).
pub const FIELDS_PER_BLOCK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvLayerGenes {
    pub out_channels: u32,
    pub filter_size: u32,
    pub batch_norm: bool,
}

impl ConvLayerGenes {
    fn random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Self {
        Self {
            out_channels: space.sample_channels(rng),
            filter_size: space.sample_filter(rng),
            batch_norm: rng.random_bool(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phase0Block {
    pub activation: Activation,
    pub layer_a: ConvLayerGenes,
    pub layer_b: ConvLayerGenes,
    pub pooling_present: bool,
    pub pooling_type: PoolKind,
    pub skip_connection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtensionBlock {
    pub include_layer_b: bool,
    pub layer_a: ConvLayerGenes,
    pub layer_b: ConvLayerGenes,
    pub pooling_present: bool,
    pub pooling_type: PoolKind,
    pub skip_connection: bool,
}

impl ExtensionBlock {
    pub fn random<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Self {
        Self {
            include_layer_b: rng.random_bool(0.5),
            layer_a: ConvLayerGenes::random(space, rng),
            layer_b: ConvLayerGenes::random(space, rng),
            pooling_present: rng.random_bool(0.5),
            pooling_type: space.sample_pool(rng),
            skip_connection: rng.random_bool(0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvSlot {
    Channels,
    Filter,
    BatchNorm,
}

/// Position of a gene inside its block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// First slot of the Phase-0 block.
    Activation,
    /// First slot of every extension block.
    IncludeLayerB,
    LayerA(ConvSlot),
    LayerB(ConvSlot),
    PoolingPresent,
    PoolingType,
    SkipConnection,
}

const SHARED_SLOTS: [Slot; 9] = [
    Slot::LayerA(ConvSlot::Channels),
    Slot::LayerA(ConvSlot::Filter),
    Slot::LayerA(ConvSlot::BatchNorm),
    Slot::LayerB(ConvSlot::Channels),
    Slot::LayerB(ConvSlot::Filter),
    Slot::LayerB(ConvSlot::BatchNorm),
    Slot::PoolingPresent,
    Slot::PoolingType,
    Slot::SkipConnection,
];

impl Slot {
    pub fn field(self) -> GeneField {
        match self {
            Slot::Activation => GeneField::Activation,
            Slot::IncludeLayerB => GeneField::IncludeLayerB,
            Slot::LayerA(c) | Slot::LayerB(c) => match c {
                ConvSlot::Channels => GeneField::OutputChannels,
                ConvSlot::Filter => GeneField::FilterSize,
                ConvSlot::BatchNorm => GeneField::BatchNorm,
            },
            Slot::PoolingPresent => GeneField::PoolingPresent,
            Slot::PoolingType => GeneField::PoolingType,
            Slot::SkipConnection => GeneField::SkipConnection,
        }
    }

    /// Slot order for block `block` (0 is the Phase-0 block).
    pub fn ordered(block: usize) -> [Slot; FIELDS_PER_BLOCK] {
        let head = if block == 0 { Slot::Activation } else { Slot::IncludeLayerB };
        let mut out = [head; FIELDS_PER_BLOCK];
        out[1..].copy_from_slice(&SHARED_SLOTS);
        out
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::LayerA(c) => write!(f, "layer_a.{c:?}"),
            Slot::LayerB(c) => write!(f, "layer_b.{c:?}"),
            other => write!(f, "{}", other.field()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneLocus {
    pub block: usize,
    pub slot: Slot,
}

impl GeneLocus {
    pub fn from_index(index: usize) -> Self {
        let block = index / FIELDS_PER_BLOCK;
        Self { block, slot: Slot::ordered(block)[index % FIELDS_PER_BLOCK] }
    }
}

/// Stable content hash of a chromosome's canonical serialization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChromosomeHash(pub String);

impl fmt::Display for ChromosomeHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chromosome {
    pub phase0: Phase0Block,
    pub extensions: Vec<ExtensionBlock>,
}

fn conv_get(layer: &ConvLayerGenes, slot: ConvSlot) -> GeneValue {
    match slot {
        ConvSlot::Channels => GeneValue::Channels(layer.out_channels),
        ConvSlot::Filter => GeneValue::Filter(layer.filter_size),
        ConvSlot::BatchNorm => GeneValue::Flag(layer.batch_norm),
    }
}

fn conv_set(layer: &mut ConvLayerGenes, slot: ConvSlot, value: GeneValue) -> Option<()> {
    match (slot, value) {
        (ConvSlot::Channels, GeneValue::Channels(c)) => layer.out_channels = c,
        (ConvSlot::Filter, GeneValue::Filter(k)) => layer.filter_size = k,
        (ConvSlot::BatchNorm, GeneValue::Flag(b)) => layer.batch_norm = b,
        _ => return None,
    }
    Some(())
}

impl Chromosome {
    /// Sample every gene independently; the result has `phase` extension blocks.
    pub fn random<R: Rng + ?Sized>(space: &SearchSpace, phase: usize, rng: &mut R) -> Self {
        let phase0 = Phase0Block {
            activation: space.sample_activation(rng),
            layer_a: ConvLayerGenes::random(space, rng),
            layer_b: ConvLayerGenes::random(space, rng),
            pooling_present: rng.random_bool(0.5),
            pooling_type: space.sample_pool(rng),
            skip_connection: rng.random_bool(0.5),
        };
        let extensions = (0..phase).map(|_| ExtensionBlock::random(space, rng)).collect();
        Self { phase0, extensions }
    }

    pub fn phase(&self) -> usize {
        self.extensions.len()
    }

    pub fn block_count(&self) -> usize {
        self.extensions.len() + 1
    }

    pub fn gene_count(&self) -> usize {
        FIELDS_PER_BLOCK * self.block_count()
    }

    /// Number of convolutional layers on the main path.
    pub fn layer_count(&self) -> usize {
        2 + self.extensions.iter().map(|e| if e.include_layer_b { 2 } else { 1 }).sum::<usize>()
    }

    pub fn loci(&self) -> impl Iterator<Item = GeneLocus> {
        (0..self.gene_count()).map(GeneLocus::from_index)
    }

    pub fn gene(&self, locus: GeneLocus) -> GeneValue {
        if locus.block == 0 {
            let b = &self.phase0;
            match locus.slot {
                Slot::Activation => GeneValue::Activation(b.activation),
                Slot::LayerA(c) => conv_get(&b.layer_a, c),
                Slot::LayerB(c) => conv_get(&b.layer_b, c),
                Slot::PoolingPresent => GeneValue::Flag(b.pooling_present),
                Slot::PoolingType => GeneValue::Pool(b.pooling_type),
                Slot::SkipConnection => GeneValue::Flag(b.skip_connection),
                Slot::IncludeLayerB => unreachable!("phase-0 block has no include flag"),
            }
        } else {
            let b = &self.extensions[locus.block - 1];
            match locus.slot {
                Slot::IncludeLayerB => GeneValue::Flag(b.include_layer_b),
                Slot::LayerA(c) => conv_get(&b.layer_a, c),
                Slot::LayerB(c) => conv_get(&b.layer_b, c),
                Slot::PoolingPresent => GeneValue::Flag(b.pooling_present),
                Slot::PoolingType => GeneValue::Pool(b.pooling_type),
                Slot::SkipConnection => GeneValue::Flag(b.skip_connection),
                Slot::Activation => unreachable!("extension blocks have no activation gene"),
            }
        }
    }

    /// Flat gene vector in canonical field order.
    pub fn genes(&self) -> Vec<GeneValue> {
        self.loci().map(|l| self.gene(l)).collect()
    }

    pub fn set_gene(&mut self, index: usize, value: GeneValue) -> Result<(), ChromosomeError> {
        let len = self.gene_count();
        if index >= len {
            return Err(ChromosomeError::IndexOutOfRange { index, len });
        }
        let locus = GeneLocus::from_index(index);
        let wrong = || ChromosomeError::WrongValueKind { index, expected: locus.slot.field().name() };
        if locus.block == 0 {
            let b = &mut self.phase0;
            match (locus.slot, value) {
                (Slot::Activation, GeneValue::Activation(a)) => b.activation = a,
                (Slot::LayerA(c), v) => conv_set(&mut b.layer_a, c, v).ok_or_else(wrong)?,
                (Slot::LayerB(c), v) => conv_set(&mut b.layer_b, c, v).ok_or_else(wrong)?,
                (Slot::PoolingPresent, GeneValue::Flag(f)) => b.pooling_present = f,
                (Slot::PoolingType, GeneValue::Pool(p)) => b.pooling_type = p,
                (Slot::SkipConnection, GeneValue::Flag(f)) => b.skip_connection = f,
                _ => return Err(wrong()),
            }
        } else {
            let b = &mut self.extensions[locus.block - 1];
            match (locus.slot, value) {
                (Slot::IncludeLayerB, GeneValue::Flag(f)) => b.include_layer_b = f,
                (Slot::LayerA(c), v) => conv_set(&mut b.layer_a, c, v).ok_or_else(wrong)?,
                (Slot::LayerB(c), v) => conv_set(&mut b.layer_b, c, v).ok_or_else(wrong)?,
                (Slot::PoolingPresent, GeneValue::Flag(f)) => b.pooling_present = f,
                (Slot::PoolingType, GeneValue::Pool(p)) => b.pooling_type = p,
                (Slot::SkipConnection, GeneValue::Flag(f)) => b.skip_connection = f,
                _ => return Err(wrong()),
            }
        }
        Ok(())
    }

    /// True when every gene is a member of `space`.
    pub fn is_within(&self, space: &SearchSpace) -> bool {
        self.loci().all(|l| space.contains(l.slot.field(), self.gene(l)))
    }

    /// Copy with exactly one gene changed to a different value of its domain.
    ///
    /// Fields whose domain is a singleton are never picked. Returns the
    /// mutated copy and the index of the changed field.
    pub fn mutate_at<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> (Chromosome, Option<usize>) {
        let candidates: Vec<usize> = self
            .loci()
            .enumerate()
            .filter(|(_, l)| space.domain_size(l.slot.field()) > 1)
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            log::warn!("every gene domain is a singleton; mutation is a no-op");
            return (self.clone(), None);
        }
        let index = candidates[rng.random_range(0..candidates.len())];
        let locus = GeneLocus::from_index(index);
        let mut child = self.clone();
        if let Some(value) = space.sample_other(locus.slot.field(), self.gene(locus), rng) {
            child.set_gene(index, value).expect("value drawn from the field's own domain");
        }
        (child, Some(index))
    }

    pub fn mutate<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> Chromosome {
        self.mutate_at(space, rng).0
    }

    /// Uniform crossover: each gene comes from `a` or `b` with probability one half.
    pub fn crossover<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> Result<Chromosome, ChromosomeError> {
        if a.phase() != b.phase() {
            return Err(ChromosomeError::PhaseMismatch { left: a.phase(), right: b.phase() });
        }
        let mut child = a.clone();
        for (index, locus) in a.loci().enumerate() {
            if rng.random_bool(0.5) {
                child.set_gene(index, b.gene(locus))?;
            }
        }
        Ok(child)
    }

    /// Keep every existing gene and append one freshly sampled extension block.
    pub fn extend<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> Chromosome {
        let mut child = self.clone();
        child.extensions.push(ExtensionBlock::random(space, rng));
        child
    }

    /// Canonical JSON form. Field order follows the type definitions.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("chromosome serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn hash(&self) -> ChromosomeHash {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        ChromosomeHash(hex::encode(&digest[..16]))
    }
}
