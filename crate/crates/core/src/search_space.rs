//! Hyperparameter domains, gene sampling and exact search-space cardinality.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{FromPrimitive, Num};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Elu,
    Selu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Elu => "elu",
            Activation::Selu => "selu",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Average,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolKind::Max => "max",
            PoolKind::Average => "average",
        })
    }
}

/// One kind of atomic hyperparameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneField {
    Activation,
    OutputChannels,
    FilterSize,
    BatchNorm,
    PoolingPresent,
    PoolingType,
    SkipConnection,
    IncludeLayerB,
}

impl GeneField {
    pub const ALL: [GeneField; 8] = [
        GeneField::Activation,
        GeneField::OutputChannels,
        GeneField::FilterSize,
        GeneField::BatchNorm,
        GeneField::PoolingPresent,
        GeneField::PoolingType,
        GeneField::SkipConnection,
        GeneField::IncludeLayerB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneField::Activation => "activation",
            GeneField::OutputChannels => "output_channels",
            GeneField::FilterSize => "filter_size",
            GeneField::BatchNorm => "batch_norm",
            GeneField::PoolingPresent => "pooling_present",
            GeneField::PoolingType => "pooling_type",
            GeneField::SkipConnection => "skip_connection",
            GeneField::IncludeLayerB => "include_layer_b",
        }
    }
}

impl FromStr for GeneField {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GeneField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ConfigError::UnknownGeneField(s.to_string()))
    }
}

impl fmt::Display for GeneField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A value held by one gene field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneValue {
    Activation(Activation),
    Channels(u32),
    Filter(u32),
    Flag(bool),
    Pool(PoolKind),
}

impl fmt::Display for GeneValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneValue::Activation(a) => write!(f, "{a}"),
            GeneValue::Channels(c) => write!(f, "{c}"),
            GeneValue::Filter(k) => write!(f, "{k}x{k}"),
            GeneValue::Flag(b) => write!(f, "{}", if *b { "yes" } else { "no" }),
            GeneValue::Pool(p) => write!(f, "{p}"),
        }
    }
}

const FLAGS: [bool; 2] = [true, false];

/// Allowed values per hyperparameter. Defaults are the standard table:
/// channels 8..512, odd filters 1..9, four activations, max/average pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub output_channels: Vec<u32>,
    pub filter_sizes: Vec<u32>,
    pub activations: Vec<Activation>,
    pub pooling_types: Vec<PoolKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            output_channels: vec![8, 16, 32, 64, 128, 256, 512],
            filter_sizes: vec![1, 3, 5, 7, 9],
            activations: vec![Activation::Relu, Activation::Tanh, Activation::Elu, Activation::Selu],
            pooling_types: vec![PoolKind::Max, PoolKind::Average],
        }
    }
}

fn check_list<T: Eq + Hash + fmt::Debug>(name: &'static str, values: &[T]) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::EmptyChoices(name));
    }
    let mut seen = HashSet::new();
    for v in values {
        if !seen.insert(v) {
            return Err(ConfigError::DuplicateChoice { field: name, value: format!("{v:?}") });
        }
    }
    Ok(())
}

impl SearchSpace {
    /// Build a space and check its invariants.
    pub fn new(
        output_channels: Vec<u32>,
        filter_sizes: Vec<u32>,
        activations: Vec<Activation>,
        pooling_types: Vec<PoolKind>,
    ) -> Result<Self, ConfigError> {
        let space = Self { output_channels, filter_sizes, activations, pooling_types };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_list("output_channels", &self.output_channels)?;
        check_list("filter_sizes", &self.filter_sizes)?;
        check_list("activations", &self.activations)?;
        check_list("pooling_types", &self.pooling_types)?;
        if let Some(&c) = self.output_channels.iter().find(|&&c| c == 0) {
            return Err(ConfigError::InvalidChoice { field: "output_channels", value: c.to_string() });
        }
        if let Some(&k) = self.filter_sizes.iter().find(|&&k| k == 0 || k % 2 == 0) {
            return Err(ConfigError::InvalidChoice { field: "filter_sizes", value: k.to_string() });
        }
        Ok(())
    }

    /// Parse a TOML document. Omitted lists take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let space: SearchSpace = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        space.validate()?;
        Ok(space)
    }

    pub fn domain_size(&self, field: GeneField) -> usize {
        match field {
            GeneField::Activation => self.activations.len(),
            GeneField::OutputChannels => self.output_channels.len(),
            GeneField::FilterSize => self.filter_sizes.len(),
            GeneField::PoolingType => self.pooling_types.len(),
            GeneField::BatchNorm
            | GeneField::PoolingPresent
            | GeneField::SkipConnection
            | GeneField::IncludeLayerB => FLAGS.len(),
        }
    }

    /// All values of a field's domain, in declaration order.
    pub fn domain(&self, field: GeneField) -> Vec<GeneValue> {
        match field {
            GeneField::Activation => self.activations.iter().map(|&a| GeneValue::Activation(a)).collect(),
            GeneField::OutputChannels => {
                self.output_channels.iter().map(|&c| GeneValue::Channels(c)).collect()
            }
            GeneField::FilterSize => self.filter_sizes.iter().map(|&k| GeneValue::Filter(k)).collect(),
            GeneField::PoolingType => self.pooling_types.iter().map(|&p| GeneValue::Pool(p)).collect(),
            _ => FLAGS.iter().map(|&b| GeneValue::Flag(b)).collect(),
        }
    }

    pub fn contains(&self, field: GeneField, value: GeneValue) -> bool {
        match (field, value) {
            (GeneField::Activation, GeneValue::Activation(a)) => self.activations.contains(&a),
            (GeneField::OutputChannels, GeneValue::Channels(c)) => self.output_channels.contains(&c),
            (GeneField::FilterSize, GeneValue::Filter(k)) => self.filter_sizes.contains(&k),
            (GeneField::PoolingType, GeneValue::Pool(p)) => self.pooling_types.contains(&p),
            (
                GeneField::BatchNorm
                | GeneField::PoolingPresent
                | GeneField::SkipConnection
                | GeneField::IncludeLayerB,
                GeneValue::Flag(_),
            ) => true,
            _ => false,
        }
    }

    /// Draw one value uniformly from a field's domain.
    pub fn sample_gene<R: Rng + ?Sized>(&self, field: GeneField, rng: &mut R) -> GeneValue {
        match field {
            GeneField::Activation => GeneValue::Activation(self.sample_activation(rng)),
            GeneField::OutputChannels => GeneValue::Channels(self.sample_channels(rng)),
            GeneField::FilterSize => GeneValue::Filter(self.sample_filter(rng)),
            GeneField::PoolingType => GeneValue::Pool(self.sample_pool(rng)),
            _ => GeneValue::Flag(rng.random_bool(0.5)),
        }
    }

    /// Like [`sample_gene`](Self::sample_gene) but addressed by field name.
    pub fn sample_named<R: Rng + ?Sized>(&self, field: &str, rng: &mut R) -> Result<GeneValue, ConfigError> {
        Ok(self.sample_gene(field.parse()?, rng))
    }

    /// Draw a value different from `current`; `None` when the domain has no alternative.
    pub fn sample_other<R: Rng + ?Sized>(
        &self,
        field: GeneField,
        current: GeneValue,
        rng: &mut R,
    ) -> Option<GeneValue> {
        let options: Vec<GeneValue> = self.domain(field).into_iter().filter(|v| *v != current).collect();
        options.choose(rng).copied()
    }

    pub(crate) fn sample_activation<R: Rng + ?Sized>(&self, rng: &mut R) -> Activation {
        *self.activations.choose(rng).expect("validated non-empty")
    }

    pub(crate) fn sample_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        *self.output_channels.choose(rng).expect("validated non-empty")
    }

    pub(crate) fn sample_filter<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        *self.filter_sizes.choose(rng).expect("validated non-empty")
    }

    pub(crate) fn sample_pool<R: Rng + ?Sized>(&self, rng: &mut R) -> PoolKind {
        *self.pooling_types.choose(rng).expect("validated non-empty")
    }

    fn conv_pair_size<T: Num + FromPrimitive + Clone>(&self) -> T {
        // (channels * filters * batch-norm flag) for each of the two layers
        let layer = T::from_usize(self.output_channels.len() * self.filter_sizes.len() * 2)
            .expect("representable");
        layer.clone() * layer
    }

    fn block_flags<T: Num + FromPrimitive>(&self) -> T {
        // pooling present x skip connection, then pooling type
        T::from_usize(2 * 2 * self.pooling_types.len()).expect("representable")
    }

    /// Genotype count of the Phase-0 block in any numeric type.
    pub fn phase0_space_size_as<T: Num + FromPrimitive + Clone>(&self) -> T {
        T::from_usize(self.activations.len()).expect("representable")
            * self.conv_pair_size::<T>()
            * self.block_flags::<T>()
    }

    /// Genotype count of one extension block, including its include-layer-b flag.
    pub fn extension_block_size_as<T: Num + FromPrimitive + Clone>(&self) -> T {
        T::from_usize(2).expect("representable") * self.conv_pair_size::<T>() * self.block_flags::<T>()
    }

    pub fn total_space_size_as<T: Num + FromPrimitive + Clone>(&self, num_phases: usize) -> T {
        let block = self.extension_block_size_as::<T>();
        (0..num_phases).fold(self.phase0_space_size_as::<T>(), |acc, _| acc * block.clone())
    }

    pub fn phase0_space_size(&self) -> BigUint {
        self.phase0_space_size_as()
    }

    pub fn extension_block_size(&self) -> BigUint {
        self.extension_block_size_as()
    }

    /// Exact number of genotypes with `num_phases` extension blocks.
    pub fn total_space_size(&self, num_phases: usize) -> BigUint {
        self.total_space_size_as(num_phases)
    }
}

/// Fewest and most convolutional layers a chromosome of the given phase can express.
pub fn layer_range_for_phase(phase: usize) -> (usize, usize) {
    (2 + phase, 2 + 2 * phase)
}
