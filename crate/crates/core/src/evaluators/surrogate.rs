//! Deterministic analytic stand-in for short training runs.
//!
//! fitness = clamp(base + depth + genes + epochs [+ noise], 0, 1) with
//!
//! * depth  = A (1 - exp(-lambda L)) for L main-path conv layers,
//! * genes  = (1 / L) * sum over expressed genes of a hashed value in [-delta, delta],
//! * epochs = B (1 - exp(-mu E)) for E epochs including the warm-start source's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalRequest, EvalResult, Evaluator, ModelRef};
use crate::chromosome::{Chromosome, ConvLayerGenes, ConvSlot, Slot};
use crate::error::EvaluatorUnavailable;
use crate::num::Scalar;
use crate::search_space::GeneValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "F: Scalar"))]
pub struct SurrogateParams<F> {
    pub base: F,
    pub depth_amplitude: F,
    pub depth_rate: F,
    pub gene_spread: F,
    pub epoch_amplitude: F,
    pub epoch_rate: F,
    /// Standard deviation of optional seeded Gaussian noise.
    pub noise_sigma: F,
    /// Seeds both the gene hash landscape and the noise stream.
    pub seed: u64,
}

impl<F: Scalar> Default for SurrogateParams<F> {
    fn default() -> Self {
        Self {
            base: F::of(0.1),
            depth_amplitude: F::of(0.5),
            depth_rate: F::of(0.25),
            gene_spread: F::of(0.05),
            epoch_amplitude: F::of(0.2),
            epoch_rate: F::of(0.3),
            noise_sigma: F::zero(),
            seed: 0,
        }
    }
}

fn push_layer(out: &mut Vec<(usize, Slot, GeneValue)>, block: usize, layer: &ConvLayerGenes, slot: fn(ConvSlot) -> Slot) {
    out.push((block, slot(ConvSlot::Channels), GeneValue::Channels(layer.out_channels)));
    out.push((block, slot(ConvSlot::Filter), GeneValue::Filter(layer.filter_size)));
    out.push((block, slot(ConvSlot::BatchNorm), GeneValue::Flag(layer.batch_norm)));
}

/// Genes that affect the phenotype: layer b genes of excluded layers and the
/// pooling type of non-pooling blocks are left out.
pub fn expressed_genes(c: &Chromosome) -> Vec<(usize, Slot, GeneValue)> {
    let mut out = Vec::new();
    let p0 = &c.phase0;
    out.push((0, Slot::Activation, GeneValue::Activation(p0.activation)));
    push_layer(&mut out, 0, &p0.layer_a, Slot::LayerA);
    push_layer(&mut out, 0, &p0.layer_b, Slot::LayerB);
    out.push((0, Slot::PoolingPresent, GeneValue::Flag(p0.pooling_present)));
    if p0.pooling_present {
        out.push((0, Slot::PoolingType, GeneValue::Pool(p0.pooling_type)));
    }
    out.push((0, Slot::SkipConnection, GeneValue::Flag(p0.skip_connection)));
    for (i, e) in c.extensions.iter().enumerate() {
        let block = i + 1;
        out.push((block, Slot::IncludeLayerB, GeneValue::Flag(e.include_layer_b)));
        push_layer(&mut out, block, &e.layer_a, Slot::LayerA);
        if e.include_layer_b {
            push_layer(&mut out, block, &e.layer_b, Slot::LayerB);
        }
        out.push((block, Slot::PoolingPresent, GeneValue::Flag(e.pooling_present)));
        if e.pooling_present {
            out.push((block, Slot::PoolingType, GeneValue::Pool(e.pooling_type)));
        }
        out.push((block, Slot::SkipConnection, GeneValue::Flag(e.skip_connection)));
    }
    out
}

impl<F: Scalar> SurrogateParams<F> {
    pub fn depth_term(&self, layers: usize) -> F {
        let l = F::of(layers as f64);
        self.depth_amplitude * (F::one() - (-self.depth_rate * l).exp())
    }

    pub fn epoch_term(&self, total_epochs: u32) -> F {
        let e = F::of(f64::from(total_epochs));
        self.epoch_amplitude * (F::one() - (-self.epoch_rate * e).exp())
    }

    /// Hashed contribution of one gene, uniform-looking in [-delta, delta].
    pub fn gene_contribution(&self, block: usize, slot: Slot, value: GeneValue) -> F {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((block as u64).to_le_bytes());
        h.update(format!("{slot}={value}").as_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        let unit = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
        self.gene_spread * F::of(2.0 * unit - 1.0)
    }

    pub fn gene_term(&self, c: &Chromosome) -> F {
        let sum: F = expressed_genes(c).into_iter().map(|(b, s, v)| self.gene_contribution(b, s, v)).sum();
        sum / F::of(c.layer_count() as f64)
    }

    fn noise(&self, c: &Chromosome, total_epochs: u32) -> F {
        if self.noise_sigma <= F::zero() {
            return F::zero();
        }
        let mut h = Sha256::new();
        h.update(b"noise");
        h.update(self.seed.to_le_bytes());
        h.update(c.hash().0.as_bytes());
        h.update(total_epochs.to_le_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&h.finalize()[..32]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let normal = Normal::new(0.0, self.noise_sigma.as_f64()).expect("finite sigma");
        F::of(normal.sample(&mut rng))
    }

    /// Unclamped score of a chromosome after `total_epochs` epochs.
    pub fn raw_score(&self, c: &Chromosome, total_epochs: u32) -> F {
        self.base + self.depth_term(c.layer_count()) + self.gene_term(c) + self.epoch_term(total_epochs)
            + self.noise(c, total_epochs)
    }

    /// Score a request. Needs the request's chromosome and a valid graph.
    pub fn evaluate(&self, req: &EvalRequest) -> EvalResult<F> {
        let cost = F::of(f64::from(req.epochs));
        let Some(c) = &req.chromosome else {
            return EvalResult::failure(&req.request_id, "surrogate needs the request chromosome", F::zero());
        };
        if let Err(e) = req.graph.validate() {
            return EvalResult::failure(&req.request_id, e.to_string(), F::zero());
        }
        if req.graph.conv_layer_count() != c.layer_count() {
            return EvalResult::failure(&req.request_id, "graph does not match chromosome", F::zero());
        }
        let total = req.total_epochs();
        EvalResult {
            request_id: req.request_id.clone(),
            fitness: self.raw_score(c, total).clamp_unit(),
            model_ref: Some(ModelRef(format!("surrogate:{}:{}", c.hash(), total))),
            cost_units: cost,
            error: None,
        }
    }
}

/// [`Evaluator`] wrapper around [`SurrogateParams`].
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator<F> {
    pub params: SurrogateParams<F>,
}

impl<F: Scalar> Default for SurrogateEvaluator<F> {
    fn default() -> Self {
        Self { params: SurrogateParams::default() }
    }
}

impl<F: Scalar> SurrogateEvaluator<F> {
    pub fn new(params: SurrogateParams<F>) -> Self {
        Self { params }
    }
}

impl<F: Scalar> Evaluator<F> for SurrogateEvaluator<F> {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResult<F>, EvaluatorUnavailable> {
        Ok(self.params.evaluate(request))
    }
}
