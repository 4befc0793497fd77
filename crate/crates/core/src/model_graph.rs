//! Decoding chromosomes into validated layer graphs.
//!
//! Convolutions use "same" padding and stride 1, so only pooling (2x2,
//! stride 2, floor) changes spatial size. A skip connection is a 1x1
//! convolution from the block input, strided by 2 when the block pools,
//! added to the output of the block's last activation.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::chromosome::{Chromosome, ConvLayerGenes};
use crate::error::GraphError;
use crate::search_space::{Activation, PoolKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl Shape {
    pub const fn new(height: u32, width: u32, channels: u32) -> Self {
        Self { height, width, channels }
    }

    pub fn as_array(self) -> [u32; 3] {
        [self.height, self.width, self.channels]
    }
}

/// Which gene-derived part of a block a node implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    ConvA,
    BatchNormA,
    ActivationA,
    Pool,
    ConvB,
    BatchNormB,
    ActivationB,
    SkipConv,
    SkipAdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeOrigin {
    pub block: usize,
    pub part: Part,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Input,
    Conv { out_channels: u32, filter_size: u32 },
    BatchNorm,
    Activation { kind: Activation },
    Pool { kind: PoolKind, size: u32, stride: u32 },
    SkipConv1x1 { out_channels: u32, stride: u32, target_shape: Shape },
    Add,
    Flatten,
    DenseOutput { num_classes: u32 },
}

impl Op {
    pub fn has_weights(&self) -> bool {
        matches!(self, Op::Conv { .. } | Op::BatchNorm | Op::SkipConv1x1 { .. } | Op::DenseOutput { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    #[serde(flatten)]
    pub op: Op,
    pub inputs: Vec<usize>,
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<NodeOrigin>,
}

/// The phenotype of a chromosome: an acyclic layer graph with one input and one output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureGraph {
    pub input_shape: Shape,
    pub num_classes: u32,
    pub nodes: Vec<Node>,
    pub edges: Vec<(usize, usize)>,
    /// Child node id -> parent node id for weight transfer. Empty for cold starts.
    #[serde(default, with = "transfer_pairs")]
    pub transfer_map: BTreeMap<usize, usize>,
}

pub type TransferMap = BTreeMap<usize, usize>;

pub(crate) mod transfer_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, usize>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().map(|(k, v)| (*k, *v)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, usize>, D::Error> {
        Ok(Vec::<(usize, usize)>::deserialize(d)?.into_iter().collect())
    }
}

struct Builder {
    nodes: Vec<Node>,
}

impl Builder {
    fn push(&mut self, op: Op, inputs: Vec<usize>, shape: Shape, origin: Option<NodeOrigin>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { id, op, inputs, shape, origin });
        id
    }

    fn shape(&self, id: usize) -> Shape {
        self.nodes[id].shape
    }

    fn conv_unit(
        &mut self,
        input: usize,
        genes: &ConvLayerGenes,
        activation: Activation,
        block: usize,
        parts: [Part; 3],
    ) -> usize {
        let at = |part| Some(NodeOrigin { block, part });
        let shape = Shape { channels: genes.out_channels, ..self.shape(input) };
        let mut last = self.push(
            Op::Conv { out_channels: genes.out_channels, filter_size: genes.filter_size },
            vec![input],
            shape,
            at(parts[0]),
        );
        if genes.batch_norm {
            last = self.push(Op::BatchNorm, vec![last], shape, at(parts[1]));
        }
        self.push(Op::Activation { kind: activation }, vec![last], shape, at(parts[2]))
    }
}

struct BlockView<'a> {
    layer_a: &'a ConvLayerGenes,
    layer_b: Option<&'a ConvLayerGenes>,
    pooling: Option<PoolKind>,
    skip: bool,
}

fn blocks(c: &Chromosome) -> Vec<BlockView<'_>> {
    let p0 = &c.phase0;
    let mut out = vec![BlockView {
        layer_a: &p0.layer_a,
        layer_b: Some(&p0.layer_b),
        pooling: p0.pooling_present.then_some(p0.pooling_type),
        skip: p0.skip_connection,
    }];
    out.extend(c.extensions.iter().map(|e| BlockView {
        layer_a: &e.layer_a,
        layer_b: e.include_layer_b.then_some(&e.layer_b),
        pooling: e.pooling_present.then_some(e.pooling_type),
        skip: e.skip_connection,
    }));
    out
}

impl ArchitectureGraph {
    /// Build the layer graph a chromosome describes.
    pub fn decode(c: &Chromosome, input_shape: Shape, num_classes: u32) -> Result<Self, GraphError> {
        if input_shape.height == 0 || input_shape.width == 0 || input_shape.channels == 0 {
            return Err(GraphError::InvalidArchitecture(format!("empty input shape {input_shape:?}")));
        }
        if num_classes == 0 {
            return Err(GraphError::InvalidArchitecture("num_classes must be positive".into()));
        }
        let activation = c.phase0.activation;
        let mut b = Builder { nodes: Vec::new() };
        let mut current = b.push(Op::Input, vec![], input_shape, None);

        for (index, block) in blocks(c).iter().enumerate() {
            let block_input = current;
            current = b.conv_unit(current, block.layer_a, activation, index, [Part::ConvA, Part::BatchNormA, Part::ActivationA]);
            if let Some(kind) = block.pooling {
                let s = b.shape(current);
                let pooled = Shape { height: s.height / 2, width: s.width / 2, ..s };
                if pooled.height == 0 || pooled.width == 0 {
                    return Err(GraphError::InvalidArchitecture(format!(
                        "pooling in block {index} reduces {}x{} below 1x1",
                        s.height, s.width
                    )));
                }
                current = b.push(
                    Op::Pool { kind, size: 2, stride: 2 },
                    vec![current],
                    pooled,
                    Some(NodeOrigin { block: index, part: Part::Pool }),
                );
            }
            if let Some(layer_b) = block.layer_b {
                current = b.conv_unit(current, layer_b, activation, index, [Part::ConvB, Part::BatchNormB, Part::ActivationB]);
            }
            if block.skip {
                let target = b.shape(current);
                let stride = if block.pooling.is_some() { 2 } else { 1 };
                let src = b.shape(block_input);
                let produced = Shape {
                    height: src.height.div_ceil(stride),
                    width: src.width.div_ceil(stride),
                    channels: target.channels,
                };
                if produced != target {
                    return Err(GraphError::InvalidArchitecture(format!(
                        "skip connection in block {index} yields {produced:?}, block output is {target:?}"
                    )));
                }
                let skip = b.push(
                    Op::SkipConv1x1 { out_channels: target.channels, stride, target_shape: target },
                    vec![block_input],
                    produced,
                    Some(NodeOrigin { block: index, part: Part::SkipConv }),
                );
                current = b.push(Op::Add, vec![current, skip], target, Some(NodeOrigin { block: index, part: Part::SkipAdd }));
            }
        }

        let s = b.shape(current);
        let flat = Shape::new(1, 1, s.height * s.width * s.channels);
        current = b.push(Op::Flatten, vec![current], flat, None);
        b.push(Op::DenseOutput { num_classes }, vec![current], Shape::new(1, 1, num_classes), None);

        let edges = b.nodes.iter().flat_map(|n| n.inputs.iter().map(move |&i| (i, n.id))).collect();
        Ok(Self { input_shape, num_classes, nodes: b.nodes, edges, transfer_map: BTreeMap::new() })
    }

    pub fn with_transfer_map(mut self, map: TransferMap) -> Self {
        self.transfer_map = map;
        self
    }

    pub fn conv_layer_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.op, Op::Conv { .. })).count()
    }

    pub fn pool_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.op, Op::Pool { .. })).count()
    }

    pub fn block_count(&self) -> usize {
        self.nodes.iter().filter_map(|n| n.origin.map(|o| o.block + 1)).max().unwrap_or(0)
    }

    /// Output shape of every node, recomputed from the ops alone.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>, GraphError> {
        let bad = |msg: String| GraphError::InvalidArchitecture(msg);
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.nodes.len());
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id != pos {
                return Err(bad(format!("node at position {pos} has id {}", node.id)));
            }
            if node.inputs.iter().any(|&i| i >= pos) {
                return Err(bad(format!("node {pos} consumes a later node")));
            }
            let input = |k: usize| -> Result<Shape, GraphError> {
                node.inputs.get(k).map(|&i| shapes[i]).ok_or_else(|| bad(format!("node {pos} lacks input {k}")))
            };
            let shape = match node.op {
                Op::Input => self.input_shape,
                Op::Conv { out_channels, .. } => Shape { channels: out_channels, ..input(0)? },
                Op::BatchNorm | Op::Activation { .. } => input(0)?,
                Op::Pool { size, stride, .. } => {
                    let s = input(0)?;
                    if s.height < size || s.width < size {
                        return Err(bad(format!("pool at node {pos} on {}x{}", s.height, s.width)));
                    }
                    Shape { height: (s.height - size) / stride + 1, width: (s.width - size) / stride + 1, ..s }
                }
                Op::SkipConv1x1 { out_channels, stride, .. } => {
                    let s = input(0)?;
                    Shape::new(s.height.div_ceil(stride), s.width.div_ceil(stride), out_channels)
                }
                Op::Add => {
                    let (l, r) = (input(0)?, input(1)?);
                    if l != r {
                        return Err(bad(format!("add at node {pos} joins {l:?} and {r:?}")));
                    }
                    l
                }
                Op::Flatten => {
                    let s = input(0)?;
                    Shape::new(1, 1, s.height * s.width * s.channels)
                }
                Op::DenseOutput { num_classes } => {
                    input(0)?;
                    Shape::new(1, 1, num_classes)
                }
            };
            if shape.height == 0 || shape.width == 0 {
                return Err(bad(format!("node {pos} has empty spatial extent")));
            }
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Check structural invariants and that stored shapes agree with inference.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |msg: &str| Err(GraphError::InvalidArchitecture(msg.to_string()));
        let shapes = self.infer_shapes()?;
        if shapes.iter().zip(&self.nodes).any(|(s, n)| *s != n.shape) {
            return bad("stored shapes disagree with inferred shapes");
        }
        let sources = self.nodes.iter().filter(|n| n.inputs.is_empty()).count();
        let sources_ok = sources == 1 && matches!(self.nodes.first().map(|n| n.op), Some(Op::Input));
        if !sources_ok {
            return bad("graph must have exactly one input node");
        }
        let mut consumers = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for &i in &n.inputs {
                consumers[i] += 1;
            }
        }
        if consumers.iter().filter(|&&c| c == 0).count() != 1
            || !matches!(self.nodes.last().map(|n| n.op), Some(Op::DenseOutput { .. }))
        {
            return bad("graph must have exactly one output node");
        }
        let mut derived: Vec<(usize, usize)> =
            self.nodes.iter().flat_map(|n| n.inputs.iter().map(move |&i| (i, n.id))).collect();
        let mut stored = self.edges.clone();
        derived.sort_unstable();
        stored.sort_unstable();
        if derived != stored {
            return bad("edge list disagrees with node inputs");
        }
        if self.transfer_map.keys().any(|&k| k >= self.nodes.len()) {
            return bad("transfer map references unknown child node");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Map every prefix node of `child` to the matching node of `parent`.
///
/// Nodes of blocks the parent does not have, and the classifier head, stay
/// unmapped and are initialized fresh.
pub fn build_transfer_map(child: &ArchitectureGraph, parent: &ArchitectureGraph) -> Result<TransferMap, GraphError> {
    let parent_blocks = parent.block_count();
    if parent_blocks > child.block_count() {
        return Err(GraphError::TransferMismatch(format!(
            "parent has {parent_blocks} blocks, child only {}",
            child.block_count()
        )));
    }
    let by_origin: HashMap<NodeOrigin, &Node> =
        parent.nodes.iter().filter_map(|n| n.origin.map(|o| (o, n))).collect();
    let mut map = TransferMap::new();
    for node in &child.nodes {
        let Some(origin) = node.origin else { continue };
        if origin.block >= parent_blocks {
            continue;
        }
        let Some(p) = by_origin.get(&origin) else {
            return Err(GraphError::TransferMismatch(format!(
                "child node {} ({:?}) has no counterpart in the parent",
                node.id, origin
            )));
        };
        if p.op != node.op || p.shape != node.shape {
            return Err(GraphError::TransferMismatch(format!(
                "child node {} differs from parent node {} ({:?} vs {:?})",
                node.id, p.id, node.op, p.op
            )));
        }
        map.insert(node.id, p.id);
    }
    let parent_prefix = by_origin.len();
    if map.len() != parent_prefix {
        return Err(GraphError::TransferMismatch(format!(
            "parent has {parent_prefix} block nodes, only {} matched",
            map.len()
        )));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::search_space::SearchSpace;

    const CIFAR: Shape = Shape::new(32, 32, 3);

    fn plain_phase0() -> Chromosome {
        let mut c = Chromosome::random(&SearchSpace::default(), 0, &mut seeded(1));
        c.phase0.pooling_present = false;
        c.phase0.skip_connection = false;
        c.phase0.layer_a.batch_norm = true;
        c.phase0.layer_b.batch_norm = false;
        c
    }

    fn ops(g: &ArchitectureGraph) -> Vec<&'static str> {
        g.nodes
            .iter()
            .map(|n| match n.op {
                Op::Input => "input",
                Op::Conv { .. } => "conv",
                Op::BatchNorm => "bn",
                Op::Activation { .. } => "act",
                Op::Pool { .. } => "pool",
                Op::SkipConv1x1 { .. } => "skip",
                Op::Add => "add",
                Op::Flatten => "flatten",
                Op::DenseOutput { .. } => "dense",
            })
            .collect()
    }

    #[test]
    fn plain_phase0_layout() {
        let g = ArchitectureGraph::decode(&plain_phase0(), CIFAR, 10).unwrap();
        assert_eq!(ops(&g), ["input", "conv", "bn", "act", "conv", "act", "flatten", "dense"]);
        g.validate().unwrap();
        assert!(g.transfer_map.is_empty());
        assert_eq!(g.nodes.last().unwrap().shape, Shape::new(1, 1, 10));
    }

    #[test]
    fn pooling_follows_layer_a() {
        let mut c = plain_phase0();
        c.phase0.pooling_present = true;
        let g = ArchitectureGraph::decode(&c, CIFAR, 10).unwrap();
        assert_eq!(ops(&g)[..6], ["input", "conv", "bn", "act", "pool", "conv"]);
        let pool = g.nodes.iter().find(|n| matches!(n.op, Op::Pool { .. })).unwrap();
        assert_eq!((pool.shape.height, pool.shape.width), (16, 16));
    }

    #[test]
    fn skip_connection_shapes_match() {
        for pooling in [false, true] {
            let mut c = plain_phase0();
            c.phase0.skip_connection = true;
            c.phase0.pooling_present = pooling;
            let g = ArchitectureGraph::decode(&c, CIFAR, 10).unwrap();
            assert_eq!(g.nodes.iter().filter(|n| matches!(n.op, Op::SkipConv1x1 { .. })).count(), 1);
            let adds: Vec<_> = g.nodes.iter().filter(|n| n.op == Op::Add).collect();
            assert_eq!(adds.len(), 1);
            let [l, r] = [adds[0].inputs[0], adds[0].inputs[1]];
            assert_eq!(g.nodes[l].shape, g.nodes[r].shape);
            let skip = &g.nodes[r];
            assert_eq!(skip.inputs, vec![0]);
            match skip.op {
                Op::SkipConv1x1 { stride, out_channels, .. } => {
                    assert_eq!(stride, if pooling { 2 } else { 1 });
                    assert_eq!(out_channels, c.phase0.layer_b.out_channels);
                }
                _ => unreachable!(),
            }
            g.validate().unwrap();
        }
    }

    #[test]
    fn over_pooling_is_rejected() {
        let space = SearchSpace::default();
        let mut c = Chromosome::random(&space, 5, &mut seeded(3));
        c.phase0.pooling_present = true;
        for e in &mut c.extensions {
            e.pooling_present = true;
        }
        assert!(matches!(ArchitectureGraph::decode(&c, CIFAR, 10), Err(GraphError::InvalidArchitecture(_))));
        c.extensions[4].pooling_present = false;
        assert!(ArchitectureGraph::decode(&c, CIFAR, 10).is_ok());
    }

    #[test]
    fn odd_spatial_skip_is_rejected() {
        let mut c = plain_phase0();
        c.phase0.skip_connection = true;
        c.phase0.pooling_present = true;
        let err = ArchitectureGraph::decode(&c, Shape::new(5, 5, 3), 10).unwrap_err();
        assert!(matches!(err, GraphError::InvalidArchitecture(_)));
    }

    #[test]
    fn transfer_map_covers_prefix() {
        let space = SearchSpace::default();
        let parent_c = Chromosome::random(&space, 0, &mut seeded(4));
        let child_c = parent_c.extend(&space, &mut seeded(5));
        let parent = ArchitectureGraph::decode(&parent_c, CIFAR, 10).unwrap();
        let child = ArchitectureGraph::decode(&child_c, CIFAR, 10).unwrap();
        let map = build_transfer_map(&child, &parent).unwrap();
        for node in &child.nodes {
            let mapped = map.contains_key(&node.id);
            let prefix = node.origin.is_some_and(|o| o.block == 0);
            assert_eq!(mapped, prefix, "node {node:?}");
        }
        assert!(build_transfer_map(&parent, &child).is_err());
    }

    #[test]
    fn transfer_map_rejects_changed_prefix() {
        let space = SearchSpace::default();
        let parent_c = Chromosome::random(&space, 0, &mut seeded(4));
        let mut child_c = parent_c.extend(&space, &mut seeded(5));
        child_c.phase0.layer_a.filter_size = if parent_c.phase0.layer_a.filter_size == 3 { 5 } else { 3 };
        let parent = ArchitectureGraph::decode(&parent_c, CIFAR, 10).unwrap();
        let child = ArchitectureGraph::decode(&child_c, CIFAR, 10).unwrap();
        assert!(matches!(build_transfer_map(&child, &parent), Err(GraphError::TransferMismatch(_))));
    }

    #[test]
    fn json_round_trip_keeps_transfer_map() {
        let space = SearchSpace::default();
        let parent_c = Chromosome::random(&space, 1, &mut seeded(6));
        let child_c = parent_c.extend(&space, &mut seeded(7));
        let parent = ArchitectureGraph::decode(&parent_c, CIFAR, 10).unwrap();
        let child = ArchitectureGraph::decode(&child_c, CIFAR, 10).unwrap();
        let map = build_transfer_map(&child, &parent).unwrap();
        let child = child.with_transfer_map(map);
        let back = ArchitectureGraph::from_json(&child.to_json()).unwrap();
        assert_eq!(back, child);
        back.validate().unwrap();
    }

    #[test]
    fn tampered_graph_fails_validation() {
        let mut g = ArchitectureGraph::decode(&plain_phase0(), CIFAR, 10).unwrap();
        g.nodes[1].shape.channels += 1;
        assert!(g.validate().is_err());
    }
}
