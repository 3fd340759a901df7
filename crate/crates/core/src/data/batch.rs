//! Disjoint-union batching of scene graphs.
//!
//! Nodes of graph `b` occupy one contiguous global index range; runtime
//! edges are each graph's stored (augmented) edges followed by one
//! self-loop per node, so per-node reduction order matches the unbatched
//! order exactly. Token index arrays drive embedding featurization via
//! segment means.

use super::scene_graph::SceneGraph;
use super::vocab::{tokenize, Vocabulary, SELF_LOOP_ID};
use crate::tensor::{SegmentIndex, TensorError};

#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub graph_count: usize,
    pub node_count: usize,
    /// Graph id per global node.
    pub node_graph: Vec<usize>,
    pub nodes_per_graph: Vec<usize>,
    /// Runtime edges per graph (stored + self-loops).
    pub edges_per_graph: Vec<usize>,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    pub edge_graph: Vec<usize>,
    /// -1.0 for synthetic reverse edges, +1.0 otherwise.
    pub edge_sign: Vec<f64>,
    /// True for the appended self-loop slots.
    pub edge_is_self_loop: Vec<bool>,
    pub name_tokens: Vec<usize>,
    pub name_segments: Vec<usize>,
    pub attr_tokens: Vec<usize>,
    pub attr_segments: Vec<usize>,
    pub rel_tokens: Vec<usize>,
    pub rel_segments: Vec<usize>,
    /// Graphs that contributed zero nodes.
    pub empty_graphs: usize,
}

impl GraphBatch {
    /// Build the disjoint union. Graphs are expected to be augmented
    /// already; self-loops are appended here, never stored.
    pub fn build(graphs: &[&SceneGraph], vocab: &Vocabulary) -> GraphBatch {
        let mut batch = GraphBatch {
            graph_count: graphs.len(),
            node_count: 0,
            node_graph: Vec::new(),
            nodes_per_graph: Vec::with_capacity(graphs.len()),
            edges_per_graph: Vec::with_capacity(graphs.len()),
            edge_src: Vec::new(),
            edge_dst: Vec::new(),
            edge_graph: Vec::new(),
            edge_sign: Vec::new(),
            edge_is_self_loop: Vec::new(),
            name_tokens: Vec::new(),
            name_segments: Vec::new(),
            attr_tokens: Vec::new(),
            attr_segments: Vec::new(),
            rel_tokens: Vec::new(),
            rel_segments: Vec::new(),
            empty_graphs: 0,
        };
        for (b, g) in graphs.iter().enumerate() {
            let offset = batch.node_count;
            if g.nodes.is_empty() {
                batch.empty_graphs += 1;
            }
            for (local, node) in g.nodes.iter().enumerate() {
                let global = offset + local;
                batch.node_graph.push(b);
                for token in tokenize(&node.name) {
                    batch.name_tokens.push(vocab.word_id(&token));
                    batch.name_segments.push(global);
                }
                for attr in &node.attributes {
                    for token in tokenize(attr) {
                        batch.attr_tokens.push(vocab.word_id(&token));
                        batch.attr_segments.push(global);
                    }
                }
            }
            let edge_base = batch.edge_src.len();
            for e in &g.edges {
                let slot = batch.edge_src.len();
                batch.edge_src.push(offset + e.src);
                batch.edge_dst.push(offset + e.dst);
                batch.edge_graph.push(b);
                batch.edge_sign.push(if e.synthetic_reverse { -1.0 } else { 1.0 });
                batch.edge_is_self_loop.push(false);
                for token in tokenize(&e.relation) {
                    batch.rel_tokens.push(vocab.word_id(&token));
                    batch.rel_segments.push(slot);
                }
            }
            for local in 0..g.nodes.len() {
                let slot = batch.edge_src.len();
                batch.edge_src.push(offset + local);
                batch.edge_dst.push(offset + local);
                batch.edge_graph.push(b);
                batch.edge_sign.push(1.0);
                batch.edge_is_self_loop.push(true);
                batch.rel_tokens.push(SELF_LOOP_ID);
                batch.rel_segments.push(slot);
            }
            batch.node_count += g.nodes.len();
            batch.nodes_per_graph.push(g.nodes.len());
            batch.edges_per_graph.push(batch.edge_src.len() - edge_base);
        }
        batch
    }

    pub fn edge_count(&self) -> usize {
        self.edge_src.len()
    }

    /// Edge slot -> destination node; the message-passing neighborhoods.
    pub fn incoming(&self) -> Result<SegmentIndex, TensorError> {
        SegmentIndex::new(self.edge_dst.clone(), self.node_count)
    }

    /// Node -> owning graph; answer aggregation segments.
    pub fn node_graph_segments(&self) -> Result<SegmentIndex, TensorError> {
        SegmentIndex::new(self.node_graph.clone(), self.graph_count)
    }

    pub fn name_token_segments(&self) -> Result<SegmentIndex, TensorError> {
        SegmentIndex::new(self.name_segments.clone(), self.node_count)
    }

    pub fn attr_token_segments(&self) -> Result<SegmentIndex, TensorError> {
        SegmentIndex::new(self.attr_segments.clone(), self.node_count)
    }

    pub fn rel_token_segments(&self) -> Result<SegmentIndex, TensorError> {
        SegmentIndex::new(self.rel_segments.clone(), self.edge_count())
    }
}
