//! Shared fixtures for integration tests: tiny model configs and toy
//! graph/question corpora.

#![allow(dead_code)]

use std::collections::BTreeMap;

use sgqa_core::data::{
    augment_symmetric_edges, QuestionRecord, SceneEdge, SceneGraph, SceneNode, Vocabulary,
};
use sgqa_core::model::{Family, ModelConfig};
use sgqa_core::train::TrainConfig;

/// Small dims so finite differences and training fixtures run in moments.
pub fn tiny_model(family: Family) -> ModelConfig {
    ModelConfig {
        word_dim: 6,
        hidden_dim: 8,
        instruction_dim: 12,
        steps: 2,
        heads: 2,
        ffn_dim: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        max_question_len: 12,
        dropout: 0.0,
        family,
        gine_theta_depth: 1,
        gat_residual: true,
        aggregate: sgqa_core::model::Aggregate::Mean,
    }
}

pub fn tiny_train(family: Family) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 4,
        epochs: 3,
        checkpoint_every: 1,
        seed: 7,
        model: tiny_model(family),
        ..Default::default()
    }
}

pub fn node(name: &str, attrs: &[&str]) -> SceneNode {
    SceneNode {
        name: name.into(),
        attributes: attrs.iter().map(|a| a.to_string()).collect(),
        bbox: [0, 0, 10, 10],
    }
}

pub fn edge(src: usize, dst: usize, relation: &str) -> SceneEdge {
    SceneEdge {
        src,
        dst,
        relation: relation.into(),
        synthetic_reverse: false,
    }
}

/// A small augmented graph: girl holding hamburger on a red tray.
pub fn toy_graph(id: &str) -> SceneGraph {
    augment_symmetric_edges(&SceneGraph {
        graph_id: id.into(),
        nodes: vec![
            node("girl", &["small"]),
            node("hamburger", &[]),
            node("tray", &["red"]),
        ],
        edges: vec![edge(0, 1, "holding"), edge(2, 1, "under")],
    })
}

pub fn question(id: &str, graph: &str, text: &str, answer: &str) -> QuestionRecord {
    QuestionRecord {
        question_id: id.into(),
        graph_id: graph.into(),
        text: text.into(),
        answer: answer.into(),
        structural_type: "query".into(),
        semantic_type: "object".into(),
    }
}

pub fn toy_corpus() -> (BTreeMap<String, SceneGraph>, Vec<QuestionRecord>, Vocabulary) {
    let graphs: BTreeMap<String, SceneGraph> = [
        ("g0".to_string(), toy_graph("g0")),
        ("g1".to_string(), toy_graph("g1")),
    ]
    .into_iter()
    .collect();
    let questions = vec![
        question("q0", "g0", "what is the girl holding", "hamburger"),
        question("q1", "g1", "what is under the hamburger", "tray"),
    ];
    let vocab = Vocabulary::build(graphs.values(), &questions).unwrap();
    (graphs, questions, vocab)
}
