//! Scene-graph and question ingestion, vocabularies, augmentation,
//! statistics, and batching.

pub mod batch;
pub mod error;
pub mod questions;
pub mod scene_graph;
pub mod stats;
pub mod synth;
pub mod vocab;

pub use batch::GraphBatch;
pub use error::DataError;
pub use questions::{parse_questions, QuestionRecord};
pub use scene_graph::{
    augment_symmetric_edges, count_unpaired_edges, parse_scene_graphs, ParsedGraphs, SceneEdge,
    SceneGraph, SceneNode,
};
pub use stats::{compute_stats, StatsReport};
pub use vocab::{tokenize, Vocabulary, PAD_ID, SELF_LOOP_ID, UNK_ID};
