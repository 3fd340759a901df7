//! The assembled question-answering model: embeddings, question parsing,
//! instruction-conditioned graph reasoning, and the answer head, all built
//! on one tape per forward pass.

pub mod config;
pub mod forward;

pub use config::{Aggregate, Family, ModelConfig, ModelError};
pub use forward::{BnStats, Forward};

use crate::answer;
use crate::data::batch::GraphBatch;
use crate::lang::embedding::EmbeddingTable;
use crate::lang::seq2seq;
use crate::reasoning;
use crate::reasoning::program::StepTrace;
use crate::tensor::{Mode, ParamSet, SplitRng, ValueId};

pub struct Model {
    pub config: ModelConfig,
}

/// Tape handles for everything a caller may want after a pass. The tape
/// lives inside `fwd`; `fwd.tape.backward(loss)` drives training.
pub struct ForwardOutput<'a> {
    pub fwd: Forward<'a>,
    /// `[B x answer_count]`
    pub logits: ValueId,
    /// `[N x hidden]` final node states.
    pub h_final: ValueId,
    /// `[B x hidden]` per-graph pooled states.
    pub graph_summary: ValueId,
    /// `[B x instruction_dim]` question summary vectors.
    pub question_summaries: ValueId,
    /// `[B * M x instruction_dim]` step-conditioning rows, question-major.
    pub conditioning: ValueId,
    pub trace: Option<StepTrace>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Model { config })
    }

    /// Build the full parameter set for a vocabulary-sized embedding table
    /// and answer space. Deterministic in `seed`.
    pub fn init_params(
        &self,
        table: &EmbeddingTable,
        answer_count: usize,
        seed: u64,
    ) -> Result<ParamSet, ModelError> {
        if answer_count < 2 {
            return Err(ModelError::Config(format!(
                "answer vocabulary must have at least 2 entries, got {answer_count}"
            )));
        }
        if table.array.cols() != self.config.word_dim {
            return Err(ModelError::Config(format!(
                "embedding table dim {} does not match word_dim {}",
                table.array.cols(),
                self.config.word_dim
            )));
        }
        let rng = SplitRng::new(seed);
        let mut params = ParamSet::new();
        params.insert("embed.table", table.array.clone());
        seq2seq::register_params(&mut params, &self.config, &rng);
        reasoning::register_params(&mut params, &self.config, &rng);
        answer::register_params(&mut params, &self.config, answer_count, &rng);
        Ok(params)
    }

    /// One full forward pass over a batch of (graph, question) pairs.
    /// `questions[b]` holds the token ids asked of graph `b`. The dropout
    /// stream must be keyed by the caller (epoch/step) for reproducibility.
    pub fn forward<'a>(
        &'a self,
        params: &'a ParamSet,
        batch: &GraphBatch,
        questions: &[Vec<usize>],
        mode: Mode,
        dropout_rng: SplitRng,
        want_trace: bool,
    ) -> Result<ForwardOutput<'a>, ModelError> {
        if questions.len() != batch.graph_count {
            return Err(ModelError::Config(format!(
                "{} questions for {} graphs",
                questions.len(),
                batch.graph_count
            )));
        }
        let mut fwd = Forward::new(&self.config, params, mode, dropout_rng);
        let table = fwd.param("embed.table")?;

        let mut programs = Vec::with_capacity(questions.len());
        let mut summaries = Vec::with_capacity(questions.len());
        for tokens in questions {
            let states = seq2seq::encode_question(&mut fwd, table, tokens)?;
            let program = seq2seq::decode_instructions(&mut fwd, states)?;
            programs.push(program.instructions);
            summaries.push(program.question_summary);
        }
        let conditioning_parts = if self.config.family == Family::Lcgn {
            let mut contexts = Vec::with_capacity(programs.len());
            for &p in &programs {
                contexts.push(crate::reasoning::lcgn::derive_contexts(&mut fwd, p)?);
            }
            contexts
        } else {
            programs
        };
        let conditioning = fwd.tape.concat_rows(&conditioning_parts)?;
        let question_summaries = fwd.tape.concat_rows(&summaries)?;

        let features = reasoning::init_graph_features(&mut fwd, batch, table)?;
        let x = reasoning::contextual_encode(&mut fwd, batch, &features)?;
        let (h_final, trace) = reasoning::execute_program(
            &mut fwd,
            batch,
            x,
            features.edge_feat,
            conditioning,
            want_trace,
        )?;
        let graph_summary = answer::aggregate_final_states(&mut fwd, batch, h_final)?;
        let logits = answer::predict_answer(&mut fwd, graph_summary, question_summaries)?;

        Ok(ForwardOutput {
            fwd,
            logits,
            h_final,
            graph_summary,
            question_summaries,
            conditioning,
            trace,
        })
    }
}
