//! Answering head: summarize final node states per graph and predict the
//! answer distribution from the summary and the question summary vector.

use serde::Serialize;

use crate::data::batch::GraphBatch;
use crate::model::config::Aggregate;
use crate::model::forward::Forward;
use crate::model::ModelConfig;
use crate::tensor::{Activation, Array, ParamSet, Reduction, SplitRng, TensorError, ValueId};

pub fn register_params(
    params: &mut ParamSet,
    config: &ModelConfig,
    answer_count: usize,
    rng: &SplitRng,
) {
    let in_dim = config.hidden_dim + config.instruction_dim;
    params.insert_weight("ans.w1", in_dim, config.instruction_dim, rng);
    params.insert_zeros("ans.b1", 1, config.instruction_dim);
    params.insert_weight("ans.w2", config.instruction_dim, answer_count, rng);
    params.insert_zeros("ans.b2", 1, answer_count);
}

/// Per-graph pooling of final node states: `[N x hidden] -> [B x hidden]`.
/// A zero-node graph pools to the zero row.
pub fn aggregate_final_states(
    fwd: &mut Forward,
    batch: &GraphBatch,
    h_final: ValueId,
) -> Result<ValueId, TensorError> {
    let mode = match fwd.config.aggregate {
        Aggregate::Mean => Reduction::Mean,
        Aggregate::Sum => Reduction::Sum,
        Aggregate::Max => Reduction::Max,
    };
    fwd.tape
        .segment_reduce(h_final, &batch.node_graph_segments()?, mode)
}

/// Answer logits: one hidden layer over `[h ; q]`, ELU, dropout, then the
/// answer-vocabulary projection.
pub fn predict_answer(
    fwd: &mut Forward,
    graph_summary: ValueId,
    question_summary: ValueId,
) -> Result<ValueId, TensorError> {
    let cat = fwd.tape.concat_cols(&[graph_summary, question_summary])?;
    let hidden = fwd.affine(cat, "ans.w1", "ans.b1")?;
    let act = fwd.act(hidden, Activation::Elu);
    let dropped = fwd.dropout(act);
    fwd.affine(dropped, "ans.w2", "ans.b2")
}

/// Softmax distribution over the answer vocabulary for one question.
#[derive(Clone, Debug, Serialize)]
pub struct AnswerDistribution {
    pub probs: Vec<f64>,
    pub predicted_id: usize,
    pub logits: Vec<f64>,
}

impl AnswerDistribution {
    fn from_logit_row(row: &[f64]) -> Self {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|&v| v / z).collect();
        // lowest index wins ties
        let mut predicted_id = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[predicted_id] {
                predicted_id = i;
            }
        }
        AnswerDistribution {
            probs,
            predicted_id,
            logits: row.to_vec(),
        }
    }

    /// Top-k (answer id, probability) pairs, best first; ties broken by id.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| (i, self.probs[i]))
            .collect()
    }
}

/// One distribution per batch row.
pub fn distributions(logits: &Array) -> Vec<AnswerDistribution> {
    (0..logits.rows())
        .map(|i| AnswerDistribution::from_logit_row(logits.row_slice(i)))
        .collect()
}
