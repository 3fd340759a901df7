//! Step-by-step execution of the instruction program over the graph.

use serde::{Deserialize, Serialize};

use super::layers::{self, condition_on_instruction};
use super::lcgn::{self, StoredEdges};
use crate::data::batch::GraphBatch;
use crate::model::config::{Family, ModelError};
use crate::model::forward::Forward;
use crate::tensor::{ValueId};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AttentionEntry {
    pub src: usize,
    pub dst: usize,
    pub head: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<AttentionEntry>>,
    pub node_norm_delta: Vec<f64>,
}

/// Per-step execution record for the trace surface: node-state deltas
/// always, attention weights for the attention families.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepTrace {
    pub steps: Vec<StepRecord>,
}

fn norm_deltas(fwd: &Forward, before: ValueId, after: ValueId) -> Vec<f64> {
    let a = fwd.tape.data(before);
    let b = fwd.tape.data(after);
    (0..a.rows())
        .map(|i| {
            a.row_slice(i)
                .iter()
                .zip(b.row_slice(i))
                .map(|(x, y)| (y - x) * (y - x))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn gat_attention_entries(
    fwd: &Forward,
    batch: &GraphBatch,
    heads: &[ValueId],
) -> Vec<AttentionEntry> {
    let mut entries = Vec::new();
    for (head, &alpha) in heads.iter().enumerate() {
        let data = fwd.tape.data(alpha);
        for e in 0..batch.edge_count() {
            entries.push(AttentionEntry {
                src: batch.edge_src[e],
                dst: batch.edge_dst[e],
                head,
                weight: data.at(e, 0),
            });
        }
    }
    entries
}

fn lcgn_attention_entries(
    fwd: &Forward,
    edges: &StoredEdges,
    weights: ValueId,
) -> Vec<AttentionEntry> {
    let data = fwd.tape.data(weights);
    edges
        .src
        .iter()
        .zip(edges.dst.iter())
        .enumerate()
        .map(|(slot, (&src, &dst))| AttentionEntry {
            src,
            dst,
            head: 0,
            weight: data.at(slot, 0),
        })
        .collect()
}

/// Run the M reasoning steps. `conditioning` holds one row per
/// (question, step) pair — raw instruction vectors for the concatenation
/// families, derived context vectors for the recurrent cell — laid out as
/// `[B * M x instruction_dim]` with question-major order.
pub fn execute_program(
    fwd: &mut Forward,
    batch: &GraphBatch,
    x: ValueId,
    edge_feat: ValueId,
    conditioning: ValueId,
    want_trace: bool,
) -> Result<(ValueId, Option<StepTrace>), ModelError> {
    let family = fwd.config.family;
    let probe = match family {
        Family::Gcn => "step0.gcn.w".to_string(),
        Family::Gine => "step0.gine.theta.w1".to_string(),
        Family::Gat => "step0.gat.h0.w".to_string(),
        Family::Lcgn => "lcgn.w1".to_string(),
    };
    if !fwd.params.contains(&probe) {
        return Err(ModelError::Config(format!(
            "parameters do not contain the {} family (missing {probe})",
            family.name()
        )));
    }

    let steps = fwd.config.steps;
    let batch_size = batch.graph_count;
    let incoming = batch.incoming()?;
    let stored = match family {
        Family::Lcgn => Some(StoredEdges::from_batch(batch)?),
        _ => None,
    };

    let mut trace = want_trace.then(|| StepTrace { steps: Vec::new() });
    let mut h = match family {
        Family::Lcgn => lcgn::initial_context(fwd, batch.node_count)?,
        _ => x,
    };

    for step in 0..steps {
        let step_rows: Vec<usize> = (0..batch_size).map(|b| b * steps + step).collect();
        let step_vectors = fwd.tape.gather_rows(conditioning, &step_rows)?;
        let node_instr = fwd.tape.gather_rows(step_vectors, &batch.node_graph)?;

        let (next, attention) = match family {
            Family::Lcgn => {
                let edges = stored.as_ref().expect("built for lcgn above");
                let (next, weights) = lcgn::lcgn_step(fwd, edges, x, h, node_instr)?;
                let attn = trace
                    .is_some()
                    .then(|| lcgn_attention_entries(fwd, edges, weights));
                (next, attn)
            }
            _ => {
                let edge_instr = fwd.tape.gather_rows(step_vectors, &batch.edge_graph)?;
                let cond = condition_on_instruction(fwd, h, edge_feat, node_instr, edge_instr)?;
                match family {
                    Family::Gcn => {
                        (layers::gcn_step(fwd, batch, &incoming, step, &cond)?, None)
                    }
                    Family::Gine => {
                        (layers::gine_step(fwd, batch, &incoming, step, &cond)?, None)
                    }
                    Family::Gat => {
                        let (next, heads) =
                            layers::gat_step(fwd, batch, &incoming, step, &cond, h)?;
                        let attn = trace
                            .is_some()
                            .then(|| gat_attention_entries(fwd, batch, &heads));
                        (next, attn)
                    }
                    Family::Lcgn => unreachable!(),
                }
            }
        };

        if let Some(t) = trace.as_mut() {
            t.steps.push(StepRecord {
                step,
                attention,
                node_norm_delta: norm_deltas(fwd, h, next),
            });
        }
        h = next;
    }
    Ok((h, trace))
}
