//! Initial node/edge features from word embeddings, and the contextual
//! node encoder.

use crate::data::batch::GraphBatch;
use crate::model::forward::Forward;
use crate::model::ModelConfig;
use crate::tensor::{Activation, Array, ParamSet, Reduction, SplitRng, TensorError, ValueId};

/// Tape handles for the built graph features.
#[derive(Clone, Copy, Debug)]
pub struct GraphFeatures {
    /// x-hat `[N x 2*word_dim]`: mean name embedding ++ mean attribute embedding.
    pub node_init: ValueId,
    /// `[E x word_dim]` mean relation embedding, negated on synthetic
    /// reverse edges; self-loop slots carry the reserved relation row.
    pub edge_feat: ValueId,
}

pub fn register_params(params: &mut ParamSet, config: &ModelConfig, rng: &SplitRng) {
    params.insert_weight("ctx.w", 3 * config.word_dim, config.hidden_dim, rng);
    params.insert_zeros("ctx.b", 1, config.hidden_dim);
}

/// Build x-hat and edge features. Nodes with no attributes get a zero
/// attribute half; unknown tokens embed as UNK. The synthetic-reverse sign
/// flip happens here, at lookup time, in exactly one place.
pub fn init_graph_features(
    fwd: &mut Forward,
    batch: &GraphBatch,
    table: ValueId,
) -> Result<GraphFeatures, TensorError> {
    let name_emb = fwd.tape.gather_rows(table, &batch.name_tokens)?;
    let name_feat = fwd
        .tape
        .segment_reduce(name_emb, &batch.name_token_segments()?, Reduction::Mean)?;
    let attr_emb = fwd.tape.gather_rows(table, &batch.attr_tokens)?;
    let attr_feat = fwd
        .tape
        .segment_reduce(attr_emb, &batch.attr_token_segments()?, Reduction::Mean)?;
    let node_init = fwd.tape.concat_cols(&[name_feat, attr_feat])?;

    let rel_emb = fwd.tape.gather_rows(table, &batch.rel_tokens)?;
    let rel_mean = fwd
        .tape
        .segment_reduce(rel_emb, &batch.rel_token_segments()?, Reduction::Mean)?;
    let sign = fwd
        .tape
        .constant(Array::from_vec(batch.edge_count(), 1, batch.edge_sign.clone()));
    let edge_feat = fwd.tape.scale_rows(rel_mean, sign)?;

    Ok(GraphFeatures {
        node_init,
        edge_feat,
    })
}

/// Contextualized node features: for each node, the mean over incoming
/// edges of an affine map of `[x-hat_src ; e]`, through ELU. Self-loops
/// guarantee every neighborhood is non-empty.
pub fn contextual_encode(
    fwd: &mut Forward,
    batch: &GraphBatch,
    features: &GraphFeatures,
) -> Result<ValueId, TensorError> {
    let src_feats = fwd.tape.gather_rows(features.node_init, &batch.edge_src)?;
    let cat = fwd.tape.concat_cols(&[src_feats, features.edge_feat])?;
    let msg = fwd.affine(cat, "ctx.w", "ctx.b")?;
    let agg = fwd
        .tape
        .segment_reduce(msg, &batch.incoming()?, Reduction::Mean)?;
    Ok(fwd.act(agg, Activation::Elu))
}
