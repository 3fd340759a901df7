//! Instruction-conditioned message-passing layers: GCN, GINE, GAT.
//! Each reasoning step has its own parameter set (untied across steps).

use crate::data::batch::GraphBatch;
use crate::model::forward::{BnStats, Forward};
use crate::model::ModelConfig;
use crate::tensor::{
    Activation, Array, ParamSet, Reduction, SegmentIndex, SplitRng, TensorError, ValueId,
};

/// Node and edge features with the current instruction vector appended to
/// every row.
#[derive(Clone, Copy, Debug)]
pub struct StepConditionedInput {
    /// `[N x (hidden + instruction)]`
    pub nodes: ValueId,
    /// `[E x (word + instruction)]`
    pub edges: ValueId,
}

/// Concatenate the step's instruction vector onto every node and edge row.
pub fn condition_on_instruction(
    fwd: &mut Forward,
    h: ValueId,
    e: ValueId,
    node_instr: ValueId,
    edge_instr: ValueId,
) -> Result<StepConditionedInput, TensorError> {
    Ok(StepConditionedInput {
        nodes: fwd.tape.concat_cols(&[h, node_instr])?,
        edges: fwd.tape.concat_cols(&[e, edge_instr])?,
    })
}

pub fn register_gcn(params: &mut ParamSet, config: &ModelConfig, step: usize, rng: &SplitRng) {
    let in_dim = config.hidden_dim + config.instruction_dim;
    params.insert_weight(&format!("step{step}.gcn.w"), in_dim, config.hidden_dim, rng);
    params.insert_zeros(&format!("step{step}.gcn.b"), 1, config.hidden_dim);
}

/// Uniform-importance aggregation: mean over in-neighbors of a shared
/// affine map of the conditioned node features; edge features unused.
pub fn gcn_step(
    fwd: &mut Forward,
    batch: &GraphBatch,
    incoming: &SegmentIndex,
    step: usize,
    cond: &StepConditionedInput,
) -> Result<ValueId, TensorError> {
    let z = fwd.affine(
        cond.nodes,
        &format!("step{step}.gcn.w"),
        &format!("step{step}.gcn.b"),
    )?;
    let msgs = fwd.tape.gather_rows(z, &batch.edge_src)?;
    let agg = fwd.tape.segment_reduce(msgs, incoming, Reduction::Mean)?;
    Ok(fwd.act(agg, Activation::Elu))
}

pub fn register_gine(params: &mut ParamSet, config: &ModelConfig, step: usize, rng: &SplitRng) {
    let node_dim = config.hidden_dim + config.instruction_dim;
    let edge_dim = config.word_dim + config.instruction_dim;
    let p = |s: &str| format!("step{step}.gine.{s}");
    params.insert_weight(&p("edge.w"), edge_dim, node_dim, rng);
    params.insert_zeros(&p("edge.b"), 1, node_dim);
    params.insert_zeros(&p("eps"), 1, 1);
    params.insert_weight(&p("theta.w1"), node_dim, config.hidden_dim, rng);
    params.insert_zeros(&p("theta.b1"), 1, config.hidden_dim);
    if config.gine_theta_depth == 2 {
        params.insert_weight(&p("theta.w2"), config.hidden_dim, config.hidden_dim, rng);
        params.insert_zeros(&p("theta.b2"), 1, config.hidden_dim);
        params.insert(&p("theta.bn.g"), Array::filled(1, config.hidden_dim, 1.0));
        params.insert_zeros(&p("theta.bn.b"), 1, config.hidden_dim);
        params.insert_frozen(&p("theta.bn.running_mean"), Array::zeros(1, config.hidden_dim));
        params.insert_frozen(
            &p("theta.bn.running_var"),
            Array::filled(1, config.hidden_dim, 1.0),
        );
    }
}

const BN_EPS: f64 = 1e-5;

fn batch_norm(fwd: &mut Forward, prefix: &str, x: ValueId) -> Result<ValueId, TensorError> {
    let gamma = fwd.param(&format!("{prefix}.g"))?;
    let beta = fwd.param(&format!("{prefix}.b"))?;
    if fwd.mode == crate::tensor::Mode::Train {
        let (out, mean, var) = fwd.tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
        fwd.bn_stats.push(BnStats {
            prefix: prefix.to_string(),
            mean,
            var,
        });
        Ok(out)
    } else {
        let mean = fwd.params.array(&format!("{prefix}.running_mean"))?.clone();
        let var = fwd.params.array(&format!("{prefix}.running_var"))?;
        let neg_mean = fwd.tape.constant(mean.map(|v| -v));
        let inv_std = fwd.tape.constant(var.map(|v| 1.0 / (v + BN_EPS).sqrt()));
        let centered = fwd.tape.add_row(x, neg_mean)?;
        let scaled = fwd.tape.mul_row(centered, inv_std)?;
        let gained = fwd.tape.mul_row(scaled, gamma)?;
        fwd.tape.add_row(gained, beta)
    }
}

/// Sum aggregation with edge features: messages are ReLU of conditioned
/// source features plus projected conditioned edge features, the center
/// node weighted by a learned (1 + eps), all through the update map theta
/// (one affine layer, or FC-ReLU-FC-ReLU-BN at depth 2).
pub fn gine_step(
    fwd: &mut Forward,
    batch: &GraphBatch,
    incoming: &SegmentIndex,
    step: usize,
    cond: &StepConditionedInput,
) -> Result<ValueId, TensorError> {
    let p = |s: &str| format!("step{step}.gine.{s}");
    let proj_edges = fwd.affine(cond.edges, &p("edge.w"), &p("edge.b"))?;
    let src = fwd.tape.gather_rows(cond.nodes, &batch.edge_src)?;
    let raw = fwd.tape.add(src, proj_edges)?;
    let messages = fwd.act(raw, Activation::Relu);
    let neighbor_sum = fwd.tape.segment_reduce(messages, incoming, Reduction::Sum)?;

    let n = batch.node_count;
    let ones = fwd.tape.constant(Array::filled(n, 1, 1.0));
    let eps = fwd.param(&p("eps"))?;
    let eps_col = fwd.tape.matmul(ones, eps)?;
    let coef = fwd.tape.add(ones, eps_col)?;
    let center = fwd.tape.scale_rows(cond.nodes, coef)?;

    let total = fwd.tape.add(center, neighbor_sum)?;
    let theta1 = fwd.affine(total, &p("theta.w1"), &p("theta.b1"))?;
    if fwd.config.gine_theta_depth == 1 {
        return Ok(theta1);
    }
    let a1 = fwd.act(theta1, Activation::Relu);
    let theta2 = fwd.affine(a1, &p("theta.w2"), &p("theta.b2"))?;
    let a2 = fwd.act(theta2, Activation::Relu);
    batch_norm(fwd, &p("theta.bn"), a2)
}

pub fn register_gat(params: &mut ParamSet, config: &ModelConfig, step: usize, rng: &SplitRng) {
    let node_dim = config.hidden_dim + config.instruction_dim;
    let edge_dim = config.word_dim + config.instruction_dim;
    let head_dim = config.hidden_dim / config.heads;
    for h in 0..config.heads {
        let p = |s: &str| format!("step{step}.gat.h{h}.{s}");
        params.insert_weight(&p("w"), node_dim, head_dim, rng);
        params.insert_zeros(&p("wb"), 1, head_dim);
        params.insert_weight(&p("u"), edge_dim, head_dim, rng);
        params.insert_zeros(&p("ub"), 1, head_dim);
        params.insert_weight(&p("a"), 3 * head_dim, 1, rng);
    }
    params.insert_weight(
        &format!("step{step}.gat.out.w"),
        config.hidden_dim,
        config.hidden_dim,
        rng,
    );
    params.insert_zeros(&format!("step{step}.gat.out.b"), 1, config.hidden_dim);
}

/// Attention-weighted aggregation. Per head: scores from a LeakyReLU of
/// `a^T [W h_dst ; W h_src ; U e]`, softmax over each node's in-edges, then
/// an attention-weighted sum of transformed sources. Heads concatenate into
/// an output projection, ELU, residual, dropout.
pub fn gat_step(
    fwd: &mut Forward,
    batch: &GraphBatch,
    incoming: &SegmentIndex,
    step: usize,
    cond: &StepConditionedInput,
    h_prev: ValueId,
) -> Result<(ValueId, Vec<ValueId>), TensorError> {
    let mut head_outputs = Vec::with_capacity(fwd.config.heads);
    let mut head_attention = Vec::with_capacity(fwd.config.heads);
    for h in 0..fwd.config.heads {
        let p = |s: &str| format!("step{step}.gat.h{h}.{s}");
        let wh = fwd.affine(cond.nodes, &p("w"), &p("wb"))?;
        let ue = fwd.affine(cond.edges, &p("u"), &p("ub"))?;
        let src_rows = fwd.tape.gather_rows(wh, &batch.edge_src)?;
        let dst_rows = fwd.tape.gather_rows(wh, &batch.edge_dst)?;
        let cat = fwd.tape.concat_cols(&[dst_rows, src_rows, ue])?;
        let a = fwd.param(&p("a"))?;
        let scores = fwd.tape.matmul(cat, a)?;
        let scores = fwd.act(scores, Activation::LeakyRelu);
        let alpha = fwd.tape.segment_softmax(scores, incoming)?;
        head_attention.push(alpha);
        let weighted = fwd.tape.scale_rows(src_rows, alpha)?;
        head_outputs.push(fwd.tape.segment_reduce(weighted, incoming, Reduction::Sum)?);
    }
    let merged = fwd.tape.concat_cols(&head_outputs)?;
    let projected = fwd.affine(
        merged,
        &format!("step{step}.gat.out.w"),
        &format!("step{step}.gat.out.b"),
    )?;
    let mut out = fwd.act(projected, Activation::Elu);
    if fwd.config.gat_residual {
        out = fwd.tape.add(out, h_prev)?;
    }
    out = fwd.dropout(out);
    Ok((out, head_attention))
}
