//! Recurrent language-conditioned baseline cell: Hadamard-gated attention
//! and messages over the stored (non-self-loop) edges, one parameter set
//! shared across all reasoning steps.

use crate::data::batch::GraphBatch;
use crate::model::forward::Forward;
use crate::model::ModelConfig;
use crate::tensor::{ParamSet, Reduction, SegmentIndex, SplitRng, TensorError, ValueId};

pub fn register_params(params: &mut ParamSet, config: &ModelConfig, rng: &SplitRng) {
    let h = config.hidden_dim;
    let i = config.instruction_dim;
    let dims: [(&str, usize, usize); 6] = [
        ("w1", h, h),
        ("w2", h, h),
        ("w3", 3 * h, h),
        ("w4", 3 * h, h),
        ("w6", 3 * h, h),
        ("w8", 2 * h, h),
    ];
    for (name, rows, cols) in dims {
        params.insert_weight(&format!("lcgn.{name}"), rows, cols, rng);
        params.insert_zeros(&format!("lcgn.b{}", &name[1..]), 1, cols);
    }
    // the context gates stay bias-free so a zero context vector nulls the
    // Hadamard-gated messages outright
    params.insert_weight("lcgn.w5", i, h, rng);
    params.insert_weight("lcgn.w7", i, h, rng);
    params.insert_uniform("lcgn.ctx0", 1, h, 0.1, rng);
    for name in ["wq", "wk", "wv"] {
        params.insert_weight(&format!("lcgn.cattn.{name}"), i, i, rng);
        params.insert_zeros(&format!("lcgn.cattn.b{}", &name[1..]), 1, i);
    }
}

/// The stored-edge view the cell attends over: self-loop slots excluded.
pub struct StoredEdges {
    pub slots: Vec<usize>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub incoming: SegmentIndex,
}

impl StoredEdges {
    pub fn from_batch(batch: &GraphBatch) -> Result<Self, TensorError> {
        let mut slots = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for e in 0..batch.edge_count() {
            if !batch.edge_is_self_loop[e] {
                slots.push(e);
                src.push(batch.edge_src[e]);
                dst.push(batch.edge_dst[e]);
            }
        }
        let incoming = SegmentIndex::new(dst.clone(), batch.node_count)?;
        Ok(StoredEdges {
            slots,
            src,
            dst,
            incoming,
        })
    }
}

/// Single-layer attention over a question's instruction vectors, producing
/// one context vector per step: `[M x instr] -> [M x instr]`.
pub fn derive_contexts(fwd: &mut Forward, instructions: ValueId) -> Result<ValueId, TensorError> {
    let d = fwd.config.instruction_dim;
    let q = fwd.affine(instructions, "lcgn.cattn.wq", "lcgn.cattn.bq")?;
    let k = fwd.affine(instructions, "lcgn.cattn.wk", "lcgn.cattn.bk")?;
    let v = fwd.affine(instructions, "lcgn.cattn.wv", "lcgn.cattn.bv")?;
    let scores = fwd.tape.matmul_nt(q, k)?;
    let scaled = fwd.tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attn = fwd.tape.softmax_rows(scaled);
    fwd.tape.matmul(attn, v)
}

/// The initial context state: one learned row broadcast to every node, so
/// the cell stays permutation-equivariant and deterministic.
pub fn initial_context(fwd: &mut Forward, node_count: usize) -> Result<ValueId, TensorError> {
    let ctx0 = fwd.param("lcgn.ctx0")?;
    fwd.tape.gather_rows(ctx0, &vec![0; node_count])
}

/// One recurrent step. `ct_nodes` is the step's context vector gathered per
/// node (`[N x instr]`). Returns the updated context state and the edge
/// attention weights over the stored edges.
pub fn lcgn_step(
    fwd: &mut Forward,
    edges: &StoredEdges,
    x_loc: ValueId,
    x_ctx: ValueId,
    ct_nodes: ValueId,
) -> Result<(ValueId, ValueId), TensorError> {
    let gate_loc = fwd.affine(x_loc, "lcgn.w1", "lcgn.b1")?;
    let gate_ctx = fwd.affine(x_ctx, "lcgn.w2", "lcgn.b2")?;
    let gated = fwd.tape.mul(gate_loc, gate_ctx)?;
    let joint = fwd.tape.concat_cols(&[x_loc, x_ctx, gated])?;

    let query = fwd.affine(joint, "lcgn.w3", "lcgn.b3")?;
    let key = fwd.affine(joint, "lcgn.w4", "lcgn.b4")?;
    let w5 = fwd.param("lcgn.w5")?;
    let ct_key = fwd.tape.matmul(ct_nodes, w5)?;
    let key_mod = fwd.tape.mul(key, ct_key)?;

    let q_dst = fwd.tape.gather_rows(query, &edges.dst)?;
    let k_src = fwd.tape.gather_rows(key_mod, &edges.src)?;
    let prod = fwd.tape.mul(q_dst, k_src)?;
    let scores = fwd.tape.sum_axis1(prod);
    let weights = fwd.tape.segment_softmax(scores, &edges.incoming)?;

    let msg_core = fwd.affine(joint, "lcgn.w6", "lcgn.b6")?;
    let w7 = fwd.param("lcgn.w7")?;
    let ct_msg = fwd.tape.matmul(ct_nodes, w7)?;
    let msg_mod = fwd.tape.mul(msg_core, ct_msg)?;
    let msg_src = fwd.tape.gather_rows(msg_mod, &edges.src)?;
    let messages = fwd.tape.scale_rows(msg_src, weights)?;
    let summed = fwd
        .tape
        .segment_reduce(messages, &edges.incoming, Reduction::Sum)?;

    let cat = fwd.tape.concat_cols(&[x_ctx, summed])?;
    let next_ctx = fwd.affine(cat, "lcgn.w8", "lcgn.b8")?;
    Ok((next_ctx, weights))
}
