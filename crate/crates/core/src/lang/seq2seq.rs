//! Question parsing: a small sequence-to-sequence transformer that turns a
//! question into a fixed number of instruction vectors plus a question
//! summary vector.
//!
//! The decoder is non-autoregressive: M learned query vectors cross-attend
//! over the encoder states in parallel, one query per reasoning step.

use crate::data::vocab::PAD_ID;
use crate::model::forward::Forward;
use crate::tensor::{Activation, Array, ParamSet, SplitRng, TensorError, ValueId};

/// Instruction vectors `[M x instruction_dim]` and the question summary
/// `[1 x instruction_dim]` for one question.
#[derive(Clone, Copy, Debug)]
pub struct InstructionProgram {
    pub instructions: ValueId,
    pub question_summary: ValueId,
}

pub fn register_params(params: &mut ParamSet, config: &crate::model::ModelConfig, rng: &SplitRng) {
    let d = config.instruction_dim;
    params.insert_weight("enc.in.w", config.word_dim, d, rng);
    params.insert_zeros("enc.in.b", 1, d);
    for l in 0..config.encoder_layers {
        register_attention(params, &format!("enc.l{l}.attn"), d, rng);
        register_layer_norm(params, &format!("enc.l{l}.ln1"), d);
        register_ffn(params, &format!("enc.l{l}.ffn"), d, config.ffn_dim, rng);
        register_layer_norm(params, &format!("enc.l{l}.ln2"), d);
    }
    params.insert_uniform("dec.queries", config.steps, d, 0.1, rng);
    for l in 0..config.decoder_layers {
        register_attention(params, &format!("dec.l{l}.self"), d, rng);
        register_layer_norm(params, &format!("dec.l{l}.ln1"), d);
        register_attention(params, &format!("dec.l{l}.cross"), d, rng);
        register_layer_norm(params, &format!("dec.l{l}.ln2"), d);
        register_ffn(params, &format!("dec.l{l}.ffn"), d, config.ffn_dim, rng);
        register_layer_norm(params, &format!("dec.l{l}.ln3"), d);
    }
}

fn register_attention(params: &mut ParamSet, prefix: &str, d: usize, rng: &SplitRng) {
    for name in ["wq", "wk", "wv", "wo"] {
        params.insert_weight(&format!("{prefix}.{name}"), d, d, rng);
    }
    for name in ["bq", "bk", "bv", "bo"] {
        params.insert_zeros(&format!("{prefix}.{name}"), 1, d);
    }
}

fn register_ffn(params: &mut ParamSet, prefix: &str, d: usize, ffn: usize, rng: &SplitRng) {
    params.insert_weight(&format!("{prefix}.w1"), d, ffn, rng);
    params.insert_zeros(&format!("{prefix}.b1"), 1, ffn);
    params.insert_weight(&format!("{prefix}.w2"), ffn, d, rng);
    params.insert_zeros(&format!("{prefix}.b2"), 1, d);
}

fn register_layer_norm(params: &mut ParamSet, prefix: &str, d: usize) {
    params.insert(&format!("{prefix}.g"), Array::filled(1, d, 1.0));
    params.insert_zeros(&format!("{prefix}.b"), 1, d);
}

/// Fixed sinusoidal position encodings for `len` positions.
pub fn position_encodings(len: usize, dim: usize) -> Array {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Array::from_vec(len, dim, data)
}

/// Scaled dot-product attention with `heads` heads; queries attend over
/// `keys_values`. Returns the output and the per-head attention matrices.
pub fn multi_head_attention(
    fwd: &mut Forward,
    prefix: &str,
    queries: ValueId,
    keys_values: ValueId,
) -> Result<(ValueId, Vec<ValueId>), TensorError> {
    let heads = fwd.config.heads;
    let d = fwd.tape.data(queries).cols();
    let head_dim = d / heads;
    let q = fwd.affine(queries, &format!("{prefix}.wq"), &format!("{prefix}.bq"))?;
    let k = fwd.affine(keys_values, &format!("{prefix}.wk"), &format!("{prefix}.bk"))?;
    let v = fwd.affine(keys_values, &format!("{prefix}.wv"), &format!("{prefix}.bv"))?;

    let mut contexts = Vec::with_capacity(heads);
    let mut attentions = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
        let qh = fwd.tape.slice_cols(q, lo, hi)?;
        let kh = fwd.tape.slice_cols(k, lo, hi)?;
        let vh = fwd.tape.slice_cols(v, lo, hi)?;
        let scores = fwd.tape.matmul_nt(qh, kh)?;
        let scaled = fwd.tape.scale(scores, 1.0 / (head_dim as f64).sqrt());
        let attn = fwd.tape.softmax_rows(scaled);
        attentions.push(attn);
        contexts.push(fwd.tape.matmul(attn, vh)?);
    }
    let merged = fwd.tape.concat_cols(&contexts)?;
    let out = fwd.affine(merged, &format!("{prefix}.wo"), &format!("{prefix}.bo"))?;
    Ok((out, attentions))
}

fn residual_norm(
    fwd: &mut Forward,
    x: ValueId,
    sublayer: ValueId,
    ln_prefix: &str,
) -> Result<ValueId, TensorError> {
    let dropped = fwd.dropout(sublayer);
    let sum = fwd.tape.add(x, dropped)?;
    let g = fwd.param(&format!("{ln_prefix}.g"))?;
    let b = fwd.param(&format!("{ln_prefix}.b"))?;
    fwd.tape.layer_norm(sum, g, b, 1e-5)
}

fn feed_forward(fwd: &mut Forward, prefix: &str, x: ValueId) -> Result<ValueId, TensorError> {
    let hidden = fwd.affine(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
    let act = fwd.act(hidden, Activation::Relu);
    fwd.affine(act, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
}

pub fn encoder_layer(
    fwd: &mut Forward,
    prefix: &str,
    x: ValueId,
) -> Result<ValueId, TensorError> {
    let (attn, _) = multi_head_attention(fwd, &format!("{prefix}.attn"), x, x)?;
    let x = residual_norm(fwd, x, attn, &format!("{prefix}.ln1"))?;
    let ffn = feed_forward(fwd, &format!("{prefix}.ffn"), x)?;
    residual_norm(fwd, x, ffn, &format!("{prefix}.ln2"))
}

/// Encode question token ids into `[Q x instruction_dim]` states. Trailing
/// PAD tokens are stripped before embedding, so padding never reaches the
/// attention; questions longer than the configured maximum are truncated.
pub fn encode_question(
    fwd: &mut Forward,
    table: ValueId,
    tokens: &[usize],
) -> Result<ValueId, TensorError> {
    let mut len = tokens.len();
    while len > 0 && tokens[len - 1] == PAD_ID {
        len -= 1;
    }
    if len == 0 {
        return Err(TensorError::EmptyInput {
            op: "encode_question",
        });
    }
    let ids = &tokens[..len.min(fwd.config.max_question_len)];

    let embedded = fwd.tape.gather_rows(table, ids)?;
    let projected = fwd.affine(embedded, "enc.in.w", "enc.in.b")?;
    // keep token content comparable in magnitude to the position encodings
    let scaled = fwd
        .tape
        .scale(projected, (fwd.config.instruction_dim as f64).sqrt());
    let pos = fwd
        .tape
        .constant(position_encodings(ids.len(), fwd.config.instruction_dim));
    let mut states = fwd.tape.add(scaled, pos)?;
    states = fwd.dropout(states);
    for l in 0..fwd.config.encoder_layers {
        states = encoder_layer(fwd, &format!("enc.l{l}"), states)?;
    }
    Ok(states)
}

/// Decode M instruction vectors from encoder states, plus the question
/// summary vector (mean of the non-pad encoder states).
pub fn decode_instructions(
    fwd: &mut Forward,
    encoder_states: ValueId,
) -> Result<InstructionProgram, TensorError> {
    let mut x = fwd.param("dec.queries")?;
    for l in 0..fwd.config.decoder_layers {
        let prefix = format!("dec.l{l}");
        let (self_attn, _) = multi_head_attention(fwd, &format!("{prefix}.self"), x, x)?;
        x = residual_norm(fwd, x, self_attn, &format!("{prefix}.ln1"))?;
        let (cross, _) = multi_head_attention(fwd, &format!("{prefix}.cross"), x, encoder_states)?;
        x = residual_norm(fwd, x, cross, &format!("{prefix}.ln2"))?;
        let ffn = feed_forward(fwd, &format!("{prefix}.ffn"), x)?;
        x = residual_norm(fwd, x, ffn, &format!("{prefix}.ln3"))?;
    }
    let question_summary = fwd.tape.mean_axis0(encoder_states)?;
    Ok(InstructionProgram {
        instructions: x,
        question_summary,
    })
}
