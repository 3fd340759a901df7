//! Naive double-loop reference implementations of every message-passing
//! family, written directly from the update equations over plain arrays.
//! They share no code with the tape ops they validate.

use sgqa_core::tensor::{Array, ParamSet};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// y = x W + b for a single row.
pub fn affine_row(x: &[f64], w: &Array, b: &Array) -> Vec<f64> {
    let (rows, cols) = w.shape();
    assert_eq!(x.len(), rows);
    let mut y = b.data().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for j in 0..cols {
            y[j] += xi * w.at(i, j);
        }
    }
    y
}

fn param<'p>(params: &'p ParamSet, path: &str) -> &'p Array {
    params.array(path).expect("oracle parameter lookup")
}

/// Edge list view: (src, dst) per slot, in slot order.
pub struct Edges {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl Edges {
    pub fn incoming_slots(&self, node: usize) -> Vec<usize> {
        (0..self.dst.len()).filter(|&e| self.dst[e] == node).collect()
    }
}

/// Contextual encoding: x_i = ELU(mean over in-edges of W [xhat_src ; e]).
pub fn contextual(
    params: &ParamSet,
    edges: &Edges,
    xhat: &[Vec<f64>],
    efeat: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let w = param(params, "ctx.w");
    let b = param(params, "ctx.b");
    let n = xhat.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let slots = edges.incoming_slots(i);
        let mut acc = vec![0.0; w.cols()];
        for &e in &slots {
            let mut cat = xhat[edges.src[e]].clone();
            cat.extend_from_slice(&efeat[e]);
            for (a, v) in acc.iter_mut().zip(affine_row(&cat, w, b)) {
                *a += v;
            }
        }
        let count = slots.len().max(1) as f64;
        out.push(acc.iter().map(|v| elu(v / count)).collect());
    }
    out
}

/// GCN: h_i = ELU(mean over in-edges of W hcond_src).
pub fn gcn(params: &ParamSet, step: usize, edges: &Edges, hcond: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = param(params, &format!("step{step}.gcn.w"));
    let b = param(params, &format!("step{step}.gcn.b"));
    let n = hcond.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let slots = edges.incoming_slots(i);
        let mut acc = vec![0.0; w.cols()];
        for &e in &slots {
            for (a, v) in acc.iter_mut().zip(affine_row(&hcond[edges.src[e]], w, b)) {
                *a += v;
            }
        }
        let count = slots.len().max(1) as f64;
        out.push(acc.iter().map(|v| elu(v / count)).collect());
    }
    out
}

/// GINE: h_i = Theta((1+eps) hcond_i + sum over in-edges of
/// ReLU(hcond_src + proj(econd))), Theta a single affine layer (depth 1)
/// or FC-ReLU-FC-ReLU-BN with running statistics (depth 2, eval).
#[allow(clippy::too_many_arguments)]
pub fn gine(
    params: &ParamSet,
    step: usize,
    edges: &Edges,
    hcond: &[Vec<f64>],
    econd: &[Vec<f64>],
    depth: u8,
) -> Vec<Vec<f64>> {
    let p = |s: &str| format!("step{step}.gine.{s}");
    let edge_w = param(params, &p("edge.w"));
    let edge_b = param(params, &p("edge.b"));
    let eps = param(params, &p("eps")).scalar_value();
    let w1 = param(params, &p("theta.w1"));
    let b1 = param(params, &p("theta.b1"));
    let n = hcond.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut total: Vec<f64> = hcond[i].iter().map(|v| (1.0 + eps) * v).collect();
        for e in edges.incoming_slots(i) {
            let proj = affine_row(&econd[e], edge_w, edge_b);
            for (slot, t) in total.iter_mut().enumerate() {
                *t += relu(hcond[edges.src[e]][slot] + proj[slot]);
            }
        }
        let mut y = affine_row(&total, w1, b1);
        if depth == 2 {
            y = y.into_iter().map(relu).collect();
            y = affine_row(&y, param(params, &p("theta.w2")), param(params, &p("theta.b2")));
            y = y.into_iter().map(relu).collect();
            let gamma = param(params, &p("theta.bn.g"));
            let beta = param(params, &p("theta.bn.b"));
            let mean = param(params, &p("theta.bn.running_mean"));
            let var = param(params, &p("theta.bn.running_var"));
            y = y
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    gamma.at(0, j) * (v - mean.at(0, j)) / (var.at(0, j) + 1e-5).sqrt()
                        + beta.at(0, j)
                })
                .collect();
        }
        out.push(y);
    }
    out
}

/// GAT with per-head attention over in-edges. Returns the new states and
/// the attention weights `alpha[head][edge_slot]`.
#[allow(clippy::too_many_arguments)]
pub fn gat(
    params: &ParamSet,
    step: usize,
    edges: &Edges,
    hcond: &[Vec<f64>],
    econd: &[Vec<f64>],
    h_prev: &[Vec<f64>],
    heads: usize,
    residual: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = hcond.len();
    let e_count = edges.src.len();
    let mut alphas = vec![vec![0.0; e_count]; heads];
    let mut head_outs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(heads);
    for head in 0..heads {
        let p = |s: &str| format!("step{step}.gat.h{head}.{s}");
        let w = param(params, &p("w"));
        let wb = param(params, &p("wb"));
        let u = param(params, &p("u"));
        let ub = param(params, &p("ub"));
        let a = param(params, &p("a"));

        let wh: Vec<Vec<f64>> = hcond.iter().map(|h| affine_row(h, w, wb)).collect();
        let ue: Vec<Vec<f64>> = econd.iter().map(|e| affine_row(e, u, ub)).collect();
        let mut scores = vec![0.0; e_count];
        for e in 0..e_count {
            let mut cat = wh[edges.dst[e]].clone();
            cat.extend_from_slice(&wh[edges.src[e]]);
            cat.extend_from_slice(&ue[e]);
            let s: f64 = cat.iter().enumerate().map(|(i, &v)| v * a.at(i, 0)).sum();
            scores[e] = leaky(s);
        }
        let mut out = vec![vec![0.0; w.cols()]; n];
        for i in 0..n {
            let slots = edges.incoming_slots(i);
            if slots.is_empty() {
                continue;
            }
            let z: f64 = slots.iter().map(|&e| scores[e].exp()).sum();
            for &e in &slots {
                let alpha = scores[e].exp() / z;
                alphas[head][e] = alpha;
                for (o, v) in out[i].iter_mut().zip(&wh[edges.src[e]]) {
                    *o += alpha * v;
                }
            }
        }
        head_outs.push(out);
    }
    let out_w = param(params, &format!("step{step}.gat.out.w"));
    let out_b = param(params, &format!("step{step}.gat.out.b"));
    let mut result = Vec::with_capacity(n);
    for i in 0..n {
        let mut merged = Vec::new();
        for ho in &head_outs {
            merged.extend_from_slice(&ho[i]);
        }
        let mut y: Vec<f64> = affine_row(&merged, out_w, out_b)
            .into_iter()
            .map(elu)
            .collect();
        if residual {
            for (v, &p) in y.iter_mut().zip(&h_prev[i]) {
                *v += p;
            }
        }
        result.push(y);
    }
    (result, alphas)
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).collect()
}

/// Bias-free projection for the context gates.
fn linear_row(x: &[f64], w: &Array) -> Vec<f64> {
    let (rows, cols) = w.shape();
    assert_eq!(x.len(), rows);
    let mut y = vec![0.0; cols];
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..cols {
            y[j] += xi * w.at(i, j);
        }
    }
    y
}

/// One recurrent language-conditioned step over the stored edges. `ct` is
/// the step's context vector per node. Returns (new context states, edge
/// weights per stored slot).
pub fn lcgn(
    params: &ParamSet,
    edges: &Edges,
    x_loc: &[Vec<f64>],
    x_ctx: &[Vec<f64>],
    ct: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = |s: &str| param(params, &format!("lcgn.{s}"));
    let n = x_loc.len();
    let joint: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let gated = hadamard(
                &affine_row(&x_loc[i], p("w1"), p("b1")),
                &affine_row(&x_ctx[i], p("w2"), p("b2")),
            );
            let mut row = x_loc[i].clone();
            row.extend_from_slice(&x_ctx[i]);
            row.extend_from_slice(&gated);
            row
        })
        .collect();
    let query: Vec<Vec<f64>> = joint.iter().map(|j| affine_row(j, p("w3"), p("b3"))).collect();
    let key: Vec<Vec<f64>> = joint.iter().map(|j| affine_row(j, p("w4"), p("b4"))).collect();
    let e_count = edges.src.len();
    let mut scores = vec![0.0; e_count];
    for e in 0..e_count {
        let key_mod = hadamard(&key[edges.src[e]], &linear_row(&ct[edges.src[e]], p("w5")));
        scores[e] = query[edges.dst[e]]
            .iter()
            .zip(&key_mod)
            .map(|(q, k)| q * k)
            .sum();
    }
    let mut weights = vec![0.0; e_count];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let slots = edges.incoming_slots(i);
        let mut msg_sum = vec![0.0; x_ctx[i].len()];
        if !slots.is_empty() {
            let z: f64 = slots.iter().map(|&e| scores[e].exp()).sum();
            for &e in &slots {
                let w = scores[e].exp() / z;
                weights[e] = w;
                let core = hadamard(
                    &affine_row(&joint[edges.src[e]], p("w6"), p("b6")),
                    &linear_row(&ct[edges.src[e]], p("w7")),
                );
                for (m, v) in msg_sum.iter_mut().zip(&core) {
                    *m += w * v;
                }
            }
        }
        let mut cat = x_ctx[i].clone();
        cat.extend_from_slice(&msg_sum);
        out.push(affine_row(&cat, p("w8"), p("b8")));
    }
    (out, weights)
}
