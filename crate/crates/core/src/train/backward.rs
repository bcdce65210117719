//! Reverse pass through the layer stack.
//!
//! For an edge `(u, i)` with normalisation `c` and per-feature divisor
//! `q_f = max(delta * g_f, eps)` the forward messages are
//! `m_u,f = c h_i,f / q_f` and `m_i,f = c h_u,f / q_f`. Upstream gradients
//! `G_u`, `G_i` flow back as
//!
//! ```text
//! dh_i,f += c G_u,f / q_f            dh_u,f += c G_i,f / q_f
//! dq_f    = -c (G_u,f h_i,f + G_i,f h_u,f) / q_f^2
//! da_f    = dq_f * delta * g_f (1 - g_f)       (zero where the floor is active)
//! ```
//!
//! and the logit `a_f = s W_f` (heterophily) or `a = s` (fair attention),
//! with `s = h_u . h_i`, gives `dW_f += da_f s` and `ds = sum_f da_f W_f`,
//! which finally adds `ds h_i` to `dh_u` and `ds h_u` to `dh_i`.
//!
//! Edges are visited sequentially in id order so the accumulation order, and
//! therefore every bit of the result, is fixed.

use crate::data::InteractionGraph;
use crate::matrix::{dot, Matrix};
use crate::model::{EdgeGates, EmbeddingLayers, Mode, ModelParams, ATTENTION_FLOOR};

pub(crate) struct LayerGrads {
    pub dx: Matrix,
    pub dw: Vec<Vec<f64>>,
}

/// Back-propagates `dz = dL/dZ` to the initial embeddings and the per-layer
/// attention weights.
pub(crate) fn backward(
    graph: &InteractionGraph,
    params: &ModelParams,
    layers: &EmbeddingLayers,
    dz: &Matrix,
) -> LayerGrads {
    let k_layers = params.layers();
    let combine = 1.0 / (k_layers + 1) as f64;
    let scales = crate::model::degree_scales(graph, params.norm_exponent);
    let mut dw = vec![vec![0.0; params.dim()]; k_layers];

    // Gradient w.r.t. H^(K).
    let mut g = dz.scale(combine);
    for k in (1..=k_layers).rev() {
        let mut g_prev = dz.scale(combine);
        let h_prev = &layers.h[k - 1];
        match params.mode {
            Mode::LightGcn => linear_layer_backward(graph, &scales, &g, &mut g_prev),
            mode => attention_layer_backward(
                graph,
                &scales,
                h_prev,
                &layers.gates[k - 1],
                params,
                &params.w[k - 1],
                mode,
                &g,
                &mut g_prev,
                &mut dw[k - 1],
            ),
        }
        g = g_prev;
    }
    LayerGrads { dx: g, dw }
}

fn linear_layer_backward(graph: &InteractionGraph, scales: &[f64], g: &Matrix, g_prev: &mut Matrix) {
    let nu = graph.num_users();
    let d = g.cols();
    for (u, i) in graph.edges() {
        let c = scales[u] * scales[nu + i];
        for f in 0..d {
            g_prev[(nu + i, f)] += c * g[(u, f)];
            g_prev[(u, f)] += c * g[(nu + i, f)];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_layer_backward(
    graph: &InteractionGraph,
    scales: &[f64],
    h_prev: &Matrix,
    gates: &EdgeGates,
    params: &ModelParams,
    w_k: &[f64],
    mode: Mode,
    g: &Matrix,
    g_prev: &mut Matrix,
    dw_k: &mut [f64],
) {
    let nu = graph.num_users();
    let d = g.cols();
    let delta = params.delta;
    let mut dh_u = vec![0.0; d];
    let mut dh_i = vec![0.0; d];
    for (edge, (u, i)) in graph.edges().enumerate() {
        let c = scales[u] * scales[nu + i];
        let hu = h_prev.row(u);
        let hi = h_prev.row(nu + i);
        let gu = g.row(u);
        let gi = g.row(nu + i);
        let gate = gates.gate(edge);
        let s = dot(hu, hi);
        let mut ds = 0.0;
        for f in 0..d {
            let gf = gate[if gates.width() == 1 { 0 } else { f }];
            let raw = delta * gf;
            let q = raw.max(ATTENTION_FLOOR);
            dh_i[f] = c * gu[f] / q;
            dh_u[f] = c * gi[f] / q;
            if raw > ATTENTION_FLOOR {
                let dq = -c * (gu[f] * hi[f] + gi[f] * hu[f]) / (q * q);
                let da = dq * (delta * (gf * (1.0 - gf)));
                if mode == Mode::HetroFair {
                    dw_k[f] += da * s;
                    ds += da * w_k[f];
                } else {
                    ds += da;
                }
            }
        }
        for f in 0..d {
            g_prev[(nu + i, f)] += dh_i[f] + ds * hu[f];
            g_prev[(u, f)] += dh_u[f] + ds * hi[f];
        }
    }
}
