use rayon::prelude::*;

use super::{Mode, ModelParams};
use crate::data::InteractionGraph;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Lower bound applied to every attention entry before it is used as a divisor.
pub const ATTENTION_FLOOR: f64 = 1e-8;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Squashing function applied to attention logits. `Constant` exists so tests
/// can freeze the gate and compare against plain propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Gate {
    Sigmoid,
    #[allow(dead_code)]
    Constant(f64),
}

impl Gate {
    #[inline]
    fn eval(self, x: f64) -> f64 {
        match self {
            Gate::Sigmoid => sigmoid(x),
            Gate::Constant(c) => c,
        }
    }
}

/// Gate values `sigmoid(.)` of one layer, one row per edge. Rows have width 1
/// in fair-attention mode (the scalar is shared by every feature) and width
/// `d` in heterophily mode. The attention weight is `delta * gate`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGates {
    width: usize,
    values: Vec<f64>,
}

impl EdgeGates {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn gate(&self, edge: usize) -> &[f64] {
        &self.values[edge * self.width..(edge + 1) * self.width]
    }

    pub fn num_edges(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }

    /// The attention vector `w_ui` of `edge`, expanded to `dim` entries.
    pub fn weights(&self, edge: usize, delta: f64, dim: usize) -> Vec<f64> {
        let g = self.gate(edge);
        (0..dim).map(|f| delta * g[if self.width == 1 { 0 } else { f }]).collect()
    }
}

/// Every intermediate layer `H^(0..=K)` and, for the attention modes, the
/// per-layer gates. `gates[k]` belongs to the propagation producing `h[k + 1]`.
#[derive(Debug, Clone)]
pub struct EmbeddingLayers {
    pub h: Vec<Matrix>,
    pub gates: Vec<EdgeGates>,
}

/// `d^-exponent` for every node of the stacked index space.
pub(crate) fn degree_scales(graph: &InteractionGraph, exponent: f64) -> Vec<f64> {
    (0..graph.num_nodes())
        .map(|v| (graph.node_degree(v) as f64).powf(-exponent))
        .collect()
}

fn check_input(graph: &InteractionGraph, h_prev: &Matrix) -> Result<()> {
    if h_prev.rows() != graph.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "embedding matrix has {} rows, graph has {} nodes",
            h_prev.rows(),
            graph.num_nodes()
        )));
    }
    if let Some(node) = graph.first_isolated_node() {
        return Err(Error::ZeroDegree { node });
    }
    Ok(())
}

/// One light-graph-convolution step without self loops:
/// `h_u' = sum_{i in N(u)} h_i / (d_u^e d_i^e)` and symmetrically for items.
pub fn propagate_baseline(graph: &InteractionGraph, h_prev: &Matrix, norm_exponent: f64) -> Result<Matrix> {
    check_input(graph, h_prev)?;
    let scales = degree_scales(graph, norm_exponent);
    Ok(aggregate(graph, h_prev, &scales, |_edge, c, src, dst| {
        for (o, s) in dst.iter_mut().zip(src) {
            *o += c * s;
        }
    }))
}

/// Row-parallel neighbourhood aggregation. Each output row is accumulated in
/// adjacency order, so results do not depend on thread scheduling.
/// `message(edge, coefficient, source_row, output_row)` adds one message.
fn aggregate<F>(graph: &InteractionGraph, h_prev: &Matrix, scales: &[f64], message: F) -> Matrix
where
    F: Fn(usize, f64, &[f64], &mut [f64]) + Sync,
{
    let nu = graph.num_users();
    let d = h_prev.cols();
    let mut out = Matrix::zeros(graph.num_nodes(), d);
    out.as_mut_slice()
        .par_chunks_mut(d.max(1))
        .enumerate()
        .for_each(|(v, row)| {
            if v < nu {
                for (edge, &i) in graph.user_edge_range(v).zip(graph.user_items(v)) {
                    let c = scales[v] * scales[nu + i];
                    message(edge, c, h_prev.row(nu + i), row);
                }
            } else {
                let i = v - nu;
                for (&edge, &u) in graph.item_edges(i).iter().zip(graph.item_users(i)) {
                    let c = scales[u] * scales[v];
                    message(edge, c, h_prev.row(u), row);
                }
            }
        });
    out
}

/// Attention vector for one edge.
///
/// * `HetroFair`: `delta * sigmoid((h_u . h_i) * W_k)` elementwise.
/// * `FairAttention`: `delta * sigmoid(h_u . h_i)` repeated `d` times.
/// * `LightGcn`: all ones (no reweighting).
pub fn edge_attention(h_u: &[f64], h_i: &[f64], w_k: &[f64], delta: f64, mode: Mode) -> Vec<f64> {
    assert_eq!(h_u.len(), h_i.len(), "embedding widths differ");
    let s = dot(h_u, h_i);
    match mode {
        Mode::LightGcn => vec![1.0; h_u.len()],
        Mode::FairAttention => vec![delta * sigmoid(s); h_u.len()],
        Mode::HetroFair => {
            assert_eq!(w_k.len(), h_u.len(), "W_k width differs from embedding width");
            w_k.iter().map(|w| delta * sigmoid(s * w)).collect()
        }
    }
}

/// One attention-weighted propagation step:
/// `h_u' = sum_{i in N(u)} (h_i ⊘ max(w_ui, eps)) / (d_u^e d_i^e)`, with one
/// `w_ui` per undirected edge shared by both directions.
pub fn propagate_fair(
    graph: &InteractionGraph,
    h_prev: &Matrix,
    w_k: &[f64],
    delta: f64,
    mode: Mode,
    norm_exponent: f64,
) -> Result<(Matrix, EdgeGates)> {
    propagate_fair_with_gate(graph, h_prev, w_k, delta, mode, norm_exponent, Gate::Sigmoid)
}

pub(crate) fn propagate_fair_with_gate(
    graph: &InteractionGraph,
    h_prev: &Matrix,
    w_k: &[f64],
    delta: f64,
    mode: Mode,
    norm_exponent: f64,
    gate: Gate,
) -> Result<(Matrix, EdgeGates)> {
    check_input(graph, h_prev)?;
    let d = h_prev.cols();
    let width = match mode {
        Mode::LightGcn => {
            let h = propagate_baseline(graph, h_prev, norm_exponent)?;
            return Ok((h, EdgeGates { width: 1, values: Vec::new() }));
        }
        Mode::FairAttention => 1,
        Mode::HetroFair => {
            if w_k.len() != d {
                return Err(Error::ShapeMismatch(format!("W_k has width {}, expected {d}", w_k.len())));
            }
            d
        }
    };

    let nu = graph.num_users();
    let endpoints: Vec<(usize, usize)> = graph.edges().collect();
    let mut values = vec![0.0; endpoints.len() * width];
    values
        .par_chunks_mut(width)
        .zip(endpoints.par_iter())
        .for_each(|(g, &(u, i))| {
            let s = dot(h_prev.row(u), h_prev.row(nu + i));
            if width == 1 {
                g[0] = gate.eval(s);
            } else {
                for (gf, wf) in g.iter_mut().zip(w_k) {
                    *gf = gate.eval(s * wf);
                }
            }
        });
    let gates = EdgeGates { width, values };

    let scales = degree_scales(graph, norm_exponent);
    let h = aggregate(graph, h_prev, &scales, |edge, c, src, dst| {
        let g = gates.gate(edge);
        if width == 1 {
            let q = (delta * g[0]).max(ATTENTION_FLOOR);
            for (o, s) in dst.iter_mut().zip(src) {
                *o += c * (s / q);
            }
        } else {
            for ((o, s), gf) in dst.iter_mut().zip(src).zip(g) {
                let q = (delta * gf).max(ATTENTION_FLOOR);
                *o += c * (s / q);
            }
        }
    });
    Ok((h, gates))
}

/// Runs all `K` layers and returns the uniform layer combination
/// `Z = (1/(K+1)) sum_k H^(k)` together with the retained layers.
pub fn fair_embedding_generation(graph: &InteractionGraph, params: &ModelParams) -> Result<(Matrix, EmbeddingLayers)> {
    fair_embedding_generation_with_gate(graph, params, Gate::Sigmoid)
}

pub(crate) fn fair_embedding_generation_with_gate(
    graph: &InteractionGraph,
    params: &ModelParams,
    gate: Gate,
) -> Result<(Matrix, EmbeddingLayers)> {
    params.validate(graph)?;
    let mut h = vec![params.x.clone()];
    let mut gates = Vec::new();
    for k in 0..params.layers() {
        let prev = &h[k];
        let next = match params.mode {
            Mode::LightGcn => propagate_baseline(graph, prev, params.norm_exponent)?,
            mode => {
                let (next, g) = propagate_fair_with_gate(
                    graph,
                    prev,
                    &params.w[k],
                    params.delta,
                    mode,
                    params.norm_exponent,
                    gate,
                )?;
                gates.push(g);
                next
            }
        };
        h.push(next);
    }
    let mut z = h[0].clone();
    for layer in &h[1..] {
        z.add_scaled(layer, 1.0);
    }
    let z = z.scale(1.0 / h.len() as f64);
    Ok((z, EmbeddingLayers { h, gates }))
}

/// Dot-product scores of `user` against each listed item.
pub fn score(z: &Matrix, num_users: usize, user: usize, items: &[usize]) -> Result<Vec<f64>> {
    if user >= num_users {
        return Err(Error::IndexOutOfRange { index: user, limit: num_users });
    }
    let num_items = z.rows().saturating_sub(num_users);
    let zu = z.row(user);
    items
        .iter()
        .map(|&i| {
            if i >= num_items {
                Err(Error::IndexOutOfRange { index: i, limit: num_items })
            } else {
                Ok(dot(zu, z.row(num_users + i)))
            }
        })
        .collect()
}
