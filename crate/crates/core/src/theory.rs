//! Dense numerical checks of the over-smoothing limit of symmetric-normalised
//! propagation on self-looped graphs, and of its consequence that embedding
//! norms and user-item scores end up ordered by node degree.
//!
//! With `Ã = A + I` and `D̃ = D + I`, the powers of `P = D̃^{-1/2} Ã D̃^{-1/2}`
//! on a connected graph converge to the rank-one matrix with entries
//! `sqrt((d_i + 1)(d_j + 1)) / (2|E| + |V|)`.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::spearman;
use crate::matrix::{dot, norm, Matrix};
use crate::seed::rng_from;

/// Largest graph the dense routines accept.
pub const MAX_NODES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    self_loops: bool,
}

impl LoopedGraph {
    /// Undirected graph on `n` nodes. Edges are stored once as `(min, max)`;
    /// duplicates collapse and explicit self-edges are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)], self_loops: bool) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::InvalidArgument(format!("node count must lie in 1..={MAX_NODES}, got {n}")));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange { index: a.max(b), limit: n });
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("explicit self-edge at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self { n, edges: set, self_loops })
    }

    /// User-item graph with users `0..num_users` and items after them.
    pub fn bipartite(num_users: usize, num_items: usize, edges: &[(usize, usize)], self_loops: bool) -> Result<Self> {
        let mapped: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(u, i)| {
                if u >= num_users || i >= num_items {
                    Err(Error::InvalidArgument(format!("edge ({u}, {i}) outside {num_users}x{num_items}")))
                } else {
                    Ok((u, num_users + i))
                }
            })
            .collect::<Result<_>>()?;
        Self::new(num_users + num_items, &mapped, self_loops)
    }

    pub fn with_self_loops(&self, self_loops: bool) -> Self {
        Self { self_loops, ..self.clone() }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Original edges, self-loops excluded.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    /// Degrees without self-loops.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `D̃^{-1/2} Ã D̃^{-1/2}`, or `D^{-1/2} A D^{-1/2}` without self-loops.
    pub fn normalized_operator(&self) -> Result<Matrix> {
        let loop_weight = if self.self_loops { 1.0 } else { 0.0 };
        let deg: Vec<f64> = self.degrees().iter().map(|&d| d as f64 + loop_weight).collect();
        if let Some(node) = deg.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDegree { node });
        }
        let mut p = Matrix::zeros(self.n, self.n);
        for &(a, b) in &self.edges {
            let v = 1.0 / (deg[a] * deg[b]).sqrt();
            p[(a, b)] = v;
            p[(b, a)] = v;
        }
        if self.self_loops {
            for v in 0..self.n {
                p[(v, v)] = 1.0 / deg[v];
            }
        }
        Ok(p)
    }
}

/// Closed-form limit `sqrt((d_i+1)(d_j+1)) / (2|E| + |V|)`.
pub fn limit_matrix(graph: &LoopedGraph) -> Result<Matrix> {
    if !graph.is_connected() {
        return Err(Error::InvalidArgument("limit is only defined for connected graphs".into()));
    }
    let looped: Vec<f64> = graph.degrees().iter().map(|&d| d as f64 + 1.0).collect();
    let denom = (2 * graph.num_edges() + graph.num_nodes()) as f64;
    Ok(Matrix::from_fn(graph.n, graph.n, |i, j| (looped[i] * looped[j]).sqrt() / denom))
}

/// `P^k` by repeated multiplication; `k = 0` gives the identity.
pub fn power_iterate(graph: &LoopedGraph, k: usize) -> Result<Matrix> {
    let p = graph.normalized_operator()?;
    let mut acc = Matrix::identity(graph.n);
    for _ in 0..k {
        acc = acc.matmul(&p);
    }
    Ok(acc)
}

/// Sup-norm distance to the limit at each requested `k`, computed in one sweep.
pub fn error_curve(graph: &LoopedGraph, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let limit = limit_matrix(graph)?;
    let p = graph.normalized_operator()?;
    let mut wanted: Vec<usize> = ks.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut acc = Matrix::identity(graph.n);
    let mut at = 0;
    let mut out = Vec::with_capacity(wanted.len());
    for k in wanted {
        while at < k {
            acc = acc.matmul(&p);
            at += 1;
        }
        out.push((k, acc.max_abs_diff(&limit)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub k: usize,
    pub max_abs_error: f64,
    pub tol: f64,
    pub passed: bool,
    pub limit: Matrix,
}

pub fn verify_theorem1(graph: &LoopedGraph, k: usize, tol: f64) -> Result<ConvergenceTrace> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let limit = limit_matrix(graph)?;
    let max_abs_error = power_iterate(graph, k)?.max_abs_diff(&limit);
    Ok(ConvergenceTrace {
        k,
        max_abs_error,
        tol,
        passed: max_abs_error <= tol,
        limit,
    })
}

/// Degree-ordering statistics for a user-item graph after `k` propagation
/// steps. Each Spearman value is taken over degree-distinct nodes and is
/// `None` when fewer than two such nodes exist.
#[derive(Debug, Clone, PartialEq)]
pub struct PropositionReport {
    pub k: usize,
    /// Spearman(degree, embedding norm) over users.
    pub user_norm: Option<f64>,
    /// Spearman(degree, embedding norm) over items.
    pub item_norm: Option<f64>,
    /// Minimum over users of Spearman(item degree, score).
    pub score: Option<f64>,
    /// Minimum over users of Spearman(item norm, score).
    pub norm_score_agreement: Option<f64>,
    /// Whether every user's top-scored item is also the item with the largest norm.
    pub argmax_agreement: bool,
}

impl PropositionReport {
    /// Every defined statistic equals one.
    pub fn all_perfect(&self) -> bool {
        [self.user_norm, self.item_norm, self.score, self.norm_score_agreement]
            .iter()
            .all(|v| v.is_none_or(|x| x == 1.0))
            && self.argmax_agreement
    }
}

/// Nodes in `range` whose degree no other node in `range` shares.
fn degree_distinct(degrees: &[usize], range: std::ops::Range<usize>) -> Vec<usize> {
    range
        .clone()
        .filter(|&v| range.clone().filter(|&w| degrees[w] == degrees[v]).count() == 1)
        .collect()
}

/// Number of degree-distinct users and items.
pub fn degree_distinct_counts(graph: &LoopedGraph, num_users: usize) -> (usize, usize) {
    let degrees = graph.degrees();
    (
        degree_distinct(&degrees, 0..num_users).len(),
        degree_distinct(&degrees, num_users..graph.n).len(),
    )
}

fn rank_corr(x: &[f64], y: &[f64]) -> Option<f64> {
    spearman(x, y).ok()
}

/// Propagates positive i.i.d. initial embeddings `k` steps and measures how
/// closely norms and scores follow degree.
pub fn verify_propositions(graph: &LoopedGraph, num_users: usize, k: usize, dim: usize, seed: u64) -> Result<PropositionReport> {
    if num_users == 0 || num_users >= graph.n {
        return Err(Error::InvalidArgument(format!("user count must lie in 1..{}", graph.n)));
    }
    let mut rng = rng_from(seed);
    let h0 = Matrix::from_fn(graph.n, dim, |_, _| rng.random_range(0.1..1.0));
    let h = power_iterate(graph, k)?.matmul(&h0);
    let degrees = graph.degrees();
    let norms: Vec<f64> = (0..graph.n).map(|v| norm(h.row(v))).collect();

    let corr_over = |nodes: &[usize], values: &dyn Fn(usize) -> f64| {
        let d: Vec<f64> = nodes.iter().map(|&v| degrees[v] as f64).collect();
        let x: Vec<f64> = nodes.iter().map(|&v| values(v)).collect();
        rank_corr(&d, &x)
    };
    let users = degree_distinct(&degrees, 0..num_users);
    let items = degree_distinct(&degrees, num_users..graph.n);
    let user_norm = corr_over(&users, &|v| norms[v]);
    let item_norm = corr_over(&items, &|v| norms[v]);

    let mut score: Option<f64> = None;
    let mut agreement: Option<f64> = None;
    let mut argmax_agreement = true;
    let all_items: Vec<usize> = (num_users..graph.n).collect();
    let top_norm = all_items.iter().copied().max_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(b.cmp(&a)));
    for u in 0..num_users {
        let s = |i: usize| dot(h.row(u), h.row(i));
        if let Some(c) = corr_over(&items, &s) {
            score = Some(score.map_or(c, |m| m.min(c)));
        }
        let sc: Vec<f64> = items.iter().map(|&i| s(i)).collect();
        let nm: Vec<f64> = items.iter().map(|&i| norms[i]).collect();
        if let Some(c) = rank_corr(&nm, &sc) {
            agreement = Some(agreement.map_or(c, |m| m.min(c)));
        }
        let top_score = all_items.iter().copied().max_by(|&a, &b| s(a).total_cmp(&s(b)).then(b.cmp(&a)));
        argmax_agreement &= top_score == top_norm;
    }
    Ok(PropositionReport {
        k,
        user_norm,
        item_norm,
        score,
        norm_score_agreement: agreement,
        argmax_agreement,
    })
}

/// Random tree on `n` nodes plus `extra` random non-tree edges.
pub fn random_connected_graph(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Result<LoopedGraph> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    let max_edges = n * (n - 1) / 2;
    let target = (n - 1 + extra).min(max_edges);
    let mut set: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    while set.len() < target {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<_> = set.into_iter().collect();
    LoopedGraph::new(n, &edges, true)
}

/// Connected user-item graph: a random spanning tree that alternates sides,
/// plus `extra` edges attached preferentially to already popular items so
/// that degrees spread out.
pub fn random_bipartite(num_users: usize, num_items: usize, extra: usize, rng: &mut ChaCha8Rng) -> Result<LoopedGraph> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::InvalidArgument("both sides need at least one node".into()));
    }
    let mut order: Vec<(bool, usize)> = (1..num_users)
        .map(|u| (true, u))
        .chain((1..num_items).map(|i| (false, i)))
        .collect();
    order.shuffle(rng);
    let mut set = BTreeSet::from([(0usize, 0usize)]);
    let mut users_in = vec![0];
    let mut items_in = vec![0];
    for (is_user, v) in order {
        if is_user {
            set.insert((v, *items_in.choose(rng).unwrap()));
            users_in.push(v);
        } else {
            set.insert((*users_in.choose(rng).unwrap(), v));
            items_in.push(v);
        }
    }
    let target = (set.len() + extra).min(num_users * num_items);
    let mut item_deg = vec![0usize; num_items];
    for &(_, i) in &set {
        item_deg[i] += 1;
    }
    while set.len() < target {
        let u = rng.random_range(0..num_users);
        let total: usize = item_deg.iter().map(|d| d + 1).sum();
        let mut pick = rng.random_range(0..total);
        let mut i = 0;
        while pick > item_deg[i] {
            pick -= item_deg[i] + 1;
            i += 1;
        }
        if set.insert((u, i)) {
            item_deg[i] += 1;
        }
    }
    let edges: Vec<_> = set.into_iter().collect();
    LoopedGraph::bipartite(num_users, num_items, &edges, true)
}

pub fn path_graph(n: usize) -> Result<LoopedGraph> {
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    LoopedGraph::new(n, &edges, true)
}
