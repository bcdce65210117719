//! BPR training with exact gradients through every propagation layer.

mod backward;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, InteractionGraph};
use crate::error::{Error, Result};
use crate::eval::{validation_ndcg, DEFAULT_CUTOFF};
use crate::matrix::{dot, Matrix};
use crate::model::{fair_embedding_generation, sigmoid, Mode, ModelParams};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Optimizer::Sgd => f.write_str("sgd"),
            Optimizer::Adam { .. } => f.write_str("adam"),
        }
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::ADAM),
            other => Err(Error::InvalidArgument(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub reg_beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Seed of the sampling stream (edge shuffles and negatives).
    pub seed: u64,
    pub eval_every: usize,
    pub optimizer: Optimizer,
    /// Keep `W` fixed at its initial value.
    pub freeze_w: bool,
    /// Cutoff of the validation NDCG used for early stopping.
    pub cutoff: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            reg_beta: 0.0001,
            batch_size: 2048,
            max_epochs: 1000,
            patience: 15,
            seed: 0,
            eval_every: 1,
            optimizer: Optimizer::ADAM,
            freeze_w: false,
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.reg_beta >= 0.0 && self.reg_beta.is_finite()) {
            problems.push(format!("reg_beta must be non-negative, got {}", self.reg_beta));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("eval_every", self.eval_every),
            ("cutoff", self.cutoff),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub dx: Matrix,
    pub dw: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            dx: Matrix::zeros(params.x.rows(), params.dim()),
            dw: vec![vec![0.0; params.dim()]; params.layers()],
        }
    }
}

/// The `beta * ||Theta||^2` term. `W` belongs to `Theta` only when it is a
/// live, trainable parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub beta: f64,
    pub include_w: bool,
}

impl Regularization {
    pub fn for_params(params: &ModelParams, beta: f64, freeze_w: bool) -> Self {
        Self {
            beta,
            include_w: params.mode == Mode::HetroFair && !freeze_w,
        }
    }

    pub fn penalty(&self, params: &ModelParams) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        let mut sq = params.x.squared_norm();
        if self.include_w {
            sq += params.w.iter().flatten().map(|v| v * v).sum::<f64>();
        }
        self.beta * sq
    }
}

/// Uniform negative for `user`, resampling members of its train set.
pub fn sample_negative(train: &InteractionGraph, user: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
    let positives = train.user_items(user);
    let n = train.num_items();
    if positives.len() >= n {
        return Err(Error::NoNegativeAvailable { user });
    }
    loop {
        let j = rng.random_range(0..n);
        if positives.binary_search(&j).is_err() {
            return Ok(j);
        }
    }
}

/// One epoch of triples: every train edge once, in shuffled order, each with a
/// fresh negative.
pub fn epoch_triples(train: &InteractionGraph, rng: &mut ChaCha8Rng) -> Result<Vec<BprTriple>> {
    let mut edges: Vec<(usize, usize)> = train.edges().collect();
    edges.shuffle(rng);
    edges
        .into_iter()
        .map(|(user, pos)| {
            Ok(BprTriple {
                user,
                pos,
                neg: sample_negative(train, user, rng)?,
            })
        })
        .collect()
}

/// The first `batch_size` triples of a freshly shuffled epoch.
pub fn sample_batch(split: &DatasetSplit, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BprTriple>> {
    let mut triples = epoch_triples(&split.train_graph, rng)?;
    triples.truncate(batch_size);
    Ok(triples)
}

fn softplus_neg(x: f64) -> f64 {
    // -ln sigmoid(x), stable for both signs
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn check_triples(graph: &InteractionGraph, triples: &[BprTriple]) -> Result<()> {
    for t in triples {
        if t.user >= graph.num_users() {
            return Err(Error::IndexOutOfRange { index: t.user, limit: graph.num_users() });
        }
        for item in [t.pos, t.neg] {
            if item >= graph.num_items() {
                return Err(Error::IndexOutOfRange { index: item, limit: graph.num_items() });
            }
        }
    }
    Ok(())
}

fn bpr_term(z: &Matrix, nu: usize, triples: &[BprTriple]) -> f64 {
    triples
        .iter()
        .map(|t| {
            let zu = z.row(t.user);
            softplus_neg(dot(zu, z.row(nu + t.pos)) - dot(zu, z.row(nu + t.neg)))
        })
        .sum()
}

/// `sum -ln sigmoid(y_ui - y_uj) + reg`.
pub fn bpr_loss(params: &ModelParams, graph: &InteractionGraph, triples: &[BprTriple], reg: Regularization) -> Result<f64> {
    check_triples(graph, triples)?;
    let (z, _) = fair_embedding_generation(graph, params)?;
    Ok(bpr_term(&z, graph.num_users(), triples) + reg.penalty(params))
}

pub fn grad(params: &ModelParams, graph: &InteractionGraph, triples: &[BprTriple], reg: Regularization) -> Result<GradientSet> {
    Ok(loss_and_grad(params, graph, triples, reg)?.1)
}

/// Loss and its exact gradient from a single forward pass.
pub fn loss_and_grad(
    params: &ModelParams,
    graph: &InteractionGraph,
    triples: &[BprTriple],
    reg: Regularization,
) -> Result<(f64, GradientSet)> {
    check_triples(graph, triples)?;
    let (z, layers) = fair_embedding_generation(graph, params)?;
    let nu = graph.num_users();
    let d = params.dim();
    let mut loss = 0.0;
    let mut dz = Matrix::zeros(z.rows(), d);
    for t in triples {
        let (u, p, n) = (t.user, nu + t.pos, nu + t.neg);
        let x = dot(z.row(u), z.row(p)) - dot(z.row(u), z.row(n));
        loss += softplus_neg(x);
        let a = -sigmoid(-x);
        for f in 0..d {
            let (zu, zp, zn) = (z[(u, f)], z[(p, f)], z[(n, f)]);
            dz[(u, f)] += a * (zp - zn);
            dz[(p, f)] += a * zu;
            dz[(n, f)] -= a * zu;
        }
    }
    let grads = backward::backward(graph, params, &layers, &dz);
    let mut out = GradientSet {
        dx: grads.dx,
        dw: grads.dw,
    };
    loss += reg.penalty(params);
    if reg.beta != 0.0 {
        out.dx.add_scaled(&params.x, 2.0 * reg.beta);
        if reg.include_w {
            for (dw, w) in out.dw.iter_mut().zip(&params.w) {
                for (g, v) in dw.iter_mut().zip(w) {
                    *g += 2.0 * reg.beta * v;
                }
            }
        }
    }
    Ok((loss, out))
}

/// Parameter updates with optional moment estimates.
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    update_w: bool,
    step: i32,
    m: Option<GradientSet>,
    v: Option<GradientSet>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, lr: f64, params: &ModelParams, update_w: bool) -> Self {
        let moments = matches!(kind, Optimizer::Adam { .. }).then(|| GradientSet::zeros_like(params));
        Self {
            kind,
            lr,
            update_w,
            step: 0,
            m: moments.clone(),
            v: moments,
        }
    }

    pub fn apply(&mut self, params: &mut ModelParams, g: &GradientSet) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            Optimizer::Sgd => {
                params.x.add_scaled(&g.dx, -lr);
                if self.update_w {
                    for (w, dw) in params.w.iter_mut().zip(&g.dw) {
                        for (p, d) in w.iter_mut().zip(dw) {
                            *p -= lr * d;
                        }
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                let m = self.m.as_mut().expect("adam moments");
                let v = self.v.as_mut().expect("adam moments");
                let adam = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                };
                for (((p, &gx), mx), vx) in params
                    .x
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.dx.as_slice())
                    .zip(m.dx.as_mut_slice())
                    .zip(v.dx.as_mut_slice())
                {
                    adam(p, gx, mx, vx);
                }
                if self.update_w {
                    for (k, w) in params.w.iter_mut().enumerate() {
                        for (f, p) in w.iter_mut().enumerate() {
                            adam(p, g.dw[k][f], &mut m.dw[k][f], &mut v.dw[k][f]);
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches of the batch objective.
    pub loss: f64,
    /// Present on evaluation epochs.
    pub val_ndcg: Option<f64>,
    pub elapsed_ms: u128,
}

impl EpochRecord {
    pub fn log_line(&self, cutoff: usize) -> String {
        let val = self.val_ndcg.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
        format!(
            "epoch={} loss={} val_ndcg@{cutoff}={val} elapsed_ms={}",
            self.epoch, self.loss, self.elapsed_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no evaluation ran.
    pub best_epoch: Option<usize>,
    pub best_val_ndcg: Option<f64>,
    pub evaluations: usize,
    pub early_stopped: bool,
}

pub struct FitOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Trains with validation NDCG early stopping and returns the parameters of
/// the best validation epoch.
pub fn fit(split: &DatasetSplit, params: ModelParams, config: &TrainConfig) -> Result<FitOutcome> {
    let cutoff = config.cutoff;
    fit_with(
        split,
        params,
        config,
        |z| validation_ndcg(z, split, cutoff),
        |_, _| Ok(()),
    )
}

/// [`fit`] with a pluggable validation metric and hooks called after every
/// epoch (`on_epoch`) and whenever a new best is found (inside `on_epoch`,
/// the flag tells which).
pub fn fit_with<V, H>(
    split: &DatasetSplit,
    mut params: ModelParams,
    config: &TrainConfig,
    mut validate: V,
    mut on_epoch: H,
) -> Result<FitOutcome>
where
    V: FnMut(&Matrix) -> Result<f64>,
    H: FnMut(&EpochRecord, Option<&ModelParams>) -> Result<()>,
{
    config.validate()?;
    let graph = &split.train_graph;
    params.validate(graph)?;
    let reg = Regularization::for_params(&params, config.reg_beta, config.freeze_w);
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, &params, reg.include_w);
    let mut rng = rng_from(config.seed);
    let start = Instant::now();

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: None,
        best_val_ndcg: None,
        evaluations: 0,
        early_stopped: false,
    };
    let mut best_params: Option<ModelParams> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let triples = epoch_triples(graph, &mut rng)?;
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in triples.chunks(config.batch_size) {
            let (loss, g) = loss_and_grad(&params, graph, batch, reg)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss is {loss} at epoch {epoch}, batch {}", batches + 1)));
            }
            opt.apply(&mut params, &g);
            if !params.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters became non-finite at epoch {epoch}, batch {}",
                    batches + 1
                )));
            }
            total += loss;
            batches += 1;
        }
        let loss = if batches == 0 { 0.0 } else { total / batches as f64 };

        let evaluate_now = epoch % config.eval_every == 0 || epoch == config.max_epochs;
        let mut improved = false;
        let mut val_ndcg = None;
        if evaluate_now {
            let (z, _) = fair_embedding_generation(graph, &params)?;
            let v = validate(&z)?;
            log.evaluations += 1;
            val_ndcg = Some(v);
            if log.best_val_ndcg.is_none_or(|b| v > b) {
                log.best_val_ndcg = Some(v);
                log.best_epoch = Some(epoch);
                best_params = Some(params.clone());
                improved = true;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        let record = EpochRecord {
            epoch,
            loss,
            val_ndcg,
            elapsed_ms: start.elapsed().as_millis(),
        };
        on_epoch(&record, if improved { best_params.as_ref() } else { None })?;
        log.epochs.push(record);
        if stale >= config.patience {
            log.early_stopped = true;
            break;
        }
    }
    Ok(FitOutcome {
        params: best_params.unwrap_or(params),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitScheme;
    use rand_distr::{Distribution, Normal};

    fn random_split(users: usize, items: usize, per_user: usize, seed: u64) -> DatasetSplit {
        let mut rng = rng_from(seed);
        let mut edges = Vec::new();
        for u in 0..users {
            let mut all: Vec<usize> = (0..items).collect();
            all.shuffle(&mut rng);
            edges.extend(all[..per_user].iter().map(|&i| (u, i)));
        }
        for i in 0..items {
            if !edges.iter().any(|&(_, j)| j == i) {
                edges.push((i % users, i));
            }
        }
        DatasetSplit::from_parts(users, items, &edges, &[], &[]).unwrap()
    }

    fn random_params(graph: &InteractionGraph, dim: usize, layers: usize, mode: Mode, seed: u64) -> ModelParams {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0, 0.4).unwrap();
        let mut p = ModelParams::init(graph.num_nodes(), dim, layers, mode, 0.7, 0.5, InitScheme::Xavier, seed, seed).unwrap();
        p.x = Matrix::from_fn(graph.num_nodes(), dim, |_, _| normal.sample(&mut rng));
        for w in p.w.iter_mut().flatten() {
            *w = normal.sample(&mut rng) * 1.5;
        }
        p
    }

    fn triples_for(graph: &InteractionGraph, seed: u64) -> Vec<BprTriple> {
        epoch_triples(graph, &mut rng_from(seed)).unwrap()
    }

    fn finite_difference_error(mode: Mode, layers: usize, seed: u64) -> f64 {
        let split = random_split(6, 8, 3, seed);
        let g = &split.train_graph;
        let params = random_params(g, 4, layers, mode, seed + 1);
        let triples = triples_for(g, seed + 2);
        let reg = Regularization { beta: 0.01, include_w: mode == Mode::HetroFair };
        let analytic = grad(&params, g, &triples, reg).unwrap();
        let h = 1e-5;
        let loss = |p: &ModelParams| bpr_loss(p, g, &triples, reg).unwrap();
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        let mut worst: f64 = 0.0;
        for idx in 0..params.x.as_slice().len() {
            let mut plus = params.clone();
            plus.x.as_mut_slice()[idx] += h;
            let mut minus = params.clone();
            minus.x.as_mut_slice()[idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel(analytic.dx.as_slice()[idx], numeric));
        }
        if mode == Mode::HetroFair {
            for k in 0..layers {
                for f in 0..4 {
                    let mut plus = params.clone();
                    plus.w[k][f] += h;
                    let mut minus = params.clone();
                    minus.w[k][f] -= h;
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    worst = worst.max(rel(analytic.dw[k][f], numeric));
                }
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for mode in [Mode::LightGcn, Mode::FairAttention, Mode::HetroFair] {
            for layers in 1..=3 {
                let err = finite_difference_error(mode, layers, 10 * layers as u64);
                assert!(err < 1e-4, "{mode} K={layers}: relative error {err}");
            }
        }
    }

    #[test]
    fn equal_scores_give_ln2_per_triple() {
        let split = random_split(3, 4, 2, 1);
        let g = &split.train_graph;
        let mut p = random_params(g, 3, 2, Mode::LightGcn, 2);
        p.x = Matrix::zeros(g.num_nodes(), 3);
        let triples = triples_for(g, 3);
        let reg = Regularization { beta: 0.0, include_w: false };
        let l = bpr_loss(&p, g, &triples[..1], reg).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let l = bpr_loss(&p, g, &triples, reg).unwrap();
        assert!((l - triples.len() as f64 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_forward_composition() {
        // 2 users, 2 items: a 4-node graph
        let split = DatasetSplit::from_parts(2, 2, &[(0, 0), (1, 0), (1, 1)], &[], &[]).unwrap();
        let g = &split.train_graph;
        let p = random_params(g, 3, 2, Mode::HetroFair, 4);
        let triples = [
            BprTriple { user: 0, pos: 0, neg: 1 },
            BprTriple { user: 1, pos: 1, neg: 0 },
            BprTriple { user: 1, pos: 0, neg: 1 },
        ];
        let reg = Regularization { beta: 0.3, include_w: true };
        let (z, _) = fair_embedding_generation(g, &p).unwrap();
        let mut expected = 0.0;
        for t in &triples {
            let s = crate::model::score(&z, 2, t.user, &[t.pos, t.neg]).unwrap();
            expected += -sigmoid(s[0] - s[1]).ln();
        }
        let sq: f64 = p.x.as_slice().iter().chain(p.w.iter().flatten()).map(|v| v * v).sum();
        expected += 0.3 * sq;
        let got = bpr_loss(&p, g, &triples, reg).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn regularisation_only_gradient() {
        let split = random_split(4, 5, 2, 5);
        let g = &split.train_graph;
        let p = random_params(g, 3, 2, Mode::HetroFair, 6);
        let reg = Regularization { beta: 0.25, include_w: true };
        let gs = grad(&p, g, &[], reg).unwrap();
        assert_eq!(gs.dx, p.x.scale(0.5));
        for (dw, w) in gs.dw.iter().zip(&p.w) {
            for (a, b) in dw.iter().zip(w) {
                assert_eq!(*a, 0.5 * b);
            }
        }
        let zero = grad(&p, g, &[], Regularization { beta: 0.0, include_w: true }).unwrap();
        assert_eq!(zero, GradientSet::zeros_like(&p));
    }

    #[test]
    fn sgd_step_is_exactly_minus_lr_grad() {
        let split = random_split(5, 6, 2, 7);
        let g = &split.train_graph;
        let p = random_params(g, 4, 2, Mode::HetroFair, 8);
        let triples = triples_for(g, 9);
        let reg = Regularization::for_params(&p, 0.01, false);
        let gs = grad(&p, g, &triples, reg).unwrap();
        let mut q = p.clone();
        OptimizerState::new(Optimizer::Sgd, 0.1, &p, true).apply(&mut q, &gs);
        for idx in 0..p.x.as_slice().len() {
            assert_eq!(q.x.as_slice()[idx], p.x.as_slice()[idx] - 0.1 * gs.dx.as_slice()[idx]);
        }
        assert_eq!(q.w[1][2], p.w[1][2] - 0.1 * gs.dw[1][2]);
    }

    #[test]
    fn forced_negative_and_exhausted_user() {
        let g = InteractionGraph::from_edges(1, 2, &[(0, 0)]).unwrap();
        let mut rng = rng_from(1);
        for _ in 0..50 {
            assert_eq!(sample_negative(&g, 0, &mut rng).unwrap(), 1);
        }
        let full = InteractionGraph::from_edges(1, 2, &[(0, 0), (0, 1)]).unwrap();
        assert!(matches!(sample_negative(&full, 0, &mut rng), Err(Error::NoNegativeAvailable { user: 0 })));
    }

    #[test]
    fn negative_frequencies_are_uniform() {
        // 10-item catalog, user owns items 0 and 1: eight eligible negatives
        let g = InteractionGraph::from_edges(1, 10, &[(0, 0), (0, 1)]).unwrap();
        let mut rng = rng_from(2024);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sample_negative(&g, 0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0] + counts[1], 0);
        let expected = draws as f64 / 8.0;
        let chi2: f64 = counts[2..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 7 degrees of freedom: mean 7, sd sqrt(14)
        assert!(chi2 < 7.0 + 3.0 * 14f64.sqrt(), "chi2 = {chi2}");
        let sd = (draws as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for &c in &counts[2..] {
            assert!((c as f64 - expected).abs() < 3.0 * sd + 1.0);
        }
    }

    #[test]
    fn batches_are_deterministic_and_valid() {
        let split = random_split(8, 10, 4, 3);
        let a = sample_batch(&split, 7, &mut rng_from(11)).unwrap();
        let b = sample_batch(&split, 7, &mut rng_from(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 7);
        for t in &a {
            assert!(split.train_graph.has_edge(t.user, t.pos));
            assert!(!split.train_graph.has_edge(t.user, t.neg));
        }
    }

    fn planted(seed: u64) -> DatasetSplit {
        // two 10x10 blocks, each user holding 6 items of its own block
        let offset = (seed % 10) as usize;
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for u in 0..20 {
            let base = if u < 10 { 0 } else { 10 };
            let items: Vec<usize> = (0..7).map(|j| base + (u + offset + j) % 10).collect();
            train.extend(items[..6].iter().map(|&i| (u, i)));
            valid.push((u, items[6]));
        }
        DatasetSplit::from_parts(20, 20, &train, &valid, &[]).unwrap()
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.001,
            reg_beta: 1e-4,
            batch_size: 32,
            max_epochs: 5,
            patience: 100,
            seed,
            eval_every: 1,
            optimizer: Optimizer::ADAM,
            freeze_w: false,
            cutoff: 5,
        }
    }

    #[test]
    fn loss_decreases_on_planted_blocks() {
        let seeds = 100;
        let mut decreasing = 0;
        for seed in 0..seeds {
            let split = planted(seed);
            let mut params = ModelParams::init(40, 16, 2, Mode::HetroFair, 0.5, 0.5, InitScheme::Xavier, seed + 100, seed + 200).unwrap();
            params.x = crate::model::alt_init(40, 16, InitScheme::Normal(0.1), seed + 300);
            let out = fit(&split, params, &small_config(seed)).unwrap();
            let losses: Vec<f64> = out.log.epochs.iter().map(|e| e.loss).collect();
            if losses.windows(2).all(|w| w[1] < w[0]) {
                decreasing += 1;
            }
        }
        assert!(decreasing as f64 >= 0.95 * seeds as f64, "{decreasing}/{seeds}");
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let split = planted(1);
        let params = ModelParams::init(40, 8, 2, Mode::HetroFair, 0.5, 0.5, InitScheme::Normal(0.1), 1, 2).unwrap();
        for optimizer in [Optimizer::Sgd, Optimizer::ADAM] {
            let cfg = TrainConfig { learning_rate: 0.0, optimizer, max_epochs: 3, ..small_config(1) };
            let out = fit(&split, params.clone(), &cfg).unwrap();
            assert_eq!(out.params, params);
        }
    }

    #[test]
    fn constant_metric_with_patience_one_stops_after_two_evaluations() {
        let split = planted(2);
        let params = ModelParams::init(40, 8, 1, Mode::LightGcn, 0.5, 0.5, InitScheme::Xavier, 1, 2).unwrap();
        let cfg = TrainConfig { patience: 1, max_epochs: 50, ..small_config(2) };
        let out = fit_with(&split, params, &cfg, |_| Ok(0.25), |_, _| Ok(())).unwrap();
        assert_eq!(out.log.evaluations, 2);
        assert_eq!(out.log.epochs.len(), 2);
        assert!(out.log.early_stopped);
        assert_eq!(out.log.best_epoch, Some(1));
    }

    #[test]
    fn returns_best_validation_params() {
        let split = planted(3);
        let params = ModelParams::init(40, 8, 1, Mode::LightGcn, 0.5, 0.5, InitScheme::Xavier, 1, 2).unwrap();
        let cfg = TrainConfig { patience: 2, max_epochs: 10, ..small_config(3) };
        let scripted = [0.1, 0.3, 0.2, 0.2];
        let mut call = 0;
        let mut at_best = None;
        let out = fit_with(
            &split,
            params,
            &cfg,
            |_| {
                call += 1;
                Ok(scripted[call - 1])
            },
            |rec, best| {
                if let Some(p) = best {
                    at_best = Some((rec.epoch, p.clone()));
                }
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(out.log.best_epoch, Some(2));
        assert_eq!(out.log.epochs.len(), 4);
        let (epoch, p) = at_best.unwrap();
        assert_eq!(epoch, 2);
        assert_eq!(p, out.params);
    }

    #[test]
    fn fit_is_reproducible() {
        let split = planted(4);
        let run = || {
            let params = ModelParams::init(40, 8, 2, Mode::HetroFair, 0.5, 0.5, InitScheme::Normal(0.01), 5, 6).unwrap();
            let out = fit(&split, params, &small_config(4)).unwrap();
            (out.params, out.log.epochs.iter().map(|e| (e.loss, e.val_ndcg)).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_unit_weights_follow_fair_attention_trajectory() {
        let split = planted(5);
        let cfg = TrainConfig { freeze_w: true, ..small_config(5) };
        let mut hetro = ModelParams::init(40, 8, 2, Mode::HetroFair, 0.6, 0.5, InitScheme::Xavier, 7, 8).unwrap();
        for w in hetro.w.iter_mut().flatten() {
            *w = 1.0;
        }
        let fair = ModelParams { mode: Mode::FairAttention, ..hetro.clone() };
        let a = fit(&split, hetro, &cfg).unwrap();
        let b = fit(&split, fair, &TrainConfig { freeze_w: false, ..cfg }).unwrap();
        assert_eq!(a.params.x, b.params.x);
        let trace = |o: &FitOutcome| o.log.epochs.iter().map(|e| (e.loss, e.val_ndcg)).collect::<Vec<_>>();
        assert_eq!(trace(&a), trace(&b));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let split = planted(6);
        let params = ModelParams::init(40, 8, 1, Mode::LightGcn, 0.5, 0.5, InitScheme::Xavier, 1, 2).unwrap();
        let cfg = TrainConfig { learning_rate: 1e300, optimizer: Optimizer::Sgd, ..small_config(6) };
        assert!(matches!(fit(&split, params, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn config_validation_collects_every_problem() {
        let cfg = TrainConfig { batch_size: 0, patience: 0, learning_rate: -1.0, ..TrainConfig::default() };
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3),
            other => panic!("{other:?}"),
        }
    }
}
