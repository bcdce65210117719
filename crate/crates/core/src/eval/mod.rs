//! Full-ranking evaluation: accuracy (NDCG@N, MRR, MAP@N) and item-side
//! popularity-bias metrics (PRU, PRI), optionally restricted to the
//! short-head or long-tail item strata.

mod metrics;

pub use metrics::{
    average_precision_at, fractional_ranks, map_at, mean_ndcg_at, mrr, ndcg_at, pri, pru,
    reciprocal_rank, spearman, RankedList,
};

use std::fmt;

use rayon::prelude::*;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

pub const DEFAULT_CUTOFF: usize = 20;
pub const DEFAULT_SHORT_HEAD_FRACTION: f64 = 0.2;

/// Which held-out set to score against. Candidates always exclude the
/// user's train items; test evaluation also excludes validation items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
    All,
    LongTail,
    ShortHead,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::LongTail => "long_tail",
            Stratum::ShortHead => "short_head",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub stratum: Stratum,
    pub n: usize,
    /// Users with a non-empty relevant set in this stratum.
    pub users: usize,
    pub ndcg: f64,
    pub mrr: f64,
    pub map: f64,
    /// `None` when no user has a defined rank correlation.
    pub pru: Option<f64>,
    /// `None` when fewer than two items appear in the relevant sets.
    pub pri: Option<f64>,
}

pub const METRIC_KEYS: [&str; 5] = ["ndcg", "mrr", "map", "pru", "pri"];

impl EvalReport {
    /// `(metric, value)` pairs in a fixed order; undefined values are `None`.
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("ndcg", Some(self.ndcg)),
            ("mrr", Some(self.mrr)),
            ("map", Some(self.map)),
            ("pru", self.pru),
            ("pri", self.pri),
        ]
    }

    /// Flat `key=value` block.
    pub fn to_kv(&self) -> String {
        let mut out = format!("stratum={}\nn={}\nusers={}\n", self.stratum, self.n, self.users);
        for (k, v) in self.metrics() {
            out.push_str(&format!("{k}={}\n", fmt_metric(v)));
        }
        out
    }
}

/// Shortest round-trip representation, `NA` for undefined.
pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

/// Scores every item for `user` and ranks the candidates.
pub fn rank_items(z: &Matrix, split: &DatasetSplit, user: usize, target: Target) -> RankedList {
    let nu = split.num_users();
    let zu = z.row(user);
    let scores: Vec<f64> = (0..split.num_items()).map(|i| dot(zu, z.row(nu + i))).collect();
    let mut excluded: Vec<usize> = split.train_items(user).to_vec();
    if target == Target::Test {
        excluded.extend_from_slice(&split.valid_items[user]);
    }
    RankedList::from_scores(user, &scores, &excluded)
}

/// Item indices flagged as short-head: the top `ceil(fraction * |I|)` items
/// by train degree, ties broken by lower index.
pub fn short_head_mask(train_degrees: &[usize], fraction: f64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("short-head fraction must lie in (0, 1], got {fraction}")));
    }
    let count = (fraction * train_degrees.len() as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..train_degrees.len()).collect();
    order.sort_by(|&a, &b| train_degrees[b].cmp(&train_degrees[a]).then(a.cmp(&b)));
    let mut mask = vec![false; train_degrees.len()];
    for &i in order.iter().take(count) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Rankings for every user with a non-empty target set, computed once and
/// reused across strata.
pub struct Evaluator<'a> {
    split: &'a DatasetSplit,
    target: Target,
    lists: Vec<RankedList>,
    degrees: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(z: &Matrix, split: &'a DatasetSplit, target: Target) -> Result<Self> {
        if z.rows() != split.train_graph.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "embeddings have {} rows, split has {} nodes",
                z.rows(),
                split.train_graph.num_nodes()
            )));
        }
        let users: Vec<usize> = (0..split.num_users())
            .filter(|&u| !Self::targets(split, target)[u].is_empty())
            .collect();
        let lists = users.par_iter().map(|&u| rank_items(z, split, u, target)).collect();
        Ok(Self {
            split,
            target,
            lists,
            degrees: split.train_item_degrees(),
        })
    }

    fn targets(split: &DatasetSplit, target: Target) -> &Vec<Vec<usize>> {
        match target {
            Target::Validation => &split.valid_items,
            Target::Test => &split.test_items,
        }
    }

    pub fn ranked_lists(&self) -> &[RankedList] {
        &self.lists
    }

    /// Report over the relevant sets filtered by `keep` (all items when `None`).
    /// Users whose filtered set is empty are skipped. `None` when no user remains.
    pub fn report(&self, stratum: Stratum, keep: Option<&[bool]>, n: usize) -> Option<EvalReport> {
        let sets = Self::targets(self.split, self.target);
        let mut lists = Vec::new();
        let mut relevant = Vec::new();
        for list in &self.lists {
            let rel: Vec<usize> = sets[list.user]
                .iter()
                .copied()
                .filter(|&i| keep.is_none_or(|k| k[i]))
                .collect();
            if !rel.is_empty() {
                lists.push(list.clone());
                relevant.push(rel);
            }
        }
        if lists.is_empty() {
            return None;
        }
        Some(EvalReport {
            stratum,
            n,
            users: lists.len(),
            ndcg: mean_ndcg_at(&lists, &relevant, n),
            mrr: mrr(&lists, &relevant),
            map: map_at(&lists, &relevant, n),
            pru: pru(&lists, &relevant, &self.degrees).ok(),
            pri: pri(&lists, &relevant, &self.degrees).ok(),
        })
    }

    pub fn overall(&self, n: usize) -> Result<EvalReport> {
        self.report(Stratum::All, None, n)
            .ok_or_else(|| Error::EmptyResult("no user has a non-empty evaluation set".into()))
    }

    /// Long-tail and short-head reports; a stratum that leaves every user
    /// without relevant items is reported as `None`.
    pub fn stratified(&self, fraction: f64, n: usize) -> Result<StratifiedReports> {
        let short = short_head_mask(&self.degrees, fraction)?;
        let long: Vec<bool> = short.iter().map(|s| !s).collect();
        Ok(StratifiedReports {
            long_tail: self.report(Stratum::LongTail, Some(&long), n),
            short_head: self.report(Stratum::ShortHead, Some(&short), n),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedReports {
    pub long_tail: Option<EvalReport>,
    pub short_head: Option<EvalReport>,
}

pub fn evaluate(z: &Matrix, split: &DatasetSplit, target: Target, n: usize) -> Result<EvalReport> {
    Evaluator::new(z, split, target)?.overall(n)
}

pub fn stratified_eval(z: &Matrix, split: &DatasetSplit, fraction: f64, n: usize) -> Result<StratifiedReports> {
    Evaluator::new(z, split, Target::Test)?.stratified(fraction, n)
}

/// Mean validation NDCG@N, the early-stopping signal. Zero when no user has
/// validation items.
pub fn validation_ndcg(z: &Matrix, split: &DatasetSplit, n: usize) -> Result<f64> {
    let ev = Evaluator::new(z, split, Target::Validation)?;
    Ok(ev.report(Stratum::All, None, n).map_or(0.0, |r| r.ndcg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    fn toy_split() -> (DatasetSplit, Matrix) {
        // 3 users, 6 items; item 0 is the most popular in train
        let train = [(0, 0), (0, 1), (1, 0), (1, 2), (2, 0), (2, 3), (2, 1)];
        let valid = [(0, 4), (1, 5)];
        let test = [(0, 2), (0, 5), (1, 1), (1, 3), (1, 4), (2, 4), (2, 5)];
        let split = DatasetSplit::from_parts(3, 6, &train, &valid, &test).unwrap();
        let mut rng = rng_from(5);
        let z = Matrix::from_fn(9, 3, |_, _| rng.random_range(-1.0..1.0));
        (split, z)
    }

    #[test]
    fn candidates_exclude_train_and_validation() {
        let (split, z) = toy_split();
        let l = rank_items(&z, &split, 0, Target::Test);
        assert_eq!(l.len(), 3);
        assert!(l.rank(0).is_none() && l.rank(1).is_none() && l.rank(4).is_none());
        let l = rank_items(&z, &split, 0, Target::Validation);
        assert_eq!(l.len(), 4);
    }

    #[test]
    fn report_has_exactly_the_five_metrics() {
        let (split, z) = toy_split();
        let r = evaluate(&z, &split, Target::Test, 20).unwrap();
        let kv = r.to_kv();
        for key in METRIC_KEYS {
            assert!(kv.contains(&format!("\n{key}=")), "{kv}");
        }
        assert_eq!(r.users, 3);
        for (_, v) in r.metrics().iter().take(3) {
            assert!((0.0..=1.0).contains(&v.unwrap()));
        }
    }

    #[test]
    fn short_head_count_and_tie_break() {
        let degrees = [3, 5, 5, 1, 1, 2, 0, 0, 0, 4];
        let mask = short_head_mask(&degrees, 0.2).unwrap();
        let picked: Vec<usize> = (0..10).filter(|&i| mask[i]).collect();
        assert_eq!(picked, vec![1, 2]);
        let degrees = [5, 7, 5, 5, 1, 1, 1, 1, 1, 1];
        let mask = short_head_mask(&degrees, 0.2).unwrap();
        assert_eq!((0..10).filter(|&i| mask[i]).collect::<Vec<_>>(), vec![0, 1]);
        assert!(short_head_mask(&degrees, 0.0).is_err());
    }

    #[test]
    fn full_fraction_short_head_equals_unstratified() {
        let (split, z) = toy_split();
        let ev = Evaluator::new(&z, &split, Target::Test).unwrap();
        let all = ev.overall(20).unwrap();
        let strat = ev.stratified(1.0, 20).unwrap();
        assert!(strat.long_tail.is_none());
        let short = strat.short_head.unwrap();
        assert_eq!(EvalReport { stratum: Stratum::All, ..short }, all);
    }

    #[test]
    fn positive_rescaling_leaves_metrics_unchanged() {
        let (split, z) = toy_split();
        let a = evaluate(&z, &split, Target::Test, 2).unwrap();
        let b = evaluate(&z.scale(3.5), &split, Target::Test, 2).unwrap();
        assert_eq!(a, b);
    }
}
