use crate::error::{Error, Result};

/// One user's candidate items ordered best-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
    /// `rank_of[i]` is the 1-based position of item `i`, 0 if `i` is not a candidate.
    rank_of: Vec<usize>,
}

impl RankedList {
    /// Orders the non-excluded items by descending score; equal scores keep
    /// ascending item index. `scores` has one entry per item in the catalog.
    pub fn from_scores(user: usize, scores: &[f64], excluded: &[usize]) -> Self {
        let mut is_excluded = vec![false; scores.len()];
        for &i in excluded {
            is_excluded[i] = true;
        }
        let mut items: Vec<usize> = (0..scores.len()).filter(|&i| !is_excluded[i]).collect();
        items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut rank_of = vec![0; scores.len()];
        for (pos, &i) in items.iter().enumerate() {
            rank_of[i] = pos + 1;
        }
        Self { user, items, rank_of }
    }

    pub fn rank(&self, item: usize) -> Option<usize> {
        match self.rank_of.get(item) {
            Some(&r) if r > 0 => Some(r),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[inline]
fn is_relevant(relevant: &[usize], item: usize) -> bool {
    relevant.binary_search(&item).is_ok()
}

/// Binary-relevance NDCG@N. `relevant` must be sorted.
pub fn ndcg_at(ranked: &RankedList, relevant: &[usize], n: usize) -> f64 {
    let dcg: f64 = ranked
        .items
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, &i)| is_relevant(relevant, i))
        .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..relevant.len().min(n)).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

/// `1 / rank` of the first relevant item over the full ranking, 0 if none is ranked.
pub fn reciprocal_rank(ranked: &RankedList, relevant: &[usize]) -> f64 {
    ranked
        .items
        .iter()
        .position(|&i| is_relevant(relevant, i))
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// `AP@N = (1/|relevant|) sum_{pos<=N} P@pos * r(pos)`.
pub fn average_precision_at(ranked: &RankedList, relevant: &[usize], n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &i) in ranked.items.iter().take(n).enumerate() {
        if is_relevant(relevant, i) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean NDCG@N over aligned `(lists[k], relevant[k])` pairs.
pub fn mean_ndcg_at(lists: &[RankedList], relevant: &[Vec<usize>], n: usize) -> f64 {
    mean(lists.iter().zip(relevant).map(|(l, r)| ndcg_at(l, r, n)))
}

pub fn mrr(lists: &[RankedList], relevant: &[Vec<usize>]) -> f64 {
    mean(lists.iter().zip(relevant).map(|(l, r)| reciprocal_rank(l, r)))
}

pub fn map_at(lists: &[RankedList], relevant: &[Vec<usize>], n: usize) -> f64 {
    mean(lists.iter().zip(relevant).map(|(l, r)| average_precision_at(l, r, n)))
}

/// Average (fractional) ranks, 1-based.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share the mean of ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("spearman on lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Undefined("spearman needs at least two observations".into()));
    }
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("spearman with a constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Negated mean, over users with a defined correlation, of the Spearman
/// correlation between each test item's train degree and its rank in the
/// user's list.
pub fn pru(lists: &[RankedList], relevant: &[Vec<usize>], degrees: &[usize]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (list, items) in lists.iter().zip(relevant) {
        let ranked: Vec<(f64, f64)> = items
            .iter()
            .filter_map(|&i| list.rank(i).map(|r| (degrees[i] as f64, r as f64)))
            .collect();
        let (deg, rank): (Vec<f64>, Vec<f64>) = ranked.into_iter().unzip();
        if let Ok(src) = spearman(&deg, &rank) {
            sum += src;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Undefined("PRU: no user has two test items with distinct degrees".into()));
    }
    Ok(-(sum / count as f64))
}

/// Negated Spearman correlation, across items appearing in at least one test
/// set, between item train degree and the item's mean rank over those users.
pub fn pri(lists: &[RankedList], relevant: &[Vec<usize>], degrees: &[usize]) -> Result<f64> {
    let mut rank_sum = vec![0.0; degrees.len()];
    let mut users = vec![0usize; degrees.len()];
    for (list, items) in lists.iter().zip(relevant) {
        for &i in items {
            if let Some(r) = list.rank(i) {
                rank_sum[i] += r as f64;
                users[i] += 1;
            }
        }
    }
    let (deg, avg): (Vec<f64>, Vec<f64>) = (0..degrees.len())
        .filter(|&i| users[i] > 0)
        .map(|i| (degrees[i] as f64, rank_sum[i] / users[i] as f64))
        .unzip();
    if deg.len() < 2 {
        return Err(Error::Undefined("PRI: fewer than two items appear in test sets".into()));
    }
    spearman(&deg, &avg).map(|s| -s)
}
