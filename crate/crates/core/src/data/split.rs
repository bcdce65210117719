use rand::seq::SliceRandom;

use super::InteractionGraph;
use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = Self { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(format!("split ratios must be non-negative, got {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split ratios must sum to 1, got {self:?}")));
        }
        if self.train <= 0.0 {
            return Err(Error::InvalidArgument("train ratio must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

/// Per-user train/validation/test partition plus the graph built from the
/// train part. The train graph keeps the full user and item index space.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train_graph: InteractionGraph,
    pub valid_items: Vec<Vec<usize>>,
    pub test_items: Vec<Vec<usize>>,
}

impl DatasetSplit {
    /// Builds a split from explicit per-user sets (sorted internally).
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        train: &[(usize, usize)],
        valid: &[(usize, usize)],
        test: &[(usize, usize)],
    ) -> Result<Self> {
        let train_graph = InteractionGraph::from_edges(num_users, num_items, train)?;
        let collect = |pairs: &[(usize, usize)]| -> Result<Vec<Vec<usize>>> {
            let mut sets = vec![Vec::new(); num_users];
            for &(u, i) in pairs {
                if u >= num_users {
                    return Err(Error::IndexOutOfRange { index: u, limit: num_users });
                }
                if i >= num_items {
                    return Err(Error::IndexOutOfRange { index: i, limit: num_items });
                }
                sets[u].push(i);
            }
            for s in &mut sets {
                s.sort_unstable();
                s.dedup();
            }
            Ok(sets)
        };
        Ok(Self {
            train_graph,
            valid_items: collect(valid)?,
            test_items: collect(test)?,
        })
    }

    pub fn num_users(&self) -> usize {
        self.train_graph.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train_graph.num_items()
    }

    /// The user's training items `O_u^+`, sorted.
    pub fn train_items(&self, user: usize) -> &[usize] {
        self.train_graph.user_items(user)
    }

    pub fn train_item_degrees(&self) -> Vec<usize> {
        self.train_graph.item_degrees()
    }
}

/// Uniform per-user random partition of each user's items. Users are visited
/// in index order and their sorted item list is shuffled with one seeded
/// generator, so a seed fully determines the result. Per user, the validation
/// and test sizes are `round(n * ratio)` and the rest goes to train.
pub fn split(graph: &InteractionGraph, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut rng = rng_from(seed);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for u in 0..graph.num_users() {
        let mut items = graph.user_items(u).to_vec();
        let n = items.len();
        let n_valid = (n as f64 * ratios.valid).round() as usize;
        let n_test = (n as f64 * ratios.test).round() as usize;
        if n_valid + n_test >= n {
            return Err(Error::InvalidArgument(format!(
                "user {u} with {n} interactions would keep no train items"
            )));
        }
        items.shuffle(&mut rng);
        for (pos, &i) in items.iter().enumerate() {
            if pos < n_test {
                test.push((u, i));
            } else if pos < n_test + n_valid {
                valid.push((u, i));
            } else {
                train.push((u, i));
            }
        }
    }
    DatasetSplit::from_parts(graph.num_users(), graph.num_items(), &train, &valid, &test)
}
