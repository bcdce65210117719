//! Synthetic implicit-feedback data with long-tailed item popularity and
//! category homophily, used when no real interaction file is at hand.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::data::Interaction;
use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Mean interactions per user before any filtering.
    pub mean_user_degree: f64,
    pub min_user_degree: usize,
    pub categories: usize,
    /// Probability that an interaction falls in the user's own category.
    pub dominant_share: f64,
    /// Item weight is `rank^-exponent` within the popularity order.
    pub popularity_exponent: f64,
}

impl SyntheticConfig {
    /// Roughly the size, density and homophily of a small, dense Amazon
    /// category: 1,340 users, 733 items, about 29k interactions, homophily
    /// near 0.8.
    pub fn beauty_like() -> Self {
        Self {
            num_users: 1340,
            num_items: 733,
            mean_user_degree: 21.5,
            min_user_degree: 12,
            categories: 8,
            dominant_share: 0.85,
            popularity_exponent: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_users == 0 || self.num_items == 0 {
            problems.push("users and items must be non-empty".to_string());
        }
        if self.categories == 0 || self.categories > self.num_items {
            problems.push(format!("categories must lie in 1..={}", self.num_items));
        }
        if !(0.0..=1.0).contains(&self.dominant_share) {
            problems.push("dominant_share must lie in [0, 1]".to_string());
        }
        if !(self.mean_user_degree >= self.min_user_degree as f64) {
            problems.push("mean_user_degree must be at least min_user_degree".to_string());
        }
        if self.min_user_degree == 0 || self.min_user_degree > self.num_items / 2 {
            problems.push(format!("min_user_degree must lie in 1..={}", self.num_items / 2));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Draws a labelled interaction list. Item `i` carries label `c<k>` for its
/// category; user and item ids are `u<n>` and `i<n>`.
pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<Vec<Interaction>> {
    config.validate()?;
    let mut rng = rng_from(seed);
    let ni = config.num_items;

    let mut popularity_rank: Vec<usize> = (0..ni).collect();
    popularity_rank.shuffle(&mut rng);
    let weight: Vec<f64> = popularity_rank
        .iter()
        .map(|&r| ((r + 1) as f64).powf(-config.popularity_exponent))
        .collect();
    let category: Vec<usize> = (0..ni).map(|i| i % config.categories).collect();

    let members: Vec<Vec<usize>> = (0..config.categories)
        .map(|c| (0..ni).filter(|&i| category[i] == c).collect())
        .collect();
    let per_category: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&i| weight[i])).expect("positive weights"))
        .collect();
    let overall = WeightedIndex::new(&weight).expect("positive weights");

    let extra = Exp::new(1.0 / (config.mean_user_degree - config.min_user_degree as f64).max(1e-9))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let cap = ni / 2;

    let mut out = Vec::new();
    for u in 0..config.num_users {
        let own = rng.random_range(0..config.categories);
        let target = (config.min_user_degree + extra.sample(&mut rng).floor() as usize).min(cap);
        let mut chosen = BTreeSet::new();
        let mut attempts = 0;
        while chosen.len() < target && attempts < 50 * target {
            attempts += 1;
            let item = if rng.random_bool(config.dominant_share) {
                members[own][per_category[own].sample(&mut rng)]
            } else {
                overall.sample(&mut rng)
            };
            chosen.insert(item);
        }
        for item in chosen {
            out.push(Interaction::new(format!("u{u}"), format!("i{item}")).with_label(format!("c{}", category[item])));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_graph, homophily_score, k_core_filter, LabelTable};

    #[test]
    fn beauty_like_shape() {
        let raw = generate(&SyntheticConfig::beauty_like(), 7).unwrap();
        let filtered = k_core_filter(&raw, 10).unwrap();
        let g = build_graph(&filtered).unwrap();
        let (nu, ni, ne) = (g.graph.num_users(), g.graph.num_items(), g.graph.num_edges());
        assert!(nu > 1200 && ni > 550, "{nu} users, {ni} items");
        assert!((22_000..36_000).contains(&ne), "{ne} edges");
        assert!((0.02..0.045).contains(&g.density()), "density {}", g.density());
        let labels = LabelTable::infer(&g.graph, g.item_labels.clone()).unwrap();
        let h = homophily_score(&g.graph, &labels).unwrap();
        assert!((0.72..0.88).contains(&h), "homophily {h}");
    }

    #[test]
    fn popularity_is_long_tailed() {
        let raw = generate(&SyntheticConfig::beauty_like(), 3).unwrap();
        let g = build_graph(&raw).unwrap();
        let mut deg = g.graph.item_degrees();
        deg.sort_unstable_by(|a, b| b.cmp(a));
        let top: usize = deg[..deg.len() / 5].iter().sum();
        let total: usize = deg.iter().sum();
        assert!(top as f64 > 0.4 * total as f64);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig { num_users: 50, num_items: 40, mean_user_degree: 8.0, min_user_degree: 3, ..SyntheticConfig::beauty_like() };
        assert_eq!(generate(&cfg, 1).unwrap(), generate(&cfg, 1).unwrap());
        assert_ne!(generate(&cfg, 1).unwrap(), generate(&cfg, 2).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = SyntheticConfig { categories: 0, dominant_share: 2.0, ..SyntheticConfig::beauty_like() };
        match cfg.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
