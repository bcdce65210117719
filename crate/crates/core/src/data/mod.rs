//! Interaction ingestion, k-core filtering, the bipartite interaction graph,
//! train/validation/test splitting and the label homophily score.

mod graph;
mod homophily;
mod io;
mod split;

pub use graph::{build_graph, IndexedGraph, InteractionGraph};
pub use homophily::{homophily_score, LabelTable};
pub use io::{load_interactions, parse_interactions, write_interactions, ColumnLayout, Delimiter, InputFormat};
pub use split::{split, DatasetSplit, SplitRatios};

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// One implicit-feedback event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub label: Option<String>,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            label: None,
            timestamp: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Collapses repeated (user, item) pairs, keeping the first occurrence. A
/// later duplicate only contributes its label when the first had none.
pub fn dedup_interactions(interactions: Vec<Interaction>) -> Vec<Interaction> {
    let mut position: HashMap<(String, String), usize> = HashMap::new();
    let mut out: Vec<Interaction> = Vec::with_capacity(interactions.len());
    for it in interactions {
        match position.get(&(it.user.clone(), it.item.clone())) {
            Some(&p) => {
                if out[p].label.is_none() {
                    out[p].label = it.label;
                }
            }
            None => {
                position.insert((it.user.clone(), it.item.clone()), out.len());
                out.push(it);
            }
        }
    }
    out
}

/// Repeatedly drops users and items with fewer than `k` interactions until
/// every survivor has at least `k`. The fixpoint is the unique maximal
/// sub-collection with that property, so the result does not depend on
/// removal order. Input order is preserved among survivors.
pub fn k_core_filter(interactions: &[Interaction], k: usize) -> Result<Vec<Interaction>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-core threshold must be >= 1".into()));
    }
    let mut alive: Vec<Interaction> = dedup_interactions(interactions.to_vec());
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for it in &alive {
            *user_deg.entry(&it.user).or_default() += 1;
            *item_deg.entry(&it.item).or_default() += 1;
        }
        let weak_users: HashSet<String> = user_deg
            .iter()
            .filter(|(_, &d)| d < k)
            .map(|(u, _)| u.to_string())
            .collect();
        let weak_items: HashSet<String> = item_deg
            .iter()
            .filter(|(_, &d)| d < k)
            .map(|(i, _)| i.to_string())
            .collect();
        if weak_users.is_empty() && weak_items.is_empty() {
            break;
        }
        alive.retain(|it| !weak_users.contains(&it.user) && !weak_items.contains(&it.item));
    }
    if alive.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no interactions survive the {k}-core filter"
        )));
    }
    Ok(alive)
}
