use std::collections::BTreeMap;

use super::InteractionGraph;
use crate::error::{Error, Result};

/// Item categories and the dominant label inferred for each user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    pub item_label: Vec<Option<String>>,
    pub user_label: Vec<Option<String>>,
}

impl LabelTable {
    /// A user's label is the most frequent label among its labelled
    /// neighbours; ties go to the lexicographically smallest label.
    pub fn infer(graph: &InteractionGraph, item_label: Vec<Option<String>>) -> Result<Self> {
        if item_label.len() != graph.num_items() {
            return Err(Error::ShapeMismatch(format!(
                "{} item labels for {} items",
                item_label.len(),
                graph.num_items()
            )));
        }
        let user_label = (0..graph.num_users())
            .map(|u| {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for &i in graph.user_items(u) {
                    if let Some(l) = &item_label[i] {
                        *counts.entry(l.as_str()).or_default() += 1;
                    }
                }
                // BTreeMap iterates in ascending key order; keep the first maximum.
                let mut best: Option<(&str, usize)> = None;
                for (label, count) in counts {
                    if best.is_none_or(|(_, c)| count > c) {
                        best = Some((label, count));
                    }
                }
                best.map(|(l, _)| l.to_string())
            })
            .collect();
        Ok(Self { item_label, user_label })
    }
}

/// Fraction of edges, among those whose user and item both carry a label,
/// where the item label equals the user's dominant label.
pub fn homophily_score(graph: &InteractionGraph, labels: &LabelTable) -> Result<f64> {
    let mut valid = 0usize;
    let mut matching = 0usize;
    for (u, i) in graph.edges() {
        if let (Some(lu), Some(li)) = (&labels.user_label[u], &labels.item_label[i]) {
            valid += 1;
            if lu == li {
                matching += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::HomophilyUndefined);
    }
    Ok(matching as f64 / valid as f64)
}
