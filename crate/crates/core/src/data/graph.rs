use std::collections::HashMap;

use super::Interaction;
use crate::error::{Error, Result};

/// Immutable user-item bipartite graph in compressed adjacency form.
///
/// Edges are numbered by their position in the user-side adjacency, which is
/// sorted by user then item. The item side stores, for every incident user,
/// the id of the shared edge so per-edge quantities can be looked up from
/// either endpoint.
///
/// In the stacked node space users occupy `[0, num_users)` and items
/// `[num_users, num_users + num_items)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    user_offsets: Vec<usize>,
    user_items: Vec<usize>,
    item_offsets: Vec<usize>,
    item_users: Vec<usize>,
    item_edges: Vec<usize>,
}

impl InteractionGraph {
    /// Builds a graph from `(user, item)` index pairs. Duplicates are merged.
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize)> = edges.to_vec();
        for &(u, i) in &sorted {
            if u >= num_users {
                return Err(Error::IndexOutOfRange { index: u, limit: num_users });
            }
            if i >= num_items {
                return Err(Error::IndexOutOfRange { index: i, limit: num_items });
            }
        }
        sorted.sort_unstable();
        sorted.dedup();

        let mut user_offsets = vec![0usize; num_users + 1];
        for &(u, _) in &sorted {
            user_offsets[u + 1] += 1;
        }
        for u in 0..num_users {
            user_offsets[u + 1] += user_offsets[u];
        }
        let user_items: Vec<usize> = sorted.iter().map(|&(_, i)| i).collect();

        let mut item_offsets = vec![0usize; num_items + 1];
        for &(_, i) in &sorted {
            item_offsets[i + 1] += 1;
        }
        for i in 0..num_items {
            item_offsets[i + 1] += item_offsets[i];
        }
        let mut fill = item_offsets.clone();
        let mut item_users = vec![0usize; sorted.len()];
        let mut item_edges = vec![0usize; sorted.len()];
        // Edges arrive sorted by user, so each item's user list ends up sorted.
        for (edge, &(u, i)) in sorted.iter().enumerate() {
            item_users[fill[i]] = u;
            item_edges[fill[i]] = edge;
            fill[i] += 1;
        }

        Ok(Self {
            num_users,
            num_items,
            user_offsets,
            user_items,
            item_offsets,
            item_users,
            item_edges,
        })
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.user_items.len()
    }

    /// Sorted item indices adjacent to `user`.
    #[inline]
    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.user_items[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    /// Edge ids of `user`'s edges, aligned with [`Self::user_items`].
    #[inline]
    pub fn user_edge_range(&self, user: usize) -> std::ops::Range<usize> {
        self.user_offsets[user]..self.user_offsets[user + 1]
    }

    /// Sorted user indices adjacent to `item`.
    #[inline]
    pub fn item_users(&self, item: usize) -> &[usize] {
        &self.item_users[self.item_offsets[item]..self.item_offsets[item + 1]]
    }

    /// Edge ids of `item`'s edges, aligned with [`Self::item_users`].
    #[inline]
    pub fn item_edges(&self, item: usize) -> &[usize] {
        &self.item_edges[self.item_offsets[item]..self.item_offsets[item + 1]]
    }

    #[inline]
    pub fn user_degree(&self, user: usize) -> usize {
        self.user_offsets[user + 1] - self.user_offsets[user]
    }

    #[inline]
    pub fn item_degree(&self, item: usize) -> usize {
        self.item_offsets[item + 1] - self.item_offsets[item]
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        (0..self.num_users).map(|u| self.user_degree(u)).collect()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        (0..self.num_items).map(|i| self.item_degree(i)).collect()
    }

    /// Degree of a node in the stacked user-then-item index space.
    #[inline]
    pub fn node_degree(&self, node: usize) -> usize {
        if node < self.num_users {
            self.user_degree(node)
        } else {
            self.item_degree(node - self.num_users)
        }
    }

    /// `(user, item)` endpoints of every edge, in edge-id order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_users).flat_map(move |u| self.user_items(u).iter().map(move |&i| (u, i)))
    }

    pub fn has_edge(&self, user: usize, item: usize) -> bool {
        self.user_items(user).binary_search(&item).is_ok()
    }

    /// `|E| / (|U| * |I|)`.
    pub fn density(&self) -> f64 {
        density(self.num_users, self.num_items, self.num_edges())
    }

    /// First node (stacked index) with no incident edge, if any.
    pub fn first_isolated_node(&self) -> Option<usize> {
        (0..self.num_nodes()).find(|&v| self.node_degree(v) == 0)
    }
}

pub(crate) fn density(users: usize, items: usize, edges: usize) -> f64 {
    edges as f64 / (users as f64 * items as f64)
}

/// A graph together with the external ids behind each index.
#[derive(Debug, Clone)]
pub struct IndexedGraph {
    pub graph: InteractionGraph,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// First label seen for each item, if any.
    pub item_labels: Vec<Option<String>>,
}

impl IndexedGraph {
    pub fn user_index(&self) -> HashMap<&str, usize> {
        self.user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn item_index(&self) -> HashMap<&str, usize> {
        self.item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn density(&self) -> f64 {
        self.graph.density()
    }

    pub fn has_labels(&self) -> bool {
        self.item_labels.iter().any(Option::is_some)
    }
}

/// Reindexes users and items to contiguous indices in order of first
/// appearance and builds the bipartite graph.
pub fn build_graph(interactions: &[Interaction]) -> Result<IndexedGraph> {
    if interactions.is_empty() {
        return Err(Error::EmptyResult("cannot build a graph from zero interactions".into()));
    }
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut item_labels: Vec<Option<String>> = Vec::new();
    let mut edges = Vec::with_capacity(interactions.len());
    for it in interactions {
        let u = *user_index.entry(&it.user).or_insert_with(|| {
            user_ids.push(it.user.clone());
            user_ids.len() - 1
        });
        let i = *item_index.entry(&it.item).or_insert_with(|| {
            item_ids.push(it.item.clone());
            item_labels.push(None);
            item_ids.len() - 1
        });
        if item_labels[i].is_none() {
            item_labels[i] = it.label.clone();
        }
        edges.push((u, i));
    }
    let graph = InteractionGraph::from_edges(user_ids.len(), item_ids.len(), &edges)?;
    Ok(IndexedGraph {
        graph,
        user_ids,
        item_ids,
        item_labels,
    })
}
