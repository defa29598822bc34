//! Knowledge graph of symbolic-action transitions.

use alloc::collections::BTreeMap;
use alloc::string::String;

/// Directed graph whose nodes are symbolic-action keys weighted by how often
/// the action occurred and whose edges count consecutive pairs within a
/// sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, u64>,
    edges: BTreeMap<(String, String), u64>,
    outgoing: BTreeMap<String, u64>,
    sequences: u64,
    last: Option<String>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from several sequences, mapping each element to a node
    /// key with `project`. Elements projected to `None` are skipped.
    pub fn from_sequences<S, T, F>(sequences: S, mut project: F) -> Self
    where
        S: IntoIterator,
        S::Item: IntoIterator<Item = T>,
        F: FnMut(T) -> Option<String>,
    {
        let mut kg = Self::new();
        for seq in sequences {
            kg.begin_sequence();
            for item in seq {
                if let Some(key) = project(item) {
                    kg.push(key);
                }
            }
        }
        kg
    }

    /// The next pushed node starts a new sequence (no incoming edge).
    pub fn begin_sequence(&mut self) {
        self.last = None;
    }

    pub fn push(&mut self, key: String) {
        *self.nodes.entry(key.clone()).or_default() += 1;
        match self.last.take() {
            Some(prev) => {
                *self.outgoing.entry(prev.clone()).or_default() += 1;
                *self.edges.entry((prev, key.clone())).or_default() += 1;
            }
            None => self.sequences += 1,
        }
        self.last = Some(key);
    }

    pub fn nodes(&self) -> &BTreeMap<String, u64> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<(String, String), u64> {
        &self.edges
    }

    pub fn node_count(&self, key: &str) -> u64 {
        self.nodes.get(key).copied().unwrap_or(0)
    }

    /// Number of pushed elements.
    pub fn node_total(&self) -> u64 {
        self.nodes.values().sum()
    }

    pub fn edge_total(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Number of non-empty sequences pushed.
    pub fn sequences(&self) -> u64 {
        self.sequences
    }

    /// Share of all pushed elements that were `key`.
    pub fn node_probability(&self, key: &str) -> f64 {
        let total = self.node_total();
        if total == 0 {
            0.0
        } else {
            self.node_count(key) as f64 / total as f64
        }
    }

    pub fn outgoing_total(&self, src: &str) -> u64 {
        self.outgoing.get(src).copied().unwrap_or(0)
    }

    /// `count(src -> dst) / outgoing(src)`, or 0 when `src` has no outgoing
    /// edges.
    pub fn edge_probability(&self, src: &str, dst: &str) -> f64 {
        let out = self.outgoing_total(src);
        if out == 0 {
            return 0.0;
        }
        let count = self.edges.get(&(String::from(src), String::from(dst))).copied().unwrap_or(0);
        count as f64 / out as f64
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
