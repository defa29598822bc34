//! Probabilistic and knowledge-graph analysis of symbolic traces.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde_json::json;
use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::symbolizer::SymbolicRecord;
use crate::term::{SymbolicTerm, TermSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplainError {
    #[error("unknown export format `{0}` (expected dot or json)")]
    UnknownFormat(String),
    #[error("unknown normalization `{0}` (expected joint, row or col)")]
    UnknownNormalization(String),
}

/// Counts and probabilities over string keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: impl Into<String>) {
        *self.counts.entry(key.into()).or_default() += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn probability(&self, key: &str) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(key) as f64 / self.total as f64
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(key, count, probability)` in key order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, u64, f64)> + '_ {
        self.counts.iter().map(|(k, &c)| (k.as_str(), c, c as f64 / self.total as f64))
    }

    /// CSV with header `key,count,prob`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,count,prob\n");
        for (k, c, p) in self.rows() {
            let _ = writeln!(out, "{},{},{}", csv_field(k), c, p);
        }
        out
    }
}

/// Quotes a CSV field when it contains a separator or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Selects terms by subject: an exact subject, a scope such as `g0` or
/// `embb`, and/or a variable such as `DTU`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubjectFilter {
    pub subject: Option<String>,
    pub scope: Option<String>,
    pub variable: Option<String>,
}

impl SubjectFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn scope(scope: impl Into<String>) -> Self {
        Self { scope: Some(scope.into()), ..Self::default() }
    }

    pub fn matches(&self, term: &SymbolicTerm) -> bool {
        let s = term.subject();
        self.subject.as_deref().is_none_or(|x| s.as_str() == x)
            && self.scope.as_deref().is_none_or(|x| s.scope() == Some(x) || (s.scope().is_none() && s.as_str() == x))
            && self.variable.as_deref().is_none_or(|x| s.variable() == x)
    }
}

fn terms_table<'a>(sets: impl Iterator<Item = &'a TermSet>, filter: &SubjectFilter) -> FrequencyTable {
    let mut table = FrequencyTable::new();
    for set in sets {
        for term in set.iter().filter(|t| filter.matches(t)) {
            table.add(term.render());
        }
    }
    table
}

/// Distribution of effect terms whose subject passes `filter`.
pub fn effect_distribution(trace: &[SymbolicRecord], filter: &SubjectFilter) -> FrequencyTable {
    terms_table(trace.iter().filter_map(SymbolicRecord::effect), filter)
}

/// Distribution of symbolic actions (per term) passing `filter`.
pub fn action_distribution(trace: &[SymbolicRecord], filter: &SubjectFilter) -> FrequencyTable {
    terms_table(trace.iter().map(|r| &r.action), filter)
}

/// Distributions of state terms passing `filter`, one table per label
/// returned by `group_by` for the record (records mapped to `None` are
/// skipped).
pub fn state_distribution(
    trace: &[SymbolicRecord],
    filter: &SubjectFilter,
    mut group_by: impl FnMut(&SymbolicRecord) -> Option<String>,
) -> BTreeMap<String, FrequencyTable> {
    let mut out: BTreeMap<String, FrequencyTable> = BTreeMap::new();
    for record in trace {
        let Some(label) = group_by(record) else { continue };
        let table = out.entry(label).or_default();
        for term in record.state.iter().filter(|t| filter.matches(t)) {
            table.add(term.render());
        }
    }
    out
}

/// Groups records by the values of the given metadata keys joined with `/`.
/// Records missing a key get the label `-` for it.
pub fn meta_grouping(keys: &[String]) -> impl FnMut(&SymbolicRecord) -> Option<String> + '_ {
    move |r| {
        if keys.is_empty() {
            return Some("all".to_string());
        }
        let parts: Vec<&str> = keys.iter().map(|k| r.meta.get(k).map_or("-", String::as_str)).collect();
        Some(parts.join("/"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    Joint,
    Row,
    Column,
}

impl core::str::FromStr for Normalization {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint" => Ok(Self::Joint),
            "row" => Ok(Self::Row),
            "col" | "column" => Ok(Self::Column),
            other => Err(ExplainError::UnknownNormalization(other.into())),
        }
    }
}

/// Co-occurrence of decisions (rows) and effects (columns) at the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub normalization: Normalization,
    counts: BTreeMap<(String, String), u64>,
    row_totals: BTreeMap<String, u64>,
    col_totals: BTreeMap<String, u64>,
    total: u64,
}

impl DensityMap {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, row: &str, col: &str) -> u64 {
        self.counts.get(&(row.to_string(), col.to_string())).copied().unwrap_or(0)
    }

    pub fn value(&self, row: &str, col: &str) -> f64 {
        let c = self.count(row, col) as f64;
        let denom = match self.normalization {
            Normalization::Joint => self.total,
            Normalization::Row => self.row_totals.get(row).copied().unwrap_or(0),
            Normalization::Column => self.col_totals.get(col).copied().unwrap_or(0),
        };
        if denom == 0 {
            0.0
        } else {
            c / denom as f64
        }
    }

    /// Non-zero cells `(row, col, value)` in key order.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.counts.keys().map(|(r, c)| (r.as_str(), c.as_str(), self.value(r, c)))
    }

    /// Share of all pairs falling in each row.
    pub fn row_marginals(&self) -> BTreeMap<&str, f64> {
        self.row_totals.iter().map(|(k, &v)| (k.as_str(), v as f64 / self.total as f64)).collect()
    }

    /// Share of all pairs falling in each column.
    pub fn col_marginals(&self) -> BTreeMap<&str, f64> {
        self.col_totals.iter().map(|(k, &v)| (k.as_str(), v as f64 / self.total as f64)).collect()
    }

    /// CSV with header `row,col,value`; marginals follow as rows with `*`
    /// in the other position.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for (r, c, v) in self.cells() {
            let _ = writeln!(out, "{},{},{}", csv_field(r), csv_field(c), v);
        }
        for (r, v) in self.row_marginals() {
            let _ = writeln!(out, "{},*,{}", csv_field(r), v);
        }
        for (c, v) in self.col_marginals() {
            let _ = writeln!(out, "*,{},{}", csv_field(c), v);
        }
        out
    }
}

/// Builds the density map from (decision, effect) pairs of every record that
/// has an effect. Each projection may yield several keys per record; every
/// combination counts as one pair.
pub fn decision_effect_density(
    trace: &[SymbolicRecord],
    mut decision: impl FnMut(&TermSet) -> Vec<String>,
    mut effect: impl FnMut(&TermSet) -> Vec<String>,
    normalization: Normalization,
) -> DensityMap {
    let mut map = DensityMap {
        normalization,
        counts: BTreeMap::new(),
        row_totals: BTreeMap::new(),
        col_totals: BTreeMap::new(),
        total: 0,
    };
    for record in trace {
        let Some(eff) = record.effect() else { continue };
        let cols = effect(eff);
        for row in decision(&record.action) {
            for col in &cols {
                *map.counts.entry((row.clone(), col.clone())).or_default() += 1;
                *map.row_totals.entry(row.clone()).or_default() += 1;
                *map.col_totals.entry(col.clone()).or_default() += 1;
                map.total += 1;
            }
        }
    }
    map
}

/// Projection yielding the rendered terms of a set that pass `filter`.
pub fn project_terms(filter: SubjectFilter) -> impl FnMut(&TermSet) -> Vec<String> {
    move |set| set.iter().filter(|t| filter.matches(t)).map(SymbolicTerm::render).collect()
}

/// Signed probability change `b - a` per key over the union of keys,
/// sorted by absolute change (descending) then key.
pub fn compare_distributions(a: &FrequencyTable, b: &FrequencyTable) -> Vec<(String, f64)> {
    let mut keys: Vec<&String> = a.counts.keys().chain(b.counts.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut deltas: Vec<(String, f64)> =
        keys.into_iter().map(|k| (k.clone(), b.probability(k) - a.probability(k))).collect();
    deltas.sort_by(|x, y| y.1.abs().total_cmp(&x.1.abs()).then_with(|| x.0.cmp(&y.0)));
    deltas
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl core::str::FromStr for ExportFormat {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            other => Err(ExplainError::UnknownFormat(other.into())),
        }
    }
}

/// Nodes by count (descending) then key.
fn ordered_nodes(kg: &KnowledgeGraph) -> Vec<(&str, u64)> {
    let mut nodes: Vec<(&str, u64)> = kg.nodes().iter().map(|(k, &c)| (k.as_str(), c)).collect();
    nodes.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    nodes
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders the graph as DOT or JSON. Output is deterministic.
pub fn export_kg(kg: &KnowledgeGraph, format: ExportFormat) -> String {
    match format {
        ExportFormat::Dot => {
            let mut out = String::from("digraph kg {\n");
            for (key, count) in ordered_nodes(kg) {
                let id = dot_escape(key);
                let _ = writeln!(out, "  \"{id}\" [label=\"{id}\\n{count}\"];");
            }
            for (src, dst) in kg.edges().keys() {
                let _ = writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"{:.2}\"];",
                    dot_escape(src),
                    dot_escape(dst),
                    kg.edge_probability(src, dst)
                );
            }
            out.push_str("}\n");
            out
        }
        ExportFormat::Json => {
            let nodes: Vec<_> = ordered_nodes(kg)
                .into_iter()
                .map(|(k, c)| json!({"id": k, "count": c, "prob": kg.node_probability(k)}))
                .collect();
            let edges: Vec<_> = kg
                .edges()
                .iter()
                .map(|((s, d), &c)| json!({"src": s, "dst": d, "count": c, "prob": kg.edge_probability(s, d)}))
                .collect();
            let mut out = serde_json::to_string(&json!({"nodes": nodes, "edges": edges})).expect("json value");
            out.push('\n');
            out
        }
    }
}

/// Knowledge graph of one group's (or slice's) action terms over a trace,
/// e.g. `scope = "g0"` keeps only the `g0` term of every symbolic action.
pub fn projected_kg(traces: &[&[SymbolicRecord]], filter: &SubjectFilter) -> KnowledgeGraph {
    KnowledgeGraph::from_sequences(traces.iter().map(|t| t.iter()), |r: &SymbolicRecord| {
        let keys: Vec<String> = r.action.iter().filter(|t| filter.matches(t)).map(SymbolicTerm::render).collect();
        (!keys.is_empty()).then(|| keys.join("&"))
    })
}
