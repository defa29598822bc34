//! Experience store: every recorded (symbolic state, symbolic action,
//! concrete action, reward) plus per-pair reward aggregates and the
//! knowledge graph of the recorded action sequence.
//!
//! The store is append-only and fully determined by its log, so the
//! persisted document carries only the log and the quartile trackers; the
//! indexes are rebuilt on load by replaying the log.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::model::Action;
use crate::p2::QuartileTracker;
use crate::term::{Subject, TermError, TermSet};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("store version {found} is not supported (expected {STORE_VERSION})")]
    Version { found: u32 },
    #[error("reward at t={t} is not finite")]
    NonFiniteReward { t: u64 },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Term(#[from] TermError),
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub t: u64,
    /// Sequence (episode) the experience belongs to.
    #[serde(rename = "seq")]
    pub sequence: u64,
    pub state: String,
    pub action: String,
    pub concrete: Action,
    pub reward: f64,
    /// The action was rewritten by steering before being applied.
    #[serde(default, skip_serializing_if = "is_false")]
    pub steered: bool,
}

/// Reward statistics of one (state, action) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub count: u64,
    pub mean: f64,
    pub best: f64,
    /// Log index of the first experience that reached `best`.
    pub best_index: usize,
}

impl Aggregate {
    fn first(reward: f64, index: usize) -> Self {
        Self { count: 1, mean: reward, best: reward, best_index: index }
    }

    fn add(&mut self, reward: f64, index: usize) {
        self.count += 1;
        self.mean += (reward - self.mean) / self.count as f64;
        if reward > self.best {
            self.best = reward;
            self.best_index = index;
        }
    }
}

/// Persisted form of a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreDocument {
    pub version: u32,
    pub experiences: Vec<Experience>,
    pub trackers: BTreeMap<Subject, QuartileTracker>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperienceStore {
    log: Vec<Experience>,
    by_state: BTreeMap<String, Vec<usize>>,
    aggregates: BTreeMap<String, BTreeMap<String, Aggregate>>,
    /// Parsed state and the log index of its latest occurrence.
    states: BTreeMap<String, (TermSet, usize)>,
    kg: KnowledgeGraph,
    trackers: BTreeMap<Subject, QuartileTracker>,
    sequence: u64,
    sequence_open: bool,
}

impl ExperienceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.log
    }

    pub fn knowledge_graph(&self) -> &KnowledgeGraph {
        &self.kg
    }

    pub fn trackers(&self) -> &BTreeMap<Subject, QuartileTracker> {
        &self.trackers
    }

    /// Replaces the stored quartile tracker snapshot.
    pub fn set_trackers(&mut self, trackers: BTreeMap<Subject, QuartileTracker>) {
        self.trackers = trackers;
    }

    /// Subsequent records belong to a new sequence; the knowledge graph gets
    /// no edge across the boundary.
    pub fn begin_sequence(&mut self) {
        if self.sequence_open {
            self.sequence += 1;
        }
        self.sequence_open = false;
        self.kg.begin_sequence();
    }

    pub fn record_step(
        &mut self,
        state: &TermSet,
        action: &TermSet,
        concrete: Action,
        reward: f64,
        t: u64,
        steered: bool,
    ) -> Result<(), StoreError> {
        if !reward.is_finite() {
            return Err(StoreError::NonFiniteReward { t });
        }
        self.sequence_open = true;
        let exp = Experience {
            t,
            sequence: self.sequence,
            state: state.key(),
            action: action.key(),
            concrete,
            reward,
            steered,
        };
        self.index(exp, Some(state.clone()))
    }

    fn index(&mut self, exp: Experience, parsed: Option<TermSet>) -> Result<(), StoreError> {
        let i = self.log.len();
        let parsed = match parsed {
            Some(p) => p,
            None => TermSet::parse_key(&exp.state)?,
        };
        self.states.insert(exp.state.clone(), (parsed, i));
        self.by_state.entry(exp.state.clone()).or_default().push(i);
        self.aggregates
            .entry(exp.state.clone())
            .or_default()
            .entry(exp.action.clone())
            .and_modify(|a| a.add(exp.reward, i))
            .or_insert_with(|| Aggregate::first(exp.reward, i));
        self.kg.push(exp.action.clone());
        self.log.push(exp);
        Ok(())
    }

    /// Experiences recorded in `state`, ordered by `t` (ties keep recording
    /// order).
    pub fn experiences_for(&self, state: &str) -> Vec<&Experience> {
        let mut out: Vec<&Experience> =
            self.by_state.get(state).map(|ix| ix.iter().map(|&i| &self.log[i]).collect()).unwrap_or_default();
        out.sort_by_key(|e| e.t);
        out
    }

    /// Experiences recorded in `state` with their log indexes, in recording
    /// order.
    pub fn indexed_experiences_for<'a>(&'a self, state: &str) -> impl Iterator<Item = (usize, &'a Experience)> + 'a {
        self.by_state.get(state).into_iter().flatten().map(|&i| (i, &self.log[i]))
    }

    pub fn has_state(&self, state: &str) -> bool {
        self.by_state.contains_key(state)
    }

    pub fn aggregate(&self, state: &str, action: &str) -> Option<&Aggregate> {
        self.aggregates.get(state)?.get(action)
    }

    /// Per-action aggregates recorded in `state`.
    pub fn actions_for(&self, state: &str) -> Option<&BTreeMap<String, Aggregate>> {
        self.aggregates.get(state)
    }

    pub fn mean_reward(&self, state: &str, action: &str) -> Option<f64> {
        self.aggregate(state, action).map(|a| a.mean)
    }

    pub fn experience(&self, index: usize) -> &Experience {
        &self.log[index]
    }

    /// Closest recorded state within `max_distance`, see [`state_distance`].
    /// Ties go to the most recently recorded state.
    pub fn nearest_state(&self, state: &TermSet, max_distance: f64) -> Option<(&str, f64)> {
        self.nearest_state_where(state, max_distance, |_| true)
    }

    /// As [`Self::nearest_state`], restricted to states accepted by `keep`.
    pub fn nearest_state_where(
        &self,
        state: &TermSet,
        max_distance: f64,
        mut keep: impl FnMut(&str) -> bool,
    ) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64, usize)> = None;
        for (key, (parsed, last)) in &self.states {
            if !keep(key) {
                continue;
            }
            let d = state_distance(state, parsed);
            let better = match best {
                None => true,
                Some((_, bd, bl)) => d < bd || (d == bd && *last > bl),
            };
            if better {
                best = Some((key, d, *last));
            }
        }
        best.filter(|&(_, d, _)| d <= max_distance).map(|(k, d, _)| (k, d))
    }

    pub fn to_document(&self) -> StoreDocument {
        StoreDocument { version: STORE_VERSION, experiences: self.log.clone(), trackers: self.trackers.clone() }
    }

    pub fn from_document(doc: StoreDocument) -> Result<Self, StoreError> {
        if doc.version != STORE_VERSION {
            return Err(StoreError::Version { found: doc.version });
        }
        let mut store = Self { trackers: doc.trackers, ..Self::new() };
        let mut current = None;
        for exp in doc.experiences {
            if !exp.reward.is_finite() {
                return Err(StoreError::NonFiniteReward { t: exp.t });
            }
            if current != Some(exp.sequence) {
                if current.is_some_and(|c| exp.sequence < c) {
                    return Err(StoreError::Corrupt("sequence ids decrease".into()));
                }
                store.kg.begin_sequence();
                current = Some(exp.sequence);
            }
            store.sequence = exp.sequence;
            store.sequence_open = true;
            TermSet::parse_key(&exp.action)?;
            store.index(exp, None)?;
        }
        Ok(store)
    }
}

/// Number of shared subjects whose predicates differ, plus a quarter of the
/// ordinal gap between their quartiles (Q1..Q4 = 1..4, MAX = 5).
pub fn state_distance(a: &TermSet, b: &TermSet) -> f64 {
    let mut d = 0.0;
    for term in a.iter() {
        let Some(other) = b.get(term.subject()) else { continue };
        if term.predicate() != other.predicate() {
            d += 1.0;
        }
        if let (Some(q), Some(r)) = (term.quartile(), other.quartile()) {
            d += f64::from(q.ordinal().abs_diff(r.ordinal())) / 4.0;
        }
    }
    d
}
