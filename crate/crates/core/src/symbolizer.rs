//! Conversion of raw steps into symbolic states, actions and effects.
//!
//! Scalar KPIs become `pred(subject,quartile)` terms where the predicate is
//! the direction of change against the previous step and the quartile comes
//! from a per-subject [`QuartileTracker`]. Slicing actions become PRB
//! category transitions plus a `toPolicy` term per slice; schedule masks
//! become one `sched`/`noSched` term per user group.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Action, MimoAction, MimoObservation, Observation, Schema, SchemaA1, SchemaA2, Slice, SliceKpi,
    SliceObservation, SlicingAction, Trajectory, UserKpi,
};
use crate::p2::{QuantileError, QuartileTracker};
use crate::term::{Category, Percentage, Predicate, Subject, SymbolicTerm, TermArgs, TermError, TermSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolizeError {
    #[error("group {0} has no users")]
    EmptyGroup(usize),
    #[error("PRB value {0} outside 0..=50")]
    PrbOutOfRange(u32),
    #[error("observation or action does not match the schema")]
    WrongSchema,
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("unknown vocabulary `{0}`")]
    UnknownVocabulary(String),
}

/// Threshold under which a change counts as `const`:
/// `|cur - prev| <= max(relative * |prev|, floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub relative: f64,
    pub floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { relative: 0.01, floor: 1e-9 }
    }
}

impl Tolerance {
    pub fn direction(&self, prev: f64, cur: f64) -> Predicate {
        let bound = (self.relative * prev.abs()).max(self.floor);
        let diff = cur - prev;
        if diff.abs() <= bound {
            Predicate::Const
        } else if diff > bound {
            Predicate::Inc
        } else {
            Predicate::Dec
        }
    }
}

/// Mean of every (KPI, slice) measurement row, subjects `kpi@slice`.
pub fn aggregate_a1(obs: &SliceObservation) -> Vec<(Subject, f64)> {
    let mut out = Vec::with_capacity(SliceKpi::ALL.len() * Slice::ALL.len());
    for kpi in SliceKpi::ALL {
        for (slice, row) in Slice::ALL.iter().zip(obs.kpi(kpi)) {
            let mean = if row.is_empty() { 0.0 } else { row.iter().sum::<f64>() / row.len() as f64 };
            out.push((Subject::scoped(kpi.as_str(), slice.as_str()), mean));
        }
    }
    out
}

/// Mean of MSE and DTU over the users of every group, subjects `kpi@g<i>`.
pub fn aggregate_a2(obs: &MimoObservation, groups: usize) -> Result<Vec<(Subject, f64)>, SymbolizeError> {
    let members = group_members(&obs.group, groups)?;
    let mut out = Vec::with_capacity(UserKpi::ALL.len() * groups);
    for kpi in UserKpi::ALL {
        let values = obs.kpi(kpi);
        for (g, users) in members.iter().enumerate() {
            let mean = users.iter().map(|&u| values[u]).sum::<f64>() / users.len() as f64;
            out.push((Subject::scoped(kpi.as_str(), &group_id(g)), mean));
        }
    }
    Ok(out)
}

fn group_members(assignment: &[u32], groups: usize) -> Result<Vec<Vec<usize>>, SymbolizeError> {
    let mut members = alloc::vec![Vec::new(); groups];
    for (user, &g) in assignment.iter().enumerate() {
        members.get_mut(g as usize).ok_or(SymbolizeError::WrongSchema)?.push(user);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(SymbolizeError::EmptyGroup(empty));
    }
    Ok(members)
}

pub fn group_id(g: usize) -> String {
    format!("g{g}")
}

/// Term for one scalar subject. The tracker must already contain `cur`.
pub fn symbolize_scalar(
    subject: Subject,
    prev: f64,
    cur: f64,
    tracker: &QuartileTracker,
    tolerance: &Tolerance,
) -> Result<SymbolicTerm, SymbolizeError> {
    let quartile = tracker.quartile_of(cur)?;
    Ok(SymbolicTerm::new(tolerance.direction(prev, cur), subject, TermArgs::Quartile(quartile))?)
}

/// Category `Ci` with `[(i-1)*5, i*5)`; the upper end 50 falls in C10.
pub fn prb_category(prb: u32) -> Result<Category, SymbolizeError> {
    if prb > SchemaA1::PRB_TOTAL {
        return Err(SymbolizeError::PrbOutOfRange(prb));
    }
    let index = (prb / SchemaA1::CATEGORY_WIDTH + 1).min(u32::from(Category::COUNT));
    Ok(Category::new(index as u8).expect("index within 1..=10"))
}

/// Symbolic slicing action. Without a previous action every slice is
/// compared against a neutral allocation of 0 PRBs.
pub fn symbolize_action_a1(prev: Option<&SlicingAction>, cur: &SlicingAction) -> Result<TermSet, SymbolizeError> {
    let mut set = TermSet::new();
    for (i, slice) in Slice::ALL.iter().enumerate() {
        let now = *cur.prb.get(i).ok_or(SymbolizeError::WrongSchema)?;
        let before = prev.and_then(|p| p.prb.get(i).copied()).unwrap_or(0);
        let (c_before, c_now) = (prb_category(before)?, prb_category(now)?);
        let subject = Subject::scoped("PRB", slice.as_str());
        let term = match now.cmp(&before) {
            core::cmp::Ordering::Equal => SymbolicTerm::new(Predicate::Const, subject, TermArgs::Category(c_now))?,
            core::cmp::Ordering::Greater => {
                SymbolicTerm::new(Predicate::Inc, subject, TermArgs::Transition(c_before, c_now))?
            }
            core::cmp::Ordering::Less => {
                SymbolicTerm::new(Predicate::Dec, subject, TermArgs::Transition(c_before, c_now))?
            }
        };
        set.insert(term)?;
        let policy = *cur.policy.get(i).ok_or(SymbolizeError::WrongSchema)?;
        set.insert(SymbolicTerm::new(Predicate::To(policy), Subject::scoped("sched", slice.as_str()), TermArgs::None)?)?;
    }
    Ok(set)
}

/// Symbolic schedule: `noSched(g)` for groups with nobody scheduled, else
/// `sched(g, quartile of the scheduled count, percentage)`. Each group's
/// count is observed by its tracker (MAX enabled) before labeling.
pub fn symbolize_action_a2(
    mask: &MimoAction,
    assignment: &[u32],
    groups: usize,
    count_trackers: &mut BTreeMap<Subject, QuartileTracker>,
) -> Result<TermSet, SymbolizeError> {
    let members = group_members(assignment, groups)?;
    let mut set = TermSet::new();
    for (g, users) in members.iter().enumerate() {
        let subject = Subject::new(group_id(g))?;
        let count = users.iter().filter(|&&u| mask.is_scheduled(u)).count();
        let tracker = count_trackers.entry(subject.clone()).or_insert_with(|| QuartileTracker::new(true));
        let quartile = tracker.observe_and_label(count as f64)?;
        let term = if count == 0 {
            SymbolicTerm::new(Predicate::NoSched, subject, TermArgs::None)?
        } else {
            let pct = Percentage::nearest(count, users.len());
            SymbolicTerm::new(Predicate::Sched, subject, TermArgs::Schedule(quartile, pct))?
        };
        set.insert(term)?;
    }
    Ok(set)
}

/// Everything the symbolizer remembers between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolizerState {
    schema: Schema,
    tolerance: Tolerance,
    trackers: BTreeMap<Subject, QuartileTracker>,
    #[serde(skip)]
    prev_values: BTreeMap<Subject, f64>,
    #[serde(skip)]
    prev_action: Option<Action>,
    #[serde(skip)]
    assignment: Option<Vec<u32>>,
}

impl SymbolizerState {
    pub fn new(schema: Schema, tolerance: Tolerance) -> Self {
        Self {
            schema,
            tolerance,
            trackers: BTreeMap::new(),
            prev_values: BTreeMap::new(),
            prev_action: None,
            assignment: None,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tolerance
    }

    pub fn set_tolerance(&mut self, tolerance: Tolerance) {
        self.tolerance = tolerance;
    }

    pub fn trackers(&self) -> &BTreeMap<Subject, QuartileTracker> {
        &self.trackers
    }

    pub fn from_trackers(schema: Schema, tolerance: Tolerance, trackers: BTreeMap<Subject, QuartileTracker>) -> Self {
        Self { trackers, ..Self::new(schema, tolerance) }
    }

    /// Starts a new sequence: the next step compares against the neutral
    /// baseline again. Quartile trackers keep their history.
    pub fn begin_sequence(&mut self) {
        self.prev_values.clear();
        self.prev_action = None;
    }

    /// Forgets quartile history too.
    pub fn reset_trackers(&mut self) {
        self.trackers.clear();
        self.begin_sequence();
    }

    fn max_label(schema: &Schema, subject: &Subject) -> bool {
        matches!(schema, Schema::A2(_)) && subject.variable() == UserKpi::Dtu.as_str()
    }

    /// Symbolic state of an observation. The first state of a sequence is
    /// compared against 0 for every subject.
    pub fn symbolize_state(&mut self, obs: &Observation) -> Result<TermSet, SymbolizeError> {
        let values = match (&self.schema, obs) {
            (Schema::A1(_), Observation::Slicing(o)) => aggregate_a1(o),
            (Schema::A2(s), Observation::Mimo(o)) => {
                let v = aggregate_a2(o, s.groups())?;
                self.assignment = Some(o.group.clone());
                v
            }
            _ => return Err(SymbolizeError::WrongSchema),
        };
        let mut set = TermSet::new();
        for (subject, cur) in values {
            let schema = &self.schema;
            let tracker = self
                .trackers
                .entry(subject.clone())
                .or_insert_with(|| QuartileTracker::new(Self::max_label(schema, &subject)));
            tracker.observe(cur)?;
            let prev = self.prev_values.get(&subject).copied().unwrap_or(0.0);
            set.insert(symbolize_scalar(subject.clone(), prev, cur, tracker, &self.tolerance)?)?;
            self.prev_values.insert(subject, cur);
        }
        Ok(set)
    }

    /// Symbolic action; updates the count trackers and the previous action.
    pub fn symbolize_action(&mut self, action: &Action) -> Result<TermSet, SymbolizeError> {
        let set = match (&self.schema, action) {
            (Schema::A1(_), Action::Slicing(a)) => {
                let prev = match &self.prev_action {
                    Some(Action::Slicing(p)) => Some(p),
                    _ => None,
                };
                symbolize_action_a1(prev, a)?
            }
            (Schema::A2(s), Action::Mimo(m)) => {
                let assignment = self.assignment.clone().unwrap_or_else(|| s.assignment());
                symbolize_action_a2(m, &assignment, s.groups(), &mut self.trackers)?
            }
            _ => return Err(SymbolizeError::WrongSchema),
        };
        self.prev_action = Some(action.clone());
        Ok(set)
    }

    /// Symbolic action as [`Self::symbolize_action`] would produce it, without
    /// changing any state.
    pub fn preview_action(&self, action: &Action) -> Result<TermSet, SymbolizeError> {
        self.clone().symbolize_action(action)
    }
}

/// One symbolized step. `effect` is the symbolic state of the next step and
/// is empty on the last step of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicRecord {
    pub t: u64,
    #[serde(rename = "state_terms")]
    pub state: TermSet,
    #[serde(rename = "action_terms")]
    pub action: TermSet,
    #[serde(rename = "effect_terms")]
    pub effect: TermSet,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl SymbolicRecord {
    pub fn effect(&self) -> Option<&TermSet> {
        (!self.effect.is_empty()).then_some(&self.effect)
    }
}

/// Symbolizes a whole trajectory as one sequence.
pub fn symbolize_trajectory(
    trajectory: &Trajectory,
    state: &mut SymbolizerState,
) -> Result<Vec<SymbolicRecord>, SymbolizeError> {
    if trajectory.schema() != state.schema() {
        return Err(SymbolizeError::WrongSchema);
    }
    state.begin_sequence();
    let mut records: Vec<SymbolicRecord> = Vec::with_capacity(trajectory.len());
    for step in trajectory.steps() {
        let sym_state = state.symbolize_state(&step.state)?;
        let sym_action = state.symbolize_action(&step.action)?;
        if let Some(prev) = records.last_mut() {
            prev.effect = sym_state.clone();
        }
        records.push(SymbolicRecord {
            t: step.t,
            state: sym_state,
            action: sym_action,
            effect: TermSet::new(),
            meta: step.meta.clone(),
        });
    }
    Ok(records)
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

/// Closed-form count of distinct actions for an agent vocabulary:
///
/// - `A1-explora`: raw slicing actions, `C(PRB-1, 2) * |SP|^|L|`
/// - `A2-explora`: raw schedule masks, `2^N`
/// - `A1-symb`: `|L| * |Pred| * |C| * |toPolicy|` with ten PRB categories
/// - `A2-symb`: `|G| * |Q| * |Percentage|` for the default three groups
pub fn vocabulary_size(id: &str) -> Result<u64, SymbolizeError> {
    let slices = Slice::ALL.len() as u64;
    let policies = crate::term::Policy::ALL.len() as u64;
    match id {
        "A1-explora" => Ok(binomial(u64::from(SchemaA1::PRB_TOTAL) - 1, 2) * policies.pow(slices as u32)),
        "A2-explora" => Ok(1 << SchemaA2::USERS),
        "A1-symb" => Ok(slices * 3 * u64::from(Category::COUNT) * policies),
        "A2-symb" => Ok(SchemaA2::default().groups() as u64
            * crate::term::Quartile::ALL.len() as u64
            * Percentage::GRID.len() as u64),
        other => Err(SymbolizeError::UnknownVocabulary(other.into())),
    }
}

impl Serialize for Subject {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Subject {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Subject::new(String::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_trajectory, Policy, Step};
    use alloc::vec;

    fn tracker_after(values: &[f64]) -> QuartileTracker {
        let mut t = QuartileTracker::new(false);
        for &v in values {
            t.observe(v).unwrap();
        }
        t
    }

    #[test]
    fn a1_means() {
        let row = |v: f64| vec![vec![v; 10]; 3];
        let obs = SliceObservation { tx_brate: row(4.0), tx_pkts: row(0.0), dl_buffer: row(1.5) };
        let agg = aggregate_a1(&obs);
        assert_eq!(agg.len(), 9);
        assert_eq!(agg[0], (Subject::new("tx_brate@embb").unwrap(), 4.0));
        assert_eq!(agg[3].1, 0.0);
        assert_eq!(agg[8], (Subject::new("dl_buffer@urllc").unwrap(), 1.5));
    }

    #[test]
    fn a2_group_means() {
        let obs = MimoObservation { mse: vec![0.2, 0.4, 1.0], dtu: vec![1.0, 3.0, 5.0], group: vec![0, 0, 1] };
        let agg = aggregate_a2(&obs, 2).unwrap();
        assert_eq!(agg.len(), 4);
        assert!((agg[0].1 - 0.3).abs() < 1e-12);
        assert_eq!(agg[0].0.as_str(), "MSE@g0");
        assert_eq!(agg[3], (Subject::new("DTU@g1").unwrap(), 5.0));
        assert_eq!(aggregate_a2(&obs, 3), Err(SymbolizeError::EmptyGroup(2)));
    }

    #[test]
    fn scalar_direction_and_quartile() {
        let tol = Tolerance::default();
        let subject = Subject::new("x").unwrap();
        let tracker = tracker_after(&[5.0, 5.0, 10.0, 12.0, 15.0, 20.0]);
        let q = tracker.quartile_of(12.0).unwrap();
        let term = symbolize_scalar(subject.clone(), 10.0, 12.0, &tracker, &tol).unwrap();
        assert_eq!(term.predicate(), Predicate::Inc);
        assert_eq!(term.quartile(), Some(q));
        let term = symbolize_scalar(subject.clone(), 10.0, 10.0, &tracker, &tol).unwrap();
        assert_eq!(term.predicate(), Predicate::Const);
        assert_eq!(term.quartile(), Some(tracker.quartile_of(10.0).unwrap()));
        let term = symbolize_scalar(subject, 10.0, 9.0, &tracker, &tol).unwrap();
        assert_eq!(term.predicate(), Predicate::Dec);
        assert_eq!(tol.direction(0.0, 1e-12), Predicate::Const);
        assert_eq!(tol.direction(0.0, 1e-8), Predicate::Inc);
        assert_eq!(tol.direction(10.0, 10.1), Predicate::Const);
    }

    #[test]
    fn prb_categories() {
        assert_eq!(prb_category(12).unwrap().index(), 3);
        assert_eq!(prb_category(23).unwrap().index(), 5);
        assert_eq!(prb_category(40).unwrap().index(), 9);
        assert_eq!(prb_category(0).unwrap().index(), 1);
        assert_eq!(prb_category(49).unwrap().index(), 10);
        assert_eq!(prb_category(50).unwrap().index(), 10);
        assert_eq!(prb_category(51), Err(SymbolizeError::PrbOutOfRange(51)));
    }

    fn slicing(prb: [u32; 3], policy: [Policy; 3]) -> SlicingAction {
        SlicingAction { prb: prb.to_vec(), policy: policy.to_vec() }
    }

    #[test]
    fn a1_action_terms() {
        let prev = slicing([12, 40, 10], [Policy::Wf; 3]);
        let cur = slicing([23, 40, 5], [Policy::Pf, Policy::Wf, Policy::Rr]);
        let set = symbolize_action_a1(Some(&prev), &cur).unwrap();
        assert_eq!(
            set.key(),
            "inc(PRB@embb,C3,C5)&const(PRB@mmtc,C9)&dec(PRB@urllc,C3,C2)&toPF(sched@embb)&toWF(sched@mmtc)&toRR(sched@urllc)"
        );
        let first = symbolize_action_a1(None, &cur).unwrap();
        assert_eq!(first.get_str("PRB@mmtc").unwrap().render(), "inc(PRB@mmtc,C1,C9)");
        assert!(symbolize_action_a1(None, &slicing([60, 1, 1], [Policy::Wf; 3])).is_err());
    }

    #[test]
    fn a2_action_terms() {
        let assignment = [0, 0, 0, 1, 1, 2, 2];
        let mut trackers = BTreeMap::new();
        // Warm the g0 tracker so a count of 2 is its running max.
        let mask = MimoAction::from_users(7, [0, 1, 5, 6]);
        let set = symbolize_action_a2(&mask, &assignment, 3, &mut trackers).unwrap();
        assert_eq!(set.get_str("g0").unwrap().render(), "sched(g0,MAX,75)");
        assert_eq!(set.get_str("g1").unwrap().render(), "noSched(g1)");
        assert_eq!(set.get_str("g2").unwrap().render(), "sched(g2,MAX,100)");
        assert_eq!(trackers.len(), 3);
        assert!(trackers.values().all(|t| t.count() == 1));
    }

    #[test]
    fn vocabulary_sizes() {
        assert_eq!(vocabulary_size("A1-explora").unwrap(), 31_752);
        assert_eq!(vocabulary_size("A2-explora").unwrap(), 128);
        assert_eq!(vocabulary_size("A2-symb").unwrap(), 75);
        assert_eq!(vocabulary_size("A1-symb").unwrap(), 270);
        assert!(vocabulary_size("A3").is_err());
    }

    fn constant_a2_steps(n: u64) -> Vec<Step> {
        (0..n)
            .map(|t| Step {
                t,
                state: Observation::Mimo(MimoObservation {
                    mse: vec![0.3; 7],
                    dtu: vec![2.0; 7],
                    group: SchemaA2::default().assignment(),
                }),
                action: Action::Mimo(MimoAction::from_users(7, [0, 3])),
                reward: 1.0,
                meta: BTreeMap::new(),
            })
            .collect()
    }

    #[test]
    fn trajectory_counts_and_constancy() {
        let schema = Schema::A2(SchemaA2::default());
        let traj = validate_trajectory(constant_a2_steps(5), &schema).unwrap();
        let mut state = SymbolizerState::new(schema.clone(), Tolerance::default());
        let records = symbolize_trajectory(&traj, &mut state).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(records.iter().filter(|r| r.effect().is_some()).count(), 4);
        for r in &records[1..] {
            assert!(r.state.iter().all(|t| t.predicate() == Predicate::Const), "{}", r.state.key());
        }
        assert_eq!(records[0].effect.key(), records[1].state.key());
    }

    #[test]
    fn preview_does_not_mutate() {
        let schema = Schema::A2(SchemaA2::default());
        let mut state = SymbolizerState::new(schema, Tolerance::default());
        let action = Action::Mimo(MimoAction::from_users(7, [0]));
        let before = state.clone();
        let preview = state.preview_action(&action).unwrap();
        assert_eq!(state, before);
        assert_eq!(state.symbolize_action(&action).unwrap(), preview);
    }

}
