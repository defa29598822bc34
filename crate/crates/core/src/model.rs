//! Raw trace data model and the two agent schemas.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::term::Policy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trajectory is empty")]
    Empty,
    #[error("step {index}: `{field}` has length {found}, expected {expected}")]
    DimensionMismatch { index: usize, field: &'static str, expected: usize, found: usize },
    #[error("step {index}: timestep not strictly increasing")]
    NonMonotone { index: usize },
    #[error("step {index}: non-finite value in `{field}`")]
    NonFinite { index: usize, field: &'static str },
    #[error("step {index}: `{field}` value out of range")]
    OutOfRange { index: usize, field: &'static str },
    #[error("step {index}: record does not match the schema")]
    WrongSchema { index: usize },
}

/// A RAN slice of the slicing agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slice {
    Embb,
    Mmtc,
    Urllc,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Self::Embb, Self::Mmtc, Self::Urllc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Embb => "embb",
            Self::Mmtc => "mmtc",
            Self::Urllc => "urllc",
        }
    }
}

/// Per-slice KPIs: tx_brate in Mbps, tx_pkts in packets, dl_buffer in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SliceKpi {
    TxBrate,
    TxPkts,
    DlBuffer,
}

impl SliceKpi {
    pub const ALL: [SliceKpi; 3] = [Self::TxBrate, Self::TxPkts, Self::DlBuffer];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TxBrate => "tx_brate",
            Self::TxPkts => "tx_pkts",
            Self::DlBuffer => "dl_buffer",
        }
    }
}

/// Per-user KPIs of the MIMO scheduler that are averaged per group.
/// The group id `G` is the grouping key and is not averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UserKpi {
    /// Channel-estimation error proxy, dimensionless.
    Mse,
    /// Timeslots since the user was last scheduled.
    Dtu,
}

impl UserKpi {
    pub const ALL: [UserKpi; 2] = [Self::Mse, Self::Dtu];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mse => "MSE",
            Self::Dtu => "DTU",
        }
    }
}

/// RAN slicing and scheduling agent: 3 slices, 3 KPIs, 10 measurements per
/// step, 50 PRBs split into ten categories of width 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaA1;

impl SchemaA1 {
    pub const MEASUREMENTS: usize = 10;
    pub const PRB_TOTAL: u32 = 50;
    pub const CATEGORY_WIDTH: u32 = 5;
}

/// Massive-MIMO user scheduler: 7 users split into correlated groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaA2 {
    group_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("group sizes must be non-empty and sum to {expected}, got {found}")]
    GroupSizes { expected: usize, found: usize },
}

impl SchemaA2 {
    pub const USERS: usize = 7;

    pub fn new(group_sizes: Vec<usize>) -> Result<Self, SchemaError> {
        let total: usize = group_sizes.iter().sum();
        if total != Self::USERS || group_sizes.contains(&0) {
            return Err(SchemaError::GroupSizes { expected: Self::USERS, found: total });
        }
        Ok(Self { group_sizes })
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn groups(&self) -> usize {
        self.group_sizes.len()
    }

    /// Users of group `g` under contiguous assignment (group 0 takes the
    /// first `sizes[0]` users, and so on).
    pub fn members(&self, group: usize) -> Option<core::ops::Range<usize>> {
        let start: usize = self.group_sizes.get(..group)?.iter().sum();
        let size = *self.group_sizes.get(group)?;
        Some(start..start + size)
    }

    /// Group id of every user, in user order.
    pub fn assignment(&self) -> Vec<u32> {
        self.group_sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &n)| core::iter::repeat_n(g as u32, n))
            .collect()
    }
}

impl Default for SchemaA2 {
    fn default() -> Self {
        Self { group_sizes: vec![3, 2, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schema {
    A1(SchemaA1),
    A2(SchemaA2),
}

/// Per-slice KPI measurements, indexed `[slice][measurement]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceObservation {
    pub tx_brate: Vec<Vec<f64>>,
    pub tx_pkts: Vec<Vec<f64>>,
    pub dl_buffer: Vec<Vec<f64>>,
}

impl SliceObservation {
    pub fn kpi(&self, kpi: SliceKpi) -> &[Vec<f64>] {
        match kpi {
            SliceKpi::TxBrate => &self.tx_brate,
            SliceKpi::TxPkts => &self.tx_pkts,
            SliceKpi::DlBuffer => &self.dl_buffer,
        }
    }
}

/// Per-user KPIs of the MIMO scheduler, indexed by user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimoObservation {
    #[serde(rename = "MSE")]
    pub mse: Vec<f64>,
    #[serde(rename = "DTU")]
    pub dtu: Vec<f64>,
    #[serde(rename = "G")]
    pub group: Vec<u32>,
}

impl MimoObservation {
    pub fn kpi(&self, kpi: UserKpi) -> &[f64] {
        match kpi {
            UserKpi::Mse => &self.mse,
            UserKpi::Dtu => &self.dtu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Slicing(SliceObservation),
    Mimo(MimoObservation),
}

/// PRB count and scheduling policy per slice.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlicingAction {
    pub prb: Vec<u32>,
    pub policy: Vec<Policy>,
}

/// Binary schedule mask, one 0/1 entry per user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MimoAction {
    pub mask: Vec<u8>,
}

impl MimoAction {
    pub fn from_users(n: usize, users: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = vec![0; n];
        for u in users {
            mask[u] = 1;
        }
        Self { mask }
    }

    /// Mask with bit `u` of `index` scheduling user `u`.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self { mask: (0..n).map(|u| ((index >> u) & 1) as u8).collect() }
    }

    pub fn index(&self) -> usize {
        self.mask.iter().enumerate().map(|(u, &b)| usize::from(b != 0) << u).sum()
    }

    pub fn is_scheduled(&self, user: usize) -> bool {
        self.mask.get(user).is_some_and(|&b| b != 0)
    }

    pub fn scheduled(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b != 0).map(|(u, _)| u)
    }

    pub fn set(&mut self, user: usize, on: bool) {
        self.mask[user] = u8::from(on);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Slicing(SlicingAction),
    Mimo(MimoAction),
}

impl Action {
    pub fn as_mimo(&self) -> Option<&MimoAction> {
        match self {
            Self::Mimo(a) => Some(a),
            Self::Slicing(_) => None,
        }
    }
}

/// One timestep: observed state, the action taken in it and its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: u64,
    pub state: Observation,
    pub action: Action,
    pub reward: f64,
    /// Free-form labels such as channel condition or mobility profile.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

/// A validated, non-empty sequence of steps for one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    schema: Schema,
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn into_steps(self) -> Vec<Step> {
        self.steps
    }
}

/// Checks every step against `schema` and returns the trajectory, or the
/// first violation with the index of the offending step.
pub fn validate_trajectory(steps: Vec<Step>, schema: &Schema) -> Result<Trajectory, TraceError> {
    if steps.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut prev_t = None;
    for (index, step) in steps.iter().enumerate() {
        if prev_t.is_some_and(|p| step.t <= p) {
            return Err(TraceError::NonMonotone { index });
        }
        prev_t = Some(step.t);
        validate_step(index, step, schema)?;
    }
    Ok(Trajectory { schema: schema.clone(), steps })
}

/// Validates a single step in isolation.
pub fn validate_step(index: usize, step: &Step, schema: &Schema) -> Result<(), TraceError> {
    if !step.reward.is_finite() {
        return Err(TraceError::NonFinite { index, field: "reward" });
    }
    match (schema, &step.state, &step.action) {
        (Schema::A1(_), Observation::Slicing(obs), Action::Slicing(action)) => {
            for kpi in SliceKpi::ALL {
                let rows = obs.kpi(kpi);
                check_len(index, kpi.as_str(), Slice::ALL.len(), rows.len())?;
                for row in rows {
                    check_len(index, kpi.as_str(), SchemaA1::MEASUREMENTS, row.len())?;
                    check_finite(index, kpi.as_str(), row)?;
                }
            }
            check_len(index, "prb", Slice::ALL.len(), action.prb.len())?;
            check_len(index, "policy", Slice::ALL.len(), action.policy.len())?;
            if action.prb.iter().any(|&p| p > SchemaA1::PRB_TOTAL) {
                return Err(TraceError::OutOfRange { index, field: "prb" });
            }
            Ok(())
        }
        (Schema::A2(schema), Observation::Mimo(obs), Action::Mimo(action)) => {
            let n = SchemaA2::USERS;
            check_len(index, "MSE", n, obs.mse.len())?;
            check_len(index, "DTU", n, obs.dtu.len())?;
            check_len(index, "G", n, obs.group.len())?;
            check_len(index, "mask", n, action.mask.len())?;
            check_finite(index, "MSE", &obs.mse)?;
            check_finite(index, "DTU", &obs.dtu)?;
            if obs.group.iter().any(|&g| g as usize >= schema.groups()) {
                return Err(TraceError::OutOfRange { index, field: "G" });
            }
            if action.mask.iter().any(|&b| b > 1) {
                return Err(TraceError::OutOfRange { index, field: "mask" });
            }
            Ok(())
        }
        _ => Err(TraceError::WrongSchema { index }),
    }
}

fn check_len(index: usize, field: &'static str, expected: usize, found: usize) -> Result<(), TraceError> {
    if expected == found {
        Ok(())
    } else {
        Err(TraceError::DimensionMismatch { index, field, expected, found })
    }
}

fn check_finite(index: usize, field: &'static str, values: &[f64]) -> Result<(), TraceError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TraceError::NonFinite { index, field })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a2_step(t: u64, mask: Vec<u8>) -> Step {
        Step {
            t,
            state: Observation::Mimo(MimoObservation {
                mse: vec![0.1; 7],
                dtu: vec![0.0; 7],
                group: SchemaA2::default().assignment(),
            }),
            action: Action::Mimo(MimoAction { mask }),
            reward: 1.0,
            meta: BTreeMap::new(),
        }
    }

    fn a2() -> Schema {
        Schema::A2(SchemaA2::default())
    }

    #[test]
    fn accepts_well_formed_a2_steps() {
        let steps = (0..3).map(|t| a2_step(t, vec![1, 0, 0, 1, 0, 0, 1])).collect();
        assert_eq!(validate_trajectory(steps, &a2()).unwrap().len(), 3);
    }

    #[test]
    fn rejects_short_mask_at_its_index() {
        let steps = vec![a2_step(0, vec![0; 7]), a2_step(1, vec![0; 6])];
        assert_eq!(
            validate_trajectory(steps, &a2()),
            Err(TraceError::DimensionMismatch { index: 1, field: "mask", expected: 7, found: 6 })
        );
    }

    #[test]
    fn rejects_repeated_timestep() {
        let steps = vec![a2_step(0, vec![0; 7]), a2_step(0, vec![0; 7]), a2_step(1, vec![0; 7])];
        assert_eq!(validate_trajectory(steps, &a2()), Err(TraceError::NonMonotone { index: 1 }));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let mut step = a2_step(0, vec![0; 7]);
        step.reward = f64::NAN;
        assert_eq!(
            validate_trajectory(vec![step], &a2()),
            Err(TraceError::NonFinite { index: 0, field: "reward" })
        );
        assert_eq!(validate_trajectory(Vec::new(), &a2()), Err(TraceError::Empty));
    }

    #[test]
    fn rejects_schema_mismatch() {
        assert_eq!(
            validate_trajectory(vec![a2_step(0, vec![0; 7])], &Schema::A1(SchemaA1)),
            Err(TraceError::WrongSchema { index: 0 })
        );
    }

    #[test]
    fn group_membership_is_contiguous() {
        let schema = SchemaA2::default();
        assert_eq!(schema.members(0), Some(0..3));
        assert_eq!(schema.members(2), Some(5..7));
        assert_eq!(schema.members(3), None);
        assert_eq!(schema.assignment(), vec![0, 0, 0, 1, 1, 2, 2]);
        assert!(SchemaA2::new(vec![3, 3]).is_err());
        assert!(SchemaA2::new(vec![7, 0]).is_err());
    }

    #[test]
    fn mask_index_round_trips() {
        for i in 0..128 {
            assert_eq!(MimoAction::from_index(i, 7).index(), i);
        }
        let a = MimoAction::from_users(7, [1, 6]);
        assert_eq!(a.scheduled().collect::<Vec<_>>(), vec![1, 6]);
    }
}
