//! Intent-based action steering: per-step rewriting of agent actions from
//! recorded experience.
//!
//! In reward-maximization mode the proposed action is replaced by the
//! concrete action of the best-rewarded symbolic action previously taken in
//! the same (or a similar) symbolic state. Conditioning mode does the same
//! among actions that satisfy the active intents, replacing violating
//! proposals with the best satisfying experience, and forcing the proposal
//! into compliance when no such experience exists.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::{check_consistency, Intent, IntentError};
use crate::model::{Action, MimoAction, Observation, Step};
use crate::store::{Aggregate, ExperienceStore, StoreError};
use crate::symbolizer::{SymbolizeError, SymbolizerState};
use crate::term::TermSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteeringError {
    #[error("invalid steering config: {0}")]
    Config(String),
    #[error(transparent)]
    Intent(#[from] IntentError),
    #[error(transparent)]
    Symbolize(#[from] SymbolizeError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteeringMode {
    Off,
    RewardMax,
    Condition,
    /// Reward maximization over a store built during the same episode.
    Accel,
    /// Baseline: edit violating proposals into compliance, nothing else.
    Force,
}

impl core::str::FromStr for SteeringMode {
    type Err = SteeringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "off" => Self::Off,
            "reward-max" => Self::RewardMax,
            "condition" => Self::Condition,
            "accel" => Self::Accel,
            "force" => Self::Force,
            other => return Err(SteeringError::Config(alloc::format!("unknown mode `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringConfig {
    pub mode: SteeringMode,
    /// Steering starts at `t >= start_fraction * horizon`.
    pub start_fraction: f64,
    /// Required margin of the replacement's mean reward over the proposal's.
    pub delta: f64,
    /// Maximum distance for the similar-state fallback; `None` disables it.
    pub fallback_distance: Option<f64>,
    pub intents: Vec<Intent>,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            mode: SteeringMode::RewardMax,
            start_fraction: 0.0,
            delta: 0.0,
            fallback_distance: Some(1.0),
            intents: Vec::new(),
        }
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<(), SteeringError> {
        if !(0.0..=1.0).contains(&self.start_fraction) {
            return Err(SteeringError::Config("start fraction must lie in [0, 1]".into()));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(SteeringError::Config("delta must be finite and non-negative".into()));
        }
        if self.fallback_distance.is_some_and(|d| !(d >= 0.0)) {
            return Err(SteeringError::Config("fallback distance must be non-negative".into()));
        }
        check_consistency(&self.intents)?;
        Ok(())
    }

    fn active_intents(&self, t: u64) -> Vec<&Intent> {
        self.intents.iter().filter(|i| i.is_active(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    /// Steering was not active at this step.
    Inactive,
    /// No recorded estimate for the proposed action in the matched state.
    NoRecord,
    /// The proposal is already the best recorded option.
    NoBetter,
    BetterKnown,
    Constraint,
    FallbackForced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringDecision {
    pub t: u64,
    pub proposed: Action,
    pub applied: Action,
    pub replaced: bool,
    pub reason: Reason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_state: Option<String>,
    pub est_proposed: Option<f64>,
    pub est_applied: Option<f64>,
}

impl SteeringDecision {
    fn keep(t: u64, proposed: &Action, reason: Reason) -> Self {
        Self {
            t,
            proposed: proposed.clone(),
            applied: proposed.clone(),
            replaced: false,
            reason,
            matched_state: None,
            est_proposed: None,
            est_applied: None,
        }
    }
}

fn admits(intents: &[&Intent], action: &Action, t: u64) -> bool {
    match action {
        Action::Mimo(m) => intents.iter().all(|i| i.satisfies(m, t)),
        Action::Slicing(_) => true,
    }
}

/// Minimal edit of `proposed` satisfying the active intents: clears users
/// that must not be scheduled and sets users that must be.
pub fn direct_force(proposed: &MimoAction, intents: &[&Intent]) -> Result<MimoAction, SteeringError> {
    let mut required = BTreeMap::new();
    for (user, scheduled) in intents.iter().flat_map(|i| i.literals()) {
        if *required.entry(user).or_insert(scheduled) != scheduled {
            return Err(IntentError::Conflict { user }.into());
        }
    }
    let mut out = proposed.clone();
    for (user, scheduled) in required {
        out.set(user, scheduled);
    }
    Ok(out)
}

/// Per-action aggregates in `state` over experiences accepted by `keep`,
/// accumulated in recording order exactly as the store does.
fn filtered_aggregates(
    store: &ExperienceStore,
    state: &str,
    mut keep: impl FnMut(&Action) -> bool,
) -> BTreeMap<String, Aggregate> {
    let mut out: BTreeMap<String, Aggregate> = BTreeMap::new();
    for (i, exp) in store.indexed_experiences_for(state) {
        if !keep(&exp.concrete) {
            continue;
        }
        out.entry(exp.action.clone())
            .and_modify(|a| {
                a.count += 1;
                a.mean += (exp.reward - a.mean) / a.count as f64;
                if exp.reward > a.best {
                    a.best = exp.reward;
                    a.best_index = i;
                }
            })
            .or_insert(Aggregate { count: 1, mean: exp.reward, best: exp.reward, best_index: i });
    }
    out
}

fn argmax_mean(candidates: &BTreeMap<String, Aggregate>) -> Option<(&String, &Aggregate)> {
    candidates.iter().fold(None, |best, (k, a)| match best {
        Some((_, b)) if b.mean >= a.mean => best,
        _ => Some((k, a)),
    })
}

/// Reward-maximizing steering over the store's records for `state`.
pub fn steer_reward_max(
    store: &ExperienceStore,
    state: &TermSet,
    proposed: &Action,
    proposed_key: &str,
    config: &SteeringConfig,
    t: u64,
) -> SteeringDecision {
    steer_restricted(store, state, proposed, proposed_key, config, t, &[])
}

fn steer_restricted(
    store: &ExperienceStore,
    state: &TermSet,
    proposed: &Action,
    proposed_key: &str,
    config: &SteeringConfig,
    t: u64,
    intents: &[&Intent],
) -> SteeringDecision {
    let key = state.key();
    let matched = if store.has_state(&key) {
        Some(key)
    } else {
        config
            .fallback_distance
            .and_then(|d| store.nearest_state(state, d))
            .map(|(k, _)| k.to_string())
    };
    let Some(matched) = matched else {
        return SteeringDecision::keep(t, proposed, Reason::NoRecord);
    };
    let owned;
    let candidates = if intents.is_empty() {
        store.actions_for(&matched).expect("matched state has records")
    } else {
        owned = filtered_aggregates(store, &matched, |a| admits(intents, a, t));
        &owned
    };
    let mut decision = SteeringDecision::keep(t, proposed, Reason::NoRecord);
    decision.matched_state = Some(matched.clone());
    let Some(current) = candidates.get(proposed_key) else {
        return decision;
    };
    decision.est_proposed = Some(current.mean);
    decision.est_applied = Some(current.mean);
    decision.reason = Reason::NoBetter;
    if let Some((best_key, best)) = argmax_mean(candidates) {
        if best_key != proposed_key && best.mean > current.mean + config.delta {
            decision.applied = store.experience(best.best_index).concrete.clone();
            decision.replaced = decision.applied != *proposed;
            decision.reason = Reason::BetterKnown;
            decision.est_applied = Some(best.mean);
        }
    }
    decision
}

/// Steering under the intents of `config` active at `t`.
pub fn steer_conditioned(
    store: &ExperienceStore,
    state: &TermSet,
    proposed: &Action,
    proposed_key: &str,
    config: &SteeringConfig,
    t: u64,
) -> Result<SteeringDecision, SteeringError> {
    let active = config.active_intents(t);
    if admits(&active, proposed, t) {
        return Ok(steer_restricted(store, state, proposed, proposed_key, config, t, &active));
    }
    let satisfying_state = |key: &str| store.indexed_experiences_for(key).any(|(_, e)| admits(&active, &e.concrete, t));
    let key = state.key();
    let matched = if satisfying_state(&key) {
        Some(key)
    } else {
        config
            .fallback_distance
            .and_then(|d| store.nearest_state_where(state, d, satisfying_state))
            .map(|(k, _)| k.to_string())
    };
    if let Some(matched) = matched {
        let candidates = filtered_aggregates(store, &matched, |a| admits(&active, a, t));
        let best = candidates
            .values()
            .fold(None::<&Aggregate>, |acc, a| match acc {
                Some(b) if b.best >= a.best => acc,
                _ => Some(a),
            })
            .expect("state has satisfying experiences");
        return Ok(SteeringDecision {
            t,
            proposed: proposed.clone(),
            applied: store.experience(best.best_index).concrete.clone(),
            replaced: true,
            reason: Reason::Constraint,
            matched_state: Some(matched),
            est_proposed: None,
            est_applied: Some(best.mean),
        });
    }
    let Action::Mimo(mask) = proposed else {
        return Ok(SteeringDecision::keep(t, proposed, Reason::NoRecord));
    };
    let forced = direct_force(mask, &active)?;
    Ok(SteeringDecision {
        t,
        proposed: proposed.clone(),
        applied: Action::Mimo(forced),
        replaced: true,
        reason: Reason::FallbackForced,
        matched_state: None,
        est_proposed: None,
        est_applied: None,
    })
}

/// An environment stepping on concrete actions.
pub trait Environment {
    /// Observation of the current state.
    fn observe(&self) -> Observation;
    /// Applies `action` in the current state, returns its reward and moves to
    /// the next state.
    fn step(&mut self, action: &Action) -> f64;
    /// Labels attached to every recorded step.
    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// A policy proposing concrete actions. Acting never changes the
/// environment.
pub trait Agent {
    fn act(&self, observation: &Observation) -> Action;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub steps: Vec<Step>,
    pub decisions: Vec<SteeringDecision>,
    pub symbolic_actions: Vec<TermSet>,
    pub cumulative_reward: f64,
}

/// Runs `horizon` steps. The agent proposes, steering rewrites from
/// `start_fraction * horizon` on, the applied action is executed and the
/// (state, applied action, reward) triple is recorded into `store` as a new
/// sequence.
pub fn run_steered_episode<E: Environment, A: Agent>(
    env: &mut E,
    agent: &A,
    store: &mut ExperienceStore,
    symbolizer: &mut SymbolizerState,
    config: &SteeringConfig,
    horizon: u64,
) -> Result<EpisodeOutcome, SteeringError> {
    config.validate()?;
    store.begin_sequence();
    symbolizer.begin_sequence();
    let start = config.start_fraction * horizon as f64;
    let mut outcome = EpisodeOutcome {
        steps: Vec::with_capacity(horizon as usize),
        decisions: Vec::with_capacity(horizon as usize),
        symbolic_actions: Vec::with_capacity(horizon as usize),
        cumulative_reward: 0.0,
    };
    for t in 0..horizon {
        let observation = env.observe();
        let sym_state = symbolizer.symbolize_state(&observation)?;
        let proposed = agent.act(&observation);
        let active = config.mode != SteeringMode::Off && t as f64 >= start;
        let decision = if !active {
            SteeringDecision::keep(t, &proposed, Reason::Inactive)
        } else {
            let proposed_key = symbolizer.preview_action(&proposed)?.key();
            match config.mode {
                SteeringMode::Off => unreachable!(),
                SteeringMode::RewardMax | SteeringMode::Accel => {
                    steer_reward_max(store, &sym_state, &proposed, &proposed_key, config, t)
                }
                SteeringMode::Condition => steer_conditioned(store, &sym_state, &proposed, &proposed_key, config, t)?,
                SteeringMode::Force => {
                    let intents = config.active_intents(t);
                    match &proposed {
                        Action::Mimo(m) if !admits(&intents, &proposed, t) => SteeringDecision {
                            applied: Action::Mimo(direct_force(m, &intents)?),
                            replaced: true,
                            reason: Reason::FallbackForced,
                            ..SteeringDecision::keep(t, &proposed, Reason::FallbackForced)
                        },
                        _ => SteeringDecision::keep(t, &proposed, Reason::NoBetter),
                    }
                }
            }
        };
        let applied_key = symbolizer.symbolize_action(&decision.applied)?;
        let reward = env.step(&decision.applied);
        store.record_step(&sym_state, &applied_key, decision.applied.clone(), reward, t, decision.replaced)?;
        outcome.cumulative_reward += reward;
        outcome.steps.push(Step {
            t,
            state: observation,
            action: decision.applied.clone(),
            reward,
            meta: env.meta(),
        });
        outcome.symbolic_actions.push(applied_key);
        outcome.decisions.push(decision);
    }
    Ok(outcome)
}
