//! Steered-vs-unsteered episode protocols shared by the CLI and the tests.

use std::collections::BTreeMap;

use symxrl_core::intent::satisfies_all;
use symxrl_core::steering::{run_steered_episode, EpisodeOutcome, Reason, SteeringConfig, SteeringError, SteeringMode};
use symxrl_core::store::ExperienceStore;
use symxrl_core::symbolizer::{SymbolizerState, Tolerance};
use symxrl_core::Schema;

use crate::agent::{derive_seed, AgentError, Policy, TdAgent};
use crate::env::{EnvError, MimoEnv, MimoEnvConfig};

const POLICY_STREAM: u64 = 0x706f_6c69;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Steering(#[from] SteeringError),
}

/// How the agent proposes actions during evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPolicy {
    /// Exploration rate of the evaluated agent; 0 is greedy.
    pub epsilon: f64,
}

/// One evaluation episode on the environment seeded with `seed`, starting
/// from a private copy of `store` (its trackers seed the symbolizer).
/// Returns the outcome and the store with the episode appended.
pub fn run_episode(
    env_cfg: &MimoEnvConfig,
    seed: u64,
    agent: &TdAgent,
    policy: EvalPolicy,
    store: &ExperienceStore,
    steering: &SteeringConfig,
    tolerance: Tolerance,
) -> Result<(EpisodeOutcome, ExperienceStore), ExperimentError> {
    let mut env = MimoEnv::with_seed(env_cfg, seed)?;
    let proposer = Policy::epsilon_greedy(agent, policy.epsilon, derive_seed(seed, POLICY_STREAM, 0))?;
    let mut store = store.clone();
    let mut symbolizer =
        SymbolizerState::from_trackers(Schema::A2(env_cfg.schema()), tolerance, store.trackers().clone());
    let outcome = run_steered_episode(&mut env, &proposer, &mut store, &mut symbolizer, steering, env_cfg.horizon)?;
    store.set_trackers(symbolizer.trackers().clone());
    Ok((outcome, store))
}

/// Runs `f` for every seed on scoped threads; results come back in seed order.
pub fn for_seeds<T: Send>(
    seeds: &[u64],
    f: impl Fn(u64) -> Result<T, ExperimentError> + Sync,
) -> Result<Vec<T>, ExperimentError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let mut slots: Vec<Option<Result<T, ExperimentError>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let chunks: Vec<_> = slots.chunks_mut(seeds.len().div_ceil(workers).max(1)).collect();
        let mut offset = 0;
        for chunk in chunks {
            let ids = &seeds[offset..offset + chunk.len()];
            offset += chunk.len();
            scope.spawn(move || {
                for (slot, &seed) in chunk.iter_mut().zip(ids) {
                    *slot = Some(f(seed));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every seed ran")).collect()
}

/// Per-seed comparison of a steered episode against the unsteered one.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub baseline: f64,
    pub steered: f64,
    pub replaced: usize,
    pub reasons: BTreeMap<Reason, usize>,
    /// Steps whose applied action violates an intent active at that step.
    pub violations: usize,
}

impl SeedSummary {
    /// `(steered - baseline) / |baseline|`.
    pub fn improvement(&self) -> f64 {
        relative(self.baseline, self.steered)
    }
}

pub fn relative(base: f64, other: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (other - base) / base.abs()
    }
}

pub fn summarize(seed: u64, baseline: &EpisodeOutcome, steered: &EpisodeOutcome, steering: &SteeringConfig) -> SeedSummary {
    let mut reasons = BTreeMap::new();
    for d in &steered.decisions {
        *reasons.entry(d.reason).or_insert(0) += 1;
    }
    SeedSummary {
        seed,
        baseline: baseline.cumulative_reward,
        steered: steered.cumulative_reward,
        replaced: steered.decisions.iter().filter(|d| d.replaced).count(),
        reasons,
        violations: violations(steered, steering),
    }
}

pub fn violations(outcome: &EpisodeOutcome, steering: &SteeringConfig) -> usize {
    outcome
        .decisions
        .iter()
        .filter(|d| d.applied.as_mimo().is_some_and(|m| !satisfies_all(&steering.intents, m, d.t)))
        .count()
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Baseline and steered episode for every seed. Accel mode starts each
/// steered episode from an empty store.
pub fn compare_seeds(
    env_cfg: &MimoEnvConfig,
    seeds: &[u64],
    agent: &TdAgent,
    policy: EvalPolicy,
    store: &ExperienceStore,
    steering: &SteeringConfig,
    tolerance: Tolerance,
) -> Result<Vec<(EpisodeOutcome, EpisodeOutcome)>, ExperimentError> {
    steering.validate()?;
    let off = SteeringConfig { mode: SteeringMode::Off, ..steering.clone() };
    let empty = ExperienceStore::new();
    let steered_store = if steering.mode == SteeringMode::Accel { &empty } else { store };
    for_seeds(seeds, |seed| {
        let (base, _) = run_episode(env_cfg, seed, agent, policy, store, &off, tolerance)?;
        let (steered, _) = run_episode(env_cfg, seed, agent, policy, steered_store, steering, tolerance)?;
        Ok((base, steered))
    })
}
