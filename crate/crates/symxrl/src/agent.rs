//! Linear value-based TD agent over the 128 schedule masks.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use symxrl_core::model::{MimoObservation, SchemaA2};
use symxrl_core::steering::{Agent, Environment};
use symxrl_core::store::ExperienceStore;
use symxrl_core::symbolizer::{SymbolizerState, Tolerance};
use symxrl_core::{Action, MimoAction, Observation, Schema};
use thiserror::Error;

use crate::env::{EnvError, MimoEnv, MimoEnvConfig};

pub const USERS: usize = SchemaA2::USERS;
pub const ACTIONS: usize = 1 << USERS;
pub const FEATURES: usize = 5;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("epsilon must lie in [0, 1], got {0}")]
    Epsilon(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("symbolization failed: {0}")]
    Symbolize(String),
}

/// Per-state quantities the joint features are built from. Group
/// membership is deliberately absent: the agent learns how crowding hurts
/// but not which users interfere with each other.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures {
    /// How much better than average each user's channel estimate is.
    rel: [f64; USERS],
    /// DTU relative to the stalest user.
    stale: [f64; USERS],
    /// Overall channel quality, `-mean ln(MSE) / 4`.
    level: f64,
}

impl StateFeatures {
    pub fn new(obs: &MimoObservation) -> Self {
        let ln: Vec<f64> = obs.mse.iter().map(|m| m.max(1e-6).ln()).collect();
        let mean = ln.iter().sum::<f64>() / USERS as f64;
        let max_dtu = obs.dtu.iter().copied().fold(1.0, f64::max);
        let mut f = Self { rel: [0.0; USERS], stale: [0.0; USERS], level: -mean / 4.0 };
        for u in 0..USERS {
            f.rel[u] = 10.0 * (mean - ln[u]);
            f.stale[u] = obs.dtu[u] / max_dtu;
        }
        f
    }

    /// Joint features of scheduling `action` (a mask index): scheduled
    /// count, summed relative quality, summed staleness, co-scheduled pairs,
    /// and the count scaled by the quality level.
    pub fn joint(&self, action: usize) -> [f64; FEATURES] {
        let (mut n, mut rel, mut stale) = (0.0, 0.0, 0.0);
        for u in (0..USERS).filter(|u| action >> u & 1 == 1) {
            n += 1.0;
            rel += self.rel[u];
            stale += self.stale[u];
        }
        [n, rel, stale, n * (n - 1.0) / 2.0, n * self.level]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdAgent {
    weights: [f64; FEATURES],
}

impl Default for TdAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl TdAgent {
    /// Untrained agent: all values zero, so greedy picks mask 0.
    pub fn new() -> Self {
        Self { weights: [0.0; FEATURES] }
    }

    pub fn weights(&self) -> &[f64; FEATURES] {
        &self.weights
    }

    pub fn value(&self, state: &StateFeatures, action: usize) -> f64 {
        self.weights.iter().zip(state.joint(action)).map(|(w, x)| w * x).sum()
    }

    /// Greedy action index and its value; ties go to the lowest index.
    pub fn greedy_index(&self, state: &StateFeatures) -> (usize, f64) {
        let mut best = (0, self.value(state, 0));
        for a in 1..ACTIONS {
            let v = self.value(state, a);
            if v > best.1 {
                best = (a, v);
            }
        }
        best
    }

    pub fn greedy(&self, obs: &MimoObservation) -> MimoAction {
        MimoAction::from_index(self.greedy_index(&StateFeatures::new(obs)).0, USERS)
    }

    /// ε-greedy mask.
    pub fn act_epsilon(&self, obs: &MimoObservation, epsilon: f64, rng: &mut impl Rng) -> Result<MimoAction, AgentError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(AgentError::Epsilon(epsilon));
        }
        if epsilon > 0.0 && rng.random_bool(epsilon) {
            return Ok(MimoAction::from_index(rng.random_range(0..ACTIONS), USERS));
        }
        Ok(self.greedy(obs))
    }

    /// One Q-learning update; `next` is `None` at the end of an episode.
    pub fn learn(
        &mut self,
        state: &StateFeatures,
        action: usize,
        reward: f64,
        next: Option<&StateFeatures>,
        alpha: f64,
        gamma: f64,
    ) {
        let bootstrap = match next {
            Some(n) if gamma > 0.0 => self.greedy_index(n).1,
            _ => 0.0,
        };
        let error = reward + gamma * bootstrap - self.value(state, action);
        for (w, x) in self.weights.iter_mut().zip(state.joint(action)) {
            *w += alpha * error * x;
        }
    }
}

/// The agent as a policy: greedy, or ε-greedy with its own seeded stream.
#[derive(Debug)]
pub struct Policy<'a> {
    agent: &'a TdAgent,
    epsilon: f64,
    rng: RefCell<ChaCha8Rng>,
}

impl<'a> Policy<'a> {
    pub fn greedy(agent: &'a TdAgent) -> Self {
        Self { agent, epsilon: 0.0, rng: RefCell::new(ChaCha8Rng::seed_from_u64(0)) }
    }

    pub fn epsilon_greedy(agent: &'a TdAgent, epsilon: f64, seed: u64) -> Result<Self, AgentError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(AgentError::Epsilon(epsilon));
        }
        Ok(Self { agent, epsilon, rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)) })
    }
}

impl Agent for Policy<'_> {
    fn act(&self, observation: &Observation) -> Action {
        let Observation::Mimo(obs) = observation else { panic!("TD agent takes MIMO observations") };
        let mask = self.agent.act_epsilon(obs, self.epsilon, &mut *self.rng.borrow_mut()).expect("validated epsilon");
        Action::Mimo(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: u32,
    /// Steps per training episode.
    pub horizon: u64,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε decays linearly from start to end.
    pub epsilon_decay_episodes: u32,
    pub checkpoints: Vec<u32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            horizon: 250,
            learning_rate: 5e-5,
            gamma: 0.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 150,
            checkpoints: vec![50, 100, 200],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(0.0..1.0).contains(&self.gamma) {
            return bad("learning rate must be positive and gamma in [0, 1)");
        }
        for eps in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(AgentError::Epsilon(eps));
            }
        }
        if self.checkpoints.iter().any(|&c| c == 0 || c > self.episodes) {
            return bad("checkpoints must lie in 1..=episodes");
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: u32) -> f64 {
        if episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = f64::from(episode) / f64::from(self.epsilon_decay_episodes.max(1));
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Seed of the `k`-th item of stream `tag` derived from a base seed.
pub fn derive_seed(base: u64, tag: u64, k: u64) -> u64 {
    let mut z = base ^ tag.rotate_left(32) ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRAIN_STREAM: u64 = 0x7472_6169;

/// Hex SHA-256 of the JSON rendering of the training-relevant configs.
pub fn config_hash(env: &MimoEnvConfig, train: &TrainConfig) -> String {
    let doc = serde_json::json!({"env": env, "train": train});
    let digest = Sha256::digest(doc.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub episodes: u32,
    pub config_hash: String,
    pub agent: TdAgent,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    /// Return of every training episode.
    pub returns: Vec<f64>,
    /// Every training step, symbolized and recorded as one sequence per
    /// episode; trackers are stored alongside.
    pub store: ExperienceStore,
}

/// Trains from scratch. Episode `k` runs the environment seeded with
/// `derive_seed(env.seed, TRAIN_STREAM, k)`.
pub fn train(env_cfg: &MimoEnvConfig, cfg: &TrainConfig, tolerance: Tolerance) -> Result<TrainOutcome, AgentError> {
    env_cfg.validate()?;
    cfg.validate()?;
    let hash = config_hash(env_cfg, cfg);
    let mut agent = TdAgent::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(env_cfg.seed, TRAIN_STREAM, u64::MAX));
    let mut symbolizer = SymbolizerState::new(Schema::A2(env_cfg.schema()), tolerance);
    let mut store = ExperienceStore::new();
    let mut returns = Vec::with_capacity(cfg.episodes as usize);
    let mut checkpoints = Vec::new();
    let sym_err = |e: &dyn std::fmt::Display| AgentError::Symbolize(e.to_string());
    for episode in 0..cfg.episodes {
        let mut env = MimoEnv::with_seed(env_cfg, derive_seed(env_cfg.seed, TRAIN_STREAM, u64::from(episode)))?;
        let epsilon = cfg.epsilon(episode);
        symbolizer.begin_sequence();
        store.begin_sequence();
        let mut obs = env.observation();
        let mut phi = StateFeatures::new(&obs);
        let mut total = 0.0;
        for t in 0..cfg.horizon {
            let mask = agent.act_epsilon(&obs, epsilon, &mut rng)?;
            let action = Action::Mimo(mask.clone());
            let sym_state = symbolizer.symbolize_state(&Observation::Mimo(obs)).map_err(|e| sym_err(&e))?;
            let sym_action = symbolizer.symbolize_action(&action).map_err(|e| sym_err(&e))?;
            let r = env.try_step(&mask)?;
            store.record_step(&sym_state, &sym_action, action, r, t, false).map_err(|e| sym_err(&e))?;
            total += r;
            obs = env.observation();
            let next = StateFeatures::new(&obs);
            let last = t + 1 == cfg.horizon;
            agent.learn(&phi, mask.index(), r, (!last).then_some(&next), cfg.learning_rate, cfg.gamma);
            phi = next;
        }
        returns.push(total);
        if cfg.checkpoints.contains(&(episode + 1)) {
            checkpoints.push(Checkpoint {
                version: CHECKPOINT_VERSION,
                episodes: episode + 1,
                config_hash: hash.clone(),
                agent: agent.clone(),
            });
        }
    }
    store.set_trackers(symbolizer.trackers().clone());
    Ok(TrainOutcome { checkpoints, returns, store })
}

/// Trailing moving average of `xs` over `window` items ending at `index`.
pub fn moving_average(xs: &[f64], index: usize, window: usize) -> f64 {
    let start = (index + 1).saturating_sub(window);
    let slice = &xs[start..=index];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Return of one greedy (or ε-greedy) episode on `env` without steering.
pub fn evaluate(agent: &dyn Agent, env: &mut MimoEnv, horizon: u64) -> f64 {
    let mut total = 0.0;
    for _ in 0..horizon {
        let action = agent.act(&env.observe());
        total += env.step(&action);
    }
    total
}
