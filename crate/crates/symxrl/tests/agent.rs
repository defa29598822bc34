use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symxrl::agent::{config_hash, evaluate, moving_average, train, Policy, StateFeatures, TdAgent, TrainConfig, TrainOutcome, ACTIONS};
use symxrl::env::{MimoEnv, MimoEnvConfig};
use symxrl_core::model::MimoObservation;
use symxrl_core::symbolizer::Tolerance;

fn trained() -> &'static TrainOutcome {
    static CELL: OnceLock<TrainOutcome> = OnceLock::new();
    CELL.get_or_init(|| train(&MimoEnvConfig::default(), &TrainConfig::default(), Tolerance::default()).unwrap())
}

fn obs() -> MimoObservation {
    MimoObservation {
        mse: vec![0.02, 0.1, 0.05, 0.3, 0.01, 0.07, 0.2],
        dtu: vec![0.0, 3.0, 1.0, 0.0, 5.0, 2.0, 0.0],
        group: vec![0, 0, 0, 1, 1, 2, 2],
    }
}

#[test]
fn full_exploration_is_uniform() {
    let agent = &trained().checkpoints[2].agent;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let per_cell = 200;
    let mut counts = vec![0u32; ACTIONS];
    for _ in 0..ACTIONS * per_cell {
        counts[agent.act_epsilon(&obs(), 1.0, &mut rng).unwrap().index()] += 1;
    }
    let chi2: f64 = counts.iter().map(|&c| (f64::from(c) - per_cell as f64).powi(2) / per_cell as f64).sum();
    // 127 degrees of freedom, 0.1% upper tail.
    assert!(chi2 < 181.99, "chi2 = {chi2}");
}

#[test]
fn no_exploration_is_greedy() {
    let agent = &trained().checkpoints[2].agent;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let greedy = agent.greedy(&obs());
    for _ in 0..100 {
        assert_eq!(agent.act_epsilon(&obs(), 0.0, &mut rng).unwrap(), greedy);
    }
    let f = StateFeatures::new(&obs());
    let best = (0..ACTIONS).map(|a| agent.value(&f, a)).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(agent.value(&f, greedy.index()), best);
}

#[test]
fn training_is_deterministic_and_hashed() {
    let env = MimoEnvConfig::default();
    let cfg = TrainConfig { episodes: 5, checkpoints: vec![5], ..TrainConfig::default() };
    let a = train(&env, &cfg, Tolerance::default()).unwrap();
    let b = train(&env, &cfg, Tolerance::default()).unwrap();
    assert_eq!(a.checkpoints, b.checkpoints);
    assert_eq!(a.returns, b.returns);
    assert_eq!(a.store, b.store);
    assert_eq!(a.store.len(), 5 * 250);
    let other = TrainConfig { learning_rate: 1e-4, ..cfg.clone() };
    assert_ne!(config_hash(&env, &cfg), config_hash(&env, &other));
    assert_eq!(a.checkpoints[0].config_hash, config_hash(&env, &cfg));
}

#[test]
fn training_improves_returns() {
    let out = trained();
    assert_eq!(out.checkpoints.iter().map(|c| c.episodes).collect::<Vec<_>>(), [50, 100, 200]);
    assert!(moving_average(&out.returns, 199, 20) > moving_average(&out.returns, 9, 20));
    let env_cfg = MimoEnvConfig { horizon: 500, ..MimoEnvConfig::default() };
    let untrained = TdAgent::new();
    let (mut random, mut learned) = (0.0, 0.0);
    for seed in 100..105 {
        let policy = Policy::epsilon_greedy(&untrained, 1.0, seed).unwrap();
        random += evaluate(&policy, &mut MimoEnv::with_seed(&env_cfg, seed).unwrap(), env_cfg.horizon);
        let policy = Policy::greedy(&out.checkpoints[2].agent);
        learned += evaluate(&policy, &mut MimoEnv::with_seed(&env_cfg, seed).unwrap(), env_cfg.horizon);
    }
    assert!(learned > random, "{learned} vs {random}");
}

#[test]
fn bad_training_configs_are_rejected() {
    let env = MimoEnvConfig::default();
    for cfg in [
        TrainConfig { horizon: 0, ..TrainConfig::default() },
        TrainConfig { gamma: 1.0, ..TrainConfig::default() },
        TrainConfig { epsilon_start: 1.5, ..TrainConfig::default() },
        TrainConfig { checkpoints: vec![300], ..TrainConfig::default() },
    ] {
        assert!(train(&env, &cfg, Tolerance::default()).is_err());
    }
}
