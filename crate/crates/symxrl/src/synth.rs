//! Synthetic slicing traces for exercising the A1 schema without an emulator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use symxrl_core::model::{SliceObservation, SlicingAction};
use symxrl_core::term::Policy;
use symxrl_core::{Action, Observation, SchemaA1, Step};

/// Typical KPI levels per slice: (Mbps, packets, buffer bytes).
const LEVELS: [(f64, f64, f64); 3] = [(8.0, 900.0, 40_000.0), (0.4, 120.0, 800.0), (1.5, 300.0, 2_000.0)];

/// Per-step chance of a KPI regime switch and of a new action.
const SWITCH: f64 = 0.02;
const NEW_ACTION: f64 = 0.3;

fn random_action(rng: &mut ChaCha8Rng) -> SlicingAction {
    // Two distinct cut points in 1..50 split the 50 PRBs into three
    // non-empty shares.
    let a = rng.random_range(1..SchemaA1::PRB_TOTAL);
    let mut b = rng.random_range(1..SchemaA1::PRB_TOTAL - 1);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = (a.min(b), a.max(b));
    SlicingAction {
        prb: vec![lo, hi - lo, SchemaA1::PRB_TOTAL - hi],
        policy: (0..3).map(|_| Policy::ALL[rng.random_range(0..3)]).collect(),
    }
}

/// `steps` valid A1 steps: KPIs follow piecewise-stationary lognormal
/// regimes scaled by the PRB share, actions are random splits of the PRBs.
/// Deterministic per seed.
pub fn synth_trace_a1(seed: u64, steps: u64) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regime = [1.0f64; 3];
    let mut action = random_action(&mut rng);
    let jitter = LogNormal::new(0.0, 0.25).expect("valid sigma");
    let mut out = Vec::with_capacity(steps as usize);
    for t in 0..steps {
        for r in &mut regime {
            if rng.random_bool(SWITCH) {
                *r = rng.random_range(0.3..2.0);
            }
        }
        if t > 0 && rng.random_bool(NEW_ACTION) {
            action = random_action(&mut rng);
        }
        let mut obs = SliceObservation { tx_brate: vec![], tx_pkts: vec![], dl_buffer: vec![] };
        let mut reward = 0.0;
        for (s, &(brate, pkts, buffer)) in LEVELS.iter().enumerate() {
            let share = f64::from(action.prb[s]) / f64::from(SchemaA1::PRB_TOTAL);
            let served = regime[s] * (0.2 + share);
            let mut draw = |level: f64| -> Vec<f64> {
                (0..SchemaA1::MEASUREMENTS).map(|_| level * jitter.sample(&mut rng)).collect()
            };
            let b = draw(brate * served);
            let p = draw(pkts * served);
            let q = draw(buffer * regime[s] / (0.2 + share));
            reward += b.iter().sum::<f64>() / (brate * SchemaA1::MEASUREMENTS as f64)
                - q.iter().sum::<f64>() / (buffer * SchemaA1::MEASUREMENTS as f64 * 10.0);
            obs.tx_brate.push(b);
            obs.tx_pkts.push(p);
            obs.dl_buffer.push(q);
        }
        out.push(Step {
            t,
            state: Observation::Slicing(obs),
            action: Action::Slicing(action.clone()),
            reward,
            meta: BTreeMap::new(),
        });
    }
    out
}
