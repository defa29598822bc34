use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symxrl_core::explain::{export_kg, ExportFormat};
use symxrl_core::kg::KnowledgeGraph;
use symxrl_core::store::{ExperienceStore, StoreDocument, StoreError};
use symxrl_core::term::{Predicate, Subject, TermArgs};
use symxrl_core::{Action, MimoAction, Quartile, SymbolicTerm, TermSet};

const ACTIONS: [&str; 6] = ["noSched(g0)", "sched(g0,Q1,25)", "sched(g0,MAX,100)", "noSched(g1)", "sched(g1,Q2,50)", "sched(g2,Q4,75)"];

fn random_sequences(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    (0..rng.random_range(1..5))
        .map(|_| (0..rng.random_range(0..40)).map(|_| ACTIONS[rng.random_range(0..ACTIONS.len())].to_string()).collect())
        .collect()
}

fn build(seqs: &[Vec<String>]) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for s in seqs {
        kg.begin_sequence();
        for a in s {
            kg.push(a.clone());
        }
    }
    kg
}

#[test]
fn kg_counts_and_probabilities_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let seqs = random_sequences(&mut rng);
        let kg = build(&seqs);
        let mut nodes: BTreeMap<String, u64> = BTreeMap::new();
        let mut edges: BTreeMap<(String, String), u64> = BTreeMap::new();
        for s in &seqs {
            for a in s {
                *nodes.entry(a.clone()).or_default() += 1;
            }
            for w in s.windows(2) {
                *edges.entry((w[0].clone(), w[1].clone())).or_default() += 1;
            }
        }
        assert_eq!(kg.nodes(), &nodes);
        assert_eq!(kg.edges(), &edges);
        let len: u64 = seqs.iter().map(|s| s.len() as u64).sum();
        assert_eq!(kg.node_total(), len);
        let non_empty = seqs.iter().filter(|s| !s.is_empty()).count() as u64;
        assert_eq!(kg.edge_total(), len - non_empty);
        for src in nodes.keys() {
            if kg.outgoing_total(src) == 0 {
                continue;
            }
            let sum: f64 = nodes.keys().map(|dst| kg.edge_probability(src, dst)).sum();
            assert!((sum - 1.0).abs() <= 1e-9, "{src}: {sum}");
        }
        for fmt in [ExportFormat::Dot, ExportFormat::Json] {
            assert_eq!(export_kg(&kg, fmt), export_kg(&build(&seqs), fmt));
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> TermSet {
    let preds = [Predicate::Inc, Predicate::Dec, Predicate::Const];
    let mut set = TermSet::new();
    for kpi in ["MSE", "DTU"] {
        for g in 0..2 {
            let term = SymbolicTerm::new(
                preds[rng.random_range(0..3)],
                Subject::scoped(kpi, &format!("g{g}")),
                TermArgs::Quartile(Quartile::ALL[rng.random_range(0..5)]),
            )
            .unwrap();
            set.insert(term).unwrap();
        }
    }
    set
}

fn random_action(rng: &mut ChaCha8Rng) -> TermSet {
    TermSet::parse_key(ACTIONS[rng.random_range(0..3)]).unwrap()
}

struct Logged {
    state: TermSet,
    action: String,
    reward: f64,
    t: u64,
}

fn filled_store(rng: &mut ChaCha8Rng, n: usize) -> (ExperienceStore, Vec<Logged>) {
    let mut store = ExperienceStore::new();
    let mut log = Vec::new();
    for i in 0..n {
        if i % 97 == 0 {
            store.begin_sequence();
        }
        let state = random_state(rng);
        let action = random_action(rng);
        let reward = rng.random_range(-3.0..3.0);
        let t = rng.random_range(0..50);
        let concrete = Action::Mimo(MimoAction::from_index(i % 128, 7));
        store.record_step(&state, &action, concrete, reward, t, false).unwrap();
        log.push(Logged { state, action: action.key(), reward, t });
    }
    (store, log)
}

#[test]
fn aggregates_and_lookups_match_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (store, log) = filled_store(&mut rng, 1000);
    let mut keys: Vec<String> = log.iter().map(|l| l.state.key()).collect();
    keys.sort();
    keys.dedup();
    for key in &keys {
        let mut expected: Vec<(u64, usize)> =
            log.iter().enumerate().filter(|(_, l)| &l.state.key() == key).map(|(i, l)| (l.t, i)).collect();
        expected.sort();
        let got: Vec<u64> = store.experiences_for(key).iter().map(|e| e.t).collect();
        assert_eq!(got, expected.iter().map(|e| e.0).collect::<Vec<_>>());
        for action in ACTIONS {
            let rewards: Vec<f64> =
                log.iter().filter(|l| &l.state.key() == key && l.action == action).map(|l| l.reward).collect();
            match store.aggregate(key, action) {
                None => assert!(rewards.is_empty()),
                Some(agg) => {
                    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
                    assert_eq!(agg.count, rewards.len() as u64);
                    assert!((agg.mean - mean).abs() < 1e-12);
                    assert_eq!(agg.best, rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                    assert_eq!(store.mean_reward(key, action), Some(agg.mean));
                }
            }
        }
    }
    assert_eq!(store.mean_reward("noSched(g0)", "noSched(g0)"), None);
}

/// Distance in quarter units: 4 per differing predicate plus the quartile gap.
fn quarter_distance(a: &TermSet, b: &TermSet) -> u32 {
    a.iter()
        .filter_map(|t| b.get(t.subject()).map(|u| (t, u)))
        .map(|(t, u)| {
            let pred = if t.predicate() == u.predicate() { 0 } else { 4 };
            let gap = match (t.quartile(), u.quartile()) {
                (Some(q), Some(r)) => u32::from(q.ordinal().abs_diff(r.ordinal())),
                _ => 0,
            };
            pred + gap
        })
        .sum()
}

#[test]
fn nearest_state_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (store, log) = filled_store(&mut rng, 500);
    for _ in 0..300 {
        let query = random_state(&mut rng);
        // Latest occurrence wins among equally distant states.
        let (mut best_key, mut best_d, mut best_i) = (String::new(), u32::MAX, 0);
        for (i, l) in log.iter().enumerate() {
            let d = quarter_distance(&query, &l.state);
            if d < best_d || (d == best_d && i > best_i) {
                (best_key, best_d, best_i) = (l.state.key(), d, i);
            }
        }
        let (key, d) = store.nearest_state(&query, f64::INFINITY).unwrap();
        assert_eq!(key, best_key);
        assert_eq!(d, f64::from(best_d) / 4.0);
        // Anything closer than the minimum is out of reach.
        assert!(store.nearest_state(&query, f64::from(best_d) / 4.0 - 0.125).is_none());
        assert!(store.nearest_state(&query, f64::from(best_d) / 4.0).is_some());
    }
}

#[test]
fn document_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (store, _) = filled_store(&mut rng, 1000);
    let json = serde_json::to_string(&store.to_document()).unwrap();
    let doc: StoreDocument = serde_json::from_str(&json).unwrap();
    let back = ExperienceStore::from_document(doc).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.knowledge_graph(), store.knowledge_graph());
    assert_eq!(serde_json::to_string(&back.to_document()).unwrap(), json);

    let empty = ExperienceStore::new();
    let doc = serde_json::from_str(&serde_json::to_string(&empty.to_document()).unwrap()).unwrap();
    assert_eq!(ExperienceStore::from_document(doc).unwrap(), empty);

    assert!(serde_json::from_str::<StoreDocument>(&json[..json.len() / 2]).is_err());
    let mut doc = store.to_document();
    doc.version = 9;
    assert!(matches!(ExperienceStore::from_document(doc), Err(StoreError::Version { found: 9 })));
}
