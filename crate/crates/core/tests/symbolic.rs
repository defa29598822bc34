use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symxrl_core::model::{SlicingAction, validate_trajectory};
use symxrl_core::symbolizer::{
    prb_category, symbolize_action_a1, symbolize_action_a2, symbolize_scalar, symbolize_trajectory, vocabulary_size,
    SymbolizerState, Tolerance,
};
use symxrl_core::term::{Category, Percentage, Policy, Predicate, Subject, TermArgs};
use symxrl_core::{MimoAction, Quartile, QuartileTracker, Schema, SchemaA2, SymbolicTerm, TermSet};

fn quartile() -> impl Strategy<Value = Quartile> {
    prop::sample::select(Quartile::ALL.to_vec())
}

fn category() -> impl Strategy<Value = Category> {
    (1u8..=10).prop_map(|i| Category::new(i).unwrap())
}

fn subject() -> impl Strategy<Value = Subject> {
    ("[A-Za-z][A-Za-z_]{0,6}", prop::option::of("[a-z][a-z0-9]{0,4}")).prop_map(|(var, scope)| match scope {
        Some(s) => Subject::scoped(&var, &s),
        None => Subject::new(var).unwrap(),
    })
}

fn term() -> impl Strategy<Value = SymbolicTerm> {
    let args = prop_oneof![
        (prop::sample::select(vec![Predicate::Inc, Predicate::Dec, Predicate::Const]), quartile())
            .prop_map(|(p, q)| (p, TermArgs::Quartile(q))),
        category().prop_map(|c| (Predicate::Const, TermArgs::Category(c))),
        (prop::sample::select(vec![Predicate::Inc, Predicate::Dec]), category(), category())
            .prop_map(|(p, a, b)| (p, TermArgs::Transition(a, b))),
        (quartile(), prop::sample::select(Percentage::GRID.to_vec()))
            .prop_map(|(q, p)| (Predicate::Sched, TermArgs::Schedule(q, Percentage::new(p).unwrap()))),
        Just((Predicate::NoSched, TermArgs::None)),
        prop::sample::select(Policy::ALL.to_vec()).prop_map(|p| (Predicate::To(p), TermArgs::None)),
    ];
    (args, subject()).prop_map(|((p, a), s)| SymbolicTerm::new(p, s, a).unwrap())
}

proptest! {
    #[test]
    fn rendered_terms_parse_back(t in term()) {
        let text = t.render();
        prop_assert_eq!(SymbolicTerm::parse(&text).unwrap(), t);
    }

    #[test]
    fn term_set_keys_parse_back(terms in prop::collection::vec(term(), 0..6)) {
        let mut set = TermSet::new();
        for t in terms {
            if set.get(t.subject()).is_none() {
                set.insert(t).unwrap();
            }
        }
        let key = set.key();
        prop_assert_eq!(TermSet::parse_key(&key).unwrap(), set);
    }

    #[test]
    fn percentage_matches_float_rounding(total in 1usize..12, frac in 0.0f64..=1.0) {
        let scheduled = (frac * total as f64).round() as usize;
        let exact = 100.0 * scheduled as f64 / total as f64;
        let got = f64::from(Percentage::nearest(scheduled, total).value());
        // Closest grid point, ties resolved upward.
        for g in Percentage::GRID {
            let d = (f64::from(g) - exact).abs();
            prop_assert!((got - exact).abs() <= d + 1e-9);
            if (d - (got - exact).abs()).abs() < 1e-9 {
                prop_assert!(got >= f64::from(g));
            }
        }
    }
}

#[test]
fn prb_category_goldens() {
    assert_eq!(prb_category(12).unwrap().to_string(), "C3");
    assert_eq!(prb_category(23).unwrap().to_string(), "C5");
    assert_eq!(prb_category(40).unwrap().to_string(), "C9");
    assert_eq!(prb_category(0).unwrap().to_string(), "C1");
    assert_eq!(prb_category(50).unwrap().to_string(), "C10");
    assert!(prb_category(51).is_err());
}

#[test]
fn percentage_golden() {
    assert_eq!(Percentage::nearest(2, 3).value(), 75);
    assert_eq!(Percentage::nearest(1, 2).value(), 50);
    assert_eq!(Percentage::nearest(1, 8).value(), 25);
    assert_eq!(Percentage::nearest(0, 3).value(), 0);
}

/// Label of `x` recomputed from the tracker's public estimates.
fn label_oracle(tracker: &QuartileTracker, x: f64) -> Quartile {
    let [a, b, c] = tracker.estimates().unwrap();
    if tracker.max_label() && x >= tracker.max().unwrap() {
        Quartile::Max
    } else if x <= a {
        Quartile::Q1
    } else if x <= b {
        Quartile::Q2
    } else if x <= c {
        Quartile::Q3
    } else {
        Quartile::Q4
    }
}

#[test]
fn exactly_one_predicate_per_scalar_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let tol = Tolerance::default();
    let mut tracker = QuartileTracker::new(false);
    let subject = Subject::scoped("MSE", "g0");
    let mut prev: f64 = 1.0;
    for _ in 0..10_000 {
        let cur = match rng.random_range(0..4) {
            0 => prev,
            1 => prev * (1.0 + rng.random_range(-0.009..0.009)),
            2 => rng.random_range(-5.0..5.0),
            _ => prev + rng.random_range(-1e-10..1e-10),
        };
        tracker.observe(cur).unwrap();
        let term = symbolize_scalar(subject.clone(), prev, cur, &tracker, &tol).unwrap();
        let bound = (0.01 * prev.abs()).max(1e-9);
        let expected = [
            (Predicate::Inc, cur - prev > bound),
            (Predicate::Dec, prev - cur > bound),
            (Predicate::Const, (cur - prev).abs() <= bound),
        ];
        let holding: Vec<Predicate> = expected.iter().filter(|e| e.1).map(|e| e.0).collect();
        assert_eq!(holding, vec![term.predicate()], "prev={prev} cur={cur}");
        assert_eq!(term.args(), TermArgs::Quartile(label_oracle(&tracker, cur)));
        prev = cur;
    }
}

#[test]
fn a1_first_action_compares_against_zero() {
    let act = SlicingAction { prb: vec![12, 23, 15], policy: vec![Policy::Wf, Policy::Rr, Policy::Pf] };
    let set = symbolize_action_a1(None, &act).unwrap();
    let rendered = set.rendered();
    assert!(rendered.contains(&"inc(PRB@embb,C1,C3)".to_string()), "{rendered:?}");
    assert!(rendered.contains(&"toRR(sched@mmtc)".to_string()), "{rendered:?}");
    let again = symbolize_action_a1(Some(&act), &act).unwrap();
    assert!(again.rendered().contains(&"const(PRB@urllc,C4)".to_string()));
}

#[test]
fn a2_symbolic_actions_stay_within_vocabulary() {
    let schema = SchemaA2::default();
    let assignment = schema.assignment();
    let mut trackers = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20_000 {
        let mask = MimoAction::from_index(rng.random_range(0..128), 7);
        let set = symbolize_action_a2(&mask, &assignment, schema.groups(), &mut trackers).unwrap();
        assert_eq!(set.len(), schema.groups());
        for t in set.iter() {
            seen.insert(t.render());
        }
    }
    // Per-group terms: sched over Q x {25..100} plus noSched in place of
    // the percentage-0 cells.
    assert!(seen.len() as u64 <= vocabulary_size("A2-symb").unwrap(), "{}", seen.len());
}

#[test]
fn vocabulary_counts() {
    assert_eq!(vocabulary_size("A1-explora").unwrap(), 31_752);
    assert_eq!(vocabulary_size("A2-explora").unwrap(), 128);
    assert_eq!(vocabulary_size("A2-symb").unwrap(), 75);
    assert_eq!(vocabulary_size("A1-symb").unwrap(), 270);
    assert!(vocabulary_size("A3").is_err());
}

#[test]
fn effect_is_next_state() {
    let schema = Schema::A2(SchemaA2::default());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let steps: Vec<_> = (0..50)
        .map(|t| symxrl_core::Step {
            t,
            state: symxrl_core::Observation::Mimo(symxrl_core::model::MimoObservation {
                mse: (0..7).map(|_| rng.random_range(0.01..1.0)).collect(),
                dtu: (0..7).map(|_| f64::from(rng.random_range(0..5u32))).collect(),
                group: SchemaA2::default().assignment(),
            }),
            action: symxrl_core::Action::Mimo(MimoAction::from_index(rng.random_range(0..128), 7)),
            reward: 1.0,
            meta: BTreeMap::new(),
        })
        .collect();
    let traj = validate_trajectory(steps, &schema).unwrap();
    let records = symbolize_trajectory(&traj, &mut SymbolizerState::new(schema, Tolerance::default())).unwrap();
    for w in records.windows(2) {
        assert_eq!(w[0].effect, w[1].state);
    }
    assert!(records.last().unwrap().effect().is_none());
}
