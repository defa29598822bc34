use proptest::prelude::*;
use symxrl_core::intent::{check_consistency, satisfies_all, Intent};
use symxrl_core::steering::direct_force;
use symxrl_core::{MimoAction, SchemaA2};

fn schema() -> SchemaA2 {
    SchemaA2::default()
}

fn masks() -> impl Iterator<Item = MimoAction> {
    (0..128).map(|i| MimoAction::from_index(i, 7))
}

#[test]
fn quantifier_expands_to_member_conjunction() {
    let s = schema();
    for (g, members) in [(0, "0,1,2"), (1, "3,4"), (2, "5,6")] {
        for atom in ["schedule", "notSchedule"] {
            let forall = Intent::parse(&format!("forall u in G{g}: {atom}(u)"), &s).unwrap();
            let listed = Intent::parse(&format!("forall u in {{{members}}}: {atom}(u)"), &s).unwrap();
            let conj: Vec<String> = members.split(',').map(|u| format!("{atom}({u})")).collect();
            let conj = Intent::parse(&conj.join(" & "), &s).unwrap();
            for m in masks() {
                assert_eq!(forall.holds(&m), conj.holds(&m));
                assert_eq!(listed.holds(&m), conj.holds(&m));
            }
        }
    }
}

#[test]
fn window_bounds_are_inclusive() {
    let i = Intent::parse("notSchedule(6) @ [680,880]", &schema()).unwrap();
    let with6 = MimoAction::from_users(7, [6]);
    assert!(i.satisfies(&with6, 679));
    assert!(!i.satisfies(&with6, 680));
    assert!(!i.satisfies(&with6, 880));
    assert!(i.satisfies(&with6, 881));
}

fn literal() -> impl Strategy<Value = String> {
    (prop::bool::ANY, 0usize..7).prop_map(|(s, u)| format!("{}({u})", if s { "schedule" } else { "notSchedule" }))
}

fn intent_text() -> impl Strategy<Value = String> {
    let clause = prop_oneof![
        literal(),
        (prop::bool::ANY, 0usize..3).prop_map(|(s, g)| format!("forall u in G{g}: {}(u)", if s { "schedule" } else { "notSchedule" })),
    ];
    (prop::collection::vec(clause, 1..4), prop::option::of((0u64..50, 0u64..50))).prop_map(|(cs, w)| {
        let body = cs.join(" & ");
        match w {
            Some((a, b)) => format!("{body} @ [{},{}]", a.min(b), a.max(b)),
            None => body,
        }
    })
}

proptest! {
    #[test]
    fn rendering_is_a_parse_fixed_point(text in intent_text()) {
        let first = Intent::parse(&text, &schema()).unwrap();
        let rendered = first.to_string();
        let second = Intent::parse(&rendered, &schema()).unwrap();
        prop_assert_eq!(second.to_string(), rendered);
        for m in masks() {
            prop_assert_eq!(first.holds(&m), second.holds(&m));
        }
    }

    /// Forcing flips exactly the users the intents pin, which is the
    /// smallest edit among all satisfying masks.
    #[test]
    fn forcing_is_a_minimal_edit(texts in prop::collection::vec(intent_text(), 1..3), index in 0usize..128, t in 0u64..50) {
        let intents: Vec<Intent> = texts.iter().map(|x| Intent::parse(x, &schema()).unwrap()).collect();
        let active: Vec<&Intent> = intents.iter().filter(|i| i.is_active(t)).collect();
        let proposed = MimoAction::from_index(index, 7);
        let owned: Vec<Intent> = active.iter().map(|i| (*i).clone()).collect();
        let best = masks()
            .filter(|m| satisfies_all(&owned, m, t))
            .map(|m| (m.index() ^ index).count_ones())
            .min();
        match (direct_force(&proposed, &active), best) {
            (Ok(forced), Some(d)) => {
                prop_assert!(satisfies_all(&owned, &forced, t));
                prop_assert_eq!((forced.index() ^ index).count_ones(), d);
            }
            (Err(_), None) => prop_assert!(check_consistency(&owned).is_err()),
            (res, best) => prop_assert!(false, "force {:?} vs oracle {:?}", res, best),
        }
    }
}
