use std::collections::HashSet;

use cbl_core::dominance::{
    apply_dominance, udb_naive, udb_with, BoundEntry, BoundTable, LevelMax, PRUNE_TOL,
};
use cbl_core::graph::VarSet;
use cbl_core::scm::Assignment;
use cbl_core::transport::Bounds;
use proptest::prelude::*;

fn levels(width: usize) -> impl Strategy<Value = Vec<LevelMax>> {
    prop::collection::vec(
        (prop::option::weighted(0.8, 0u8..=20), any::<bool>()).prop_map(|(u, exact)| LevelMax {
            upper: u.map_or(f64::INFINITY, |k| k as f64 / 20.0),
            argmax: Some(Assignment::EMPTY),
            exact,
        }),
        1 << width,
    )
}

fn tables() -> impl Strategy<Value = (usize, Vec<LevelMax>)> {
    (0usize..=5).prop_flat_map(|w| (Just(w), levels(w)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn memoized_udb_matches_naive((w, table) in tables()) {
        let n = VarSet::full(w);
        let mut calls = Vec::new();
        let (memo, trace) = udb_with(n, &mut |s| {
            calls.push(s);
            table[s.bits() as usize].clone()
        });
        let naive = udb_naive(n, &mut |s| table[s.bits() as usize].clone());
        prop_assert_eq!(memo, naive);
        let distinct: HashSet<VarSet> = calls.iter().copied().collect();
        prop_assert_eq!(distinct.len(), calls.len());
        prop_assert_eq!(trace.len(), calls.len());
        prop_assert!(trace.windows(2).all(|p| p[0].constraint.len() >= p[1].constraint.len()));
        prop_assert!(trace.windows(2).all(|p| p[0].u_star_running >= p[1].u_star_running));
        prop_assert_eq!(trace.last().unwrap().u_star_running, memo);
        prop_assert_eq!(trace[0].constraint, n);
    }

    #[test]
    fn dominance_caps_and_prunes(
        bounds in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, any::<bool>()), 1..12),
        l_star in 0.0..=1.0f64,
        u_star in prop::option::of(0.0..=1.0f64),
    ) {
        let u_star = u_star.unwrap_or(f64::INFINITY);
        let mut table = BoundTable::default();
        for (i, &(a, b, open)) in bounds.iter().enumerate() {
            let bounds = Bounds { lower: a.min(b), upper: if open { f64::INFINITY } else { a.max(b) } };
            let action = Assignment::new(VarSet::full(4), VarSet::from_bits(i as u64));
            table.insert(action, BoundEntry { bounds, ..BoundEntry::UNBOUNDED });
        }
        let capped = apply_dominance(&table, l_star, u_star);
        prop_assert_eq!(capped.len(), table.len());
        for (a, e) in table.iter() {
            let c = capped.entry(&a);
            prop_assert_eq!(c.bounds.upper, e.bounds.upper.min(u_star));
            prop_assert_eq!(c.bounds.lower, e.bounds.lower);
            prop_assert_eq!(c.pruned, c.bounds.upper < l_star - PRUNE_TOL);
        }
    }
}
