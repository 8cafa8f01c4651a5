//! Dominance bounds across the non-manipulability hierarchy and action pruning.

use std::collections::HashMap;

use crate::graph::{VarId, VarSet};
use crate::intervention_sets::{actions_of, miss, pomiss, ActionSpaceContext};
use crate::scm::Assignment;
use crate::transport::{BoundResult, Bounds, SourceStore, Transport, TransportError};

/// Bounds for one action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundEntry {
    pub bounds: Bounds,
    pub transportable: bool,
    pub n_expressions: usize,
    pub pruned: bool,
}

impl From<BoundResult> for BoundEntry {
    fn from(r: BoundResult) -> Self {
        BoundEntry {
            bounds: r.bounds,
            transportable: r.transportable,
            n_expressions: r.n_expressions,
            pruned: false,
        }
    }
}

impl BoundEntry {
    pub const UNBOUNDED: BoundEntry = BoundEntry {
        bounds: Bounds::UNBOUNDED,
        transportable: false,
        n_expressions: 0,
        pruned: false,
    };
}

/// Per-action bounds plus the dominance bounds `ℓ★` and `u★`.
#[derive(Clone, Debug)]
pub struct BoundTable {
    entries: HashMap<Assignment, BoundEntry>,
    pub l_star: f64,
    pub u_star: f64,
}

impl Default for BoundTable {
    fn default() -> Self {
        BoundTable {
            entries: HashMap::new(),
            l_star: 0.0,
            u_star: f64::INFINITY,
        }
    }
}

impl BoundTable {
    pub fn insert(&mut self, action: Assignment, entry: BoundEntry) {
        self.entries.insert(action, entry);
    }

    /// Stored entry, or `[0, ∞)` for actions never bounded.
    pub fn entry(&self, action: &Assignment) -> BoundEntry {
        self.entries
            .get(action)
            .copied()
            .unwrap_or(BoundEntry::UNBOUNDED)
    }

    pub fn bounds(&self, action: &Assignment) -> Bounds {
        self.entry(action).bounds
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in canonical action order.
    pub fn iter(&self) -> Vec<(Assignment, BoundEntry)> {
        let mut out: Vec<(Assignment, BoundEntry)> =
            self.entries.iter().map(|(a, e)| (*a, *e)).collect();
        out.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        out
    }
}

/// Every action whose bounds dominance needs: MIS actions under `N★` and
/// POMIS actions under each `N ⊆ N★`.
pub fn required_actions(ctx: &ActionSpaceContext) -> Vec<Assignment> {
    let mut sets = miss(ctx);
    for n in ctx.non_manipulable.subsets() {
        sets.extend(pomiss(&ctx.with_non_manipulable(n)));
    }
    actions_of(&sets)
}

/// Causal bounds for `actions`.
pub fn bound_table(
    transport: &Transport,
    y: VarId,
    actions: &[Assignment],
    store: &SourceStore,
) -> Result<BoundTable, TransportError> {
    let mut table = BoundTable::default();
    for a in actions {
        table.insert(*a, transport.causal_bound(y, a, store)?.into());
    }
    Ok(table)
}

/// `ℓ★`: the best lower bound among MIS actions under `ctx`.
pub fn lower_dominance(ctx: &ActionSpaceContext, table: &BoundTable) -> f64 {
    actions_of(&miss(ctx))
        .iter()
        .map(|a| table.bounds(a).lower)
        .fold(0.0, f64::max)
}

/// The largest upper bound among the POMIS actions of one constraint level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMax {
    pub upper: f64,
    /// Canonical argmax; `None` when the level has no actions.
    pub argmax: Option<Assignment>,
    /// Whether the argmax has `ℓ = u`.
    pub exact: bool,
}

/// Canonical-first argmax of `u` over the POMIS actions under `n`.
pub fn level_max(ctx: &ActionSpaceContext, n: VarSet, table: &BoundTable) -> LevelMax {
    let actions = actions_of(&pomiss(&ctx.with_non_manipulable(n)));
    let mut best = LevelMax {
        upper: f64::INFINITY,
        argmax: None,
        exact: false,
    };
    for a in actions {
        let b = table.bounds(&a);
        if best.argmax.is_none() || b.upper > best.upper {
            best = LevelMax {
                upper: b.upper,
                argmax: Some(a),
                exact: b.lower == b.upper,
            };
        }
    }
    best
}

/// One visited constraint level of the `udb` recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct UdbStep {
    pub constraint: VarSet,
    pub level: LevelMax,
    pub u_star_running: f64,
}

/// Memoized `udb`. Each constraint is evaluated once; the trace lists the
/// visited constraints from strongest to weakest (then canonical order) with
/// the running minimum over that order.
pub fn udb_with(n: VarSet, level: &mut dyn FnMut(VarSet) -> LevelMax) -> (f64, Vec<UdbStep>) {
    let mut memo = HashMap::new();
    let mut trace = Vec::new();
    let u = udb_memo(n, level, &mut memo, &mut trace);
    trace.sort_by(|a, b| {
        b.constraint
            .len()
            .cmp(&a.constraint.len())
            .then(a.constraint.canonical_cmp(b.constraint))
    });
    let mut running = f64::INFINITY;
    for step in &mut trace {
        running = running.min(step.level.upper);
        step.u_star_running = running;
    }
    (u, trace)
}

fn udb_memo(
    n: VarSet,
    level: &mut dyn FnMut(VarSet) -> LevelMax,
    memo: &mut HashMap<VarSet, f64>,
    trace: &mut Vec<UdbStep>,
) -> f64 {
    if let Some(&u) = memo.get(&n) {
        return u;
    }
    let lm = level(n);
    trace.push(UdbStep {
        constraint: n,
        level: lm.clone(),
        u_star_running: f64::INFINITY,
    });
    let u = if (lm.upper.is_finite() && lm.exact) || n.is_empty() {
        lm.upper
    } else {
        let mut u = lm.upper;
        for v in n.iter() {
            u = u.min(udb_memo(n.without(v), level, memo, trace));
        }
        u
    };
    memo.insert(n, u);
    u
}

/// Plain exponential recursion without memoization.
pub fn udb_naive(n: VarSet, level: &mut dyn FnMut(VarSet) -> LevelMax) -> f64 {
    let lm = level(n);
    if (lm.upper.is_finite() && lm.exact) || n.is_empty() {
        return lm.upper;
    }
    let mut u = lm.upper;
    for v in n.iter() {
        u = u.min(udb_naive(n.without(v), level));
    }
    u
}

/// `u★` for `ctx` from the bounds in `table`, with the visit trace.
pub fn udb(ctx: &ActionSpaceContext, table: &BoundTable) -> (f64, Vec<UdbStep>) {
    udb_with(ctx.non_manipulable, &mut |n| level_max(ctx, n, table))
}

/// Rounding slack for the pruning test; bounds that tie `ℓ★` in exact
/// arithmetic can land a few ulps below it.
pub const PRUNE_TOL: f64 = 1e-12;

/// Cap every upper bound at `u★` and prune actions whose cap falls below `ℓ★`.
pub fn apply_dominance(table: &BoundTable, l_star: f64, u_star: f64) -> BoundTable {
    let mut out = BoundTable {
        entries: HashMap::with_capacity(table.len()),
        l_star,
        u_star,
    };
    for (a, mut e) in table.iter() {
        e.bounds.upper = e.bounds.upper.min(u_star);
        e.pruned = e.bounds.upper < l_star - PRUNE_TOL;
        out.insert(a, e);
    }
    out
}

/// Bounds, `ℓ★`, `u★` and pruning in one pass.
#[derive(Clone, Debug)]
pub struct DominanceReport {
    pub table: BoundTable,
    pub trace: Vec<UdbStep>,
}

pub fn dominance(
    ctx: &ActionSpaceContext,
    transport: &Transport,
    store: &SourceStore,
) -> Result<DominanceReport, TransportError> {
    let raw = bound_table(transport, ctx.reward, &required_actions(ctx), store)?;
    let l_star = lower_dominance(ctx, &raw);
    let (u_star, trace) = udb(ctx, &raw);
    Ok(DominanceReport {
        table: apply_dominance(&raw, l_star, u_star),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(u: f64, exact: bool) -> LevelMax {
        LevelMax {
            upper: u,
            argmax: Some(Assignment::EMPTY),
            exact,
        }
    }

    #[test]
    fn exact_top_level_stops() {
        let mut calls = 0;
        let (u, trace) = udb_with(VarSet::from_bits(0b11), &mut |_| {
            calls += 1;
            level(1.0, true)
        });
        assert_eq!(u, 1.0);
        assert_eq!(trace.len(), 1);
        assert_eq!(calls, 1);
    }

    #[test]
    fn infinite_propagates() {
        let (u, _) = udb_with(VarSet::EMPTY, &mut |_| level(f64::INFINITY, false));
        assert!(u.is_infinite());
    }

    #[test]
    fn min_over_hierarchy() {
        // {A,C} .8066, {A} .8066, {C} .8070, ∅ .7697 exact
        let vals = |n: VarSet| match n.bits() {
            0b11 => level(0.8066, false),
            0b01 => level(0.8066, false),
            0b10 => level(0.8070, false),
            _ => level(0.7697, true),
        };
        let (u, trace) = udb_with(VarSet::from_bits(0b11), &mut |n| vals(n));
        assert_eq!(u, 0.7697);
        assert_eq!(trace.len(), 4);
        assert_eq!(udb_naive(VarSet::from_bits(0b11), &mut |n| vals(n)), u);
        assert_eq!(trace.last().unwrap().u_star_running, 0.7697);
    }

    #[test]
    fn apply_caps_and_prunes() {
        let mut t = BoundTable::default();
        let a = Assignment::new(VarSet::singleton(0), VarSet::singleton(0));
        let b = Assignment::new(VarSet::singleton(0), VarSet::EMPTY);
        t.insert(
            a,
            BoundEntry {
                bounds: Bounds {
                    lower: 0.2752,
                    upper: 0.8066,
                },
                ..BoundEntry::UNBOUNDED
            },
        );
        t.insert(
            b,
            BoundEntry {
                bounds: Bounds {
                    lower: 0.1,
                    upper: 0.3,
                },
                ..BoundEntry::UNBOUNDED
            },
        );
        let out = apply_dominance(&t, 0.4844, 0.7697);
        assert_eq!(out.bounds(&a).upper, 0.7697);
        assert!(!out.entry(&a).pruned);
        assert!(out.entry(&b).pruned);
        let same = apply_dominance(&t, 0.0, f64::INFINITY);
        assert_eq!(same.bounds(&a), t.bounds(&a));
        assert!(!same.entry(&b).pruned);
    }
}
