//! Minimal and possibly-optimal intervention sets.

use thiserror::Error;

use crate::graph::{Diagram, VarId, VarSet};
use crate::scm::Assignment;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetError {
    #[error("{0} is not a possibly-optimal intervention set")]
    NotPois(String),
    #[error("the reward variable cannot be non-manipulable or intervened on")]
    RewardInSet,
}

/// `⟨G, Y, N⟩`: diagram, reward, non-manipulable variables.
#[derive(Clone, Debug)]
pub struct ActionSpaceContext {
    pub diagram: Diagram,
    pub reward: VarId,
    pub non_manipulable: VarSet,
}

impl ActionSpaceContext {
    pub fn new(diagram: Diagram, reward: VarId, non_manipulable: VarSet) -> Result<Self, SetError> {
        if non_manipulable.contains(reward) {
            return Err(SetError::RewardInSet);
        }
        Ok(ActionSpaceContext {
            diagram,
            reward,
            non_manipulable,
        })
    }

    /// `G⟨V∖N⟩`.
    pub fn projected(&self) -> Diagram {
        self.diagram
            .latent_projection(self.diagram.vertices() - self.non_manipulable)
    }

    /// Variables an agent may intervene on.
    pub fn manipulable(&self) -> VarSet {
        self.diagram.vertices() - self.non_manipulable - VarSet::singleton(self.reward)
    }

    pub fn with_non_manipulable(&self, n: VarSet) -> ActionSpaceContext {
        ActionSpaceContext {
            diagram: self.diagram.clone(),
            reward: self.reward,
            non_manipulable: n,
        }
    }
}

/// Minimal unobserved-confounders territory of `y`.
pub fn muct(g: &Diagram, y: VarId) -> VarSet {
    let h = g.subgraph(g.ancestors(VarSet::singleton(y)));
    let mut t = VarSet::singleton(y);
    loop {
        let mut next = h.descendants(t);
        for v in next.iter() {
            next |= h.c_component_of(v);
        }
        if next == t {
            return t;
        }
        t = next;
    }
}

/// Interventional border: parents of the MUCT outside it.
pub fn ib(g: &Diagram, y: VarId) -> VarSet {
    let t = muct(g, y);
    g.parents_of(t) - t
}

fn muct_ib(g: &Diagram, y: VarId) -> (VarSet, VarSet) {
    let t = muct(g, y);
    (t, g.parents_of(t) - t)
}

/// Graphical POMIS test for the unconstrained setting.
pub fn is_pomis(g: &Diagram, y: VarId, x: VarSet) -> bool {
    ib(&g.cut_incoming(x), y) == x
}

/// All POMISs under `ctx`, in canonical set order.
pub fn pomiss(ctx: &ActionSpaceContext) -> Vec<VarSet> {
    let mut out = Vec::new();
    enumerate(&ctx.projected(), ctx.reward, &mut |x, _| out.push(x));
    finish(out)
}

/// All POISs of the unconstrained setting, in canonical set order. Each POMIS
/// `X` with territory `T` contributes every `R` with `X ⊆ R ⊆ An(T) ∖ T`.
pub fn poiss(g: &Diagram, y: VarId) -> Vec<VarSet> {
    let top = g.subgraph(g.ancestors(VarSet::singleton(y)));
    let mut out = Vec::new();
    enumerate(g, y, &mut |x, t| {
        let room = top.ancestors(t) - t - x;
        for extra in room.subsets() {
            out.push(x | extra);
        }
    });
    finish(out)
}

fn finish(mut sets: Vec<VarSet>) -> Vec<VarSet> {
    sets.sort_by(|a, b| a.canonical_cmp(*b));
    sets.dedup();
    sets
}

/// Shared recursion: calls `emit(X, T)` for every POMIS `X` with its MUCT `T`.
fn enumerate(g: &Diagram, y: VarId, emit: &mut dyn FnMut(VarSet, VarSet)) {
    let g = g.subgraph(g.ancestors(VarSet::singleton(y)));
    let (t, x) = muct_ib(&g, y);
    let h = g.cut_incoming(x).subgraph(t | x);
    let order: Vec<VarId> = h
        .topological_order()
        .into_iter()
        .rev()
        .filter(|&v| t.contains(v) && v != y)
        .collect();
    emit(x, t);
    sub_enumerate(&h, y, &order, VarSet::EMPTY, emit);
}

fn sub_enumerate(
    g: &Diagram,
    y: VarId,
    order: &[VarId],
    observed: VarSet,
    emit: &mut dyn FnMut(VarSet, VarSet),
) {
    for (i, &xi) in order.iter().enumerate() {
        let (t, x) = muct_ib(&g.cut_incoming(VarSet::singleton(xi)), y);
        let seen = observed | order[..i].iter().copied().collect::<VarSet>();
        if x.intersects(seen) {
            continue;
        }
        emit(x, t);
        let rest: Vec<VarId> = order[i + 1..]
            .iter()
            .copied()
            .filter(|&v| t.contains(v))
            .collect();
        if !rest.is_empty() {
            let h = g.cut_incoming(x).subgraph(t | x);
            sub_enumerate(&h, y, &rest, seen, emit);
        }
    }
}

/// All minimal intervention sets under `ctx`: sets whose every member has a
/// directed path to the reward that avoids the rest of the set.
pub fn miss(ctx: &ActionSpaceContext) -> Vec<VarSet> {
    let g = ctx.projected();
    let y = ctx.reward;
    let candidates = g.ancestors(VarSet::singleton(y)) - VarSet::singleton(y) - ctx.non_manipulable;
    let out: Vec<VarSet> = candidates.subsets().filter(|&x| is_mis(&g, y, x)).collect();
    finish(out)
}

/// `X ⊆ An(Y)` in `G_overline{X}`.
pub fn is_mis(g: &Diagram, y: VarId, x: VarSet) -> bool {
    !x.contains(y) && x.is_subset(g.cut_incoming(x).ancestors(VarSet::singleton(y)))
}

/// The POMIS equivalent to the POIS `r`: `IB(G_overline{r}, Y)`.
pub fn pomis_equivalent(g: &Diagram, y: VarId, r: VarSet) -> Result<VarSet, SetError> {
    let dagger = ib(&g.cut_incoming(r), y);
    let t = muct(&g.cut_incoming(dagger), y);
    let top = g.subgraph(g.ancestors(VarSet::singleton(y)));
    let ok = is_pomis(g, y, dagger) && dagger.is_subset(r) && r.is_subset(top.ancestors(t) - t);
    if ok {
        Ok(dagger)
    } else {
        Err(SetError::NotPois(g.fmt_set(r)))
    }
}

/// Every value assignment of every set, canonical order.
pub fn actions_of(sets: &[VarSet]) -> Vec<Assignment> {
    let mut out: Vec<Assignment> = sets.iter().flat_map(|&s| Assignment::all(s)).collect();
    out.sort_by(|a, b| a.canonical_cmp(b));
    out.dedup();
    out
}

/// Every assignment over every subset of `vars` (the unrestricted arm set).
pub fn all_actions(vars: VarSet) -> Vec<Assignment> {
    let sets: Vec<VarSet> = vars.subsets().collect();
    actions_of(&sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_var() -> Diagram {
        Diagram::from_edges(
            &["A", "B", "C", "D", "Y"],
            &[
                ("A", "B"),
                ("A", "C"),
                ("C", "D"),
                ("B", "D"),
                ("D", "Y"),
                ("B", "Y"),
            ],
            &[("C", "Y")],
        )
        .unwrap()
    }

    #[test]
    fn muct_and_ib_on_five_var() {
        let g = five_var();
        let y = g.id("Y").unwrap();
        assert_eq!(muct(&g, y), g.set(&["C", "D", "Y"]).unwrap());
        assert_eq!(ib(&g, y), g.set(&["A", "B"]).unwrap());
        let bd = g.set(&["B", "D"]).unwrap();
        let h = g.cut_incoming(bd);
        assert_eq!(muct(&h, y), VarSet::singleton(y));
        assert_eq!(ib(&h, y), bd);
        assert!(is_pomis(&g, y, bd));
        assert!(!is_pomis(&g, y, g.set(&["B", "C"]).unwrap()));
    }

    #[test]
    fn isolated_reward() {
        let g = Diagram::new(&["A", "Y"]).unwrap();
        assert_eq!(ib(&g, 1), VarSet::EMPTY);
        assert_eq!(muct(&g, 1), VarSet::singleton(1));
        assert!(is_pomis(&g, 1, VarSet::EMPTY));
    }

    #[test]
    fn mis_always_contains_empty() {
        let g = five_var();
        let ctx = ActionSpaceContext::new(g.clone(), g.id("Y").unwrap(), VarSet::EMPTY).unwrap();
        let m = miss(&ctx);
        assert_eq!(m[0], VarSet::EMPTY);
        assert!(!m.contains(&g.set(&["A", "B", "D"]).unwrap()));
    }

    #[test]
    fn pomis_equivalent_of_five_var_pois() {
        let g = five_var();
        let y = g.id("Y").unwrap();
        let bd = g.set(&["B", "D"]).unwrap();
        assert_eq!(
            pomis_equivalent(&g, y, g.set(&["A", "B", "C", "D"]).unwrap()),
            Ok(bd)
        );
        assert_eq!(
            pomis_equivalent(&g, y, g.set(&["B", "C", "D"]).unwrap()),
            Ok(bd)
        );
        assert_eq!(pomis_equivalent(&g, y, bd), Ok(bd));
    }

    #[test]
    fn action_counts() {
        let vars = VarSet::full(2);
        // ∅ (1) + two singletons (2 each) + pair (4)
        assert_eq!(all_actions(vars).len(), 9);
    }
}
