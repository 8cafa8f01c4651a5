//! Semi-Markovian causal diagrams.
//!
//! Vertices are indexed by position in a lexicographically sorted name table,
//! so every set operation is a bitmask operation and iteration order is
//! deterministic. Subgraphs and projections keep the full name table and
//! shrink the `vertices` mask instead, which keeps ids stable across
//! manipulations.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{BitAnd, BitAndAssign, BitOr, BitOrAssign, Not, Sub, SubAssign};
use std::sync::Arc;

use thiserror::Error;

/// Index of a variable in its diagram's name table.
pub type VarId = usize;

/// Maximum number of variables a name table may hold.
pub const MAX_VARS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("too many variables: {0} (limit {MAX_VARS})")]
    TooManyVariables(usize),
    #[error("edge {from} -> {to} would create a directed cycle")]
    Cycle { from: String, to: String },
    #[error("bidirected edge must join two distinct vertices, got `{0}`")]
    SelfLoop(String),
    #[error("vertex sets must be disjoint: {0}")]
    Overlap(String),
    #[error("set {0} is not contained in the diagram's vertices")]
    NotInDiagram(String),
    #[error("no selection record for environment {0}")]
    UnknownEnvironment(usize),
}

/// A set of variables stored as a bitmask over a diagram's name table.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct VarSet(u64);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub const fn from_bits(bits: u64) -> Self {
        VarSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(v: VarId) -> Self {
        debug_assert!(v < MAX_VARS);
        VarSet(1 << v)
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            VarSet(u64::MAX)
        } else {
            VarSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, v: VarId) -> bool {
        v < MAX_VARS && self.0 >> v & 1 == 1
    }

    pub fn insert(&mut self, v: VarId) {
        self.0 |= 1 << v;
    }

    pub fn remove(&mut self, v: VarId) {
        self.0 &= !(1 << v);
    }

    pub fn with(self, v: VarId) -> Self {
        VarSet(self.0 | 1 << v)
    }

    pub fn without(self, v: VarId) -> Self {
        VarSet(self.0 & !(1 << v))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: VarSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Smallest member.
    pub fn first(self) -> Option<VarId> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as VarId)
    }

    /// Members in increasing order.
    pub fn iter(self) -> VarSetIter {
        VarSetIter(self.0)
    }

    /// Every subset of `self`, starting with the empty set and ending with `self`.
    pub fn subsets(self) -> Subsets {
        Subsets {
            mask: self.0,
            next: Some(0),
        }
    }

    /// Scatter the low bits of `compact` onto the members of `self`, in order.
    ///
    /// Used to enumerate assignments: `set.deposit(k)` for `k in 0..1 << set.len()`
    /// lists every value pattern of `set` as a mask.
    pub fn deposit(self, compact: u64) -> u64 {
        let mut out = 0;
        let mut m = self.0;
        let mut i = 0;
        while m != 0 {
            let low = m & m.wrapping_neg();
            if compact >> i & 1 == 1 {
                out |= low;
            }
            m &= m - 1;
            i += 1;
        }
        out
    }

    /// Canonical set order: smaller sets first, then lexicographic on the
    /// sorted member list.
    pub fn canonical_cmp(self, other: VarSet) -> std::cmp::Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<VarId> for VarSet {
    fn from_iter<I: IntoIterator<Item = VarId>>(iter: I) -> Self {
        let mut s = VarSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl BitOr for VarSet {
    type Output = VarSet;
    fn bitor(self, rhs: VarSet) -> VarSet {
        VarSet(self.0 | rhs.0)
    }
}

impl BitOrAssign for VarSet {
    fn bitor_assign(&mut self, rhs: VarSet) {
        self.0 |= rhs.0;
    }
}

impl BitAnd for VarSet {
    type Output = VarSet;
    fn bitand(self, rhs: VarSet) -> VarSet {
        VarSet(self.0 & rhs.0)
    }
}

impl BitAndAssign for VarSet {
    fn bitand_assign(&mut self, rhs: VarSet) {
        self.0 &= rhs.0;
    }
}

impl Sub for VarSet {
    type Output = VarSet;
    fn sub(self, rhs: VarSet) -> VarSet {
        VarSet(self.0 & !rhs.0)
    }
}

impl SubAssign for VarSet {
    fn sub_assign(&mut self, rhs: VarSet) {
        self.0 &= !rhs.0;
    }
}

impl Not for VarSet {
    type Output = VarSet;
    fn not(self) -> VarSet {
        VarSet(!self.0)
    }
}

pub struct VarSetIter(u64);

impl Iterator for VarSetIter {
    type Item = VarId;
    fn next(&mut self) -> Option<VarId> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as VarId;
        self.0 &= self.0 - 1;
        Some(v)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for VarSetIter {}

pub struct Subsets {
    mask: u64,
    next: Option<u64>,
}

impl Iterator for Subsets {
    type Item = VarSet;
    fn next(&mut self) -> Option<VarSet> {
        let cur = self.next?;
        self.next = if cur == self.mask {
            None
        } else {
            Some((cur.wrapping_sub(self.mask)) & self.mask)
        };
        Some(VarSet(cur))
    }
}

/// A causal diagram over a fixed name table: directed edges, bidirected
/// edges, and per-environment selection targets.
#[derive(Clone, PartialEq, Eq)]
pub struct Diagram {
    names: Arc<[String]>,
    vertices: VarSet,
    parents: Vec<VarSet>,
    spouses: Vec<VarSet>,
    selection: Vec<VarSet>,
}

impl Diagram {
    /// An edgeless diagram. Names are sorted, so ids follow lexicographic order.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, GraphError> {
        let mut sorted: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(GraphError::DuplicateVariable(w[0].clone()));
            }
        }
        if sorted.len() > MAX_VARS {
            return Err(GraphError::TooManyVariables(sorted.len()));
        }
        let n = sorted.len();
        Ok(Diagram {
            names: sorted.into(),
            vertices: VarSet::full(n),
            parents: vec![VarSet::EMPTY; n],
            spouses: vec![VarSet::EMPTY; n],
            selection: Vec::new(),
        })
    }

    /// Build from name lists; edges are `(from, to)` pairs.
    pub fn from_edges<S: AsRef<str>>(
        names: &[S],
        edges: &[(S, S)],
        bidirected: &[(S, S)],
    ) -> Result<Self, GraphError> {
        let mut g = Diagram::new(names)?;
        for (a, b) in edges {
            let (a, b) = (g.id(a.as_ref())?, g.id(b.as_ref())?);
            g.add_edge(a, b)?;
        }
        for (a, b) in bidirected {
            let (a, b) = (g.id(a.as_ref())?, g.id(b.as_ref())?);
            g.add_bidirected(a, b)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, from: VarId, to: VarId) -> Result<(), GraphError> {
        self.check(VarSet::singleton(from) | VarSet::singleton(to))?;
        if from == to || self.descendants(VarSet::singleton(to)).contains(from) {
            return Err(GraphError::Cycle {
                from: self.names[from].clone(),
                to: self.names[to].clone(),
            });
        }
        self.parents[to].insert(from);
        Ok(())
    }

    pub fn add_bidirected(&mut self, a: VarId, b: VarId) -> Result<(), GraphError> {
        self.check(VarSet::singleton(a) | VarSet::singleton(b))?;
        if a == b {
            return Err(GraphError::SelfLoop(self.names[a].clone()));
        }
        self.spouses[a].insert(b);
        self.spouses[b].insert(a);
        Ok(())
    }

    pub fn id(&self, name: &str) -> Result<VarId, GraphError> {
        match self.names.binary_search_by(|n| n.as_str().cmp(name)) {
            Ok(i) if self.vertices.contains(i) => Ok(i),
            _ => Err(GraphError::UnknownVariable(name.to_string())),
        }
    }

    pub fn set<S: AsRef<str>>(&self, names: &[S]) -> Result<VarSet, GraphError> {
        names.iter().map(|n| self.id(n.as_ref())).collect()
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &Arc<[String]> {
        &self.names
    }

    /// Size of the underlying name table (not the vertex count).
    pub fn universe_len(&self) -> usize {
        self.names.len()
    }

    pub fn vertices(&self) -> VarSet {
        self.vertices
    }

    /// `{A,B}` rendering of a set, members in id order.
    pub fn fmt_set(&self, s: VarSet) -> String {
        let parts: Vec<&str> = s.iter().map(|v| self.name(v)).collect();
        format!("{{{}}}", parts.join(","))
    }

    /// Error unless `s` lies inside the vertex set.
    pub fn check(&self, s: VarSet) -> Result<(), GraphError> {
        if s.is_subset(self.vertices) {
            Ok(())
        } else {
            let extra = s - self.vertices;
            Err(GraphError::NotInDiagram(format!(
                "{:?}",
                extra.iter().collect::<Vec<_>>()
            )))
        }
    }

    pub fn parents(&self, v: VarId) -> VarSet {
        self.parents[v]
    }

    pub fn spouses(&self, v: VarId) -> VarSet {
        self.spouses[v]
    }

    pub fn children(&self, v: VarId) -> VarSet {
        self.vertices
            .iter()
            .filter(|&c| self.parents[c].contains(v))
            .collect()
    }

    /// Union of the parents of every member of `s`.
    pub fn parents_of(&self, s: VarSet) -> VarSet {
        s.iter().fold(VarSet::EMPTY, |acc, v| acc | self.parents[v])
    }

    pub fn directed_edges(&self) -> Vec<(VarId, VarId)> {
        let mut out = Vec::new();
        for to in self.vertices.iter() {
            for from in self.parents[to].iter() {
                out.push((from, to));
            }
        }
        out.sort();
        out
    }

    /// Bidirected edges as `(a, b)` with `a < b`.
    pub fn bidirected_edges(&self) -> Vec<(VarId, VarId)> {
        let mut out = Vec::new();
        for a in self.vertices.iter() {
            for b in self.spouses[a].iter() {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Reflexive ancestors of `x`.
    pub fn ancestors(&self, x: VarSet) -> VarSet {
        let mut seen = x;
        let mut frontier = x;
        while !frontier.is_empty() {
            let next = self.parents_of(frontier) - seen;
            seen |= next;
            frontier = next;
        }
        seen
    }

    /// Reflexive descendants of `x`.
    pub fn descendants(&self, x: VarSet) -> VarSet {
        let mut seen = x;
        loop {
            let grow: VarSet = (self.vertices - seen)
                .iter()
                .filter(|&v| self.parents[v].intersects(seen))
                .collect();
            if grow.is_empty() {
                return seen;
            }
            seen |= grow;
        }
    }

    /// Topological order of the vertices; among ready vertices the smallest id goes first.
    pub fn topological_order(&self) -> Vec<VarId> {
        let mut placed = VarSet::EMPTY;
        let mut order = Vec::with_capacity(self.vertices.len());
        while placed != self.vertices {
            let next = (self.vertices - placed)
                .iter()
                .find(|&v| (self.parents[v] & self.vertices).is_subset(placed))
                .expect("directed part is acyclic");
            placed.insert(next);
            order.push(next);
        }
        order
    }

    /// Delete incoming edges (directed and bidirected) of `remove_incoming` and
    /// outgoing directed edges of `remove_outgoing`.
    pub fn manipulate(&self, remove_incoming: VarSet, remove_outgoing: VarSet) -> Diagram {
        let mut g = self.clone();
        for v in remove_incoming.iter() {
            g.parents[v] = VarSet::EMPTY;
            for s in g.spouses[v].iter() {
                g.spouses[s].remove(v);
            }
            g.spouses[v] = VarSet::EMPTY;
        }
        if !remove_outgoing.is_empty() {
            for v in g.vertices.iter() {
                g.parents[v] -= remove_outgoing;
            }
        }
        g
    }

    /// `G_overline{x}`.
    pub fn cut_incoming(&self, x: VarSet) -> Diagram {
        self.manipulate(x, VarSet::EMPTY)
    }

    /// `G_underline{x}`.
    pub fn cut_outgoing(&self, x: VarSet) -> Diagram {
        self.manipulate(VarSet::EMPTY, x)
    }

    /// Vertex-induced subgraph on `c ∩ vertices`.
    pub fn subgraph(&self, c: VarSet) -> Diagram {
        let keep = c & self.vertices;
        let mut g = self.clone();
        g.vertices = keep;
        for v in 0..g.names.len() {
            if keep.contains(v) {
                g.parents[v] &= keep;
                g.spouses[v] &= keep;
            } else {
                g.parents[v] = VarSet::EMPTY;
                g.spouses[v] = VarSet::EMPTY;
            }
        }
        for s in g.selection.iter_mut() {
            *s &= keep;
        }
        g
    }

    /// `G \ x`.
    pub fn remove(&self, x: VarSet) -> Diagram {
        self.subgraph(self.vertices - x)
    }

    /// Latent projection onto `keep`.
    pub fn latent_projection(&self, keep: VarSet) -> Diagram {
        let keep = keep & self.vertices;
        let hidden = self.vertices - keep;
        let children: Vec<VarSet> = (0..self.names.len())
            .map(|v| {
                if self.vertices.contains(v) {
                    self.children(v)
                } else {
                    VarSet::EMPTY
                }
            })
            .collect();
        // Kept vertices reachable from `start` by directed paths whose interior is hidden.
        let reach = |start: VarSet| -> VarSet {
            let mut out = VarSet::EMPTY;
            let mut seen = VarSet::EMPTY;
            let mut stack: Vec<VarId> = start.iter().collect();
            while let Some(v) = stack.pop() {
                for c in children[v].iter() {
                    if keep.contains(c) {
                        out.insert(c);
                    } else if !seen.contains(c) {
                        seen.insert(c);
                        stack.push(c);
                    }
                }
            }
            out
        };
        let entry = |v: VarId| -> VarSet {
            if keep.contains(v) {
                VarSet::singleton(v)
            } else {
                reach(VarSet::singleton(v))
            }
        };

        let mut g = self.subgraph(keep);
        for a in keep.iter() {
            for b in reach(VarSet::singleton(a)).iter() {
                g.parents[b].insert(a);
            }
        }
        let mut join = |set: VarSet| {
            for a in set.iter() {
                g.spouses[a] |= set.without(a);
            }
        };
        for h in hidden.iter() {
            join(reach(VarSet::singleton(h)));
        }
        for (a, b) in self.bidirected_edges() {
            join(entry(a) | entry(b));
        }
        g
    }

    /// C-components, ordered by smallest member.
    pub fn c_components(&self) -> Vec<VarSet> {
        let mut out = Vec::new();
        let mut left = self.vertices;
        while let Some(v) = left.first() {
            let comp = self.c_component_of(v);
            left -= comp;
            out.push(comp);
        }
        out
    }

    /// The c-component containing `v`.
    pub fn c_component_of(&self, v: VarId) -> VarSet {
        let mut comp = VarSet::singleton(v);
        let mut frontier = comp;
        while !frontier.is_empty() {
            let next = frontier
                .iter()
                .fold(VarSet::EMPTY, |acc, u| acc | self.spouses[u])
                - comp;
            comp |= next;
            frontier = next;
        }
        comp
    }

    /// Attach selection targets, one entry per environment.
    pub fn selection_diagram(&self, deltas: &[VarSet]) -> Result<Diagram, GraphError> {
        for &d in deltas {
            self.check(d)?;
        }
        let mut g = self.clone();
        g.selection = deltas.to_vec();
        Ok(g)
    }

    /// Selection targets per environment (restricted to current vertices).
    pub fn selection(&self) -> &[VarSet] {
        &self.selection
    }

    /// `(x ⊥ y | z)` with bidirected edges read as latent common parents.
    pub fn d_separated(&self, x: VarSet, y: VarSet, z: VarSet) -> Result<bool, GraphError> {
        self.check(x | y | z)?;
        self.disjoint(x, y, z)?;
        Ok(self.dsep_engine(x, VarSet::EMPTY, y, z))
    }

    /// `(S^env ⊥ y | z)`, where `S^env` are the selection nodes of one environment.
    pub fn selection_d_separated(
        &self,
        env: usize,
        y: VarSet,
        z: VarSet,
    ) -> Result<bool, GraphError> {
        let targets = *self
            .selection
            .get(env)
            .ok_or(GraphError::UnknownEnvironment(env))?;
        self.check(y | z)?;
        self.disjoint(VarSet::EMPTY, y, z)?;
        Ok(self.dsep_engine(VarSet::EMPTY, targets & self.vertices, y, z))
    }

    fn disjoint(&self, x: VarSet, y: VarSet, z: VarSet) -> Result<(), GraphError> {
        let clash = (x & y) | (x & z) | (y & z);
        if clash.is_empty() {
            Ok(())
        } else {
            Err(GraphError::Overlap(self.fmt_set(clash)))
        }
    }

    /// Moral-ancestral-graph test on the DAG with explicit latent and
    /// selection nodes. `sel_targets` adds one selection node per target to
    /// the source side.
    fn dsep_engine(&self, x: VarSet, sel_targets: VarSet, y: VarSet, z: VarSet) -> bool {
        if (x.is_empty() && sel_targets.is_empty()) || y.is_empty() {
            return true;
        }
        let n = self.names.len();
        let bi = self.bidirected_edges();
        let sel: Vec<VarId> = sel_targets.iter().collect();
        let total = n + bi.len() + sel.len();
        let mut pa: Vec<Vec<usize>> = vec![Vec::new(); total];
        for v in self.vertices.iter() {
            pa[v].extend(self.parents[v].iter());
        }
        for (k, &(a, b)) in bi.iter().enumerate() {
            pa[a].push(n + k);
            pa[b].push(n + k);
        }
        for (k, &t) in sel.iter().enumerate() {
            pa[t].push(n + bi.len() + k);
        }
        let mut source: Vec<usize> = x.iter().collect();
        source.extend((0..sel.len()).map(|k| n + bi.len() + k));

        let mut relevant = vec![false; total];
        let mut stack: Vec<usize> = source.clone();
        stack.extend(y.iter());
        stack.extend(z.iter());
        while let Some(v) = stack.pop() {
            if !relevant[v] {
                relevant[v] = true;
                stack.extend(pa[v].iter().copied());
            }
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
        for v in 0..total {
            if !relevant[v] {
                continue;
            }
            for (i, &p) in pa[v].iter().enumerate() {
                adj[v].push(p);
                adj[p].push(v);
                for &q in &pa[v][i + 1..] {
                    adj[p].push(q);
                    adj[q].push(p);
                }
            }
        }
        let blocked = |v: usize| v < n && z.contains(v);
        let mut seen = vec![false; total];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in source {
            seen[s] = true;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            if v < n && y.contains(v) {
                return false;
            }
            for &w in &adj[v] {
                if !seen[w] && !blocked(w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }
}

impl fmt::Debug for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self
            .directed_edges()
            .into_iter()
            .map(|(a, b)| format!("{}->{}", self.name(a), self.name(b)))
            .collect();
        let bi: Vec<String> = self
            .bidirected_edges()
            .into_iter()
            .map(|(a, b)| format!("{}<->{}", self.name(a), self.name(b)))
            .collect();
        f.debug_struct("Diagram")
            .field("vertices", &self.fmt_set(self.vertices))
            .field("edges", &edges)
            .field("bidirected", &bi)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task1() -> Diagram {
        Diagram::from_edges(
            &["A", "B", "Y"],
            &[("B", "A"), ("A", "Y"), ("B", "Y")],
            &[("A", "Y")],
        )
        .unwrap()
    }

    #[test]
    fn subsets_enumerates_all() {
        let s = VarSet::from_bits(0b1011);
        let all: Vec<u64> = s.subsets().map(|x| x.bits()).collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0], 0);
        assert_eq!(*all.last().unwrap(), 0b1011);
    }

    #[test]
    fn deposit_scatters_bits() {
        let s = VarSet::from_bits(0b10100);
        assert_eq!(s.deposit(0b01), 0b00100);
        assert_eq!(s.deposit(0b10), 0b10000);
        assert_eq!(s.deposit(0b11), 0b10100);
    }

    #[test]
    fn cycle_rejected() {
        let mut g = Diagram::new(&["A", "B"]).unwrap();
        g.add_edge(0, 1).unwrap();
        assert!(matches!(g.add_edge(1, 0), Err(GraphError::Cycle { .. })));
    }

    #[test]
    fn unknown_name() {
        let g = task1();
        assert!(matches!(g.id("Q"), Err(GraphError::UnknownVariable(_))));
    }

    #[test]
    fn ancestors_of_reward() {
        let g = task1();
        let y = g.set(&["Y"]).unwrap();
        assert_eq!(g.ancestors(y), g.vertices());
        let b = g.set(&["B"]).unwrap();
        assert_eq!(g.ancestors(b), b);
        assert_eq!(g.descendants(b), g.vertices());
    }

    #[test]
    fn cut_incoming_drops_bidirected() {
        let g = task1();
        let a = g.set(&["A"]).unwrap();
        let h = g.cut_incoming(a);
        assert!(h.parents(g.id("A").unwrap()).is_empty());
        assert!(h.bidirected_edges().is_empty());
        assert_eq!(g.bidirected_edges().len(), 1);
    }

    #[test]
    fn chain_projection() {
        let g = Diagram::from_edges(&["A", "M", "B"], &[("A", "M"), ("M", "B")], &[]).unwrap();
        let keep = g.set(&["A", "B"]).unwrap();
        let p = g.latent_projection(keep);
        assert_eq!(
            p.directed_edges(),
            vec![(g.id("A").unwrap(), g.id("B").unwrap())]
        );
        assert!(p.bidirected_edges().is_empty());
    }

    #[test]
    fn fork_projection_adds_bidirected() {
        let g = Diagram::from_edges(&["A", "L", "B"], &[("L", "A"), ("L", "B")], &[]).unwrap();
        let p = g.latent_projection(g.set(&["A", "B"]).unwrap());
        assert!(p.directed_edges().is_empty());
        assert_eq!(p.bidirected_edges().len(), 1);
    }

    #[test]
    fn bidirected_into_hidden_chain() {
        // A <-> L -> B projects to A <-> B.
        let g = Diagram::from_edges(&["A", "L", "B"], &[("L", "B")], &[("A", "L")]).unwrap();
        let p = g.latent_projection(g.set(&["A", "B"]).unwrap());
        assert_eq!(p.bidirected_edges().len(), 1);
        assert!(p.directed_edges().is_empty());
    }

    #[test]
    fn collider_through_hidden_is_not_confounding() {
        // A -> L <- B: no edge between A and B after projection.
        let g = Diagram::from_edges(&["A", "L", "B"], &[("A", "L"), ("B", "L")], &[]).unwrap();
        let p = g.latent_projection(g.set(&["A", "B"]).unwrap());
        assert!(p.directed_edges().is_empty());
        assert!(p.bidirected_edges().is_empty());
    }

    #[test]
    fn dsep_basic_patterns() {
        let g = Diagram::from_edges(&["A", "B", "C"], &[("A", "B"), ("C", "B")], &[]).unwrap();
        let (a, b, c) = (
            VarSet::singleton(0),
            VarSet::singleton(1),
            VarSet::singleton(2),
        );
        assert!(g.d_separated(a, c, VarSet::EMPTY).unwrap());
        assert!(!g.d_separated(a, c, b).unwrap());
        assert!(matches!(
            g.d_separated(a, a, VarSet::EMPTY),
            Err(GraphError::Overlap(_))
        ));
    }

    #[test]
    fn dsep_bidirected_is_confounding() {
        let g = Diagram::from_edges(&["A", "B"], &[], &[("A", "B")]).unwrap();
        assert!(!g
            .d_separated(VarSet::singleton(0), VarSet::singleton(1), VarSet::EMPTY)
            .unwrap());
    }

    #[test]
    fn selection_separation() {
        let g = task1().selection_diagram(&[VarSet::singleton(0)]).unwrap();
        let y = g.set(&["Y"]).unwrap();
        assert!(!g.selection_d_separated(0, y, VarSet::EMPTY).unwrap());
        let h = g.remove(g.set(&["A"]).unwrap());
        assert!(h.selection_d_separated(0, y, VarSet::EMPTY).unwrap());
        assert!(g.selection_d_separated(3, y, VarSet::EMPTY).is_err());
    }
}
