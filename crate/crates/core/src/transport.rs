//! Transport of interventional quantities from source environments.
//!
//! [`Transport::patr`] enumerates symbolic expressions ([`BoundExpr`]) that
//! under- or over-estimate a target interventional probability, built from
//! c-factor factorization, source matches, Tian-style identification and
//! natural bounds. [`Transport::causal_bound`] evaluates them against a
//! [`SourceStore`] and keeps the tightest interval.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{Diagram, GraphError, VarId, VarSet};
use crate::scm::{Assignment, DiscreteModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("no source table for environment {env}, intervention {z:?} = {zval:#b}")]
    MissingSource { env: usize, z: VarSet, zval: u64 },
    #[error("{priors} prior lists but {sources} source models")]
    SourceCount { priors: usize, sources: usize },
    #[error("{priors} prior lists but {envs} selection records")]
    EnvironmentCount { priors: usize, envs: usize },
    #[error("source model variables do not match the diagram")]
    VariableMismatch,
    #[error("reward must be binary and outside the intervention")]
    RewardIntervened,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Intervention sets available from each source environment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PriorSpec {
    pub sets: Vec<Vec<VarSet>>,
}

impl PriorSpec {
    pub fn n_envs(&self) -> usize {
        self.sets.len()
    }

    /// The same collection with one extra set for `env`.
    pub fn with(&self, env: usize, z: VarSet) -> PriorSpec {
        let mut p = self.clone();
        if !p.sets[env].contains(&z) {
            p.sets[env].push(z);
        }
        p
    }
}

/// Source distributions `P^i_z(v)`, one dense table per `(env, Z, z)`.
#[derive(Clone, Debug, Default)]
pub struct SourceStore {
    tables: HashMap<(usize, VarSet, u64), Arc<[f64]>>,
}

impl SourceStore {
    /// Exact tables for every prior of every environment.
    pub fn from_models(
        g: &Diagram,
        models: &[DiscreteModel],
        priors: &PriorSpec,
    ) -> Result<Self, TransportError> {
        if models.len() != priors.n_envs() {
            return Err(TransportError::SourceCount {
                priors: priors.n_envs(),
                sources: models.len(),
            });
        }
        let mut store = SourceStore::default();
        for (env, (m, sets)) in models.iter().zip(&priors.sets).enumerate() {
            if **m.endogenous() != **g.names() {
                return Err(TransportError::VariableMismatch);
            }
            for &z in sets {
                for a in Assignment::all(z) {
                    let t = m.exact_distribution(&a);
                    store.insert(env, z, a.values.bits(), t.probs);
                }
            }
        }
        Ok(store)
    }

    pub fn insert(&mut self, env: usize, z: VarSet, zval: u64, table: Vec<f64>) {
        self.tables.insert((env, z, zval & z.bits()), table.into());
    }

    pub fn get(&self, env: usize, z: VarSet, zval: u64) -> Result<&Arc<[f64]>, TransportError> {
        let zval = zval & z.bits();
        self.tables
            .get(&(env, z, zval))
            .ok_or(TransportError::MissingSource { env, z, zval })
    }
}

/// Symbolic transport formula. Free variables read their values from an
/// evaluation context (a value mask); `Sum` and `OneMinusSum` bind their
/// index variables.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundExpr {
    /// `P^env_{z}(joint | cond)`. Members of `z_ctx` take context values;
    /// the rest of `z` lies outside the current graph and is fixed at 0.
    SourceProb {
        env: usize,
        z: VarSet,
        z_ctx: VarSet,
        joint: VarSet,
        cond: VarSet,
    },
    Sum {
        index: VarSet,
        child: Box<BoundExpr>,
    },
    Product(Vec<BoundExpr>),
    /// Quotient with `0/0 = 0`.
    Ratio(Box<BoundExpr>, Box<BoundExpr>),
    Add(Vec<BoundExpr>),
    Constant(f64),
    /// `1 − Σ_index child`.
    OneMinusSum {
        index: VarSet,
        child: Box<BoundExpr>,
    },
    ClipAtOne(Box<BoundExpr>),
}

impl BoundExpr {
    pub fn source(env: usize, z: VarSet, z_ctx: VarSet, joint: VarSet) -> BoundExpr {
        BoundExpr::SourceProb {
            env,
            z,
            z_ctx,
            joint,
            cond: VarSet::EMPTY,
        }
    }

    /// `Σ_index child`, folding sums of raw source probabilities into marginals.
    pub fn sum(index: VarSet, child: BoundExpr) -> BoundExpr {
        if index.is_empty() {
            return child;
        }
        match child {
            BoundExpr::SourceProb {
                env,
                z,
                z_ctx,
                joint,
                cond,
            } if index.is_subset(joint) => {
                let joint = joint - index;
                if joint.is_empty() && cond.is_empty() {
                    BoundExpr::Constant(1.0)
                } else {
                    BoundExpr::SourceProb {
                        env,
                        z,
                        z_ctx,
                        joint,
                        cond,
                    }
                }
            }
            BoundExpr::Sum {
                index: inner,
                child,
            } if !inner.intersects(index) => BoundExpr::Sum {
                index: inner | index,
                child,
            },
            child => BoundExpr::Sum {
                index,
                child: Box::new(child),
            },
        }
    }

    /// `num / den`, folding marginal-over-marginal quotients into conditionals.
    pub fn ratio(num: BoundExpr, den: BoundExpr) -> BoundExpr {
        match (&num, &den) {
            (
                BoundExpr::SourceProb {
                    env: e1,
                    z: z1,
                    z_ctx: c1,
                    joint: j1,
                    cond: k1,
                },
                BoundExpr::SourceProb {
                    env: e2,
                    z: z2,
                    z_ctx: c2,
                    joint: j2,
                    cond: k2,
                },
            ) if e1 == e2 && z1 == z2 && c1 == c2 && k1 == k2 && j2.is_subset(*j1) => {
                BoundExpr::SourceProb {
                    env: *e1,
                    z: *z1,
                    z_ctx: *c1,
                    joint: *j1 - *j2,
                    cond: *k1 | *j2,
                }
            }
            (_, BoundExpr::Constant(c)) if *c == 1.0 => num,
            _ => BoundExpr::Ratio(Box::new(num), Box::new(den)),
        }
    }

    pub fn product(mut factors: Vec<BoundExpr>) -> BoundExpr {
        factors.retain(|f| *f != BoundExpr::Constant(1.0));
        match factors.len() {
            0 => BoundExpr::Constant(1.0),
            1 => factors.pop().unwrap(),
            _ => {
                let mut flat = Vec::with_capacity(factors.len());
                for f in factors {
                    match f {
                        BoundExpr::Product(inner) => flat.extend(inner),
                        f => flat.push(f),
                    }
                }
                BoundExpr::Product(flat)
            }
        }
    }

    /// Variables whose values must come from the context.
    pub fn free_vars(&self) -> VarSet {
        match self {
            BoundExpr::SourceProb {
                z_ctx, joint, cond, ..
            } => *z_ctx | *joint | *cond,
            BoundExpr::Sum { index, child } | BoundExpr::OneMinusSum { index, child } => {
                child.free_vars() - *index
            }
            BoundExpr::Product(xs) | BoundExpr::Add(xs) => {
                xs.iter().fold(VarSet::EMPTY, |a, x| a | x.free_vars())
            }
            BoundExpr::Ratio(a, b) => a.free_vars() | b.free_vars(),
            BoundExpr::Constant(_) => VarSet::EMPTY,
            BoundExpr::ClipAtOne(a) => a.free_vars(),
        }
    }

    /// Human-readable rendering, e.g. `Σ_{a,c} P^2_{c}(a)·P^1(c|a,b)`.
    /// Environments print 1-based.
    pub fn render(&self, names: &[String]) -> String {
        let set = |s: VarSet| -> String {
            s.iter()
                .map(|v| names[v].to_lowercase())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            BoundExpr::SourceProb {
                env,
                z,
                joint,
                cond,
                ..
            } => {
                let sub = if z.is_empty() {
                    String::new()
                } else {
                    format!("_{{{}}}", set(*z))
                };
                let bar = if cond.is_empty() {
                    String::new()
                } else {
                    format!("|{}", set(*cond))
                };
                format!("P^{}{}({}{})", env + 1, sub, set(*joint), bar)
            }
            BoundExpr::Sum { index, child } => {
                format!("Σ_{{{}}}[{}]", set(*index), child.render(names))
            }
            BoundExpr::Product(xs) => xs
                .iter()
                .map(|x| x.render(names))
                .collect::<Vec<_>>()
                .join("·"),
            BoundExpr::Ratio(a, b) => format!("({})/({})", a.render(names), b.render(names)),
            BoundExpr::Add(xs) => format!(
                "({})",
                xs.iter()
                    .map(|x| x.render(names))
                    .collect::<Vec<_>>()
                    .join(" + ")
            ),
            BoundExpr::Constant(c) => format!("{c}"),
            BoundExpr::OneMinusSum { index, child } => {
                if index.is_empty() {
                    format!("1 - {}", child.render(names))
                } else {
                    format!("1 - Σ_{{{}}}[{}]", set(*index), child.render(names))
                }
            }
            BoundExpr::ClipAtOne(a) => format!("min{{1, {}}}", a.render(names)),
        }
    }

    /// Resolve every source leaf against `store` for fast repeated evaluation.
    pub fn compile(&self, store: &SourceStore) -> Result<CompiledExpr, TransportError> {
        let mut cache = HashMap::new();
        self.compile_with(store, &mut cache)
    }

    fn compile_with(
        &self,
        store: &SourceStore,
        cache: &mut HashMap<(usize, VarSet, u64, VarSet), Arc<[f64]>>,
    ) -> Result<CompiledExpr, TransportError> {
        Ok(match self {
            BoundExpr::SourceProb {
                env,
                z,
                z_ctx,
                joint,
                cond,
            } => {
                let mut tables = Vec::with_capacity(1 << z_ctx.len());
                for k in 0..1u64 << z_ctx.len() {
                    let zval = z_ctx.deposit(k);
                    let num = marginal_table(store, cache, *env, *z, zval, *joint | *cond)?;
                    let den = if cond.is_empty() {
                        None
                    } else {
                        Some(marginal_table(store, cache, *env, *z, zval, *cond)?)
                    };
                    tables.push((num, den));
                }
                CompiledExpr::Prob {
                    z_ctx: *z_ctx,
                    scope: (*joint | *cond).bits(),
                    cond: cond.bits(),
                    tables,
                }
            }
            BoundExpr::Sum { index, child } => {
                CompiledExpr::Sum(*index, Box::new(child.compile_with(store, cache)?))
            }
            BoundExpr::Product(xs) => CompiledExpr::Product(
                xs.iter()
                    .map(|x| x.compile_with(store, cache))
                    .collect::<Result<_, _>>()?,
            ),
            BoundExpr::Ratio(a, b) => CompiledExpr::Ratio(
                Box::new(a.compile_with(store, cache)?),
                Box::new(b.compile_with(store, cache)?),
            ),
            BoundExpr::Add(xs) => CompiledExpr::Add(
                xs.iter()
                    .map(|x| x.compile_with(store, cache))
                    .collect::<Result<_, _>>()?,
            ),
            BoundExpr::Constant(c) => CompiledExpr::Constant(*c),
            BoundExpr::OneMinusSum { index, child } => {
                CompiledExpr::OneMinusSum(*index, Box::new(child.compile_with(store, cache)?))
            }
            BoundExpr::ClipAtOne(a) => {
                CompiledExpr::ClipAtOne(Box::new(a.compile_with(store, cache)?))
            }
        })
    }

    /// One-shot evaluation at context `ctx`.
    pub fn evaluate(&self, store: &SourceStore, ctx: u64) -> Result<f64, TransportError> {
        Ok(self.compile(store)?.eval(ctx))
    }
}

fn marginal_table(
    store: &SourceStore,
    cache: &mut HashMap<(usize, VarSet, u64, VarSet), Arc<[f64]>>,
    env: usize,
    z: VarSet,
    zval: u64,
    scope: VarSet,
) -> Result<Arc<[f64]>, TransportError> {
    let key = (env, z, zval & z.bits(), scope);
    if let Some(t) = cache.get(&key) {
        return Ok(t.clone());
    }
    let full = store.get(env, z, zval)?;
    let m = scope.bits() as usize;
    let mut out = vec![0.0; full.len()];
    for (i, p) in full.iter().enumerate() {
        out[i & m] += p;
    }
    let out: Arc<[f64]> = out.into();
    cache.insert(key, out.clone());
    Ok(out)
}

/// Numerator table and optional conditioning marginal for one `z` context.
pub type TablePair = (Arc<[f64]>, Option<Arc<[f64]>>);

/// A [`BoundExpr`] with source tables resolved.
#[derive(Clone, Debug)]
pub enum CompiledExpr {
    Prob {
        z_ctx: VarSet,
        scope: u64,
        cond: u64,
        tables: Vec<TablePair>,
    },
    Sum(VarSet, Box<CompiledExpr>),
    Product(Vec<CompiledExpr>),
    Ratio(Box<CompiledExpr>, Box<CompiledExpr>),
    Add(Vec<CompiledExpr>),
    Constant(f64),
    OneMinusSum(VarSet, Box<CompiledExpr>),
    ClipAtOne(Box<CompiledExpr>),
}

impl CompiledExpr {
    pub fn eval(&self, ctx: u64) -> f64 {
        match self {
            CompiledExpr::Prob {
                z_ctx,
                scope,
                cond,
                tables,
            } => {
                let k = compact(ctx, *z_ctx);
                let (num, den) = &tables[k as usize];
                let p = num[(ctx & scope) as usize];
                match den {
                    None => p,
                    Some(d) => {
                        let q = d[(ctx & cond) as usize];
                        if q == 0.0 {
                            0.0
                        } else {
                            p / q
                        }
                    }
                }
            }
            CompiledExpr::Sum(index, child) => sum_over(*index, ctx, child),
            CompiledExpr::Product(xs) => {
                let mut acc = 1.0;
                for x in xs {
                    acc *= x.eval(ctx);
                    if acc == 0.0 {
                        break;
                    }
                }
                acc
            }
            CompiledExpr::Ratio(a, b) => {
                let d = b.eval(ctx);
                if d == 0.0 {
                    0.0
                } else {
                    a.eval(ctx) / d
                }
            }
            CompiledExpr::Add(xs) => xs.iter().map(|x| x.eval(ctx)).sum(),
            CompiledExpr::Constant(c) => *c,
            CompiledExpr::OneMinusSum(index, child) => 1.0 - sum_over(*index, ctx, child),
            CompiledExpr::ClipAtOne(a) => a.eval(ctx).min(1.0),
        }
    }
}

fn sum_over(index: VarSet, ctx: u64, child: &CompiledExpr) -> f64 {
    let base = ctx & !index.bits();
    let mut total = 0.0;
    let mut sub = 0u64;
    loop {
        total += child.eval(base | sub);
        if sub == index.bits() {
            break;
        }
        sub = sub.wrapping_sub(index.bits()) & index.bits();
    }
    total
}

/// Gather the bits of `ctx` at the members of `set` into the low bits.
fn compact(ctx: u64, set: VarSet) -> u64 {
    let mut out = 0;
    for (i, v) in set.iter().enumerate() {
        out |= (ctx >> v & 1) << i;
    }
    out
}

/// Which side of the interval an enumeration targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
}

/// An expression together with whether it is an identity (no natural-bound term).
#[derive(Clone, Debug, PartialEq)]
pub struct Derivation {
    pub expr: BoundExpr,
    pub exact: bool,
}

/// A reward interval; `upper` may be `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const UNBOUNDED: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn exact(v: f64) -> Bounds {
        Bounds { lower: v, upper: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.lower - tol <= v && v <= self.upper + tol
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.upper.is_infinite() {
            write!(f, "[{:.4}, inf)", self.lower)
        } else {
            write!(f, "[{:.4}, {:.4}]", self.lower, self.upper)
        }
    }
}

/// Result of [`Transport::causal_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundResult {
    pub bounds: Bounds,
    pub transportable: bool,
    pub n_expressions: usize,
}

/// Cap on combined expressions per factorization step.
const MAX_COMBINATIONS: usize = 4096;

type MemoKey = (VarSet, VarSet, VarSet, Side);

/// Expression enumeration over one selection diagram and its prior sets.
pub struct Transport {
    g: Diagram,
    priors: PriorSpec,
    memo: RefCell<HashMap<MemoKey, Rc<Vec<Derivation>>>>,
}

impl Transport {
    /// `g` must carry one selection record per prior list.
    pub fn new(g: Diagram, priors: PriorSpec) -> Result<Self, TransportError> {
        if g.selection().len() != priors.n_envs() {
            return Err(TransportError::EnvironmentCount {
                priors: priors.n_envs(),
                envs: g.selection().len(),
            });
        }
        for sets in &priors.sets {
            for &z in sets {
                g.check(z)?;
            }
        }
        Ok(Transport {
            g,
            priors,
            memo: RefCell::new(HashMap::new()),
        })
    }

    pub fn diagram(&self) -> &Diagram {
        &self.g
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    /// Expressions for `P*_x(y)` on the full diagram.
    pub fn patr(&self, y: VarSet, x: VarSet, side: Side) -> Vec<Derivation> {
        self.patr_in(y, x, self.g.vertices(), side).as_ref().clone()
    }

    fn patr_in(&self, y: VarSet, x: VarSet, v: VarSet, side: Side) -> Rc<Vec<Derivation>> {
        let key = (y, x, v, side);
        if let Some(hit) = self.memo.borrow().get(&key) {
            return hit.clone();
        }
        let out = Rc::new(self.patr_step(y, x, v, side));
        self.memo.borrow_mut().insert(key, out.clone());
        out
    }

    fn patr_step(&self, y: VarSet, x: VarSet, v: VarSet, side: Side) -> Vec<Derivation> {
        let g = self.g.subgraph(v);
        let x = x & v;

        // Direct match with a source whose discrepancies cannot reach y.
        let mut direct = Vec::new();
        let cut = g.remove(x);
        for (env, sets) in self.priors.sets.iter().enumerate() {
            for &z in sets {
                if z & v != x {
                    continue;
                }
                if cut
                    .selection_d_separated(env, y, VarSet::EMPTY)
                    .unwrap_or(false)
                {
                    direct.push(Derivation {
                        expr: BoundExpr::source(env, z, z & v, y),
                        exact: true,
                    });
                }
            }
        }
        if !direct.is_empty() {
            return direct;
        }

        // Drop non-ancestors of y.
        let anc = g.ancestors(y);
        if anc != v {
            return self.patr_in(y, x & anc, anc, side).as_ref().clone();
        }

        // Intervene on everything that stops mattering once x is fixed.
        let w = (v - x) - g.cut_incoming(x).ancestors(y);
        if !w.is_empty() {
            return self.patr_in(y, x | w, v, side).as_ref().clone();
        }

        // Factorize over c-components of G ∖ x.
        let comps = cut.c_components();
        if comps.len() > 1 {
            let mut lists = Vec::with_capacity(comps.len());
            for &c in &comps {
                let l = self.patr_in(c, v - c, v, side);
                if l.is_empty() {
                    return Vec::new();
                }
                lists.push(dedup(&l));
            }
            let outer = v - (y | x);
            return cartesian(&lists)
                .into_iter()
                .map(|parts| {
                    let exact = parts.iter().all(|d| d.exact);
                    let expr = BoundExpr::sum(
                        outer,
                        BoundExpr::product(parts.into_iter().map(|d| d.expr).collect()),
                    );
                    Derivation { expr, exact }
                })
                .collect();
        }

        // Delegate to identification within an eligible source.
        let mut out = Vec::new();
        let rest = v - x;
        for (env, sets) in self.priors.sets.iter().enumerate() {
            if g.selection()[env].intersects(rest) {
                continue;
            }
            for &z in sets {
                let zv = z & v;
                if !zv.is_subset(x) {
                    continue;
                }
                let p = BoundExpr::source(env, z, zv, v - zv);
                out.push(paid(y, x - zv, p, &g.remove(zv), side));
            }
        }
        out
    }

    /// Bounds on `E*[Y | do(action)]` from the sources in `store`.
    pub fn causal_bound(
        &self,
        y: VarId,
        action: &Assignment,
        store: &SourceStore,
    ) -> Result<BoundResult, TransportError> {
        if action.vars.contains(y) {
            return Err(TransportError::RewardIntervened);
        }
        let ys = VarSet::singleton(y);
        let lower = self.patr(ys, action.vars, Side::Lower);
        let upper = self.patr(ys, action.vars, Side::Upper);
        if lower.is_empty() {
            return Ok(BoundResult {
                bounds: Bounds::UNBOUNDED,
                transportable: false,
                n_expressions: 0,
            });
        }
        let base = action.values.bits() | ys.bits();
        let fixed = action.vars | ys;

        if let Some(d) = lower.iter().find(|d| d.exact) {
            let slack = d.expr.free_vars() - fixed;
            let v = d
                .expr
                .compile(store)?
                .eval(base & !slack.bits())
                .clamp(0.0, 1.0);
            return Ok(BoundResult {
                bounds: Bounds::exact(v),
                transportable: true,
                n_expressions: lower.len(),
            });
        }

        let mut lo = 0.0f64;
        for d in &lower {
            let c = d.expr.compile(store)?;
            let slack = d.expr.free_vars() - fixed;
            for s in slack.subsets() {
                lo = lo.max(c.eval(base | s.bits()));
            }
        }
        let mut hi = f64::INFINITY;
        for d in &upper {
            let c = d.expr.compile(store)?;
            let slack = d.expr.free_vars() - fixed;
            for s in slack.subsets() {
                hi = hi.min(c.eval(base | s.bits()).min(1.0));
            }
        }
        Ok(BoundResult {
            bounds: Bounds {
                lower: lo.min(1.0),
                upper: hi,
            },
            transportable: false,
            n_expressions: lower.len(),
        })
    }

    /// Whether some derivation identifies `P*_x(y)` exactly.
    pub fn is_transportable(&self, y: VarId, x: VarSet) -> bool {
        self.patr(VarSet::singleton(y), x, Side::Lower)
            .iter()
            .any(|d| d.exact)
    }
}

fn dedup(list: &[Derivation]) -> Vec<Derivation> {
    let mut out: Vec<Derivation> = Vec::with_capacity(list.len());
    for d in list {
        if !out.contains(d) {
            out.push(d.clone());
        }
    }
    out
}

fn cartesian(lists: &[Vec<Derivation>]) -> Vec<Vec<Derivation>> {
    let mut acc: Vec<Vec<Derivation>> = vec![Vec::new()];
    for l in lists {
        let mut next = Vec::with_capacity(acc.len() * l.len());
        'outer: for prefix in &acc {
            for d in l {
                if next.len() >= MAX_COMBINATIONS {
                    break 'outer;
                }
                let mut p = prefix.clone();
                p.push(d.clone());
                next.push(p);
            }
        }
        acc = next;
    }
    acc
}

/// Identification (or natural bounds) of `P_x(y)` from a distribution `p`
/// over the vertices of `g`. Assumes `g ∖ x` is one c-component and every
/// non-`x` vertex is an ancestor of `y` once `x` is fixed.
fn paid(y: VarSet, x: VarSet, p: BoundExpr, g: &Diagram, side: Side) -> Derivation {
    let v = g.vertices();
    if x.is_empty() {
        return Derivation {
            expr: BoundExpr::sum(v - y, p),
            exact: true,
        };
    }
    let anc = g.ancestors(y);
    if anc != v {
        return paid(
            y,
            x & anc,
            BoundExpr::sum(v - anc, p),
            &g.subgraph(anc),
            side,
        );
    }
    let comps = g.c_components();
    if comps.len() == 1 {
        let outer = v - (y | x);
        let expr = match side {
            Side::Lower => BoundExpr::sum(outer, p),
            Side::Upper => {
                let slack = BoundExpr::OneMinusSum {
                    index: v - x,
                    child: Box::new(p.clone()),
                };
                BoundExpr::sum(outer, BoundExpr::Add(vec![p, slack]))
            }
        };
        return Derivation { expr, exact: false };
    }
    let c = v - x;
    if comps.contains(&c) {
        return Derivation {
            expr: BoundExpr::sum(c - y, c_factor_expr(&p, c, g)),
            exact: true,
        };
    }
    let host = *comps
        .iter()
        .find(|comp| c.is_subset(**comp))
        .expect("the non-intervened part lies in one c-component");
    let q = c_factor_expr(&p, host, g);
    paid(y, x & host, q, &g.subgraph(host), side)
}

/// `Q[C] = ∏_{V_i ∈ C} P(v_i | v^{<i})` over the topological order of `g`.
fn c_factor_expr(p: &BoundExpr, c: VarSet, g: &Diagram) -> BoundExpr {
    let order = g.topological_order();
    let mut factors = Vec::new();
    let mut after = g.vertices();
    for &vi in &order {
        let from_i = after;
        after.remove(vi);
        if c.contains(vi) {
            factors.push(BoundExpr::ratio(
                BoundExpr::sum(after, p.clone()),
                BoundExpr::sum(from_i, p.clone()),
            ));
        }
    }
    BoundExpr::product(factors)
}

/// C-components of `G[An(y)_{G_underline{x}} ∖ x]`: the factors of
/// `E[Y | do(x)] = Σ y ∏ Q[C_q]`.
pub fn q_factor_decompose(g: &Diagram, x: VarSet, y: VarId) -> Vec<VarSet> {
    let plus = g.cut_outgoing(x).ancestors(VarSet::singleton(y));
    g.subgraph(plus - x).c_components()
}

/// Numeric Tian identification of `Q[C]` from `Q[T]`. Tables are indexed by
/// full value masks over `g`'s name table. Returns `None` when `Q[C]` is not
/// identifiable from `Q[T]` by ancestral marginalization and c-factor quotients.
pub fn q_identify(c: VarSet, t: VarSet, q: &[f64], g: &Diagram) -> Option<Vec<f64>> {
    let parts = g.subgraph(c).c_components();
    if parts.len() > 1 {
        let mut out = vec![1.0; q.len()];
        for part in parts {
            let f = q_identify(part, t, q, g)?;
            for (o, v) in out.iter_mut().zip(f) {
                *o *= v;
            }
        }
        return Some(out);
    }
    let gt = g.subgraph(t);
    let a = gt.ancestors(c);
    if a == c {
        return Some(marginalize(q, t - c));
    }
    if a == t {
        return None;
    }
    let qa = marginalize(q, t - a);
    let ga = g.subgraph(a);
    let host = ga.c_component_of(c.first()?);
    if !c.is_subset(host) {
        return None;
    }
    let qh = c_factor_table(&qa, host, &ga);
    q_identify(c, host, &qh, g)
}

/// `Σ_s q`, returned on full-width masks (the result ignores the `s` bits).
pub fn marginalize(q: &[f64], s: VarSet) -> Vec<f64> {
    let mut out = vec![0.0; q.len()];
    for (m, o) in out.iter_mut().enumerate() {
        let base = m as u64 & !s.bits();
        *o = (0..1u64 << s.len())
            .map(|k| q[(base | s.deposit(k)) as usize])
            .sum();
    }
    out
}

/// Telescoping c-factor quotient for component `c` of `g` from `Q[V(g)]`.
fn c_factor_table(q: &[f64], c: VarSet, g: &Diagram) -> Vec<f64> {
    let mut out = vec![1.0; q.len()];
    let mut rest = g.vertices();
    let mut den = vec![1.0; q.len()];
    for vi in g.topological_order() {
        rest.remove(vi);
        let num = marginalize(q, rest);
        if c.contains(vi) {
            for ((o, n), d) in out.iter_mut().zip(&num).zip(&den) {
                *o *= if *d == 0.0 { 0.0 } else { n / d };
            }
        }
        den = num;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_folds_into_marginal() {
        let p = BoundExpr::source(0, VarSet::EMPTY, VarSet::EMPTY, VarSet::from_bits(0b111));
        let s = BoundExpr::sum(VarSet::from_bits(0b100), p);
        assert_eq!(
            s,
            BoundExpr::source(0, VarSet::EMPTY, VarSet::EMPTY, VarSet::from_bits(0b011))
        );
    }

    #[test]
    fn ratio_folds_into_conditional() {
        let j = |b| BoundExpr::source(1, VarSet::EMPTY, VarSet::EMPTY, VarSet::from_bits(b));
        let r = BoundExpr::ratio(j(0b011), j(0b001));
        assert_eq!(
            r,
            BoundExpr::SourceProb {
                env: 1,
                z: VarSet::EMPTY,
                z_ctx: VarSet::EMPTY,
                joint: VarSet::from_bits(0b010),
                cond: VarSet::from_bits(0b001),
            }
        );
    }

    #[test]
    fn constant_and_clip() {
        let store = SourceStore::default();
        assert_eq!(BoundExpr::Constant(0.25).evaluate(&store, 0).unwrap(), 0.25);
        let e = BoundExpr::ClipAtOne(Box::new(BoundExpr::Constant(3.0)));
        assert_eq!(e.evaluate(&store, 0).unwrap(), 1.0);
    }

    #[test]
    fn zero_denominator_is_zero() {
        let mut store = SourceStore::default();
        store.insert(0, VarSet::EMPTY, 0, vec![1.0, 0.0, 0.0, 0.0]);
        let e = BoundExpr::SourceProb {
            env: 0,
            z: VarSet::EMPTY,
            z_ctx: VarSet::EMPTY,
            joint: VarSet::from_bits(0b10),
            cond: VarSet::from_bits(0b01),
        };
        assert_eq!(e.evaluate(&store, 0b01).unwrap(), 0.0);
        assert_eq!(e.evaluate(&store, 0b00).unwrap(), 1.0);
    }

    #[test]
    fn missing_source_reported() {
        let store = SourceStore::default();
        let e = BoundExpr::source(2, VarSet::EMPTY, VarSet::EMPTY, VarSet::singleton(0));
        assert!(matches!(
            e.evaluate(&store, 0),
            Err(TransportError::MissingSource { env: 2, .. })
        ));
    }

    #[test]
    fn identify_identity() {
        let g = Diagram::from_edges(&["A", "B"], &[("A", "B")], &[("A", "B")]).unwrap();
        let q = vec![0.1, 0.2, 0.3, 0.4];
        assert_eq!(
            q_identify(g.vertices(), g.vertices(), &q, &g),
            Some(q.clone())
        );
        assert_eq!(q_identify(VarSet::singleton(1), g.vertices(), &q, &g), None);
    }
}
