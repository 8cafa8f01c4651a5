//! Binary structural causal models.
//!
//! Exogenous variables are independent Bernoulli draws; every endogenous
//! variable is a boolean expression over other endogenous variables and
//! exogenous names. All probabilities come from enumerating exogenous worlds.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Diagram, GraphError, VarId, VarSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("cannot parse mechanism of `{var}`: {msg}")]
    Parse { var: String, msg: String },
    #[error("mechanism of `{var}` references unknown name `{ident}`")]
    UnknownIdentifier { var: String, ident: String },
    #[error("name `{0}` is declared both exogenous and endogenous")]
    NameClash(String),
    #[error("exogenous `{name}` has probability {p} outside [0, 1]")]
    BadProbability { name: String, p: f64 },
    #[error("mechanisms are cyclic through `{0}`")]
    Cyclic(String),
    #[error("reward variable `{0}` is not endogenous")]
    UnknownReward(String),
    #[error("unknown endogenous variable `{0}`")]
    UnknownVariable(String),
    #[error("model has {0} exogenous variables; enumeration supports at most 24")]
    TooManyExogenous(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Boolean mechanism with named leaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoolExpr {
    Const(bool),
    Var(String),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Xor(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    /// Parse `&`, `|`, `^`, `!`, `0`, `1`, identifiers and parentheses.
    /// Precedence, tightest first: `!`, `&`, `^`, `|`. The arithmetic form
    /// `1 - e` is read as `!e`.
    pub fn parse(src: &str) -> Result<BoolExpr, String> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.or()?;
        if p.pos != p.tokens.len() {
            return Err(format!("unexpected token `{}`", p.tokens[p.pos]));
        }
        Ok(e)
    }

    /// Identifiers in first-appearance order, without repeats.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_idents(&mut out);
        out
    }

    fn collect_idents<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            BoolExpr::Const(_) => {}
            BoolExpr::Var(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            BoolExpr::Not(a) => a.collect_idents(out),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) | BoolExpr::Xor(a, b) => {
                a.collect_idents(out);
                b.collect_idents(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            BoolExpr::Const(_) | BoolExpr::Var(_) => 0,
            BoolExpr::Not(a) => a.depth(),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) | BoolExpr::Xor(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Const(b) => write!(f, "{}", *b as u8),
            BoolExpr::Var(n) => write!(f, "{n}"),
            BoolExpr::Not(a) => match **a {
                BoolExpr::Const(_) | BoolExpr::Var(_) | BoolExpr::Not(_) => write!(f, "!{a}"),
                _ => write!(f, "!({a})"),
            },
            BoolExpr::And(a, b) => write!(f, "({a} & {b})"),
            BoolExpr::Or(a, b) => write!(f, "({a} | {b})"),
            BoolExpr::Xor(a, b) => write!(f, "({a} ^ {b})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Zero,
    One,
    Minus,
    And,
    Or,
    Xor,
    Not,
    Open,
    Close,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Token::Ident(n) => n.as_str(),
            Token::Zero => "0",
            Token::One => "1",
            Token::Minus => "-",
            Token::And => "&",
            Token::Or => "|",
            Token::Xor => "^",
            Token::Not => "!",
            Token::Open => "(",
            Token::Close => ")",
        };
        f.write_str(s)
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => {}
            '&' => out.push(Token::And),
            '|' => out.push(Token::Or),
            '^' => out.push(Token::Xor),
            '!' | '~' => out.push(Token::Not),
            '-' => out.push(Token::Minus),
            '(' => out.push(Token::Open),
            ')' => out.push(Token::Close),
            '0' => out.push(Token::Zero),
            '1' => out.push(Token::One),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i + 1 < chars.len()
                    && (chars[i + 1].is_ascii_alphanumeric() || chars[i + 1] == '_')
                {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..=i].iter().collect()));
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, t: &Token) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<BoolExpr, String> {
        let mut lhs = self.xor()?;
        while self.eat(&Token::Or) {
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(self.xor()?));
        }
        Ok(lhs)
    }

    fn xor(&mut self) -> Result<BoolExpr, String> {
        let mut lhs = self.and()?;
        while self.eat(&Token::Xor) {
            lhs = BoolExpr::Xor(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<BoolExpr, String> {
        let mut lhs = self.unary()?;
        while self.eat(&Token::And) {
            lhs = BoolExpr::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<BoolExpr, String> {
        if self.eat(&Token::Not) {
            return Ok(BoolExpr::Not(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Token::One) && self.tokens.get(self.pos + 1) == Some(&Token::Minus)
        {
            self.pos += 2;
            return Ok(BoolExpr::Not(Box::new(self.unary()?)));
        }
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Ident(n)) => {
                self.pos += 1;
                Ok(BoolExpr::Var(n))
            }
            Some(Token::Zero) => {
                self.pos += 1;
                Ok(BoolExpr::Const(false))
            }
            Some(Token::One) => {
                self.pos += 1;
                Ok(BoolExpr::Const(true))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let e = self.or()?;
                if !self.eat(&Token::Close) {
                    return Err("missing `)`".into());
                }
                Ok(e)
            }
            Some(t) => Err(format!("unexpected token `{t}`")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

/// Mechanism with leaves resolved to endogenous or exogenous bit positions.
#[derive(Clone, Debug)]
enum Compiled {
    Const(bool),
    Endo(u32),
    Exo(u32),
    Not(Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
    Or(Box<Compiled>, Box<Compiled>),
    Xor(Box<Compiled>, Box<Compiled>),
}

impl Compiled {
    #[inline]
    fn eval(&self, v: u64, u: u64) -> bool {
        match self {
            Compiled::Const(b) => *b,
            Compiled::Endo(i) => v >> i & 1 == 1,
            Compiled::Exo(i) => u >> i & 1 == 1,
            Compiled::Not(a) => !a.eval(v, u),
            Compiled::And(a, b) => a.eval(v, u) && b.eval(v, u),
            Compiled::Or(a, b) => a.eval(v, u) || b.eval(v, u),
            Compiled::Xor(a, b) => a.eval(v, u) ^ b.eval(v, u),
        }
    }
}

/// A partial assignment: `values ⊆ vars` holds the variables set to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Assignment {
    pub vars: VarSet,
    pub values: VarSet,
}

impl Assignment {
    pub const EMPTY: Assignment = Assignment {
        vars: VarSet::EMPTY,
        values: VarSet::EMPTY,
    };

    pub fn new(vars: VarSet, values: VarSet) -> Self {
        Assignment {
            vars,
            values: values & vars,
        }
    }

    /// Every value pattern of `vars`, in increasing binary order of the
    /// compacted values.
    pub fn all(vars: VarSet) -> impl Iterator<Item = Assignment> {
        (0..1u64 << vars.len())
            .map(move |k| Assignment::new(vars, VarSet::from_bits(vars.deposit(k))))
    }

    pub fn value(&self, v: VarId) -> Option<bool> {
        self.vars.contains(v).then(|| self.values.contains(v))
    }

    /// Canonical order: intervention set first (canonical set order), then values.
    pub fn canonical_cmp(&self, other: &Assignment) -> std::cmp::Ordering {
        self.vars.canonical_cmp(other.vars).then_with(|| {
            let a: Vec<bool> = self.vars.iter().map(|v| self.values.contains(v)).collect();
            let b: Vec<bool> = other
                .vars
                .iter()
                .map(|v| other.values.contains(v))
                .collect();
            a.cmp(&b)
        })
    }

    /// `do(A=0,B=1)` rendering with names from `names`.
    pub fn render(&self, names: &[String]) -> String {
        let parts: Vec<String> = self
            .vars
            .iter()
            .map(|v| format!("{}={}", names[v], self.values.contains(v) as u8))
            .collect();
        format!("do({})", parts.join(","))
    }
}

/// A dense probability table over all endogenous variables, indexed by the
/// bitmask of variables equal to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DistTable {
    pub scope: VarSet,
    pub intervention: Assignment,
    pub probs: Vec<f64>,
}

impl DistTable {
    pub fn prob(&self, mask: u64) -> f64 {
        self.probs[mask as usize]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `P(set = values restricted to set)`.
    pub fn marginal_at(&self, set: VarSet, values: u64) -> f64 {
        let (m, want) = (set.bits(), values & set.bits());
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u64 & m == want)
            .fold(0.0, |acc, (_, p)| acc + p)
    }

    /// Marginal over `set`, indexed by full-width masks (entries outside
    /// `set`'s pattern space stay zero).
    pub fn marginal(&self, set: VarSet) -> Vec<f64> {
        let m = set.bits() as usize;
        let mut out = vec![0.0; self.probs.len()];
        for (i, p) in self.probs.iter().enumerate() {
            out[i & m] += p;
        }
        out
    }

    /// Exact conditional mutual information `I(X; Y | Z)` in nats.
    pub fn conditional_mutual_information(&self, x: VarSet, y: VarSet, z: VarSet) -> f64 {
        let pxyz = self.marginal(x | y | z);
        let pxz = self.marginal(x | z);
        let pyz = self.marginal(y | z);
        let pz = self.marginal(z);
        let full = (x | y | z).bits() as usize;
        let mut cmi = 0.0;
        for (i, &p) in pxyz.iter().enumerate() {
            if i & !full != 0 || p <= 0.0 {
                continue;
            }
            let a = pxz[i & (x | z).bits() as usize];
            let b = pyz[i & (y | z).bits() as usize];
            let c = pz[i & z.bits() as usize];
            cmi += p * (p * c / (a * b)).ln();
        }
        cmi.max(0.0)
    }
}

/// Mechanisms and exogenous parameters in serializable form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub exogenous: BTreeMap<String, f64>,
    pub functions: BTreeMap<String, String>,
    pub reward: String,
}

/// A validated binary SCM.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    endo: Arc<[String]>,
    exo: Vec<String>,
    probs: Vec<f64>,
    mechanisms: Vec<BoolExpr>,
    compiled: Vec<Compiled>,
    order: Vec<VarId>,
    reward: VarId,
}

const MAX_EXOGENOUS: usize = 24;

impl DiscreteModel {
    pub fn from_spec(spec: &ScmSpec) -> Result<Self, ModelError> {
        let mut mechanisms = BTreeMap::new();
        for (var, src) in &spec.functions {
            let e = BoolExpr::parse(src).map_err(|msg| ModelError::Parse {
                var: var.clone(),
                msg,
            })?;
            mechanisms.insert(var.clone(), e);
        }
        Self::build(spec.exogenous.clone(), mechanisms, &spec.reward)
    }

    pub fn to_spec(&self) -> ScmSpec {
        ScmSpec {
            exogenous: self
                .exo
                .iter()
                .cloned()
                .zip(self.probs.iter().copied())
                .collect(),
            functions: self
                .endo
                .iter()
                .cloned()
                .zip(self.mechanisms.iter().map(|m| m.to_string()))
                .collect(),
            reward: self.endo[self.reward].clone(),
        }
    }

    fn build(
        exogenous: BTreeMap<String, f64>,
        mechanisms: BTreeMap<String, BoolExpr>,
        reward: &str,
    ) -> Result<Self, ModelError> {
        for (name, &p) in &exogenous {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(ModelError::BadProbability {
                    name: name.clone(),
                    p,
                });
            }
            if mechanisms.contains_key(name) {
                return Err(ModelError::NameClash(name.clone()));
            }
        }
        if exogenous.len() > MAX_EXOGENOUS {
            return Err(ModelError::TooManyExogenous(exogenous.len()));
        }
        let endo: Vec<String> = mechanisms.keys().cloned().collect();
        let exo: Vec<String> = exogenous.keys().cloned().collect();
        let probs: Vec<f64> = exogenous.values().copied().collect();
        let mechs: Vec<BoolExpr> = mechanisms.into_values().collect();
        let reward = endo
            .binary_search(&reward.to_string())
            .map_err(|_| ModelError::UnknownReward(reward.to_string()))?;

        let compiled = mechs
            .iter()
            .zip(&endo)
            .map(|(m, var)| compile(m, var, &endo, &exo))
            .collect::<Result<Vec<_>, _>>()?;
        let parents: Vec<VarSet> = mechs.iter().map(|m| endo_refs(m, &endo)).collect();
        let order = topo(&parents).ok_or_else(|| {
            let culprit = (0..endo.len())
                .find(|&v| parents[v].contains(v))
                .unwrap_or(0);
            ModelError::Cyclic(endo[culprit].clone())
        })?;
        Ok(DiscreteModel {
            endo: endo.into(),
            exo,
            probs,
            mechanisms: mechs,
            compiled,
            order,
            reward,
        })
    }

    pub fn endogenous(&self) -> &Arc<[String]> {
        &self.endo
    }

    pub fn exogenous(&self) -> impl Iterator<Item = (&str, f64)> {
        self.exo
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    pub fn mechanism(&self, v: VarId) -> &BoolExpr {
        &self.mechanisms[v]
    }

    pub fn reward(&self) -> VarId {
        self.reward
    }

    pub fn n_endogenous(&self) -> usize {
        self.endo.len()
    }

    pub fn id(&self, name: &str) -> Result<VarId, ModelError> {
        self.endo
            .binary_search_by(|n| n.as_str().cmp(name))
            .map_err(|_| ModelError::UnknownVariable(name.to_string()))
    }

    /// Causal diagram implied by the mechanisms.
    pub fn induced_diagram(&self) -> Result<Diagram, ModelError> {
        let mut g = Diagram::new(&self.endo)?;
        for v in 0..self.endo.len() {
            for p in endo_refs(&self.mechanisms[v], &self.endo).iter() {
                g.add_edge(p, v)?;
            }
        }
        let users = self.exo_users();
        for set in users {
            let members: Vec<VarId> = set.iter().collect();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    g.add_bidirected(a, b)?;
                }
            }
        }
        Ok(g)
    }

    /// For each exogenous variable, the endogenous variables that read it.
    fn exo_users(&self) -> Vec<VarSet> {
        let mut users = vec![VarSet::EMPTY; self.exo.len()];
        for (v, m) in self.mechanisms.iter().enumerate() {
            for ident in m.identifiers() {
                if let Ok(j) = self.exo.binary_search_by(|n| n.as_str().cmp(ident)) {
                    users[j].insert(v);
                }
            }
        }
        users
    }

    /// Exact distribution over all endogenous variables under `intervention`.
    pub fn exact_distribution(&self, intervention: &Assignment) -> DistTable {
        let n = self.endo.len();
        let weights = self.world_weights();
        let mut probs = vec![0.0; 1 << n];
        for (u, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            probs[self.solve(u as u64, intervention) as usize] += w;
        }
        DistTable {
            scope: VarSet::full(n),
            intervention: *intervention,
            probs,
        }
    }

    /// `E[Y | do(x)]` for the declared reward.
    pub fn expected_reward(&self, intervention: &Assignment) -> f64 {
        let weights = self.world_weights();
        let bit = self.reward;
        weights
            .iter()
            .enumerate()
            .filter(|(u, _)| self.solve(*u as u64, intervention) >> bit & 1 == 1)
            .fold(0.0, |acc, (_, w)| acc + w)
    }

    /// One draw of the endogenous variables, as a value mask.
    pub fn sample<R: Rng + ?Sized>(&self, intervention: &Assignment, rng: &mut R) -> u64 {
        let mut u = 0u64;
        for (j, &p) in self.probs.iter().enumerate() {
            if rng.gen::<f64>() < p {
                u |= 1 << j;
            }
        }
        self.solve(u, intervention)
    }

    /// Exact c-factor `Q[C](v) = P_{v∖c}(c)`, indexed by full value masks.
    pub fn c_factor(&self, c: VarSet) -> Vec<f64> {
        let n = self.endo.len();
        let rest = VarSet::full(n) - c;
        let mut out = vec![0.0; 1 << n];
        for a in Assignment::all(rest) {
            let table = self.exact_distribution(&a);
            for m in 0..1u64 << c.len() {
                let mask = a.values.bits() | c.deposit(m);
                out[mask as usize] = table.marginal_at(c, mask);
            }
        }
        out
    }

    fn solve(&self, u: u64, intervention: &Assignment) -> u64 {
        let mut v = intervention.values.bits() & intervention.vars.bits();
        for &i in &self.order {
            if intervention.vars.contains(i) {
                continue;
            }
            if self.compiled[i].eval(v, u) {
                v |= 1 << i;
            }
        }
        v
    }

    fn world_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0];
        for &p in &self.probs {
            let mut next = Vec::with_capacity(w.len() * 2);
            next.extend(w.iter().map(|x| x * (1.0 - p)));
            next.extend(w.iter().map(|x| x * p));
            w = next;
        }
        w
    }

    /// Exogenous names read only by `v`.
    fn private_exogenous(&self, v: VarId) -> Vec<String> {
        let users = self.exo_users();
        self.exo
            .iter()
            .zip(users)
            .filter(|(_, u)| *u == VarSet::singleton(v))
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Redraw the mechanisms of `delta`, keeping every parent set and every
    /// shared exogenous variable. Each redrawn variable gets a fresh private
    /// noise term.
    pub fn perturb_mechanisms<R: Rng + ?Sized>(&self, delta: VarSet, rng: &mut R) -> DiscreteModel {
        if delta.is_empty() {
            return self.clone();
        }
        let mut exogenous: BTreeMap<String, f64> = self
            .exo
            .iter()
            .cloned()
            .zip(self.probs.iter().copied())
            .collect();
        let mut mechanisms: BTreeMap<String, BoolExpr> = self
            .endo
            .iter()
            .cloned()
            .zip(self.mechanisms.iter().cloned())
            .collect();
        for v in delta.iter() {
            let private = self.private_exogenous(v);
            let inputs: Vec<String> = self.mechanisms[v]
                .identifiers()
                .into_iter()
                .filter(|id| !private.iter().any(|p| p == id))
                .map(String::from)
                .collect();
            for p in &private {
                exogenous.remove(p);
            }
            let noise = fresh_name(&format!("U_{}", self.endo[v]), &exogenous, &mechanisms);
            exogenous.insert(noise.clone(), rng.gen_range(0.05..0.95));
            mechanisms.insert(self.endo[v].clone(), random_mechanism(&inputs, &noise, rng));
        }
        DiscreteModel::build(exogenous, mechanisms, &self.endo[self.reward])
            .expect("perturbation keeps the dependency structure")
    }

    /// A random model compatible with `g`: one private noise per vertex and
    /// one shared exogenous per bidirected edge, parameters uniform on
    /// `[0.05, 0.95]`.
    pub fn random<R: Rng + ?Sized>(g: &Diagram, reward: VarId, rng: &mut R) -> DiscreteModel {
        let mut exogenous = BTreeMap::new();
        let mut shared: Vec<Vec<String>> = vec![Vec::new(); g.universe_len()];
        let taken: BTreeMap<String, BoolExpr> = BTreeMap::new();
        for (a, b) in g.bidirected_edges() {
            let name = fresh_name(
                &format!("U_{}_{}", g.name(a), g.name(b)),
                &exogenous,
                &taken,
            );
            exogenous.insert(name.clone(), rng.gen_range(0.05..0.95));
            shared[a].push(name.clone());
            shared[b].push(name);
        }
        let mut mechanisms = BTreeMap::new();
        for v in g.vertices().iter() {
            let noise = fresh_name(&format!("U_{}", g.name(v)), &exogenous, &taken);
            exogenous.insert(noise.clone(), rng.gen_range(0.05..0.95));
            let mut inputs: Vec<String> =
                g.parents(v).iter().map(|p| g.name(p).to_string()).collect();
            inputs.extend(shared[v].iter().cloned());
            mechanisms.insert(
                g.name(v).to_string(),
                random_mechanism(&inputs, &noise, rng),
            );
        }
        DiscreteModel::build(exogenous, mechanisms, g.name(reward)).expect("random model is valid")
    }
}

fn fresh_name(
    base: &str,
    exo: &BTreeMap<String, f64>,
    endo: &BTreeMap<String, BoolExpr>,
) -> String {
    let mut name = base.to_string();
    let mut k = 1;
    while exo.contains_key(&name) || endo.contains_key(&name) {
        name = format!("{base}_{k}");
        k += 1;
    }
    name
}

/// Balanced random tree over `inputs` (each used once, random connective,
/// random negation), XOR-ed with `noise` so every conditional is non-degenerate.
pub fn random_mechanism<R: Rng + ?Sized>(inputs: &[String], noise: &str, rng: &mut R) -> BoolExpr {
    let noise = BoolExpr::Var(noise.to_string());
    if inputs.is_empty() {
        return noise;
    }
    let mut leaves: Vec<BoolExpr> = inputs
        .iter()
        .map(|n| {
            let leaf = BoolExpr::Var(n.clone());
            if rng.gen_bool(0.5) {
                BoolExpr::Not(Box::new(leaf))
            } else {
                leaf
            }
        })
        .collect();
    leaves.shuffle(rng);
    let tree = balanced(leaves, rng);
    BoolExpr::Xor(Box::new(tree), Box::new(noise))
}

fn balanced<R: Rng + ?Sized>(mut items: Vec<BoolExpr>, rng: &mut R) -> BoolExpr {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => {
                    let (a, b) = (Box::new(a), Box::new(b));
                    next.push(match rng.gen_range(0..3) {
                        0 => BoolExpr::And(a, b),
                        1 => BoolExpr::Or(a, b),
                        _ => BoolExpr::Xor(a, b),
                    });
                }
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop().expect("non-empty")
}

fn compile(
    e: &BoolExpr,
    var: &str,
    endo: &[String],
    exo: &[String],
) -> Result<Compiled, ModelError> {
    let rec = |x: &BoolExpr| compile(x, var, endo, exo).map(Box::new);
    Ok(match e {
        BoolExpr::Const(b) => Compiled::Const(*b),
        BoolExpr::Var(n) => {
            if let Ok(i) = endo.binary_search(n) {
                Compiled::Endo(i as u32)
            } else if let Ok(j) = exo.binary_search(n) {
                Compiled::Exo(j as u32)
            } else {
                return Err(ModelError::UnknownIdentifier {
                    var: var.to_string(),
                    ident: n.clone(),
                });
            }
        }
        BoolExpr::Not(a) => Compiled::Not(rec(a)?),
        BoolExpr::And(a, b) => Compiled::And(rec(a)?, rec(b)?),
        BoolExpr::Or(a, b) => Compiled::Or(rec(a)?, rec(b)?),
        BoolExpr::Xor(a, b) => Compiled::Xor(rec(a)?, rec(b)?),
    })
}

fn endo_refs(e: &BoolExpr, endo: &[String]) -> VarSet {
    e.identifiers()
        .into_iter()
        .filter_map(|n| endo.binary_search_by(|x| x.as_str().cmp(n)).ok())
        .collect()
}

fn topo(parents: &[VarSet]) -> Option<Vec<VarId>> {
    let n = parents.len();
    let mut placed = VarSet::EMPTY;
    let mut order = Vec::with_capacity(n);
    let all = VarSet::full(n);
    while placed != all {
        let next = (all - placed)
            .iter()
            .find(|&v| parents[v].is_subset(placed))?;
        placed.insert(next);
        order.push(next);
    }
    Some(order)
}
