//! Fixtures, source generation, validation and the experiment driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{self, BanditError, BanditProblem, BanditRun, IndexRule};
use crate::dominance::{self, BoundTable, UdbStep};
use crate::graph::{Diagram, GraphError, VarId, VarSet};
use crate::intervention_sets::{
    actions_of, all_actions, is_pomis, miss, poiss, pomis_equivalent, pomiss, ActionSpaceContext,
    SetError,
};
use crate::scm::{Assignment, DiscreteModel, ModelError, ScmSpec};
use crate::transport::{Bounds, PriorSpec, SourceStore, Transport, TransportError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid fixture `{fixture}`: {msg}")]
    Fixture { fixture: String, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sets(#[from] SetError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Graph section of a fixture file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vars: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub bidirected: Vec<(String, String)>,
    /// Environment label (`"1"`, `"2"`, ...) to discrepancy set.
    #[serde(default)]
    pub discrepancies: BTreeMap<String, Vec<String>>,
}

impl GraphSpec {
    /// The selection diagram.
    pub fn diagram(&self) -> Result<Diagram, GraphError> {
        let g = Diagram::from_edges(&self.vars, &self.edges, &self.bidirected)?;
        let deltas = env_ordered(&self.discrepancies)
            .into_iter()
            .map(|(_, vs)| g.set(vs))
            .collect::<Result<Vec<_>, _>>()?;
        g.selection_diagram(&deltas)
    }
}

/// A graph file: either a bare graph object or a whole fixture. The second
/// value is the fixture's reward variable, if any.
pub fn parse_graph(src: &str) -> Result<(GraphSpec, Option<String>), HarnessError> {
    let value: serde_json::Value = serde_json::from_str(src)?;
    if value.get("graph").is_some() {
        let f: Fixture = serde_json::from_value(value)?;
        let reward = f.reward_name().ok().map(str::to_string);
        Ok((f.graph, reward))
    } else {
        Ok((serde_json::from_value(value)?, None))
    }
}

/// Entries of an environment-keyed map in numeric key order.
fn env_ordered<T>(map: &BTreeMap<String, T>) -> Vec<(&str, &T)> {
    let mut out: Vec<(&str, &T)> = map.iter().map(|(k, v)| (k.as_str(), v)).collect();
    out.sort_by_key(|(k, _)| (k.parse::<usize>().unwrap_or(usize::MAX), k.to_string()));
    out
}

pub type ActionSpec = BTreeMap<String, u8>;

/// A published value attached to a fixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "quantity", rename_all = "snake_case")]
pub enum Reference {
    Pomis {
        nonmanipulable: Vec<String>,
        sets: Vec<Vec<String>>,
    },
    Mis {
        nonmanipulable: Vec<String>,
        sets: Vec<Vec<String>>,
    },
    IsPomis {
        set: Vec<String>,
        value: bool,
    },
    PoisFamily {
        pomis: Vec<String>,
        within: Vec<String>,
    },
    ExpectedReward {
        action: ActionSpec,
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    SourceExpectedReward {
        env: String,
        action: ActionSpec,
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    Transportable {
        action: ActionSpec,
        value: bool,
    },
    CausalBound {
        action: ActionSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    TransportBound {
        action: ActionSpec,
        lower: f64,
        upper: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    LStar {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    /// `null` stands for `+∞`.
    UStar {
        value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    UdbTrace {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    Pruned {
        actions: Vec<ActionSpec>,
    },
    ConstrainedOptimum {
        nonmanipulable: Vec<String>,
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
}

/// Half a unit in the fourth decimal, the precision of most printed values.
pub const DEFAULT_TOL: f64 = 5e-5;

/// A task definition: graph, target model, priors and reference values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub graph: GraphSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm: Option<ScmSpec>,
    /// Reward variable when no `scm` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<String>,
    /// Explicit source models, one per environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<ScmSpec>>,
    #[serde(default)]
    pub priors: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default)]
    pub nonmanipulable: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<Reference>,
}

const BUILTIN: &[(&str, &str)] = &[
    ("task1", include_str!("../fixtures/task1.json")),
    ("task2", include_str!("../fixtures/task2.json")),
    ("task3", include_str!("../fixtures/task3.json")),
    (
        "task3_verbatim",
        include_str!("../fixtures/task3_verbatim.json"),
    ),
    ("hierarchy", include_str!("../fixtures/hierarchy.json")),
    ("cardio", include_str!("../fixtures/cardio.json")),
    ("fivevar", include_str!("../fixtures/fivevar.json")),
];

/// Names accepted by [`build_task`].
pub fn task_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

fn canonical_task(id: &str) -> &str {
    match id {
        "1" => "task1",
        "2" => "task2",
        "3" => "task3",
        "3-verbatim" | "3_verbatim" => "task3_verbatim",
        other => other,
    }
}

/// A built-in fixture by id (`1`, `2`, `3`, `3-verbatim`, `hierarchy`, `cardio`, `fivevar`).
pub fn build_task(id: &str) -> Result<Fixture, HarnessError> {
    let name = canonical_task(id);
    let (_, src) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::UnknownTask(id.to_string()))?;
    Fixture::parse(src)
}

/// The raw JSON text of a built-in fixture.
pub fn builtin_source(id: &str) -> Option<&'static str> {
    let name = canonical_task(id);
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

impl Fixture {
    pub fn parse(src: &str) -> Result<Fixture, HarnessError> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn err(&self, msg: impl Into<String>) -> HarnessError {
        HarnessError::Fixture {
            fixture: self.name.clone(),
            msg: msg.into(),
        }
    }

    pub fn reward_name(&self) -> Result<&str, HarnessError> {
        self.scm
            .as_ref()
            .map(|s| s.reward.as_str())
            .or(self.reward.as_deref())
            .ok_or_else(|| self.err("no reward variable"))
    }

    pub fn diagram(&self) -> Result<Diagram, HarnessError> {
        Ok(self.graph.diagram()?)
    }

    /// Priors in environment order, aligned with the discrepancy records.
    pub fn prior_spec(&self, g: &Diagram) -> Result<PriorSpec, HarnessError> {
        let envs: Vec<&str> = env_ordered(&self.graph.discrepancies)
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        let priors: Vec<&str> = env_ordered(&self.priors)
            .into_iter()
            .map(|(k, _)| k)
            .collect();
        if envs != priors {
            return Err(self.err(format!("environments {envs:?} have priors for {priors:?}")));
        }
        let sets = env_ordered(&self.priors)
            .into_iter()
            .map(|(_, zs)| zs.iter().map(|z| g.set(z)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PriorSpec { sets })
    }

    pub fn env_index(&self, label: &str) -> Result<usize, HarnessError> {
        env_ordered(&self.graph.discrepancies)
            .iter()
            .position(|(k, _)| *k == label)
            .ok_or_else(|| self.err(format!("unknown environment `{label}`")))
    }
}

/// How source environments are produced when a fixture does not list them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceMode {
    /// Redraw the mechanisms of each `Δ^i` from the seed.
    Perturbed,
    /// Every source equals the target.
    Identity,
}

impl FromStr for SourceMode {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perturbed" => Ok(SourceMode::Perturbed),
            "identity" => Ok(SourceMode::Identity),
            _ => Err(HarnessError::Config(format!("unknown source mode `{s}`"))),
        }
    }
}

impl SourceMode {
    pub fn name(self) -> &'static str {
        match self {
            SourceMode::Perturbed => "perturbed",
            SourceMode::Identity => "identity",
        }
    }
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MODEL_STREAM: u64 = 1 << 40;
const SOURCE_STREAM: u64 = 1 << 41;

/// A fixture with its models, sources and transport engine materialized.
pub struct Task {
    pub fixture: Fixture,
    pub diagram: Diagram,
    pub model: DiscreteModel,
    pub sources: Vec<DiscreteModel>,
    pub priors: PriorSpec,
    pub store: SourceStore,
    pub transport: Transport,
    pub ctx: ActionSpaceContext,
}

impl Task {
    pub fn prepare(fixture: &Fixture, seed: u64, mode: SourceMode) -> Result<Task, HarnessError> {
        let diagram = fixture.diagram()?;
        let reward = diagram.id(fixture.reward_name()?)?;
        let model = match &fixture.scm {
            Some(spec) => DiscreteModel::from_spec(spec)?,
            None => DiscreteModel::random(&diagram, reward, &mut derived_rng(seed, MODEL_STREAM)),
        };
        if **model.endogenous() != **diagram.names() {
            return Err(fixture.err("model variables differ from graph variables"));
        }
        let priors = fixture.prior_spec(&diagram)?;
        let sources = match &fixture.sources {
            Some(specs) => specs
                .iter()
                .map(DiscreteModel::from_spec)
                .collect::<Result<Vec<_>, _>>()?,
            None => diagram
                .selection()
                .iter()
                .enumerate()
                .map(|(i, &delta)| match mode {
                    SourceMode::Identity => model.clone(),
                    SourceMode::Perturbed => model.perturb_mechanisms(
                        delta,
                        &mut derived_rng(seed, SOURCE_STREAM + i as u64),
                    ),
                })
                .collect(),
        };
        let store = SourceStore::from_models(&diagram, &sources, &priors)?;
        let transport = Transport::new(diagram.clone(), priors.clone())?;
        let non_manipulable = diagram.set(&fixture.nonmanipulable)?;
        let ctx = ActionSpaceContext::new(diagram.clone(), reward, non_manipulable)?;
        Ok(Task {
            fixture: fixture.clone(),
            diagram,
            model,
            sources,
            priors,
            store,
            transport,
            ctx,
        })
    }

    pub fn reward(&self) -> VarId {
        self.ctx.reward
    }

    pub fn names(&self) -> &[String] {
        self.diagram.names()
    }

    pub fn action(&self, spec: &ActionSpec) -> Result<Assignment, HarnessError> {
        let mut vars = VarSet::EMPTY;
        let mut values = VarSet::EMPTY;
        for (name, &v) in spec {
            let id = self.diagram.id(name)?;
            vars.insert(id);
            if v != 0 {
                values.insert(id);
            }
        }
        Ok(Assignment::new(vars, values))
    }

    pub fn render(&self, a: &Assignment) -> String {
        a.render(self.names())
    }

    /// Every action over the manipulable variables under `N★`.
    pub fn all_actions(&self) -> Vec<Assignment> {
        all_actions(self.ctx.manipulable())
    }

    /// Best exact reward over every action allowed under `n`.
    pub fn constrained_optimum(&self, n: VarSet) -> f64 {
        all_actions(self.ctx.with_non_manipulable(n).manipulable())
            .iter()
            .map(|a| self.model.expected_reward(a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dominance(&self) -> Result<DominanceOutcome, HarnessError> {
        let actions = dominance::required_actions(&self.ctx);
        let raw = dominance::bound_table(&self.transport, self.reward(), &actions, &self.store)?;
        let l_star = dominance::lower_dominance(&self.ctx, &raw);
        let (u_star, trace) = dominance::udb(&self.ctx, &raw);
        let table = dominance::apply_dominance(&raw, l_star, u_star);
        Ok(DominanceOutcome { raw, table, trace })
    }
}

/// Raw causal bounds, transport bounds after dominance, and the `udb` trace.
#[derive(Clone, Debug)]
pub struct DominanceOutcome {
    pub raw: BoundTable,
    pub table: BoundTable,
    pub trace: Vec<UdbStep>,
}

/// Result of checking one reference value.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub label: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

/// Structural problems plus reference-value checks for one fixture.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub fixture: String,
    pub issues: Vec<String>,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn is_consistent(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn mismatches(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fixture {}", self.fixture);
        if self.issues.is_empty() {
            let _ = writeln!(out, "  structure: ok");
        }
        for i in &self.issues {
            let _ = writeln!(out, "  issue: {i}");
        }
        for c in &self.checks {
            let tag = if c.pass { "match" } else { "MISMATCH" };
            let _ = writeln!(
                out,
                "  {tag:8} {}: expected {}, got {}",
                c.label, c.expected, c.actual
            );
        }
        out
    }
}

/// Check a fixture's internal consistency, then compare every reference
/// value against sources built with `mode`.
pub fn validate(fixture: &Fixture, seed: u64, mode: SourceMode) -> ValidationReport {
    let mut report = ValidationReport {
        fixture: fixture.name.clone(),
        ..Default::default()
    };
    report.issues = structural_issues(fixture);
    if !report.issues.is_empty() {
        return report;
    }
    match Task::prepare(fixture, seed, mode) {
        Ok(task) => match reference_checks(&task) {
            Ok(checks) => report.checks = checks,
            Err(e) => report.issues.push(e.to_string()),
        },
        Err(e) => report.issues.push(e.to_string()),
    }
    report
}

fn structural_issues(f: &Fixture) -> Vec<String> {
    let mut issues = Vec::new();
    let g = match f.diagram() {
        Ok(g) => g,
        Err(e) => return vec![format!("graph: {e}")],
    };
    if let Err(e) = f.prior_spec(&g) {
        issues.push(format!("priors: {e}"));
    }
    match f.reward_name().and_then(|r| Ok(g.id(r)?)) {
        Ok(y) => {
            if f.nonmanipulable.iter().any(|n| n == g.name(y)) {
                issues.push("reward is listed as non-manipulable".into());
            }
        }
        Err(e) => issues.push(format!("reward: {e}")),
    }
    if let Err(e) = g.set(&f.nonmanipulable) {
        issues.push(format!("nonmanipulable: {e}"));
    }
    let target = match &f.scm {
        Some(spec) => match check_model(spec, &g, "target") {
            Ok(m) => Some(m),
            Err(e) => {
                issues.push(e);
                None
            }
        },
        None => None,
    };
    if let Some(specs) = &f.sources {
        if specs.len() != g.selection().len() {
            issues.push(format!(
                "{} source models for {} environments",
                specs.len(),
                g.selection().len()
            ));
        }
        for (i, spec) in specs.iter().enumerate() {
            match check_model(spec, &g, &format!("source {}", i + 1)) {
                Ok(m) => {
                    if let (Some(t), Some(&delta)) = (&target, g.selection().get(i)) {
                        issues.extend(shared_mechanism_issues(t, &m, delta, i + 1));
                    }
                }
                Err(e) => issues.push(e),
            }
        }
    }
    issues
}

fn check_model(spec: &ScmSpec, g: &Diagram, label: &str) -> Result<DiscreteModel, String> {
    let m = DiscreteModel::from_spec(spec).map_err(|e| format!("{label} model: {e}"))?;
    if **m.endogenous() != **g.names() {
        return Err(format!(
            "{label} model variables {:?} differ from graph",
            m.endogenous()
        ));
    }
    let induced = m
        .induced_diagram()
        .map_err(|e| format!("{label} model: {e}"))?;
    let mut extra = Vec::new();
    for (a, b) in induced.directed_edges() {
        if !g.parents(b).contains(a) {
            extra.push(format!("{}->{}", g.name(a), g.name(b)));
        }
    }
    for (a, b) in induced.bidirected_edges() {
        if !g.spouses(a).contains(b) {
            extra.push(format!("{}<->{}", g.name(a), g.name(b)));
        }
    }
    if !extra.is_empty() {
        return Err(format!(
            "{label} model induces undeclared edges {}",
            extra.join(", ")
        ));
    }
    Ok(m)
}

/// Mechanisms outside `Δ^env` (and the noise they read) must match the target.
fn shared_mechanism_issues(
    target: &DiscreteModel,
    source: &DiscreteModel,
    delta: VarSet,
    env: usize,
) -> Vec<String> {
    let p_target: BTreeMap<&str, f64> = target.exogenous().collect();
    let p_source: BTreeMap<&str, f64> = source.exogenous().collect();
    let mut issues = Vec::new();
    for v in 0..target.n_endogenous() {
        if delta.contains(v) {
            continue;
        }
        let name = &target.endogenous()[v];
        if target.mechanism(v) != source.mechanism(v) {
            issues.push(format!(
                "source {env} changes the mechanism of {name} outside its discrepancy set"
            ));
            continue;
        }
        for ident in target.mechanism(v).identifiers() {
            if let (Some(a), Some(b)) = (p_target.get(ident), p_source.get(ident)) {
                if a != b {
                    issues.push(format!("source {env} changes P({ident}) read by {name} outside its discrepancy set"));
                }
            }
        }
    }
    issues
}

fn names_to_set(g: &Diagram, names: &[String]) -> Result<VarSet, HarnessError> {
    Ok(g.set(names)?)
}

fn render_sets(g: &Diagram, sets: &[VarSet]) -> String {
    let parts: Vec<String> = sets.iter().map(|&s| g.fmt_set(s)).collect();
    format!("{{{}}}", parts.join(","))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= tol
}

fn check(label: String, expected: String, actual: String, pass: bool) -> CheckOutcome {
    CheckOutcome {
        label,
        expected,
        actual,
        pass,
    }
}

/// Evaluate every reference value of the task's fixture.
pub fn reference_checks(task: &Task) -> Result<Vec<CheckOutcome>, HarnessError> {
    let g = &task.diagram;
    let name = &task.fixture.name;
    let mut needs_dominance = false;
    for r in &task.fixture.reference {
        needs_dominance |= matches!(
            r,
            Reference::CausalBound { .. }
                | Reference::TransportBound { .. }
                | Reference::LStar { .. }
                | Reference::UStar { .. }
                | Reference::UdbTrace { .. }
                | Reference::Pruned { .. }
                | Reference::Transportable { .. }
        );
    }
    let dom = if needs_dominance {
        Some(task.dominance()?)
    } else {
        None
    };
    let bound_of = |a: &Assignment| -> Result<dominance::BoundEntry, HarnessError> {
        let d = dom.as_ref().expect("dominance computed");
        match d.raw.iter().into_iter().find(|(b, _)| b == a) {
            Some((_, e)) => Ok(e),
            None => Ok(task
                .transport
                .causal_bound(task.reward(), a, &task.store)?
                .into()),
        }
    };

    let mut out = Vec::new();
    for r in &task.fixture.reference {
        match r {
            Reference::Pomis {
                nonmanipulable,
                sets,
            }
            | Reference::Mis {
                nonmanipulable,
                sets,
            } => {
                let is_mis = matches!(r, Reference::Mis { .. });
                let n = names_to_set(g, nonmanipulable)?;
                let ctx = task.ctx.with_non_manipulable(n);
                let got = if is_mis { miss(&ctx) } else { pomiss(&ctx) };
                let mut want = sets
                    .iter()
                    .map(|s| names_to_set(g, s))
                    .collect::<Result<Vec<_>, _>>()?;
                want.sort_by(|a, b| a.canonical_cmp(*b));
                let kind = if is_mis { "mis" } else { "pomis" };
                out.push(check(
                    format!("{name} {kind} N={}", g.fmt_set(n)),
                    render_sets(g, &want),
                    render_sets(g, &got),
                    got == want,
                ));
            }
            Reference::IsPomis { set, value } => {
                let x = names_to_set(g, set)?;
                let got = is_pomis(g, task.reward(), x);
                out.push(check(
                    format!("{name} is_pomis {}", g.fmt_set(x)),
                    value.to_string(),
                    got.to_string(),
                    got == *value,
                ));
            }
            Reference::PoisFamily { pomis, within } => {
                let x = names_to_set(g, pomis)?;
                let top = names_to_set(g, within)?;
                let all = poiss(g, task.reward());
                let mut missing = Vec::new();
                for extra in (top - x).subsets() {
                    let r = x | extra;
                    let equivalent = pomis_equivalent(g, task.reward(), r).ok() == Some(x);
                    if !all.contains(&r) || !equivalent {
                        missing.push(g.fmt_set(r));
                    }
                }
                out.push(check(
                    format!(
                        "{name} pois family {} ⊆ R ⊆ {}",
                        g.fmt_set(x),
                        g.fmt_set(top)
                    ),
                    "all present and equivalent".into(),
                    if missing.is_empty() {
                        "all present and equivalent".into()
                    } else {
                        format!("missing {}", missing.join(" "))
                    },
                    missing.is_empty(),
                ));
            }
            Reference::ExpectedReward { action, value, tol } => {
                let a = task.action(action)?;
                let got = task.model.expected_reward(&a);
                out.push(check(
                    format!("{name} E[Y|{}]", task.render(&a)),
                    fmt6(*value),
                    fmt6(got),
                    close(got, *value, tol.unwrap_or(DEFAULT_TOL)),
                ));
            }
            Reference::SourceExpectedReward {
                env,
                action,
                value,
                tol,
            } => {
                let a = task.action(action)?;
                let i = task.fixture.env_index(env)?;
                let got = task.sources[i].expected_reward(&a);
                out.push(check(
                    format!("{name} source {env} E[Y|{}]", task.render(&a)),
                    fmt6(*value),
                    fmt6(got),
                    close(got, *value, tol.unwrap_or(DEFAULT_TOL)),
                ));
            }
            Reference::Transportable { action, value } => {
                let a = task.action(action)?;
                let got = bound_of(&a)?.transportable;
                out.push(check(
                    format!("{name} transportable {}", task.render(&a)),
                    value.to_string(),
                    got.to_string(),
                    got == *value,
                ));
            }
            Reference::CausalBound {
                action,
                lower,
                upper,
                tol,
            } => {
                let a = task.action(action)?;
                let b = bound_of(&a)?.bounds;
                let tol = tol.unwrap_or(DEFAULT_TOL);
                if let Some(l) = lower {
                    out.push(check(
                        format!("{name} lower bound {}", task.render(&a)),
                        fmt6(*l),
                        fmt6(b.lower),
                        close(b.lower, *l, tol),
                    ));
                }
                if let Some(u) = upper {
                    out.push(check(
                        format!("{name} upper bound {}", task.render(&a)),
                        fmt6(*u),
                        fmt6(b.upper),
                        close(b.upper, *u, tol),
                    ));
                }
            }
            Reference::TransportBound {
                action,
                lower,
                upper,
                tol,
            } => {
                let a = task.action(action)?;
                let b = dom.as_ref().expect("dominance computed").table.bounds(&a);
                let tol = tol.unwrap_or(DEFAULT_TOL);
                out.push(check(
                    format!("{name} transport bound {}", task.render(&a)),
                    format!("[{}, {}]", fmt6(*lower), fmt6(*upper)),
                    format!("[{}, {}]", fmt6(b.lower), fmt6(b.upper)),
                    close(b.lower, *lower, tol) && close(b.upper, *upper, tol),
                ));
            }
            Reference::LStar { value, tol } => {
                let got = dom.as_ref().expect("dominance computed").table.l_star;
                out.push(check(
                    format!("{name} l_star"),
                    fmt6(*value),
                    fmt6(got),
                    close(got, *value, tol.unwrap_or(DEFAULT_TOL)),
                ));
            }
            Reference::UStar { value, tol } => {
                let want = value.unwrap_or(f64::INFINITY);
                let got = dom.as_ref().expect("dominance computed").table.u_star;
                out.push(check(
                    format!("{name} u_star"),
                    fmt6(want),
                    fmt6(got),
                    close(got, want, tol.unwrap_or(DEFAULT_TOL)),
                ));
            }
            Reference::UdbTrace { values, tol } => {
                let trace = &dom.as_ref().expect("dominance computed").trace;
                let got: Vec<f64> = trace.iter().map(|s| s.level.upper).collect();
                let tol = tol.unwrap_or(DEFAULT_TOL);
                let pass = got.len() == values.len()
                    && got.iter().zip(values).all(|(a, b)| close(*a, *b, tol));
                out.push(check(
                    format!("{name} udb trace"),
                    values
                        .iter()
                        .map(|v| fmt6(*v))
                        .collect::<Vec<_>>()
                        .join(" "),
                    got.iter().map(|v| fmt6(*v)).collect::<Vec<_>>().join(" "),
                    pass,
                ));
            }
            Reference::Pruned { actions } => {
                let table = &dom.as_ref().expect("dominance computed").table;
                let target = actions_of(&pomiss(&task.ctx));
                let mut want = actions
                    .iter()
                    .map(|a| task.action(a))
                    .collect::<Result<Vec<_>, _>>()?;
                want.sort_by(|a, b| a.canonical_cmp(b));
                let got: Vec<Assignment> = target
                    .into_iter()
                    .filter(|a| table.entry(a).pruned)
                    .collect();
                let show = |xs: &[Assignment]| {
                    xs.iter()
                        .map(|a| task.render(a))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                out.push(check(
                    format!("{name} pruned"),
                    show(&want),
                    show(&got),
                    got == want,
                ));
            }
            Reference::ConstrainedOptimum {
                nonmanipulable,
                value,
                tol,
            } => {
                let n = names_to_set(g, nonmanipulable)?;
                let got = task.constrained_optimum(n);
                out.push(check(
                    format!("{name} optimum N={}", g.fmt_set(n)),
                    fmt6(*value),
                    fmt6(got),
                    close(got, *value, tol.unwrap_or(DEFAULT_TOL)),
                ));
            }
        }
    }
    Ok(out)
}

/// Algorithms compared in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    /// UCB over every action of the manipulable variables.
    Ucb,
    /// UCB over POMIS actions.
    PoUcb,
    /// Clipped UCB over the POMIS actions that survive dominance pruning.
    TrUcb,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Ucb, Algo::PoUcb, Algo::TrUcb];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ucb => "ucb",
            Algo::PoUcb => "poucb",
            Algo::TrUcb => "trucb",
        }
    }
}

impl FromStr for Algo {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ucb" => Ok(Algo::Ucb),
            "poucb" => Ok(Algo::PoUcb),
            "trucb" => Ok(Algo::TrUcb),
            other => Err(HarnessError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug)]
pub struct TaskConfig {
    pub fixture: Fixture,
    pub trials: u64,
    pub reps: u64,
    pub seed: u64,
    pub algos: Vec<Algo>,
    /// Trace and curve sampling interval in rounds.
    pub thin: u64,
    pub threads: Option<usize>,
    pub sources: SourceMode,
}

impl TaskConfig {
    /// 50k rounds, 1000 repetitions, all three algorithms.
    pub fn new(fixture: Fixture) -> Self {
        TaskConfig {
            fixture,
            trials: 50_000,
            reps: 1_000,
            seed: 0,
            algos: Algo::ALL.to_vec(),
            thin: 500,
            threads: None,
            sources: SourceMode::Perturbed,
        }
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(HarnessError::Config(
                "repetitions must be at least 1".into(),
            ));
        }
        if self.algos.is_empty() {
            return Err(HarnessError::Config("no algorithms selected".into()));
        }
        if self.thin == 0 {
            return Err(HarnessError::Config(
                "thinning interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Results of one algorithm across all repetitions.
#[derive(Clone, Debug)]
pub struct AlgoResult {
    pub algo: Algo,
    pub problem: BanditProblem,
    pub runs: Vec<BanditRun>,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub regret_bound: f64,
}

impl AlgoResult {
    /// Total pulls per arm, summed over repetitions.
    pub fn total_pulls(&self) -> Vec<u64> {
        let mut out = vec![0; self.problem.arms.len()];
        for r in &self.runs {
            for (o, s) in out.iter_mut().zip(&r.stats) {
                *o += s.pulls;
            }
        }
        out
    }

    /// Pulls summed over repetitions for `action`; zero when it is not an arm.
    pub fn pulls_of(&self, action: &Assignment) -> u64 {
        let totals = self.total_pulls();
        self.problem
            .arms
            .iter()
            .position(|a| a.action == *action)
            .map_or(0, |i| totals[i])
    }

    /// `(t, mean, std)` of cumulative regret at each sampled round.
    pub fn curve(&self) -> Vec<(u64, f64, f64)> {
        let first = &self.runs[0].trace;
        (0..first.len())
            .map(|k| {
                let xs: Vec<f64> = self.runs.iter().map(|r| r.trace[k].cum_regret).collect();
                let (m, s) = bandit::mean_std(&xs);
                (first[k].t, m, s)
            })
            .collect()
    }
}

/// Bounds, dominance and bandit results for one configuration.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub task: String,
    pub names: Vec<String>,
    pub trials: u64,
    pub reps: u64,
    pub seed: u64,
    pub source_mode: SourceMode,
    pub sources: Vec<ScmSpec>,
    pub mu_star: f64,
    pub dominance: DominanceOutcome,
    /// POMIS actions under `N★`, canonical order.
    pub target_actions: Vec<Assignment>,
    pub results: Vec<AlgoResult>,
}

impl ExperimentReport {
    pub fn result(&self, algo: Algo) -> Option<&AlgoResult> {
        self.results.iter().find(|r| r.algo == algo)
    }

    /// Mean final regret of trUCB over that of poUCB.
    pub fn ratio(&self) -> Option<f64> {
        let tr = self.result(Algo::TrUcb)?;
        let po = self.result(Algo::PoUcb)?;
        Some(tr.mean_regret / po.mean_regret)
    }

    pub fn pruned(&self) -> Vec<Assignment> {
        self.target_actions
            .iter()
            .copied()
            .filter(|a| self.dominance.table.entry(a).pruned)
            .collect()
    }

    pub fn render_action(&self, a: &Assignment) -> String {
        a.render(&self.names)
    }
}

/// Bounds, dominance, pruning, then Monte Carlo runs of every selected algorithm.
pub fn run_experiment(cfg: &TaskConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.check()?;
    let task = Task::prepare(&cfg.fixture, cfg.seed, cfg.sources)?;
    let dom = task.dominance()?;
    let all = task.all_actions();
    let target = actions_of(&pomiss(&task.ctx));
    let unbounded = |actions: &[Assignment]| -> Vec<(Assignment, Bounds)> {
        actions.iter().map(|&a| (a, Bounds::UNBOUNDED)).collect()
    };

    let mut results = Vec::new();
    for &algo in &cfg.algos {
        let (arms, rule, l_star) = match algo {
            Algo::Ucb => (unbounded(&all), IndexRule::Ucb, 0.0),
            Algo::PoUcb => (unbounded(&target), IndexRule::Ucb, 0.0),
            Algo::TrUcb => (
                target
                    .iter()
                    .filter(|a| !dom.table.entry(a).pruned)
                    .map(|&a| (a, dom.table.bounds(&a)))
                    .collect(),
                IndexRule::Clipped,
                dom.table.l_star,
            ),
        };
        let problem = BanditProblem::new(&task.model, &arms, &all);
        let runs = bandit::monte_carlo(
            &problem,
            rule,
            cfg.trials,
            cfg.reps,
            cfg.thin,
            cfg.seed,
            cfg.threads,
        )?;
        let finals: Vec<f64> = runs.iter().map(|r| r.final_regret).collect();
        let (mean_regret, std_regret) = bandit::mean_std(&finals);
        let bounds: Vec<Bounds> = problem.arms.iter().map(|a| a.bounds).collect();
        let regret_bound = bandit::regret_bound(
            &problem.gaps(),
            &bounds,
            problem.mu_star,
            l_star,
            cfg.trials,
        );
        results.push(AlgoResult {
            algo,
            problem,
            runs,
            mean_regret,
            std_regret,
            regret_bound,
        });
    }

    let mu_star = all
        .iter()
        .map(|a| task.model.expected_reward(a))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ExperimentReport {
        task: cfg.fixture.name.clone(),
        names: task.names().to_vec(),
        trials: cfg.trials,
        reps: cfg.reps,
        seed: cfg.seed,
        source_mode: cfg.sources,
        sources: task.sources.iter().map(DiscreteModel::to_spec).collect(),
        mu_star,
        dominance: dom,
        target_actions: target,
        results,
    })
}

/// Output families written by [`emit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Table,
    Plotdata,
}

impl FromStr for Format {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            "plotdata" => Ok(Format::Plotdata),
            other => Err(HarnessError::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// `%g`-style rendering with 6 significant digits; `inf` for `+∞`.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    let e = if rounded.abs() >= 10f64.powi(e + 1) {
        e + 1
    } else {
        e
    };
    if !(-4..6).contains(&e) {
        let s = format!("{x:.5e}");
        let (mant, exp) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{}", trim_zeros(mant), exp);
    }
    let prec = (5 - e).max(0) as usize;
    trim_zeros(&format!("{x:.prec$}"))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn write_csv<P: AsRef<Path>>(
    path: P,
    header: &[&str],
    rows: Vec<Vec<String>>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn summary_rows(report: &ExperimentReport) -> Vec<Vec<String>> {
    let ratio = report.ratio();
    report
        .results
        .iter()
        .map(|r| {
            vec![
                r.algo.name().to_string(),
                r.problem.arms.len().to_string(),
                fmt6(r.mean_regret),
                fmt6(r.std_regret),
                fmt6(r.regret_bound),
                if r.algo == Algo::TrUcb {
                    ratio.map_or(String::new(), fmt6)
                } else {
                    String::new()
                },
                fmt6(report.mu_star),
                fmt6(report.dominance.table.l_star),
                fmt6(report.dominance.table.u_star),
            ]
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 9] = [
    "algo",
    "arms",
    "mean_regret",
    "std_regret",
    "regret_bound",
    "ratio_to_poucb",
    "mu_star",
    "l_star",
    "u_star",
];

fn bounds_rows(report: &ExperimentReport) -> Vec<Vec<String>> {
    report
        .dominance
        .raw
        .iter()
        .into_iter()
        .map(|(a, e)| {
            vec![
                report.render_action(&a),
                fmt6(e.bounds.lower),
                fmt6(e.bounds.upper),
                e.transportable.to_string(),
                e.n_expressions.to_string(),
            ]
        })
        .collect()
}

fn transport_rows(report: &ExperimentReport) -> Vec<Vec<String>> {
    report
        .target_actions
        .iter()
        .map(|a| {
            let e = report.dominance.table.entry(a);
            vec![
                report.render_action(a),
                fmt6(e.bounds.lower),
                fmt6(e.bounds.upper),
                e.pruned.to_string(),
            ]
        })
        .collect()
}

fn dominance_rows(report: &ExperimentReport) -> Vec<Vec<String>> {
    let fmt_set = |s: VarSet| {
        let parts: Vec<&str> = s.iter().map(|v| report.names[v].as_str()).collect();
        format!("{{{}}}", parts.join(","))
    };
    report
        .dominance
        .trace
        .iter()
        .map(|s| {
            vec![
                fmt_set(s.constraint),
                s.level.argmax.map_or(String::new(), |a| fmt_set(a.vars)),
                fmt6(s.level.upper),
                s.level.exact.to_string(),
                fmt6(s.u_star_running),
            ]
        })
        .collect()
}

/// Plain-text rendering of the report; numbers match the CSV files.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "task {}  trials {}  reps {}  seed {}  sources {}",
        report.task,
        report.trials,
        report.reps,
        report.seed,
        report.source_mode.name()
    );
    let _ = writeln!(
        out,
        "standard deviations use the population convention (divide by n)"
    );
    let _ = writeln!(
        out,
        "mu_star {}  l_star {}  u_star {}",
        fmt6(report.mu_star),
        fmt6(report.dominance.table.l_star),
        fmt6(report.dominance.table.u_star)
    );
    let section = |out: &mut String, title: &str, header: &[&str], rows: Vec<Vec<String>>| {
        let _ = writeln!(out, "\n{title}");
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: Vec<&str>| -> String {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(header.to_vec()));
        for r in &rows {
            let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
        }
    };
    section(&mut out, "regret", &SUMMARY_HEADER, summary_rows(report));
    section(
        &mut out,
        "causal bounds",
        &["action", "lower", "upper", "transportable", "n_expressions"],
        bounds_rows(report),
    );
    section(
        &mut out,
        "transport bounds",
        &["action", "lower", "upper", "pruned"],
        transport_rows(report),
    );
    section(
        &mut out,
        "dominance",
        &[
            "constraint",
            "pomis_set",
            "u_candidate",
            "transportable",
            "u_star_running",
        ],
        dominance_rows(report),
    );
    out
}

/// Write the selected output families into `dir`.
pub fn emit(report: &ExperimentReport, dir: &Path, formats: &[Format]) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("sources.json"),
        serde_json::to_string_pretty(&report.sources)? + "\n",
    )?;
    if formats.contains(&Format::Csv) {
        write_csv(
            dir.join("summary.csv"),
            &SUMMARY_HEADER,
            summary_rows(report),
        )?;
        write_csv(
            dir.join("bounds.csv"),
            &["action", "lower", "upper", "transportable", "n_expressions"],
            bounds_rows(report),
        )?;
        write_csv(
            dir.join("transport_bounds.csv"),
            &["action", "lower", "upper", "pruned"],
            transport_rows(report),
        )?;
        write_csv(
            dir.join("dominance.csv"),
            &[
                "constraint",
                "pomis_set",
                "u_candidate",
                "transportable",
                "u_star_running",
            ],
            dominance_rows(report),
        )?;
        for r in &report.results {
            let mut rows = Vec::new();
            for (rep, run) in r.runs.iter().enumerate() {
                for row in &run.trace {
                    rows.push(vec![
                        rep.to_string(),
                        row.t.to_string(),
                        report.render_action(&r.problem.arms[row.arm].action),
                        (row.reward as u8).to_string(),
                        fmt6(row.cum_regret),
                    ]);
                }
            }
            write_csv(
                dir.join(format!("traces_{}.csv", r.algo.name())),
                &["rep", "t", "arm", "reward", "cum_regret"],
                rows,
            )?;
        }
    }
    if formats.contains(&Format::Plotdata) {
        let mut rows = Vec::new();
        for r in &report.results {
            for (t, m, s) in r.curve() {
                rows.push(vec![
                    t.to_string(),
                    r.algo.name().to_string(),
                    fmt6(m),
                    fmt6(s),
                ]);
            }
        }
        write_csv(
            dir.join("plotdata.csv"),
            &["t", "algo", "mean_regret", "std_regret"],
            rows,
        )?;
    }
    if formats.contains(&Format::Table) {
        fs::write(dir.join("report.txt"), render_table(report))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt6_matches_g_style() {
        assert_eq!(fmt6(0.4843857), "0.484386");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(130.16), "130.16");
        assert_eq!(fmt6(123456789.0), "1.23457e8");
        assert_eq!(fmt6(0.0000123), "1.23e-5");
        assert_eq!(fmt6(999999.7), "1e6");
        assert_eq!(fmt6(f64::INFINITY), "inf");
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(-2.5), "-2.5");
    }

    #[test]
    fn builtin_fixtures_parse() {
        for name in task_names() {
            let f = build_task(name).unwrap();
            assert_eq!(f.name, name);
        }
        assert!(matches!(build_task("9"), Err(HarnessError::UnknownTask(_))));
    }

    #[test]
    fn environment_keys_sort_numerically() {
        let mut m = BTreeMap::new();
        m.insert("10".to_string(), 1);
        m.insert("2".to_string(), 2);
        let order: Vec<&str> = env_ordered(&m).into_iter().map(|(k, _)| k).collect();
        assert_eq!(order, vec!["2", "10"]);
    }

    #[test]
    fn config_rejects_zero_trials() {
        let mut cfg = TaskConfig::new(build_task("2").unwrap());
        cfg.trials = 0;
        assert!(cfg.check().is_err());
    }
}
