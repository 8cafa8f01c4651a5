//! One PASS/FAIL line per acceptance criterion.
//!
//! Every check is evaluated at its stated tolerance. Checks listed in
//! `KNOWN_FAILURES` are reproducible mismatches between published numbers and
//! the published models; they print FAIL and do not abort the run. Any other
//! failure, or a known failure that starts passing, fails the test.
//!
//! Runs without the libtest harness so the report is never captured.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cbl_core::dominance::{self, BoundEntry, BoundTable, LevelMax};
use cbl_core::graph::VarSet;
use cbl_core::harness::{
    build_task, reference_checks, run_experiment, Algo, ExperimentReport, Reference, SourceMode,
    Task, TaskConfig,
};
use cbl_core::intervention_sets::{actions_of, pomiss};
use cbl_core::scm::Assignment;
use cbl_core::transport::{q_factor_decompose, Bounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: &[&str] = &[
    "3/hierarchy optimum N={A}",
    "3/hierarchy optimum N={C}",
    "4/cardio source 1 E[Y|do(X1=1)]",
    "4/cardio target E[Y|do(X1=1)]",
];

const GRAPHS: [&str; 6] = ["task1", "task2", "task3", "hierarchy", "cardio", "fivevar"];

type Criterion = fn() -> Vec<Check>;

struct Check {
    id: String,
    pass: bool,
    detail: String,
}

fn check(id: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        id: id.into(),
        pass,
        detail: detail.into(),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn random_task(name: &str, seed: u64) -> Task {
    let mut f = build_task(name).unwrap();
    f.reward = Some(f.reward_name().unwrap().to_string());
    f.scm = None;
    f.sources = None;
    Task::prepare(&f, seed, SourceMode::Perturbed).unwrap()
}

fn criterion1() -> Vec<Check> {
    let (mut checks, elapsed) = timed(|| {
        let mut out = Vec::new();
        for name in ["task1", "task2", "task3", "hierarchy", "fivevar"] {
            let mut f = build_task(name).unwrap();
            f.reference.retain(|r| {
                matches!(
                    r,
                    Reference::Pomis { .. }
                        | Reference::IsPomis { .. }
                        | Reference::PoisFamily { .. }
                )
            });
            let task = Task::prepare(&f, 0, SourceMode::Identity).unwrap();
            for c in reference_checks(&task).unwrap() {
                out.push(check(
                    c.label,
                    c.pass,
                    format!("expected {}, got {}", c.expected, c.actual),
                ));
            }
        }
        out
    });
    checks.push(check(
        "runtime",
        elapsed < Duration::from_secs(1),
        format!("{elapsed:?}"),
    ));
    checks
}

fn criterion2() -> Vec<Check> {
    const MODELS: u64 = 100;
    let mut out = Vec::new();
    for name in GRAPHS {
        let mut bad = [0usize; 6];
        for seed in 0..MODELS {
            let task = random_task(name, seed);
            let dom = task.dominance().unwrap();
            for a in actions_of(&pomiss(&task.ctx)) {
                let exact = task.model.expected_reward(&a);
                let e = dom.raw.entry(&a);
                if !(e.bounds.lower - 1e-9 <= exact && exact <= e.bounds.upper + 1e-9) {
                    bad[0] += 1;
                }
                if e.transportable
                    && ((e.bounds.lower - exact).abs() > 1e-9
                        || (e.bounds.upper - exact).abs() > 1e-9)
                {
                    bad[1] += 1;
                }
            }
            let mu_star = task
                .all_actions()
                .iter()
                .map(|a| task.model.expected_reward(a))
                .fold(f64::NEG_INFINITY, f64::max);
            if !(dom.table.l_star <= mu_star + 1e-9 && mu_star <= dom.table.u_star + 1e-9) {
                bad[2] += 1;
            }
            for a in actions_of(&pomiss(&task.ctx)) {
                if task.model.expected_reward(&a) >= mu_star - 1e-12 && dom.table.entry(&a).pruned {
                    bad[3] += 1;
                }
            }
            for x in pomiss(&task.ctx) {
                let factors = q_factor_decompose(&task.diagram, x, task.reward());
                let scope = factors.iter().fold(VarSet::EMPTY, |s, c| s | *c);
                let tables: Vec<Vec<f64>> =
                    factors.iter().map(|c| task.model.c_factor(*c)).collect();
                for a in Assignment::all(x) {
                    let p = task.model.exact_distribution(&a);
                    for k in 0..1u64 << scope.len() {
                        let m = a.values.bits() | scope.deposit(k);
                        let prod: f64 = tables.iter().map(|t| t[m as usize]).product();
                        if (prod - p.marginal_at(scope, m)).abs() >= 1e-12 {
                            bad[4] += 1;
                        }
                    }
                }
            }
            let g = &task.diagram;
            let p = task.model.exact_distribution(&Assignment::EMPTY);
            for a in g.vertices().iter() {
                for b in g.vertices().iter().filter(|&b| b > a) {
                    let (x, y) = (VarSet::singleton(a), VarSet::singleton(b));
                    for z in (g.vertices() - x - y).subsets() {
                        if g.d_separated(x, y, z).unwrap()
                            && p.conditional_mutual_information(x, y, z) >= 1e-9
                        {
                            bad[5] += 1;
                        }
                    }
                }
            }
        }
        let labels = [
            "bounds contain exact reward",
            "transportable collapse",
            "l* <= mu* <= u*",
            "no optimal arm pruned",
            "factor product exact",
            "d-separation implies CI",
        ];
        for (label, n) in labels.iter().zip(bad) {
            out.push(check(
                format!("{name} {label}"),
                n == 0,
                format!("{n} violations over {MODELS} models"),
            ));
        }
    }
    out
}

fn criterion3() -> Vec<Check> {
    let (mut checks, elapsed) = timed(|| {
        let f = build_task("hierarchy").unwrap();
        let task = Task::prepare(&f, 0, SourceMode::Identity).unwrap();
        let mut out = Vec::new();
        for r in &f.reference {
            if let Reference::ConstrainedOptimum {
                nonmanipulable,
                value,
                ..
            } = r
            {
                let n = task.diagram.set(nonmanipulable).unwrap();
                let got = task.constrained_optimum(n);
                out.push(check(
                    format!("hierarchy optimum N={}", task.diagram.fmt_set(n)),
                    (got - value).abs() <= 0.005,
                    format!("expected {value} +/- 0.005, got {got:.6}"),
                ));
            }
        }
        out
    });
    checks.push(check(
        "runtime",
        elapsed < Duration::from_secs(1),
        format!("{elapsed:?}"),
    ));
    checks
}

fn criterion4() -> Vec<Check> {
    let f = build_task("cardio").unwrap();
    let task = Task::prepare(&f, 0, SourceMode::Identity).unwrap();
    let x1 = task
        .action(&[("X1".to_string(), 1u8)].into_iter().collect())
        .unwrap();
    let source = task.sources[0].expected_reward(&x1);
    let target = task.model.expected_reward(&x1);
    vec![
        check(
            "cardio source 1 E[Y|do(X1=1)]",
            (source - 0.6).abs() <= 1e-12,
            format!("expected 0.6, got {source}"),
        ),
        check(
            "cardio target E[Y|do(X1=1)]",
            (target - 0.3).abs() <= 1e-12,
            format!("expected 0.3, got {target}"),
        ),
    ]
}

fn experiment(name: &str, mode: SourceMode, trials: u64, reps: u64) -> ExperimentReport {
    let mut cfg = TaskConfig::new(build_task(name).unwrap());
    cfg.trials = trials;
    cfg.reps = reps;
    cfg.seed = 0;
    cfg.thin = trials;
    cfg.sources = mode;
    run_experiment(&cfg).unwrap()
}

fn mean(r: &ExperimentReport, algo: Algo) -> f64 {
    r.result(algo).unwrap().mean_regret
}

/// Full scale: 50k rounds, 1000 repetitions.
const TRIALS: u64 = 50_000;
const REPS: u64 = 1_000;

fn criterion5() -> Vec<Check> {
    let mut out = Vec::new();
    let mut runs = Vec::new();
    for name in GRAPHS {
        runs.push((
            name,
            SourceMode::Identity,
            experiment(name, SourceMode::Identity, TRIALS, REPS),
        ));
    }
    for name in ["task1", "task3"] {
        runs.push((
            name,
            SourceMode::Perturbed,
            experiment(name, SourceMode::Perturbed, TRIALS, REPS),
        ));
    }
    for (name, mode, r) in &runs {
        let tag = format!("{name}/{}", mode.name());
        let (ucb, po, tr) = (
            mean(r, Algo::Ucb),
            mean(r, Algo::PoUcb),
            mean(r, Algo::TrUcb),
        );
        if *name == "task1" || *name == "task3" {
            out.push(check(
                format!("(a) {tag} trucb < poucb <= ucb"),
                tr < po && po <= ucb,
                format!("{tr:.2} / {po:.2} / {ucb:.2}"),
            ));
        }
        let pruned = r.pruned();
        if !pruned.is_empty() {
            let ratio = r.ratio().unwrap();
            out.push(check(
                format!("(b) {tag} ratio < 0.75"),
                ratio < 0.75,
                format!("{} arms pruned, ratio {ratio:.4}", pruned.len()),
            ));
        }
        let tr_res = r.result(Algo::TrUcb).unwrap();
        let pulls: u64 = pruned.iter().map(|a| tr_res.pulls_of(a)).sum();
        out.push(check(
            format!("(c) {tag} pruned arms unpulled"),
            pulls == 0,
            format!("{pulls} pulls of {} pruned arms", pruned.len()),
        ));
        for res in &r.results {
            out.push(check(
                format!("(d) {tag} {} mean regret <= bound", res.algo.name()),
                res.mean_regret <= res.regret_bound,
                format!("{:.2} <= {:.2}", res.mean_regret, res.regret_bound),
            ));
        }
    }
    for name in ["task1", "task2", "task3"] {
        let short = experiment(name, SourceMode::Identity, 5_000, REPS);
        let long = experiment(name, SourceMode::Identity, 50_000, REPS);
        for algo in Algo::ALL {
            let (a, b) = (mean(&short, algo) / 5_000.0, mean(&long, algo) / 50_000.0);
            out.push(check(
                format!("(e) {name} {} sub-linear", algo.name()),
                b <= 0.5 * a,
                format!("R/T {b:.3e} at 50k vs {a:.3e} at 5k"),
            ));
        }
    }
    out
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion6() -> Vec<Check> {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["2", "2", "1"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_cbl"))
            .args([
                "simulate", "--task", "1", "--trials", "3000", "--reps", "40", "--seed", "97",
                "--out",
            ])
            .arg(&dir)
            .env("CBL_THREADS", threads)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        outputs.push((status.stdout, read_dir(&dir)));
    }
    let n_files = outputs[0].1.len();
    vec![
        check(
            "identical flags give identical files",
            outputs[0] == outputs[1] && n_files > 0,
            format!("{n_files} files compared"),
        ),
        check(
            "thread count does not change output",
            outputs[0] == outputs[2],
            "CBL_THREADS=2 vs CBL_THREADS=1",
        ),
    ]
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

fn criterion7() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..50 {
        let n = VarSet::full(rng.gen_range(1..=4));
        let levels: Vec<LevelMax> = (0..16)
            .map(|_| LevelMax {
                upper: if rng.gen_bool(0.2) {
                    f64::INFINITY
                } else {
                    (rng.gen_range(0..20) as f64) / 20.0
                },
                argmax: Some(Assignment::EMPTY),
                exact: rng.gen_bool(0.3),
            })
            .collect();
        let (memo, _) = dominance::udb_with(n, &mut |s| levels[s.bits() as usize].clone());
        let naive = dominance::udb_naive(n, &mut |s| levels[s.bits() as usize].clone());
        if !same(memo, naive) {
            mismatches += 1;
        }
    }
    let mut out = vec![check(
        "random level tables, |N| <= 4",
        mismatches == 0,
        format!("{mismatches} mismatches over 50 tables"),
    )];
    for name in GRAPHS {
        let task = random_task(name, 1);
        let actions = dominance::required_actions(&task.ctx);
        let mut mismatches = 0;
        for _ in 0..50 {
            let mut table = BoundTable::default();
            for a in &actions {
                let lower = rng.gen_range(0.0..0.5);
                let bounds = match rng.gen_range(0..3) {
                    0 => Bounds::UNBOUNDED,
                    1 => Bounds {
                        lower,
                        upper: lower,
                    },
                    _ => Bounds {
                        lower,
                        upper: lower + rng.gen_range(0.0..0.5),
                    },
                };
                table.insert(
                    *a,
                    BoundEntry {
                        bounds,
                        ..BoundEntry::UNBOUNDED
                    },
                );
            }
            let (memo, _) = dominance::udb(&task.ctx, &table);
            let naive = dominance::udb_naive(task.ctx.non_manipulable, &mut |n| {
                dominance::level_max(&task.ctx, n, &table)
            });
            if !same(memo, naive) {
                mismatches += 1;
            }
        }
        out.push(check(
            format!("{name} random bound tables"),
            mismatches == 0,
            format!("{mismatches} mismatches over 50 tables"),
        ));
    }
    out
}

fn main() {
    let criteria: [(&str, Criterion); 7] = [
        ("graph and enumeration goldens", criterion1),
        ("exact-oracle properties", criterion2),
        ("hierarchy optima", criterion3),
        ("intro example", criterion4),
        ("regret experiments", criterion5),
        ("determinism", criterion6),
        ("udb oracle equivalence", criterion7),
    ];
    let known: BTreeSet<&str> = KNOWN_FAILURES.iter().copied().collect();
    let mut failed = BTreeSet::new();
    for (i, (title, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        let (checks, elapsed) = timed(run);
        let failing: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
        let status = if failing.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {n}: {title} ({} of {} checks passed, {:.1}s)",
            checks.len() - failing.len(),
            checks.len(),
            elapsed.as_secs_f64()
        );
        for c in &checks {
            let id = format!("{n}/{}", c.id);
            let note = if known.contains(id.as_str()) {
                " [known]"
            } else {
                ""
            };
            if !c.pass {
                println!("    FAIL {}: {}{note}", c.id, c.detail);
                failed.insert(id);
            } else if std::env::var_os("CBL_ACCEPTANCE_VERBOSE").is_some() {
                println!("    pass {}: {}", c.id, c.detail);
            }
        }
    }
    let unexpected: Vec<&String> = failed
        .iter()
        .filter(|id| !known.contains(id.as_str()))
        .collect();
    let fixed: Vec<&&str> = known.iter().filter(|id| !failed.contains(**id)).collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
    }
    if !fixed.is_empty() {
        eprintln!("known failures now pass; update the registry: {fixed:?}");
    }
    if !unexpected.is_empty() || !fixed.is_empty() {
        std::process::exit(1);
    }
    println!(
        "acceptance: {} known failures, none unexpected",
        failed.len()
    );
}
