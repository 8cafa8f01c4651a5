use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cbl_core::graph::VarSet;
use cbl_core::harness::{
    build_task, emit, fmt6, parse_graph, render_table, run_experiment, validate, Algo, Fixture,
    Format, HarnessError, SourceMode, Task, TaskConfig,
};
use cbl_core::intervention_sets::{actions_of, miss, poiss, pomiss, ActionSpaceContext};

#[derive(Parser)]
#[command(
    name = "cbl",
    version,
    about = "Structural causal bandits with transported bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pomis,
    Pois,
    Mis,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sources {
    Perturbed,
    Identity,
}

impl From<Sources> for SourceMode {
    fn from(s: Sources) -> Self {
        match s {
            Sources::Perturbed => SourceMode::Perturbed,
            Sources::Identity => SourceMode::Identity,
        }
    }
}

#[derive(clap::Args)]
struct TaskArgs {
    /// Built-in task: 1, 2, 3, 3-verbatim, hierarchy, cardio, fivevar.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    task: Option<String>,
    /// Fixture file instead of a built-in task.
    #[arg(long)]
    fixture: Option<PathBuf>,
}

impl TaskArgs {
    fn load(&self) -> Result<Fixture, HarnessError> {
        match (&self.task, &self.fixture) {
            (_, Some(path)) => Fixture::parse(&fs::read_to_string(path)?),
            (Some(id), None) => build_task(id),
            (None, None) => unreachable!("clap requires one of --task/--fixture"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate intervention sets of a graph.
    Pomis {
        /// Graph JSON (bare graph object or full fixture).
        #[arg(long)]
        graph: PathBuf,
        /// Reward variable; defaults to the fixture's.
        #[arg(long)]
        reward: Option<String>,
        /// Comma-separated non-manipulable variables.
        #[arg(long, value_delimiter = ',')]
        nonmanip: Vec<String>,
        #[arg(long, value_enum, default_value = "pomis")]
        kind: Kind,
    },
    /// Causal bounds, dominance bounds and pruning for a task.
    Bounds {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "perturbed")]
        sources: Sources,
    },
    /// Monte Carlo bandit experiment.
    Simulate {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 50_000)]
        trials: u64,
        #[arg(long, default_value_t = 1_000)]
        reps: u64,
        /// Comma-separated subset of ucb, poucb, trucb.
        #[arg(long, value_delimiter = ',', default_value = "ucb,poucb,trucb")]
        algos: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Trace and curve sampling interval; defaults to trials / 100.
        #[arg(long)]
        thin: Option<u64>,
        #[arg(long, value_enum, default_value = "perturbed")]
        sources: Sources,
        /// Comma-separated subset of csv, table, plotdata.
        #[arg(long, value_delimiter = ',', default_value = "csv,table,plotdata")]
        format: Vec<String>,
        /// Worker threads for repetitions.
        #[arg(long, env = "CBL_THREADS")]
        threads: Option<usize>,
    },
    /// Fixture self-consistency and reference-value checks.
    Validate {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "identity")]
        sources: Sources,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Pomis {
            graph,
            reward,
            nonmanip,
            kind,
        } => {
            let (spec, fixture_reward) = parse_graph(&fs::read_to_string(graph)?)?;
            let g = spec.diagram()?;
            let reward = reward.or(fixture_reward).ok_or_else(|| {
                HarnessError::Config("--reward is required for a bare graph".into())
            })?;
            let y = g.id(&reward)?;
            let n = g.set(&nonmanip)?;
            let ctx = ActionSpaceContext::new(g.clone(), y, n)?;
            let sets: Vec<VarSet> = match kind {
                Kind::Pomis => pomiss(&ctx),
                Kind::Mis => miss(&ctx),
                Kind::Pois => poiss(&ctx.projected(), y),
            };
            for s in sets {
                println!("{}", g.fmt_set(s));
            }
        }
        Command::Bounds {
            task,
            seed,
            sources,
        } => {
            let fixture = task.load()?;
            let t = Task::prepare(&fixture, seed, sources.into())?;
            print!("{}", render_bounds(&t)?);
        }
        Command::Simulate {
            task,
            trials,
            reps,
            algos,
            seed,
            out,
            thin,
            sources,
            format,
            threads,
        } => {
            let mut cfg = TaskConfig::new(task.load()?);
            cfg.trials = trials;
            cfg.reps = reps;
            cfg.seed = seed;
            cfg.algos = algos
                .iter()
                .map(|a| a.parse())
                .collect::<Result<Vec<Algo>, _>>()?;
            cfg.thin = thin.unwrap_or((trials / 100).max(1));
            cfg.sources = sources.into();
            cfg.threads = threads;
            let formats = format
                .iter()
                .map(|f| f.parse())
                .collect::<Result<Vec<Format>, _>>()?;
            let report = run_experiment(&cfg)?;
            emit(&report, &out, &formats)?;
            print!("{}", render_table(&report));
        }
        Command::Validate {
            task,
            seed,
            sources,
        } => {
            let fixture = task.load()?;
            if fixture.name == "task3" {
                let verbatim = build_task("3-verbatim")?;
                let report = validate(&verbatim, seed, sources.into());
                if !report.is_consistent() {
                    eprintln!("warning: the printed Task 3 model fails validation; using the repaired fixture");
                    eprint!("{}", report.render());
                }
            }
            let report = validate(&fixture, seed, sources.into());
            print!("{}", report.render());
            println!(
                "{} checks, {} mismatches, {} structural issues",
                report.checks.len(),
                report.mismatches(),
                report.issues.len()
            );
            if !report.is_consistent() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn render_bounds(t: &Task) -> Result<String, HarnessError> {
    let dom = t.dominance()?;
    let target = actions_of(&pomiss(&t.ctx));
    let mut out = format!(
        "l_star {}  u_star {}\naction\tlower\tupper\ttransportable\tn_expressions\ttransport_upper\tpruned\n",
        fmt6(dom.table.l_star),
        fmt6(dom.table.u_star)
    );
    for (a, e) in dom.raw.iter() {
        let capped = dom.table.entry(&a);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.render(&a),
            fmt6(e.bounds.lower),
            fmt6(e.bounds.upper),
            e.transportable,
            e.n_expressions,
            fmt6(capped.bounds.upper),
            if target.contains(&a) {
                capped.pruned.to_string()
            } else {
                "-".into()
            }
        ));
    }
    Ok(out)
}
