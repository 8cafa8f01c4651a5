//! UCB, POMIS-restricted UCB and clipped trUCB with pseudo-regret accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::scm::{Assignment, DiscreteModel};
use crate::transport::Bounds;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("no arms to play")]
    NoArms,
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

/// One arm: an intervention, its exact mean and its transport bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub action: Assignment,
    pub mean: f64,
    pub bounds: Bounds,
}

/// Arms plus the optimal mean over the unrestricted action space.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditProblem {
    pub arms: Vec<Arm>,
    pub mu_star: f64,
}

impl BanditProblem {
    /// Arms with exact means from `model`; `all_actions` fixes `μ★`.
    pub fn new(
        model: &DiscreteModel,
        arms: &[(Assignment, Bounds)],
        all_actions: &[Assignment],
    ) -> Self {
        let mu_star = all_actions
            .iter()
            .map(|a| model.expected_reward(a))
            .fold(f64::NEG_INFINITY, f64::max);
        let arms = arms
            .iter()
            .map(|&(action, bounds)| Arm {
                action,
                mean: model.expected_reward(&action),
                bounds,
            })
            .collect();
        BanditProblem { arms, mu_star }
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.arms
            .iter()
            .map(|a| (self.mu_star - a.mean).max(0.0))
            .collect()
    }

    /// The same arms with `[0, ∞)` bounds.
    pub fn unbounded(&self) -> BanditProblem {
        BanditProblem {
            arms: self
                .arms
                .iter()
                .map(|a| Arm {
                    bounds: Bounds::UNBOUNDED,
                    ..*a
                })
                .collect(),
            mu_star: self.mu_star,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArmStats {
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ArmStats {
    pub fn mean(&self) -> f64 {
        self.reward_sum / self.pulls as f64
    }
}

/// `mean + sqrt(4 ln t / (2N))`; `+∞` before the first pull.
pub fn ucb_index(stats: &ArmStats, t: u64) -> f64 {
    if stats.pulls == 0 {
        return f64::INFINITY;
    }
    stats.mean() + (4.0 * (t as f64).ln() / (2.0 * stats.pulls as f64)).sqrt()
}

/// `min{max{U, ℓ}, u}`.
pub fn clipped_index(stats: &ArmStats, bounds: &Bounds, t: u64) -> f64 {
    ucb_index(stats, t).max(bounds.lower).min(bounds.upper)
}

/// Index rule used by a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IndexRule {
    Ucb,
    Clipped,
}

/// A sampled round kept in the thinned trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub arm: usize,
    pub reward: bool,
    pub cum_regret: f64,
}

/// Outcome of one simulated interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditRun {
    pub stats: Vec<ArmStats>,
    pub final_regret: f64,
    /// Rows at every `thin`-th round and at the last round.
    pub trace: Vec<TraceRow>,
}

impl BanditRun {
    pub fn pulls(&self) -> Vec<u64> {
        self.stats.iter().map(|s| s.pulls).collect()
    }
}

/// Play `horizon` rounds. Rewards are Bernoulli draws at each arm's exact
/// mean; regret is pseudo-regret `Σ_t Δ_{x_t}`. Ties go to the lowest arm index.
pub fn run<R: Rng + ?Sized>(
    problem: &BanditProblem,
    rule: IndexRule,
    horizon: u64,
    thin: u64,
    rng: &mut R,
) -> Result<BanditRun, BanditError> {
    if horizon == 0 {
        return Err(BanditError::EmptyHorizon);
    }
    if problem.arms.is_empty() {
        return Err(BanditError::NoArms);
    }
    let thin = thin.max(1);
    let gaps = problem.gaps();
    let mut stats = vec![ArmStats::default(); problem.arms.len()];
    let mut regret = 0.0;
    let mut trace = Vec::with_capacity((horizon / thin + 1) as usize);
    for t in 1..=horizon {
        let mut best = 0;
        let mut best_index = f64::NEG_INFINITY;
        for (i, (s, arm)) in stats.iter().zip(&problem.arms).enumerate() {
            let idx = match rule {
                IndexRule::Ucb => ucb_index(s, t),
                IndexRule::Clipped => clipped_index(s, &arm.bounds, t),
            };
            if idx > best_index {
                best_index = idx;
                best = i;
            }
        }
        let reward = rng.gen::<f64>() < problem.arms[best].mean;
        stats[best].pulls += 1;
        stats[best].reward_sum += reward as u8 as f64;
        regret += gaps[best];
        if t % thin == 0 || t == horizon {
            trace.push(TraceRow {
                t,
                arm: best,
                reward,
                cum_regret: regret,
            });
        }
    }
    Ok(BanditRun {
        stats,
        final_regret: regret,
        trace,
    })
}

/// UCB over `problem`'s arms, ignoring their bounds.
pub fn run_ucb<R: Rng + ?Sized>(
    problem: &BanditProblem,
    horizon: u64,
    thin: u64,
    rng: &mut R,
) -> Result<BanditRun, BanditError> {
    run(problem, IndexRule::Ucb, horizon, thin, rng)
}

/// Clipped UCB; `problem` should hold only the surviving arms.
pub fn run_trucb<R: Rng + ?Sized>(
    problem: &BanditProblem,
    horizon: u64,
    thin: u64,
    rng: &mut R,
) -> Result<BanditRun, BanditError> {
    run(problem, IndexRule::Clipped, horizon, thin, rng)
}

/// `8 Σ_{Δ>0, u ≥ μ★} ln T / Δ + (1 + π²/3) Σ_{Δ>0, u ≥ ℓ★} Δ`.
pub fn regret_bound(
    gaps: &[f64],
    bounds: &[Bounds],
    mu_star: f64,
    l_star: f64,
    horizon: u64,
) -> f64 {
    let ln_t = (horizon as f64).ln();
    let c = 1.0 + std::f64::consts::PI.powi(2) / 3.0;
    gaps.iter()
        .zip(bounds)
        .filter(|(&d, _)| d > 0.0)
        .map(|(&d, b)| {
            let mut term = 0.0;
            if b.upper >= mu_star {
                term += 8.0 * ln_t / d;
            }
            if b.upper >= l_star {
                term += c * d;
            }
            term
        })
        .fold(0.0, |acc, x| acc + x)
}

/// Per-repetition generator: ChaCha8 keyed by the master seed, one stream per repetition.
pub fn rep_rng(master_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep);
    rng
}

/// Independent repetitions of one algorithm, reduced in repetition order.
pub fn monte_carlo(
    problem: &BanditProblem,
    rule: IndexRule,
    horizon: u64,
    reps: u64,
    thin: u64,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<BanditRun>, BanditError> {
    if reps == 0 {
        return Err(BanditError::NoRepetitions);
    }
    let work = || {
        (0..reps)
            .into_par_iter()
            .map(|rep| run(problem, rule, horizon, thin, &mut rep_rng(master_seed, rep)))
            .collect::<Result<Vec<_>, _>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BanditError::ThreadPool(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
