#![allow(dead_code)]

use cbl_core::harness::{build_task, SourceMode, Task};

/// Graph fixtures used by the exact-oracle suites.
pub const GRAPHS: [&str; 6] = ["task1", "task2", "task3", "hierarchy", "cardio", "fivevar"];

/// The fixture's graph, priors and constraint with a random target model
/// and perturbed sources, both drawn from `seed`.
pub fn random_task(name: &str, seed: u64) -> Task {
    let mut f = build_task(name).unwrap();
    f.reward = Some(f.reward_name().unwrap().to_string());
    f.scm = None;
    f.sources = None;
    Task::prepare(&f, seed, SourceMode::Perturbed).unwrap()
}
