//! Structural causal bandits with transported causal bounds.

pub mod bandit;
pub mod dominance;
pub mod graph;
pub mod harness;
pub mod intervention_sets;
pub mod scm;
pub mod transport;

pub use bandit::{BanditProblem, BanditRun, IndexRule};
pub use dominance::{BoundEntry, BoundTable};
pub use graph::{Diagram, GraphError, VarId, VarSet};
pub use harness::{build_task, Fixture, SourceMode, Task, TaskConfig};
pub use intervention_sets::ActionSpaceContext;
pub use scm::{Assignment, DiscreteModel, DistTable, ScmSpec};
pub use transport::{BoundExpr, Bounds, PriorSpec, SourceStore, Transport};
