//! Reward machines with numeric features on a grid world: machine builders,
//! the product process, tabular QRM/CRM/HRM learners, exact oracles,
//! closed-form shortest-path guarantees and an experiment harness.

pub mod gridworld;
pub mod guarantees;
pub mod harness;
pub mod learners;
pub mod mdprm;
pub mod oracle;
pub mod reward_machine;

pub use gridworld::{generate_map, Action, EnvState, FeatureValuation, GridMap, MapError, ObjectType, Pos, Setup};
pub use harness::{Algorithm, HarnessError, Method, RmVariant, RunConfig, RunLog};
pub use learners::{EvalPoint, LearnerParams};
pub use mdprm::{ProductModel, ProductState};
pub use reward_machine::{RewardMachine, RmError, RmNode, Task};
