//! Exact references: BFS task lengths and value iteration over the product.

use std::collections::VecDeque;

use thiserror::Error;

use crate::gridworld::{Action, GridMap, ObjectType, Pos};
use crate::learners::{greedy_rollout, Rollout};
use crate::mdprm::ProductModel;
use crate::reward_machine::{RmNode, Task};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("object type {0} required by the task is not on the map")]
    MissingType(ObjectType),
    #[error("value iteration did not reach tolerance within {0} sweeps")]
    NonConvergence(usize),
    #[error("discount must lie in (0, 1)")]
    InvalidDiscount,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const MAX_SWEEPS: usize = 100_000;

/// Shortest-path lengths from `from` to every walkable cell, walls respected.
pub fn bfs_distances(map: &GridMap, from: Pos) -> Vec<u32> {
    let mut dist = vec![u32::MAX; map.num_walkable()];
    let mut queue = VecDeque::new();
    dist[map.cell_index(from)] = 0;
    queue.push_back(from);
    while let Some(p) = queue.pop_front() {
        let d = dist[map.cell_index(p)];
        for a in Action::ALL {
            let q = map.step(crate::gridworld::EnvState { pos: p }, a).pos;
            let qi = map.cell_index(q);
            if dist[qi] == u32::MAX {
                dist[qi] = d + 1;
                queue.push_back(q);
            }
        }
    }
    dist
}

/// Best route through the task: total length, per-leg lengths and the
/// object visited on each leg.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRoute {
    pub total: u32,
    pub legs: Vec<u32>,
    pub objects: Vec<Pos>,
}

/// Minimum number of moves that visit one object of each task type in
/// order, minimized over the choice of same-type objects.
pub fn bfs_task_length(map: &GridMap, task: &Task) -> Result<u32, OracleError> {
    bfs_task_route(map, map.agent_start(), task).map(|r| r.total)
}

pub fn bfs_task_route(map: &GridMap, start: Pos, task: &Task) -> Result<TaskRoute, OracleError> {
    // Frontier of (position, cost so far, route legs, route objects).
    let mut frontier: Vec<(Pos, u32, Vec<u32>, Vec<Pos>)> = vec![(start, 0, Vec::new(), Vec::new())];
    for &t in task.legs() {
        let targets = map.objects_of(t);
        if targets.is_empty() {
            return Err(OracleError::MissingType(t));
        }
        let fields: Vec<Vec<u32>> = frontier.iter().map(|(p, ..)| bfs_distances(map, *p)).collect();
        frontier = targets
            .iter()
            .map(|&o| {
                let oi = map.cell_index(o);
                let (best, leg) = frontier
                    .iter()
                    .zip(&fields)
                    .map(|(f, field)| (f, field[oi]))
                    .min_by_key(|(f, leg)| f.1 + leg)
                    .expect("non-empty frontier");
                let mut legs = best.2.clone();
                legs.push(leg);
                let mut objects = best.3.clone();
                objects.push(o);
                (o, best.1 + leg, legs, objects)
            })
            .collect();
    }
    let (_, total, legs, objects) = frontier.into_iter().min_by_key(|f| f.1).expect("non-empty frontier");
    Ok(TaskRoute { total, legs, objects })
}

/// Optimal state values over `(cell, machine state)` with a greedy policy.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    num_states: usize,
    gamma: f64,
    pub values: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
}

impl ValueFunction {
    pub fn value(&self, cell: usize, u: RmNode) -> f64 {
        self.values[cell * self.num_states + u.0]
    }

    /// One-step lookahead values of all four actions.
    pub fn q_values(&self, model: &ProductModel, cell: usize, u: RmNode) -> [f64; 4] {
        Action::ALL.map(|a| {
            let t = model.transition(cell, u, a);
            let future = if t.done { 0.0 } else { self.value(t.next_cell, t.next) };
            t.reward + self.gamma * future
        })
    }

    /// Greedy action, lowest index among exact ties.
    pub fn greedy_action(&self, model: &ProductModel, cell: usize, u: RmNode) -> Action {
        let q = self.q_values(model, cell, u);
        let mut best = 0;
        for i in 1..4 {
            if q[i] > q[best] {
                best = i;
            }
        }
        Action::from_index(best)
    }

    /// Largest change one more Bellman backup would make.
    pub fn bellman_residual(&self, model: &ProductModel) -> f64 {
        let mut r: f64 = 0.0;
        for cell in 0..model.num_cells() {
            for u in 0..self.num_states {
                let best = max4(self.q_values(model, cell, RmNode(u)));
                r = r.max((best - self.value(cell, RmNode(u))).abs());
            }
        }
        r
    }
}

fn max4(q: [f64; 4]) -> f64 {
    q.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Synchronous value iteration until the sup-norm change drops below `tol`.
pub fn value_iteration(model: &ProductModel, gamma: f64, tol: f64) -> Result<ValueFunction, OracleError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OracleError::InvalidDiscount);
    }
    let n = model.num_states();
    let mut vf = ValueFunction {
        num_states: n,
        gamma,
        values: vec![0.0; model.num_cells() * n],
        residual: f64::INFINITY,
        sweeps: 0,
    };
    let mut next = vf.values.clone();
    while vf.sweeps < MAX_SWEEPS {
        let mut residual: f64 = 0.0;
        for cell in 0..model.num_cells() {
            for u in 0..n {
                let best = max4(vf.q_values(model, cell, RmNode(u)));
                let i = cell * n + u;
                residual = residual.max((best - vf.values[i]).abs());
                next[i] = best;
            }
        }
        std::mem::swap(&mut vf.values, &mut next);
        vf.sweeps += 1;
        vf.residual = residual;
        if residual < tol {
            return Ok(vf);
        }
    }
    Err(OracleError::NonConvergence(MAX_SWEEPS))
}

/// Reference performance of the value-iteration policy.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalConstants {
    pub arps: f64,
    pub episode_len: u64,
    pub completed: bool,
    pub discounted_return: f64,
}

pub fn optimal_rollout(model: &ProductModel, vf: &ValueFunction, max_steps: u64) -> Rollout {
    greedy_rollout(model, &mut |cell, u| vf.greedy_action(model, cell, u), max_steps, vf.gamma)
}

pub fn optimal_score_constants(
    model: &ProductModel,
    gamma: f64,
    max_steps: u64,
) -> Result<OptimalConstants, OracleError> {
    let vf = value_iteration(model, gamma, DEFAULT_TOLERANCE)?;
    let r = optimal_rollout(model, &vf, max_steps);
    Ok(OptimalConstants {
        arps: r.arps(),
        episode_len: r.episode_len,
        completed: r.completed,
        discounted_return: r.discounted_return,
    })
}
