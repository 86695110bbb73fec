//! Cross-product of the grid world and a reward machine.

use thiserror::Error;

use crate::gridworld::{Action, EnvState, FeatureValuation, GridMap};
use crate::reward_machine::{RewardMachine, RmError, RmNode, RmTransition};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProductError {
    #[error("product state is absorbing; machine state {0} is terminal")]
    SteppedTerminal(String),
    #[error(transparent)]
    Machine(#[from] RmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProductState {
    pub env: EnvState,
    pub rm: RmNode,
}

impl ProductState {
    pub fn initial(map: &GridMap, rm: &RewardMachine) -> Self {
        ProductState { env: map.start_state(), rm: rm.initial() }
    }
}

/// One environment interaction and its labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub s: EnvState,
    pub a: Action,
    pub next: EnvState,
    pub valuation: FeatureValuation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductStep {
    pub next: ProductState,
    pub reward: f64,
    pub done: bool,
    pub experience: Experience,
}

/// Synthetic transition of one machine state under a shared experience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterfactualEntry {
    pub state: RmNode,
    pub reward: f64,
    pub next: RmNode,
    pub done: bool,
}

pub fn product_step(
    map: &GridMap,
    rm: &RewardMachine,
    ps: ProductState,
    a: Action,
) -> Result<ProductStep, ProductError> {
    if rm.is_terminal(ps.rm) {
        return Err(ProductError::SteppedTerminal(rm.name(ps.rm).to_string()));
    }
    let next = map.step(ps.env, a);
    let valuation = map.label(ps.env, next);
    let RmTransition { next: u, reward, done } = rm.step(ps.rm, &valuation)?;
    Ok(ProductStep {
        next: ProductState { env: next, rm: u },
        reward,
        done,
        experience: Experience { s: ps.env, a, next, valuation },
    })
}

/// Replays one experience through every non-terminal machine state. The
/// labeling depends only on the environment transition, so a single
/// valuation serves all of them.
pub fn counterfactual(rm: &RewardMachine, exp: &Experience) -> Result<Vec<CounterfactualEntry>, RmError> {
    rm.states()
        .map(|u| {
            let tr = rm.step(u, &exp.valuation)?;
            Ok(CounterfactualEntry { state: u, reward: tr.reward, next: tr.next, done: tr.done })
        })
        .collect()
}

/// Product dynamics tabulated for every walkable cell, non-terminal machine
/// state and action. Entry `(cell, u, a)` doubles as the counterfactual
/// transition of `u` under the environment move `(cell, a)`.
#[derive(Debug, Clone)]
pub struct ProductModel {
    num_cells: usize,
    num_states: usize,
    initial: (usize, RmNode),
    table: Vec<ModelTransition>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTransition {
    pub next_cell: usize,
    pub next: RmNode,
    pub reward: f64,
    pub done: bool,
}

impl ProductModel {
    pub fn build(map: &GridMap, rm: &RewardMachine) -> Result<Self, ProductError> {
        let num_cells = map.num_walkable();
        let num_states = rm.num_states();
        let mut table = Vec::with_capacity(num_cells * num_states * Action::COUNT);
        for cell in 0..num_cells {
            let s = EnvState { pos: map.cell_at(cell) };
            for u in rm.states() {
                for a in Action::ALL {
                    let out = product_step(map, rm, ProductState { env: s, rm: u }, a)?;
                    table.push(ModelTransition {
                        next_cell: map.cell_index(out.next.env.pos),
                        next: out.next.rm,
                        reward: out.reward,
                        done: out.done,
                    });
                }
            }
        }
        Ok(ProductModel {
            num_cells,
            num_states,
            initial: (map.cell_index(map.agent_start()), rm.initial()),
            table,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Start cell and initial machine state.
    pub fn initial(&self) -> (usize, RmNode) {
        self.initial
    }

    pub fn is_terminal(&self, u: RmNode) -> bool {
        u.0 >= self.num_states
    }

    #[inline]
    pub fn transition(&self, cell: usize, u: RmNode, a: Action) -> ModelTransition {
        debug_assert!(u.0 < self.num_states);
        self.table[(cell * self.num_states + u.0) * Action::COUNT + a.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Pos;
    use crate::reward_machine::{build_boolean_rm, build_numeric_rm, Task};

    // a at (1,5), b at (5,1), c at (5,5); agent at the center.
    const MAP: &str = "XXXXXXX\nX....aX\nX.....X\nX..A..X\nX.....X\nXb...cX\nXXXXXXX\n";

    fn setup(task: &str) -> (GridMap, Task) {
        (GridMap::parse(MAP).unwrap(), task.parse().unwrap())
    }

    #[test]
    fn boolean_arrival_advances() {
        let (map, task) = setup("a-b-c");
        let rm = build_boolean_rm(&task, 1.0).unwrap();
        let ps = ProductState { env: EnvState { pos: Pos::new(2, 5) }, rm: RmNode(0) };
        let out = product_step(&map, &rm, ps, Action::Up).unwrap();
        assert_eq!(out.next.rm, RmNode(1));
        assert_eq!((out.reward, out.done), (0.0, false));
        assert_eq!(out.experience.valuation, map.label(ps.env, out.next.env));
    }

    #[test]
    fn numeric_self_loop_pays_distance() {
        let (map, task) = setup("a");
        let rm = build_numeric_rm(&task, &[0.0]).unwrap();
        // (5,2): distance to a after moving up to (4,2) is 3 + 3 = 6.
        let ps = ProductState { env: EnvState { pos: Pos::new(5, 2) }, rm: RmNode(0) };
        let out = product_step(&map, &rm, ps, Action::Up).unwrap();
        assert_eq!(out.reward, -6.0);
        assert_eq!(out.next.rm, RmNode(0));
    }

    #[test]
    fn final_arrival_is_absorbing() {
        let (map, task) = setup("a");
        let rm = build_boolean_rm(&task, 1.0).unwrap();
        let ps = ProductState { env: EnvState { pos: Pos::new(1, 4) }, rm: RmNode(0) };
        let out = product_step(&map, &rm, ps, Action::Right).unwrap();
        assert!(out.done);
        assert_eq!(out.reward, 1.0);
        assert!(matches!(
            product_step(&map, &rm, out.next, Action::Left),
            Err(ProductError::SteppedTerminal(_))
        ));
    }

    #[test]
    fn counterfactual_batch_per_state() {
        let (map, task) = setup("a-b-c");
        let rm = build_boolean_rm(&task, 1.0).unwrap();
        // Step onto b from (4,1).
        let ps = ProductState { env: EnvState { pos: Pos::new(4, 1) }, rm: RmNode(0) };
        let out = product_step(&map, &rm, ps, Action::Down).unwrap();
        let batch = counterfactual(&rm, &out.experience).unwrap();
        assert_eq!(batch.len(), 3);
        assert_eq!((batch[0].next, batch[0].reward), (RmNode(0), 0.0));
        assert_eq!((batch[1].next, batch[1].reward), (RmNode(2), 0.0));
        assert_eq!((batch[2].next, batch[2].reward), (RmNode(2), 0.0));
        assert!(batch.iter().all(|e| !e.done));
        // Entry for the true state reproduces the real transition.
        assert_eq!(batch[0].next, out.next.rm);
        assert_eq!(batch[0].reward, out.reward);
    }

    #[test]
    fn model_matches_direct_stepping() {
        let (map, task) = setup("a-b-c");
        let rm = build_numeric_rm(&task, &[0.0, 0.0, 5.0]).unwrap();
        let model = ProductModel::build(&map, &rm).unwrap();
        assert_eq!(model.initial(), (map.cell_index(map.agent_start()), RmNode(0)));
        for cell in 0..model.num_cells() {
            let s = EnvState { pos: map.cell_at(cell) };
            for a in Action::ALL {
                let out = product_step(&map, &rm, ProductState { env: s, rm: RmNode(0) }, a).unwrap();
                let batch = counterfactual(&rm, &out.experience).unwrap();
                for entry in batch {
                    let t = model.transition(cell, entry.state, a);
                    assert_eq!(t.next_cell, map.cell_index(out.next.env.pos));
                    assert_eq!((t.next, t.reward, t.done), (entry.next, entry.reward, entry.done));
                }
            }
        }
    }

    #[test]
    fn single_state_batch_equals_real_step() {
        let (map, task) = setup("a");
        let rm = build_boolean_rm(&task, 1.0).unwrap();
        let ps = ProductState::initial(&map, &rm);
        for a in Action::ALL {
            let out = product_step(&map, &rm, ps, a).unwrap();
            let batch = counterfactual(&rm, &out.experience).unwrap();
            assert_eq!(batch.len(), 1);
            assert_eq!(
                (batch[0].reward, batch[0].next, batch[0].done),
                (out.reward, out.next.rm, out.done)
            );
        }
    }
}
