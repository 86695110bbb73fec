//! Tabular learners over the product process.
//!
//! * QRM: Q-learning on `(cell, machine state)` using only the real transition.
//! * CRM: QRM plus one counterfactual update per non-terminal machine state.
//! * HRM: one option per machine edge `u -> u_t`, each with its own low-level
//!   table trained on synthetic experience, chosen by a high-level table.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::Action;
use crate::mdprm::{ModelTransition, ProductModel};
use crate::reward_machine::{RewardMachine, RmNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LearnerError {
    #[error("machine state {0} has no outgoing non-self-loop edge to form an option")]
    NoOutgoingEdge(String),
    #[error("invalid learner parameter: {0}")]
    InvalidParams(String),
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub total_steps: u64,
    pub max_episode_steps: u64,
    pub eval_every: u64,
    pub q_init: f64,
    pub seed: u64,
    /// Extra reward an HRM option earns when it reaches its target state.
    pub option_success_reward: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            alpha: 0.5,
            gamma: 0.9,
            epsilon: 0.1,
            total_steps: 100_000,
            max_episode_steps: 1000,
            eval_every: 1000,
            q_init: 0.0,
            seed: 0,
            option_success_reward: 1.0,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |what: &str| Err(LearnerError::InvalidParams(what.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.max_episode_steps == 0 || self.eval_every == 0 {
            return bad("max_episode_steps and eval_every must be positive");
        }
        if !self.q_init.is_finite() {
            return bad("q_init must be finite");
        }
        Ok(())
    }
}

/// Dense `(cell, machine state) x action` table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(num_cells: usize, num_states: usize, init: f64) -> Self {
        QTable { num_states, values: vec![init; num_cells * num_states * Action::COUNT] }
    }

    pub fn for_model(model: &ProductModel, init: f64) -> Self {
        QTable::new(model.num_cells(), model.num_states(), init)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    fn offset(&self, cell: usize, u: RmNode) -> usize {
        (cell * self.num_states + u.0) * Action::COUNT
    }

    pub fn row(&self, cell: usize, u: RmNode) -> &[f64; 4] {
        let o = self.offset(cell, u);
        self.values[o..o + Action::COUNT].try_into().expect("row of four")
    }

    pub fn get(&self, cell: usize, u: RmNode, a: Action) -> f64 {
        self.values[self.offset(cell, u) + a.index()]
    }

    pub fn set(&mut self, cell: usize, u: RmNode, a: Action, v: f64) {
        let o = self.offset(cell, u);
        self.values[o + a.index()] = v;
    }

    pub fn max(&self, cell: usize, u: RmNode) -> f64 {
        max_of(self.row(cell, u))
    }

    /// Greedy action, lowest index among ties.
    pub fn greedy_action(&self, cell: usize, u: RmNode) -> Action {
        Action::from_index(first_argmax(self.row(cell, u)))
    }

    /// Tabular Q-learning update. `next` is `None` for terminal successors.
    #[allow(clippy::too_many_arguments)]
    pub fn update(&mut self, cell: usize, u: RmNode, a: Action, reward: f64, next: Option<(usize, RmNode)>, alpha: f64, gamma: f64) {
        let bootstrap = next.map_or(0.0, |(c, v)| self.max(c, v));
        let i = self.offset(cell, u) + a.index();
        self.values[i] += alpha * (reward + gamma * bootstrap - self.values[i]);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy over `values` with uniform random tie-breaking; returns
/// an index into `values`.
pub fn epsilon_greedy<R: Rng>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..values.len());
    }
    let best = max_of(values);
    let ties = values.iter().filter(|&&v| v == best).count();
    let mut pick = if ties > 1 { rng.gen_range(0..ties) } else { 0 };
    for (i, &v) in values.iter().enumerate() {
        if v == best {
            if pick == 0 {
                return i;
            }
            pick -= 1;
        }
    }
    unreachable!("maximum is attained")
}

pub fn select_action<R: Rng>(row: &[f64; 4], epsilon: f64, rng: &mut R) -> Action {
    Action::from_index(epsilon_greedy(row, epsilon, rng))
}

/// One greedy evaluation snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub arps_raw: f64,
    pub score_norm: f64,
    pub episode_len: u64,
    pub completed: bool,
}

/// Scores a greedy policy at a given training step.
pub trait Evaluate {
    fn evaluate(&self, step: u64, policy: &mut dyn FnMut(usize, RmNode) -> Action) -> EvalPoint;
}

/// Outcome of a deterministic greedy episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Visited `(cell, machine node)` pairs, starting state included.
    pub trajectory: Vec<(usize, RmNode)>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub discounted_return: f64,
    pub episode_len: u64,
    pub completed: bool,
}

impl Rollout {
    /// Undiscounted reward per step; 0 for an empty episode.
    pub fn arps(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }
}

/// Runs `policy` from the start state until the machine reaches a terminal
/// or `max_steps` moves were made.
pub fn greedy_rollout(
    model: &ProductModel,
    policy: &mut dyn FnMut(usize, RmNode) -> Action,
    max_steps: u64,
    gamma: f64,
) -> Rollout {
    let (mut cell, mut u) = model.initial();
    let mut out = Rollout {
        trajectory: vec![(cell, u)],
        actions: Vec::new(),
        rewards: Vec::new(),
        discounted_return: 0.0,
        episode_len: 0,
        completed: false,
    };
    let mut discount = 1.0;
    while out.episode_len < max_steps {
        let a = policy(cell, u);
        let t = model.transition(cell, u, a);
        out.actions.push(a);
        out.rewards.push(t.reward);
        out.discounted_return += discount * t.reward;
        discount *= gamma;
        out.episode_len += 1;
        cell = t.next_cell;
        u = t.next;
        out.trajectory.push((cell, u));
        if t.done {
            out.completed = true;
            break;
        }
    }
    out
}

/// Learner-side hooks used by the shared episodic loop.
trait Agent {
    fn act(&mut self, cell: usize, u: RmNode, rng: &mut ChaCha8Rng) -> Action;
    fn observe(&mut self, cell: usize, u: RmNode, a: Action, t: ModelTransition, truncated: bool);
    fn greedy(&self) -> Box<dyn FnMut(usize, RmNode) -> Action + '_>;
}

fn train(agent: &mut dyn Agent, model: &ProductModel, params: &LearnerParams, eval: &dyn Evaluate) -> Vec<EvalPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut points = vec![eval.evaluate(0, &mut *agent.greedy())];
    let (mut cell, mut u) = model.initial();
    let mut episode_steps = 0;
    for step in 1..=params.total_steps {
        let a = agent.act(cell, u, &mut rng);
        let t = model.transition(cell, u, a);
        episode_steps += 1;
        let truncated = !t.done && episode_steps >= params.max_episode_steps;
        agent.observe(cell, u, a, t, truncated);
        if t.done || truncated {
            (cell, u) = model.initial();
            episode_steps = 0;
        } else {
            cell = t.next_cell;
            u = t.next;
        }
        if step % params.eval_every == 0 {
            points.push(eval.evaluate(step, &mut *agent.greedy()));
        }
    }
    points
}

/// Q-learning over the product; optionally with counterfactual updates.
pub struct TabularAgent<'m> {
    model: &'m ProductModel,
    q: QTable,
    params: LearnerParams,
    counterfactual: bool,
    updates: u64,
}

impl<'m> TabularAgent<'m> {
    pub fn new(model: &'m ProductModel, params: &LearnerParams, counterfactual: bool) -> Self {
        TabularAgent {
            model,
            q: QTable::for_model(model, params.q_init),
            params: params.clone(),
            counterfactual,
            updates: 0,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.q
    }

    /// Number of table updates performed so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn update_with(&mut self, cell: usize, u: RmNode, a: Action, t: ModelTransition) {
        let next = (!t.done).then_some((t.next_cell, t.next));
        self.q.update(cell, u, a, t.reward, next, self.params.alpha, self.params.gamma);
        self.updates += 1;
    }
}

impl Agent for TabularAgent<'_> {
    fn act(&mut self, cell: usize, u: RmNode, rng: &mut ChaCha8Rng) -> Action {
        select_action(self.q.row(cell, u), self.params.epsilon, rng)
    }

    fn observe(&mut self, cell: usize, u: RmNode, a: Action, t: ModelTransition, _truncated: bool) {
        if self.counterfactual {
            for v in 0..self.model.num_states() {
                let v = RmNode(v);
                let tv = self.model.transition(cell, v, a);
                self.update_with(cell, v, a, tv);
            }
        } else {
            self.update_with(cell, u, a, t);
        }
    }

    fn greedy(&self) -> Box<dyn FnMut(usize, RmNode) -> Action + '_> {
        Box::new(move |cell, u| self.q.greedy_action(cell, u))
    }
}

/// Trained tabular learner plus its evaluation curve.
pub struct TrainedTabular<'m> {
    pub agent: TabularAgent<'m>,
    pub points: Vec<EvalPoint>,
}

pub fn run_qrm<'m>(model: &'m ProductModel, params: &LearnerParams, eval: &dyn Evaluate) -> TrainedTabular<'m> {
    let mut agent = TabularAgent::new(model, params, false);
    let points = train(&mut agent, model, params, eval);
    TrainedTabular { agent, points }
}

pub fn run_crm<'m>(model: &'m ProductModel, params: &LearnerParams, eval: &dyn Evaluate) -> TrainedTabular<'m> {
    let mut agent = TabularAgent::new(model, params, true);
    let points = train(&mut agent, model, params, eval);
    TrainedTabular { agent, points }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptionId {
    pub from: RmNode,
    pub to: RmNode,
}

#[derive(Debug, Clone)]
struct RunningOption {
    index: usize,
    start_cell: usize,
    start_state: RmNode,
    reward: f64,
    discount: f64,
}

/// Hierarchical learner with one option per machine edge.
pub struct HrmAgent<'m> {
    model: &'m ProductModel,
    params: LearnerParams,
    options: Vec<OptionId>,
    // options_of[u]: indices into `options` that start at u
    options_of: Vec<Vec<usize>>,
    // low[o][cell * 4 + a]
    low: Vec<Vec<f64>>,
    // high[u][cell * k_u + slot]
    high: Vec<Vec<f64>>,
    running: Option<RunningOption>,
}

impl<'m> HrmAgent<'m> {
    pub fn new(model: &'m ProductModel, rm: &RewardMachine, params: &LearnerParams) -> Result<Self, LearnerError> {
        let mut options = Vec::new();
        let mut options_of = Vec::new();
        for u in rm.states() {
            let targets = rm.successors(u);
            if targets.is_empty() {
                return Err(LearnerError::NoOutgoingEdge(rm.name(u).to_string()));
            }
            let mut mine = Vec::new();
            for to in targets {
                mine.push(options.len());
                options.push(OptionId { from: u, to });
            }
            options_of.push(mine);
        }
        let cells = model.num_cells();
        let low = vec![vec![params.q_init; cells * Action::COUNT]; options.len()];
        let high = options_of.iter().map(|o| vec![params.q_init; cells * o.len()]).collect();
        Ok(HrmAgent { model, params: params.clone(), options, options_of, low, high, running: None })
    }

    pub fn options(&self) -> &[OptionId] {
        &self.options
    }

    pub fn options_from(&self, u: RmNode) -> impl Iterator<Item = OptionId> + '_ {
        self.options_of[u.0].iter().map(|&o| self.options[o])
    }

    fn high_row(&self, cell: usize, u: RmNode) -> &[f64] {
        let k = self.options_of[u.0].len();
        &self.high[u.0][cell * k..(cell + 1) * k]
    }

    fn low_row(&self, o: usize, cell: usize) -> &[f64] {
        &self.low[o][cell * Action::COUNT..(cell + 1) * Action::COUNT]
    }

    /// Greedy option (lowest slot on ties) at `(cell, u)`.
    pub fn greedy_option(&self, cell: usize, u: RmNode) -> OptionId {
        self.options[self.options_of[u.0][first_argmax(self.high_row(cell, u))]]
    }

    /// Low-level Q-value of an option.
    pub fn option_value(&self, option: OptionId, cell: usize, a: Action) -> Option<f64> {
        let o = self.options.iter().position(|&x| x == option)?;
        Some(self.low[o][cell * Action::COUNT + a.index()])
    }

    fn greedy_low(&self, o: usize, cell: usize) -> Action {
        Action::from_index(first_argmax(self.low_row(o, cell)))
    }

    fn update_high(&mut self, run: &RunningOption, bootstrap: Option<(usize, RmNode)>, k_discount: f64) {
        let future = bootstrap.map_or(0.0, |(c, v)| max_of(self.high_row(c, v)));
        let slot = self.options_of[run.start_state.0]
            .iter()
            .position(|&o| o == run.index)
            .expect("option starts at its state");
        let k = self.options_of[run.start_state.0].len();
        let q = &mut self.high[run.start_state.0][run.start_cell * k + slot];
        *q += self.params.alpha * (run.reward + k_discount * future - *q);
    }
}

impl Agent for HrmAgent<'_> {
    fn act(&mut self, cell: usize, u: RmNode, rng: &mut ChaCha8Rng) -> Action {
        if self.running.is_none() {
            let slot = epsilon_greedy(self.high_row(cell, u), self.params.epsilon, rng);
            self.running = Some(RunningOption {
                index: self.options_of[u.0][slot],
                start_cell: cell,
                start_state: u,
                reward: 0.0,
                discount: 1.0,
            });
        }
        let o = self.running.as_ref().expect("option running").index;
        Action::from_index(epsilon_greedy(self.low_row(o, cell), self.params.epsilon, rng))
    }

    fn observe(&mut self, cell: usize, u: RmNode, a: Action, t: ModelTransition, truncated: bool) {
        let (alpha, gamma) = (self.params.alpha, self.params.gamma);
        // Synthetic experience for every option from the same environment move.
        for o in 0..self.options.len() {
            let OptionId { from, to } = self.options[o];
            let tv = self.model.transition(cell, from, a);
            let success = tv.next == to;
            let reward = tv.reward + if success { self.params.option_success_reward } else { 0.0 };
            let future = if tv.next != from { 0.0 } else { max_of(self.low_row(o, tv.next_cell)) };
            let q = &mut self.low[o][cell * Action::COUNT + a.index()];
            *q += alpha * (reward + gamma * future - *q);
        }

        let Some(mut run) = self.running.take() else { return };
        run.reward += run.discount * t.reward;
        run.discount *= gamma;
        if t.done {
            self.update_high(&run, None, run.discount);
        } else if t.next != u || truncated {
            self.update_high(&run, Some((t.next_cell, t.next)), run.discount);
        } else {
            self.running = Some(run);
        }
    }

    fn greedy(&self) -> Box<dyn FnMut(usize, RmNode) -> Action + '_> {
        let mut current: Option<(RmNode, usize)> = None;
        Box::new(move |cell, u| {
            let o = match current {
                Some((v, o)) if v == u => o,
                _ => {
                    let slot = first_argmax(self.high_row(cell, u));
                    self.options_of[u.0][slot]
                }
            };
            current = Some((u, o));
            self.greedy_low(o, cell)
        })
    }
}

pub struct TrainedHrm<'m> {
    pub agent: HrmAgent<'m>,
    pub points: Vec<EvalPoint>,
}

pub fn run_hrm<'m>(
    model: &'m ProductModel,
    rm: &RewardMachine,
    params: &LearnerParams,
    eval: &dyn Evaluate,
) -> Result<TrainedHrm<'m>, LearnerError> {
    let mut agent = HrmAgent::new(model, rm, params)?;
    let points = train(&mut agent, model, params, eval);
    Ok(TrainedHrm { agent, points })
}

/// Greedy-policy view of a trained learner.
pub trait GreedyPolicy {
    fn policy(&self) -> Box<dyn FnMut(usize, RmNode) -> Action + '_>;
}

impl GreedyPolicy for TabularAgent<'_> {
    fn policy(&self) -> Box<dyn FnMut(usize, RmNode) -> Action + '_> {
        self.greedy()
    }
}

impl GreedyPolicy for HrmAgent<'_> {
    fn policy(&self) -> Box<dyn FnMut(usize, RmNode) -> Action + '_> {
        self.greedy()
    }
}
