//! Simple reward machines: guarded edges whose rewards are constants or the
//! negated distance to a target type.
//!
//! Guards are evaluated in order and the first match wins, so a trailing
//! catch-all guard is allowed to overlap the ones before it.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{FeatureValuation, ObjectType, TypeFeatures};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RmError {
    #[error("task is empty")]
    EmptyTask,
    #[error("invalid task {0:?}; expected object types joined by '-', e.g. \"a-b-c\"")]
    BadTask(String),
    #[error("rewards must be positive (r = {r}, R = {big_r})")]
    NonPositiveReward { r: f64, big_r: f64 },
    #[error("expected {expected} terminal rewards, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("no guard of state {0} matched the valuation")]
    NoGuardMatched(String),
    #[error("state {0} is terminal")]
    SteppedTerminal(String),
    #[error("valuation has no features for object type {0}")]
    MissingFeature(ObjectType),
    #[error("reward shaping needs constant rewards; edge {0} rewards a distance")]
    NumericRewardUnsupported(String),
    #[error("potential has {found} entries, machine has {expected} nodes")]
    PotentialArity { expected: usize, found: usize },
    #[error("discount {0} outside (0, 1)")]
    InvalidDiscount(f64),
    #[error("value iteration over machine states did not converge")]
    NonConvergence,
    #[error("unknown state name {0:?}")]
    UnknownState(String),
    #[error("duplicate state name {0:?}")]
    DuplicateState(String),
    #[error("malformed machine description: {0}")]
    Format(String),
}

/// Sequence of object types to visit in order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Task(Vec<ObjectType>);

impl Task {
    pub fn new(types: Vec<ObjectType>) -> Result<Self, RmError> {
        if types.is_empty() {
            return Err(RmError::EmptyTask);
        }
        Ok(Task(types))
    }

    pub fn legs(&self) -> &[ObjectType] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for Task {
    type Err = RmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(RmError::EmptyTask);
        }
        s.split('-')
            .map(|part| {
                let mut chars = part.chars();
                match (chars.next().and_then(ObjectType::new), chars.next()) {
                    (Some(t), None) => Ok(t),
                    _ => Err(RmError::BadTask(s.to_string())),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .and_then(Task::new)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Atom {
    /// Distance to the nearest object of the type is zero.
    AtTarget(ObjectType),
    NotAtTarget(ObjectType),
    /// Nearest-object distance strictly decreased.
    DistDecreased(ObjectType),
    /// Distance to some object of the type strictly decreased.
    AnyDistDecreased(ObjectType),
}

impl Atom {
    pub fn object(self) -> ObjectType {
        match self {
            Atom::AtTarget(t) | Atom::NotAtTarget(t) | Atom::DistDecreased(t) | Atom::AnyDistDecreased(t) => t,
        }
    }

    fn holds(self, f: &TypeFeatures) -> bool {
        match self {
            Atom::AtTarget(_) => f.at_target(),
            Atom::NotAtTarget(_) => !f.at_target(),
            Atom::DistDecreased(_) => f.decreased,
            Atom::AnyDistDecreased(_) => f.any_decreased,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::AtTarget(t) => write!(f, "d_{t}=0"),
            Atom::NotAtTarget(t) => write!(f, "d_{t}!=0"),
            Atom::DistDecreased(t) => write!(f, "dec(d_{t})"),
            Atom::AnyDistDecreased(t) => write!(f, "anydec(d_{t})"),
        }
    }
}

/// Conjunction of atoms; the empty conjunction is `true`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Guard(Vec<Atom>);

impl Guard {
    pub fn always() -> Self {
        Guard(Vec::new())
    }

    pub fn all(atoms: impl IntoIterator<Item = Atom>) -> Self {
        Guard(atoms.into_iter().collect())
    }

    pub fn atom(atom: Atom) -> Self {
        Guard(vec![atom])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.0
    }

    pub fn matches(&self, v: &FeatureValuation) -> Result<bool, RmError> {
        for atom in &self.0 {
            let f = v.get(atom.object()).ok_or(RmError::MissingFeature(atom.object()))?;
            if !atom.holds(f) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// False when the guard contains contradictory atoms.
    pub fn is_satisfiable(&self) -> bool {
        let types: BTreeSet<ObjectType> = self.0.iter().map(|a| a.object()).collect();
        types.into_iter().all(|t| {
            FEASIBLE
                .iter()
                .any(|f| self.0.iter().filter(|a| a.object() == t).all(|a| a.holds(f)))
        })
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("true");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

// Feature combinations a single step can produce for one type. A nearest
// distance decrease implies some object got closer; arrival may coincide
// with either.
const FEASIBLE: [TypeFeatures; 6] = [
    TypeFeatures { dist: 0, decreased: false, any_decreased: false },
    TypeFeatures { dist: 0, decreased: false, any_decreased: true },
    TypeFeatures { dist: 0, decreased: true, any_decreased: true },
    TypeFeatures { dist: 1, decreased: false, any_decreased: false },
    TypeFeatures { dist: 1, decreased: false, any_decreased: true },
    TypeFeatures { dist: 1, decreased: true, any_decreased: true },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardExpr {
    Const(f64),
    /// `-d_t` on the current valuation.
    NegDistance(ObjectType),
}

impl RewardExpr {
    pub fn eval(&self, v: &FeatureValuation) -> Result<f64, RmError> {
        match *self {
            RewardExpr::Const(c) => Ok(c),
            RewardExpr::NegDistance(t) => {
                let d = v.dist(t).ok_or(RmError::MissingFeature(t))?;
                Ok(-f64::from(d))
            }
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self {
            RewardExpr::Const(c) => Some(c),
            RewardExpr::NegDistance(_) => None,
        }
    }
}

impl fmt::Display for RewardExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardExpr::Const(c) => write!(f, "{c}"),
            RewardExpr::NegDistance(t) => write!(f, "-d_{t}"),
        }
    }
}

/// Index of a machine node. Non-terminal states come first, then terminals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RmNode(pub usize);

impl RmNode {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub guard: Guard,
    pub target: RmNode,
    pub reward: RewardExpr,
}

/// Result of feeding one valuation to the machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmTransition {
    pub next: RmNode,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardMachine {
    names: Vec<String>,
    num_states: usize,
    initial: RmNode,
    edges: Vec<Vec<Edge>>,
}

/// Incremental construction with named states.
#[derive(Debug, Default)]
pub struct RmBuilder {
    nodes: Vec<(String, bool)>,
    initial: Option<usize>,
    edges: Vec<(usize, Edge)>,
}

impl RmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn add(&mut self, name: &str, terminal: bool) -> Result<RmNode, RmError> {
        if self.nodes.iter().any(|(n, _)| n == name) {
            return Err(RmError::DuplicateState(name.to_string()));
        }
        self.nodes.push((name.to_string(), terminal));
        Ok(RmNode(self.nodes.len() - 1))
    }

    /// Declares a non-terminal state. The first one declared is initial
    /// unless [`RmBuilder::initial`] says otherwise.
    pub fn state(&mut self, name: &str) -> Result<RmNode, RmError> {
        let node = self.add(name, false)?;
        self.initial.get_or_insert(node.0);
        Ok(node)
    }

    pub fn terminal(&mut self, name: &str) -> Result<RmNode, RmError> {
        self.add(name, true)
    }

    pub fn initial(&mut self, node: RmNode) -> &mut Self {
        self.initial = Some(node.0);
        self
    }

    pub fn edge(&mut self, from: RmNode, guard: Guard, to: RmNode, reward: RewardExpr) -> &mut Self {
        self.edges.push((from.0, Edge { guard, target: to, reward }));
        self
    }

    pub fn build(self) -> Result<RewardMachine, RmError> {
        let order: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].1)
            .chain((0..self.nodes.len()).filter(|&i| self.nodes[i].1))
            .collect();
        let mut remap = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let num_states = self.nodes.iter().filter(|(_, t)| !t).count();
        let names = order.iter().map(|&i| self.nodes[i].0.clone()).collect();
        let mut edges = vec![Vec::new(); order.len()];
        for (from, mut e) in self.edges {
            e.target = RmNode(remap[e.target.0]);
            edges[remap[from]].push(e);
        }
        let initial = self
            .initial
            .map(|i| RmNode(remap[i]))
            .ok_or_else(|| RmError::Format("machine has no states".into()))?;
        Ok(RewardMachine { names, num_states, initial, edges })
    }
}

/// One way the machine breaks its structural invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonExhaustive { state: String, witness: String },
    TerminalHasEdge { terminal: String },
    Unreachable { state: String },
    UnsatisfiableGuard { state: String, edge: usize },
    InitialIsTerminal,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonExhaustive { state, witness } => {
                write!(f, "state {state}: no guard matches {witness}")
            }
            Violation::TerminalHasEdge { terminal } => write!(f, "terminal {terminal} has outgoing edges"),
            Violation::Unreachable { state } => write!(f, "state {state} is unreachable"),
            Violation::UnsatisfiableGuard { state, edge } => {
                write!(f, "state {state}: guard of edge {edge} is unsatisfiable")
            }
            Violation::InitialIsTerminal => f.write_str("initial state is terminal"),
        }
    }
}

impl RewardMachine {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn initial(&self) -> RmNode {
        self.initial
    }

    pub fn is_terminal(&self, u: RmNode) -> bool {
        u.0 >= self.num_states
    }

    pub fn name(&self, u: RmNode) -> &str {
        &self.names[u.0]
    }

    pub fn states(&self) -> impl Iterator<Item = RmNode> {
        (0..self.num_states).map(RmNode)
    }

    pub fn terminals(&self) -> impl Iterator<Item = RmNode> {
        (self.num_states..self.names.len()).map(RmNode)
    }

    pub fn edges(&self, u: RmNode) -> &[Edge] {
        &self.edges[u.0]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Object types referenced by any guard or reward.
    pub fn object_types(&self) -> BTreeSet<ObjectType> {
        let mut out = BTreeSet::new();
        for e in self.edges.iter().flatten() {
            out.extend(e.guard.atoms().iter().map(|a| a.object()));
            if let RewardExpr::NegDistance(t) = e.reward {
                out.insert(t);
            }
        }
        out
    }

    pub fn has_numeric_rewards(&self) -> bool {
        self.edges
            .iter()
            .flatten()
            .any(|e| matches!(e.reward, RewardExpr::NegDistance(_)))
    }

    /// Distinct non-self-loop targets of `u`, in edge order.
    pub fn successors(&self, u: RmNode) -> Vec<RmNode> {
        let mut out = Vec::new();
        for e in &self.edges[u.0] {
            if e.target != u && !out.contains(&e.target) && e.guard.is_satisfiable() {
                out.push(e.target);
            }
        }
        out
    }

    /// First-match transition for valuation `v` at state `u`.
    pub fn step(&self, u: RmNode, v: &FeatureValuation) -> Result<RmTransition, RmError> {
        if self.is_terminal(u) {
            return Err(RmError::SteppedTerminal(self.names[u.0].clone()));
        }
        for e in &self.edges[u.0] {
            if e.guard.matches(v)? {
                return Ok(RmTransition {
                    next: e.target,
                    reward: e.reward.eval(v)?,
                    done: self.is_terminal(e.target),
                });
            }
        }
        Err(RmError::NoGuardMatched(self.names[u.0].clone()))
    }

    /// Checks exhaustiveness, terminal sinks, reachability and guard
    /// satisfiability. An empty list means the machine is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.is_terminal(self.initial) {
            out.push(Violation::InitialIsTerminal);
        }
        for u in self.terminals() {
            if !self.edges[u.0].is_empty() {
                out.push(Violation::TerminalHasEdge { terminal: self.names[u.0].clone() });
            }
        }
        for u in self.states() {
            for (i, e) in self.edges[u.0].iter().enumerate() {
                if !e.guard.is_satisfiable() {
                    out.push(Violation::UnsatisfiableGuard { state: self.names[u.0].clone(), edge: i });
                }
            }
            if let Some(witness) = self.uncovered_valuation(u) {
                out.push(Violation::NonExhaustive { state: self.names[u.0].clone(), witness });
            }
        }
        let mut seen = vec![false; self.num_nodes()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial.0] = true;
        while let Some(u) = queue.pop_front() {
            for e in &self.edges[u.0] {
                if e.guard.is_satisfiable() && !seen[e.target.0] {
                    seen[e.target.0] = true;
                    queue.push_back(e.target);
                }
            }
        }
        for u in self.states() {
            if !seen[u.0] {
                out.push(Violation::Unreachable { state: self.names[u.0].clone() });
            }
        }
        out
    }

    // Enumerates every feasible feature combination over the types the
    // state's guards mention.
    fn uncovered_valuation(&self, u: RmNode) -> Option<String> {
        let types: Vec<ObjectType> = self.edges[u.0]
            .iter()
            .flat_map(|e| e.guard.atoms().iter().map(|a| a.object()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let combos = FEASIBLE.len().pow(types.len() as u32);
        for mut code in 0..combos {
            let v = FeatureValuation::from_features(types.iter().map(|&t| {
                let f = FEASIBLE[code % FEASIBLE.len()];
                code /= FEASIBLE.len();
                (t, f)
            }));
            let covered = self.edges[u.0].iter().any(|e| e.guard.matches(&v).unwrap_or(false));
            if !covered {
                let desc: Vec<String> = v
                    .iter()
                    .map(|(t, f)| {
                        format!("{{d_{t}{}, dec={}, anydec={}}}", if f.at_target() { "=0" } else { ">0" }, f.decreased, f.any_decreased)
                    })
                    .collect();
                return Some(desc.join(" "));
            }
        }
        None
    }

    /// Graphviz rendering: one node per state, terminals double-circled, one
    /// labeled edge per guard.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph rm {\n  rankdir=LR;\n");
        for (i, name) in self.names.iter().enumerate() {
            let shape = if self.is_terminal(RmNode(i)) { "doublecircle" } else { "circle" };
            let bold = if RmNode(i) == self.initial { ", style=bold" } else { "" };
            out.push_str(&format!("  \"{name}\" [shape={shape}{bold}];\n"));
        }
        for (i, edges) in self.edges.iter().enumerate() {
            for e in edges {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [label=\"<{}; {}>\"];\n",
                    self.names[i], self.names[e.target.0], e.guard, e.reward
                ));
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let doc = RmDocument {
            states: self.states().map(|u| self.names[u.0].clone()).collect(),
            terminals: self.terminals().map(|u| self.names[u.0].clone()).collect(),
            initial: self.names[self.initial.0].clone(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .flat_map(|(i, es)| {
                    es.iter().map(move |e| EdgeDocument {
                        from: self.names[i].clone(),
                        guard: e.guard.clone(),
                        to: self.names[e.target.0].clone(),
                        reward: e.reward,
                    })
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("machine serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RmError> {
        let doc: RmDocument = serde_json::from_str(text).map_err(|e| RmError::Format(e.to_string()))?;
        let mut b = RmBuilder::new();
        let mut ids = Vec::new();
        for s in &doc.states {
            ids.push((s.clone(), b.state(s)?));
        }
        for t in &doc.terminals {
            ids.push((t.clone(), b.terminal(t)?));
        }
        let lookup = |name: &str| {
            ids.iter()
                .find(|(n, _)| n == name)
                .map(|(_, id)| *id)
                .ok_or_else(|| RmError::UnknownState(name.to_string()))
        };
        b.initial(lookup(&doc.initial)?);
        for e in doc.edges {
            b.edge(lookup(&e.from)?, e.guard, lookup(&e.to)?, e.reward);
        }
        b.build()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RmDocument {
    states: Vec<String>,
    terminals: Vec<String>,
    initial: String,
    edges: Vec<EdgeDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDocument {
    from: String,
    guard: Guard,
    to: String,
    reward: RewardExpr,
}

/// Which distance decrease the numeric-Boolean machine rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecreaseRule {
    /// Nearest same-type object got closer.
    #[default]
    Nearest,
    /// Any same-type object got closer.
    AnyTarget,
}

fn chain(task: &Task) -> Result<(RmBuilder, Vec<RmNode>, RmNode), RmError> {
    let mut b = RmBuilder::new();
    let states = (0..task.len())
        .map(|i| b.state(&format!("u{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let terminal = b.terminal(&format!("u{}", task.len()))?;
    Ok((b, states, terminal))
}

fn next_node(states: &[RmNode], terminal: RmNode, leg: usize) -> RmNode {
    states.get(leg + 1).copied().unwrap_or(terminal)
}

/// Sparse machine: reward only on completing the last leg.
pub fn build_boolean_rm(task: &Task, terminal_reward: f64) -> Result<RewardMachine, RmError> {
    let (mut b, states, terminal) = chain(task)?;
    for (leg, (&u, &t)) in states.iter().zip(task.legs()).enumerate() {
        let last = leg + 1 == task.len();
        let reward = if last { terminal_reward } else { 0.0 };
        b.edge(u, Guard::atom(Atom::AtTarget(t)), next_node(&states, terminal, leg), RewardExpr::Const(reward));
        b.edge(u, Guard::atom(Atom::NotAtTarget(t)), u, RewardExpr::Const(0.0));
    }
    b.build()
}

/// Pays `r` whenever the distance to the current target decreases or an
/// intermediate target is reached, `big_r` on reaching the final target.
pub fn build_numeric_boolean_rm(task: &Task, r: f64, big_r: f64) -> Result<RewardMachine, RmError> {
    build_numeric_boolean_rm_with(task, r, big_r, DecreaseRule::Nearest)
}

pub fn build_numeric_boolean_rm_with(
    task: &Task,
    r: f64,
    big_r: f64,
    rule: DecreaseRule,
) -> Result<RewardMachine, RmError> {
    if !(r > 0.0 && big_r > 0.0) {
        return Err(RmError::NonPositiveReward { r, big_r });
    }
    let (mut b, states, terminal) = chain(task)?;
    for (leg, (&u, &t)) in states.iter().zip(task.legs()).enumerate() {
        let last = leg + 1 == task.len();
        let arrive = if last { big_r } else { r };
        let decreased = match rule {
            DecreaseRule::Nearest => Atom::DistDecreased(t),
            DecreaseRule::AnyTarget => Atom::AnyDistDecreased(t),
        };
        b.edge(u, Guard::atom(Atom::AtTarget(t)), next_node(&states, terminal, leg), RewardExpr::Const(arrive));
        b.edge(u, Guard::all([decreased, Atom::NotAtTarget(t)]), u, RewardExpr::Const(r));
        b.edge(u, Guard::always(), u, RewardExpr::Const(0.0));
    }
    b.build()
}

/// Rewards `-d_t` while travelling toward leg target `t`; arrival on leg `i`
/// pays `terminal_rewards[i]`.
pub fn build_numeric_rm(task: &Task, terminal_rewards: &[f64]) -> Result<RewardMachine, RmError> {
    if terminal_rewards.len() != task.len() {
        return Err(RmError::ArityMismatch { expected: task.len(), found: terminal_rewards.len() });
    }
    let (mut b, states, terminal) = chain(task)?;
    for (leg, (&u, &t)) in states.iter().zip(task.legs()).enumerate() {
        b.edge(
            u,
            Guard::atom(Atom::AtTarget(t)),
            next_node(&states, terminal, leg),
            RewardExpr::Const(terminal_rewards[leg]),
        );
        b.edge(u, Guard::atom(Atom::NotAtTarget(t)), u, RewardExpr::NegDistance(t));
    }
    b.build()
}

const SHAPING_TOL: f64 = 1e-9;
const SHAPING_MAX_SWEEPS: usize = 10_000;

/// Potential from value iteration over the machine viewed as a deterministic
/// MDP whose actions are its satisfiable edges. Terminals have potential 0.
pub fn shaping_potential(rm: &RewardMachine, gamma: f64) -> Result<Vec<f64>, RmError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(RmError::InvalidDiscount(gamma));
    }
    for u in rm.states() {
        if let Some(e) = rm.edges(u).iter().find(|e| e.reward.as_const().is_none()) {
            return Err(RmError::NumericRewardUnsupported(format!("{} -> {}", rm.name(u), rm.name(e.target))));
        }
    }
    let mut phi = vec![0.0; rm.num_nodes()];
    for _ in 0..SHAPING_MAX_SWEEPS {
        let mut next = vec![0.0; rm.num_nodes()];
        let mut residual: f64 = 0.0;
        for u in rm.states() {
            let best = rm
                .edges(u)
                .iter()
                .filter(|e| e.guard.is_satisfiable())
                .map(|e| e.reward.as_const().unwrap_or(0.0) + gamma * phi[e.target.0])
                .fold(f64::NEG_INFINITY, f64::max);
            next[u.0] = if best.is_finite() { best } else { 0.0 };
            residual = residual.max((next[u.0] - phi[u.0]).abs());
        }
        phi = next;
        if residual < SHAPING_TOL {
            return Ok(phi);
        }
    }
    Err(RmError::NonConvergence)
}

/// Rewrites every edge reward `c` on `u -> u'` as `c + gamma*phi(u') - phi(u)`.
pub fn apply_shaping(rm: &RewardMachine, phi: &[f64], gamma: f64) -> Result<RewardMachine, RmError> {
    if phi.len() != rm.num_nodes() {
        return Err(RmError::PotentialArity { expected: rm.num_nodes(), found: phi.len() });
    }
    let mut shaped = rm.clone();
    for (u, edges) in shaped.edges.iter_mut().enumerate() {
        for e in edges {
            let c = e.reward.as_const().ok_or_else(|| {
                RmError::NumericRewardUnsupported(format!("{} -> {}", rm.names[u], rm.names[e.target.0]))
            })?;
            e.reward = RewardExpr::Const(c + gamma * phi[e.target.0] - phi[u]);
        }
    }
    Ok(shaped)
}
