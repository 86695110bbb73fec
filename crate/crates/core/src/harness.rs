//! Experiment orchestration: run configs, greedy evaluation against the
//! value-iteration optimum, per-seed CSV logs and quantile aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{generate_map, Action, GridMap, MapError, Setup};
use crate::learners::{
    greedy_rollout, run_crm, run_hrm, run_qrm, EvalPoint, Evaluate, LearnerError, LearnerParams,
};
use crate::mdprm::{ProductError, ProductModel};
use crate::oracle::{optimal_score_constants, OptimalConstants, OracleError};
use crate::reward_machine::{
    apply_shaping, build_boolean_rm, build_numeric_boolean_rm, build_numeric_rm, shaping_potential,
    RewardMachine, RmError, RmNode, Task,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {msg}")]
    Config { field: &'static str, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("seeds of {0} were evaluated at different steps")]
    RaggedSteps(String),
    #[error("no rows to aggregate")]
    EmptyInput,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Machine(#[from] RmError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

fn config_err(field: &'static str, msg: impl fmt::Display) -> HarnessError {
    HarnessError::Config { field, msg: msg.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmVariant {
    Boolean,
    BooleanShaped,
    NumericBoolean,
    Numeric,
}

impl RmVariant {
    pub const ALL: [RmVariant; 4] =
        [RmVariant::Boolean, RmVariant::BooleanShaped, RmVariant::NumericBoolean, RmVariant::Numeric];

    pub fn as_str(self) -> &'static str {
        match self {
            RmVariant::Boolean => "boolean",
            RmVariant::BooleanShaped => "boolean_shaped",
            RmVariant::NumericBoolean => "numeric_boolean",
            RmVariant::Numeric => "numeric",
        }
    }

    fn short(self) -> &'static str {
        match self {
            RmVariant::Boolean => "bool",
            RmVariant::BooleanShaped => "rs-bool",
            RmVariant::NumericBoolean => "num-bool",
            RmVariant::Numeric => "num",
        }
    }
}

impl fmt::Display for RmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RmVariant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RmVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s || v.short() == s)
            .ok_or_else(|| config_err("rm_variant", format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Qrm,
    Crm,
    Hrm,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Qrm => "qrm",
            Algorithm::Crm => "crm",
            Algorithm::Hrm => "hrm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qrm" => Ok(Algorithm::Qrm),
            "crm" => Ok(Algorithm::Crm),
            "hrm" => Ok(Algorithm::Hrm),
            _ => Err(config_err("algorithm", format!("unknown algorithm {s:?}"))),
        }
    }
}

/// An (algorithm, machine variant) pair, named like `crm-num-bool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Method {
    pub algorithm: Algorithm,
    pub variant: RmVariant,
}

impl Method {
    pub const fn new(algorithm: Algorithm, variant: RmVariant) -> Self {
        Method { algorithm, variant }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.algorithm, self.variant.short())
    }
}

/// The eight algorithm and machine combinations run by the matrix.
pub const STANDARD_METHODS: [Method; 8] = [
    Method::new(Algorithm::Crm, RmVariant::BooleanShaped),
    Method::new(Algorithm::Hrm, RmVariant::Boolean),
    Method::new(Algorithm::Qrm, RmVariant::NumericBoolean),
    Method::new(Algorithm::Crm, RmVariant::NumericBoolean),
    Method::new(Algorithm::Hrm, RmVariant::NumericBoolean),
    Method::new(Algorithm::Qrm, RmVariant::Numeric),
    Method::new(Algorithm::Crm, RmVariant::Numeric),
    Method::new(Algorithm::Hrm, RmVariant::Numeric),
];

/// Where the map comes from: a text file, or the generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MapSource {
    pub fn generated(setup: &Setup, size: usize, seed: u64) -> Self {
        MapSource { file: None, setup: Some(setup.to_string()), size: Some(size), seed: Some(seed) }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        MapSource { file: Some(path.into()), ..Default::default() }
    }

    /// Loads the map; relative file paths resolve against `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<(GridMap, String), HarnessError> {
        match (&self.file, &self.setup) {
            (Some(_), Some(_)) => Err(config_err("map", "give either `file` or `setup`, not both")),
            (Some(file), None) => {
                let path = match base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.clone(),
                };
                let text = fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
                let map = GridMap::parse(&text)?;
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok((map, id))
            }
            (None, Some(setup)) => {
                let parsed: Setup = setup.parse().map_err(|e| config_err("map.setup", e))?;
                let size = self.size.ok_or_else(|| config_err("map.size", "required with `setup`"))?;
                let seed = self.seed.unwrap_or(0);
                let map = generate_map(&parsed, size, seed)?;
                Ok((map, format!("{parsed}-s{size}-{seed}")))
            }
            (None, None) => Err(config_err("map", "needs `file` or `setup`")),
        }
    }
}

/// Reward constants of the machine variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmConstants {
    /// Final reward of the Boolean and numeric-Boolean machines.
    #[serde(rename = "R")]
    pub big_r: f64,
    /// Progress reward of the numeric-Boolean machine.
    pub r: f64,
    /// Per-leg arrival rewards of the numeric machine; derived from the task
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_rewards: Option<Vec<f64>>,
}

impl Default for RmConstants {
    fn default() -> Self {
        RmConstants { big_r: 1000.0, r: 0.1, terminal_rewards: None }
    }
}

/// Arrival rewards for the numeric machine: zero on every leg except the
/// last, which pays 10^(legs + 2) for tasks with more than one leg so that
/// finishing outweighs hovering near intermediate targets.
pub fn default_terminal_rewards(task: &Task) -> Vec<f64> {
    let legs = task.legs().len();
    let mut out = vec![0.0; legs];
    if legs > 1 {
        out[legs - 1] = 10f64.powi(legs as i32 + 2);
    }
    out
}

/// Machines used for training and for evaluation (they differ only when
/// shaping is on).
#[derive(Debug, Clone)]
pub struct MachinePair {
    pub train: RewardMachine,
    pub eval: RewardMachine,
}

pub fn build_machines(
    variant: RmVariant,
    task: &Task,
    consts: &RmConstants,
    gamma: f64,
) -> Result<MachinePair, HarnessError> {
    let eval = match variant {
        RmVariant::Boolean | RmVariant::BooleanShaped => build_boolean_rm(task, consts.big_r)?,
        RmVariant::NumericBoolean => build_numeric_boolean_rm(task, consts.r, consts.big_r)?,
        RmVariant::Numeric => {
            let tr = consts.terminal_rewards.clone().unwrap_or_else(|| default_terminal_rewards(task));
            build_numeric_rm(task, &tr)?
        }
    };
    let train = if variant == RmVariant::BooleanShaped {
        let phi = shaping_potential(&eval, gamma)?;
        apply_shaping(&eval, &phi, gamma)?
    } else {
        eval.clone()
    };
    Ok(MachinePair { train, eval })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSource,
    pub task: String,
    pub rm_variant: RmVariant,
    pub algorithm: Algorithm,
    /// `seed` inside is replaced by each entry of `seeds`.
    #[serde(default)]
    pub learner: LearnerParams,
    #[serde(default)]
    pub rm: RmConstants,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads a config file; a relative map path resolves against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text).map_err(|source| HarnessError::Toml { path: path.to_path_buf(), source })?;
        if let (Some(file), Some(dir)) = (&cfg.map.file, path.parent()) {
            if file.is_relative() {
                cfg.map.file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn method(&self) -> Method {
        Method::new(self.algorithm, self.rm_variant)
    }

    pub fn validate(&self) -> Result<Task, HarnessError> {
        let task: Task = self.task.parse().map_err(|e| config_err("task", e))?;
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "must list at least one seed"));
        }
        self.learner.validate().map_err(|e| config_err("learner", e))?;
        if let Some(tr) = &self.rm.terminal_rewards {
            if tr.len() != task.legs().len() {
                return Err(config_err(
                    "rm.terminal_rewards",
                    format!("expected {} values, found {}", task.legs().len(), tr.len()),
                ));
            }
        }
        if self.rm_variant != RmVariant::Numeric && (self.rm.big_r <= 0.0 || self.rm.big_r.is_nan()) {
            return Err(config_err("rm.R", "must be positive"));
        }
        if self.rm_variant == RmVariant::NumericBoolean && (self.rm.r <= 0.0 || self.rm.r.is_nan()) {
            return Err(config_err("rm.r", "must be positive"));
        }
        Ok(task)
    }
}

/// Maps an attained rollout onto `[0, 1]`, where 1 is the optimum. Ratios
/// are taken so that better is larger for either sign of the optimum.
pub fn normalize(arps: f64, completed: bool, optimal: &OptimalConstants) -> f64 {
    if !completed && optimal.completed {
        return 0.0;
    }
    let opt = optimal.arps;
    let score = if opt > 0.0 {
        arps / opt
    } else if arps >= opt {
        1.0
    } else {
        opt / arps
    };
    score.clamp(0.0, 1.0)
}

/// Greedy rollouts on the unshaped product, scored against the
/// value-iteration policy.
#[derive(Debug, Clone)]
pub struct Evaluator {
    model: ProductModel,
    gamma: f64,
    max_steps: u64,
    optimal: OptimalConstants,
}

impl Evaluator {
    pub fn new(model: ProductModel, gamma: f64, max_steps: u64) -> Result<Self, HarnessError> {
        let optimal = optimal_score_constants(&model, gamma, max_steps)?;
        Ok(Evaluator { model, gamma, max_steps, optimal })
    }

    pub fn optimal(&self) -> &OptimalConstants {
        &self.optimal
    }

    pub fn model(&self) -> &ProductModel {
        &self.model
    }
}

impl Evaluate for Evaluator {
    fn evaluate(&self, step: u64, policy: &mut dyn FnMut(usize, RmNode) -> Action) -> EvalPoint {
        let r = greedy_rollout(&self.model, policy, self.max_steps, self.gamma);
        let arps = r.arps();
        EvalPoint {
            step,
            arps_raw: arps,
            score_norm: normalize(arps, r.completed, &self.optimal),
            episode_len: r.episode_len,
            completed: r.completed,
        }
    }
}

/// Evaluation curve of one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub method: String,
    pub task: String,
    pub map_id: String,
    pub seed: u64,
    pub points: Vec<EvalPoint>,
}

impl RunLog {
    pub fn final_point(&self) -> &EvalPoint {
        self.points.last().expect("a run always has its step-0 evaluation")
    }

    pub fn steps_to(&self, threshold: f64) -> Option<u64> {
        steps_to_threshold(&self.points, threshold)
    }
}

/// First evaluation step whose normalized score reaches `threshold`.
pub fn steps_to_threshold(points: &[EvalPoint], threshold: f64) -> Option<u64> {
    points.iter().find(|p| p.score_norm >= threshold).map(|p| p.step)
}

/// Prepared (map, machines, evaluator) shared by all seeds of a config.
pub struct Prepared {
    pub map: GridMap,
    pub map_id: String,
    pub task: Task,
    pub machines: MachinePair,
    pub train_model: ProductModel,
    pub evaluator: Evaluator,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, HarnessError> {
    let task = cfg.validate()?;
    let (map, map_id) = cfg.map.load(None)?;
    let machines = build_machines(cfg.rm_variant, &task, &cfg.rm, cfg.learner.gamma)?;
    let train_model = ProductModel::build(&map, &machines.train)?;
    let eval_model = ProductModel::build(&map, &machines.eval)?;
    let evaluator = Evaluator::new(eval_model, cfg.learner.gamma, cfg.learner.max_episode_steps)?;
    Ok(Prepared { map, map_id, task, machines, train_model, evaluator })
}

/// Trains one seed and returns its evaluation curve.
pub fn run_seed(cfg: &RunConfig, prep: &Prepared, seed: u64) -> Result<RunLog, HarnessError> {
    let params = LearnerParams { seed, ..cfg.learner.clone() };
    let model = &prep.train_model;
    let points = match cfg.algorithm {
        Algorithm::Qrm => run_qrm(model, &params, &prep.evaluator).points,
        Algorithm::Crm => run_crm(model, &params, &prep.evaluator).points,
        Algorithm::Hrm => run_hrm(model, &prep.machines.train, &params, &prep.evaluator)?.points,
    };
    Ok(RunLog {
        method: cfg.method().to_string(),
        task: cfg.task.clone(),
        map_id: prep.map_id.clone(),
        seed,
        points,
    })
}

/// Runs every seed of `cfg` in parallel; logs come back sorted by seed.
pub fn run_config(cfg: &RunConfig) -> Result<Vec<RunLog>, HarnessError> {
    let prep = prepare(cfg)?;
    let mut logs = cfg.seeds.par_iter().map(|&s| run_seed(cfg, &prep, s)).collect::<Result<Vec<_>, _>>()?;
    logs.sort_by_key(|l| l.seed);
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algorithm: String,
    pub rm_variant: String,
    pub task: String,
    pub map_id: String,
    pub seed: u64,
    pub step: u64,
    pub arps_raw: f64,
    pub score_norm: f64,
    pub episode_len: u64,
    pub completed: bool,
}

pub fn csv_rows(method: Method, logs: &[RunLog]) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = logs
        .iter()
        .flat_map(|log| {
            log.points.iter().map(move |p| CsvRow {
                algorithm: method.algorithm.to_string(),
                rm_variant: method.variant.to_string(),
                task: log.task.clone(),
                map_id: log.map_id.clone(),
                seed: log.seed,
                step: p.step,
                arps_raw: p.arps_raw,
                score_norm: p.score_norm,
                episode_len: p.episode_len,
                completed: p.completed,
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.seed, r.step));
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

pub fn write_runs(path: &Path, rows: &[CsvRow]) -> Result<(), HarnessError> {
    write_csv(path, rows)
}

pub fn read_runs(path: &Path) -> Result<Vec<CsvRow>, HarnessError> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<CsvRow>, _>>().map_err(csv_err)
}

/// Path of the aggregate file written next to a run CSV.
pub fn aggregate_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_agg.csv"))
}

/// Runs `cfg`, writes the per-seed CSV to `out` and its aggregate next to it.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<Vec<RunLog>, HarnessError> {
    let logs = run_config(cfg)?;
    let rows = csv_rows(cfg.method(), &logs);
    write_runs(out, &rows)?;
    write_aggregate(&aggregate_path(out), &aggregate_rows(&rows)?)?;
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: String,
    pub rm_variant: String,
    pub task: String,
    pub map_id: String,
    pub step: u64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

type CurveKey = (String, String, String, String);

/// Median and quartiles of `score_norm` over seeds, per curve and step.
pub fn aggregate_rows(rows: &[CsvRow]) -> Result<Vec<AggregateRow>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mut curves: BTreeMap<CurveKey, BTreeMap<u64, Vec<(u64, f64)>>> = BTreeMap::new();
    for row in rows {
        let key = (row.algorithm.clone(), row.rm_variant.clone(), row.task.clone(), row.map_id.clone());
        curves.entry(key).or_default().entry(row.seed).or_default().push((row.step, row.score_norm));
    }
    let mut out = Vec::new();
    for ((algorithm, rm_variant, task, map_id), seeds) in curves {
        let mut by_seed: Vec<Vec<(u64, f64)>> = seeds.into_values().collect();
        for curve in &mut by_seed {
            curve.sort_by_key(|&(step, _)| step);
        }
        let grid: Vec<u64> = by_seed[0].iter().map(|&(s, _)| s).collect();
        if by_seed.iter().any(|c| c.len() != grid.len() || c.iter().zip(&grid).any(|(p, s)| p.0 != *s)) {
            return Err(HarnessError::RaggedSteps(format!("{algorithm}/{rm_variant}/{task}/{map_id}")));
        }
        for (i, &step) in grid.iter().enumerate() {
            let mut vals: Vec<f64> = by_seed.iter().map(|c| c[i].1).collect();
            vals.sort_by(f64::total_cmp);
            out.push(AggregateRow {
                algorithm: algorithm.clone(),
                rm_variant: rm_variant.clone(),
                task: task.clone(),
                map_id: map_id.clone(),
                step,
                median: quantile(&vals, 0.5),
                p25: quantile(&vals, 0.25),
                p75: quantile(&vals, 0.75),
            });
        }
    }
    Ok(out)
}

pub fn aggregate(paths: &[PathBuf]) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_runs(p)?);
    }
    aggregate_rows(&rows)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    write_csv(path, rows)
}

/// Median over seeds of the steps needed to reach `threshold`; seeds that
/// never get there count as infinitely slow.
pub fn median_steps_to(logs: &[RunLog], threshold: f64) -> f64 {
    let mut steps: Vec<f64> =
        logs.iter().map(|l| l.steps_to(threshold).map_or(f64::INFINITY, |s| s as f64)).collect();
    steps.sort_by(f64::total_cmp);
    let n = steps.len();
    if n % 2 == 1 {
        steps[n / 2]
    } else if steps[n / 2].is_infinite() {
        f64::INFINITY
    } else {
        0.5 * (steps[n / 2 - 1] + steps[n / 2])
    }
}

/// A grid of methods × tasks × generated maps, all trained on the same seeds.
#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub setups: Vec<Setup>,
    pub size: usize,
    pub maps_per_setup: u64,
    pub tasks: Vec<String>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub base: LearnerParams,
    pub rm: RmConstants,
}

impl MatrixSpec {
    /// 17×17, one map per setup, budgets growing with task length.
    pub fn desk_scale() -> Self {
        MatrixSpec {
            setups: vec!["1a1b1c".parse().expect("setup"), "2a2b2c".parse().expect("setup")],
            size: 17,
            maps_per_setup: 1,
            tasks: vec!["a".into(), "a-b".into(), "a-b-c".into()],
            methods: STANDARD_METHODS.to_vec(),
            seeds: (0..6).collect(),
            base: LearnerParams::default(),
            rm: RmConstants::default(),
        }
    }

    /// 41×41 with ten maps per setup.
    pub fn full_scale() -> Self {
        MatrixSpec { size: 41, maps_per_setup: 10, ..Self::desk_scale() }
    }

    pub fn steps_for(&self, task: &str) -> u64 {
        let legs = task.split('-').count() as u64;
        let per_leg = if self.size > 17 { 1_000_000 } else { 100_000 };
        legs * per_leg
    }

    pub fn configs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for setup in &self.setups {
            for map_seed in 0..self.maps_per_setup {
                for task in &self.tasks {
                    for m in &self.methods {
                        out.push(RunConfig {
                            map: MapSource::generated(setup, self.size, map_seed),
                            task: task.clone(),
                            rm_variant: m.variant,
                            algorithm: m.algorithm,
                            learner: LearnerParams { total_steps: self.steps_for(task), ..self.base.clone() },
                            rm: self.rm.clone(),
                            seeds: self.seeds.clone(),
                            output: None,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Every config of the matrix; one log list per config, in config order.
pub fn run_matrix(spec: &MatrixSpec) -> Result<Vec<(RunConfig, Vec<RunLog>)>, HarnessError> {
    spec.configs()
        .into_par_iter()
        .map(|cfg| {
            let logs = run_config(&cfg)?;
            Ok((cfg, logs))
        })
        .collect()
}

/// Flattened CSV rows of a matrix run.
pub fn matrix_rows(results: &[(RunConfig, Vec<RunLog>)]) -> Vec<CsvRow> {
    results.iter().flat_map(|(cfg, logs)| csv_rows(cfg.method(), logs)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(arps: f64, completed: bool) -> OptimalConstants {
        OptimalConstants { arps, episode_len: 1, completed, discounted_return: 0.0 }
    }

    #[test]
    fn normalization() {
        let o = opt(0.25, true);
        assert_eq!(normalize(0.25, true, &o), 1.0);
        assert_eq!(normalize(0.125, true, &o), 0.5);
        assert_eq!(normalize(0.0, false, &o), 0.0);
        let neg = opt(-4.0, true);
        assert_eq!(normalize(-8.0, true, &neg), 0.5);
        assert_eq!(normalize(-3.0, true, &neg), 1.0);
        // Both capped: compared by rate alone.
        assert_eq!(normalize(-10.0, false, &opt(-5.0, false)), 0.5);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(quantile(&v, 0.5), 0.5);
        assert_eq!(quantile(&v, 0.25), 0.0);
        assert_eq!(quantile(&v, 0.75), 1.0);
        let w = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile(&w, 0.25) - 1.75).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    fn row(seed: u64, step: u64, score: f64) -> CsvRow {
        CsvRow {
            algorithm: "crm".into(),
            rm_variant: "numeric".into(),
            task: "a".into(),
            map_id: "m".into(),
            seed,
            step,
            arps_raw: 0.0,
            score_norm: score,
            episode_len: 0,
            completed: true,
        }
    }

    #[test]
    fn aggregate_per_step() {
        let rows: Vec<CsvRow> =
            (0..6).flat_map(|s| [row(s, 0, 0.0), row(s, 10, if s < 3 { 0.0 } else { 1.0 })]).collect();
        let agg = aggregate_rows(&rows).unwrap();
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].p25, agg[0].median, agg[0].p75), (0.0, 0.0, 0.0));
        assert_eq!(agg[1].median, 0.5);
    }

    #[test]
    fn ragged_steps_rejected() {
        let rows = vec![row(0, 0, 0.0), row(0, 10, 1.0), row(1, 0, 0.0), row(1, 20, 1.0)];
        assert!(matches!(aggregate_rows(&rows), Err(HarnessError::RaggedSteps(_))));
        assert!(matches!(aggregate_rows(&[]), Err(HarnessError::EmptyInput)));
    }

    #[test]
    fn method_names() {
        let names: Vec<String> = STANDARD_METHODS.iter().map(|m| m.to_string()).collect();
        assert_eq!(
            names,
            ["crm-rs-bool", "hrm-bool", "qrm-num-bool", "crm-num-bool", "hrm-num-bool", "qrm-num", "crm-num", "hrm-num"]
        );
    }

    #[test]
    fn config_round_trip_and_errors() {
        let text = r#"
            task = "a-b"
            rm_variant = "numeric"
            algorithm = "crm"
            seeds = [1, 2]

            [map]
            setup = "2a2b2c"
            size = 9
            seed = 4

            [learner]
            total_steps = 5000

            [rm]
            terminal_rewards = [0.0, 100.0]
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.learner.total_steps, 5000);
        assert_eq!(cfg.learner.alpha, LearnerParams::default().alpha);
        assert_eq!(cfg.method().to_string(), "crm-num");
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let err = RunConfig::from_toml(&text.replace("seeds", "sedes")).unwrap_err();
        assert!(err.to_string().contains("sedes"), "{err}");
        let mut bad = cfg.clone();
        bad.seeds.clear();
        assert!(matches!(bad.validate(), Err(HarnessError::Config { field: "seeds", .. })));
        bad = cfg.clone();
        bad.rm.terminal_rewards = Some(vec![1.0]);
        assert!(matches!(bad.validate(), Err(HarnessError::Config { field: "rm.terminal_rewards", .. })));
    }

    #[test]
    fn terminal_reward_defaults() {
        assert_eq!(default_terminal_rewards(&"a".parse().unwrap()), vec![0.0]);
        assert_eq!(default_terminal_rewards(&"a-b".parse().unwrap()), vec![0.0, 10_000.0]);
        assert_eq!(default_terminal_rewards(&"a-b-c".parse().unwrap()), vec![0.0, 0.0, 100_000.0]);
    }

    #[test]
    fn shaped_variant_keeps_eval_machine_plain() {
        let task: Task = "a-b".parse().unwrap();
        let pair = build_machines(RmVariant::BooleanShaped, &task, &RmConstants::default(), 0.9).unwrap();
        assert_eq!(pair.eval.to_json(), build_boolean_rm(&task, 1000.0).unwrap().to_json());
        assert_ne!(pair.train.to_json(), pair.eval.to_json());
    }

    #[test]
    fn median_steps_counts_never_as_infinite() {
        let log = |steps: &[(u64, f64)]| RunLog {
            method: String::new(),
            task: String::new(),
            map_id: String::new(),
            seed: 0,
            points: steps
                .iter()
                .map(|&(step, s)| EvalPoint { step, arps_raw: 0.0, score_norm: s, episode_len: 0, completed: true })
                .collect(),
        };
        let a = log(&[(0, 0.0), (10, 0.96)]);
        let b = log(&[(0, 0.0), (10, 0.5), (20, 0.97)]);
        let never = log(&[(0, 0.0)]);
        assert_eq!(median_steps_to(&[a.clone(), b.clone(), never.clone()], 0.95), 20.0);
        assert_eq!(median_steps_to(&[a.clone(), b], 0.95), 15.0);
        assert!(median_steps_to(&[a, never.clone(), never], 0.95).is_infinite());
    }
}
