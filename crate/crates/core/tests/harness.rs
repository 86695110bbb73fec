use std::collections::BTreeSet;
use std::fs;

use numrm::harness::{
    aggregate, aggregate_rows, median_steps_to, read_runs, run_experiment, run_matrix, Evaluator, HarnessError,
    MapSource, MatrixSpec, RmConstants, RmVariant, RunConfig, STANDARD_METHODS,
};
use numrm::learners::{Evaluate, QTable};
use numrm::oracle::value_iteration;
use numrm::reward_machine::build_boolean_rm;
use numrm::{generate_map, Action, Algorithm, GridMap, LearnerParams, ProductModel};

fn evaluator(map: &GridMap, task: &str) -> Evaluator {
    let rm = build_boolean_rm(&task.parse().unwrap(), 1.0).unwrap();
    Evaluator::new(ProductModel::build(map, &rm).unwrap(), 0.9, 1000).unwrap()
}

#[test]
fn optimal_policy_scores_one() {
    let map = generate_map(&"2a2b2c".parse().unwrap(), 13, 3).unwrap();
    let ev = evaluator(&map, "a-b-c");
    let vf = value_iteration(ev.model(), 0.9, 1e-9).unwrap();
    let model = ev.model().clone();
    let p = ev.evaluate(7, &mut |c, u| vf.greedy_action(&model, c, u));
    assert_eq!((p.step, p.score_norm, p.completed), (7, 1.0, true));
}

#[test]
fn untrained_table_scores_zero() {
    let map = generate_map(&"1a1b1c".parse().unwrap(), 17, 0).unwrap();
    let ev = evaluator(&map, "a-b-c");
    let table = QTable::for_model(ev.model(), 0.0);
    let p = ev.evaluate(0, &mut |c, u| table.greedy_action(c, u));
    assert!(!p.completed);
    assert_eq!((p.score_norm, p.episode_len), (0.0, 1000));
}

#[test]
fn doubled_path_scores_half() {
    let map = GridMap::parse("XXXXXXX\nXA..a.X\nX.....X\nXXXXXXX\n").unwrap();
    let ev = evaluator(&map, "a");
    // Three wasted bumps into the left wall, then three moves right.
    let mut t = 0;
    let p = ev.evaluate(0, &mut |_, _| {
        t += 1;
        if t <= 3 {
            Action::Left
        } else {
            Action::Right
        }
    });
    assert_eq!(p.episode_len, 6);
    assert_eq!(p.score_norm, 0.5);
}

fn small_config(algorithm: Algorithm, variant: RmVariant) -> RunConfig {
    RunConfig {
        map: MapSource::generated(&"2a2b2c".parse().unwrap(), 9, 1),
        task: "a-b".into(),
        rm_variant: variant,
        algorithm,
        learner: LearnerParams { total_steps: 10_000, eval_every: 1000, ..Default::default() },
        rm: RmConstants::default(),
        seeds: (0..6).collect(),
        output: None,
    }
}

#[test]
fn experiment_writes_one_row_per_eval_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs/crm.csv");
    run_experiment(&small_config(Algorithm::Crm, RmVariant::NumericBoolean), &out).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "algorithm,rm_variant,task,map_id,seed,step,arps_raw,score_norm,episode_len,completed"
    );
    let rows = read_runs(&out).unwrap();
    assert_eq!(rows.len(), 6 * (10_000 / 1000 + 1));
    let keys: Vec<(u64, u64)> = rows.iter().map(|r| (r.seed, r.step)).collect();
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    assert_eq!(keys, sorted);
    assert!(rows.iter().all(|r| r.map_id == "2a2b2c-s9-1" && r.score_norm <= 1.0 + 1e-9));

    let agg_text = fs::read_to_string(dir.path().join("runs/crm_agg.csv")).unwrap();
    assert_eq!(agg_text.lines().next().unwrap(), "algorithm,rm_variant,task,map_id,step,median,p25,p75");
    assert_eq!(agg_text.lines().count(), 1 + 11);
    let again = aggregate(&[out]).unwrap();
    assert!(again.iter().all(|r| r.p25 <= r.median && r.median <= r.p75));
}

#[test]
fn identical_curves_have_no_spread() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one.csv");
    let mut cfg = small_config(Algorithm::Qrm, RmVariant::Boolean);
    cfg.seeds = vec![4];
    run_experiment(&cfg, &out).unwrap();
    let base = read_runs(&out).unwrap();
    let rows: Vec<_> = (0..6).flat_map(|s| base.iter().cloned().map(move |r| numrm::harness::CsvRow { seed: s, ..r })).collect();
    for r in aggregate_rows(&rows).unwrap() {
        assert!(r.p25 == r.median && r.median == r.p75);
    }
}

#[test]
fn ragged_grids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let mut cfg = small_config(Algorithm::Qrm, RmVariant::Boolean);
    cfg.seeds = vec![0];
    run_experiment(&cfg, &a).unwrap();
    cfg.seeds = vec![1];
    cfg.learner.eval_every = 500;
    run_experiment(&cfg, &b).unwrap();
    assert!(matches!(aggregate(&[a, b]), Err(HarnessError::RaggedSteps(_))));
}

#[test]
fn config_file_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.txt"), "XXXXX\nXA.aX\nX...X\nXXXXX\n").unwrap();
    let good = "task = \"a\"\nrm_variant = \"boolean\"\nalgorithm = \"qrm\"\nseeds = [0]\n[map]\nfile = \"m.txt\"\n";
    fs::write(dir.path().join("good.toml"), good).unwrap();
    let cfg = RunConfig::load(&dir.path().join("good.toml")).unwrap();
    let logs = numrm::harness::run_config(&cfg).unwrap();
    assert_eq!(logs[0].map_id, "m");

    fs::write(dir.path().join("bad.toml"), good.replace("algorithm", "algo")).unwrap();
    let err = RunConfig::load(&dir.path().join("bad.toml")).unwrap_err().to_string();
    assert!(err.contains("algo") && err.contains("bad.toml"), "{err}");

    let missing = RunConfig::load(&dir.path().join("nope.toml")).unwrap_err();
    assert!(matches!(missing, HarnessError::Io { .. }));

    let mut absent = cfg.clone();
    absent.map = MapSource::file(dir.path().join("absent.txt"));
    assert!(matches!(numrm::harness::run_config(&absent), Err(HarnessError::Io { .. })));
}

fn small_matrix() -> MatrixSpec {
    MatrixSpec {
        setups: vec!["2a2b2c".parse().unwrap()],
        size: 11,
        tasks: vec!["a-b".into()],
        seeds: (0..3).collect(),
        ..MatrixSpec::desk_scale()
    }
}

#[test]
fn matrix_for_one_map_has_eight_curves() {
    let results = run_matrix(&small_matrix()).unwrap();
    let rows = numrm::harness::matrix_rows(&results);
    let agg = aggregate_rows(&rows).unwrap();
    let groups: BTreeSet<(String, String)> = agg.iter().map(|r| (r.algorithm.clone(), r.rm_variant.clone())).collect();
    assert_eq!(groups.len(), STANDARD_METHODS.len());
    let names: BTreeSet<String> = results.iter().map(|(c, _)| c.method().to_string()).collect();
    assert!(names.contains("crm-rs-bool") && names.contains("hrm-num"));
}

#[test]
fn converging_curves_end_higher_than_they_start() {
    for (cfg, logs) in run_matrix(&small_matrix()).unwrap() {
        let n = logs[0].points.len();
        let k = (n / 10).max(1);
        let median = |range: std::ops::Range<usize>| {
            let mut v: Vec<f64> = logs.iter().flat_map(|l| l.points[range.clone()].iter().map(|p| p.score_norm)).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        assert!(median(n - k..n) >= median(0..k), "{}", cfg.method());
    }
}

#[test]
fn boolean_machines_converge_slowest_at_desk_scale() {
    let results = run_matrix(&MatrixSpec::desk_scale()).unwrap();
    let mean_steps = |boolean: bool| {
        let v: Vec<f64> = results
            .iter()
            .filter(|(c, _)| matches!(c.rm_variant, RmVariant::Boolean | RmVariant::BooleanShaped) == boolean)
            .map(|(_, logs)| median_steps_to(logs, 0.95))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (boolean, numeric) = (mean_steps(true), mean_steps(false));
    assert!(boolean > numeric, "boolean {boolean}, numeric {numeric}");
}
