use proptest::prelude::*;

use numrm::harness::{aggregate_rows, normalize, quantile, CsvRow};
use numrm::oracle::OptimalConstants;
use numrm::reward_machine::{build_boolean_rm, build_numeric_boolean_rm, build_numeric_rm, RewardMachine};
use numrm::{generate_map, Action, EnvState, GridMap, Setup, Task};

fn setup_strategy() -> impl Strategy<Value = Setup> {
    (1usize..=3, 1usize..=3, 0usize..=2).prop_map(|(a, b, c)| {
        let mut s = format!("{a}a{b}b");
        if c > 0 {
            s.push_str(&format!("{c}c"));
        }
        s.parse().unwrap()
    })
}

fn map_strategy() -> impl Strategy<Value = GridMap> {
    (setup_strategy(), 7usize..=13, any::<u64>()).prop_map(|(setup, size, seed)| generate_map(&setup, size, seed).unwrap())
}

fn walk(map: &GridMap, actions: &[usize]) -> Vec<EnvState> {
    let mut s = map.start_state();
    let mut out = vec![s];
    for &a in actions {
        s = map.step(s, Action::from_index(a));
        out.push(s);
    }
    out
}

fn machines(task: &Task) -> Vec<RewardMachine> {
    vec![
        build_boolean_rm(task, 1.0).unwrap(),
        build_numeric_boolean_rm(task, 0.1, 1000.0).unwrap(),
        build_numeric_rm(task, &vec![5.0; task.len()]).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_change_by_at_most_one(map in map_strategy(), actions in prop::collection::vec(0usize..4, 1..60)) {
        let states = walk(&map, &actions);
        for w in states.windows(2) {
            let v = map.label(w[0], w[1]);
            for (t, f) in v.iter() {
                let before = map.distance(w[0], t).unwrap();
                prop_assert!(before.abs_diff(f.dist) <= 1);
                prop_assert_eq!(f.at_target(), f.dist == 0);
                prop_assert_eq!(f.decreased, f.dist < before);
            }
        }
    }

    #[test]
    fn random_walk_stays_off_walls(map in map_strategy(), actions in prop::collection::vec(0usize..4, 1..200)) {
        for s in walk(&map, &actions) {
            prop_assert!(!map.is_wall(s.pos));
        }
    }

    #[test]
    fn machines_accept_every_label(map in map_strategy(), actions in prop::collection::vec(0usize..4, 1..80)) {
        let task: Task = "a-b".parse().unwrap();
        let states = walk(&map, &actions);
        for rm in machines(&task) {
            prop_assert!(rm.validate().is_empty());
            let mut u = rm.initial();
            for w in states.windows(2) {
                if rm.is_terminal(u) {
                    break;
                }
                u = rm.step(u, &map.label(w[0], w[1])).unwrap().next;
            }
        }
    }

    #[test]
    fn generation_is_pure(setup in setup_strategy(), size in 7usize..=15, seed in any::<u64>()) {
        let a = generate_map(&setup, size, seed).unwrap();
        let b = generate_map(&setup, size, seed).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert_eq!(GridMap::parse(&a.to_text()).unwrap().to_text(), a.to_text());
        prop_assert_eq!(a.objects().len(), setup.total());
    }

    #[test]
    fn machine_json_round_trips(legs in prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c']), 1..5)) {
        let task: Task = legs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-").parse().unwrap();
        for rm in machines(&task) {
            let back = RewardMachine::from_json(&rm.to_json()).unwrap();
            prop_assert_eq!(back.to_json(), rm.to_json());
        }
    }

    #[test]
    fn scores_stay_in_unit_interval(opt in -50.0f64..50.0, got in -100.0f64..100.0, done: bool, opt_done: bool) {
        prop_assume!(opt != 0.0 && got != 0.0);
        let o = OptimalConstants { arps: opt, episode_len: 1, completed: opt_done, discounted_return: 0.0 };
        let s = normalize(got, done, &o);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&s));
    }

    #[test]
    fn quartiles_are_ordered(values in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let rows: Vec<CsvRow> = values
            .iter()
            .enumerate()
            .map(|(seed, &v)| CsvRow {
                algorithm: "qrm".into(),
                rm_variant: "boolean".into(),
                task: "a".into(),
                map_id: "m".into(),
                seed: seed as u64,
                step: 0,
                arps_raw: v,
                score_norm: v,
                episode_len: 1,
                completed: true,
            })
            .collect();
        let agg = aggregate_rows(&rows).unwrap();
        prop_assert_eq!(agg.len(), 1);
        prop_assert!(agg[0].p25 <= agg[0].median && agg[0].median <= agg[0].p75);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert!(quantile(&sorted, 0.0) == sorted[0] && quantile(&sorted, 1.0) == *sorted.last().unwrap());
    }
}
