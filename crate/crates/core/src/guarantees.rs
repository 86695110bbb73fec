//! Discounted returns of shortest and detouring trajectories, and the reward
//! thresholds under which the return-maximizing path is a shortest one.
//!
//! `t_star` is the shortest-path length in steps, `n` the number of
//! back-and-forth detours (each adds two steps). All functions assume
//! `0 < gamma < 1`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuaranteeError {
    #[error("unknown scenario {0:?}; expected corner_two_targets or single_target")]
    UnknownScenario(String),
    #[error("unknown machine variant {0:?}; expected boolean, numeric_boolean or numeric")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuaranteeParams {
    pub big_r: f64,
    pub r: f64,
    pub gamma: f64,
    pub t_star: u32,
    pub n: u32,
}

/// Sparse machine: only the arrival step pays `big_r`.
pub fn boolean_return(t: u32, big_r: f64, gamma: f64) -> f64 {
    gamma.powi(t as i32 - 1) * big_r
}

/// Every move pays `r` (two targets in opposite corners), arrival pays `big_r`.
pub fn numbool_return_corner(t: u32, big_r: f64, r: f64, gamma: f64) -> f64 {
    let g = gamma.powi(t as i32 - 1);
    g * big_r + r * (1.0 - g) / (1.0 - gamma)
}

pub fn corner_threshold(big_r: f64, gamma: f64) -> f64 {
    big_r * (1.0 - gamma)
}

pub fn single_threshold(big_r: f64, gamma: f64) -> f64 {
    big_r * (1.0 - gamma * gamma) / gamma
}

/// One target; approach steps pay `r`, the `n` detours pay `r` only on the
/// step back toward the target.
pub fn numbool_return_single(t_star: u32, n: u32, big_r: f64, r: f64, gamma: f64) -> f64 {
    let g = gamma.powi(t_star as i32 - 1);
    let detour = g * (gamma - gamma.powi(2 * n as i32 + 1)) / (1.0 - gamma * gamma);
    gamma.powi((t_star + 2 * n) as i32 - 1) * big_r + r * (1.0 - g) / (1.0 - gamma) + r * detour
}

/// One target; each step pays minus the distance held before the move. The
/// detours happen at distance one, right before the final step.
pub fn numeric_return_single(t_star: u32, n: u32, gamma: f64) -> f64 {
    let t_star = t_star as i32;
    let approach: f64 = (0..t_star - 1).map(|t| gamma.powi(t) * f64::from(t - t_star)).sum();
    let detours: f64 = (0..n as i32)
        .map(|k| -gamma.powi(t_star - 1 + 2 * k) - 2.0 * gamma.powi(t_star + 2 * k))
        .sum();
    approach + detours - gamma.powi(t_star - 1 + 2 * n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Boolean,
    NumericBoolean,
    Numeric,
}

impl FromStr for Variant {
    type Err = GuaranteeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "boolean" | "bool" => Ok(Variant::Boolean),
            "numeric_boolean" | "num-bool" | "num_bool" => Ok(Variant::NumericBoolean),
            "numeric" | "num" => Ok(Variant::Numeric),
            _ => Err(GuaranteeError::UnknownVariant(s.to_string())),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Boolean => "boolean",
            Variant::NumericBoolean => "numeric_boolean",
            Variant::Numeric => "numeric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    CornerTwoTargets,
    SingleTarget,
}

impl FromStr for Scenario {
    type Err = GuaranteeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corner_two_targets" | "corner" => Ok(Scenario::CornerTwoTargets),
            "single_target" | "single" => Ok(Scenario::SingleTarget),
            _ => Err(GuaranteeError::UnknownScenario(s.to_string())),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::CornerTwoTargets => "corner_two_targets",
            Scenario::SingleTarget => "single_target",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    GuaranteedShortest,
    NotGuaranteed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Bound `r` must stay strictly below, when one applies.
    pub threshold: Option<f64>,
    pub note: &'static str,
}

pub fn check_guarantee(variant: Variant, scenario: Scenario, big_r: f64, r: f64, gamma: f64) -> Verdict {
    use VerdictKind::*;
    match (variant, scenario) {
        (Variant::Boolean, _) => Verdict {
            kind: GuaranteedShortest,
            threshold: None,
            note: "return decreases strictly with episode length",
        },
        (Variant::NumericBoolean, sc) => {
            let threshold = match sc {
                Scenario::CornerTwoTargets => corner_threshold(big_r, gamma),
                Scenario::SingleTarget => single_threshold(big_r, gamma),
            };
            Verdict {
                kind: if r < threshold { GuaranteedShortest } else { NotGuaranteed },
                threshold: Some(threshold),
                note: "shortest paths require r strictly below the threshold",
            }
        }
        (Variant::Numeric, Scenario::SingleTarget) => Verdict {
            kind: GuaranteedShortest,
            threshold: None,
            note: "detours only add negative rewards, for any parameters",
        },
        (Variant::Numeric, Scenario::CornerTwoTargets) => Verdict {
            kind: NotGuaranteed,
            threshold: None,
            note: "several same-type targets: shortest paths conjectured, not proven",
        },
    }
}

/// Returns of a shortest trajectory and of one with `p.n` detours, for the
/// scenario's reward scheme. `None` where no closed form exists.
pub fn shortest_vs_detour(variant: Variant, scenario: Scenario, p: &GuaranteeParams) -> Option<(f64, f64)> {
    let (t, n) = (p.t_star, p.n);
    match (variant, scenario) {
        (Variant::Boolean, _) => {
            Some((boolean_return(t, p.big_r, p.gamma), boolean_return(t + 2 * n, p.big_r, p.gamma)))
        }
        (Variant::NumericBoolean, Scenario::CornerTwoTargets) => Some((
            numbool_return_corner(t, p.big_r, p.r, p.gamma),
            numbool_return_corner(t + 2 * n, p.big_r, p.r, p.gamma),
        )),
        (Variant::NumericBoolean, Scenario::SingleTarget) => Some((
            numbool_return_single(t, 0, p.big_r, p.r, p.gamma),
            numbool_return_single(t, n, p.big_r, p.r, p.gamma),
        )),
        (Variant::Numeric, Scenario::SingleTarget) => {
            Some((numeric_return_single(t, 0, p.gamma), numeric_return_single(t, n, p.gamma)))
        }
        (Variant::Numeric, Scenario::CornerTwoTargets) => None,
    }
}

/// Step-by-step trajectory simulation, independent of the closed forms above.
pub mod sim {
    /// Grid position `(row, col)`.
    pub type Cell = (i64, i64);

    fn manhattan(a: Cell, b: Cell) -> i64 {
        (a.0 - b.0).abs() + (a.1 - b.1).abs()
    }

    pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
        let mut total = 0.0;
        let mut discount = 1.0;
        for r in rewards {
            total += discount * r;
            discount *= gamma;
        }
        total
    }

    /// Path from `(0, t_star)` to the target at the origin, walking left,
    /// with `n` right-left detours inserted at distance one.
    pub fn single_target_path(t_star: u32, n: u32) -> Vec<Cell> {
        let mut path = vec![(0, t_star as i64)];
        let mut col = t_star as i64;
        while col > 1 {
            col -= 1;
            path.push((0, col));
        }
        for _ in 0..n {
            path.push((0, 2));
            path.push((0, 1));
        }
        path.push((0, 0));
        path
    }

    /// Two targets at `(0, 0)` and `(side, side)`. The agent starts at
    /// `(t_star, 0)`, so every move gets closer to one of them.
    pub fn corner_path(t_star: u32, n: u32) -> (Vec<Cell>, [Cell; 2]) {
        let side = 2 * t_star as i64 + 4;
        let targets = [(0, 0), (side, side)];
        let mut path = vec![(t_star as i64, 0)];
        let mut row = t_star as i64;
        while row > 1 {
            row -= 1;
            path.push((row, 0));
        }
        for _ in 0..n {
            path.push((2, 0));
            path.push((1, 0));
        }
        path.push((0, 0));
        (path, targets)
    }

    fn dist_to(targets: &[Cell], p: Cell) -> i64 {
        targets.iter().map(|&t| manhattan(p, t)).min().expect("targets")
    }

    /// Arrival pays `big_r`, every other step pays nothing.
    pub fn boolean_rewards(path: &[Cell], targets: &[Cell], big_r: f64) -> Vec<f64> {
        path.windows(2)
            .map(|w| if dist_to(targets, w[1]) == 0 { big_r } else { 0.0 })
            .collect()
    }

    /// Arrival pays `big_r`; a step that gets closer to any target pays `r`.
    pub fn numbool_rewards(path: &[Cell], targets: &[Cell], big_r: f64, r: f64) -> Vec<f64> {
        path.windows(2)
            .map(|w| {
                if dist_to(targets, w[1]) == 0 {
                    big_r
                } else if targets.iter().any(|&t| manhattan(w[1], t) < manhattan(w[0], t)) {
                    r
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Each step pays minus the distance before the move.
    pub fn numeric_rewards(path: &[Cell], targets: &[Cell]) -> Vec<f64> {
        path.windows(2).map(|w| -(dist_to(targets, w[0]) as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: [f64; 3] = [0.5, 0.9, 0.99];

    #[test]
    fn boolean_return_values() {
        assert_eq!(boolean_return(1, 3.0, 0.9), 3.0);
        assert!((boolean_return(3, 1.0, 0.9) - 0.81).abs() < 1e-15);
        for t in 1..30 {
            assert!(boolean_return(t + 1, 1.0, 0.9) < boolean_return(t, 1.0, 0.9));
        }
    }

    #[test]
    fn thresholds() {
        assert!((corner_threshold(1.0, 0.9) - 0.1).abs() < 1e-15);
        assert!((single_threshold(1.0, 0.9) - 0.19 / 0.9).abs() < 1e-15);
        for i in 1..100 {
            let g = i as f64 / 100.0;
            assert!(corner_threshold(2.5, g) < single_threshold(2.5, g));
        }
    }

    #[test]
    fn corner_without_step_reward_is_boolean() {
        for &g in &GRID {
            for t in 1..20 {
                assert_eq!(numbool_return_corner(t, 4.0, 0.0, g), boolean_return(t, 4.0, g));
            }
        }
    }

    #[test]
    fn corner_detour_pays_above_threshold() {
        let (big_r, g) = (1.0, 0.9);
        let r = corner_threshold(big_r, g);
        assert!(numbool_return_corner(12, big_r, r * 1.01, g) > numbool_return_corner(10, big_r, r * 1.01, g));
        assert!(numbool_return_corner(12, big_r, r * 0.99, g) < numbool_return_corner(10, big_r, r * 0.99, g));
    }

    #[test]
    fn single_detours_lose_below_threshold() {
        for &g in &GRID {
            let thr = single_threshold(10.0, g);
            for t in 1..15 {
                let straight = numbool_return_single(t, 0, 10.0, 0.95 * thr, g);
                for n in 1..6 {
                    assert!(straight > numbool_return_single(t, n, 10.0, 0.95 * thr, g));
                }
                assert!(
                    numbool_return_single(t, 0, 10.0, 1.05 * thr, g) < numbool_return_single(t, 1, 10.0, 1.05 * thr, g)
                );
            }
        }
    }

    #[test]
    fn numeric_single_step_case() {
        assert_eq!(numeric_return_single(1, 0, 0.9), -1.0);
        for &g in &GRID {
            for t in 1..20 {
                let direct: f64 = (0..t as i32).map(|k| g.powi(k) * f64::from(k - t as i32)).sum();
                assert!((numeric_return_single(t, 0, g) - direct).abs() < 1e-12);
                for n in 0..5 {
                    assert!(numeric_return_single(t, n + 1, g) < numeric_return_single(t, n, g));
                }
            }
        }
    }

    #[test]
    fn printed_detour_series_over_discounts() {
        // The detour series as typeset, -2 g^(T-1) sum_{k=0..n} g^(2k-2) - g^(T-1) sum_{k=0..n-1} g^(2k+1),
        // added to the shortest-path return, disagrees with the simulated
        // back-and-forth trajectory already at n = 1.
        let (t, n, g) = (5u32, 1u32, 0.9f64);
        let gt = g.powi(t as i32 - 1);
        let printed = numeric_return_single(t, 0, g)
            - 2.0 * gt * (0..=n as i32).map(|k| g.powi(2 * k - 2)).sum::<f64>()
            - gt * (0..n as i32).map(|k| g.powi(2 * k + 1)).sum::<f64>();
        let path = sim::single_target_path(t, n);
        let simulated = sim::discounted_sum(&sim::numeric_rewards(&path, &[(0, 0)]), g);
        assert!((numeric_return_single(t, n, g) - simulated).abs() < 1e-12);
        assert!((printed - simulated).abs() > 1e-3);
    }

    #[test]
    fn verdicts() {
        let v = check_guarantee(Variant::NumericBoolean, Scenario::CornerTwoTargets, 1000.0, 0.1, 0.9);
        assert_eq!(v.kind, VerdictKind::GuaranteedShortest);
        assert!((v.threshold.unwrap() - 100.0).abs() < 1e-9);
        let v = check_guarantee(Variant::NumericBoolean, Scenario::CornerTwoTargets, 1.0, 0.1, 0.9);
        assert_eq!(v.kind, VerdictKind::NotGuaranteed);
        for sc in [Scenario::CornerTwoTargets, Scenario::SingleTarget] {
            assert_eq!(check_guarantee(Variant::Boolean, sc, 1.0, 5.0, 0.5).kind, VerdictKind::GuaranteedShortest);
        }
        assert_eq!(
            check_guarantee(Variant::Numeric, Scenario::SingleTarget, 0.0, 0.0, 0.99).kind,
            VerdictKind::GuaranteedShortest
        );
        assert_eq!(
            check_guarantee(Variant::Numeric, Scenario::CornerTwoTargets, 0.0, 0.0, 0.9).kind,
            VerdictKind::NotGuaranteed
        );
        assert_eq!("diagonal".parse::<Scenario>(), Err(GuaranteeError::UnknownScenario("diagonal".into())));
    }

    #[test]
    fn detour_comparison() {
        let p = GuaranteeParams { big_r: 1.0, r: 0.05, gamma: 0.9, t_star: 10, n: 1 };
        let (short, long) = shortest_vs_detour(Variant::NumericBoolean, Scenario::CornerTwoTargets, &p).unwrap();
        assert!(short > long);
        assert!(shortest_vs_detour(Variant::Numeric, Scenario::CornerTwoTargets, &p).is_none());
    }
}
