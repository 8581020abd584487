//! Correlated-equilibrium inequalities, robust membership checks, and
//! feasibility over the robust correlated equilibrium polytope.
//!
//! For player `i`, recommended action `a`, deviation `b != a` and disturbance
//! `d`, the deviation inequality reads
//!
//! ```text
//! sum_{u : u^i = a} dist(u) * [c^i_d(a, u^{-i}) - c^i_d(b, u^{-i})] <= 0.
//! ```
//!
//! A distribution is a CE for disturbance `d` when every `(i, a, b)`
//! inequality holds, and a robust CE when it holds for every `d` as well.

mod simplex;

use serde::Serialize;

use crate::error::{RceError, Result};
use crate::game::{normalize_costs, CostModel, JointDistribution, PerturbedGame};

/// Default tolerance for checking a given distribution.
pub const CHECK_TOL: f64 = 1e-9;
/// Default tolerance for distributions returned by [`find_rce`].
pub const SOLVE_TOL: f64 = 1e-7;
/// Default limit on the number of subsets [`helly_subset_check`] will enumerate.
pub const DEFAULT_SUBSET_CAP: u128 = 100_000;

/// One `(i, a, b, d)` inequality together with its left-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationInequality {
    pub player: usize,
    pub recommended: usize,
    pub deviation: usize,
    pub disturbance: usize,
    pub lhs: f64,
}

impl DeviationInequality {
    fn key(&self) -> (usize, usize, usize, usize) {
        (self.player, self.recommended, self.deviation, self.disturbance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Largest left-hand side over all checked inequalities (may be negative).
    pub max_violation: f64,
    /// Lexicographically first inequality attaining `max_violation`;
    /// `None` when every player has a single action.
    pub worst: Option<DeviationInequality>,
    pub is_member: bool,
    pub tol: f64,
}

impl EquilibriumReport {
    fn from_worst(worst: Option<DeviationInequality>, tol: f64) -> Self {
        let max_violation = worst.map_or(0.0, |w| w.lhs);
        Self {
            max_violation,
            worst,
            is_member: max_violation <= tol,
            tol,
        }
    }
}

fn lhs_unchecked(game: &impl CostModel, probs: &[f64], player: usize, a: usize, b: usize, d: usize) -> f64 {
    let n = game.action_counts()[player];
    let stride = game.stride(player);
    let mut sum = 0.0;
    for (u, &p) in probs.iter().enumerate() {
        if p != 0.0 && (u / stride) % n == a {
            let dev = u - a * stride + b * stride;
            sum += p * (game.cost(player, d, u) - game.cost(player, d, dev));
        }
    }
    sum
}

/// Deviation left-hand side for arbitrary nonnegative joint weights.
pub(crate) fn deviation_lhs(game: &PerturbedGame, weights: &[f64], player: usize, a: usize, b: usize, d: usize) -> f64 {
    lhs_unchecked(game, weights, player, a, b, d)
}

/// Left-hand side of the `(player, a, b, d)` deviation inequality under `dist`.
pub fn ce_lhs(
    game: &PerturbedGame,
    dist: &JointDistribution,
    player: usize,
    a: usize,
    b: usize,
    disturbance: usize,
) -> Result<f64> {
    game.check_player(player)?;
    game.check_action(player, a)?;
    game.check_action(player, b)?;
    game.check_disturbance(disturbance)?;
    game.check_shape(dist)?;
    if a == b {
        return Err(RceError::VacuousDeviation(a));
    }
    Ok(lhs_unchecked(game, dist.probs(), player, a, b, disturbance))
}

fn worst_for_disturbance(game: &PerturbedGame, probs: &[f64], d: usize) -> Option<DeviationInequality> {
    let mut worst: Option<DeviationInequality> = None;
    for (player, &n) in game.action_counts().iter().enumerate() {
        for a in 0..n {
            for b in (0..n).filter(|&b| b != a) {
                let lhs = lhs_unchecked(game, probs, player, a, b, d);
                if worst.is_none_or(|w| lhs > w.lhs) {
                    worst = Some(DeviationInequality {
                        player,
                        recommended: a,
                        deviation: b,
                        disturbance: d,
                        lhs,
                    });
                }
            }
        }
    }
    worst
}

/// Checks the CE inequalities of a single disturbance.
pub fn check_ce(
    game: &PerturbedGame,
    dist: &JointDistribution,
    disturbance: usize,
    tol: f64,
) -> Result<EquilibriumReport> {
    game.check_disturbance(disturbance)?;
    game.check_shape(dist)?;
    check_tol(tol)?;
    Ok(EquilibriumReport::from_worst(
        worst_for_disturbance(game, dist.probs(), disturbance),
        tol,
    ))
}

/// Checks the CE inequalities of every disturbance at once.
pub fn check_rce(game: &PerturbedGame, dist: &JointDistribution, tol: f64) -> Result<EquilibriumReport> {
    game.check_shape(dist)?;
    check_tol(tol)?;
    let mut worst: Option<DeviationInequality> = None;
    for d in 0..game.num_disturbances() {
        if let Some(w) = worst_for_disturbance(game, dist.probs(), d) {
            let replace = match worst {
                None => true,
                Some(cur) => w.lhs > cur.lhs || (w.lhs == cur.lhs && w.key() < cur.key()),
            };
            if replace {
                worst = Some(w);
            }
        }
    }
    Ok(EquilibriumReport::from_worst(worst, tol))
}

fn check_tol(tol: f64) -> Result<()> {
    if tol >= 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(RceError::InvalidConfig(format!(
            "tolerance {tol} must be finite and nonnegative"
        )))
    }
}

/// Proof that the robust CE polytope is empty: nonnegative weights on the
/// deviation inequalities whose weighted sum is positive at every joint
/// action, so every distribution violates at least one inequality.
#[derive(Clone, Debug, Serialize)]
pub struct InfeasibilityCertificate {
    /// Optimal Phase-I objective (the unavoidable artificial mass).
    pub phase_one_objective: f64,
    /// Nonzero inequality weights, scaled by the game's cost bound.
    pub multipliers: Vec<(DeviationInequality, f64)>,
    /// `min_u sum_k lambda_k A_k(u)`, recomputed from the multipliers.
    pub min_combined_coefficient: f64,
}

#[derive(Clone, Debug)]
pub enum Feasibility {
    Feasible(JointDistribution),
    Infeasible(InfeasibilityCertificate),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

/// Constraint rows of the robust CE polytope, labelled by inequality.
fn rce_rows(game: &PerturbedGame) -> (Vec<DeviationInequality>, Vec<Vec<f64>>) {
    let num_joint = game.num_joint_actions();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (player, &n) in game.action_counts().iter().enumerate() {
        let stride = game.stride(player);
        for d in 0..game.num_disturbances() {
            for a in 0..n {
                for b in (0..n).filter(|&b| b != a) {
                    let mut row = vec![0.0; num_joint];
                    for (u, slot) in row.iter_mut().enumerate() {
                        if (u / stride) % n == a {
                            let dev = u - a * stride + b * stride;
                            *slot = game.cost(player, d, u) - game.cost(player, d, dev);
                        }
                    }
                    if row.iter().any(|&v| v != 0.0) {
                        labels.push(DeviationInequality {
                            player,
                            recommended: a,
                            deviation: b,
                            disturbance: d,
                            lhs: 0.0,
                        });
                        rows.push(row);
                    }
                }
            }
        }
    }
    (labels, rows)
}

/// Finds a point of the robust CE polytope or proves it is empty.
///
/// A returned distribution is re-verified with [`check_rce`] at `tol`, and an
/// infeasibility certificate is re-verified from its multipliers; either
/// check failing is reported as [`RceError::Numerical`].
pub fn find_rce(game: &PerturbedGame, tol: f64) -> Result<Feasibility> {
    check_tol(tol)?;
    let scaled = normalize_costs(game);
    let (labels, rows) = rce_rows(&scaled);
    let num_joint = game.num_joint_actions();
    let sol = simplex::phase_one(&rows, num_joint)?;

    if sol.objective <= tol {
        let mass: f64 = sol.point.iter().map(|p| p.max(0.0)).sum();
        if mass <= 0.5 {
            return Err(RceError::Numerical(format!("phase-one point carries mass {mass}")));
        }
        let probs = sol.point.iter().map(|p| p.max(0.0) / mass).collect();
        let dist = JointDistribution::new(game.action_counts(), probs)?;
        let report = check_rce(game, &dist, tol)?;
        if !report.is_member {
            return Err(RceError::Numerical(format!(
                "solver point violates an inequality by {:e} (tol {tol:e})",
                report.max_violation
            )));
        }
        return Ok(Feasibility::Feasible(dist));
    }

    let min_combined = (0..num_joint)
        .map(|u| rows.iter().zip(&sol.multipliers).map(|(r, l)| r[u] * l).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if min_combined.is_nan() || min_combined <= tol {
        return Err(RceError::Numerical(format!(
            "phase-one objective {:e} but certificate only reaches {min_combined:e}",
            sol.objective
        )));
    }
    let bound = game.cost_bound();
    let multipliers = labels
        .into_iter()
        .zip(sol.multipliers)
        .filter(|(_, l)| *l > 0.0)
        .map(|(ineq, l)| (ineq, l / bound))
        .collect();
    Ok(Feasibility::Infeasible(InfeasibilityCertificate {
        phase_one_objective: sol.objective,
        multipliers,
        min_combined_coefficient: min_combined,
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct HellyReport {
    pub subset_size: usize,
    pub subsets_checked: u128,
    pub all_subsets_feasible: bool,
    /// Distinct 0-based disturbance indices of the first infeasible subset.
    pub first_failing_subset: Option<Vec<usize>>,
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.checked_mul((n - j) as u128)? / (j as u128 + 1);
    }
    Some(acc)
}

/// Checks that every `subset_size` of the per-disturbance CE sets intersect.
///
/// `subset_size` defaults to `|U|`. When there are fewer disturbances than
/// that, the list is padded by repeating the last disturbance.
pub fn helly_subset_check(
    game: &PerturbedGame,
    subset_size: Option<usize>,
    cap: u128,
    tol: f64,
) -> Result<HellyReport> {
    let size = subset_size.unwrap_or(game.num_joint_actions());
    if size == 0 {
        return Err(RceError::InvalidConfig("subset size must be positive".into()));
    }
    let d = game.num_disturbances();
    let padded: Vec<usize> = (0..d.max(size)).map(|k| k.min(d - 1)).collect();
    let count = binomial(padded.len(), size).unwrap_or(u128::MAX);
    if count > cap {
        return Err(RceError::SubsetCapExceeded { count, cap });
    }

    let mut checked = 0u128;
    let mut combo: Vec<usize> = (0..size).collect();
    loop {
        let mut subset: Vec<usize> = combo.iter().map(|&k| padded[k]).collect();
        subset.sort_unstable();
        subset.dedup();
        checked += 1;
        let restricted = game.restrict_disturbances(&subset)?;
        if !find_rce(&restricted, tol)?.is_feasible() {
            return Ok(HellyReport {
                subset_size: size,
                subsets_checked: checked,
                all_subsets_feasible: false,
                first_failing_subset: Some(subset),
            });
        }
        // Advance to the next combination in lexicographic order.
        let n = padded.len();
        let Some(pos) = (0..size).rev().find(|&p| combo[p] < n - size + p) else {
            break;
        };
        combo[pos] += 1;
        for q in pos + 1..size {
            combo[q] = combo[q - 1] + 1;
        }
    }
    Ok(HellyReport {
        subset_size: size,
        subsets_checked: checked,
        all_subsets_feasible: true,
        first_failing_subset: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::irrigation_game;

    const C: usize = 0;
    const O: usize = 1;
    const NORMAL: usize = 0;
    const DROUGHT: usize = 1;

    fn eq5() -> JointDistribution {
        JointDistribution::new(&[2, 2], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]).unwrap()
    }

    #[test]
    fn lhs_golden_values() {
        let g = irrigation_game();
        let normal = ce_lhs(&g, &eq5(), 0, C, O, NORMAL).unwrap();
        assert!((normal + 2.0 / 3.0).abs() < 1e-15);
        let drought = ce_lhs(&g, &eq5(), 0, C, O, DROUGHT).unwrap();
        assert!((drought - 1.0 / 6.0).abs() < 1e-15);
        // Empty conditional sum: no mass on u^1 = O.
        let only_c = JointDistribution::point_mass(&[2, 2], 1).unwrap();
        assert_eq!(ce_lhs(&g, &only_c, 0, O, C, NORMAL).unwrap(), 0.0);
        assert!(matches!(
            ce_lhs(&g, &eq5(), 0, C, C, NORMAL),
            Err(RceError::VacuousDeviation(0))
        ));
    }

    #[test]
    fn eq5_is_ce_but_not_robust() {
        let g = irrigation_game();
        let normal = check_ce(&g, &eq5(), NORMAL, CHECK_TOL).unwrap();
        assert!(normal.is_member);
        let drought = check_ce(&g, &eq5(), DROUGHT, CHECK_TOL).unwrap();
        assert!(!drought.is_member);
        let w = drought.worst.unwrap();
        assert_eq!((w.player, w.recommended, w.deviation), (0, C, O));

        let rce = check_rce(&g, &eq5(), CHECK_TOL).unwrap();
        assert!(!rce.is_member);
        assert_eq!(rce.worst.unwrap().disturbance, DROUGHT);
    }

    #[test]
    fn pure_robust_points() {
        let g = irrigation_game();
        for joint in [1, 2] {
            let dist = JointDistribution::point_mass(&[2, 2], joint).unwrap();
            assert!(check_rce(&g, &dist, 0.0).unwrap().is_member);
        }
    }

    #[test]
    fn identical_costs_make_everything_an_equilibrium() {
        let g = PerturbedGame::new(vec![2, 2], 1, vec![3.0; 8]).unwrap();
        let r = check_ce(&g, &eq5(), 0, 0.0).unwrap();
        assert!(r.is_member);
        assert_eq!(r.max_violation, 0.0);
        match find_rce(&g, SOLVE_TOL).unwrap() {
            Feasibility::Feasible(d) => assert!(check_rce(&g, &d, SOLVE_TOL).unwrap().is_member),
            Feasibility::Infeasible(_) => panic!("constant game is feasible"),
        }
    }

    #[test]
    fn single_disturbance_rce_equals_ce() {
        let g = irrigation_game().restrict_disturbances(&[NORMAL]).unwrap();
        assert_eq!(
            check_rce(&g, &eq5(), 0.0).unwrap(),
            check_ce(&g, &eq5(), 0, 0.0).unwrap()
        );
    }

    #[test]
    fn worst_tie_breaks_lexicographically() {
        // Two identical disturbances: the tie must resolve to d = 0.
        let base = irrigation_game();
        let g = base.restrict_disturbances(&[DROUGHT, DROUGHT]).unwrap();
        let r = check_rce(&g, &eq5(), 0.0).unwrap();
        assert_eq!(r.worst.unwrap().disturbance, 0);
        // Symmetric game, symmetric dist: players tie, player 0 wins.
        assert_eq!(r.worst.unwrap().player, 0);
    }

    #[test]
    fn single_action_players_have_no_inequalities() {
        let g = PerturbedGame::new(vec![1], 1, vec![5.0]).unwrap();
        let d = JointDistribution::uniform(&[1]);
        let r = check_rce(&g, &d, 0.0).unwrap();
        assert!(r.is_member && r.worst.is_none());
    }

    fn disjoint_game() -> PerturbedGame {
        // Player 1: C strictly better under d=0, O strictly better under d=1.
        PerturbedGame::from_fn(vec![2, 2], 2, |i, d, u| {
            if i == 1 {
                return 0.0;
            }
            let a = u / 2;
            if a == d {
                0.0
            } else {
                1.0
            }
        })
        .unwrap()
    }

    #[test]
    fn disjoint_ce_sets_are_certified_infeasible() {
        let g = disjoint_game();
        match find_rce(&g, SOLVE_TOL).unwrap() {
            Feasibility::Infeasible(cert) => {
                assert!((cert.phase_one_objective - 1.0).abs() < 1e-9);
                assert!(cert.min_combined_coefficient > 0.0);
                assert!(!cert.multipliers.is_empty());
            }
            Feasibility::Feasible(d) => panic!("expected infeasible, got {d:?}"),
        }
        let report = helly_subset_check(&g, None, DEFAULT_SUBSET_CAP, SOLVE_TOL).unwrap();
        assert!(!report.all_subsets_feasible);
        assert_eq!(report.first_failing_subset, Some(vec![0, 1]));
        // Pairs are enough to expose it as well.
        let report = helly_subset_check(&g, Some(2), DEFAULT_SUBSET_CAP, SOLVE_TOL).unwrap();
        assert_eq!(report.first_failing_subset, Some(vec![0, 1]));
    }

    #[test]
    fn helly_on_irrigation_pads_to_joint_size() {
        let g = irrigation_game();
        let r = helly_subset_check(&g, None, DEFAULT_SUBSET_CAP, SOLVE_TOL).unwrap();
        assert!(r.all_subsets_feasible);
        assert_eq!(r.subset_size, 4);
        // D = 2 padded to 4 gives a single subset.
        assert_eq!(r.subsets_checked, 1);

        let single = g.restrict_disturbances(&[1]).unwrap();
        let r = helly_subset_check(&single, None, DEFAULT_SUBSET_CAP, SOLVE_TOL).unwrap();
        assert_eq!(r.subsets_checked, 1);
        assert!(r.all_subsets_feasible);
    }

    #[test]
    fn helly_refuses_huge_enumerations() {
        let g = PerturbedGame::from_fn(vec![2, 2], 40, |_, d, u| (d * u) as f64).unwrap();
        let err = helly_subset_check(&g, Some(4), 1000, SOLVE_TOL).unwrap_err();
        assert!(matches!(
            err,
            RceError::SubsetCapExceeded {
                count: 91390,
                cap: 1000
            }
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 4), Some(1));
        assert_eq!(binomial(40, 4), Some(91390));
        assert_eq!(binomial(5, 2), Some(10));
    }
}
