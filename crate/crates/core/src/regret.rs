//! Regret bookkeeping for the perturbed repeated game.
//!
//! Each player keeps two families of `|U^i| x |U^i|` regret matrices:
//!
//! * the conditional regret `CR_t(a, b)`: the time-averaged cost that would
//!   have been saved by playing `b` in every round the player played `a`,
//!   under the disturbances that were actually realized;
//! * the modified regret `MCR_t(a, b)`, a running average with an added
//!   momentum term and clamped at zero after every update:
//!
//!   ```text
//!   MCR_t = [(1 - 1/t) MCR_{t-1} + (1/t) diff_t + (1/t)(MCR_{t-1} - MCR_{t-2})]_+
//!   ```
//!
//!   where `diff_t(a, b) = c(a, u^{-i}_t) - c(b, u^{-i}_t)` on the row of the
//!   action taken at `t` and zero on the other rows. `MCR_0 = MCR_{-1} = 0`.
//!
//! The same recursion on a generic loss vector is [`ApproachabilityIterate`].

use crate::equilibrium::deviation_lhs;
use crate::error::{check_index, RceError, Result};
use crate::game::{CostModel, JointAction, JointDistribution, MixedStrategy, PerturbedGame};

/// Frequencies of joint actions over the rounds played so far.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    action_counts: Vec<usize>,
    counts: Vec<u64>,
    total: u64,
}

impl EmpiricalDistribution {
    pub fn new(action_counts: &[usize]) -> Self {
        Self {
            action_counts: action_counts.to_vec(),
            counts: vec![0; action_counts.iter().product()],
            total: 0,
        }
    }

    pub fn observe(&mut self, joint: usize) {
        self.counts[joint] += 1;
        self.total += 1;
    }

    pub fn observe_action(&mut self, game: &PerturbedGame, action: &JointAction) -> Result<()> {
        self.observe(game.joint_index(action.actions())?);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn frequency(&self, joint: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[joint] as f64 / self.total as f64
        }
    }

    /// `x_t`; `None` before the first observation.
    pub fn as_distribution(&self) -> Option<JointDistribution> {
        if self.total == 0 {
            return None;
        }
        let t = self.total as f64;
        let probs = self.counts.iter().map(|&c| c as f64 / t).collect();
        JointDistribution::new(&self.action_counts, probs).ok()
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
    }
}

/// `W^i(a, b)`: the cost player `i` would have paid at `u` had it switched
/// from `a` to `b` (and the realized cost when it did not play `a`).
pub fn deviation_payoff(
    game: &PerturbedGame,
    player: usize,
    a: usize,
    b: usize,
    u: &JointAction,
    disturbance: usize,
) -> Result<f64> {
    game.check_player(player)?;
    game.check_action(player, a)?;
    game.check_action(player, b)?;
    game.check_disturbance(disturbance)?;
    if a == b {
        return Err(RceError::VacuousDeviation(a));
    }
    let joint = game.joint_index(u.actions())?;
    let played = u.actions()[player];
    let target = if played == a {
        game.deviate(joint, player, b)
    } else {
        joint
    };
    Ok(game.cost(player, disturbance, target))
}

/// `c^i_d(b, u^{-i})` for every own action `b`: the only cost information a
/// player's update consumes.
pub fn cost_row<M: CostModel + ?Sized>(model: &M, player: usize, joint: usize, disturbance: usize) -> Vec<f64> {
    (0..model.action_counts()[player])
        .map(|b| model.cost(player, disturbance, model.deviate(joint, player, b)))
        .collect()
}

/// Per-player regret matrices. Diagonal entries are always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretState {
    num_actions: usize,
    rounds: u64,
    momentum: bool,
    // Unnormalized conditional regret sums, sum over tau with u_tau = a.
    cr_sums: Vec<f64>,
    mcr_curr: Vec<f64>,
    mcr_prev: Vec<f64>,
}

impl RegretState {
    /// With `momentum` off the learner matches on the plain conditional
    /// regret `CR_+` instead of the modified regret.
    pub fn new(num_actions: usize, momentum: bool) -> Self {
        let n2 = num_actions * num_actions;
        Self {
            num_actions,
            rounds: 0,
            momentum,
            cr_sums: vec![0.0; n2],
            mcr_curr: vec![0.0; n2],
            mcr_prev: vec![0.0; n2],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn momentum(&self) -> bool {
        self.momentum
    }

    /// `CR_t(a, b)` before the positive part.
    pub fn cr(&self, a: usize, b: usize) -> f64 {
        if self.rounds == 0 {
            return 0.0;
        }
        self.cr_sums[a * self.num_actions + b] / self.rounds as f64
    }

    /// `CR_{t,+}(a, b)`.
    pub fn cr_plus(&self, a: usize, b: usize) -> f64 {
        if self.rounds == 0 || a == b {
            return 0.0;
        }
        (self.cr_sums[a * self.num_actions + b] / self.rounds as f64).max(0.0)
    }

    pub fn cr_plus_matrix(&self) -> Vec<f64> {
        let n = self.num_actions;
        (0..n * n).map(|k| self.cr_plus(k / n, k % n)).collect()
    }

    /// `MCR_{t,+}(a, b)`.
    pub fn modified(&self, a: usize, b: usize) -> f64 {
        self.mcr_curr[a * self.num_actions + b]
    }

    pub fn modified_matrix(&self) -> &[f64] {
        &self.mcr_curr
    }

    /// `MCR_{t-1,+}`, the history the next update's momentum term uses.
    pub fn modified_previous(&self) -> &[f64] {
        &self.mcr_prev
    }

    /// Row `a` of the regrets the learner matches on.
    pub fn matched_row(&self, a: usize) -> Vec<f64> {
        let n = self.num_actions;
        if self.momentum {
            self.mcr_curr[a * n..(a + 1) * n].to_vec()
        } else {
            (0..n).map(|b| self.cr_plus(a, b)).collect()
        }
    }

    pub fn matched_matrix(&self) -> Vec<f64> {
        if self.momentum {
            self.mcr_curr.clone()
        } else {
            self.cr_plus_matrix()
        }
    }

    pub fn max_matched(&self) -> f64 {
        self.matched_matrix().into_iter().fold(0.0, f64::max)
    }

    /// Records one round: the action taken and the cost each own action
    /// would have incurred against the realized opponents and disturbance.
    pub fn update(&mut self, action: usize, cost_row: &[f64]) -> Result<()> {
        let n = self.num_actions;
        check_index("action", action, n)?;
        if cost_row.len() != n {
            return Err(RceError::DimensionMismatch {
                expected: n,
                got: cost_row.len(),
            });
        }
        self.rounds += 1;
        let mut diff = vec![0.0; n * n];
        for b in (0..n).filter(|&b| b != action) {
            let d = cost_row[action] - cost_row[b];
            self.cr_sums[action * n + b] += d;
            diff[action * n + b] = d;
        }
        self.modified_regret_update(&diff, self.rounds)
    }

    /// One step of the modified-regret recursion with instantaneous
    /// differences `inst_diff` (row-major `n x n`) at round `t`.
    pub fn modified_regret_update(&mut self, inst_diff: &[f64], t: u64) -> Result<()> {
        if t == 0 {
            return Err(RceError::ZeroRound);
        }
        let n = self.num_actions;
        if inst_diff.len() != n * n {
            return Err(RceError::DimensionMismatch {
                expected: n * n,
                got: inst_diff.len(),
            });
        }
        let alpha = 1.0 / t as f64;
        let next: Vec<f64> = (0..n * n)
            .map(|k| {
                if k / n == k % n {
                    return 0.0;
                }
                let prev1 = self.mcr_curr[k];
                let prev2 = self.mcr_prev[k];
                let v = (1.0 - alpha) * prev1 + alpha * inst_diff[k] + alpha * (prev1 - prev2);
                v.max(0.0)
            })
            .collect();
        self.mcr_prev = std::mem::replace(&mut self.mcr_curr, next);
        Ok(())
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.num_actions, self.momentum);
    }

    /// Nonnegativity and zero diagonals of every stored matrix.
    pub fn invariants_hold(&self) -> bool {
        let n = self.num_actions;
        let ok = |m: &[f64]| {
            m.iter()
                .enumerate()
                .all(|(k, &v)| v >= 0.0 && (k / n != k % n || v == 0.0))
        };
        ok(&self.mcr_curr) && ok(&self.mcr_prev) && ok(&self.cr_plus_matrix())
    }
}

/// Feeds round `(u, d)` to `player`'s regret state from the full game.
pub fn conditional_regret_update(
    state: &mut RegretState,
    game: &PerturbedGame,
    player: usize,
    u: &JointAction,
    disturbance: usize,
) -> Result<()> {
    game.check_player(player)?;
    game.check_disturbance(disturbance)?;
    let joint = game.joint_index(u.actions())?;
    state.update(u.actions()[player], &cost_row(game, player, joint, disturbance))
}

/// Conditional regret recovered from joint `(u, d)` counts:
/// `sum_d sum_{u^i = a} (count_d(u) / t) [c^i_d(a, u^{-i}) - c^i_d(b, u^{-i})]`.
///
/// Equals `CR_t(a, b)` (before the positive part) for the history the counts
/// came from.
pub fn regret_from_counts(
    game: &PerturbedGame,
    counts_by_disturbance: &[EmpiricalDistribution],
    player: usize,
    a: usize,
    b: usize,
) -> f64 {
    let t: u64 = counts_by_disturbance.iter().map(EmpiricalDistribution::total).sum();
    if t == 0 {
        return 0.0;
    }
    counts_by_disturbance
        .iter()
        .enumerate()
        .map(|(d, emp)| {
            let weights: Vec<f64> = emp.counts().iter().map(|&c| c as f64 / t as f64).collect();
            deviation_lhs(game, &weights, player, a, b, d)
        })
        .sum()
}

/// Iterate of the momentum recursion on loss vectors:
///
/// ```text
/// y_{t+1} = (1 - 1/(t+1)) y_t + l_{t+1}/(t+1) + (y_t - y_{t-1})/(t+1),  y_0 = 0,
/// ```
///
/// so that `y_1 = l_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproachabilityIterate {
    curr: Vec<f64>,
    prev: Vec<f64>,
    t: u64,
}

impl ApproachabilityIterate {
    pub fn new(dim: usize) -> Self {
        Self {
            curr: vec![0.0; dim],
            prev: vec![0.0; dim],
            t: 0,
        }
    }

    /// Starts from explicit `(y_t, y_{t-1})` at round `t`.
    pub fn from_state(curr: Vec<f64>, prev: Vec<f64>, t: u64) -> Result<Self> {
        if curr.len() != prev.len() {
            return Err(RceError::DimensionMismatch {
                expected: curr.len(),
                got: prev.len(),
            });
        }
        Ok(Self { curr, prev, t })
    }

    pub fn current(&self) -> &[f64] {
        &self.curr
    }

    pub fn previous(&self) -> &[f64] {
        &self.prev
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.curr.len()
    }

    fn check(&self, loss: &[f64]) -> Result<()> {
        if loss.len() == self.curr.len() {
            Ok(())
        } else {
            Err(RceError::DimensionMismatch {
                expected: self.curr.len(),
                got: loss.len(),
            })
        }
    }

    /// Three-term form of the recursion.
    pub fn update(&mut self, loss: &[f64]) -> Result<()> {
        self.check(loss)?;
        let step = 1.0 / (self.t + 1) as f64;
        let next = self
            .curr
            .iter()
            .zip(&self.prev)
            .zip(loss)
            .map(|((&y, &yp), &l)| (1.0 - step) * y + step * l + step * (y - yp))
            .collect();
        self.prev = std::mem::replace(&mut self.curr, next);
        self.t += 1;
        Ok(())
    }

    /// Collapsed form `y_{t+1} = y_t - y_{t-1}/(t+1) + l_{t+1}/(t+1)`.
    pub fn update_collapsed(&mut self, loss: &[f64]) -> Result<()> {
        self.check(loss)?;
        let step = 1.0 / (self.t + 1) as f64;
        let next = self
            .curr
            .iter()
            .zip(&self.prev)
            .zip(loss)
            .map(|((&y, &yp), &l)| y - yp * step + l * step)
            .collect();
        self.prev = std::mem::replace(&mut self.curr, next);
        self.t += 1;
        Ok(())
    }
}

/// Trajectory `y_0, ..., y_rounds` of the loss-free recursion
/// `y_{t+1} = y_t - y_{t-1}/(t+1)` with `y_0 = 0`.
pub fn autonomous_run(y1: f64, rounds: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(0.0);
    if rounds == 0 {
        return out;
    }
    out.push(y1);
    for t in 1..rounds {
        let next = out[t] - out[t - 1] / (t + 1) as f64;
        out.push(next);
    }
    out
}

/// Euclidean distance from `y` to the nonpositive orthant, i.e. `||[y]_+||`.
pub fn dist_to_nonpositive_orthant(y: &[f64]) -> f64 {
    y.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt()
}

/// Support function of the nonpositive orthant: `sup { lambda . y : y <= 0 }`.
pub fn support_nonpositive_orthant(lambda: &[f64]) -> f64 {
    if lambda.iter().any(|&l| l < 0.0) {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Off-diagonal pairs `(a, b)`, `a != b`, in row-major order: the coordinates
/// of a player's regret vector.
pub fn regret_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect()
}

/// Two-player game with vector losses `l(a, s, d)` for the row player.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPayoffGame {
    own_actions: usize,
    opponent_actions: usize,
    disturbances: usize,
    dim: usize,
    // index: ((a * S + s) * D + d) * dim
    payoffs: Vec<f64>,
}

impl VectorPayoffGame {
    pub fn new(
        own_actions: usize,
        opponent_actions: usize,
        disturbances: usize,
        dim: usize,
        payoffs: Vec<f64>,
    ) -> Result<Self> {
        let expected = own_actions * opponent_actions * disturbances * dim;
        if payoffs.len() != expected {
            return Err(RceError::DimensionMismatch {
                expected,
                got: payoffs.len(),
            });
        }
        Ok(Self {
            own_actions,
            opponent_actions,
            disturbances,
            dim,
            payoffs,
        })
    }

    /// Auxiliary game of `player`'s regrets: the opponent is the joint
    /// profile of everyone else, and the loss for taking `a` is the
    /// instantaneous regret vector over [`regret_pairs`], nonzero only on
    /// row `a`. Losses are divided by `2 * cost_bound` so `|l| <= 1`.
    pub fn auxiliary_regret_game(game: &PerturbedGame, player: usize) -> Result<Self> {
        game.check_player(player)?;
        let n = game.action_counts()[player];
        let pairs = regret_pairs(n);
        let scale = if game.cost_bound() > 0.0 {
            2.0 * game.cost_bound()
        } else {
            1.0
        };
        let others: Vec<usize> = (0..game.num_joint_actions())
            .filter(|&u| game.action_of(u, player) == 0)
            .collect();
        let d_count = game.num_disturbances();
        let mut payoffs = Vec::with_capacity(n * others.len() * d_count * pairs.len());
        for a in 0..n {
            for &base in &others {
                for d in 0..d_count {
                    let row = cost_row(game, player, base, d);
                    payoffs.extend(pairs.iter().map(
                        |&(pa, pb)| {
                            if pa == a {
                                (row[pa] - row[pb]) / scale
                            } else {
                                0.0
                            }
                        },
                    ));
                }
            }
        }
        Self::new(n, others.len(), d_count, pairs.len(), payoffs)
    }

    pub fn own_actions(&self) -> usize {
        self.own_actions
    }

    pub fn opponent_actions(&self) -> usize {
        self.opponent_actions
    }

    pub fn disturbances(&self) -> usize {
        self.disturbances
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn payoff(&self, a: usize, s: usize, d: usize) -> &[f64] {
        let start = ((a * self.opponent_actions + s) * self.disturbances + d) * self.dim;
        &self.payoffs[start..start + self.dim]
    }

    /// `E_q[l(a, s, d)]`.
    pub fn expected_payoff(&self, q: &MixedStrategy, s: usize, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (a, &p) in q.probs().iter().enumerate() {
            if p != 0.0 {
                out.iter_mut().zip(self.payoff(a, s, d)).for_each(|(o, v)| *o += p * v);
            }
        }
        out
    }

    /// `max over (s, d) of lambda . E_q[l(., s, d)]`.
    pub fn max_directional_payoff(&self, lambda: &[f64], q: &MixedStrategy) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for s in 0..self.opponent_actions {
            for d in 0..self.disturbances {
                let v: f64 = self
                    .expected_payoff(q, s, d)
                    .iter()
                    .zip(lambda)
                    .map(|(x, l)| x * l)
                    .sum();
                best = best.max(v);
            }
        }
        best
    }
}

/// Whether `q` enforces the half-space `{ lambda . y <= target_support }`
/// against every opponent action and disturbance.
pub fn blackwell_condition_check(
    game: &VectorPayoffGame,
    lambda: &[f64],
    q: &MixedStrategy,
    target_support: f64,
) -> Result<bool> {
    if lambda.len() != game.dim() {
        return Err(RceError::DimensionMismatch {
            expected: game.dim(),
            got: lambda.len(),
        });
    }
    if q.len() != game.own_actions() {
        return Err(RceError::DimensionMismatch {
            expected: game.own_actions(),
            got: q.len(),
        });
    }
    if target_support == f64::INFINITY {
        return Ok(true);
    }
    Ok(game.max_directional_payoff(lambda, q) <= target_support + 1e-12)
}

/// Strategy `q` balancing the regret flow of `regrets` (row-major `n x n`,
/// nonnegative, zero diagonal):
///
/// ```text
/// q(a) * sum_b R(a, b) = sum_b q(b) * R(b, a)   for every a.
/// ```
///
/// For such `q`, `sum_{a,b} q(a) R(a, b) (c(a) - c(b)) = 0` for every cost
/// vector `c`, so the regret direction is held with equality. `q` is a
/// stationary distribution of the regret-matching chain, restricted to a
/// closed communicating class.
pub fn blackwell_response(regrets: &[f64], n: usize) -> Result<MixedStrategy> {
    if regrets.len() != n * n {
        return Err(RceError::DimensionMismatch {
            expected: n * n,
            got: regrets.len(),
        });
    }
    if let Some((index, &value)) = regrets.iter().enumerate().find(|(_, &v)| v < 0.0 || !v.is_finite()) {
        return Err(RceError::NegativeRegret { index, value });
    }
    let rate = |a: usize, b: usize| if a == b { 0.0 } else { regrets[a * n + b] };

    // Reachability closure over positive-rate edges.
    let mut reach = vec![false; n * n];
    for a in 0..n {
        reach[a * n + a] = true;
        for b in 0..n {
            if rate(a, b) > 0.0 {
                reach[a * n + b] = true;
            }
        }
    }
    for k in 0..n {
        for a in 0..n {
            if reach[a * n + k] {
                for b in 0..n {
                    if reach[k * n + b] {
                        reach[a * n + b] = true;
                    }
                }
            }
        }
    }
    // A closed class: the states reachable from some state that can return to it from all of them.
    let root = (0..n)
        .find(|&a| (0..n).all(|b| !reach[a * n + b] || reach[b * n + a]))
        .ok_or_else(|| RceError::Numerical("no closed class in regret graph".into()))?;
    let class: Vec<usize> = (0..n).filter(|&b| reach[root * n + b]).collect();
    let m = class.len();
    let mut probs = vec![0.0; n];
    if m == 1 {
        probs[class[0]] = 1.0;
        return Ok(MixedStrategy::from_vec_unchecked(probs));
    }

    // Balance equations on the class with the last one replaced by sum(q) = 1.
    let mut mat = vec![vec![0.0; m + 1]; m];
    for (r, &a) in class.iter().enumerate().take(m - 1) {
        for (c, &b) in class.iter().enumerate() {
            mat[r][c] = if a == b {
                -class.iter().map(|&k| rate(a, k)).sum::<f64>()
            } else {
                rate(b, a)
            };
        }
    }
    mat[m - 1].iter_mut().take(m).for_each(|v| *v = 1.0);
    mat[m - 1][m] = 1.0;
    let sol = solve_dense(mat).ok_or_else(|| RceError::Numerical("singular balance system".into()))?;
    let total: f64 = sol.iter().map(|v| v.max(0.0)).sum();
    for (&a, v) in class.iter().zip(sol) {
        probs[a] = v.max(0.0) / total;
    }
    Ok(MixedStrategy::from_vec_unchecked(probs))
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut mat: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = mat.len();
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))?;
        if mat[pivot][col].abs() < 1e-300 {
            return None;
        }
        mat.swap(col, pivot);
        let line = mat[col].clone();
        for row in mat.iter_mut().skip(col + 1) {
            let f = row[col] / line[col];
            row.iter_mut().zip(&line).for_each(|(v, p)| *v -= f * p);
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| mat[r][c] * x[c]).sum();
        x[r] = (mat[r][m] - s) / mat[r][r];
    }
    Some(x)
}
