//! Finite N-player games whose costs are perturbed by a finite set of
//! disturbances, plus joint and marginal distributions over their actions.
//!
//! Joint actions are flattened row-major with player 0 as the slowest axis:
//! for two players with actions `{C, O}` the order is `(C,C), (C,O), (O,C), (O,O)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, RceError, Result};
use crate::format::GameSpec;

/// Absolute tolerance on the sum of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Sums off by more than [`SIMPLEX_TOL`] but at most this much are renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Read access to a perturbed cost tensor.
///
/// The simulator builds every learner's feedback through this trait so that
/// tests can audit exactly which entries a player's update touched.
pub trait CostModel {
    fn action_counts(&self) -> &[usize];
    fn num_disturbances(&self) -> usize;
    /// Cost to `player` under `disturbance` at the flattened joint action `joint`.
    fn cost(&self, player: usize, disturbance: usize, joint: usize) -> f64;

    fn num_players(&self) -> usize {
        self.action_counts().len()
    }

    fn num_joint_actions(&self) -> usize {
        self.action_counts().iter().product()
    }

    /// Stride of `player`'s action index in the flattened joint index.
    fn stride(&self, player: usize) -> usize {
        self.action_counts()[player + 1..].iter().product()
    }

    fn action_of(&self, joint: usize, player: usize) -> usize {
        (joint / self.stride(player)) % self.action_counts()[player]
    }

    /// Flattened index of `joint` with `player`'s action replaced by `action`.
    fn deviate(&self, joint: usize, player: usize, action: usize) -> usize {
        let stride = self.stride(player);
        let current = (joint / stride) % self.action_counts()[player];
        joint - current * stride + action * stride
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameSpec", into = "GameSpec")]
pub struct PerturbedGame {
    action_counts: Vec<usize>,
    num_disturbances: usize,
    num_joint: usize,
    // index: (player * D + disturbance) * |U| + joint
    costs: Vec<f64>,
    cost_bound: f64,
    action_names: Vec<Vec<String>>,
    disturbance_names: Vec<String>,
}

impl PerturbedGame {
    /// Builds a game from a dense tensor laid out as `[player][disturbance][joint]`.
    pub fn new(action_counts: Vec<usize>, num_disturbances: usize, costs: Vec<f64>) -> Result<Self> {
        if action_counts.is_empty() {
            return Err(RceError::InvalidGame("a game needs at least one player".into()));
        }
        if let Some(p) = action_counts.iter().position(|&n| n == 0) {
            return Err(RceError::InvalidGame(format!("player {} has no actions", p + 1)));
        }
        if num_disturbances == 0 {
            return Err(RceError::InvalidGame("a game needs at least one disturbance".into()));
        }
        let num_joint = action_counts
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| RceError::InvalidGame("joint action space overflows".into()))?;
        let expected = action_counts.len() * num_disturbances * num_joint;
        if costs.len() != expected {
            return Err(RceError::InvalidGame(format!(
                "cost tensor has {} entries, expected N*D*|U| = {expected}",
                costs.len()
            )));
        }
        if let Some(i) = costs.iter().position(|c| !c.is_finite()) {
            return Err(RceError::InvalidGame(format!("cost entry {i} is not finite")));
        }
        let cost_bound = costs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let action_names = action_counts
            .iter()
            .map(|&n| (1..=n).map(|a| a.to_string()).collect())
            .collect();
        let disturbance_names = (1..=num_disturbances).map(|d| d.to_string()).collect();
        Ok(Self {
            action_counts,
            num_disturbances,
            num_joint,
            costs,
            cost_bound,
            action_names,
            disturbance_names,
        })
    }

    /// Builds a game by evaluating `f(player, disturbance, joint)` over the whole tensor.
    pub fn from_fn(
        action_counts: Vec<usize>,
        num_disturbances: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let num_joint: usize = action_counts.iter().product();
        let mut costs = Vec::with_capacity(action_counts.len() * num_disturbances * num_joint);
        for i in 0..action_counts.len() {
            for d in 0..num_disturbances {
                for u in 0..num_joint {
                    costs.push(f(i, d, u));
                }
            }
        }
        Self::new(action_counts, num_disturbances, costs)
    }

    /// Attaches display names. Names may not contain `,`, `|` or whitespace
    /// because they appear verbatim in trace and distribution files.
    pub fn with_labels(mut self, action_names: Vec<Vec<String>>, disturbance_names: Vec<String>) -> Result<Self> {
        if action_names.len() != self.num_players()
            || action_names
                .iter()
                .zip(&self.action_counts)
                .any(|(names, &n)| names.len() != n)
        {
            return Err(RceError::InvalidGame("action names do not match action counts".into()));
        }
        if disturbance_names.len() != self.num_disturbances {
            return Err(RceError::InvalidGame("disturbance names do not match D".into()));
        }
        for name in action_names.iter().flatten().chain(&disturbance_names) {
            if name.is_empty() || name.chars().any(|c| c == ',' || c == '|' || c.is_whitespace()) {
                return Err(RceError::InvalidGame(format!("invalid label {name:?}")));
            }
        }
        self.action_names = action_names;
        self.disturbance_names = disturbance_names;
        Ok(self)
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn num_disturbances(&self) -> usize {
        self.num_disturbances
    }

    pub fn num_joint_actions(&self) -> usize {
        self.num_joint
    }

    /// Largest absolute cost entry.
    pub fn cost_bound(&self) -> f64 {
        self.cost_bound
    }

    pub fn action_names(&self) -> &[Vec<String>] {
        &self.action_names
    }

    pub fn disturbance_names(&self) -> &[String] {
        &self.disturbance_names
    }

    /// Raw tensor in `[player][disturbance][joint]` order.
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub(crate) fn offset(&self, player: usize, disturbance: usize) -> usize {
        (player * self.num_disturbances + disturbance) * self.num_joint
    }

    /// The slice `c^player_disturbance(u)` over all joint actions.
    pub fn cost_slice(&self, player: usize, disturbance: usize) -> &[f64] {
        let start = self.offset(player, disturbance);
        &self.costs[start..start + self.num_joint]
    }

    pub fn joint_index(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.num_players() {
            return Err(RceError::DimensionMismatch {
                expected: self.num_players(),
                got: actions.len(),
            });
        }
        let mut idx = 0;
        for (&a, &n) in actions.iter().zip(&self.action_counts) {
            check_index("action", a, n)?;
            idx = idx * n + a;
        }
        Ok(idx)
    }

    pub fn decode(&self, joint: usize) -> JointAction {
        let mut actions = vec![0; self.num_players()];
        let mut rest = joint;
        for (slot, &n) in actions.iter_mut().zip(&self.action_counts).rev() {
            *slot = rest % n;
            rest /= n;
        }
        JointAction(actions)
    }

    /// `a|b|...` rendering of a joint action using the action names.
    pub fn joint_label(&self, joint: usize) -> String {
        let actions = self.decode(joint);
        actions
            .0
            .iter()
            .zip(&self.action_names)
            .map(|(&a, names)| names[a].as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Same game with only the listed disturbances kept, in the given order.
    pub fn restrict_disturbances(&self, disturbances: &[usize]) -> Result<Self> {
        if disturbances.is_empty() {
            return Err(RceError::InvalidGame("empty disturbance subset".into()));
        }
        for &d in disturbances {
            check_index("disturbance", d, self.num_disturbances)?;
        }
        let game = Self::from_fn(self.action_counts.clone(), disturbances.len(), |i, k, u| {
            self.cost(i, disturbances[k], u)
        })?;
        let names = disturbances
            .iter()
            .map(|&d| self.disturbance_names[d].clone())
            .collect();
        game.with_labels(self.action_names.clone(), names)
    }

    pub(crate) fn check_player(&self, player: usize) -> Result<()> {
        check_index("player", player, self.num_players())
    }

    pub(crate) fn check_disturbance(&self, disturbance: usize) -> Result<()> {
        check_index("disturbance", disturbance, self.num_disturbances)
    }

    pub(crate) fn check_action(&self, player: usize, action: usize) -> Result<()> {
        check_index("action", action, self.action_counts[player])
    }

    pub(crate) fn check_shape(&self, dist: &JointDistribution) -> Result<()> {
        if dist.action_counts() != self.action_counts.as_slice() {
            return Err(RceError::InvalidDistribution(format!(
                "distribution shape {:?} does not match game shape {:?}",
                dist.action_counts(),
                self.action_counts
            )));
        }
        Ok(())
    }
}

impl CostModel for PerturbedGame {
    fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    fn num_disturbances(&self) -> usize {
        self.num_disturbances
    }

    #[inline]
    fn cost(&self, player: usize, disturbance: usize, joint: usize) -> f64 {
        self.costs[self.offset(player, disturbance) + joint]
    }

    fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    fn num_joint_actions(&self) -> usize {
        self.num_joint
    }
}

/// Per-player action indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn new(game: &PerturbedGame, actions: Vec<usize>) -> Result<Self> {
        game.joint_index(&actions)?;
        Ok(Self(actions))
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }
}

/// Checks nonnegativity and the unit sum, renormalizing small round-off.
fn validate_simplex(mut probs: Vec<f64>) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(RceError::InvalidDistribution("empty probability vector".into()));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(RceError::InvalidDistribution(format!(
                "entry {i} = {p} is not a probability"
            )));
        }
    }
    let sum: f64 = probs.iter().sum();
    let gap = (sum - 1.0).abs();
    if gap > RENORMALIZE_TOL {
        return Err(RceError::InvalidDistribution(format!("entries sum to {sum}, not 1")));
    }
    if gap > SIMPLEX_TOL {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(probs)
}

/// A probability vector over flattened joint actions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointDistribution {
    action_counts: Vec<usize>,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(action_counts: &[usize], probs: Vec<f64>) -> Result<Self> {
        let n: usize = action_counts.iter().product();
        if probs.len() != n {
            return Err(RceError::DimensionMismatch {
                expected: n,
                got: probs.len(),
            });
        }
        Ok(Self {
            action_counts: action_counts.to_vec(),
            probs: validate_simplex(probs)?,
        })
    }

    pub fn uniform(action_counts: &[usize]) -> Self {
        let n: usize = action_counts.iter().product();
        Self {
            action_counts: action_counts.to_vec(),
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(action_counts: &[usize], joint: usize) -> Result<Self> {
        let n: usize = action_counts.iter().product();
        check_index("joint action", joint, n)?;
        let mut probs = vec![0.0; n];
        probs[joint] = 1.0;
        Ok(Self {
            action_counts: action_counts.to_vec(),
            probs,
        })
    }

    /// `lambda * p + (1 - lambda) * q`.
    pub fn mix(lambda: f64, p: &Self, q: &Self) -> Result<Self> {
        if p.action_counts != q.action_counts {
            return Err(RceError::InvalidDistribution(
                "mixing distributions of different shapes".into(),
            ));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(RceError::InvalidDistribution(format!(
                "mixing weight {lambda} outside [0, 1]"
            )));
        }
        let probs = p
            .probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Self::new(&p.action_counts, probs)
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl std::ops::Index<usize> for JointDistribution {
    type Output = f64;

    fn index(&self, joint: usize) -> &f64 {
        &self.probs[joint]
    }
}

/// A probability vector over one player's actions.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_simplex(probs).map(Self)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, action: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[action] = 1.0;
        Self(probs)
    }

    /// Wraps a vector the caller already built as a probability vector.
    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for MixedStrategy {
    type Output = f64;

    fn index(&self, action: usize) -> &f64 {
        &self.0[action]
    }
}

/// Marginal of `dist` on `player`'s actions: `x^i(a) = sum over u^{-i} of dist(a, u^{-i})`.
pub fn marginal(dist: &JointDistribution, player: usize) -> Result<MixedStrategy> {
    let counts = dist.action_counts();
    check_index("player", player, counts.len())?;
    let n = counts[player];
    let stride: usize = counts[player + 1..].iter().product();
    let mut out = vec![0.0; n];
    for (u, &p) in dist.probs().iter().enumerate() {
        out[(u / stride) % n] += p;
    }
    Ok(MixedStrategy(out))
}

/// `E_dist[c^player_disturbance]`.
pub fn expected_cost(game: &PerturbedGame, dist: &JointDistribution, player: usize, disturbance: usize) -> Result<f64> {
    game.check_player(player)?;
    game.check_disturbance(disturbance)?;
    game.check_shape(dist)?;
    Ok(game
        .cost_slice(player, disturbance)
        .iter()
        .zip(dist.probs())
        .map(|(c, p)| c * p)
        .sum())
}

/// Divides every cost by the cost bound. An all-zero game is returned unchanged.
pub fn normalize_costs(game: &PerturbedGame) -> PerturbedGame {
    let bound = game.cost_bound;
    if bound == 0.0 {
        return game.clone();
    }
    let mut out = game.clone();
    out.costs.iter_mut().for_each(|c| *c /= bound);
    out.cost_bound = out.costs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    out
}

/// The two-farm irrigation game: players choose Closed (`C`) or Open (`O`),
/// disturbance 0 is normal weather and disturbance 1 is drought.
pub fn irrigation_game() -> PerturbedGame {
    // Row-major (C,C), (C,O), (O,C), (O,O).
    let costs = vec![
        1.0, 5.0, 0.0, 8.0, // player 1, normal
        1.0, 7.5, 0.0, 8.0, // player 1, drought
        1.0, 0.0, 5.0, 8.0, // player 2, normal
        1.0, 0.0, 7.5, 8.0, // player 2, drought
    ];
    let names = || vec!["C".to_string(), "O".to_string()];
    PerturbedGame::new(vec![2, 2], 2, costs)
        .and_then(|g| g.with_labels(vec![names(), names()], vec!["normal".into(), "drought".into()]))
        .expect("irrigation game is well formed")
}
