//! Perturbed conditional regret matching.
//!
//! After playing `a`, a learner moves to row `a` of its transition matrix:
//! with `mu = sum_{b != a} R(a, b)` over the matched regrets `R`,
//!
//! ```text
//! pi(a, b) = R(a, b) / mu        for b != a
//! pi(a, a) = 1 - sum_{b != a} pi(a, b)
//! pi(a, .) = uniform             if mu = 0
//! ```
//!
//! Whenever `mu > 0` the diagonal is exactly zero. The optional inertia `kappa`
//! (not part of the base procedure, off by default) divides by
//! `max(mu, kappa)` instead, which leaves mass on the diagonal; with inertia
//! a row of zero regrets repeats the last action rather than going uniform.
//!
//! A learner only ever sees its own action and the costs its own actions
//! would have incurred in the realized round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, RceError, Result};
use crate::game::MixedStrategy;
use crate::regret::RegretState;
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Match on the momentum-augmented modified regrets (default) or, when
    /// off, on the plain conditional regrets.
    pub momentum: bool,
    pub inertia: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            momentum: true,
            inertia: None,
        }
    }
}

impl LearnerConfig {
    pub fn momentum_off() -> Self {
        Self {
            momentum: false,
            inertia: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.inertia {
            Some(k) if !(k.is_finite() && k > 0.0) => Err(RceError::InvalidConfig(format!(
                "inertia must be positive and finite, got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Row `action` of the regret-matching transition matrix.
///
/// `regret_row` has one entry per own action; the entry at `action` is ignored.
pub fn transition_row(regret_row: &[f64], action: usize, inertia: Option<f64>) -> Result<MixedStrategy> {
    let n = regret_row.len();
    check_index("action", action, n)?;
    for (b, &r) in regret_row.iter().enumerate() {
        if b != action && !(r >= 0.0 && r.is_finite()) {
            return Err(RceError::NegativeRegret { index: b, value: r });
        }
    }
    let off = |b: usize| if b == action { 0.0 } else { regret_row[b] };
    let mut mu: f64 = (0..n).map(off).sum();
    if mu == 0.0 {
        return Ok(match inertia {
            None => MixedStrategy::uniform(n),
            Some(_) => MixedStrategy::point_mass(n, action),
        });
    }
    // Rescale only when the plain sum overflows, so ordinary inputs follow
    // the textbook arithmetic exactly.
    let mut scale = 1.0;
    if !mu.is_finite() {
        scale = (0..n).map(off).fold(0.0, f64::max);
        mu = (0..n).map(|b| off(b) / scale).sum();
    }
    let denom = inertia.map_or(mu, |k| mu.max(k / scale));
    let mut row: Vec<f64> = (0..n).map(|b| off(b) / scale / denom).collect();
    row[action] = if denom == mu {
        0.0
    } else {
        (1.0 - row.iter().sum::<f64>()).max(0.0)
    };
    Ok(MixedStrategy::from_vec_unchecked(row))
}

/// Draws an action from `strategy` with one uniform variate.
pub fn sample_action<R: Rng + ?Sized>(strategy: &MixedStrategy, rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in strategy.probs().iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if x < acc {
                return a;
            }
        }
    }
    last
}

/// One player's decentralized learner.
#[derive(Clone, Debug)]
pub struct LearnerPolicy {
    player: usize,
    config: LearnerConfig,
    regrets: RegretState,
    strategy: MixedStrategy,
    last_action: Option<usize>,
    rng: SimRng,
}

impl LearnerPolicy {
    pub fn new(player: usize, num_actions: usize, config: LearnerConfig, rng: SimRng) -> Result<Self> {
        if num_actions == 0 {
            return Err(RceError::InvalidConfig("a learner needs at least one action".into()));
        }
        config.validate()?;
        Ok(Self {
            player,
            config,
            regrets: RegretState::new(num_actions, config.momentum),
            strategy: MixedStrategy::uniform(num_actions),
            last_action: None,
            rng,
        })
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        self.regrets.num_actions()
    }

    /// Strategy for the upcoming round.
    pub fn strategy(&self) -> &MixedStrategy {
        &self.strategy
    }

    pub fn regrets(&self) -> &RegretState {
        &self.regrets
    }

    pub fn last_action(&self) -> Option<usize> {
        self.last_action
    }

    /// Samples this round's action from the current strategy.
    pub fn act(&mut self) -> usize {
        sample_action(&self.strategy, &mut self.rng)
    }

    /// Records the round's own action and the cost of every own action
    /// against the realized opponents and disturbance, then moves to the
    /// next strategy.
    pub fn observe(&mut self, action: usize, cost_row: &[f64]) -> Result<()> {
        self.regrets.update(action, cost_row)?;
        self.last_action = Some(action);
        self.strategy = self.next_strategy()?;
        Ok(())
    }

    /// Row of the transition matrix for the last action, or uniform before
    /// the first round.
    pub fn next_strategy(&self) -> Result<MixedStrategy> {
        match self.last_action {
            None => Ok(MixedStrategy::uniform(self.num_actions())),
            Some(a) => transition_row(&self.regrets.matched_row(a), a, self.config.inertia),
        }
    }

    pub fn transition_matrix(&self) -> Result<Vec<MixedStrategy>> {
        (0..self.num_actions())
            .map(|a| transition_row(&self.regrets.matched_row(a), a, self.config.inertia))
            .collect()
    }

    /// Forgets all regrets and returns to the uniform strategy. The random
    /// stream continues where it was.
    pub fn reset(&mut self) {
        self.regrets.reset();
        self.last_action = None;
        self.strategy = MixedStrategy::uniform(self.num_actions());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn transition_rows() {
        let row = transition_row(&[0.0, 0.3], 0, None).unwrap();
        assert_eq!(row.probs(), &[0.0, 1.0]);

        let row = transition_row(&[0.0, 0.0, 0.0], 1, None).unwrap();
        assert_eq!(row.probs(), &[1.0 / 3.0; 3]);

        let row = transition_row(&[0.0, 0.2, 0.6], 0, None).unwrap();
        assert!((row[1] - 0.25).abs() < 1e-15 && (row[2] - 0.75).abs() < 1e-15);
        assert_eq!(row[0], 0.0);

        // Diagonal input is ignored.
        let row = transition_row(&[9.0, 0.3], 0, None).unwrap();
        assert_eq!(row.probs(), &[0.0, 1.0]);

        assert!(matches!(
            transition_row(&[0.0, -0.1], 0, None),
            Err(RceError::NegativeRegret { index: 1, .. })
        ));
    }

    #[test]
    fn inertia_keeps_diagonal_mass() {
        let row = transition_row(&[0.0, 0.25], 0, Some(1.0)).unwrap();
        assert_eq!(row.probs(), &[0.75, 0.25]);
        // Large regrets exceed kappa: back to the base rule.
        let row = transition_row(&[0.0, 3.0], 0, Some(1.0)).unwrap();
        assert_eq!(row.probs(), &[0.0, 1.0]);
        let row = transition_row(&[0.0, 0.0, 0.0], 2, Some(1.0)).unwrap();
        assert_eq!(row.probs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn huge_regrets_stay_stochastic() {
        let row = transition_row(&[f64::MAX, 0.0, f64::MAX], 1, None).unwrap();
        assert!((row[0] - 0.5).abs() < 1e-15 && (row[2] - 0.5).abs() < 1e-15);
        assert_eq!(row[1], 0.0);
    }

    #[test]
    fn next_strategy_follows_last_action() {
        let mut l = LearnerPolicy::new(0, 2, LearnerConfig::default(), stream(1, 1)).unwrap();
        assert_eq!(l.next_strategy().unwrap(), MixedStrategy::uniform(2));
        // Played C (0) while O would have cost less: regret C -> O.
        l.observe(0, &[1.0, 0.0]).unwrap();
        assert_eq!(l.strategy().probs(), &[0.0, 1.0]);
        // Played O, which was the better action: mu = 0 on row O, uniform.
        l.observe(1, &[1.0, 0.0]).unwrap();
        assert_eq!(l.strategy(), &MixedStrategy::uniform(2));

        l.reset();
        assert_eq!(l.strategy(), &MixedStrategy::uniform(2));
        assert_eq!(l.regrets().rounds(), 0);
    }

    #[test]
    fn sampling() {
        let mut rng = stream(3, 0);
        let pm = MixedStrategy::point_mass(3, 2);
        assert!((0..100).all(|_| sample_action(&pm, &mut rng) == 2));

        let draws = 10_000;
        let uniform = MixedStrategy::uniform(2);
        let zeros = (0..draws).filter(|_| sample_action(&uniform, &mut rng) == 0).count() as f64;
        // 3 sigma of Binomial(10^4, 1/2) is 150.
        assert!((zeros - 5000.0).abs() <= 150.0, "{zeros}");

        let skewed = MixedStrategy::new(vec![0.9, 0.1]).unwrap();
        let zeros = (0..draws).filter(|_| sample_action(&skewed, &mut rng) == 0).count() as f64;
        assert!((8800.0..=9200.0).contains(&zeros), "{zeros}");
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig {
            momentum: true,
            inertia: Some(-1.0)
        }
        .validate()
        .is_err());
        assert!(LearnerConfig::momentum_off().validate().is_ok());
    }
}
