//! Repeated play of a perturbed game by independent learners.
//!
//! Round `t` runs in a fixed order:
//!
//! 1. scheduled resets fire (regrets, empirical counts and strategies are
//!    zeroed, optionally the cost tensor is swapped);
//! 2. every learner samples from the strategy it computed after round `t-1`;
//! 3. the disturbance is drawn;
//! 4. each learner is shown only its own action and its own cost row;
//! 5. metrics are logged.
//!
//! Learners see normalized costs by default; the trace logs raw costs.

use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{check_rce, deviation_lhs, CHECK_TOL};
use crate::error::{RceError, Result};
use crate::game::{normalize_costs, CostModel, JointDistribution, MixedStrategy, PerturbedGame};
use crate::learner::{LearnerConfig, LearnerPolicy};
use crate::regret::{cost_row, EmpiricalDistribution};
use crate::rng::{player_stream, stream, SimRng, DISTURBANCE_STREAM};

pub const DEFAULT_METRIC_STRIDE: u64 = 100;

/// How the disturbance of each round is chosen. Indices are 0-based here and
/// 1-based in serialized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DisturbanceSpec", into = "DisturbanceSpec")]
pub enum DisturbancePolicy {
    Fixed(usize),
    /// Independent draws; `None` means uniform.
    Iid(Option<Vec<f64>>),
    /// Cycles through the sequence, starting at round 1.
    Periodic(Vec<usize>),
    /// Picks the disturbance under which the current empirical play has the
    /// largest total positive conditional regret.
    Adversarial,
}

impl Default for DisturbancePolicy {
    fn default() -> Self {
        DisturbancePolicy::Iid(None)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DisturbanceSpec {
    Fixed {
        index: usize,
    },
    Iid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Periodic {
        sequence: Vec<usize>,
    },
    Adversarial,
}

fn from_one_based(index: usize) -> std::result::Result<usize, String> {
    index
        .checked_sub(1)
        .ok_or_else(|| "disturbance indices start at 1".to_string())
}

impl TryFrom<DisturbanceSpec> for DisturbancePolicy {
    type Error = String;

    fn try_from(spec: DisturbanceSpec) -> std::result::Result<Self, String> {
        Ok(match spec {
            DisturbanceSpec::Fixed { index } => DisturbancePolicy::Fixed(from_one_based(index)?),
            DisturbanceSpec::Iid { weights } => DisturbancePolicy::Iid(weights),
            DisturbanceSpec::Periodic { sequence } => DisturbancePolicy::Periodic(
                sequence
                    .into_iter()
                    .map(from_one_based)
                    .collect::<std::result::Result<_, _>>()?,
            ),
            DisturbanceSpec::Adversarial => DisturbancePolicy::Adversarial,
        })
    }
}

impl From<DisturbancePolicy> for DisturbanceSpec {
    fn from(policy: DisturbancePolicy) -> Self {
        match policy {
            DisturbancePolicy::Fixed(d) => DisturbanceSpec::Fixed { index: d + 1 },
            DisturbancePolicy::Iid(weights) => DisturbanceSpec::Iid { weights },
            DisturbancePolicy::Periodic(seq) => DisturbanceSpec::Periodic {
                sequence: seq.into_iter().map(|d| d + 1).collect(),
            },
            DisturbancePolicy::Adversarial => DisturbanceSpec::Adversarial,
        }
    }
}

impl DisturbancePolicy {
    pub fn validate(&self, num_disturbances: usize) -> Result<()> {
        let bad = |msg: String| Err(RceError::InvalidConfig(msg));
        match self {
            DisturbancePolicy::Fixed(d) if *d >= num_disturbances => bad(format!(
                "fixed disturbance {} out of range 1..={num_disturbances}",
                d + 1
            )),
            DisturbancePolicy::Iid(Some(w)) => {
                if w.len() != num_disturbances {
                    return bad(format!(
                        "{} disturbance weights for {num_disturbances} disturbances",
                        w.len()
                    ));
                }
                if w.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                    return bad("disturbance weights must be nonnegative and finite".into());
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > crate::game::RENORMALIZE_TOL {
                    return bad(format!("disturbance weights sum to {sum}, expected 1"));
                }
                Ok(())
            }
            DisturbancePolicy::Periodic(seq) if seq.is_empty() => bad("periodic sequence is empty".into()),
            DisturbancePolicy::Periodic(seq) => match seq.iter().find(|&&d| d >= num_disturbances) {
                Some(d) => bad(format!(
                    "periodic disturbance {} out of range 1..={num_disturbances}",
                    d + 1
                )),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// Disturbance maximizing `sum_i sum_{a != b} [LHS_i(a, b, d)]_+` under the
/// empirical distribution `emp`; ties go to the smallest index and an empty
/// history yields 0.
pub fn adversarial_disturbance(game: &PerturbedGame, emp: &EmpiricalDistribution) -> Result<usize> {
    if emp.counts().len() != game.num_joint_actions() {
        return Err(RceError::DimensionMismatch {
            expected: game.num_joint_actions(),
            got: emp.counts().len(),
        });
    }
    if emp.total() == 0 {
        return Ok(0);
    }
    let weights: Vec<f64> = (0..emp.counts().len()).map(|u| emp.frequency(u)).collect();
    let mut best = (0, f64::NEG_INFINITY);
    for d in 0..game.num_disturbances() {
        let mut score = 0.0;
        for (i, &n) in game.action_counts().iter().enumerate() {
            for a in 0..n {
                for b in (0..n).filter(|&b| b != a) {
                    score += deviation_lhs(game, &weights, i, a, b, d).max(0.0);
                }
            }
        }
        if score > best.1 {
            best = (d, score);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetEvent {
    /// Round before whose play the reset happens.
    pub round: u64,
    /// Cost tensor in force from this round on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<PerturbedGame>,
}

fn default_stride() -> u64 {
    DEFAULT_METRIC_STRIDE
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub rounds: u64,
    #[serde(default = "default_stride")]
    pub metric_stride: u64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    /// One entry per player.
    pub learners: Vec<LearnerConfig>,
    #[serde(default)]
    pub disturbance: DisturbancePolicy,
    #[serde(default)]
    pub resets: Vec<ResetEvent>,
}

impl SimulationConfig {
    /// Default learners, iid uniform disturbances, stride 100, normalized costs.
    pub fn new(num_players: usize, rounds: u64) -> Self {
        Self {
            rounds,
            metric_stride: DEFAULT_METRIC_STRIDE,
            normalize: true,
            learners: vec![LearnerConfig::default(); num_players],
            disturbance: DisturbancePolicy::default(),
            resets: Vec::new(),
        }
    }

    pub fn validate(&self, game: &PerturbedGame) -> Result<()> {
        let bad = |msg: String| Err(RceError::InvalidConfig(msg));
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.metric_stride == 0 {
            return bad("metric_stride must be at least 1".into());
        }
        if self.learners.len() != game.num_players() {
            return bad(format!(
                "{} learner settings for a {}-player game",
                self.learners.len(),
                game.num_players()
            ));
        }
        for l in &self.learners {
            l.validate()?;
        }
        self.disturbance.validate(game.num_disturbances())?;
        let mut last = 0;
        for r in &self.resets {
            if r.round <= last || r.round > self.rounds {
                return bad(format!(
                    "reset rounds must be strictly increasing within 1..={}, got {}",
                    self.rounds, r.round
                ));
            }
            last = r.round;
            if let Some(g) = &r.game {
                if g.action_counts() != game.action_counts() || g.num_disturbances() != game.num_disturbances() {
                    return bad(format!("replacement game at round {} has a different shape", r.round));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: u64,
    pub joint: usize,
    pub disturbance: usize,
    /// Raw cost to each player.
    pub costs: Vec<f64>,
    /// Largest matched regret of each player after the update.
    pub max_regret: Vec<f64>,
    /// Positive part of the largest deviation LHS of the empirical
    /// distribution, on sampled rounds only.
    pub rce_violation: Option<f64>,
    pub reset: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub game: PerturbedGame,
    pub config: SimulationConfig,
    pub rounds: Vec<RoundRecord>,
    /// Running average of each player's mixed strategy since the last reset.
    pub averaged_strategies: Vec<MixedStrategy>,
    /// Empirical joint distribution at the last round.
    pub final_empirical: JointDistribution,
}

enum Sampler {
    Fixed(usize),
    Iid(WeightedIndex<f64>),
    Periodic(Vec<usize>),
    Adversarial,
}

/// Stepwise simulation state.
pub struct Simulation {
    seed: u64,
    initial_game: PerturbedGame,
    game: PerturbedGame,
    feedback: PerturbedGame,
    config: SimulationConfig,
    learners: Vec<LearnerPolicy>,
    disturbance_rng: SimRng,
    sampler: Sampler,
    empirical: EmpiricalDistribution,
    empirical_by_disturbance: Vec<EmpiricalDistribution>,
    averages: Vec<Vec<f64>>,
    rounds_since_reset: u64,
    t: u64,
    next_reset: usize,
}

impl Simulation {
    pub fn new(game: &PerturbedGame, config: SimulationConfig, seed: u64) -> Result<Self> {
        config.validate(game)?;
        let learners = config
            .learners
            .iter()
            .enumerate()
            .map(|(i, &lc)| LearnerPolicy::new(i, game.action_counts()[i], lc, stream(seed, player_stream(i))))
            .collect::<Result<Vec<_>>>()?;
        let sampler = match &config.disturbance {
            DisturbancePolicy::Fixed(d) => Sampler::Fixed(*d),
            DisturbancePolicy::Iid(w) => {
                let weights = w.clone().unwrap_or_else(|| vec![1.0; game.num_disturbances()]);
                Sampler::Iid(WeightedIndex::new(weights).map_err(|e| RceError::InvalidConfig(e.to_string()))?)
            }
            DisturbancePolicy::Periodic(seq) => Sampler::Periodic(seq.clone()),
            DisturbancePolicy::Adversarial => Sampler::Adversarial,
        };
        let counts = game.action_counts();
        Ok(Self {
            seed,
            initial_game: game.clone(),
            feedback: Self::feedback_for(game, config.normalize),
            game: game.clone(),
            learners,
            disturbance_rng: stream(seed, DISTURBANCE_STREAM),
            sampler,
            empirical: EmpiricalDistribution::new(counts),
            empirical_by_disturbance: vec![EmpiricalDistribution::new(counts); game.num_disturbances()],
            averages: counts.iter().map(|&n| vec![0.0; n]).collect(),
            rounds_since_reset: 0,
            t: 0,
            next_reset: 0,
            config,
        })
    }

    fn feedback_for(game: &PerturbedGame, normalize: bool) -> PerturbedGame {
        if normalize {
            normalize_costs(game)
        } else {
            game.clone()
        }
    }

    /// Rounds played so far.
    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.rounds
    }

    pub fn learners(&self) -> &[LearnerPolicy] {
        &self.learners
    }

    /// Game whose costs the learners see (normalized unless disabled).
    pub fn feedback_game(&self) -> &PerturbedGame {
        &self.feedback
    }

    pub fn empirical(&self) -> &EmpiricalDistribution {
        &self.empirical
    }

    /// Joint-action counts split by realized disturbance since the last reset.
    pub fn empirical_by_disturbance(&self) -> &[EmpiricalDistribution] {
        &self.empirical_by_disturbance
    }

    pub fn step(&mut self) -> Result<RoundRecord> {
        self.advance(None)
    }

    /// Plays one round with learner feedback read from `model` instead of
    /// the simulation's own game. `model` must have the same shape.
    pub fn step_with_feedback(&mut self, model: &dyn CostModel) -> Result<RoundRecord> {
        if model.action_counts() != self.game.action_counts()
            || model.num_disturbances() != self.game.num_disturbances()
        {
            return Err(RceError::InvalidConfig(
                "feedback model shape differs from the game".into(),
            ));
        }
        self.advance(Some(model))
    }

    fn apply_reset(&mut self) -> bool {
        let Some(event) = self.config.resets.get(self.next_reset) else {
            return false;
        };
        if event.round != self.t + 1 {
            return false;
        }
        if let Some(g) = &event.game {
            self.game = g.clone();
            self.feedback = Self::feedback_for(g, self.config.normalize);
        }
        self.next_reset += 1;
        self.learners.iter_mut().for_each(LearnerPolicy::reset);
        self.empirical.reset();
        self.empirical_by_disturbance
            .iter_mut()
            .for_each(EmpiricalDistribution::reset);
        self.averages
            .iter_mut()
            .for_each(|v| v.iter_mut().for_each(|p| *p = 0.0));
        self.rounds_since_reset = 0;
        true
    }

    fn draw_disturbance(&mut self) -> Result<usize> {
        Ok(match &self.sampler {
            Sampler::Fixed(d) => *d,
            Sampler::Iid(w) => w.sample(&mut self.disturbance_rng),
            Sampler::Periodic(seq) => seq[((self.t - 1) % seq.len() as u64) as usize],
            Sampler::Adversarial => adversarial_disturbance(&self.feedback, &self.empirical)?,
        })
    }

    fn advance(&mut self, model: Option<&dyn CostModel>) -> Result<RoundRecord> {
        if self.is_finished() {
            return Err(RceError::InvalidConfig(format!(
                "simulation already ran {} rounds",
                self.t
            )));
        }
        let reset = self.apply_reset();
        self.t += 1;
        self.rounds_since_reset += 1;

        let n = self.rounds_since_reset as f64;
        for (avg, l) in self.averages.iter_mut().zip(&self.learners) {
            for (m, &p) in avg.iter_mut().zip(l.strategy().probs()) {
                *m += (p - *m) / n;
            }
        }
        let actions: Vec<usize> = self.learners.iter_mut().map(LearnerPolicy::act).collect();
        let joint = self.game.joint_index(&actions)?;
        let d = self.draw_disturbance()?;

        let model: &dyn CostModel = model.unwrap_or(&self.feedback);
        for (i, learner) in self.learners.iter_mut().enumerate() {
            learner.observe(actions[i], &cost_row(model, i, joint, d))?;
        }
        self.empirical.observe(joint);
        self.empirical_by_disturbance[d].observe(joint);

        let rce_violation = if self.t.is_multiple_of(self.config.metric_stride) || self.t == self.config.rounds {
            let x = self.current_empirical()?;
            Some(check_rce(&self.feedback, &x, CHECK_TOL)?.max_violation.max(0.0))
        } else {
            None
        };
        Ok(RoundRecord {
            t: self.t,
            joint,
            disturbance: d,
            costs: (0..self.game.num_players())
                .map(|i| self.game.cost(i, d, joint))
                .collect(),
            max_regret: self.learners.iter().map(|l| l.regrets().max_matched()).collect(),
            rce_violation,
            reset,
        })
    }

    fn current_empirical(&self) -> Result<JointDistribution> {
        self.empirical
            .as_distribution()
            .ok_or_else(|| RceError::Numerical("empirical distribution is empty".into()))
    }

    pub fn averaged_strategies(&self) -> Result<Vec<MixedStrategy>> {
        self.averages.iter().map(|v| MixedStrategy::new(v.clone())).collect()
    }

    /// Runs the remaining rounds and returns the full trace.
    pub fn run_to_end(mut self) -> Result<SimulationTrace> {
        let mut rounds = Vec::with_capacity((self.config.rounds - self.t) as usize);
        while !self.is_finished() {
            rounds.push(self.step()?);
        }
        Ok(SimulationTrace {
            seed: self.seed,
            averaged_strategies: self.averaged_strategies()?,
            final_empirical: self.current_empirical()?,
            game: self.initial_game,
            config: self.config,
            rounds,
        })
    }
}

pub fn run(game: &PerturbedGame, config: &SimulationConfig, seed: u64) -> Result<SimulationTrace> {
    Simulation::new(game, config.clone(), seed)?.run_to_end()
}

const TRACE_MAGIC: &str = "# rce simulation trace";

impl SimulationTrace {
    /// CSV with a `#` preamble echoing the seed, game and config, so the
    /// trace can be regenerated from its own header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_MAGIC}")?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# game: {}", json(&self.game))?;
        writeln!(w, "# config: {}", json(&self.config))?;
        let n = self.game.num_players();
        let mut header = vec!["t".to_string(), "joint_action".into(), "disturbance".into()];
        header.extend((1..=n).map(|i| format!("cost_p{i}")));
        header.extend((1..=n).map(|i| format!("max_regret_p{i}")));
        header.extend(["rce_violation".into(), "reset".into()]);
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rounds {
            write!(w, "{},{},{}", r.t, self.game.joint_label(r.joint), r.disturbance + 1)?;
            for c in r.costs.iter().chain(&r.max_regret) {
                write!(w, ",{c}")?;
            }
            match r.rce_violation {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
            writeln!(w, ",{}", u8::from(r.reset))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace is valid UTF-8")
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("trace metadata serializes")
}

/// Seed, game and config recovered from a trace preamble.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceHeader {
    pub seed: u64,
    pub game: PerturbedGame,
    pub config: SimulationConfig,
}

impl TraceHeader {
    pub fn parse(text: &str) -> Result<Self> {
        let err = |m: String| RceError::Parse {
            path: "trace".into(),
            message: m,
        };
        let mut lines = text.lines();
        if lines.next() != Some(TRACE_MAGIC) {
            return Err(err("missing trace preamble".into()));
        }
        let mut field = |name: &str| {
            let line = lines
                .next()
                .ok_or_else(|| err(format!("preamble ends before `{name}`")))?;
            line.strip_prefix(&format!("# {name}: "))
                .map(str::to_owned)
                .ok_or_else(|| err(format!("expected `# {name}:` line, found {line:?}")))
        };
        let seed = field("seed")?.parse().map_err(|e| err(format!("seed: {e}")))?;
        let game = serde_json::from_str(&field("game")?).map_err(|e| err(format!("game: {e}")))?;
        let config = serde_json::from_str(&field("config")?).map_err(|e| err(format!("config: {e}")))?;
        Ok(Self { seed, game, config })
    }

    pub fn rerun(&self) -> Result<SimulationTrace> {
        run(&self.game, &self.config, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub rounds: u64,
    pub tol: f64,
    pub final_max_regret: Vec<f64>,
    pub final_rce_violation: f64,
    /// Earliest sampled round where every regret and the violation are within `tol`.
    pub first_round_below: Option<u64>,
    /// Median over rounds `[1, max(1, T/10)]` of the largest player regret.
    pub early_median_regret: f64,
    /// Median over rounds `[ceil(T/2), T]` of the largest player regret.
    pub late_median_regret: f64,
    pub averaged_strategies: Vec<MixedStrategy>,
    pub final_empirical: JointDistribution,
}

impl ConvergenceReport {
    pub fn regret_trend_decreasing(&self) -> bool {
        self.late_median_regret < self.early_median_regret
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

pub fn convergence_report(trace: &SimulationTrace, tol: f64) -> Result<ConvergenceReport> {
    let last = trace
        .rounds
        .last()
        .ok_or_else(|| RceError::InvalidConfig("empty trace".into()))?;
    let t_end = last.t;
    let worst = |r: &RoundRecord| r.max_regret.iter().copied().fold(0.0, f64::max);
    let window = |lo: u64, hi: u64| {
        median(
            trace
                .rounds
                .iter()
                .filter(|r| (lo..=hi).contains(&r.t))
                .map(worst)
                .collect(),
        )
    };
    let first_round_below = trace
        .rounds
        .iter()
        .find(|r| r.rce_violation.is_some_and(|v| v <= tol) && r.max_regret.iter().all(|&g| g <= tol))
        .map(|r| r.t);
    Ok(ConvergenceReport {
        seed: trace.seed,
        rounds: t_end,
        tol,
        final_max_regret: last.max_regret.clone(),
        final_rce_violation: last.rce_violation.unwrap_or(f64::NAN),
        first_round_below,
        early_median_regret: window(1, (t_end / 10).max(1)),
        late_median_regret: window(t_end.div_ceil(2), t_end),
        averaged_strategies: trace.averaged_strategies.clone(),
        final_empirical: trace.final_empirical.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::irrigation_game;
    use std::cell::RefCell;

    fn config(rounds: u64) -> SimulationConfig {
        SimulationConfig::new(2, rounds)
    }

    #[test]
    fn single_round() {
        let g = irrigation_game();
        let trace = run(&g, &config(1), 5).unwrap();
        assert_eq!(trace.rounds.len(), 1);
        let r = &trace.rounds[0];
        assert!(r.rce_violation.is_some(), "last round is always sampled");
        let mut expected = vec![0.0; 4];
        expected[r.joint] = 1.0;
        assert_eq!(trace.final_empirical.probs(), expected.as_slice());
        assert_eq!(trace.averaged_strategies, vec![MixedStrategy::uniform(2); 2]);
    }

    #[test]
    fn same_seed_same_trace() {
        let g = irrigation_game();
        let a = run(&g, &config(2000), 11).unwrap();
        let b = run(&g, &config(2000), 11).unwrap();
        let c = run(&g, &config(2000), 12).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a.to_csv_string(), c.to_csv_string());
    }

    #[test]
    fn metric_stride_controls_sampling() {
        let g = irrigation_game();
        let mut cfg = config(250);
        let sampled: Vec<u64> = run(&g, &cfg, 1)
            .unwrap()
            .rounds
            .iter()
            .filter(|r| r.rce_violation.is_some())
            .map(|r| r.t)
            .collect();
        assert_eq!(sampled, vec![100, 200, 250]);
        cfg.metric_stride = 1;
        assert!(run(&g, &cfg, 1)
            .unwrap()
            .rounds
            .iter()
            .all(|r| r.rce_violation.is_some()));
    }

    fn dominant_game() -> PerturbedGame {
        PerturbedGame::new(vec![2], 1, vec![0.0, 1.0]).unwrap()
    }

    fn frequency_of_first(learner: LearnerConfig, rounds: u64, seed: u64) -> f64 {
        let mut cfg = SimulationConfig::new(1, rounds);
        cfg.learners = vec![learner];
        run(&dominant_game(), &cfg, seed).unwrap().final_empirical.probs()[0]
    }

    #[test]
    fn dominant_action_with_inertia() {
        let learner = LearnerConfig {
            momentum: true,
            inertia: Some(1.0),
        };
        for seed in 0..5 {
            let f = frequency_of_first(learner, 10_000, seed);
            assert!(f > 0.95, "seed {seed}: {f}");
        }
    }

    #[test]
    fn dominant_action_base_rule_settles_at_two_thirds() {
        // After the good action its only regret is clamped to zero, so the
        // next strategy is uniform; after the bad one the learner switches
        // back with probability one.
        for seed in 0..5 {
            let f = frequency_of_first(LearnerConfig::default(), 10_000, seed);
            assert!((f - 2.0 / 3.0).abs() < 0.02, "seed {seed}: {f}");
        }
    }

    #[test]
    fn constant_game_has_no_violation() {
        let g = PerturbedGame::from_fn(vec![2, 2], 2, |_, _, _| 3.0).unwrap();
        let mut cfg = config(50);
        cfg.metric_stride = 1;
        let trace = run(&g, &cfg, 0).unwrap();
        assert!(trace.rounds.iter().all(|r| r.rce_violation == Some(0.0)));
        let report = convergence_report(&trace, 1e-9).unwrap();
        assert_eq!(report.first_round_below, Some(1));
    }

    #[test]
    fn config_errors_are_reported_up_front() {
        let g = irrigation_game();
        let mut cfg = config(0);
        assert!(Simulation::new(&g, cfg.clone(), 0).is_err());
        cfg.rounds = 10;
        cfg.learners.pop();
        assert!(Simulation::new(&g, cfg.clone(), 0).is_err());
        cfg = config(10);
        cfg.disturbance = DisturbancePolicy::Iid(Some(vec![0.5, 0.6]));
        assert!(Simulation::new(&g, cfg.clone(), 0).is_err());
        cfg.disturbance = DisturbancePolicy::Fixed(2);
        assert!(Simulation::new(&g, cfg.clone(), 0).is_err());
        cfg.disturbance = DisturbancePolicy::Periodic(vec![]);
        assert!(Simulation::new(&g, cfg.clone(), 0).is_err());
        cfg = config(10);
        cfg.resets = vec![ResetEvent { round: 5, game: None }, ResetEvent { round: 5, game: None }];
        assert!(Simulation::new(&g, cfg.clone(), 0).is_err());
        cfg.resets = vec![ResetEvent { round: 11, game: None }];
        assert!(Simulation::new(&g, cfg, 0).is_err());
    }

    #[test]
    fn disturbance_policies() {
        let g = irrigation_game();
        let mut cfg = config(6);
        cfg.disturbance = DisturbancePolicy::Periodic(vec![1, 1, 0]);
        let ds: Vec<usize> = run(&g, &cfg, 0).unwrap().rounds.iter().map(|r| r.disturbance).collect();
        assert_eq!(ds, vec![1, 1, 0, 1, 1, 0]);
        cfg.disturbance = DisturbancePolicy::Fixed(1);
        assert!(run(&g, &cfg, 0).unwrap().rounds.iter().all(|r| r.disturbance == 1));
        cfg.disturbance = DisturbancePolicy::Iid(Some(vec![0.0, 1.0]));
        assert!(run(&g, &cfg, 0).unwrap().rounds.iter().all(|r| r.disturbance == 1));
    }

    #[test]
    fn disturbance_policy_serializes_one_based() {
        let json = serde_json::to_string(&DisturbancePolicy::Periodic(vec![0, 1])).unwrap();
        assert_eq!(json, r#"{"kind":"periodic","sequence":[1,2]}"#);
        let back: DisturbancePolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, DisturbancePolicy::Periodic(vec![0, 1]));
        assert!(serde_json::from_str::<DisturbancePolicy>(r#"{"kind":"fixed","index":0}"#).is_err());
    }

    #[test]
    fn adversary() {
        let g = normalize_costs(&irrigation_game());
        // One disturbance: always 0.
        let single = g.restrict_disturbances(&[0]).unwrap();
        let mut emp = EmpiricalDistribution::new(&[2, 2]);
        emp.observe(3);
        assert_eq!(adversarial_disturbance(&single, &emp).unwrap(), 0);

        // Play stuck at (C,C): both disturbances score alike, tie goes to 0.
        let mut stuck = EmpiricalDistribution::new(&[2, 2]);
        (0..10).for_each(|_| stuck.observe(0));
        assert_eq!(adversarial_disturbance(&g, &stuck).unwrap(), 0);

        // Equal mix of (C,C), (C,O), (O,C): drought widens player 1's C -> O gap.
        let mut mix = EmpiricalDistribution::new(&[2, 2]);
        [0, 1, 2].iter().for_each(|&u| mix.observe(u));
        assert_eq!(adversarial_disturbance(&g, &mix).unwrap(), 1);

        let dup = PerturbedGame::from_fn(vec![2, 2], 2, |i, _, u| (i + u) as f64).unwrap();
        assert_eq!(adversarial_disturbance(&dup, &mix).unwrap(), 0);

        let mut cfg = config(500);
        cfg.disturbance = DisturbancePolicy::Adversarial;
        let trace = run(&irrigation_game(), &cfg, 3).unwrap();
        assert!(convergence_report(&trace, 0.05).is_ok());
    }

    #[test]
    fn resets() {
        let g = irrigation_game();
        let plain = run(&g, &config(300), 9).unwrap();

        let mut cfg = config(300);
        cfg.resets = vec![ResetEvent { round: 1, game: None }];
        let at_one = run(&g, &cfg, 9).unwrap();
        assert!(at_one.rounds[0].reset);
        for (a, b) in plain.rounds.iter().zip(&at_one.rounds) {
            assert_eq!(
                (a.joint, a.disturbance, &a.max_regret),
                (b.joint, b.disturbance, &b.max_regret)
            );
        }

        let swapped = PerturbedGame::from_fn(vec![2, 2], 2, |i, d, u| ((i + d + u) % 3) as f64).unwrap();
        cfg.resets = vec![ResetEvent {
            round: 150,
            game: Some(swapped.clone()),
        }];
        let mut sim = Simulation::new(&g, cfg, 9).unwrap();
        while sim.round() < 149 {
            sim.step().unwrap();
        }
        assert!(sim.learners().iter().all(|l| l.regrets().rounds() == 149));
        let r = sim.step().unwrap();
        assert!(r.reset);
        assert_eq!(sim.empirical().total(), 1);
        assert!(sim.learners().iter().all(|l| l.regrets().rounds() == 1));
        assert_eq!(sim.feedback_game(), &normalize_costs(&swapped));
        assert_eq!(r.costs[0], swapped.cost(0, r.disturbance, r.joint));
        let trace = sim.run_to_end().unwrap();
        assert_eq!(
            trace.rounds.iter().filter(|r| r.reset).count(),
            0,
            "run_to_end only holds the remaining rounds"
        );
    }

    #[test]
    fn csv_layout_and_rerun() {
        let g = irrigation_game();
        let mut cfg = config(120);
        cfg.resets = vec![ResetEvent { round: 60, game: None }];
        let trace = run(&g, &cfg, 4).unwrap();
        let csv = trace.to_csv_string();
        let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
        assert_eq!(
            lines.next().unwrap(),
            "t,joint_action,disturbance,cost_p1,cost_p2,max_regret_p1,max_regret_p2,rce_violation,reset"
        );
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 120);
        assert!(rows.iter().all(|r| r.len() == 9));
        assert!(["C|C", "C|O", "O|C", "O|O"].contains(&rows[0][1]));
        assert!(["1", "2"].contains(&rows[0][2]));
        assert_eq!(rows[0][7], "");
        assert_ne!(rows[99][7], "");
        assert_eq!(rows[59][8], "1");
        assert_eq!(rows.iter().filter(|r| r[8] == "1").count(), 1);

        let header = TraceHeader::parse(&csv).unwrap();
        assert_eq!(header.seed, 4);
        assert_eq!(header.config, cfg);
        assert_eq!(header.game, g);
        assert_eq!(header.rerun().unwrap().to_csv_string(), csv);
        assert!(TraceHeader::parse("t,joint_action\n").is_err());
    }

    /// Records every cost lookup.
    struct AccessLog<'a> {
        inner: &'a PerturbedGame,
        log: RefCell<Vec<(usize, usize, usize)>>,
    }

    impl CostModel for AccessLog<'_> {
        fn action_counts(&self) -> &[usize] {
            self.inner.action_counts()
        }
        fn num_disturbances(&self) -> usize {
            self.inner.num_disturbances()
        }
        fn cost(&self, player: usize, disturbance: usize, joint: usize) -> f64 {
            self.log.borrow_mut().push((player, disturbance, joint));
            self.inner.cost(player, disturbance, joint)
        }
    }

    #[test]
    fn learners_only_read_their_own_cost_row() {
        let g = PerturbedGame::from_fn(vec![2, 3, 2], 3, |i, d, u| ((i * 7 + d * 3 + u) % 5) as f64).unwrap();
        let mut sim = Simulation::new(&g, SimulationConfig::new(3, 200), 21).unwrap();
        let feedback = sim.feedback_game().clone();
        for _ in 0..200 {
            let probe = AccessLog {
                inner: &feedback,
                log: RefCell::new(Vec::new()),
            };
            let r = sim.step_with_feedback(&probe).unwrap();
            let log = probe.log.into_inner();
            assert_eq!(log.len(), 2 + 3 + 2, "one lookup per own action");
            for &(i, d, u) in &log {
                assert_eq!(d, r.disturbance);
                // Only player i's coordinate may differ from the realized joint action.
                for j in (0..3).filter(|&j| j != i) {
                    assert_eq!(g.action_of(u, j), g.action_of(r.joint, j));
                }
            }
            for i in 0..3 {
                let own: Vec<usize> = log.iter().filter(|e| e.0 == i).map(|e| g.action_of(e.2, i)).collect();
                assert_eq!(own, (0..g.action_counts()[i]).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn reports() {
        let g = irrigation_game();
        let trace = run(&g, &config(1000), 2).unwrap();
        let report = convergence_report(&trace, 0.05).unwrap();
        assert_eq!(report.rounds, 1000);
        assert_eq!(report.final_max_regret, trace.rounds[999].max_regret);
        assert!(report.final_rce_violation >= 0.0);
        assert!(report.early_median_regret.is_finite() && report.late_median_regret.is_finite());
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("final_rce_violation").is_some());
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
