//! Scenario files: a game, learner settings, a disturbance policy and a list
//! of seeds, in TOML.
//!
//! ```toml
//! game = "irrigation.game"      # relative to the scenario file
//! rounds = 100000
//! seeds = [1, 2, 3]
//! metric_stride = 100           # optional, default 100
//! normalize = true              # optional, default true
//! output_dir = "runs/irrigation" # optional, relative to the working directory
//!
//! [learner]                     # shared by all players; or [[learners]], one per player
//! algorithm = "momentum"        # or "momentum-off"
//! inertia = 0.5                 # optional
//!
//! [disturbance]
//! kind = "iid"                  # fixed (index), iid (weights), periodic (sequence), adversarial
//!
//! [[resets]]
//! round = 50000
//! game = "shifted.game"         # optional cost tensor swap
//! ```
//!
//! Disturbance indices are 1-based.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{read_file, RceError, Result};
use crate::format::load_game;
use crate::game::PerturbedGame;
use crate::learner::LearnerConfig;
use crate::simulator::{DisturbancePolicy, ResetEvent, SimulationConfig, DEFAULT_METRIC_STRIDE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Regret matching on the momentum-augmented regrets.
    #[default]
    Momentum,
    /// Plain conditional regret matching.
    MomentumOff,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
}

impl From<LearnerSpec> for LearnerConfig {
    fn from(spec: LearnerSpec) -> Self {
        LearnerConfig {
            momentum: spec.algorithm == Algorithm::Momentum,
            inertia: spec.inertia,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetSpec {
    pub round: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<PathBuf>,
}

fn default_stride() -> u64 {
    DEFAULT_METRIC_STRIDE
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// A scenario file as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub game: PathBuf,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_stride")]
    pub metric_stride: u64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learners: Option<Vec<LearnerSpec>>,
    #[serde(default)]
    pub disturbance: DisturbancePolicy,
    #[serde(default)]
    pub resets: Vec<ResetSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// A validated scenario with its files loaded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub game_path: PathBuf,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub game: PerturbedGame,
    pub simulation: SimulationConfig,
}

pub fn parse_scenario_config(text: &str, origin: &str) -> Result<ScenarioConfig> {
    toml::from_str(text).map_err(|e| RceError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

/// Loads and validates a scenario. Game paths resolve against the scenario
/// file's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let config = parse_scenario_config(&read_file(path)?, &origin)?;
    resolve(config, path.parent().unwrap_or(Path::new("")), &origin)
}

pub fn resolve(config: ScenarioConfig, base_dir: &Path, origin: &str) -> Result<Scenario> {
    let bad = |msg: String| RceError::Parse {
        path: origin.to_string(),
        message: msg,
    };
    if config.seeds.is_empty() {
        return Err(bad("`seeds` must list at least one seed".into()));
    }
    if config.rounds == 0 {
        return Err(bad("`rounds` must be at least 1".into()));
    }
    let load = |p: &Path| {
        let full = base_dir.join(p);
        if !full.is_file() {
            return Err(bad(format!("game file {} does not exist", full.display())));
        }
        Ok((full.clone(), load_game(&full)?))
    };
    let (game_path, game) = load(&config.game)?;
    let learners: Vec<LearnerConfig> = match (&config.learner, &config.learners) {
        (Some(_), Some(_)) => return Err(bad("give either `learner` or `learners`, not both".into())),
        (_, Some(list)) => list.iter().map(|&s| s.into()).collect(),
        (shared, None) => vec![shared.unwrap_or_default().into(); game.num_players()],
    };
    let resets = config
        .resets
        .iter()
        .map(|r| {
            Ok(ResetEvent {
                round: r.round,
                game: r.game.as_deref().map(|p| load(p).map(|(_, g)| g)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let simulation = SimulationConfig {
        rounds: config.rounds,
        metric_stride: config.metric_stride,
        normalize: config.normalize,
        learners,
        disturbance: config.disturbance,
        resets,
    };
    simulation.validate(&game).map_err(|e| bad(e.to_string()))?;
    Ok(Scenario {
        game_path,
        seeds: config.seeds,
        output_dir: config.output_dir,
        game,
        simulation,
    })
}
