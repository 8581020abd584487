//! On-disk formats.
//!
//! # Game files
//!
//! TOML with four keys:
//!
//! ```toml
//! players = 2
//! actions = [["C", "O"], ["C", "O"]]       # action names per player
//! disturbances = ["normal", "drought"]     # one name per disturbance, d = 1..D
//! # costs[player][disturbance][joint action], joint actions row-major
//! # with player 1 slowest: (C,C), (C,O), (O,C), (O,O)
//! costs = [
//!   [[1, 5, 0, 8], [1, 7.5, 0, 8]],
//!   [[1, 0, 5, 8], [1, 0, 7.5, 8]],
//! ]
//! ```
//!
//! # Distribution files
//!
//! Plain text: one probability per joint action in the same row-major order,
//! separated by whitespace, commas or newlines. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RceError, Result};
use crate::game::{JointDistribution, PerturbedGame};

/// Serialized form of a [`PerturbedGame`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub players: usize,
    pub actions: Vec<Vec<String>>,
    pub disturbances: Vec<String>,
    pub costs: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<GameSpec> for PerturbedGame {
    type Error = RceError;

    fn try_from(spec: GameSpec) -> Result<Self> {
        if spec.actions.len() != spec.players {
            return Err(RceError::InvalidGame(format!(
                "`players` is {} but `actions` lists {} players",
                spec.players,
                spec.actions.len()
            )));
        }
        if spec.costs.len() != spec.players {
            return Err(RceError::InvalidGame(format!(
                "`costs` has {} player blocks, expected {}",
                spec.costs.len(),
                spec.players
            )));
        }
        let counts: Vec<usize> = spec.actions.iter().map(Vec::len).collect();
        let num_joint: usize = counts.iter().product();
        let num_d = spec.disturbances.len();
        let mut flat = Vec::with_capacity(spec.players * num_d * num_joint);
        for (i, block) in spec.costs.iter().enumerate() {
            if block.len() != num_d {
                return Err(RceError::InvalidGame(format!(
                    "costs[{i}] has {} disturbance rows, expected {num_d}",
                    block.len()
                )));
            }
            for (d, row) in block.iter().enumerate() {
                if row.len() != num_joint {
                    return Err(RceError::InvalidGame(format!(
                        "costs[{i}][{d}] has {} entries, expected |U| = {num_joint}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        PerturbedGame::new(counts, num_d, flat)?.with_labels(spec.actions, spec.disturbances)
    }
}

impl From<PerturbedGame> for GameSpec {
    fn from(game: PerturbedGame) -> Self {
        let costs = (0..game.num_players())
            .map(|i| {
                (0..game.num_disturbances())
                    .map(|d| game.cost_slice(i, d).to_vec())
                    .collect()
            })
            .collect();
        GameSpec {
            players: game.num_players(),
            actions: game.action_names().to_vec(),
            disturbances: game.disturbance_names().to_vec(),
            costs,
        }
    }
}

pub fn parse_game(text: &str, origin: &str) -> Result<PerturbedGame> {
    let spec: GameSpec = toml::from_str(text).map_err(|e| RceError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    PerturbedGame::try_from(spec).map_err(|e| RceError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

pub fn load_game(path: impl AsRef<Path>) -> Result<PerturbedGame> {
    let path = path.as_ref();
    let text = crate::error::read_file(path)?;
    parse_game(&text, &path.display().to_string())
}

pub fn game_to_toml(game: &PerturbedGame) -> String {
    let spec = GameSpec::from(game.clone());
    let mut out = String::new();
    let quoted = |names: &[String]| names.iter().map(|n| format!("{n:?}")).collect::<Vec<_>>().join(", ");
    let _ = writeln!(out, "players = {}", spec.players);
    let actions: Vec<String> = spec.actions.iter().map(|a| format!("[{}]", quoted(a))).collect();
    let _ = writeln!(out, "actions = [{}]", actions.join(", "));
    let _ = writeln!(out, "disturbances = [{}]", quoted(&spec.disturbances));
    let _ = writeln!(out, "costs = [");
    for block in &spec.costs {
        let rows: Vec<String> = block
            .iter()
            .map(|row| {
                format!(
                    "[{}]",
                    row.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(", ")
                )
            })
            .collect();
        let _ = writeln!(out, "  [{}],", rows.join(", "));
    }
    let _ = writeln!(out, "]");
    out
}

/// Parses a distribution file for `game`, reporting the offending line on error.
pub fn parse_distribution(text: &str, game: &PerturbedGame, origin: &str) -> Result<JointDistribution> {
    let parse_err = |line: usize, message: String| RceError::Parse {
        path: format!("{origin}:{line}"),
        message,
    };
    let mut probs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for token in content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let p: f64 = token
                .parse()
                .map_err(|_| parse_err(lineno + 1, format!("`{token}` is not a number")))?;
            probs.push(p);
        }
    }
    let last = text.lines().count().max(1);
    JointDistribution::new(game.action_counts(), probs).map_err(|e| parse_err(last, e.to_string()))
}

pub fn load_distribution(path: impl AsRef<Path>, game: &PerturbedGame) -> Result<JointDistribution> {
    let path = path.as_ref();
    let text = crate::error::read_file(path)?;
    parse_distribution(&text, game, &path.display().to_string())
}

/// One probability per line, annotated with its joint action.
pub fn format_distribution(dist: &JointDistribution, game: &PerturbedGame) -> String {
    let mut out = String::from("# joint-action probabilities, row-major\n");
    for (u, p) in dist.probs().iter().enumerate() {
        let _ = writeln!(out, "{p:?}  # {}", game.joint_label(u));
    }
    out
}
