//! Robust correlated equilibria of games with perturbed costs, and
//! decentralized regret-matching learners that play them.

pub mod equilibrium;
pub mod error;
pub mod format;
pub mod game;
pub mod learner;
pub mod regret;
pub mod rng;
pub mod scenario;
pub mod simulator;

pub use equilibrium::{
    check_ce, check_rce, find_rce, helly_subset_check, DeviationInequality, EquilibriumReport, Feasibility,
    HellyReport, InfeasibilityCertificate,
};
pub use error::{RceError, Result};
pub use game::{
    expected_cost, irrigation_game, marginal, normalize_costs, CostModel, JointAction, JointDistribution,
    MixedStrategy, PerturbedGame,
};
pub use learner::{transition_row, LearnerConfig, LearnerPolicy};
pub use regret::{autonomous_run, ApproachabilityIterate, EmpiricalDistribution, RegretState};
pub use simulator::{convergence_report, run, ConvergenceReport, DisturbancePolicy, SimulationConfig, SimulationTrace};
