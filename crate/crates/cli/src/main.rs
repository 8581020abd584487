use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use rce_core::equilibrium::{
    check_ce, check_rce, find_rce, helly_subset_check, DeviationInequality, Feasibility, CHECK_TOL, DEFAULT_SUBSET_CAP,
    SOLVE_TOL,
};
use rce_core::format::{format_distribution, load_distribution, load_game};
use rce_core::scenario::{load_scenario, Scenario};
use rce_core::simulator::{convergence_report, run, ConvergenceReport};
use rce_core::{PerturbedGame, RceError};

const EXIT_OK: u8 = 0;
const EXIT_NOT_MEMBER: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rce",
    version,
    about = "Robust correlated equilibria of games with perturbed costs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a joint distribution against every disturbance of a game.
    Check {
        game: PathBuf,
        dist: PathBuf,
        #[arg(long, default_value_t = CHECK_TOL)]
        tol: f64,
    },
    /// Find a robust correlated equilibrium or prove none exists.
    Solve {
        game: PathBuf,
        /// Write the distribution here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = SOLVE_TOL)]
        tol: f64,
    },
    /// Simulate a scenario, writing one trace per seed and a summary.
    Run {
        scenario: PathBuf,
        /// Run this seed only, instead of the scenario's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the scenario's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rounds between equilibrium-violation samples.
        #[arg(long)]
        stride: Option<u64>,
        /// Convergence threshold used in the summary.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        /// Validate and print the resolved configuration without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Check that every subset of disturbances has a common correlated equilibrium.
    Helly {
        game: PathBuf,
        /// Disturbances per subset (default: number of joint actions).
        #[arg(long)]
        subset_size: Option<usize>,
        /// Refuse to enumerate more subsets than this.
        #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
        cap: u128,
        #[arg(long, default_value_t = SOLVE_TOL)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    // Die quietly when stdout is a closed pipe (`rce check ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    let outcome = match cli.command {
        Command::Check { game, dist, tol } => cmd_check(&game, &dist, tol),
        Command::Solve { game, out, tol } => cmd_solve(&game, out.as_deref(), tol),
        Command::Run {
            scenario,
            seed,
            out,
            stride,
            tol,
            dry_run,
        } => cmd_run(&scenario, seed, out, stride, tol, dry_run),
        Command::Helly {
            game,
            subset_size,
            cap,
            tol,
        } => cmd_helly(&game, subset_size, cap, tol),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<RceError>() {
        Some(RceError::Numerical(_)) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

fn describe(game: &PerturbedGame, w: &DeviationInequality) -> String {
    let names = &game.action_names()[w.player];
    format!(
        "player {}, {} -> {}, disturbance {} ({})",
        w.player + 1,
        names[w.recommended],
        names[w.deviation],
        w.disturbance + 1,
        game.disturbance_names()[w.disturbance]
    )
}

fn cmd_check(game_path: &Path, dist_path: &Path, tol: f64) -> Result<u8> {
    let game = load_game(game_path)?;
    let dist = load_distribution(dist_path, &game)?;
    for d in 0..game.num_disturbances() {
        let report = check_ce(&game, &dist, d, tol)?;
        let verdict = if report.is_member { "ok" } else { "violated" };
        match report.worst {
            Some(w) if !report.is_member => println!(
                "disturbance {} ({}): max violation {} at {} [{verdict}]",
                d + 1,
                game.disturbance_names()[d],
                report.max_violation,
                describe(&game, &w)
            ),
            _ => println!(
                "disturbance {} ({}): max violation {} [{verdict}]",
                d + 1,
                game.disturbance_names()[d],
                report.max_violation
            ),
        }
    }
    let report = check_rce(&game, &dist, tol)?;
    if report.is_member {
        println!("robust correlated equilibrium: yes (tol {tol})");
        Ok(EXIT_OK)
    } else {
        let worst = report.worst.expect("a violation has a witness");
        println!(
            "robust correlated equilibrium: no; worst inequality {} with violation {}",
            describe(&game, &worst),
            report.max_violation
        );
        Ok(EXIT_NOT_MEMBER)
    }
}

fn cmd_solve(game_path: &Path, out: Option<&Path>, tol: f64) -> Result<u8> {
    let game = load_game(game_path)?;
    match find_rce(&game, tol)? {
        Feasibility::Feasible(dist) => {
            let text = format_distribution(&dist, &game);
            match out {
                Some(path) => {
                    fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
                    eprintln!("feasible; distribution written to {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Feasibility::Infeasible(cert) => {
            println!(
                "infeasible: phase-one objective {}, certificate minimum {}",
                cert.phase_one_objective, cert.min_combined_coefficient
            );
            for (w, lambda) in &cert.multipliers {
                println!("  {lambda} x [{}]", describe(&game, w));
            }
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn cmd_helly(game_path: &Path, subset_size: Option<usize>, cap: u128, tol: f64) -> Result<u8> {
    let game = load_game(game_path)?;
    let report = helly_subset_check(&game, subset_size, cap, tol)?;
    println!(
        "checked {} subsets of size {} (out of {} disturbances)",
        report.subsets_checked,
        report.subset_size,
        game.num_disturbances()
    );
    match &report.first_failing_subset {
        None => {
            println!("every subset has a common correlated equilibrium");
            Ok(EXIT_OK)
        }
        Some(subset) => {
            let labels: Vec<String> = subset
                .iter()
                .map(|&d| format!("{} ({})", d + 1, game.disturbance_names()[d]))
                .collect();
            println!(
                "no common correlated equilibrium for disturbances {}",
                labels.join(", ")
            );
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn resolve_run(scenario_path: &Path, seed: Option<u64>, out: Option<PathBuf>, stride: Option<u64>) -> Result<Scenario> {
    let mut scenario = load_scenario(scenario_path)?;
    if let Some(seed) = seed {
        scenario.seeds = vec![seed];
    }
    if let Some(out) = out {
        scenario.output_dir = out;
    }
    if let Some(stride) = stride {
        scenario.simulation.metric_stride = stride;
    }
    scenario.simulation.validate(&scenario.game)?;
    Ok(scenario)
}

fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

fn cmd_run(
    scenario_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    stride: Option<u64>,
    tol: f64,
    dry_run: bool,
) -> Result<u8> {
    let scenario = resolve_run(scenario_path, seed, out, stride)?;
    if dry_run {
        println!("{}", serde_json::to_string_pretty(&scenario)?);
        return Ok(EXIT_OK);
    }
    let dir = &scenario.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let reports: Vec<ConvergenceReport> = scenario
        .seeds
        .par_iter()
        .map(|&seed| -> Result<ConvergenceReport> {
            let trace = run(&scenario.game, &scenario.simulation, seed)?;
            let path = dir.join(trace_file_name(seed));
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            trace.write_csv(&mut w)?;
            w.flush()?;
            Ok(convergence_report(&trace, tol)?)
        })
        .collect::<Result<_>>()?;

    let converged =
        |r: &ConvergenceReport| r.final_rce_violation <= tol && r.final_max_regret.iter().all(|&g| g <= tol);
    let violations: Vec<f64> = reports.iter().map(|r| r.final_rce_violation).collect();
    let summary = json!({
        "scenario": scenario_path.display().to_string(),
        "game": scenario.game_path.display().to_string(),
        "rounds": scenario.simulation.rounds,
        "tol": tol,
        "seeds": scenario.seeds,
        "converged_seeds": reports.iter().filter(|r| converged(r)).count(),
        "decreasing_regret_seeds": reports.iter().filter(|r| r.regret_trend_decreasing()).count(),
        "max_final_rce_violation": violations.iter().copied().fold(0.0, f64::max),
        "mean_final_rce_violation": violations.iter().sum::<f64>() / violations.len() as f64,
        "runs": reports,
    });
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;

    println!(
        "{:>8}  {:>14}  {:>14}  {:>10}",
        "seed", "max regret", "violation", "converged"
    );
    for r in &reports {
        let regret = r.final_max_regret.iter().copied().fold(0.0, f64::max);
        println!(
            "{:>8}  {:>14.6}  {:>14.6}  {:>10}",
            r.seed,
            regret,
            r.final_rce_violation,
            if converged(r) { "yes" } else { "no" }
        );
    }
    println!("traces and summary.json written to {}", dir.display());
    Ok(EXIT_OK)
}
