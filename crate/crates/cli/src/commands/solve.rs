//! `qreforge solve`: print the equilibrium of one game as JSON.

use crate::config::ExperimentConfig;
use crate::experiments::resolve_truth;
use crate::output::solution_json;
use crate::{CliError, progress};
use nalgebra::DVector;
use qreforge::game::GameFile;
use qreforge::learning::solve_built;
use qreforge::qre_sequence::solve_sequence;
use qreforge::{SolveError, SolverOptions};
use std::path::Path;

pub fn run(game: Option<&Path>, config: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    match (game, config) {
        (Some(path), _) => solve_game_file(path),
        (None, Some(path)) => solve_family(path, seed),
        (None, None) => Err(CliError::input("provide --game FILE or --config FILE")),
    }
}

fn solve_game_file(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    let game = GameFile::from_json(&text)
        .and_then(GameFile::into_game)
        .map_err(|e| CliError::input(e.to_string()))?;
    progress!(
        "solving {}x{} sequence-form game from {}",
        game.payoff.rows(),
        game.payoff.cols(),
        path.display()
    );
    match solve_sequence(&game, &SolverOptions::default()) {
        Ok(sol) => {
            println!(
                "{}",
                solution_json(
                    sol.u.values.as_slice(),
                    sol.v.values.as_slice(),
                    sol.residual,
                    sol.iterations
                )
            );
            Ok(())
        }
        Err(e) => report_solve_error(e),
    }
}

fn solve_family(path: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    let truth = resolve_truth(&cfg.family, &cfg.truth)?;
    let context = cfg.context.as_ref().map(|c| DVector::from_vec(c.clone()));
    if cfg.family.is_contextual() && context.is_none() {
        return Err(CliError::input(
            "contextual family: add a [context] section with `values = ...`",
        ));
    }
    let built = cfg
        .family
        .build(&truth.raw, context.as_ref())
        .map_err(|e| CliError::input(e.to_string()))?;
    match solve_built(&built, &cfg.solver.to_options()) {
        Ok(fwd) => {
            println!(
                "{}",
                solution_json(
                    fwd.u.values.as_slice(),
                    fwd.v.values.as_slice(),
                    fwd.residual,
                    fwd.iterations
                )
            );
            Ok(())
        }
        Err(e) => report_solve_error(e),
    }
}

fn report_solve_error(e: SolveError) -> Result<(), CliError> {
    if let SolveError::MaxItersExceeded {
        residual,
        iterations,
        ref u,
        ref v,
    } = e
    {
        // Still print the last iterate so callers can inspect it.
        println!("{}", solution_json(u, v, residual, iterations));
    }
    Err(CliError::numerical(e.to_string()))
}
