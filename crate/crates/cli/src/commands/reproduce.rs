//! `qreforge reproduce`: run a whole experiment grid (dataset sizes times
//! training seeds), then summarize recovery error per size with mean and
//! standard error.
//!
//! Desk-scale epoch counts keep a full grid in the minutes range; `--full`
//! restores publication-scale training lengths. Grids derive everything
//! from the experiment name and the master seed. Cells run independently,
//! so `--jobs` parallelizes them; per-cell outputs land in `cells/` and
//! are merged at the end.

use crate::CliError;
use crate::experiments::{mix_seed, test_context_set};
use crate::output::ensure_dir;
use crate::progress;
use nalgebra::DVector;
use qreforge::SolverOptions;
use qreforge::families::FamilySpec;
use qreforge::learning::{
    ObservationMask, OptimizerConfig, TrainOptions, TrainingData, Truth, generate_dataset, train,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Mutex};

struct Grid {
    label: String,
    spec: FamilySpec,
    mask: ObservationMask,
    sizes: Vec<usize>,
    runs: u64,
    optimizer: OptimizerConfig,
    summary_file: String,
}

fn grids(experiment: &str, full: bool) -> Result<Vec<Grid>, CliError> {
    let sizes = vec![200usize, 2000, 5000];
    let opt = |lr: f64, desk: usize, paper: usize| OptimizerConfig {
        learning_rate: lr,
        epochs: if full { paper } else { desk },
        ..Default::default()
    };
    match experiment {
        "rps" => Ok(vec![Grid {
            label: "rps".into(),
            spec: FamilySpec::Rps { context_dim: 2 },
            mask: ObservationMask::Both,
            sizes,
            runs: 5,
            optimizer: opt(0.0005, 120, 2000),
            summary_file: "summary.csv".into(),
        }]),
        "poker" => Ok(vec![Grid {
            label: "poker".into(),
            spec: FamilySpec::Poker { cards: 4 },
            mask: ObservationMask::Both,
            sizes,
            runs: 5,
            optimizer: opt(0.002, 300, 2500),
            summary_file: "summary.csv".into(),
        }]),
        "security" => Ok([1u8, 2]
            .into_iter()
            .map(|stages| Grid {
                label: format!("security_t{stages}"),
                spec: FamilySpec::Security {
                    targets: 2,
                    resources: 5,
                    stages,
                },
                mask: ObservationMask::Col,
                sizes: sizes.clone(),
                runs: 10,
                optimizer: opt(0.002, 250, 2000),
                summary_file: format!("summary_t{stages}.csv"),
            })
            .collect()),
        other => Err(CliError::input(format!(
            "unknown experiment `{other}` (expected rps, poker, or security)"
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
struct CellResult {
    label: String,
    size: usize,
    run: u64,
    param_mse: f64,
    strategy_mse: f64,
}

struct CellJob {
    grid_index: usize,
    size_index: usize,
    size: usize,
    run: u64,
}

struct GridContext {
    spec: FamilySpec,
    mask: ObservationMask,
    truth_raw: DVector<f64>,
    test_contexts: Vec<DVector<f64>>,
    optimizer: OptimizerConfig,
    label: String,
    master: u64,
}

pub fn run(
    experiment: &str,
    out: &Path,
    seed: Option<u64>,
    full: bool,
    jobs: usize,
) -> Result<(), CliError> {
    let master = seed.unwrap_or(0);
    let grid_list = grids(experiment, full)?;
    ensure_dir(out)?;
    let cells_dir = out.join("cells");
    ensure_dir(&cells_dir)?;

    // One ground truth per grid, drawn from the master seed; runs differ
    // only in their training sets, mirroring the experimental protocol.
    let contexts: Vec<Arc<GridContext>> = grid_list
        .iter()
        .enumerate()
        .map(|(gi, grid)| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(master, gi as u64));
            let truth_raw = grid.spec.draw_truth(&mut rng);
            Arc::new(GridContext {
                spec: grid.spec.clone(),
                mask: grid.mask,
                truth_raw,
                test_contexts: test_context_set(&grid.spec, 2000, mix_seed(master, 555)),
                optimizer: grid.optimizer.clone(),
                label: grid.label.clone(),
                master,
            })
        })
        .collect();

    let mut queue = VecDeque::new();
    for (gi, grid) in grid_list.iter().enumerate() {
        for (si, &size) in grid.sizes.iter().enumerate() {
            for run in 0..grid.runs {
                queue.push_back(CellJob {
                    grid_index: gi,
                    size_index: si,
                    size,
                    run,
                });
            }
        }
    }
    let total = queue.len();
    let queue = Arc::new(Mutex::new(queue));
    let results: Arc<Mutex<Vec<Result<CellResult, String>>>> = Arc::new(Mutex::new(Vec::new()));

    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1) {
            let queue = Arc::clone(&queue);
            let results = Arc::clone(&results);
            let contexts = &contexts;
            let cells_dir = &cells_dir;
            scope.spawn(move || {
                loop {
                    let job = { queue.lock().unwrap().pop_front() };
                    let Some(job) = job else { break };
                    let ctx = &contexts[job.grid_index];
                    let outcome = run_cell(ctx, &job, cells_dir);
                    if let Err(e) = &outcome {
                        progress!(
                            "cell {} size {} run {} failed: {e}",
                            ctx.label,
                            job.size,
                            job.run
                        );
                    }
                    results.lock().unwrap().push(outcome);
                }
            });
        }
    });

    let mut results = Arc::try_unwrap(results)
        .expect("workers joined")
        .into_inner()
        .unwrap();
    results.sort_by(|a, b| {
        let key = |r: &Result<CellResult, String>| match r {
            Ok(c) => (c.label.clone(), c.size, c.run),
            Err(e) => (e.clone(), 0, 0),
        };
        key(a).cmp(&key(b))
    });
    let failures: Vec<String> = results
        .iter()
        .filter_map(|r| r.as_ref().err().cloned())
        .collect();
    let ok: Vec<CellResult> = results.into_iter().filter_map(Result::ok).collect();

    for grid in &grid_list {
        write_summary(&out.join(&grid.summary_file), grid, &ok)?;
    }

    progress!("{} of {total} cells completed", ok.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "{} of {total} cells failed; first failure: {}",
            failures.len(),
            failures[0]
        )))
    }
}

fn run_cell(ctx: &GridContext, job: &CellJob, cells_dir: &Path) -> Result<CellResult, String> {
    let solver = SolverOptions::default();
    let data_seed = mix_seed(ctx.master, 10_000 + job.size_index as u64 * 100 + job.run);
    let mut rng = ChaCha12Rng::seed_from_u64(data_seed);
    let records = generate_dataset(
        &ctx.spec,
        &ctx.truth_raw,
        job.size,
        ctx.mask,
        &solver,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;

    let truth = Truth {
        raw_params: ctx.truth_raw.clone(),
        test_contexts: ctx.test_contexts.clone(),
        mask: ctx.mask,
    };
    let options = TrainOptions {
        optimizer: ctx.optimizer.clone(),
        solver,
        seed: mix_seed(ctx.master, 20_000 + job.size_index as u64 * 100 + job.run),
        eval_every: ctx.optimizer.epochs.max(1),
    };
    let outcome = train(
        &ctx.spec,
        &DVector::zeros(ctx.spec.param_dim()),
        &TrainingData::Records(records),
        Some(&truth),
        &options,
    )
    .map_err(|e| e.to_string())?;
    let last = outcome.metrics.last().ok_or("no metrics produced")?;

    let cell = CellResult {
        label: ctx.label.clone(),
        size: job.size,
        run: job.run,
        param_mse: last.param_mse,
        strategy_mse: last.strategy_mse,
    };
    let path = cells_dir.join(format!("{}_s{}_r{}.json", ctx.label, job.size, job.run));
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&cell).map_err(|e| e.to_string())? + "\n",
    )
    .map_err(|e| e.to_string())?;
    progress!(
        "cell {} size {} run {}: param_mse {:.3e}, strategy_mse {:.3e}",
        cell.label,
        cell.size,
        cell.run,
        cell.param_mse,
        cell.strategy_mse
    );
    Ok(cell)
}

fn write_summary(path: &Path, grid: &Grid, cells: &[CellResult]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))?;
    writer
        .write_record([
            "size",
            "param_mse_mean",
            "param_mse_se",
            "strategy_mse_mean",
            "strategy_mse_se",
        ])
        .map_err(|e| CliError::input(format!("csv: {e}")))?;
    for &size in &grid.sizes {
        let cell: Vec<&CellResult> = cells
            .iter()
            .filter(|c| c.label == grid.label && c.size == size)
            .collect();
        if cell.is_empty() {
            continue;
        }
        let stats = |f: fn(&CellResult) -> f64| {
            let values: Vec<f64> = cell.iter().map(|c| f(c)).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let se = if values.len() > 1 {
                let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            (mean, se)
        };
        let (pm, ps) = stats(|c| c.param_mse);
        let (sm, ss) = stats(|c| c.strategy_mse);
        writer
            .write_record([
                size.to_string(),
                pm.to_string(),
                ps.to_string(),
                sm.to_string(),
                ss.to_string(),
            ])
            .map_err(|e| CliError::input(format!("csv: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::input(format!("csv: {e}")))
}
