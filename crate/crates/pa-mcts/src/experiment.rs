//! Seeded sweep grids over (environment variant, alpha, iteration budget)
//! cells.
//!
//! Every cell is a pure function of the grid config and the Q-table file:
//! per-sample seeds derive from a stable hash of the cell labels, so adding
//! cells to a grid never perturbs existing results, and serial and parallel
//! execution produce identical output.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cartpole::{initial_state, CartPole, CartPoleParams, ParamError};
use crate::mdp::{simulate_episode, MdpModel, SimulationError};
use crate::qlearn::{greedy_action, QTable, ZeroQ};
use crate::search::{plan, RolloutPolicy, SearchConfig};

/// Search knobs shared by all cells of a grid; alpha and budget come from
/// the grid axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchDefaults {
    pub exploration_constant: f64,
    pub decay_rate: f64,
    pub gamma: f64,
    pub rollout_horizon: usize,
    pub rollout_policy: RolloutPolicy,
}

impl Default for SearchDefaults {
    fn default() -> Self {
        Self {
            exploration_constant: 50.0,
            decay_rate: 0.0,
            gamma: 0.999,
            rollout_horizon: 500,
            rollout_policy: RolloutPolicy::UniformRandom,
        }
    }
}

/// A labeled environment; `params` is a fragment, so unlisted fields keep
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvVariant {
    pub label: String,
    #[serde(default)]
    pub params: CartPoleParams,
}

/// Full sweep specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub env_variants: Vec<EnvVariant>,
    pub alphas: Vec<f64>,
    pub iteration_budgets: Vec<usize>,
    pub samples_per_cell: usize,
    pub base_seed: u64,
    /// Overrides `max_episode_steps` of every variant, for both execution
    /// and the planner's internal model.
    pub episode_step_cap: u32,
    #[serde(default)]
    pub search: SearchDefaults,
}

/// On-disk grid config: the grid plus an optional Q-table path, required
/// whenever any alpha is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(flatten)]
    pub grid: ExperimentGrid,
    #[serde(default)]
    pub qtable: Option<PathBuf>,
}

/// Returns and aggregates for one (env, alpha, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub env_label: String,
    pub alpha: f64,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation (divide by N).
    pub std_dev: f64,
}

impl CellResult {
    pub fn from_samples(
        env_label: String,
        alpha: f64,
        budget: usize,
        seeds: Vec<u64>,
        returns: Vec<f64>,
    ) -> Self {
        let (mean, std_dev) = mean_and_population_std(&returns);
        Self {
            env_label,
            alpha,
            budget,
            seeds,
            returns,
            mean,
            std_dev,
        }
    }
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("grid config invalid: {0}")]
    InvalidGrid(String),
    #[error("cell {env_label} alpha={alpha}: a Q-table is required when alpha > 0")]
    MissingQTable { env_label: String, alpha: f64 },
    #[error("cell {env_label} alpha={alpha} budget={budget}: {source}")]
    Cell {
        env_label: String,
        alpha: f64,
        budget: usize,
        source: SimulationError,
    },
    #[error("env {env_label}: {source}")]
    Params {
        env_label: String,
        source: ParamError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("results file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.env_variants.is_empty() {
            return Err(ExperimentError::InvalidGrid("no env_variants".into()));
        }
        if self.alphas.is_empty() || self.iteration_budgets.is_empty() {
            return Err(ExperimentError::InvalidGrid(
                "alphas and iteration_budgets must be non-empty".into(),
            ));
        }
        if self.samples_per_cell == 0 {
            return Err(ExperimentError::InvalidGrid(
                "samples_per_cell must be at least 1".into(),
            ));
        }
        if self.episode_step_cap == 0 {
            return Err(ExperimentError::InvalidGrid(
                "episode_step_cap must be at least 1".into(),
            ));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(ExperimentError::InvalidGrid(format!(
                "alpha {a} outside [0, 1]"
            )));
        }
        if self.iteration_budgets.iter().any(|b| *b == 0) {
            return Err(ExperimentError::InvalidGrid(
                "iteration budgets must be at least 1".into(),
            ));
        }
        for env in &self.env_variants {
            env.params
                .validate()
                .map_err(|source| ExperimentError::Params {
                    env_label: env.label.clone(),
                    source,
                })?;
        }
        Ok(())
    }
}

/// Stable per-sample seed: the first eight bytes of
/// SHA-256(`base_seed|env_label|alpha|budget|sample_index`).
pub fn derive_seed(
    base_seed: u64,
    env_label: &str,
    alpha: f64,
    budget: usize,
    sample_index: usize,
) -> u64 {
    let canonical = format!("{base_seed}|{env_label}|{alpha}|{budget}|{sample_index}");
    let digest = Sha256::digest(canonical.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn episode_return(
    model: &CartPole,
    alpha: f64,
    budget: usize,
    search: &SearchDefaults,
    qtable: Option<&QTable>,
    seed: u64,
    step_cap: usize,
) -> Result<f64, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = initial_state(&mut rng);
    let outcome = if alpha == 1.0 {
        // Pure policy: no tree search at all.
        let qt = qtable.expect("caller checks table presence");
        simulate_episode(
            model,
            |s, _| greedy_action(&qt, s, &model.actions(s)),
            initial,
            step_cap,
            &mut rng,
        )?
    } else {
        let cfg = SearchConfig {
            exploration_constant: search.exploration_constant,
            alpha,
            decay_rate: search.decay_rate,
            gamma: search.gamma,
            rollout_horizon: search.rollout_horizon,
            iteration_budget: budget,
            rollout_policy: search.rollout_policy,
        };
        // Every environment step is a decision epoch with a fresh tree.
        match qtable {
            Some(qt) if alpha > 0.0 => simulate_episode(
                model,
                |s, rng| plan(s, model, &qt, &cfg, rng).0,
                initial,
                step_cap,
                &mut rng,
            )?,
            _ => simulate_episode(
                model,
                |s, rng| plan(s, model, &ZeroQ, &cfg, rng).0,
                initial,
                step_cap,
                &mut rng,
            )?,
        }
    };
    Ok(outcome.total_return)
}

/// Run every sample of one cell.
///
/// Sample `j` uses the seed `derive_seed(base_seed, label, alpha, budget,
/// j)`; alpha = 1.0 cells ignore the budget (it is hashed as 0), which
/// makes the cell's results identical across the budget axis.
pub fn run_cell(
    env: &EnvVariant,
    alpha: f64,
    budget: usize,
    grid: &ExperimentGrid,
    qtable: Option<&QTable>,
) -> Result<CellResult, ExperimentError> {
    if alpha > 0.0 && qtable.is_none() {
        return Err(ExperimentError::MissingQTable {
            env_label: env.label.clone(),
            alpha,
        });
    }
    let mut params = env.params;
    params.max_episode_steps = grid.episode_step_cap;
    params.validate().map_err(|source| ExperimentError::Params {
        env_label: env.label.clone(),
        source,
    })?;
    let model = CartPole::new(params, grid.search.gamma);
    let canonical_budget = if alpha == 1.0 { 0 } else { budget };
    let step_cap = grid.episode_step_cap as usize;

    let seeds: Vec<u64> = (0..grid.samples_per_cell)
        .map(|j| derive_seed(grid.base_seed, &env.label, alpha, canonical_budget, j))
        .collect();
    let run_one = |seed: &u64| -> Result<f64, ExperimentError> {
        episode_return(&model, alpha, budget, &grid.search, qtable, *seed, step_cap).map_err(
            |source| ExperimentError::Cell {
                env_label: env.label.clone(),
                alpha,
                budget,
                source,
            },
        )
    };

    #[cfg(feature = "parallel")]
    let returns: Result<Vec<f64>, ExperimentError> = {
        use rayon::prelude::*;
        seeds.par_iter().map(run_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let returns: Result<Vec<f64>, ExperimentError> = seeds.iter().map(run_one).collect();

    Ok(CellResult::from_samples(
        env.label.clone(),
        alpha,
        budget,
        seeds,
        returns?,
    ))
}

fn grid_tasks(grid: &ExperimentGrid) -> Vec<(usize, f64, usize)> {
    let mut tasks = Vec::new();
    for (env_idx, _) in grid.env_variants.iter().enumerate() {
        for &alpha in &grid.alphas {
            for &budget in &grid.iteration_budgets {
                tasks.push((env_idx, alpha, budget));
            }
        }
    }
    tasks
}

fn sort_results(results: &mut [CellResult]) {
    results.sort_by(|a, b| {
        (a.env_label.as_str(), a.alpha, a.budget)
            .partial_cmp(&(b.env_label.as_str(), b.alpha, b.budget))
            .expect("alphas are finite")
    });
}

/// Run the full grid sequentially. Cardinality of the result is
/// `|envs| × |alphas| × |budgets|`; alpha = 1.0 rows repeat one logical
/// cell across the budget axis.
pub fn run_grid_serial(
    grid: &ExperimentGrid,
    qtable: Option<&QTable>,
) -> Result<Vec<CellResult>, ExperimentError> {
    grid.validate()?;
    let mut results = grid_tasks(grid)
        .iter()
        .map(|&(env_idx, alpha, budget)| {
            run_cell(&grid.env_variants[env_idx], alpha, budget, grid, qtable)
        })
        .collect::<Result<Vec<_>, _>>()?;
    sort_results(&mut results);
    Ok(results)
}

/// Run the full grid, cells in parallel when the `parallel` feature is
/// enabled. Results are identical to [`run_grid_serial`] and ordered by
/// (env_label, alpha, budget) regardless of completion order.
#[cfg(feature = "parallel")]
pub fn run_grid(
    grid: &ExperimentGrid,
    qtable: Option<&QTable>,
) -> Result<Vec<CellResult>, ExperimentError> {
    use rayon::prelude::*;
    grid.validate()?;
    let tasks = grid_tasks(grid);
    let mut results = tasks
        .par_iter()
        .map(|&(env_idx, alpha, budget)| {
            run_cell(&grid.env_variants[env_idx], alpha, budget, grid, qtable)
        })
        .collect::<Result<Vec<_>, _>>()?;
    sort_results(&mut results);
    Ok(results)
}

#[cfg(not(feature = "parallel"))]
pub fn run_grid(
    grid: &ExperimentGrid,
    qtable: Option<&QTable>,
) -> Result<Vec<CellResult>, ExperimentError> {
    run_grid_serial(grid, qtable)
}

/// [`run_grid`] on a bounded worker pool. `jobs = None` uses the default
/// pool; without the `parallel` feature the value is ignored.
pub fn run_grid_with_jobs(
    grid: &ExperimentGrid,
    qtable: Option<&QTable>,
    jobs: Option<usize>,
) -> Result<Vec<CellResult>, ExperimentError> {
    #[cfg(feature = "parallel")]
    {
        match jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ExperimentError::Pool(e.to_string()))?
                .install(|| run_grid(grid, qtable)),
            None => run_grid(grid, qtable),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        run_grid(grid, qtable)
    }
}

pub const RESULTS_CSV_HEADER: [&str; 6] = [
    "env_label",
    "alpha",
    "budget",
    "sample_index",
    "seed",
    "episode_return",
];

/// Write one row per sample, full-precision floats, LF line endings.
pub fn write_results_csv(results: &[CellResult], path: &Path) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(RESULTS_CSV_HEADER)?;
    for cell in results {
        for (j, (&seed, &ret)) in cell.seeds.iter().zip(&cell.returns).enumerate() {
            writer.write_record([
                cell.env_label.as_str(),
                &cell.alpha.to_string(),
                &cell.budget.to_string(),
                &j.to_string(),
                &seed.to_string(),
                &ret.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Read rows written by [`write_results_csv`] back into cells, recomputing
/// the aggregates. Rows are grouped by (env_label, alpha, budget) in file
/// order; floats are recovered exactly.
pub fn read_results_csv(path: &Path) -> Result<Vec<CellResult>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut cells: Vec<CellResult> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record?;
        if record.len() != 6 {
            return Err(ExperimentError::Malformed {
                line,
                reason: format!("expected 6 fields, got {}", record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap();
        let parse_err = |what: &str| ExperimentError::Malformed {
            line,
            reason: format!("bad {what} field"),
        };
        let env_label = field(0).to_string();
        let alpha: f64 = field(1).parse().map_err(|_| parse_err("alpha"))?;
        let budget: usize = field(2).parse().map_err(|_| parse_err("budget"))?;
        let seed: u64 = field(4).parse().map_err(|_| parse_err("seed"))?;
        let ret: f64 = field(5).parse().map_err(|_| parse_err("episode_return"))?;

        let matches_last = cells.last().is_some_and(|c: &CellResult| {
            c.env_label == env_label && c.alpha == alpha && c.budget == budget
        });
        if !matches_last {
            cells.push(CellResult {
                env_label,
                alpha,
                budget,
                seeds: Vec::new(),
                returns: Vec::new(),
                mean: 0.0,
                std_dev: 0.0,
            });
        }
        let cell = cells.last_mut().unwrap();
        cell.seeds.push(seed);
        cell.returns.push(ret);
    }
    for cell in &mut cells {
        let (mean, std_dev) = mean_and_population_std(&cell.returns);
        cell.mean = mean;
        cell.std_dev = std_dev;
    }
    Ok(cells)
}

/// Load a [`GridConfig`] from JSON; a relative Q-table path is resolved
/// against the config file's directory.
pub fn load_grid_config(path: &Path) -> Result<GridConfig, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let mut config: GridConfig = serde_json::from_str(&text).map_err(|e| {
        ExperimentError::InvalidGrid(format!("{}: {e}", path.display()))
    })?;
    if let Some(qtable) = &config.qtable {
        if qtable.is_relative() {
            if let Some(dir) = path.parent() {
                config.qtable = Some(dir.join(qtable));
            }
        }
    }
    config.grid.validate()?;
    Ok(config)
}

pub fn save_grid_config(config: &GridConfig, path: &Path) -> Result<(), ExperimentError> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(config)
        .expect("grid config serializes infallibly");
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}
