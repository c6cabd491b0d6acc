//! Tabular action-value learning over a discretized CartPole state space.
//!
//! The search only ever consumes `Q(s, a)` scalars through the
//! [`QFunction`] capability, so the provider is pluggable: this module
//! ships a double Q-learning trainer over a [`DiscretizationScheme`] plus
//! JSON persistence, and externally trained tables with the same schema
//! load and serve just as well.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::cartpole::{initial_state, CartPole, CartPoleParams, CartPoleState};
use crate::mdp::{simulate_episode, Action, MdpModel};

/// Upper bound on table cells accepted by the trainer.
const MAX_CELLS: usize = 10_000_000;

/// Action-value provider: deterministic and finite for all inputs.
pub trait QFunction<S> {
    fn q(&self, state: &S, action: Action) -> f64;
}

impl<'a, S, T: QFunction<S> + ?Sized> QFunction<S> for &'a T {
    fn q(&self, state: &S, action: Action) -> f64 {
        (**self).q(state, action)
    }
}

/// Closure adapter, mostly for tests and ad-hoc providers.
pub struct QFn<F>(pub F);

impl<S, F: Fn(&S, Action) -> f64> QFunction<S> for QFn<F> {
    fn q(&self, state: &S, action: Action) -> f64 {
        (self.0)(state, action)
    }
}

/// The all-zero action-value function; turns the blended selection score
/// into plain UCT.
pub struct ZeroQ;

impl<S> QFunction<S> for ZeroQ {
    fn q(&self, _: &S, _: Action) -> f64 {
        0.0
    }
}

/// Greedy argmax over `actions`; ties break toward the lowest action index.
pub fn greedy_action<S>(qf: &impl QFunction<S>, state: &S, actions: &[Action]) -> Action {
    assert!(!actions.is_empty(), "greedy_action needs at least one action");
    let mut best = actions[0];
    let mut best_q = qf.q(state, best);
    for &action in &actions[1..] {
        let q = qf.q(state, action);
        if q > best_q {
            best = action;
            best_q = q;
        }
    }
    best
}

/// Sample an action with probability ∝ exp(q/temperature), computed with
/// max subtraction. Consumes exactly one rng draw.
pub fn boltzmann_action<S>(
    qf: &impl QFunction<S>,
    state: &S,
    actions: &[Action],
    temperature: f64,
    rng: &mut dyn RngCore,
) -> Action {
    assert!(temperature > 0.0, "temperature must be positive");
    assert!(!actions.is_empty());
    let scaled: SmallVec<[f64; 4]> = actions
        .iter()
        .map(|&a| qf.q(state, a) / temperature)
        .collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: SmallVec<[f64; 4]> = scaled.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return actions[i];
        }
    }
    *actions.last().unwrap()
}

/// Per-dimension bin edges for (x, ẋ, θ, θ̇). The outermost edges double as
/// the clamp range: values outside land in the nearest cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationScheme {
    pub x_edges: Vec<f64>,
    pub x_dot_edges: Vec<f64>,
    pub theta_edges: Vec<f64>,
    pub theta_dot_edges: Vec<f64>,
}

/// `bins + 1` evenly spaced edges over [lo, hi].
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    assert!(bins >= 2 && hi > lo);
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    edges
}

impl Default for DiscretizationScheme {
    /// 12 uniform bins per dimension over the envelope balanced
    /// trajectories actually reach.
    fn default() -> Self {
        Self {
            x_edges: uniform_edges(-2.4, 2.4, 12),
            x_dot_edges: uniform_edges(-3.0, 3.0, 12),
            theta_edges: uniform_edges(-0.21, 0.21, 12),
            theta_dot_edges: uniform_edges(-3.5, 3.5, 12),
        }
    }
}

impl DiscretizationScheme {
    fn dimensions(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("scheme.x_edges", &self.x_edges),
            ("scheme.x_dot_edges", &self.x_dot_edges),
            ("scheme.theta_edges", &self.theta_edges),
            ("scheme.theta_dot_edges", &self.theta_dot_edges),
        ]
    }

    /// Each edge sequence must be strictly increasing with at least two
    /// bins (three edges) per dimension.
    pub fn validate(&self) -> Result<(), QTableError> {
        for (field, edges) in self.dimensions() {
            if edges.len() < 3 {
                return Err(QTableError::Schema {
                    field: field.to_string(),
                    reason: format!("needs at least 3 edges, got {}", edges.len()),
                });
            }
            if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
                return Err(QTableError::Schema {
                    field: field.to_string(),
                    reason: "edges must be finite and strictly increasing".to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn bins_per_dimension(&self) -> [usize; 4] {
        [
            self.x_edges.len() - 1,
            self.x_dot_edges.len() - 1,
            self.theta_edges.len() - 1,
            self.theta_dot_edges.len() - 1,
        ]
    }

    pub fn cell_count(&self) -> usize {
        self.bins_per_dimension().iter().product()
    }

    /// Row-major cell index of `state`, clamping out-of-range components
    /// into the nearest bin.
    pub fn cell_of(&self, state: &CartPoleState) -> usize {
        let bx = bin_of(&self.x_edges, state.x);
        let bxd = bin_of(&self.x_dot_edges, state.x_dot);
        let bt = bin_of(&self.theta_edges, state.theta);
        let btd = bin_of(&self.theta_dot_edges, state.theta_dot);
        let [_, n1, n2, n3] = self.bins_per_dimension();
        ((bx * n1 + bxd) * n2 + bt) * n3 + btd
    }
}

fn bin_of(edges: &[f64], value: f64) -> usize {
    debug_assert!(value.is_finite());
    let v = value.clamp(edges[0], edges[edges.len() - 1]);
    let upper = edges.partition_point(|e| *e <= v);
    (upper - 1).min(edges.len() - 2)
}

/// Provenance recorded alongside the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableMetadata {
    pub training_env: CartPoleParams,
    pub gamma: f64,
    pub steps: u64,
    pub seed: u64,
}

/// Dense `(cell, action) → Q` table over a [`DiscretizationScheme`].
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub scheme: DiscretizationScheme,
    values: Vec<f64>,
    n_actions: usize,
    pub metadata: QTableMetadata,
}

impl QTable {
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn cell_count(&self) -> usize {
        self.scheme.cell_count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize, action: Action) -> f64 {
        self.values[cell * self.n_actions + action.index()]
    }
}

impl QFunction<CartPoleState> for QTable {
    fn q(&self, state: &CartPoleState, action: Action) -> f64 {
        debug_assert!(action.index() < self.n_actions);
        self.value(self.scheme.cell_of(state), action)
    }
}

/// Trainer knobs. The Boltzmann temperature decays exponentially from
/// `temp_initial` to `temp_final` over the step budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: u64,
    pub gamma: f64,
    pub temp_initial: f64,
    pub temp_final: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            steps: 300_000,
            gamma: 0.999,
            temp_initial: 5.0,
            temp_final: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("discretization scheme produces {cells} cells, more than the {MAX_CELLS} limit")]
    StateSpaceTooLarge { cells: usize },
    #[error(transparent)]
    Scheme(#[from] QTableError),
}

fn temperature_at(cfg: &TrainConfig, step: u64) -> f64 {
    let progress = step as f64 / cfg.steps as f64;
    cfg.temp_initial * (cfg.temp_final / cfg.temp_initial).powf(progress)
}

/// Train a Q-table with tabular double Q-learning on the default-parameter
/// environment.
///
/// Two tables are kept; each step a fair coin picks which one to update,
/// bootstrapping from the other table at the updated table's argmax action.
/// Behavior is Boltzmann over the merged table `(A + B) / 2`, which is also
/// what the returned table holds. Training consumes exactly `cfg.steps`
/// environment transitions, resetting the episode on terminal states.
/// Fully deterministic given `cfg.seed`.
pub fn train_double_q(
    model: &CartPole,
    scheme: &DiscretizationScheme,
    cfg: &TrainConfig,
) -> Result<QTable, TrainError> {
    train_double_q_core(model, model.params, scheme, cfg)
}

fn train_double_q_core<M>(
    model: &M,
    training_env: CartPoleParams,
    scheme: &DiscretizationScheme,
    cfg: &TrainConfig,
) -> Result<QTable, TrainError>
where
    M: MdpModel<State = CartPoleState>,
{
    if cfg.steps == 0 {
        return Err(TrainError::InvalidConfig("steps must be at least 1".into()));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0) {
        return Err(TrainError::InvalidConfig(format!(
            "learning_rate must be in (0, 1], got {}",
            cfg.learning_rate
        )));
    }
    if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
        return Err(TrainError::InvalidConfig(format!(
            "gamma must be in (0, 1], got {}",
            cfg.gamma
        )));
    }
    if !(cfg.temp_initial > 0.0 && cfg.temp_final > 0.0) {
        return Err(TrainError::InvalidConfig(
            "temperatures must be positive".into(),
        ));
    }
    scheme.validate()?;
    let cells = scheme.cell_count();
    if cells > MAX_CELLS {
        return Err(TrainError::StateSpaceTooLarge { cells });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = initial_state(&mut rng);
    let n_actions = model.actions(&state).len();
    let mut table_a = vec![0.0f64; cells * n_actions];
    let mut table_b = vec![0.0f64; cells * n_actions];

    for step in 0..cfg.steps {
        let temp = temperature_at(cfg, step);
        let cell = scheme.cell_of(&state);
        let actions = model.actions(&state);
        let action = {
            let merged = QFn(|s: &CartPoleState, a: Action| {
                let i = scheme.cell_of(s) * n_actions + a.index();
                (table_a[i] + table_b[i]) / 2.0
            });
            boltzmann_action(&merged, &state, &actions, temp, &mut rng)
        };
        let outcome = model.sample_transition(&state, action, &mut rng);
        let next_cell = scheme.cell_of(&outcome.next_state);

        let (primary, secondary) = if rng.gen_bool(0.5) {
            (&mut table_a, &table_b)
        } else {
            (&mut table_b, &table_a)
        };
        let row = &primary[next_cell * n_actions..next_cell * n_actions + n_actions];
        let best_next = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &q)| {
                if q > acc.1 {
                    (i, q)
                } else {
                    acc
                }
            })
            .0;
        let bootstrap = if outcome.terminal {
            0.0
        } else {
            secondary[next_cell * n_actions + best_next]
        };
        let idx = cell * n_actions + action.index();
        let target = outcome.reward + cfg.gamma * bootstrap;
        primary[idx] += cfg.learning_rate * (target - primary[idx]);

        state = if outcome.terminal {
            initial_state(&mut rng)
        } else {
            outcome.next_state
        };
    }

    let values = table_a
        .iter()
        .zip(&table_b)
        .map(|(a, b)| (a + b) / 2.0)
        .collect();
    Ok(QTable {
        scheme: scheme.clone(),
        values,
        n_actions,
        metadata: QTableMetadata {
            training_env,
            gamma: cfg.gamma,
            steps: cfg.steps,
            seed: cfg.seed,
        },
    })
}

/// Mean returns of greedy episodes, one initial state drawn per episode.
pub fn evaluate_greedy<M>(
    model: &M,
    qf: &impl QFunction<CartPoleState>,
    episodes: usize,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Vec<f64>
where
    M: MdpModel<State = CartPoleState>,
{
    (0..episodes)
        .map(|_| {
            let initial = initial_state(rng);
            simulate_episode(
                model,
                |s, _| greedy_action(qf, s, &model.actions(s)),
                initial,
                max_steps,
                rng,
            )
            .expect("greedy action is always legal")
            .total_return
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum QTableError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed Q-table file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("Q-table field {field}: {reason}")]
    Schema { field: String, reason: String },
}

#[derive(Serialize, Deserialize)]
struct QTableFile {
    scheme: DiscretizationScheme,
    values: Vec<f64>,
    metadata: QTableMetadata,
}

/// Write the table as JSON: `{scheme, values, metadata}` with the values as
/// a row-major flat array. Floats round-trip exactly.
pub fn save_qtable(table: &QTable, path: &Path) -> Result<(), QTableError> {
    let file = QTableFile {
        scheme: table.scheme.clone(),
        values: table.values.clone(),
        metadata: table.metadata.clone(),
    };
    let writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer(writer, &file)?;
    Ok(())
}

pub fn load_qtable(path: &Path) -> Result<QTable, QTableError> {
    let reader = BufReader::new(File::open(path)?);
    let file: QTableFile = serde_json::from_reader(reader)?;
    file.scheme.validate()?;
    let cells = file.scheme.cell_count();
    if file.values.is_empty() || file.values.len() % cells != 0 {
        return Err(QTableError::Schema {
            field: "values".to_string(),
            reason: format!(
                "length {} is not a positive multiple of the {} cells",
                file.values.len(),
                cells
            ),
        });
    }
    if let Some(bad) = file.values.iter().find(|v| !v.is_finite()) {
        return Err(QTableError::Schema {
            field: "values".to_string(),
            reason: format!("contains non-finite entry {bad}"),
        });
    }
    if !(file.metadata.gamma > 0.0 && file.metadata.gamma <= 1.0) {
        return Err(QTableError::Schema {
            field: "metadata.gamma".to_string(),
            reason: format!("must be in (0, 1], got {}", file.metadata.gamma),
        });
    }
    let n_actions = file.values.len() / cells;
    Ok(QTable {
        scheme: file.scheme,
        values: file.values,
        n_actions,
        metadata: file.metadata,
    })
}
