//! Policy-augmented Monte Carlo tree search over a parameterizable
//! CartPole.
//!
//! The tree policy blends a learned action-value function into UCT node
//! selection: a child `j` of parent `p` scores
//!
//! ```text
//! alpha * Q(s_p, a_j) + (1 - alpha) * G_j + c * sqrt(ln(n_p) / n_j)
//! ```
//!
//! where `G_j` is the mean rollout return through `j`. At `alpha = 0` this
//! is plain UCT; at `alpha = 1` it is greedy action selection on the
//! policy; in between the policy seeds the search toward promising branches
//! while rollouts against the up-to-date model correct for any drift in the
//! environment since the policy was trained. `alpha` can decay over the
//! search as rollout estimates firm up.
//!
//! Modules:
//!
//! - [`mdp`] — environment abstraction and episode loop
//! - [`cartpole`] — CartPole dynamics with shiftable gravity, cart mass,
//!   and reward function
//! - [`qlearn`] — tabular double Q-learning over a discretized state
//!   space, plus Q-table persistence
//! - [`search`] — the tree search
//! - [`experiment`] — seeded (env, alpha, budget) sweep grids with CSV
//!   output
//! - [`plot`] — plot-data JSON and SVG small multiples
//!
//! Sweeps run data-parallel via rayon under the `parallel` feature
//! (default). Disabling it gives a dependency-lighter sequential build with
//! bitwise-identical results.

pub mod cartpole;
pub mod experiment;
pub mod mdp;
pub mod plot;
pub mod qlearn;
pub mod search;

pub use cartpole::{CartPole, CartPoleParams, CartPoleState, RewardMode};
pub use mdp::{Action, MdpModel, TransitionOutcome};
pub use qlearn::{QFunction, QTable};
pub use search::{plan, SearchConfig, SearchDiagnostics};
