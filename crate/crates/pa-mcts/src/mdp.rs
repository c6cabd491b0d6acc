//! Environment abstraction shared by the trainer, the tree search, and the
//! experiment harness.
//!
//! Everything downstream talks to an environment through [`MdpModel`]: an
//! ordered finite action set, a transition sampler, a terminal test, and a
//! discount factor. All randomness flows through an explicitly injected RNG
//! stream so that seeded runs reproduce bitwise.

use rand::RngCore;
use smallvec::SmallVec;
use thiserror::Error;

/// Identifier of one action: an index into `actions(state)`.
///
/// Identifiers are stable for identical states within one process run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct Action(pub usize);

impl Action {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered action set for one state. Inline storage keeps rollout loops
/// allocation-free for small action spaces.
pub type ActionList = SmallVec<[Action; 4]>;

/// Joint realization of one transition draw: successor, instantaneous
/// reward, and whether the successor is terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOutcome<S> {
    pub next_state: S,
    pub reward: f64,
    /// Must agree with `is_terminal(next_state)`.
    pub terminal: bool,
}

/// A sampling model of a Markov decision process.
///
/// Implementations must be shareable read-only across threads; all mutation
/// happens through the rng and returned values. `sample_transition` must be
/// a pure function of `(state, action)` and the rng stream position.
pub trait MdpModel {
    type State: Clone;

    /// Actions available in `state`, in a deterministic order. Non-empty
    /// for every non-terminal state.
    fn actions(&self, state: &Self::State) -> ActionList;

    /// Draw one transition from `P(state, action)` together with its reward.
    fn sample_transition(
        &self,
        state: &Self::State,
        action: Action,
        rng: &mut dyn RngCore,
    ) -> TransitionOutcome<Self::State>;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Discount factor in (0, 1].
    fn discount(&self) -> f64;
}

/// Σ_t γ^t · rewards[t], t zero-based, accumulated left to right.
///
/// An empty sequence returns 0. With γ = 1 this is the plain sum.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    let mut total = 0.0;
    let mut weight = 1.0;
    for r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

/// Result of driving one episode to termination or a step cap.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Undiscounted sum of rewards (what the experiment plots report).
    pub total_return: f64,
    pub steps: usize,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("action source chose {action:?}, which is not one of the {available} legal actions")]
    InvalidAction { action: Action, available: usize },
}

/// Run one episode from `initial`, querying `action_source` at every step.
///
/// Halts at the first terminal transition or after `max_steps` steps,
/// whichever comes first. The returned total is undiscounted; callers that
/// want a discounted quantity can fold [`discounted_return`] over `rewards`.
pub fn simulate_episode<M, F>(
    model: &M,
    mut action_source: F,
    initial: M::State,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<EpisodeOutcome, SimulationError>
where
    M: MdpModel,
    F: FnMut(&M::State, &mut dyn RngCore) -> Action,
{
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let mut state = initial;
    let mut rewards = Vec::new();
    while rewards.len() < max_steps && !model.is_terminal(&state) {
        let action = action_source(&state, rng);
        let legal = model.actions(&state);
        if !legal.contains(&action) {
            return Err(SimulationError::InvalidAction {
                action,
                available: legal.len(),
            });
        }
        let outcome = model.sample_transition(&state, action, rng);
        rewards.push(outcome.reward);
        state = outcome.next_state;
        if outcome.terminal {
            break;
        }
    }
    Ok(EpisodeOutcome {
        total_return: rewards.iter().sum(),
        steps: rewards.len(),
        rewards,
    })
}
