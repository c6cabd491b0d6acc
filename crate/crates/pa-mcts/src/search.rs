//! Monte Carlo tree search with a policy-augmented selection rule.
//!
//! Each search iteration runs the four standard stages — selection,
//! expansion, rollout, back-propagation — but node selection scores child
//! `j` of parent `p` as
//!
//! ```text
//! alpha_eff * Q(s_p, a_j) + (1 - alpha_eff) * G_j + c * sqrt(ln(n_p) / n_j)
//! ```
//!
//! blending a learned action-value estimate `Q` with the mean rollout
//! return `G_j` ([`pa_uct_score`]). `alpha_eff` may decay across iterations
//! ([`effective_alpha`]); with `alpha_eff = 0` the score collapses to plain
//! UCT bitwise, with `alpha_eff = 1` the rollout statistics are ignored and
//! selection follows the policy greedily.
//!
//! One tree serves one decision: trees are never reused across decision
//! epochs, and the iteration counter driving the decay resets per search.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::mdp::{Action, MdpModel};
use crate::qlearn::{greedy_action, QFunction};

/// How rollouts pick actions below the tree frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RolloutPolicy {
    /// Uniform over the legal actions; the default, and the only rollout
    /// cost charged against the rng stream.
    UniformRandom,
    /// Greedy on the action-value function, for ablations.
    GreedyQ,
}

/// Knobs for one search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Exploration-exploitation constant `c`, applied to unnormalized
    /// returns.
    pub exploration_constant: f64,
    /// Policy weight in [0, 1].
    pub alpha: f64,
    /// Decay rate `k ≥ 0`; 0 disables decay.
    pub decay_rate: f64,
    /// Discount applied per tree edge and inside rollouts.
    pub gamma: f64,
    /// Rollout length cap in steps.
    pub rollout_horizon: usize,
    pub iteration_budget: usize,
    pub rollout_policy: RolloutPolicy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            exploration_constant: 50.0,
            alpha: 0.0,
            decay_rate: 0.0,
            gamma: 0.999,
            rollout_horizon: 500,
            iteration_budget: 500,
            rollout_policy: RolloutPolicy::UniformRandom,
        }
    }
}

/// Index of a node in its [`SearchState`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

pub const ROOT: NodeId = NodeId(0);

/// One node of the search tree.
#[derive(Debug, Clone)]
pub struct TreeNode<S> {
    pub state: S,
    /// Action that led here from the parent; `None` at the root.
    pub incoming_action: Option<Action>,
    pub parent: Option<NodeId>,
    /// Number of completed backups through this node, `n_j`.
    pub visit_count: u64,
    /// Sum of backed-up discounted returns.
    pub total_return: f64,
    pub children: Vec<NodeId>,
    /// Remaining expansion candidates, kept reversed so `pop` yields the
    /// lowest remaining action index.
    untried: Vec<Action>,
    /// Reward observed on the edge from the parent at expansion time.
    pub edge_reward: f64,
    /// `Q(parent_state, incoming_action)`, cached at expansion.
    pub q_value: f64,
    pub terminal: bool,
    pub depth: u32,
}

impl<S> TreeNode<S> {
    /// Mean backed-up return `G_j`; defined once the node has been visited.
    pub fn mean_return(&self) -> f64 {
        assert!(self.visit_count >= 1, "mean return of an unvisited node");
        self.total_return / self.visit_count as f64
    }

    pub fn has_untried_actions(&self) -> bool {
        !self.untried.is_empty()
    }
}

/// Arena-backed tree plus the iteration counter for one decision epoch.
pub struct SearchState<S> {
    nodes: Vec<TreeNode<S>>,
    pub iteration: usize,
}

impl<S: Clone> SearchState<S> {
    pub fn new<M>(root_state: S, model: &M) -> Self
    where
        M: MdpModel<State = S>,
    {
        let terminal = model.is_terminal(&root_state);
        let mut untried: Vec<Action> = if terminal {
            Vec::new()
        } else {
            model.actions(&root_state).to_vec()
        };
        untried.reverse();
        Self {
            nodes: vec![TreeNode {
                state: root_state,
                incoming_action: None,
                parent: None,
                visit_count: 0,
                total_return: 0.0,
                children: Vec::new(),
                untried,
                edge_reward: 0.0,
                q_value: 0.0,
                terminal,
                depth: 0,
            }],
            iteration: 0,
        }
    }

    pub fn node(&self, id: NodeId) -> &TreeNode<S> {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TreeNode<S> {
        &mut self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn add_child(
        &mut self,
        parent: NodeId,
        action: Action,
        state: S,
        edge_reward: f64,
        terminal: bool,
        untried: Vec<Action>,
        q_value: f64,
    ) -> NodeId {
        let depth = self.nodes[parent.0].depth + 1;
        let id = NodeId(self.nodes.len());
        self.nodes.push(TreeNode {
            state,
            incoming_action: Some(action),
            parent: Some(parent),
            visit_count: 0,
            total_return: 0.0,
            children: Vec::new(),
            untried,
            edge_reward,
            q_value,
            terminal,
            depth,
        });
        self.nodes[parent.0].children.push(id);
        id
    }

    /// Visit counts of the root's children, in expansion (= action index)
    /// order.
    pub fn root_child_visits(&self) -> Vec<(Action, u64)> {
        self.node(ROOT)
            .children
            .iter()
            .map(|&id| {
                let child = self.node(id);
                (child.incoming_action.unwrap(), child.visit_count)
            })
            .collect()
    }
}

/// Plain UCT: `G_j + c * sqrt(ln(n_p) / n_j)`.
///
/// Unvisited children are never scored; callers expand them first. Panics
/// if `child_visits < 1`.
pub fn uct_score(mean_return: f64, parent_visits: f64, child_visits: f64, c: f64) -> f64 {
    assert!(child_visits >= 1.0, "uct_score requires a visited child");
    assert!(parent_visits >= 1.0, "uct_score requires a visited parent");
    mean_return + c * (parent_visits.ln() / child_visits).sqrt()
}

/// Policy weight at iteration `i`: `alpha / (1 + k·i)`. Monotone
/// non-increasing in `i`, and exactly `alpha` whenever `k·i = 0`.
pub fn effective_alpha(alpha: f64, k: f64, i: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha), "alpha must be in [0, 1]");
    debug_assert!(k >= 0.0, "decay rate must be non-negative");
    alpha / (1.0 + k * i as f64)
}

/// Policy-augmented UCT.
///
/// At `alpha_eff = 0` this reproduces [`uct_score`] bitwise (same
/// arithmetic order); at `alpha_eff = 1` the rollout mean is fully
/// suppressed. Panics if `child_visits < 1`.
pub fn pa_uct_score(
    q_value: f64,
    mean_return: f64,
    alpha_eff: f64,
    parent_visits: f64,
    child_visits: f64,
    c: f64,
) -> f64 {
    assert!(child_visits >= 1.0, "pa_uct_score requires a visited child");
    assert!(parent_visits >= 1.0, "pa_uct_score requires a visited parent");
    let blended = alpha_eff * q_value + (1.0 - alpha_eff) * mean_return;
    blended + c * (parent_visits.ln() / child_visits).sqrt()
}

/// Descend from the root and expand one node.
///
/// At each node: stop on terminal; expand the lowest-index untried action
/// if any remain (expansion always takes priority over descent); otherwise
/// descend into the child maximizing [`pa_uct_score`], first maximum
/// winning ties. Returns the root-to-leaf path; the last entry is the leaf.
pub fn select_and_expand<M, Q>(
    search: &mut SearchState<M::State>,
    model: &M,
    qf: &Q,
    cfg: &SearchConfig,
    alpha_eff: f64,
    rng: &mut dyn RngCore,
) -> (Vec<NodeId>, NodeId)
where
    M: MdpModel,
    Q: QFunction<M::State>,
{
    let mut current = ROOT;
    let mut path = vec![ROOT];
    loop {
        if search.node(current).terminal {
            return (path, current);
        }
        if search.node(current).has_untried_actions() {
            let action = search.node_mut(current).untried.pop().unwrap();
            let parent_state = search.node(current).state.clone();
            let outcome = model.sample_transition(&parent_state, action, rng);
            let q_value = qf.q(&parent_state, action);
            let mut untried: Vec<Action> = if outcome.terminal {
                Vec::new()
            } else {
                model.actions(&outcome.next_state).to_vec()
            };
            untried.reverse();
            let child = search.add_child(
                current,
                action,
                outcome.next_state,
                outcome.reward,
                outcome.terminal,
                untried,
                q_value,
            );
            path.push(child);
            return (path, child);
        }
        let parent_visits = search.node(current).visit_count as f64;
        let mut best: Option<(NodeId, f64)> = None;
        for &child_id in &search.node(current).children {
            let child = search.node(child_id);
            let score = pa_uct_score(
                child.q_value,
                child.mean_return(),
                alpha_eff,
                parent_visits,
                child.visit_count as f64,
                cfg.exploration_constant,
            );
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((child_id, score));
            }
        }
        let (next, _) = best.expect("non-terminal fully-expanded node has children");
        current = next;
        path.push(current);
    }
}

/// Simulate up to `rollout_horizon` steps from `state` and return the
/// γ-discounted return of the trajectory, discounting from the rollout's
/// first step. Terminal states yield 0.
pub fn rollout<M, Q>(
    state: &M::State,
    model: &M,
    cfg: &SearchConfig,
    qf: &Q,
    rng: &mut dyn RngCore,
) -> f64
where
    M: MdpModel,
    Q: QFunction<M::State>,
{
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut current = state.clone();
    for _ in 0..cfg.rollout_horizon {
        if model.is_terminal(&current) {
            break;
        }
        let actions = model.actions(&current);
        let action = match cfg.rollout_policy {
            RolloutPolicy::UniformRandom => actions[rng.gen_range(0..actions.len())],
            RolloutPolicy::GreedyQ => greedy_action(qf, &current, &actions),
        };
        let outcome = model.sample_transition(&current, action, rng);
        total += weight * outcome.reward;
        weight *= cfg.gamma;
        current = outcome.next_state;
        if outcome.terminal {
            break;
        }
    }
    total
}

/// Walk `path` leaf→root, incrementing visit counts and accumulating
/// discounted returns: the leaf receives `leaf_value`, and each ancestor
/// receives `edge_reward + γ · child_value`. The root is updated last.
///
/// `edge_rewards` carries one entry per edge of `path` (so one fewer than
/// the node count); a mismatch is a contract violation.
pub fn backpropagate<S>(
    search: &mut SearchState<S>,
    path: &[NodeId],
    leaf_value: f64,
    edge_rewards: &[f64],
    gamma: f64,
) {
    assert!(!path.is_empty(), "backpropagate needs a non-empty path");
    assert_eq!(
        edge_rewards.len(),
        path.len() - 1,
        "one edge reward per edge in the path"
    );
    let mut value = leaf_value;
    for i in (0..path.len()).rev() {
        let node = &mut search.nodes[path[i].0];
        node.visit_count += 1;
        node.total_return += value;
        if i > 0 {
            value = edge_rewards[i - 1] + gamma * value;
        }
    }
}

/// Statistics of one root action after a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildStats {
    pub action: Action,
    pub visits: u64,
    /// `None` when the action was never expanded.
    pub mean_return: Option<f64>,
    pub q_value: f64,
    pub final_score: f64,
}

/// JSON-exportable record of what the search concluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub chosen: Action,
    pub iterations: usize,
    pub root_visits: u64,
    /// Policy weight in effect for the final ranking.
    pub alpha_final: f64,
    pub children: Vec<ChildStats>,
}

/// Run a full search from `root_state` and recommend an action.
///
/// Exactly `iteration_budget` iterations of select/expand/rollout/backprop
/// run, with the policy weight recomputed per iteration as
/// `effective_alpha(alpha, decay_rate, i)`, `i` zero-based. The final
/// recommendation drops the exploration term and ranks every root action by
/// `alpha_eff · Q(s_root, a) + (1 - alpha_eff) · G_a`, where unexpanded
/// actions (possible when the budget is below the action count) rank on
/// `alpha_eff · Q` alone. Ties break toward the higher visit count, then
/// the lower action index.
pub fn plan<M, Q>(
    root_state: &M::State,
    model: &M,
    qf: &Q,
    cfg: &SearchConfig,
    rng: &mut dyn RngCore,
) -> (Action, SearchDiagnostics)
where
    M: MdpModel,
    Q: QFunction<M::State>,
{
    plan_with_alpha_schedule(
        root_state,
        model,
        qf,
        cfg,
        |i| effective_alpha(cfg.alpha, cfg.decay_rate, i),
        rng,
    )
}

/// [`plan`] with an arbitrary per-iteration policy-weight schedule.
///
/// `plan` is this function with the schedule `alpha / (1 + k·i)`; supplying
/// a custom schedule is useful for ablations of the decay rule.
pub fn plan_with_alpha_schedule<M, Q, A>(
    root_state: &M::State,
    model: &M,
    qf: &Q,
    cfg: &SearchConfig,
    alpha_at: A,
    rng: &mut dyn RngCore,
) -> (Action, SearchDiagnostics)
where
    M: MdpModel,
    Q: QFunction<M::State>,
    A: Fn(usize) -> f64,
{
    assert!(cfg.iteration_budget >= 1, "iteration budget must be at least 1");
    assert!(
        (0.0..=1.0).contains(&cfg.alpha),
        "alpha must be in [0, 1]"
    );
    assert!(
        !model.is_terminal(root_state),
        "cannot plan from a terminal state"
    );

    let mut search = SearchState::new(root_state.clone(), model);
    let mut alpha_eff = alpha_at(0);
    for i in 0..cfg.iteration_budget {
        search.iteration = i;
        alpha_eff = alpha_at(i);
        let (path, leaf) = select_and_expand(&mut search, model, qf, cfg, alpha_eff, rng);
        let leaf_state = search.node(leaf).state.clone();
        let leaf_value = rollout(&leaf_state, model, cfg, qf, rng);
        let edge_rewards: Vec<f64> = path[1..]
            .iter()
            .map(|&id| search.node(id).edge_reward)
            .collect();
        backpropagate(&mut search, &path, leaf_value, &edge_rewards, cfg.gamma);
    }

    // Final ranking over every root action, in action order so that the
    // first strict maximum realizes the lowest-index tie-break.
    let mut children = Vec::new();
    for &child_id in &search.node(ROOT).children {
        let child = search.node(child_id);
        let mean = child.mean_return();
        children.push(ChildStats {
            action: child.incoming_action.unwrap(),
            visits: child.visit_count,
            mean_return: Some(mean),
            q_value: child.q_value,
            final_score: alpha_eff * child.q_value + (1.0 - alpha_eff) * mean,
        });
    }
    for &action in search.node(ROOT).untried.iter().rev() {
        let q_value = qf.q(root_state, action);
        children.push(ChildStats {
            action,
            visits: 0,
            mean_return: None,
            q_value,
            final_score: alpha_eff * q_value,
        });
    }
    children.sort_by_key(|c| c.action);

    let best = children
        .iter()
        .fold(None::<&ChildStats>, |best, c| match best {
            None => Some(c),
            Some(b)
                if c.final_score > b.final_score
                    || (c.final_score == b.final_score && c.visits > b.visits) =>
            {
                Some(c)
            }
            Some(b) => Some(b),
        })
        .expect("non-terminal root has at least one action");

    let chosen = best.action;
    let diagnostics = SearchDiagnostics {
        chosen,
        iterations: cfg.iteration_budget,
        root_visits: search.node(ROOT).visit_count,
        alpha_final: alpha_eff,
        children,
    };
    (chosen, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionList, TransitionOutcome};
    use crate::qlearn::{QFn, ZeroQ};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use smallvec::smallvec;

    /// Chain that pays 1 per step and never terminates.
    struct UnitChain;

    impl MdpModel for UnitChain {
        type State = u32;

        fn actions(&self, _: &u32) -> ActionList {
            smallvec![Action(0), Action(1)]
        }

        fn sample_transition(
            &self,
            state: &u32,
            _: Action,
            _: &mut dyn RngCore,
        ) -> TransitionOutcome<u32> {
            TransitionOutcome {
                next_state: state + 1,
                reward: 1.0,
                terminal: false,
            }
        }

        fn is_terminal(&self, _: &u32) -> bool {
            false
        }

        fn discount(&self) -> f64 {
            0.999
        }
    }

    /// Two-armed bandit: action 0 pays 1, action 1 pays 0, then terminal.
    struct Bandit;

    impl MdpModel for Bandit {
        type State = Option<Action>;

        fn actions(&self, _: &Self::State) -> ActionList {
            smallvec![Action(0), Action(1)]
        }

        fn sample_transition(
            &self,
            _: &Self::State,
            action: Action,
            _: &mut dyn RngCore,
        ) -> TransitionOutcome<Self::State> {
            TransitionOutcome {
                next_state: Some(action),
                reward: if action == Action(0) { 1.0 } else { 0.0 },
                terminal: true,
            }
        }

        fn is_terminal(&self, state: &Self::State) -> bool {
            state.is_some()
        }

        fn discount(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn uct_score_examples() {
        assert_eq!(uct_score(0.0, 1.0, 1.0, 50.0), 0.0);
        // Pure exploitation at c = 0.
        assert!(uct_score(5.0, 10.0, 3.0, 0.0) > uct_score(3.0, 10.0, 3.0, 0.0));
        assert_relative_eq!(
            uct_score(10.0, std::f64::consts::E, 1.0, 50.0),
            60.0,
            epsilon = 1e-12
        );
    }

    #[test]
    #[should_panic(expected = "visited child")]
    fn uct_score_rejects_unvisited_child() {
        uct_score(0.0, 1.0, 0.0, 50.0);
    }

    #[test]
    fn effective_alpha_examples() {
        assert_eq!(effective_alpha(0.75, 0.0, 400), 0.75);
        assert_eq!(effective_alpha(0.5, 1.0, 1), 0.25);
        assert_eq!(effective_alpha(1.0, 0.01, 100), 0.5);
    }

    #[test]
    fn effective_alpha_is_non_increasing() {
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let a = effective_alpha(0.8, 0.3, i);
            assert!(a <= last && a >= 0.0 && a <= 0.8);
            last = a;
        }
    }

    #[test]
    fn pa_uct_score_examples() {
        // alpha = 0 with exploration term 1 (c=1, n_p=e, n_j=1).
        let e = std::f64::consts::E;
        assert_relative_eq!(pa_uct_score(9.0, 4.0, 0.0, e, 1.0, 1.0), 5.0, epsilon = 1e-12);
        // alpha = 1 with exploration term 0 (n_p = 1).
        assert_eq!(pa_uct_score(2.0, 7.0, 1.0, 1.0, 1.0, 50.0), 2.0);
        // Blended: 5 + 3 + 2.
        assert_relative_eq!(
            pa_uct_score(10.0, 6.0, 0.5, e, 1.0, 2.0),
            10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pa_uct_score_at_zero_alpha_matches_uct_bitwise() {
        let cases = [
            (3.25, -1.5, 7.0, 3.0, 50.0),
            (-10.0, 0.0, 1.0, 1.0, 0.0),
            (1e-3, 400.0, 123.0, 7.0, 2.5),
        ];
        for (q, mean, np, nj, c) in cases {
            assert_eq!(
                pa_uct_score(q, mean, 0.0, np, nj, c).to_bits(),
                uct_score(mean, np, nj, c).to_bits()
            );
        }
    }

    #[test]
    fn fresh_root_expands_lowest_index_first() {
        let model = UnitChain;
        let mut search = SearchState::new(0u32, &model);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SearchConfig::default();
        let (path, leaf) = select_and_expand(&mut search, &model, &ZeroQ, &cfg, 0.0, &mut rng);
        assert_eq!(path, vec![ROOT, leaf]);
        assert_eq!(search.node(leaf).incoming_action, Some(Action(0)));
        assert_eq!(search.node(leaf).depth, 1);
        assert!(search.node(ROOT).has_untried_actions());
    }

    #[test]
    fn descent_follows_max_mean_when_exploitation_only() {
        let model = UnitChain;
        let mut search = SearchState::new(0u32, &model);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SearchConfig {
            exploration_constant: 0.0,
            ..SearchConfig::default()
        };
        // Expand both children, then hand them distinct means.
        let (path_a, a) = select_and_expand(&mut search, &model, &ZeroQ, &cfg, 0.0, &mut rng);
        backpropagate(&mut search, &path_a, 3.0, &[1.0], 1.0);
        let (path_b, b) = select_and_expand(&mut search, &model, &ZeroQ, &cfg, 0.0, &mut rng);
        backpropagate(&mut search, &path_b, 7.0, &[1.0], 1.0);
        assert_eq!(search.node(a).incoming_action, Some(Action(0)));
        assert_eq!(search.node(b).incoming_action, Some(Action(1)));
        // Root fully expanded; the next descent goes through b (higher mean)
        // and expands below it.
        let (path, _) = select_and_expand(&mut search, &model, &ZeroQ, &cfg, 0.0, &mut rng);
        assert_eq!(path[1], b);
    }

    #[test]
    fn descent_follows_q_when_alpha_is_one() {
        let model = UnitChain;
        let qf = QFn(|state: &u32, a: Action| {
            if *state == 0 && a == Action(1) {
                9.0
            } else {
                1.0
            }
        });
        let mut search = SearchState::new(0u32, &model);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SearchConfig {
            exploration_constant: 0.0,
            ..SearchConfig::default()
        };
        let (path_a, _) = select_and_expand(&mut search, &model, &qf, &cfg, 1.0, &mut rng);
        backpropagate(&mut search, &path_a, 100.0, &[1.0], 1.0);
        let (path_b, b) = select_and_expand(&mut search, &model, &qf, &cfg, 1.0, &mut rng);
        backpropagate(&mut search, &path_b, 0.0, &[1.0], 1.0);
        // Child via action 1 has the far lower mean but the higher Q.
        let (path, _) = select_and_expand(&mut search, &model, &qf, &cfg, 1.0, &mut rng);
        assert_eq!(path[1], b);
    }

    #[test]
    fn rollout_from_terminal_state_is_zero() {
        let model = Bandit;
        let cfg = SearchConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rollout(&Some(Action(0)), &model, &cfg, &ZeroQ, &mut rng), 0.0);
    }

    #[test]
    fn rollout_undiscounted_horizon() {
        let model = UnitChain;
        let cfg = SearchConfig {
            rollout_horizon: 3,
            gamma: 1.0,
            ..SearchConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rollout(&0u32, &model, &cfg, &ZeroQ, &mut rng), 3.0);
    }

    #[test]
    fn rollout_matches_geometric_series() {
        let model = UnitChain;
        let cfg = SearchConfig {
            rollout_horizon: 500,
            gamma: 0.999,
            ..SearchConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let expected = (1.0 - 0.999f64.powi(500)) / (1.0 - 0.999);
        assert_relative_eq!(
            rollout(&0u32, &model, &cfg, &ZeroQ, &mut rng),
            expected,
            epsilon = 1e-9
        );
    }

    #[test]
    fn backpropagate_examples() {
        let model = UnitChain;
        // Single root.
        let mut search = SearchState::new(0u32, &model);
        backpropagate(&mut search, &[ROOT], 5.0, &[], 0.999);
        assert_eq!(search.node(ROOT).visit_count, 1);
        assert_eq!(search.node(ROOT).total_return, 5.0);

        // Two-node path with an edge reward.
        let mut search = SearchState::new(0u32, &model);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SearchConfig::default();
        let (path, leaf) = select_and_expand(&mut search, &model, &ZeroQ, &cfg, 0.0, &mut rng);
        backpropagate(&mut search, &path, 10.0, &[1.0], 0.5);
        assert_eq!(search.node(leaf).total_return, 10.0);
        assert_eq!(search.node(ROOT).total_return, 6.0);

        // Additivity.
        backpropagate(&mut search, &path, 10.0, &[1.0], 0.5);
        assert_eq!(search.node(leaf).total_return, 20.0);
        assert_eq!(search.node(ROOT).total_return, 12.0);
        assert_eq!(search.node(ROOT).visit_count, 2);
    }

    #[test]
    #[should_panic(expected = "edge reward")]
    fn backpropagate_rejects_length_mismatch() {
        let model = UnitChain;
        let mut search = SearchState::new(0u32, &model);
        backpropagate(&mut search, &[ROOT], 5.0, &[1.0], 0.999);
    }

    #[test]
    fn plan_alpha_one_returns_greedy_action() {
        let model = UnitChain;
        let qf = QFn(|state: &u32, a: Action| {
            // Make action 1 better at even states, action 0 at odd.
            if (*state % 2 == 0) == (a == Action(1)) {
                2.0
            } else {
                1.0
            }
        });
        let cfg = SearchConfig {
            alpha: 1.0,
            iteration_budget: 20,
            rollout_horizon: 10,
            ..SearchConfig::default()
        };
        for state in 0..4u32 {
            let mut rng = ChaCha8Rng::seed_from_u64(state as u64);
            let (action, _) = plan(&state, &model, &qf, &cfg, &mut rng);
            let expected = greedy_action(&qf, &state, &[Action(0), Action(1)]);
            assert_eq!(action, expected);
        }
    }

    #[test]
    fn plan_bandit_finds_the_paying_arm() {
        let model = Bandit;
        let cfg = SearchConfig {
            alpha: 0.0,
            iteration_budget: 1000,
            exploration_constant: 50.0,
            ..SearchConfig::default()
        };
        let mut wins = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (action, _) = plan(&None, &model, &ZeroQ, &cfg, &mut rng);
            if action == Action(0) {
                wins += 1;
            }
        }
        assert!(wins >= 99, "found the paying arm in only {wins}/100 runs");
    }

    #[test]
    fn root_child_visits_sum_to_budget() {
        let model = UnitChain;
        let cfg = SearchConfig {
            alpha: 0.0,
            iteration_budget: 137,
            rollout_horizon: 5,
            ..SearchConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (_, diagnostics) = plan(&0u32, &model, &ZeroQ, &cfg, &mut rng);
        let total: u64 = diagnostics.children.iter().map(|c| c.visits).sum();
        assert_eq!(total, 137);
        assert_eq!(diagnostics.root_visits, 137);
    }

    #[test]
    fn plan_with_budget_below_action_count_is_legal() {
        let model = UnitChain;
        let qf = QFn(|_: &u32, a: Action| if a == Action(1) { 5.0 } else { 1.0 });
        let cfg = SearchConfig {
            alpha: 1.0,
            iteration_budget: 1,
            rollout_horizon: 5,
            ..SearchConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Only action 0 gets expanded, but action 1 outranks it on Q alone.
        let (action, diagnostics) = plan(&0u32, &model, &qf, &cfg, &mut rng);
        assert_eq!(action, Action(1));
        let unexpanded = diagnostics
            .children
            .iter()
            .find(|c| c.action == Action(1))
            .unwrap();
        assert_eq!(unexpanded.visits, 0);
        assert_eq!(unexpanded.mean_return, None);
    }

    #[test]
    fn decay_schedule_with_zero_rate_is_trace_identical() {
        let model = UnitChain;
        let qf = QFn(|state: &u32, a: Action| (*state + a.index() as u32) as f64 * 0.1);
        let cfg = SearchConfig {
            alpha: 0.6,
            decay_rate: 0.0,
            iteration_budget: 60,
            rollout_horizon: 8,
            ..SearchConfig::default()
        };
        for seed in 0..5u64 {
            let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
            let (action_a, diag_a) = plan(&0u32, &model, &qf, &cfg, &mut rng_a);
            let mut rng_b = ChaCha8Rng::seed_from_u64(seed);
            let (action_b, diag_b) =
                plan_with_alpha_schedule(&0u32, &model, &qf, &cfg, |_| cfg.alpha, &mut rng_b);
            assert_eq!(action_a, action_b);
            assert_eq!(diag_a, diag_b);
        }
    }

    #[test]
    fn plan_is_deterministic_given_seed() {
        let model = UnitChain;
        let cfg = SearchConfig {
            alpha: 0.3,
            iteration_budget: 80,
            rollout_horizon: 10,
            ..SearchConfig::default()
        };
        let qf = QFn(|state: &u32, _: Action| *state as f64);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            plan(&0u32, &model, &qf, &cfg, &mut rng)
        };
        assert_eq!(run(99), run(99));
    }
}
