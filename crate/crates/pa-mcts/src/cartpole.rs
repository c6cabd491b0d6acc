//! CartPole dynamics with shiftable gravity, cart mass, and reward function.
//!
//! A pole is hinged to a cart on a frictionless track; each step the agent
//! pushes the cart left or right with a fixed-magnitude force. Episodes end
//! when the pole tips past `theta_threshold`, the cart leaves
//! `±x_threshold`, or the step cap is hit. The equations of motion and the
//! explicit-Euler update reproduce the classic reference environment
//! bit-for-bit, so a policy trained elsewhere against that environment
//! transfers directly.
//!
//! Only three knobs are meant to move after training: gravity, cart mass,
//! and the reward function ([`ParamShift`]). Everything else is frozen at
//! the reference defaults.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use smallvec::smallvec;
use thiserror::Error;

use crate::mdp::{Action, ActionList, MdpModel, TransitionOutcome};

pub const PUSH_LEFT: Action = Action(0);
pub const PUSH_RIGHT: Action = Action(1);

/// Direction of the force applied to the cart for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Push {
    Left,
    Right,
}

impl Push {
    /// Panics if `action` is not one of the two CartPole actions.
    pub fn from_action(action: Action) -> Push {
        match action.index() {
            0 => Push::Left,
            1 => Push::Right,
            i => panic!("action index {i} is not a CartPole action"),
        }
    }
}

/// The four-component physical state plus the episode step counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    /// Cart position (m).
    pub x: f64,
    /// Cart velocity (m/s).
    pub x_dot: f64,
    /// Pole angle from vertical (rad).
    pub theta: f64,
    /// Pole angular velocity (rad/s).
    pub theta_dot: f64,
    pub step_count: u32,
}

impl CartPoleState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            theta,
            theta_dot,
            step_count: 0,
        }
    }
}

/// Which reward the environment pays per transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardMode {
    /// 1.0 for every step survived, the classic balancing objective.
    UnitPerStep,
    /// `1 - |x|/x_threshold`: more reward the closer the cart stays to the
    /// center of the track.
    CenterProximity,
}

/// Physical and episode parameters. Serializes as a JSON fragment: absent
/// fields fall back to the defaults below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartPoleParams {
    /// Gravitational acceleration (m/s²), default 9.8.
    pub gravity: f64,
    /// Cart mass (kg), default 1.0.
    pub cart_mass: f64,
    /// Pole mass (kg), default 0.1.
    pub pole_mass: f64,
    /// Half the pole length (m), default 0.5.
    pub pole_half_length: f64,
    /// Magnitude of the applied force (N), default 10.0.
    pub force_mag: f64,
    /// Integration step (s), default 0.02.
    pub tau: f64,
    /// Track boundary (m); |x| beyond this is terminal. Default 2.4.
    pub x_threshold: f64,
    /// Failure angle (rad); |theta| beyond this is terminal. Default 12°.
    pub theta_threshold: f64,
    /// Episode step cap, default 2500.
    pub max_episode_steps: u32,
    pub reward_mode: RewardMode,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0_f64.to_radians(),
            max_episode_steps: 2500,
            reward_mode: RewardMode::UnitPerStep,
        }
    }
}

impl CartPoleParams {
    /// Check the physical invariants, naming the first offending field.
    pub fn validate(&self) -> Result<(), ParamError> {
        let checks = [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("pole_half_length", self.pole_half_length),
            ("force_mag", self.force_mag),
            ("tau", self.tau),
            ("x_threshold", self.x_threshold),
            ("theta_threshold", self.theta_threshold),
        ];
        for (field, value) in checks {
            if !(value > 0.0) {
                return Err(ParamError::NonPositive { field, value });
            }
        }
        if self.max_episode_steps == 0 {
            return Err(ParamError::NonPositive {
                field: "max_episode_steps",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
}

/// One of the environment shifts applied after the policy was trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamShift {
    Gravity(f64),
    CartMass(f64),
    RewardMode(RewardMode),
}

/// Copy `base` with exactly one field replaced. Physical shifts must be
/// strictly positive.
pub fn shifted_params(
    base: &CartPoleParams,
    shift: ParamShift,
) -> Result<CartPoleParams, ParamError> {
    let mut params = *base;
    match shift {
        ParamShift::Gravity(g) => {
            if !(g > 0.0) {
                return Err(ParamError::NonPositive {
                    field: "gravity",
                    value: g,
                });
            }
            params.gravity = g;
        }
        ParamShift::CartMass(m) => {
            if !(m > 0.0) {
                return Err(ParamError::NonPositive {
                    field: "cart_mass",
                    value: m,
                });
            }
            params.cart_mass = m;
        }
        ParamShift::RewardMode(mode) => params.reward_mode = mode,
    }
    Ok(params)
}

/// `1 - |x|/x_threshold`; 1 at the center of the track, 0 at the boundary.
///
/// On the transition that leaves the track the pre-update |x| can exceed
/// the threshold only by the last step's drift, so the value may dip below
/// 0 there and is returned as computed.
pub fn centered_reward(x: f64, x_threshold: f64) -> f64 {
    debug_assert!(x_threshold > 0.0);
    1.0 - x.abs() / x_threshold
}

pub fn is_terminal_state(params: &CartPoleParams, state: &CartPoleState) -> bool {
    state.x.abs() > params.x_threshold
        || state.theta.abs() > params.theta_threshold
        || state.step_count >= params.max_episode_steps
}

/// Advance the dynamics by one step.
///
/// Force is `±force_mag`; the pole's angular acceleration and the cart's
/// linear acceleration come from the standard pole-on-cart equations of
/// motion, integrated by explicit Euler with positions advanced using the
/// pre-update velocities. The reward is paid on every transition, including
/// the terminating one; `CenterProximity` is evaluated on the pre-update x.
///
/// Deterministic: identical inputs give bitwise-identical outputs.
/// Panics when called on a terminal state.
pub fn cartpole_step(
    params: &CartPoleParams,
    state: &CartPoleState,
    push: Push,
) -> TransitionOutcome<CartPoleState> {
    assert!(
        !is_terminal_state(params, state),
        "cartpole_step called on a terminal state"
    );
    let force = match push {
        Push::Left => -params.force_mag,
        Push::Right => params.force_mag,
    };
    let cos_theta = state.theta.cos();
    let sin_theta = state.theta.sin();
    let total_mass = params.cart_mass + params.pole_mass;
    let pole_mass_length = params.pole_mass * params.pole_half_length;

    let temp = (force + pole_mass_length * state.theta_dot * state.theta_dot * sin_theta)
        / total_mass;
    let theta_acc = (params.gravity * sin_theta - cos_theta * temp)
        / (params.pole_half_length
            * (4.0 / 3.0 - params.pole_mass * cos_theta * cos_theta / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos_theta / total_mass;

    let next = CartPoleState {
        x: state.x + params.tau * state.x_dot,
        x_dot: state.x_dot + params.tau * x_acc,
        theta: state.theta + params.tau * state.theta_dot,
        theta_dot: state.theta_dot + params.tau * theta_acc,
        step_count: state.step_count + 1,
    };
    let reward = match params.reward_mode {
        RewardMode::UnitPerStep => 1.0,
        RewardMode::CenterProximity => centered_reward(state.x, params.x_threshold),
    };
    TransitionOutcome {
        terminal: is_terminal_state(params, &next),
        next_state: next,
        reward,
    }
}

/// Reset distribution: each physical component uniform in [-0.05, 0.05),
/// step counter zeroed.
pub fn initial_state(rng: &mut dyn RngCore) -> CartPoleState {
    let mut draw = || rng.gen_range(-0.05..0.05);
    CartPoleState {
        x: draw(),
        x_dot: draw(),
        theta: draw(),
        theta_dot: draw(),
        step_count: 0,
    }
}

/// CartPole as an [`MdpModel`]. The dynamics are deterministic, so
/// `sample_transition` never touches the rng.
#[derive(Debug, Clone, Copy)]
pub struct CartPole {
    pub params: CartPoleParams,
    discount: f64,
}

impl CartPole {
    pub fn new(params: CartPoleParams, discount: f64) -> Self {
        assert!(discount > 0.0 && discount <= 1.0, "discount must be in (0, 1]");
        Self { params, discount }
    }

    /// Default parameters with the planning discount 0.999.
    pub fn default_env() -> Self {
        Self::new(CartPoleParams::default(), 0.999)
    }
}

impl MdpModel for CartPole {
    type State = CartPoleState;

    fn actions(&self, _: &CartPoleState) -> ActionList {
        smallvec![PUSH_LEFT, PUSH_RIGHT]
    }

    fn sample_transition(
        &self,
        state: &CartPoleState,
        action: Action,
        _rng: &mut dyn RngCore,
    ) -> TransitionOutcome<CartPoleState> {
        cartpole_step(&self.params, state, Push::from_action(action))
    }

    fn is_terminal(&self, state: &CartPoleState) -> bool {
        is_terminal_state(&self.params, state)
    }

    fn discount(&self) -> f64 {
        self.discount
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::simulate_episode;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_from_rest_matches_hand_derivation() {
        // From (0,0,0,0) with a right push: temp = 10/1.1, the angle terms
        // vanish, so x stays put for one step while the velocities move.
        let params = CartPoleParams::default();
        let out = cartpole_step(&params, &CartPoleState::new(0.0, 0.0, 0.0, 0.0), Push::Right);
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        assert_eq!(out.next_state.x, 0.0);
        assert_eq!(out.next_state.theta, 0.0);
        assert_relative_eq!(out.next_state.x_dot, 0.02 * x_acc, max_relative = 1e-12);
        assert_relative_eq!(out.next_state.theta_dot, 0.02 * theta_acc, max_relative = 1e-12);
        // Values the derivation pins down numerically.
        assert_relative_eq!(out.next_state.x_dot, 0.19512, epsilon = 1e-5);
        assert_relative_eq!(out.next_state.theta_dot, -0.29268, epsilon = 1e-5);
        assert!(!out.terminal);
        assert_eq!(out.next_state.step_count, 1);
    }

    #[test]
    fn tipping_past_threshold_terminates() {
        let params = CartPoleParams::default();
        let state = CartPoleState::new(0.0, 0.0, 0.30, 0.0);
        // 0.30 rad is already past 12°, so stepping it is a contract
        // violation; a state just inside tips over the line after update.
        let near = CartPoleState::new(0.0, 0.0, 0.205, 3.0);
        let out = cartpole_step(&params, &near, Push::Right);
        assert!(out.next_state.theta.abs() > params.theta_threshold);
        assert!(out.terminal);
        assert!(is_terminal_state(&params, &state));
    }

    #[test]
    #[should_panic(expected = "terminal state")]
    fn stepping_terminal_state_panics() {
        let params = CartPoleParams::default();
        let state = CartPoleState::new(0.0, 0.0, 0.30, 0.0);
        cartpole_step(&params, &state, Push::Left);
    }

    #[test]
    fn unit_reward_regardless_of_action() {
        let params = CartPoleParams::default();
        let state = CartPoleState::new(0.1, 0.0, 0.01, 0.0);
        assert_eq!(cartpole_step(&params, &state, Push::Left).reward, 1.0);
        assert_eq!(cartpole_step(&params, &state, Push::Right).reward, 1.0);
    }

    #[test]
    fn centered_reward_examples() {
        assert_eq!(centered_reward(0.0, 2.4), 1.0);
        assert_eq!(centered_reward(2.4, 2.4), 0.0);
        assert_eq!(centered_reward(-1.2, 2.4), 0.5);
    }

    #[test]
    fn centered_reward_uses_pre_update_position() {
        let mut params = CartPoleParams::default();
        params.reward_mode = RewardMode::CenterProximity;
        let state = CartPoleState::new(-1.2, 0.5, 0.0, 0.0);
        let out = cartpole_step(&params, &state, Push::Right);
        assert_eq!(out.reward, 0.5);
    }

    #[test]
    fn shifted_params_replace_exactly_one_field() {
        let base = CartPoleParams::default();
        let g = shifted_params(&base, ParamShift::Gravity(30.0)).unwrap();
        assert_eq!(g.gravity, 30.0);
        assert_eq!(g.cart_mass, base.cart_mass);
        assert_eq!(g.reward_mode, base.reward_mode);

        let m = shifted_params(&base, ParamShift::CartMass(25.0)).unwrap();
        assert_eq!(m.cart_mass, 25.0);
        assert_eq!(m.gravity, base.gravity);

        let same = shifted_params(&base, ParamShift::Gravity(9.8)).unwrap();
        assert_eq!(same, base);
    }

    #[test]
    fn shifted_params_reject_non_positive_values() {
        let base = CartPoleParams::default();
        assert_eq!(
            shifted_params(&base, ParamShift::Gravity(0.0)),
            Err(ParamError::NonPositive {
                field: "gravity",
                value: 0.0
            })
        );
        assert!(shifted_params(&base, ParamShift::CartMass(-1.0)).is_err());
    }

    #[test]
    fn initial_state_in_range_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = initial_state(&mut rng);
        for v in [a.x, a.x_dot, a.theta, a.theta_dot] {
            assert!((-0.05..0.05).contains(&v));
        }
        assert_eq!(a.step_count, 0);
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(initial_state(&mut rng2), a);
    }

    #[test]
    fn initial_state_component_means_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sums = [0.0f64; 4];
        let n = 10_000;
        for _ in 0..n {
            let s = initial_state(&mut rng);
            sums[0] += s.x;
            sums[1] += s.x_dot;
            sums[2] += s.theta;
            sums[3] += s.theta_dot;
        }
        for sum in sums {
            assert!((sum / n as f64).abs() < 0.005);
        }
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let params = CartPoleParams::default();
        let state = CartPoleState::new(0.7, -0.4, 0.05, 0.31);
        let mirrored = CartPoleState::new(-0.7, 0.4, -0.05, -0.31);
        let a = cartpole_step(&params, &state, Push::Right);
        let b = cartpole_step(&params, &mirrored, Push::Left);
        assert_eq!(a.next_state.x, -b.next_state.x);
        assert_eq!(a.next_state.x_dot, -b.next_state.x_dot);
        assert_eq!(a.next_state.theta, -b.next_state.theta);
        assert_eq!(a.next_state.theta_dot, -b.next_state.theta_dot);
    }

    /// Bang-bang stabilizer used to exercise long balanced episodes.
    pub(crate) fn balancing_action(state: &CartPoleState) -> Action {
        let score = 0.7 * state.x + 1.2 * state.x_dot + 14.0 * state.theta + 3.0 * state.theta_dot;
        if score > 0.0 {
            PUSH_RIGHT
        } else {
            PUSH_LEFT
        }
    }

    #[test]
    fn balanced_episode_reaches_the_step_cap() {
        let model = CartPole::default_env();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let initial = initial_state(&mut rng);
        let out = simulate_episode(
            &model,
            |s, _| balancing_action(s),
            initial,
            2500,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.steps, 2500);
        assert_eq!(out.total_return, 2500.0);
    }

    #[test]
    fn unit_return_equals_steps_survived() {
        let model = CartPole::default_env();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..5u64 {
            let mut ep_rng = ChaCha8Rng::seed_from_u64(seed);
            let initial = initial_state(&mut ep_rng);
            let out = simulate_episode(
                &model,
                |_, rng| Action(rand::Rng::gen_range(rng, 0..2usize)),
                initial,
                2500,
                &mut rng,
            )
            .unwrap();
            assert!(out.steps <= 2500);
            assert_eq!(out.total_return, out.steps as f64);
        }
    }

    #[test]
    fn centered_return_bounded_by_steps() {
        let mut params = CartPoleParams::default();
        params.reward_mode = RewardMode::CenterProximity;
        let model = CartPole::new(params, 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let initial = initial_state(&mut rng);
        let out = simulate_episode(
            &model,
            |s, _| balancing_action(s),
            initial,
            500,
            &mut rng,
        )
        .unwrap();
        assert!(out.total_return <= out.steps as f64);
        assert!(out.total_return > 0.0);
    }

    #[test]
    fn params_fragment_deserializes_with_defaults() {
        let params: CartPoleParams = serde_json::from_str(r#"{"gravity": 50.0}"#).unwrap();
        assert_eq!(params.gravity, 50.0);
        assert_eq!(params.cart_mass, 1.0);
        assert_eq!(params.max_episode_steps, 2500);
        assert_eq!(params.reward_mode, RewardMode::UnitPerStep);

        let modes: CartPoleParams =
            serde_json::from_str(r#"{"reward_mode": "CenterProximity"}"#).unwrap();
        assert_eq!(modes.reward_mode, RewardMode::CenterProximity);

        let round: CartPoleParams =
            serde_json::from_str(&serde_json::to_string(&params).unwrap()).unwrap();
        assert_eq!(round, params);
    }

    #[test]
    fn params_validation_names_offending_field() {
        let mut params = CartPoleParams::default();
        params.tau = 0.0;
        assert_eq!(
            params.validate(),
            Err(ParamError::NonPositive {
                field: "tau",
                value: 0.0
            })
        );
    }
}
