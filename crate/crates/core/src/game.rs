//! Augmented Markov game model: the game itself, the principal's signaling
//! rule and goal, per-agent selection rules and policies, validation, the
//! canonical (signal-free) projection, and seeded random instances.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{distribution_defect, sample_simplex};
use crate::spaces::{check_cap, Spaces};

/// One validation finding; `location` names the offending table row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Finite augmented Markov game: n agents, shared state/action/signal/type
/// spaces, per-period signal batches of size m (slot 0 from the principal,
/// the rest from a fixed exogenous source), joint-action transitions, and
/// per-agent rewards over (joint action, state, selected signal, own type).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGame {
    pub spaces: Spaces,
    /// Discount factor, strictly inside (0, 1) for valid instances.
    pub discount: f64,
    /// Initial state distribution over G.
    pub initial_state: Array1<f64>,
    /// Prior over joint types (drawn once, held fixed).
    pub type_prior: Array1<f64>,
    /// Rows over next states, one per (state, joint action).
    pub transition: Array2<f64>,
    /// Per agent: (joint action, state, selected signal, own type).
    pub rewards: Vec<Array4<f64>>,
    /// Distribution over the m-1 exogenous batch slots, shared by all agents.
    pub exogenous: Array1<f64>,
}

impl AugmentedGame {
    #[inline]
    pub fn reward(&self, agent: usize, joint_action: usize, g: usize, signal: usize, own_type: usize) -> f64 {
        self.rewards[agent][[joint_action, g, signal, own_type]]
    }

    #[inline]
    pub fn transition_row(&self, g: usize, joint_action: usize) -> ArrayView1<'_, f64> {
        self.transition.row(self.spaces.transition_row(g, joint_action))
    }

    /// Largest absolute one-stage reward.
    pub fn r_max(&self) -> f64 {
        self.rewards
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, &r| m.max(r.abs()))
    }

    /// Universal bound R_max/(1-gamma) on every discounted value.
    pub fn value_bound(&self) -> f64 {
        self.r_max() / (1.0 - self.discount)
    }
}

fn check_row(report: &mut Vec<Violation>, location: String, row: &[f64]) {
    if let Some(message) = distribution_defect(row) {
        report.push(Violation { location, message });
    }
}

/// Collects every invariant violation; an empty report means the game is valid.
pub fn validate_game(game: &AugmentedGame) -> Vec<Violation> {
    let mut report = Vec::new();
    let s = game.spaces;
    if s.n_agents < 1 {
        report.push(Violation {
            location: "spaces.n_agents".into(),
            message: "at least one agent required".into(),
        });
    }
    if s.batch_size < 2 {
        report.push(Violation {
            location: "spaces.batch_size".into(),
            message: format!("batch size {} below minimum of 2", s.batch_size),
        });
    }
    for (name, dim) in [
        ("states", s.n_states),
        ("actions", s.n_actions),
        ("signals", s.n_signals),
        ("types", s.n_types),
    ] {
        if dim == 0 {
            report.push(Violation {
                location: format!("spaces.{name}"),
                message: "empty index set".into(),
            });
        }
    }
    if !report.is_empty() {
        // Degenerate dimensions make the shape checks below meaningless.
        return report;
    }

    if !(game.discount > 0.0 && game.discount < 1.0) {
        report.push(Violation {
            location: "discount".into(),
            message: format!("discount out of range: {} (need 0 < gamma < 1)", game.discount),
        });
    }

    if game.initial_state.len() != s.n_states {
        report.push(Violation {
            location: "initial".into(),
            message: format!("expected {} entries, found {}", s.n_states, game.initial_state.len()),
        });
    } else {
        check_row(&mut report, "initial".into(), game.initial_state.as_slice().unwrap());
    }

    if game.type_prior.len() != s.joint_types() {
        report.push(Violation {
            location: "type_prior".into(),
            message: format!("expected {} entries, found {}", s.joint_types(), game.type_prior.len()),
        });
    } else {
        check_row(&mut report, "type_prior".into(), game.type_prior.as_slice().unwrap());
    }

    let expect_rows = s.n_states * s.joint_actions();
    if game.transition.nrows() != expect_rows || game.transition.ncols() != s.n_states {
        report.push(Violation {
            location: "transition".into(),
            message: format!(
                "expected {} rows of length {}, found {} rows of length {}",
                expect_rows,
                s.n_states,
                game.transition.nrows(),
                game.transition.ncols()
            ),
        });
    } else {
        for g in 0..s.n_states {
            for aj in 0..s.joint_actions() {
                let row = game.transition.row(s.transition_row(g, aj));
                check_row(
                    &mut report,
                    format!("transition[g={g}, a={aj}]"),
                    row.as_slice().unwrap(),
                );
            }
        }
    }

    if game.rewards.len() != s.n_agents {
        report.push(Violation {
            location: "rewards".into(),
            message: format!("expected {} agent tables, found {}", s.n_agents, game.rewards.len()),
        });
    } else {
        let expect = [s.joint_actions(), s.n_states, s.n_signals, s.n_types];
        for (i, table) in game.rewards.iter().enumerate() {
            if table.shape() != expect {
                report.push(Violation {
                    location: format!("rewards.agent_{i}"),
                    message: format!("expected shape {:?}, found {:?}", expect, table.shape()),
                });
                continue;
            }
            if let Some((idx, _)) = table.indexed_iter().find(|(_, v)| !v.is_finite()) {
                report.push(Violation {
                    location: format!("rewards.agent_{i}"),
                    message: format!("non-finite entry at {idx:?}"),
                });
            }
        }
    }

    if game.exogenous.len() != s.exo_tuples() {
        report.push(Violation {
            location: "exogenous".into(),
            message: format!("expected {} entries, found {}", s.exo_tuples(), game.exogenous.len()),
        });
    } else {
        check_row(&mut report, "exogenous".into(), game.exogenous.as_slice().unwrap());
    }

    report
}

/// The principal's signaling rule: one distribution over joint signals per
/// (joint type, state).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingRule {
    /// (joint type, state, joint signal).
    pub rows: Array3<f64>,
}

impl SignalingRule {
    pub fn uniform(spaces: &Spaces) -> Self {
        let js = spaces.joint_signals();
        SignalingRule {
            rows: Array3::from_elem((spaces.joint_types(), spaces.n_states, js), 1.0 / js as f64),
        }
    }

    #[inline]
    pub fn prob(&self, joint_type: usize, g: usize, joint_signal: usize) -> f64 {
        self.rows[[joint_type, g, joint_signal]]
    }

    /// Marginal probability that agent `agent` receives `signal`.
    pub fn marginal(&self, spaces: &Spaces, joint_type: usize, g: usize, agent: usize, signal: usize) -> f64 {
        let mut total = 0.0;
        for wj in 0..spaces.joint_signals() {
            if spaces.signal_of(wj, agent) == signal {
                total += self.rows[[joint_type, g, wj]];
            }
        }
        total
    }
}

/// Per-agent deterministic batch selection: maps (state, own type, batch) to
/// the chosen slot. Slot 0 holds the principal's signal, so the obedient rule
/// is the all-zeros table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionRule {
    /// Per agent: (state, own type, batch) -> slot in 0..m.
    pub slots: Vec<Array3<usize>>,
}

impl SelectionRule {
    pub fn obedient(spaces: &Spaces) -> Self {
        SelectionRule {
            slots: vec![
                Array3::zeros((spaces.n_states, spaces.n_types, spaces.batches()));
                spaces.n_agents
            ],
        }
    }

    pub fn is_obedient(&self) -> bool {
        self.slots.iter().all(|t| t.iter().all(|&s| s == 0))
    }

    #[inline]
    pub fn slot(&self, agent: usize, g: usize, own_type: usize, batch: usize) -> usize {
        self.slots[agent][[g, own_type, batch]]
    }

    /// Signal value the rule selects from `batch`.
    #[inline]
    pub fn selected(&self, spaces: &Spaces, agent: usize, g: usize, own_type: usize, batch: usize) -> usize {
        spaces.batch_slot(batch, self.slot(agent, g, own_type, batch))
    }
}

/// Per-agent stationary policies; the joint policy is their product.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Per agent: (state, selected signal, own type, action).
    pub rows: Vec<Array4<f64>>,
}

impl Policy {
    pub fn uniform(spaces: &Spaces) -> Self {
        let a = spaces.n_actions;
        Policy {
            rows: vec![
                Array4::from_elem(
                    (spaces.n_states, spaces.n_signals, spaces.n_types, a),
                    1.0 / a as f64
                );
                spaces.n_agents
            ],
        }
    }

    #[inline]
    pub fn prob(&self, agent: usize, g: usize, signal: usize, own_type: usize, action: usize) -> f64 {
        self.rows[agent][[g, signal, own_type, action]]
    }

    /// Product probability of the joint action when agent `i` sees signal
    /// `signals_of(i)` and has own type `types_of(i)`.
    pub fn joint_prob(
        &self,
        spaces: &Spaces,
        g: usize,
        joint_action: usize,
        signal_of: impl Fn(usize) -> usize,
        type_of: impl Fn(usize) -> usize,
    ) -> f64 {
        let mut p = 1.0;
        for i in 0..spaces.n_agents {
            p *= self.prob(i, g, signal_of(i), type_of(i), spaces.action_of(joint_action, i));
            if p == 0.0 {
                return 0.0;
            }
        }
        p
    }
}

/// The principal's goal: one distribution over joint actions per
/// (joint type, state).
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    /// (joint type, state, joint action).
    pub rows: Array3<f64>,
}

impl Goal {
    #[inline]
    pub fn prob(&self, joint_type: usize, g: usize, joint_action: usize) -> f64 {
        self.rows[[joint_type, g, joint_action]]
    }

    /// Marginal over opponents' actions of agent `agent`.
    pub fn opponent_marginal(
        &self,
        spaces: &Spaces,
        joint_type: usize,
        g: usize,
        agent: usize,
        others: usize,
    ) -> f64 {
        let mut total = 0.0;
        for a in 0..spaces.n_actions {
            let joint = crate::spaces::insert_component(others, a, agent, spaces.n_actions, spaces.n_agents);
            total += self.rows[[joint_type, g, joint]];
        }
        total
    }
}

/// The principal's own payoff over (joint action, state, joint type).
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalPayoff {
    /// (joint action, state, joint type).
    pub values: Array3<f64>,
}

impl PrincipalPayoff {
    #[inline]
    pub fn value(&self, joint_action: usize, g: usize, joint_type: usize) -> f64 {
        self.values[[joint_action, g, joint_type]]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

pub fn validate_principal(spaces: &Spaces, u: &PrincipalPayoff) -> Vec<Violation> {
    let mut report = Vec::new();
    let expect = [spaces.joint_actions(), spaces.n_states, spaces.joint_types()];
    if u.values.shape() != expect {
        report.push(Violation {
            location: "principal".into(),
            message: format!("expected shape {:?}, found {:?}", expect, u.values.shape()),
        });
        return report;
    }
    if let Some((idx, _)) = u.values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        report.push(Violation {
            location: "principal".into(),
            message: format!("non-finite entry at {idx:?}"),
        });
    }
    report
}

fn check_table_rows(
    report: &mut Vec<Violation>,
    rows: &Array3<f64>,
    what: &str,
    dims: (usize, usize, usize),
) {
    let (d0, d1, d2) = dims;
    if rows.shape() != [d0, d1, d2] {
        report.push(Violation {
            location: what.to_string(),
            message: format!("expected shape [{d0}, {d1}, {d2}], found {:?}", rows.shape()),
        });
        return;
    }
    for t in 0..d0 {
        for g in 0..d1 {
            let row: Vec<f64> = (0..d2).map(|j| rows[[t, g, j]]).collect();
            check_row(report, format!("{what}[theta={t}, g={g}]"), &row);
        }
    }
}

pub fn validate_signaling(spaces: &Spaces, alpha: &SignalingRule) -> Vec<Violation> {
    let mut report = Vec::new();
    check_table_rows(
        &mut report,
        &alpha.rows,
        "signaling",
        (spaces.joint_types(), spaces.n_states, spaces.joint_signals()),
    );
    report
}

pub fn validate_goal(spaces: &Spaces, goal: &Goal) -> Vec<Violation> {
    let mut report = Vec::new();
    check_table_rows(
        &mut report,
        &goal.rows,
        "goal",
        (spaces.joint_types(), spaces.n_states, spaces.joint_actions()),
    );
    report
}

pub fn validate_policy(spaces: &Spaces, policy: &Policy) -> Vec<Violation> {
    let mut report = Vec::new();
    if policy.rows.len() != spaces.n_agents {
        report.push(Violation {
            location: "policy".into(),
            message: format!("expected {} agent tables, found {}", spaces.n_agents, policy.rows.len()),
        });
        return report;
    }
    let expect = [spaces.n_states, spaces.n_signals, spaces.n_types, spaces.n_actions];
    for (i, table) in policy.rows.iter().enumerate() {
        if table.shape() != expect {
            report.push(Violation {
                location: format!("policy.agent_{i}"),
                message: format!("expected shape {:?}, found {:?}", expect, table.shape()),
            });
            continue;
        }
        for g in 0..spaces.n_states {
            for w in 0..spaces.n_signals {
                for th in 0..spaces.n_types {
                    let row: Vec<f64> = (0..spaces.n_actions).map(|a| table[[g, w, th, a]]).collect();
                    check_row(
                        &mut report,
                        format!("policy.agent_{i}[g={g}, signal={w}, theta={th}]"),
                        &row,
                    );
                }
            }
        }
    }
    report
}

pub fn validate_selection(spaces: &Spaces, beta: &SelectionRule) -> Vec<Violation> {
    let mut report = Vec::new();
    if beta.slots.len() != spaces.n_agents {
        report.push(Violation {
            location: "selection".into(),
            message: format!("expected {} agent tables, found {}", spaces.n_agents, beta.slots.len()),
        });
        return report;
    }
    let expect = [spaces.n_states, spaces.n_types, spaces.batches()];
    for (i, table) in beta.slots.iter().enumerate() {
        if table.shape() != expect {
            report.push(Violation {
                location: format!("selection.agent_{i}"),
                message: format!("expected shape {:?}, found {:?}", expect, table.shape()),
            });
            continue;
        }
        if let Some((idx, &slot)) = table.indexed_iter().find(|(_, &s)| s >= spaces.batch_size) {
            report.push(Violation {
                location: format!("selection.agent_{i}"),
                message: format!("slot {slot} at {idx:?} outside batch of size {}", spaces.batch_size),
            });
        }
    }
    report
}

/// Signal-free projection of the game at one joint type: rewards are sliced
/// at a caller-chosen fixed signal, transitions and discount are unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGame {
    pub n_agents: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    /// Rows over next states, one per (state, joint action).
    pub transition: Array2<f64>,
    /// Per agent: (joint action, state).
    pub rewards: Vec<Array2<f64>>,
}

impl CanonicalGame {
    pub fn joint_actions(&self) -> usize {
        self.n_actions.pow(self.n_agents as u32)
    }

    #[inline]
    pub fn transition_row(&self, g: usize, joint_action: usize) -> ArrayView1<'_, f64> {
        self.transition.row(g * self.joint_actions() + joint_action)
    }
}

/// Slice the reward tables at (fixed signal, each agent's own type component).
pub fn canonical_projection(game: &AugmentedGame, joint_type: usize, fixed_signal: usize) -> Result<CanonicalGame> {
    let s = game.spaces;
    if fixed_signal >= s.n_signals {
        return Err(Error::Shape(format!(
            "fixed signal {fixed_signal} outside signal space of size {}",
            s.n_signals
        )));
    }
    if joint_type >= s.joint_types() {
        return Err(Error::Shape(format!(
            "joint type {joint_type} outside type space of size {}",
            s.joint_types()
        )));
    }
    let rewards = (0..s.n_agents)
        .map(|i| {
            let own = s.type_of(joint_type, i);
            Array2::from_shape_fn((s.joint_actions(), s.n_states), |(aj, g)| {
                game.reward(i, aj, g, fixed_signal, own)
            })
        })
        .collect();
    Ok(CanonicalGame {
        n_agents: s.n_agents,
        n_states: s.n_states,
        n_actions: s.n_actions,
        discount: game.discount,
        transition: game.transition.clone(),
        rewards,
    })
}

/// Seed-deterministic random instance: every probability row is an
/// independent uniform-simplex draw, rewards are uniform in `reward_range`.
pub fn random_game(
    seed: u64,
    spaces: Spaces,
    reward_range: (f64, f64),
    cap: u64,
) -> Result<AugmentedGame> {
    check_cap(spaces.enumeration_cells(), cap)?;
    let (lo, hi) = reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Shape(format!("invalid reward range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_row = |len: usize, rng: &mut ChaCha8Rng| {
        let mut row = vec![0.0; len];
        sample_simplex(rng, &mut row);
        row
    };

    let initial_state = Array1::from_vec(draw_row(spaces.n_states, &mut rng));
    let type_prior = Array1::from_vec(draw_row(spaces.joint_types(), &mut rng));
    let mut transition = Array2::zeros((spaces.n_states * spaces.joint_actions(), spaces.n_states));
    for r in 0..transition.nrows() {
        let row = draw_row(spaces.n_states, &mut rng);
        transition.row_mut(r).assign(&Array1::from_vec(row));
    }
    let rewards = (0..spaces.n_agents)
        .map(|_| {
            Array4::from_shape_simple_fn(
                (spaces.joint_actions(), spaces.n_states, spaces.n_signals, spaces.n_types),
                || rng.gen_range(lo..=hi),
            )
        })
        .collect();
    let exogenous = Array1::from_vec(draw_row(spaces.exo_tuples(), &mut rng));

    let game = AugmentedGame {
        spaces,
        discount: 0.9,
        initial_state,
        type_prior,
        transition,
        rewards,
        exogenous,
    };
    debug_assert!(validate_game(&game).is_empty());
    Ok(game)
}

/// Random signaling rule with independent uniform-simplex rows.
pub fn random_signaling(seed: u64, spaces: &Spaces) -> SignalingRule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let js = spaces.joint_signals();
    let mut rows = Array3::zeros((spaces.joint_types(), spaces.n_states, js));
    for t in 0..spaces.joint_types() {
        for g in 0..spaces.n_states {
            let mut row = vec![0.0; js];
            sample_simplex(&mut rng, &mut row);
            for (w, &p) in row.iter().enumerate() {
                rows[[t, g, w]] = p;
            }
        }
    }
    SignalingRule { rows }
}

/// Random per-agent policies with independent uniform-simplex rows.
pub fn random_policy(seed: u64, spaces: &Spaces) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..spaces.n_agents)
        .map(|_| {
            let mut table =
                Array4::zeros((spaces.n_states, spaces.n_signals, spaces.n_types, spaces.n_actions));
            for g in 0..spaces.n_states {
                for w in 0..spaces.n_signals {
                    for th in 0..spaces.n_types {
                        let mut row = vec![0.0; spaces.n_actions];
                        sample_simplex(&mut rng, &mut row);
                        for (a, &p) in row.iter().enumerate() {
                            table[[g, w, th, a]] = p;
                        }
                    }
                }
            }
            table
        })
        .collect();
    Policy { rows }
}

/// Random deterministic selection rules (uniform over slots per entry).
pub fn random_selection(seed: u64, spaces: &Spaces) -> SelectionRule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = (0..spaces.n_agents)
        .map(|_| {
            Array3::from_shape_simple_fn((spaces.n_states, spaces.n_types, spaces.batches()), || {
                rng.gen_range(0..spaces.batch_size)
            })
        })
        .collect();
    SelectionRule { slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::DEFAULT_CELL_CAP;

    pub(crate) fn desk_spaces() -> Spaces {
        Spaces {
            n_agents: 2,
            n_states: 3,
            n_actions: 2,
            n_signals: 2,
            n_types: 1,
            batch_size: 2,
        }
    }

    #[test]
    fn random_game_is_valid_and_seed_deterministic() {
        let spaces = desk_spaces();
        let a = random_game(7, spaces, (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let b = random_game(7, spaces, (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        assert_eq!(a, b);
        assert!(validate_game(&a).is_empty());
        let c = random_game(8, spaces, (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        assert_ne!(a.rewards, c.rewards);
    }

    #[test]
    fn random_game_valid_across_many_seeds() {
        let spaces = desk_spaces();
        for seed in 0..1000 {
            let g = random_game(seed, spaces, (-2.0, 2.0), DEFAULT_CELL_CAP).unwrap();
            assert!(validate_game(&g).is_empty(), "seed {seed} produced invalid game");
        }
    }

    #[test]
    fn random_game_refuses_oversized_dims() {
        let spaces = Spaces {
            n_agents: 4,
            n_states: 10,
            n_actions: 10,
            n_signals: 10,
            n_types: 4,
            batch_size: 2,
        };
        match random_game(0, spaces, (0.0, 1.0), DEFAULT_CELL_CAP) {
            Err(Error::CapExceeded { required, cap }) => {
                assert!(required > cap as u128);
            }
            other => panic!("expected cap refusal, got {other:?}"),
        }
    }

    #[test]
    fn validator_flags_bad_transition_row() {
        let mut game = random_game(1, desk_spaces(), (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        game.transition[[2, 0]] += 0.1;
        let report = validate_game(&game);
        assert_eq!(report.len(), 1);
        assert!(report[0].location.starts_with("transition[g=0, a=2]"), "{}", report[0]);
    }

    #[test]
    fn validator_flags_discount_boundary() {
        let mut game = random_game(1, desk_spaces(), (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        game.discount = 1.0;
        let report = validate_game(&game);
        assert!(report.iter().any(|v| v.message.contains("discount out of range")));
    }

    #[test]
    fn canonical_projection_slices_rewards() {
        let game = random_game(3, desk_spaces(), (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let canon = canonical_projection(&game, 0, 1).unwrap();
        for i in 0..2 {
            for aj in 0..4 {
                for g in 0..3 {
                    assert_eq!(canon.rewards[i][[aj, g]], game.reward(i, aj, g, 1, 0));
                }
            }
        }
        assert_eq!(canon.transition, game.transition);
        assert!(canonical_projection(&game, 0, 5).is_err());
    }

    #[test]
    fn signaling_marginal_sums_joint() {
        let spaces = desk_spaces();
        let alpha = random_signaling(11, &spaces);
        for g in 0..3 {
            let total: f64 = (0..2).map(|w| alpha.marginal(&spaces, 0, g, 0, w)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            // Hand marginal for agent 1: joint signals with second digit w.
            let hand: f64 = alpha.prob(0, g, 1) + alpha.prob(0, g, 3);
            assert!((alpha.marginal(&spaces, 0, g, 1, 1) - hand).abs() < 1e-15);
        }
    }

    #[test]
    fn obedient_selection_picks_principal_slot() {
        let spaces = desk_spaces();
        let beta = SelectionRule::obedient(&spaces);
        assert!(beta.is_obedient());
        for batch in 0..spaces.batches() {
            // Slot 0 carries the most significant digit of the batch index.
            assert_eq!(beta.selected(&spaces, 0, 0, 0, batch), batch / spaces.exo_tuples());
        }
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // The validator accepts exactly the invariant-satisfying games:
            // corrupting any single probability entry beyond tolerance is caught.
            #[test]
            fn corrupted_tables_are_rejected(seed in 0u64..200, row in 0usize..12, col in 0usize..3, delta in 1e-6f64..0.5) {
                let game0 = random_game(seed, desk_spaces(), (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
                prop_assert!(validate_game(&game0).is_empty());
                let mut game = game0.clone();
                game.transition[[row, col]] += delta;
                prop_assert!(!validate_game(&game).is_empty());
                let mut game = game0;
                game.exogenous[0] = -delta;
                prop_assert!(!validate_game(&game).is_empty());
            }
        }
    }
}
