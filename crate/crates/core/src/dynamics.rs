//! Induced stochastic kernels: posterior beliefs over opponents' signals,
//! batch distributions, per-agent selection kernels, and the one-step state
//! transition induced by a full strategy stack (signaling, selection,
//! policies) at a fixed joint type.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1};

use crate::error::{Error, Result};
use crate::game::{AugmentedGame, Policy, SelectionRule, SignalingRule};
use crate::spaces::{check_cap, insert_component, pow_cells, Spaces};

/// Bayes posterior over opponents' principal signals given the own one.
/// Returns a distribution over opponent signal tuples (length Ω^(n-1)).
pub fn belief_update(
    spaces: &Spaces,
    alpha: &SignalingRule,
    g: usize,
    joint_type: usize,
    agent: usize,
    signal: usize,
) -> Result<Vec<f64>> {
    let n_others = spaces.opponent_signals();
    let mut row = vec![0.0; n_others];
    let mut marginal = 0.0;
    for others in 0..n_others {
        let joint = insert_component(others, signal, agent, spaces.n_signals, spaces.n_agents);
        let p = alpha.prob(joint_type, g, joint);
        row[others] = p;
        marginal += p;
    }
    if marginal <= 0.0 {
        return Err(Error::OffSupportSignal {
            agent,
            state: g,
            joint_type,
            signal,
        });
    }
    for p in &mut row {
        *p /= marginal;
    }
    Ok(row)
}

/// All Bayes posteriors of a signaling rule; rows exist only on the support
/// of each agent's signal marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    /// Per agent: (state, own signal, joint type, opponent signal tuple).
    /// Rows with `defined == false` are zero-filled.
    pub rows: Vec<Array4<f64>>,
    /// Per agent: (state, own signal, joint type).
    pub defined: Vec<Array3<bool>>,
}

impl Belief {
    pub fn from_signaling(spaces: &Spaces, alpha: &SignalingRule) -> Belief {
        let shape = (spaces.n_states, spaces.n_signals, spaces.joint_types());
        let mut rows = Vec::with_capacity(spaces.n_agents);
        let mut defined = Vec::with_capacity(spaces.n_agents);
        for agent in 0..spaces.n_agents {
            let mut table = Array4::zeros((
                spaces.n_states,
                spaces.n_signals,
                spaces.joint_types(),
                spaces.opponent_signals(),
            ));
            let mut mask = Array3::from_elem(shape, false);
            for g in 0..spaces.n_states {
                for signal in 0..spaces.n_signals {
                    for tj in 0..spaces.joint_types() {
                        if let Ok(row) = belief_update(spaces, alpha, g, tj, agent, signal) {
                            for (others, &p) in row.iter().enumerate() {
                                table[[g, signal, tj, others]] = p;
                            }
                            mask[[g, signal, tj]] = true;
                        }
                    }
                }
            }
            rows.push(table);
            defined.push(mask);
        }
        Belief { rows, defined }
    }

    pub fn row(
        &self,
        agent: usize,
        g: usize,
        signal: usize,
        joint_type: usize,
    ) -> Result<ArrayView1<'_, f64>> {
        if !self.defined[agent][[g, signal, joint_type]] {
            return Err(Error::OffSupportSignal {
                agent,
                state: g,
                joint_type,
                signal,
            });
        }
        Ok(self.rows[agent].slice(ndarray::s![g, signal, joint_type, ..]))
    }
}

/// Probability that agent `agent` ends up acting on signal `selected` when
/// the principal sent `principal`, marginalizing the exogenous batch slots
/// through the agent's selection rule. Shape (state, principal, selected);
/// every (state, principal) row sums to 1.
pub fn selection_kernel(
    game: &AugmentedGame,
    beta: &SelectionRule,
    agent: usize,
    joint_type: usize,
) -> Array3<f64> {
    let s = game.spaces;
    let own_type = s.type_of(joint_type, agent);
    let mut kernel = Array3::zeros((s.n_states, s.n_signals, s.n_signals));
    for g in 0..s.n_states {
        for principal in 0..s.n_signals {
            for exo in 0..s.exo_tuples() {
                let batch = s.batch_of(principal, exo);
                let selected = beta.selected(&s, agent, g, own_type, batch);
                kernel[[g, principal, selected]] += game.exogenous[exo];
            }
        }
    }
    kernel
}

/// Distribution over joint selected-signal profiles per state: the signaling
/// rule pushed through every agent's selection kernel. Shape (state, Ω^n).
pub fn selected_profile_distribution(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    joint_type: usize,
) -> Array2<f64> {
    let s = game.spaces;
    let kernels: Vec<Array3<f64>> = (0..s.n_agents)
        .map(|i| selection_kernel(game, beta, i, joint_type))
        .collect();
    let js = s.joint_signals();
    let mut dist = Array2::zeros((s.n_states, js));
    for g in 0..s.n_states {
        for sent in 0..js {
            let p_sent = alpha.prob(joint_type, g, sent);
            if p_sent == 0.0 {
                continue;
            }
            for sel in 0..js {
                let mut p = p_sent;
                for (i, kernel) in kernels.iter().enumerate() {
                    p *= kernel[[g, s.signal_of(sent, i), s.signal_of(sel, i)]];
                    if p == 0.0 {
                        break;
                    }
                }
                dist[[g, sel]] += p;
            }
        }
    }
    dist
}

/// Joint distribution over all agents' full batches at one state. Batches
/// are tuple-encoded (base Ω^m per agent, agent 0 most significant); slot 0
/// of each batch is the principal's signal, the rest index the exogenous
/// tuple.
pub fn batch_distribution(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    g: usize,
    joint_type: usize,
    cap: u64,
) -> Result<Array1<f64>> {
    let s = game.spaces;
    let per_agent = s.batches();
    let cells = pow_cells(per_agent, s.n_agents);
    check_cap(cells, cap)?;
    let total = cells as usize;
    let mut dist = Array1::zeros(total);
    let mut batches = vec![0usize; s.n_agents];
    for joint_batch in 0..total {
        crate::spaces::decode(joint_batch, per_agent, &mut batches);
        let mut sent = 0usize;
        let mut p_exo = 1.0;
        for &batch in &batches {
            let principal = batch / s.exo_tuples();
            sent = sent * s.n_signals + principal;
            p_exo *= game.exogenous[batch % s.exo_tuples()];
        }
        dist[joint_batch] = alpha.prob(joint_type, g, sent) * p_exo;
    }
    Ok(dist)
}

/// One-step state transition kernel under the full strategy stack.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedKernel {
    /// rows[(g, g')] = probability of moving to g' from g.
    pub rows: Array2<f64>,
}

impl InducedKernel {
    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[[from, to]]
    }
}

/// Product-policy distribution over joint actions at one (state, selected
/// signal profile).
pub fn action_distribution_at(
    spaces: &Spaces,
    pi: &Policy,
    g: usize,
    selected_profile: usize,
    joint_type: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), spaces.joint_actions());
    for (aj, slot) in out.iter_mut().enumerate() {
        *slot = pi.joint_prob(
            spaces,
            g,
            aj,
            |i| spaces.signal_of(selected_profile, i),
            |i| spaces.type_of(joint_type, i),
        );
    }
}

/// Distribution over joint actions per state induced by the full stack:
/// signaling pushed through selection, then through the product policy.
/// Shape (state, A^n).
pub fn induced_action_distribution(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    joint_type: usize,
) -> Array2<f64> {
    let s = game.spaces;
    let profiles = selected_profile_distribution(game, alpha, beta, joint_type);
    let mut dist = Array2::zeros((s.n_states, s.joint_actions()));
    let mut action_row = vec![0.0; s.joint_actions()];
    for g in 0..s.n_states {
        for sel in 0..s.joint_signals() {
            let w = profiles[[g, sel]];
            if w == 0.0 {
                continue;
            }
            action_distribution_at(&s, pi, g, sel, joint_type, &mut action_row);
            for (aj, &p) in action_row.iter().enumerate() {
                dist[[g, aj]] += w * p;
            }
        }
    }
    dist
}

/// Composes the full stack with the game's transition law.
pub fn induced_transition(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    joint_type: usize,
) -> InducedKernel {
    let s = game.spaces;
    let actions = induced_action_distribution(game, alpha, beta, pi, joint_type);
    let mut rows = Array2::zeros((s.n_states, s.n_states));
    for g in 0..s.n_states {
        for aj in 0..s.joint_actions() {
            let w = actions[[g, aj]];
            if w == 0.0 {
                continue;
            }
            let t_row = game.transition_row(g, aj);
            for g2 in 0..s.n_states {
                rows[[g, g2]] += w * t_row[g2];
            }
        }
    }
    InducedKernel { rows }
}

/// Relabels the signal space of every table by the permutation `perm`
/// (new label = perm[old label]); test support for equivariance properties.
#[cfg(test)]
pub(crate) fn relabel_signals(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    perm: &[usize],
) -> (AugmentedGame, SignalingRule, SelectionRule, Policy) {
    use ndarray::Array4;
    let s = game.spaces;
    let n = s.n_signals;
    let mut inv = vec![0usize; n];
    for (old, &new) in perm.iter().enumerate() {
        inv[new] = old;
    }
    let map_tuple = |idx: usize, len: usize, table: &[usize]| -> usize {
        let mut digits = vec![0usize; len];
        crate::spaces::decode(idx, n, &mut digits);
        for d in &mut digits {
            *d = table[*d];
        }
        crate::spaces::encode(&digits, n)
    };
    let rewards = (0..s.n_agents)
        .map(|i| {
            Array4::from_shape_fn(
                (s.joint_actions(), s.n_states, n, s.n_types),
                |(a, g, w, th)| game.reward(i, a, g, inv[w], th),
            )
        })
        .collect();
    let mut exo = game.exogenous.clone();
    for e in 0..s.exo_tuples() {
        exo[map_tuple(e, s.batch_size - 1, perm)] = game.exogenous[e];
    }
    let game2 = AugmentedGame {
        rewards,
        exogenous: exo,
        ..game.clone()
    };
    let mut alpha2 = alpha.clone();
    for t in 0..s.joint_types() {
        for g in 0..s.n_states {
            for w in 0..s.joint_signals() {
                alpha2.rows[[t, g, map_tuple(w, s.n_agents, perm)]] = alpha.rows[[t, g, w]];
            }
        }
    }
    let mut beta2 = beta.clone();
    for i in 0..s.n_agents {
        for g in 0..s.n_states {
            for th in 0..s.n_types {
                for b in 0..s.batches() {
                    beta2.slots[i][[g, th, map_tuple(b, s.batch_size, perm)]] =
                        beta.slots[i][[g, th, b]];
                }
            }
        }
    }
    let mut pi2 = pi.clone();
    for i in 0..s.n_agents {
        for g in 0..s.n_states {
            for w in 0..n {
                for th in 0..s.n_types {
                    for a in 0..s.n_actions {
                        pi2.rows[i][[g, perm[w], th, a]] = pi.rows[i][[g, w, th, a]];
                    }
                }
            }
        }
    }
    (game2, alpha2, beta2, pi2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{
        random_game, random_policy, random_selection, random_signaling, validate_game,
    };
    use crate::spaces::{component, encode, DEFAULT_CELL_CAP};

    fn spaces2() -> Spaces {
        Spaces {
            n_agents: 2,
            n_states: 2,
            n_actions: 2,
            n_signals: 2,
            n_types: 1,
            batch_size: 2,
        }
    }

    #[test]
    fn independent_signaling_gives_signal_independent_belief() {
        let s = spaces2();
        // alpha = product of per-agent marginals (0.3, 0.7) x (0.6, 0.4).
        let mut alpha = SignalingRule::uniform(&s);
        let m1 = [0.3, 0.7];
        let m2 = [0.6, 0.4];
        for g in 0..s.n_states {
            for w in 0..s.joint_signals() {
                alpha.rows[[0, g, w]] = m1[component(w, 0, 2, 2)] * m2[component(w, 1, 2, 2)];
            }
        }
        for own in 0..2 {
            let row = belief_update(&s, &alpha, 0, 0, 0, own).unwrap();
            assert!((row[0] - 0.6).abs() < 1e-15);
            assert!((row[1] - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn correlated_signaling_belief_matches_hand_bayes() {
        let s = spaces2();
        let mut alpha = SignalingRule::uniform(&s);
        // Joint table over (omega_1, omega_2): [[0.4, 0.1], [0.1, 0.4]].
        let table = [[0.4, 0.1], [0.1, 0.4]];
        for w in 0..4 {
            alpha.rows[[0, 0, w]] = table[component(w, 0, 2, 2)][component(w, 1, 2, 2)];
        }
        let row = belief_update(&s, &alpha, 0, 0, 0, 0).unwrap();
        assert!((row[0] - 0.8).abs() < 1e-15);
        assert!((row[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_agent_belief_is_empty_tuple_point_mass() {
        let s = Spaces { n_agents: 1, ..spaces2() };
        let alpha = random_signaling(3, &s);
        let row = belief_update(&s, &alpha, 0, 0, 0, 0).unwrap();
        assert_eq!(row, vec![1.0]);
    }

    #[test]
    fn off_support_signal_is_an_error_not_a_default() {
        let s = spaces2();
        let mut alpha = SignalingRule::uniform(&s);
        // Agent 0 never receives signal 1 at state 0.
        alpha.rows[[0, 0, 0]] = 0.6;
        alpha.rows[[0, 0, 1]] = 0.4;
        alpha.rows[[0, 0, 2]] = 0.0;
        alpha.rows[[0, 0, 3]] = 0.0;
        match belief_update(&s, &alpha, 0, 0, 0, 1) {
            Err(Error::OffSupportSignal { agent: 0, state: 0, signal: 1, .. }) => {}
            other => panic!("expected off-support error, got {other:?}"),
        }
        let belief = Belief::from_signaling(&s, &alpha);
        assert!(belief.row(0, 0, 1, 0).is_err());
        assert!(belief.row(0, 0, 0, 0).is_ok());
    }

    #[test]
    fn batch_distribution_matches_hand_product() {
        let s = spaces2();
        let mut game = random_game(1, s, (0.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        game.exogenous[0] = 0.25;
        game.exogenous[1] = 0.75;
        let alpha = random_signaling(2, &s);
        let dist = batch_distribution(&game, &alpha, 1, 0, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(dist.len(), 16);
        let mut total = 0.0;
        for b1 in 0..4 {
            for b2 in 0..4 {
                let sent = encode(&[b1 / 2, b2 / 2], 2);
                let expect = alpha.prob(0, 1, sent) * game.exogenous[b1 % 2] * game.exogenous[b2 % 2];
                let got = dist[b1 * 4 + b2];
                assert!((got - expect).abs() < 1e-15);
                total += got;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_distribution_point_mass_on_singleton_signal_space() {
        let s = Spaces { n_agents: 1, n_signals: 1, ..spaces2() };
        let game = random_game(5, s, (0.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let alpha = SignalingRule::uniform(&s);
        let dist = batch_distribution(&game, &alpha, 0, 0, DEFAULT_CELL_CAP).unwrap();
        assert_eq!(dist.to_vec(), vec![1.0]);
    }

    #[test]
    fn batch_distribution_respects_cap() {
        let s = Spaces { n_signals: 6, batch_size: 4, ..spaces2() };
        let game = random_game(6, s, (0.0, 1.0), u64::MAX).unwrap();
        let alpha = random_signaling(7, &s);
        // 6^4 batches per agent, squared = 1.7M joint cells.
        match batch_distribution(&game, &alpha, 0, 0, 1_000_000) {
            Err(Error::CapExceeded { .. }) => {}
            other => panic!("expected cap refusal, got {other:?}"),
        }
    }

    #[test]
    fn selection_kernel_rows_are_distributions_and_obedient_is_identity() {
        let s = spaces2();
        let game = random_game(8, s, (0.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let obedient = SelectionRule::obedient(&s);
        let kernel = selection_kernel(&game, &obedient, 0, 0);
        for g in 0..s.n_states {
            for p in 0..s.n_signals {
                for sel in 0..s.n_signals {
                    let expect = if p == sel { 1.0 } else { 0.0 };
                    assert!((kernel[[g, p, sel]] - expect).abs() < 1e-15);
                }
            }
        }
        let beta = random_selection(9, &s);
        let kernel = selection_kernel(&game, &beta, 1, 0);
        for g in 0..s.n_states {
            for p in 0..s.n_signals {
                let total: f64 = (0..s.n_signals).map(|sel| kernel[[g, p, sel]]).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn induced_kernel_rows_are_distributions() {
        for seed in 0..20 {
            let s = spaces2();
            let game = random_game(seed, s, (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
            assert!(validate_game(&game).is_empty());
            let alpha = random_signaling(seed + 100, &s);
            let beta = random_selection(seed + 200, &s);
            let pi = random_policy(seed + 300, &s);
            let kernel = induced_transition(&game, &alpha, &beta, &pi, 0);
            for g in 0..s.n_states {
                let total: f64 = (0..s.n_states).map(|g2| kernel.prob(g, g2)).sum();
                assert!((total - 1.0).abs() < 1e-12, "row {g} sums to {total}");
            }
        }
    }

    #[test]
    fn obedient_kernel_ignores_exogenous_distribution() {
        let s = spaces2();
        let mut game_a = random_game(31, s, (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let mut game_b = game_a.clone();
        game_a.exogenous[0] = 0.9;
        game_a.exogenous[1] = 0.1;
        game_b.exogenous[0] = 0.2;
        game_b.exogenous[1] = 0.8;
        let alpha = random_signaling(32, &s);
        let beta = SelectionRule::obedient(&s);
        let pi = random_policy(33, &s);
        let ka = induced_transition(&game_a, &alpha, &beta, &pi, 0);
        let kb = induced_transition(&game_b, &alpha, &beta, &pi, 0);
        assert_eq!(ka, kb);
    }

    #[test]
    fn induced_kernel_is_equivariant_under_signal_relabeling() {
        let s = spaces2();
        let game = random_game(41, s, (-1.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let alpha = random_signaling(42, &s);
        let beta = random_selection(43, &s);
        let pi = random_policy(44, &s);
        let (game2, alpha2, beta2, pi2) = relabel_signals(&game, &alpha, &beta, &pi, &[1, 0]);
        let k1 = induced_transition(&game, &alpha, &beta, &pi, 0);
        let k2 = induced_transition(&game2, &alpha2, &beta2, &pi2, 0);
        for g in 0..s.n_states {
            for g2 in 0..s.n_states {
                assert!((k1.prob(g, g2) - k2.prob(g, g2)).abs() < 1e-12);
            }
        }
        let d1 = induced_action_distribution(&game, &alpha, &beta, &pi, 0);
        let d2 = induced_action_distribution(&game2, &alpha2, &beta2, &pi2, 0);
        for g in 0..s.n_states {
            for aj in 0..s.joint_actions() {
                assert!((d1[[g, aj]] - d2[[g, aj]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn selected_profiles_factor_through_batch_distribution() {
        // Marginalizing the full batch table over selections must agree with
        // the factored selected-profile distribution.
        let s = spaces2();
        let game = random_game(51, s, (0.0, 1.0), DEFAULT_CELL_CAP).unwrap();
        let alpha = random_signaling(52, &s);
        let beta = random_selection(53, &s);
        let profiles = selected_profile_distribution(&game, &alpha, &beta, 0);
        for g in 0..s.n_states {
            let batch_dist = batch_distribution(&game, &alpha, g, 0, DEFAULT_CELL_CAP).unwrap();
            let mut from_batches = vec![0.0; s.joint_signals()];
            let mut batches = vec![0usize; s.n_agents];
            for jb in 0..batch_dist.len() {
                crate::spaces::decode(jb, s.batches(), &mut batches);
                let mut sel = 0usize;
                for (i, &b) in batches.iter().enumerate() {
                    sel = sel * s.n_signals + beta.selected(&s, i, g, 0, b);
                }
                from_batches[sel] += batch_dist[jb];
            }
            for sel in 0..s.joint_signals() {
                assert!((from_batches[sel] - profiles[[g, sel]]).abs() < 1e-12);
            }
        }
    }
}
