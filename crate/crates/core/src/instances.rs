//! Hand-built games with known certified designs. Tests and the acceptance
//! checks share them: a two-agent coordination family whose revealing design
//! is strictly optimal, a dominant-action family whose margin survives small
//! action effects on transitions, and the exact single-agent stack.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{AugmentedGame, Goal, Policy, SelectionRule, SignalingRule};
use crate::principal::induced_goal;
use crate::spaces::{Spaces, DEFAULT_CELL_CAP};

/// A game together with a design pair and the goal it induces, built so the
/// pair certifies with strict margins.
#[derive(Debug, Clone)]
pub struct PlantedDesign {
    pub game: AugmentedGame,
    pub alpha: SignalingRule,
    pub pi: Policy,
    pub goal: Goal,
}

/// Two agents, two actions and signals. Each state has a target signal pair;
/// the signaling rule reveals it, policies repeat their signal, and rewards
/// pay 2 for acting on the target, 1 for acting on any other selected
/// signal, 0 for ignoring it. Transitions ignore actions, so every margin is
/// decided in the stage: following the revealed target beats everything else
/// strictly as long as the exogenous source is interior, which the sampled
/// rows are.
pub fn matching_design(seed: u64, states: usize) -> PlantedDesign {
    let s = Spaces {
        n_agents: 2,
        n_states: states,
        n_actions: 2,
        n_signals: 2,
        n_types: 1,
        batch_size: 2,
    };
    let mut game = crate::game::random_game(seed, s, (0.0, 1.0), DEFAULT_CELL_CAP)
        .expect("planted spaces are tiny");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x51a0_9e66_77f0_c4d1));
    let targets: Vec<[usize; 2]> = (0..states)
        .map(|_| [rng.gen_range(0..s.n_signals), rng.gen_range(0..s.n_signals)])
        .collect();

    for g in 0..states {
        let base = game.transition_row(g, 0).to_owned();
        for aj in 1..s.joint_actions() {
            game.transition
                .row_mut(g * s.joint_actions() + aj)
                .assign(&base);
        }
    }
    for i in 0..2 {
        for aj in 0..s.joint_actions() {
            let own = s.action_of(aj, i);
            for g in 0..states {
                for w in 0..s.n_signals {
                    let pay = if own != w {
                        0.0
                    } else if w == targets[g][i] {
                        2.0
                    } else {
                        1.0
                    };
                    game.rewards[i][[aj, g, w, 0]] = pay;
                }
            }
        }
    }

    let mut alpha = SignalingRule::uniform(&s);
    alpha.rows.fill(0.0);
    for g in 0..states {
        let sel = crate::spaces::encode(&[targets[g][0], targets[g][1]], s.n_signals);
        alpha.rows[[0, g, sel]] = 1.0;
    }
    let mut pi = Policy::uniform(&s);
    for t in &mut pi.rows {
        t.fill(0.0);
    }
    for i in 0..2 {
        for g in 0..states {
            for w in 0..s.n_signals {
                pi.rows[i][[g, w, 0, w]] = 1.0;
            }
        }
    }
    let goal = induced_goal(&game, &alpha, &pi);
    PlantedDesign {
        game,
        alpha,
        pi,
        goal,
    }
}

/// Every agent earns 1 for playing `favored` and 0 otherwise, independent of
/// state, signals and opponents, so `favored` dominates every policy check
/// and ties every selection. Transitions blend the action-independent
/// baseline with the sampled action-dependent rows at weight `eps`; any
/// weight keeps the dominance strict because the stage margin is 1 while
/// values stay flat in the reward structure.
pub fn dominant_action_game(seed: u64, spaces: Spaces, favored: usize, eps: f64) -> AugmentedGame {
    let mut game = crate::game::random_game(seed, spaces, (0.0, 1.0), DEFAULT_CELL_CAP)
        .expect("caller keeps spaces small");
    let s = game.spaces;
    for g in 0..s.n_states {
        let base = game.transition_row(g, 0).to_owned();
        for aj in 0..s.joint_actions() {
            let mut row = game.transition.row_mut(g * s.joint_actions() + aj);
            for g2 in 0..s.n_states {
                row[g2] = (1.0 - eps) * base[g2] + eps * row[g2];
            }
        }
    }
    for i in 0..s.n_agents {
        for aj in 0..s.joint_actions() {
            let pay = if s.action_of(aj, i) == favored { 1.0 } else { 0.0 };
            for g in 0..s.n_states {
                for w in 0..s.n_signals {
                    for ty in 0..s.n_types {
                        game.rewards[i][[aj, g, w, ty]] = pay;
                    }
                }
            }
        }
    }
    game
}

/// Optimal single-agent stack: joint value iteration over the selection slot
/// and the action, then greedy extraction. The policy acts greedily on each
/// selected signal and the selection picks the best slot of each batch.
pub fn single_agent_optimal(
    game: &AugmentedGame,
    alpha: &SignalingRule,
) -> (SelectionRule, Policy, Array1<f64>) {
    let s = game.spaces;
    assert_eq!(s.n_agents, 1);
    assert_eq!(s.n_types, 1);
    let mut j = Array1::<f64>::zeros(s.n_states);
    for _ in 0..200_000 {
        let mut next = Array1::zeros(s.n_states);
        let mut change = 0.0f64;
        for g in 0..s.n_states {
            let mut total = 0.0;
            for w_sent in 0..s.n_signals {
                let pw = alpha.prob(0, g, w_sent);
                if pw == 0.0 {
                    continue;
                }
                for exo in 0..s.exo_tuples() {
                    let pe = game.exogenous[exo];
                    if pe == 0.0 {
                        continue;
                    }
                    let batch = s.batch_of(w_sent, exo);
                    let mut best = f64::NEG_INFINITY;
                    for slot in 0..s.batch_size {
                        let w = s.batch_slot(batch, slot);
                        for a in 0..s.n_actions {
                            let t_row = game.transition_row(g, a);
                            let mut q = game.reward(0, a, g, w, 0);
                            for g2 in 0..s.n_states {
                                q += game.discount * t_row[g2] * j[g2];
                            }
                            best = best.max(q);
                        }
                    }
                    total += pw * pe * best;
                }
            }
            change = change.max((total - j[g]).abs());
            next[g] = total;
        }
        j = next;
        if change <= 1e-14 {
            break;
        }
    }
    let mut pi = Policy::uniform(&s);
    pi.rows[0].fill(0.0);
    let q_of = |g: usize, w: usize, a: usize| {
        let t_row = game.transition_row(g, a);
        let mut q = game.reward(0, a, g, w, 0);
        for g2 in 0..s.n_states {
            q += game.discount * t_row[g2] * j[g2];
        }
        q
    };
    let mut best_action = Array2::<usize>::zeros((s.n_states, s.n_signals));
    for g in 0..s.n_states {
        for w in 0..s.n_signals {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..s.n_actions {
                let q = q_of(g, w, a);
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            pi.rows[0][[g, w, 0, best_a]] = 1.0;
            best_action[[g, w]] = best_a;
        }
    }
    let mut beta = SelectionRule::obedient(&s);
    for g in 0..s.n_states {
        for batch in 0..s.batches() {
            let mut best_slot = 0;
            let mut best_q = f64::NEG_INFINITY;
            for slot in 0..s.batch_size {
                let w = s.batch_slot(batch, slot);
                let q = q_of(g, w, best_action[[g, w]]);
                if q > best_q {
                    best_q = q;
                    best_slot = slot;
                }
            }
            beta.slots[0][[g, 0, batch]] = best_slot;
        }
    }
    (beta, pi, j)
}
