//! Certification of solution-concept conditions: Markov correlated
//! equilibrium on the canonical projection, one-shot deviation optimality,
//! DS and Bayesian obedience, strong and weak admissibility, Nash goals,
//! obedient implementability, and the constructive transformation from an
//! arbitrary selection profile to a direct (obedient) design.
//!
//! Every check enumerates its condition family in lexicographic index order
//! and reports the worst violation with the first witness attaining it, so
//! reports are deterministic. Joint types with zero prior probability are
//! skipped: conditions bind only on realizable types.

use ndarray::{Array1, Array2, Array3, ArrayView1};

use crate::dynamics::{
    belief_update, induced_action_distribution, selected_profile_distribution, selection_kernel,
};
use crate::error::{Error, Result};
use crate::game::{AugmentedGame, CanonicalGame, Goal, Policy, SelectionRule, SignalingRule};
use crate::spaces::{check_cap, component, insert_component, pow_cells};
use crate::valuation::{
    canonical_values, evaluate_values, interim_payoff_from_values, JointPolicy,
    ValueBundle,
};

/// Verdict for one certified condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub name: &'static str,
    pub pass: bool,
    /// Worst constraint violation found; 0 when every comparison held with
    /// slack.
    pub violation: f64,
    /// Index tuple attaining the worst violation (first in lexicographic
    /// enumeration order among ties); present whenever a positive violation
    /// was seen.
    pub witness: Option<String>,
    pub tolerance: f64,
}

/// A bundle of condition verdicts; passes iff every member passes.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub conditions: Vec<ConditionReport>,
}

impl CertificationReport {
    pub fn pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn worst(&self) -> f64 {
        self.conditions.iter().fold(0.0f64, |m, c| m.max(c.violation))
    }
}

/// Tracks the maximum violation with a first-in-order witness; strict
/// replacement keeps the lexicographically earliest witness among ties.
#[derive(Debug, Clone)]
pub(crate) struct WorstTracker {
    violation: f64,
    witness: Option<String>,
}

impl WorstTracker {
    pub(crate) fn new() -> Self {
        WorstTracker {
            violation: 0.0,
            witness: None,
        }
    }

    pub(crate) fn observe(&mut self, violation: f64, witness: impl FnOnce() -> String) {
        if violation > self.violation {
            self.violation = violation;
            self.witness = Some(witness());
        }
    }

    pub(crate) fn into_report(self, name: &'static str, tolerance: f64) -> ConditionReport {
        ConditionReport {
            name,
            pass: self.violation <= tolerance,
            violation: self.violation,
            witness: self.witness,
            tolerance,
        }
    }

    pub(crate) fn into_parts(self) -> (f64, Option<String>) {
        (self.violation, self.witness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObedienceMode {
    DominantStrategy,
    Bayesian,
}

impl std::str::FromStr for ObedienceMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ds" => Ok(ObedienceMode::DominantStrategy),
            "bayesian" => Ok(ObedienceMode::Bayesian),
            other => Err(format!("unknown obedience mode {other:?} (expected ds|bayesian)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmissibilityMode {
    Strong,
    Weak,
}

impl std::str::FromStr for AdmissibilityMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "strong" => Ok(AdmissibilityMode::Strong),
            "weak" => Ok(AdmissibilityMode::Weak),
            other => Err(format!("unknown admissibility mode {other:?} (expected strong|weak)")),
        }
    }
}

/// Joint types the checks must cover: positive prior probability.
fn supported_types(game: &AugmentedGame) -> Vec<usize> {
    (0..game.spaces.joint_types())
        .filter(|&tj| game.type_prior[tj] > 0.0)
        .collect()
}

/// One-period value of agent `agent` at state `g` when the principal sent it
/// `sent_own` (conditioning its belief), it acts on signal `selected_own`,
/// opponents' selected signals flow through `kernels`, actions follow the
/// policies (own action forced to `own_action` when given), and future play
/// is worth `cont` per next state.
#[allow(clippy::too_many_arguments)]
fn conditional_stage_value(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    kernels: &[Array3<f64>],
    agent: usize,
    joint_type: usize,
    g: usize,
    sent_own: usize,
    selected_own: usize,
    own_action: Option<usize>,
    cont: ArrayView1<'_, f64>,
) -> Result<f64> {
    let s = game.spaces;
    let own_type = s.type_of(joint_type, agent);
    let belief = belief_update(&s, alpha, g, joint_type, agent, sent_own)?;
    let n_opp = s.opponent_signals();
    let mut total = 0.0;
    for (sent_others, &mu) in belief.iter().enumerate() {
        if mu == 0.0 {
            continue;
        }
        for sel_others in 0..n_opp {
            let mut w_sel = mu;
            let mut pos = 0usize;
            for j in 0..s.n_agents {
                if j == agent {
                    continue;
                }
                let sent_j = component(sent_others, pos, s.n_signals, s.n_agents - 1);
                let sel_j = component(sel_others, pos, s.n_signals, s.n_agents - 1);
                w_sel *= kernels[j][[g, sent_j, sel_j]];
                pos += 1;
                if w_sel == 0.0 {
                    break;
                }
            }
            if w_sel == 0.0 {
                continue;
            }
            for others_a in 0..s.n_actions.pow((s.n_agents - 1) as u32) {
                let mut w_act = w_sel;
                let mut pos = 0usize;
                for j in 0..s.n_agents {
                    if j == agent {
                        continue;
                    }
                    let sel_j = component(sel_others, pos, s.n_signals, s.n_agents - 1);
                    let a_j = component(others_a, pos, s.n_actions, s.n_agents - 1);
                    w_act *= pi.prob(j, g, sel_j, s.type_of(joint_type, j), a_j);
                    pos += 1;
                    if w_act == 0.0 {
                        break;
                    }
                }
                if w_act == 0.0 {
                    continue;
                }
                for a_own in 0..s.n_actions {
                    let p_own = match own_action {
                        Some(forced) => {
                            if a_own == forced {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        None => pi.prob(agent, g, selected_own, own_type, a_own),
                    };
                    if p_own == 0.0 {
                        continue;
                    }
                    let aj = insert_component(others_a, a_own, agent, s.n_actions, s.n_agents);
                    let t_row = game.transition_row(g, aj);
                    let mut next = 0.0;
                    for g2 in 0..s.n_states {
                        next += t_row[g2] * cont[g2];
                    }
                    total += w_act
                        * p_own
                        * (game.reward(agent, aj, g, selected_own, own_type)
                            + game.discount * next);
                }
            }
        }
    }
    Ok(total)
}

/// Markov correlated equilibrium on one canonical projection: every
/// supported own action must weakly beat every deviation against the
/// opponents' action marginal.
pub fn check_mce(canon: &CanonicalGame, pihat: &JointPolicy, tol: f64) -> Result<ConditionReport> {
    let values = canonical_values(canon, pihat)?;
    let n = canon.n_agents;
    let n_a = canon.n_actions;
    let ja = canon.joint_actions();
    let mut tracker = WorstTracker::new();
    for g in 0..canon.n_states {
        for i in 0..n {
            // Deviation payoffs against the opponents' marginal.
            let mut dev = vec![0.0f64; n_a];
            for others in 0..n_a.pow((n - 1) as u32) {
                let mut marg = 0.0;
                for own in 0..n_a {
                    marg += pihat.rows[[g, insert_component(others, own, i, n_a, n)]];
                }
                if marg == 0.0 {
                    continue;
                }
                for (own, slot) in dev.iter_mut().enumerate() {
                    let aj = insert_component(others, own, i, n_a, n);
                    *slot += marg * interim_payoff_from_values(canon, &values, i, g, aj);
                }
            }
            for aj in 0..ja {
                if pihat.rows[[g, aj]] == 0.0 {
                    continue;
                }
                let own = component(aj, i, n_a, n);
                for dev_a in 0..n_a {
                    tracker.observe(dev[dev_a] - dev[own], || {
                        format!(
                            "state={g} agent={i} action_profile={aj} action={own} deviation={dev_a}"
                        )
                    });
                }
            }
        }
    }
    Ok(tracker.into_report("mce", tol))
}

/// MCE across every supported joint type, with the joint policy taken as the
/// product of the agents' policies at one fixed signal.
pub fn check_mce_profile(
    game: &AugmentedGame,
    pi: &Policy,
    fixed_signal: usize,
    tol: f64,
) -> Result<ConditionReport> {
    let mut tracker = WorstTracker::new();
    for tj in supported_types(game) {
        let canon = crate::game::canonical_projection(game, tj, fixed_signal)?;
        let pihat = JointPolicy::from_product(&game.spaces, pi, fixed_signal, tj);
        let part = check_mce(&canon, &pihat, tol)?;
        tracker.observe(part.violation, || {
            format!("joint_type={tj} {}", part.witness.as_deref().unwrap_or(""))
        });
    }
    Ok(tracker.into_report("mce", tol))
}

/// One-shot deviation optimality: no single-period selection deviation
/// improves any agent's state value, and no single-period action deviation
/// improves any agent's value at a realizable selected profile.
pub fn check_one_shot(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    tol: f64,
) -> Result<ConditionReport> {
    let s = game.spaces;
    let mut tracker = WorstTracker::new();
    for tj in supported_types(game) {
        let bundle = evaluate_values(game, alpha, beta, pi, tj)?;
        let kernels: Vec<Array3<f64>> = (0..s.n_agents)
            .map(|j| selection_kernel(game, beta, j, tj))
            .collect();
        let profiles = selected_profile_distribution(game, alpha, beta, tj);

        for i in 0..s.n_agents {
            for g in 0..s.n_states {
                // Selection family: the best one-period batch-to-slot map.
                // Its improvement decomposes per batch because batches are
                // disjoint events.
                let mut stage = Array2::from_elem((s.n_signals, s.n_signals), f64::NAN);
                for sent in 0..s.n_signals {
                    if alpha.marginal(&s, tj, g, i, sent) == 0.0 {
                        continue;
                    }
                    for sel in 0..s.n_signals {
                        stage[[sent, sel]] = conditional_stage_value(
                            game,
                            alpha,
                            pi,
                            &kernels,
                            i,
                            tj,
                            g,
                            sent,
                            sel,
                            None,
                            bundle.j.row(i),
                        )?;
                    }
                }
                // The best one-period map improves independently per batch,
                // so its total gain is the sum of per-batch gains; the
                // witness is the batch contributing most.
                let mut map_gain = 0.0;
                let mut best_batch = (0usize, 0usize);
                let mut best_contrib = 0.0;
                for batch in 0..s.batches() {
                    let sent = batch / s.exo_tuples();
                    let marg = alpha.marginal(&s, tj, g, i, sent);
                    let p_exo = game.exogenous[batch % s.exo_tuples()];
                    let weight = marg * p_exo;
                    if weight == 0.0 {
                        continue;
                    }
                    let eq_slot = beta.slot(i, g, s.type_of(tj, i), batch);
                    let eq_val = stage[[sent, s.batch_slot(batch, eq_slot)]];
                    let mut best_val = f64::NEG_INFINITY;
                    let mut best_slot = 0;
                    for slot in 0..s.batch_size {
                        let v = stage[[sent, s.batch_slot(batch, slot)]];
                        if v > best_val {
                            best_val = v;
                            best_slot = slot;
                        }
                    }
                    let contrib = weight * (best_val - eq_val);
                    if contrib > best_contrib {
                        best_contrib = contrib;
                        best_batch = (batch, best_slot);
                    }
                    map_gain += contrib;
                }
                tracker.observe(map_gain, || {
                    let (batch, slot) = best_batch;
                    format!(
                        "family=selection joint_type={tj} agent={i} state={g} batch={batch} slot={slot}"
                    )
                });

                // Policy family: action deviations at realizable profiles.
                for sel in 0..s.joint_signals() {
                    if profiles[[g, sel]] == 0.0 {
                        continue;
                    }
                    let own_signal = s.signal_of(sel, i);
                    for dev_a in 0..s.n_actions {
                        let mut dev_val = 0.0;
                        for others_a in 0..s.n_actions.pow((s.n_agents - 1) as u32) {
                            let mut w = 1.0;
                            let mut pos = 0usize;
                            for j in 0..s.n_agents {
                                if j == i {
                                    continue;
                                }
                                let a_j = component(others_a, pos, s.n_actions, s.n_agents - 1);
                                w *= pi.prob(
                                    j,
                                    g,
                                    s.signal_of(sel, j),
                                    s.type_of(tj, j),
                                    a_j,
                                );
                                pos += 1;
                                if w == 0.0 {
                                    break;
                                }
                            }
                            if w == 0.0 {
                                continue;
                            }
                            let aj =
                                insert_component(others_a, dev_a, i, s.n_actions, s.n_agents);
                            dev_val += w * bundle.q[i][[aj, g, own_signal]];
                        }
                        tracker.observe(dev_val - bundle.v[i][[g, sel]], || {
                            format!(
                                "family=policy joint_type={tj} agent={i} state={g} profile={sel} action={dev_a}"
                            )
                        });
                    }
                }
            }
        }
    }
    Ok(tracker.into_report("one-shot", tol))
}

/// Obedience of the principal's slot under obedient opponents (Bayesian) or
/// under every deterministic opponent selection behavior (dominant
/// strategy). The cap bounds the DS enumeration of opponent maps.
pub fn check_obedience(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    mode: ObedienceMode,
    tol: f64,
    cap: u64,
) -> Result<ConditionReport> {
    let s = game.spaces;
    let obedient = SelectionRule::obedient(&s);
    let mut tracker = WorstTracker::new();
    let maps_per_opponent = pow_cells(s.batch_size, s.batches());
    if mode == ObedienceMode::DominantStrategy {
        let combos = maps_per_opponent
            .checked_pow((s.n_agents - 1) as u32)
            .unwrap_or(u128::MAX);
        check_cap(combos, cap)?;
    }

    for tj in supported_types(game) {
        let bundle = evaluate_values(game, alpha, &obedient, pi, tj)?;
        for i in 0..s.n_agents {
            match mode {
                ObedienceMode::Bayesian => {
                    let kernels: Vec<Array3<f64>> = (0..s.n_agents)
                        .map(|j| selection_kernel(game, &obedient, j, tj))
                        .collect();
                    observe_slot_dominance(
                        game, alpha, pi, &kernels, &bundle, i, tj, &mut tracker, None,
                    )?;
                }
                ObedienceMode::DominantStrategy => {
                    let maps = maps_per_opponent as usize;
                    let combos = (maps as u128).pow((s.n_agents - 1) as u32) as usize;
                    for combo in 0..combos {
                        let mut kernels: Vec<Array3<f64>> = Vec::with_capacity(s.n_agents);
                        let mut pos = 0usize;
                        for j in 0..s.n_agents {
                            if j == i {
                                // Placeholder; the deviating agent's kernel
                                // is never read.
                                kernels.push(Array3::zeros((1, 1, 1)));
                                continue;
                            }
                            let map_idx = component(combo, pos, maps, s.n_agents - 1);
                            kernels.push(map_selection_kernel(game, map_idx));
                            pos += 1;
                        }
                        observe_slot_dominance(
                            game,
                            alpha,
                            pi,
                            &kernels,
                            &bundle,
                            i,
                            tj,
                            &mut tracker,
                            Some(combo),
                        )?;
                    }
                }
            }
        }
    }
    Ok(tracker.into_report("obedience", tol))
}

/// Selection kernel under an arbitrary batch-to-slot map (digit `batch` of
/// `map_idx` in base m).
fn map_selection_kernel(game: &AugmentedGame, map_idx: usize) -> Array3<f64> {
    let s = game.spaces;
    let mut kernel = Array3::zeros((s.n_states, s.n_signals, s.n_signals));
    for g in 0..s.n_states {
        for principal in 0..s.n_signals {
            for exo in 0..s.exo_tuples() {
                let batch = s.batch_of(principal, exo);
                let slot = component(map_idx, batch, s.batch_size, s.batches());
                let selected = s.batch_slot(batch, slot);
                kernel[[g, principal, selected]] += game.exogenous[exo];
            }
        }
    }
    kernel
}

/// Compares the principal-slot value against every alternative slot of every
/// on-support batch for one agent, at the given opponent selection kernels.
#[allow(clippy::too_many_arguments)]
fn observe_slot_dominance(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    kernels: &[Array3<f64>],
    bundle: &ValueBundle,
    agent: usize,
    tj: usize,
    tracker: &mut WorstTracker,
    opp_maps: Option<usize>,
) -> Result<()> {
    let s = game.spaces;
    for g in 0..s.n_states {
        let mut stage = Array2::from_elem((s.n_signals, s.n_signals), f64::NAN);
        for sent in 0..s.n_signals {
            if alpha.marginal(&s, tj, g, agent, sent) == 0.0 {
                continue;
            }
            for sel in 0..s.n_signals {
                stage[[sent, sel]] = conditional_stage_value(
                    game,
                    alpha,
                    pi,
                    kernels,
                    agent,
                    tj,
                    g,
                    sent,
                    sel,
                    None,
                    bundle.j.row(agent),
                )?;
            }
        }
        for batch in 0..s.batches() {
            let sent = batch / s.exo_tuples();
            if alpha.marginal(&s, tj, g, agent, sent) == 0.0
                || game.exogenous[batch % s.exo_tuples()] == 0.0
            {
                continue;
            }
            let principal_val = stage[[sent, sent]];
            for slot in 1..s.batch_size {
                let alt = s.batch_slot(batch, slot);
                tracker.observe(stage[[sent, alt]] - principal_val, || match opp_maps {
                    Some(combo) => format!(
                        "joint_type={tj} agent={agent} state={g} batch={batch} slot={slot} opp_maps={combo}"
                    ),
                    None => format!(
                        "joint_type={tj} agent={agent} state={g} batch={batch} slot={slot}"
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Agreement between the goal and the induced action distribution: exact
/// distributional match (strong) or equality of every agent's expected
/// one-period reward (weak). Both sides of the weak equality pair rewards
/// with the same equilibrium selected-signal marginal, so a strong pass
/// forces a weak pass.
pub fn check_admissibility(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    goal: &Goal,
    mode: AdmissibilityMode,
    tol: f64,
) -> Result<ConditionReport> {
    let s = game.spaces;
    let mut tracker = WorstTracker::new();
    for tj in supported_types(game) {
        let induced = induced_action_distribution(game, alpha, beta, pi, tj);
        match mode {
            AdmissibilityMode::Strong => {
                for g in 0..s.n_states {
                    for aj in 0..s.joint_actions() {
                        let diff = (goal.prob(tj, g, aj) - induced[[g, aj]]).abs();
                        tracker.observe(diff, || {
                            format!("joint_type={tj} state={g} action_profile={aj}")
                        });
                    }
                }
            }
            AdmissibilityMode::Weak => {
                let profiles = selected_profile_distribution(game, alpha, beta, tj);
                for i in 0..s.n_agents {
                    let own_type = s.type_of(tj, i);
                    for g in 0..s.n_states {
                        // Own selected-signal marginal, shared by both sides.
                        let mut ms = vec![0.0f64; s.n_signals];
                        for sel in 0..s.joint_signals() {
                            ms[s.signal_of(sel, i)] += profiles[[g, sel]];
                        }
                        let mut lhs = 0.0;
                        let mut rhs = 0.0;
                        for aj in 0..s.joint_actions() {
                            let mut avg_r = 0.0;
                            for (w, &mw) in ms.iter().enumerate() {
                                if mw != 0.0 {
                                    avg_r += mw * game.reward(i, aj, g, w, own_type);
                                }
                            }
                            lhs += goal.prob(tj, g, aj) * avg_r;
                            rhs += induced[[g, aj]] * avg_r;
                        }
                        tracker.observe((lhs - rhs).abs(), || {
                            format!("joint_type={tj} agent={i} state={g}")
                        });
                    }
                }
            }
        }
    }
    let name = match mode {
        AdmissibilityMode::Strong => "admissibility-strong",
        AdmissibilityMode::Weak => "admissibility-weak",
    };
    Ok(tracker.into_report(name, tol))
}

/// Per-agent one-stage best-response consistency of the goal under the
/// signaling rule's own-signal marginals.
pub fn check_nash_goal(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    goal: &Goal,
    tol: f64,
) -> Result<ConditionReport> {
    let s = game.spaces;
    let mut tracker = WorstTracker::new();
    for tj in supported_types(game) {
        for i in 0..s.n_agents {
            let own_type = s.type_of(tj, i);
            for g in 0..s.n_states {
                for sent in 0..s.n_signals {
                    let marg = alpha.marginal(&s, tj, g, i, sent);
                    if marg == 0.0 {
                        continue;
                    }
                    // Goal-marginal-weighted one-stage payoff per own action.
                    let mut payoff = vec![0.0f64; s.n_actions];
                    for others in 0..s.n_actions.pow((s.n_agents - 1) as u32) {
                        let km = goal.opponent_marginal(&s, tj, g, i, others);
                        if km == 0.0 {
                            continue;
                        }
                        for (own, slot) in payoff.iter_mut().enumerate() {
                            let aj = insert_component(others, own, i, s.n_actions, s.n_agents);
                            *slot += km * marg * game.reward(i, aj, g, sent, own_type);
                        }
                    }
                    for aj in 0..s.joint_actions() {
                        if goal.prob(tj, g, aj) == 0.0 {
                            continue;
                        }
                        let own = component(aj, i, s.n_actions, s.n_agents);
                        for dev in 0..s.n_actions {
                            tracker.observe(payoff[dev] - payoff[own], || {
                                format!(
                                    "joint_type={tj} agent={i} state={g} signal={sent} action_profile={aj} deviation={dev}"
                                )
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(tracker.into_report("nash-goal", tol))
}

/// Obedient implementability: one-shot optimality at the obedient selection,
/// obedience of the principal's slot, and admissibility of the goal, as one
/// conjunction report.
pub fn check_oil(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    goal: &Goal,
    obedience_mode: ObedienceMode,
    admissibility_mode: AdmissibilityMode,
    tol: f64,
    cap: u64,
) -> Result<CertificationReport> {
    let obedient = SelectionRule::obedient(&game.spaces);
    let one_shot = check_one_shot(game, alpha, &obedient, pi, tol)?;
    let obedience = check_obedience(game, alpha, pi, obedience_mode, tol, cap)?;
    let admissibility =
        check_admissibility(game, alpha, &obedient, pi, goal, admissibility_mode, tol)?;
    Ok(CertificationReport {
        conditions: vec![one_shot, obedience, admissibility],
    })
}

/// Direct-design transformation: pushes the signaling rule through the
/// selection rules so the obedient selection reproduces the same selected
/// profiles, and keeps the policies. The induced action distribution is
/// preserved exactly; obedience of the output is measured by callers, never
/// assumed.
pub fn construct_direct(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
) -> (SignalingRule, Policy) {
    let s = game.spaces;
    let mut rows = Array3::zeros((s.joint_types(), s.n_states, s.joint_signals()));
    for tj in 0..s.joint_types() {
        let profiles = selected_profile_distribution(game, alpha, beta, tj);
        for g in 0..s.n_states {
            for sel in 0..s.joint_signals() {
                rows[[tj, g, sel]] = profiles[[g, sel]];
            }
        }
    }
    (SignalingRule { rows }, pi.clone())
}

/// Upper bound on the best improvement from any deterministic two-period
/// deviation (selection and action in both periods, reverting afterwards).
/// Exact for single-agent games, where per-batch maximization is attainable
/// by a policy conditioned on the selected signal.
pub fn two_period_improvement(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    beta: &SelectionRule,
    pi: &Policy,
    joint_type: usize,
) -> Result<f64> {
    let s = game.spaces;
    let bundle = evaluate_values(game, alpha, beta, pi, joint_type)?;
    let kernels: Vec<Array3<f64>> = (0..s.n_agents)
        .map(|j| selection_kernel(game, beta, j, joint_type))
        .collect();
    let mut worst = 0.0f64;
    for i in 0..s.n_agents {
        let u1 = deviation_stage(game, alpha, pi, &kernels, &bundle, i, joint_type, bundle.j.row(i))?;
        let u0 = deviation_stage(game, alpha, pi, &kernels, &bundle, i, joint_type, u1.view())?;
        for g in 0..s.n_states {
            worst = worst.max(u0[g] - bundle.j[[i, g]]);
        }
    }
    Ok(worst)
}

/// One backward-induction stage of the pointwise deviation DP: at every
/// state, the agent picks the best slot and action per batch, opponents play
/// the equilibrium stack, and the future is worth `cont`.
fn deviation_stage(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    kernels: &[Array3<f64>],
    _bundle: &ValueBundle,
    agent: usize,
    tj: usize,
    cont: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let s = game.spaces;
    let mut out = Array1::zeros(s.n_states);
    for g in 0..s.n_states {
        let mut best = Array2::from_elem((s.n_signals, s.n_signals), f64::NAN);
        for sent in 0..s.n_signals {
            if alpha.marginal(&s, tj, g, agent, sent) == 0.0 {
                continue;
            }
            for sel in 0..s.n_signals {
                let mut top = f64::NEG_INFINITY;
                for a in 0..s.n_actions {
                    let v = conditional_stage_value(
                        game,
                        alpha,
                        pi,
                        kernels,
                        agent,
                        tj,
                        g,
                        sent,
                        sel,
                        Some(a),
                        cont,
                    )?;
                    top = top.max(v);
                }
                best[[sent, sel]] = top;
            }
        }
        let mut total = 0.0;
        for batch in 0..s.batches() {
            let sent = batch / s.exo_tuples();
            let marg = alpha.marginal(&s, tj, g, agent, sent);
            let p_exo = game.exogenous[batch % s.exo_tuples()];
            if marg == 0.0 || p_exo == 0.0 {
                continue;
            }
            let batch_best = (0..s.batch_size)
                .map(|slot| best[[sent, s.batch_slot(batch, slot)]])
                .fold(f64::NEG_INFINITY, f64::max);
            total += marg * p_exo * batch_best;
        }
        out[g] = total;
    }
    Ok(out)
}

/// Uniform dispatch to the certification checks by stable name; lets callers
/// select conditions at runtime.
pub trait Check {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &CheckContext<'_>) -> Result<ConditionReport>;
}

/// Everything a registered check may need.
pub struct CheckContext<'a> {
    pub game: &'a AugmentedGame,
    pub alpha: &'a SignalingRule,
    pub beta: &'a SelectionRule,
    pub pi: &'a Policy,
    pub goal: Option<&'a Goal>,
    pub fixed_signal: usize,
    pub obedience_mode: ObedienceMode,
    pub admissibility_mode: AdmissibilityMode,
    pub tol: f64,
    pub cap: u64,
}

struct MceCheck;
struct OneShotCheck;
struct ObedienceCheck;
struct AdmissibilityCheck;
struct NashGoalCheck;

fn require_goal<'a>(ctx: &CheckContext<'a>, name: &str) -> Result<&'a Goal> {
    ctx.goal
        .ok_or_else(|| Error::Shape(format!("check {name} requires a goal table")))
}

impl Check for MceCheck {
    fn name(&self) -> &'static str {
        "mce"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<ConditionReport> {
        check_mce_profile(ctx.game, ctx.pi, ctx.fixed_signal, ctx.tol)
    }
}

impl Check for OneShotCheck {
    fn name(&self) -> &'static str {
        "one-shot"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<ConditionReport> {
        check_one_shot(ctx.game, ctx.alpha, ctx.beta, ctx.pi, ctx.tol)
    }
}

impl Check for ObedienceCheck {
    fn name(&self) -> &'static str {
        "obedience"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<ConditionReport> {
        check_obedience(
            ctx.game,
            ctx.alpha,
            ctx.pi,
            ctx.obedience_mode,
            ctx.tol,
            ctx.cap,
        )
    }
}

impl Check for AdmissibilityCheck {
    fn name(&self) -> &'static str {
        "admissibility"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<ConditionReport> {
        let goal = require_goal(ctx, self.name())?;
        check_admissibility(
            ctx.game,
            ctx.alpha,
            ctx.beta,
            ctx.pi,
            goal,
            ctx.admissibility_mode,
            ctx.tol,
        )
    }
}

impl Check for NashGoalCheck {
    fn name(&self) -> &'static str {
        "nash-goal"
    }
    fn run(&self, ctx: &CheckContext<'_>) -> Result<ConditionReport> {
        let goal = require_goal(ctx, self.name())?;
        check_nash_goal(ctx.game, ctx.alpha, goal, ctx.tol)
    }
}

/// Stable registry order; reports list conditions in this order.
pub const CHECK_NAMES: [&str; 5] = ["mce", "one-shot", "obedience", "admissibility", "nash-goal"];

pub fn check_by_name(name: &str) -> Option<Box<dyn Check>> {
    match name {
        "mce" => Some(Box::new(MceCheck)),
        "one-shot" => Some(Box::new(OneShotCheck)),
        "obedience" => Some(Box::new(ObedienceCheck)),
        "admissibility" => Some(Box::new(AdmissibilityCheck)),
        "nash-goal" => Some(Box::new(NashGoalCheck)),
        _ => None,
    }
}

pub fn all_checks() -> Vec<Box<dyn Check>> {
    CHECK_NAMES
        .iter()
        .map(|n| check_by_name(n).expect("registry names are valid"))
        .collect()
}
