//! Goal-directed signaling design by fixed-point alignment: the Z and ZFPA
//! objectives, the labeled constraint and misalignment residuals, a
//! penalty-descent solver over (signaling rule, policies, state values,
//! state-signal values), and a simplex-lattice oracle that certifies solver
//! output on tiny instances by exhaustive enumeration.
//!
//! Everything decomposes per joint type: no constraint couples rows of
//! different joint types, so each supported type is solved as an independent
//! block and the blocks are assembled into full tables afterwards.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::induced_action_distribution;
use crate::equilibrium::{
    check_admissibility, check_nash_goal, check_oil, AdmissibilityMode, CertificationReport,
    ConditionReport, ObedienceMode, WorstTracker,
};
use crate::error::Result;
use crate::game::{AugmentedGame, Goal, Policy, SelectionRule, SignalingRule};
use crate::numeric::{for_each_composition, lattice_point_count, project_to_simplex, sample_simplex};
use crate::spaces::{check_cap, component, insert_component, remove_component, Spaces};
use crate::valuation::{
    alpha_averaged_continuation, evaluate_values, q_under_alpha_from_continuation,
    q_under_opponents, v_under_alpha,
};

/// Fixed order of the labeled certificate entries.
pub const RESIDUAL_NAMES: [&str; 10] =
    ["RG", "FE", "BOB0", "BOB1", "FS", "AD", "FPM1", "FPM2", "Z", "ZFPA"];

/// One labeled certificate value with the index attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEntry {
    pub name: &'static str,
    pub value: f64,
    pub witness: Option<String>,
}

/// Certification thresholds: constraint feasibility, complementarity
/// (misalignment products), and objective alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub complementarity: f64,
    pub alignment: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-7,
            complementarity: 1e-7,
            alignment: 1e-7,
        }
    }
}

/// A design instance: find a signaling rule implementing the goal.
/// Admissibility is always the weak form here.
#[derive(Debug, Clone)]
pub struct DesignProblem<'a> {
    pub game: &'a AugmentedGame,
    pub goal: &'a Goal,
    /// Restrict to one joint-type block; `None` solves every supported one.
    pub joint_type: Option<usize>,
    pub tolerances: Tolerances,
}

/// Descent controls. The penalty weight grows by `penalty_factor` each outer
/// round; within a round, projected gradient steps shrink on failure.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Gradient steps per penalty round.
    pub max_iters: usize,
    pub penalty_start: f64,
    pub penalty_factor: f64,
    pub penalty_rounds: usize,
    pub step_init: f64,
    /// Stop the restart loop at the first certified block.
    pub stop_on_certified: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            restarts: 8,
            seed: 0,
            max_iters: 60,
            penalty_start: 1.0,
            penalty_factor: 10.0,
            penalty_rounds: 7,
            step_init: 1e-2,
            stop_on_certified: true,
        }
    }
}

/// Certificate of one joint-type block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCertificate {
    pub joint_type: usize,
    /// All ten labeled entries in `RESIDUAL_NAMES` order.
    pub entries: Vec<ResidualEntry>,
    /// Residual bounds hold at the block's tolerances.
    pub feasible: bool,
}

impl BlockCertificate {
    pub fn value(&self, name: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    }

    /// Largest of the eight constraint and misalignment residuals.
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.name != "Z" && e.name != "ZFPA")
            .fold(0.0f64, |m, e| m.max(e.value))
    }
}

/// Solved values for one joint-type block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub joint_type: usize,
    /// (agent, state) state values.
    pub j: Array2<f64>,
    /// Per agent (state, sent profile) state-signal values.
    pub v: Vec<Array2<f64>>,
    pub certificate: BlockCertificate,
}

/// Whole-instance certificate: merged residuals plus the game-level side
/// conditions and the full certification rerun on the assembled tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionCertificate {
    /// Per-label maxima over blocks, witnesses prefixed with the block.
    pub entries: Vec<ResidualEntry>,
    pub nash_goal: ConditionReport,
    pub admissibility: ConditionReport,
    pub oil: CertificationReport,
    pub certified: bool,
}

impl SolutionCertificate {
    pub fn value(&self, name: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    }

    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.name != "Z" && e.name != "ZFPA")
            .fold(0.0f64, |m, e| m.max(e.value))
    }
}

/// Output of the design solver: assembled tables (uniform rows at
/// unsupported joint types), per-block values, and the certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub alpha: SignalingRule,
    pub pi: Policy,
    pub blocks: Vec<BlockSolution>,
    pub certificate: SolutionCertificate,
}

/// Alignment objective of the policy stage: for every on-support sent
/// profile, the excess of the candidate state-signal value over the
/// policy-averaged action value built from the candidate values.
pub fn z_objective(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    v: &[Array2<f64>],
    joint_type: usize,
) -> f64 {
    let s = game.spaces;
    let mut total = 0.0;
    for (i, v_i) in v.iter().enumerate() {
        let cont = alpha_averaged_continuation(game, alpha, joint_type, v_i);
        for g in 0..s.n_states {
            for sel in 0..s.joint_signals() {
                if alpha.prob(joint_type, g, sel) <= 0.0 {
                    continue;
                }
                let own_signal = s.signal_of(sel, i);
                let mut avg_q = 0.0;
                for aj in 0..s.joint_actions() {
                    let mut p = 1.0;
                    for j in 0..s.n_agents {
                        p *= pi.prob(
                            j,
                            g,
                            s.signal_of(sel, j),
                            s.type_of(joint_type, j),
                            s.action_of(aj, j),
                        );
                        if p == 0.0 {
                            break;
                        }
                    }
                    if p != 0.0 {
                        p *= q_under_alpha_from_continuation(
                            game, i, joint_type, &cont, aj, g, own_signal,
                        );
                        avg_q += p;
                    }
                }
                total += v_i[[g, sel]] - avg_q;
            }
        }
    }
    total
}

/// Alignment objective of the selection stage: per (agent, state), the
/// excess of the candidate state value over the signaling-rule average of
/// the conditional values at the sent signal.
pub fn zfpa_objective(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    j: &Array2<f64>,
    v: &[Array2<f64>],
    joint_type: usize,
) -> Result<f64> {
    let s = game.spaces;
    let mut total = 0.0;
    for (i, v_i) in v.iter().enumerate() {
        for g in 0..s.n_states {
            let mut aligned = 0.0;
            for w in 0..s.n_signals {
                let m = alpha.marginal(&s, joint_type, g, i, w);
                if m > 0.0 {
                    aligned += m * v_under_alpha(game, alpha, i, joint_type, v_i, g, w, w)?;
                }
            }
            total += j[[i, g]] - aligned;
        }
    }
    Ok(total)
}

/// Validity defect of one probability row.
fn row_defect(row: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut neg = 0.0f64;
    for &p in row {
        sum += p;
        neg = neg.max(-p);
    }
    neg.max((sum - 1.0).abs())
}

/// The six labeled constraint residuals at one joint-type block, worst
/// violation and witness per family. `bob0_reference` supplies the exact
/// obedient state values for BOB0; they are computed from the candidate
/// policies when absent.
#[allow(clippy::too_many_arguments)]
pub fn constraint_residuals(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    j: &Array2<f64>,
    v: &[Array2<f64>],
    goal: &Goal,
    joint_type: usize,
    bob0_reference: Option<&Array2<f64>>,
) -> Result<Vec<ResidualEntry>> {
    let s = game.spaces;
    let tj = joint_type;
    let mut rg = WorstTracker::new();
    let mut fe = WorstTracker::new();
    let mut bob0 = WorstTracker::new();
    let mut bob1 = WorstTracker::new();
    let mut fs = WorstTracker::new();
    let mut ad = WorstTracker::new();

    for g in 0..s.n_states {
        let row: Vec<f64> = (0..s.joint_signals())
            .map(|sel| alpha.prob(tj, g, sel))
            .collect();
        rg.observe(row_defect(&row), || format!("table=alpha state={g}"));
    }
    for i in 0..s.n_agents {
        let own_type = s.type_of(tj, i);
        for g in 0..s.n_states {
            for w in 0..s.n_signals {
                let row: Vec<f64> = (0..s.n_actions)
                    .map(|a| pi.prob(i, g, w, own_type, a))
                    .collect();
                rg.observe(row_defect(&row), || {
                    format!("table=policy agent={i} state={g} signal={w}")
                });
            }
        }
    }

    let exact_j_owned;
    let exact_j = match bob0_reference {
        Some(reference) => reference,
        None => {
            let obedient = SelectionRule::obedient(&s);
            exact_j_owned = evaluate_values(game, alpha, &obedient, pi, tj)?.j;
            &exact_j_owned
        }
    };

    let opp_count = s.opponent_signals();
    for (i, v_i) in v.iter().enumerate() {
        let cont = alpha_averaged_continuation(game, alpha, tj, v_i);
        for g in 0..s.n_states {
            // FE: no single-agent action deviation beats the candidate value
            // at any on-support sent profile.
            for sel in 0..s.joint_signals() {
                if alpha.prob(tj, g, sel) <= 0.0 {
                    continue;
                }
                let own_signal = s.signal_of(sel, i);
                for dev in 0..s.n_actions {
                    let mut rhs = 0.0;
                    for others in 0..s.n_actions.pow((s.n_agents - 1) as u32) {
                        let mut p = 1.0;
                        let mut pos = 0usize;
                        for jj in 0..s.n_agents {
                            if jj == i {
                                continue;
                            }
                            let a_j = component(others, pos, s.n_actions, s.n_agents - 1);
                            p *= pi.prob(
                                jj,
                                g,
                                s.signal_of(sel, jj),
                                s.type_of(tj, jj),
                                a_j,
                            );
                            pos += 1;
                            if p == 0.0 {
                                break;
                            }
                        }
                        if p == 0.0 {
                            continue;
                        }
                        let aj = insert_component(others, dev, i, s.n_actions, s.n_agents);
                        rhs += p
                            * q_under_alpha_from_continuation(
                                game, i, tj, &cont, aj, g, own_signal,
                            );
                    }
                    fe.observe(rhs - v_i[[g, sel]], || {
                        format!("agent={i} state={g} profile={sel} deviation={dev}")
                    });
                }
            }

            // BOB0: acting on any fixed signal against the unconditional
            // opponents' marginal cannot beat the exact obedient state value.
            for dev_w in 0..s.n_signals {
                let mut rhs = 0.0;
                for others in 0..opp_count {
                    let mut marg = 0.0;
                    for w in 0..s.n_signals {
                        marg += alpha.prob(
                            tj,
                            g,
                            insert_component(others, w, i, s.n_signals, s.n_agents),
                        );
                    }
                    if marg == 0.0 {
                        continue;
                    }
                    let sel = insert_component(others, dev_w, i, s.n_signals, s.n_agents);
                    rhs += marg * v_i[[g, sel]];
                }
                bob0.observe(rhs - exact_j[[i, g]], || {
                    format!("agent={i} state={g} signal={dev_w}")
                });
            }

            // BOB1 and FS, plus the aligned average both compare against.
            let mut aligned = 0.0;
            let mut valpha = vec![f64::NAN; s.n_signals];
            for w in 0..s.n_signals {
                if alpha.marginal(&s, tj, g, i, w) > 0.0 {
                    valpha[w] = v_under_alpha(game, alpha, i, tj, v_i, g, w, w)?;
                    aligned += alpha.marginal(&s, tj, g, i, w) * valpha[w];
                }
            }
            for sent in 0..s.n_signals {
                if alpha.marginal(&s, tj, g, i, sent) <= 0.0 {
                    continue;
                }
                fs.observe(valpha[sent] - j[[i, g]], || {
                    format!("agent={i} state={g} sent={sent}")
                });
                for w in 0..s.n_signals {
                    let lhs = v_under_alpha(game, alpha, i, tj, v_i, g, w, sent)?;
                    bob1.observe(lhs - aligned, || {
                        format!("agent={i} state={g} sent={sent} signal={w}")
                    });
                }
            }
        }
    }

    // AD: equality of goal-side and pushforward-side expected rewards under
    // the shared own-signal marginal, per agent and state.
    let obedient = SelectionRule::obedient(&s);
    let induced = induced_action_distribution(game, alpha, &obedient, pi, tj);
    for i in 0..s.n_agents {
        let own_type = s.type_of(tj, i);
        for g in 0..s.n_states {
            let mut diff = 0.0;
            for aj in 0..s.joint_actions() {
                let mut avg_r = 0.0;
                for w in 0..s.n_signals {
                    let m = alpha.marginal(&s, tj, g, i, w);
                    if m != 0.0 {
                        avg_r += m * game.reward(i, aj, g, w, own_type);
                    }
                }
                diff += (goal.prob(tj, g, aj) - induced[[g, aj]]) * avg_r;
            }
            ad.observe(diff.abs(), || format!("agent={i} state={g}"));
        }
    }

    let pack = |name: &'static str, tracker: WorstTracker| {
        let (value, witness) = tracker.into_parts();
        ResidualEntry {
            name,
            value,
            witness,
        }
    };
    Ok(vec![
        pack("RG", rg),
        pack("FE", fe),
        pack("BOB0", bob0),
        pack("BOB1", bob1),
        pack("FS", fs),
        pack("AD", ad),
    ])
}

/// The two misalignment products: signaling weight times state-value gap,
/// and policy weight times action-value gap, worst absolute value each.
pub fn fpm_residuals(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    j: &Array2<f64>,
    v: &[Array2<f64>],
    joint_type: usize,
) -> Result<Vec<ResidualEntry>> {
    let s = game.spaces;
    let tj = joint_type;
    let mut fpm1 = WorstTracker::new();
    let mut fpm2 = WorstTracker::new();
    for (i, v_i) in v.iter().enumerate() {
        let own_type = s.type_of(tj, i);
        for g in 0..s.n_states {
            for w in 0..s.n_signals {
                let m = alpha.marginal(&s, tj, g, i, w);
                if m <= 0.0 {
                    continue;
                }
                let gap = j[[i, g]] - v_under_alpha(game, alpha, i, tj, v_i, g, w, w)?;
                fpm1.observe((m * gap).abs(), || format!("agent={i} state={g} signal={w}"));
            }
            for sel in 0..s.joint_signals() {
                if alpha.prob(tj, g, sel) <= 0.0 {
                    continue;
                }
                let own_signal = s.signal_of(sel, i);
                let opp = remove_component(sel, i, s.n_signals, s.n_agents);
                for a in 0..s.n_actions {
                    let p = pi.prob(i, g, own_signal, own_type, a);
                    if p == 0.0 {
                        continue;
                    }
                    let q = q_under_opponents(game, pi, i, tj, j.row(i), a, g, own_signal, opp);
                    fpm2.observe((p * (v_i[[g, sel]] - q)).abs(), || {
                        format!("agent={i} state={g} profile={sel} action={a}")
                    });
                }
            }
        }
    }
    let pack = |name: &'static str, tracker: WorstTracker| {
        let (value, witness) = tracker.into_parts();
        ResidualEntry {
            name,
            value,
            witness,
        }
    };
    Ok(vec![pack("FPM1", fpm1), pack("FPM2", fpm2)])
}

/// Full ten-entry certificate of one block at the given tolerances.
#[allow(clippy::too_many_arguments)]
pub fn block_certificate(
    game: &AugmentedGame,
    alpha: &SignalingRule,
    pi: &Policy,
    j: &Array2<f64>,
    v: &[Array2<f64>],
    goal: &Goal,
    joint_type: usize,
    tol: &Tolerances,
    bob0_reference: Option<&Array2<f64>>,
) -> Result<BlockCertificate> {
    let mut entries =
        constraint_residuals(game, alpha, pi, j, v, goal, joint_type, bob0_reference)?;
    entries.extend(fpm_residuals(game, alpha, pi, j, v, joint_type)?);
    let z = z_objective(game, alpha, pi, v, joint_type);
    let zfpa = zfpa_objective(game, alpha, j, v, joint_type)?;
    entries.push(ResidualEntry {
        name: "Z",
        value: z,
        witness: None,
    });
    entries.push(ResidualEntry {
        name: "ZFPA",
        value: zfpa,
        witness: None,
    });
    let feasible = entries.iter().all(|e| match e.name {
        "FPM1" | "FPM2" => e.value <= tol.complementarity,
        "Z" | "ZFPA" => e.value <= tol.alignment,
        _ => e.value <= tol.feasibility,
    });
    Ok(BlockCertificate {
        joint_type,
        entries,
        feasible,
    })
}

/// Decision variables of one block, flattened for the descent.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BlockVars {
    /// (state, sent profile).
    pub alpha_rows: Array2<f64>,
    /// Per agent (state, signal, action).
    pub pi_rows: Vec<ndarray::Array3<f64>>,
    /// (agent, state).
    pub j: Array2<f64>,
    /// Per agent (state, sent profile).
    pub v: Vec<Array2<f64>>,
}

impl BlockVars {
    fn uniform(s: &Spaces) -> Self {
        BlockVars {
            alpha_rows: Array2::from_elem(
                (s.n_states, s.joint_signals()),
                1.0 / s.joint_signals() as f64,
            ),
            pi_rows: (0..s.n_agents)
                .map(|_| {
                    ndarray::Array3::from_elem(
                        (s.n_states, s.n_signals, s.n_actions),
                        1.0 / s.n_actions as f64,
                    )
                })
                .collect(),
            j: Array2::zeros((s.n_agents, s.n_states)),
            v: (0..s.n_agents)
                .map(|_| Array2::zeros((s.n_states, s.joint_signals())))
                .collect(),
        }
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.alpha_rows.iter());
        for t in &self.pi_rows {
            out.extend(t.iter());
        }
        out.extend(self.j.iter());
        for t in &self.v {
            out.extend(t.iter());
        }
        out
    }

    fn unflatten(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for slot in self.alpha_rows.iter_mut() {
            *slot = flat[pos];
            pos += 1;
        }
        for t in &mut self.pi_rows {
            for slot in t.iter_mut() {
                *slot = flat[pos];
                pos += 1;
            }
        }
        for slot in self.j.iter_mut() {
            *slot = flat[pos];
            pos += 1;
        }
        for t in &mut self.v {
            for slot in t.iter_mut() {
                *slot = flat[pos];
                pos += 1;
            }
        }
        debug_assert_eq!(pos, flat.len());
    }

    /// The simplex tables only, the deterministic tie-break key.
    pub(crate) fn strategy_key(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.alpha_rows.iter());
        for t in &self.pi_rows {
            out.extend(t.iter());
        }
        out
    }
}

/// Offsets of the simplex rows inside the flattened variable vector.
struct SimplexLayout {
    /// (start, length) of each row constrained to the simplex.
    rows: Vec<(usize, usize)>,
    total_len: usize,
}

impl SimplexLayout {
    fn of(s: &Spaces) -> Self {
        let mut rows = Vec::new();
        let mut pos = 0;
        for _ in 0..s.n_states {
            rows.push((pos, s.joint_signals()));
            pos += s.joint_signals();
        }
        for _ in 0..s.n_agents {
            for _ in 0..s.n_states * s.n_signals {
                rows.push((pos, s.n_actions));
                pos += s.n_actions;
            }
        }
        let total_len = pos
            + s.n_agents * s.n_states
            + s.n_agents * s.n_states * s.joint_signals();
        SimplexLayout { rows, total_len }
    }

    fn project(&self, flat: &mut [f64]) {
        for &(start, len) in &self.rows {
            project_to_simplex(&mut flat[start..start + len]);
        }
    }
}

/// Scratch full tables a block writes itself into before each evaluation.
pub(crate) struct BlockWorkspace {
    pub alpha: SignalingRule,
    pub pi: Policy,
    pub vars: BlockVars,
    pub(crate) joint_type: usize,
}

impl BlockWorkspace {
    pub(crate) fn new(s: &Spaces, joint_type: usize) -> Self {
        BlockWorkspace {
            alpha: SignalingRule::uniform(s),
            pi: Policy::uniform(s),
            vars: BlockVars::uniform(s),
            joint_type,
        }
    }

    /// Copy the block rows into the full tables.
    pub(crate) fn materialize(&mut self, s: &Spaces) {
        let tj = self.joint_type;
        for g in 0..s.n_states {
            for sel in 0..s.joint_signals() {
                self.alpha.rows[[tj, g, sel]] = self.vars.alpha_rows[[g, sel]];
            }
        }
        for i in 0..s.n_agents {
            let own_type = s.type_of(tj, i);
            for g in 0..s.n_states {
                for w in 0..s.n_signals {
                    for a in 0..s.n_actions {
                        self.pi.rows[i][[g, w, own_type, a]] = self.vars.pi_rows[i][[g, w, a]];
                    }
                }
            }
        }
    }
}

/// Squared-violation penalty terms of one block; the two merit functions
/// weight different subsets.
pub(crate) struct PenaltyTerms {
    pub z: f64,
    pub zfpa: f64,
    pub fe_sq: f64,
    pub bob1_sq: f64,
    pub fs_sq: f64,
    pub ad_sq: f64,
    pub fpm1_sq: f64,
    pub fpm2_sq: f64,
}

/// One pass over a materialized block computing every smooth penalty term.
/// The goal feeds AD; omit it (and skip FPM) as the merit requires.
pub(crate) fn penalty_terms(
    game: &AugmentedGame,
    ws: &BlockWorkspace,
    goal: Option<&Goal>,
    include_fpm: bool,
) -> Result<PenaltyTerms> {
    let s = game.spaces;
    let tj = ws.joint_type;
    let alpha = &ws.alpha;
    let pi = &ws.pi;
    let j = &ws.vars.j;
    let mut out = PenaltyTerms {
        z: 0.0,
        zfpa: 0.0,
        fe_sq: 0.0,
        bob1_sq: 0.0,
        fs_sq: 0.0,
        ad_sq: 0.0,
        fpm1_sq: 0.0,
        fpm2_sq: 0.0,
    };
    let opp_actions = s.n_actions.pow((s.n_agents - 1) as u32);
    for (i, v_i) in ws.vars.v.iter().enumerate() {
        let own_type = s.type_of(tj, i);
        let cont = alpha_averaged_continuation(game, alpha, tj, v_i);
        for g in 0..s.n_states {
            for sel in 0..s.joint_signals() {
                if alpha.prob(tj, g, sel) <= 0.0 {
                    continue;
                }
                let own_signal = s.signal_of(sel, i);
                // Deviation values against the opponents' policy mix.
                let mut avg_q = 0.0;
                let mut dev_vals = vec![0.0f64; s.n_actions];
                for others in 0..opp_actions {
                    let mut p_opp = 1.0;
                    let mut pos = 0usize;
                    for jj in 0..s.n_agents {
                        if jj == i {
                            continue;
                        }
                        let a_j = component(others, pos, s.n_actions, s.n_agents - 1);
                        p_opp *= pi.prob(jj, g, s.signal_of(sel, jj), s.type_of(tj, jj), a_j);
                        pos += 1;
                        if p_opp == 0.0 {
                            break;
                        }
                    }
                    if p_opp == 0.0 {
                        continue;
                    }
                    for (own, slot) in dev_vals.iter_mut().enumerate() {
                        let aj = insert_component(others, own, i, s.n_actions, s.n_agents);
                        *slot += p_opp
                            * q_under_alpha_from_continuation(
                                game, i, tj, &cont, aj, g, own_signal,
                            );
                    }
                }
                for (own, &val) in dev_vals.iter().enumerate() {
                    avg_q += pi.prob(i, g, own_signal, own_type, own) * val;
                    let gap = val - v_i[[g, sel]];
                    if gap > 0.0 {
                        out.fe_sq += gap * gap;
                    }
                }
                out.z += v_i[[g, sel]] - avg_q;

                if include_fpm {
                    let opp = remove_component(sel, i, s.n_signals, s.n_agents);
                    for a in 0..s.n_actions {
                        let p = pi.prob(i, g, own_signal, own_type, a);
                        if p == 0.0 {
                            continue;
                        }
                        let q =
                            q_under_opponents(game, pi, i, tj, j.row(i), a, g, own_signal, opp);
                        let prod = p * (v_i[[g, sel]] - q);
                        out.fpm2_sq += prod * prod;
                    }
                }
            }

            let mut aligned = 0.0;
            let mut valpha = vec![f64::NAN; s.n_signals];
            for w in 0..s.n_signals {
                let m = alpha.marginal(&s, tj, g, i, w);
                if m > 0.0 {
                    valpha[w] = v_under_alpha(game, alpha, i, tj, v_i, g, w, w)?;
                    aligned += m * valpha[w];
                }
            }
            out.zfpa += j[[i, g]] - aligned;
            for sent in 0..s.n_signals {
                if alpha.marginal(&s, tj, g, i, sent) <= 0.0 {
                    continue;
                }
                let fs_gap = valpha[sent] - j[[i, g]];
                if fs_gap > 0.0 {
                    out.fs_sq += fs_gap * fs_gap;
                }
                for w in 0..s.n_signals {
                    let gap = v_under_alpha(game, alpha, i, tj, v_i, g, w, sent)? - aligned;
                    if gap > 0.0 {
                        out.bob1_sq += gap * gap;
                    }
                }
                if include_fpm {
                    let m = alpha.marginal(&s, tj, g, i, sent);
                    let prod = m * (j[[i, g]] - valpha[sent]);
                    out.fpm1_sq += prod * prod;
                }
            }
        }
    }

    if let Some(goal) = goal {
        let obedient = SelectionRule::obedient(&s);
        let induced = induced_action_distribution(game, alpha, &obedient, pi, tj);
        for i in 0..s.n_agents {
            let own_type = s.type_of(tj, i);
            for g in 0..s.n_states {
                let mut diff = 0.0;
                for aj in 0..s.joint_actions() {
                    let mut avg_r = 0.0;
                    for w in 0..s.n_signals {
                        let m = alpha.marginal(&s, tj, g, i, w);
                        if m != 0.0 {
                            avg_r += m * game.reward(i, aj, g, w, own_type);
                        }
                    }
                    diff += (goal.prob(tj, g, aj) - induced[[g, aj]]) * avg_r;
                }
                out.ad_sq += diff * diff;
            }
        }
    }
    Ok(out)
}

/// Ranking of block candidates: feasibility first, then worst residual,
/// then the selection-stage objective, then the lexicographically smallest
/// strategy tables. Strict improvement keeps the earliest candidate.
#[derive(Debug, Clone)]
pub(crate) struct CandidateRank {
    pub feasible: bool,
    pub max_residual: f64,
    pub zfpa: f64,
    pub key: Vec<f64>,
}

impl CandidateRank {
    pub(crate) fn of(cert: &BlockCertificate, vars: &BlockVars) -> Self {
        CandidateRank {
            feasible: cert.feasible,
            max_residual: cert.max_residual(),
            zfpa: cert.value("ZFPA"),
            key: vars.strategy_key(),
        }
    }

    pub(crate) fn better_than(&self, other: &CandidateRank) -> bool {
        if self.feasible != other.feasible {
            return self.feasible;
        }
        if self.max_residual != other.max_residual {
            return self.max_residual < other.max_residual;
        }
        if self.zfpa != other.zfpa {
            return self.zfpa < other.zfpa;
        }
        self.key < other.key
    }
}

/// Exact value tables for the current strategy rows, used both as a descent
/// polish and as the oracle's per-candidate evaluation.
pub(crate) fn exact_values_into(game: &AugmentedGame, ws: &mut BlockWorkspace) -> Result<()> {
    let obedient = SelectionRule::obedient(&game.spaces);
    let bundle = evaluate_values(game, &ws.alpha, &obedient, &ws.pi, ws.joint_type)?;
    ws.vars.j = bundle.j;
    ws.vars.v = bundle.v;
    Ok(())
}

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

/// Starting point of one restart: the goal-mirroring start, the uniform
/// start, then seeded random tables; values always initialized exactly.
pub(crate) fn start_block(
    game: &AugmentedGame,
    goal: &Goal,
    ws: &mut BlockWorkspace,
    restart: usize,
    seed: u64,
) -> Result<()> {
    let s = game.spaces;
    let tj = ws.joint_type;
    match restart {
        0 if s.n_actions == s.n_signals => {
            // Mirror the goal through the identity action-signal pairing and
            // let policies repeat their signal.
            for g in 0..s.n_states {
                for sel in 0..s.joint_signals() {
                    ws.vars.alpha_rows[[g, sel]] = goal.prob(tj, g, sel);
                }
            }
            for i in 0..s.n_agents {
                ws.vars.pi_rows[i].fill(0.0);
                for g in 0..s.n_states {
                    for w in 0..s.n_signals {
                        ws.vars.pi_rows[i][[g, w, w]] = 1.0;
                    }
                }
            }
        }
        0 | 1 => {
            ws.vars.alpha_rows.fill(1.0 / s.joint_signals() as f64);
            for t in &mut ws.vars.pi_rows {
                t.fill(1.0 / s.n_actions as f64);
            }
        }
        r => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_add((r as u64).wrapping_mul(GOLDEN)));
            for g in 0..s.n_states {
                let mut row = vec![0.0; s.joint_signals()];
                sample_simplex(&mut rng, &mut row);
                for (sel, &p) in row.iter().enumerate() {
                    ws.vars.alpha_rows[[g, sel]] = p;
                }
            }
            for i in 0..s.n_agents {
                for g in 0..s.n_states {
                    for w in 0..s.n_signals {
                        let mut row = vec![0.0; s.n_actions];
                        sample_simplex(&mut rng, &mut row);
                        for (a, &p) in row.iter().enumerate() {
                            ws.vars.pi_rows[i][[g, w, a]] = p;
                        }
                    }
                }
            }
        }
    }
    ws.materialize(&s);
    exact_values_into(game, ws)
}

/// Projected-gradient descent of a merit function with a growing penalty
/// weight. The merit closure sees a materialized workspace.
pub(crate) fn descend_block(
    game: &AugmentedGame,
    ws: &mut BlockWorkspace,
    options: &SolverOptions,
    merit: &mut dyn FnMut(&mut BlockWorkspace, f64) -> Result<f64>,
) -> Result<()> {
    let s = game.spaces;
    let layout = SimplexLayout::of(&s);
    let mut flat = ws.vars.flatten();
    debug_assert_eq!(flat.len(), layout.total_len);
    let h = 1e-6;
    let mut grad = vec![0.0; flat.len()];
    let mut trial = flat.clone();

    let mut eval = |ws: &mut BlockWorkspace, flat: &[f64], rho: f64| -> Result<f64> {
        ws.vars.unflatten(flat);
        ws.materialize(&s);
        merit(ws, rho)
    };

    let mut rho = options.penalty_start;
    for _ in 0..options.penalty_rounds {
        let mut step = options.step_init;
        let mut current = eval(ws, &flat, rho)?;
        for _ in 0..options.max_iters {
            for k in 0..flat.len() {
                let keep = flat[k];
                flat[k] = keep + h;
                let plus = eval(ws, &flat, rho)?;
                flat[k] = keep - h;
                let minus = eval(ws, &flat, rho)?;
                flat[k] = keep;
                grad[k] = (plus - minus) / (2.0 * h);
            }
            let mut improved = false;
            while step >= 1e-12 {
                for k in 0..flat.len() {
                    trial[k] = flat[k] - step * grad[k];
                }
                layout.project(&mut trial);
                let value = eval(ws, &trial, rho)?;
                if value < current - 1e-15 {
                    flat.copy_from_slice(&trial);
                    current = value;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        rho *= options.penalty_factor;
    }
    ws.vars.unflatten(&flat);
    ws.materialize(&s);
    Ok(())
}

/// Rows already close to a vertex are snapped onto it exactly; kept only
/// when the caller's certificate comparison prefers the snapped candidate.
pub(crate) fn snap_rows(vars: &mut BlockVars) -> bool {
    const SNAP: f64 = 1e-3;
    let mut changed = false;
    let mut snap_row = |row: &mut [f64]| {
        let mut best = 0usize;
        for (k, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = k;
            }
        }
        if row[best] >= 1.0 - SNAP && row[best] < 1.0 {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = if k == best { 1.0 } else { 0.0 };
            }
            changed = true;
        }
    };
    for mut row in vars.alpha_rows.rows_mut() {
        snap_row(row.as_slice_mut().expect("contiguous row"));
    }
    for t in &mut vars.pi_rows {
        let shape = t.dim();
        for g in 0..shape.0 {
            for w in 0..shape.1 {
                let mut row: Vec<f64> = (0..shape.2).map(|a| t[[g, w, a]]).collect();
                snap_row(&mut row);
                for (a, &p) in row.iter().enumerate() {
                    t[[g, w, a]] = p;
                }
            }
        }
    }
    changed
}

/// Solve one joint-type block: multi-start penalty descent, exact-value
/// polish, vertex snap, deterministic best-candidate merge.
fn solve_block(
    game: &AugmentedGame,
    goal: &Goal,
    joint_type: usize,
    tol: &Tolerances,
    options: &SolverOptions,
) -> Result<(BlockVars, BlockCertificate)> {
    let s = game.spaces;
    let mut best: Option<(BlockVars, BlockCertificate, CandidateRank)> = None;

    for restart in 0..options.restarts.max(1) {
        let mut ws = BlockWorkspace::new(&s, joint_type);
        start_block(game, goal, &mut ws, restart, options.seed)?;
        descend_block(game, &mut ws, options, &mut |ws, rho| {
            let t = penalty_terms(game, ws, Some(goal), false)?;
            Ok(t.zfpa + rho * (t.fe_sq + t.bob1_sq + t.fs_sq + t.ad_sq + t.z * t.z))
        })?;

        // Candidate variants: raw descent output, exact-value polish, vertex
        // snap with exact values. Keep the best certificate.
        let consider = |ws: &mut BlockWorkspace,
                            best: &mut Option<(BlockVars, BlockCertificate, CandidateRank)>|
         -> Result<()> {
            let cert = block_certificate(
                game,
                &ws.alpha,
                &ws.pi,
                &ws.vars.j,
                &ws.vars.v,
                goal,
                joint_type,
                tol,
                None,
            )?;
            let rank = CandidateRank::of(&cert, &ws.vars);
            if best.as_ref().map_or(true, |(_, _, b)| rank.better_than(b)) {
                *best = Some((ws.vars.clone(), cert, rank));
            }
            Ok(())
        };

        consider(&mut ws, &mut best)?;
        exact_values_into(game, &mut ws)?;
        consider(&mut ws, &mut best)?;
        if snap_rows(&mut ws.vars) {
            ws.materialize(&s);
            exact_values_into(game, &mut ws)?;
            consider(&mut ws, &mut best)?;
        }

        if options.stop_on_certified
            && best.as_ref().map_or(false, |(_, cert, _)| cert.feasible)
        {
            break;
        }
    }
    let (vars, cert, _) = best.expect("at least one restart ran");
    Ok((vars, cert))
}

/// The joint types a problem solves: the restriction when given, otherwise
/// every type with positive prior.
fn problem_blocks(problem: &DesignProblem<'_>) -> Vec<usize> {
    match problem.joint_type {
        Some(tj) => vec![tj],
        None => (0..problem.game.spaces.joint_types())
            .filter(|&tj| problem.game.type_prior[tj] > 0.0)
            .collect(),
    }
}

/// Copy one block's strategy rows into the full tables at its joint type.
pub(crate) fn fill_block_rows(
    s: &Spaces,
    alpha: &mut SignalingRule,
    pi: &mut Policy,
    tj: usize,
    vars: &BlockVars,
) {
    for g in 0..s.n_states {
        for sel in 0..s.joint_signals() {
            alpha.rows[[tj, g, sel]] = vars.alpha_rows[[g, sel]];
        }
    }
    for i in 0..s.n_agents {
        let own_type = s.type_of(tj, i);
        for g in 0..s.n_states {
            for w in 0..s.n_signals {
                for a in 0..s.n_actions {
                    pi.rows[i][[g, w, own_type, a]] = vars.pi_rows[i][[g, w, a]];
                }
            }
        }
    }
}

/// Assemble block results into full tables and run the game-level side
/// conditions; the verdict is the conjunction of everything.
pub(crate) fn assemble_solution(
    game: &AugmentedGame,
    goal: &Goal,
    tol: &Tolerances,
    blocks: Vec<(usize, BlockVars, BlockCertificate)>,
    cap: u64,
) -> Result<DesignSolution> {
    let s = game.spaces;
    let mut alpha = SignalingRule::uniform(&s);
    let mut pi = Policy::uniform(&s);
    let mut block_solutions = Vec::new();
    let mut merged: Vec<ResidualEntry> = RESIDUAL_NAMES
        .iter()
        .map(|&name| ResidualEntry {
            name,
            value: f64::NEG_INFINITY,
            witness: None,
        })
        .collect();
    let mut all_feasible = true;

    for (tj, vars, cert) in blocks {
        fill_block_rows(&s, &mut alpha, &mut pi, tj, &vars);
        for entry in &cert.entries {
            let slot = merged
                .iter_mut()
                .find(|m| m.name == entry.name)
                .expect("known label");
            if entry.value > slot.value {
                slot.value = entry.value;
                slot.witness = entry
                    .witness
                    .as_ref()
                    .map(|w| format!("joint_type={tj} {w}"))
                    .or_else(|| Some(format!("joint_type={tj}")));
            }
        }
        all_feasible &= cert.feasible;
        block_solutions.push(BlockSolution {
            joint_type: tj,
            j: vars.j,
            v: vars.v,
            certificate: cert,
        });
    }
    for slot in &mut merged {
        if slot.value == f64::NEG_INFINITY {
            slot.value = 0.0;
        }
    }

    let obedient = SelectionRule::obedient(&s);
    let nash_goal = check_nash_goal(game, &alpha, goal, tol.feasibility)?;
    let admissibility = check_admissibility(
        game,
        &alpha,
        &obedient,
        &pi,
        goal,
        AdmissibilityMode::Weak,
        tol.feasibility,
    )?;
    let oil = check_oil(
        game,
        &alpha,
        &pi,
        goal,
        ObedienceMode::Bayesian,
        AdmissibilityMode::Weak,
        10.0 * tol.feasibility,
        cap,
    )?;
    let certified = all_feasible && nash_goal.pass && admissibility.pass && oil.pass();
    Ok(DesignSolution {
        alpha,
        pi,
        blocks: block_solutions,
        certificate: SolutionCertificate {
            entries: merged,
            nash_goal,
            admissibility,
            oil,
            certified,
        },
    })
}

/// Penalty-descent design for a fixed goal. Never fails on hard instances:
/// exhausting the budget returns the best uncertified candidate.
pub fn solve_fpalign(problem: &DesignProblem<'_>, options: &SolverOptions) -> Result<DesignSolution> {
    use rayon::prelude::*;
    let game = problem.game;
    let tol = &problem.tolerances;
    // Blocks are independent; the indexed collect keeps their order, so the
    // merge is identical however they are scheduled.
    let blocks = problem_blocks(problem)
        .into_par_iter()
        .map(|tj| {
            solve_block(game, problem.goal, tj, tol, options).map(|(vars, cert)| (tj, vars, cert))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_solution(game, problem.goal, tol, blocks, crate::spaces::DEFAULT_CELL_CAP)
}

/// Exhaustive lattice search result.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub solution: DesignSolution,
    /// Candidates enumerated across all blocks.
    pub candidates: u128,
}

/// Enumerate every (signaling, policy) candidate on the simplex lattice of
/// the given resolution, evaluate values exactly, and keep the candidate
/// minimizing (worst residual, selection objective); first in enumeration
/// order among ties.
pub fn brute_force_oracle(
    problem: &DesignProblem<'_>,
    resolution: usize,
    cap: u64,
) -> Result<OracleOutcome> {
    let game = problem.game;
    let s = game.spaces;
    let tol = &problem.tolerances;
    let goal = problem.goal;

    // Lattice points per row dimension, ascending lexicographic.
    let mut points_by_dim: std::collections::BTreeMap<usize, Vec<Vec<f64>>> =
        std::collections::BTreeMap::new();
    for dim in [s.joint_signals(), s.n_actions] {
        points_by_dim.entry(dim).or_insert_with(|| {
            let mut pts = Vec::new();
            let mut buf = vec![0usize; dim];
            for_each_composition(resolution, &mut buf, &mut |c| {
                pts.push(c.iter().map(|&k| k as f64 / resolution as f64).collect());
            });
            pts
        });
    }

    let alpha_rows = s.n_states;
    let pi_rows = s.n_agents * s.n_states * s.n_signals;
    let alpha_count = lattice_point_count(s.joint_signals(), resolution);
    let pi_count = lattice_point_count(s.n_actions, resolution);
    let mut per_block: u128 = 1;
    for _ in 0..alpha_rows {
        per_block = per_block.saturating_mul(alpha_count);
    }
    for _ in 0..pi_rows {
        per_block = per_block.saturating_mul(pi_count);
    }
    let block_list = problem_blocks(problem);
    check_cap(per_block.saturating_mul(block_list.len() as u128), cap)?;

    let mut total_candidates = 0u128;
    let mut blocks = Vec::new();
    for tj in block_list {
        let mut ws = BlockWorkspace::new(&s, tj);
        let mut best: Option<(BlockVars, BlockCertificate, CandidateRank)> = None;
        // Odometer over rows: earlier rows are more significant.
        let row_dims: Vec<usize> = (0..alpha_rows)
            .map(|_| s.joint_signals())
            .chain((0..pi_rows).map(|_| s.n_actions))
            .collect();
        let mut indices = vec![0usize; row_dims.len()];
        loop {
            total_candidates += 1;
            for (row, &idx) in indices.iter().enumerate() {
                let pts = &points_by_dim[&row_dims[row]];
                let point = &pts[idx];
                if row < alpha_rows {
                    for (sel, &p) in point.iter().enumerate() {
                        ws.vars.alpha_rows[[row, sel]] = p;
                    }
                } else {
                    let flat = row - alpha_rows;
                    let i = flat / (s.n_states * s.n_signals);
                    let rem = flat % (s.n_states * s.n_signals);
                    let g = rem / s.n_signals;
                    let w = rem % s.n_signals;
                    for (a, &p) in point.iter().enumerate() {
                        ws.vars.pi_rows[i][[g, w, a]] = p;
                    }
                }
            }
            ws.materialize(&s);
            exact_values_into(game, &mut ws)?;
            let cert = block_certificate(
                game,
                &ws.alpha,
                &ws.pi,
                &ws.vars.j,
                &ws.vars.v,
                goal,
                tj,
                tol,
                Some(&ws.vars.j),
            )?;
            let rank = CandidateRank::of(&cert, &ws.vars);
            if best.as_ref().map_or(true, |(_, _, b)| rank.better_than(b)) {
                best = Some((ws.vars.clone(), cert, rank));
            }

            // Advance the odometer, last row fastest.
            let mut pos = row_dims.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                indices[pos] += 1;
                if indices[pos] < points_by_dim[&row_dims[pos]].len() {
                    break;
                }
                indices[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
        let (vars, cert, _) = best.expect("lattice is never empty");
        blocks.push((tj, vars, cert));
    }
    let solution = assemble_solution(game, goal, tol, blocks, cap)?;
    Ok(OracleOutcome {
        solution,
        candidates: total_candidates,
    })
}
