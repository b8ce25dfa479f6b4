//! TOML file I/O for games, signaling rules, strategies, goals, and
//! principal payoffs.
//!
//! All files start with a mandatory top-level `schema-version = 1` key and
//! use 0-based indices. Flat tables use row-major order over the axes listed
//! with each section:
//!
//! * game file: `[spaces]`, `[discount]`, `[initial] dist`, `[type_prior]
//!   dist` (over joint types), `[transition] rows` (one row per
//!   `g * |A|^n + joint_action`, each over next states), `[rewards.agent_i]
//!   values` (axes: joint action, state, selected signal, own type),
//!   `[exogenous] dist` (over the m-1 exogenous slots as a tuple index).
//! * signaling file: `[signaling] rows`, one row per `joint_type * |G| + g`,
//!   each a distribution over joint signals.
//! * strategy file: `[policy.agent_i] rows`, one row per
//!   `(g * |Omega| + signal) * |Theta| + own_type`, each over actions;
//!   optional `[selection.agent_i] slots`, flat over
//!   `(g * |Theta| + own_type) * m^... + batch` in row-major (state, own
//!   type, batch) order. Omitted selection means the obedient rule.
//! * goal file: `[goal] rows`, one row per `joint_type * |G| + g`, each a
//!   distribution over joint actions.
//! * principal file: `[principal] values`, axes: joint action, state,
//!   joint type.
//!
//! Floats are written in shortest round-trip form, so write-then-read
//! recovers every table bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    AugmentedGame, Goal, Policy, PrincipalPayoff, SelectionRule, SignalingRule,
};
use crate::spaces::Spaces;

const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpacesSection {
    n_agents: usize,
    states: usize,
    actions: usize,
    signals: usize,
    types: usize,
    batch_size: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscountSection {
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistSection {
    dist: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowsSection {
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValuesSection {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotsSection {
    slots: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    #[serde(rename = "schema-version")]
    schema_version: u32,
    spaces: SpacesSection,
    discount: DiscountSection,
    initial: DistSection,
    type_prior: DistSection,
    transition: RowsSection,
    rewards: BTreeMap<String, ValuesSection>,
    exogenous: DistSection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalingFile {
    #[serde(rename = "schema-version")]
    schema_version: u32,
    signaling: RowsSection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyFileRaw {
    #[serde(rename = "schema-version")]
    schema_version: u32,
    policy: BTreeMap<String, RowsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<BTreeMap<String, SlotsSection>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalFile {
    #[serde(rename = "schema-version")]
    schema_version: u32,
    goal: RowsSection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrincipalFile {
    #[serde(rename = "schema-version")]
    schema_version: u32,
    principal: ValuesSection,
}

/// Per-agent policies plus an optional explicit selection table; `None`
/// means the obedient selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyFile {
    pub policy: Policy,
    pub selection: Option<SelectionRule>,
}

impl StrategyFile {
    pub fn selection_or_obedient(&self, spaces: &Spaces) -> SelectionRule {
        self.selection
            .clone()
            .unwrap_or_else(|| SelectionRule::obedient(spaces))
    }
}

fn parse_err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

fn check_schema(path: &str, version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(parse_err(
            path,
            format!("unsupported schema-version {version} (expected {SCHEMA_VERSION})"),
        ));
    }
    Ok(())
}

fn decode_toml<T: serde::de::DeserializeOwned>(text: &str, path: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| parse_err(path, e.to_string()))
}

fn check_len(path: &str, what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(parse_err(
            path,
            format!("{what}: expected {expected} entries, found {found}"),
        ));
    }
    Ok(())
}

fn rows_to_flat(path: &str, what: &str, rows: &[Vec<f64>], n_rows: usize, row_len: usize) -> Result<Vec<f64>> {
    check_len(path, &format!("{what} rows"), rows.len(), n_rows)?;
    let mut flat = Vec::with_capacity(n_rows * row_len);
    for (r, row) in rows.iter().enumerate() {
        check_len(path, &format!("{what} row {r}"), row.len(), row_len)?;
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

fn agent_tables<'m, T>(path: &str, what: &str, map: &'m BTreeMap<String, T>, n_agents: usize) -> Result<Vec<&'m T>> {
    for key in map.keys() {
        let ok = key
            .strip_prefix("agent_")
            .and_then(|s| s.parse::<usize>().ok())
            .map(|i| i < n_agents)
            .unwrap_or(false);
        if !ok {
            return Err(parse_err(
                path,
                format!("{what}: unexpected table key {key:?} (expected agent_0 .. agent_{})", n_agents - 1),
            ));
        }
    }
    (0..n_agents)
        .map(|i| {
            map.get(&format!("agent_{i}"))
                .ok_or_else(|| parse_err(path, format!("{what}: missing table agent_{i}")))
        })
        .collect()
}

pub fn game_from_str(text: &str, path: &str) -> Result<AugmentedGame> {
    let raw: GameFile = decode_toml(text, path)?;
    check_schema(path, raw.schema_version)?;
    let spaces = Spaces {
        n_agents: raw.spaces.n_agents,
        n_states: raw.spaces.states,
        n_actions: raw.spaces.actions,
        n_signals: raw.spaces.signals,
        n_types: raw.spaces.types,
        batch_size: raw.spaces.batch_size,
    };
    if spaces.n_agents == 0
        || spaces.n_states == 0
        || spaces.n_actions == 0
        || spaces.n_signals == 0
        || spaces.n_types == 0
        || spaces.batch_size < 2
    {
        return Err(parse_err(
            path,
            format!("degenerate [spaces] section: {spaces:?} (every dimension positive, batch_size >= 2)"),
        ));
    }

    check_len(path, "[initial] dist", raw.initial.dist.len(), spaces.n_states)?;
    check_len(path, "[type_prior] dist", raw.type_prior.dist.len(), spaces.joint_types())?;
    check_len(path, "[exogenous] dist", raw.exogenous.dist.len(), spaces.exo_tuples())?;
    let transition_flat = rows_to_flat(
        path,
        "[transition]",
        &raw.transition.rows,
        spaces.n_states * spaces.joint_actions(),
        spaces.n_states,
    )?;
    let reward_tables = agent_tables(path, "[rewards]", &raw.rewards, spaces.n_agents)?;
    let reward_len = spaces.joint_actions() * spaces.n_states * spaces.n_signals * spaces.n_types;
    let mut rewards = Vec::with_capacity(spaces.n_agents);
    for (i, table) in reward_tables.iter().enumerate() {
        check_len(path, &format!("[rewards.agent_{i}] values"), table.values.len(), reward_len)?;
        rewards.push(
            Array4::from_shape_vec(
                (spaces.joint_actions(), spaces.n_states, spaces.n_signals, spaces.n_types),
                table.values.clone(),
            )
            .expect("length checked"),
        );
    }

    Ok(AugmentedGame {
        spaces,
        discount: raw.discount.gamma,
        initial_state: Array1::from_vec(raw.initial.dist),
        type_prior: Array1::from_vec(raw.type_prior.dist),
        transition: Array2::from_shape_vec(
            (spaces.n_states * spaces.joint_actions(), spaces.n_states),
            transition_flat,
        )
        .expect("length checked"),
        rewards,
        exogenous: Array1::from_vec(raw.exogenous.dist),
    })
}

pub fn game_to_string(game: &AugmentedGame) -> String {
    let s = game.spaces;
    let raw = GameFile {
        schema_version: SCHEMA_VERSION,
        spaces: SpacesSection {
            n_agents: s.n_agents,
            states: s.n_states,
            actions: s.n_actions,
            signals: s.n_signals,
            types: s.n_types,
            batch_size: s.batch_size,
        },
        discount: DiscountSection { gamma: game.discount },
        initial: DistSection {
            dist: game.initial_state.to_vec(),
        },
        type_prior: DistSection {
            dist: game.type_prior.to_vec(),
        },
        transition: RowsSection {
            rows: game.transition.rows().into_iter().map(|r| r.to_vec()).collect(),
        },
        rewards: (0..s.n_agents)
            .map(|i| {
                (
                    format!("agent_{i}"),
                    ValuesSection {
                        values: game.rewards[i].iter().copied().collect(),
                    },
                )
            })
            .collect(),
        exogenous: DistSection {
            dist: game.exogenous.to_vec(),
        },
    };
    toml::to_string_pretty(&raw).expect("game serialization cannot fail")
}

pub fn signaling_from_str(text: &str, path: &str, spaces: &Spaces) -> Result<SignalingRule> {
    let raw: SignalingFile = decode_toml(text, path)?;
    check_schema(path, raw.schema_version)?;
    let flat = rows_to_flat(
        path,
        "[signaling]",
        &raw.signaling.rows,
        spaces.joint_types() * spaces.n_states,
        spaces.joint_signals(),
    )?;
    Ok(SignalingRule {
        rows: Array3::from_shape_vec(
            (spaces.joint_types(), spaces.n_states, spaces.joint_signals()),
            flat,
        )
        .expect("length checked"),
    })
}

pub fn signaling_to_string(spaces: &Spaces, alpha: &SignalingRule) -> String {
    let js = spaces.joint_signals();
    let raw = SignalingFile {
        schema_version: SCHEMA_VERSION,
        signaling: RowsSection {
            rows: alpha
                .rows
                .iter()
                .copied()
                .collect::<Vec<f64>>()
                .chunks(js)
                .map(|c| c.to_vec())
                .collect(),
        },
    };
    toml::to_string_pretty(&raw).expect("signaling serialization cannot fail")
}

pub fn strategy_from_str(text: &str, path: &str, spaces: &Spaces) -> Result<StrategyFile> {
    let raw: StrategyFileRaw = decode_toml(text, path)?;
    check_schema(path, raw.schema_version)?;
    let tables = agent_tables(path, "[policy]", &raw.policy, spaces.n_agents)?;
    let mut rows = Vec::with_capacity(spaces.n_agents);
    for (i, table) in tables.iter().enumerate() {
        let flat = rows_to_flat(
            path,
            &format!("[policy.agent_{i}]"),
            &table.rows,
            spaces.n_states * spaces.n_signals * spaces.n_types,
            spaces.n_actions,
        )?;
        rows.push(
            Array4::from_shape_vec(
                (spaces.n_states, spaces.n_signals, spaces.n_types, spaces.n_actions),
                flat,
            )
            .expect("length checked"),
        );
    }
    let selection = match &raw.selection {
        None => None,
        Some(map) => {
            let tables = agent_tables(path, "[selection]", map, spaces.n_agents)?;
            let len = spaces.n_states * spaces.n_types * spaces.batches();
            let mut slots = Vec::with_capacity(spaces.n_agents);
            for (i, table) in tables.iter().enumerate() {
                check_len(path, &format!("[selection.agent_{i}] slots"), table.slots.len(), len)?;
                slots.push(
                    Array3::from_shape_vec(
                        (spaces.n_states, spaces.n_types, spaces.batches()),
                        table.slots.clone(),
                    )
                    .expect("length checked"),
                );
            }
            Some(SelectionRule { slots })
        }
    };
    Ok(StrategyFile {
        policy: Policy { rows },
        selection,
    })
}

pub fn strategy_to_string(spaces: &Spaces, strategy: &StrategyFile) -> String {
    let raw = StrategyFileRaw {
        schema_version: SCHEMA_VERSION,
        policy: (0..spaces.n_agents)
            .map(|i| {
                (
                    format!("agent_{i}"),
                    RowsSection {
                        rows: strategy.policy.rows[i]
                            .iter()
                            .copied()
                            .collect::<Vec<f64>>()
                            .chunks(spaces.n_actions)
                            .map(|c| c.to_vec())
                            .collect(),
                    },
                )
            })
            .collect(),
        selection: strategy.selection.as_ref().map(|beta| {
            (0..spaces.n_agents)
                .map(|i| {
                    (
                        format!("agent_{i}"),
                        SlotsSection {
                            slots: beta.slots[i].iter().copied().collect(),
                        },
                    )
                })
                .collect()
        }),
    };
    toml::to_string_pretty(&raw).expect("strategy serialization cannot fail")
}

pub fn goal_from_str(text: &str, path: &str, spaces: &Spaces) -> Result<Goal> {
    let raw: GoalFile = decode_toml(text, path)?;
    check_schema(path, raw.schema_version)?;
    let flat = rows_to_flat(
        path,
        "[goal]",
        &raw.goal.rows,
        spaces.joint_types() * spaces.n_states,
        spaces.joint_actions(),
    )?;
    Ok(Goal {
        rows: Array3::from_shape_vec(
            (spaces.joint_types(), spaces.n_states, spaces.joint_actions()),
            flat,
        )
        .expect("length checked"),
    })
}

pub fn goal_to_string(spaces: &Spaces, goal: &Goal) -> String {
    let ja = spaces.joint_actions();
    let raw = GoalFile {
        schema_version: SCHEMA_VERSION,
        goal: RowsSection {
            rows: goal
                .rows
                .iter()
                .copied()
                .collect::<Vec<f64>>()
                .chunks(ja)
                .map(|c| c.to_vec())
                .collect(),
        },
    };
    toml::to_string_pretty(&raw).expect("goal serialization cannot fail")
}

pub fn principal_from_str(text: &str, path: &str, spaces: &Spaces) -> Result<PrincipalPayoff> {
    let raw: PrincipalFile = decode_toml(text, path)?;
    check_schema(path, raw.schema_version)?;
    let len = spaces.joint_actions() * spaces.n_states * spaces.joint_types();
    check_len(path, "[principal] values", raw.principal.values.len(), len)?;
    Ok(PrincipalPayoff {
        values: Array3::from_shape_vec(
            (spaces.joint_actions(), spaces.n_states, spaces.joint_types()),
            raw.principal.values,
        )
        .expect("length checked"),
    })
}

pub fn principal_to_string(_spaces: &Spaces, u: &PrincipalPayoff) -> String {
    let raw = PrincipalFile {
        schema_version: SCHEMA_VERSION,
        principal: ValuesSection {
            values: u.values.iter().copied().collect(),
        },
    };
    toml::to_string_pretty(&raw).expect("principal serialization cannot fail")
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_game(path: &Path) -> Result<AugmentedGame> {
    game_from_str(&read_file(path)?, &path.display().to_string())
}

pub fn save_game(path: &Path, game: &AugmentedGame) -> Result<()> {
    write_file(path, &game_to_string(game))
}

pub fn load_signaling(path: &Path, spaces: &Spaces) -> Result<SignalingRule> {
    signaling_from_str(&read_file(path)?, &path.display().to_string(), spaces)
}

pub fn save_signaling(path: &Path, spaces: &Spaces, alpha: &SignalingRule) -> Result<()> {
    write_file(path, &signaling_to_string(spaces, alpha))
}

pub fn load_strategy(path: &Path, spaces: &Spaces) -> Result<StrategyFile> {
    strategy_from_str(&read_file(path)?, &path.display().to_string(), spaces)
}

pub fn save_strategy(path: &Path, spaces: &Spaces, strategy: &StrategyFile) -> Result<()> {
    write_file(path, &strategy_to_string(spaces, strategy))
}

pub fn load_goal(path: &Path, spaces: &Spaces) -> Result<Goal> {
    goal_from_str(&read_file(path)?, &path.display().to_string(), spaces)
}

pub fn save_goal(path: &Path, spaces: &Spaces, goal: &Goal) -> Result<()> {
    write_file(path, &goal_to_string(spaces, goal))
}

pub fn load_principal(path: &Path, spaces: &Spaces) -> Result<PrincipalPayoff> {
    principal_from_str(&read_file(path)?, &path.display().to_string(), spaces)
}

pub fn save_principal(path: &Path, spaces: &Spaces, u: &PrincipalPayoff) -> Result<()> {
    write_file(path, &principal_to_string(spaces, u))
}
