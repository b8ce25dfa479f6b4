//! The five subcommands. Each loads and validates its inputs, runs the
//! library, prints one report to stdout (and mirrors it into `--out`), and
//! returns the process exit code: 0 pass, 2 semantic fail, 3 input error.

use std::path::{Path, PathBuf};

use infodesign_core::config;
use infodesign_core::equilibrium::{
    check_by_name, check_oil, AdmissibilityMode, CertificationReport, CheckContext,
    ConditionReport, ObedienceMode, CHECK_NAMES,
};
use infodesign_core::game::{
    validate_game, validate_goal, validate_policy, validate_principal, validate_selection,
    validate_signaling, AugmentedGame, SelectionRule, SignalingRule, Violation,
};
use infodesign_core::principal::{solve_optimal_design, OptimalDesign};
use infodesign_core::solver::{
    solve_fpalign, DesignProblem, DesignSolution, SolverOptions, Tolerances,
};
use infodesign_core::valuation::{evaluate_values, simulate_rollouts};
use infodesign_core::{Error, Result};

use crate::report::{float, Manifest, Report};

pub struct Global {
    pub seed: u64,
    pub tol: f64,
    pub cap: u64,
    pub out: Option<PathBuf>,
}

const EXIT_PASS: i32 = 0;
const EXIT_FAIL: i32 = 2;

fn usage(message: impl Into<String>) -> Error {
    Error::Shape(message.into())
}

fn write_artifact(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    std::fs::write(&path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Print the report and mirror it into the artifact directory.
fn emit(global: &Global, report: Report) -> Result<()> {
    let text = report.render();
    print!("{text}");
    if let Some(dir) = &global.out {
        write_artifact(dir, "report.txt", &text)?;
    }
    Ok(())
}

/// Content violations of already-parsed inputs end the run with the
/// semantic-failure code and a report naming each one.
fn violation_report(
    global: &Global,
    manifest: &Manifest,
    found: Vec<(&'static str, Vec<Violation>)>,
) -> Result<Option<i32>> {
    let total: usize = found.iter().map(|(_, v)| v.len()).sum();
    if total == 0 {
        return Ok(None);
    }
    let mut report = Report::new();
    manifest.emit(&mut report);
    report.section("validation");
    report.kv("violations", total);
    let mut k = 0usize;
    for (slot, list) in &found {
        for v in list {
            report.kv(&format!("violation.{k}"), format!("{slot} {v}"));
            k += 1;
        }
    }
    emit(global, report)?;
    Ok(Some(EXIT_FAIL))
}

pub fn cmd_validate(global: &Global, game_path: &Path) -> Result<i32> {
    let game = config::load_game(game_path)?;
    let violations = validate_game(&game);

    let mut manifest = Manifest::new("validate", global.seed);
    manifest.input("game", game_path);
    let mut report = Report::new();
    manifest.emit(&mut report);
    report.section("validation");
    report.kv("violations", violations.len());
    for (k, v) in violations.iter().enumerate() {
        report.kv(&format!("violation.{k}"), format!("game {v}"));
    }
    emit(global, report)?;
    Ok(if violations.is_empty() { EXIT_PASS } else { EXIT_FAIL })
}

struct StrategyInputs {
    alpha: SignalingRule,
    beta: SelectionRule,
    pi: infodesign_core::game::Policy,
}

/// Load signaling and strategy files against the game's spaces; `obedient`
/// discards any selection table in favor of the obedient rule.
fn load_pair(
    game: &AugmentedGame,
    signaling_path: &Path,
    strategy_path: &Path,
    obedient: bool,
    found: &mut Vec<(&'static str, Vec<Violation>)>,
) -> Result<StrategyInputs> {
    let s = &game.spaces;
    let alpha = config::load_signaling(signaling_path, s)?;
    let strategy = config::load_strategy(strategy_path, s)?;
    let beta = if obedient {
        SelectionRule::obedient(s)
    } else {
        strategy.selection_or_obedient(s)
    };
    found.push(("signaling", validate_signaling(s, &alpha)));
    found.push(("policy", validate_policy(s, &strategy.policy)));
    found.push(("selection", validate_selection(s, &beta)));
    Ok(StrategyInputs {
        alpha,
        beta,
        pi: strategy.policy,
    })
}

pub fn cmd_evaluate(
    global: &Global,
    game_path: &Path,
    strategy_path: &Path,
    signaling_path: &Path,
    obedient: bool,
) -> Result<i32> {
    let game = config::load_game(game_path)?;
    let mut found = vec![("game", validate_game(&game))];
    let inputs = load_pair(&game, signaling_path, strategy_path, obedient, &mut found)?;

    let mut manifest = Manifest::new("evaluate", global.seed);
    manifest.input("game", game_path);
    manifest.input("strategy", strategy_path);
    manifest.input("signaling", signaling_path);
    manifest.option("obedient", obedient);
    if let Some(code) = violation_report(global, &manifest, found)? {
        return Ok(code);
    }

    let s = game.spaces;
    let mut report = Report::new();
    manifest.emit(&mut report);
    report.section("values");
    report.kv("joint_types", s.joint_types());
    report.table("state_values", &["joint_type", "agent", "state", "value"]);
    for tj in 0..s.joint_types() {
        let bundle = evaluate_values(&game, &inputs.alpha, &inputs.beta, &inputs.pi, tj)?;
        for i in 0..s.n_agents {
            for g in 0..s.n_states {
                report.row(&[
                    tj.to_string(),
                    i.to_string(),
                    g.to_string(),
                    float(bundle.j[[i, g]]),
                ]);
            }
        }
    }
    emit(global, report)?;
    Ok(EXIT_PASS)
}

pub struct CertifyArgs {
    pub game: PathBuf,
    pub strategy: PathBuf,
    pub goal: Option<PathBuf>,
    pub signaling: Option<PathBuf>,
    pub checks: Vec<&'static str>,
    pub obedience_mode: ObedienceMode,
    pub admissibility_mode: AdmissibilityMode,
    pub fixed_signal: usize,
    pub obedient: bool,
}

fn condition_rows(report: &mut Report, conditions: &[(String, &ConditionReport)]) {
    report.table(
        "conditions",
        &["name", "pass", "violation", "tolerance", "witness"],
    );
    for (name, c) in conditions {
        report.row(&[
            name.clone(),
            c.pass.to_string(),
            float(c.violation),
            float(c.tolerance),
            c.witness.clone().unwrap_or_default(),
        ]);
    }
}

pub fn cmd_certify(global: &Global, args: &CertifyArgs) -> Result<i32> {
    let game = config::load_game(&args.game)?;
    let s = game.spaces;
    let mut found = vec![("game", validate_game(&game))];

    let strategy = config::load_strategy(&args.strategy, &s)?;
    let beta = if args.obedient {
        SelectionRule::obedient(&s)
    } else {
        strategy.selection_or_obedient(&s)
    };
    found.push(("policy", validate_policy(&s, &strategy.policy)));
    found.push(("selection", validate_selection(&s, &beta)));

    let needs_signaling =
        args.checks.is_empty() || args.checks.iter().any(|&c| c != "mce");
    let alpha = match &args.signaling {
        Some(path) => {
            let alpha = config::load_signaling(path, &s)?;
            found.push(("signaling", validate_signaling(&s, &alpha)));
            Some(alpha)
        }
        None if needs_signaling => {
            return Err(usage("--signaling is required by every check except --mce"));
        }
        None => None,
    };
    let goal = match &args.goal {
        Some(path) => {
            let goal = config::load_goal(path, &s)?;
            found.push(("goal", validate_goal(&s, &goal)));
            Some(goal)
        }
        None => None,
    };
    if args.fixed_signal >= s.n_signals {
        return Err(usage(format!(
            "--fixed-signal {} out of range (signals: {})",
            args.fixed_signal, s.n_signals
        )));
    }

    let mut manifest = Manifest::new("certify", global.seed);
    manifest.input("game", &args.game);
    manifest.input("strategy", &args.strategy);
    if let Some(p) = &args.signaling {
        manifest.input("signaling", p);
    }
    if let Some(p) = &args.goal {
        manifest.input("goal", p);
    }
    manifest.option_float("tol", global.tol);
    manifest.option("cap", global.cap);
    manifest.option(
        "checks",
        if args.checks.is_empty() {
            "oil".to_string()
        } else {
            args.checks.join(" ")
        },
    );
    manifest.option(
        "obedience_mode",
        match args.obedience_mode {
            ObedienceMode::DominantStrategy => "ds",
            ObedienceMode::Bayesian => "bayesian",
        },
    );
    manifest.option(
        "admissibility_mode",
        match args.admissibility_mode {
            AdmissibilityMode::Strong => "strong",
            AdmissibilityMode::Weak => "weak",
        },
    );
    manifest.option("fixed_signal", args.fixed_signal);
    manifest.option("obedient", args.obedient);
    if let Some(code) = violation_report(global, &manifest, found)? {
        return Ok(code);
    }

    let uniform = SignalingRule::uniform(&s);
    let ctx = CheckContext {
        game: &game,
        alpha: alpha.as_ref().unwrap_or(&uniform),
        beta: &beta,
        pi: &strategy.policy,
        goal: goal.as_ref(),
        fixed_signal: args.fixed_signal,
        obedience_mode: args.obedience_mode,
        admissibility_mode: args.admissibility_mode,
        tol: global.tol,
        cap: global.cap,
    };

    let results: Vec<(String, ConditionReport)> = if args.checks.is_empty() {
        let alpha = alpha.as_ref().expect("required above");
        let goal = goal
            .as_ref()
            .ok_or_else(|| usage("the full design bundle requires a goal file"))?;
        let oil: CertificationReport = check_oil(
            &game,
            alpha,
            &strategy.policy,
            goal,
            args.obedience_mode,
            args.admissibility_mode,
            global.tol,
            global.cap,
        )?;
        oil.conditions
            .into_iter()
            .map(|c| (c.name.to_string(), c))
            .collect()
    } else {
        let mut out = Vec::new();
        for name in CHECK_NAMES {
            if args.checks.contains(&name) {
                let check = check_by_name(name).expect("registry name");
                out.push((name.to_string(), check.run(&ctx)?));
            }
        }
        out
    };

    let pass = results.iter().all(|(_, c)| c.pass);
    let mut report = Report::new();
    manifest.emit(&mut report);
    report.section("certificate");
    report.kv("pass", pass);
    let rows: Vec<(String, &ConditionReport)> =
        results.iter().map(|(n, c)| (n.clone(), c)).collect();
    condition_rows(&mut report, &rows);
    emit(global, report)?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

pub struct DesignArgs {
    pub game: PathBuf,
    pub goal: Option<PathBuf>,
    pub optimal: bool,
    pub principal: Option<PathBuf>,
    pub restarts: usize,
}

fn design_tables(report: &mut Report, game: &AugmentedGame, solution: &DesignSolution) {
    let s = game.spaces;
    report.table("residuals", &["name", "value", "witness"]);
    for entry in &solution.certificate.entries {
        report.row(&[
            entry.name.to_string(),
            float(entry.value),
            entry.witness.clone().unwrap_or_default(),
        ]);
    }
    let cert = &solution.certificate;
    let mut conditions: Vec<(String, &ConditionReport)> = vec![
        ("nash-goal".to_string(), &cert.nash_goal),
        ("admissibility".to_string(), &cert.admissibility),
    ];
    for c in &cert.oil.conditions {
        conditions.push((format!("oil.{}", c.name), c));
    }
    condition_rows(report, &conditions);

    report.table("state_values", &["joint_type", "agent", "state", "value"]);
    for block in &solution.blocks {
        for i in 0..s.n_agents {
            for g in 0..s.n_states {
                report.row(&[
                    block.joint_type.to_string(),
                    i.to_string(),
                    g.to_string(),
                    float(block.j[[i, g]]),
                ]);
            }
        }
    }
    report.table(
        "signaling",
        &["joint_type", "state", "sent_profile", "probability"],
    );
    for tj in 0..s.joint_types() {
        for g in 0..s.n_states {
            for sel in 0..s.joint_signals() {
                report.row(&[
                    tj.to_string(),
                    g.to_string(),
                    sel.to_string(),
                    float(solution.alpha.rows[[tj, g, sel]]),
                ]);
            }
        }
    }
    report.table(
        "policy",
        &["agent", "state", "signal", "type", "action", "probability"],
    );
    for i in 0..s.n_agents {
        for g in 0..s.n_states {
            for w in 0..s.n_signals {
                for ty in 0..s.n_types {
                    for a in 0..s.n_actions {
                        report.row(&[
                            i.to_string(),
                            g.to_string(),
                            w.to_string(),
                            ty.to_string(),
                            a.to_string(),
                            float(solution.pi.rows[i][[g, w, ty, a]]),
                        ]);
                    }
                }
            }
        }
    }
}

fn optimal_tables(report: &mut Report, game: &AugmentedGame, design: &OptimalDesign) {
    let s = game.spaces;
    report.section("principal");
    report.kv_float("achieved", design.value.total);
    report.table("principal_per_type", &["joint_type", "value"]);
    for (tj, v) in design.value.per_type.iter().enumerate() {
        report.row(&[tj.to_string(), float(*v)]);
    }
    report.table(
        "induced_goal",
        &["joint_type", "state", "joint_action", "probability"],
    );
    for tj in 0..s.joint_types() {
        for g in 0..s.n_states {
            for aj in 0..s.joint_actions() {
                report.row(&[
                    tj.to_string(),
                    g.to_string(),
                    aj.to_string(),
                    float(design.induced.prob(tj, g, aj)),
                ]);
            }
        }
    }
}

pub fn cmd_design(global: &Global, args: &DesignArgs) -> Result<i32> {
    if args.optimal == args.goal.is_some() {
        return Err(usage(
            "design takes either a goal file or --optimal with --principal",
        ));
    }
    let game = config::load_game(&args.game)?;
    let s = game.spaces;
    let mut found = vec![("game", validate_game(&game))];

    let mut manifest = Manifest::new("design", global.seed);
    manifest.input("game", &args.game);
    let tolerances = Tolerances {
        feasibility: global.tol,
        complementarity: global.tol,
        alignment: global.tol,
    };
    let options = SolverOptions {
        restarts: args.restarts,
        seed: global.seed,
        ..SolverOptions::default()
    };

    let (solution, optimal) = if args.optimal {
        let principal_path = args
            .principal
            .as_ref()
            .ok_or_else(|| usage("--optimal requires --principal"))?;
        let u = config::load_principal(principal_path, &s)?;
        found.push(("principal", validate_principal(&s, &u)));
        manifest.input("principal", principal_path);
        manifest.option_float("tol", global.tol);
        manifest.option("restarts", args.restarts);
        manifest.option("optimal", true);
        if let Some(code) = violation_report(global, &manifest, found)? {
            return Ok(code);
        }
        let design = solve_optimal_design(&game, &u, &tolerances, &options)?;
        (design.solution.clone(), Some(design))
    } else {
        let goal_path = args.goal.as_ref().expect("checked above");
        let goal = config::load_goal(goal_path, &s)?;
        found.push(("goal", validate_goal(&s, &goal)));
        manifest.input("goal", goal_path);
        manifest.option_float("tol", global.tol);
        manifest.option("restarts", args.restarts);
        manifest.option("optimal", false);
        if let Some(code) = violation_report(global, &manifest, found)? {
            return Ok(code);
        }
        let problem = DesignProblem {
            game: &game,
            goal: &goal,
            joint_type: None,
            tolerances: tolerances.clone(),
        };
        (solve_fpalign(&problem, &options)?, None)
    };

    let mut report = Report::new();
    manifest.emit(&mut report);
    report.section("certificate");
    report.kv("certified", solution.certificate.certified);
    design_tables(&mut report, &game, &solution);
    if let Some(design) = &optimal {
        optimal_tables(&mut report, &game, design);
    }

    if let Some(dir) = &global.out {
        write_artifact(dir, "signaling.toml", &config::signaling_to_string(&s, &solution.alpha))?;
        let strategy = config::StrategyFile {
            policy: solution.pi.clone(),
            selection: None,
        };
        write_artifact(dir, "strategy.toml", &config::strategy_to_string(&s, &strategy))?;
        if let Some(design) = &optimal {
            write_artifact(dir, "goal.toml", &config::goal_to_string(&s, &design.induced))?;
        }
    }
    let certified = solution.certificate.certified;
    emit(global, report)?;
    Ok(if certified { EXIT_PASS } else { EXIT_FAIL })
}

pub struct SimulateArgs {
    pub game: PathBuf,
    pub strategy: PathBuf,
    pub signaling: PathBuf,
    pub horizon: usize,
    pub runs: usize,
    pub joint_type: usize,
    pub obedient: bool,
}

pub fn cmd_simulate(global: &Global, args: &SimulateArgs) -> Result<i32> {
    if args.horizon == 0 || args.runs == 0 {
        return Err(usage("--horizon and --runs must be positive"));
    }
    let game = config::load_game(&args.game)?;
    let s = game.spaces;
    if args.joint_type >= s.joint_types() {
        return Err(usage(format!(
            "--joint-type {} out of range (joint types: {})",
            args.joint_type,
            s.joint_types()
        )));
    }
    let mut found = vec![("game", validate_game(&game))];
    let inputs = load_pair(&game, &args.signaling, &args.strategy, args.obedient, &mut found)?;

    let mut manifest = Manifest::new("simulate", global.seed);
    manifest.input("game", &args.game);
    manifest.input("strategy", &args.strategy);
    manifest.input("signaling", &args.signaling);
    manifest.option("horizon", args.horizon);
    manifest.option("runs", args.runs);
    manifest.option("joint_type", args.joint_type);
    manifest.option("obedient", args.obedient);
    if let Some(code) = violation_report(global, &manifest, found)? {
        return Ok(code);
    }

    let stats = simulate_rollouts(
        &game,
        &inputs.alpha,
        &inputs.beta,
        &inputs.pi,
        args.joint_type,
        args.horizon,
        args.runs,
        global.seed,
    );
    let r_max = game
        .rewards
        .iter()
        .flat_map(|t| t.iter())
        .fold(0.0f64, |m, &x| m.max(x.abs()));
    let tail = game.discount.powi(args.horizon as i32) * r_max / (1.0 - game.discount);

    let mut report = Report::new();
    manifest.emit(&mut report);
    report.section("simulation");
    report.kv("horizon", stats.horizon);
    report.kv("runs", stats.runs);
    report.kv_float("truncation_tail", tail);
    report.table("returns", &["agent", "state", "mean", "std_error"]);
    for i in 0..s.n_agents {
        for g in 0..s.n_states {
            report.row(&[
                i.to_string(),
                g.to_string(),
                float(stats.mean[[i, g]]),
                float(stats.std_error[[i, g]]),
            ]);
        }
    }
    emit(global, report)?;
    Ok(EXIT_PASS)
}
