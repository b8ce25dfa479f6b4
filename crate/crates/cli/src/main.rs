//! `infodesign`: validate, evaluate, certify, design, and simulate
//! information-design instances on finite augmented Markov games.
//!
//! Reports go to stdout in a line-oriented record format and are byte-stable
//! for a fixed (inputs, flags, seed, version); the wall-clock line goes to
//! stderr so it never perturbs them. Exit codes: 0 pass, 2 semantic failure
//! (a violated check, an uncertified design, an off-support evaluation),
//! 3 unusable input (parse, io, shape, cap, bad flags).

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infodesign_core::spaces::DEFAULT_CELL_CAP;
use infodesign_core::Error;

use commands::{CertifyArgs, DesignArgs, Global, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "infodesign",
    version,
    about = "Solver and certification tool for information design in augmented Markov games"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Seed for solver restarts and simulation draws.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance applied to every certification threshold.
    #[arg(long, global = true, default_value_t = 1e-7)]
    tol: f64,
    /// Refuse exact enumerations larger than this many cells.
    #[arg(long, global = true, default_value_t = DEFAULT_CELL_CAP)]
    cap: u64,
    /// Directory receiving the report and any solved tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a game file against every structural rule.
    Validate { game: PathBuf },

    /// Print exact discounted state values for a strategy bundle.
    Evaluate {
        game: PathBuf,
        strategy: PathBuf,
        signaling: PathBuf,
        /// Ignore any selection table and use the obedient rule.
        #[arg(long)]
        obedient: bool,
    },

    /// Run certification checks; with no check flags, the full bundle.
    Certify {
        game: PathBuf,
        strategy: PathBuf,
        /// Goal file, needed by the goal-dependent checks.
        goal: Option<PathBuf>,
        /// Signaling file, needed by every check except --mce.
        #[arg(long)]
        signaling: Option<PathBuf>,
        /// Correlated-equilibrium check of the one-shot canonical profile.
        #[arg(long)]
        mce: bool,
        /// One-shot-deviation rationality of the selection and policy.
        #[arg(long)]
        one_shot: bool,
        /// Obedience of signal recommendations.
        #[arg(long)]
        obedience: bool,
        /// Goal admissibility under the strategy.
        #[arg(long)]
        admissibility: bool,
        /// Stagewise Nash property of the goal itself.
        #[arg(long)]
        nash_goal: bool,
        /// Obedience notion: "ds" or "bayesian".
        #[arg(long, default_value = "bayesian")]
        obedience_mode: String,
        /// Admissibility notion: "strong" or "weak".
        #[arg(long, default_value = "weak")]
        admissibility_mode: String,
        /// Signal index defining the canonical profile used by --mce.
        #[arg(long, default_value_t = 0)]
        fixed_signal: usize,
        /// Ignore any selection table and use the obedient rule.
        #[arg(long)]
        obedient: bool,
    },

    /// Solve for a signaling rule and policy implementing a goal, or the
    /// designer-optimal pair under --optimal.
    Design {
        game: PathBuf,
        /// Target occupation goal; omit it when using --optimal.
        goal: Option<PathBuf>,
        /// Search over goals for the designer payoff in --principal.
        #[arg(long, conflicts_with = "goal", requires = "principal")]
        optimal: bool,
        /// Designer payoff file for --optimal.
        #[arg(long)]
        principal: Option<PathBuf>,
        /// Random restarts per joint-type block.
        #[arg(long, default_value_t = 8)]
        restarts: usize,
    },

    /// Monte Carlo discounted returns from every initial state.
    Simulate {
        game: PathBuf,
        strategy: PathBuf,
        signaling: PathBuf,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        joint_type: usize,
        /// Ignore any selection table and use the obedient rule.
        #[arg(long)]
        obedient: bool,
    },
}

/// INFODESIGN_THREADS pins the worker pool size; 0 or unset picks the number
/// of cores. Report ordering is fixed either way.
fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("INFODESIGN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("INFODESIGN_THREADS must be a nonnegative integer, got {raw:?}"))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("thread pool setup failed: {e}"))
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::OffSupportSignal { .. } | Error::NoConvergence { .. } => 2,
        Error::CapExceeded { .. } | Error::Shape(_) | Error::Parse { .. } | Error::Io { .. } => 3,
    }
}

fn run(cli: &Cli) -> infodesign_core::Result<i32> {
    let global = Global {
        seed: cli.global.seed,
        tol: cli.global.tol,
        cap: cli.global.cap,
        out: cli.global.out.clone(),
    };
    match &cli.command {
        Command::Validate { game } => commands::cmd_validate(&global, game),
        Command::Evaluate {
            game,
            strategy,
            signaling,
            obedient,
        } => commands::cmd_evaluate(&global, game, strategy, signaling, *obedient),
        Command::Certify {
            game,
            strategy,
            goal,
            signaling,
            mce,
            one_shot,
            obedience,
            admissibility,
            nash_goal,
            obedience_mode,
            admissibility_mode,
            fixed_signal,
            obedient,
        } => {
            let mut checks = Vec::new();
            for (on, name) in [
                (*mce, "mce"),
                (*one_shot, "one-shot"),
                (*obedience, "obedience"),
                (*admissibility, "admissibility"),
                (*nash_goal, "nash-goal"),
            ] {
                if on {
                    checks.push(name);
                }
            }
            let args = CertifyArgs {
                game: game.clone(),
                strategy: strategy.clone(),
                goal: goal.clone(),
                signaling: signaling.clone(),
                checks,
                obedience_mode: obedience_mode.parse().map_err(Error::Shape)?,
                admissibility_mode: admissibility_mode.parse().map_err(Error::Shape)?,
                fixed_signal: *fixed_signal,
                obedient: *obedient,
            };
            commands::cmd_certify(&global, &args)
        }
        Command::Design {
            game,
            goal,
            optimal,
            principal,
            restarts,
        } => {
            let args = DesignArgs {
                game: game.clone(),
                goal: goal.clone(),
                optimal: *optimal,
                principal: principal.clone(),
                restarts: *restarts,
            };
            commands::cmd_design(&global, &args)
        }
        Command::Simulate {
            game,
            strategy,
            signaling,
            horizon,
            runs,
            joint_type,
            obedient,
        } => {
            let args = SimulateArgs {
                game: game.clone(),
                strategy: strategy.clone(),
                signaling: signaling.clone(),
                horizon: *horizon,
                runs: *runs,
                joint_type: *joint_type,
                obedient: *obedient,
            };
            commands::cmd_simulate(&global, &args)
        }
    }
}

fn main() -> ExitCode {
    let start = std::time::Instant::now();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let usage_only = !matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return ExitCode::from(if usage_only { 3 } else { 0 });
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(3);
    }
    let code = match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    };
    eprintln!("elapsed_ms = {}", start.elapsed().as_millis());
    ExitCode::from(code as u8)
}
