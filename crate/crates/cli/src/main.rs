use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oswitch_cli::{run, Command, RoleChoice, RunConfig, VerifyArgs, EXIT_INPUT};
use oswitch_core::scheme::SchemeMode;
use oswitch_core::verify::{ComparisonMode, DEFAULT_TOL_FACTOR};

#[derive(Parser)]
#[command(name = "oswitch", version, about = "Optimal-switching systems with Neumann boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check the structural assumptions of a problem.
    Validate(Common),
    /// March the scheme to the horizon and write the solution.
    Solve(Common),
    /// Residual and comparison checks on solution files.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Solution CSV to check.
        #[arg(long)]
        solution: PathBuf,
        /// Second solution CSV, compared as the supersolution side.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Comparison::FullBoundary)]
        comparison: Comparison,
        #[arg(long, value_enum, default_value_t = RoleArg::Both)]
        role: RoleArg,
        /// Tolerance is this factor times (h + dt).
        #[arg(long, default_value_t = DEFAULT_TOL_FACTOR)]
        tol_factor: f64,
    },
    /// Tabulate barrier sub- and supersolutions.
    Barriers(Common),
    /// Convergence study under grid refinement.
    Study(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Implicit)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; overrides OSWITCH_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Explicit,
    Implicit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Comparison {
    FullBoundary,
    NoBoundary,
    MixedRegion,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Sub,
    Super,
    Both,
}

fn run_config(command: Command, c: Common, verify: Option<VerifyArgs>) -> RunConfig {
    RunConfig {
        command,
        config: c.config,
        out: c.out,
        h: c.h,
        dt: c.dt,
        mode: match c.mode {
            ModeArg::Explicit => SchemeMode::Explicit,
            ModeArg::Implicit => SchemeMode::Implicit,
        },
        seed: c.seed,
        threads: c.threads,
        verify,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let cfg = match cli.command {
        Sub::Validate(c) => run_config(Command::Validate, c, None),
        Sub::Solve(c) => run_config(Command::Solve, c, None),
        Sub::Barriers(c) => run_config(Command::Barriers, c, None),
        Sub::Study(c) => run_config(Command::Study, c, None),
        Sub::Verify {
            common,
            solution,
            against,
            comparison,
            role,
            tol_factor,
        } => {
            let args = VerifyArgs {
                solution,
                against,
                comparison: match comparison {
                    Comparison::FullBoundary => ComparisonMode::FullBoundary,
                    Comparison::NoBoundary => ComparisonMode::NoBoundary,
                    Comparison::MixedRegion => ComparisonMode::MixedRegion,
                },
                role: match role {
                    RoleArg::Sub => RoleChoice::Sub,
                    RoleArg::Super => RoleChoice::Super,
                    RoleArg::Both => RoleChoice::Both,
                },
                tol_factor,
            };
            run_config(Command::Verify, common, Some(args))
        }
    };
    let outcome = run(&cfg);
    if outcome.code == EXIT_INPUT || outcome.code == oswitch_cli::EXIT_NUMERICAL {
        eprintln!("{}", outcome.summary);
    } else {
        print!("{}", outcome.summary);
        if !outcome.summary.ends_with('\n') {
            println!();
        }
    }
    ExitCode::from(outcome.code as u8)
}
