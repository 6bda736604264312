use std::path::PathBuf;
use std::process::ExitCode;

use bittide_cli::{
    cmd_analyze, cmd_compare, cmd_simulate, cmd_sweep, parse_values, AnalyzeFlags, CliError, Model,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bittide",
    version,
    about = "Simulate and analyze bittide clock synchronization"
)]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override a scenario field, e.g. --set controller.k_p=2e-8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one model and write its trace
    Simulate {
        #[arg(long, value_enum)]
        model: Model,
        #[command(flatten)]
        common: Common,
    },
    /// Run both models on the same scenario and compare them
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form analysis of the linearized model
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Full resistance-distance matrix
        #[arg(long)]
        resistance: bool,
        /// Worst-case frequency vector for a given norm bound
        #[arg(long)]
        worst_case: bool,
        /// Norm bound for --worst-case (default: norm of the centered omega_u)
        #[arg(long, requires = "worst_case")]
        gamma: Option<f64>,
        /// Predicted L2 norms of frequency and occupancy deviation
        #[arg(long)]
        performance: bool,
        /// Also integrate the ODE and report the empirical norms
        #[arg(long, requires = "performance")]
        simulate: bool,
        /// Stability certificate residuals
        #[arg(long)]
        lyapunov: bool,
    },
    /// Predicted performance over a list of values of one field
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted scenario field, e.g. controller.k_p
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long)]
        values: String,
        /// Number of parallel runs
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate { model, common } => {
            cmd_simulate(&common.scenario, &common.overrides, model, &common.out)
        }
        Command::Compare { common } => {
            cmd_compare(&common.scenario, &common.overrides, &common.out)
        }
        Command::Analyze {
            common,
            resistance,
            worst_case,
            gamma,
            performance,
            simulate,
            lyapunov,
        } => {
            let flags = AnalyzeFlags {
                resistance,
                worst_case,
                performance,
                simulate,
                lyapunov,
                gamma,
            };
            cmd_analyze(&common.scenario, &common.overrides, flags, &common.out)
        }
        Command::Sweep {
            common,
            param,
            values,
            jobs,
        } => {
            let values = parse_values(&values)?;
            cmd_sweep(
                &common.scenario,
                &common.overrides,
                &param,
                &values,
                jobs,
                &common.out,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
