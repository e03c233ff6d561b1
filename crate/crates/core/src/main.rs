use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tikflow::scenario::{run_stages, Bundle, Scenario, ScenarioConfig, Stage};
use tikflow::suite;
use tikflow::Error;

/// Fixed points of nonexpansive operators via Tikhonov-regularized flows.
#[derive(Parser)]
#[command(name = "tikflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator-class and regularization-path checks (no integration).
    Check(Target),
    /// Follow the regularization path and write path.csv.
    Regpath(Target),
    /// Integrate the plain and Tikhonov flows and run the monitors.
    Simulate(Target),
    /// Scenario commands.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Run the built-in acceptance suite.
    Suite,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run every stage of a scenario.
    Run(Target),
    /// List the built-in scenarios.
    List,
}

#[derive(Args)]
struct Target {
    /// Path to a TOML scenario, or builtin:NAME.
    config: String,
    /// Output directory; artifacts go to DIR/<scenario>/.
    #[arg(long, default_value = "tikflow-out")]
    out: PathBuf,
    /// Override the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(t) => run(&t, &[Stage::Checks, Stage::Regpath]),
        Command::Regpath(t) => run(&t, &[Stage::Regpath]),
        Command::Simulate(t) => run(
            &t,
            &[Stage::PlainFlow, Stage::TikhonovFlow, Stage::Monitors],
        ),
        Command::Scenario(ScenarioCommand::Run(t)) => run(&t, &Stage::ALL),
        Command::Scenario(ScenarioCommand::List) => {
            for name in tikflow::scenario::builtin_names() {
                println!("builtin:{name}");
            }
            Ok(true)
        }
        Command::Suite => {
            let mut ok = true;
            for c in suite::run_all() {
                println!("{c}");
                ok &= c.passed;
            }
            Ok(ok)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            })
        }
    }
}

fn run(target: &Target, stages: &[Stage]) -> Result<bool, Error> {
    let mut cfg = ScenarioConfig::load(&target.config)?;
    if let Some(seed) = target.seed {
        cfg.seed = seed;
    }
    let scn = Scenario::from_config(&cfg)?;
    let bundle: Bundle = run_stages(&scn, stages)?;
    let dir = bundle.write_to(&target.out)?;
    print!("{}", bundle.report.to_text());
    eprintln!("artifacts written to {}", dir.display());
    Ok(bundle.report.passed())
}
