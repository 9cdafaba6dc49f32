use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conjulab::{run, CliError, Command, Config, RunOptions};

#[derive(Parser)]
#[command(name = "conjulab", version, about = "Certified conjugacies for perturbed hyperbolic operators")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Certified constants a, t, b, ‖T⁻¹‖, n₀, ε(δ), C and the correspondence constant.
    Constants(Common),
    /// h(x) and h⁻¹(x) with certified errors at the configured points.
    Solve(Common),
    /// Run the configured verifiers and emit JSON-lines reports.
    Verify(Common),
    /// Emit a CSV table over the configured sweep axis.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON, schema 1). `bundled` selects the built-in scenarios.
    #[arg(long)]
    config: String,
    /// Directory for report.jsonl / sweep.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the sample seed of every scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(path: &str) -> Result<Config, CliError> {
    if path == "bundled" {
        return Ok(conjulab::bundled_config());
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
    Config::parse(&text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONJULAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Constants(c) => (Command::Constants, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    if let Some(jobs) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let opts = RunOptions {
        out: common.out,
        seed: common.seed,
    };
    let result = load(&common.config).and_then(|config| run(command, &config, &opts));
    match result {
        Ok(output) => {
            for line in &output.lines {
                println!("{line}");
            }
            if output.failures > 0 {
                eprintln!("{} report(s) failed", output.failures);
            }
            ExitCode::from(output.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
