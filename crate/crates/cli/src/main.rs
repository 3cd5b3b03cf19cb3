use clap::Parser;

use glhs::config::Overrides;
use glhs::EXIT_CONFIG_ERROR;

/// Ginzburg-Landau / random-walk verification lab.
///
/// Runs Monte Carlo experiments against exact small-instance oracles and
/// writes `<prefix>.csv` (fixed schema) and `<prefix>.summary.json`.
/// Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 config error.
#[derive(Parser)]
#[command(name = "glhs", version, about)]
struct Cli {
    /// Experiment: theorem | lemma-equality | fkg | corollary | order |
    /// negcorr | kite | gap | all (overrides the config file)
    experiment: Option<String>,

    /// Path to a JSON config file
    #[arg(long)]
    config: Option<std::path::PathBuf>,

    /// Master seed (highest precedence; also settable via GLHS_SEED)
    #[arg(long)]
    seed: Option<u64>,

    /// Replica count override
    #[arg(long)]
    replicas: Option<usize>,

    /// Output path prefix
    #[arg(long, value_name = "PREFIX")]
    out: Option<String>,
}

fn main() {
    let cli = Cli::parse();

    let env_seed = match std::env::var("GLHS_SEED") {
        Ok(s) => match s.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                eprintln!("GLHS_SEED must be a 64-bit unsigned integer, got {s:?}");
                std::process::exit(EXIT_CONFIG_ERROR);
            }
        },
        Err(_) => None,
    };

    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("cannot read config {}: {e}", path.display());
                std::process::exit(EXIT_CONFIG_ERROR);
            }
        },
        None => "{}".to_string(),
    };

    let overrides = Overrides {
        experiment: cli.experiment,
        env_seed,
        flag_seed: cli.seed,
        replicas: cli.replicas,
        out: cli.out,
    };
    std::process::exit(glhs::run_from_text(&text, &overrides));
}
