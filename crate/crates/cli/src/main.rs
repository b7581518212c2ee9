use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ptc_cli::presets::{preset, PRESETS};
use ptc_cli::run::Document;
use ptc_cli::{run, ExperimentConfig};

/// Runs a consensus, formation or certification experiment.
///
/// Exit status: 0 success, 1 configuration error, 2 run-time failure,
/// 3 a claimed guarantee did not hold.
#[derive(Parser, Debug)]
#[command(name = "ptcsim", version)]
struct Args {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment.
    #[arg(long, value_parser = PRESETS)]
    preset: Option<String>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // help and version are not errors; bad arguments are config errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if args.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => match ExperimentConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        (None, Some(name)) => preset(name).expect("clap restricts preset names"),
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }

    match run(&cfg, &args.out) {
        Ok(outcome) => {
            if !args.quiet {
                let doc = Document {
                    name: &cfg.name,
                    seed: cfg.seed,
                    report: &outcome.report,
                };
                println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
            }
            let code = outcome.exit_code();
            if code != 0 {
                eprintln!("certification failed; see {}", args.out.display());
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
