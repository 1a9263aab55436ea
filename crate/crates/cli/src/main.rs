use std::path::PathBuf;
use std::process::ExitCode;

use anyonmem::experiment::{self, apply_override, execute, recipe, resolve_workers, ExperimentConfig, ExperimentKind, Status, RECIPES};
use anyonmem::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "anyonmem", version, about = "Thermal stability of toric-code memories with repulsive anyons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble-averaged ⟨Z⟩, ⟨Z_ec⟩, anyon and flip counts over time.
    Simulate(RunArgs),
    /// i.i.d. error threshold of the matching decoder.
    Threshold(RunArgs),
    /// Threshold times versus lattice size with an f_c fit.
    LifetimeScan(RunArgs),
    /// Mean-field, Metropolis and exact equilibrium anyon numbers.
    Equilibrium(RunArgs),
    /// Early-time dynamics against the pair rate equation.
    NonsplitPair(RunArgs),
    /// A single diffusing pair against its closed-form decay.
    SinglePair(RunArgs),
    /// Lifetime predictions without simulation.
    Analytics(RunArgs),
    /// Effective J and A of the cavity-mediated interaction.
    Cavity(RunArgs),
    /// Lists the built-in recipes.
    Recipes,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "recipe")]
    config: Option<PathBuf>,
    /// Built-in preset; defaults to the command's own preset.
    #[arg(long)]
    recipe: Option<String>,
    /// Override a config field, e.g. `--set L=16,32 --set runs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to the ANYONMEM_WORKERS environment variable.
    #[arg(long)]
    workers: Option<usize>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn default_recipe(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Simulate => "fig2",
        ExperimentKind::Threshold => "fig3",
        ExperimentKind::LifetimeScan => "fig5-ohmic",
        ExperimentKind::Equilibrium => "fig4",
        ExperimentKind::NonsplitPair => "fig6",
        ExperimentKind::SinglePair => "fig8",
        ExperimentKind::Analytics => "analytics",
        ExperimentKind::Cavity => "cavity",
    }
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> anyonmem::Result<ExperimentConfig> {
    let mut value: Value = match (&args.config, &args.recipe) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        (None, name) => serde_json::to_value(recipe(name.as_deref().unwrap_or(default_recipe(kind)))?)?,
    };
    if let Some(found) = value.get("kind").and_then(Value::as_str) {
        if found != kind.as_str() {
            return Err(Error::Config(format!(
                "config is a {found:?} experiment but the command is {:?}",
                kind.as_str()
            )));
        }
    }
    apply_override(&mut value, "kind", &format!("\"{}\"", kind.as_str()))?;
    if let Some(seed) = args.seed {
        apply_override(&mut value, "seed", &seed.to_string())?;
    }
    for s in &args.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
        apply_override(&mut value, k.trim(), v.trim())?;
    }
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Json(_)
            | Error::InvalidSize(_)
            | Error::InvalidInteraction(_)
            | Error::InvalidBath(_)
            | Error::InvalidParameter(_)
            | Error::Resonance(_)
            | Error::DivergentIntegral(_)
            | Error::Unsupported(_)
    )
}

fn run(kind: ExperimentKind, args: &RunArgs) -> ExitCode {
    let config = match resolve(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if args.print_config {
        match config.to_json() {
            Ok(text) => {
                println!("{text}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_FAILURE);
            }
        }
    }
    let workers = resolve_workers(args.workers);
    match execute(&config, &args.out, workers) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            match outcome.status {
                Status::Ok => ExitCode::SUCCESS,
                Status::Inconclusive => {
                    eprintln!("inconclusive: statistics too weak to locate the requested feature; raise runs or widen the scan");
                    ExitCode::from(EXIT_INCONCLUSIVE)
                }
            }
        }
        Err(e) if is_config_error(&e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Threshold(a) => (ExperimentKind::Threshold, a),
        Command::LifetimeScan(a) => (ExperimentKind::LifetimeScan, a),
        Command::Equilibrium(a) => (ExperimentKind::Equilibrium, a),
        Command::NonsplitPair(a) => (ExperimentKind::NonsplitPair, a),
        Command::SinglePair(a) => (ExperimentKind::SinglePair, a),
        Command::Analytics(a) => (ExperimentKind::Analytics, a),
        Command::Cavity(a) => (ExperimentKind::Cavity, a),
        Command::Recipes => {
            for name in RECIPES {
                let kind = experiment::recipe(name).map(|c| c.kind.as_str()).unwrap_or("?");
                println!("{name:<16} {kind}");
            }
            return ExitCode::SUCCESS;
        }
    };
    run(kind, args)
}
