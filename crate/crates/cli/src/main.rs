//! `drivexai` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drivexai::pipeline::{ModelKind, RunConfig, Task};
use drivexai::{Error, ErrorKind, Result};

#[derive(Parser, Debug)]
#[command(
    name = "drivexai",
    version,
    about = "Explainable driving-style recognition"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args, Debug, Clone, Default)]
struct GlobalArgs {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Classifier: rf, gbt or svm.
    #[arg(long, global = true)]
    model_kind: Option<ModelKind>,
    /// Label set: three_class or binary.
    #[arg(long, global = true, value_parser = parse_task)]
    task: Option<Task>,
    /// Feature configuration name.
    #[arg(long, global = true)]
    feature_config: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate labeled traces into CSV files with a manifest.
    Generate,
    /// Clean and window a directory of traces; writes windows.csv.
    Slice {
        /// Directory written by `generate`.
        #[arg(long)]
        traces: PathBuf,
    },
    /// Compute a feature matrix from a directory of traces.
    Featurize {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Split a feature matrix, train a model and score it on the held-out part.
    Train {
        /// Feature CSV with profile labels.
        #[arg(long)]
        features: PathBuf,
    },
    /// Score a saved model on a feature matrix.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Feature CSV labeled in the model's class space.
        #[arg(long)]
        features: PathBuf,
    },
    /// Attribute a tree model's outputs with exact Shapley values.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Row to produce a waterfall (and advice) for.
        #[arg(long)]
        instance: Option<usize>,
        /// Training features whose medians select advice variants.
        #[arg(long)]
        train_features: Option<PathBuf>,
    },
    /// Driving advice for one instance.
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        instance: usize,
        #[arg(long)]
        train_features: Option<PathBuf>,
        /// Rulebook TOML replacing the built-in one.
        #[arg(long)]
        rulebook: Option<PathBuf>,
    },
    /// Run every stage end to end and write the full results bundle.
    Pipeline,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "three_class" => Ok(Task::ThreeClass),
        "binary" => Ok(Task::Binary),
        other => Err(format!(
            "unknown task '{other}' (expected three_class or binary)"
        )),
    }
}

/// Defaults, then the config file, then command-line flags.
fn resolve_config(args: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(kind) = args.model_kind {
        cfg.model = kind;
    }
    if let Some(task) = args.task {
        cfg.task = task;
    }
    if let Some(name) = &args.feature_config {
        cfg.feature_config = name.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    let force = cli.global.force;
    match cli.command {
        Command::Generate => commands::generate(&cfg, force),
        Command::Slice { traces } => commands::slice(&cfg, &traces, force),
        Command::Featurize { traces } => commands::featurize(&cfg, &traces, force),
        Command::Train { features } => commands::train(&cfg, &features, force),
        Command::Eval { model, features } => commands::eval(&cfg, &model, &features, force),
        Command::Explain {
            model,
            features,
            instance,
            train_features,
        } => commands::explain(
            &cfg,
            &model,
            &features,
            instance,
            train_features.as_deref(),
            force,
        ),
        Command::Recommend {
            model,
            features,
            instance,
            train_features,
            rulebook,
        } => {
            let mut cfg = cfg;
            if rulebook.is_some() {
                cfg.explain.rulebook = rulebook;
            }
            commands::recommend(&cfg, &model, &features, instance, train_features.as_deref())
        }
        Command::Pipeline => commands::pipeline(&cfg, force),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_take_precedence_over_defaults() {
        let args = GlobalArgs {
            seed: Some(5),
            out: Some(PathBuf::from("elsewhere")),
            model_kind: Some(ModelKind::Gbt),
            task: Some(Task::Binary),
            ..Default::default()
        };
        let cfg = resolve_config(&args).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
        assert_eq!(cfg.model, ModelKind::Gbt);
        assert_eq!(cfg.task, Task::Binary);
        assert_eq!(cfg.window_len, RunConfig::default().window_len);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::DirtyOutput(PathBuf::from("d"))), 2);
        assert_eq!(exit_code(&Error::Schema("x".into())), 3);
        assert_eq!(exit_code(&Error::NotFound("x".into())), 3);
        assert_eq!(exit_code(&Error::Numeric("x".into()).in_stage("train")), 4);
        assert_eq!(exit_code(&Error::Feasibility("x".into())), 4);
    }

    #[test]
    fn task_names_parse() {
        assert_eq!(parse_task("binary"), Ok(Task::Binary));
        assert!(parse_task("four_class").is_err());
    }
}
