mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigLayers;
use tintegrate_core::integrators::Scheme;
use tintegrate_core::pde::PdeTag;
use tintegrate_core::training::Regime;
use tintegrate_core::Error;

#[derive(Parser)]
#[command(name = "tintegrate", version, about = "Generate PDE data, train and evaluate TI-DeepONets and baselines")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "TINTEGRATE_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Dotted-key override, e.g. `train.ti_rk4.epochs=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[arg(long)]
    seed: Option<u64>,

    /// Published widths, epochs and sample counts.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reference PDE for random initial conditions.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pde: Option<PdeTag>,
        #[arg(long)]
        samples: Option<usize>,
        /// Leading samples used for training (four fifths by default).
        #[arg(long)]
        train_samples: Option<usize>,
        /// Dataset directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train one regime, or all of them.
    Train {
        #[command(flatten)]
        common: Common,
        /// fr, ar, ti_rk4, ti_learnable or all.
        #[arg(long)]
        regime: String,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<u64>,
        /// Run directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate every trained regime on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Run directory holding the checkpoints.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Inference scheme for TI-DON (ab2am3, rk4, midpoint, euler).
        #[arg(long)]
        integrator: Option<Scheme>,
        #[arg(long)]
        dt_eval: Option<f64>,
        /// Comma-separated steps for the timestep refinement study.
        #[arg(long, value_delimiter = ',')]
        dt_list: Vec<f64>,
        /// Independent retrain-and-evaluate trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Render a markdown summary and check the expected orderings.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn layers(common: Common) -> ConfigLayers {
    let mut l = ConfigLayers {
        file: common.config,
        overrides: common.overrides,
        flags: Vec::new(),
    };
    if let Some(s) = common.seed {
        l.flag("seed", s);
    }
    if common.paper_scale {
        l.flag("paper_scale", true);
    }
    l
}

fn path_str(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Exit status for a failed command.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Blowup { .. } | Error::NonFinite(_) => 3,
        Error::Sample { source, .. } => exit_code(source),
        Error::Divergence(_) => 4,
        Error::Missing(_) | Error::Checkpoint(_) => 5,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 5,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Generate {
            common,
            pde,
            samples,
            train_samples,
            output,
        } => {
            let mut l = layers(common);
            if let Some(p) = pde {
                l.flag("pde", p.name());
            }
            if let Some(n) = samples {
                l.flag("dataset.n_samples", n);
                if train_samples.is_none() {
                    l.flag("dataset.n_train", n * 4 / 5);
                }
            }
            if let Some(n) = train_samples {
                l.flag("dataset.n_train", n);
            }
            if let Some(o) = output {
                l.flag("dataset_dir", path_str(&o));
            }
            commands::generate(&l)?;
        }
        Command::Train {
            common,
            regime,
            dataset,
            epochs,
            output,
        } => {
            let regimes: Vec<Regime> = if regime == "all" {
                Regime::ALL.to_vec()
            } else {
                vec![regime.parse()?]
            };
            let mut l = layers(common);
            l.flag("regimes", serde_json::to_value(&regimes)?);
            if let Some(e) = epochs {
                for r in &regimes {
                    l.flag(&format!("train.{}.epochs", r.name()), e);
                }
            }
            if let Some(d) = dataset {
                l.flag("dataset_dir", path_str(&d));
            }
            if let Some(o) = output {
                l.flag("run_dir", path_str(&o));
            }
            commands::train_cmd(&l)?;
        }
        Command::Eval {
            common,
            dataset,
            run,
            integrator,
            dt_eval,
            dt_list,
            trials,
        } => {
            let mut l = layers(common);
            if let Some(d) = dataset {
                l.flag("dataset_dir", path_str(&d));
            }
            if let Some(r) = run {
                l.flag("run_dir", path_str(&r));
            }
            if let Some(s) = integrator {
                l.flag("eval.integrator", s.name());
            }
            if let Some(dt) = dt_eval {
                l.flag("eval.dt_eval", dt);
            }
            if !dt_list.is_empty() {
                l.flag("eval.dt_list", dt_list);
            }
            if let Some(n) = trials {
                l.flag("eval.trials", n);
            }
            commands::eval_cmd(&l)?;
        }
        Command::Report { run } => return report::report(&run),
    }
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("acceptance checks failed");
            ExitCode::from(6)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
