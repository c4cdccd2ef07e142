use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ampmix::data::DomainFilter;
use ampmix::error::Error;
use ampmix_cli::RunConfig;

/// Frequency-domain style augmentation, contrastive vision-text training,
/// and a synthetic domain-shift benchmark.
#[derive(Parser)]
#[command(name = "ampmix", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            config.override_seed(seed);
        }
        if let Some(out) = &self.out {
            config.paths.out_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Amplitude-mix an image toward a style image, keeping its phase.
    Augment {
        /// Source image (PNG).
        #[arg(long)]
        input: PathBuf,
        /// Style image (PNG) supplying the amplitude spectrum to mix in.
        #[arg(long)]
        style: PathBuf,
        /// Upper bound of the uniform mixing-ratio distribution.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output PNG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the configured dataset and write checkpoint + loss log.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Augment batch items across threads (excluded from the
        /// determinism guarantees).
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate a checkpoint on a manifest and write predictions + metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Clip filter: all, source, or target.
        #[arg(long, default_value = "target")]
        domain: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Score a predictions CSV (item_id,true_label,predicted_label).
    Score {
        #[arg(long)]
        predictions: PathBuf,
        /// Optionally write metrics.txt / metrics.kv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the four loss configurations over several seeds.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate the synthetic domain-shift corpus.
    Gensynth {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        clips_per_class: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Test hook: corrupt one gradient entry; the check must fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Augment {
            input,
            style,
            alpha,
            seed,
            out,
        } => ampmix_cli::cmd_augment(&input, &style, alpha, seed, &out).map(|_| ()),
        Command::Train {
            config,
            epochs,
            parallel,
        } => {
            let mut config = config.load()?;
            if let Some(epochs) = epochs {
                config.train.epochs = epochs;
            }
            if parallel {
                config.train.parallel = true;
            }
            ampmix_cli::cmd_train(&config).map(|_| ())
        }
        Command::Eval {
            checkpoint,
            manifest,
            domain,
            out,
        } => {
            let filter: DomainFilter = domain.parse()?;
            ampmix_cli::cmd_eval(&checkpoint, &manifest, filter, &out).map(|_| ())
        }
        Command::Score { predictions, out } => {
            ampmix_cli::cmd_score(&predictions, out.as_deref()).map(|_| ())
        }
        Command::Ablate { config } => ampmix_cli::cmd_ablate(&config.load()?).map(|_| ()),
        Command::Gensynth {
            out,
            config,
            seed,
            classes,
            clips_per_class,
            frames,
            size,
        } => {
            let mut spec = RunConfig::load(config.as_deref())?.synth;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            if let Some(classes) = classes {
                spec.num_classes = classes;
            }
            if let Some(clips) = clips_per_class {
                spec.clips_per_class = clips;
            }
            if let Some(frames) = frames {
                spec.frames_per_clip = frames;
            }
            if let Some(size) = size {
                spec.image_size = size;
            }
            ampmix_cli::cmd_gensynth(&spec, &out).map(|_| ())
        }
        Command::Gradcheck {
            seed,
            instances,
            corrupt,
        } => ampmix_cli::cmd_gradcheck(seed, instances, corrupt),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
