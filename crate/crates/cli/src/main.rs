use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphcl_dta::ablation::{run_ablation, AblationMode};
use graphcl_dta::config::{Overrides, RunConfig};
use graphcl_dta::data::{make_split, AffinityTransform};
use graphcl_dta::gradcheck::{gradcheck, GradcheckSettings};
use graphcl_dta::train::{load_configured, run_evaluation, run_training, EvalSet};
use graphcl_dta::Error;

/// Default hyperparameters, used by `gradcheck` when no config is given.
const DEFAULT_CONFIG: &str = "learning_rate = 0.0005
batch_size = 512
gcn_layers = 3
drug_dim = 128
target_dim = 128
alpha = 0.5
beta = 0.5
epsilon = 0.1
tau = 0.2
";

#[derive(Parser)]
#[command(name = "graphcl", version, about = "Graph contrastive drug-target affinity training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one cross-validation fold.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Continue from a `last.ckpt` written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on the test set or one side of a fold.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        set: Part,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Run the contrastive on/off pair or the uniformity weight sweep.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: AblationMode,
        /// Comma-separated seeds; defaults to five consecutive seeds from the config seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Finite-difference check of every parameter group on a tiny synthetic batch.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Write the test/fold assignment for a dataset.
    Split {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Test,
    Validation,
    Train,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// `pkd` maps raw Kd (nM) to -log10(Kd / 1e9) on load.
    #[arg(long)]
    transform: Option<AffinityTransform>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            tau: self.tau,
            epochs: self.epochs,
            seed: self.seed,
            out_dir: self.out.clone(),
            affinity_transform: self.transform,
        }
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&self.overrides.to_overrides())?;
        Ok(cfg)
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializes"));
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, text).map_err(io(path))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train { common, fold, resume } => {
            let cfg = common.load()?;
            let summary = run_training(&cfg, fold, resume.as_deref())?;
            print_json(&summary);
        }
        Command::Eval {
            common,
            checkpoint,
            set,
            fold,
        } => {
            let cfg = common.load()?;
            let (set, name) = match set {
                Part::Test => (EvalSet::Test, "test".to_string()),
                Part::Validation => (EvalSet::Validation(fold), format!("validation{fold}")),
                Part::Train => (EvalSet::Train(fold), format!("train{fold}")),
            };
            let report = run_evaluation(&cfg, &checkpoint, set)?;
            write(&cfg.out_dir.join(format!("eval_{name}.json")), &report.to_json())?;
            println!("{}", report.to_json());
        }
        Command::Ablate {
            common,
            mode,
            seeds,
            fold,
        } => {
            let cfg = common.load()?;
            let seeds = if seeds.is_empty() {
                (cfg.seed..cfg.seed + 5).collect()
            } else {
                seeds
            };
            let (table, files) = run_ablation(&cfg, mode, &seeds, fold)?;
            print!("{}", table.summary_tsv());
            for f in files {
                log::info!("wrote {}", f.display());
            }
        }
        Command::Gradcheck { config, overrides } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::from_toml(DEFAULT_CONFIG, Path::new("<defaults>"))?,
            };
            cfg.apply(&overrides.to_overrides())?;
            let report = gradcheck(&cfg, &GradcheckSettings::default())?;
            print!("{}", report.to_tsv());
            println!(
                "max relative error {:e} (tolerance {:e}) in {:.1}s",
                report.max_rel_error, report.tolerance, report.seconds
            );
            if !report.passed() {
                eprintln!("gradcheck failed; worst coordinate {}", report.worst.unwrap_or_default());
                return Ok(ExitCode::from(4));
            }
        }
        Command::Split { common } => {
            let cfg = common.load()?;
            let (dataset, rejects) = load_configured(&cfg, Some(&cfg.out_dir))?;
            let plan = make_split(dataset.samples.len(), cfg.seed)?;
            let path = cfg.out_dir.join("split.json");
            write(&path, &serde_json::to_string(&plan).expect("serializes"))?;
            print_json(&serde_json::json!({
                "dataset": dataset.name,
                "samples": dataset.samples.len(),
                "rejects": rejects.len(),
                "test": plan.test.len(),
                "train_pool": plan.pool().len(),
                "folds": plan.folds.iter().map(Vec::len).collect::<Vec<_>>(),
                "path": path,
            }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
