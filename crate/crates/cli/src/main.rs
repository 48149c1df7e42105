use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mcel::Exec;
use mcel_cli::commands::{self, DataArgs};
use mcel_cli::config::{parse_list, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mcel", version, about = "Train classifiers with mixed cross-entropy losses")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataFlags {
    /// CSV file with a header row.
    #[arg(long, value_name = "PATH", group = "source")]
    data_csv: Option<PathBuf>,
    /// Label column of the CSV file.
    #[arg(long, value_name = "NAME")]
    label_col: Option<String>,
    /// IDX image and label files.
    #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"], group = "source")]
    data_idx: Option<Vec<PathBuf>>,
    /// Synthetic Gaussian blobs: k,per_class,dim,spread.
    #[arg(long, value_name = "SPEC", group = "source")]
    blobs: Option<String>,
}

impl DataFlags {
    fn to_args(&self) -> DataArgs {
        DataArgs {
            csv: self.data_csv.clone(),
            label_col: self.label_col.clone(),
            idx: self.data_idx.as_ref().map(|v| (v[0].clone(), v[1].clone())),
            blobs: self.blobs.clone(),
        }
    }
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides both the data seed and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    data: DataFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Fit LDA and write the class similarity matrix.
    Similarity {
        #[command(flatten)]
        common: Common,
        /// Number of discriminant components.
        #[arg(long)]
        components: Option<usize>,
        /// Ridge added to the within-class scatter.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Train one model.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the mixing weight over a grid of values and seeds.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid, e.g. 0,0.1,0.2.
        #[arg(long)]
        epsilons: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Compare cross-entropy and MCEL under pairwise label noise.
    NoiseExp {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise fractions.
        #[arg(long)]
        fractions: Option<String>,
        /// Comma-separated candidate mixing weights.
        #[arg(long)]
        epsilons: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Compare analytic gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Perturb analytic gradients (self-test of the checker).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

fn list<T: std::str::FromStr>(flag: &str, value: &Option<String>) -> Result<Option<Vec<T>>> {
    value
        .as_deref()
        .map(|v| parse_list(v).map_err(|msg| ConfigError::Invalid(format!("--{flag}: {msg}")).into()))
        .transpose()
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Similarity {
            common,
            components,
            ridge,
        } => {
            let cfg = load_config(&common)?;
            let rep = commands::cmd_similarity(&cfg, &common.data.to_args(), &common.out, components, ridge)?;
            println!("classes {}  components {}", rep.num_classes, rep.num_components);
            println!("asymmetry {:.3e}", rep.asymmetry);
            println!("sha256 {}", rep.sha256);
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let rep = commands::cmd_train(&cfg, &common.data.to_args(), &common.out, exec)?;
            println!("best epoch {}  val accuracy {:.4}", rep.best_epoch, rep.best_val_accuracy);
            if let Some(t) = &rep.test {
                println!("test top-1 {:.4}  top-{} {:.4}", t.top1, t.k_prime, t.topk);
            }
        }
        Command::Gridsearch {
            common,
            epsilons,
            seeds,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = list("epsilons", &epsilons)? {
                cfg.grid.epsilons = e;
            }
            if let Some(s) = list("seeds", &seeds)? {
                cfg.grid.seeds = s;
            }
            cfg.validate()?;
            let rep = commands::cmd_gridsearch(&cfg, &common.data.to_args(), &common.out, exec)?;
            for p in &rep.points {
                println!(
                    "epsilon {:<5} val {:.4} ± {:.4}",
                    p.epsilon, p.mean_val_accuracy, p.std_val_accuracy
                );
            }
            println!("selected epsilon {}", rep.selected_epsilon);
        }
        Command::NoiseExp {
            common,
            fractions,
            epsilons,
            seeds,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(f) = list("fractions", &fractions)? {
                cfg.noise.fractions = f;
            }
            if let Some(e) = list("epsilons", &epsilons)? {
                cfg.noise.epsilons = e;
            }
            if let Some(s) = list("seeds", &seeds)? {
                cfg.noise.seeds = s;
            }
            cfg.validate()?;
            let rep = commands::cmd_noise(&cfg, &common.data.to_args(), &common.out, exec)?;
            for s in &rep.summary {
                println!(
                    "fraction {:<4} median ce {:.4}  median mcel {:.4}  mcel wins {}/{}",
                    s.fraction, s.median_ce, s.median_mcel, s.mcel_wins, s.seeds
                );
            }
        }
        Command::Gradcheck {
            k,
            trials,
            seed,
            out,
            corrupt,
        } => {
            commands::cmd_gradcheck(k, trials, seed, corrupt, out.as_deref(), exec)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
