//! `dereco`: train methods, evaluate them, and turn the results into
//! tables and learning curves.
//!
//! Exit codes: 0 ok, 1 usage, 2 config, 3 runtime.

mod config;
mod encoder;
mod error;
mod evaluate;
mod plotdata;
mod replay;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use dereco::dereco::Method;
use dereco::eval::{EvalConfig, OneHotMode};
use dereco::transportsim::CatalogSelection;

use config::{output_root, parse_seeds, Preset, RunConfig};
use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "dereco",
    version,
    about = "Two-robot cooperative transport with decoupled representation learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the run configuration comes from.
#[derive(Args)]
struct ConfigArgs {
    /// JSON config file, layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// Override one config value, e.g. `--set pipeline.trainer.num_envs=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), self.preset, &self.sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a method into <out>/<method>/seed-<seed>.
    Train {
        /// dereco, mappo-wo-pi, mappo-wo-pi-lstm, mappo-wo-ae, mappo-wo-ae-lstm or mappo-w-pi.
        #[arg(value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Seed list: `0..5`, `0,3,4` or a single seed.
        #[arg(long, value_parser = seed_list)]
        seeds: Option<SeedList>,
        /// Continue an interrupted or finished run.
        #[arg(long, conflicts_with = "force")]
        resume: bool,
        /// Delete an existing run directory first.
        #[arg(long)]
        force: bool,
        /// Output root (default: $DERECO_OUT, then the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Evaluate complete run directories on seen and/or unseen objects.
    Eval {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "both", value_parser = parse_selection)]
        catalog: CatalogSelection,
        /// Shape catalog to evaluate on instead of the one stored with the runs.
        #[arg(long)]
        catalog_file: Option<PathBuf>,
        /// Trials per object, policy and evaluation seed.
        #[arg(long, default_value_t = 200, conflicts_with = "full")]
        trials: usize,
        /// 1,000 trials per object.
        #[arg(long)]
        full: bool,
        /// Evaluation seeds; must differ from the training seeds.
        #[arg(long, default_value = "1000", value_parser = seed_list)]
        seeds: SeedList,
        /// Sample actions instead of taking the mean.
        #[arg(long)]
        stochastic: bool,
        /// When the random one-hot for unseen objects is redrawn.
        #[arg(long, default_value = "per-trial", value_parser = parse_onehot)]
        onehot: OneHotMode,
        /// Also write this many traced episodes per run and object.
        #[arg(long, default_value_t = 0)]
        traces: usize,
        /// Report directory (default: <output root>/eval).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learning-curve CSVs (tracking reward, mean and std across seeds).
    Plotdata {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Trailing smoothing window in updates; 1 disables smoothing.
        #[arg(long, default_value_t = 10)]
        window: usize,
        /// Plot stage 1 of three-stage runs instead of stage 3.
        #[arg(long)]
        stage1: bool,
        /// Output directory (default: <output root>/plots).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a step-by-step digest of an episode trace and its failure class.
    Replay {
        trace: PathBuf,
        /// Print every n-th step only.
        #[arg(long, default_value_t = 1)]
        every: usize,
    },
    /// Collect the stage-2 dataset from a stage-1 checkpoint or run directory.
    EncoderDataset {
        stage1: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the adaptive encoder on a dataset directory.
    EncoderTrain {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default: the dataset directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn seed_list(s: &str) -> std::result::Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: dereco::dereco::DerecoError| e.to_string())
}

fn parse_selection(s: &str) -> std::result::Result<CatalogSelection, String> {
    s.parse()
}

fn parse_onehot(s: &str) -> std::result::Result<OneHotMode, String> {
    match s {
        "per-trial" => Ok(OneHotMode::PerTrial),
        "per-policy" => Ok(OneHotMode::PerPolicy),
        _ => Err(format!("unknown one-hot mode `{s}` (expected per-trial or per-policy)")),
    }
}

fn default_root() -> PathBuf {
    output_root(None, &RunConfig::default().out_dir)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            method,
            config,
            seed,
            seeds,
            resume,
            force,
            out,
            quiet,
        } => {
            let config = config.load()?;
            let seeds = seed
                .map(|s| vec![s])
                .or(seeds.map(|s| s.0))
                .unwrap_or_else(|| config.seeds.clone());
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            ctrlc::set_handler(move || {
                eprintln!("interrupt received; saving a checkpoint after the current update");
                flag.store(true, Ordering::SeqCst);
            })
            .map_err(|e| CliError::Runtime(format!("installing the interrupt handler: {e}")))?;
            let args = train::TrainArgs {
                method,
                config,
                seeds,
                resume,
                force,
                out,
                quiet,
            };
            train::cmd_train(args, &stop)?;
        }
        Command::Eval {
            runs,
            catalog,
            catalog_file,
            trials,
            full,
            seeds,
            stochastic,
            onehot,
            traces,
            out,
        } => {
            let out = out.unwrap_or_else(|| default_root().join("eval"));
            let config = EvalConfig {
                selection: catalog,
                trials: if full { 1000 } else { trials },
                seeds: seeds.0,
                deterministic: !stochastic,
                onehot,
                training_seeds: Vec::new(),
            };
            let args = evaluate::EvalArgs {
                runs,
                config,
                catalog_file,
                out: out.clone(),
                traces,
            };
            let (_, comparison) = evaluate::cmd_eval(args)?;
            print!("{}", comparison.table_csv()?);
            for c in &comparison.checks {
                let verdict = match c.holds {
                    Some(true) => "holds",
                    Some(false) => "does not hold",
                    None => "n/a",
                };
                println!("{verdict:>13}  {}", c.description);
            }
            println!("reports written to {}", out.display());
        }
        Command::Plotdata {
            runs,
            window,
            stage1,
            out,
        } => {
            let out = out.unwrap_or_else(|| default_root().join("plots"));
            for f in plotdata::cmd_plotdata(&runs, window, stage1, &out)? {
                println!("{}", f.display());
            }
        }
        Command::Replay { trace, every } => {
            replay::cmd_replay(&trace, every, &mut std::io::stdout().lock())?;
        }
        Command::EncoderDataset {
            stage1,
            config,
            seed,
            out,
        } => {
            let ds = encoder::cmd_encoder_dataset(&stage1, &config.load()?, seed, &out)?;
            println!(
                "{} sequences ({} pairs) written to {}",
                ds.sequences.len(),
                ds.pairs(),
                out.display()
            );
        }
        Command::EncoderTrain {
            dataset,
            config,
            seed,
            out,
        } => {
            let out = out.unwrap_or_else(|| dataset.clone());
            let report = encoder::cmd_encoder_train(&dataset, &config.load()?, seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
