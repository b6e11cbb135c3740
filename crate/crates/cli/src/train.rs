use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use dereco::dereco::{run_to_dir, Method, RunOptions, RunStatus, RUN_MANIFEST};
use dereco::mappo::UpdateMetrics;

use crate::config::{output_root, RunConfig, StoredRunConfig, CATALOG_FILE, RUN_CONFIG};
use crate::error::{CliError, Result};

pub struct TrainArgs {
    pub method: Method,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub resume: bool,
    pub force: bool,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

pub fn run_dir(root: &Path, method: Method, seed: u64) -> PathBuf {
    root.join(method.id()).join(format!("seed-{seed}"))
}

fn prepare_dir(dir: &Path, stored: &StoredRunConfig, resume: bool, force: bool) -> Result<()> {
    let exists = dir.join(RUN_MANIFEST).exists();
    if exists && !resume && !force {
        return Err(CliError::Usage(format!(
            "{} already holds a run; pass --resume to continue it or --force to start over",
            dir.display()
        )));
    }
    if exists && resume {
        let prev: StoredRunConfig = serde_json::from_str(&fs::read_to_string(dir.join(RUN_CONFIG))?)?;
        if prev.hash != stored.hash {
            return Err(CliError::Config(format!(
                "{} was trained with config {}, not {}; refusing to resume",
                dir.display(),
                prev.hash,
                stored.hash
            )));
        }
    }
    if exists && force {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Train one method for every seed. Returns the run directories.
pub fn cmd_train(args: TrainArgs, stop: &AtomicBool) -> Result<Vec<PathBuf>> {
    let mut config = args.config;
    config.out_dir = output_root(args.out.as_deref(), &config.out_dir);
    let catalog = config.catalog()?;
    let hash = config.content_hash();
    let mut dirs = Vec::new();
    for &seed in &args.seeds {
        let dir = run_dir(&config.out_dir, args.method, seed);
        let stored = StoredRunConfig {
            hash: hash.clone(),
            method: args.method.id().into(),
            seed,
            config: config.clone(),
        };
        prepare_dir(&dir, &stored, args.resume, args.force)?;
        fs::write(dir.join(RUN_CONFIG), serde_json::to_string_pretty(&stored)?)?;
        fs::write(dir.join(CATALOG_FILE), serde_json::to_string_pretty(&*catalog)?)?;

        let label = format!("{} seed {seed}", args.method.id());
        let mut progress = |stage: &str, m: &UpdateMetrics| {
            if !args.quiet {
                let success = m.success_rate_rolling.map_or("-".into(), |s| format!("{s:.2}"));
                eprintln!(
                    "[{label}] {stage} step {:>7}  track {:.4}  actor {:+.4}  critic {:.4}  success {success}",
                    m.step, m.track_reward, m.actor_loss, m.critic_loss
                );
            }
        };
        let opts = RunOptions {
            resume: args.resume,
            stop: Some(stop),
            on_update: Some(&mut progress),
        };
        match run_to_dir(args.method, &config.pipeline, catalog.clone(), seed, &dir, opts)? {
            RunStatus::Complete(_) => {
                println!("{}", dir.display());
                dirs.push(dir);
            }
            RunStatus::Interrupted { stage, steps } => {
                return Err(CliError::Runtime(format!(
                    "interrupted during {stage} after {steps} steps; checkpoint saved in {}, rerun with --resume to continue",
                    dir.display()
                )));
            }
        }
    }
    Ok(dirs)
}
