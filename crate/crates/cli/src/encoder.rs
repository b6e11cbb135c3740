use std::fs;
use std::path::{Path, PathBuf};

use dereco::autodiff::{load_checkpoint, save_checkpoint};
use dereco::dereco::{
    collect_encoder_dataset, derive_seed, read_dataset, train_encoder, training_subset, write_dataset, EncoderDataset,
    Stage2Report, ENCODER_CKPT, STAGE1_CKPT,
};
use dereco::mappo::Agent;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const STAGE2_REPORT: &str = "stage2_report.json";

/// Stage-1 checkpoint path from either a checkpoint or a run directory.
fn stage1_path(p: &Path) -> PathBuf {
    if p.join(STAGE1_CKPT).exists() {
        p.join(STAGE1_CKPT)
    } else {
        p.to_path_buf()
    }
}

/// Roll out a stage-1 policy and write the encoder dataset into `out`.
pub fn cmd_encoder_dataset(stage1: &Path, config: &RunConfig, seed: u64, out: &Path) -> Result<EncoderDataset> {
    let path = stage1_path(stage1);
    let ckpt = load_checkpoint(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let agent = Agent::from_checkpoint(&ckpt)?;
    let catalog = config.catalog()?;
    let subset = training_subset(&catalog, &config.pipeline)?;
    let p = &config.pipeline;
    let ds = collect_encoder_dataset(
        &agent,
        &p.env,
        catalog,
        &subset,
        p.dataset_episodes,
        derive_seed(seed, "stage2-dataset"),
        p.dataset_deterministic,
    )?;
    fs::create_dir_all(out)?;
    write_dataset(out, &ds)?;
    Ok(ds)
}

/// Train the adaptive encoder on a dataset directory; writes the encoder
/// checkpoint and training report into `out`.
pub fn cmd_encoder_train(dataset: &Path, config: &RunConfig, seed: u64, out: &Path) -> Result<Stage2Report> {
    let ds = read_dataset(dataset)?;
    let (mut model, report) = train_encoder(
        &ds,
        &config.pipeline.encoder,
        config.pipeline.hidden,
        derive_seed(seed, "stage2-train"),
    )?;
    model.params.quantize_f32();
    fs::create_dir_all(out)?;
    save_checkpoint(&out.join(ENCODER_CKPT), &model.to_checkpoint(Some(&report)))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out.join(STAGE2_REPORT), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
