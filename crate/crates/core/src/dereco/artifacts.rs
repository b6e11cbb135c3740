//! On-disk runs: every stage writes its checkpoint into the run directory
//! and a run manifest records seeds, the config hash and content hashes of
//! every artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    build_baseline, collect_encoder_dataset, derive_seed, policy_checkpoint, read_dataset, stage1_train, stage3_train,
    train_encoder, training_subset, write_dataset, DerecoError, EncoderModel, Method, PipelineConfig, Resume, Schedule,
    StageHooks, StageResult,
};
use crate::autodiff::{load_checkpoint, save_checkpoint};
use crate::mappo::{Agent, UpdateMetrics};
use crate::transportsim::ShapeCatalog;

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const STAGE1_CKPT: &str = "stage1.ckpt";
pub const ENCODER_CKPT: &str = "encoder.ckpt";
pub const STAGE3_CKPT: &str = "stage3.ckpt";
pub const POLICY_CKPT: &str = "policy.ckpt";
pub const METRICS: &str = "metrics.jsonl";
pub const STAGE1_METRICS: &str = "metrics_stage1.jsonl";

/// SHA-256 of a value's canonical JSON (object keys sorted).
pub fn json_hash<T: Serialize>(value: &T) -> Result<String, DerecoError> {
    let v = serde_json::to_value(value)?;
    Ok(hex(&Sha256::digest(serde_json::to_string(&v)?.as_bytes())))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the names and contents of the files at `path` (a file or
/// a directory, walked in sorted order).
pub fn content_hash(path: &Path) -> Result<String, DerecoError> {
    let mut h = Sha256::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(&p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            entries.sort();
            stack.extend(entries.into_iter().rev());
        } else {
            let rel = p.strip_prefix(path).unwrap_or(&p);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(&p)?);
        }
    }
    Ok(hex(&h.finalize()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub steps: usize,
    pub stopped_early: bool,
    pub artifact: String,
    pub artifact_hash: String,
    /// Content hashes of the artifacts this stage consumed.
    pub inputs: Vec<(String, String)>,
    #[serde(default)]
    pub report: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
    /// Checkpoint of the deployed policy, relative to the run directory.
    pub policy: Option<String>,
    pub complete: bool,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, DerecoError> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(RUN_MANIFEST))?)?)
    }

    fn save(&self, dir: &Path) -> Result<(), DerecoError> {
        fs::write(dir.join(RUN_MANIFEST), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|s| s.stage != rec.stage);
        self.stages.push(rec);
    }
}

/// Artifacts a complete run directory must contain.
pub fn required_artifacts(method: Method) -> Vec<&'static str> {
    match method.spec().schedule {
        Schedule::ThreeStage => vec![RUN_MANIFEST, STAGE1_CKPT, ENCODER_CKPT, STAGE3_CKPT],
        Schedule::EndToEnd => vec![RUN_MANIFEST, POLICY_CKPT],
    }
}

/// Names of required artifacts missing from `dir`.
pub fn missing_artifacts(dir: &Path) -> Vec<String> {
    let Ok(manifest) = RunManifest::load(dir) else {
        return vec![RUN_MANIFEST.to_string()];
    };
    let mut missing: Vec<String> = required_artifacts(manifest.method)
        .into_iter()
        .filter(|a| !dir.join(a).exists())
        .map(String::from)
        .collect();
    if !manifest.complete && missing.is_empty() {
        missing.push(format!("{RUN_MANIFEST} (run not marked complete)"));
    }
    missing
}

/// Load the deployed policy of a complete run directory.
pub fn load_policy(dir: &Path) -> Result<(RunManifest, Agent), DerecoError> {
    let missing = missing_artifacts(dir);
    if !missing.is_empty() {
        return Err(DerecoError::Incomplete {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let manifest = RunManifest::load(dir)?;
    let rel = manifest.policy.clone().ok_or_else(|| DerecoError::Incomplete {
        dir: dir.to_path_buf(),
        missing: vec!["policy entry in run manifest".into()],
    })?;
    let agent = Agent::from_checkpoint(&load_checkpoint(&dir.join(rel))?)?;
    Ok((manifest, agent))
}

pub struct RunOptions<'a> {
    /// Reuse finished stages and continue interrupted ones.
    pub resume: bool,
    pub stop: Option<&'a AtomicBool>,
    pub on_update: Option<&'a mut dyn FnMut(&str, &UpdateMetrics)>,
}

/// How a call to [`run_to_dir`] ended.
#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Complete(RunManifest),
    /// Stopped by the stop flag after saving a resumable checkpoint.
    Interrupted {
        stage: String,
        steps: usize,
    },
}

fn partial_paths(dir: &Path, stage: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{stage}.partial.ckpt")),
        dir.join(format!("{stage}.optim.ckpt")),
    )
}

fn load_resume(dir: &Path, stage: &str) -> Result<Option<Resume>, DerecoError> {
    let (p, o) = partial_paths(dir, stage);
    if !(p.exists() && o.exists()) {
        return Ok(None);
    }
    Ok(Some(Resume {
        agent: Agent::from_checkpoint(&load_checkpoint(&p)?)?,
        optimizer: load_checkpoint(&o)?,
    }))
}

fn save_partial(dir: &Path, stage: &str, method: Method, seed: u64, r: &StageResult) -> Result<(), DerecoError> {
    let (p, o) = partial_paths(dir, stage);
    save_checkpoint(&p, &policy_checkpoint(method, &r.agent, seed))?;
    save_checkpoint(&o, &r.optimizer)?;
    Ok(())
}

fn clear_partial(dir: &Path, stage: &str) -> Result<(), DerecoError> {
    for p in <[PathBuf; 2]>::from(partial_paths(dir, stage)) {
        if p.exists() {
            fs::remove_dir_all(p)?;
        }
    }
    Ok(())
}

fn hooks<'a>(
    dir: &Path,
    log: &str,
    stop: Option<&'a AtomicBool>,
    forward: &'a mut dyn FnMut(&UpdateMetrics),
) -> StageHooks<'a> {
    StageHooks {
        metrics_log: Some(dir.join(log)),
        stop,
        on_update: Some(forward),
    }
}

/// Train `method` into `dir`: stage checkpoints, metrics JSONL, the config
/// and a run manifest.
pub fn run_to_dir(
    method: Method,
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    seed: u64,
    dir: &Path,
    mut opts: RunOptions,
) -> Result<RunStatus, DerecoError> {
    config.validate()?;
    training_subset(&catalog, config)?;
    fs::create_dir_all(dir)?;
    let config_hash = json_hash(config)?;
    let mut manifest = match RunManifest::load(dir) {
        Ok(m) if opts.resume => {
            if m.method != method || m.seed != seed || m.config_hash != config_hash {
                return Err(DerecoError::Config(format!(
                    "{} holds a run of {} with seed {} and config {}; refusing to resume with {method}, seed {seed}, config {config_hash}",
                    dir.display(),
                    m.method,
                    m.seed,
                    m.config_hash
                )));
            }
            m
        }
        _ => {
            for f in [METRICS, STAGE1_METRICS] {
                if dir.join(f).exists() {
                    fs::remove_file(dir.join(f))?;
                }
            }
            RunManifest {
                method,
                seed,
                config_hash: config_hash.clone(),
                stages: Vec::new(),
                policy: None,
                complete: false,
            }
        }
    };
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)?)?;
    manifest.save(dir)?;

    let stop = opts.stop;
    let mut notify = opts.on_update.take();

    match method.spec().schedule {
        Schedule::EndToEnd => {
            let stage = method.id();
            if !(manifest.complete && dir.join(POLICY_CKPT).exists()) {
                let resume = if opts.resume { load_resume(dir, stage)? } else { None };
                let mut forward = |m: &UpdateMetrics| {
                    if let Some(f) = notify.as_deref_mut() {
                        f(stage, m)
                    }
                };
                let h = hooks(dir, METRICS, stop, &mut forward);
                let r = build_baseline(&method.spec(), config, catalog, seed, h, resume.as_ref())?;
                if r.interrupted {
                    save_partial(dir, stage, method, seed, &r)?;
                    return Ok(RunStatus::Interrupted {
                        stage: stage.into(),
                        steps: r.outcome.steps,
                    });
                }
                let path = dir.join(POLICY_CKPT);
                save_checkpoint(&path, &policy_checkpoint(method, &r.agent, seed))?;
                clear_partial(dir, stage)?;
                manifest.record(StageRecord {
                    stage: stage.into(),
                    steps: r.outcome.steps,
                    stopped_early: r.outcome.stopped_early,
                    artifact: POLICY_CKPT.into(),
                    artifact_hash: content_hash(&path)?,
                    inputs: Vec::new(),
                    report: serde_json::to_value(&r.final_metrics)?,
                });
                manifest.policy = Some(POLICY_CKPT.into());
            }
        }
        Schedule::ThreeStage => {
            let s1_path = dir.join(STAGE1_CKPT);
            let stage1 = if opts.resume && manifest.stage("stage1").is_some() && s1_path.exists() {
                Agent::from_checkpoint(&load_checkpoint(&s1_path)?)?
            } else {
                let resume = if opts.resume { load_resume(dir, "stage1")? } else { None };
                let mut forward = |m: &UpdateMetrics| {
                    if let Some(f) = notify.as_deref_mut() {
                        f("stage1", m)
                    }
                };
                let h = hooks(dir, STAGE1_METRICS, stop, &mut forward);
                let r = stage1_train(config, catalog.clone(), seed, h, resume.as_ref())?;
                if r.interrupted {
                    save_partial(dir, "stage1", method, seed, &r)?;
                    return Ok(RunStatus::Interrupted {
                        stage: "stage1".into(),
                        steps: r.outcome.steps,
                    });
                }
                save_checkpoint(
                    &s1_path,
                    &r.agent.to_checkpoint(serde_json::json!({"stage": 1, "seed": seed})),
                )?;
                clear_partial(dir, "stage1")?;
                manifest.record(StageRecord {
                    stage: "stage1".into(),
                    steps: r.outcome.steps,
                    stopped_early: r.outcome.stopped_early,
                    artifact: STAGE1_CKPT.into(),
                    artifact_hash: content_hash(&s1_path)?,
                    inputs: Vec::new(),
                    report: serde_json::to_value(&r.final_metrics)?,
                });
                manifest.save(dir)?;
                r.agent
            };

            let enc_path = dir.join(ENCODER_CKPT);
            let encoder = if opts.resume && manifest.stage("stage2").is_some() && enc_path.exists() {
                EncoderModel::from_checkpoint(&load_checkpoint(&enc_path)?)?
            } else {
                let subset = training_subset(&catalog, config)?;
                let ds = if opts.resume && manifest.stage("stage2-dataset").is_some() {
                    read_dataset(dir)?
                } else {
                    let ds = collect_encoder_dataset(
                        &stage1,
                        &config.env,
                        catalog.clone(),
                        &subset,
                        config.dataset_episodes,
                        derive_seed(seed, "stage2-dataset"),
                        config.dataset_deterministic,
                    )?;
                    write_dataset(dir, &ds)?;
                    manifest.record(StageRecord {
                        stage: "stage2-dataset".into(),
                        steps: ds.pairs(),
                        stopped_early: false,
                        artifact: super::DATASET_BLOB.into(),
                        artifact_hash: content_hash(&dir.join(super::DATASET_BLOB))?,
                        inputs: vec![(STAGE1_CKPT.into(), content_hash(&s1_path)?)],
                        report: serde_json::json!({"episodes": ds.episodes().len(), "pairs_per_shape": ds.shape_counts()}),
                    });
                    manifest.save(dir)?;
                    ds
                };
                let (mut model, report) =
                    train_encoder(&ds, &config.encoder, config.hidden, derive_seed(seed, "stage2-train"))?;
                model.params.quantize_f32();
                save_checkpoint(&enc_path, &model.to_checkpoint(Some(&report)))?;
                manifest.record(StageRecord {
                    stage: "stage2".into(),
                    steps: report.history.len(),
                    stopped_early: report.history.len() < config.encoder.epochs,
                    artifact: ENCODER_CKPT.into(),
                    artifact_hash: content_hash(&enc_path)?,
                    inputs: vec![(
                        super::DATASET_BLOB.into(),
                        content_hash(&dir.join(super::DATASET_BLOB))?,
                    )],
                    report: serde_json::to_value(&report)?,
                });
                manifest.save(dir)?;
                model
            };

            let s3_path = dir.join(STAGE3_CKPT);
            if !(opts.resume && manifest.stage("stage3").is_some() && s3_path.exists()) {
                let resume = if opts.resume { load_resume(dir, "stage3")? } else { None };
                let mut forward = |m: &UpdateMetrics| {
                    if let Some(f) = notify.as_deref_mut() {
                        f("stage3", m)
                    }
                };
                let h = hooks(dir, METRICS, stop, &mut forward);
                let r = stage3_train(&stage1, &encoder, config, catalog, seed, h, resume.as_ref())?;
                if r.interrupted {
                    save_partial(dir, "stage3", method, seed, &r)?;
                    return Ok(RunStatus::Interrupted {
                        stage: "stage3".into(),
                        steps: r.outcome.steps,
                    });
                }
                save_checkpoint(&s3_path, &policy_checkpoint(method, &r.agent, seed))?;
                clear_partial(dir, "stage3")?;
                manifest.record(StageRecord {
                    stage: "stage3".into(),
                    steps: r.outcome.steps,
                    stopped_early: r.outcome.stopped_early,
                    artifact: STAGE3_CKPT.into(),
                    artifact_hash: content_hash(&s3_path)?,
                    inputs: vec![
                        (STAGE1_CKPT.into(), content_hash(&s1_path)?),
                        (ENCODER_CKPT.into(), content_hash(&enc_path)?),
                    ],
                    report: serde_json::to_value(&r.final_metrics)?,
                });
            }
            manifest.policy = Some(STAGE3_CKPT.into());
        }
    }
    manifest.complete = true;
    manifest.save(dir)?;
    Ok(RunStatus::Complete(manifest))
}
