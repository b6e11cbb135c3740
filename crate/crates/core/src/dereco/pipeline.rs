use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::{
    collect_encoder_dataset, stage1_spec, train_encoder, BaselineSpec, DerecoError, EncoderDataset, EncoderModel,
    Method, PipelineConfig, Schedule, Stage2Report,
};
use crate::autodiff::Checkpoint;
use crate::mappo::{Agent, EncoderKind, RunOutcome, Trainer, UpdateMetrics, ACTOR_PREFIX, ENCODER_PREFIX};
use crate::rng::stream;
use crate::transportsim::{CatalogSelection, ShapeCatalog, VecEnv};

/// Optional side channels of a training stage.
#[derive(Default)]
pub struct StageHooks<'a> {
    /// Append per-update metrics to this JSONL file.
    pub metrics_log: Option<PathBuf>,
    /// Checked before every update; when set, the stage stops and reports
    /// itself as interrupted.
    pub stop: Option<&'a AtomicBool>,
    pub on_update: Option<&'a mut dyn FnMut(&UpdateMetrics)>,
}

/// Parameters and optimizer state to continue a stage from.
pub struct Resume {
    pub agent: Agent,
    pub optimizer: Checkpoint,
}

pub struct StageResult {
    pub agent: Agent,
    pub outcome: RunOutcome,
    pub interrupted: bool,
    /// Optimizer state at the end of the stage, for resuming.
    pub optimizer: Checkpoint,
    pub final_metrics: Option<UpdateMetrics>,
}

/// Catalog ids used for training.
pub fn training_subset(catalog: &ShapeCatalog, config: &PipelineConfig) -> Result<Vec<usize>, DerecoError> {
    if config.train_shapes.is_empty() {
        return Ok(catalog.select(CatalogSelection::Seen));
    }
    config
        .train_shapes
        .iter()
        .map(|name| match catalog.id_of(name) {
            Some(id) if catalog.get(id).is_some_and(|s| s.seen) => Ok(id),
            Some(_) => Err(DerecoError::Config(format!(
                "training shape `{name}` is not a seen shape"
            ))),
            None => Err(DerecoError::Config(format!("unknown training shape `{name}`"))),
        })
        .collect()
}

/// Seed for a named sub-task of a run.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    stream(seed, name).gen()
}

/// Run PPO on `agent` for `steps` environment steps. `guard` runs after
/// every update and may veto the new parameters.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    agent: Agent,
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    steps: usize,
    seed: u64,
    stage: &str,
    hooks: StageHooks,
    resume: Option<&Checkpoint>,
    mut guard: impl FnMut(&Agent) -> Result<(), DerecoError>,
) -> Result<StageResult, DerecoError> {
    let subset = training_subset(&catalog, config)?;
    let trainer_config = config.trainer_for(steps);
    let envs = VecEnv::new(
        &config.env,
        catalog,
        &subset,
        trainer_config.num_envs,
        derive_seed(seed, &format!("{stage}-env")),
    )?;
    let mut trainer = Trainer::new(
        agent,
        envs,
        trainer_config,
        derive_seed(seed, &format!("{stage}-trainer")),
    )?;
    if let Some(opt) = resume {
        trainer.restore_optimizer(opt)?;
    }
    if let Some(path) = &hooks.metrics_log {
        trainer.log_to(path)?;
    }
    let StageHooks {
        stop, mut on_update, ..
    } = hooks;
    let mut interrupted = false;
    let mut final_metrics = None;
    while !trainer.finished() {
        if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
            interrupted = true;
            break;
        }
        let m = trainer.iteration()?;
        guard(&trainer.agent)?;
        if let Some(f) = on_update.as_mut() {
            f(&m);
        }
        let early = matches!(
            (config.early_stop_success, m.success_rate_rolling),
            (Some(t), Some(r)) if r > t
        );
        final_metrics = Some(m);
        if early {
            break;
        }
    }
    let optimizer = trainer.optimizer_checkpoint()?;
    let outcome = RunOutcome {
        steps: trainer.steps(),
        updates: trainer.updates(),
        stopped_early: !trainer.finished(),
    };
    let mut agent = trainer.agent;
    // Checkpoints hold f32; round now so the in-memory agent and a reloaded
    // one act identically.
    agent.params.quantize_f32();
    Ok(StageResult {
        agent,
        outcome,
        interrupted,
        optimizer,
        final_metrics,
    })
}

fn initial_agent(spec: crate::mappo::AgentSpec, seed: u64, resume: Option<&Resume>) -> Agent {
    match resume {
        Some(r) => r.agent.clone(),
        None => Agent::new(spec, &mut stream(seed, "policy-init")),
    }
}

/// Stage 1: privileged actor and critic.
pub fn stage1_train(
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    seed: u64,
    hooks: StageHooks,
    resume: Option<&Resume>,
) -> Result<StageResult, DerecoError> {
    let agent = initial_agent(stage1_spec(config.hidden), derive_seed(seed, "stage1"), resume);
    let opt = resume.map(|r| &r.optimizer);
    train_stage(
        agent,
        config,
        catalog,
        config.stage1_steps,
        seed,
        "stage1",
        hooks,
        opt,
        |_| Ok(()),
    )
}

/// Stage 2: collect the dataset from the stage-1 policy and fit the encoder.
pub fn stage2_train(
    stage1: &Agent,
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    seed: u64,
) -> Result<(EncoderDataset, EncoderModel, Stage2Report), DerecoError> {
    let subset = training_subset(&catalog, config)?;
    let ds = collect_encoder_dataset(
        stage1,
        &config.env,
        catalog,
        &subset,
        config.dataset_episodes,
        derive_seed(seed, "stage2-dataset"),
        config.dataset_deterministic,
    )?;
    let (mut model, report) = train_encoder(&ds, &config.encoder, config.hidden, derive_seed(seed, "stage2-train"))?;
    model.params.quantize_f32();
    Ok((ds, model, report))
}

/// Stage-3 starting point: stage-1 trunk, head and critic; the encoder in
/// place of the privileged FC layer, frozen.
pub fn stage3_init(stage1: &Agent, encoder: &EncoderModel) -> Result<Agent, DerecoError> {
    let s1 = &stage1.spec;
    if s1.actor.encoder != EncoderKind::Privileged {
        return Err(DerecoError::Contract(
            "stage 3 must start from a privileged stage-1 agent".into(),
        ));
    }
    if encoder.obs_width() != s1.actor.obs_width || encoder.g_width() != s1.actor.hidden {
        return Err(DerecoError::Contract(format!(
            "encoder maps width {} to {}, stage-1 actor expects observation width {} and representation width {}",
            encoder.obs_width(),
            encoder.g_width(),
            s1.actor.obs_width,
            s1.actor.hidden
        )));
    }
    let mut spec = s1.clone();
    spec.actor.encoder = EncoderKind::FrozenRecurrent;
    spec.actor.priv_width = 0;
    let mut params = stage1.params.clone();
    params.remove_prefix("actor.enc.");
    params.merge(&encoder.params.subset(ENCODER_PREFIX));
    params.freeze_prefix(ENCODER_PREFIX);
    if encoder.encoder.hidden() != spec.actor.hidden {
        return Err(DerecoError::Contract(format!(
            "encoder LSTM width {} differs from actor width {}",
            encoder.encoder.hidden(),
            spec.actor.hidden
        )));
    }
    Ok(Agent { spec, params })
}

/// Stage 3: retrain actor and critic with the frozen encoder in the actor.
pub fn stage3_train(
    stage1: &Agent,
    encoder: &EncoderModel,
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    seed: u64,
    hooks: StageHooks,
    resume: Option<&Resume>,
) -> Result<StageResult, DerecoError> {
    let start = stage3_init(stage1, encoder)?;
    let frozen = start.params.content_hash(ENCODER_PREFIX);
    let agent = resume.map_or(start, |r| r.agent.clone());
    if agent.params.content_hash(ENCODER_PREFIX) != frozen {
        return Err(DerecoError::Invariant(
            "resumed stage-3 encoder differs from the stage-2 encoder".into(),
        ));
    }
    let opt = resume.map(|r| &r.optimizer);
    train_stage(
        agent,
        config,
        catalog,
        config.stage3_steps,
        seed,
        "stage3",
        hooks,
        opt,
        |a| {
            if a.params.content_hash(ENCODER_PREFIX) != frozen {
                return Err(DerecoError::Invariant(
                    "encoder parameters changed during stage 3".into(),
                ));
            }
            Ok(())
        },
    )
}

/// End-to-end training of a single-stage baseline.
pub fn build_baseline(
    spec: &BaselineSpec,
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    seed: u64,
    hooks: StageHooks,
    resume: Option<&Resume>,
) -> Result<StageResult, DerecoError> {
    if spec.schedule != Schedule::EndToEnd {
        return Err(DerecoError::Config(format!(
            "{} is trained in stages, not end to end",
            spec.method.display_name()
        )));
    }
    let agent = initial_agent(
        spec.agent_spec(config.hidden),
        derive_seed(seed, spec.method.id()),
        resume,
    );
    let opt = resume.map(|r| &r.optimizer);
    train_stage(
        agent,
        config,
        catalog,
        config.baseline_steps,
        seed,
        spec.method.id(),
        hooks,
        opt,
        |_| Ok(()),
    )
}

/// Everything a finished in-memory run produced.
pub struct MethodRun {
    pub method: Method,
    pub policy: Agent,
    pub stage1: Option<Agent>,
    pub encoder: Option<(EncoderModel, Stage2Report)>,
    pub steps: Vec<(String, RunOutcome)>,
}

/// Train a method's whole schedule in memory (no artifacts, no hooks).
pub fn run_method(
    method: Method,
    config: &PipelineConfig,
    catalog: Arc<ShapeCatalog>,
    seed: u64,
) -> Result<MethodRun, DerecoError> {
    config.validate()?;
    match method.spec().schedule {
        Schedule::EndToEnd => {
            let r = build_baseline(&method.spec(), config, catalog, seed, StageHooks::default(), None)?;
            Ok(MethodRun {
                method,
                policy: r.agent,
                stage1: None,
                encoder: None,
                steps: vec![(method.id().to_string(), r.outcome)],
            })
        }
        Schedule::ThreeStage => {
            let s1 = stage1_train(config, catalog.clone(), seed, StageHooks::default(), None)?;
            let (_, model, report) = stage2_train(&s1.agent, config, catalog.clone(), seed)?;
            let s3 = stage3_train(&s1.agent, &model, config, catalog, seed, StageHooks::default(), None)?;
            Ok(MethodRun {
                method,
                policy: s3.agent,
                stage1: Some(s1.agent),
                encoder: Some((model, report)),
                steps: vec![("stage1".into(), s1.outcome), ("stage3".into(), s3.outcome)],
            })
        }
    }
}

/// Deployed policy plus the metadata eval needs, as stored in a checkpoint.
pub fn policy_checkpoint(method: Method, agent: &Agent, seed: u64) -> Checkpoint {
    agent.to_checkpoint(serde_json::json!({"method": method, "seed": seed}))
}

/// Method recorded in a policy checkpoint.
pub fn checkpoint_method(ckpt: &Checkpoint) -> Option<Method> {
    serde_json::from_value(ckpt.metadata["extra"]["method"].clone()).ok()
}

/// Actor parameters outside the encoder.
pub fn actor_trunk_names(agent: &Agent) -> Vec<String> {
    agent
        .params
        .names()
        .filter(|n| n.starts_with(ACTOR_PREFIX) && !n.starts_with("actor.enc."))
        .cloned()
        .collect()
}
