//! Success-rate and failure-taxonomy evaluation over seen and unseen
//! objects, aggregated across trained policies and evaluation seeds.

mod compare;
mod policy;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{compare_methods, ColumnRanking, Comparison, ComparisonRow, OrderingCheck};
pub use policy::{privileged_input_for_unseen, LearnedPolicy, OneHotMode, Policy, PolicySource, ScriptedPolicy};

use crate::mappo::MappoError;
use crate::rng::indexed_stream;
use crate::transportsim::{
    make_object, CatalogSelection, EnvConfig, EpisodeSummary, FailureKind, ShapeCatalog, SimError, Trace, TransportEnv,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mappo(#[from] MappoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub selection: CatalogSelection,
    /// Episodes per object, per policy and evaluation seed.
    pub trials: usize,
    /// Evaluation seeds; every policy is evaluated under each.
    pub seeds: Vec<u64>,
    /// Act with the mean action.
    pub deterministic: bool,
    pub onehot: OneHotMode,
    /// Seeds the policies were trained with; must not overlap `seeds`.
    pub training_seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            selection: CatalogSelection::Both,
            trials: 200,
            seeds: vec![1000],
            deterministic: true,
            onehot: OneHotMode::PerTrial,
            training_seeds: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.seeds.is_empty() {
            return Err(EvalError::Config("need at least one evaluation seed".into()));
        }
        if let Some(s) = self.seeds.iter().find(|s| self.training_seeds.contains(s)) {
            return Err(EvalError::Config(format!(
                "evaluation seed {s} was also used for training"
            )));
        }
        Ok(())
    }
}

/// One method and its independently trained policies.
#[derive(Clone, Debug)]
pub struct EvalMethod {
    pub name: String,
    pub sources: Vec<PolicySource>,
}

/// Fraction of episodes in each failure class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureRates {
    pub grasp_and_lift: f64,
    pub post_lift_drop: f64,
    pub transport: f64,
}

impl FailureRates {
    pub fn total(&self) -> f64 {
        self.grasp_and_lift + self.post_lift_drop + self.transport
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectColumn {
    pub name: String,
    pub seen: bool,
}

/// Results of one method on one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: String,
    pub object: String,
    pub seen: bool,
    /// Total episodes over all replicates.
    pub trials: usize,
    /// Pooled success rate (equal to the mean of `replicate_success`).
    pub success_rate: f64,
    /// Sample standard deviation of the per-replicate success rates.
    pub success_std: f64,
    pub replicate_success: Vec<f64>,
    /// 95% Wilson interval of the pooled rate.
    pub ci95: [f64; 2],
    pub mean_final_distance: f64,
    pub failures: FailureRates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Mean of the per-object success rates.
    pub seen_avg: Option<f64>,
    pub unseen_avg: Option<f64>,
    pub avg: Option<f64>,
    /// Standard deviation across replicates of the replicate averages.
    pub seen_avg_std: Option<f64>,
    pub unseen_avg_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub selection: CatalogSelection,
    pub trials_per_replicate: usize,
    pub seeds: Vec<u64>,
    pub deterministic: bool,
    pub objects: Vec<ObjectColumn>,
    pub methods: Vec<String>,
    pub cells: Vec<CellReport>,
    pub summaries: Vec<MethodSummary>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    episodes: usize,
    success: usize,
    grasp_and_lift: usize,
    post_lift_drop: usize,
    transport: usize,
    distance: f64,
}

impl Tally {
    fn add(&mut self, kind: FailureKind, distance: f64) {
        self.episodes += 1;
        self.distance += distance;
        match kind {
            FailureKind::None => self.success += 1,
            FailureKind::GraspAndLift => self.grasp_and_lift += 1,
            FailureKind::PostLiftDrop => self.post_lift_drop += 1,
            FailureKind::Transport => self.transport += 1,
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.episodes += o.episodes;
        self.success += o.success;
        self.grasp_and_lift += o.grasp_and_lift;
        self.post_lift_drop += o.post_lift_drop;
        self.transport += o.transport;
        self.distance += o.distance;
    }

    fn rate(&self, n: usize) -> f64 {
        n as f64 / self.episodes as f64
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn wilson_interval(successes: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054;
    let (n, p) = (n as f64, successes as f64 / n as f64);
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

/// Episodes of one policy on one object under one seed, stepped in lockstep.
fn run_batch(
    source: &PolicySource,
    policy_index: usize,
    method: &str,
    object_id: usize,
    seed: u64,
    config: &EvalConfig,
    env_config: &EnvConfig,
    catalog: &Arc<ShapeCatalog>,
) -> Result<Tally, EvalError> {
    let mut tally = Tally::default();
    if config.trials == 0 {
        return Ok(tally);
    }
    let name = &catalog.get(object_id).expect("catalog id").name;
    let mut envs = (0..config.trials)
        .map(|k| trial_env(seed, object_id, k, env_config, catalog))
        .collect::<Result<Vec<_>, _>>()?;
    let rng = indexed_stream(seed, &format!("eval-policy-{method}-{name}"), policy_index as u64);
    let mut policy = source.instantiate(catalog, config.deterministic, config.onehot, rng);
    policy.begin(&envs)?;
    let mut finished = vec![None; envs.len()];
    while finished.iter().any(Option::is_none) {
        let actions = policy.act(&envs)?;
        for (i, (env, a)) in envs.iter_mut().zip(&actions).enumerate() {
            if finished[i].is_none() {
                if let (_, Some(summary)) = env.step(a)? {
                    finished[i] = Some(summary);
                }
            }
        }
    }
    for s in finished.into_iter().flatten() {
        tally.add(s.failure, s.final_distance);
    }
    Ok(tally)
}

/// Environment of trial `k` on `object_id`, reset and ready. Objects and
/// initial states depend on (seed, object, trial) only, so every method
/// faces the same episodes.
pub fn trial_env(
    seed: u64,
    object_id: usize,
    k: usize,
    env_config: &EnvConfig,
    catalog: &Arc<ShapeCatalog>,
) -> Result<TransportEnv, EvalError> {
    let name = &catalog
        .get(object_id)
        .ok_or_else(|| EvalError::Config(format!("unknown shape id {object_id}")))?
        .name;
    let subset = vec![object_id];
    let mut rng = indexed_stream(seed, &format!("eval-env-{name}"), k as u64);
    let mass = draw(&mut rng, env_config.mass_range);
    let friction = draw(&mut rng, env_config.friction_range);
    let mut env = TransportEnv::new(k, env_config.clone(), catalog.clone(), subset.clone(), rng)?;
    env.reset_with(make_object(catalog, &subset, 0, mass, friction)?);
    Ok(env)
}

/// Run trial `k` alone with tracing on. With deterministic actions the
/// episode matches the one scored by [`run_eval`].
pub fn trace_trial(
    source: &PolicySource,
    object_id: usize,
    seed: u64,
    k: usize,
    config: &EvalConfig,
    env_config: &EnvConfig,
    catalog: &Arc<ShapeCatalog>,
) -> Result<(Trace, EpisodeSummary), EvalError> {
    let mut env = trial_env(seed, object_id, k, env_config, catalog)?;
    env.record_trace(true);
    let rng = indexed_stream(seed, "eval-trace", k as u64);
    let mut policy = source.instantiate(catalog, config.deterministic, config.onehot, rng);
    let mut envs = [env];
    policy.begin(&envs)?;
    loop {
        let a = policy.act(&envs)?;
        if let (_, Some(summary)) = envs[0].step(&a[0])? {
            let trace = envs[0].trace().cloned().expect("tracing was enabled");
            return Ok((trace, summary));
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Evaluate every method on every object of the selected catalog.
pub fn run_eval(
    methods: &[EvalMethod],
    config: &EvalConfig,
    env_config: &EnvConfig,
    catalog: Arc<ShapeCatalog>,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let object_ids = catalog.select(config.selection);
    let objects: Vec<ObjectColumn> = object_ids
        .iter()
        .map(|&id| {
            let s = catalog.get(id).expect("catalog id");
            ObjectColumn {
                name: s.name.clone(),
                seen: s.seen,
            }
        })
        .collect();
    let mut units = Vec::new();
    for (m, method) in methods.iter().enumerate() {
        if method.sources.is_empty() {
            return Err(EvalError::Config(format!("method {} has no policies", method.name)));
        }
        for (o, &id) in object_ids.iter().enumerate() {
            for (p, _) in method.sources.iter().enumerate() {
                for &seed in &config.seeds {
                    units.push((m, o, id, p, seed));
                }
            }
        }
    }
    let tallies = units
        .par_iter()
        .map(|&(m, _, id, p, seed)| {
            let method = &methods[m];
            run_batch(
                &method.sources[p],
                p,
                &method.name,
                id,
                seed,
                config,
                env_config,
                &catalog,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    // (method, object) -> per-replicate tallies, in replicate order.
    let mut grouped: BTreeMap<(usize, usize), Vec<Tally>> = BTreeMap::new();
    for (&(m, o, ..), t) in units.iter().zip(tallies) {
        grouped.entry((m, o)).or_default().push(t);
    }
    let mut cells = Vec::new();
    let mut summaries = Vec::new();
    for (m, method) in methods.iter().enumerate() {
        let mut seen_reps: Vec<Vec<f64>> = Vec::new();
        let mut unseen_reps: Vec<Vec<f64>> = Vec::new();
        let (mut seen_rates, mut unseen_rates) = (Vec::new(), Vec::new());
        for (o, col) in objects.iter().enumerate() {
            let reps = &grouped[&(m, o)];
            let mut pooled = Tally::default();
            reps.iter().for_each(|t| pooled.merge(t));
            if pooled.episodes == 0 {
                continue;
            }
            let replicate_success: Vec<f64> = reps.iter().map(|t| t.rate(t.success)).collect();
            let target = if col.seen { &mut seen_reps } else { &mut unseen_reps };
            target.resize(replicate_success.len(), Vec::new());
            for (r, v) in replicate_success.iter().enumerate() {
                target[r].push(*v);
            }
            let cell = CellReport {
                method: method.name.clone(),
                object: col.name.clone(),
                seen: col.seen,
                trials: pooled.episodes,
                success_rate: pooled.rate(pooled.success),
                success_std: sample_std(&replicate_success),
                replicate_success,
                ci95: wilson_interval(pooled.success, pooled.episodes),
                mean_final_distance: pooled.distance / pooled.episodes as f64,
                failures: FailureRates {
                    grasp_and_lift: pooled.rate(pooled.grasp_and_lift),
                    post_lift_drop: pooled.rate(pooled.post_lift_drop),
                    transport: pooled.rate(pooled.transport),
                },
            };
            if col.seen {
                seen_rates.push(cell.success_rate);
            } else {
                unseen_rates.push(cell.success_rate);
            }
            cells.push(cell);
        }
        let avg = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
        let rep_std = |reps: &[Vec<f64>]| {
            (!reps.is_empty()).then(|| sample_std(&reps.iter().map(|r| mean(r)).collect::<Vec<_>>()))
        };
        let all: Vec<f64> = seen_rates.iter().chain(&unseen_rates).copied().collect();
        summaries.push(MethodSummary {
            method: method.name.clone(),
            seen_avg: avg(&seen_rates),
            unseen_avg: avg(&unseen_rates),
            avg: avg(&all),
            seen_avg_std: rep_std(&seen_reps),
            unseen_avg_std: rep_std(&unseen_reps),
        });
    }
    Ok(EvalReport {
        selection: config.selection,
        trials_per_replicate: config.trials,
        seeds: config.seeds.clone(),
        deterministic: config.deterministic,
        objects,
        methods: methods.iter().map(|m| m.name.clone()).collect(),
        cells,
        summaries,
    })
}

impl EvalReport {
    /// A report holding only success rates, e.g. rates taken from elsewhere. The
    /// remaining probability mass of each cell is booked as transport
    /// failures.
    pub fn from_success_rates(method: &str, rates: &[(&str, bool, f64)]) -> Self {
        let cells: Vec<CellReport> = rates
            .iter()
            .map(|&(object, seen, rate)| CellReport {
                method: method.into(),
                object: object.into(),
                seen,
                trials: 0,
                success_rate: rate,
                success_std: 0.0,
                replicate_success: vec![rate],
                ci95: [rate, rate],
                mean_final_distance: f64::NAN,
                failures: FailureRates {
                    transport: 1.0 - rate,
                    ..FailureRates::default()
                },
            })
            .collect();
        let pick = |seen: bool| -> Vec<f64> { rates.iter().filter(|r| r.1 == seen).map(|r| r.2).collect() };
        let avg = |v: Vec<f64>| (!v.is_empty()).then(|| mean(&v));
        let all: Vec<f64> = rates.iter().map(|r| r.2).collect();
        let selection = match (rates.iter().any(|r| r.1), rates.iter().any(|r| !r.1)) {
            (true, false) => CatalogSelection::Seen,
            (false, true) => CatalogSelection::Unseen,
            _ => CatalogSelection::Both,
        };
        Self {
            selection,
            trials_per_replicate: 0,
            seeds: Vec::new(),
            deterministic: true,
            objects: rates
                .iter()
                .map(|&(name, seen, _)| ObjectColumn {
                    name: name.into(),
                    seen,
                })
                .collect(),
            methods: vec![method.into()],
            cells,
            summaries: vec![MethodSummary {
                method: method.into(),
                seen_avg: avg(pick(true)),
                unseen_avg: avg(pick(false)),
                avg: avg(all),
                seen_avg_std: None,
                unseen_avg_std: None,
            }],
        }
    }

    pub fn cell(&self, method: &str, object: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.object == object)
    }

    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Failure histogram, one row per (method, object).
    pub fn failure_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "object",
            "seen",
            "trials",
            "success",
            "grasp_and_lift",
            "post_lift_drop",
            "transport",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.method.clone(),
                c.object.clone(),
                c.seen.to_string(),
                c.trials.to_string(),
                format!("{:.6}", c.success_rate),
                format!("{:.6}", c.failures.grasp_and_lift),
                format!("{:.6}", c.failures.post_lift_drop),
                format!("{:.6}", c.failures.transport),
            ])?;
        }
        finish(w)
    }

    /// Per-cell table with space-padded columns.
    pub fn cells_csv(&self) -> Result<String, EvalError> {
        let header = [
            "method",
            "object",
            "seen",
            "trials",
            "success",
            "std",
            "ci_low",
            "ci_high",
            "final_dist",
        ];
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.method.clone(),
                    c.object.clone(),
                    c.seen.to_string(),
                    c.trials.to_string(),
                    format!("{:.3}", c.success_rate),
                    format!("{:.3}", c.success_std),
                    format!("{:.3}", c.ci95[0]),
                    format!("{:.3}", c.ci95[1]),
                    format!("{:.3}", c.mean_final_distance),
                ]
            })
            .collect();
        aligned_csv(&header.map(String::from), &rows)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, EvalError> {
    let bytes = w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// CSV whose fields are right-padded so columns line up in a terminal.
pub(crate) fn aligned_csv(header: &[String], rows: &[Vec<String>]) -> Result<String, EvalError> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, f) in widths.iter_mut().zip(r) {
            *w = (*w).max(f.len());
        }
    }
    let pad = |r: &[String]| -> Vec<String> {
        r.iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (f, &w))| {
                if i + 1 == r.len() {
                    f.clone()
                } else {
                    format!("{f:<w$}")
                }
            })
            .collect()
    };
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(pad(header))?;
    for r in rows {
        w.write_record(pad(r))?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::transportsim::Script;

    fn scripted(name: &str, s: Script) -> EvalMethod {
        EvalMethod {
            name: name.into(),
            sources: vec![PolicySource::Scripted(s)],
        }
    }

    fn config(trials: usize, selection: CatalogSelection) -> EvalConfig {
        EvalConfig {
            selection,
            trials,
            seeds: vec![11, 12],
            ..EvalConfig::default()
        }
    }

    #[test]
    fn zero_trials_gives_an_empty_report() {
        let r = run_eval(
            &[scripted("oracle", Script::Oracle)],
            &config(0, CatalogSelection::Seen),
            &EnvConfig::default(),
            Arc::new(ShapeCatalog::builtin()),
        )
        .unwrap();
        assert_eq!(r.objects.len(), 3);
        assert!(r.cells.is_empty());
        assert_eq!(r.summaries[0].avg, None);
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&text).unwrap(), r);
        assert_eq!(r.failure_csv().unwrap().lines().count(), 1);
    }

    #[test]
    fn scripted_policies_get_forced_labels() {
        let cat = Arc::new(ShapeCatalog::builtin());
        let methods = [
            scripted("never", Script::NeverGrasp),
            scripted("oracle", Script::Oracle),
        ];
        let r = run_eval(&methods, &config(3, CatalogSelection::Both), &EnvConfig::default(), cat).unwrap();
        assert_eq!(r.cells.len(), 18);
        for c in &r.cells {
            let total = c.success_rate + c.failures.total();
            assert!((total - 1.0).abs() < 1e-12);
            if c.method == "never" {
                assert_eq!(c.success_rate, 0.0);
                assert_eq!(c.failures.grasp_and_lift, 1.0);
            } else {
                assert_eq!(c.success_rate, 1.0, "{}", c.object);
            }
        }
        let s = r.summary("oracle").unwrap();
        assert_eq!(
            (s.seen_avg, s.unseen_avg, s.seen_avg_std),
            (Some(1.0), Some(1.0), Some(0.0))
        );
    }

    #[test]
    fn reports_are_reproducible() {
        let cat = Arc::new(ShapeCatalog::builtin());
        let methods = [scripted("oracle", Script::DropAfterLift(5))];
        let a = run_eval(
            &methods,
            &config(2, CatalogSelection::Seen),
            &EnvConfig::default(),
            cat.clone(),
        )
        .unwrap();
        let b = run_eval(&methods, &config(2, CatalogSelection::Seen), &EnvConfig::default(), cat).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn training_seeds_must_differ() {
        let c = EvalConfig {
            seeds: vec![0, 5],
            training_seeds: vec![5],
            ..EvalConfig::default()
        };
        assert!(matches!(c.validate(), Err(EvalError::Config(_))));
    }

    #[test]
    fn unseen_one_hot_is_uniform_and_seeded() {
        let cat = ShapeCatalog::builtin();
        let unseen = cat.select(CatalogSelection::Unseen);
        let seen = cat.select(CatalogSelection::Seen);
        let obj = make_object(&cat, &unseen, 0, 0.5, 0.7).unwrap();
        let seen_obj = make_object(&cat, &seen, 0, 0.5, 0.7).unwrap();
        assert!(matches!(
            privileged_input_for_unseen(&seen_obj, &mut stream(0, "x")),
            Err(EvalError::Contract(_))
        ));
        let draws = |seed| {
            let mut rng = stream(seed, "onehot");
            (0..3000)
                .map(|_| privileged_input_for_unseen(&obj, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = draws(4);
        assert_eq!(a, draws(4));
        for slot in 0..3 {
            let f = a.iter().filter(|p| p.one_hot[slot] == 1.0).count() as f64 / 3000.0;
            assert!((0.30..=0.37).contains(&f), "slot {slot}: {f}");
        }
        assert!(a.iter().all(|p| (p.mass_norm - 0.375).abs() < 1e-12));
    }

    #[test]
    fn actors_without_privileged_input_ignore_the_object() {
        use crate::dereco::agent_spec;
        use crate::mappo::{Agent, EncoderKind};
        let cat = Arc::new(ShapeCatalog::builtin());
        let seen = cat.select(CatalogSelection::Seen);
        let twin = |mass, friction| {
            let mut env =
                TransportEnv::new(0, EnvConfig::default(), cat.clone(), seen.clone(), stream(3, "twin")).unwrap();
            env.reset_with(make_object(&cat, &seen, 1, mass, friction).unwrap());
            env
        };
        let envs = [twin(0.3, 0.6), twin(0.9, 0.95)];
        assert_eq!(envs[0].obs(), envs[1].obs());
        for (encoder, blind) in [
            (EncoderKind::Observation, true),
            (EncoderKind::Recurrent, true),
            (EncoderKind::Privileged, false),
        ] {
            let source = PolicySource::Learned(Agent::new(agent_spec(encoder, true, 16), &mut stream(7, "init")));
            let mut p = source.instantiate(&cat, true, OneHotMode::PerTrial, stream(0, "p"));
            p.begin(&envs).unwrap();
            let a = p.act(&envs).unwrap();
            assert_eq!(a[0] == a[1], blind, "{encoder:?}");
        }
    }

    #[test]
    fn traced_trial_matches_scored_trial() {
        let cat = Arc::new(ShapeCatalog::builtin());
        let id = cat.select(CatalogSelection::Seen)[0];
        let cfg = config(4, CatalogSelection::Seen);
        let source = PolicySource::Scripted(Script::DropAfterLift(5));
        let (trace, summary) = trace_trial(&source, id, 11, 2, &cfg, &EnvConfig::default(), &cat).unwrap();
        assert_eq!(trace.classify(), summary.failure);
        assert_eq!(summary.failure, FailureKind::PostLiftDrop);
        let r = run_eval(
            &[scripted("drop", Script::DropAfterLift(5))],
            &cfg,
            &EnvConfig::default(),
            cat,
        )
        .unwrap();
        assert_eq!(r.cells[0].failures.post_lift_drop, 1.0);
    }

    #[test]
    fn wilson_bounds() {
        let [lo, hi] = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert_eq!(wilson_interval(0, 10)[0], 0.0);
    }
}
