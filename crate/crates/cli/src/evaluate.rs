use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dereco::dereco::{load_policy, Method, PipelineConfig, CONFIG_FILE, METHODS};
use dereco::eval::{
    compare_methods, run_eval, trace_trial, Comparison, EvalConfig, EvalMethod, EvalReport, PolicySource,
};
use dereco::transportsim::{write_trace, EnvConfig, ShapeCatalog};

use crate::config::CATALOG_FILE;
use crate::error::{CliError, Result};

pub struct EvalArgs {
    pub runs: Vec<PathBuf>,
    pub config: EvalConfig,
    pub catalog_file: Option<PathBuf>,
    pub out: PathBuf,
    /// Record this many traced trials per run and object.
    pub traces: usize,
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const FAILURES_CSV: &str = "failures.csv";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_CSV: &str = "comparison.csv";

struct LoadedRun {
    method: Method,
    seed: u64,
    source: PolicySource,
}

fn same_everywhere<T: PartialEq>(items: Vec<(PathBuf, T)>, what: &str) -> Result<T> {
    let mut it = items.into_iter();
    let (first_dir, first) = it
        .next()
        .ok_or_else(|| CliError::Usage("no run directories given".into()))?;
    for (dir, v) in it {
        if v != first {
            return Err(CliError::Config(format!(
                "{} and {} were trained with different {what}",
                first_dir.display(),
                dir.display()
            )));
        }
    }
    Ok(first)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("parsing {}: {e}", path.display())))
}

/// Evaluate complete run directories, grouped by method, and write the
/// report, failure histogram and comparison table into `out`.
pub fn cmd_eval(mut args: EvalArgs) -> Result<(EvalReport, Comparison)> {
    let mut runs = Vec::new();
    let mut envs = Vec::new();
    let mut catalogs = Vec::new();
    for dir in &args.runs {
        let (manifest, agent) = load_policy(dir)?;
        let pipeline: PipelineConfig = read_json(&dir.join(CONFIG_FILE))?;
        envs.push((dir.clone(), pipeline.env));
        if args.catalog_file.is_none() {
            let text = fs::read_to_string(dir.join(CATALOG_FILE))?;
            catalogs.push((dir.clone(), ShapeCatalog::from_json(&text)?));
        }
        runs.push(LoadedRun {
            method: manifest.method,
            seed: manifest.seed,
            source: PolicySource::Learned(agent),
        });
    }
    let env: EnvConfig = same_everywhere(envs, "environment settings")?;
    let catalog = Arc::new(match &args.catalog_file {
        Some(p) => ShapeCatalog::load(p)?,
        None => same_everywhere(catalogs, "shape catalogs")?,
    });
    args.config.training_seeds = runs.iter().map(|r| r.seed).collect();
    args.config.training_seeds.sort_unstable();
    args.config.training_seeds.dedup();

    let methods: Vec<EvalMethod> = METHODS
        .iter()
        .filter_map(|&m| {
            let sources: Vec<PolicySource> = runs
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.source.clone())
                .collect();
            (!sources.is_empty()).then(|| EvalMethod {
                name: m.display_name().into(),
                sources,
            })
        })
        .collect();
    let report = run_eval(&methods, &args.config, &env, catalog.clone())?;
    let comparison = compare_methods(std::slice::from_ref(&report))?;

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join(REPORT_JSON), serde_json::to_string_pretty(&report)?)?;
    fs::write(args.out.join(REPORT_CSV), report.cells_csv()?)?;
    fs::write(args.out.join(FAILURES_CSV), report.failure_csv()?)?;
    fs::write(
        args.out.join(COMPARISON_JSON),
        serde_json::to_string_pretty(&comparison)?,
    )?;
    fs::write(args.out.join(COMPARISON_CSV), comparison.table_csv()?)?;

    if args.traces > 0 {
        let dir = args.out.join("traces");
        fs::create_dir_all(&dir)?;
        let seed = args.config.seeds[0];
        for run in &runs {
            for id in catalog.select(args.config.selection) {
                for k in 0..args.traces.min(args.config.trials) {
                    let (trace, _) = trace_trial(&run.source, id, seed, k, &args.config, &env, &catalog)?;
                    let name = &catalog.get(id).expect("selected id").name;
                    let file = dir.join(format!("{}-seed{}-{name}-{k}.jsonl", run.method.id(), run.seed));
                    write_trace(BufWriter::new(File::create(&file)?), &trace)?;
                }
            }
        }
    }
    Ok((report, comparison))
}
