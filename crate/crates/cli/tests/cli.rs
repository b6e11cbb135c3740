use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use dereco::eval::EvalReport;
use dereco::rng::stream;
use dereco::transportsim::{make_object, write_trace, CatalogSelection, EnvConfig, Script, ShapeCatalog, TransportEnv};

fn dereco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dereco"))
        .args(args)
        .env_remove("DERECO_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn train(method: &str, seeds: &str, out: &Path) -> Output {
    let o = dereco(&[
        "train",
        method,
        "--preset",
        "smoke",
        "--seeds",
        seeds,
        "--quiet",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

fn run_dir(root: &Path, method: &str, seed: u64) -> PathBuf {
    root.join(method).join(format!("seed-{seed}"))
}

#[test]
fn train_writes_stage_artifacts_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train("dereco", "0", a.path());
    train("dereco", "0", b.path());
    let (da, db) = (run_dir(a.path(), "dereco", 0), run_dir(b.path(), "dereco", 0));
    for f in [
        "stage1.ckpt",
        "encoder.ckpt",
        "stage3.ckpt",
        "run_manifest.json",
        "run_config.json",
        "catalog.json",
    ] {
        assert!(da.join(f).exists(), "missing {f}");
    }
    for f in ["metrics.jsonl", "metrics_stage1.jsonl"] {
        assert_eq!(
            fs::read(da.join(f)).unwrap(),
            fs::read(db.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn seed_sweep_gives_one_directory_per_seed() {
    let root = tempfile::tempdir().unwrap();
    let o = train("mappo-wo-pi", "0..5", root.path());
    let listed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listed.lines().count(), 5);
    for seed in 0..5 {
        assert!(run_dir(root.path(), "mappo-wo-pi", seed).join("policy.ckpt").exists());
    }
}

#[test]
fn existing_runs_need_resume_or_force() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().to_str().unwrap();
    train("mappo-w-pi", "1", root.path());
    let again = dereco(&[
        "train",
        "mappo-w-pi",
        "--preset",
        "smoke",
        "--seed",
        "1",
        "-q",
        "--out",
        out,
    ]);
    assert_eq!(code(&again), 1);
    assert!(stderr(&again).contains("--resume"));
    let resumed = dereco(&[
        "train",
        "mappo-w-pi",
        "--preset",
        "smoke",
        "--seed",
        "1",
        "-q",
        "--resume",
        "--out",
        out,
    ]);
    assert_eq!(code(&resumed), 0, "{}", stderr(&resumed));
    let changed = dereco(&[
        "train",
        "mappo-w-pi",
        "--preset",
        "smoke",
        "--seed",
        "1",
        "-q",
        "--resume",
        "--out",
        out,
        "--set",
        "pipeline.hidden=8",
    ]);
    assert_eq!(code(&changed), 2, "{}", stderr(&changed));
    let forced = dereco(&[
        "train",
        "mappo-w-pi",
        "--preset",
        "smoke",
        "--seed",
        "1",
        "-q",
        "--force",
        "--out",
        out,
    ]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().to_str().unwrap();
    assert_eq!(code(&dereco(&["train", "ppo", "--out", out])), 1);
    assert_eq!(code(&dereco(&["frobnicate"])), 1);
    assert_eq!(code(&dereco(&["--help"])), 0);
    let bad_key = dereco(&[
        "train",
        "dereco",
        "--preset",
        "smoke",
        "--set",
        "pipeline.width=3",
        "--out",
        out,
    ]);
    assert_eq!(code(&bad_key), 2);
    assert!(stderr(&bad_key).contains("pipeline.width"));
    let bad_file = root.path().join("broken.json");
    fs::write(&bad_file, "{ not json").unwrap();
    assert_eq!(
        code(&dereco(&[
            "train",
            "dereco",
            "--config",
            bad_file.to_str().unwrap(),
            "--out",
            out
        ])),
        2
    );
    let missing = dereco(&["eval", out, "--trials", "1"]);
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("run_manifest.json"));
}

#[test]
fn output_root_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dereco"))
        .args(["train", "mappo-wo-ae", "--preset", "smoke", "--seed", "2", "-q"])
        .env("DERECO_OUT", root.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(run_dir(root.path(), "mappo-wo-ae", 2).join("policy.ckpt").exists());
}

fn eval(runs: &[PathBuf], extra: &[&str], out: &Path) -> Output {
    let mut args: Vec<String> = vec!["eval".into()];
    args.extend(runs.iter().map(|p| p.to_string_lossy().into_owned()));
    args.extend(extra.iter().map(|s| s.to_string()));
    args.extend(["--out".into(), out.to_string_lossy().into_owned()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    dereco(&refs)
}

fn read_report(dir: &Path) -> EvalReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn eval_reports_and_comparisons() {
    let root = tempfile::tempdir().unwrap();
    train("mappo-wo-pi", "0", root.path());
    train("mappo-w-pi", "0", root.path());
    let runs = vec![
        run_dir(root.path(), "mappo-wo-pi", 0),
        run_dir(root.path(), "mappo-w-pi", 0),
    ];

    let seen = root.path().join("seen");
    let o = eval(
        &runs,
        &["--catalog", "seen", "--trials", "2", "--seeds", "100,101"],
        &seen,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_report(&seen);
    assert_eq!(r.objects.len(), 3);
    assert_eq!(r.cells.len(), 6);
    assert!(r
        .cells
        .iter()
        .all(|c| c.trials == 4 && (c.success_rate + c.failures.total() - 1.0).abs() < 1e-12));
    let table = fs::read_to_string(seen.join("comparison.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').map(str::trim).collect();
    assert_eq!(header, ["method", "bar", "cylinder", "board", "seen_avg", "unseen_avg"]);
    assert!(seen.join("failures.csv").exists());

    let unseen = root.path().join("unseen");
    let o = eval(
        &runs,
        &["--catalog", "unseen", "--trials", "1", "--traces", "1"],
        &unseen,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_report(&unseen);
    assert_eq!(r.objects.len(), 6);
    assert!(r.objects.iter().all(|o| !o.seen));
    assert_eq!(fs::read_dir(unseen.join("traces")).unwrap().count(), 12);

    // Only the run directories are needed to reproduce a report.
    let again = root.path().join("unseen-again");
    eval(&runs, &["--catalog", "unseen", "--trials", "1"], &again);
    assert_eq!(
        fs::read(unseen.join("report.json")).unwrap(),
        fs::read(again.join("report.json")).unwrap()
    );

    let empty = root.path().join("empty");
    assert_eq!(code(&eval(&runs, &["--trials", "0"], &empty)), 0);
    let r = read_report(&empty);
    assert!(r.cells.is_empty());
    assert_eq!(r.objects.len(), 9);

    let clash = eval(&runs, &["--seeds", "0", "--trials", "1"], &root.path().join("clash"));
    assert_eq!(code(&clash), 2);
}

#[test]
fn plotdata_curves() {
    let root = tempfile::tempdir().unwrap();
    train("mappo-wo-ae-lstm", "0", root.path());
    let one = run_dir(root.path(), "mappo-wo-ae-lstm", 0);
    let out = root.path().join("plots");
    let o = dereco(&[
        "plotdata",
        one.to_str().unwrap(),
        "--window",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(out.join("curve_mappo-wo-ae-lstm.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    let metrics: Vec<serde_json::Value> = fs::read_to_string(one.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), metrics.len());
    for (row, m) in rows.iter().zip(&metrics) {
        assert_eq!(row[0].parse::<u64>().unwrap(), m["step"].as_u64().unwrap());
        assert_eq!(row[1].parse::<f64>().unwrap(), m["track_reward"].as_f64().unwrap());
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
    }
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&dereco(&["plotdata", empty.path().to_str().unwrap()])), 3);
}

fn scripted_trace(script: Script, path: &Path) {
    let cat = Arc::new(ShapeCatalog::builtin());
    let seen = cat.select(CatalogSelection::Seen);
    let mut env = TransportEnv::new(0, EnvConfig::default(), cat.clone(), seen.clone(), stream(9, "trace")).unwrap();
    env.reset_with(make_object(&cat, &seen, 0, 0.5, 0.8).unwrap());
    env.record_trace(true);
    loop {
        let a = script.actions(env.state(), env.object(), env.config());
        if env.step(&a).unwrap().1.is_some() {
            break;
        }
    }
    write_trace(BufWriter::new(File::create(path).unwrap()), env.trace().unwrap()).unwrap();
}

#[test]
fn replay_traces() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("oracle.jsonl");
    scripted_trace(Script::Oracle, &ok);
    let o = dereco(&["replay", ok.to_str().unwrap(), "--every", "50"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("failure class: none"), "{text}");

    let drop = dir.path().join("drop.jsonl");
    scripted_trace(Script::DropAfterLift(5), &drop);
    let o = dereco(&["replay", drop.to_str().unwrap()]);
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .contains("failure class: post_lift_drop"));

    let lines: Vec<String> = fs::read_to_string(&ok).unwrap().lines().map(String::from).collect();
    let cut = &lines[7][..lines[7].len() / 2];
    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, format!("{}\n{cut}\n", lines[..7].join("\n"))).unwrap();
    let o = dereco(&["replay", broken.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("line 8"), "{}", stderr(&o));
}

#[test]
fn standalone_encoder_stages() {
    let root = tempfile::tempdir().unwrap();
    train("dereco", "3", root.path());
    let run = run_dir(root.path(), "dereco", 3);
    let ds = root.path().join("ds");
    let o = dereco(&[
        "encoder-dataset",
        run.to_str().unwrap(),
        "--preset",
        "smoke",
        "--seed",
        "3",
        "--out",
        ds.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Same seed and config as the full run: the same dataset.
    assert_eq!(
        fs::read(ds.join("encoder_dataset.bin")).unwrap(),
        fs::read(run.join("encoder_dataset.bin")).unwrap()
    );
    let o = dereco(&[
        "encoder-train",
        ds.to_str().unwrap(),
        "--preset",
        "smoke",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(ds.join("encoder.ckpt").exists());
    assert!(ds.join("stage2_report.json").exists());
}
