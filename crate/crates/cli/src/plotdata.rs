use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dereco::dereco::{Method, RunManifest, METRICS, STAGE1_METRICS};
use dereco::eval::{mean, sample_std};
use dereco::mappo::UpdateMetrics;

use crate::error::{CliError, Result};

/// One row of a learning-curve file.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Trailing moving average over `window` points; the first points average
/// over what is available.
pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            mean(&xs[lo..=i])
        })
        .collect()
}

/// Mean and sample standard deviation across runs, point by point, over
/// the common prefix of the series.
pub fn aggregate(series: &[Vec<(usize, f64)>], window: usize) -> Vec<CurvePoint> {
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let smoothed: Vec<Vec<f64>> = series
        .iter()
        .map(|s| smooth(&s[..len].iter().map(|p| p.1).collect::<Vec<_>>(), window))
        .collect();
    (0..len)
        .map(|i| {
            let column: Vec<f64> = smoothed.iter().map(|s| s[i]).collect();
            CurvePoint {
                step: series[0][i].0,
                mean: mean(&column),
                std: sample_std(&column),
                seeds: column.len(),
            }
        })
        .collect()
}

fn read_metrics(path: &Path) -> Result<Vec<UpdateMetrics>> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("no metrics at {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Write `curve_<method>.csv` per method found in `runs`; returns the files.
pub fn cmd_plotdata(runs: &[PathBuf], window: usize, stage1: bool, out: &Path) -> Result<Vec<PathBuf>> {
    let mut by_method: BTreeMap<Method, Vec<Vec<(usize, f64)>>> = BTreeMap::new();
    for dir in runs {
        let manifest = RunManifest::load(dir)
            .map_err(|e| CliError::Runtime(format!("{} is not a run directory: {e}", dir.display())))?;
        let file = if stage1 { STAGE1_METRICS } else { METRICS };
        let metrics = read_metrics(&dir.join(file))?;
        if metrics.is_empty() {
            return Err(CliError::Runtime(format!(
                "{} holds no metrics",
                dir.join(file).display()
            )));
        }
        by_method
            .entry(manifest.method)
            .or_default()
            .push(metrics.iter().map(|m| (m.step, m.track_reward)).collect());
    }
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (method, series) in by_method {
        let path = out.join(format!("curve_{}.csv", method.id()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["step", "track_reward_mean", "track_reward_std", "seeds"])?;
        for p in aggregate(&series, window) {
            w.write_record([
                p.step.to_string(),
                p.mean.to_string(),
                p.std.to_string(),
                p.seeds.to_string(),
            ])?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_passes_through() {
        let xs = [0.3, -1.0, 2.5, 7.0];
        assert_eq!(smooth(&xs, 1), xs);
    }

    #[test]
    fn trailing_average() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn single_run_has_zero_spread() {
        let s = vec![vec![(8, 1.0), (16, 2.0), (24, 0.5)]];
        let c = aggregate(&s, 10);
        assert!(c.iter().all(|p| p.std == 0.0 && p.seeds == 1));
        assert_eq!(c.iter().map(|p| p.step).collect::<Vec<_>>(), vec![8, 16, 24]);
    }

    #[test]
    fn seeds_are_cut_to_the_shortest_run() {
        let s = vec![vec![(1, 1.0), (2, 3.0), (3, 9.0)], vec![(1, 3.0), (2, 1.0)]];
        let c = aggregate(&s, 1);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].mean, 2.0);
        assert!((c[1].std - 2f64.sqrt()).abs() < 1e-12);
    }
}
