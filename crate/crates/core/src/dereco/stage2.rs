//! Supervised training of the adaptive encoder: an LSTM over the local
//! observation history regressing the stage-1 representation, with
//! truncated backpropagation through time.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DerecoError, EncoderDataset, EncoderTrainConfig, Sequence};
use crate::autodiff::{
    clip_grad_norm, AdamConfig, AdamState, Checkpoint, LstmCellState, LstmVars, ParamStore, Tape, Tensor,
};
use crate::mappo::AdaptiveEncoder;
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub train_episodes: usize,
    pub validation_episodes: usize,
    /// MSE of the returned parameters on each split.
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// A trained encoder: architecture plus `encoder.` parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    pub encoder: AdaptiveEncoder,
    pub params: ParamStore,
}

impl EncoderModel {
    pub fn new<R: rand::Rng + ?Sized>(obs_width: usize, hidden: usize, g_width: usize, rng: &mut R) -> Self {
        let encoder = AdaptiveEncoder::new(obs_width, hidden, g_width);
        let mut params = ParamStore::new();
        encoder.init(&mut params, rng);
        Self { encoder, params }
    }

    pub fn obs_width(&self) -> usize {
        self.encoder.cell.input
    }

    pub fn g_width(&self) -> usize {
        self.encoder.readout.output
    }

    pub fn to_checkpoint(&self, report: Option<&Stage2Report>) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            metadata: serde_json::json!({
                "encoder": self.encoder,
                "obs_width": self.obs_width(),
                "g_width": self.g_width(),
                "report": report,
            }),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, DerecoError> {
        let encoder: AdaptiveEncoder = serde_json::from_value(ckpt.metadata["encoder"].clone())
            .map_err(|e| DerecoError::Contract(format!("encoder checkpoint: {e}")))?;
        Ok(Self {
            encoder,
            params: ckpt.params.clone(),
        })
    }

    /// Reconstructions for one whole sequence, starting from a zero state.
    pub fn reconstruct(&self, obs: &[f64]) -> Result<Vec<f64>, DerecoError> {
        let w = self.obs_width();
        let mut state = LstmCellState::zeros(1, self.encoder.hidden());
        let mut out = Vec::with_capacity(obs.len() / w * self.g_width());
        for row in obs.chunks(w) {
            let (g, next) = self.encoder.step(&self.params, &Tensor::row(row), &state)?;
            out.extend_from_slice(g.data());
            state = next;
        }
        Ok(out)
    }

    /// Mean squared reconstruction error over every element of `seqs`.
    pub fn mse(&self, ds: &EncoderDataset, seqs: &[&Sequence]) -> Result<f64, DerecoError> {
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in seqs.chunks(64) {
            let max_len = batch.iter().map(|s| s.len(ds.obs_width)).max().unwrap_or(0);
            let mut state = LstmCellState::zeros(batch.len(), self.encoder.hidden());
            for t in 0..max_len {
                let x = step_rows(batch, t, ds.obs_width, |s| &s.obs);
                let (g, next) = self.encoder.step(&self.params, &x, &state)?;
                for (b, s) in batch.iter().enumerate() {
                    if t < s.len(ds.obs_width) {
                        let target = &s.g[t * ds.g_width..(t + 1) * ds.g_width];
                        sum += g
                            .row_slice(b)
                            .iter()
                            .zip(target)
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>();
                        count += ds.g_width;
                    }
                }
                state = next;
            }
        }
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }
}

/// Row `t` of every sequence in the batch; zeros past a sequence's end.
fn step_rows(batch: &[&Sequence], t: usize, width: usize, field: impl Fn(&Sequence) -> &Vec<f64>) -> Tensor {
    let mut data = vec![0.0; batch.len() * width];
    for (b, s) in batch.iter().enumerate() {
        if let Some(row) = field(s).get(t * width..(t + 1) * width) {
            data[b * width..(b + 1) * width].copy_from_slice(row);
        }
    }
    Tensor::matrix(batch.len(), width, data).expect("row block")
}

/// Episode-level train/validation split.
pub fn split_episodes(ds: &EncoderDataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids = ds.episodes();
    ids.shuffle(&mut stream(seed, "stage2-split"));
    let n_val = if ids.len() < 2 || fraction <= 0.0 {
        0
    } else {
        ((ids.len() as f64 * fraction).round() as usize).clamp(1, ids.len() - 1)
    };
    let val = ids.split_off(ids.len() - n_val);
    ids.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (ids, val)
}

fn select<'a>(ds: &'a EncoderDataset, episodes: &[usize]) -> Vec<&'a Sequence> {
    ds.sequences
        .iter()
        .filter(|s| episodes.binary_search(&s.episode).is_ok())
        .collect()
}

/// One TBPTT pass over a batch of sequences. Returns the mean loss.
fn train_batch(
    model: &mut EncoderModel,
    opt: &mut AdamState,
    batch: &[&Sequence],
    ds: &EncoderDataset,
    config: &EncoderTrainConfig,
) -> Result<f64, DerecoError> {
    let max_len = batch.iter().map(|s| s.len(ds.obs_width)).max().unwrap_or(0);
    let mut state = LstmCellState::zeros(batch.len(), model.encoder.hidden());
    let (mut total, mut windows) = (0.0, 0usize);
    for start in (0..max_len).step_by(config.window) {
        let end = (start + config.window).min(max_len);
        let mut tape = Tape::new();
        let mut s = LstmVars::from_state(&mut tape, &state);
        let mut terms = Vec::with_capacity(end - start);
        let mut count = 0usize;
        for t in start..end {
            let x = tape.constant(step_rows(batch, t, ds.obs_width, |s| &s.obs));
            let (g, next) = model.encoder.forward(&mut tape, &model.params, x, s)?;
            s = next;
            let mut mask = vec![0.0; batch.len() * ds.g_width];
            for (b, seq) in batch.iter().enumerate() {
                if t < seq.len(ds.obs_width) {
                    mask[b * ds.g_width..(b + 1) * ds.g_width].fill(1.0);
                    count += ds.g_width;
                }
            }
            let target = tape.constant(step_rows(batch, t, ds.g_width, |s| &s.g));
            let mask = tape.constant(Tensor::matrix(batch.len(), ds.g_width, mask)?);
            let d = tape.sub(g, target)?;
            let d = tape.mul(d, mask)?;
            let sq = tape.square(d);
            terms.push(tape.sum(sq));
        }
        let mut loss = terms[0];
        for &t in &terms[1..] {
            loss = tape.add(loss, t)?;
        }
        let loss = tape.scale(loss, 1.0 / count.max(1) as f64);
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(DerecoError::Training(format!(
                "non-finite encoder loss in window starting at step {start}"
            )));
        }
        let grads = tape.backward(loss)?;
        let mut g = tape.param_grads(&grads);
        clip_grad_norm(&mut g, config.max_grad_norm);
        opt.step(&mut model.params, &g)?;
        state = s.to_state(&tape);
        total += value;
        windows += 1;
    }
    Ok(total / windows.max(1) as f64)
}

/// Train an encoder on `ds`, keeping the parameters with the best
/// validation error (training error when there is no validation split).
pub fn train_encoder(
    ds: &EncoderDataset,
    config: &EncoderTrainConfig,
    hidden: usize,
    seed: u64,
) -> Result<(EncoderModel, Stage2Report), DerecoError> {
    config.validate()?;
    if ds.pairs() == 0 {
        return Err(DerecoError::Config("encoder dataset is empty".into()));
    }
    let (train_ids, val_ids) = split_episodes(ds, config.validation_fraction, seed);
    let train = select(ds, &train_ids);
    let val = select(ds, &val_ids);
    let mut model = EncoderModel::new(ds.obs_width, hidden, ds.g_width, &mut stream(seed, "encoder-init"));
    let mut opt = AdamState::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut order_rng = stream(seed, "stage2-batches");
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut history = Vec::new();
    let mut order = train.clone();
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut train_loss = 0.0;
        let batches = order.chunks(config.batch_sequences);
        let n_batches = batches.len();
        for batch in batches {
            train_loss += train_batch(&mut model, &mut opt, batch, ds, config)?;
        }
        let validation_mse = if val.is_empty() {
            None
        } else {
            Some(model.mse(ds, &val)?)
        };
        history.push(EpochRecord {
            epoch,
            train_mse: train_loss / n_batches.max(1) as f64,
            validation_mse,
        });
        let score = validation_mse.unwrap_or(train_loss / n_batches.max(1) as f64);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, epoch, model.params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= config.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    let report = Stage2Report {
        train_episodes: train_ids.len(),
        validation_episodes: val_ids.len(),
        train_mse: model.mse(ds, &train)?,
        validation_mse: if val.is_empty() {
            None
        } else {
            Some(model.mse(ds, &val)?)
        },
        best_epoch,
        history,
    };
    Ok((model, report))
}

/// Synthetic memory task: observation coordinate `coord` is uniform in
/// [-1, 1] (other coordinates zero) and the target is the running mean of
/// that coordinate up to and including the current step.
pub fn running_mean_task(episodes: usize, len: usize, obs_width: usize, coord: usize, seed: u64) -> EncoderDataset {
    use rand::Rng;
    let mut rng = stream(seed, "running-mean-task");
    let sequences = (0..episodes)
        .map(|e| {
            let mut obs = vec![0.0; len * obs_width];
            let mut g = Vec::with_capacity(len);
            let mut sum = 0.0;
            for t in 0..len {
                let x: f64 = rng.gen_range(-1.0..1.0);
                obs[t * obs_width + coord] = x;
                sum += x;
                g.push(sum / (t + 1) as f64);
            }
            Sequence {
                episode: e,
                robot: 0,
                object: super::EpisodeObject {
                    shape_id: 0,
                    name: "running-mean".into(),
                    mass: 0.0,
                    friction: 0.0,
                },
                obs,
                g,
                privileged: Vec::new(),
            }
        })
        .collect();
    EncoderDataset {
        obs_width,
        g_width: 1,
        sequences,
    }
}

/// Permute the steps of every sequence, keeping each `(o, g)` pair intact.
pub fn shuffle_within_episodes(ds: &EncoderDataset, seed: u64) -> EncoderDataset {
    let mut rng = stream(seed, "within-episode-shuffle");
    let mut out = ds.clone();
    for s in &mut out.sequences {
        let n = s.len(ds.obs_width);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (obs, g) = (s.obs.clone(), s.g.clone());
        for (dst, &src) in perm.iter().enumerate() {
            s.obs[dst * ds.obs_width..(dst + 1) * ds.obs_width]
                .copy_from_slice(&obs[src * ds.obs_width..(src + 1) * ds.obs_width]);
            s.g[dst * ds.g_width..(dst + 1) * ds.g_width].copy_from_slice(&g[src * ds.g_width..(src + 1) * ds.g_width]);
        }
    }
    out
}
