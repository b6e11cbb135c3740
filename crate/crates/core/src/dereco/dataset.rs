//! Stage-2 supervision data: the stage-1 representation `g` recorded next
//! to the local observation that produced it, per robot and episode.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DerecoError;
use crate::autodiff::Tensor;
use crate::mappo::{ActorInput, Agent, EncoderKind};
use crate::rng::{indexed_stream, stream};
use crate::transportsim::{make_object, Action, EnvConfig, ShapeCatalog, TransportEnv, PRIV_WIDTH};

pub const DATASET_BLOB: &str = "encoder_dataset.bin";
pub const DATASET_MANIFEST: &str = "encoder_dataset.json";
const FORMAT_VERSION: u32 = 1;

/// Object that generated an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeObject {
    pub shape_id: usize,
    pub name: String,
    pub mass: f64,
    pub friction: f64,
}

/// One robot's time-ordered `(o, g)` pairs from one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub episode: usize,
    pub robot: usize,
    pub object: EpisodeObject,
    /// `len × obs_width`, row-major.
    pub obs: Vec<f64>,
    /// `len × g_width`, row-major.
    pub g: Vec<f64>,
    /// Privileged input the representation was computed from; empty for
    /// synthetic data.
    pub privileged: Vec<f64>,
}

impl Sequence {
    pub fn len(&self, obs_width: usize) -> usize {
        self.obs.len() / obs_width.max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderDataset {
    pub obs_width: usize,
    pub g_width: usize,
    pub sequences: Vec<Sequence>,
}

impl EncoderDataset {
    /// Total number of `(o, g)` pairs.
    pub fn pairs(&self) -> usize {
        self.sequences.iter().map(|s| s.len(self.obs_width)).sum()
    }

    pub fn episodes(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.sequences.iter().map(|s| s.episode).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Pairs per shape name.
    pub fn shape_counts(&self) -> std::collections::BTreeMap<String, usize> {
        let mut out = std::collections::BTreeMap::new();
        for s in &self.sequences {
            *out.entry(s.object.name.clone()).or_insert(0) += s.len(self.obs_width);
        }
        out
    }

    fn check(&self) -> Result<(), DerecoError> {
        for (i, s) in self.sequences.iter().enumerate() {
            let n = s.len(self.obs_width);
            if s.obs.len() != n * self.obs_width || s.g.len() != n * self.g_width {
                return Err(DerecoError::Contract(format!(
                    "sequence {i}: observation and target lengths disagree"
                )));
            }
        }
        Ok(())
    }
}

/// Roll out a stage-1 agent and record `(o, g)` for both robots at every
/// step. Episode `k` uses shape `subset[k % subset.len()]`, so the shapes are
/// evenly represented; mass and friction are drawn from the training ranges.
pub fn collect_encoder_dataset(
    agent: &Agent,
    env_config: &EnvConfig,
    catalog: Arc<ShapeCatalog>,
    subset: &[usize],
    n_episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<EncoderDataset, DerecoError> {
    if agent.spec.actor.encoder != EncoderKind::Privileged {
        return Err(DerecoError::Contract(
            "dataset collection needs a stage-1 agent with a privileged encoder".into(),
        ));
    }
    if subset.is_empty() {
        return Err(DerecoError::Config("no training shapes to collect from".into()));
    }
    let mut sampling = stream(seed, "dataset-sampling");
    let mut sequences = Vec::with_capacity(2 * n_episodes);
    const BATCH: usize = 32;
    for first in (0..n_episodes).step_by(BATCH) {
        let ids: Vec<usize> = (first..(first + BATCH).min(n_episodes)).collect();
        let mut envs = Vec::with_capacity(ids.len());
        for &k in &ids {
            let mut orng = indexed_stream(seed, "dataset-object", k as u64);
            let mass = uniform(&mut orng, env_config.mass_range);
            let friction = uniform(&mut orng, env_config.friction_range);
            let object = make_object(&catalog, subset, k % subset.len(), mass, friction)?;
            let rng = indexed_stream(seed, "dataset-env", k as u64);
            let mut env = TransportEnv::new(k, env_config.clone(), catalog.clone(), subset.to_vec(), rng)?;
            env.reset_with(object.clone());
            let p = env.privileged()?.to_vec();
            for robot in 0..2 {
                sequences.push(Sequence {
                    episode: k,
                    robot,
                    object: EpisodeObject {
                        shape_id: object.shape_id,
                        name: object.name.clone(),
                        mass,
                        friction,
                    },
                    obs: Vec::new(),
                    g: Vec::new(),
                    privileged: p.clone(),
                });
            }
            envs.push(env);
        }
        let base = sequences.len() - 2 * ids.len();
        let privileged = Tensor::stack_rows(sequences[base..].iter().map(|s| s.privileged.as_slice()), PRIV_WIDTH);
        let mut done = false;
        while !done {
            let rows: Vec<Vec<f64>> = envs.iter().flat_map(|e| e.obs().iter().map(|o| o.to_vec())).collect();
            let obs = Tensor::from_rows(&rows);
            let mut input = ActorInput::new(&obs);
            input.privileged = Some(&privileged);
            let policy = agent.act(input)?;
            let std: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
            let mut actions: Vec<[Action; 2]> = vec![[[0.0; 6]; 2]; envs.len()];
            for r in 0..obs.rows() {
                let seq = &mut sequences[base + r];
                seq.obs.extend_from_slice(obs.row_slice(r));
                seq.g.extend_from_slice(policy.g.row_slice(r));
                for (k, m) in policy.mean.row_slice(r).iter().enumerate() {
                    let a = if deterministic {
                        *m
                    } else {
                        m + std[k] * sampling.sample::<f64, _>(StandardNormal)
                    };
                    actions[r / 2][r % 2][k] = a.clamp(-1.0, 1.0);
                }
            }
            for (env, a) in envs.iter_mut().zip(&actions) {
                let (out, _) = env.step(a)?;
                done = out.done;
            }
        }
    }
    Ok(EncoderDataset {
        obs_width: agent.spec.actor.obs_width,
        g_width: agent.spec.actor.hidden,
        sequences,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Serialize, Deserialize)]
struct SequenceEntry {
    episode: usize,
    robot: usize,
    object: EpisodeObject,
    len: usize,
    /// Offset into the blob, in bytes.
    offset: usize,
    privileged: usize,
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    format_version: u32,
    obs_width: usize,
    g_width: usize,
    pairs: usize,
    sequences: Vec<SequenceEntry>,
}

/// Write `encoder_dataset.bin` (little-endian `f64`: per sequence the
/// observations, then the targets, then the privileged input) and its JSON
/// manifest into `dir`.
pub fn write_dataset(dir: &Path, ds: &EncoderDataset) -> Result<(), DerecoError> {
    ds.check()?;
    fs::create_dir_all(dir)?;
    let mut blob = BufWriter::new(fs::File::create(dir.join(DATASET_BLOB))?);
    let mut offset = 0;
    let mut entries = Vec::with_capacity(ds.sequences.len());
    for s in &ds.sequences {
        entries.push(SequenceEntry {
            episode: s.episode,
            robot: s.robot,
            object: s.object.clone(),
            len: s.len(ds.obs_width),
            offset,
            privileged: s.privileged.len(),
        });
        for v in s.obs.iter().chain(&s.g).chain(&s.privileged) {
            blob.write_all(&v.to_le_bytes())?;
            offset += 8;
        }
    }
    blob.flush()?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        obs_width: ds.obs_width,
        g_width: ds.g_width,
        pairs: ds.pairs(),
        sequences: entries,
    };
    fs::write(dir.join(DATASET_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<EncoderDataset, DerecoError> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join(DATASET_MANIFEST))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DerecoError::Contract(format!(
            "dataset format version {} is not supported",
            manifest.format_version
        )));
    }
    let blob = fs::read(dir.join(DATASET_BLOB))?;
    let read = |offset: usize, n: usize| -> Result<Vec<f64>, DerecoError> {
        let bytes = blob
            .get(offset..offset + 8 * n)
            .ok_or_else(|| DerecoError::Contract(format!("dataset blob truncated at byte {offset}")))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for e in manifest.sequences {
        let no = e.len * manifest.obs_width;
        let ng = e.len * manifest.g_width;
        sequences.push(Sequence {
            episode: e.episode,
            robot: e.robot,
            object: e.object,
            obs: read(e.offset, no)?,
            g: read(e.offset + 8 * no, ng)?,
            privileged: read(e.offset + 8 * (no + ng), e.privileged)?,
        });
    }
    let ds = EncoderDataset {
        obs_width: manifest.obs_width,
        g_width: manifest.g_width,
        sequences,
    };
    if ds.pairs() != manifest.pairs {
        return Err(DerecoError::Contract(format!(
            "dataset manifest lists {} pairs but the sequences hold {}",
            manifest.pairs,
            ds.pairs()
        )));
    }
    Ok(ds)
}
