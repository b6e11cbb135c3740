use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{AutodiffError, Tensor};

/// Named parameter tensors, iterated in sorted-name order.
///
/// Frozen names are skipped by the optimizer; an optimizer step that carries a
/// nonzero gradient for a frozen name is rejected.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    frozen: BTreeSet<String>,
}

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, AutodiffError> {
        self.entries
            .get(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, AutodiffError> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn freeze(&mut self, name: &str) {
        self.frozen.insert(name.to_string());
    }

    pub fn freeze_prefix(&mut self, prefix: &str) {
        let names: Vec<String> = self.entries.keys().filter(|n| n.starts_with(prefix)).cloned().collect();
        self.frozen.extend(names);
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn frozen_names(&self) -> impl Iterator<Item = &String> {
        self.frozen.iter()
    }

    /// Copy of every entry whose name starts with `prefix`, frozen flags included.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let entries: BTreeMap<String, Tensor> = self
            .entries
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect();
        let frozen = self
            .frozen
            .iter()
            .filter(|n| entries.contains_key(*n))
            .cloned()
            .collect();
        ParamStore { entries, frozen }
    }

    /// Copy entries under `from` into this store, renamed under `to`.
    pub fn copy_prefix(&mut self, other: &ParamStore, from: &str, to: &str) -> usize {
        let mut n = 0;
        for (name, t) in other.entries.iter().filter(|(n, _)| n.starts_with(from)) {
            let renamed = format!("{to}{}", &name[from.len()..]);
            self.entries.insert(renamed, t.clone());
            n += 1;
        }
        n
    }

    pub fn merge(&mut self, other: &ParamStore) {
        for (n, t) in &other.entries {
            self.entries.insert(n.clone(), t.clone());
        }
        self.frozen.extend(other.frozen.iter().cloned());
    }

    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|n, _| !n.starts_with(prefix));
        self.frozen.retain(|n| !n.starts_with(prefix));
    }

    /// Round all values through `f32`, matching what a checkpoint round trip keeps.
    pub fn quantize_f32(&mut self) {
        for t in self.entries.values_mut() {
            t.quantize_f32();
        }
    }

    /// SHA-256 over names, shapes, and the exact bit patterns of every value
    /// whose name starts with `prefix`.
    pub fn content_hash(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.entries.iter().filter(|(n, _)| n.starts_with(prefix)) {
            h.update(name.as_bytes());
            h.update([0u8]);
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    /// Zero gradients for every trainable parameter, overwritten by `grads`.
    pub fn complete_gradients(&self, grads: &Gradients) -> Gradients {
        let mut out = Gradients::new();
        for (name, t) in &self.entries {
            if self.frozen.contains(name) {
                continue;
            }
            let g = grads.get(name).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
            out.insert(name.clone(), g);
        }
        out
    }
}

/// Orthogonal initialization scaled by `gain`, for a `[rows, cols]` weight.
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, gain: f64) -> Tensor {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let gauss = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the draw uniform over the orthogonal group.
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            for i in 0..big {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            data.push(gain * v);
        }
    }
    Tensor::new(vec![rows, cols], data).expect("orthogonal shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal_times_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(8, 5), (5, 8), (6, 6)] {
            let w = orthogonal(&mut rng, r, c, 2.0);
            let (outer, inner) = if r >= c { (c, r) } else { (r, c) };
            for a in 0..outer {
                for b in 0..outer {
                    let dot: f64 = (0..inner)
                        .map(|k| {
                            if r >= c {
                                w.get(k, a) * w.get(k, b)
                            } else {
                                w.get(a, k) * w.get(b, k)
                            }
                        })
                        .sum();
                    let want = if a == b { 4.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "{r}x{c} ({a},{b}) {dot}");
                }
            }
        }
    }

    #[test]
    fn hash_tracks_values_and_prefix() {
        let mut s = ParamStore::new();
        s.insert("a.w", Tensor::row(&[1.0, 2.0]));
        s.insert("b.w", Tensor::row(&[3.0]));
        let before = s.content_hash("a.");
        s.get_mut("b.w").unwrap().data_mut()[0] = 4.0;
        assert_eq!(before, s.content_hash("a."));
        s.get_mut("a.w").unwrap().data_mut()[0] = 1.5;
        assert_ne!(before, s.content_hash("a."));
    }
}
