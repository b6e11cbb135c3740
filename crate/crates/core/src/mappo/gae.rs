use serde::{Deserialize, Serialize};

use super::MappoError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBatch {
    pub advantages: Vec<f64>,
    /// Return targets `A_t + V_t`, computed before any normalization.
    pub returns: Vec<f64>,
    pub normalized: bool,
}

/// Generalized advantage estimation over one trajectory.
///
/// `values` carries one bootstrap entry past the last step; `dones[t]` marks
/// that the episode ended with step `t`, cutting both the bootstrap and the
/// advantage recursion.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<AdvantageBatch, MappoError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(MappoError::Contract(format!(
            "gae: {n} rewards need {} values and {n} dones, got {} and {}",
            n + 1,
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        advantages[t] = next;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(AdvantageBatch {
        advantages,
        returns,
        normalized: false,
    })
}

/// Center and scale to unit (population) standard deviation. A batch with
/// zero spread is only centered.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a -= mean;
        if std > 0.0 {
            *a /= std;
        }
    }
}

impl AdvantageBatch {
    pub fn normalize(&mut self) {
        normalize_advantages(&mut self.advantages);
        self.normalized = true;
    }
}
