//! Clipped surrogate and clipped value losses, as scalar references and as
//! tape expressions for training.

use crate::autodiff::{Tape, Tensor, Var};

use super::MappoError;

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1-ε, 1+ε)A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Per-sample clipped value loss.
pub fn clipped_value_loss(v_new: f64, v_old: f64, target: f64, eps: f64) -> f64 {
    let clipped = v_new.clamp(v_old - eps, v_old + eps);
    (v_new - target).powi(2).max((clipped - target).powi(2))
}

/// `-mean(min(ρA, clip(ρ)A)) - c·mean(entropy)`, to be minimized.
pub fn actor_loss(
    log_prob_new: &[f64],
    log_prob_old: &[f64],
    advantages: &[f64],
    eps: f64,
    entropy: &[f64],
    entropy_coef: f64,
) -> Result<f64, MappoError> {
    let n = log_prob_new.len();
    if log_prob_old.len() != n || advantages.len() != n || n == 0 {
        return Err(MappoError::Contract("actor_loss: mismatched or empty inputs".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let ratio = (log_prob_new[i] - log_prob_old[i]).exp();
        if !ratio.is_finite() {
            return Err(MappoError::Training(format!(
                "non-finite probability ratio at sample {i}"
            )));
        }
        total += clipped_objective(ratio, advantages[i], eps);
    }
    let ent = if entropy.is_empty() {
        0.0
    } else {
        entropy.iter().sum::<f64>() / entropy.len() as f64
    };
    Ok(-total / n as f64 - entropy_coef * ent)
}

pub fn critic_loss(v_new: &[f64], v_old: &[f64], targets: &[f64], eps: f64) -> Result<f64, MappoError> {
    let n = v_new.len();
    if v_old.len() != n || targets.len() != n || n == 0 {
        return Err(MappoError::Contract("critic_loss: mismatched or empty inputs".into()));
    }
    Ok((0..n)
        .map(|i| clipped_value_loss(v_new[i], v_old[i], targets[i], eps))
        .sum::<f64>()
        / n as f64)
}

fn column(values: &[f64]) -> Tensor {
    Tensor::new(vec![values.len(), 1], values.to_vec()).expect("column")
}

/// Tape form of [`actor_loss`]. `log_prob_new` is `[B, 1]`, `entropy` `[1, 1]`.
pub fn actor_loss_on_tape(
    tape: &mut Tape,
    log_prob_new: Var,
    log_prob_old: &[f64],
    advantages: &[f64],
    eps: f64,
    entropy: Var,
    entropy_coef: f64,
) -> Result<Var, MappoError> {
    let old = tape.constant(column(log_prob_old));
    let adv = tape.constant(column(advantages));
    let diff = tape.sub(log_prob_new, old)?;
    let ratio = tape.exp(diff);
    if let Some(i) = tape.value(ratio).data().iter().position(|r| !r.is_finite()) {
        return Err(MappoError::Training(format!(
            "non-finite probability ratio at sample {i}"
        )));
    }
    let unclipped = tape.mul(ratio, adv)?;
    let r_clip = tape.clamp(ratio, 1.0 - eps, 1.0 + eps);
    let clipped = tape.mul(r_clip, adv)?;
    let obj = tape.minimum(unclipped, clipped)?;
    let m = tape.mean(obj);
    let surrogate = tape.scale(m, -1.0);
    let e = tape.scale(entropy, -entropy_coef);
    Ok(tape.add(surrogate, e)?)
}

/// Tape form of [`critic_loss`]. `v_new` is `[B, 1]`.
pub fn critic_loss_on_tape(
    tape: &mut Tape,
    v_new: Var,
    v_old: &[f64],
    targets: &[f64],
    eps: f64,
) -> Result<Var, MappoError> {
    let lo: Vec<f64> = v_old.iter().map(|v| v - eps).collect();
    let hi: Vec<f64> = v_old.iter().map(|v| v + eps).collect();
    let target = tape.constant(column(targets));
    let d = tape.sub(v_new, target)?;
    let unclipped = tape.square(d);
    let vc = tape.clamp_between(v_new, &lo, &hi)?;
    let dc = tape.sub(vc, target)?;
    let clipped = tape.square(dc);
    let worst = tape.maximum(unclipped, clipped)?;
    Ok(tape.mean(worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn surrogate_examples() {
        assert_eq!(clipped_objective(1.0, 2.0, 0.2), 2.0);
        assert_eq!(clipped_objective(2.0, 1.0, 0.2), 1.2);
        assert_eq!(clipped_objective(0.5, -1.0, 0.2), -0.8);
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(clipped_value_loss(0.3, 0.3, 0.3, 0.2), 0.0);
        assert_eq!(clipped_value_loss(1.0, 0.0, 0.0, 0.2), 1.0);
        assert!((clipped_value_loss(0.1, 0.0, 1.0, 0.2) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn tape_losses_match_scalar_references() {
        let lp_new = [0.1, -0.4, 0.3, -2.0];
        let lp_old = [0.0, 0.0, 0.5, -1.0];
        let adv = [1.0, -2.0, 0.5, 3.0];
        let mut tape = Tape::new();
        let v = tape.constant(column(&lp_new));
        let ent = tape.constant(Tensor::scalar(1.5));
        let l = actor_loss_on_tape(&mut tape, v, &lp_old, &adv, 0.2, ent, 0.01).unwrap();
        let want = actor_loss(&lp_new, &lp_old, &adv, 0.2, &[1.5], 0.01).unwrap();
        assert!((tape.value(l).item() - want).abs() < 1e-14);

        let (vn, vo, tg) = ([0.5, -1.0, 2.0], [0.0, -0.9, 2.5], [1.0, 0.0, 2.2]);
        let mut tape = Tape::new();
        let v = tape.constant(column(&vn));
        let l = critic_loss_on_tape(&mut tape, v, &vo, &tg, 0.2).unwrap();
        assert!((tape.value(l).item() - critic_loss(&vn, &vo, &tg, 0.2).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn nan_ratio_is_a_training_error() {
        assert!(matches!(
            actor_loss(&[f64::NAN], &[0.0], &[1.0], 0.2, &[], 0.0),
            Err(MappoError::Training(_))
        ));
    }

    proptest! {
        #[test]
        fn surrogate_never_exceeds_either_branch(r in 0.0f64..3.0, a in -5.0f64..5.0, eps in 0.05f64..0.5) {
            let obj = clipped_objective(r, a, eps);
            prop_assert!(obj <= r * a + 1e-15);
            prop_assert!(obj <= r.clamp(1.0 - eps, 1.0 + eps) * a + 1e-15);
        }

        #[test]
        fn value_loss_dominates_each_branch(vn in -3.0f64..3.0, vo in -3.0f64..3.0, t in -3.0f64..3.0) {
            let l = clipped_value_loss(vn, vo, t, 0.2);
            prop_assert!(l >= (vn - t).powi(2));
            prop_assert!(l >= (vn.clamp(vo - 0.2, vo + 0.2) - t).powi(2));
        }
    }
}
