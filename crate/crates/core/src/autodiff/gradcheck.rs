use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, ParamStore, Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Check at most this many coordinates per tensor (all when `None`).
    pub coords_per_param: Option<usize>,
    /// Seed for choosing coordinates when subsampling.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the worst error occurred.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
    /// Smallest |pre-activation| seen by any ReLU in the unperturbed pass.
    pub min_relu_margin: f64,
}

/// Compare tape gradients of the scalar returned by `loss_fn` against central
/// differences, coordinate by coordinate. The store is never mutated.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(
    store: &ParamStore,
    options: &GradCheckOptions,
    loss_fn: F,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    let analytic = tape.param_grads(&grads);
    let min_relu_margin = tape.min_relu_margin();
    drop(tape);

    let eval = |s: &ParamStore| -> Result<f64, AutodiffError> {
        let mut t = Tape::new();
        let v = loss_fn(&mut t, s)?;
        Ok(t.value(v).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut scratch = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
        min_relu_margin,
    };
    let h = options.step;
    for (name, grad) in &analytic {
        if store.is_frozen(name) {
            continue;
        }
        let len = grad.len();
        let coords: Vec<usize> = match options.coords_per_param {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for i in coords {
            let orig = scratch.get(name)?.data()[i];
            scratch.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&scratch)?;
            scratch.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&scratch)?;
            scratch.get_mut(name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Dense, LstmCell, LstmCellState, LstmVars, Tensor};
    use rand::Rng;

    #[test]
    fn linear_model_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::new("lin", 4, 3, Activation::Linear);
        let mut store = ParamStore::new();
        layer.init(&mut store, &mut rng, 1.0);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = grad_check(&store, &GradCheckOptions::default(), |tape, s| {
            let xv = tape.constant(Tensor::matrix(2, 4, x.clone())?);
            let y = layer.forward(tape, s, xv)?;
            let cv = tape.constant(Tensor::matrix(2, 3, c.clone())?);
            let p = tape.mul(y, cv)?;
            Ok(tape.sum(p))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-7, "{report:?}");
        assert_eq!(report.coords_checked, 4 * 3 + 3);
    }

    #[test]
    fn lstm_unrolled_three_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cell = LstmCell::new("enc", 3, 5);
        let mut store = ParamStore::new();
        cell.init(&mut store, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let report = grad_check(&store, &GradCheckOptions::default(), |tape, s| {
            let mut st = LstmVars::from_state(tape, &LstmCellState::zeros(2, 5));
            for x in &xs {
                let xv = tape.constant(Tensor::matrix(2, 3, x.clone())?);
                st = cell.forward(tape, s, xv, st)?;
            }
            let sq = tape.square(st.h);
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
