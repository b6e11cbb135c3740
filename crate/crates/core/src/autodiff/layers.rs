use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{orthogonal, AutodiffError, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Linear => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// `activation(input · weights + bias)` with `weights: [in, out]`, `bias: [1, out]`.
pub fn dense_forward(
    tape: &mut Tape,
    input: Var,
    weights: Var,
    bias: Var,
    activation: Activation,
) -> Result<Var, AutodiffError> {
    let (w_rows, w_cols) = tape.value(weights).dims2();
    if tape.value(input).cols() != w_rows || tape.value(bias).len() != w_cols {
        return Err(AutodiffError::Shape {
            op: "dense_forward",
            lhs: tape.value(input).shape().to_vec(),
            rhs: tape.value(weights).shape().to_vec(),
        });
    }
    let z = tape.matmul(input, weights)?;
    let z = tape.add_row(z, bias)?;
    Ok(activation.apply(tape, z))
}

/// Fully connected layer whose parameters live in a [`ParamStore`] under
/// `{prefix}.w` and `{prefix}.b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub prefix: String,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(prefix: impl Into<String>, input: usize, output: usize, activation: Activation) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            output,
            activation,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R, gain: f64) {
        store.insert(self.weight_name(), orthogonal(rng, self.input, self.output, gain));
        store.insert(self.bias_name(), Tensor::zeros(&[1, self.output]));
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        let w = tape.param(store, &self.weight_name())?;
        let b = tape.param(store, &self.bias_name())?;
        dense_forward(tape, x, w, b, self.activation)
    }
}

/// Batched recurrent state, one row per sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmCellState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }

    pub fn reset_row(&mut self, row: usize) {
        let hidden = self.h.cols();
        self.h.data_mut()[row * hidden..(row + 1) * hidden].fill(0.0);
        self.c.data_mut()[row * hidden..(row + 1) * hidden].fill(0.0);
    }
}

/// Recurrent state as it appears on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub h: Var,
    pub c: Var,
}

impl LstmVars {
    pub fn from_state(tape: &mut Tape, state: &LstmCellState) -> Self {
        Self {
            h: tape.constant(state.h.clone()),
            c: tape.constant(state.c.clone()),
        }
    }

    pub fn to_state(self, tape: &Tape) -> LstmCellState {
        LstmCellState {
            h: tape.value(self.h).clone(),
            c: tape.value(self.c).clone(),
        }
    }
}

/// Single-layer LSTM cell. Gate blocks in the fused weights are ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    pub fn input_weight_name(&self) -> String {
        format!("{}.w_x", self.prefix)
    }

    pub fn hidden_weight_name(&self) -> String {
        format!("{}.w_h", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let h = self.hidden;
        store.insert(self.input_weight_name(), orthogonal(rng, self.input, 4 * h, 1.0));
        store.insert(self.hidden_weight_name(), orthogonal(rng, h, 4 * h, 1.0));
        let mut b = Tensor::zeros(&[1, 4 * h]);
        b.data_mut()[h..2 * h].fill(1.0);
        store.insert(self.bias_name(), b);
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        state: LstmVars,
    ) -> Result<LstmVars, AutodiffError> {
        lstm_cell_forward(tape, store, self, x, state)
    }
}

/// One LSTM step: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn lstm_cell_forward(
    tape: &mut Tape,
    store: &ParamStore,
    cell: &LstmCell,
    x: Var,
    state: LstmVars,
) -> Result<LstmVars, AutodiffError> {
    let h = cell.hidden;
    for v in [state.h, state.c] {
        if tape.value(v).cols() != h || tape.value(v).rows() != tape.value(x).rows() {
            return Err(AutodiffError::Shape {
                op: "lstm_cell_forward",
                lhs: tape.value(x).shape().to_vec(),
                rhs: tape.value(v).shape().to_vec(),
            });
        }
    }
    let wx = tape.param(store, &cell.input_weight_name())?;
    let wh = tape.param(store, &cell.hidden_weight_name())?;
    let b = tape.param(store, &cell.bias_name())?;
    let zx = tape.matmul(x, wx)?;
    let zh = tape.matmul(state.h, wh)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add_row(z, b)?;
    let zi = tape.slice_cols(z, 0, h)?;
    let zf = tape.slice_cols(z, h, 2 * h)?;
    let zg = tape.slice_cols(z, 2 * h, 3 * h)?;
    let zo = tape.slice_cols(z, 3 * h, 4 * h)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok(LstmVars { h: h_next, c: c_next })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_dense(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64], act: Activation) -> Tensor {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(x));
        let w = tape.constant(Tensor::from_rows(w));
        let b = tape.constant(Tensor::row(b));
        let y = dense_forward(&mut tape, x, w, b, act).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn dense_identity_relu_and_tanh_examples() {
        let y = run_dense(
            &[vec![1.0, 2.0]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.0, 0.0],
            Activation::Linear,
        );
        assert_eq!(y.data(), &[1.0, 2.0]);
        let y = run_dense(&[vec![-3.0]], &[vec![1.0]], &[0.0], Activation::Relu);
        assert_eq!(y.data(), &[0.0]);
        let y = run_dense(&[vec![0.5]], &[vec![2.0]], &[0.1], Activation::Tanh);
        // tanh(1.1) = 0.800499021760629...
        assert!((y.data()[0] - 0.800_499_021_760_629_7).abs() < 1e-15);
    }

    #[test]
    fn dense_shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 3]));
        let w = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::zeros(&[1, 2]));
        let err = dense_forward(&mut tape, x, w, b, Activation::Linear).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    fn zero_cell(hidden: usize, input: usize) -> (LstmCell, ParamStore) {
        let cell = LstmCell::new("lstm", input, hidden);
        let mut store = ParamStore::new();
        store.insert(cell.input_weight_name(), Tensor::zeros(&[input, 4 * hidden]));
        store.insert(cell.hidden_weight_name(), Tensor::zeros(&[hidden, 4 * hidden]));
        store.insert(cell.bias_name(), Tensor::zeros(&[1, 4 * hidden]));
        (cell, store)
    }

    #[test]
    fn lstm_all_zero_stays_zero() {
        let (cell, store) = zero_cell(4, 3);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 3]));
        let s = LstmVars::from_state(&mut tape, &LstmCellState::zeros(1, 4));
        let next = cell.forward(&mut tape, &store, x, s).unwrap();
        assert!(tape.value(next.h).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(next.c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let (cell, mut store) = zero_cell(4, 3);
        // forget bias 100, input gate bias -100 so nothing new is written
        let b = store.get_mut(&cell.bias_name()).unwrap();
        b.data_mut()[0..4].fill(-100.0);
        b.data_mut()[4..8].fill(100.0);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[0.3, -0.7, 0.2]));
        let c0 = vec![0.5, -1.2, 2.0, 0.0];
        let state = LstmCellState {
            h: Tensor::row(&[0.1, 0.2, 0.3, 0.4]),
            c: Tensor::row(&c0),
        };
        let s = LstmVars::from_state(&mut tape, &state);
        let next = cell.forward(&mut tape, &store, x, s).unwrap();
        for (a, b) in tape.value(next.c).data().iter().zip(&c0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Scalar LSTM written directly from the gate equations, independent of the tape.
    fn scalar_lstm(x: &[f64], h: &[f64], c: &[f64], wx: &Tensor, wh: &Tensor, b: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |gate: usize, j: usize| {
            let col = gate * n + j;
            let mut z = b.data()[col];
            for (k, xv) in x.iter().enumerate() {
                z += xv * wx.get(k, col);
            }
            for (k, hv) in h.iter().enumerate() {
                z += hv * wh.get(k, col);
            }
            z
        };
        let mut h2 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for j in 0..n {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c2[j] = f * c[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn lstm_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cell = LstmCell::new("lstm", 3, 4);
        let mut store = ParamStore::new();
        cell.init(&mut store, &mut rng);
        let b = store.get_mut(&cell.bias_name()).unwrap();
        for v in b.data_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
        let x = [0.4, -0.9, 0.25];
        let h = [0.1, -0.3, 0.6, -0.2];
        let c = [0.7, 0.0, -1.1, 0.3];
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::row(&x));
        let s = LstmVars::from_state(
            &mut tape,
            &LstmCellState {
                h: Tensor::row(&h),
                c: Tensor::row(&c),
            },
        );
        let next = cell.forward(&mut tape, &store, xv, s).unwrap();
        let (h_want, c_want) = scalar_lstm(
            &x,
            &h,
            &c,
            store.get(&cell.input_weight_name()).unwrap(),
            store.get(&cell.hidden_weight_name()).unwrap(),
            store.get(&cell.bias_name()).unwrap(),
        );
        for (a, b) in tape.value(next.h).data().iter().zip(&h_want) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in tape.value(next.c).data().iter().zip(&c_want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(tape.value(next.h).data().iter().all(|v| v.abs() <= 1.0));
    }
}
