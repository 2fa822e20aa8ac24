use serde::{Deserialize, Serialize};

use super::{Init, NeuralError, ParamId, ParamStore, Real, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    /// Row-wise softmax.
    Softmax,
}

/// Time-distributed fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub act: Activation,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        seed: u64,
        name: &str,
        input: usize,
        output: usize,
        act: Activation,
    ) -> Self {
        Self::with_bias(store, seed, name, input, output, act, 0.0)
    }

    /// Like `new`, with every bias starting at `bias`.
    pub fn with_bias<R: Real>(
        store: &mut ParamStore<R>,
        seed: u64,
        name: &str,
        input: usize,
        output: usize,
        act: Activation,
        bias: f64,
    ) -> Self {
        let w = store.add_init(
            seed,
            name,
            "kernel",
            vec![input, output],
            Init::GlorotUniform,
        );
        let init = if bias == 0.0 { Init::Zeros } else { Init::Constant(bias) };
        let b = store.add_init(seed, name, "bias", vec![output], init);
        Self {
            w,
            b,
            act,
            input,
            output,
        }
    }

    pub fn forward<R: Real>(
        &self,
        tape: &mut Tape<R>,
        store: &ParamStore<R>,
        x: Var,
    ) -> Result<Var, NeuralError> {
        dense_forward(tape, store, x, self)
    }
}

/// Single-direction LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        seed: u64,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let w = store.add_init(
            seed,
            name,
            "kernel",
            vec![input, 4 * hidden],
            Init::GlorotUniform,
        );
        let u = store.add_init(
            seed,
            name,
            "recurrent_kernel",
            vec![hidden, 4 * hidden],
            Init::Orthogonal,
        );
        let b = store.add_init(seed, name, "bias", vec![4 * hidden], Init::LstmBias);
        Self {
            w,
            u,
            b,
            input,
            hidden,
        }
    }
}

/// Forward and backward LSTMs whose outputs are concatenated per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Blstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl Blstm {
    pub fn new<R: Real>(
        store: &mut ParamStore<R>,
        seed: u64,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        Self {
            fwd: Lstm::new(store, seed, &format!("{name}.fwd"), input, hidden),
            bwd: Lstm::new(store, seed, &format!("{name}.bwd"), input, hidden),
        }
    }

    pub fn output(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward<R: Real>(
        &self,
        tape: &mut Tape<R>,
        store: &ParamStore<R>,
        x: Var,
    ) -> Result<Var, NeuralError> {
        blstm_forward(tape, store, x, &self.fwd, &self.bwd)
    }
}

/// `act(x W + b)` applied to every row.
pub fn dense_forward<R: Real>(
    tape: &mut Tape<R>,
    store: &ParamStore<R>,
    x: Var,
    p: &Dense,
) -> Result<Var, NeuralError> {
    let w = tape.param(store, p.w);
    let b = tape.param(store, p.b);
    let xw = tape.matmul(x, w)?;
    let z = tape.add_bias(xw, b)?;
    tape.activation(z, p.act)
}

/// LSTM over time-major `x`; `reverse` runs time backwards while keeping the
/// output in the original order. Initial hidden and cell states are zero.
pub fn lstm_forward<R: Real>(
    tape: &mut Tape<R>,
    store: &ParamStore<R>,
    x: Var,
    p: &Lstm,
    reverse: bool,
) -> Result<Var, NeuralError> {
    let w = tape.param(store, p.w);
    let u = tape.param(store, p.u);
    let b = tape.param(store, p.b);
    tape.lstm(x, w, u, b, reverse)
}

pub fn blstm_forward<R: Real>(
    tape: &mut Tape<R>,
    store: &ParamStore<R>,
    x: Var,
    fwd: &Lstm,
    bwd: &Lstm,
) -> Result<Var, NeuralError> {
    if fwd.input != bwd.input {
        return Err(NeuralError::Shape(format!(
            "directions take {} and {} inputs",
            fwd.input, bwd.input
        )));
    }
    let f = lstm_forward(tape, store, x, fwd, false)?;
    let b = lstm_forward(tape, store, x, bwd, true)?;
    tape.concat(f, b)
}

pub fn concat_features<R: Real>(tape: &mut Tape<R>, a: Var, b: Var) -> Result<Var, NeuralError> {
    tape.concat(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{backward, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn dense_examples() {
        let mut store = ParamStore::<f64>::new();
        let d = Dense::new(&mut store, 0, "d", 2, 2, Activation::Linear);
        store.get_mut(d.w).value = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut tape = Tape::new(1);
        let x = tape.input(Tensor::matrix(3, 2, vec![1.0, -2.0, 3.0, 4.0, 0.5, 0.0]).unwrap());
        let y = d.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());

        let r = tape.input(Tensor::matrix(1, 2, vec![-1.0, 2.0]).unwrap());
        let r = tape.activation(r, Activation::Relu).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
        let s = tape.input(Tensor::matrix(1, 4, vec![0.3; 4]).unwrap());
        let s = tape.activation(s, Activation::Softmax).unwrap();
        assert!(tape
            .value(s)
            .data()
            .iter()
            .all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_rows_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new(1);
        let x = tape.input(rand_tensor(&mut rng, vec![50, 7], 30.0));
        let s = tape.activation(x, Activation::Softmax).unwrap();
        for row in tape.value(s).data().chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn zero_lstm_gives_zero_states() {
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::new(&mut store, 0, "l", 3, 5);
        for id in [l.w, l.u, l.b] {
            store
                .get_mut(id)
                .value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new(1);
        let x = tape.input(rand_tensor(&mut rng, vec![7, 3], 1.0));
        let h = lstm_forward(&mut tape, &store, x, &l, false).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
    }

    struct Cell {
        w: Vec<f64>,
        u: Vec<f64>,
        b: Vec<f64>,
        input: usize,
        hidden: usize,
    }

    /// Scalar loop-by-loop reference cell.
    fn reference_step(c: &Cell, x: &[f64], h: &[f64], cs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let n = c.hidden;
        let pre = |gate: usize, j: usize| {
            let col = gate * n + j;
            let mut z = c.b[col];
            for k in 0..c.input {
                z += x[k] * c.w[k * 4 * n + col];
            }
            for k in 0..n {
                z += h[k] * c.u[k * 4 * n + col];
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
            c2[j] = f * cs[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn lstm_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (input, hidden, steps, batch) = (4, 3, 3, 2);
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::new(&mut store, 9, "l", input, hidden);
        store.get_mut(l.b).value = rand_tensor(&mut rng, vec![4 * hidden], 0.5);
        let cell = Cell {
            w: store.value(l.w).to_f64(),
            u: store.value(l.u).to_f64(),
            b: store.value(l.b).to_f64(),
            input,
            hidden,
        };
        let x = rand_tensor(&mut rng, vec![steps * batch, input], 1.0);
        for reverse in [false, true] {
            let mut tape = Tape::new(batch);
            let xv = tape.input(x.clone());
            let hv = lstm_forward(&mut tape, &store, xv, &l, reverse).unwrap();
            let got = tape.value(hv).data().to_vec();
            for b in 0..batch {
                let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
                let order: Vec<usize> = if reverse {
                    (0..steps).rev().collect()
                } else {
                    (0..steps).collect()
                };
                for t in order {
                    let row = t * batch + b;
                    let xr = &x.data()[row * input..(row + 1) * input];
                    (h, c) = reference_step(&cell, xr, &h, &c);
                    for j in 0..hidden {
                        assert!((got[row * hidden + j] - h[j]).abs() < 1e-6);
                    }
                }
            }
        }
        // a one-step sequence is a single cell step
        let mut tape = Tape::new(1);
        let x1 = rand_tensor(&mut rng, vec![1, input], 1.0);
        let xv = tape.input(x1.clone());
        let hv = lstm_forward(&mut tape, &store, xv, &l, false).unwrap();
        let (h, _) = reference_step(&cell, x1.data(), &[0.0; 3], &[0.0; 3]);
        for (a, b) in tape.value(hv).data().iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn blstm_shapes_and_symmetry() {
        let mut store = ParamStore::<f64>::new();
        let bl = Blstm::new(&mut store, 4, "bl", 3, 256);
        assert_eq!(bl.output(), 512);

        // shared weights and a palindromic input
        let mut store = ParamStore::<f64>::new();
        let l = Lstm::new(&mut store, 5, "l", 2, 3);
        let rows = [[0.1, 0.5], [0.7, -0.2], [0.3, 0.3], [0.7, -0.2], [0.1, 0.5]];
        let x = Tensor::matrix(5, 2, rows.iter().flatten().copied().collect()).unwrap();
        let mut tape = Tape::new(1);
        let xv = tape.input(x);
        let out = blstm_forward(&mut tape, &store, xv, &l, &l).unwrap();
        let o = tape.value(out).data();
        for t in 0..5 {
            for j in 0..3 {
                assert!((o[t * 6 + j] - o[(4 - t) * 6 + 3 + j]).abs() < 1e-12);
            }
        }

        let mut tape = Tape::new(1);
        for id in (0..store.len()).map(crate::neural::ParamId) {
            store
                .get_mut(id)
                .value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = 0.0);
        }
        let xv = tape.input(Tensor::zeros(vec![4, 2]));
        let out = blstm_forward(&mut tape, &store, xv, &l, &l).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blstm_reversal_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::<f64>::new();
        let bl = Blstm::new(&mut store, 6, "bl", 3, 4);
        let (steps, h) = (6, 4);
        let x = rand_tensor(&mut rng, vec![steps, 3], 1.0);
        let mut xr = Vec::new();
        for t in (0..steps).rev() {
            xr.extend_from_slice(&x.data()[t * 3..(t + 1) * 3]);
        }
        let mut tape = Tape::new(1);
        let a = tape.input(x);
        let out = bl.forward(&mut tape, &store, a).unwrap();
        let b = tape.input(Tensor::matrix(steps, 3, xr).unwrap());
        let swapped = blstm_forward(&mut tape, &store, b, &bl.bwd, &bl.fwd).unwrap();
        let (o, s) = (tape.value(out).data(), tape.value(swapped).data());
        for t in 0..steps {
            let r = steps - 1 - t;
            for j in 0..h {
                assert!((s[r * 2 * h + j] - o[t * 2 * h + h + j]).abs() < 1e-12);
                assert!((s[r * 2 * h + h + j] - o[t * 2 * h + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_examples() {
        let mut tape = Tape::<f64>::new(1);
        let a = tape.input(Tensor::zeros(vec![149, 64]));
        let b = tape.input(Tensor::matrix(149, 64, vec![1.0; 149 * 64]).unwrap());
        let c = concat_features(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(c).dims2(), (149, 128));
        assert!(tape.value(c).data()[..64].iter().all(|&v| v == 0.0));
        let e = tape.input(Tensor::matrix(149, 0, vec![]).unwrap());
        let c = concat_features(&mut tape, b, e).unwrap();
        assert_eq!(tape.value(c).data(), tape.value(b).data());
        let short = tape.input(Tensor::zeros(vec![10, 3]));
        assert!(concat_features(&mut tape, a, short).is_err());
    }

    #[test]
    fn linear_and_relu_gradients() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add(
            "lin",
            "kernel",
            Tensor::matrix(3, 1, vec![0.5, -1.0, 2.0]).unwrap(),
        );
        let mut tape = Tape::new(1);
        let x = tape.input(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap());
        let wv = tape.param(&store, w);
        let y = tape.matmul(x, wv).unwrap();
        let loss = tape.sum(y).unwrap();
        let g = backward(&tape, loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.0, 2.0, 7.0]);

        let b = store.add(
            "relu",
            "bias",
            Tensor::new(vec![2], vec![-3.0, 1.0]).unwrap(),
        );
        let mut tape = Tape::new(1);
        let x = tape.input(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let bv = tape.param(&store, b);
        let z = tape.add_bias(x, bv).unwrap();
        let r = tape.activation(z, Activation::Relu).unwrap();
        let loss = tape.sum(r).unwrap();
        let g = backward(&tape, loss).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_errors() {
        let mut t1 = Tape::<f64>::new(1);
        let t2 = Tape::<f64>::new(1);
        let x = t1.input(Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
        assert!(matches!(backward(&t2, x), Err(NeuralError::ForeignVar)));
        assert!(matches!(backward(&t1, x), Err(NeuralError::NotScalar(_))));
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", "kernel", Tensor::matrix(1, 1, vec![3.0]).unwrap());
        let mut tape = Tape::new(1);
        let x = tape.input(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let a = tape.param(&store, w);
        let y1 = tape.matmul(x, a).unwrap();
        let b = tape.param(&store, w);
        let y2 = tape.matmul(y1, b).unwrap();
        let loss = tape.sum(y2).unwrap();
        // loss = x w^2, d/dw = 2 x w
        assert_eq!(
            backward(&tape, loss).unwrap().get(w).unwrap().data(),
            &[12.0]
        );
    }
}
