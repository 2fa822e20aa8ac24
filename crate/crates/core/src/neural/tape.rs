use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::layers::Activation;
use super::lstm::{self, LstmCache, LstmDims};
use super::{Gradients, NeuralError, ParamId, ParamStore, Real, Tensor};
use crate::losses::ctc_loss;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone)]
enum Op<R> {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    AddBias(usize, usize),
    Act(usize, Activation),
    Concat(usize, usize),
    Lstm {
        x: usize,
        w: usize,
        u: usize,
        b: usize,
        hidden: usize,
        reverse: bool,
        cache: Box<LstmCache<R>>,
    },
    Add(usize, usize),
    Scale(usize, R),
    /// Scalar whose gradient with respect to `input` was computed forward.
    Loss {
        input: usize,
        grad: Vec<R>,
    },
}

#[derive(Debug, Clone)]
struct Node<R> {
    value: Tensor<R>,
    op: Op<R>,
    /// Whether any trainable parameter lies upstream.
    needs: bool,
}

/// Per-sample outcome of a batched CTC evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcBatch {
    /// `+inf` for infeasible targets.
    pub nll: Vec<f64>,
    pub infeasible: usize,
}

/// Record of one forward pass over a mini-batch of `batch` sequences.
#[derive(Debug)]
pub struct Tape<R> {
    id: u64,
    batch: usize,
    nodes: Vec<Node<R>>,
    params: HashMap<ParamId, usize>,
}

impl<R: Real> Tape<R> {
    pub fn new(batch: usize) -> Self {
        assert!(batch >= 1, "batch must be positive");
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            batch,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>) -> Var {
        let n = |i: &usize| self.nodes[*i].needs;
        let needs = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Concat(a, b) | Op::Add(a, b) => n(a) || n(b),
            Op::Act(a, _) | Op::Scale(a, _) => n(a),
            Op::Lstm { x, w, u, b, .. } => [x, w, u, b].into_iter().any(n),
            Op::Loss { input, .. } => n(input),
        };
        self.nodes.push(Node { value, op, needs });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize, NeuralError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(NeuralError::ForeignVar);
        }
        Ok(v.idx)
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.idx].value
    }

    pub fn input(&mut self, t: Tensor<R>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Places a parameter on the tape once; frozen parameters become constants.
    pub fn param(&mut self, store: &ParamStore<R>, id: ParamId) -> Var {
        if let Some(&i) = self.params.get(&id) {
            return Var {
                tape: self.id,
                idx: i,
            };
        }
        let p = store.get(id);
        let op = if p.trainable { Op::Param(id) } else { Op::Leaf };
        let v = self.push(p.value.clone(), op);
        self.params.insert(id, v.idx);
        v
    }

    /// `x W` for `x: rows x in`, `W: in x out`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var, NeuralError> {
        let (xi, wi) = (self.idx(x)?, self.idx(w)?);
        let (rows, k) = self.nodes[xi].value.dims2();
        let ws = self.nodes[wi].value.shape().to_vec();
        if ws.len() != 2 || ws[0] != k {
            return Err(NeuralError::Shape(format!("{rows}x{k} times {ws:?}")));
        }
        let n = ws[1];
        let mut out = vec![R::zero(); rows * n];
        R::gemm(
            rows,
            k,
            n,
            self.nodes[xi].value.data(),
            false,
            self.nodes[wi].value.data(),
            false,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::matrix(rows, n, out)?, Op::MatMul(xi, wi)))
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NeuralError> {
        let (xi, bi) = (self.idx(x)?, self.idx(b)?);
        let (rows, cols) = self.nodes[xi].value.dims2();
        if self.nodes[bi].value.len() != cols {
            return Err(NeuralError::Shape(format!(
                "bias of {} for {cols} columns",
                self.nodes[bi].value.len()
            )));
        }
        let mut out = self.nodes[xi].value.data().to_vec();
        let bias = self.nodes[bi].value.data();
        for row in out.chunks_mut(cols) {
            row.iter_mut().zip(bias).for_each(|(o, &b)| *o += b);
        }
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::AddBias(xi, bi)))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var, NeuralError> {
        let xi = self.idx(x)?;
        let (rows, cols) = self.nodes[xi].value.dims2();
        let mut out = self.nodes[xi].value.data().to_vec();
        match act {
            Activation::Linear => {}
            Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(R::zero())),
            Activation::Sigmoid => out
                .iter_mut()
                .for_each(|v| *v = R::one() / (R::one() + (-*v).exp())),
            Activation::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Softmax => {
                for row in out.chunks_mut(cols) {
                    let m = row.iter().fold(R::neg_infinity(), |a, &b| a.max(b));
                    let mut sum = R::zero();
                    for v in row.iter_mut() {
                        *v = (*v - m).exp();
                        sum += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::Act(xi, act)))
    }

    /// Per-row feature concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (ra, ca) = self.nodes[ai].value.dims2();
        let (rb, cb) = self.nodes[bi].value.dims2();
        if ra != rb {
            return Err(NeuralError::Shape(format!("{ra} rows vs {rb} rows")));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        let (da, db) = (self.nodes[ai].value.data(), self.nodes[bi].value.data());
        for r in 0..ra {
            out.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        Ok(self.push(Tensor::matrix(ra, ca + cb, out)?, Op::Concat(ai, bi)))
    }

    /// One LSTM direction over time-major `x`; output rows keep time order.
    pub fn lstm(
        &mut self,
        x: Var,
        w: Var,
        u: Var,
        b: Var,
        reverse: bool,
    ) -> Result<Var, NeuralError> {
        let (xi, wi, ui, bi) = (self.idx(x)?, self.idx(w)?, self.idx(u)?, self.idx(b)?);
        let (rows, input) = self.nodes[xi].value.dims2();
        let ws = self.nodes[wi].value.shape().to_vec();
        let us = self.nodes[ui].value.shape().to_vec();
        if ws.len() != 2 || ws[0] != input || ws[1] % 4 != 0 {
            return Err(NeuralError::Shape(format!(
                "input {input} with kernel {ws:?}"
            )));
        }
        let hidden = ws[1] / 4;
        if us != [hidden, 4 * hidden] || self.nodes[bi].value.len() != 4 * hidden {
            return Err(NeuralError::Shape(format!(
                "recurrent kernel {us:?} for hidden {hidden}"
            )));
        }
        if rows % self.batch != 0 || rows == 0 {
            return Err(NeuralError::Shape(format!(
                "{rows} rows for batch {}",
                self.batch
            )));
        }
        let dims = LstmDims {
            steps: rows / self.batch,
            batch: self.batch,
            input,
            hidden,
            reverse,
        };
        let (hs, cache) = lstm::forward(
            &dims,
            self.nodes[xi].value.data(),
            self.nodes[wi].value.data(),
            self.nodes[ui].value.data(),
            self.nodes[bi].value.data(),
        );
        let op = Op::Lstm {
            x: xi,
            w: wi,
            u: ui,
            b: bi,
            hidden,
            reverse,
            cache: Box::new(cache),
        };
        Ok(self.push(Tensor::matrix(rows, hidden, hs)?, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if va.shape() != vb.shape() {
            return Err(NeuralError::Shape(format!(
                "{:?} + {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let out: Vec<R> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(va.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Add(ai, bi)))
    }

    pub fn scale(&mut self, a: Var, s: R) -> Result<Var, NeuralError> {
        let ai = self.idx(a)?;
        let va = &self.nodes[ai].value;
        let t = Tensor::new(
            va.shape().to_vec(),
            va.data().iter().map(|&x| x * s).collect(),
        )?;
        Ok(self.push(t, Op::Scale(ai, s)))
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, NeuralError> {
        let ai = self.idx(a)?;
        let va = &self.nodes[ai].value;
        let total = va.data().iter().copied().sum();
        let grad = vec![R::one(); va.len()];
        Ok(self.push(Tensor::scalar(total), Op::Loss { input: ai, grad }))
    }

    /// Mean squared error against `target`. With `row_weights`, rows are
    /// weighted and the mean is over weighted cells.
    pub fn mse(
        &mut self,
        y: Var,
        target: &[R],
        row_weights: Option<&[R]>,
    ) -> Result<Var, NeuralError> {
        let yi = self.idx(y)?;
        let (rows, cols) = self.nodes[yi].value.dims2();
        let yv = self.nodes[yi].value.data();
        if target.len() != yv.len() || row_weights.is_some_and(|w| w.len() != rows) {
            return Err(NeuralError::Shape(format!(
                "prediction {rows}x{cols} vs target of {}",
                target.len()
            )));
        }
        let weight = |r: usize| row_weights.map_or(R::one(), |w| w[r]);
        let denom: R = (0..rows).map(weight).sum::<R>() * R::of(cols as f64);
        let mut total = R::zero();
        let mut grad = vec![R::zero(); yv.len()];
        if denom > R::zero() {
            let two = R::of(2.0);
            for r in 0..rows {
                let w = weight(r);
                for c in 0..cols {
                    let i = r * cols + c;
                    let d = yv[i] - target[i];
                    total += w * d * d;
                    grad[i] = two * w * d / denom;
                }
            }
            total /= denom;
        }
        Ok(self.push(Tensor::scalar(total), Op::Loss { input: yi, grad }))
    }

    /// Mean CTC loss over the feasible sequences of the batch. `logits` has
    /// `classes` columns with the blank last; one target per batch element.
    pub fn ctc(
        &mut self,
        logits: Var,
        targets: &[Vec<usize>],
    ) -> Result<(Var, CtcBatch), NeuralError> {
        let li = self.idx(logits)?;
        let (rows, classes) = self.nodes[li].value.dims2();
        let bs = self.batch;
        if targets.len() != bs {
            return Err(NeuralError::Shape(format!(
                "{} targets for batch {bs}",
                targets.len()
            )));
        }
        let steps = rows / bs;
        let data = self.nodes[li].value.data();
        let mut nll = Vec::with_capacity(bs);
        let mut per_sample = Vec::with_capacity(bs);
        for (b, target) in targets.iter().enumerate() {
            let mut seq = Vec::with_capacity(steps * classes);
            for t in 0..steps {
                let r = t * bs + b;
                seq.extend(data[r * classes..(r + 1) * classes].iter().map(|v| v.f64()));
            }
            let out = ctc_loss(&seq, steps, classes, target)?;
            nll.push(out.nll);
            per_sample.push(out);
        }
        let feasible = per_sample.iter().filter(|o| o.feasible).count();
        let infeasible = bs - feasible;
        if infeasible > 0 {
            log::warn!("{infeasible} of {bs} CTC targets have no valid alignment; skipped");
        }
        let mut grad = vec![R::zero(); rows * classes];
        let mut total = 0.0;
        if feasible > 0 {
            let scale = 1.0 / feasible as f64;
            for (b, out) in per_sample.iter().enumerate().filter(|(_, o)| o.feasible) {
                total += out.nll * scale;
                for t in 0..steps {
                    let r = t * bs + b;
                    for k in 0..classes {
                        grad[r * classes + k] = R::of(out.grad[t * classes + k] * scale);
                    }
                }
            }
        }
        let v = self.push(Tensor::scalar(R::of(total)), Op::Loss { input: li, grad });
        Ok((v, CtcBatch { nll, infeasible }))
    }
}

fn acc<R: Real>(
    nodes: &[Node<R>],
    grads: &mut [Option<Vec<R>>],
    idx: usize,
    len: usize,
    f: impl FnOnce(&mut [R]),
) {
    if len == 0 || !nodes[idx].needs {
        return;
    }
    let g = grads[idx].get_or_insert_with(|| vec![R::zero(); len]);
    f(g);
}

/// Reverse pass from scalar `loss`, visiting recorded ops newest first.
pub fn backward<R: Real>(tape: &Tape<R>, loss: Var) -> Result<Gradients<R>, NeuralError> {
    let li = tape.idx(loss)?;
    let shape = tape.nodes[li].value.shape();
    if tape.nodes[li].value.len() != 1 {
        return Err(NeuralError::NotScalar(shape.to_vec()));
    }
    let n = tape.nodes.len();
    let mut grads: Vec<Option<Vec<R>>> = vec![None; n];
    grads[li] = Some(vec![R::one()]);
    let mut out = Gradients::empty(0);
    for idx in (0..=li).rev() {
        let Some(g) = grads[idx].take() else { continue };
        let node = &tape.nodes[idx];
        if !node.needs {
            continue;
        }
        let len_of = |i: usize| tape.nodes[i].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => out.accumulate(*id, node.value.shape(), &g),
            Op::MatMul(xi, wi) => {
                let (rows, k) = tape.nodes[*xi].value.dims2();
                let ncols = tape.nodes[*wi].value.shape()[1];
                let x = tape.nodes[*xi].value.data();
                let w = tape.nodes[*wi].value.data();
                acc(&tape.nodes, &mut grads, *xi, rows * k, |dx| {
                    R::gemm(rows, ncols, k, &g, false, w, true, dx, true)
                });
                acc(&tape.nodes, &mut grads, *wi, k * ncols, |dw| {
                    R::gemm(k, rows, ncols, x, true, &g, false, dw, true)
                });
            }
            Op::AddBias(xi, bi) => {
                let cols = len_of(*bi);
                acc(&tape.nodes, &mut grads, *xi, g.len(), |dx| {
                    dx.iter_mut().zip(&g).for_each(|(a, &b)| *a += b)
                });
                acc(&tape.nodes, &mut grads, *bi, cols, |db| {
                    for row in g.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                    }
                });
            }
            Op::Act(xi, act) => {
                let y = node.value.data();
                let (_, cols) = node.value.dims2();
                acc(&tape.nodes, &mut grads, *xi, g.len(), |dx| match act {
                    Activation::Linear => dx.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    Activation::Relu => {
                        for ((a, &b), &yv) in dx.iter_mut().zip(&g).zip(y) {
                            if yv > R::zero() {
                                *a += b;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        for ((a, &b), &yv) in dx.iter_mut().zip(&g).zip(y) {
                            *a += b * yv * (R::one() - yv);
                        }
                    }
                    Activation::Tanh => {
                        for ((a, &b), &yv) in dx.iter_mut().zip(&g).zip(y) {
                            *a += b * (R::one() - yv * yv);
                        }
                    }
                    Activation::Softmax => {
                        for ((dr, gr), yr) in
                            dx.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols))
                        {
                            let dot: R = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                            for ((a, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                                *a += yv * (gv - dot);
                            }
                        }
                    }
                });
            }
            Op::Concat(ai, bi) => {
                let (_, ca) = tape.nodes[*ai].value.dims2();
                let (_, cb) = tape.nodes[*bi].value.dims2();
                acc(&tape.nodes, &mut grads, *ai, len_of(*ai), |da| {
                    for (r, row) in g.chunks(ca + cb).enumerate() {
                        da[r * ca..(r + 1) * ca]
                            .iter_mut()
                            .zip(&row[..ca])
                            .for_each(|(a, &b)| *a += b);
                    }
                });
                acc(&tape.nodes, &mut grads, *bi, len_of(*bi), |db| {
                    for (r, row) in g.chunks(ca + cb).enumerate() {
                        db[r * cb..(r + 1) * cb]
                            .iter_mut()
                            .zip(&row[ca..])
                            .for_each(|(a, &b)| *a += b);
                    }
                });
            }
            Op::Lstm {
                x,
                w,
                u,
                b,
                hidden,
                reverse,
                cache,
            } => {
                let (rows, input) = tape.nodes[*x].value.dims2();
                let dims = LstmDims {
                    steps: rows / tape.batch,
                    batch: tape.batch,
                    input,
                    hidden: *hidden,
                    reverse: *reverse,
                };
                let lg = lstm::backward(
                    &dims,
                    tape.nodes[*x].value.data(),
                    tape.nodes[*w].value.data(),
                    tape.nodes[*u].value.data(),
                    node.value.data(),
                    cache,
                    &g,
                    tape.nodes[*x].needs,
                );
                for (i, part) in [(*x, lg.dx), (*w, lg.dw), (*u, lg.du), (*b, lg.db)] {
                    acc(&tape.nodes, &mut grads, i, part.len(), |d| {
                        d.iter_mut().zip(&part).for_each(|(a, &v)| *a += v)
                    });
                }
            }
            Op::Add(ai, bi) => {
                for i in [*ai, *bi] {
                    acc(&tape.nodes, &mut grads, i, g.len(), |d| {
                        d.iter_mut().zip(&g).for_each(|(a, &v)| *a += v)
                    });
                }
            }
            Op::Scale(ai, s) => {
                acc(&tape.nodes, &mut grads, *ai, g.len(), |d| {
                    d.iter_mut().zip(&g).for_each(|(a, &v)| *a += v * *s)
                });
            }
            Op::Loss { input, grad } => {
                let up = g[0];
                acc(&tape.nodes, &mut grads, *input, grad.len(), |d| {
                    d.iter_mut().zip(grad).for_each(|(a, &v)| *a += v * up)
                });
            }
        }
    }
    if let Some((id, _)) = out.iter().find(|(_, g)| !g.all_finite()) {
        return Err(NeuralError::NonFiniteGradient(format!("#{}", id.0)));
    }
    Ok(out)
}

impl<R: Real> Tape<R> {
    /// Convenience wrapper for [`backward`].
    pub fn backward(&self, loss: Var) -> Result<Gradients<R>, NeuralError> {
        backward(self, loss)
    }
}
