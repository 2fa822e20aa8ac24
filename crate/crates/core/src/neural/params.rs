use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{NeuralError, Real, Tensor};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Header entry describing one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub layer: String,
    pub role: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<R> {
    pub layer: String,
    pub role: String,
    pub value: Tensor<R>,
    pub trainable: bool,
}

impl<R: Real> Param<R> {
    pub fn name(&self) -> String {
        format!("{}.{}", self.layer, self.role)
    }

    pub fn meta(&self) -> ParamMeta {
        ParamMeta {
            layer: self.layer.clone(),
            role: self.role.clone(),
            shape: self.value.shape().to_vec(),
        }
    }
}

/// Parameter initializers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))` over an `in x out` kernel.
    GlorotUniform,
    /// Orthogonal `h x 4h` recurrent kernel.
    Orthogonal,
    /// LSTM bias: zero except ones on the forget-gate block.
    LstmBias,
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<R> {
    params: Vec<Param<R>>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, layer: &str, role: &str, value: Tensor<R>) -> ParamId {
        self.params.push(Param {
            layer: layer.to_string(),
            role: role.to_string(),
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds an initialized parameter. Each parameter draws from its own stream
    /// seeded by `(seed, layer.role)`, so shared layers initialize identically
    /// across model variants.
    pub fn add_init(
        &mut self,
        seed: u64,
        layer: &str,
        role: &str,
        shape: Vec<usize>,
        init: Init,
    ) -> ParamId {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("{layer}.{role}")));
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Constant(c) => vec![c; n],
            Init::GlorotUniform => {
                let (fan_in, fan_out) = (shape[0], shape[1..].iter().product::<usize>());
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let u = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                (0..n).map(|_| u.sample(&mut rng)).collect()
            }
            Init::Orthogonal => orthogonal(shape[0], shape[1], &mut rng),
            Init::LstmBias => {
                let h = n / 4;
                (0..n)
                    .map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 })
                    .collect()
            }
        };
        let value = Tensor::from_f64(shape, &data).expect("shape matches data");
        self.add(layer, role, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<R> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<R> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<R>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params
            .iter()
            .position(|p| p.name() == name)
            .map(ParamId)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn metas(&self) -> Vec<ParamMeta> {
        self.params.iter().map(|p| p.meta()).collect()
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    layer: p.layer.clone(),
                    role: p.role.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    /// Replaces every value from `tensors`, checking names and shapes.
    pub fn load(
        &mut self,
        metas: &[ParamMeta],
        tensors: Vec<Tensor<R>>,
    ) -> Result<(), NeuralError> {
        if metas.len() != self.params.len() || tensors.len() != metas.len() {
            return Err(NeuralError::Shape(format!(
                "checkpoint has {} parameters, model {}",
                metas.len(),
                self.params.len()
            )));
        }
        for ((p, m), t) in self.params.iter().zip(metas).zip(&tensors) {
            if p.meta() != *m || t.shape() != m.shape.as_slice() {
                return Err(NeuralError::Shape(format!(
                    "parameter {} does not match checkpoint entry {}.{} {:?}",
                    p.name(),
                    m.layer,
                    m.role,
                    m.shape
                )));
            }
        }
        for (p, t) in self.params.iter_mut().zip(tensors) {
            p.value = t;
        }
        Ok(())
    }
}

fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // QR of a tall Gaussian matrix, sign-corrected, laid out as rows x cols
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        }
    }
    out
}

/// Gradients aligned with a [`ParamStore`]; frozen parameters have none.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<R> {
    grads: Vec<Option<Tensor<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn empty(n: usize) -> Self {
        Self {
            grads: vec![None; n],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<R>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn accumulate(&mut self, id: ParamId, shape: &[usize], g: &[R]) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(t) => t.data_mut().iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            slot => *slot = Some(Tensor::new(shape.to_vec(), g.to_vec()).expect("grad shape")),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<R>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn global_norm(&self) -> f64 {
        self.iter()
            .flat_map(|(_, g)| g.data().iter())
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: R) {
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn first_non_finite(&self) -> Option<ParamId> {
        self.iter().find(|(_, g)| !g.all_finite()).map(|(id, _)| id)
    }
}
