//! The four in-painting variants built from BLSTM stacks and dense layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corruption::{composite, MaskError, MaskedSpectrogram};
use crate::dsp::MelSpectrogram;
use crate::neural::{Activation, Blstm, Dense, NeuralError, ParamStore, Real, Tape, Tensor, Var};
use crate::visual::MotionFeatures;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{0} requires visual features")]
    MissingVisual(Variant),
    #[error("{0} takes no visual features")]
    UnexpectedVisual(Variant),
    #[error("{0} needs label sequences for its CTC head")]
    MissingLabels(Variant),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Audio-only: BLSTM stack over the masked spectrogram.
    #[serde(rename = "A-SI")]
    ASi,
    /// Visual encoder feeding an audio-visual decoder.
    #[serde(rename = "AV-S2S")]
    AvS2s,
    /// AV-S2S plus a CTC phone head on the encoder.
    #[serde(rename = "AV-MTL-S2S")]
    AvMtlS2s,
    /// Visual and spectral features concatenated into one BLSTM stack.
    #[serde(rename = "AV-SI")]
    AvSi,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::ASi,
        Variant::AvS2s,
        Variant::AvMtlS2s,
        Variant::AvSi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::ASi => "A-SI",
            Variant::AvS2s => "AV-S2S",
            Variant::AvMtlS2s => "AV-MTL-S2S",
            Variant::AvSi => "AV-SI",
        }
    }

    pub fn uses_visual(self) -> bool {
        self != Variant::ASi
    }

    pub fn has_encoder(self) -> bool {
        matches!(self, Variant::AvS2s | Variant::AvMtlS2s)
    }

    pub fn has_ctc(self) -> bool {
        self == Variant::AvMtlS2s
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub spec_dim: usize,
    pub visual_dim: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Width of the encoder's output dense layer.
    pub fc_dim: usize,
    /// CTC weight; only used by AV-MTL-S2S.
    pub lambda: f64,
    /// Label vocabulary size without the blank.
    pub vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::AvMtlS2s,
            spec_dim: 64,
            visual_dim: 40,
            hidden: 256,
            encoder_layers: 3,
            decoder_layers: 3,
            fc_dim: 64,
            lambda: 0.001,
            vocab: 39,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.hidden == 0 || self.spec_dim == 0 {
            return bad("hidden and spec_dim must be positive");
        }
        if self.decoder_layers == 0 {
            return bad("need at least one decoder layer");
        }
        if self.variant.uses_visual() && self.visual_dim == 0 {
            return bad("visual_dim must be positive");
        }
        if self.variant.has_encoder() && (self.encoder_layers == 0 || self.fc_dim == 0) {
            return bad("encoder needs layers and fc_dim");
        }
        if self.variant.has_ctc() && self.vocab == 0 {
            return bad("CTC head needs a vocabulary");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        Ok(())
    }

    /// Number of scalar parameters [`build`] creates.
    pub fn param_count(&self) -> usize {
        let lstm = |input: usize| 2 * 4 * self.hidden * (input + self.hidden + 1);
        let stack = |input: usize, layers: usize| {
            (0..layers)
                .map(|i| lstm(if i == 0 { input } else { 2 * self.hidden }))
                .sum::<usize>()
        };
        let dense = |i: usize, o: usize| i * o + o;
        let h2 = 2 * self.hidden;
        let out = dense(h2, self.spec_dim);
        match self.variant {
            Variant::ASi => stack(self.spec_dim, self.decoder_layers) + out,
            Variant::AvSi => stack(self.visual_dim + self.spec_dim, self.decoder_layers) + out,
            Variant::AvS2s | Variant::AvMtlS2s => {
                let mut n = stack(self.visual_dim, self.encoder_layers)
                    + dense(h2, self.fc_dim)
                    + stack(self.spec_dim + self.fc_dim, self.decoder_layers)
                    + out;
                if self.variant.has_ctc() {
                    n += dense(h2, self.vocab + 1);
                }
                n
            }
        }
    }
}

/// Which cells enter the reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossRegion {
    #[default]
    Full,
    Masked,
}

/// A built model: configuration, parameters and layer wiring.
#[derive(Debug, Clone)]
pub struct Model<R> {
    config: ModelConfig,
    pub params: ParamStore<R>,
    encoder: Vec<Blstm>,
    encoder_fc: Option<Dense>,
    ctc_head: Option<Dense>,
    decoder: Vec<Blstm>,
    output: Dense,
}

/// Builds the configured variant with parameters initialized from `seed`.
/// Layers are named so that AV-S2S and AV-MTL-S2S share initial values.
/// Initial bias of the spectrogram output layer.
pub const OUTPUT_BIAS_INIT: f64 = 0.5;

pub fn build<R: Real>(config: &ModelConfig, seed: u64) -> Result<Model<R>, ModelError> {
    config.validate()?;
    let c = config;
    let mut ps = ParamStore::new();
    let stack = |ps: &mut ParamStore<R>, prefix: &str, input: usize, layers: usize| {
        (0..layers)
            .map(|i| {
                let inp = if i == 0 { input } else { 2 * c.hidden };
                Blstm::new(ps, seed, &format!("{prefix}.blstm{i}"), inp, c.hidden)
            })
            .collect::<Vec<_>>()
    };
    let (mut encoder, mut encoder_fc, mut ctc_head) = (Vec::new(), None, None);
    let dec_input = match c.variant {
        Variant::ASi => c.spec_dim,
        Variant::AvSi => c.visual_dim + c.spec_dim,
        Variant::AvS2s | Variant::AvMtlS2s => {
            encoder = stack(&mut ps, "encoder", c.visual_dim, c.encoder_layers);
            encoder_fc = Some(Dense::new(
                &mut ps,
                seed,
                "encoder.dense",
                2 * c.hidden,
                c.fc_dim,
                Activation::Relu,
            ));
            c.spec_dim + c.fc_dim
        }
    };
    let decoder = stack(&mut ps, "decoder", dec_input, c.decoder_layers);
    // Targets lie in [0, 1]; starting mid-range keeps ReLU units from
    // being negative on every frame before training begins.
    let output = Dense::with_bias(
        &mut ps,
        seed,
        "decoder.dense",
        2 * c.hidden,
        c.spec_dim,
        Activation::Relu,
        OUTPUT_BIAS_INIT,
    );
    if c.variant.has_ctc() {
        // logits; the softmax is folded into the CTC loss
        ctc_head = Some(Dense::new(
            &mut ps,
            seed,
            "encoder.ctc",
            2 * c.hidden,
            c.vocab + 1,
            Activation::Linear,
        ));
    }
    Ok(Model {
        config: c.clone(),
        params: ps,
        encoder,
        encoder_fc,
        ctc_head,
        decoder,
        output,
    })
}

/// One training or inference example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Ground truth; equal to the masked input's unmasked source.
    pub clean: MelSpectrogram,
    pub masked: MaskedSpectrogram,
    pub visual: Option<MotionFeatures>,
    pub labels: Option<Vec<usize>>,
}

/// Time-major stack of equally long samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<R> {
    pub batch: usize,
    pub steps: usize,
    pub spec_dim: usize,
    pub visual_dim: usize,
    pub masked: Vec<R>,
    pub target: Vec<R>,
    pub visual: Option<Vec<R>>,
    /// 1 for intact rows, 0 for masked rows.
    pub intact: Vec<R>,
    pub labels: Option<Vec<Vec<usize>>>,
}

impl<R: Real> Batch<R> {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self, ModelError> {
        let first = samples
            .first()
            .ok_or_else(|| ModelError::Shape("empty batch".into()))?;
        let (steps, spec_dim) = (first.clean.frames(), first.clean.n_mels());
        let bs = samples.len();
        let visual_dim = first.visual.as_ref().map_or(0, |v| v.dim());
        let rows = steps * bs;
        let mut masked = vec![R::zero(); rows * spec_dim];
        let mut target = vec![R::zero(); rows * spec_dim];
        let mut intact = vec![R::zero(); rows];
        let mut visual = first
            .visual
            .as_ref()
            .map(|_| vec![R::zero(); rows * visual_dim]);
        let all_labels = samples.iter().all(|s| s.labels.is_some());
        for (b, s) in samples.iter().enumerate() {
            if s.clean.frames() != steps
                || s.clean.n_mels() != spec_dim
                || s.masked.values.frames() != steps
                || s.masked.values.n_mels() != spec_dim
            {
                return Err(ModelError::Shape(format!(
                    "sample {} is {}x{}, batch expects {steps}x{spec_dim}",
                    s.id,
                    s.clean.frames(),
                    s.clean.n_mels()
                )));
            }
            let ind = s.masked.mask.indicator();
            for t in 0..steps {
                let r = t * bs + b;
                intact[r] = R::of(ind[t] as f64);
                for (dst, &v) in masked[r * spec_dim..(r + 1) * spec_dim]
                    .iter_mut()
                    .zip(s.masked.values.frame(t))
                {
                    *dst = R::of(v);
                }
                for (dst, &v) in target[r * spec_dim..(r + 1) * spec_dim]
                    .iter_mut()
                    .zip(s.clean.frame(t))
                {
                    *dst = R::of(v);
                }
            }
            match (&mut visual, &s.visual) {
                (Some(buf), Some(v)) => {
                    if v.frames() != steps || v.dim() != visual_dim {
                        return Err(ModelError::Shape(format!(
                            "visual features of {} are {}x{}, expected {steps}x{visual_dim}",
                            s.id,
                            v.frames(),
                            v.dim()
                        )));
                    }
                    for t in 0..steps {
                        let r = t * bs + b;
                        for (dst, &val) in buf[r * visual_dim..(r + 1) * visual_dim]
                            .iter_mut()
                            .zip(v.matrix().row(t))
                        {
                            *dst = R::of(val);
                        }
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(ModelError::Shape(
                        "visual features on some samples only".into(),
                    ))
                }
            }
        }
        let labels =
            all_labels.then(|| samples.iter().map(|s| s.labels.clone().unwrap()).collect());
        Ok(Self {
            batch: bs,
            steps,
            spec_dim,
            visual_dim,
            masked,
            target,
            visual,
            intact,
            labels,
        })
    }

    /// Rows of sample `b`, in time order, from a time-major buffer.
    pub fn unstack(&self, data: &[R], cols: usize, b: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps * cols);
        for t in 0..self.steps {
            let r = t * self.batch + b;
            out.extend(data[r * cols..(r + 1) * cols].iter().map(|v| v.f64()));
        }
        out
    }
}

/// Variables produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub y: Var,
    pub context: Option<Var>,
    pub logits: Option<Var>,
}

/// Loss variable plus its components, as plain numbers.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub mse: f64,
    pub ctc: Option<f64>,
}

impl<R: Real> Model<R> {
    /// Same architecture with other parameter values.
    pub fn with_params(&self, params: ParamStore<R>) -> Self {
        Self {
            params,
            ..self.clone()
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn check_batch(&self, batch: &Batch<R>) -> Result<(), ModelError> {
        let v = self.variant();
        if batch.spec_dim != self.config.spec_dim {
            return Err(ModelError::Shape(format!(
                "spectrogram width {} vs model {}",
                batch.spec_dim, self.config.spec_dim
            )));
        }
        match (v.uses_visual(), batch.visual.is_some()) {
            (true, false) => return Err(ModelError::MissingVisual(v)),
            (false, true) => return Err(ModelError::UnexpectedVisual(v)),
            _ => {}
        }
        if v.uses_visual() && batch.visual_dim != self.config.visual_dim {
            return Err(ModelError::Shape(format!(
                "visual width {} vs model {}",
                batch.visual_dim, self.config.visual_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<R>, batch: &Batch<R>) -> Result<Forward, ModelError> {
        self.check_batch(batch)?;
        let rows = batch.steps * batch.batch;
        let ps = &self.params;
        let a = tape.input(Tensor::matrix(rows, batch.spec_dim, batch.masked.clone())?);
        let visual = match &batch.visual {
            Some(v) => Some(tape.input(Tensor::matrix(rows, batch.visual_dim, v.clone())?)),
            None => None,
        };
        let (mut context, mut logits) = (None, None);
        let mut h = match self.variant() {
            Variant::ASi => a,
            Variant::AvSi => tape.concat(visual.expect("checked"), a)?,
            Variant::AvS2s | Variant::AvMtlS2s => {
                let mut e = visual.expect("checked");
                for layer in &self.encoder {
                    e = layer.forward(tape, ps, e)?;
                }
                let c = self
                    .encoder_fc
                    .as_ref()
                    .expect("encoder")
                    .forward(tape, ps, e)?;
                if let Some(head) = &self.ctc_head {
                    logits = Some(head.forward(tape, ps, e)?);
                }
                context = Some(c);
                tape.concat(a, c)?
            }
        };
        for layer in &self.decoder {
            h = layer.forward(tape, ps, h)?;
        }
        let y = self.output.forward(tape, ps, h)?;
        Ok(Forward { y, context, logits })
    }

    /// MSE over the chosen region, plus `lambda * CTC` for AV-MTL-S2S.
    pub fn loss(
        &self,
        tape: &mut Tape<R>,
        fwd: &Forward,
        batch: &Batch<R>,
        region: LossRegion,
    ) -> Result<LossParts, ModelError> {
        let weights: Option<Vec<R>> = match region {
            LossRegion::Full => None,
            LossRegion::Masked => Some(batch.intact.iter().map(|&m| R::one() - m).collect()),
        };
        let mse = tape.mse(fwd.y, &batch.target, weights.as_deref())?;
        let mse_value = tape.value(mse).data()[0].f64();
        let Some(logits) = fwd.logits else {
            return Ok(LossParts {
                total: mse,
                mse: mse_value,
                ctc: None,
            });
        };
        let labels = batch
            .labels
            .as_ref()
            .ok_or(ModelError::MissingLabels(self.variant()))?;
        let (ctc, _) = tape.ctc(logits, labels)?;
        let ctc_value = tape.value(ctc).data()[0].f64();
        let weighted = tape.scale(ctc, R::of(self.config.lambda))?;
        let total = tape.add(mse, weighted)?;
        Ok(LossParts {
            total,
            mse: mse_value,
            ctc: Some(ctc_value),
        })
    }

    /// Runs the model on several samples at once.
    pub fn inpaint_batch(&self, samples: &[&Sample]) -> Result<Vec<InpaintResult>, ModelError> {
        let batch = Batch::<R>::from_samples(samples)?;
        let mut tape = Tape::new(batch.batch);
        let fwd = self.forward(&mut tape, &batch)?;
        let mut out = Vec::with_capacity(samples.len());
        for (b, s) in samples.iter().enumerate() {
            let y = batch.unstack(tape.value(fwd.y).data(), batch.spec_dim, b);
            let o = composite(&s.masked.values, &y, &s.masked.mask)?;
            let encoder_context = fwd
                .context
                .map(|c| batch.unstack(tape.value(c).data(), self.config.fc_dim, b));
            let phoneme_logits = fwd
                .logits
                .map(|l| batch.unstack(tape.value(l).data(), self.config.vocab + 1, b));
            out.push(InpaintResult {
                y,
                o,
                encoder_context,
                phoneme_logits,
            });
        }
        Ok(out)
    }
}

/// Output of one in-painting pass; grids are row-major `T x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResult {
    pub y: Vec<f64>,
    pub o: MelSpectrogram,
    pub encoder_context: Option<Vec<f64>>,
    pub phoneme_logits: Option<Vec<f64>>,
}

/// Restores the masked frames of `a`, using `v` when the variant needs it.
pub fn inpaint<R: Real>(
    model: &Model<R>,
    a: &MaskedSpectrogram,
    v: Option<&MotionFeatures>,
) -> Result<InpaintResult, ModelError> {
    let variant = model.variant();
    match (variant.uses_visual(), v.is_some()) {
        (true, false) => return Err(ModelError::MissingVisual(variant)),
        (false, true) => return Err(ModelError::UnexpectedVisual(variant)),
        _ => {}
    }
    let sample = Sample {
        id: String::new(),
        // the target is unused at inference; the masked grid stands in
        clean: a.values.clone(),
        masked: a.clone(),
        visual: v.cloned(),
        labels: None,
    };
    Ok(model.inpaint_batch(&[&sample])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::{apply_mask, sample_mask, Mask, MaskSpec};
    use crate::neural::{backward, grad_check};
    use crate::visual::FeatureMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn micro(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            spec_dim: 8,
            visual_dim: 8,
            hidden: 4,
            encoder_layers: 3,
            decoder_layers: 3,
            fc_dim: 8,
            lambda: 0.5,
            vocab: 3,
        }
    }

    fn sample(seed: u64, steps: usize, spec: usize, vis: Option<usize>, mask: Mask) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = MelSpectrogram::new(
            steps,
            spec,
            (0..steps * spec)
                .map(|_| rng.random_range(0.0..1.0))
                .collect(),
            None,
        )
        .unwrap();
        let visual = vis.map(|d| {
            let m = FeatureMatrix::new(
                steps,
                d,
                (0..steps * d).map(|_| rng.random_range(0.0..1.0)).collect(),
            )
            .unwrap();
            MotionFeatures::new(m).unwrap()
        });
        let labels = Some((0..2).map(|_| rng.random_range(0..3)).collect());
        let masked = apply_mask(&clean, &mask).unwrap();
        Sample {
            id: format!("s{seed}"),
            clean,
            masked,
            visual,
            labels,
        }
    }

    #[test]
    fn default_sizes_are_about_nine_and_four_million() {
        let mtl = ModelConfig::default();
        let n = mtl.param_count();
        assert!((n as f64 - 9e6).abs() / 9e6 < 0.15, "{n}");
        let si = ModelConfig {
            variant: Variant::AvSi,
            ..mtl.clone()
        };
        let n = si.param_count();
        assert!((n as f64 - 4e6).abs() / 4e6 < 0.15, "{n}");
        let built: Model<f32> = build(&mtl, 0).unwrap();
        assert_eq!(built.params.count(), mtl.param_count());
    }

    #[test]
    fn formula_matches_built_models() {
        for v in Variant::ALL {
            let c = micro(v);
            let m: Model<f64> = build(&c, 1).unwrap();
            assert_eq!(m.params.count(), c.param_count(), "{v}");
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let js = serde_json::to_string(&v).unwrap();
            assert_eq!(js, format!("\"{}\"", v.name()));
        }
        assert!("B-SI".parse::<Variant>().is_err());
    }

    #[test]
    fn micro_models_run_and_respect_composite() {
        let start = std::time::Instant::now();
        for v in Variant::ALL {
            let c = micro(v);
            let m: Model<f64> = build(&c, 2).unwrap();
            let vis = v.uses_visual().then_some(8);
            let s = sample(3, 12, 8, vis, Mask::all_intact(12, 20.0));
            let r = inpaint(&m, &s.masked, s.visual.as_ref()).unwrap();
            assert_eq!(r.o, s.clean);
            assert_eq!(r.y.len(), 12 * 8);
            assert_eq!(r.encoder_context.is_some(), v.has_encoder());
            assert_eq!(
                r.phoneme_logits.as_ref().map(|l| l.len()),
                v.has_ctc().then_some(12 * 4)
            );
            let again = inpaint(&m, &s.masked, s.visual.as_ref()).unwrap();
            assert_eq!(r, again);
        }
        assert!(start.elapsed().as_secs_f64() < 1.0);
    }

    #[test]
    fn modality_errors() {
        let a: Model<f64> = build(&micro(Variant::ASi), 0).unwrap();
        let s = sample(1, 6, 8, Some(8), Mask::all_intact(6, 20.0));
        assert!(matches!(
            inpaint(&a, &s.masked, s.visual.as_ref()),
            Err(ModelError::UnexpectedVisual(_))
        ));
        let av: Model<f64> = build(&micro(Variant::AvS2s), 0).unwrap();
        assert!(matches!(
            inpaint(&av, &s.masked, None),
            Err(ModelError::MissingVisual(_))
        ));
    }

    #[test]
    fn batch_equals_single_passes() {
        let m: Model<f64> = build(&micro(Variant::AvMtlS2s), 4).unwrap();
        let spec = MaskSpec {
            mean_ms: 100.0,
            std_ms: 20.0,
            min_total_ms: 60.0,
            max_total_ms: 140.0,
            max_gaps: 2,
            ..MaskSpec::default()
        };
        let samples: Vec<Sample> = (0..3)
            .map(|i| sample(10 + i, 14, 8, Some(8), sample_mask(i, 14, &spec).unwrap()))
            .collect();
        let refs: Vec<&Sample> = samples.iter().collect();
        let together = m.inpaint_batch(&refs).unwrap();
        for (s, r) in samples.iter().zip(&together) {
            let single = inpaint(&m, &s.masked, s.visual.as_ref()).unwrap();
            for (a, b) in single.y.iter().zip(&r.y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_zero_mtl_matches_s2s_loss() {
        let mut c = micro(Variant::AvMtlS2s);
        c.lambda = 0.0;
        let mtl: Model<f64> = build(&c, 5).unwrap();
        let s2s: Model<f64> = build(&micro(Variant::AvS2s), 5).unwrap();
        let s = sample(2, 10, 8, Some(8), Mask::all_masked(10, 20.0));
        let batch = Batch::<f64>::from_samples(&[&s]).unwrap();
        let mut losses = Vec::new();
        for m in [&mtl, &s2s] {
            let mut t = Tape::new(1);
            let f = m.forward(&mut t, &batch).unwrap();
            let l = m.loss(&mut t, &f, &batch, LossRegion::Full).unwrap();
            losses.push(t.value(l.total).data()[0]);
        }
        assert_eq!(losses[0], losses[1]);
    }

    #[test]
    fn untrained_model_is_no_better_than_constant() {
        let m: Model<f64> = build(&micro(Variant::AvS2s), 6).unwrap();
        let mask = Mask::new(20, vec![crate::corruption::Gap { start: 5, len: 10 }], 20.0).unwrap();
        let s = sample(4, 20, 8, Some(8), mask);
        let r = inpaint(&m, &s.masked, s.visual.as_ref()).unwrap();
        let gap: Vec<f64> = (5..15).flat_map(|t| s.clean.frame(t).to_vec()).collect();
        let mean = gap.iter().sum::<f64>() / gap.len() as f64;
        let var = gap.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / gap.len() as f64;
        let model_mse = (5..15)
            .flat_map(|t| {
                s.clean
                    .frame(t)
                    .iter()
                    .zip(r.o.frame(t))
                    .map(|(a, b)| (a - b).powi(2))
                    .collect::<Vec<_>>()
            })
            .sum::<f64>()
            / gap.len() as f64;
        assert!(model_mse >= 0.8 * var, "{model_mse} vs {var}");
    }

    #[test]
    fn full_micro_model_gradients() {
        let c = ModelConfig {
            visual_dim: 8,
            spec_dim: 8,
            ..micro(Variant::AvMtlS2s)
        };
        let mut m: Model<f64> = build(&c, 7).unwrap();
        let s = sample(
            5,
            6,
            8,
            Some(8),
            Mask::new(6, vec![crate::corruption::Gap { start: 2, len: 2 }], 20.0).unwrap(),
        );
        let batch = Batch::<f64>::from_samples(&[&s]).unwrap();
        let model = m.clone();
        let report = grad_check(&mut m.params, 1e-5, |ps| {
            let mm = Model {
                params: ps.clone(),
                ..model.clone()
            };
            let mut t = Tape::new(1);
            let f = mm.forward(&mut t, &batch).map_err(|e| match e {
                ModelError::Neural(n) => n,
                other => panic!("{other}"),
            })?;
            let l = mm.loss(&mut t, &f, &batch, LossRegion::Full).unwrap();
            Ok((t, l.total))
        })
        .unwrap();
        assert!(report.passed(1e-4), "{:?}", report.failures(1e-4));
        let mut t = Tape::new(1);
        let f = m.forward(&mut t, &batch).unwrap();
        let l = m.loss(&mut t, &f, &batch, LossRegion::Masked).unwrap();
        assert!(backward(&t, l.total).is_ok());
    }
}
