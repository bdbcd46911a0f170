//! Block-softmax classifier: linear or one-hidden-layer ReLU network
//! whose output is split into fixed-width blocks, each normalized by its
//! own softmax. Width-[q,q,q] heads train on confused labels; a
//! width-[z] head is the plain baseline. Training is deterministic
//! given the config seed.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::codec::argmax;
use crate::data::{EncryptedDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::num::Real;

/// Gradient-descent settings. `hidden = 0` selects the linear model.
#[derive(Clone, Debug)]
pub struct TrainConfig<F> {
    pub learning_rate: F,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: usize,
    pub weight_init_scale: F,
}

impl<F: Real> Default for TrainConfig<F> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: F::from_f64_lossy(0.5),
            epochs: 60,
            batch_size: 32,
            seed: 0,
            hidden: 0,
            weight_init_scale: F::from_f64_lossy(0.1),
        }
    }
}

impl<F: Real> TrainConfig<F> {
    fn validate(&self) -> Result<()> {
        // NaN fails both checks; comparisons are written to reject it.
        if self.learning_rate <= F::zero() || self.learning_rate.is_nan() {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.weight_init_scale < F::zero() || self.weight_init_scale.is_nan() {
            return Err(Error::InvalidArgument("weight init scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Weights of the classifier. `w1`/`b1` are empty for the linear
/// architecture; `w2` is out_dim x in2 row-major where in2 is the
/// hidden width (or the input dimension when linear).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ModelFile<F>",
    into = "ModelFile<F>",
    bound(
        serialize = "F: Real + Serialize",
        deserialize = "F: Real + serde::de::DeserializeOwned"
    )
)]
pub struct Model<F> {
    input_dim: usize,
    hidden: usize,
    blocks: Vec<usize>,
    w1: Vec<F>,
    b1: Vec<F>,
    w2: Vec<F>,
    b2: Vec<F>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
struct ModelFile<F> {
    architecture: String,
    input_dim: usize,
    hidden: usize,
    blocks: Vec<usize>,
    w1: Vec<F>,
    b1: Vec<F>,
    w2: Vec<F>,
    b2: Vec<F>,
}

impl<F: Real> TryFrom<ModelFile<F>> for Model<F> {
    type Error = Error;

    fn try_from(f: ModelFile<F>) -> Result<Self> {
        let expected_tag = if f.hidden == 0 { "linear" } else { "relu1" };
        if f.architecture != expected_tag {
            return Err(Error::Format(format!(
                "architecture tag {:?} does not match hidden = {}",
                f.architecture, f.hidden
            )));
        }
        let m = Model {
            input_dim: f.input_dim,
            hidden: f.hidden,
            blocks: f.blocks,
            w1: f.w1,
            b1: f.b1,
            w2: f.w2,
            b2: f.b2,
        };
        m.check_shapes()?;
        for v in m.w1.iter().chain(&m.b1).chain(&m.w2).chain(&m.b2) {
            if !v.is_finite() {
                return Err(Error::Format("model weights must be finite".into()));
            }
        }
        Ok(m)
    }
}

impl<F: Real> From<Model<F>> for ModelFile<F> {
    fn from(m: Model<F>) -> Self {
        ModelFile {
            architecture: if m.hidden == 0 { "linear".into() } else { "relu1".into() },
            input_dim: m.input_dim,
            hidden: m.hidden,
            blocks: m.blocks,
            w1: m.w1,
            b1: m.b1,
            w2: m.w2,
            b2: m.b2,
        }
    }
}

/// Per-parameter gradients, same shapes as the model.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: Vec<F>,
}

impl<F: Real> Model<F> {
    /// Fresh model with weights uniform in [-scale, scale], biases zero.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        blocks: Vec<usize>,
        scale: F,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || blocks.is_empty() || blocks.iter().any(|&w| w < 2) {
            return Err(Error::InvalidArgument(
                "model needs input_dim >= 1 and output blocks of width >= 2".into(),
            ));
        }
        let out: usize = blocks.iter().sum();
        let in2 = if hidden == 0 { input_dim } else { hidden };
        let mut draw = |n: usize| -> Vec<F> {
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    scale * F::from_f64_lossy(2.0 * u - 1.0)
                })
                .collect()
        };
        let w1 = draw(hidden * input_dim);
        let w2 = draw(out * in2);
        Ok(Model {
            input_dim,
            hidden,
            blocks,
            w1,
            b1: vec![F::zero(); hidden],
            w2,
            b2: vec![F::zero(); out],
        })
    }

    fn check_shapes(&self) -> Result<()> {
        if self.input_dim == 0 || self.blocks.is_empty() || self.blocks.iter().any(|&w| w < 2) {
            return Err(Error::Format("bad model dimensions".into()));
        }
        let out: usize = self.blocks.iter().sum();
        let in2 = if self.hidden == 0 { self.input_dim } else { self.hidden };
        if self.w1.len() != self.hidden * self.input_dim
            || self.b1.len() != self.hidden
            || self.w2.len() != out * in2
            || self.b2.len() != out
        {
            return Err(Error::Format("model array lengths do not match dims".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn out_dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn save(&self, path: &Path) -> Result<()>
    where
        F: Serialize,
    {
        fsutil::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self>
    where
        F: serde::de::DeserializeOwned,
    {
        fsutil::read_json(path)
    }

    /// All parameters as one vector (w1, b1, w2, b2 order); used by the
    /// finite-difference gradient check.
    pub fn flat_params(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(
            self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len(),
        );
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn set_flat_params(&mut self, v: &[F]) -> Result<()> {
        let total = self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len();
        if v.len() != total {
            return Err(Error::BadLength { expected: total, actual: v.len() });
        }
        let mut it = v.iter().copied();
        for dst in self
            .w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(&mut self.b2)
        {
            *dst = it.next().expect("length checked");
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[F]) -> Vec<F> {
        let mut h = vec![F::zero(); self.hidden];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut acc = self.b1[j];
            let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
            for (w, xi) in row.iter().zip(x) {
                acc += *w * *xi;
            }
            *hj = if acc > F::zero() { acc } else { F::zero() };
        }
        h
    }

    fn logits_from(&self, inner: &[F]) -> Vec<F> {
        let out = self.out_dim();
        let n = inner.len();
        let mut z = vec![F::zero(); out];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut acc = self.b2[o];
            let row = &self.w2[o * n..(o + 1) * n];
            for (w, vi) in row.iter().zip(inner) {
                acc += *w * *vi;
            }
            *zo = acc;
        }
        z
    }

    /// Forward pass: per-block softmax probabilities (each block sums
    /// to 1).
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(self.forward_parts(x)?.1)
    }

    fn forward_parts(&self, x: &[F]) -> Result<(Vec<F>, Vec<F>)> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, actual: x.len() });
        }
        let (hidden, mut z) = if self.hidden == 0 {
            (Vec::new(), self.logits_from(x))
        } else {
            let h = self.hidden_activations(x);
            let z = self.logits_from(&h);
            (h, z)
        };
        block_softmax_in_place(&self.blocks, &mut z);
        Ok((hidden, z))
    }

    /// Mean gradient of [`block_loss`] over the batch; shapes match the
    /// model.
    pub fn gradient(&self, inputs: &[&[F]], targets: &[&[F]]) -> Result<Gradients<F>> {
        Ok(self.batch_gradient(inputs, targets)?.0)
    }

    // Index arithmetic over strided weight rows; range loops keep the
    // strides visible.
    #[allow(clippy::needless_range_loop)]
    fn batch_gradient(&self, inputs: &[&[F]], targets: &[&[F]]) -> Result<(Gradients<F>, F)> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::BadLength { expected: inputs.len().max(1), actual: targets.len() });
        }
        let out = self.out_dim();
        let in2 = if self.hidden == 0 { self.input_dim } else { self.hidden };
        let mut g = Gradients {
            w1: vec![F::zero(); self.w1.len()],
            b1: vec![F::zero(); self.b1.len()],
            w2: vec![F::zero(); self.w2.len()],
            b2: vec![F::zero(); self.b2.len()],
        };
        let nblocks = F::from_f64_lossy(self.blocks.len() as f64);
        let mut loss_acc = F::zero();
        for (x, t) in inputs.iter().zip(targets) {
            if t.len() != out {
                return Err(Error::BadLength { expected: out, actual: t.len() });
            }
            let (hidden, probs) = self.forward_parts(x)?;
            loss_acc += block_loss(&self.blocks, &probs, t)?;
            // d loss / d logit = (softmax - target) / #blocks
            let dlogits: Vec<F> =
                probs.iter().zip(t.iter()).map(|(p, t)| (*p - *t) / nblocks).collect();
            let inner: &[F] = if self.hidden == 0 { x } else { hidden.as_slice() };
            for o in 0..out {
                g.b2[o] += dlogits[o];
                let row = &mut g.w2[o * in2..(o + 1) * in2];
                for (gw, vi) in row.iter_mut().zip(inner) {
                    *gw += dlogits[o] * *vi;
                }
            }
            if self.hidden > 0 {
                for j in 0..self.hidden {
                    if hidden[j] <= F::zero() {
                        continue;
                    }
                    let mut dh = F::zero();
                    for o in 0..out {
                        dh += dlogits[o] * self.w2[o * in2 + j];
                    }
                    g.b1[j] += dh;
                    let row = &mut g.w1[j * self.input_dim..(j + 1) * self.input_dim];
                    for (gw, xi) in row.iter_mut().zip(*x) {
                        *gw += dh * *xi;
                    }
                }
            }
        }
        let scale = F::one() / F::from_f64_lossy(inputs.len() as f64);
        for v in g
            .w1
            .iter_mut()
            .chain(&mut g.b1)
            .chain(&mut g.w2)
            .chain(&mut g.b2)
        {
            *v *= scale;
        }
        Ok((g, loss_acc * scale))
    }

    fn apply(&mut self, g: &Gradients<F>, lr: F) {
        for (w, gw) in self.w1.iter_mut().zip(&g.w1) {
            *w -= lr * *gw;
        }
        for (w, gw) in self.b1.iter_mut().zip(&g.b1) {
            *w -= lr * *gw;
        }
        for (w, gw) in self.w2.iter_mut().zip(&g.w2) {
            *w -= lr * *gw;
        }
        for (w, gw) in self.b2.iter_mut().zip(&g.b2) {
            *w -= lr * *gw;
        }
    }
}

fn block_softmax_in_place<F: Real>(blocks: &[usize], z: &mut [F]) {
    let mut start = 0;
    for &w in blocks {
        let blk = &mut z[start..start + w];
        let mut mx = blk[0];
        for v in blk.iter() {
            if *v > mx {
                mx = *v;
            }
        }
        let mut sum = F::zero();
        for v in blk.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in blk.iter_mut() {
            *v /= sum;
        }
        start += w;
    }
}

/// Mean over blocks of categorical cross-entropy at the target's hot
/// index.
pub fn block_loss<F: Real>(blocks: &[usize], pred: &[F], target: &[F]) -> Result<F> {
    let out: usize = blocks.iter().sum();
    if pred.len() != out {
        return Err(Error::BadLength { expected: out, actual: pred.len() });
    }
    if target.len() != out {
        return Err(Error::BadLength { expected: out, actual: target.len() });
    }
    let mut acc = F::zero();
    let mut start = 0;
    for &w in blocks {
        let hot = start + argmax(&target[start..start + w]);
        acc -= pred[hot].ln();
        start += w;
    }
    Ok(acc / F::from_f64_lossy(blocks.len() as f64))
}

/// Final weights plus the per-epoch mean training loss.
#[derive(Clone, Debug)]
pub struct Trained<F> {
    pub model: Model<F>,
    pub epoch_loss: Vec<F>,
}

fn fit<F: Real>(
    mut model: Model<F>,
    features: &[Vec<F>],
    targets: &[Vec<F>],
    rows: std::ops::Range<usize>,
    cfg: &TrainConfig<F>,
    rng: &mut ChaCha12Rng,
) -> Result<Trained<F>> {
    if rows.end > features.len() || rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "row range {rows:?} out of bounds for {} rows",
            features.len()
        )));
    }
    let mut order: Vec<usize> = rows.collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let n = F::from_f64_lossy(order.len() as f64);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut loss_sum = F::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&[F]> = chunk.iter().map(|&i| features[i].as_slice()).collect();
            let ts: Vec<&[F]> = chunk.iter().map(|&i| targets[i].as_slice()).collect();
            let (g, loss) = model.batch_gradient(&xs, &ts)?;
            model.apply(&g, cfg.learning_rate);
            loss_sum += loss * F::from_f64_lossy(chunk.len() as f64);
        }
        epoch_loss.push(loss_sum / n);
    }
    Ok(Trained { model, epoch_loss })
}

/// Trains a fresh [q,q,q]-head model on the encrypted dataset; targets
/// are the transfer of each row's ciphertext.
pub fn train<F: Real>(ed: &EncryptedDataset<F>, cfg: &TrainConfig<F>) -> Result<Trained<F>> {
    cfg.validate()?;
    let q = ed.pk().params().q() as usize;
    let targets: Vec<Vec<F>> = (0..ed.len()).map(|i| ed.target(i)).collect::<Result<_>>()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let model = Model::init(
        ed.dim(),
        cfg.hidden,
        vec![q; 3],
        cfg.weight_init_scale,
        &mut rng,
    )?;
    fit(model, ed.features(), &targets, 0..ed.len(), cfg, &mut rng)
}

/// Trains a plain single-block softmax classifier on one-hot labels;
/// the baseline the protected model is compared against.
pub fn train_plain<F: Real>(ds: &LabeledDataset<F>, cfg: &TrainConfig<F>) -> Result<Trained<F>> {
    cfg.validate()?;
    let z = ds.classes();
    let targets: Vec<Vec<F>> = ds
        .labels()
        .iter()
        .map(|&y| {
            let mut t = vec![F::zero(); z];
            t[y] = F::one();
            t
        })
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let model = Model::init(ds.dim(), cfg.hidden, vec![z], cfg.weight_init_scale, &mut rng)?;
    fit(model, ds.features(), &targets, 0..ds.len(), cfg, &mut rng)
}

/// Continues training existing weights on a row range of the encrypted
/// dataset (warm start); used by the fine-tuning attack harness.
pub fn train_from<F: Real>(
    model: Model<F>,
    ed: &EncryptedDataset<F>,
    rows: std::ops::Range<usize>,
    cfg: &TrainConfig<F>,
) -> Result<Trained<F>> {
    cfg.validate()?;
    let q = ed.pk().params().q() as usize;
    if model.input_dim() != ed.dim() {
        return Err(Error::DimensionMismatch { expected: ed.dim(), actual: model.input_dim() });
    }
    if model.blocks() != [q, q, q] {
        return Err(Error::InvalidArgument(format!(
            "model blocks {:?} do not match the dataset's group (q = {q})",
            model.blocks()
        )));
    }
    let targets: Vec<Vec<F>> = (0..ed.len()).map(|i| ed.target(i)).collect::<Result<_>>()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    fit(model, ed.features(), &targets, rows, cfg, &mut rng)
}
