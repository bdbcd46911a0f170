//! Deployment: the protected model never reveals probabilities or raw
//! class indices. Each prediction is transferred to a ciphertext,
//! rerandomized, and emitted as a fresh 3-hot vector; only secret-key
//! holders can turn emissions back into labels.

use rand::Rng;

use crate::codec::{argmax, decode_label, phi, phi_inv, ConfusedLabel};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::group::{Exponent, GroupParams};
use crate::model::Model;
use crate::num::Real;
use crate::pke::{dec, samp_dist, samp_dist_with, PublicKey, SecretKey};

/// Immutable serving handle: model + public key + class count.
#[derive(Clone, Debug)]
pub struct Deployment<F> {
    model: Model<F>,
    pk: PublicKey,
    classes: usize,
}

impl<F: Real> Deployment<F> {
    pub fn new(model: Model<F>, pk: PublicKey, classes: usize) -> Result<Self> {
        let q = pk.params().q() as usize;
        if model.blocks() != [q, q, q] {
            return Err(Error::InvalidArgument(format!(
                "model blocks {:?} do not match the group (q = {q})",
                model.blocks()
            )));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if classes > q {
            return Err(Error::TooManyClasses { classes, q: q as u64 });
        }
        Ok(Deployment { model, pk, classes })
    }

    pub fn model(&self) -> &Model<F> {
        &self.model
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Emits a fresh 3-hot vector: forward, inverse transfer,
    /// rerandomize, transfer. Successive calls on the same input differ
    /// with probability 1 - 1/q, yet decrypt identically under any one
    /// issued key.
    pub fn predict<R: Rng + ?Sized>(&self, x: &[F], rng: &mut R) -> Result<ConfusedLabel<F>> {
        let y = self.model.forward(x)?;
        let c = phi_inv(self.pk.params(), &y)?;
        let c_d = samp_dist(&self.pk, &c, rng)?;
        phi(self.pk.params(), &c_d)
    }

    /// [`predict`](Self::predict) with explicit rerandomization factor;
    /// r = 0 emits the transfer of the model's raw readout.
    pub fn predict_with(&self, x: &[F], r: Exponent) -> Result<ConfusedLabel<F>> {
        let y = self.model.forward(x)?;
        let c = phi_inv(self.pk.params(), &y)?;
        let c_d = samp_dist_with(&self.pk, &c, r)?;
        phi(self.pk.params(), &c_d)
    }

    /// Accuracy with a key: fraction of rows where decrypting the
    /// emission yields the true label. Out-of-range decryptions count
    /// as wrong, which is what sinks unauthorized keys.
    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        ds: &LabeledDataset<F>,
        sk: &SecretKey,
        rng: &mut R,
    ) -> Result<f64> {
        let mut hits = 0usize;
        for (row, &y) in ds.features().iter().zip(ds.labels()) {
            let v = self.predict(row, rng)?;
            if user_decrypt(self.pk.params(), self.classes, sk, &v)? == Some(y) {
                hits += 1;
            }
        }
        Ok(hits as f64 / ds.len() as f64)
    }
}

/// Opens an emitted vector with a secret key: inverse transfer, decrypt,
/// decode. `None` signals a wrong key or an out-of-range element.
pub fn user_decrypt<F: Real>(
    params: &GroupParams,
    classes: usize,
    sk: &SecretKey,
    emission: &[F],
) -> Result<Option<usize>> {
    let c = phi_inv(params, emission)?;
    let m = dec(params, sk, &c)?;
    decode_label(params, classes, m)
}

/// Baseline accuracy of a plain single-block model on plain labels.
pub fn evaluate_plain<F: Real>(model: &Model<F>, ds: &LabeledDataset<F>) -> Result<f64> {
    if model.blocks() != [ds.classes()] {
        return Err(Error::InvalidArgument(format!(
            "baseline model blocks {:?} do not match {} classes",
            model.blocks(),
            ds.classes()
        )));
    }
    let mut hits = 0usize;
    for (row, &y) in ds.features().iter().zip(ds.labels()) {
        let p = model.forward(row)?;
        if argmax(&p) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / ds.len() as f64)
}
