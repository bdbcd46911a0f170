//! Dataset pipeline: plaintext datasets, label-space encryption with the
//! one-ciphertext-per-label cache, verification-record injection, and
//! CSV/JSON persistence.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_label, phi, ConfusedLabel};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::group::GroupParams;
use crate::num::Real;
use crate::pke::{dec, fake, Ciphertext, PublicKey, SecretKey};

/// Feature rows plus integer labels in 0..classes.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<F> {
    features: Vec<Vec<F>>,
    labels: Vec<usize>,
    classes: usize,
}

impl<F: Real> LabeledDataset<F> {
    pub fn new(features: Vec<Vec<F>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.len() != labels.len() {
            return Err(Error::BadLength { expected: features.len(), actual: labels.len() });
        }
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        let dim = features[0].len();
        for row in &features {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
        }
        for &y in &labels {
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
        }
        Ok(LabeledDataset { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[Vec<F>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per-dimension (min, max) over all rows.
    pub fn feature_bounds(&self) -> Vec<(F, F)> {
        let mut bounds = vec![(F::infinity(), F::neg_infinity()); self.dim()];
        for row in &self.features {
            for (d, &v) in row.iter().enumerate() {
                if v < bounds[d].0 {
                    bounds[d].0 = v;
                }
                if v > bounds[d].1 {
                    bounds[d].1 = v;
                }
            }
        }
        bounds
    }

    /// Writes `f0,...,f{d-1},label` rows.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|d| format!("f{d}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &y) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `save_csv` format. With `classes = None` the class
    /// count is inferred as max label + 1 (at least 2).
    pub fn load_csv(path: &Path, classes: Option<usize>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() < 2 || &headers[headers.len() - 1] != "label" {
            return Err(Error::Format(format!(
                "{}: expected header f0,...,label",
                path.display()
            )));
        }
        let dim = headers.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::DimensionMismatch { expected: dim + 1, actual: rec.len() });
            }
            let mut row = Vec::with_capacity(dim);
            for v in rec.iter().take(dim) {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Format(format!("bad feature value {v:?}")))?;
                row.push(F::from_f64_lossy(x));
            }
            let y: usize = rec[dim]
                .parse()
                .map_err(|_| Error::Format(format!("bad label {:?}", &rec[dim])))?;
            features.push(row);
            labels.push(y);
        }
        let classes = match classes {
            Some(z) => z,
            None => labels.iter().copied().max().map_or(2, |m| (m + 1).max(2)),
        };
        Self::new(features, labels, classes)
    }
}

/// Deterministic class center for the blob generator: class k sits on
/// axis k mod dim at distance spacing * (1 + k / dim), so centers do not
/// depend on the rng and different seeds share geometry.
fn blob_center<F: Real>(class: usize, dim: usize, spacing: f64) -> Vec<F> {
    let mut c = vec![F::zero(); dim];
    let lap = (class / dim) as f64;
    c[class % dim] = F::from_f64_lossy(spacing * (1.0 + lap));
    c
}

/// Isotropic Gaussian blobs (unit noise), classes interleaved row-wise
/// so any contiguous slice stays class-balanced.
pub fn gaussian_blobs<F: Real, R: Rng + ?Sized>(
    classes: usize,
    per_class: usize,
    dim: usize,
    spacing: f64,
    rng: &mut R,
) -> Result<LabeledDataset<F>> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "blob generator needs classes >= 2, per_class >= 1, dim >= 1".into(),
        ));
    }
    let mut features = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for k in 0..classes {
            let mut row = blob_center::<F>(k, dim, spacing);
            for v in row.iter_mut() {
                let noise: f64 = rng.sample(StandardNormal);
                *v += F::from_f64_lossy(noise);
            }
            features.push(row);
            labels.push(k);
        }
    }
    LabeledDataset::new(features, labels, classes)
}

/// Probe input for a verification record.
#[derive(Clone, Debug)]
pub enum ProbeSource<F> {
    /// Draw each feature uniformly from the given per-dimension range.
    UniformInRange(Vec<(F, F)>),
    /// Use a supplied held-out instance as-is.
    Instance(Vec<F>),
}

/// Probe input plus an ill-formed ciphertext whose per-key decryptions
/// (`expected`, key id -> element index) are pairwise distinct. `copies`
/// is how many times the pair was injected into a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord<F> {
    #[serde(rename = "x_bar")]
    probe: Vec<F>,
    #[serde(rename = "c_bar")]
    ciphertext: Ciphertext,
    expected: BTreeMap<u32, u64>,
    copies: usize,
}

impl<F: Real> VerificationRecord<F> {
    pub fn probe(&self) -> &[F] {
        &self.probe
    }

    pub fn ciphertext(&self) -> &Ciphertext {
        &self.ciphertext
    }

    pub fn expected(&self) -> &BTreeMap<u32, u64> {
        &self.expected
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    /// Registers a later-issued key by recording its decryption of the
    /// stored ciphertext; the dataset and model need no change.
    pub fn extend(&mut self, params: &GroupParams, sk: &SecretKey) -> Result<()> {
        let m = dec(params, sk, &self.ciphertext)?;
        let idx = params.element_index(m)?;
        if self.expected.values().any(|&v| v == idx) {
            return Err(Error::DegenerateFake);
        }
        self.expected.insert(sk.id(), idx);
        Ok(())
    }
}

const FAKE_RETRY_BOUND: usize = 64;

/// Builds a verification record for the given issued keys (at least 2).
/// The ciphertext is drawn from the fake distribution until every key
/// decrypts it to a different element; distinct key tags make the first
/// draw succeed, the retry bound is defensive.
pub fn make_verification_record<F: Real, R: Rng + ?Sized>(
    pk: &PublicKey,
    keys: &[SecretKey],
    source: &ProbeSource<F>,
    rng: &mut R,
) -> Result<VerificationRecord<F>> {
    if keys.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "verification record needs at least 2 keys, got {}",
            keys.len()
        )));
    }
    let params = pk.params();
    let probe = match source {
        ProbeSource::UniformInRange(bounds) => bounds
            .iter()
            .map(|&(lo, hi)| {
                let u: f64 = rng.random();
                lo + (hi - lo) * F::from_f64_lossy(u)
            })
            .collect(),
        ProbeSource::Instance(x) => x.clone(),
    };
    for _ in 0..FAKE_RETRY_BOUND {
        let c = fake(pk, rng);
        let mut expected = BTreeMap::new();
        for sk in keys {
            let idx = params.element_index(dec(params, sk, &c)?)?;
            expected.insert(sk.id(), idx);
        }
        let mut seen: Vec<u64> = expected.values().copied().collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() == keys.len() {
            return Ok(VerificationRecord { probe, ciphertext: c, expected, copies: 0 });
        }
    }
    Err(Error::DegenerateFake)
}

/// Default injection replication: about 1% of the dataset, at least 1.
pub fn default_replication(n: usize) -> usize {
    n.div_ceil(100).max(1)
}

/// Feature rows paired with label ciphertexts, plus the key material
/// and any injected verification records.
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedDataset<F> {
    pk: PublicKey,
    classes: usize,
    features: Vec<Vec<F>>,
    ciphertexts: Vec<Ciphertext>,
    records: Vec<VerificationRecord<F>>,
}

/// Encrypts the label column. Each distinct label is encrypted once, on
/// first encounter, and that ciphertext is reused for every later row
/// with the same label; row order is preserved.
pub fn encrypt_dataset<F: Real, R: Rng + ?Sized>(
    pk: &PublicKey,
    ds: &LabeledDataset<F>,
    rng: &mut R,
) -> Result<EncryptedDataset<F>> {
    let params = pk.params();
    let z = ds.classes();
    if z as u64 > params.q() {
        return Err(Error::TooManyClasses { classes: z, q: params.q() });
    }
    let mut cache: Vec<Option<Ciphertext>> = vec![None; z];
    let mut ciphertexts = Vec::with_capacity(ds.len());
    for &y in ds.labels() {
        let c = match cache[y] {
            Some(c) => c,
            None => {
                let m = encode_label(params, z, y)?;
                let c = crate::pke::enc(pk, m, rng)?;
                cache[y] = Some(c);
                c
            }
        };
        ciphertexts.push(c);
    }
    Ok(EncryptedDataset {
        pk: pk.clone(),
        classes: z,
        features: ds.features().to_vec(),
        ciphertexts,
        records: Vec::new(),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
struct DatasetMeta<F> {
    #[serde(flatten)]
    pk: PublicKey,
    z: usize,
    records: Vec<VerificationRecord<F>>,
}

impl<F: Real> EncryptedDataset<F> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }

    pub fn features(&self) -> &[Vec<F>] {
        &self.features
    }

    pub fn ciphertexts(&self) -> &[Ciphertext] {
        &self.ciphertexts
    }

    pub fn records(&self) -> &[VerificationRecord<F>] {
        &self.records
    }

    /// Training target for row i: phi of its ciphertext.
    pub fn target(&self, i: usize) -> Result<ConfusedLabel<F>> {
        phi(self.pk.params(), &self.ciphertexts[i])
    }

    /// Appends `replication` copies of (probe, ciphertext) after the
    /// existing rows; earlier rows are never touched.
    pub fn inject(&mut self, mut rec: VerificationRecord<F>, replication: usize) -> Result<()> {
        if replication == 0 {
            return Err(Error::InvalidArgument("replication must be positive".into()));
        }
        if rec.probe.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: rec.probe.len(),
            });
        }
        for _ in 0..replication {
            self.features.push(rec.probe.clone());
            self.ciphertexts.push(rec.ciphertext);
        }
        rec.copies = replication;
        self.records.push(rec);
        Ok(())
    }

    /// Writes rows as `f0,...,f{d-1},u1,u2,u3` plus a JSON sidecar with
    /// the public key, class count, and verification records.
    pub fn save(&self, data_path: &Path, meta_path: &Path) -> Result<()>
    where
        F: Serialize,
    {
        let mut w = csv::Writer::from_path(data_path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|d| format!("f{d}")).collect();
        header.extend(["u1".into(), "u2".into(), "u3".into()]);
        w.write_record(&header)?;
        for (row, c) in self.features.iter().zip(&self.ciphertexts) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            rec.push(c.u1.residue().to_string());
            rec.push(c.u2.residue().to_string());
            rec.push(c.u3.residue().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        let meta = DatasetMeta {
            pk: self.pk.clone(),
            z: self.classes,
            records: self.records.clone(),
        };
        fsutil::write_json(meta_path, &meta)
    }

    /// Reads the `save` format, re-validating every ciphertext component
    /// against the group from the sidecar.
    pub fn load(data_path: &Path, meta_path: &Path) -> Result<Self>
    where
        F: serde::de::DeserializeOwned,
    {
        let meta: DatasetMeta<F> = fsutil::read_json(meta_path)?;
        let params = meta.pk.params();
        let mut r = csv::Reader::from_path(data_path)?;
        let headers = r.headers()?.clone();
        if headers.len() < 4
            || &headers[headers.len() - 3] != "u1"
            || &headers[headers.len() - 2] != "u2"
            || &headers[headers.len() - 1] != "u3"
        {
            return Err(Error::Format(format!(
                "{}: expected header f0,...,u1,u2,u3",
                data_path.display()
            )));
        }
        let dim = headers.len() - 3;
        let mut features = Vec::new();
        let mut ciphertexts = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim + 3 {
                return Err(Error::DimensionMismatch { expected: dim + 3, actual: rec.len() });
            }
            let mut row = Vec::with_capacity(dim);
            for v in rec.iter().take(dim) {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Format(format!("bad feature value {v:?}")))?;
                row.push(F::from_f64_lossy(x));
            }
            let mut parts = [0u64; 3];
            for (k, part) in parts.iter_mut().enumerate() {
                *part = rec[dim + k]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad ciphertext value {:?}", &rec[dim + k])))?;
            }
            let c = Ciphertext {
                u1: params.element(parts[0])?,
                u2: params.element(parts[1])?,
                u3: params.element(parts[2])?,
            };
            features.push(row);
            ciphertexts.push(c);
        }
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for rec in &meta.records {
            rec.ciphertext.validate(params)?;
        }
        Ok(EncryptedDataset {
            pk: meta.pk,
            classes: meta.z,
            features,
            ciphertexts,
            records: meta.records,
        })
    }
}
