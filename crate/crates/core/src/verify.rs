//! Arbitration: prove whether a candidate key was issued, and trace
//! which key a suspect deployment is using by probing it with a
//! verification record. Includes the fine-tuning attack harness used to
//! check that the tracing signal survives continued training.

use rand::Rng;

use crate::codec::phi_inv;
use crate::data::{
    make_verification_record, EncryptedDataset, LabeledDataset, ProbeSource, VerificationRecord,
};
use crate::deploy::Deployment;
use crate::error::{Error, Result};
use crate::model::{train, train_from, Model, TrainConfig};
use crate::num::Real;
use crate::pke::{dec, PublicKey, SecretKey};

/// Everything the arbitrator holds: all issued keys plus the injected
/// verification records. Each record must cover every key id.
#[derive(Clone, Debug)]
pub struct ArbitrationContext<F> {
    pk: PublicKey,
    classes: usize,
    keys: Vec<SecretKey>,
    records: Vec<VerificationRecord<F>>,
}

impl<F: Real> ArbitrationContext<F> {
    pub fn new(
        pk: PublicKey,
        classes: usize,
        keys: Vec<SecretKey>,
        records: Vec<VerificationRecord<F>>,
    ) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::InvalidArgument("arbitration needs at least one key".into()));
        }
        for record in &records {
            for sk in &keys {
                if !record.expected().contains_key(&sk.id()) {
                    return Err(Error::InvalidArgument(format!(
                        "record does not cover key {}",
                        sk.id()
                    )));
                }
            }
        }
        Ok(ArbitrationContext { pk, classes, keys, records })
    }

    pub fn pk(&self) -> &PublicKey {
        &self.pk
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn keys(&self) -> &[SecretKey] {
        &self.keys
    }

    pub fn records(&self) -> &[VerificationRecord<F>] {
        &self.records
    }

    /// Scenario one: the leaked key itself is available. Returns the id
    /// of the issued key with exactly the same (a, b), if any.
    pub fn verify_key(&self, candidate: &SecretKey) -> Option<u32> {
        self.keys
            .iter()
            .find(|sk| sk.a() == candidate.a() && sk.b() == candidate.b())
            .map(|sk| sk.id())
    }

    /// Scenario two: only the suspect's readout on a record's probe is
    /// available. Looks up which key decrypts the record's ciphertext
    /// to `observed`; distinctness makes the answer unique.
    pub fn verify_leak(&self, record_index: usize, observed: u64) -> Result<Option<u32>> {
        let record = self
            .records
            .get(record_index)
            .ok_or(Error::UnknownRecord { index: record_index })?;
        Ok(record
            .expected()
            .iter()
            .find(|&(_, &v)| v == observed)
            .map(|(&id, _)| id))
    }
}

/// What the arbitrator observes when probing a suspect deployment that
/// decrypts with `sk`: the element index of the decrypted emission.
pub fn suspect_readout<F: Real, R: Rng + ?Sized>(
    deployment: &Deployment<F>,
    sk: &SecretKey,
    probe: &[F],
    rng: &mut R,
) -> Result<u64> {
    let params = deployment.pk().params();
    let emission = deployment.predict(probe, rng)?;
    let c = phi_inv(params, &emission)?;
    params.element_index(dec(params, sk, &c)?)
}

/// One tracing attempt: which key leaked, what the suspect answered,
/// and who was identified.
#[derive(Clone, Copy, Debug)]
pub struct LeakTrial {
    pub trial: usize,
    pub leaker: u32,
    pub observed: u64,
    pub identified: Option<u32>,
}

impl LeakTrial {
    pub fn matched(&self) -> bool {
        self.identified == Some(self.leaker)
    }
}

/// Fraction of matched trials.
pub fn trial_success(trials: &[LeakTrial]) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().filter(|t| t.matched()).count() as f64 / trials.len() as f64
}

/// Traces a fixed model `trials` times against one record, drawing the
/// leaker uniformly each time.
pub fn run_leak_trials<F: Real, R: Rng + ?Sized>(
    ctx: &ArbitrationContext<F>,
    model: &Model<F>,
    record_index: usize,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<LeakTrial>> {
    let record = ctx
        .records
        .get(record_index)
        .ok_or(Error::UnknownRecord { index: record_index })?;
    let deployment = Deployment::new(model.clone(), ctx.pk.clone(), ctx.classes)?;
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let leaker = ctx.keys[rng.random_range(0..ctx.keys.len())];
        let observed = suspect_readout(&deployment, &leaker, record.probe(), rng)?;
        let identified = ctx.verify_leak(record_index, observed)?;
        out.push(LeakTrial { trial, leaker: leaker.id(), observed, identified });
    }
    Ok(out)
}

/// Full-pipeline tracing trials: every trial draws a fresh probe,
/// injects a fresh record into a copy of the dataset, retrains from
/// scratch (seed varied per trial), and traces a random leaker.
pub fn run_fresh_record_trials<F: Real, R: Rng + ?Sized>(
    base: &EncryptedDataset<F>,
    keys: &[SecretKey],
    bounds: &[(F, F)],
    replication: usize,
    cfg: &TrainConfig<F>,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<LeakTrial>> {
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut ed = base.clone();
        let record = make_verification_record(
            ed.pk(),
            keys,
            &ProbeSource::UniformInRange(bounds.to_vec()),
            rng,
        )?;
        ed.inject(record, replication)?;
        let cfg = TrainConfig { seed: cfg.seed.wrapping_add(trial as u64), ..cfg.clone() };
        let trained = train(&ed, &cfg)?;
        let ctx = ArbitrationContext::new(
            ed.pk().clone(),
            ed.classes(),
            keys.to_vec(),
            ed.records().to_vec(),
        )?;
        let mut t = run_leak_trials(&ctx, &trained.model, 0, 1, rng)?;
        t[0].trial = trial;
        out.push(t[0]);
    }
    Ok(out)
}

/// Outcome of one fine-tuning round: model accuracy under the correct
/// key and the tracing success rate afterwards.
#[derive(Clone, Copy, Debug)]
pub struct AttackRound {
    pub round: usize,
    pub accuracy: f64,
    pub verification_rate: f64,
}

/// Fine-tuning attack: split the (attacker-held) encrypted dataset into
/// `parts` contiguous shards and fine-tune through them sequentially,
/// warm-starting each round from the previous weights. After each round
/// the correct-key accuracy and the tracing success over
/// `trials_per_round` attempts are recorded. Leakers cycle through the
/// keys so every key is probed each round.
#[allow(clippy::too_many_arguments)]
pub fn finetune_attack<F: Real, R: Rng + ?Sized>(
    ctx: &ArbitrationContext<F>,
    model: Model<F>,
    ed: &EncryptedDataset<F>,
    parts: usize,
    cfg: &TrainConfig<F>,
    eval_set: &LabeledDataset<F>,
    eval_key: &SecretKey,
    record_index: usize,
    trials_per_round: usize,
    rng: &mut R,
) -> Result<Vec<AttackRound>> {
    if parts == 0 || parts > ed.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} rows into {parts} parts",
            ed.len()
        )));
    }
    let record = ctx
        .records
        .get(record_index)
        .ok_or(Error::UnknownRecord { index: record_index })?;
    let shard = ed.len().div_ceil(parts);
    let mut model = model;
    let mut rounds = Vec::with_capacity(parts);
    for round in 0..parts {
        let lo = round * shard;
        let hi = ((round + 1) * shard).min(ed.len());
        let cfg = TrainConfig { seed: cfg.seed.wrapping_add(round as u64), ..cfg.clone() };
        model = train_from(model, ed, lo..hi, &cfg)?.model;
        let deployment = Deployment::new(model.clone(), ctx.pk.clone(), ctx.classes)?;
        let accuracy = deployment.evaluate(eval_set, eval_key, rng)?;
        let mut trials = Vec::with_capacity(trials_per_round);
        for trial in 0..trials_per_round {
            let leaker = ctx.keys[trial % ctx.keys.len()];
            let observed = suspect_readout(&deployment, &leaker, record.probe(), rng)?;
            let identified = ctx.verify_leak(record_index, observed)?;
            trials.push(LeakTrial { trial, leaker: leaker.id(), observed, identified });
        }
        rounds.push(AttackRound {
            round,
            accuracy,
            verification_rate: trial_success(&trials),
        });
    }
    Ok(rounds)
}
