//! Label-space encryption for classifier ownership protection.
//!
//! A model owner encrypts the label column of a training set under a
//! multi-key scheme, trains a block-softmax classifier on the encrypted
//! ("confused") labels, and hands each authorized user one secret key.
//! The deployed model only ever emits rerandomized encrypted labels, so
//! the model is useless without a key. An injected verification record
//! (a probe input tied to an ill-formed ciphertext that every key
//! decrypts differently) lets a neutral arbitrator identify which
//! user's key a pirated deployment is running.
//!
//! Numeric work (datasets, classifier, label vectors) is generic over
//! the scalar type via [`Real`]; group arithmetic is exact `u64`
//! modular arithmetic. `*64`/`*32` aliases fix the scalar for callers
//! that do not care to be generic.

pub mod codec;
pub mod data;
pub mod deploy;
pub mod error;
mod fsutil;
pub mod group;
pub mod model;
pub mod num;
pub mod pke;
pub mod verify;

pub use codec::{decode_label, encode_label, phi, phi_inv, ConfusedLabel};
pub use data::{
    default_replication, encrypt_dataset, gaussian_blobs, make_verification_record,
    EncryptedDataset, LabeledDataset, ProbeSource, VerificationRecord,
};
pub use deploy::{evaluate_plain, user_decrypt, Deployment};
pub use error::{Error, Result};
pub use group::{Exponent, GroupElement, GroupParams};
pub use model::{
    block_loss, train, train_from, train_plain, Gradients, Model, TrainConfig, Trained,
};
pub use num::Real;
pub use pke::{
    add_user, dec, enc, enc_with, fake, fake_with, forge_key, gen, gen_with, samp_dist,
    samp_dist_with, AuthorityState, Ciphertext, PublicKey, SecretKey,
};
pub use verify::{
    finetune_attack, run_fresh_record_trials, run_leak_trials, suspect_readout, trial_success,
    ArbitrationContext, AttackRound, LeakTrial,
};

/// Double-precision aliases; the common choice.
pub type Model64 = Model<f64>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type LabeledDataset64 = LabeledDataset<f64>;
pub type EncryptedDataset64 = EncryptedDataset<f64>;
pub type Deployment64 = Deployment<f64>;

/// Single-precision aliases.
pub type Model32 = Model<f32>;
pub type TrainConfig32 = TrainConfig<f32>;
pub type LabeledDataset32 = LabeledDataset<f32>;
pub type EncryptedDataset32 = EncryptedDataset<f32>;
pub type Deployment32 = Deployment<f32>;
