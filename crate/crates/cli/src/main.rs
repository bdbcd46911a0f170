//! Command-line surface over the label-encryption pipeline: key
//! generation, dataset encryption, training, deployment queries, and
//! leak arbitration. Every command takes a --seed, echoes it, and is
//! bit-reproducible; no command overwrites one of its own inputs.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use labelcrypt::{
    add_user, default_replication, encrypt_dataset, evaluate_plain, finetune_attack,
    gaussian_blobs, gen, make_verification_record, run_leak_trials, train, train_plain,
    trial_success, user_decrypt, ArbitrationContext, AuthorityState, Deployment,
    EncryptedDataset, GroupParams, LabeledDataset, Model, ProbeSource, PublicKey, SecretKey,
    TrainConfig,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

// ---------------------------------------------------------------------------
// Errors: usage problems exit 1, everything that goes wrong while
// running (I/O, scheme, training) exits 2.

enum CmdError {
    Usage(String),
    Runtime(String),
}

impl CmdError {
    fn code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Usage(m) | CmdError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<labelcrypt::Error> for CmdError {
    fn from(e: labelcrypt::Error) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), CmdError>;

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError::Usage(msg.into())
}

/// Outputs must not land on an input path; commands never mutate what
/// they read.
fn ensure_distinct(out: &Path, inputs: &[&Path]) -> CmdResult {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let out_abs = abs(out);
    for input in inputs {
        if out_abs == abs(input) {
            return Err(usage(format!(
                "output {} would overwrite an input; pick a different path",
                out.display()
            )));
        }
    }
    Ok(())
}

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------------------
// Argument surface

#[derive(Parser)]
#[command(
    name = "labelcrypt",
    version,
    about = "Multi-key label encryption pipeline: train classifiers whose output only key holders can read, and trace leaked keys"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainOpts {
    /// Passes over the training data.
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    /// SGD step size.
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Minibatch size.
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Hidden layer width; 0 trains a linear model.
    #[arg(long, default_value_t = 0)]
    hidden: usize,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig<f64> {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            hidden: self.hidden,
            ..TrainConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a group, a public key, secret keys, and the authority file.
    Keygen {
        /// Number of label classes the group must accommodate.
        #[arg(long)]
        classes: usize,
        /// Number of secret keys to issue.
        #[arg(long)]
        users: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for pk.json, sk_<j>.json, authority.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Issue one more secret key; existing keys and ciphertexts keep working.
    AddUser {
        #[arg(long)]
        pk: PathBuf,
        #[arg(long)]
        authority: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the new sk_<j>.json and the updated authority.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sample a synthetic Gaussian-blob dataset to CSV.
    GenData {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        dim: usize,
        /// Distance scale between class centers.
        #[arg(long, default_value_t = 4.0)]
        spacing: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt a dataset's labels, optionally embedding a verification record.
    Encrypt {
        /// Plain dataset CSV (f0..fd,label).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pk: PathBuf,
        /// Class count; inferred from the labels when omitted.
        #[arg(long)]
        classes: Option<usize>,
        /// Embed a verification record built from the --key files.
        #[arg(long)]
        inject_verification: bool,
        /// Secret key files for the record (at least two).
        #[arg(long = "key")]
        keys: Vec<PathBuf>,
        /// Copies of the record row to append; defaults to about 1% of the data.
        #[arg(long)]
        replication: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_data: PathBuf,
        #[arg(long)]
        out_meta: PathBuf,
    },
    /// Train the block-softmax classifier on an encrypted dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Sidecar written by encrypt; required unless --baseline.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Train a plain single-block model on raw labels instead.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query the deployed model once; prints the emitted vector.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pk: PathBuf,
        #[arg(long)]
        classes: usize,
        /// Input features, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        features: Vec<f64>,
        /// Also decrypt the emission with this key.
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Open one emitted vector with a secret key.
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        pk: PathBuf,
        #[arg(long)]
        classes: usize,
        /// Emitted vector, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        emission: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a candidate key against the issued set (exact match).
    VerifyKey {
        #[arg(long)]
        pk: PathBuf,
        #[arg(long)]
        authority: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trace random leakers against a trained model; one line per trial.
    VerifyLeak {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        authority: PathBuf,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        /// Which embedded record to probe.
        #[arg(long, default_value_t = 0)]
        record: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fine-tune the model over contiguous dataset shards and report
    /// per-round accuracy and tracing success.
    AttackSim {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        authority: PathBuf,
        /// Held-out plain CSV for the accuracy readout.
        #[arg(long)]
        eval_data: PathBuf,
        #[arg(long, default_value_t = 5)]
        parts: usize,
        #[arg(long, default_value_t = 0)]
        record: usize,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Accuracy of a model on a plain CSV, through a key or as a baseline.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score a plain single-block model on raw labels instead.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        pk: Option<PathBuf>,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Retrain on the same data across several group sizes and compare.
    QSweep {
        /// Group sizes to try, comma separated; each is rounded up to a prime.
        #[arg(long, value_delimiter = ',')]
        values: Vec<u64>,
        #[arg(long)]
        data: PathBuf,
        /// Held-out plain CSV; defaults to scoring on the training data.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        users: usize,
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

// ---------------------------------------------------------------------------
// Commands

fn run_keygen(classes: usize, users: usize, seed: u64, out_dir: &Path) -> CmdResult {
    println!("seed: {seed}");
    let params = GroupParams::generate(classes as u64)?;
    let (pk, keys, auth) = gen(&params, users, &mut rng(seed))?;
    std::fs::create_dir_all(out_dir)?;
    println!("group: q={}, p={}", params.q(), params.p());
    let pk_path = out_dir.join("pk.json");
    pk.save(&pk_path)?;
    println!("wrote {}", pk_path.display());
    for sk in &keys {
        let path = out_dir.join(format!("sk_{}.json", sk.id()));
        sk.save(&path)?;
        println!("wrote {}", path.display());
    }
    let auth_path = out_dir.join("authority.json");
    auth.save(&auth_path)?;
    println!("wrote {}", auth_path.display());
    Ok(())
}

fn run_add_user(pk: &Path, authority: &Path, seed: u64, out_dir: &Path) -> CmdResult {
    println!("seed: {seed}");
    let pk = PublicKey::load(pk)?;
    let mut auth = AuthorityState::load(authority)?;
    let out_auth = out_dir.join("authority.json");
    ensure_distinct(&out_auth, &[authority])?;
    let sk = add_user(pk.params(), &mut auth, &mut rng(seed))?;
    std::fs::create_dir_all(out_dir)?;
    let sk_path = out_dir.join(format!("sk_{}.json", sk.id()));
    sk.save(&sk_path)?;
    auth.save(&out_auth)?;
    println!("issued key {}", sk.id());
    println!("wrote {}", sk_path.display());
    println!("wrote {}", out_auth.display());
    Ok(())
}

fn run_gen_data(
    classes: usize,
    per_class: usize,
    dim: usize,
    spacing: f64,
    seed: u64,
    out: &Path,
) -> CmdResult {
    println!("seed: {seed}");
    let ds: LabeledDataset<f64> = gaussian_blobs(classes, per_class, dim, spacing, &mut rng(seed))?;
    ds.save_csv(out)?;
    println!(
        "wrote {} ({} rows, {} features, {} classes)",
        out.display(),
        ds.len(),
        ds.dim(),
        ds.classes()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_encrypt(
    data: &Path,
    pk_path: &Path,
    classes: Option<usize>,
    inject_verification: bool,
    key_paths: &[PathBuf],
    replication: Option<usize>,
    seed: u64,
    out_data: &Path,
    out_meta: &Path,
) -> CmdResult {
    println!("seed: {seed}");
    let mut inputs: Vec<&Path> = vec![data, pk_path];
    inputs.extend(key_paths.iter().map(PathBuf::as_path));
    ensure_distinct(out_data, &inputs)?;
    ensure_distinct(out_meta, &inputs)?;

    let pk = PublicKey::load(pk_path)?;
    let ds = LabeledDataset::<f64>::load_csv(data, classes)?;
    let mut r = rng(seed);
    let mut ed = encrypt_dataset(&pk, &ds, &mut r)?;
    if inject_verification {
        if key_paths.len() < 2 {
            return Err(usage("--inject-verification needs at least two --key files"));
        }
        let keys: Vec<SecretKey> = key_paths
            .iter()
            .map(|p| SecretKey::load(p))
            .collect::<labelcrypt::Result<_>>()?;
        let record = make_verification_record(
            &pk,
            &keys,
            &ProbeSource::UniformInRange(ds.feature_bounds()),
            &mut r,
        )?;
        let copies = replication.unwrap_or_else(|| default_replication(ed.len()));
        ed.inject(record, copies)?;
        println!("embedded verification record ({copies} copies)");
    } else if replication.is_some() {
        return Err(usage("--replication only applies with --inject-verification"));
    }
    ed.save(out_data, out_meta)?;
    println!("wrote {} and {}", out_data.display(), out_meta.display());
    Ok(())
}

fn run_train(
    data: &Path,
    meta: Option<&Path>,
    baseline: bool,
    opts: &TrainOpts,
    seed: u64,
    out: &Path,
) -> CmdResult {
    println!("seed: {seed}");
    let trained = match (baseline, meta) {
        (true, None) => {
            ensure_distinct(out, &[data])?;
            let ds = LabeledDataset::<f64>::load_csv(data, None)?;
            train_plain(&ds, &opts.config(seed))?
        }
        (false, Some(meta)) => {
            ensure_distinct(out, &[data, meta])?;
            let ed = EncryptedDataset::<f64>::load(data, meta)?;
            train(&ed, &opts.config(seed))?
        }
        (true, Some(_)) => return Err(usage("--baseline trains on a plain CSV; drop --meta")),
        (false, None) => return Err(usage("--meta is required unless --baseline")),
    };
    trained.model.save(out)?;
    if let Some(loss) = trained.epoch_loss.last() {
        println!("final epoch loss: {loss:.6}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run_predict(
    model: &Path,
    pk_path: &Path,
    classes: usize,
    features: &[f64],
    key: Option<&Path>,
    seed: u64,
) -> CmdResult {
    println!("seed: {seed}");
    let model = Model::<f64>::load(model)?;
    let pk = PublicKey::load(pk_path)?;
    let deployment = Deployment::new(model, pk, classes)?;
    let emission = deployment.predict(features, &mut rng(seed))?;
    println!("emission: {}", join_floats(&emission));
    if let Some(key) = key {
        let sk = SecretKey::load(key)?;
        match user_decrypt(deployment.pk().params(), classes, &sk, &emission)? {
            Some(label) => println!("label: {label}"),
            None => println!("label: invalid"),
        }
    }
    Ok(())
}

fn run_decrypt(
    key: &Path,
    pk_path: &Path,
    classes: usize,
    emission: &[f64],
    seed: u64,
) -> CmdResult {
    println!("seed: {seed}");
    let sk = SecretKey::load(key)?;
    let pk = PublicKey::load(pk_path)?;
    match user_decrypt(pk.params(), classes, &sk, emission)? {
        Some(label) => println!("label: {label}"),
        None => println!("label: invalid"),
    }
    Ok(())
}

fn run_verify_key(pk_path: &Path, authority: &Path, key: &Path, seed: u64) -> CmdResult {
    println!("seed: {seed}");
    let pk = PublicKey::load(pk_path)?;
    let auth = AuthorityState::load(authority)?;
    let candidate = SecretKey::load(key)?;
    let issued = auth.issued_keys(pk.params());
    // Class count is irrelevant to key comparison; any valid value works.
    let ctx = ArbitrationContext::<f64>::new(pk, 2, issued, Vec::new())?;
    match ctx.verify_key(&candidate) {
        Some(id) => println!("match: issued key {id}"),
        None => println!("match: none"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_verify_leak(
    model: &Path,
    data: &Path,
    meta: &Path,
    authority: &Path,
    trials: usize,
    record: usize,
    seed: u64,
) -> CmdResult {
    println!("seed: {seed}");
    let model = Model::<f64>::load(model)?;
    let ed = EncryptedDataset::<f64>::load(data, meta)?;
    let auth = AuthorityState::load(authority)?;
    let keys = auth.issued_keys(ed.pk().params());
    let ctx = ArbitrationContext::new(
        ed.pk().clone(),
        ed.classes(),
        keys,
        ed.records().to_vec(),
    )?;
    let outcomes = run_leak_trials(&ctx, &model, record, trials, &mut rng(seed))?;
    for t in &outcomes {
        let identified = match t.identified {
            Some(id) => id.to_string(),
            None => "none".into(),
        };
        println!(
            "trial {}: leaker {}, observed {}, identified {}, {}",
            t.trial,
            t.leaker,
            t.observed,
            identified,
            if t.matched() { "match" } else { "MISS" }
        );
    }
    let hits = outcomes.iter().filter(|t| t.matched()).count();
    println!(
        "summary: {hits}/{} identified (accuracy {:.3})",
        outcomes.len(),
        trial_success(&outcomes)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_attack_sim(
    model: &Path,
    data: &Path,
    meta: &Path,
    authority: &Path,
    eval_data: &Path,
    parts: usize,
    record: usize,
    trials: usize,
    opts: &TrainOpts,
    seed: u64,
) -> CmdResult {
    println!("seed: {seed}");
    let model = Model::<f64>::load(model)?;
    let ed = EncryptedDataset::<f64>::load(data, meta)?;
    let auth = AuthorityState::load(authority)?;
    let keys = auth.issued_keys(ed.pk().params());
    let eval_set = LabeledDataset::<f64>::load_csv(eval_data, Some(ed.classes()))?;
    let ctx = ArbitrationContext::new(
        ed.pk().clone(),
        ed.classes(),
        keys.clone(),
        ed.records().to_vec(),
    )?;
    let rounds = finetune_attack(
        &ctx,
        model,
        &ed,
        parts,
        &opts.config(seed),
        &eval_set,
        &keys[0],
        record,
        trials,
        &mut rng(seed),
    )?;
    for r in &rounds {
        println!(
            "round {}: accuracy {:.4}, verification {:.3}",
            r.round + 1,
            r.accuracy,
            r.verification_rate
        );
    }
    Ok(())
}

fn run_eval(
    model: &Path,
    data: &Path,
    baseline: bool,
    pk: Option<&Path>,
    key: Option<&Path>,
    seed: u64,
) -> CmdResult {
    println!("seed: {seed}");
    let model = Model::<f64>::load(model)?;
    let ds = LabeledDataset::<f64>::load_csv(data, None)?;
    let accuracy = if baseline {
        evaluate_plain(&model, &ds)?
    } else {
        let (pk, key) = match (pk, key) {
            (Some(pk), Some(key)) => (pk, key),
            _ => return Err(usage("--pk and --key are required unless --baseline")),
        };
        let pk = PublicKey::load(pk)?;
        let sk = SecretKey::load(key)?;
        let deployment = Deployment::new(model, pk, ds.classes())?;
        deployment.evaluate(&ds, &sk, &mut rng(seed))?
    };
    println!("accuracy: {accuracy:.4}");
    Ok(())
}

fn run_q_sweep(
    values: &[u64],
    data: &Path,
    eval_data: Option<&Path>,
    users: usize,
    opts: &TrainOpts,
    seed: u64,
) -> CmdResult {
    println!("seed: {seed}");
    if values.is_empty() {
        return Err(usage("--values needs at least one group size"));
    }
    let train_set = LabeledDataset::<f64>::load_csv(data, None)?;
    let eval_set = match eval_data {
        Some(path) => LabeledDataset::<f64>::load_csv(path, Some(train_set.classes()))?,
        None => train_set.clone(),
    };
    let mut accuracies = Vec::new();
    for &value in values {
        let params = GroupParams::generate(value.max(train_set.classes() as u64))?;
        let mut r = rng(seed.wrapping_add(value));
        let (pk, keys, _) = gen(&params, users, &mut r)?;
        let mut ed = encrypt_dataset(&pk, &train_set, &mut r)?;
        if keys.len() >= 2 {
            let record = make_verification_record(
                &pk,
                &keys,
                &ProbeSource::UniformInRange(train_set.feature_bounds()),
                &mut r,
            )?;
            ed.inject(record, default_replication(ed.len()))?;
        }
        let trained = train(&ed, &opts.config(seed))?;
        let deployment = Deployment::new(trained.model, pk, train_set.classes())?;
        let accuracy = deployment.evaluate(&eval_set, &keys[0], &mut r)?;
        if params.q() == value {
            println!("q={}: accuracy {:.4}", params.q(), accuracy);
        } else {
            println!("q={} (requested {value}): accuracy {:.4}", params.q(), accuracy);
        }
        accuracies.push(accuracy);
    }
    let lo = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("spread: {:.4}", hi - lo);
    Ok(())
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Keygen { classes, users, seed, out_dir } => {
            run_keygen(classes, users, seed, &out_dir)
        }
        Command::AddUser { pk, authority, seed, out_dir } => {
            run_add_user(&pk, &authority, seed, &out_dir)
        }
        Command::GenData { classes, per_class, dim, spacing, seed, out } => {
            run_gen_data(classes, per_class, dim, spacing, seed, &out)
        }
        Command::Encrypt {
            data,
            pk,
            classes,
            inject_verification,
            keys,
            replication,
            seed,
            out_data,
            out_meta,
        } => run_encrypt(
            &data,
            &pk,
            classes,
            inject_verification,
            &keys,
            replication,
            seed,
            &out_data,
            &out_meta,
        ),
        Command::Train { data, meta, baseline, opts, seed, out } => {
            run_train(&data, meta.as_deref(), baseline, &opts, seed, &out)
        }
        Command::Predict { model, pk, classes, features, key, seed } => {
            run_predict(&model, &pk, classes, &features, key.as_deref(), seed)
        }
        Command::Decrypt { key, pk, classes, emission, seed } => {
            run_decrypt(&key, &pk, classes, &emission, seed)
        }
        Command::VerifyKey { pk, authority, key, seed } => {
            run_verify_key(&pk, &authority, &key, seed)
        }
        Command::VerifyLeak { model, data, meta, authority, trials, record, seed } => {
            run_verify_leak(&model, &data, &meta, &authority, trials, record, seed)
        }
        Command::AttackSim {
            model,
            data,
            meta,
            authority,
            eval_data,
            parts,
            record,
            trials,
            opts,
            seed,
        } => run_attack_sim(
            &model, &data, &meta, &authority, &eval_data, parts, record, trials, &opts, seed,
        ),
        Command::Eval { model, data, baseline, pk, key, seed } => {
            run_eval(&model, &data, baseline, pk.as_deref(), key.as_deref(), seed)
        }
        Command::QSweep { values, data, eval_data, users, opts, seed } => {
            run_q_sweep(&values, &data, eval_data.as_deref(), users, &opts, seed)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}
