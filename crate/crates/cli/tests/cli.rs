//! End-to-end checks of the binary: exit codes, file outputs, seed
//! echoing, and a full scripted pipeline from data generation to leak
//! tracing.

use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_labelcrypt"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn");
    assert!(
        out.status.success(),
        "command {:?} exited {:?}: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

fn run_fail(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("spawn");
    assert!(!out.status.success(), "command {:?} unexpectedly succeeded", args);
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().expect("utf8 path").to_string()
}

fn grab(stdout: &str, prefix: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no line starting with {prefix:?} in {stdout:?}"))
        .trim()
        .to_string()
}

#[test]
fn keygen_writes_key_material() {
    let dir = TempDir::new().unwrap();
    let keys = path(&dir, "keys");
    let stdout = run_ok(&[
        "keygen", "--classes", "4", "--users", "3", "--seed", "7", "--out-dir", &keys,
    ]);
    assert!(stdout.starts_with("seed: 7\n"), "seed not echoed first: {stdout:?}");
    assert!(stdout.contains("group: q=5, p=11"));
    for name in ["pk.json", "sk_1.json", "sk_2.json", "sk_3.json", "authority.json"] {
        assert!(Path::new(&keys).join(name).exists(), "{name} missing");
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        for name in ["sk_1.json", "authority.json"] {
            let mode = std::fs::metadata(Path::new(&keys).join(name))
                .unwrap()
                .permissions()
                .mode();
            assert_eq!(mode & 0o077, 0, "{name} readable by group/other: {mode:o}");
        }
    }
}

#[test]
fn keygen_rejects_too_many_users() {
    let dir = TempDir::new().unwrap();
    let keys = path(&dir, "keys");
    let (code, stderr) = run_fail(&[
        "keygen", "--classes", "4", "--users", "99", "--seed", "7", "--out-dir", &keys,
    ]);
    assert_eq!(code, 2, "scheme errors are runtime errors");
    assert!(stderr.contains("at most"), "unexpected diagnostic: {stderr}");
}

#[test]
fn bad_flags_are_usage_errors() {
    let (code, _) = run_fail(&["keygen", "--classes", "4", "--bogus"]);
    assert_eq!(code, 1);
    let (code, _) = run_fail(&["no-such-command"]);
    assert_eq!(code, 1);
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = TempDir::new().unwrap();
    let keys = path(&dir, "keys");
    let data = path(&dir, "train.csv");
    run_ok(&["keygen", "--classes", "3", "--users", "2", "--seed", "1", "--out-dir", &keys]);
    run_ok(&[
        "gen-data", "--classes", "3", "--per-class", "5", "--dim", "2", "--seed", "1", "--out",
        &data,
    ]);
    let pk = format!("{keys}/pk.json");
    let meta = path(&dir, "m.json");
    let (code, stderr) = run_fail(&[
        "encrypt", "--data", &data, "--pk", &pk, "--seed", "1", "--out-data", &data,
        "--out-meta", &meta,
    ]);
    assert_eq!(code, 1);
    assert!(stderr.contains("overwrite"), "unexpected diagnostic: {stderr}");

    let auth = format!("{keys}/authority.json");
    let (code, _) = run_fail(&["add-user", "--pk", &pk, "--authority", &auth, "--out-dir", &keys]);
    assert_eq!(code, 1, "add-user must not rewrite the authority file in place");
}

#[test]
fn identical_invocations_are_bit_reproducible() {
    let dir = TempDir::new().unwrap();
    let out_a = path(&dir, "a.csv");
    let out_b = path(&dir, "b.csv");
    let args = |out: &str| {
        vec![
            "gen-data".to_string(),
            "--classes".into(),
            "4".into(),
            "--per-class".into(),
            "20".into(),
            "--dim".into(),
            "3".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            out.into(),
        ]
    };
    run_ok(&args(&out_a).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&out_b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
}

/// gen-data -> keygen -> encrypt -> train -> eval -> predict/decrypt ->
/// add-user -> verify-key -> verify-leak -> attack-sim -> q-sweep, all
/// through the binary.
#[test]
fn full_scripted_pipeline() {
    let dir = TempDir::new().unwrap();
    let keys = path(&dir, "keys");
    let train_csv = path(&dir, "train.csv");
    let test_csv = path(&dir, "test.csv");
    let enc_csv = path(&dir, "enc.csv");
    let meta = path(&dir, "enc.meta.json");
    let model = path(&dir, "model.json");
    let base = path(&dir, "base.json");

    run_ok(&["keygen", "--classes", "4", "--users", "3", "--seed", "7", "--out-dir", &keys]);
    run_ok(&[
        "gen-data", "--classes", "4", "--per-class", "40", "--dim", "4", "--spacing", "4.0",
        "--seed", "7", "--out", &train_csv,
    ]);
    run_ok(&[
        "gen-data", "--classes", "4", "--per-class", "25", "--dim", "4", "--spacing", "4.0",
        "--seed", "8", "--out", &test_csv,
    ]);

    let pk = format!("{keys}/pk.json");
    let sk1 = format!("{keys}/sk_1.json");
    let sk2 = format!("{keys}/sk_2.json");
    let sk3 = format!("{keys}/sk_3.json");
    let auth = format!("{keys}/authority.json");

    let stdout = run_ok(&[
        "encrypt", "--data", &train_csv, "--pk", &pk, "--inject-verification", "--key", &sk1,
        "--key", &sk2, "--key", &sk3, "--seed", "11", "--out-data", &enc_csv, "--out-meta",
        &meta,
    ]);
    assert!(stdout.contains("embedded verification record"));

    run_ok(&[
        "train", "--data", &enc_csv, "--meta", &meta, "--epochs", "50", "--hidden", "12",
        "--seed", "0", "--out", &model,
    ]);
    run_ok(&[
        "train", "--data", &train_csv, "--baseline", "--epochs", "50", "--hidden", "12",
        "--seed", "0", "--out", &base,
    ]);

    let stdout = run_ok(&[
        "eval", "--model", &model, "--data", &test_csv, "--pk", &pk, "--key", &sk2, "--seed",
        "3",
    ]);
    let protected: f64 = grab(&stdout, "accuracy:").parse().unwrap();
    let stdout = run_ok(&["eval", "--model", &base, "--data", &test_csv, "--baseline"]);
    let baseline: f64 = grab(&stdout, "accuracy:").parse().unwrap();
    assert!(protected >= 0.9, "protected accuracy {protected}");
    assert!(baseline >= 0.9, "baseline accuracy {baseline}");

    // An emission decrypts to the same label under every issued key.
    let stdout = run_ok(&[
        "predict", "--model", &model, "--pk", &pk, "--classes", "4", "--features",
        "4.0,0.1,-0.2,0.3", "--key", &sk1, "--seed", "21",
    ]);
    let emission = grab(&stdout, "emission:");
    let label = grab(&stdout, "label:");
    for sk in [&sk2, &sk3] {
        let stdout = run_ok(&[
            "decrypt", "--key", sk, "--pk", &pk, "--classes", "4", "--emission", &emission,
        ]);
        assert_eq!(grab(&stdout, "label:"), label);
    }

    // Key verification: issued keys match, an unissued key does not.
    let stdout = run_ok(&["verify-key", "--pk", &pk, "--authority", &auth, "--key", &sk2]);
    assert_eq!(grab(&stdout, "match:"), "issued key 2");
    let keys2 = path(&dir, "keys2");
    run_ok(&["add-user", "--pk", &pk, "--authority", &auth, "--seed", "9", "--out-dir", &keys2]);
    let sk4 = format!("{keys2}/sk_4.json");
    let auth2 = format!("{keys2}/authority.json");
    let stdout = run_ok(&["verify-key", "--pk", &pk, "--authority", &auth, "--key", &sk4]);
    assert_eq!(grab(&stdout, "match:"), "none", "old authority does not know key 4");
    let stdout = run_ok(&["verify-key", "--pk", &pk, "--authority", &auth2, "--key", &sk4]);
    assert_eq!(grab(&stdout, "match:"), "issued key 4");

    // Tracing: every trial line present, summary all matched.
    let stdout = run_ok(&[
        "verify-leak", "--model", &model, "--data", &enc_csv, "--meta", &meta, "--authority",
        &auth, "--trials", "10", "--seed", "5",
    ]);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("trial ")).count(), 10);
    assert!(stdout.contains("summary: 10/10 identified"), "tracing summary: {stdout}");

    // Fine-tuning attack: tracing survives every round.
    let stdout = run_ok(&[
        "attack-sim", "--model", &model, "--data", &enc_csv, "--meta", &meta, "--authority",
        &auth, "--eval-data", &test_csv, "--parts", "3", "--epochs", "10", "--lr", "0.2",
        "--hidden", "12", "--trials", "9", "--seed", "5",
    ]);
    let rounds: Vec<&str> = stdout.lines().filter(|l| l.starts_with("round ")).collect();
    assert_eq!(rounds.len(), 3);
    for line in rounds {
        let rate: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(rate >= 0.9, "verification dropped: {line}");
    }

    // Group-size sweep over two sizes stays in a narrow band.
    let stdout = run_ok(&[
        "q-sweep", "--values", "5,7", "--data", &train_csv, "--eval-data", &test_csv,
        "--users", "3", "--epochs", "40", "--hidden", "12", "--seed", "5",
    ]);
    let spread: f64 = grab(&stdout, "spread:").parse().unwrap();
    assert!(spread <= 0.1, "q-sweep spread {spread}");
}
