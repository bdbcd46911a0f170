//! Randomized invariants of the key scheme, the label codec, and the
//! dataset pipeline. Every property draws its randomness through a
//! seeded generator so failures shrink to a reproducible case.

use std::sync::OnceLock;

use labelcrypt::{
    dec, enc, enc_with, encode_label, decode_label, encrypt_dataset, fake, fake_with, gen,
    make_verification_record, phi, phi_inv, samp_dist_with, Ciphertext, GroupParams,
    LabeledDataset, ProbeSource,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Small instances large enough to exercise distinct subgroup sizes.
fn groups() -> &'static [GroupParams] {
    static CELL: OnceLock<Vec<GroupParams>> = OnceLock::new();
    CELL.get_or_init(|| {
        [3, 5, 11].iter().map(|&m| GroupParams::generate(m).unwrap()).collect()
    })
}

fn any_group() -> impl Strategy<Value = &'static GroupParams> {
    (0..groups().len()).prop_map(|i| &groups()[i])
}

fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

proptest! {
    /// The label transfer is a bijection between ciphertext triples and
    /// arg-max patterns: decoding the encoding returns the same triple.
    #[test]
    fn transfer_round_trips(params in any_group(), ks in [any::<u64>(), any::<u64>(), any::<u64>()]) {
        let c = Ciphertext {
            u1: params.index_element(ks[0] % params.q()),
            u2: params.index_element(ks[1] % params.q()),
            u3: params.index_element(ks[2] % params.q()),
        };
        let y: Vec<f64> = phi(params, &c).unwrap();
        prop_assert_eq!(y.iter().filter(|&&v| v == 1.0).count(), 3);
        prop_assert_eq!(phi_inv(params, &y).unwrap(), c);
    }

    /// Every issued key decrypts a well-formed encryption to the same
    /// plaintext, no matter how many keys exist or which randomness was
    /// used.
    #[test]
    fn issued_keys_agree_on_encryptions(
        params in any_group(),
        users in 1usize..6,
        k in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let users = users.min(params.q() as usize);
        let (pk, keys, _) = gen(params, users, &mut rng).unwrap();
        let m = params.index_element(k % params.q());
        let c = enc(&pk, m, &mut rng).unwrap();
        for sk in &keys {
            prop_assert_eq!(dec(params, sk, &c).unwrap(), m);
        }
    }

    /// Issued keys always satisfy the public relation g1^a * g2^b = h.
    #[test]
    fn issued_keys_satisfy_public_relation(
        params in any_group(),
        users in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let users = users.min(params.q() as usize);
        let (pk, keys, _) = gen(params, users, &mut rng).unwrap();
        for sk in &keys {
            prop_assert!(pk.key_matches(sk));
        }
    }

    /// Fake ciphertexts decrypt to pairwise distinct values across the
    /// issued keys: the tag separation is algebraic, not probabilistic.
    #[test]
    fn fake_decryptions_pairwise_distinct(
        params in any_group(),
        users in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let users = users.min(params.q() as usize);
        prop_assume!(users >= 2);
        let (pk, keys, _) = gen(params, users, &mut rng).unwrap();
        let c = fake(&pk, &mut rng);
        let opened: Vec<u64> =
            keys.iter().map(|sk| dec(params, sk, &c).unwrap().residue()).collect();
        for i in 0..opened.len() {
            for j in i + 1..opened.len() {
                prop_assert_ne!(opened[i], opened[j]);
            }
        }
    }

    /// Rerandomization never changes what any issued key sees, whether
    /// the input triple is a real encryption, a fake, or arbitrary
    /// subgroup elements.
    #[test]
    fn rerandomization_preserves_every_decryption(
        params in any_group(),
        users in 1usize..6,
        ks in [any::<u64>(), any::<u64>(), any::<u64>()],
        r in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let users = users.min(params.q() as usize);
        let (pk, keys, _) = gen(params, users, &mut rng).unwrap();
        let c = Ciphertext {
            u1: params.index_element(ks[0] % params.q()),
            u2: params.index_element(ks[1] % params.q()),
            u3: params.index_element(ks[2] % params.q()),
        };
        let c2 = samp_dist_with(&pk, &c, params.exponent(r)).unwrap();
        for sk in &keys {
            prop_assert_eq!(dec(params, sk, &c).unwrap(), dec(params, sk, &c2).unwrap());
        }
    }

    /// Label round trip through the scheme: encode, encrypt, decrypt,
    /// decode gives back the class index.
    #[test]
    fn encrypt_then_decrypt_recovers_label(
        params in any_group(),
        label in any::<usize>(),
        r in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let classes = params.q() as usize;
        let label = label % classes;
        let (pk, keys, _) = gen(params, 1, &mut rng).unwrap();
        let m = encode_label(params, classes, label).unwrap();
        let c = enc_with(&pk, m, params.exponent(r)).unwrap();
        let opened = dec(params, &keys[0], &c).unwrap();
        prop_assert_eq!(decode_label(params, classes, opened).unwrap(), Some(label));
    }

    /// Dataset encryption reuses one ciphertext per class: the number of
    /// distinct triples equals the number of distinct labels, and rows
    /// sharing a label share the triple exactly.
    #[test]
    fn one_ciphertext_per_label(
        params in any_group(),
        labels in prop::collection::vec(0usize..3, 1..40),
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let classes = 3.min(params.q() as usize).max(2);
        let labels: Vec<usize> = labels.into_iter().map(|y| y % classes).collect();
        let features: Vec<Vec<f64>> = labels.iter().map(|&y| vec![y as f64]).collect();
        let ds = LabeledDataset::new(features, labels.clone(), classes).unwrap();
        let (pk, _, _) = gen(params, 1, &mut rng).unwrap();
        let ed = encrypt_dataset(&pk, &ds, &mut rng).unwrap();

        let mut seen: Vec<(usize, Ciphertext)> = Vec::new();
        for (row, &y) in labels.iter().enumerate() {
            let c = ed.ciphertexts()[row];
            match seen.iter().find(|(label, _)| *label == y) {
                Some((_, first)) => prop_assert_eq!(c, *first),
                None => seen.push((y, c)),
            }
        }
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(seen.len(), distinct.len());
        for i in 0..seen.len() {
            for j in i + 1..seen.len() {
                prop_assert_ne!(seen[i].1, seen[j].1);
            }
        }
    }

    /// Injecting a verification record appends copies at the end and
    /// leaves every pre-existing row untouched.
    #[test]
    fn injection_appends_only(
        params in any_group(),
        replication in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let classes = params.q().min(3) as usize;
        let n = 12;
        let features: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, -(i as f64)]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let ds = LabeledDataset::new(features, labels, classes).unwrap();
        let (pk, keys, _) = gen(params, 2.min(params.q() as usize), &mut rng).unwrap();
        prop_assume!(keys.len() >= 2);
        let ed = encrypt_dataset(&pk, &ds, &mut rng).unwrap();

        let rec = make_verification_record(
            &pk,
            &keys,
            &ProbeSource::UniformInRange(ds.feature_bounds()),
            &mut rng,
        ).unwrap();
        let mut injected = ed.clone();
        injected.inject(rec.clone(), replication).unwrap();

        prop_assert_eq!(injected.len(), n + replication);
        prop_assert_eq!(&injected.features()[..n], ed.features());
        prop_assert_eq!(&injected.ciphertexts()[..n], ed.ciphertexts());
        for row in n..n + replication {
            prop_assert_eq!(&injected.features()[row], rec.probe());
            prop_assert_eq!(injected.ciphertexts()[row], *rec.ciphertext());
        }
        prop_assert_eq!(injected.records().len(), 1);
        prop_assert_eq!(injected.records()[0].copies(), replication);
    }

    /// The decoder side of the transfer only looks at the ordering
    /// inside each block, so positive rescaling and shifting of scores
    /// cannot change the recovered triple.
    #[test]
    fn transfer_decoding_ignores_score_scale(
        params in any_group(),
        ks in [any::<u64>(), any::<u64>(), any::<u64>()],
        noise in prop::collection::vec(0.0f64..0.4, 3 * 23),
        scale in 0.5f64..4.0,
        shift in -3.0f64..3.0,
    ) {
        let q = params.q() as usize;
        let c = Ciphertext {
            u1: params.index_element(ks[0] % params.q()),
            u2: params.index_element(ks[1] % params.q()),
            u3: params.index_element(ks[2] % params.q()),
        };
        // Scores with a clear winner per block, then an order-preserving map.
        let mut y: Vec<f64> = phi(params, &c).unwrap();
        for (v, n) in y.iter_mut().zip(&noise) {
            *v += n;
        }
        let moved: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
        prop_assert_eq!(y.len(), 3 * q);
        prop_assert_eq!(phi_inv(params, &y).unwrap(), c);
        prop_assert_eq!(phi_inv(params, &moved).unwrap(), c);
    }

    /// A verification record opens to a different class index under
    /// every key, and the stored expectation map reflects exactly the
    /// keys it was built from.
    #[test]
    fn verification_record_separates_keys(
        params in any_group(),
        users in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let users = users.min(params.q() as usize);
        prop_assume!(users >= 2);
        let (pk, keys, _) = gen(params, users, &mut rng).unwrap();
        let rec = make_verification_record(
            &pk,
            &keys,
            &ProbeSource::UniformInRange(vec![(0.0f64, 1.0); 4]),
            &mut rng,
        ).unwrap();

        prop_assert_eq!(rec.expected().len(), keys.len());
        for sk in &keys {
            let opened = dec(params, sk, rec.ciphertext()).unwrap();
            let idx = params.element_index(opened).unwrap();
            prop_assert_eq!(rec.expected()[&sk.id()], idx);
        }
        let mut values: Vec<u64> = rec.expected().values().copied().collect();
        values.sort_unstable();
        values.dedup();
        prop_assert_eq!(values.len(), keys.len());
    }

    /// Explicitly built fakes honor the r1 != r2 precondition and reject
    /// equal randomness.
    #[test]
    fn fake_requires_split_randomness(
        params in any_group(),
        r in any::<u64>(),
        k in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from(seed);
        let (pk, _, _) = gen(params, 1, &mut rng).unwrap();
        let r = params.exponent(r);
        let u3 = params.index_element(k % params.q());
        prop_assert!(fake_with(&pk, r, r, u3).is_err());
        let r2 = params.exp_add(r, params.exponent(1));
        prop_assert!(fake_with(&pk, r, r2, u3).is_ok());
    }
}
