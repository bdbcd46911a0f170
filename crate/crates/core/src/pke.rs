//! Multi-key public-key encryption over [`GroupParams`].
//!
//! One public key, many secret keys. Every issued key decrypts a real
//! ciphertext to the same plaintext; a fake ciphertext (not produced by
//! `enc`) decrypts to a different element under every key, which is what
//! makes leaked keys traceable. Secret keys are pairs (a, b) on the line
//! a = a1 + (b1 - b) * t, so the authority can mint more of them after
//! setup without touching ciphertexts already issued.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Exponent, GroupElement, GroupParams};

/// Encryption key; carries the group so one file describes a deployment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PublicKeyFile", into = "PublicKeyFile")]
pub struct PublicKey {
    params: GroupParams,
    g2: GroupElement,
    h: GroupElement,
}

#[derive(Serialize, Deserialize)]
struct PublicKeyFile {
    q: u64,
    p: u64,
    g1: u64,
    g2: u64,
    h: u64,
}

impl TryFrom<PublicKeyFile> for PublicKey {
    type Error = Error;

    fn try_from(f: PublicKeyFile) -> Result<Self> {
        let params = GroupParams::from_parts(f.q, f.p, f.g1)?;
        let g2 = params.element(f.g2)?;
        let h = params.element(f.h)?;
        if g2 == params.identity() {
            return Err(Error::Format("g2 must not be the identity".into()));
        }
        Ok(PublicKey { params, g2, h })
    }
}

impl From<PublicKey> for PublicKeyFile {
    fn from(pk: PublicKey) -> Self {
        PublicKeyFile {
            q: pk.params.q(),
            p: pk.params.p(),
            g1: pk.params.generator().residue(),
            g2: pk.g2.residue(),
            h: pk.h.residue(),
        }
    }
}

impl PublicKey {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::fsutil::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::fsutil::read_json(path)
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn g2(&self) -> GroupElement {
        self.g2
    }

    pub fn h(&self) -> GroupElement {
        self.h
    }

    /// Whether (a, b) satisfies g1^a * g2^b = h. True for every key the
    /// authority issues, false (except by luck) for made-up pairs.
    pub fn key_matches(&self, sk: &SecretKey) -> bool {
        let lhs = self.params.mul(
            self.params.pow(self.params.generator(), sk.a),
            self.params.pow(self.g2, sk.b),
        );
        lhs == self.h
    }
}

/// One user's decryption key. `id` is the issue position (1-based);
/// id 0 marks keys that never came from the authority.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    #[serde(rename = "j")]
    id: u32,
    a: Exponent,
    b: Exponent,
}

impl SecretKey {
    pub fn new(id: u32, a: Exponent, b: Exponent) -> Self {
        SecretKey { id, a, b }
    }

    /// Written with owner-only permissions where the platform allows.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::fsutil::write_json_secret(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::fsutil::read_json(path)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn a(&self) -> Exponent {
        self.a
    }

    pub fn b(&self) -> Exponent {
        self.b
    }
}

/// Master secrets kept by the issuing authority. `issued_b` holds the b
/// component of every key in issue order, so key j is reconstructible
/// and new keys can be added while old ones stay valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorityState {
    t: Exponent,
    a1: Exponent,
    b1: Exponent,
    issued_b: Vec<Exponent>,
}

impl AuthorityState {
    /// Written with owner-only permissions where the platform allows.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::fsutil::write_json_secret(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::fsutil::read_json(path)
    }

    /// Restores a state from its components; `issued_b` must start with
    /// b1 and contain no duplicates.
    pub fn from_parts(
        params: &GroupParams,
        t: Exponent,
        a1: Exponent,
        b1: Exponent,
        issued_b: Vec<Exponent>,
    ) -> Result<Self> {
        if t.value() == 0 {
            return Err(Error::Format("authority secret t must be nonzero".into()));
        }
        if issued_b.first() != Some(&b1) {
            return Err(Error::Format("issued_b must start with b1".into()));
        }
        if issued_b.len() as u64 > params.q() {
            return Err(Error::Format("more issued tags than group order".into()));
        }
        for (i, b) in issued_b.iter().enumerate() {
            if issued_b[..i].contains(b) {
                return Err(Error::Format(format!("duplicate issued tag {}", b.value())));
            }
        }
        Ok(AuthorityState { t, a1, b1, issued_b })
    }

    pub fn key_count(&self) -> usize {
        self.issued_b.len()
    }

    fn derive(&self, params: &GroupParams, id: u32, b: Exponent) -> SecretKey {
        // a_j = a1 + (b1 - b_j) * t keeps g1^a * g2^b = h for every key.
        let a = params.exp_add(self.a1, params.exp_mul(params.exp_sub(self.b1, b), self.t));
        SecretKey::new(id, a, b)
    }

    /// Recomputes the full key list in issue order.
    pub fn issued_keys(&self, params: &GroupParams) -> Vec<SecretKey> {
        self.issued_b
            .iter()
            .enumerate()
            .map(|(i, &b)| self.derive(params, (i + 1) as u32, b))
            .collect()
    }

    /// Issues a key with a caller-chosen tag. Fails if the tag is taken
    /// or the tag space (q values) is used up.
    pub fn issue_with(&mut self, params: &GroupParams, b: Exponent) -> Result<SecretKey> {
        if self.issued_b.len() as u64 >= params.q() {
            return Err(Error::KeySpaceExhausted { q: params.q() });
        }
        if self.issued_b.contains(&b) {
            return Err(Error::InvalidArgument(format!("tag {} already issued", b.value())));
        }
        self.issued_b.push(b);
        Ok(self.derive(params, self.issued_b.len() as u32, b))
    }
}

/// Ciphertext triple; every component lives in the subgroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    pub u1: GroupElement,
    pub u2: GroupElement,
    pub u3: GroupElement,
}

impl Ciphertext {
    /// Re-checks subgroup membership, for triples read from files.
    pub fn validate(&self, params: &GroupParams) -> Result<()> {
        for u in [self.u1, self.u2, self.u3] {
            params.element(u.residue())?;
        }
        Ok(())
    }
}

/// Deterministic setup from explicit master secrets; returns the public
/// key, the first secret key (tag b1), and the authority state.
pub fn gen_with(
    params: &GroupParams,
    t: Exponent,
    a1: Exponent,
    b1: Exponent,
) -> Result<(PublicKey, SecretKey, AuthorityState)> {
    if t.value() == 0 {
        return Err(Error::InvalidArgument("master secret t must be nonzero".into()));
    }
    let g2 = params.pow(params.generator(), t);
    let h = params.mul(params.pow(params.generator(), a1), params.pow(g2, b1));
    let pk = PublicKey { params: params.clone(), g2, h };
    let auth = AuthorityState { t, a1, b1, issued_b: vec![b1] };
    let sk1 = auth.derive(params, 1, b1);
    Ok((pk, sk1, auth))
}

/// Creates a public key plus `users` secret keys (1 <= users <= q).
pub fn gen<R: Rng + ?Sized>(
    params: &GroupParams,
    users: usize,
    rng: &mut R,
) -> Result<(PublicKey, Vec<SecretKey>, AuthorityState)> {
    if users == 0 {
        return Err(Error::InvalidArgument("at least one user key is required".into()));
    }
    if users as u64 > params.q() {
        return Err(Error::TooManyKeys { requested: users, q: params.q() });
    }
    let t = params.sample_nonzero_exponent(rng);
    let a1 = params.sample_exponent(rng);
    let b1 = params.sample_exponent(rng);
    let (pk, sk1, mut auth) = gen_with(params, t, a1, b1)?;
    let mut keys = vec![sk1];
    for _ in 1..users {
        keys.push(add_user(params, &mut auth, rng)?);
    }
    Ok((pk, keys, auth))
}

/// Issues one more key with a fresh random tag; existing keys and
/// ciphertexts are untouched.
pub fn add_user<R: Rng + ?Sized>(
    params: &GroupParams,
    auth: &mut AuthorityState,
    rng: &mut R,
) -> Result<SecretKey> {
    if auth.issued_b.len() as u64 >= params.q() {
        return Err(Error::KeySpaceExhausted { q: params.q() });
    }
    let b = loop {
        let candidate = params.sample_exponent(rng);
        if !auth.issued_b.contains(&candidate) {
            break candidate;
        }
    };
    auth.issue_with(params, b)
}

/// Encrypts with explicit randomness r: (g1^r, g2^r, h^r * m).
pub fn enc_with(pk: &PublicKey, m: GroupElement, r: Exponent) -> Result<Ciphertext> {
    let params = pk.params();
    params.element(m.residue())?;
    Ok(Ciphertext {
        u1: params.pow(params.generator(), r),
        u2: params.pow(pk.g2, r),
        u3: params.mul(params.pow(pk.h, r), m),
    })
}

pub fn enc<R: Rng + ?Sized>(pk: &PublicKey, m: GroupElement, rng: &mut R) -> Result<Ciphertext> {
    let r = pk.params().sample_exponent(rng);
    enc_with(pk, m, r)
}

/// Decrypts as u3 / (u1^a * u2^b). For the real distribution this is m
/// under every issued key; for the fake distribution the result varies
/// with the key's tag.
pub fn dec(params: &GroupParams, sk: &SecretKey, c: &Ciphertext) -> Result<GroupElement> {
    c.validate(params)?;
    let mask = params.mul(params.pow(c.u1, sk.a), params.pow(c.u2, sk.b));
    Ok(params.div(c.u3, mask))
}

/// Fake ciphertext with explicit randomness: (g1^r1, g2^r2, u3) with
/// r1 != r2. Decryptions under keys with different tags differ by
/// g2^((r2-r1)(b-b')), never the identity.
pub fn fake_with(
    pk: &PublicKey,
    r1: Exponent,
    r2: Exponent,
    u3: GroupElement,
) -> Result<Ciphertext> {
    if r1 == r2 {
        return Err(Error::InvalidArgument("fake ciphertext needs r1 != r2".into()));
    }
    let params = pk.params();
    params.element(u3.residue())?;
    Ok(Ciphertext {
        u1: params.pow(params.generator(), r1),
        u2: params.pow(pk.g2, r2),
        u3,
    })
}

pub fn fake<R: Rng + ?Sized>(pk: &PublicKey, rng: &mut R) -> Ciphertext {
    let params = pk.params();
    let r1 = params.sample_exponent(rng);
    let r2 = loop {
        let candidate = params.sample_exponent(rng);
        if candidate != r1 {
            break candidate;
        }
    };
    let u3 = params.sample_element(rng);
    fake_with(pk, r1, r2, u3).expect("r1 != r2 by construction")
}

/// Rerandomizes with explicit r: multiplies the triple by (g1^r, g2^r,
/// h^r). Decryption under any issued key is unchanged, for real and
/// fake ciphertexts alike.
pub fn samp_dist_with(pk: &PublicKey, c: &Ciphertext, r: Exponent) -> Result<Ciphertext> {
    let params = pk.params();
    c.validate(params)?;
    Ok(Ciphertext {
        u1: params.mul(params.pow(params.generator(), r), c.u1),
        u2: params.mul(params.pow(pk.g2, r), c.u2),
        u3: params.mul(params.pow(pk.h, r), c.u3),
    })
}

pub fn samp_dist<R: Rng + ?Sized>(
    pk: &PublicKey,
    c: &Ciphertext,
    rng: &mut R,
) -> Result<Ciphertext> {
    let r = pk.params().sample_exponent(rng);
    samp_dist_with(pk, c, r)
}

/// Random (a, b) pair rejected until it violates the public relation;
/// stands in for an attacker guessing a key. Carries id 0.
pub fn forge_key<R: Rng + ?Sized>(pk: &PublicKey, rng: &mut R) -> SecretKey {
    let params = pk.params();
    loop {
        let sk = SecretKey::new(0, params.sample_exponent(rng), params.sample_exponent(rng));
        if !pk.key_matches(&sk) {
            return sk;
        }
    }
}
