//! Label codec: class labels live in the group as powers of the
//! generator, and ciphertext triples map to flat length-3q vectors the
//! classifier can train on.

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupParams};
use crate::num::Real;
use crate::pke::Ciphertext;

/// Length-3q vector: three one-hot blocks when used as a training
/// target, three probability blocks when produced by the classifier.
pub type ConfusedLabel<F> = Vec<F>;

fn check_classes(params: &GroupParams, classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    if classes as u64 > params.q() {
        return Err(Error::TooManyClasses { classes, q: params.q() });
    }
    Ok(())
}

/// Label y (0-based) becomes g1^y.
pub fn encode_label(params: &GroupParams, classes: usize, label: usize) -> Result<GroupElement> {
    check_classes(params, classes)?;
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(params.index_element(label as u64))
}

/// Inverse of [`encode_label`]. Elements whose index falls outside the
/// label range decode to `None`; they appear when a ciphertext is
/// opened with a key it was not issued for.
pub fn decode_label(
    params: &GroupParams,
    classes: usize,
    m: GroupElement,
) -> Result<Option<usize>> {
    check_classes(params, classes)?;
    let k = params.element_index(m)?;
    if k < classes as u64 {
        Ok(Some(k as usize))
    } else {
        Ok(None)
    }
}

/// Transfer function: each ciphertext component becomes a one-hot block
/// of width q, concatenated in (u1, u2, u3) order.
pub fn phi<F: Real>(params: &GroupParams, c: &Ciphertext) -> Result<ConfusedLabel<F>> {
    let q = params.q() as usize;
    let mut out = vec![F::zero(); 3 * q];
    for (block, u) in [c.u1, c.u2, c.u3].into_iter().enumerate() {
        let k = params.element_index(u)?;
        out[block * q + k as usize] = F::one();
    }
    Ok(out)
}

/// First index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax<F: Real>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate().skip(1) {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Inverse transfer: block-wise argmax picks one group element per
/// block. Exact on one-hot vectors; on probability vectors it reads
/// out the most likely triple.
pub fn phi_inv<F: Real>(params: &GroupParams, y: &[F]) -> Result<Ciphertext> {
    let q = params.q() as usize;
    if y.len() != 3 * q {
        return Err(Error::BadLength { expected: 3 * q, actual: y.len() });
    }
    let pick = |block: usize| params.index_element(argmax(&y[block * q..(block + 1) * q]) as u64);
    Ok(Ciphertext { u1: pick(0), u2: pick(1), u3: pick(2) })
}
