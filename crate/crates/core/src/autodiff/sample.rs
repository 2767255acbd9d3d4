use rand::Rng;

use super::AutodiffError;

/// Probabilities of a masked softmax; disallowed entries are exactly 0.
pub fn masked_softmax(logits: &[f64], allowed: &[bool]) -> Result<Vec<f64>, AutodiffError> {
    if logits.len() != allowed.len() {
        return Err(AutodiffError::ShapeMismatch { op: "masked_softmax", left: [1, logits.len()], right: [1, allowed.len()] });
    }
    let m = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(AutodiffError::AllMasked { row: 0 });
    }
    let mut p: Vec<f64> = logits.iter().zip(allowed).map(|(&l, &ok)| if ok { (l - m).exp() } else { 0.0 }).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    Ok(p)
}

/// Draws an index from the masked softmax of `logits` and returns it with its
/// log-probability.
pub fn categorical_sample<R: Rng + ?Sized>(
    logits: &[f64],
    allowed: &[bool],
    rng: &mut R,
) -> Result<(usize, f64), AutodiffError> {
    let p = masked_softmax(logits, allowed)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        last = i;
        acc += pi;
        if u < acc {
            return Ok((i, pi.ln()));
        }
    }
    Ok((last, p[last].ln()))
}

/// Most probable allowed index (lowest index on ties).
pub fn masked_argmax(logits: &[f64], allowed: &[bool]) -> Result<(usize, f64), AutodiffError> {
    let p = masked_softmax(logits, allowed)?;
    let mut best = None;
    for (i, &ok) in allowed.iter().enumerate() {
        if ok && best.is_none_or(|b: usize| logits[i] > logits[b]) {
            best = Some(i);
        }
    }
    let i = best.expect("at least one allowed entry");
    Ok((i, p[i].ln()))
}
