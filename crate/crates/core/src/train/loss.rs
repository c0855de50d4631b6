use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Mean cross entropy of `logits` (one row per example) against `labels`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (rows, classes) = tape.shape(logits);
    if rows != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: labels.len(),
            context: "labels vs logits rows",
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let logp = tape.log_softmax_rows(logits);
    let index: Vec<Option<usize>> = labels.iter().enumerate().map(|(r, &l)| Some(r * classes + l)).collect();
    let picked = tape.gather(logp, index.into(), rows, 1)?;
    let mean = tape.mean(picked)?;
    Ok(tape.neg(mean))
}

/// Mean squared error over all entries.
pub fn mse(tape: &mut Tape, pred: Var, target: &DenseMatrix) -> Result<Var> {
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}
