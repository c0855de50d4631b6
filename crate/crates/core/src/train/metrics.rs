use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("accuracy of no predictions"));
    }
    if preds.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: preds.len(),
            context: "predictions vs labels",
        });
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic, with tied scores
/// sharing their mean rank.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("AUROC of no scores"));
    }
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: positive.len(),
            got: scores.len(),
            context: "scores vs labels",
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Coefficient of determination averaged over target columns. A column with
/// constant targets scores 1 if predicted exactly and 0 otherwise.
pub fn r2(preds: &DenseMatrix, targets: &DenseMatrix) -> Result<f64> {
    if preds.shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "r2",
            lhs: preds.shape(),
            rhs: targets.shape(),
        });
    }
    if targets.is_empty() {
        return Err(Error::Empty("R² of no targets"));
    }
    let (n, d) = targets.shape();
    let mut total = 0.0;
    for c in 0..d {
        let mean = (0..n).map(|r| targets[(r, c)]).sum::<f64>() / n as f64;
        let ss_tot: f64 = (0..n).map(|r| (targets[(r, c)] - mean).powi(2)).sum();
        let ss_res: f64 = (0..n).map(|r| (targets[(r, c)] - preds[(r, c)]).powi(2)).sum();
        total += if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    Ok(total / d as f64)
}
