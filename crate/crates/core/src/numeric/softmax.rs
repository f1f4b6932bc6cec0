use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Row-wise softmax computed independently inside each column group.
///
/// `groups[j]` labels column `j`. Within every row the entries of each group
/// sum to one.
pub fn grouped_softmax(logits: &Tensor, groups: &[usize]) -> Result<Tensor> {
    check_groups(logits, groups)?;
    Ok(masked_grouped_softmax(logits, groups, None))
}

pub(crate) fn check_groups(logits: &Tensor, groups: &[usize]) -> Result<()> {
    if logits.shape().len() != 2 || logits.cols() != groups.len() {
        return Err(Error::shape(format!(
            "{} group labels for logits of shape {:?}",
            groups.len(),
            logits.shape()
        )));
    }
    Ok(())
}

/// Grouped softmax where `allowed` (row-major, same size as `logits`) removes
/// entries from their group. Removed entries come out as exactly zero.
pub(crate) fn masked_grouped_softmax(
    logits: &Tensor,
    groups: &[usize],
    allowed: Option<&[bool]>,
) -> Tensor {
    let (rows, cols) = (logits.rows(), logits.cols());
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut out = vec![0.0; rows * cols];
    let mut max = vec![f64::NEG_INFINITY; n_groups];
    let mut denom = vec![0.0; n_groups];
    for r in 0..rows {
        let row = logits.row(r);
        let ok = |j: usize| allowed.is_none_or(|a| a[r * cols + j]);
        max.fill(f64::NEG_INFINITY);
        denom.fill(0.0);
        for j in 0..cols {
            if ok(j) {
                max[groups[j]] = max[groups[j]].max(row[j]);
            }
        }
        for j in 0..cols {
            if ok(j) {
                let e = (row[j] - max[groups[j]]).exp();
                out[r * cols + j] = e;
                denom[groups[j]] += e;
            }
        }
        for j in 0..cols {
            if ok(j) {
                out[r * cols + j] /= denom[groups[j]];
            }
        }
    }
    Tensor::from_parts(vec![rows, cols], out)
}

/// Vector-Jacobian product of the grouped softmax given its output `y`.
pub(crate) fn grouped_softmax_backward(
    y: &Tensor,
    dy: &Tensor,
    groups: &[usize],
    allowed: Option<&[bool]>,
) -> Tensor {
    let (rows, cols) = (y.rows(), y.cols());
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut dot = vec![0.0; n_groups];
    let mut dx = vec![0.0; rows * cols];
    for r in 0..rows {
        dot.fill(0.0);
        let ok = |j: usize| allowed.is_none_or(|a| a[r * cols + j]);
        for j in 0..cols {
            if ok(j) {
                dot[groups[j]] += y.at2(r, j) * dy.at2(r, j);
            }
        }
        for j in 0..cols {
            if ok(j) {
                dx[r * cols + j] = y.at2(r, j) * (dy.at2(r, j) - dot[groups[j]]);
            }
        }
    }
    Tensor::from_parts(vec![rows, cols], dx)
}
