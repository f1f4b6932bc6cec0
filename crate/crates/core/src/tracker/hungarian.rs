//! Minimum-cost one-to-one assignment (Kuhn–Munkres with potentials).

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Solves the rectangular assignment problem on `cost` (`rows × cols`).
///
/// `f64::INFINITY` marks a forbidden pair; forbidden pairs are never
/// returned, and a row whose every entry is forbidden stays unassigned. The
/// result maps each row to its column, if any. Among assignments with the
/// most allowed pairs, the total cost is minimal.
pub fn hungarian(cost: &Tensor) -> Result<Vec<Option<usize>>> {
    let (n, m) = match cost.shape() {
        [r, c] => (*r, *c),
        other => return Err(Error::shape(format!("cost must be a matrix, got {other:?}"))),
    };
    if cost.data().iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::NonFinite("cost matrix has NaN or -inf".into()));
    }
    if n == 0 || m == 0 {
        return Ok(vec![None; n]);
    }
    // Forbidden pairs get a penalty larger than any sum of finite costs.
    let finite_span: f64 = cost.data().iter().filter(|v| v.is_finite()).map(|v| v.abs()).sum();
    let big = 2.0 * finite_span + 1.0;
    let transposed = n > m;
    let (rows, cols) = if transposed { (m, n) } else { (n, m) };
    let at = |i: usize, j: usize| {
        let v = if transposed { cost.at2(j, i) } else { cost.at2(i, j) };
        if v.is_finite() {
            v
        } else {
            big
        }
    };

    // 1-based arrays; column 0 is a virtual start.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; n];
    for j in 1..=cols {
        if owner[j] == 0 {
            continue;
        }
        let (r, c) = if transposed { (j - 1, owner[j] - 1) } else { (owner[j] - 1, j - 1) };
        if cost.at2(r, c).is_finite() {
            out[r] = Some(c);
        }
    }
    Ok(out)
}

/// Sum of `cost` over an assignment.
pub fn assignment_cost(cost: &Tensor, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost.at2(r, c)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive minimum over injective maps from the smaller side.
    pub(crate) fn brute_force(cost: &Tensor) -> f64 {
        let (n, m) = (cost.rows(), cost.cols());
        fn go(cost: &Tensor, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, flip: bool) {
            let (n, m) = if flip { (cost.cols(), cost.rows()) } else { (cost.rows(), cost.cols()) };
            if row == n {
                *best = best.min(acc);
                return;
            }
            for c in 0..m {
                if !used[c] {
                    used[c] = true;
                    let v = if flip { cost.at2(c, row) } else { cost.at2(row, c) };
                    go(cost, row + 1, used, acc + v, best, flip);
                    used[c] = false;
                }
            }
        }
        let flip = n > m;
        let mut best = f64::INFINITY;
        go(cost, 0, &mut vec![false; n.max(m)], 0.0, &mut best, flip);
        best
    }

    #[test]
    fn hand_examples() {
        let c = Tensor::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a, vec![Some(0), Some(1)]);
        assert_eq!(assignment_cost(&c, &a), 2.0);

        let mut d = Tensor::filled(&[4, 4], 3.0);
        for i in 0..4 {
            d.set2(i, i, 0.0);
        }
        assert_eq!(hungarian(&d).unwrap(), (0..4).map(Some).collect::<Vec<_>>());

        let s = Tensor::from_rows(&[vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap();
        assert_eq!(hungarian(&s).unwrap(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn forbidden_pairs_are_never_assigned() {
        let inf = f64::INFINITY;
        let c = Tensor::from_parts(vec![2, 2], vec![inf, inf, 0.5, inf]);
        assert_eq!(hungarian(&c).unwrap(), vec![None, Some(0)]);
        // cheaper overall if row 0 took column 0, but that pair is forbidden
        let c = Tensor::from_parts(vec![2, 2], vec![inf, 0.9, 0.0, 0.1]);
        assert_eq!(hungarian(&c).unwrap(), vec![Some(1), Some(0)]);
        assert!(hungarian(&Tensor::from_parts(vec![1, 1], vec![f64::NAN])).is_err());
        assert_eq!(hungarian(&Tensor::zeros(&[3, 0])).unwrap(), vec![None; 3]);
    }

    #[test]
    fn matches_brute_force_on_random_square_and_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for (shape, trials) in [([5, 5], 300), ([4, 6], 100), ([6, 4], 100)] {
            for _ in 0..trials {
                let c = Tensor::from_parts(
                    shape.to_vec(),
                    (0..shape[0] * shape[1]).map(|_| rng.random_range(-5.0..5.0)).collect(),
                );
                let a = hungarian(&c).unwrap();
                let assigned = a.iter().flatten().count();
                assert_eq!(assigned, shape[0].min(shape[1]));
                let mut cols: Vec<usize> = a.iter().flatten().copied().collect();
                cols.sort_unstable();
                cols.dedup();
                assert_eq!(cols.len(), assigned);
                approx::assert_abs_diff_eq!(assignment_cost(&c, &a), brute_force(&c), epsilon = 1e-9);
            }
        }
    }
}
