//! Dense-tableau Phase-I simplex for homogeneous systems over the simplex:
//!
//! ```text
//! find x >= 0 with  sum(x) = 1  and  A x <= 0
//! ```
//!
//! Slack variables `s >= 0` turn each row into `A x + s = 0` and a single
//! artificial `r >= 0` enters the normalization row `sum(x) + r = 1`. Phase I
//! minimizes `r`. Bland's rule keeps the (highly degenerate) pivots finite.

use crate::error::{RceError, Result};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone)]
pub(crate) struct PhaseOne {
    /// Optimal value of the artificial variable.
    pub objective: f64,
    /// Values of the structural variables at the optimal vertex (sum = 1 - objective).
    pub point: Vec<f64>,
    /// Row multipliers `lambda >= 0` read off the slack reduced costs.
    pub multipliers: Vec<f64>,
}

/// `rows` is `m` rows of `n` coefficients each.
pub(crate) fn phase_one(rows: &[Vec<f64>], n: usize) -> Result<PhaseOne> {
    let m = rows.len();
    // Columns: x_0..x_{n-1}, s_0..s_{m-1}, r, rhs.
    let width = n + m + 2;
    let art = n + m;
    let rhs = width - 1;
    let mut tab = vec![vec![0.0; width]; m + 1];
    for (k, row) in rows.iter().enumerate() {
        debug_assert_eq!(row.len(), n);
        tab[k][..n].copy_from_slice(row);
        tab[k][n + k] = 1.0;
    }
    tab[m][..n].iter_mut().for_each(|v| *v = 1.0);
    tab[m][art] = 1.0;
    tab[m][rhs] = 1.0;
    let mut basis: Vec<usize> = (n..n + m).chain(std::iter::once(art)).collect();

    // Reduced costs for min r with r basic in the last row: obj = c - c_B B^-1 A.
    let mut obj = vec![0.0; width];
    for j in 0..width {
        obj[j] = -tab[m][j];
    }
    obj[art] = 0.0;

    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..art).find(|&j| obj[j] < -PIVOT_EPS) else {
            let objective = -obj[rhs];
            let mut point = vec![0.0; n];
            for (row, &var) in basis.iter().enumerate() {
                if var < n {
                    point[var] = tab[row][rhs];
                }
            }
            let multipliers = (0..m).map(|k| obj[n + k].max(0.0)).collect();
            return Ok(PhaseOne {
                objective,
                point,
                multipliers,
            });
        };

        let mut leave: Option<(usize, f64)> = None;
        for (row, line) in tab.iter().enumerate() {
            let a = line[enter];
            if a > PIVOT_EPS {
                let ratio = line[rhs] / a;
                leave = match leave {
                    None => Some((row, ratio)),
                    Some((best, best_ratio)) => {
                        if ratio < best_ratio - 1e-15
                            || ((ratio - best_ratio).abs() <= 1e-15 && basis[row] < basis[best])
                        {
                            Some((row, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
        }
        let Some((pivot_row, _)) = leave else {
            return Err(RceError::Numerical("phase-one objective unbounded below".into()));
        };

        let pivot = tab[pivot_row][enter];
        tab[pivot_row].iter_mut().for_each(|v| *v /= pivot);
        let pivot_line = tab[pivot_row].clone();
        for (row, line) in tab.iter_mut().enumerate() {
            if row != pivot_row {
                let factor = line[enter];
                if factor != 0.0 {
                    line.iter_mut().zip(&pivot_line).for_each(|(v, p)| *v -= factor * p);
                }
            }
        }
        let factor = obj[enter];
        obj.iter_mut().zip(&pivot_line).for_each(|(v, p)| *v -= factor * p);
        basis[pivot_row] = enter;
    }
    Err(RceError::Numerical(format!(
        "simplex did not terminate within {MAX_PIVOTS} pivots"
    )))
}
