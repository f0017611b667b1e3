//! Small dense helpers for the local solves (facet moment systems, bulk
//! Gram systems). Global sparse systems go through the solver module.

use crate::error::{Error, Result};

/// Solves a small dense system by LU with partial pivoting, in place.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    for col in 0..n {
        let mut piv = col;
        let mut mag = a[col][col].abs();
        for row in col + 1..n {
            if a[row][col].abs() > mag {
                mag = a[row][col].abs();
                piv = row;
            }
        }
        if mag == 0.0 {
            return Err(Error::Singular(format!(
                "dense {n}x{n} system is singular at pivot {col}"
            )));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = 1.0 / a[col][col];
        for row in col + 1..n {
            let f = a[row][col] * inv;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] -= f * v;
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        b[col] /= a[col][col];
        for row in 0..col {
            b[row] -= a[row][col] * b[col];
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(a, vec![5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(a, vec![1.0, 2.0]).is_err());
    }
}
