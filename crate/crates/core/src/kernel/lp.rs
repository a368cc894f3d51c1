//! Dense tableau simplex with Bland's rule. Instances are small certificate
//! and multiplier LPs, so the implementation favors reproducibility and
//! cycling-proof pivoting over speed.

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LpError {
    #[error("LP is unbounded below")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("initial basis is singular or infeasible")]
    BadBasis,
}

#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub value: f64,
    pub x: Vec<f64>,
}

const PIVOT_EPS: f64 = 1e-11;
const MAX_ITERS: usize = 50_000;

/// Minimizes c'x subject to Ax = b, x >= 0, from a starting basis given as
/// one column index per row. Callers arrange slack/artificial columns so the
/// starting basis is an identity with b >= 0.
///
/// Bland's rule both ways: entering column is the lowest index with negative
/// reduced cost, leaving row breaks ratio ties by lowest basic label. That
/// makes the outcome deterministic and cycling impossible.
pub fn solve_bland(
    a: &[Vec<f64>],
    b: &[f64],
    c: &[f64],
    basis0: &[usize],
) -> Result<LpOutcome, LpError> {
    let rows = a.len();
    let cols = c.len();
    assert_eq!(b.len(), rows, "rhs length");
    assert_eq!(basis0.len(), rows, "basis length");
    for row in a {
        assert_eq!(row.len(), cols, "row width");
    }

    let mut t: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    let mut basis = basis0.to_vec();

    // reduce the starting basis columns to an identity
    for r in 0..rows {
        let j = basis[r];
        let piv = t[r][j];
        if piv.abs() < PIVOT_EPS {
            return Err(LpError::BadBasis);
        }
        pivot(&mut t, r, j);
    }
    for row in &mut t {
        let rhs = row[cols];
        if rhs < -1e-9 {
            return Err(LpError::BadBasis);
        }
        if rhs < 0.0 {
            row[cols] = 0.0;
        }
    }

    // reduced-cost row
    let mut z: Vec<f64> = c.to_vec();
    z.push(0.0);
    for r in 0..rows {
        let cb = c[basis[r]];
        if cb != 0.0 {
            for j in 0..=cols {
                z[j] -= cb * t[r][j];
            }
        }
    }

    for _ in 0..MAX_ITERS {
        let entering = match (0..cols).find(|j| z[*j] < -PIVOT_EPS) {
            Some(j) => j,
            None => {
                let mut x = vec![0.0; cols];
                for r in 0..rows {
                    x[basis[r]] = t[r][cols].max(0.0);
                }
                let value = basis.iter().zip(&t).map(|(bj, row)| c[*bj] * row[cols]).sum();
                return Ok(LpOutcome { value, x });
            }
        };

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let col = t[r][entering];
            if col > PIVOT_EPS {
                let ratio = t[r][cols].max(0.0) / col;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-12
                            || (ratio <= lratio + 1e-12 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (lr, _) = leave.ok_or(LpError::Unbounded)?;

        pivot(&mut t, lr, entering);
        let ze = z[entering];
        if ze != 0.0 {
            for j in 0..=cols {
                z[j] -= ze * t[lr][j];
            }
        }
        basis[lr] = entering;
    }
    Err(LpError::IterationLimit)
}

fn pivot(t: &mut [Vec<f64>], pr: usize, pc: usize) {
    let piv = t[pr][pc];
    for v in &mut t[pr] {
        *v /= piv;
    }
    let prow = t[pr].clone();
    for (r, row) in t.iter_mut().enumerate() {
        if r == pr {
            continue;
        }
        let factor = row[pc];
        if factor != 0.0 {
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= factor * pv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_along_a_single_slack_row() {
        // min -x1 s.t. x1 + s = 1
        let out = solve_bland(&[vec![1.0, 1.0]], &[1.0], &[-1.0, 0.0], &[1]).unwrap();
        assert!((out.value + 1.0).abs() < 1e-12);
        assert!((out.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_unbounded_direction() {
        // min -x1 s.t. -x1 + s = 1: x1 can grow without bound
        let err = solve_bland(&[vec![-1.0, 1.0]], &[1.0], &[-1.0, 0.0], &[1]).unwrap_err();
        assert_eq!(err, LpError::Unbounded);
    }

    #[test]
    fn solves_a_two_constraint_program() {
        // min -(x1 + 2 x2) s.t. x1 + x2 + s1 = 4, x2 + s2 = 3
        let out = solve_bland(
            &[vec![1.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]],
            &[4.0, 3.0],
            &[-1.0, -2.0, 0.0, 0.0],
            &[2, 3],
        )
        .unwrap();
        assert!((out.value + 7.0).abs() < 1e-12);
        assert!((out.x[0] - 1.0).abs() < 1e-12);
        assert!((out.x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn survives_degenerate_ties() {
        // degenerate rhs: two rows limit the entering column at ratio zero
        let out = solve_bland(
            &[vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]],
            &[0.0, 0.0],
            &[-1.0, 0.0, 0.0],
            &[1, 2],
        )
        .unwrap();
        assert!(out.value.abs() < 1e-12);
    }

    #[test]
    fn rejects_singular_starting_basis() {
        let err = solve_bland(&[vec![0.0, 1.0]], &[1.0], &[0.0, 0.0], &[0]).unwrap_err();
        assert_eq!(err, LpError::BadBasis);
    }
}
