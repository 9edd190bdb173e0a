//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! Sized for the static allocation LP: a handful of rows and columns, solved
//! once per analysis. Phase I introduces an artificial variable per row and
//! drives their sum to zero; Bland's rule (lowest eligible index enters, ties
//! in the ratio test broken by lowest basic index) guarantees termination.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SimplexError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug)]
pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub objective: f64,
}

const TOL: f64 = 1e-9;

/// Minimize c·x subject to A x = b, x ≥ 0. Rows with negative b are negated
/// first so Phase I starts feasible.
pub(crate) fn solve(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
) -> Result<SimplexResult, SimplexError> {
    let m = a.len();
    let n = c.len();
    assert!(a.iter().all(|row| row.len() == n) && b.len() == m, "shape mismatch");

    // tableau: m constraint rows + objective row; columns 0..n structural,
    // n..n+m artificial, last column RHS
    let cols = n + m + 1;
    let mut t = vec![vec![0.0f64; cols]; m + 1];
    for r in 0..m {
        let flip = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r][j] = flip * a[r][j];
        }
        t[r][n + r] = 1.0;
        t[r][cols - 1] = flip * b[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase I objective: minimize the sum of artificials. Reduced costs start
    // as -(sum of constraint rows) over structural columns.
    for j in 0..cols {
        let s: f64 = (0..m).map(|r| t[r][j]).sum();
        t[m][j] = if (n..n + m).contains(&j) { 0.0 } else { -s };
    }
    pivot_until_optimal(&mut t, &mut basis, n + m)?;
    let phase1 = -t[m][cols - 1];
    if phase1 > 1e-7 {
        return Err(SimplexError::Infeasible);
    }

    // Drive any artificial still basic (at zero) out of the basis.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r][j].abs() > TOL) {
                pivot(&mut t, &mut basis, r, j);
            }
            // a fully zero row is redundant; its artificial stays basic at 0
        }
    }

    // Phase II: real objective, artificials barred from entering.
    for j in 0..cols {
        t[m][j] = if j < n { c[j] } else { 0.0 };
    }
    for r in 0..m {
        if basis[r] < n {
            let cb = c[basis[r]];
            if cb != 0.0 {
                for j in 0..cols {
                    t[m][j] -= cb * t[r][j];
                }
            }
        }
    }
    pivot_until_optimal(&mut t, &mut basis, n)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[r][cols - 1];
        }
    }
    Ok(SimplexResult { x, objective: -t[m][cols - 1] })
}

/// Bland pivoting loop over the first `enterable` columns.
fn pivot_until_optimal(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    enterable: usize,
) -> Result<(), SimplexError> {
    let m = basis.len();
    let cols = t[0].len();
    let limit = 20_000 * (cols + m);
    for _ in 0..limit {
        // entering: lowest index with negative reduced cost
        let Some(e) = (0..enterable).find(|&j| t[m][j] < -TOL) else {
            return Ok(());
        };
        // ratio test; ties by lowest basic variable index
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..m {
            if t[r][e] > TOL {
                let ratio = t[r][cols - 1] / t[r][e];
                let better = match leave {
                    None => true,
                    Some(lr) => {
                        ratio < best - TOL || (ratio < best + TOL && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some(r);
                    best = ratio;
                }
            }
        }
        let Some(r) = leave else {
            return Err(SimplexError::Unbounded);
        };
        pivot(t, basis, r, e);
    }
    Err(SimplexError::IterationLimit)
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let cols = t[0].len();
    let piv = t[row][col];
    for j in 0..cols {
        t[row][j] /= piv;
    }
    for r in 0..t.len() {
        if r != row && t[r][col].abs() > 0.0 {
            let factor = t[r][col];
            for j in 0..cols {
                t[r][j] -= factor * t[row][j];
            }
        }
    }
    basis[row] = col;
}
