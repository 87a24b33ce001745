//! Eigenvalues of small dense symmetric matrices by cyclic Jacobi rotations.

use crate::error::{domain, Result};

/// Sweeps stop once the off-diagonal Frobenius norm drops below this.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
const MAX_DIM: usize = 1000;

fn validate(matrix: &[Vec<f64>]) -> Result<usize> {
    let n = matrix.len();
    if n == 0 {
        return domain("matrix is empty");
    }
    if n > MAX_DIM {
        return domain(format!("matrix of size {n} exceeds the supported {MAX_DIM}"));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return domain(format!("row {i} has {} entries, expected {n}", row.len()));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return domain(format!("row {i} has non-finite entries"));
        }
    }
    let scale = matrix.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[i][j] - matrix[j][i]).abs() > 1e-12 * scale {
                return domain(format!("matrix is not symmetric at ({i}, {j})"));
            }
        }
    }
    Ok(n)
}

fn off_diagonal_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i][j] * a[i][j];
            }
        }
    }
    sum.sqrt()
}

/// All eigenvalues of a symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = validate(matrix)?;
    let mut a: Vec<Vec<f64>> = matrix.to_vec();

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= OFF_DIAGONAL_TOLERANCE {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                // rotation angle zeroing a[p][q]
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

/// Second-smallest eigenvalue of a symmetric matrix.
pub fn lambda2(matrix: &[Vec<f64>]) -> Result<f64> {
    let eig = symmetric_eigenvalues(matrix)?;
    if eig.len() < 2 {
        return domain("second eigenvalue needs at least a 2x2 matrix");
    }
    Ok(eig[1])
}
