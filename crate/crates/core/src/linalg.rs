//! Dense solves for the small symmetric positive-definite systems of the
//! equations of motion.

/// Largest system handled: trunk x, y and four joint coordinates.
pub const MAX_DOF: usize = 6;

pub type Matrix = [[f64; MAX_DOF]; MAX_DOF];
pub type Vector = [f64; MAX_DOF];

/// Solves `a·x = b` for the leading `n×n` block of a symmetric positive
/// definite `a` by Cholesky factorization. Returns `None` when a pivot is not
/// strictly positive.
pub fn solve_spd(a: &Matrix, b: &Vector, n: usize) -> Option<Vector> {
    let mut l = [[0.0; MAX_DOF]; MAX_DOF];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = libm::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; MAX_DOF];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; MAX_DOF];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
