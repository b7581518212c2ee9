//! Cyclic Jacobi eigenvalue solver for small dense symmetric matrices.

use super::Matrix;

/// Sweep cap for the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Off-diagonal Frobenius threshold, scaled by `max(1, ||A||_F)`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Eigenvalues of a symmetric matrix in ascending order.
///
/// Uses cyclic-by-row Jacobi rotations until the off-diagonal Frobenius norm
/// drops below `OFF_DIAGONAL_TOL * max(1, ||A||_F)` or `MAX_SWEEPS` sweeps
/// have run. Only the upper triangle is read.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    assert_eq!(a.rows(), a.cols(), "eigenvalues need a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    let scale = frobenius(&m).max(1.0);
    let threshold = OFF_DIAGONAL_TOL * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal(&m) < threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, p, q);
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn rotate(m: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    // smaller root of t^2 + 2 theta t - 1 = 0
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.rows();

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
}

fn off_diagonal(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn frobenius(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_fixed_point() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(symmetric_eigenvalues(&m), vec![-1.0, 3.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-14);
        assert!((e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn trace_is_preserved() {
        let m = Matrix::from_rows(&[
            vec![4.0, -1.0, 0.5, 0.0],
            vec![-1.0, 3.0, -2.0, 0.1],
            vec![0.5, -2.0, 5.0, 1.0],
            vec![0.0, 0.1, 1.0, 2.0],
        ]);
        let e = symmetric_eigenvalues(&m);
        let tr: f64 = e.iter().sum();
        assert!((tr - 14.0).abs() < 1e-12);
    }

    #[test]
    fn empty_matrix() {
        assert!(symmetric_eigenvalues(&Matrix::zeros(0, 0)).is_empty());
    }
}
