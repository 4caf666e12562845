//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON * 1e-3, 100_000)
        .unwrap_or_else(|| m.clone().symmetric_eigen());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigen-decomposition of a complex Hermitian matrix, eigenvalues ascending.
pub fn herm_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON * 1e-3, 100_000)
        .unwrap_or_else(|| m.clone().symmetric_eigen());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Matrix exponential of a real matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Matrix exponential of a complex matrix.
pub fn expm_c(a: &DMatrix<C64>) -> DMatrix<C64> {
    a.exp()
}

/// Spectral norm ‖A‖₂.
pub fn op_norm(a: &DMatrix<C64>) -> f64 {
    let (vals, _) = herm_eigen(&(a.adjoint() * a));
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Largest entry of |R Rᵀ − 1|.
pub fn orthogonality_defect(r: &DMatrix<f64>) -> f64 {
    let p = r * r.transpose();
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - target).abs());
        }
    }
    worst
}

/// Pfaffian of a complex antisymmetric matrix (Parlett–Reid with pivoting).
pub fn pfaffian(a: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    if n % 2 == 1 {
        return C64::new(0.0, 0.0);
    }
    let mut m = a.clone();
    let mut pf = C64::new(1.0, 0.0);
    let mut k = 0;
    while k + 1 < n {
        let mut piv = k + 1;
        let mut best = m[(k, k + 1)].norm();
        for i in (k + 2)..n {
            let v = m[(k, i)].norm();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if piv != k + 1 {
            m.swap_rows(k + 1, piv);
            m.swap_columns(k + 1, piv);
            pf = -pf;
        }
        let p = m[(k, k + 1)];
        if p.norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        pf *= p;
        if k + 2 < n {
            let tau: DVector<C64> = DVector::from_iterator(
                n - k - 2,
                ((k + 2)..n).map(|i| m[(k, i)] / p),
            );
            let col: DVector<C64> =
                DVector::from_iterator(n - k - 2, ((k + 2)..n).map(|i| m[(i, k + 1)]));
            for (ii, i) in ((k + 2)..n).enumerate() {
                for (jj, j) in ((k + 2)..n).enumerate() {
                    let upd = tau[ii] * col[jj] - col[ii] * tau[jj];
                    m[(i, j)] += upd;
                }
            }
        }
        k += 2;
    }
    pf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_eigen_reconstructs_degenerate_matrix() {
        let n = 12;
        let mut h = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let x = ((i * 7 + j * 3) % 5) as f64 - 2.0;
                let y = ((i * 2 + j * 5) % 7) as f64 - 3.0;
                h[(i, j)] = C64::new(x + ((j * 7 + i * 3) % 5) as f64 - 2.0, y - (((j * 2 + i * 5) % 7) as f64 - 3.0));
            }
        }
        let block = h.clone();
        let mut big = DMatrix::<C64>::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&block);
        big.view_mut((n, n), (n, n)).copy_from(&block);
        let (vals, vecs) = herm_eigen(&big);
        let d = DMatrix::from_diagonal(&DVector::from_iterator(2 * n, vals.iter().map(|v| C64::new(*v, 0.0))));
        assert!((&vecs * d * vecs.adjoint() - &big).camax() < 1e-12);
        assert!((vecs.adjoint() * &vecs - DMatrix::identity(2 * n, 2 * n)).camax() < 1e-12);
    }

    #[test]
    fn pfaffian_of_4x4_matches_formula() {
        let v = [0.3, -1.2, 0.7, 2.0, 0.1, -0.4];
        let mut a = DMatrix::<C64>::zeros(4, 4);
        let mut idx = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                a[(i, j)] = C64::new(v[idx], 0.5 * v[idx]);
                a[(j, i)] = -a[(i, j)];
                idx += 1;
            }
        }
        let expect = a[(0, 1)] * a[(2, 3)] - a[(0, 2)] * a[(1, 3)] + a[(0, 3)] * a[(1, 2)];
        assert!((pfaffian(&a) - expect).norm() < 1e-13);
    }

    #[test]
    fn pfaffian_squares_to_determinant() {
        let n = 6;
        let mut a = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let x = ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0;
                a[(i, j)] = C64::new(x, 0.2 * (i as f64 - j as f64));
                a[(j, i)] = -a[(i, j)];
            }
        }
        let pf = pfaffian(&a);
        let det = a.clone().determinant();
        assert!((pf * pf - det).norm() < 1e-10 * det.norm().max(1.0));
    }
}
