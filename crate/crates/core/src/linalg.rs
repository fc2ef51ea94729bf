//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub(crate) const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// Each eigenvector is rephased so that its largest-magnitude entry (lowest
/// index on ties) is real and positive, which makes results reproducible.
pub fn eigh_sorted(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut v);
        vecs.set_column(dst, &v);
    }
    (vals, vecs)
}

/// Rephase `v` so its dominant entry is real positive.
pub fn fix_phase(v: &mut DVector<C64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (k, z) in v.iter().enumerate() {
        let a = z.norm();
        if a > best_abs * (1.0 + 1e-12) {
            best = k;
            best_abs = a;
        }
    }
    if best_abs > 0.0 {
        let ph = v[best].conj() / best_abs;
        v.iter_mut().for_each(|z| *z *= ph);
    }
}

/// Index of the largest-magnitude entry, lowest index on ties.
pub fn dominant_site(v: &DVector<C64>) -> usize {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (k, z) in v.iter().enumerate() {
        if z.norm() > best_abs * (1.0 + 1e-12) {
            best = k;
            best_abs = z.norm();
        }
    }
    best
}

/// Orthonormal basis of the complement of unit vector `v` inside C^n,
/// returned as the columns of an n x (n-1) matrix. Deterministic: Gram-Schmidt
/// of the standard basis against `v`.
pub fn complement_basis(v: &DVector<C64>) -> DMatrix<C64> {
    let n = v.len();
    let mut m = DMatrix::<C64>::zeros(n, n + 1);
    m.set_column(0, v);
    for k in 0..n {
        m[(k, k + 1)] = c(1.0);
    }
    let q = orthonormal_columns(&m, 1e-8);
    q.columns(1, n - 1).into_owned()
}

/// Orthonormalize the columns of `m` (modified Gram-Schmidt, two passes),
/// dropping columns whose residual norm falls below `drop_tol`.
pub fn orthonormal_columns(m: &DMatrix<C64>, drop_tol: f64) -> DMatrix<C64> {
    let mut cols: Vec<DVector<C64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        let n0 = v.norm();
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let n = v.norm();
        if n > drop_tol * n0.max(1e-300) && n > 0.0 {
            cols.push(v / c(n));
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&cols)
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn identity_deviation(m: &DMatrix<C64>) -> f64 {
    max_abs(&(m - DMatrix::<C64>::identity(m.nrows(), m.ncols())))
}

/// `exp(-i t H)` for Hermitian `H` through its eigendecomposition.
pub fn expm_hermitian_dense(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh_sorted(h);
    let phases = DVector::from_iterator(vals.len(), vals.iter().map(|&e| (-I * e * t).exp()));
    &vecs * DMatrix::from_diagonal(&phases) * vecs.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let v = DVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.5, 0.2), C64::new(0.1, -0.7)]);
        let v = &v / c(v.norm());
        let b = complement_basis(&v);
        assert_eq!(b.ncols(), 2);
        assert!(identity_deviation(&(b.adjoint() * &b)) < 1e-13);
        assert!((b.adjoint() * &v).norm() < 1e-13);
    }

    #[test]
    fn complement_of_basis_vector() {
        let mut v = DVector::<C64>::zeros(3);
        v[0] = c(1.0);
        let b = complement_basis(&v);
        assert!(identity_deviation(&(b.adjoint() * &b)) < 1e-14);
        assert!((b.adjoint() * &v).norm() < 1e-14);
    }

    #[test]
    fn eigh_phase_convention() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), c(1.0)]);
        let (vals, vecs) = eigh_sorted(&m);
        assert!((vals[0] - 0.0).abs() < 1e-14 && (vals[1] - 2.0).abs() < 1e-14);
        for k in 0..2 {
            let col = vecs.column(k);
            let d = dominant_site(&col.into_owned());
            assert!(col[d].im.abs() < 1e-15 && col[d].re > 0.0);
        }
    }
}
