//! Lanczos approximation of `exp(-i s A) v` for Hermitian `A` given as a
//! matrix-vector product.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::linalg::I;

/// Largest Krylov dimension before the time step is split.
pub const MAX_KRYLOV: usize = 40;

/// Work counters of one exponential.
#[derive(Clone, Copy, Debug, Default)]
pub struct KrylovStats {
    pub matvecs: usize,
    pub splits: usize,
}

/// `out = exp(-i s A) v`, with relative accuracy `tol` in the 2-norm.
/// `apply(x, y)` must overwrite `y` with `A x`.
pub fn expm_apply<F>(apply: &mut F, v: &[C64], s: f64, tol: f64, out: &mut [C64]) -> KrylovStats
where
    F: FnMut(&[C64], &mut [C64]),
{
    let mut stats = KrylovStats::default();
    split_exponential(apply, v, s, tol, out, &mut stats, 0);
    stats
}

fn split_exponential<F>(apply: &mut F, v: &[C64], s: f64, tol: f64, out: &mut [C64], stats: &mut KrylovStats, depth: u32)
where
    F: FnMut(&[C64], &mut [C64]),
{
    if lanczos_step(apply, v, s, tol, out, stats) {
        return;
    }
    assert!(depth < 30, "Krylov exponential failed to converge");
    stats.splits += 1;
    let mut mid = vec![C64::new(0.0, 0.0); v.len()];
    split_exponential(apply, v, 0.5 * s, 0.5 * tol, &mut mid, stats, depth + 1);
    split_exponential(apply, &mid, 0.5 * s, 0.5 * tol, out, stats, depth + 1);
}

/// One Lanczos exponential; returns false if it did not converge.
fn lanczos_step<F>(apply: &mut F, v: &[C64], s: f64, tol: f64, out: &mut [C64], stats: &mut KrylovStats) -> bool
where
    F: FnMut(&[C64], &mut [C64]),
{
    let n = v.len();
    let beta0 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if beta0 == 0.0 || s == 0.0 {
        out.copy_from_slice(v);
        return true;
    }
    let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|z| z / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); n];
    let kmax = MAX_KRYLOV.min(n);
    for k in 0..kmax {
        apply(&basis[k], &mut w);
        stats.matvecs += 1;
        let a = dot(&basis[k], &w).re;
        alpha.push(a);
        // Three-term recurrence, then one Gram-Schmidt pass to mop up.
        for (wi, qi) in w.iter_mut().zip(&basis[k]) {
            *wi -= a * qi;
        }
        if k > 0 {
            let bp = beta[k - 1];
            for (wi, qi) in w.iter_mut().zip(&basis[k - 1]) {
                *wi -= bp * qi;
            }
        }
        for q in &basis {
            let p = dot(q, &w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= p * qi;
            }
        }
        let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let m = k + 1;
        let (coef, last) = small_exponential(&alpha, &beta, s);
        let invariant = b <= 1e-13 * (1.0 + a.abs());
        let err = b * last;
        // Relative error; nothing below roundoff is attainable.
        if invariant || err <= tol.max(4.0 * f64::EPSILON) || m == n {
            out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for (q, cq) in basis.iter().zip(coef.iter()) {
                let f = cq * beta0;
                for (o, qi) in out.iter_mut().zip(q) {
                    *o += f * qi;
                }
            }
            return true;
        }
        if m == kmax {
            return false;
        }
        beta.push(b);
        basis.push(w.iter().map(|z| z / b).collect());
    }
    false
}

/// `exp(-i s T) e_1` for the tridiagonal `T`, and the modulus of its last entry.
fn small_exponential(alpha: &[f64], beta: &[f64], s: f64) -> (Vec<C64>, f64) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        t[(k, k)] = alpha[k];
        if k + 1 < m {
            t[(k, k + 1)] = beta[k];
            t[(k + 1, k)] = beta[k];
        }
    }
    let eig = t.symmetric_eigen();
    let mut y = DVector::<C64>::zeros(m);
    for j in 0..m {
        let w = eig.eigenvectors[(0, j)] * (-I * s * eig.eigenvalues[j]).exp();
        for k in 0..m {
            y[k] += w * eig.eigenvectors[(k, j)];
        }
    }
    let last = y[m - 1].norm();
    (y.iter().copied().collect(), last)
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}
