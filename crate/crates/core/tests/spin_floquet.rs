use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use histent_core::kicked_top::{build_spin_sector, floquet_operator, quasienergy_spacings, KickedTopParams};
use histent_core::linalg::{expm_hermitian_dense, identity_deviation, max_abs};

fn half_integer() -> impl Strategy<Value = f64> {
    (1u32..=40).prop_map(|n| n as f64 / 2.0)
}

fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn angular_momentum_algebra(j in half_integer()) {
        let s = build_spin_sector(j).unwrap();
        let i = C64::new(0.0, 1.0);
        prop_assert!(max_abs(&(commutator(&s.jx, &s.jy) - &s.jz * i)) < 1e-12);
        prop_assert!(max_abs(&(commutator(&s.jy, &s.jz) - &s.jx * i)) < 1e-12);
        prop_assert!(max_abs(&(commutator(&s.jz, &s.jx) - &s.jy * i)) < 1e-12);
        let casimir = &s.jx * &s.jx + &s.jy * &s.jy + &s.jz * &s.jz;
        let target = DMatrix::<C64>::identity(s.dim(), s.dim()) * C64::new(j * (j + 1.0), 0.0);
        prop_assert!(max_abs(&(casimir - target)) < 1e-12);
        for (k, &m) in s.jy_values.iter().enumerate() {
            prop_assert!((m - (-j + k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn floquet_operator_is_unitary(j in 1u32..=60, k in -20.0f64..20.0, p in 0.0f64..3.2, beta in -0.5f64..0.5) {
        let s = build_spin_sector(j as f64).unwrap();
        let u = floquet_operator(&s, &KickedTopParams { k, p, tau: 1.0, beta }).unwrap();
        prop_assert!(identity_deviation(&(u.adjoint() * &u)) < 1e-10);
    }

    #[test]
    fn spacing_statistics_are_normalized(j in 5u32..=40, k in 1.0f64..12.0) {
        let s = build_spin_sector(j as f64).unwrap();
        let u = floquet_operator(&s, &KickedTopParams { k, ..KickedTopParams::default() }).unwrap();
        let Ok(stats) = quasienergy_spacings(&u) else { return Ok(()) };
        let mean = stats.spacings.iter().sum::<f64>() / stats.spacings.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-10);
        prop_assert!(stats.spacings.iter().all(|&x| x >= 0.0));
        prop_assert!((0.0..=1.0).contains(&stats.mean_r));
        prop_assert!(stats.quasienergies.iter().all(|&q| (0.0..2.0 * std::f64::consts::PI).contains(&q)));
    }

    /// The one-period operator built by dense exponentials from generators
    /// conjugated by an arbitrary unitary has the same quasienergies.
    #[test]
    fn spectrum_is_conjugation_invariant(j in 2u32..=12, seed in any::<u64>(), k in 0.5f64..8.0) {
        let s = build_spin_sector(j as f64).unwrap();
        let params = KickedTopParams { k, ..KickedTopParams::default() };
        let v = random_unitary(s.dim(), seed);
        let jy = &v * &s.jy * v.adjoint();
        let jz = &v * &s.jz * v.adjoint();
        let shift = &jz - DMatrix::<C64>::identity(s.dim(), s.dim()) * C64::new(params.beta, 0.0);
        let kick_gen = &shift * &shift * C64::new(k / (2.0 * j as f64), 0.0);
        let u = expm_hermitian_dense(&kick_gen, 1.0) * expm_hermitian_dense(&jy, params.p);
        let a = quasienergy_spacings(&floquet_operator(&s, &params).unwrap()).unwrap();
        let b = quasienergy_spacings(&u).unwrap();
        for (x, y) in a.quasienergies.iter().zip(&b.quasienergies) {
            prop_assert!((x - y).abs() < 1e-10, "{} vs {}", x, y);
        }
    }
}

/// Eigenvectors of a random Hermitian matrix.
fn random_unitary(n: usize, seed: u64) -> DMatrix<C64> {
    let mut x = seed | 1;
    let mut next = move || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
    let h = &a + a.adjoint();
    h.symmetric_eigen().eigenvectors
}

#[test]
fn pauli_limit() {
    let s = build_spin_sector(0.5).unwrap();
    let i = C64::new(0.0, 0.5);
    let expected = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), -i, i, C64::new(0.0, 0.0)]);
    assert!(max_abs(&(&s.jy - expected)) < 1e-15);
}

#[test]
fn rejects_bad_spin() {
    assert!(build_spin_sector(-1.0).is_err());
    assert!(build_spin_sector(0.3).is_err());
    assert!(build_spin_sector(f64::NAN).is_err());
}

#[test]
fn no_kick_gives_picket_fence() {
    let s = build_spin_sector(40.0).unwrap();
    let u = floquet_operator(&s, &KickedTopParams { k: 0.0, ..KickedTopParams::default() }).unwrap();
    let stats = quasienergy_spacings(&u).unwrap();
    assert!(stats.ks_wigner > 0.3, "ks_wigner = {}", stats.ks_wigner);
}

#[test]
fn crossover_between_two_and_three() {
    let s = build_spin_sector(40.0).unwrap();
    let stats = |k| quasienergy_spacings(&floquet_operator(&s, &KickedTopParams { k, ..Default::default() }).unwrap()).unwrap();
    let (a, b) = (stats(2.0), stats(3.0));
    assert!(a.ks_poisson < a.ks_wigner);
    assert!(b.ks_wigner < b.ks_poisson);
    assert!(b.mean_r > a.mean_r);
}
