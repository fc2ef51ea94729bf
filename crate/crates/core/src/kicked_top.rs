//! Spin-j operators, the kicked-top Floquet operator and quasienergy level
//! statistics.
//!
//! All operators are expressed in the `J_z` eigenbasis ordered by descending
//! magnetic quantum number, `m = j, j-1, ..., -j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{c, I};

/// Angular-momentum operators of one spin-j irrep.
#[derive(Clone, Debug)]
pub struct SpinSector {
    two_j: u32,
    pub jx: DMatrix<C64>,
    pub jy: DMatrix<C64>,
    pub jz: DMatrix<C64>,
    /// Columns are `J_y` eigenvectors (in the `J_z` basis), ordered to match
    /// `jy_values`.
    pub jy_basis: DMatrix<C64>,
    /// `-j, -j+1, ..., j`.
    pub jy_values: Vec<f64>,
}

impl SpinSector {
    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Diagonal of `J_z`: `j, j-1, ..., -j`.
    pub fn jz_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.j() - k as f64).collect()
    }

    /// The `J_y` eigenstate with eigenvalue `m`, as a `J_z`-basis vector.
    pub fn jy_eigenstate(&self, m: f64) -> Result<DVector<C64>> {
        let k = self
            .jy_values
            .iter()
            .position(|&v| (v - m).abs() < 1e-9)
            .ok_or_else(|| Error::invalid(format!("m = {m} is not a J_y eigenvalue for j = {}", self.j())))?;
        Ok(self.jy_basis.column(k).into_owned())
    }

    /// The `J_z` eigenstate with eigenvalue `m`.
    pub fn jz_eigenstate(&self, m: f64) -> Result<DVector<C64>> {
        let k = self
            .jz_values()
            .iter()
            .position(|&v| (v - m).abs() < 1e-9)
            .ok_or_else(|| Error::invalid(format!("m = {m} is not a J_z eigenvalue for j = {}", self.j())))?;
        let mut v = DVector::zeros(self.dim());
        v[k] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// `exp(-i angle J_y)`.
    pub fn rotation_y(&self, angle: f64) -> DMatrix<C64> {
        let phases =
            DVector::from_iterator(self.dim(), self.jy_values.iter().map(|&m| (-I * angle * m).exp()));
        &self.jy_basis * DMatrix::from_diagonal(&phases) * self.jy_basis.adjoint()
    }
}

/// Build the spin sector for quantum number `j` (integer or half-integer).
pub fn build_spin_sector(j: f64) -> Result<SpinSector> {
    let twice = 2.0 * j;
    if !twice.is_finite() || twice < 0.0 || (twice - twice.round()).abs() > 1e-12 {
        return Err(Error::invalid(format!("j = {j} is not a nonnegative half-integer")));
    }
    let two_j = twice.round() as u32;
    let dim = two_j as usize + 1;
    let jf = two_j as f64 / 2.0;
    let m = |k: usize| jf - k as f64;

    // <m+1|J+|m> sits at (k-1, k) because row k-1 carries m+1.
    let mut jplus = DMatrix::<f64>::zeros(dim, dim);
    for k in 1..dim {
        let mk = m(k);
        jplus[(k - 1, k)] = (jf * (jf + 1.0) - mk * (mk + 1.0)).sqrt();
    }
    let jminus = jplus.transpose();
    let jx_real = (&jplus + &jminus) * 0.5;
    let jx = jx_real.map(c);
    let jy = (jplus.map(c) - jminus.map(c)) * (-I * 0.5);
    let jz = DMatrix::from_diagonal(&DVector::from_iterator(dim, (0..dim).map(|k| c(m(k)))));

    // J_y = D J_x D^† with D = diag(i^k), and J_x is real symmetric, so the
    // J_y eigenvectors come from a real tridiagonal eigenproblem.
    let eig = jx_real.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let phase = |k: usize| match k % 4 {
        0 => c(1.0),
        1 => I,
        2 => c(-1.0),
        _ => -I,
    };
    let mut jy_basis = DMatrix::<C64>::zeros(dim, dim);
    for (col, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        // Sign convention: first nonzero component positive.
        let lead = v.iter().find(|x| x.abs() > 1e-10).copied().unwrap_or(1.0);
        let sgn = lead.signum();
        for k in 0..dim {
            jy_basis[(k, col)] = phase(k) * (sgn * v[k]);
        }
    }
    let jy_values = (0..dim).map(|k| -jf + k as f64).collect();

    Ok(SpinSector {
        two_j,
        jx,
        jy,
        jz,
        jy_basis,
        jy_values,
    })
}

/// Parameters of the kicked top: kick strength `k`, precession angle `p`,
/// period `tau` and the shift `beta` inside the kick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KickedTopParams {
    pub k: f64,
    pub p: f64,
    pub tau: f64,
    pub beta: f64,
}

impl Default for KickedTopParams {
    fn default() -> Self {
        KickedTopParams {
            k: 3.0,
            p: 1.7,
            tau: 1.0,
            beta: 0.1,
        }
    }
}

impl KickedTopParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if !self.k.is_finite() || !self.p.is_finite() || !self.beta.is_finite() {
            return Err(Error::invalid("kicked-top parameters must be finite"));
        }
        Ok(())
    }

    /// Precession frequency `p / tau`.
    pub fn omega(&self) -> f64 {
        self.p / self.tau
    }
}

/// Diagonal (in the `J_z` basis) of the kick `exp(-i K/(2j) (J_z - beta)^2)`.
pub fn kick_phases(sector: &SpinSector, params: &KickedTopParams) -> Result<Vec<C64>> {
    params.validate()?;
    if sector.two_j() == 0 {
        return Err(Error::invalid("the kick K/(2j) is undefined for j = 0"));
    }
    let scale = params.k / (2.0 * sector.j());
    Ok(sector
        .jz_values()
        .into_iter()
        .map(|m| (-I * scale * (m - params.beta).powi(2)).exp())
        .collect())
}

/// One-period propagator `U = exp(-i K/(2j) (J_z - beta)^2) exp(-i p J_y)`:
/// precession over the period, then the kick at its end.
pub fn floquet_operator(sector: &SpinSector, params: &KickedTopParams) -> Result<DMatrix<C64>> {
    let kick = kick_phases(sector, params)?;
    let mut u = sector.rotation_y(params.p);
    for (r, ph) in kick.iter().enumerate() {
        u.row_mut(r).iter_mut().for_each(|z| *z *= ph);
    }
    Ok(u)
}

/// Level-spacing statistics of a Floquet spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumStats {
    /// Eigenphases in `[0, 2pi)`, ascending.
    pub quasienergies: Vec<f64>,
    /// Nearest-neighbour spacings including the wrap-around gap, unit mean.
    /// `spacings[n]` is the gap between phases `n` and `n+1`.
    pub spacings: Vec<f64>,
    pub ks_poisson: f64,
    pub ks_wigner: f64,
    pub mean_r: f64,
}

/// Minimum spacing accepted before the spectrum is reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-12;

/// Quasienergy statistics of a unitary matrix.
pub fn quasienergy_spacings(u: &DMatrix<C64>) -> Result<SpectrumStats> {
    let n = u.nrows();
    if n == 0 || u.ncols() != n {
        return Err(Error::invalid("Floquet operator must be a nonempty square matrix"));
    }
    let dev = crate::linalg::identity_deviation(&(u.adjoint() * u));
    if dev > 1e-8 {
        return Err(Error::invalid(format!("matrix is not unitary (|U^†U - 1| = {dev:.2e})")));
    }
    let schur = u.clone().schur();
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::invalid("Schur decomposition did not triangularize"))?;
    let phases: Vec<f64> = eig.iter().map(|z| z.arg()).collect();
    spacing_stats(&phases)
}

/// Statistics of a set of eigenphases (any real values, taken mod 2pi).
pub fn spacing_stats(phases: &[f64]) -> Result<SpectrumStats> {
    let n = phases.len();
    if n < 2 {
        return Err(Error::invalid("need at least two quasienergies"));
    }
    let two_pi = 2.0 * PI;
    let mut q: Vec<f64> = phases.iter().map(|&x| x.rem_euclid(two_pi)).collect();
    q.sort_by(f64::total_cmp);
    let mut raw: Vec<f64> = q.windows(2).map(|w| w[1] - w[0]).collect();
    raw.push(q[0] + two_pi - q[n - 1]);
    let min_gap = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if min_gap < DEGENERACY_GAP {
        return Err(Error::DegenerateSpectrum { min_gap });
    }
    // Uniform mean density on the circle: unfolding is a rescale.
    let scale = n as f64 / two_pi;
    let spacings: Vec<f64> = raw.iter().map(|s| s * scale).collect();

    let ks_poisson = ks_distance(&spacings, |s| 1.0 - (-s).exp());
    let ks_wigner = ks_distance(&spacings, |s| 1.0 - (-PI * s * s / 4.0).exp());
    let mean_r = (0..n)
        .map(|k| {
            let a = spacings[k];
            let b = spacings[(k + 1) % n];
            a.min(b) / a.max(b)
        })
        .sum::<f64>()
        / n as f64;

    Ok(SpectrumStats {
        quasienergies: q,
        spacings,
        ks_poisson,
        ks_wigner,
        mean_r,
    })
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity_deviation, max_abs};

    fn comm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
        a * b - b * a
    }

    #[test]
    fn spin_half_jy_is_pauli() {
        let s = build_spin_sector(0.5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[c(0.0), -I * 0.5, I * 0.5, c(0.0)]);
        assert!(max_abs(&(&s.jy - expected)) < 1e-15);
    }

    #[test]
    fn spin_one_jz_descending() {
        let s = build_spin_sector(1.0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(0.0), c(-1.0)]));
        assert_eq!(s.jz, expected);
    }

    #[test]
    fn rejects_bad_j() {
        assert!(build_spin_sector(-1.0).is_err());
        assert!(build_spin_sector(0.3).is_err());
        assert!(build_spin_sector(f64::NAN).is_err());
        assert!(build_spin_sector(0.0).is_ok());
    }

    #[test]
    fn algebra_j40() {
        let s = build_spin_sector(40.0).unwrap();
        assert_eq!(s.dim(), 81);
        assert!(max_abs(&(comm(&s.jx, &s.jy) - &s.jz * I)) < 1e-12);
        assert!(max_abs(&(comm(&s.jy, &s.jz) - &s.jx * I)) < 1e-12);
        assert!(max_abs(&(comm(&s.jz, &s.jx) - &s.jy * I)) < 1e-12);
        let casimir = &s.jx * &s.jx + &s.jy * &s.jy + &s.jz * &s.jz;
        let target = DMatrix::<C64>::identity(81, 81) * c(40.0 * 41.0);
        assert!(max_abs(&(casimir - target)) < 1e-12);
    }

    #[test]
    fn jy_basis_diagonalizes_jy() {
        for &j in &[0.5, 1.0, 3.5, 20.0, 40.0] {
            let s = build_spin_sector(j).unwrap();
            let d = s.jy_basis.adjoint() * &s.jy * &s.jy_basis;
            let target = DMatrix::from_diagonal(&DVector::from_iterator(
                s.dim(),
                s.jy_values.iter().map(|&m| c(m)),
            ));
            assert!(max_abs(&(d - target)) < 1e-11, "j = {j}");
            assert!(identity_deviation(&(s.jy_basis.adjoint() * &s.jy_basis)) < 1e-12);
            for (k, &m) in s.jy_values.iter().enumerate() {
                assert!((m - (-j + k as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn floquet_is_unitary() {
        for &(j, k) in &[(0.5, 3.0), (10.0, -20.0), (40.0, 3.0), (60.0, 20.0)] {
            let s = build_spin_sector(j).unwrap();
            let params = KickedTopParams { k, ..Default::default() };
            let u = floquet_operator(&s, &params).unwrap();
            assert!(identity_deviation(&(u.adjoint() * &u)) < 1e-10, "j = {j}, K = {k}");
        }
    }

    #[test]
    fn zero_kick_is_pure_precession() {
        let s = build_spin_sector(3.0).unwrap();
        let params = KickedTopParams { k: 0.0, p: 1.7, tau: 1.0, beta: 0.1 };
        let u = floquet_operator(&s, &params).unwrap();
        let stats = quasienergy_spacings(&u).unwrap();
        // Compare on the circle: the m = 0 phase sits on the 0 / 2pi seam.
        let circ = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        };
        for m in -3..=3 {
            let e = -1.7 * m as f64;
            let best = stats.quasienergies.iter().map(|&q| circ(q, e)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10, "m = {m}");
        }
    }

    #[test]
    fn spin_half_without_precession_is_diagonal() {
        let s = build_spin_sector(0.5).unwrap();
        let params = KickedTopParams { k: 2.3, p: 0.0, tau: 1.0, beta: 0.0 };
        let u = floquet_operator(&s, &params).unwrap();
        // (K/2j) (J_z)^2 = K/4 on both states for j = 1/2.
        let ph = (-I * 2.3 * 0.25).exp();
        assert!((u[(0, 0)] - ph).norm() < 1e-14 && (u[(1, 1)] - ph).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-14 && u[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn equidistant_spectrum() {
        let st = spacing_stats(&[0.0, PI / 2.0, PI, 1.5 * PI]).unwrap();
        for s in &st.spacings {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert!((st.mean_r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_spectrum_flagged() {
        let e = spacing_stats(&[0.0, 1.0, 1.0 + 1e-14, 3.0]).unwrap_err();
        assert!(matches!(e, Error::DegenerateSpectrum { .. }));
    }

    #[test]
    fn ks_of_exact_quantiles() {
        // Midpoint quantiles of Exp(1) give KS distance exactly 1/(2n).
        let n = 50;
        let s: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        let d = ks_distance(&s, |x| 1.0 - (-x).exp());
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn spectrum_conjugation_invariant() {
        let s = build_spin_sector(6.0).unwrap();
        let params = KickedTopParams { k: 3.0, ..Default::default() };
        let u = floquet_operator(&s, &params).unwrap();
        let w = s.rotation_y(0.37) * crate::linalg::expm_hermitian_dense(&s.jx, 1.1);
        let v = w.adjoint() * &u * &w;
        let a = quasienergy_spacings(&u).unwrap();
        let b = quasienergy_spacings(&v).unwrap();
        for (x, y) in a.quasienergies.iter().zip(&b.quasienergies) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
