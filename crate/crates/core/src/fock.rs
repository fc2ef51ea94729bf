//! Bosonic Fock space of `r` slots with a global cap on the total number of
//! quanta, and the action of passive mode transformations on amplitudes.
//!
//! A slot transformation `c'_p = sum_q W_pq c_q` maps the amplitudes of a
//! fixed state from the old occupation basis to the new one. Because the cap
//! bounds the total number of quanta, which passive transformations conserve,
//! this action is exact on the truncated space.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::c;

const NONE: u32 = u32::MAX;

/// Occupation-number basis `{(n_1..n_r) : sum n_i <= n_max}`.
#[derive(Clone, Debug)]
pub struct FockBasis {
    r: usize,
    n_max: usize,
    /// Row-major occupations, `r` entries per state.
    occ: Vec<u8>,
    index: HashMap<Box<[u8]>, usize>,
    /// `lower[l * len + s]`: index of `c_l |s>` up to its `sqrt(n_l)` factor.
    lower: Vec<u32>,
    /// Per slot, every `(s, t, sqrt(n_l))` with `c_l |s> = sqrt(n_l) |t>`.
    links: Vec<Vec<(u32, u32, f64)>>,
    totals: Vec<u8>,
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

impl FockBasis {
    pub fn new(r: usize, n_max: usize) -> Result<Self> {
        if n_max > u8::MAX as usize {
            return Err(Error::invalid(format!("n_max = {n_max} is too large")));
        }
        let count = binomial(r + n_max, n_max);
        if count > u32::MAX as usize / 2 {
            return Err(Error::invalid(format!("Fock basis of {count} states is too large")));
        }
        let mut occ = Vec::with_capacity(count * r);
        let mut cur = vec![0u8; r];
        enumerate(&mut cur, 0, n_max, &mut occ);
        let len = if r == 0 { 1 } else { occ.len() / r };
        debug_assert_eq!(len, count);
        let mut index = HashMap::with_capacity(len);
        let mut totals = Vec::with_capacity(len);
        for s in 0..len {
            let st = &occ[s * r..(s + 1) * r];
            index.insert(st.to_vec().into_boxed_slice(), s);
            totals.push(st.iter().copied().sum());
        }
        let mut lower = vec![NONE; r * len];
        let mut links = vec![Vec::new(); r];
        let mut key = vec![0u8; r];
        for s in 0..len {
            for l in 0..r {
                let n = occ[s * r + l];
                if n > 0 {
                    key.copy_from_slice(&occ[s * r..(s + 1) * r]);
                    key[l] -= 1;
                    let t = index[&key[..]] as u32;
                    lower[l * len + s] = t;
                    links[l].push((s as u32, t, SQRT[n as usize]));
                }
            }
        }
        Ok(FockBasis { r, n_max, occ, index, lower, links, totals })
    }

    pub fn slots(&self) -> usize {
        self.r
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn state(&self, s: usize) -> &[u8] {
        &self.occ[s * self.r..(s + 1) * self.r]
    }

    pub fn total(&self, s: usize) -> usize {
        self.totals[s] as usize
    }

    pub fn find(&self, occ: &[u8]) -> Option<usize> {
        if self.r == 0 {
            return if occ.is_empty() { Some(0) } else { None };
        }
        self.index.get(occ).copied()
    }

    /// Index of `c_l |s>` if `n_l > 0`.
    #[inline]
    pub fn lowered(&self, l: usize, s: usize) -> Option<usize> {
        let v = self.lower[l * self.len() + s];
        (v != NONE).then_some(v as usize)
    }

    /// `y += sum_l (g_l c_l + conj(g_l) c_l^dagger) x`, restricted to the cap.
    pub fn apply_linear(&self, g: &[C64], x: &[C64], y: &mut [C64]) {
        for (&gl, links) in g.iter().zip(&self.links) {
            if gl == C64::new(0.0, 0.0) {
                continue;
            }
            let gc = gl.conj();
            for &(s, t, amp) in links {
                let (s, t) = (s as usize, t as usize);
                // <t| c_l |s> = sqrt(n_l)
                y[t] += gl * amp * x[s];
                y[s] += gc * amp * x[t];
            }
        }
    }

    /// Population with exactly `n_max` quanta (the leakage indicator).
    pub fn cap_population(&self, amps: &DMatrix<C64>) -> f64 {
        let mut p = 0.0;
        for s in 0..self.len() {
            if self.total(s) == self.n_max {
                p += amps.row(s).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        p
    }

    /// Mean occupation matrix `<c_l^dagger c_k>` of a pure state (columns of
    /// `amps` are independent components, e.g. spin).
    pub fn correlations(&self, amps: &DMatrix<C64>) -> DMatrix<C64> {
        let r = self.r;
        let lowered: Vec<DMatrix<C64>> = (0..r).map(|l| self.lowered_amps(l, amps)).collect();
        // <psi| c_l^dagger c_k |psi> = <c_l psi | c_k psi>
        DMatrix::from_fn(r, r, |l, k| lowered[l].zip_fold(&lowered[k], C64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b))
    }

    fn lowered_amps(&self, l: usize, amps: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.len(), amps.ncols());
        for s in 0..self.len() {
            if let Some(t) = self.lowered(l, s) {
                let f = SQRT[self.occ[s * self.r + l] as usize];
                for j in 0..amps.ncols() {
                    out[(t, j)] += amps[(s, j)] * f;
                }
            }
        }
        out
    }
}

fn enumerate(cur: &mut [u8], pos: usize, left: usize, out: &mut Vec<u8>) {
    if pos == cur.len() {
        out.extend_from_slice(cur);
        return;
    }
    for n in 0..=left {
        cur[pos] = n as u8;
        enumerate(cur, pos + 1, left - n, out);
    }
    cur[pos] = 0;
}

static SQRT: [f64; 256] = {
    let mut t = [0.0; 256];
    let mut i = 0;
    while i < 256 {
        t[i] = const_sqrt(i as f64);
        i += 1;
    }
    t
};

const fn const_sqrt(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut g = if x > 1.0 { x / 2.0 } else { 1.0 };
    let mut k = 0;
    while k < 60 {
        g = 0.5 * (g + x / g);
        k += 1;
    }
    g
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Apply the two-slot transformation `c'_a = w[0][0] c_a + w[0][1] c_b`,
/// `c'_b = w[1][0] c_a + w[1][1] c_b` to the rows of `amps`.
pub fn apply_two_slot(basis: &FockBasis, amps: &mut DMatrix<C64>, a: usize, b: usize, w: [[C64; 2]; 2]) {
    assert!(a != b && a < basis.slots() && b < basis.slots());
    let n_max = basis.n_max();
    // Old c_a^dagger = W_aa c'_a^dagger + W_ba c'_b^dagger,
    //     c_b^dagger = W_ab c'_a^dagger + W_bb c'_b^dagger.
    let (waa, wab, wba, wbb) = (w[0][0], w[0][1], w[1][0], w[1][1]);
    let pow = |z: C64, k: usize| -> C64 {
        let mut acc = c(1.0);
        for _ in 0..k {
            acc *= z;
        }
        acc
    };
    // coef[na][nb][k]: weight of |k, na+nb-k> from |na, nb>.
    let mut coef = vec![vec![vec![C64::new(0.0, 0.0); n_max + 1]; n_max + 1]; n_max + 1];
    for na in 0..=n_max {
        for nb in 0..=n_max - na {
            let tot = na + nb;
            let norm = (factorial(na) * factorial(nb)).sqrt();
            for i in 0..=na {
                let ci = binomial(na, i) as f64 * pow(waa, i) * pow(wba, na - i);
                for j in 0..=nb {
                    let cj = binomial(nb, j) as f64 * pow(wab, j) * pow(wbb, nb - j);
                    let k = i + j;
                    let f = (factorial(k) * factorial(tot - k)).sqrt() / norm;
                    coef[na][nb][k] += ci * cj * f;
                }
            }
        }
    }
    let len = basis.len();
    let ncol = amps.ncols();
    let mut out = DMatrix::<C64>::zeros(len, ncol);
    let mut key = vec![0u8; basis.slots()];
    for s in 0..len {
        let st = basis.state(s);
        let (na, nb) = (st[a] as usize, st[b] as usize);
        key.copy_from_slice(st);
        for k in 0..=na + nb {
            let f = coef[na][nb][k];
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            key[a] = k as u8;
            key[b] = (na + nb - k) as u8;
            let t = basis.find(&key).expect("passive map stays inside the cap");
            for j in 0..ncol {
                let v = amps[(s, j)] * f;
                out[(t, j)] += v;
            }
        }
    }
    *amps = out;
}

/// Multiply the amplitude of each state by `prod_p d_p^{n_p}`
/// (the slot map `c'_p = d_p c_p` with `|d_p| = 1`).
pub fn apply_phases(basis: &FockBasis, amps: &mut DMatrix<C64>, d: &[C64]) {
    for s in 0..basis.len() {
        let mut f = c(1.0);
        for (p, &n) in basis.state(s).iter().enumerate() {
            for _ in 0..n {
                f *= d[p];
            }
        }
        amps.row_mut(s).iter_mut().for_each(|z| *z *= f);
    }
}

/// Apply a general unitary slot map `c' = W c` through a Givens
/// factorisation `W = Q_1 Q_2 .. Q_m D`.
pub fn apply_slot_unitary(basis: &FockBasis, amps: &mut DMatrix<C64>, w: &DMatrix<C64>) {
    let n = basis.slots();
    assert_eq!(w.nrows(), n);
    assert_eq!(w.ncols(), n);
    let mut rem = w.clone();
    let mut rots: Vec<(usize, usize, [[C64; 2]; 2])> = Vec::new();
    for j in 0..n {
        for i in (j + 1..n).rev() {
            let (x, y) = (rem[(i - 1, j)], rem[(i, j)]);
            let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
            if y.norm() <= 1e-300 || nrm == 0.0 {
                continue;
            }
            // Q has first column (x, y)/|.|; Q^dagger sends (x, y) to (|.|, 0).
            let q = [[x / nrm, -y.conj() / nrm], [y / nrm, x.conj() / nrm]];
            let qd = [[q[0][0].conj(), q[1][0].conj()], [q[0][1].conj(), q[1][1].conj()]];
            for col in 0..n {
                let (u, v) = (rem[(i - 1, col)], rem[(i, col)]);
                rem[(i - 1, col)] = qd[0][0] * u + qd[0][1] * v;
                rem[(i, col)] = qd[1][0] * u + qd[1][1] * v;
            }
            rots.push((i - 1, i, q));
        }
    }
    let d: Vec<C64> = (0..n).map(|k| rem[(k, k)] / rem[(k, k)].norm()).collect();
    apply_phases(basis, amps, &d);
    for &(a, b, q) in rots.iter().rev() {
        apply_two_slot(basis, amps, a, b, q);
    }
}

/// Amplitudes of the same state in a basis with one extra (empty) slot
/// appended at the end.
pub fn append_vacuum_slot(old: &FockBasis, new: &FockBasis, amps: &DMatrix<C64>) -> DMatrix<C64> {
    assert_eq!(new.slots(), old.slots() + 1);
    assert_eq!(new.n_max(), old.n_max());
    let mut out = DMatrix::zeros(new.len(), amps.ncols());
    let mut key = vec![0u8; new.slots()];
    for s in 0..old.len() {
        key[..old.slots()].copy_from_slice(old.state(s));
        key[old.slots()] = 0;
        let t = new.find(&key).expect("vacuum extension stays inside the cap");
        out.row_mut(t).copy_from(&amps.row(s));
    }
    out
}
