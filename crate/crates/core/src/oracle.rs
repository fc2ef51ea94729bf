//! Brute-force references on small instances: the full spin-chain state in
//! the Schrodinger picture, the decoherence functional of record histories,
//! and comparisons against the engine.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::bath::ChainSpec;
use crate::engine::JointState;
use crate::error::{Error, Result};
use crate::fock::{append_vacuum_slot, apply_slot_unitary, FockBasis};
use crate::kicked_top::{kick_phases, KickedTopParams, SpinSector};
use crate::linalg::{c, expm_hermitian_dense, orthonormal_columns, I};

/// Largest oracle state (spin dimension times Fock dimension).
pub const ORACLE_CAP: usize = 1_000_000;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Joint state over spin (`J_z` basis, columns) and the Fock space of every
/// chain site (rows).
#[derive(Clone, Debug)]
pub struct ExactJointState {
    pub time: f64,
    pub kicks: u64,
    pub amps: DMatrix<C64>,
}

/// Spin plus the explicit chain with a global quanta cap.
pub struct ExactSystem<'a> {
    pub sector: &'a SpinSector,
    pub params: KickedTopParams,
    pub spec: ChainSpec,
    pub basis: FockBasis,
    /// `(from, to, amplitude)` of the number-conserving chain terms.
    hops: Vec<(usize, usize, f64)>,
    /// Diagonal `sum_k eps_k n_k`.
    onsite: Vec<f64>,
    /// `(from, to, sqrt(n_0))` for `a_0` acting on `from`.
    lower0: Vec<(usize, usize, f64)>,
    kick: Vec<C64>,
    norm_bound: f64,
}

impl<'a> ExactSystem<'a> {
    pub fn new(sector: &'a SpinSector, params: KickedTopParams, spec: &ChainSpec, n_max: usize) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        let m = spec.len();
        let fock = crate::fock::binomial(m + n_max, n_max);
        let size = fock.saturating_mul(sector.dim());
        if size > ORACLE_CAP {
            return Err(Error::OracleTooLarge { size, cap: ORACLE_CAP });
        }
        let basis = FockBasis::new(m, n_max)?;
        let mut hops = Vec::new();
        let mut onsite = vec![0.0; basis.len()];
        let mut lower0 = Vec::new();
        let mut key = vec![0u8; m];
        for s in 0..basis.len() {
            let st = basis.state(s);
            onsite[s] = st.iter().zip(&spec.eps).map(|(&n, &e)| n as f64 * e).sum();
            if let Some(t) = basis.lowered(0, s) {
                lower0.push((s, t, (st[0] as f64).sqrt()));
            }
            // a_k^dagger a_{k+1} and its adjoint.
            for (k, &hk) in spec.hop.iter().enumerate() {
                if st[k + 1] > 0 {
                    key.copy_from_slice(st);
                    let amp = ((st[k + 1] as f64) * (st[k] as f64 + 1.0)).sqrt();
                    key[k + 1] -= 1;
                    key[k] += 1;
                    let t = basis.find(&key).expect("hopping conserves the number of quanta");
                    hops.push((s, t, hk * amp));
                    hops.push((t, s, hk * amp));
                }
            }
        }
        let kick = kick_phases(sector, &params)?;
        let h1 = spec.one_particle_hamiltonian().symmetric_eigen();
        let radius = h1.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let j = sector.j();
        let norm_bound =
            params.omega().abs() * j + n_max as f64 * radius + 2.0 * spec.h_sys.abs() * j * (n_max as f64).sqrt();
        Ok(ExactSystem {
            sector,
            params,
            spec: spec.clone(),
            basis,
            hops,
            onsite,
            lower0,
            kick,
            norm_bound: norm_bound.max(1e-12),
        })
    }

    pub fn initial(&self, spin_state: &DVector<C64>) -> Result<ExactJointState> {
        if spin_state.len() != self.sector.dim() || (spin_state.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::invalid("spin state must be normalized and match the sector"));
        }
        let mut amps = DMatrix::zeros(self.basis.len(), self.sector.dim());
        let vac = self.basis.find(&vec![0u8; self.spec.len()]).expect("vacuum is in the basis");
        for (k, &z) in spin_state.iter().enumerate() {
            amps[(vac, k)] = z;
        }
        Ok(ExactJointState { time: 0.0, kicks: 0, amps })
    }

    /// `H X` for the time-independent Hamiltonian between kicks.
    pub fn apply(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let omega = self.params.omega();
        let h = self.spec.h_sys;
        let jy_t = self.sector.jy.transpose();
        // Spin precession: X (omega Jy)^T.
        let mut y = x * &jy_t * c(omega);
        let ncol = x.ncols();
        for (s, &e) in self.onsite.iter().enumerate() {
            for k in 0..ncol {
                y[(s, k)] += x[(s, k)] * e;
            }
        }
        for &(from, to, a) in &self.hops {
            for k in 0..ncol {
                let v = x[(from, k)] * a;
                y[(to, k)] += v;
            }
        }
        if h != 0.0 {
            // (a_0 + a_0^dagger) X Jy^T
            let xj = x * &jy_t;
            for &(from, to, a) in &self.lower0 {
                for k in 0..ncol {
                    let lo = xj[(from, k)] * (a * h);
                    y[(to, k)] += lo;
                    let hi = xj[(to, k)] * (a * h);
                    y[(from, k)] += hi;
                }
            }
        }
        y
    }

    /// Taylor-series propagation over a kick-free interval.
    fn propagate(&self, x: &mut DMatrix<C64>, span: f64) {
        if span <= 0.0 {
            return;
        }
        let pieces = (span * self.norm_bound / 0.5).ceil().max(1.0) as usize;
        let d = span / pieces as f64;
        for _ in 0..pieces {
            let mut term = x.clone();
            let mut acc = x.clone();
            let scale = acc.norm().max(1e-300);
            for k in 1..200 {
                term = self.apply(&term) * (-I * d / k as f64);
                acc += &term;
                if term.norm() < 1e-17 * scale {
                    break;
                }
            }
            *x = acc;
        }
    }

    /// Evolve to `t`, kicking at every `n tau <= t` (`n >= 1`).
    pub fn evolve(&self, st: &mut ExactJointState, t: f64) {
        let tau = self.params.tau;
        loop {
            let t_kick = (st.kicks + 1) as f64 * tau;
            if t_kick <= t + crate::engine::KICK_TOL {
                let end = t_kick.min(t);
                self.propagate(&mut st.amps, end - st.time);
                st.time = end;
                for (k, ph) in self.kick.iter().enumerate() {
                    st.amps.column_mut(k).iter_mut().for_each(|z| *z *= ph);
                }
                st.kicks += 1;
            } else {
                self.propagate(&mut st.amps, t - st.time);
                st.time = t;
                break;
            }
        }
    }

    pub fn expectation_jy(&self, st: &ExactJointState) -> f64 {
        let y = &st.amps * self.sector.jy.transpose();
        inner(&st.amps, &y).re / st.amps.norm_squared()
    }

    /// `<H>` of the kick-free Hamiltonian.
    pub fn energy(&self, st: &ExactJointState) -> f64 {
        inner(&st.amps, &self.apply(&st.amps)).re
    }
}

/// `<a|b>` for amplitude matrices, with compensated summation so that
/// overlaps of nearly orthogonal branches keep their relative accuracy.
pub fn inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    for (x, y) in a.iter().zip(b.iter()) {
        re.add_product(x.re, y.re);
        re.add_product(x.im, y.im);
        im.add_product(x.re, y.im);
        im.add_product(-x.im, y.re);
    }
    C64::new(re.value(), im.value())
}

/// Dot-product accumulator with error-free transformations.
#[derive(Default)]
struct Compensated {
    sum: f64,
    err: f64,
}

impl Compensated {
    fn add_product(&mut self, x: f64, y: f64) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let s = self.sum + p;
        let bp = s - self.sum;
        let se = (self.sum - (s - bp)) + (p - bp);
        self.sum = s;
        self.err += pe + se;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

/// `|<a|b>|` for normalized states.
pub fn fidelity(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    inner(a, b).norm()
}

/// States on the grid `0, dt, .., T`.
pub fn exact_evolve(
    sector: &SpinSector,
    params: KickedTopParams,
    spec: &ChainSpec,
    n_max: usize,
    spin_state: &DVector<C64>,
    horizon: f64,
    dt: f64,
) -> Result<Vec<ExactJointState>> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::invalid("dt must be positive and the horizon nonnegative"));
    }
    let sys = ExactSystem::new(sector, params, spec, n_max)?;
    let mut st = sys.initial(spin_state)?;
    let steps = (horizon / dt).round() as usize;
    let mut out = vec![st.clone()];
    for i in 1..=steps {
        sys.evolve(&mut st, i as f64 * horizon / steps as f64);
        out.push(st.clone());
    }
    Ok(out)
}

/// Orthonormal completion of the frame to a unitary on the whole chain.
pub fn complete_frame(frame: &DMatrix<C64>) -> DMatrix<C64> {
    let m = frame.nrows();
    let r = frame.ncols();
    let mut cols = DMatrix::zeros(m, r + m);
    cols.columns_mut(0, r).copy_from(frame);
    for k in 0..m {
        cols[(k, r + k)] = c(1.0);
    }
    let q = orthonormal_columns(&cols, 1e-8);
    q.columns(0, m).into_owned()
}

/// Express an engine state (interaction picture, slot basis, `J_y` spin
/// basis) in the oracle's representation (Schrodinger picture, site basis,
/// `J_z` spin basis).
pub fn embed_engine_state(st: &JointState, sector: &SpinSector, spec: &ChainSpec) -> Result<DMatrix<C64>> {
    let m = spec.len();
    if st.frame.nrows() != m {
        return Err(Error::invalid("engine frame does not match the chain"));
    }
    let mut amps = st.amps_z(sector);
    let mut basis = st.basis.clone();
    while basis.slots() < m {
        let next = FockBasis::new(basis.slots() + 1, basis.n_max())?;
        amps = append_vacuum_slot(&basis, &next, &amps);
        basis = next;
    }
    let full = complete_frame(&st.frame);
    // Site operators a = conj(F) c.
    apply_slot_unitary(&basis, &mut amps, &full.map(|z| z.conj()));
    // Back to the Schrodinger picture: exp(-i H_B t) acts on a_k^dagger as
    // the one-particle propagator.
    let u = expm_hermitian_dense(&spec.one_particle_hamiltonian().map(c), st.time);
    apply_slot_unitary(&basis, &mut amps, &u);
    Ok(amps)
}

/// `sup_t |<J_y>_exact - <J_y>_engine|` over matching grids.
pub fn reduced_compare(exact: &[(f64, f64)], engine: &[(f64, f64)]) -> Result<f64> {
    if exact.len() != engine.len() {
        return Err(Error::invalid("series have different lengths"));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in exact.iter().zip(engine) {
        if (a.0 - b.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("time grids differ at t = {} vs {}", a.0, b.0)));
        }
        worst = worst.max((a.1 - b.1).abs());
    }
    Ok(worst)
}

/// Projector on the record slot for one outcome.
#[derive(Clone, Debug)]
pub enum RecordProjector {
    /// `|v><v|` over the occupations `0..=n_max` of the record mode.
    State(DVector<C64>),
    /// Identity minus the listed record states.
    Complement(Vec<DVector<C64>>),
}

impl RecordProjector {
    /// Matrix over occupations `0..dim`; record states are padded with
    /// zeros when `dim` exceeds their length.
    pub fn matrix(&self, dim: usize) -> DMatrix<C64> {
        let pad = |v: &DVector<C64>| {
            let mut w = DVector::zeros(dim);
            let n = v.len().min(dim);
            w.rows_mut(0, n).copy_from(&v.rows(0, n));
            w
        };
        match self {
            RecordProjector::State(v) => {
                let w = pad(v);
                &w * w.adjoint()
            }
            RecordProjector::Complement(vs) => {
                let mut p = DMatrix::identity(dim, dim);
                for v in vs {
                    let w = pad(v);
                    p -= &w * w.adjoint();
                }
                p
            }
        }
    }
}

/// One decoupling event of a branch-dependent history tree.
#[derive(Clone, Debug)]
pub struct BranchNode {
    pub time: f64,
    /// Site-space vector of the record mode in the interaction picture.
    pub mode: DVector<C64>,
    pub outcomes: Vec<BranchOutcome>,
}

#[derive(Clone, Debug)]
pub struct BranchOutcome {
    pub projector: RecordProjector,
    /// Next event along this branch; `None` ends the history.
    pub next: Option<Box<BranchNode>>,
}

/// Complete set of record histories: at every node the outcome projectors
/// resolve the identity on the record mode.
#[derive(Clone, Debug)]
pub struct BranchProjectorSet {
    pub n_max: usize,
    pub root: Option<BranchNode>,
}

impl BranchProjectorSet {
    pub fn histories(&self) -> usize {
        fn count(node: &BranchNode) -> usize {
            node.outcomes.iter().map(|o| o.next.as_ref().map_or(1, |n| count(n))).sum()
        }
        self.root.as_ref().map_or(1, count)
    }

    /// Largest deviation from completeness and orthogonality over all nodes.
    pub fn resolution_error(&self) -> f64 {
        fn walk(node: &BranchNode, dim: usize, worst: &mut f64) {
            let ps: Vec<_> = node.outcomes.iter().map(|o| o.projector.matrix(dim)).collect();
            let mut sum = DMatrix::<C64>::zeros(dim, dim);
            for (a, pa) in ps.iter().enumerate() {
                sum += pa;
                for (b, pb) in ps.iter().enumerate() {
                    let prod = pa * pb;
                    let want = if a == b { pa.clone() } else { DMatrix::zeros(dim, dim) };
                    *worst = worst.max(crate::linalg::max_abs(&(prod - want)));
                }
            }
            *worst = worst.max(crate::linalg::identity_deviation(&sum));
            for o in &node.outcomes {
                if let Some(n) = &o.next {
                    walk(n, dim, worst);
                }
            }
        }
        let mut worst = 0.0;
        if let Some(root) = &self.root {
            walk(root, self.n_max + 1, &mut worst);
        }
        worst
    }
}

/// Apply a record projector for `mode` (interaction-picture vector at time
/// `st.time`) to the exact state. Under the global cap the projector is
/// only exact on rows where the rest of the chain leaves room for the whole
/// record, so the oracle cap should exceed the engine's.
pub fn project_record(sys: &ExactSystem, st: &mut ExactJointState, mode: &DVector<C64>, proj: &RecordProjector) {
    let basis = &sys.basis;
    let h1 = sys.spec.one_particle_hamiltonian().map(c);
    let to_interaction = expm_hermitian_dense(&h1, -st.time);
    let frame = complete_frame(&DMatrix::from_column_slice(mode.len(), 1, mode.as_slice()));
    // Interaction picture, then slot operators with the mode first.
    let w = frame.transpose() * to_interaction;
    apply_slot_unitary(basis, &mut st.amps, &w);
    let p = proj.matrix(basis.n_max() + 1);
    let n_max = basis.n_max();
    let mut key = vec![0u8; basis.slots()];
    let mut rows = Vec::with_capacity(n_max + 1);
    for s in 0..basis.len() {
        if basis.state(s)[0] != 0 {
            continue;
        }
        key.copy_from_slice(basis.state(s));
        rows.clear();
        let room = n_max - basis.total(s);
        for n in 0..=room {
            key[0] = n as u8;
            rows.push(basis.find(&key).expect("occupation within the cap"));
        }
        for k in 0..st.amps.ncols() {
            let x: Vec<C64> = rows.iter().map(|&r| st.amps[(r, k)]).collect();
            for (a, &r) in rows.iter().enumerate() {
                let mut acc = ZERO;
                for (b, xb) in x.iter().enumerate() {
                    acc += p[(a, b)] * xb;
                }
                st.amps[(r, k)] = acc;
            }
        }
    }
    apply_slot_unitary(basis, &mut st.amps, &w.adjoint());
}

/// `D[a, b] = <Psi_b(T)|Psi_a(T)>` where `Psi_a` is the initial state
/// evolved exactly with the projectors of history `a` applied at their
/// times. Histories are numbered in depth-first order.
pub fn decoherence_functional(
    sys: &ExactSystem,
    initial: &ExactJointState,
    set: &BranchProjectorSet,
    horizon: f64,
) -> Result<DMatrix<C64>> {
    fn descend(
        sys: &ExactSystem,
        st: ExactJointState,
        node: Option<&BranchNode>,
        horizon: f64,
        out: &mut Vec<DMatrix<C64>>,
    ) -> Result<()> {
        match node {
            None => {
                let mut st = st;
                sys.evolve(&mut st, horizon);
                out.push(st.amps);
            }
            Some(node) => {
                if node.time > horizon + 1e-9 || node.time < st.time - 1e-9 {
                    return Err(Error::invalid(format!("projector time {} outside the history", node.time)));
                }
                let mut st = st;
                sys.evolve(&mut st, node.time);
                for o in &node.outcomes {
                    let mut branch = st.clone();
                    project_record(sys, &mut branch, &node.mode, &o.projector);
                    descend(sys, branch, o.next.as_deref(), horizon, out)?;
                }
            }
        }
        Ok(())
    }
    let mut finals = Vec::new();
    descend(sys, initial.clone(), set.root.as_ref(), horizon, &mut finals)?;
    let n = finals.len();
    Ok(DMatrix::from_fn(n, n, |a, b| inner(&finals[b], &finals[a])))
}

/// Largest off-diagonal `|D|` divided by the smallest retained diagonal,
/// retaining histories with weight at least `floor`.
pub fn decoherence_ratio(d: &DMatrix<C64>, floor: f64) -> f64 {
    let keep: Vec<usize> = (0..d.nrows()).filter(|&a| d[(a, a)].re >= floor).collect();
    if keep.is_empty() {
        return 0.0;
    }
    let min_diag = keep.iter().map(|&a| d[(a, a)].re).fold(f64::INFINITY, f64::min);
    let mut worst: f64 = 0.0;
    for &a in &keep {
        for &b in &keep {
            if a != b {
                worst = worst.max(d[(a, b)].norm());
            }
        }
    }
    worst / min_diag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::uniform_chain;
    use crate::kicked_top::{build_spin_sector, floquet_operator};

    #[test]
    fn decoupled_spin_follows_the_closed_top() {
        let s = build_spin_sector(1.5).unwrap();
        let params = KickedTopParams::default();
        let spec = uniform_chain(1.0, 0.2, 0.0, 3).unwrap();
        let psi = s.jy_eigenstate(0.5).unwrap();
        let series = exact_evolve(&s, params, &spec, 2, &psi, 3.0, 1.0).unwrap();
        let u = floquet_operator(&s, &params).unwrap();
        let mut closed = psi.clone();
        for st in series.iter().skip(1) {
            closed = &u * closed;
            let vac = 0;
            let row = st.amps.row(vac).transpose();
            assert!((row - &closed).norm() < 1e-10);
        }
    }

    #[test]
    fn energy_is_conserved_without_kicks() {
        let s = build_spin_sector(1.0).unwrap();
        let params = KickedTopParams { k: 0.0, p: 0.0, tau: 100.0, beta: 0.0 };
        let spec = uniform_chain(1.0, 0.2, 0.3, 1).unwrap();
        let sys = ExactSystem::new(&s, params, &spec, 6).unwrap();
        let mut st = sys.initial(&s.jy_eigenstate(1.0).unwrap()).unwrap();
        let e0 = sys.energy(&st);
        for k in 1..=10 {
            sys.evolve(&mut st, k as f64 * 0.7);
            assert!((sys.energy(&st) - e0).abs() < 1e-8);
            assert!((st.amps.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let s = build_spin_sector(5.0).unwrap();
        let spec = uniform_chain(1.0, 0.2, 0.05, 40).unwrap();
        let err = ExactSystem::new(&s, KickedTopParams::default(), &spec, 6).err().unwrap();
        assert!(matches!(err, Error::OracleTooLarge { .. }));
    }

    #[test]
    fn identical_series_compare_to_zero() {
        let a = vec![(0.0, 0.1), (1.0, 0.3)];
        assert_eq!(reduced_compare(&a, &a).unwrap(), 0.0);
        assert!(reduced_compare(&a, &a[..1]).is_err());
    }
}
