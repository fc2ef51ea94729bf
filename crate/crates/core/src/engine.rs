//! Joint evolution of the kicked top and the relevant bath modes.
//!
//! The state lives on `spin (x) Fock(slots)`. Slot `l` is the bath mode with
//! annihilator `c_l = sum_k F_kl a_k`, where `F` is the frame. In the
//! interaction picture of the free chain the coupling reads
//! `h J_y (x) sum_l (g_l(t) c_l + conj(g_l(t)) c_l^dagger)` with
//! `g(t) = F^dagger phi(t)`. Amplitudes are stored with the spin in the `J_y`
//! eigenbasis, where the precession and the coupling are block diagonal; only
//! the kicks mix spin blocks.
//!
//! Within a block the coupling is linear in `c_l, c_l^dagger`, so commutators
//! at different times are c-numbers and the second-order Magnus propagator,
//! built from exact time integrals of `g`, is exact up to the Fock cap. The
//! step length `dt` only decides how often the cap truncates a displacement;
//! the Krylov solver is held to `tolerance` per unit time.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{append_vacuum_slot, apply_two_slot, FockBasis};
use crate::kicked_top::{kick_phases, KickedTopParams, SpinSector};
use crate::krylov::expm_apply;
use crate::lightcone::{FrameCoupling, OneParticleTrajectory};
use crate::linalg::{c, I};

/// Kicks closer than this to a target time are applied at the target.
pub const KICK_TOL: f64 = 1e-9;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Jy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Largest integrator step.
    pub dt: f64,
    /// Cap on the total number of quanta in all slots.
    pub n_max: usize,
    pub a_cut: f64,
    pub seed: u64,
    /// Local error allowed per unit time.
    pub tolerance: f64,
    /// Largest population tolerated on the cap shell.
    pub leakage_bound: f64,
    pub max_modes: usize,
    pub observables: Vec<Observable>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            dt: 0.01,
            n_max: 7,
            a_cut: 1e-4,
            seed: 0,
            tolerance: 1e-8,
            leakage_bound: 1e-3,
            max_modes: 24,
            observables: vec![Observable::Jy],
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_max < 1 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        if !(self.a_cut > 0.0) {
            return Err(Error::invalid(format!("a_cut must be positive, got {}", self.a_cut)));
        }
        if !(self.tolerance > 0.0) || !(self.leakage_bound > 0.0) {
            return Err(Error::invalid("tolerance and leakage bound must be positive"));
        }
        Ok(())
    }
}

/// Pure state of spin and relevant modes.
#[derive(Clone, Debug)]
pub struct JointState {
    pub time: f64,
    /// Number of kicks applied so far.
    pub kicks: u64,
    pub basis: FockBasis,
    /// Rows: Fock states; columns: `J_y` eigenstates, ascending.
    pub amps: DMatrix<C64>,
    /// Site-space vectors of the slots, one column per slot.
    pub frame: DMatrix<C64>,
    /// Slots that still couple to the spin; the others are kept spectators.
    pub active: Vec<bool>,
    /// Largest cap-shell population seen after any `evolve_to`.
    pub peak_leakage: f64,
}

impl JointState {
    pub fn spin_dim(&self) -> usize {
        self.amps.ncols()
    }

    pub fn slots(&self) -> usize {
        self.basis.slots()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn active_slots(&self) -> Vec<usize> {
        (0..self.slots()).filter(|&l| self.active[l]).collect()
    }

    /// Spin amplitudes in the `J_z` basis for each Fock state (rows).
    pub fn amps_z(&self, sector: &SpinSector) -> DMatrix<C64> {
        // A_z = A_y Vy^T
        &self.amps * sector.jy_basis.transpose()
    }
}

/// `psi (x) vacuum` with `psi` given in the `J_z` basis.
pub fn init_joint(sector: &SpinSector, spin_state: &DVector<C64>, n_max: usize, sites: usize) -> Result<JointState> {
    if spin_state.len() != sector.dim() {
        return Err(Error::invalid(format!(
            "spin state has dimension {}, expected {}",
            spin_state.len(),
            sector.dim()
        )));
    }
    let dev = (spin_state.norm() - 1.0).abs();
    if dev > 1e-8 {
        return Err(Error::invalid(format!("spin state is not normalized (|norm - 1| = {dev:.2e})")));
    }
    let basis = FockBasis::new(0, n_max)?;
    // A_y = psi_z^T conj(Vy)
    let row = spin_state.transpose() * sector.jy_basis.map(|z| z.conj());
    let amps = DMatrix::from_row_slice(1, row.len(), row.as_slice());
    Ok(JointState {
        time: 0.0,
        kicks: 0,
        basis,
        amps,
        frame: DMatrix::zeros(sites, 0),
        active: Vec::new(),
        peak_leakage: 0.0,
    })
}

/// `H_eff(t)` in the `J_y` basis: `omega m + h m B(t)` on block `m`.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub omega: f64,
    pub h_sys: f64,
    /// `J_y` eigenvalues.
    pub m: Vec<f64>,
    /// Slot couplings (zero for spectators).
    pub g: Vec<C64>,
}

impl EffectiveHamiltonian {
    pub fn apply(&self, basis: &FockBasis, amps: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(amps.nrows(), amps.ncols());
        for (k, &m) in self.m.iter().enumerate() {
            let x = amps.column(k);
            let mut y = vec![ZERO; amps.nrows()];
            basis.apply_linear(&self.g, x.as_slice(), &mut y);
            for (s, ys) in y.iter().enumerate() {
                out[(s, k)] = x[s] * (self.omega * m) + ys * (self.h_sys * m);
            }
        }
        out
    }

    /// Dense matrix on the flattened (column-major) amplitudes.
    pub fn to_dense(&self, basis: &FockBasis) -> DMatrix<C64> {
        let rows = basis.len();
        let n = rows * self.m.len();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DMatrix::zeros(rows, self.m.len());
            e[(j % rows, j / rows)] = c(1.0);
            let col = self.apply(basis, &e);
            for (i, z) in col.iter().enumerate() {
                h[(i, j)] = *z;
            }
        }
        h
    }
}

/// Evolves joint states of one kicked top coupled through one chain.
pub struct Engine<'a> {
    pub sector: &'a SpinSector,
    pub params: KickedTopParams,
    pub h_sys: f64,
    pub traj: &'a OneParticleTrajectory,
    pub cfg: EngineConfig,
    /// `K_y^T` with `K_y = Vy^dagger K_z Vy`.
    kick_t: DMatrix<C64>,
    nodes: (Vec<f64>, Vec<f64>),
}

/// Work done by the integrator, for diagnostics.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    pub steps: usize,
    pub matvecs: usize,
}

/// Gauss-Legendre order for the ordered double integral of one step.
const ORDERED_NODES: usize = 10;

impl<'a> Engine<'a> {
    pub fn new(
        sector: &'a SpinSector,
        params: KickedTopParams,
        h_sys: f64,
        traj: &'a OneParticleTrajectory,
        cfg: EngineConfig,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let kz = kick_phases(sector, &params)?;
        let vy = &sector.jy_basis;
        let mut kv = vy.clone();
        for (r, ph) in kz.iter().enumerate() {
            kv.row_mut(r).iter_mut().for_each(|z| *z *= ph);
        }
        let ky = vy.adjoint() * kv;
        Ok(Engine {
            sector,
            params,
            h_sys,
            traj,
            cfg,
            kick_t: ky.transpose(),
            nodes: crate::bath::gauss_legendre(ORDERED_NODES),
        })
    }

    pub fn init(&self, spin_state: &DVector<C64>) -> Result<JointState> {
        init_joint(self.sector, spin_state, self.cfg.n_max, self.traj.sites())
    }

    fn coupling(&self, st: &JointState) -> (FrameCoupling, Vec<bool>) {
        (self.traj.projector(&st.frame), st.active.clone())
    }

    fn g_at(coupling: &FrameCoupling, active: &[bool], t: f64) -> Vec<C64> {
        let g = coupling.at(t);
        g.iter().zip(active).map(|(&z, &on)| if on { z } else { ZERO }).collect()
    }

    pub fn effective_hamiltonian(&self, st: &JointState, t: f64) -> EffectiveHamiltonian {
        let (cp, active) = self.coupling(st);
        EffectiveHamiltonian {
            omega: self.params.omega(),
            h_sys: self.h_sys,
            m: self.sector.jy_values.clone(),
            g: Self::g_at(&cp, &active, t),
        }
    }

    /// `<J_y>`.
    pub fn expectation(&self, st: &JointState) -> f64 {
        expectation_jy(self.sector, st)
    }

    /// Apply the kick unitary to the spin.
    pub fn kick(&self, st: &mut JointState) {
        st.amps = &st.amps * &self.kick_t;
    }

    /// Integrate to `t_target`, applying every kick at `n tau <= t_target`.
    pub fn evolve_to(&self, st: &mut JointState, t_target: f64) -> Result<StepStats> {
        if t_target < st.time - 1e-12 {
            return Err(Error::invalid(format!("cannot evolve backwards from {} to {t_target}", st.time)));
        }
        let mut stats = StepStats::default();
        let (cp, active) = self.coupling(st);
        let tau = self.params.tau;
        loop {
            let t_kick = (st.kicks + 1) as f64 * tau;
            if t_kick <= t_target + KICK_TOL {
                let end = t_kick.min(t_target);
                self.integrate(st, &cp, &active, end, &mut stats)?;
                self.kick(st);
                st.kicks += 1;
            } else {
                self.integrate(st, &cp, &active, t_target, &mut stats)?;
                break;
            }
        }
        st.time = t_target;
        let leak = st.basis.cap_population(&st.amps);
        st.peak_leakage = st.peak_leakage.max(leak);
        if leak > self.cfg.leakage_bound {
            return Err(Error::CapLeakage { leakage: leak, bound: self.cfg.leakage_bound, time: st.time });
        }
        Ok(stats)
    }

    fn integrate(
        &self,
        st: &mut JointState,
        cp: &FrameCoupling,
        active: &[bool],
        t_end: f64,
        stats: &mut StepStats,
    ) -> Result<()> {
        let t0 = st.time;
        let span = t_end - t0;
        if span <= 0.0 {
            st.time = st.time.max(t_end);
            return Ok(());
        }
        let coupled = self.h_sys != 0.0 && active.iter().any(|&a| a);
        if coupled {
            // The coupling integrals are exact, so the step only sets how
            // often the Fock cap truncates the displacement.
            let n = (span / self.cfg.dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                let t = t0 + k as f64 * h;
                st.amps = self.magnus_step(&st.basis, cp, active, &st.amps, t, h, stats);
                stats.steps += 1;
            }
        }
        // Precession commutes with the coupling: apply it exactly.
        let omega = self.params.omega();
        for (k, &m) in self.sector.jy_values.iter().enumerate() {
            let ph = (-I * omega * m * span).exp();
            st.amps.column_mut(k).iter_mut().for_each(|z| *z *= ph);
        }
        st.time = t_end;
        Ok(())
    }

    /// Coupling propagator over `[t, t + h]`: per block with spin value `m`,
    /// `exp(-i h_sys m sum_l (G_l c_l + conj(G_l) c_l^dagger)) exp(-i (h_sys m)^2 Im J)`
    /// with `G = int g` and `J` the ordered double integral of `g conj(g)`.
    #[allow(clippy::too_many_arguments)]
    fn magnus_step(
        &self,
        basis: &FockBasis,
        cp: &FrameCoupling,
        active: &[bool],
        amps: &DMatrix<C64>,
        t: f64,
        h: f64,
        stats: &mut StepStats,
    ) -> DMatrix<C64> {
        let mask = |v: DVector<C64>| -> Vec<C64> {
            v.iter().zip(active).map(|(&z, &on)| if on { z } else { ZERO }).collect()
        };
        let total = mask(cp.integral(t, t + h));
        let ordered: f64 = mask(cp.ordered_integral(t, t + h, &self.nodes)).iter().map(|z| z.im).sum();
        let ktol = self.cfg.tolerance * h;
        let mut out = amps.clone();
        let mut buf = vec![ZERO; basis.len()];
        let mut op = |x: &[C64], y: &mut [C64]| {
            y.iter_mut().for_each(|z| *z = ZERO);
            basis.apply_linear(&total, x, y);
        };
        for (k, &m) in self.sector.jy_values.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let s = self.h_sys * m;
            let x = out.column(k).clone_owned();
            let ks = expm_apply(&mut op, x.as_slice(), s, ktol, &mut buf);
            stats.matvecs += ks.matvecs;
            let ph = (-I * s * s * ordered).exp();
            for (o, b) in out.column_mut(k).iter_mut().zip(&buf) {
                *o = b * ph;
            }
        }
        out
    }

    /// Add a new slot holding `mode` in its vacuum.
    pub fn attach_mode(&self, st: &mut JointState, mode: &DVector<C64>) -> Result<()> {
        if st.slots() + 1 > self.cfg.max_modes {
            return Err(Error::TooManyModes { max: self.cfg.max_modes });
        }
        attach_mode(st, mode)
    }
}

/// `<J_y>` of a joint state.
pub fn expectation_jy(sector: &SpinSector, st: &JointState) -> f64 {
    let mut acc = 0.0;
    for (k, &m) in sector.jy_values.iter().enumerate() {
        acc += m * st.amps.column(k).norm_squared();
    }
    acc / st.amps.norm_squared()
}

/// Add a vacuum slot for `mode` (unit vector over the chain, orthogonal to
/// the current frame).
pub fn attach_mode(st: &mut JointState, mode: &DVector<C64>) -> Result<()> {
    if mode.len() != st.frame.nrows() {
        return Err(Error::invalid(format!(
            "mode has {} sites, frame has {}",
            mode.len(),
            st.frame.nrows()
        )));
    }
    if (mode.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("mode vector is not normalized"));
    }
    let overlap = (st.frame.adjoint() * mode).norm();
    if overlap > 1e-6 {
        return Err(Error::invalid(format!("mode overlaps the current frame ({overlap:.2e})")));
    }
    let new = FockBasis::new(st.slots() + 1, st.basis.n_max())?;
    st.amps = append_vacuum_slot(&st.basis, &new, &st.amps);
    st.basis = new;
    let r = st.frame.ncols();
    st.frame = st.frame.clone().insert_column(r, ZERO);
    st.frame.set_column(r, mode);
    st.active.push(true);
    Ok(())
}

/// Rotate the active slots so that `mode` occupies a single slot; returns
/// that slot. The state itself is unchanged, only its representation.
pub fn rotate_into_slot(st: &mut JointState, mode: &DVector<C64>) -> Result<usize> {
    let act = st.active_slots();
    if act.is_empty() {
        return Err(Error::ModeOutsideFrame { residual: mode.norm() });
    }
    let mut v: Vec<C64> = act.iter().map(|&l| st.frame.column(l).dotc(mode)).collect();
    let mut proj = DVector::<C64>::zeros(mode.len());
    for (&l, &vl) in act.iter().zip(&v) {
        proj += st.frame.column(l) * vl;
    }
    let residual = (mode - &proj).norm();
    if residual > 1e-6 {
        return Err(Error::ModeOutsideFrame { residual });
    }
    for i in 0..act.len() - 1 {
        let (a, b) = (act[i], act[i + 1]);
        let (va, vb) = (v[i], v[i + 1]);
        let n = (va.norm_sqr() + vb.norm_sqr()).sqrt();
        if va.norm() <= 1e-300 {
            continue;
        }
        // G has second column (va, vb)/n; G^dagger (va, vb) = (0, n).
        let g = [[vb.conj() / n, va / n], [-va.conj() / n, vb / n]];
        let fa = st.frame.column(a).clone_owned();
        let fb = st.frame.column(b).clone_owned();
        st.frame.set_column(a, &(&fa * g[0][0] + &fb * g[1][0]));
        st.frame.set_column(b, &(&fa * g[0][1] + &fb * g[1][1]));
        // Slot operators change as c' = G^T c.
        let w = [[g[0][0], g[1][0]], [g[0][1], g[1][1]]];
        apply_two_slot(&st.basis, &mut st.amps, a, b, w);
        v[i] = ZERO;
        v[i + 1] = c(n);
    }
    Ok(*act.last().unwrap())
}

/// Drop slot `p`, keeping the rows where it is empty scaled as given in `amps`
/// (used after a projection onto a branch).
pub fn remove_slot_rows(basis: &FockBasis, p: usize) -> Result<(FockBasis, Vec<(usize, usize, usize)>)> {
    // Returns the reduced basis and, for each old state, (old index, reduced
    // index, occupation of p).
    let reduced = FockBasis::new(basis.slots() - 1, basis.n_max())?;
    let mut map = Vec::with_capacity(basis.len());
    let mut key = Vec::with_capacity(basis.slots());
    for s in 0..basis.len() {
        let st = basis.state(s);
        key.clear();
        key.extend(st.iter().enumerate().filter(|(l, _)| *l != p).map(|(_, &n)| n));
        let t = reduced.find(&key).expect("dropping a slot stays inside the cap");
        map.push((s, t, st[p] as usize));
    }
    Ok((reduced, map))
}
