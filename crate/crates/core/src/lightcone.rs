//! One-particle propagation along the chain, time-windowed significance
//! densities and the schedule of coupled and decoupled bath modes.
//!
//! In the interaction picture the chain operator that touches the system is
//! `a_0(t) = sum_k phi_k(t) a_k` with `phi(t) = exp(-i H_1 t) e_0`. A mode
//! `kappa` matters at time `t` with intensity `|<kappa|phi(t)>|^2`; its
//! accumulated past and future intensities are the quadratic forms of
//! `rho_plus(t) = int_0^t |phi><phi|` and `rho_minus(t) = int_t^T |phi><phi|`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bath::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg::{c, dominant_site, I};

/// Largest amplitude tolerated at the far end of a chain that stands in for a
/// semi-infinite bath.
pub const FRONT_TOLERANCE: f64 = 1e-6;

/// Sites whose accumulated weight is below this are outside the active window.
pub const WINDOW_WEIGHT: f64 = 1e-14;

/// Relative Gram-Schmidt residual below which a new coupled mode is taken
/// from the whole above-threshold subspace instead of a single eigenvector.
const GS_FALLBACK: f64 = 1e-3;

/// How the far end of the chain is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// The chain truncates a semi-infinite bath: reaching the end is an error.
    SemiInfinite,
    /// The chain is the whole bath; reflections are physical.
    Finite,
}

/// `phi(t)` on a uniform grid, plus the spectral data to evaluate it anywhere.
#[derive(Clone, Debug)]
pub struct OneParticleTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// Column `i` is `phi(t_i)`.
    pub phi: DMatrix<C64>,
    energies: DVector<f64>,
    /// `V diag(V_0.)`: `phi(t) = amps * exp(-i energies t)`.
    amps: DMatrix<f64>,
}

impl OneParticleTrajectory {
    pub fn sites(&self) -> usize {
        self.phi.nrows()
    }

    /// Index of the last grid point.
    pub fn last(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.last()]
    }

    /// `phi(t)` at an arbitrary time.
    pub fn phi_at(&self, t: f64) -> DVector<C64> {
        let ph = self.energies.map(|e| (-I * e * t).exp());
        self.amps.map(c) * ph
    }

    /// Couplings `F^dagger phi(t)` of the columns of `frame`.
    pub fn projector(&self, frame: &DMatrix<C64>) -> FrameCoupling {
        let m = self.sites();
        assert_eq!(frame.nrows(), m, "frame has the wrong number of sites");
        FrameCoupling {
            weights: frame.adjoint() * self.amps.map(c),
            energies: self.energies.clone(),
        }
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let i = x.round();
        if i < 0.0 || (x - i).abs() > 1e-6 || i as usize > self.last() {
            return None;
        }
        Some(i as usize)
    }

    /// Largest deviation of `|phi(t_i)|` from one on the grid.
    pub fn norm_drift(&self) -> f64 {
        self.phi
            .column_iter()
            .map(|col| (col.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluates `F^dagger phi(t)` for a fixed frame `F` in O(r M).
#[derive(Clone, Debug)]
pub struct FrameCoupling {
    weights: DMatrix<C64>,
    energies: DVector<f64>,
}

impl FrameCoupling {
    pub fn at(&self, t: f64) -> DVector<C64> {
        let ph = self.energies.map(|e| (-I * e * t).exp());
        &self.weights * ph
    }

    /// `int_a^b F^dagger phi(s) ds`, exactly.
    pub fn integral(&self, a: f64, b: f64) -> DVector<C64> {
        let span = b - a;
        let ph = self.energies.map(|e| (-I * e * a).exp() * span * exp_ratio(-I * e * span));
        &self.weights * ph
    }

    /// Per slot `int_a^b dt int_a^t ds g_l(t) conj(g_l(s))` with
    /// `g = F^dagger phi`, by Gauss-Legendre quadrature in the outer variable.
    pub fn ordered_integral(&self, a: f64, b: f64, nodes: &(Vec<f64>, Vec<f64>)) -> DVector<C64> {
        let half = 0.5 * (b - a);
        let mut acc = DVector::<C64>::zeros(self.len());
        for (&x, &w) in nodes.0.iter().zip(&nodes.1) {
            let t = a + half * (1.0 + x);
            let g = self.at(t);
            let inner = self.integral(a, t);
            for l in 0..acc.len() {
                acc[l] += g[l] * inner[l].conj() * (w * half);
            }
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }
}

/// `(e^z - 1) / z`, accurate near zero.
fn exp_ratio(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Solve `i d phi/dt = H_1 phi`, `phi(0) = e_0`, on the grid `0, dt', .., T`
/// where `dt' = T / round(T / dt)`.
pub fn propagate_one_particle(
    spec: &ChainSpec,
    horizon: f64,
    dt: f64,
    boundary: Boundary,
) -> Result<OneParticleTrajectory> {
    spec.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon {horizon} must be at least dt = {dt}")));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let m = spec.len();

    let eig = spec.one_particle_hamiltonian().symmetric_eigen();
    let energies = eig.eigenvalues.clone();
    let mut amps = eig.eigenvectors.clone();
    for n in 0..m {
        let v0 = eig.eigenvectors[(0, n)];
        amps.column_mut(n).iter_mut().for_each(|x| *x *= v0);
    }

    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let phases = DMatrix::from_fn(m, steps + 1, |n, i| (-I * energies[n] * times[i]).exp());
    let mut phi = amps.map(c) * phases;
    // Exact initial condition rather than a rounded one.
    phi.column_mut(0).fill(C64::new(0.0, 0.0));
    phi[(0, 0)] = c(1.0);

    if boundary == Boundary::SemiInfinite && m > 1 {
        for (i, col) in phi.column_iter().enumerate() {
            let a = col[m - 1].norm();
            if a > FRONT_TOLERANCE {
                return Err(Error::ChainTooShort { amplitude: a, time: times[i] });
            }
        }
    }

    Ok(OneParticleTrajectory { dt, times, phi, energies, amps })
}

/// `C_j(t_i) = |phi_j(t_i)|^2`.
pub fn instant_otoc(traj: &OneParticleTrajectory, site: usize, index: usize) -> f64 {
    traj.phi[(site, index)].norm_sqr()
}

/// Trapezoid-rule accumulations of `|phi><phi|` over past and future windows,
/// restricted to the sites that are ever reached.
#[derive(Clone, Debug)]
pub struct WindowedDensity {
    pub horizon: f64,
    pub dt: f64,
    /// Grid indices of the checkpoints, ascending.
    pub checkpoints: Vec<usize>,
    /// Number of leading sites kept.
    pub window: usize,
    /// Full chain length (mode vectors are padded back to this).
    pub sites: usize,
    /// `phi` on the window, one column per grid time.
    phi: DMatrix<C64>,
    /// `rho_plus(T)`.
    pub total: DMatrix<C64>,
}

/// Checkpoint times every `stride` grid steps, always ending at the horizon.
pub fn checkpoint_grid(traj: &OneParticleTrajectory, stride: usize) -> Vec<f64> {
    let stride = stride.max(1);
    let last = traj.last();
    let mut idx: Vec<usize> = (0..=last).step_by(stride).collect();
    if *idx.last().unwrap() != last {
        idx.push(last);
    }
    idx.into_iter().map(|i| traj.times[i]).collect()
}

pub fn accumulate_windows(traj: &OneParticleTrajectory, checkpoints: &[f64]) -> Result<WindowedDensity> {
    let mut idx = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let i = traj
            .grid_index(t)
            .ok_or_else(|| Error::invalid(format!("checkpoint t = {t} is not on the grid")))?;
        idx.push(i);
    }
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("checkpoints must be strictly increasing"));
    }
    let last = traj.last();
    let dt = traj.dt;
    let sites = traj.sites();
    let weight = |i: usize| if i == 0 || i == last { 0.5 * dt } else { dt };

    let mut diag = vec![0.0; sites];
    for (i, col) in traj.phi.column_iter().enumerate() {
        let w = weight(i);
        for (k, z) in col.iter().enumerate() {
            diag[k] += w * z.norm_sqr();
        }
    }
    let window = diag.iter().rposition(|&d| d > WINDOW_WEIGHT).map_or(1, |k| k + 1);
    let phi = traj.phi.rows(0, window).into_owned();
    let mut scaled = phi.clone();
    for i in 0..=last {
        let s = weight(i).sqrt();
        scaled.column_mut(i).iter_mut().for_each(|z| *z *= s);
    }
    let total = &scaled * scaled.adjoint();

    Ok(WindowedDensity {
        horizon: traj.horizon(),
        dt,
        checkpoints: idx,
        window,
        sites,
        phi,
        total,
    })
}

impl WindowedDensity {
    pub fn last(&self) -> usize {
        self.phi.ncols() - 1
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    fn trapezoid(&self, from: usize, to: usize) -> DMatrix<C64> {
        let w = self.window;
        if to <= from {
            return DMatrix::zeros(w, w);
        }
        let n = to - from + 1;
        let mut a = self.phi.columns(from, n).into_owned();
        for k in 0..n {
            let s = if k == 0 || k == n - 1 { 0.5 * self.dt } else { self.dt };
            let s = s.sqrt();
            a.column_mut(k).iter_mut().for_each(|z| *z *= s);
        }
        &a * a.adjoint()
    }

    /// `rho_plus` at grid index `index`.
    pub fn rho_plus(&self, index: usize) -> DMatrix<C64> {
        self.trapezoid(0, index)
    }

    /// `rho_minus` at grid index `index`, accumulated directly over `[t, T]`.
    pub fn rho_minus(&self, index: usize) -> DMatrix<C64> {
        self.trapezoid(index, self.last())
    }

    /// Pad a window vector back to the full chain.
    pub fn pad(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.sites);
        out.rows_mut(0, v.len()).copy_from(v);
        out
    }

    fn cursor(&self) -> Cursor<'_> {
        Cursor {
            wd: self,
            index: 0,
            prefix: self.outer(0, 0.5 * self.dt),
        }
    }

    fn outer(&self, i: usize, scale: f64) -> DMatrix<C64> {
        let col = self.phi.column(i);
        col * col.adjoint() * c(scale)
    }

    /// `rho_plus(t_to)` given `base = rho_plus(t_from)`.
    fn extend(&self, base: &DMatrix<C64>, from: usize, to: usize) -> DMatrix<C64> {
        let mut r = base.clone();
        if to <= from {
            return r;
        }
        r += self.outer(from, 0.5 * self.dt);
        for k in from + 1..to {
            r += self.outer(k, self.dt);
        }
        r += self.outer(to, 0.5 * self.dt);
        r
    }
}

/// Walks the grid keeping `S_i = dt/2 |phi_0><phi_0| + dt sum_{0<k<=i} |phi_k><phi_k|`,
/// so that `rho_plus(t_i) = S_i - dt/2 |phi_i><phi_i|`.
struct Cursor<'a> {
    wd: &'a WindowedDensity,
    index: usize,
    prefix: DMatrix<C64>,
}

impl Cursor<'_> {
    fn advance_to(&mut self, target: usize) {
        while self.index < target {
            self.index += 1;
            let o = self.wd.outer(self.index, self.wd.dt);
            self.prefix += o;
        }
    }

    fn rho_plus(&self) -> DMatrix<C64> {
        &self.prefix - self.wd.outer(self.index, 0.5 * self.wd.dt)
    }
}

/// Number of leading sites carrying weight in `rho`.
fn active_len(rho: &DMatrix<C64>) -> usize {
    let n = rho.nrows();
    (0..n).rev().find(|&k| rho[(k, k)].re > WINDOW_WEIGHT).map_or(1.min(n), |k| k + 1)
}

fn count_above(rho: &DMatrix<C64>, a_cut: f64) -> usize {
    let n = active_len(rho);
    if n == 0 {
        return 0;
    }
    let sub = rho.view((0, 0), (n, n)).into_owned();
    sub.symmetric_eigenvalues().iter().filter(|&&e| e > a_cut).count()
}

/// Eigenpairs of a Hermitian matrix in descending order; exact ties are
/// ordered by the lowest dominant site.
fn eig_descending(rho: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = rho.nrows();
    let na = active_len(rho);
    let sub = rho.view((0, 0), (na, na)).into_owned();
    let (vals, vecs) = crate::linalg::eigh_sorted(&sub);
    let mut order: Vec<usize> = (0..na).collect();
    let site: Vec<usize> = (0..na).map(|k| dominant_site(&vecs.column(k).into_owned())).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (vals[a], vals[b]);
        if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300) {
            site[a].cmp(&site[b])
        } else {
            y.total_cmp(&x)
        }
    });
    let mut out = DMatrix::zeros(n, na);
    for (dst, &src) in order.iter().enumerate() {
        out.view_mut((0, dst), (na, 1)).copy_from(&vecs.column(src));
    }
    (order.iter().map(|&k| vals[k]).collect(), out)
}

/// A mode entering the light cone.
#[derive(Clone, Debug)]
pub struct InEvent {
    pub time: f64,
    pub index: usize,
    /// Position among events sharing this timestamp.
    pub tie: usize,
    /// Unit vector over the full chain.
    pub mode: DVector<C64>,
    /// `<kappa|rho_plus(t)|kappa>` at entry.
    pub significance: f64,
}

/// A mode leaving the light cone for good.
#[derive(Clone, Debug)]
pub struct OutEvent {
    pub time: f64,
    pub index: usize,
    pub tie: usize,
    pub mode: DVector<C64>,
    /// `<kappa|rho_minus(t)|kappa>` at exit.
    pub significance: f64,
}

/// Descending-significance coupled modes, frozen once recorded.
pub fn coupled_mode_schedule(wd: &WindowedDensity, a_cut: f64) -> Result<Vec<InEvent>> {
    check_cut(a_cut)?;
    let mut events: Vec<InEvent> = Vec::new();
    let mut basis: Vec<DVector<C64>> = Vec::new();
    let mut cur = wd.cursor();
    let mut prev_rho = DMatrix::zeros(wd.window, wd.window);
    for &cp in &wd.checkpoints {
        let base_index = cur.index;
        let base = prev_rho.clone();
        cur.advance_to(cp);
        let rho = cur.rho_plus();
        let n_here = count_above(&rho, a_cut);
        if n_here > basis.len() {
            // Restore a cursor view at the previous checkpoint for bisection.
            let probe = |j: usize| -> DMatrix<C64> {
                if j == cp {
                    rho.clone()
                } else {
                    wd.extend(&base, base_index, j)
                }
            };
            while basis.len() < n_here {
                let target = basis.len() + 1;
                let (mut lo, mut hi) = (base_index, cp);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if count_above(&probe(mid), a_cut) >= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let at = probe(hi);
                let (vals, vecs) = eig_descending(&at);
                let n_at = vals.iter().filter(|&&e| e > a_cut).count().max(target);
                let first = basis.len();
                for rank in first..n_at {
                    let mode = new_coupled_mode(&vecs, rank, n_at, &basis);
                    let significance = (mode.adjoint() * &at * &mode)[(0, 0)].re;
                    basis.push(mode.clone());
                    events.push(InEvent {
                        time: wd.time(hi),
                        index: hi,
                        tie: rank - first,
                        mode: wd.pad(&mode),
                        significance,
                    });
                }
            }
        }
        prev_rho = rho;
    }
    Ok(events)
}

fn new_coupled_mode(vecs: &DMatrix<C64>, rank: usize, above: usize, basis: &[DVector<C64>]) -> DVector<C64> {
    let orth = |mut v: DVector<C64>| {
        for _ in 0..2 {
            for b in basis {
                let p = b.dotc(&v);
                v -= b * p;
            }
        }
        v
    };
    let v = orth(vecs.column(rank).into_owned());
    let n = v.norm();
    if n >= GS_FALLBACK {
        return v / c(n);
    }
    // The eigenvector is (almost) inside the recorded span: take the direction
    // of the above-threshold eigenspace that is least captured.
    let cols: Vec<DVector<C64>> = (0..above).map(|k| orth(vecs.column(k).into_owned())).collect();
    let p = DMatrix::from_columns(&cols);
    let svd = p.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut best = 0;
    for k in 1..svd.singular_values.len() {
        if svd.singular_values[k] > svd.singular_values[best] {
            best = k;
        }
    }
    let v = orth(u.column(best).into_owned());
    let n = v.norm();
    let mut v = v / c(n);
    crate::linalg::fix_phase(&mut v);
    v
}

/// Modes whose future significance inside the relevant frame drops below
/// `a_cut`, extracted in ascending order of that significance.
pub fn decoupled_mode_schedule(wd: &WindowedDensity, in_events: &[InEvent], a_cut: f64) -> Result<Vec<OutEvent>> {
    check_cut(a_cut)?;
    let w = wd.window;
    let mut out = Vec::new();
    let mut frame = DMatrix::<C64>::zeros(w, 0);
    let mut next_in = 0;
    let mut cur = wd.cursor();
    let mut prev_rho = DMatrix::zeros(w, w);
    for &cp in &wd.checkpoints {
        let base_index = cur.index;
        let base = prev_rho.clone();
        cur.advance_to(cp);
        let rho = cur.rho_plus();
        let mut last_in = base_index;
        while next_in < in_events.len() && in_events[next_in].index <= cp {
            let ev = &in_events[next_in];
            frame = append_column(&frame, &ev.mode.rows(0, w).into_owned());
            last_in = last_in.max(ev.index);
            next_in += 1;
        }
        let minus_at = |j: usize| -> DMatrix<C64> {
            let plus = if j == cp {
                rho.clone()
            } else {
                wd.extend(&base, base_index, j)
            };
            &wd.total - plus
        };
        let lowest = |f: &DMatrix<C64>, j: usize| -> f64 {
            let e = f.adjoint() * minus_at(j) * f;
            e.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
        };
        let mut tie = 0;
        let mut tie_index = usize::MAX;
        while frame.ncols() > 0 && lowest(&frame, cp) < a_cut {
            let j = if lowest(&frame, last_in) < a_cut {
                last_in
            } else {
                let (mut lo, mut hi) = (last_in, cp);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if lowest(&frame, mid) < a_cut {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            let minus = minus_at(j);
            let e = frame.adjoint() * &minus * &frame;
            let (vals, vecs) = crate::linalg::eigh_sorted(&e);
            let mut order: Vec<usize> = (0..vals.len()).collect();
            let sites: Vec<usize> =
                (0..vals.len()).map(|k| dominant_site(&(&frame * vecs.column(k)).into_owned())).collect();
            order.sort_by(|&a, &b| {
                let (x, y) = (vals[a], vals[b]);
                if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(a_cut) {
                    sites[a].cmp(&sites[b])
                } else {
                    x.total_cmp(&y)
                }
            });
            let lead = order[0];
            let mode = &frame * vecs.column(lead);
            let rest: Vec<DVector<C64>> = order[1..].iter().map(|&k| vecs.column(k).into_owned()).collect();
            frame = if rest.is_empty() {
                DMatrix::zeros(w, 0)
            } else {
                &frame * DMatrix::from_columns(&rest)
            };
            if j != tie_index {
                tie = 0;
                tie_index = j;
            }
            out.push(OutEvent {
                time: wd.time(j),
                index: j,
                tie,
                mode: wd.pad(&mode),
                significance: vals[lead].max(0.0),
            });
            tie += 1;
        }
        prev_rho = rho;
    }
    Ok(out)
}

fn append_column(m: &DMatrix<C64>, v: &DVector<C64>) -> DMatrix<C64> {
    let mut out = m.clone().insert_column(m.ncols(), C64::new(0.0, 0.0));
    out.set_column(m.ncols(), v);
    out
}

fn check_cut(a_cut: f64) -> Result<()> {
    if !(a_cut > 0.0) || !a_cut.is_finite() {
        return Err(Error::invalid(format!("a_cut must be positive, got {a_cut}")));
    }
    Ok(())
}

/// One entry of the merged event timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    In(usize),
    Out(usize),
}

/// Mode counts at one checkpoint.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModeCounts {
    pub t: f64,
    pub m_in: usize,
    pub m_out: usize,
    pub r: usize,
}

/// Coupled and decoupled modes with the relevant frame between events.
#[derive(Clone, Debug)]
pub struct LightConeSchedule {
    pub a_cut: f64,
    pub horizon: f64,
    pub sites: usize,
    pub in_events: Vec<InEvent>,
    pub out_events: Vec<OutEvent>,
    /// Merged events in time order; at equal times entries precede exits.
    pub timeline: Vec<Event>,
    /// Relevant frame right after each timeline entry.
    frames: Vec<DMatrix<C64>>,
    checkpoint_times: Vec<f64>,
}

impl LightConeSchedule {
    pub fn build(wd: &WindowedDensity, a_cut: f64) -> Result<Self> {
        let in_events = coupled_mode_schedule(wd, a_cut)?;
        let out_events = decoupled_mode_schedule(wd, &in_events, a_cut)?;
        Ok(Self::assemble(wd, a_cut, in_events, out_events))
    }

    fn assemble(wd: &WindowedDensity, a_cut: f64, in_events: Vec<InEvent>, out_events: Vec<OutEvent>) -> Self {
        let mut timeline = Vec::with_capacity(in_events.len() + out_events.len());
        let (mut a, mut b) = (0, 0);
        while a < in_events.len() || b < out_events.len() {
            let take_in = b == out_events.len()
                || (a < in_events.len() && in_events[a].index <= out_events[b].index);
            if take_in {
                timeline.push(Event::In(a));
                a += 1;
            } else {
                timeline.push(Event::Out(b));
                b += 1;
            }
        }
        let mut frames = Vec::with_capacity(timeline.len());
        let mut frame = DMatrix::<C64>::zeros(wd.sites, 0);
        for ev in &timeline {
            frame = match *ev {
                Event::In(k) => append_column(&frame, &in_events[k].mode),
                Event::Out(k) => remove_direction(&frame, &out_events[k].mode),
            };
            frames.push(frame.clone());
        }
        LightConeSchedule {
            a_cut,
            horizon: wd.horizon,
            sites: wd.sites,
            in_events,
            out_events,
            timeline,
            frames,
            checkpoint_times: wd.checkpoints.iter().map(|&i| wd.time(i)).collect(),
        }
    }

    pub fn m_in(&self, t: f64) -> usize {
        self.in_events.iter().take_while(|e| e.time <= t).count()
    }

    pub fn m_out(&self, t: f64) -> usize {
        self.out_events.iter().take_while(|e| e.time <= t).count()
    }

    pub fn relevant(&self, t: f64) -> usize {
        self.m_in(t) - self.m_out(t)
    }

    /// Orthonormal basis of the modes coupled and not yet decoupled at `t`
    /// (events at exactly `t` included).
    pub fn relevant_frame_at(&self, t: f64) -> DMatrix<C64> {
        let n = self
            .timeline
            .iter()
            .take_while(|ev| match **ev {
                Event::In(k) => self.in_events[k].time <= t,
                Event::Out(k) => self.out_events[k].time <= t,
            })
            .count();
        if n == 0 {
            DMatrix::zeros(self.sites, 0)
        } else {
            self.frames[n - 1].clone()
        }
    }

    /// Counts at every checkpoint.
    pub fn counts(&self) -> Vec<ModeCounts> {
        self.checkpoint_times
            .iter()
            .map(|&t| {
                let m_in = self.m_in(t);
                let m_out = self.m_out(t);
                ModeCounts { t, m_in, m_out, r: m_in - m_out }
            })
            .collect()
    }

    /// Mode vectors for export.
    pub fn dump(&self) -> ScheduleDump {
        let rec = |kind: &'static str, time: f64, tie: usize, significance: f64, v: &DVector<C64>| ModeRecord {
            kind,
            time,
            tie,
            significance,
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        };
        let mut modes = Vec::new();
        for ev in &self.timeline {
            modes.push(match *ev {
                Event::In(k) => {
                    let e = &self.in_events[k];
                    rec("in", e.time, e.tie, e.significance, &e.mode)
                }
                Event::Out(k) => {
                    let e = &self.out_events[k];
                    rec("out", e.time, e.tie, e.significance, &e.mode)
                }
            });
        }
        ScheduleDump { a_cut: self.a_cut, horizon: self.horizon, sites: self.sites, modes }
    }
}

fn remove_direction(frame: &DMatrix<C64>, v: &DVector<C64>) -> DMatrix<C64> {
    // Orthonormal basis of span(frame) minus v.
    let coeff = frame.adjoint() * v;
    let comp = crate::linalg::complement_basis(&(&coeff / c(coeff.norm().max(1e-300))));
    frame * comp
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeRecord {
    pub kind: &'static str,
    pub time: f64,
    pub tie: usize,
    pub significance: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleDump {
    pub a_cut: f64,
    pub horizon: f64,
    pub sites: usize,
    pub modes: Vec<ModeRecord>,
}
