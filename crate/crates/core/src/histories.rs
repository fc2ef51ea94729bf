//! Quantum jumps at irreversible decoupling: Schmidt splits of the joint
//! state across each decoupled mode, sampled outcomes, and the entropy of
//! the resulting histories.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{remove_slot_rows, rotate_into_slot, Engine, JointState};
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::lightcone::{Event, LightConeSchedule, OutEvent};
use crate::oracle::{BranchNode, BranchOutcome, BranchProjectorSet, RecordProjector};

/// Schmidt values below this are dropped before normalization.
pub const SCHMIDT_FLOOR: f64 = 1e-12;
/// Branches lighter than this cannot be selected.
pub const EMPTY_BRANCH: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    /// Position of the jump in its history, from 0.
    pub k: usize,
    pub t_out: f64,
    /// Selected outcome, indexing `probs`.
    pub q: usize,
    /// Schmidt weights, descending.
    pub probs: Vec<f64>,
    pub delta_s: f64,
    pub schmidt_rank: usize,
}

impl JumpRecord {
    pub fn p_max(&self) -> f64 {
        self.probs.first().copied().unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub seed: u64,
    pub trajectory: u64,
    pub records: Vec<JumpRecord>,
    /// `(t, <J_y>)` at the output times.
    pub jy_series: Vec<(f64, f64)>,
    /// Sum of `ln p_q` over the selected outcomes.
    pub log_prob: f64,
    /// Largest population on the Fock cap shell along the run.
    pub peak_leakage: f64,
}

impl History {
    pub fn entropy(&self) -> f64 {
        self.records.iter().map(|r| r.delta_s).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_histories: usize,
    pub n_jumps: usize,
    /// Average entropy per jump over all jumps of all histories.
    pub mean_delta_s: f64,
    /// Mean over histories of the summed conditional entropies.
    pub total_entropy: f64,
    /// Average over jumps of the largest outcome probability.
    pub mean_p_max: f64,
    /// Counts of all outcome probabilities `p_q` in equal bins over `[0, 1]`.
    pub jump_histogram: Vec<u64>,
}

/// Decomposition of the joint state across one slot.
#[derive(Clone, Debug)]
pub struct SchmidtSplit {
    pub time: f64,
    /// Slot holding the decoupled mode.
    pub slot: usize,
    /// Site-space vector of that slot.
    pub mode: DVector<C64>,
    /// Descending weights, summing to one.
    pub probs: Vec<f64>,
    /// Normalized branch states on the remaining slots and the spin.
    pub branches: Vec<DMatrix<C64>>,
    /// Record states over the occupations `0..=n_max` of the slot.
    pub records: Vec<DVector<C64>>,
    reduced: FockBasis,
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn delta_entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>().max(0.0)
}

/// Rotate `event.mode` into a single slot and split the state across it.
pub fn schmidt_split(st: &mut JointState, event: &OutEvent, a_cut: f64) -> Result<SchmidtSplit> {
    if event.significance >= a_cut {
        return Err(Error::UnstableRecord { significance: event.significance, a_cut });
    }
    let slot = rotate_into_slot(st, &event.mode)?;
    split_at_slot(st, slot)
}

/// Schmidt decomposition between slot `p` and everything else.
pub fn split_at_slot(st: &JointState, p: usize) -> Result<SchmidtSplit> {
    let (reduced, map) = remove_slot_rows(&st.basis, p)?;
    let n_max = st.basis.n_max();
    let spin = st.spin_dim();
    let rows = reduced.len() * spin;
    // Rows: (reduced state, spin); columns: occupation of the slot.
    let mut psi = DMatrix::<C64>::zeros(rows, n_max + 1);
    for &(s, t, n) in &map {
        for k in 0..spin {
            psi[(t * spin + k, n)] = st.amps[(s, k)];
        }
    }
    let svd = psi.svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&q| svd.singular_values[q] >= SCHMIDT_FLOOR)
        .collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    if order.is_empty() {
        return Err(Error::EmptyBranch { prob: 0.0 });
    }
    let total: f64 = order.iter().map(|&q| svd.singular_values[q].powi(2)).sum();
    let mut probs = Vec::with_capacity(order.len());
    let mut branches = Vec::with_capacity(order.len());
    let mut records = Vec::with_capacity(order.len());
    for &q in &order {
        probs.push(svd.singular_values[q].powi(2) / total);
        let col = u.column(q);
        branches.push(DMatrix::from_fn(reduced.len(), spin, |t, k| col[t * spin + k]));
        // Psi = sum_q s_q u_q (x) (row q of V^dagger).
        records.push(v_t.row(q).transpose());
    }
    Ok(SchmidtSplit {
        time: st.time,
        slot: p,
        mode: st.frame.column(p).clone_owned(),
        probs,
        branches,
        records,
        reduced,
    })
}

/// Uniform double in `[0, 1)` from the top 53 bits.
pub fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draw an outcome index from `probs`.
pub fn sample_jump(probs: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    for (q, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return q;
        }
    }
    // Rounding left the total just below one.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Generator of trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Replace the state by branch `q` and drop the record slot.
pub fn collapse(st: &mut JointState, split: &SchmidtSplit, q: usize) -> Result<()> {
    let p = *split.probs.get(q).ok_or_else(|| Error::invalid(format!("outcome {q} out of range")))?;
    if p < EMPTY_BRANCH {
        return Err(Error::EmptyBranch { prob: p });
    }
    st.amps = split.branches[q].clone();
    st.basis = split.reduced.clone();
    st.frame = st.frame.clone().remove_column(split.slot);
    st.active.remove(split.slot);
    Ok(())
}

/// Output grid `0, dt, .., horizon`.
pub fn output_times(horizon: f64, dt: f64) -> Vec<f64> {
    let n = (horizon / dt).round().max(0.0) as usize;
    (0..=n).map(|i| (i as f64 * dt).min(horizon)).collect()
}

enum Step {
    Output(f64),
    Schedule(Event, f64),
}

/// Events up to `horizon` merged with the output grid; outputs follow events
/// at equal times.
fn plan(schedule: &LightConeSchedule, horizon: f64, outputs: &[f64]) -> Vec<Step> {
    let ev_time = |ev: &Event| match *ev {
        Event::In(k) => schedule.in_events[k].time,
        Event::Out(k) => schedule.out_events[k].time,
    };
    let events: Vec<_> = schedule.timeline.iter().filter(|e| ev_time(e) <= horizon + 1e-12).collect();
    let mut steps = Vec::with_capacity(events.len() + outputs.len());
    let (mut a, mut b) = (0, 0);
    while a < events.len() || b < outputs.len() {
        if b == outputs.len() || (a < events.len() && ev_time(events[a]) <= outputs[b]) {
            steps.push(Step::Schedule(*events[a], ev_time(events[a])));
            a += 1;
        } else {
            steps.push(Step::Output(outputs[b]));
            b += 1;
        }
    }
    steps
}

/// What to do at a decoupling event.
enum Unravel<'r> {
    Sample(&'r mut ChaCha20Rng),
    Keep,
}

fn drive(
    engine: &Engine,
    schedule: &LightConeSchedule,
    st: &mut JointState,
    horizon: f64,
    outputs: &[f64],
    mut mode: Unravel,
) -> Result<(Vec<JumpRecord>, Vec<(f64, f64)>)> {
    if horizon > schedule.horizon + 1e-9 {
        return Err(Error::invalid(format!(
            "run horizon {horizon} exceeds the schedule horizon {}",
            schedule.horizon
        )));
    }
    let a_cut = schedule.a_cut;
    let mut records = Vec::new();
    let mut series = Vec::with_capacity(outputs.len());
    for step in plan(schedule, horizon, outputs) {
        match step {
            Step::Output(t) => {
                engine.evolve_to(st, t)?;
                series.push((t, engine.expectation(st)));
            }
            Step::Schedule(Event::In(k), t) => {
                engine.evolve_to(st, t)?;
                engine.attach_mode(st, &schedule.in_events[k].mode)?;
            }
            Step::Schedule(Event::Out(k), t) => {
                engine.evolve_to(st, t)?;
                let ev = &schedule.out_events[k];
                match &mut mode {
                    Unravel::Sample(rng) => {
                        let split = schmidt_split(st, ev, a_cut)?;
                        let q = sample_jump(&split.probs, rng);
                        records.push(JumpRecord {
                            k: records.len(),
                            t_out: t,
                            q,
                            probs: split.probs.clone(),
                            delta_s: delta_entropy(&split.probs),
                            schmidt_rank: split.probs.len(),
                        });
                        collapse(st, &split, q)?;
                    }
                    Unravel::Keep => {
                        if ev.significance >= a_cut {
                            return Err(Error::UnstableRecord { significance: ev.significance, a_cut });
                        }
                        let slot = rotate_into_slot(st, &ev.mode)?;
                        st.active[slot] = false;
                    }
                }
            }
        }
    }
    engine.evolve_to(st, horizon)?;
    Ok((records, series))
}

/// One sampled history over `[0, horizon]`.
pub fn run_trajectory(
    engine: &Engine,
    schedule: &LightConeSchedule,
    spin_state: &DVector<C64>,
    horizon: f64,
    outputs: &[f64],
    trajectory: u64,
) -> Result<History> {
    sample_history(engine, schedule, spin_state, horizon, outputs, trajectory).map(|(h, _)| h)
}

/// `run_trajectory`, also returning the collapsed state at the horizon.
pub fn sample_history(
    engine: &Engine,
    schedule: &LightConeSchedule,
    spin_state: &DVector<C64>,
    horizon: f64,
    outputs: &[f64],
    trajectory: u64,
) -> Result<(History, JointState)> {
    let mut st = engine.init(spin_state)?;
    let seed = engine.cfg.seed;
    let mut rng = trajectory_rng(seed, trajectory);
    let (records, jy_series) = drive(engine, schedule, &mut st, horizon, outputs, Unravel::Sample(&mut rng))?;
    let log_prob = records.iter().map(|r| r.probs[r.q].ln()).sum();
    let h = History { seed, trajectory, records, jy_series, log_prob, peak_leakage: st.peak_leakage };
    Ok((h, st))
}

/// The same evolution without collapses: decoupled modes stay in the state
/// as spectators that no longer couple to the spin.
pub fn run_without_collapse(
    engine: &Engine,
    schedule: &LightConeSchedule,
    spin_state: &DVector<C64>,
    horizon: f64,
    outputs: &[f64],
) -> Result<(JointState, Vec<(f64, f64)>)> {
    let mut st = engine.init(spin_state)?;
    let (_, series) = drive(engine, schedule, &mut st, horizon, outputs, Unravel::Keep)?;
    Ok((st, series))
}

pub fn ensemble_stats(histories: &[History], bins: usize) -> Result<EnsembleStats> {
    if histories.is_empty() {
        return Err(Error::invalid("no histories"));
    }
    let bins = bins.max(1);
    let mut hist = vec![0u64; bins];
    let mut n_jumps = 0;
    let mut sum_s = 0.0;
    let mut sum_pmax = 0.0;
    for h in histories {
        for r in &h.records {
            n_jumps += 1;
            sum_s += r.delta_s;
            sum_pmax += r.p_max();
            for &p in &r.probs {
                let b = ((p * bins as f64) as usize).min(bins - 1);
                hist[b] += 1;
            }
        }
    }
    let total_entropy = histories.iter().map(History::entropy).sum::<f64>() / histories.len() as f64;
    let per_jump = |x: f64| if n_jumps == 0 { 0.0 } else { x / n_jumps as f64 };
    Ok(EnsembleStats {
        n_histories: histories.len(),
        n_jumps,
        mean_delta_s: per_jump(sum_s),
        total_entropy,
        mean_p_max: if n_jumps == 0 { 1.0 } else { per_jump(sum_pmax) },
        jump_histogram: hist,
    })
}

/// Every branch of the history tree up to `horizon`, following outcomes with
/// probability at least `p_floor`. Lighter outcomes and the complement of
/// the retained record states end their histories.
pub fn enumerate_branches(
    engine: &Engine,
    schedule: &LightConeSchedule,
    spin_state: &DVector<C64>,
    horizon: f64,
    p_floor: f64,
) -> Result<BranchProjectorSet> {
    let ev_time = |ev: &Event| match *ev {
        Event::In(k) => schedule.in_events[k].time,
        Event::Out(k) => schedule.out_events[k].time,
    };
    let events: Vec<Event> = schedule.timeline.iter().copied().filter(|e| ev_time(e) <= horizon + 1e-12).collect();

    fn walk(
        engine: &Engine,
        schedule: &LightConeSchedule,
        events: &[Event],
        mut st: JointState,
        p_floor: f64,
    ) -> Result<Option<Box<BranchNode>>> {
        for (i, ev) in events.iter().enumerate() {
            match *ev {
                Event::In(k) => {
                    engine.evolve_to(&mut st, schedule.in_events[k].time)?;
                    engine.attach_mode(&mut st, &schedule.in_events[k].mode)?;
                }
                Event::Out(k) => {
                    let out = &schedule.out_events[k];
                    engine.evolve_to(&mut st, out.time)?;
                    let mut split = schmidt_split(&mut st, out, schedule.a_cut)?;
                    reorthonormalize(&mut split.records);
                    let mut outcomes = Vec::with_capacity(split.probs.len() + 1);
                    for (q, &p) in split.probs.iter().enumerate() {
                        let next = if p >= p_floor {
                            let mut child = st.clone();
                            collapse(&mut child, &split, q)?;
                            walk(engine, schedule, &events[i + 1..], child, p_floor)?
                        } else {
                            None
                        };
                        outcomes.push(BranchOutcome { projector: RecordProjector::State(split.records[q].clone()), next });
                    }
                    if split.records.len() <= st.basis.n_max() {
                        outcomes.push(BranchOutcome {
                            projector: RecordProjector::Complement(split.records.clone()),
                            next: None,
                        });
                    }
                    return Ok(Some(Box::new(BranchNode { time: out.time, mode: split.mode.clone(), outcomes })));
                }
            }
        }
        Ok(None)
    }

    let st = engine.init(spin_state)?;
    let root = walk(engine, schedule, &events, st, p_floor)?;
    Ok(BranchProjectorSet { n_max: engine.cfg.n_max, root: root.map(|b| *b) })
}

/// Two passes of modified Gram-Schmidt in order, tightening the
/// orthogonality of the SVD output to a few units of roundoff.
fn reorthonormalize(vs: &mut [DVector<C64>]) {
    for _ in 0..2 {
        for a in 0..vs.len() {
            for b in 0..a {
                let p = vs[b].dotc(&vs[a]);
                let vb = vs[b].clone();
                vs[a] -= vb * p;
            }
            let n = vs[a].norm();
            vs[a] /= C64::new(n, 0.0);
        }
    }
}

/// Spin-reduced density matrix in the `J_y` basis.
pub fn reduced_spin(st: &JointState) -> DMatrix<C64> {
    let mut rho = st.amps.transpose() * st.amps.map(|z| z.conj());
    let tr: C64 = rho.trace();
    if tr.norm() > 0.0 {
        rho /= tr;
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{attach_mode, init_joint};
    use crate::fock::apply_two_slot;
    use crate::kicked_top::build_spin_sector;
    use crate::linalg::c;

    fn unit(m: usize, k: usize) -> DVector<C64> {
        let mut v = DVector::zeros(m);
        v[k] = c(1.0);
        v
    }

    #[test]
    fn entropy_of_simple_distributions() {
        assert_eq!(delta_entropy(&[1.0]), 0.0);
        assert!((delta_entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
        assert!((delta_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(delta_entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn vacuum_slot_splits_with_rank_one() {
        let s = build_spin_sector(1.0).unwrap();
        let psi = s.jy_eigenstate(0.0).unwrap();
        let mut st = init_joint(&s, &psi, 3, 4).unwrap();
        attach_mode(&mut st, &unit(4, 0)).unwrap();
        attach_mode(&mut st, &unit(4, 1)).unwrap();
        let before = st.amps.clone();
        let split = split_at_slot(&st, 1).unwrap();
        assert_eq!(split.probs, vec![1.0]);
        assert_eq!(delta_entropy(&split.probs), 0.0);
        collapse(&mut st, &split, 0).unwrap();
        assert_eq!(st.slots(), 1);
        // Same amplitudes up to a global phase, on the one-slot basis.
        let ph = before[(0, 1)] / st.amps[(0, 1)];
        assert!((ph.norm() - 1.0).abs() < 1e-12);
        assert!((st.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maximally_entangled_split_gives_ln_two() {
        // (|m=1>|0> + |m=-1>|1>)/sqrt2 on one slot.
        let s = build_spin_sector(1.0).unwrap();
        let psi = s.jy_eigenstate(1.0).unwrap();
        let mut st = init_joint(&s, &psi, 2, 1).unwrap();
        attach_mode(&mut st, &unit(1, 0)).unwrap();
        st.amps.fill(c(0.0));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let one = st.basis.find(&[1]).unwrap();
        let vac = st.basis.find(&[0]).unwrap();
        st.amps[(vac, 2)] = c(h);
        st.amps[(one, 0)] = c(h);
        let split = split_at_slot(&st, 0).unwrap();
        assert_eq!(split.probs.len(), 2);
        assert!((split.probs[0] - 0.5).abs() < 1e-12);
        assert!((delta_entropy(&split.probs) - 2f64.ln()).abs() < 1e-12);
        // Reassemble the state from the decomposition.
        let mut back = DMatrix::<C64>::zeros(st.basis.len(), 3);
        for q in 0..2 {
            for n in 0..=2usize {
                let row = st.basis.find(&[n as u8]).unwrap();
                for k in 0..3 {
                    back[(row, k)] += split.branches[q][(0, k)] * split.records[q][n] * split.probs[q].sqrt();
                }
            }
        }
        assert!((back - &st.amps).norm() < 1e-12);
    }

    #[test]
    fn split_weights_match_reduced_state_after_mixing() {
        let s = build_spin_sector(0.5).unwrap();
        let psi = s.jy_eigenstate(0.5).unwrap();
        let mut st = init_joint(&s, &psi, 3, 2).unwrap();
        attach_mode(&mut st, &unit(2, 0)).unwrap();
        attach_mode(&mut st, &unit(2, 1)).unwrap();
        let mut x = DMatrix::<C64>::from_fn(st.basis.len(), 2, |i, k| C64::new((i + k) as f64 * 0.3 - 1.0, (i * k) as f64 * 0.1));
        x /= c(x.norm());
        st.amps = x;
        apply_two_slot(&st.basis, &mut st.amps, 0, 1, [[c(0.6), c(0.8)], [c(-0.8), c(0.6)]]);
        let split = split_at_slot(&st, 0).unwrap();
        assert!((split.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(split.probs.windows(2).all(|w| w[0] >= w[1]));
        for w in split.branches.iter() {
            assert!((w.norm() - 1.0).abs() < 1e-12);
        }
        // Reduced density matrix of the slot has the Schmidt weights as spectrum.
        let n = st.basis.n_max() + 1;
        let mut rho = DMatrix::<C64>::zeros(n, n);
        for a in 0..st.basis.len() {
            for b in 0..st.basis.len() {
                let (sa, sb) = (st.basis.state(a), st.basis.state(b));
                if sa[1] != sb[1] {
                    continue;
                }
                for k in 0..2 {
                    rho[(sa[0] as usize, sb[0] as usize)] += st.amps[(a, k)] * st.amps[(b, k)].conj();
                }
            }
        }
        let mut ev: Vec<f64> = rho.symmetric_eigen().eigenvalues.iter().copied().filter(|&e| e > 1e-20).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ev.iter().zip(&split.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_deterministic_and_fair() {
        let mut a = trajectory_rng(7, 3);
        let mut b = trajectory_rng(7, 3);
        let xs: Vec<usize> = (0..100).map(|_| sample_jump(&[0.3, 0.7], &mut a)).collect();
        let ys: Vec<usize> = (0..100).map(|_| sample_jump(&[0.3, 0.7], &mut b)).collect();
        assert_eq!(xs, ys);
        let mut other = trajectory_rng(7, 4);
        let zs: Vec<usize> = (0..100).map(|_| sample_jump(&[0.3, 0.7], &mut other)).collect();
        assert_ne!(xs, zs);
        let mut r = trajectory_rng(1, 0);
        assert!((0..1000).all(|_| sample_jump(&[1.0], &mut r) == 0));
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_jump(&[0.5, 0.5], &mut r) == 1).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((ones - 0.5 * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn empty_branch_is_rejected() {
        let s = build_spin_sector(0.5).unwrap();
        let mut st = init_joint(&s, &s.jy_eigenstate(0.5).unwrap(), 2, 1).unwrap();
        attach_mode(&mut st, &unit(1, 0)).unwrap();
        let mut split = split_at_slot(&st, 0).unwrap();
        split.probs[0] = 1e-15;
        assert!(matches!(collapse(&mut st, &split, 0), Err(Error::EmptyBranch { .. })));
    }

    #[test]
    fn ensemble_of_two_fair_histories() {
        let rec = |q| JumpRecord { k: 0, t_out: 1.0, q, probs: vec![0.5, 0.5], delta_s: 2f64.ln(), schmidt_rank: 2 };
        let h = |q| History { seed: 0, trajectory: q as u64, records: vec![rec(q)], jy_series: vec![], log_prob: 0.5f64.ln(), peak_leakage: 0.0 };
        let st = ensemble_stats(&[h(0), h(1)], 10).unwrap();
        assert!((st.total_entropy - 2f64.ln()).abs() < 1e-15);
        assert!((st.mean_delta_s - 2f64.ln()).abs() < 1e-15);
        assert_eq!(st.n_jumps, 2);
        assert_eq!(st.jump_histogram[5], 4);
        let quiet = History { seed: 0, trajectory: 0, records: vec![], jy_series: vec![], log_prob: 0.0, peak_leakage: 0.0 };
        assert_eq!(ensemble_stats(&[quiet], 10).unwrap().mean_delta_s, 0.0);
    }
}
