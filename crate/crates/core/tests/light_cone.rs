use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use histent_core::bath::{auto_chain_length, uniform_chain};
use histent_core::lightcone::{
    accumulate_windows, checkpoint_grid, propagate_one_particle, Boundary, LightConeSchedule, OneParticleTrajectory,
    WindowedDensity,
};
use histent_core::linalg::{identity_deviation, max_abs};

const HORIZON: f64 = 40.0;
const HOP: f64 = 0.2;

fn standard_bath(horizon: f64) -> OneParticleTrajectory {
    let spec = uniform_chain(1.0, HOP, 0.05, auto_chain_length(HOP, horizon)).unwrap();
    propagate_one_particle(&spec, horizon, 0.01, Boundary::SemiInfinite).unwrap()
}

fn windows(traj: &OneParticleTrajectory) -> WindowedDensity {
    accumulate_windows(traj, &checkpoint_grid(traj, 10)).unwrap()
}

fn quad(rho: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    let w = v.rows(0, rho.nrows());
    (w.adjoint() * rho * w)[(0, 0)].re
}

#[test]
fn trajectory_starts_on_site_zero_and_keeps_its_norm() {
    let traj = standard_bath(HORIZON);
    let col = traj.phi.column(0);
    assert_eq!(col[0], C64::new(1.0, 0.0));
    assert!(col.iter().skip(1).all(|z| *z == C64::new(0.0, 0.0)));
    assert!(traj.norm_drift() < 1e-8);
}

#[test]
fn short_chain_is_reported() {
    let spec = uniform_chain(1.0, HOP, 0.05, 5).unwrap();
    assert!(propagate_one_particle(&spec, HORIZON, 0.01, Boundary::SemiInfinite).is_err());
    assert!(propagate_one_particle(&spec, HORIZON, 0.01, Boundary::Finite).is_ok());
}

#[test]
fn past_and_future_windows_add_up() {
    let traj = standard_bath(HORIZON);
    let wd = windows(&traj);
    for &i in &wd.checkpoints {
        let plus = wd.rho_plus(i);
        let sum = &plus + wd.rho_minus(i);
        assert!(max_abs(&(sum - &wd.total)) < 1e-9);
        let t = wd.time(i);
        assert!((plus.trace().re - t).abs() <= wd.dt * t.max(1.0));
        let low = plus.symmetric_eigen().eigenvalues.min();
        assert!(low > -1e-12, "eigenvalue {low} at t = {t}");
    }
}

#[test]
fn front_moves_at_twice_the_hopping() {
    let traj = standard_bath(HORIZON);
    let wd = windows(&traj);
    for &i in &wd.checkpoints {
        let rho = wd.rho_plus(i);
        let t = wd.time(i);
        let front = (0..rho.nrows()).rposition(|k| rho[(k, k)].re > 1e-4).unwrap_or(0);
        assert!(front as f64 <= 2.0 * HOP * t + 20.0, "site {front} at t = {t}");
    }
}

#[test]
fn schedule_structure() {
    let traj = standard_bath(HORIZON);
    let wd = windows(&traj);
    let a_cut = 1e-4;
    let s = LightConeSchedule::build(&wd, a_cut).unwrap();
    assert!(!s.in_events.is_empty() && !s.out_events.is_empty());

    let ins = DMatrix::from_columns(&s.in_events.iter().map(|e| e.mode.clone()).collect::<Vec<_>>());
    assert!(identity_deviation(&(ins.adjoint() * &ins)) < 1e-8);
    for ev in &s.out_events {
        assert!((ev.mode.norm() - 1.0).abs() < 1e-10);
        assert!(ev.significance < a_cut);
        // Inside the span of the modes coupled so far.
        let before: Vec<_> = s.in_events.iter().filter(|e| e.time <= ev.time).map(|e| e.mode.clone()).collect();
        let span = DMatrix::from_columns(&before);
        let residual = &ev.mode - &span * (span.adjoint() * &ev.mode);
        assert!(residual.norm() < 1e-6);
        // A record stays a record at every later checkpoint.
        for &i in wd.checkpoints.iter().filter(|&&i| wd.time(i) >= ev.time) {
            assert!(quad(&wd.rho_minus(i), &ev.mode) < a_cut);
        }
    }

    let counts = s.counts();
    for w in counts.windows(2) {
        assert!(w[1].m_in >= w[0].m_in && w[1].m_out >= w[0].m_out);
    }
    assert!(counts.iter().all(|c| c.m_out <= c.m_in));
    // With the future window empty at the horizon everything has decoupled.
    let last = counts.last().unwrap();
    assert_eq!(last.m_out, last.m_in);
}

#[test]
fn relevant_frame_and_records_stay_orthonormal() {
    let traj = standard_bath(HORIZON);
    let wd = windows(&traj);
    let s = LightConeSchedule::build(&wd, 1e-4).unwrap();
    let mut times: Vec<f64> = s.in_events.iter().map(|e| e.time).chain(s.out_events.iter().map(|e| e.time)).collect();
    times.sort_by(f64::total_cmp);
    for t in times {
        let frame = s.relevant_frame_at(t);
        assert_eq!(frame.ncols(), s.relevant(t));
        let mut cols: Vec<DVector<C64>> = frame.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(s.out_events.iter().filter(|e| e.time <= t).map(|e| e.mode.clone()));
        let all = DMatrix::from_columns(&cols);
        assert!(identity_deviation(&(all.adjoint() * &all)) < 1e-8, "t = {t}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lower_threshold_never_admits_fewer_modes(log_cut in -4.5f64..-2.0) {
        let traj = standard_bath(20.0);
        let wd = windows(&traj);
        let a_cut = 10f64.powf(log_cut);
        let coarse = LightConeSchedule::build(&wd, a_cut).unwrap();
        let fine = LightConeSchedule::build(&wd, 0.5 * a_cut).unwrap();
        for &i in &wd.checkpoints {
            let t = wd.time(i);
            prop_assert!(fine.m_in(t) >= coarse.m_in(t), "t = {}", t);
        }
    }

    #[test]
    fn significance_is_monotone(re in prop::collection::vec(-1.0f64..1.0, 8), im in prop::collection::vec(-1.0f64..1.0, 8)) {
        let traj = standard_bath(20.0);
        let wd = windows(&traj);
        let mut v = DVector::<C64>::zeros(wd.sites);
        for k in 0..8 {
            v[k] = C64::new(re[k], im[k]);
        }
        prop_assume!(v.norm() > 1e-3);
        let v = &v / C64::new(v.norm(), 0.0);
        let plus: Vec<f64> = wd.checkpoints.iter().map(|&i| quad(&wd.rho_plus(i), &v)).collect();
        let minus: Vec<f64> = wd.checkpoints.iter().map(|&i| quad(&wd.rho_minus(i), &v)).collect();
        for w in plus.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        for w in minus.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }
}
