use majorana_lab::bdg::{build_bdg_matrix, ChainSpec};
use majorana_lab::dynamics::*;
use majorana_lab::meanfield::{default_seed, solve_selfconsistent_delta};
use majorana_lab::spectro::{CBandSpec, Confinement};
use majorana_lab::Error;
use num_complex::Complex64 as C64;

fn system(n: usize) -> System {
    System::new(ChainSpec::uniform(n, 1.0, 1.0, 0.0), CBandSpec::new(n, 0.3, 0.0, Confinement::HardWall)).unwrap()
}

fn left(n: usize) -> Vec<f64> {
    (0..n).map(|j| if j < n / 2 { 1.0 } else { 0.0 }).collect()
}

fn pulse(n: usize, rabi: f64, omega: f64, duration: f64) -> PulseSchedule {
    PulseSchedule::single(PulseStep { mask: left(n), rabi, omega, duration })
}

#[test]
fn undriven_generator_contains_bdg_block() {
    let n = 5;
    let sys = system(n);
    let h = build_generator(&sys.chain, &sys.cband, &pulse(n, 0.0, 0.0, 1.0).steps[0], 0.7).unwrap();
    let bdg = build_bdg_matrix(&sys.chain).unwrap();
    for i in 0..2 * n {
        for j in 0..2 * n {
            assert!((h[(i, j)] - C64::new(bdg[(i, j)], 0.0)).norm() < 1e-14);
        }
        for j in 2 * n..4 * n {
            assert_eq!(h[(i, j)], C64::new(0.0, 0.0));
        }
    }
}

#[test]
fn drive_enters_only_through_phases() {
    let n = 4;
    let sys = system(n);
    let step = pulse(n, 0.4, 1.3, 1.0).steps[0].clone();
    let h0 = build_generator(&sys.chain, &sys.cband, &step, 0.0).unwrap();
    for t in [0.3, 2.1, 7.9] {
        let h = build_generator(&sys.chain, &sys.cband, &step, t).unwrap();
        assert!((&h - h.adjoint()).iter().all(|z| z.norm() < 1e-14));
        for (a, b) in h.iter().zip(h0.iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }
    let short = PulseStep { mask: vec![1.0; 3], ..step };
    assert!(matches!(build_generator(&sys.chain, &sys.cband, &short, 0.0), Err(Error::Dimension(_))));
}

#[test]
fn undriven_edge_is_stationary() {
    let n = 6;
    let sys = system(n);
    let opts = EvolveOptions { target: Some(Target::GPlus), ..Default::default() };
    for (init, occ) in [(InitialState::plus(), 1.0), (InitialState::minus(), 0.0), (InitialState::equal(), 0.5)] {
        let t = evolve(&sys, &init, &pulse(n, 0.0, 0.0, 40.0), &opts).unwrap();
        assert!(t.occupation.iter().all(|o| (o - occ).abs() < 1e-10));
        if init == InitialState::equal() {
            assert!(t.coherence.iter().all(|c| (c - C64::new(0.5, 0.0)).norm() < 1e-10));
        }
        assert!(t.canonical_defect < 1e-8);
    }
    let t = evolve(&sys, &InitialState::plus(), &pulse(n, 0.0, 0.0, 5.0), &opts).unwrap();
    assert!((t.final_fidelity().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn lab_midpoint_agrees_with_rotating_frame() {
    let n = 6;
    let sys = system(n);
    let sched = pulse(n, 0.2, -0.1, 6.0);
    let init = InitialState::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
    let rot = evolve(&sys, &init, &sched, &EvolveOptions { samples_per_step: 20, ..Default::default() }).unwrap();
    let lab_opts = EvolveOptions {
        integrator: Integrator::LabMidpoint { dt: None, tol: 1e-6 },
        samples_per_step: 20,
        ..Default::default()
    };
    let lab = evolve(&sys, &init, &sched, &lab_opts).unwrap();
    assert!(lab.dt.is_some());
    assert!((rot.final_occupation() - lab.final_occupation()).abs() < 1e-6);
    assert!((rot.final_coherence() - lab.final_coherence()).norm() < 1e-6);
    let frame = propagate(&sys.chain, &sys.cband, &sched).unwrap();
    assert!((&frame.r - &rot.frame.r).amax() < 1e-10);
    assert!(frame.canonical_defect() < 1e-8);
    let occ = edge_occupation(&frame, &sys, &init).unwrap();
    assert!((occ - rot.final_occupation()).abs() < 1e-10);
}

#[test]
fn halving_fails_loudly_when_tolerance_is_unreachable() {
    let n = 4;
    let sys = system(n);
    let opts = EvolveOptions {
        integrator: Integrator::LabMidpoint { dt: Some(0.5), tol: 1e-14 },
        samples_per_step: 4,
        ..Default::default()
    };
    let r = evolve(&sys, &InitialState::minus(), &pulse(n, 0.5, 0.3, 4.0), &opts);
    assert!(matches!(r, Err(ref e) if e.is_numerical()), "{r:?}");
}

#[test]
fn fidelities_are_bounded() {
    let n = 6;
    let sys = system(n);
    for target in [Target::GPlus, Target::GMinus, Target::Superposition { alpha: C64::new(1.0, 0.0), beta: C64::new(0.0, 1.0) }] {
        let opts = EvolveOptions { target: Some(target), samples_per_step: 50, ..Default::default() };
        let t = evolve(&sys, &InitialState::equal(), &pulse(n, 0.3, 0.0, 12.0), &opts).unwrap();
        assert!(t.fidelity.iter().all(|f| *f >= 0.0 && *f <= 1.0 + 1e-8));
    }
}

#[test]
fn schedules_and_states_are_validated() {
    let sys = system(4);
    let bad = [
        pulse(4, 0.1, 0.0, 0.0),
        pulse(3, 0.1, 0.0, 1.0),
        PulseSchedule::single(PulseStep { mask: vec![1.5, 0.0, 0.0, 0.0], rabi: 0.1, omega: 0.0, duration: 1.0 }),
        PulseSchedule::default(),
    ];
    for s in &bad {
        assert!(matches!(evolve(&sys, &InitialState::minus(), s, &Default::default()), Err(Error::InvalidSpec(_))));
    }
    assert!(InitialState::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0)).is_err());
    let trivial = ChainSpec::uniform(6, 1.0, 0.5, 3.0);
    assert!(matches!(
        System::new(trivial, CBandSpec::new(6, 0.3, 0.0, Confinement::HardWall)),
        Err(Error::NoZeroMode)
    ));
}

#[test]
fn selfconsistent_run_conserves_number() {
    let n = 10;
    let spec = ChainSpec::uniform(n, 1.0, 0.1, 0.0);
    let sc = solve_selfconsistent_delta(&spec, -4.0, &default_seed(&spec), Default::default()).unwrap();
    let sys = System::new(sc.spec, CBandSpec::new(n, 0.2, 0.0, Confinement::HardWall)).unwrap();
    let sched = pulse(n, 0.05, 0.0, 8.0);
    let tracked = SelfConsistentOptions { track_propagator: true, ..Default::default() };
    let t = evolve_selfconsistent(&sys, -4.0, &InitialState::minus(), &sched, &tracked).unwrap();
    assert!(t.number_drift.unwrap() < 1e-8, "{:?}", t.number_drift);
    assert!(t.canonical_defect < 1e-8, "{}", t.canonical_defect);
    assert!(t.propagator_residual.unwrap() < 1e-3, "{:?}", t.propagator_residual);
    let plain = evolve_selfconsistent(&sys, -4.0, &InitialState::minus(), &sched, &Default::default()).unwrap();
    assert!(plain.canonical_defect.is_finite() && plain.propagator_residual.is_none());
    assert!((plain.final_occupation() - t.final_occupation()).abs() < 1e-12);
    assert!(t.fidelity.iter().all(|f| *f >= 0.0 && *f <= 1.0 + 1e-8));
    assert!(!t.frame.delta_trace.is_empty());
    assert!(matches!(
        evolve_selfconsistent(&sys, -4.0, &InitialState::equal(), &sched, &Default::default()),
        Err(Error::Contract(_))
    ));
    assert!(matches!(
        evolve_selfconsistent(&sys, 1.0, &InitialState::minus(), &sched, &Default::default()),
        Err(Error::NoPairing(_))
    ));
}

#[test]
fn selfconsistent_undriven_stays_put() {
    let n = 8;
    let sys = System::new(ChainSpec::uniform(n, 1.0, 1.0, 0.0), CBandSpec::new(n, 0.2, 0.0, Confinement::HardWall)).unwrap();
    let t = evolve_selfconsistent(&sys, -4.0, &InitialState::plus(), &pulse(n, 0.0, 0.0, 5.0), &Default::default()).unwrap();
    assert!(t.occupation.iter().all(|o| (o - 1.0).abs() < 1e-8));
}
