use majorana_lab::bdg::ChainSpec;
use majorana_lab::dynamics::{InitialState, PulseSchedule, PulseStep, System};
use majorana_lab::fock_oracle::{bdg_reconstruction_gap, compare_with_dynamics, FockOperatorSet};
use majorana_lab::linalg::C64;
use majorana_lab::spectro::{CBandSpec, Confinement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(n: usize, j: f64) -> System {
    let chain = ChainSpec::uniform(n, j, j, 0.0);
    let cband = CBandSpec::new(n, 0.4, 0.3, Confinement::HardWall);
    System::new(chain, cband).unwrap()
}

#[test]
fn anticommutators_hold() {
    for n in 1..=3 {
        assert!(FockOperatorSet::new(n).unwrap().anticommutator_defect() < 1e-12);
    }
}

#[test]
fn fock_spectrum_rebuilt_from_quasiparticles() {
    for n in 2..=4 {
        let gap = bdg_reconstruction_gap(&system(n, 1.0)).unwrap();
        assert!(gap < 1e-10, "N = {n}: {gap:e}");
    }
}

#[test]
fn random_schedules_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..4 {
        let n = 2 + trial % 3;
        let sys = system(n, rng.gen_range(0.5..1.5));
        let steps = (0..3)
            .map(|_| PulseStep {
                mask: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
                rabi: rng.gen_range(0.1..1.0),
                omega: rng.gen_range(-2.0..2.0),
                duration: rng.gen_range(0.5..3.0),
            })
            .collect();
        let init = InitialState::new(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let rep = compare_with_dynamics(&sys, &init, &PulseSchedule { steps }, 20).unwrap();
        assert!(rep.max() < 1e-6, "trial {trial}: {rep:?}");
        assert!(rep.norm_drift < 1e-10);
    }
}

#[test]
fn nearly_flat_band_stays_unitary() {
    let sys = System::new(ChainSpec::uniform(4, 1.255, 1.255, 0.0), CBandSpec::new(4, 0.031, 0.054, Confinement::HardWall)).unwrap();
    let step = PulseStep { mask: vec![0.3, 0.9, 0.1, 0.6], rabi: 0.5, omega: 0.7, duration: 2.0 };
    let init = InitialState::new(C64::new(0.5, 0.0), C64::from_polar(0.75f64.sqrt(), 1.3)).unwrap();
    let rep = compare_with_dynamics(&sys, &init, &PulseSchedule { steps: vec![step] }, 20).unwrap();
    assert!(rep.max() < 1e-6, "{rep:?}");
    assert!(rep.norm_drift < 1e-10);
}
