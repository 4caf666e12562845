use majorana_lab::bdg::{diagonalize, ChainSpec};
use majorana_lab::dynamics::hamiltonian_entries;
use majorana_lab::fock_oracle::{dense, many_body_from_entries, FockOperatorSet};
use majorana_lab::linalg::herm_eigen;
use majorana_lab::meanfield::constants::*;
use majorana_lab::meanfield::*;
use majorana_lab::spectro::{CBandSpec, Confinement};
use majorana_lab::Error;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn fock_pair_correlator(chain: &ChainSpec) -> Vec<f64> {
    let n = chain.n;
    let cb = CBandSpec::new(n, 0.0, -5.0, Confinement::HardWall);
    let h = dense(&many_body_from_entries(&hamiltonian_entries(chain, &cb, &[], 0.0, None), n));
    let (_, vecs) = herm_eigen(&h);
    let psi: Vec<C64> = vecs.column(0).iter().cloned().collect();
    let ops = FockOperatorSet::new(n).unwrap();
    let apply = |m: usize, x: &[C64]| {
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        for (r, c, v) in ops.annihilators[m].triplet_iter() {
            y[r] += x[c] * *v;
        }
        y
    };
    (0..n - 1)
        .map(|j| {
            let phi = apply(j + 1, &apply(j, &psi));
            psi.iter().zip(&phi).map(|(a, b)| a.conj() * b).sum::<C64>().re
        })
        .collect()
}

#[test]
fn sweet_spot_gap() {
    for nk in [4, 10, 64, 400] {
        let d = solve_uniform_gap(-4.0, 1.0, 0.0, nk).unwrap();
        assert!((d - 1.0).abs() < 1e-10, "N_k={nk}: {d}");
    }
}

#[test]
fn weak_coupling_gap_vanishes() {
    let ds: Vec<f64> = [-1.0, -0.3, -0.05]
        .iter()
        .map(|&v| solve_uniform_gap(v, 1.0, 0.0, 400).unwrap())
        .collect();
    assert!(ds[0] > ds[1] && ds[1] >= ds[2]);
    assert!(ds[2] < 1e-3, "{ds:?}");
}

#[test]
fn gap_bisection_brackets_root() {
    let d = solve_uniform_gap(-2.0, 1.0, 0.0, 400).unwrap();
    let f = |x: f64| gap_rhs(x, 1.0, 0.0, 400) - 0.5;
    assert!(f(d).abs() < 1e-10);
    assert!(f(d - 1e-6) > 0.0 && f(d + 1e-6) < 0.0);
}

#[test]
fn gap_rhs_decreases() {
    for mu in [0.0, 0.7, -1.2] {
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let r = gap_rhs(0.01 * k as f64, 1.0, mu, 200);
            assert!(r < prev);
            prev = r;
        }
    }
}

#[test]
fn gap_input_errors() {
    assert!(matches!(solve_uniform_gap(0.0, 1.0, 0.0, 64), Err(Error::NoPairing(_))));
    assert!(matches!(solve_uniform_gap(-1.0, 1.0, 0.0, 63), Err(Error::InvalidSpec(_))));
}

#[test]
fn correlator_quarter_at_sweet_spot() {
    for n in [3, 4, 5] {
        let chain = ChainSpec::uniform(n, 1.0, 1.0, 0.0);
        let c = pair_correlator(&diagonalize(&chain).unwrap());
        assert!(c.iter().all(|x| (x - 0.25).abs() < 1e-12), "{c:?}");
        let f = fock_pair_correlator(&chain);
        assert!(f.iter().all(|x| (x - 0.25).abs() < 1e-10), "{f:?}");
    }
}

#[test]
fn correlator_matches_fock_space_away_from_sweet_spot() {
    let chain = ChainSpec::uniform(4, 1.0, 0.6, 0.4);
    let c = pair_correlator(&diagonalize(&chain).unwrap());
    let f = fock_pair_correlator(&chain);
    for (a, b) in c.iter().zip(&f) {
        assert!((a - b).abs() < 1e-10, "{c:?} {f:?}");
    }
}

#[test]
fn empty_band_has_no_pairs() {
    let c = pair_correlator(&diagonalize(&ChainSpec::uniform(8, 1.0, 0.0, -3.0)).unwrap());
    assert!(c.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn correlator_mirror_symmetric() {
    let c = pair_correlator(&diagonalize(&ChainSpec::uniform(11, 1.0, 0.4, 0.3)).unwrap());
    for b in 0..c.len() {
        assert!((c[b] - c[c.len() - 1 - b]).abs() < 1e-10);
    }
}

#[test]
fn selfconsistent_bulk_is_uniform() {
    let spec = ChainSpec::uniform(40, 1.0, 0.1, 0.0);
    let r = solve_selfconsistent_delta(&spec, -4.0, &default_seed(&spec), Default::default()).unwrap();
    let d = &r.spec.delta;
    for b in 5..34 {
        assert!((d[b] - 1.0).abs() < 1e-6, "bond {b}: {}", d[b]);
    }
    let c = pair_correlator(&diagonalize(&r.spec).unwrap());
    for (x, cx) in d.iter().zip(&c) {
        assert!((x - 4.0 * cx).abs() < 1e-9);
    }
}

#[test]
fn sweet_spot_is_a_fixed_point() {
    let spec = ChainSpec::uniform(12, 1.0, 1.0, 0.0);
    let r = solve_selfconsistent_delta(&spec, -4.0, &vec![1.0; 11], Default::default()).unwrap();
    assert_eq!(r.iterations, 1);
    assert!(r.spec.delta.iter().all(|d| (d - 1.0).abs() < 1e-8));
}

#[test]
fn zero_seed_stays_zero() {
    let spec = ChainSpec::uniform(10, 1.0, 0.0, 0.0);
    let r = solve_selfconsistent_delta(&spec, -4.0, &vec![0.0; 9], Default::default()).unwrap();
    assert!(r.spec.delta.iter().all(|d| *d == 0.0));
    assert!(default_seed(&spec).iter().all(|d| (d - 0.1).abs() < 1e-15));
}

#[test]
fn nonconvergence_carries_history() {
    let spec = ChainSpec::uniform(10, 1.0, 0.1, 0.0);
    let opts = SelfConsistentOptions { max_iter: 3, ..Default::default() };
    match solve_selfconsistent_delta(&spec, -4.0, &default_seed(&spec), opts) {
        Err(Error::NonConvergence { iterations, history, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(history.len(), 3);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn dipolar_scale() {
    let perp = effective_dipolar(10.0, 10.0, 1e-6, std::f64::consts::FRAC_PI_2).unwrap();
    let d = 10.0 * DEBYE;
    let oracle = d * d / (4.0 * std::f64::consts::PI * EPSILON_0 * 1e-18) / PLANCK;
    assert!((perp.hz - oracle).abs() < 1e-9 * oracle);
    assert!(perp.hz > 1.4e4 && perp.hz < 1.6e4, "{}", perp.hz);
    let par = effective_dipolar(10.0, 10.0, 1e-6, 0.0).unwrap();
    assert!((par.hz + 2.0 * perp.hz).abs() < 1e-9 * perp.hz);
    let far = effective_dipolar(10.0, 10.0, 2e-6, std::f64::consts::FRAC_PI_2).unwrap();
    assert!((far.hz * 8.0 - perp.hz).abs() < 1e-9 * perp.hz);
    assert!(effective_dipolar(1.0, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn soc_substitution() {
    let r = effective_soc(3.0, 1.0, 10.0, std::f64::consts::FRAC_PI_2).unwrap();
    assert!((r.v_eff - 0.12).abs() < 1e-12);
    assert!(r.warning.is_none());
    let r = effective_soc(3.0, 1.0, 10.0, 0.0).unwrap();
    assert_eq!(r.v_eff, 0.0);
    assert_eq!(r.j_eff, 1.0);
    assert!(effective_soc(3.0, 1.0, 1.0, 1.0).unwrap().warning.is_some());
    assert!(matches!(effective_soc(1.0, 1.0, 0.0, 1.0), Err(Error::DivisionByZero(_))));
}

#[test]
fn soc_lithium_scale_is_kilohertz() {
    let u = onsite_contact(100.0 * BOHR_RADIUS, 6.015 * AMU, 40e-9).unwrap();
    let r = effective_soc(u.hz, 1.0, 20.0, std::f64::consts::FRAC_PI_2).unwrap();
    assert!(r.v_eff > 1e3 && r.v_eff < 1e4, "{}", r.v_eff);
}

#[test]
fn spin_lattice_limits() {
    let s = effective_spin_lattice(2.5, 1.0, 1e-9, 1.0).unwrap();
    assert!((s.j_eff - 2.5).abs() < 1e-12);
    let b = 3e-4 * BOHR_MAGNETON;
    let s = effective_spin_lattice(b, 1.0, 4.0, 1.0).unwrap();
    let mhz = s.j_eff / PLANCK / 1e6;
    assert!(mhz > 1.0 && mhz < 10.0, "{mhz}");
    assert!(effective_spin_lattice(1.0, 1.0, 1.0, 0.0).is_err());
}

proptest! {
    #[test]
    fn spin_lattice_closed_form_matches_quadrature(a in 0.1f64..3.0, sigma in 0.3f64..1.5) {
        let exact = effective_spin_lattice(1.3, 0.7, a, sigma).unwrap();
        let phi = |x: f64| (std::f64::consts::PI * sigma * sigma).powf(-0.25) * (-x * x / (2.0 * sigma * sigma)).exp();
        let q = effective_spin_lattice_quadrature(1.3, 0.7, a, phi, 14.0 * sigma, 4001).unwrap();
        prop_assert!((exact.j_eff - q.j_eff).abs() < 1e-10);
        prop_assert!((exact.v_eff - q.v_eff).abs() < 1e-10);
    }
}
