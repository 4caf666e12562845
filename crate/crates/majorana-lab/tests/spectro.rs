use majorana_lab::bdg::{diagonalize, Boundary, ChainSpec};
use majorana_lab::spectro::*;
use majorana_lab::Error;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn delta_f0(n: usize) -> Vec<f64> {
    let mut f = vec![0.0; n];
    f[0] = 1.0;
    f
}

fn orthonormality(m: &CModes) -> f64 {
    let g = m.psi.adjoint() * &m.psi;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let e = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - C64::new(e, 0.0)).norm());
        }
    }
    worst
}

#[test]
fn periodic_band_limits() {
    for n in [6, 7, 30] {
        let m = c_eigenmodes(&CBandSpec::new(n, 1.5, 0.4, Confinement::Periodic)).unwrap();
        let lo = m.eps.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo + 3.4).abs() < 1e-12);
        assert!(hi <= 2.6 + 1e-12);
        if n % 2 == 0 {
            assert!((hi - 2.6).abs() < 1e-12);
        }
        assert!(orthonormality(&m) < 1e-12);
    }
}

#[test]
fn hard_wall_three_sites() {
    let m = c_eigenmodes(&CBandSpec::new(3, 2.0, 0.5, Confinement::HardWall)).unwrap();
    let s = 2.0 * 2f64.sqrt();
    for (e, x) in m.eps.iter().zip([-s, 0.0, s]) {
        assert!((e - (x - 0.5)).abs() < 1e-12);
    }
    assert!(orthonormality(&m) < 1e-12);
}

#[test]
fn modes_diagonalize_the_band_hamiltonian() {
    for conf in [
        Confinement::Periodic,
        Confinement::HardWall,
        Confinement::Harmonic { kappa: 0.3, center: None },
    ] {
        let spec = CBandSpec::new(9, 1.0, 0.2, conf);
        let m = c_eigenmodes(&spec).unwrap();
        let h = spec.hamiltonian().map(|x| C64::new(x, 0.0));
        for k in 0..9 {
            let r = &h * m.psi.column(k) - m.psi.column(k) * C64::new(m.eps[k], 0.0);
            assert!(r.iter().all(|z| z.norm() < 1e-10));
        }
    }
}

#[test]
fn shallow_trap_is_an_oscillator() {
    let (jc, kappa) = (1.0, 0.001);
    let m = c_eigenmodes(&CBandSpec::new(201, jc, 0.0, Confinement::Harmonic { kappa, center: None })).unwrap();
    assert!(orthonormality(&m) < 1e-10);
    let w = (2.0 * jc * kappa).sqrt();
    for k in 0..3 {
        let gap = m.eps[k + 1] - m.eps[k];
        assert!((gap - w).abs() < 0.02 * w, "{gap} vs {w}");
    }
}

#[test]
fn periodic_dark_frequencies_are_exact() {
    let n = 30;
    let (jc, mu_c) = (7.5, 1.0);
    let m = c_eigenmodes(&CBandSpec::new(n, jc, mu_c, Confinement::Periodic)).unwrap();
    let s = absorption_spectrum(&delta_f0(n), &m, 1.0).unwrap();
    let at = |w: f64| s.peaks.iter().find(|p| (p.omega - w).abs() < 1e-9).unwrap();
    assert!(at(-2.0 * jc - mu_c).weight_minus.abs() < 1e-12);
    assert!(at(2.0 * jc - mu_c).weight_plus.abs() < 1e-12);
    assert!(at(-2.0 * jc - mu_c).weight_plus > 0.1);
}

#[test]
fn ring_chain_f0_gives_same_dark_points() {
    let n = 24;
    let sol = diagonalize(&ChainSpec::uniform(n, 1.0, 1.0, 0.0).with_boundary(Boundary::RingWithBarrier)).unwrap();
    let m = c_eigenmodes(&CBandSpec::new(n, 1.0, 0.0, Confinement::Periodic)).unwrap();
    let s = absorption_spectrum(&sol.f0, &m, 1.0).unwrap();
    assert!(s.peaks[0].weight_minus < 1e-12);
    assert!(s.peaks.last().unwrap().weight_plus < 1e-12);
}

#[test]
fn large_ring_matches_continuum() {
    let n = 200;
    let (jc, mu_c, rabi) = (1.0, 0.3, 0.7);
    let m = c_eigenmodes(&CBandSpec::new(n, jc, mu_c, Confinement::Periodic)).unwrap();
    let s = absorption_spectrum(&delta_f0(n), &m, rabi).unwrap();
    for state in [GroundState::Plus, GroundState::Minus] {
        let mut checked = 0;
        for (w, d) in cell_density(&s, state) {
            if (w + mu_c).abs() > 0.8 * 2.0 * jc {
                continue;
            }
            let (gp, gm) = periodic_trivial_closed_form(w, jc, mu_c, rabi);
            let c = if state == GroundState::Plus { gp } else { gm };
            assert!((d - c).abs() < 0.02 * c, "{state:?} ω={w}: {d} vs {c}");
            checked += 1;
        }
        assert!(checked > 50);
    }
}

#[test]
fn superposition_weights_average() {
    let m = c_eigenmodes(&CBandSpec::new(12, 1.0, 0.0, Confinement::HardWall)).unwrap();
    let sol = diagonalize(&ChainSpec::uniform(12, 1.0, 0.9, 0.1)).unwrap();
    let s = absorption_spectrum(&sol.f0, &m, 1.0).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let w = s.superposition(C64::new(h, 0.0), C64::new(0.0, h));
    for (p, x) in s.peaks.iter().zip(w) {
        assert!((x - 0.5 * (p.weight_plus + p.weight_minus)).abs() < 1e-14);
    }
}

#[test]
fn hard_wall_peaks_interleave() {
    let n = 10;
    let m = c_eigenmodes(&CBandSpec::new(n, 1.0, 0.0, Confinement::HardWall)).unwrap();
    let s = absorption_spectrum(&delta_f0(n), &m, 1.0).unwrap();
    assert_eq!(s.peaks.len(), n);
    for (i, p) in s.peaks.iter().enumerate() {
        let (on, off) = if i % 2 == 0 { (p.weight_plus, p.weight_minus) } else { (p.weight_minus, p.weight_plus) };
        assert!(on > 1e-3 && off < 1e-12, "peak {i}: {p:?}");
    }
    let lit_plus = s.peaks.iter().filter(|p| p.weight_plus > 1e-12).count();
    assert_eq!(lit_plus, n / 2);
}

#[test]
fn shallow_trap_keeps_peak_count() {
    let n = 20;
    let sol = diagonalize(&ChainSpec::uniform(n, 1.0, 0.8, 0.1)).unwrap();
    let count = |conf| {
        let m = c_eigenmodes(&CBandSpec::new(n, 1.0, 0.0, conf)).unwrap();
        let s = absorption_spectrum(&sol.f0, &m, 1.0).unwrap();
        let top = s.peaks.iter().map(|p| p.weight_plus.max(p.weight_minus)).fold(0.0, f64::max);
        s.peaks.iter().filter(|p| p.weight_plus.max(p.weight_minus) > 1e-8 * top).count()
    };
    assert_eq!(count(Confinement::HardWall), count(Confinement::Harmonic { kappa: 0.002, center: None }));
}

#[test]
fn geometry_mismatch_rejected() {
    let m = c_eigenmodes(&CBandSpec::new(6, 1.0, 0.0, Confinement::HardWall)).unwrap();
    assert!(matches!(absorption_spectrum(&delta_f0(5), &m, 1.0), Err(Error::Dimension(_))));
    assert!(c_eigenmodes(&CBandSpec::new(1, 1.0, 0.0, Confinement::HardWall)).is_err());
    assert!(c_eigenmodes(&CBandSpec::new(4, 1.0, 0.0, Confinement::Harmonic { kappa: -1.0, center: None })).is_err());
}

#[test]
fn broadening_preserves_weight_and_shape() {
    let single = SpectrumResult {
        peaks: vec![Peak { omega: 0.3, weight_plus: 2.0, weight_minus: 0.5 }],
        rabi: 1.0,
    };
    for eta in [0.01, 0.1, 0.5] {
        let grid = uniform_grid(-3.0, 3.0, 6001).unwrap();
        let b = broaden(&single, eta, &grid).unwrap();
        let d = grid[1] - grid[0];
        let sp: f64 = b.gamma_plus.iter().sum::<f64>() * d;
        let sm: f64 = b.gamma_minus.iter().sum::<f64>() * d;
        assert!((sp - 2.0).abs() < 1e-6 && (sm - 0.5).abs() < 1e-6);
    }
    let grid = uniform_grid(-1.0, 1.0, 2001).unwrap();
    let b = broaden(&single, 1e-3, &grid).unwrap();
    let imax = (0..grid.len()).max_by(|&i, &j| b.gamma_plus[i].total_cmp(&b.gamma_plus[j])).unwrap();
    assert!((grid[imax] - 0.3).abs() < 1e-9);
    let pair = SpectrumResult {
        peaks: vec![
            Peak { omega: -0.4, weight_plus: 1.0, weight_minus: 0.0 },
            Peak { omega: 0.4, weight_plus: 1.0, weight_minus: 0.0 },
        ],
        rabi: 1.0,
    };
    let b = broaden(&pair, 0.2, &grid).unwrap();
    for i in 0..grid.len() {
        assert!((b.gamma_plus[i] - b.gamma_plus[grid.len() - 1 - i]).abs() < 1e-10);
    }
    assert!(broaden(&pair, 0.0, &grid).is_err());
}

#[test]
fn frequency_conversion() {
    assert_eq!(convert_frequency(1.25, 0.0, 0.0, 0.0), 1.25);
    let w = convert_frequency(1.25, 0.3, -0.7, 2.0);
    assert!((convert_frequency_inverse(w, 0.3, -0.7, 2.0) - 1.25).abs() < 1e-15);
    let shifted = convert_frequency_inverse(w, 0.3, -0.7 + 0.2, 2.0);
    assert!((shifted - (1.25 + 0.2)).abs() < 1e-14);
}

proptest! {
    #[test]
    fn sum_rule(seed in proptest::collection::vec(-1.0f64..1.0, 9), which in 0usize..3, rabi in 0.1f64..3.0) {
        let n = 9;
        let nrm = seed.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(nrm > 1e-3);
        let f0: Vec<f64> = seed.iter().map(|x| x / nrm).collect();
        let conf = [Confinement::Periodic, Confinement::HardWall, Confinement::Harmonic { kappa: 0.4, center: Some(3.0) }][which].clone();
        let m = c_eigenmodes(&CBandSpec::new(n, 1.0, 0.0, conf)).unwrap();
        let s = absorption_spectrum(&f0, &m, rabi).unwrap();
        let pref = 2.0 * std::f64::consts::PI * rabi * rabi;
        let proj = |sg: f64| (0..n).map(|j| (f0[j] + sg * f0[n - 1 - j]).powi(2)).sum::<f64>();
        prop_assert!((s.total(GroundState::Plus) - pref * proj(1.0)).abs() < 1e-10);
        prop_assert!((s.total(GroundState::Minus) - pref * proj(-1.0)).abs() < 1e-10);
        for p in &s.peaks {
            prop_assert!(p.weight_plus >= 0.0 && p.weight_minus >= 0.0);
        }
    }
}
