//! Self-consistent pairing and the effective-interaction maps.

use serde::{Deserialize, Serialize};

use crate::bdg::{diagonalize, BdGSolution, ChainSpec};
use crate::error::{Error, Result};

pub mod constants {
    pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
    pub const DEBYE: f64 = 3.335_64e-30;
    pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
    pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
    pub const AMU: f64 = 1.660_539_066_60e-27;
}

/// Mechanism parameters. Lengths in metres, energies in joules unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mechanism", deny_unknown_fields)]
pub enum InteractionSpec {
    Direct { v: f64 },
    Dipolar { d1_debye: f64, d2_debye: f64, a: f64, theta: f64 },
    SpinOrbit { v: f64, j: f64, omega_r: f64, kl_a: f64 },
    SpinLattice { mu0_b: f64, g: f64, a: f64, sigma: f64 },
}

impl InteractionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            InteractionSpec::Dipolar { a, .. } if !(*a > 0.0) => {
                Err(Error::InvalidSpec("lattice constant a must be positive".into()))
            }
            InteractionSpec::SpinLattice { a, sigma, .. } => {
                if !(*a > 0.0) {
                    Err(Error::InvalidSpec("lattice constant a must be positive".into()))
                } else if !(*sigma > 0.0) {
                    Err(Error::InvalidSpec("Wannier width sigma must be positive".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Right-hand side of the uniform gap equation.
pub fn gap_rhs(delta: f64, j: f64, mu: f64, nk: usize) -> f64 {
    let mut s = 0.0;
    for m in 0..nk {
        let k = 2.0 * std::f64::consts::PI * m as f64 / nk as f64;
        let sk = k.sin();
        let xi = 2.0 * j * k.cos() - mu;
        let den = (xi * xi + (2.0 * delta * sk).powi(2)).sqrt();
        if sk * sk == 0.0 {
            continue;
        }
        s += if den == 0.0 { f64::INFINITY } else { sk * sk / den };
    }
    s / nk as f64
}

/// Uniform Δ ≥ 0 from −1/V = RHS(Δ), by bisection.
pub fn solve_uniform_gap(v: f64, j: f64, mu: f64, nk: usize) -> Result<f64> {
    if !(v < 0.0) {
        return Err(Error::NoPairing(v));
    }
    if nk < 2 || nk % 2 == 1 {
        return Err(Error::InvalidSpec(format!("N_k = {nk} must be even and at least 2")));
    }
    let target = -1.0 / v;
    if gap_rhs(0.0, j, mu, nk) <= target {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, (-v).max(1e-300));
    while gap_rhs(hi, j, mu, nk) > target {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap_rhs(mid, j, mu, nk) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ⟨a_{j+1} a_j⟩ in the quasiparticle vacuum, one entry per bond.
pub fn pair_correlator(sol: &BdGSolution) -> Vec<f64> {
    let n = sol.n;
    (0..n - 1)
        .map(|j| (0..n).map(|nu| sol.u[(j + 1, nu)] * sol.v[(j, nu)]).sum())
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct SelfConsistentOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mixing: f64,
}

impl Default for SelfConsistentOptions {
    fn default() -> Self {
        SelfConsistentOptions {
            tol: 1e-10,
            max_iter: 500,
            mixing: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfConsistentResult {
    pub spec: ChainSpec,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Default seed Δ⁰ = 0.1 J on every bond.
pub fn default_seed(spec: &ChainSpec) -> Vec<f64> {
    vec![0.1 * spec.j; spec.n.saturating_sub(1)]
}

/// Iterate Δ_j ← −V ⟨a_{j+1} a_j⟩ with linear mixing.
pub fn solve_selfconsistent_delta(
    spec: &ChainSpec,
    v: f64,
    init: &[f64],
    opts: SelfConsistentOptions,
) -> Result<SelfConsistentResult> {
    if !(v < 0.0) {
        return Err(Error::NoPairing(v));
    }
    if init.len() + 1 != spec.n {
        return Err(Error::InvalidSpec(format!(
            "seed has length {}, expected N-1 = {}",
            init.len(),
            spec.n.saturating_sub(1)
        )));
    }
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::InvalidSpec("mixing must lie in (0, 1]".into()));
    }
    let mut cur = spec.clone();
    cur.delta = init.to_vec();
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let sol = diagonalize(&cur)?;
        let target: Vec<f64> = pair_correlator(&sol).iter().map(|c| -v * c).collect();
        let resid = target
            .iter()
            .zip(&cur.delta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(resid);
        if resid < opts.tol {
            cur.delta = target;
            if cur.symmetric {
                symmetrize(&mut cur.delta);
            }
            return Ok(SelfConsistentResult { spec: cur, iterations: it, history });
        }
        for (d, t) in cur.delta.iter_mut().zip(&target) {
            *d += opts.mixing * (t - *d);
        }
        if cur.symmetric {
            symmetrize(&mut cur.delta);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last: history.last().cloned().unwrap_or(f64::NAN),
        history,
    })
}

fn symmetrize(d: &mut [f64]) {
    let m = d.len();
    for b in 0..m / 2 {
        let avg = 0.5 * (d[b] + d[m - 1 - b]);
        d[b] = avg;
        d[m - 1 - b] = avg;
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Energy {
    pub joules: f64,
    pub hz: f64,
}

impl Energy {
    pub fn from_joules(joules: f64) -> Self {
        Energy { joules, hz: joules / constants::PLANCK }
    }
}

/// Dipole-dipole coupling of parallel dipoles at angle θ to the bond axis.
pub fn effective_dipolar(d1_debye: f64, d2_debye: f64, a: f64, theta: f64) -> Result<Energy> {
    if !(a > 0.0) {
        return Err(Error::InvalidSpec("lattice constant a must be positive".into()));
    }
    let d1 = d1_debye * constants::DEBYE;
    let d2 = d2_debye * constants::DEBYE;
    let c = theta.cos();
    let v = d1 * d2 * (1.0 - 3.0 * c * c)
        / (4.0 * std::f64::consts::PI * constants::EPSILON_0 * a.powi(3));
    Ok(Energy::from_joules(v))
}

#[derive(Debug, Clone, Serialize)]
pub struct SocResult {
    pub v_eff: f64,
    pub j_eff: f64,
    pub warning: Option<String>,
}

/// Raman-dressed interaction and hopping (same units as the inputs).
pub fn effective_soc(v: f64, j: f64, omega_r: f64, kl_a: f64) -> Result<SocResult> {
    if omega_r == 0.0 {
        return Err(Error::DivisionByZero("Raman coupling is zero".into()));
    }
    let warning = (omega_r.abs() < 10.0 * j.abs()).then(|| {
        format!("Omega_R = {omega_r} is not large against 2J = {}; leading order only", 2.0 * j)
    });
    Ok(SocResult {
        v_eff: v * (2.0 * j * kl_a.sin() / omega_r).powi(2),
        j_eff: j * kl_a.cos(),
        warning,
    })
}

/// On-site contact energy for a Gaussian Wannier orbital of width σ (isotropic).
pub fn onsite_contact(scattering_length: f64, mass: f64, sigma: f64) -> Result<Energy> {
    if !(sigma > 0.0) || !(mass > 0.0) {
        return Err(Error::InvalidSpec("sigma and mass must be positive".into()));
    }
    let g = 4.0 * std::f64::consts::PI * constants::HBAR.powi(2) * scattering_length / mass;
    let overlap = (2.0 * std::f64::consts::PI).powf(-1.5) / sigma.powi(3);
    Ok(Energy::from_joules(g * overlap))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpinLattice {
    pub j_eff: f64,
    pub v_eff: f64,
}

/// Spin-dependent lattice with φ(x) = (πσ²)^(−1/4) exp(−x²/2σ²).
pub fn effective_spin_lattice(mu0_b: f64, g: f64, a: f64, sigma: f64) -> Result<SpinLattice> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidSpec("Wannier width sigma must be positive".into()));
    }
    let j_eff = mu0_b * (-a * a / (16.0 * sigma * sigma)).exp();
    let v_eff = g * (-a * a / (8.0 * sigma * sigma)).exp()
        / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    Ok(SpinLattice { j_eff, v_eff })
}

/// Same integrals by quadrature for an arbitrary real Wannier function.
pub fn effective_spin_lattice_quadrature(
    mu0_b: f64,
    g: f64,
    a: f64,
    wannier: impl Fn(f64) -> f64,
    half_width: f64,
    points: usize,
) -> Result<SpinLattice> {
    if points < 3 || !(half_width > 0.0) {
        return Err(Error::InvalidSpec("quadrature needs a positive window and 3+ points".into()));
    }
    let n = if points % 2 == 0 { points + 1 } else { points };
    let lo = -half_width + a / 4.0;
    let h = 2.0 * half_width / (n - 1) as f64;
    let mut sj = 0.0;
    let mut sv = 0.0;
    for i in 0..n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let p = wannier(x);
        let q = wannier(x - a / 2.0);
        sj += w * p * q;
        sv += w * p * p * q * q;
    }
    Ok(SpinLattice {
        j_eff: mu0_b * sj * h / 3.0,
        v_eff: g * sv * h / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_point_gap() {
        let d = solve_uniform_gap(-4.0, 1.0, 0.0, 64).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repulsive_is_rejected() {
        assert!(matches!(solve_uniform_gap(1.0, 1.0, 0.0, 64), Err(Error::NoPairing(_))));
    }
}
