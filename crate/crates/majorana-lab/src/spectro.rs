//! Excited-band modes and state-resolved absorption spectra.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Confinement {
    Periodic,
    #[default]
    HardWall,
    /// On-site κ (j − center)² / 2; center defaults to the middle site.
    Harmonic { kappa: f64, center: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CBandSpec {
    pub n: usize,
    pub jc: f64,
    pub mu_c: f64,
    #[serde(default)]
    pub confinement: Confinement,
}

impl CBandSpec {
    pub fn new(n: usize, jc: f64, mu_c: f64, confinement: Confinement) -> Self {
        CBandSpec { n, jc, mu_c, confinement }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("c-band N = {} must be at least 2", self.n)));
        }
        if !self.jc.is_finite() || !self.mu_c.is_finite() {
            return Err(Error::InvalidSpec("c-band couplings must be finite".into()));
        }
        if let Confinement::Harmonic { kappa, .. } = self.confinement {
            if !(kappa >= 0.0) {
                return Err(Error::InvalidSpec("harmonic kappa must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Single-particle c Hamiltonian in the site basis.
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = -self.mu_c;
        }
        for i in 0..n - 1 {
            h[(i, i + 1)] -= self.jc;
            h[(i + 1, i)] -= self.jc;
        }
        match self.confinement {
            Confinement::Periodic => {
                h[(0, n - 1)] -= self.jc;
                h[(n - 1, 0)] -= self.jc;
            }
            Confinement::HardWall => {}
            Confinement::Harmonic { kappa, center } => {
                let c = center.unwrap_or((n as f64 + 1.0) / 2.0);
                for i in 0..n {
                    h[(i, i)] += 0.5 * kappa * ((i + 1) as f64 - c).powi(2);
                }
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct CModes {
    /// psi[(j, k)]
    pub psi: DMatrix<C64>,
    pub eps: Vec<f64>,
    pub momenta: Option<Vec<f64>>,
}

impl CModes {
    pub fn n(&self) -> usize {
        self.psi.nrows()
    }
}

pub fn c_eigenmodes(cspec: &CBandSpec) -> Result<CModes> {
    cspec.validate()?;
    let n = cspec.n;
    let pi = std::f64::consts::PI;
    match cspec.confinement {
        Confinement::Periodic => {
            let ks: Vec<f64> = (0..n)
                .map(|m| {
                    let k = 2.0 * pi * m as f64 / n as f64;
                    if k > pi + 1e-12 { k - 2.0 * pi } else { k }
                })
                .collect();
            let norm = 1.0 / (n as f64).sqrt();
            let psi = DMatrix::from_fn(n, n, |j, c| {
                C64::from_polar(norm, ks[c] * (j + 1) as f64)
            });
            let eps = ks.iter().map(|k| -2.0 * cspec.jc * k.cos() - cspec.mu_c).collect();
            Ok(CModes { psi, eps, momenta: Some(ks) })
        }
        Confinement::HardWall => {
            let ks: Vec<f64> = (1..=n).map(|m| m as f64 * pi / (n + 1) as f64).collect();
            let norm = (2.0 / (n + 1) as f64).sqrt();
            let psi = DMatrix::from_fn(n, n, |j, c| {
                C64::new(norm * (ks[c] * (j + 1) as f64).sin(), 0.0)
            });
            let eps = ks.iter().map(|k| -2.0 * cspec.jc * k.cos() - cspec.mu_c).collect();
            Ok(CModes { psi, eps, momenta: Some(ks) })
        }
        Confinement::Harmonic { .. } => {
            let (eps, vecs) = sym_eigen(&cspec.hamiltonian());
            let mut psi = DMatrix::zeros(n, n);
            for c in 0..n {
                let col = vecs.column(c);
                let mut best = 0;
                for j in 0..n {
                    if col[j].abs() > col[best].abs() + 1e-12 {
                        best = j;
                    }
                }
                let s = if col[best] < 0.0 { -1.0 } else { 1.0 };
                for j in 0..n {
                    psi[(j, c)] = C64::new(s * col[j], 0.0);
                }
            }
            Ok(CModes { psi, eps, momenta: None })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundState {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Peak {
    pub omega: f64,
    pub weight_plus: f64,
    pub weight_minus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub peaks: Vec<Peak>,
    pub rabi: f64,
}

impl SpectrumResult {
    pub fn weight(&self, p: &Peak, state: GroundState) -> f64 {
        match state {
            GroundState::Plus => p.weight_plus,
            GroundState::Minus => p.weight_minus,
        }
    }

    /// Peak weights for α|g+⟩ + β|g−⟩.
    pub fn superposition(&self, alpha: C64, beta: C64) -> Vec<f64> {
        let (a2, b2) = (alpha.norm_sqr(), beta.norm_sqr());
        self.peaks.iter().map(|p| a2 * p.weight_plus + b2 * p.weight_minus).collect()
    }

    pub fn total(&self, state: GroundState) -> f64 {
        self.peaks.iter().map(|p| self.weight(p, state)).sum()
    }
}

/// Per-mode projections Σ_j f0(j)(ψ_k(j) ± ψ_k(N+1−j)).
pub fn edge_amplitudes(f0: &[f64], cmodes: &CModes) -> Result<Vec<(C64, C64)>> {
    let n = f0.len();
    if n == 0 {
        return Err(Error::NoZeroMode);
    }
    if cmodes.n() != n {
        return Err(Error::Dimension(format!(
            "f0 has {} sites, c modes have {}",
            n,
            cmodes.n()
        )));
    }
    Ok((0..cmodes.eps.len())
        .map(|k| {
            let mut p = C64::new(0.0, 0.0);
            let mut m = C64::new(0.0, 0.0);
            for j in 0..n {
                let a = cmodes.psi[(j, k)];
                let b = cmodes.psi[(n - 1 - j, k)];
                p += f0[j] * (a + b);
                m += f0[j] * (a - b);
            }
            (p, m)
        })
        .collect())
}

/// Delta-peak absorption weights of both ground states, degenerate modes merged.
pub fn absorption_spectrum(f0: &[f64], cmodes: &CModes, rabi: f64) -> Result<SpectrumResult> {
    let amps = edge_amplitudes(f0, cmodes)?;
    let pref = 2.0 * std::f64::consts::PI * rabi * rabi;
    let mut raw: Vec<Peak> = amps
        .iter()
        .zip(&cmodes.eps)
        .map(|((p, m), &e)| Peak {
            omega: e,
            weight_plus: pref * p.norm_sqr(),
            weight_minus: pref * m.norm_sqr(),
        })
        .collect();
    raw.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    let scale = cmodes.eps.iter().fold(1e-300f64, |s, e| s.max(e.abs()));
    let mut peaks: Vec<Peak> = Vec::with_capacity(raw.len());
    for p in raw {
        match peaks.last_mut() {
            Some(last) if (p.omega - last.omega).abs() <= 1e-10 * scale => {
                last.weight_plus += p.weight_plus;
                last.weight_minus += p.weight_minus;
            }
            _ => peaks.push(p),
        }
    }
    Ok(SpectrumResult { peaks, rabi })
}

#[derive(Debug, Clone, Serialize)]
pub struct Broadened {
    pub omega: Vec<f64>,
    pub gamma_plus: Vec<f64>,
    pub gamma_minus: Vec<f64>,
}

/// Uniform grid with `points` samples on [lo, hi].
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(hi > lo) {
        return Err(Error::InvalidSpec("grid needs hi > lo and at least 2 points".into()));
    }
    let d = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + d * i as f64).collect())
}

/// Lorentzian smoothing on a uniform grid; each line is normalized on the grid
/// so the summed weight matches the peak weight.
pub fn broaden(result: &SpectrumResult, eta: f64, grid: &[f64]) -> Result<Broadened> {
    if !(eta > 0.0) {
        return Err(Error::InvalidSpec(format!("broadening eta = {eta} must be positive")));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidSpec("grid needs at least 2 points".into()));
    }
    let d = grid[1] - grid[0];
    if !(d > 0.0) {
        return Err(Error::InvalidSpec("grid must be increasing".into()));
    }
    let mut gp = vec![0.0; grid.len()];
    let mut gm = vec![0.0; grid.len()];
    let mut line = vec![0.0; grid.len()];
    for p in &result.peaks {
        let mut s = 0.0;
        for (l, &w) in line.iter_mut().zip(grid) {
            *l = crate::bdg::lorentzian(w - p.omega, eta);
            s += *l * d;
        }
        if s <= 0.0 {
            continue;
        }
        for i in 0..grid.len() {
            gp[i] += p.weight_plus * line[i] / s;
            gm[i] += p.weight_minus * line[i] / s;
        }
    }
    Ok(Broadened { omega: grid.to_vec(), gamma_plus: gp, gamma_minus: gm })
}

/// Peak weight over its midpoint cell, one entry per interior peak.
pub fn cell_density(result: &SpectrumResult, state: GroundState) -> Vec<(f64, f64)> {
    let p = &result.peaks;
    (1..p.len().saturating_sub(1))
        .map(|i| {
            let width = 0.5 * (p[i + 1].omega - p[i - 1].omega);
            (p[i].omega, result.weight(&p[i], state) / width)
        })
        .collect()
}

/// Continuum spectrum of the periodic trivial-point chain.
pub fn periodic_trivial_closed_form(omega: f64, jc: f64, mu_c: f64, rabi: f64) -> (f64, f64) {
    let x = omega + mu_c;
    let root = (4.0 * jc * jc - x * x).sqrt();
    let pre = -2.0 * rabi * rabi / jc;
    (pre * (-2.0 * jc + x) / root, pre * (-2.0 * jc - x) / root)
}

pub fn convert_frequency(omega_model: f64, d_eps: f64, mu: f64, mu_c: f64) -> f64 {
    omega_model + d_eps - mu + mu_c
}

pub fn convert_frequency_inverse(omega_physical: f64, d_eps: f64, mu: f64, mu_c: f64) -> f64 {
    omega_physical - d_eps + mu - mu_c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_wall_three_sites() {
        let m = c_eigenmodes(&CBandSpec::new(3, 1.0, 0.0, Confinement::HardWall)).unwrap();
        let s = 2f64.sqrt();
        for (e, x) in m.eps.iter().zip([-s, 0.0, s]) {
            assert!((e - x).abs() < 1e-12);
        }
    }
}
