//! Mean-field chain: BdG matrix, quasiparticles, edge modes, LDOS.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    HardWall,
    RingWithBarrier,
}

/// On-site potential subtracted from μ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Trap {
    /// μ_j = μ − κ (j − center)² / 2, sites counted from 1.
    Harmonic { kappa: f64, center: f64 },
    /// Explicit V(j), one entry per site.
    Profile { v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n: usize,
    pub j: f64,
    pub mu: f64,
    /// Δ on bond (j, j+1), length N−1.
    pub delta: Vec<f64>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub trap: Option<Trap>,
    #[serde(default)]
    pub symmetric: bool,
    /// Bonds (1-based, bond b joins sites b and b+1) with hopping and pairing removed.
    #[serde(default)]
    pub barriers: Vec<usize>,
}

impl ChainSpec {
    pub fn uniform(n: usize, j: f64, delta: f64, mu: f64) -> Self {
        ChainSpec {
            n,
            j,
            mu,
            delta: vec![delta; n.saturating_sub(1)],
            boundary: Boundary::HardWall,
            trap: None,
            symmetric: true,
            barriers: Vec::new(),
        }
    }

    pub fn with_boundary(mut self, b: Boundary) -> Self {
        self.boundary = b;
        self
    }

    pub fn with_trap(mut self, trap: Trap) -> Self {
        self.trap = Some(trap);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("N = {} must be at least 2", self.n)));
        }
        if self.delta.len() != self.n - 1 {
            return Err(Error::InvalidSpec(format!(
                "delta has length {}, expected N-1 = {}",
                self.delta.len(),
                self.n - 1
            )));
        }
        let finite = self.j.is_finite()
            && self.mu.is_finite()
            && self.delta.iter().all(|d| d.is_finite());
        if !finite {
            return Err(Error::InvalidSpec("couplings must be finite".into()));
        }
        if let Some(Trap::Profile { v }) = &self.trap {
            if v.len() != self.n {
                return Err(Error::InvalidSpec(format!(
                    "trap profile has length {}, expected N = {}",
                    v.len(),
                    self.n
                )));
            }
        }
        if let Some(Trap::Harmonic { kappa, center }) = &self.trap {
            if !kappa.is_finite() || !center.is_finite() {
                return Err(Error::InvalidSpec("trap parameters must be finite".into()));
            }
        }
        for &b in &self.barriers {
            if b == 0 || b >= self.n {
                return Err(Error::InvalidSpec(format!("barrier bond {b} out of range")));
            }
        }
        if self.symmetric && !self.is_reflection_symmetric(1e-12) {
            return Err(Error::InvalidSpec(
                "flagged symmetric but delta, trap or barriers are not mirror symmetric".into(),
            ));
        }
        Ok(())
    }

    /// Site-resolved chemical potential μ_j.
    pub fn site_mu(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let site = (i + 1) as f64;
                match &self.trap {
                    None => self.mu,
                    Some(Trap::Harmonic { kappa, center }) => {
                        self.mu - 0.5 * kappa * (site - center).powi(2)
                    }
                    Some(Trap::Profile { v }) => self.mu - v[i],
                }
            })
            .collect()
    }

    /// Hopping and pairing on bond b (0-based, joins b and b+1); zero across barriers.
    pub fn bond(&self, b: usize) -> (f64, f64) {
        if self.barriers.contains(&(b + 1)) {
            (0.0, 0.0)
        } else {
            (self.j, self.delta[b])
        }
    }

    pub fn is_reflection_symmetric(&self, tol: f64) -> bool {
        let n = self.n;
        if self.delta.len() != n.saturating_sub(1) {
            return false;
        }
        let d_ok = (0..n - 1).all(|b| (self.delta[b] - self.delta[n - 2 - b]).abs() <= tol);
        let mu = self.site_mu();
        let mu_ok = (0..n).all(|i| (mu[i] - mu[n - 1 - i]).abs() <= tol * (1.0 + mu[i].abs()));
        let bar_ok = self.barriers.iter().all(|&b| self.barriers.contains(&(n - b)));
        d_ok && mu_ok && bar_ok
    }

    fn scale(&self) -> f64 {
        let d = self.delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mu = self.site_mu().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        self.j.abs().max(d).max(mu).max(1e-300)
    }
}

/// Hopping block h and pairing block D (H = [[h, D], [−D, −h]]).
pub fn blocks(spec: &ChainSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = spec.n;
    let mut h = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    for (i, m) in spec.site_mu().into_iter().enumerate() {
        h[(i, i)] = -m;
    }
    for b in 0..n - 1 {
        let (jb, db) = spec.bond(b);
        h[(b, b + 1)] = -jb;
        h[(b + 1, b)] = -jb;
        d[(b, b + 1)] = -db;
        d[(b + 1, b)] = db;
    }
    (h, d)
}

/// 2N×2N BdG matrix in the basis (a_1..a_N, a_1†..a_N†).
pub fn build_bdg_matrix(spec: &ChainSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (h, d) = blocks(spec);
    Ok(assemble(&h, &d))
}

fn assemble(h: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(h);
    m.view_mut((n, n), (n, n)).copy_from(&(-h));
    m.view_mut((0, n), (n, n)).copy_from(d);
    m.view_mut((n, 0), (n, n)).copy_from(&(-d));
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    PlusI,
    MinusI,
    Unclassified,
}

#[derive(Debug, Clone, Copy)]
pub struct DiagOptions {
    /// Zero-mode threshold, in units of |J|.
    pub zero_tol: f64,
    /// Relative window for calling two positive levels degenerate.
    pub degeneracy_tol: f64,
}

impl Default for DiagOptions {
    fn default() -> Self {
        DiagOptions {
            zero_tol: 1e-6,
            degeneracy_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BdGSolution {
    pub n: usize,
    pub energies: Vec<f64>,
    /// u[(j, ν)]
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub lambda: Vec<Lambda>,
    /// u₀ + v₀, empty without a zero mode.
    pub f0: Vec<f64>,
    /// u₀ − v₀, empty without a zero mode.
    pub psi0: Vec<f64>,
    pub zero_mode_present: bool,
    pub warnings: Vec<String>,
}

impl BdGSolution {
    pub fn min_energy(&self) -> f64 {
        self.energies.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Column ν as a 2N vector (u, v).
    pub fn mode(&self, nu: usize) -> Vec<f64> {
        let mut out: Vec<f64> = self.u.column(nu).iter().cloned().collect();
        out.extend(self.v.column(nu).iter().cloned());
        out
    }
}

pub fn diagonalize(spec: &ChainSpec) -> Result<BdGSolution> {
    diagonalize_with(spec, DiagOptions::default())
}

fn sign_fix(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalized(v: Vec<f64>) -> (Vec<f64>, f64) {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (v.iter().map(|x| x / nrm.max(1e-300)).collect(), nrm)
}

pub fn diagonalize_with(spec: &ChainSpec, opts: DiagOptions) -> Result<BdGSolution> {
    let m = build_bdg_matrix(spec)?;
    let n = spec.n;
    let (vals, vecs) = sym_eigen(&m);
    let mut warnings = Vec::new();

    let e0 = 0.5 * (vals[n] - vals[n - 1]).abs();
    let zero_mode_present = e0 < opts.zero_tol * spec.j.abs().max(1e-300);

    let mut energies = vec![0.0; n];
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut f0 = Vec::new();
    let mut psi0 = Vec::new();

    if zero_mode_present {
        let p: Vec<f64> = vecs.column(n - 1).iter().cloned().collect();
        let q: Vec<f64> = vecs.column(n).iter().cloned().collect();
        let pick = |sign: f64| -> Vec<f64> {
            let a: Vec<f64> = (0..n).map(|j| p[j] + sign * p[n + j]).collect();
            let b: Vec<f64> = (0..n).map(|j| q[j] + sign * q[n + j]).collect();
            let (a, na) = normalized(a);
            let (b, nb) = normalized(b);
            if na >= nb {
                a
            } else {
                b
            }
        };
        let mut phi = pick(1.0);
        let mut psi = pick(-1.0);
        sign_fix(&mut phi);
        let overlap: f64 = (0..n).map(|j| psi[j] * phi[n - 1 - j]).sum();
        if overlap.abs() > 1e-8 {
            if overlap < 0.0 {
                psi.iter_mut().for_each(|x| *x = -*x);
            }
        } else {
            sign_fix(&mut psi);
        }
        let mut mode0: Vec<f64> = (0..n).map(|j| 0.5 * (phi[j] + psi[j])).collect();
        mode0.extend((0..n).map(|j| 0.5 * (phi[j] - psi[j])));
        energies[0] = e0;
        modes.push(mode0);
        f0 = phi;
        psi0 = psi;
    } else {
        energies[0] = vals[n].max(0.0);
        let mut x: Vec<f64> = vecs.column(n).iter().cloned().collect();
        sign_fix(&mut x);
        modes.push(x);
    }
    for nu in 1..n {
        energies[nu] = vals[n + nu];
        let mut x: Vec<f64> = vecs.column(n + nu).iter().cloned().collect();
        sign_fix(&mut x);
        modes.push(x);
    }

    let clusters = degenerate_clusters(&energies, zero_mode_present, opts.degeneracy_tol * spec.scale());
    for c in &clusters {
        warnings.push(format!(
            "degenerate levels near E = {:.6} for modes {:?}",
            energies[c[0]], c
        ));
    }

    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for (nu, x) in modes.iter().enumerate() {
        for j in 0..n {
            u[(j, nu)] = x[j];
            v[(j, nu)] = x[n + j];
        }
    }
    let mut sol = BdGSolution {
        n,
        energies,
        u,
        v,
        lambda: vec![Lambda::Unclassified; n],
        f0,
        psi0,
        zero_mode_present,
        warnings,
    };
    if spec.is_reflection_symmetric(1e-12) {
        for c in &clusters {
            rotate_cluster_to_reflection_basis(&mut sol, c);
        }
        sol.lambda = label_modes(&sol);
    }
    Ok(sol)
}

fn degenerate_clusters(e: &[f64], skip_zero: bool, tol: f64) -> Vec<Vec<usize>> {
    let start = if skip_zero { 1 } else { 0 };
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    for nu in start..e.len() {
        match cur.last() {
            Some(&last) if (e[nu] - e[last]).abs() <= tol => cur.push(nu),
            _ => {
                if cur.len() > 1 {
                    out.push(cur.clone());
                }
                cur = vec![nu];
            }
        }
    }
    if cur.len() > 1 {
        out.push(cur);
    }
    out
}

fn reflect(sol: &BdGSolution, x: &[f64]) -> Vec<f64> {
    let n = sol.n;
    let mut out = vec![0.0; 2 * n];
    for j in 0..n {
        out[j] = x[n - 1 - j];
        out[n + j] = -x[2 * n - 1 - j];
    }
    out
}

fn rotate_cluster_to_reflection_basis(sol: &mut BdGSolution, cluster: &[usize]) {
    let k = cluster.len();
    let xs: Vec<Vec<f64>> = cluster.iter().map(|&nu| sol.mode(nu)).collect();
    let sx: Vec<Vec<f64>> = xs.iter().map(|x| reflect(sol, x)).collect();
    let mut s = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            s[(a, b)] = xs[a].iter().zip(&sx[b]).map(|(p, q)| p * q).sum();
        }
    }
    let s = 0.5 * (&s + s.transpose());
    let (_, q) = sym_eigen(&s);
    let n = sol.n;
    for (c, &nu) in cluster.iter().enumerate() {
        let mut y = vec![0.0; 2 * n];
        for a in 0..k {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += q[(a, c)] * xs[a][i];
            }
        }
        sign_fix(&mut y);
        for j in 0..n {
            sol.u[(j, nu)] = y[j];
            sol.v[(j, nu)] = y[n + j];
        }
    }
}

fn label_modes(sol: &BdGSolution) -> Vec<Lambda> {
    (0..sol.n)
        .map(|nu| {
            let x = sol.mode(nu);
            let sx = reflect(sol, &x);
            let s: f64 = x.iter().zip(&sx).map(|(a, b)| a * b).sum();
            if s > 1.0 - 1e-6 {
                Lambda::MinusI
            } else if s < -1.0 + 1e-6 {
                Lambda::PlusI
            } else {
                Lambda::Unclassified
            }
        })
        .collect()
}

/// Labels λ_ν from the reflection relations of each mode.
pub fn classify_reflection_symmetry(sol: &BdGSolution, spec: &ChainSpec) -> Result<Vec<Lambda>> {
    if !spec.symmetric || !spec.is_reflection_symmetric(1e-12) {
        return Err(Error::Contract(
            "reflection classification needs a mirror-symmetric spec".into(),
        ));
    }
    if sol.n != spec.n {
        return Err(Error::Dimension(format!("solution N = {}, spec N = {}", sol.n, spec.n)));
    }
    Ok(label_modes(sol))
}

/// Roots x± of (J+Δ)x² + μx + (J−Δ) = 0.
pub fn edge_roots(j: f64, delta: f64, mu: f64) -> (Complex64, Complex64) {
    let a = Complex64::new(-mu / (2.0 * (j + delta)), 0.0);
    let disc = Complex64::new((mu / (2.0 * (j + delta))).powi(2) + (delta - j) / (delta + j), 0.0);
    let s = disc.sqrt();
    (a + s, a - s)
}

/// f₀ from the analytic solution of the edge difference equation.
pub fn edge_mode_closed_form(j: f64, delta: f64, mu: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("N = {n} must be at least 2")));
    }
    if mu.abs() >= 2.0 * j.abs() {
        return Err(Error::NoEdgeMode {
            mu: mu.abs(),
            two_j: 2.0 * j.abs(),
        });
    }
    if delta == 0.0 {
        return Err(Error::InvalidSpec("uniform delta must be nonzero".into()));
    }
    let delta_fn = |site: usize| -> Vec<f64> {
        let mut f = vec![0.0; n];
        f[site] = 1.0;
        f
    };
    if (j + delta).abs() < 1e-12 * j.abs() {
        return Ok(delta_fn(n - 1));
    }
    let (xp, xm) = edge_roots(j, delta, mu);
    let raw: Vec<Complex64> = if delta > 0.0 {
        if xp.norm() < 1e-12 && xm.norm() < 1e-12 {
            return Ok(delta_fn(0));
        }
        power_difference(xp, xm, n, |site| site as i32)
    } else {
        let (yp, ym) = (xp.inv(), xm.inv());
        if yp.norm() < 1e-12 && ym.norm() < 1e-12 {
            return Ok(delta_fn(n - 1));
        }
        power_difference(ym, yp, n, |site| (n + 1 - site) as i32)
    };
    let mut best = raw[0];
    for z in &raw {
        if z.norm() > best.norm() {
            best = *z;
        }
    }
    let phase = if best.norm() > 0.0 { best.conj() / best.norm() } else { Complex64::new(1.0, 0.0) };
    let re: Vec<f64> = raw.iter().map(|z| (z * phase).re).collect();
    let (mut f, nrm) = normalized(re);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::Numerical("edge mode closed form degenerated".into()));
    }
    sign_fix(&mut f);
    Ok(f)
}

/// p^e − q^e with e = exponent(site), or e·p^(e−1) when p = q.
fn power_difference(
    p: Complex64,
    q: Complex64,
    n: usize,
    exponent: impl Fn(usize) -> i32,
) -> Vec<Complex64> {
    let repeated = (p - q).norm() < 1e-12 * (1.0 + p.norm());
    (1..=n)
        .map(|site| {
            let e = exponent(site);
            if repeated {
                Complex64::new(e as f64, 0.0) * p.powi(e)
            } else {
                p.powi(e) - q.powi(e)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LdosPeak {
    pub site: usize,
    pub energy: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Ldos {
    pub energies: Vec<f64>,
    /// a[site][k] on the caller grid.
    pub a: Vec<Vec<f64>>,
    pub peaks: Vec<LdosPeak>,
}

pub fn lorentzian(x: f64, eta: f64) -> f64 {
    eta / std::f64::consts::PI / (x * x + eta * eta)
}

pub fn local_density_of_states(sol: &BdGSolution, eta: f64, grid: &[f64]) -> Result<Ldos> {
    if !(eta > 0.0) {
        return Err(Error::InvalidSpec(format!("broadening eta = {eta} must be positive")));
    }
    if grid.is_empty() || grid.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidSpec("energy grid must be nonempty and finite".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let n = sol.n;
    let mut peaks = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for nu in 0..n {
            let e = sol.energies[nu];
            peaks.push(LdosPeak { site: j + 1, energy: e, weight: two_pi * sol.u[(j, nu)].powi(2) });
            peaks.push(LdosPeak { site: j + 1, energy: -e, weight: two_pi * sol.v[(j, nu)].powi(2) });
        }
    }
    let mut a = vec![vec![0.0; grid.len()]; n];
    for p in &peaks {
        for (k, &e) in grid.iter().enumerate() {
            a[p.site - 1][k] += p.weight * lorentzian(e - p.energy, eta);
        }
    }
    Ok(Ldos {
        energies: grid.to_vec(),
        a,
        peaks,
    })
}

/// Smallest non-negative eigenvalue of an open chain of coupled wires.
pub fn multiwire_zero_mode_check(
    spec: &ChainSpec,
    n_wires: usize,
    j_prime: f64,
    cap: usize,
) -> Result<f64> {
    spec.validate()?;
    if n_wires < 2 {
        return Err(Error::InvalidSpec(format!("n_wires = {n_wires} must be at least 2")));
    }
    if !j_prime.is_finite() {
        return Err(Error::InvalidSpec("J' must be finite".into()));
    }
    let total = spec.n * n_wires;
    if total > cap {
        return Err(Error::ResourceGuard {
            what: "N*n_wires",
            value: total,
            cap,
        });
    }
    let (h1, d1) = blocks(spec);
    let n = spec.n;
    let mut h = DMatrix::zeros(total, total);
    let mut d = DMatrix::zeros(total, total);
    for w in 0..n_wires {
        h.view_mut((w * n, w * n), (n, n)).copy_from(&h1);
        d.view_mut((w * n, w * n), (n, n)).copy_from(&d1);
        if w + 1 < n_wires {
            for s in 0..n {
                h[(w * n + s, (w + 1) * n + s)] = -j_prime;
                h[((w + 1) * n + s, w * n + s)] = -j_prime;
            }
        }
    }
    let (vals, _) = sym_eigen(&assemble(&h, &d));
    Ok(vals[total].abs().min(vals[total - 1].abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_trivial_point_spectrum() {
        let m = build_bdg_matrix(&ChainSpec::uniform(2, 1.0, 1.0, 0.0)).unwrap();
        let (vals, _) = sym_eigen(&m);
        let expect = [-2.0, 0.0, 0.0, 2.0];
        for (a, b) in vals.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn barrier_bonds_are_cut() {
        let mut s = ChainSpec::uniform(4, 1.0, 0.5, 0.0);
        s.barriers = vec![2];
        s.symmetric = true;
        let (h, d) = blocks(&s);
        assert_eq!(h[(1, 2)], 0.0);
        assert_eq!(d[(1, 2)], 0.0);
        assert_eq!(h[(0, 1)], -1.0);
    }

    #[test]
    fn harmonic_trap_lowers_mu_away_from_center() {
        let s = ChainSpec::uniform(5, 1.0, 0.5, 0.0).with_trap(Trap::Harmonic { kappa: 0.2, center: 3.0 });
        let mu = s.site_mu();
        assert!((mu[0] + 0.4).abs() < 1e-15);
        assert_eq!(mu[2], 0.0);
    }
}
