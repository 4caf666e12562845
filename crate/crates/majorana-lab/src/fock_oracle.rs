//! Brute-force many-body reference in the full Fock space of a and c modes.
//!
//! Mode m occupies bit m of the basis index; a_1..a_N come first, then c_1..c_N.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::dynamics::{hamiltonian_entries, InitialState, PulseSchedule, PulseStep, System, Target};
use crate::error::{Error, Result};
use crate::linalg::{herm_eigen, C64};

pub const MAX_MODES_PER_BAND: usize = 6;
const DENSE_LIMIT: usize = 1 << 8;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Apply f_m (or f_m†) to basis state s.
fn apply_mode(m: usize, creator: bool, s: usize) -> Option<(f64, usize)> {
    let occupied = s >> m & 1 == 1;
    if occupied == creator {
        return None;
    }
    let sign = if (s & ((1usize << m) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, s ^ (1 << m)))
}

/// Operator index p of the (a, a†, c, c†) layout as (mode, creator).
fn layout(p: usize, n: usize) -> (usize, bool) {
    match p / n {
        0 => (p, false),
        1 => (p - n, true),
        2 => (p - n, false),
        _ => (p - 2 * n, true),
    }
}

/// Sparse matrices of the mode operators and the parities.
#[derive(Debug, Clone)]
pub struct FockOperatorSet {
    pub n: usize,
    pub dim: usize,
    /// a_1..a_N then c_1..c_N.
    pub annihilators: Vec<CsrMatrix<f64>>,
    /// (−1)^(Σ a†a)
    pub parity_a: Vec<f64>,
    /// (−1)^(Σ c†c)
    pub parity_c: Vec<f64>,
}

impl FockOperatorSet {
    pub fn new(n: usize) -> Result<Self> {
        guard(n, MAX_MODES_PER_BAND)?;
        let dim = 1usize << (2 * n);
        let mut annihilators = Vec::with_capacity(2 * n);
        for m in 0..2 * n {
            let mut coo = CooMatrix::new(dim, dim);
            for s in 0..dim {
                if let Some((sg, t)) = apply_mode(m, false, s) {
                    coo.push(t, s, sg);
                }
            }
            annihilators.push(CsrMatrix::from(&coo));
        }
        let amask = (1usize << n) - 1;
        let parity = |bits: usize| if bits.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let parity_a = (0..dim).map(|s| parity(s & amask)).collect();
        let parity_c = (0..dim).map(|s| parity(s >> n)).collect();
        Ok(FockOperatorSet { n, dim, annihilators, parity_a, parity_c })
    }

    /// max |{f_i, f_j†} − δ_ij| and max |{f_i, f_j}| over all pairs.
    pub fn anticommutator_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let dense: Vec<DMatrix<f64>> = self.annihilators.iter().map(to_dense).collect();
        let eye = DMatrix::<f64>::identity(self.dim, self.dim);
        for i in 0..dense.len() {
            for j in 0..dense.len() {
                let (a, b) = (&dense[i], &dense[j]);
                let bt = b.transpose();
                let mut ac = a * &bt + &bt * a;
                if i == j {
                    ac -= &eye;
                }
                worst = worst.max(ac.amax());
                worst = worst.max((a * b + b * a).amax());
            }
        }
        worst
    }
}

fn to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

fn guard(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::ResourceGuard { what: "fock modes per band", value: n, cap });
    }
    Ok(())
}

/// Σ_p coef_p O_p |ψ⟩ over the (a, a†, c, c†) layout.
pub fn apply_linear(coef: &[C64], psi: &DVector<C64>, n: usize) -> DVector<C64> {
    let mut out = DVector::zeros(psi.len());
    for (p, &c) in coef.iter().enumerate() {
        if c == zero() {
            continue;
        }
        let (m, cr) = layout(p, n);
        for (s, &amp) in psi.iter().enumerate() {
            if amp == zero() {
                continue;
            }
            if let Some((sg, t)) = apply_mode(m, cr, s) {
                out[t] += c * amp * sg;
            }
        }
    }
    out
}

/// ½ Σ O_p† 𝓗_pq O_q as a sparse Hermitian matrix.
pub fn many_body_from_entries(entries: &[(usize, usize, C64)], n: usize) -> CsrMatrix<C64> {
    let dim = 1usize << (2 * n);
    let mut coo = CooMatrix::new(dim, dim);
    for &(p, q, h) in entries {
        let (mp, cp) = layout(p, n);
        let (mq, cq) = layout(q, n);
        for s in 0..dim {
            if let Some((s1, t1)) = apply_mode(mq, cq, s) {
                if let Some((s2, t2)) = apply_mode(mp, !cp, t1) {
                    coo.push(t2, s, h * (0.5 * s1 * s2));
                }
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Lab-frame many-body Hamiltonian with the drive evaluated at time t.
pub fn build_many_body_hamiltonian(sys: &System, step: &PulseStep, t: f64) -> Result<CsrMatrix<C64>> {
    guard(sys.n(), MAX_MODES_PER_BAND)?;
    if step.mask.len() != sys.n() {
        return Err(Error::Dimension(format!("mask length {} for N = {}", step.mask.len(), sys.n())));
    }
    let ph = C64::from_polar(1.0, -step.omega * t);
    let drive: Vec<C64> = step.mask.iter().map(|m| ph * (m * step.rabi)).collect();
    let e = hamiltonian_entries(&sys.chain, &sys.cband, &drive, 0.0, None);
    Ok(many_body_from_entries(&e, sys.n()))
}

pub fn dense(m: &CsrMatrix<C64>) -> DMatrix<C64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

fn spmv(m: &CsrMatrix<C64>, x: &DVector<C64>) -> DVector<C64> {
    let mut y = DVector::zeros(m.nrows());
    for (i, row) in m.row_iter().enumerate() {
        let mut acc = zero();
        for (&j, v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[j];
        }
        y[i] = acc;
    }
    y
}

/// All many-body energies, sorted.
pub fn spectrum(h: &CsrMatrix<C64>) -> Vec<f64> {
    herm_eigen(&dense(h)).0
}

/// γ_ν as a coefficient vector over the operator layout.
fn gamma_coef(sys: &System, nu: usize) -> Vec<C64> {
    let n = sys.n();
    let mut c = vec![zero(); 4 * n];
    for j in 0..n {
        c[j] = C64::new(sys.sol.u[(j, nu)], 0.0);
        c[n + j] = C64::new(sys.sol.v[(j, nu)], 0.0);
    }
    c
}

fn dagger(coef: &[C64], n: usize) -> Vec<C64> {
    let mut d = vec![zero(); coef.len()];
    for band in 0..2 {
        for j in 0..n {
            let (ann, cre) = (2 * band * n + j, 2 * band * n + n + j);
            d[ann] = coef[cre].conj();
            d[cre] = coef[ann].conj();
        }
    }
    d
}

/// (|g−⟩, |g+⟩) with the c band empty and |g+⟩ = γ_edge†|g−⟩.
pub fn ground_states(sys: &System) -> Result<(DVector<C64>, DVector<C64>)> {
    let n = sys.n();
    guard(n, MAX_MODES_PER_BAND)?;
    let dim = 1usize << (2 * n);
    for seed in 0..(1usize << n) {
        let mut psi = DVector::zeros(dim);
        psi[seed] = C64::new(1.0, 0.0);
        for nu in 0..n {
            psi = apply_linear(&gamma_coef(sys, nu), &psi, n);
        }
        let nrm = psi.norm();
        if nrm > 1e-6 {
            let gm = psi / C64::new(nrm, 0.0);
            let gp = apply_linear(&dagger(&gamma_coef(sys, 0), n), &gm, n);
            return Ok((gm, gp));
        }
    }
    Err(Error::Numerical("no quasiparticle vacuum found".into()))
}

pub fn initial_vector(sys: &System, init: &InitialState) -> Result<DVector<C64>> {
    init.validate()?;
    let (gm, gp) = ground_states(sys)?;
    Ok(gm * init.alpha + gp * init.beta)
}

/// Observables of one state vector.
#[derive(Debug, Clone, Copy)]
pub struct FockObservables {
    pub occupation: f64,
    /// ⟨P_c γ⟩
    pub coherence: C64,
    /// ⟨γ⟩
    pub coherence_literal: C64,
    pub norm: f64,
}

pub fn exact_observables(sys: &System, psi: &DVector<C64>) -> FockObservables {
    let n = sys.n();
    let g = gamma_coef(sys, 0);
    let gpsi = apply_linear(&g, psi, n);
    let occupation = gpsi.norm_squared();
    let lit = psi.dotc(&gpsi);
    let pc = FockOperatorSet::parity_c_vec(n);
    let framed: C64 = psi.iter().zip(gpsi.iter()).zip(&pc).map(|((a, b), p)| a.conj() * b * *p).sum();
    FockObservables { occupation, coherence: framed, coherence_literal: lit, norm: psi.norm() }
}

impl FockOperatorSet {
    fn parity_c_vec(n: usize) -> Vec<f64> {
        (0..1usize << (2 * n)).map(|s| if (s >> n).count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect()
    }
}

/// Fidelity of the reduced qubit state against `target`, matching the dynamics definition.
pub fn exact_fidelity(obs: &FockObservables, target: Target) -> f64 {
    crate::dynamics::fidelity_from(obs.occupation, obs.coherence, target)
}

/// Observable traces from exact propagation.
#[derive(Debug, Clone)]
pub struct FockTrajectory {
    pub times: Vec<f64>,
    pub observables: Vec<FockObservables>,
    pub state: DVector<C64>,
    pub max_norm_drift: f64,
}

/// exp(−iH t)ψ through a Taylor series with scaling.
fn expm_multiply(h: &CsrMatrix<C64>, psi: &DVector<C64>, t: f64) -> DVector<C64> {
    let norm1 = h.row_iter().map(|r| r.values().iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = (norm1 * t.abs()).ceil().max(1.0) as usize;
    let dt = t / s as f64;
    let mut x = psi.clone();
    for _ in 0..s {
        let mut term = x.clone();
        let mut acc = x.clone();
        for k in 1..60 {
            term = spmv(h, &term) * C64::new(0.0, -dt / k as f64);
            acc += &term;
            if term.norm() < 1e-17 * acc.norm() {
                break;
            }
        }
        x = acc;
    }
    x
}

enum Propagator {
    Dense { vecs: DMatrix<C64>, vals: Vec<f64> },
    Sparse(CsrMatrix<C64>),
}

impl Propagator {
    fn new(h: CsrMatrix<C64>) -> Self {
        if h.nrows() <= DENSE_LIMIT {
            let (vals, vecs) = herm_eigen(&dense(&h));
            Propagator::Dense { vecs, vals }
        } else {
            Propagator::Sparse(h)
        }
    }

    fn apply(&self, psi: &DVector<C64>, t: f64) -> DVector<C64> {
        match self {
            Propagator::Dense { vecs, vals } => {
                let mut c = vecs.adjoint() * psi;
                for (ci, e) in c.iter_mut().zip(vals.iter()) {
                    *ci *= C64::from_polar(1.0, -e * t);
                }
                vecs * c
            }
            Propagator::Sparse(h) => expm_multiply(h, psi, t),
        }
    }
}

/// Multiply by e^(iθ N_c).
fn c_phase(psi: &mut DVector<C64>, n: usize, theta: f64) {
    if theta == 0.0 {
        return;
    }
    for (s, x) in psi.iter_mut().enumerate() {
        let k = (s >> n).count_ones() as f64;
        *x *= C64::from_polar(1.0, theta * k);
    }
}

/// Piecewise exact propagation; each step runs in its own rotating frame.
pub fn exact_evolve(
    sys: &System,
    init: &InitialState,
    schedule: &PulseSchedule,
    samples_per_step: usize,
) -> Result<FockTrajectory> {
    let n = sys.n();
    guard(n, 5)?;
    schedule.validate(n)?;
    let mut psi = initial_vector(sys, init)?;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut obs = vec![exact_observables(sys, &psi)];
    let mut drift = 0.0f64;
    let samples = samples_per_step.max(1);
    for step in &schedule.steps {
        let drive: Vec<C64> = step.mask.iter().map(|m| C64::new(m * step.rabi, 0.0)).collect();
        let e = hamiltonian_entries(&sys.chain, &sys.cband, &drive, -step.omega, None);
        let prop = Propagator::new(many_body_from_entries(&e, n));
        let dt = step.duration / samples as f64;
        let t_s = t;
        c_phase(&mut psi, n, step.omega * t_s);
        for k in 1..=samples {
            psi = prop.apply(&psi, dt);
            let tk = t_s + dt * k as f64;
            let mut lab = psi.clone();
            c_phase(&mut lab, n, -step.omega * tk);
            let o = exact_observables(sys, &lab);
            drift = drift.max((o.norm - 1.0).abs());
            times.push(tk);
            obs.push(o);
        }
        t = t_s + step.duration;
        c_phase(&mut psi, n, -step.omega * t);
    }
    Ok(FockTrajectory { times, observables: obs, state: psi, max_norm_drift: drift })
}

/// Largest deviation between the Majorana and Fock observables at shared samples.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct OracleReport {
    pub occupation: f64,
    pub coherence: f64,
    pub coherence_literal: f64,
    pub norm_drift: f64,
}

impl OracleReport {
    pub fn max(&self) -> f64 {
        self.occupation.max(self.coherence).max(self.coherence_literal)
    }
}

pub fn compare_with_dynamics(
    sys: &System,
    init: &InitialState,
    schedule: &PulseSchedule,
    samples_per_step: usize,
) -> Result<OracleReport> {
    let opts = crate::dynamics::EvolveOptions { samples_per_step, ..Default::default() };
    let maj = crate::dynamics::evolve(sys, init, schedule, &opts)?;
    let fock = exact_evolve(sys, init, schedule, samples_per_step)?;
    let mut rep = OracleReport { occupation: 0.0, coherence: 0.0, coherence_literal: 0.0, norm_drift: fock.max_norm_drift };
    for (k, o) in fock.observables.iter().enumerate() {
        rep.occupation = rep.occupation.max((o.occupation - maj.occupation[k]).abs());
        rep.coherence = rep.coherence.max((o.coherence - maj.coherence[k]).norm());
        rep.coherence_literal = rep.coherence_literal.max((o.coherence_literal - maj.coherence_literal[k]).norm());
    }
    Ok(rep)
}

/// Many-body energies of the undriven system and the same levels rebuilt from quasiparticles.
pub fn bdg_reconstruction_gap(sys: &System) -> Result<f64> {
    let n = sys.n();
    let step = PulseStep { mask: vec![0.0; n], rabi: 0.0, omega: 0.0, duration: 1.0 };
    let fock = spectrum(&build_many_body_hamiltonian(sys, &step, 0.0)?);
    let eps = crate::spectro::c_eigenmodes(&sys.cband)?.eps;
    let mut singles: Vec<f64> = sys.sol.energies.clone();
    singles.extend(eps.iter().cloned());
    let mut levels: Vec<f64> = (0..1usize << (2 * n))
        .map(|mask| (0..2 * n).filter(|b| mask >> b & 1 == 1).map(|b| singles[b]).sum())
        .collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let shift = fock[0] - levels[0];
    Ok(fock.iter().zip(&levels).map(|(f, l)| (f - l - shift).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdg::ChainSpec;
    use crate::spectro::{CBandSpec, Confinement};

    #[test]
    fn operators_are_canonical() {
        let ops = FockOperatorSet::new(2).unwrap();
        assert!(ops.anticommutator_defect() < 1e-12);
        assert!(ops.parity_a.iter().all(|p| p * p == 1.0));
    }

    #[test]
    fn two_site_ground_doublet() {
        let chain = ChainSpec::uniform(2, 1.0, 1.0, 0.0);
        let cband = CBandSpec::new(2, 0.5, 3.0, Confinement::HardWall);
        let sys = System::new(chain, cband).unwrap();
        let step = PulseStep { mask: vec![0.0; 2], rabi: 0.0, omega: 0.0, duration: 1.0 };
        let e = spectrum(&build_many_body_hamiltonian(&sys, &step, 0.0).unwrap());
        assert!((e[1] - e[0]).abs() < 1e-12);
        assert!(e[2] - e[1] > 0.5);
    }
}
