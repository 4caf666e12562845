//! Time evolution of the coupled a/c system under pulse schedules.
//!
//! Operators are tracked in the real Majorana basis w (two per fermion mode,
//! a modes first, then c modes). A Heisenberg map X on (a, a†, c, c†) is the
//! complex image of the real orthogonal map R on w.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::ops::serial::spmm_csr_dense;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::pattern::SparsityPattern;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::bdg::{blocks, diagonalize, BdGSolution, ChainSpec};
use crate::error::{Error, Result};
use crate::linalg::{expm, orthogonality_defect, pfaffian, C64};
use crate::spectro::CBandSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseStep {
    pub mask: Vec<f64>,
    pub rabi: f64,
    pub omega: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub steps: Vec<PulseStep>,
}

impl PulseSchedule {
    pub fn single(step: PulseStep) -> Self {
        PulseSchedule { steps: vec![step] }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidSpec("schedule has no steps".into()));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::InvalidSpec(format!("step {i}: duration must be positive")));
            }
            if s.mask.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "step {i}: mask has length {}, expected {n}",
                    s.mask.len()
                )));
            }
            if s.mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
                return Err(Error::InvalidSpec(format!("step {i}: mask weights must lie in [0, 1]")));
            }
            if !s.rabi.is_finite() || !s.omega.is_finite() {
                return Err(Error::InvalidSpec(format!("step {i}: rabi and omega must be finite")));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }

    /// Steps of `other` appended after these.
    pub fn then(mut self, other: &PulseSchedule) -> Self {
        self.steps.extend(other.steps.iter().cloned());
        self
    }
}

/// α|g−⟩ + β|g+⟩ with the c band empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub alpha: C64,
    pub beta: C64,
}

impl InitialState {
    pub fn minus() -> Self {
        InitialState { alpha: C64::new(1.0, 0.0), beta: C64::new(0.0, 0.0) }
    }

    pub fn plus() -> Self {
        InitialState { alpha: C64::new(0.0, 0.0), beta: C64::new(1.0, 0.0) }
    }

    /// (|g+⟩ + |g−⟩)/√2.
    pub fn equal() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        InitialState { alpha: C64::new(s, 0.0), beta: C64::new(s, 0.0) }
    }

    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let s = InitialState { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let nrm = self.alpha.norm_sqr() + self.beta.norm_sqr();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidSpec(format!("|alpha|^2 + |beta|^2 = {nrm}, expected 1")));
        }
        Ok(())
    }

    /// ⟨γ_edge⟩ at t = 0.
    pub fn coherence(&self) -> C64 {
        self.alpha.conj() * self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Target {
    GPlus,
    GMinus,
    /// alpha|g−⟩ + beta|g+⟩.
    Superposition { alpha: C64, beta: C64 },
}

impl Target {
    fn amplitudes(&self) -> (C64, C64) {
        match *self {
            Target::GPlus => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            Target::GMinus => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            Target::Superposition { alpha, beta } => {
                let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
                (alpha / n, beta / n)
            }
        }
    }
}

/// Heisenberg map in Majorana form, w(t) = R w(0).
#[derive(Debug, Clone)]
pub struct PropagatorFrame {
    pub r: DMatrix<f64>,
    pub t: f64,
    /// (t, Δ_j(t)) samples of self-consistent runs.
    pub delta_trace: Vec<(f64, Vec<C64>)>,
}

impl PropagatorFrame {
    pub fn identity(dim: usize) -> Self {
        PropagatorFrame { r: DMatrix::identity(dim, dim), t: 0.0, delta_trace: Vec::new() }
    }

    /// X in the operator basis (a, a†, c, c†): O(t) = X O(0).
    pub fn x_matrix(&self) -> DMatrix<C64> {
        let m = self.r.nrows() / 2;
        let w = w_matrix(m);
        let rc = self.r.map(|x| C64::new(x, 0.0));
        &w * rc * w.adjoint() * C64::new(2.0, 0.0)
    }

    /// max |X Σ Xᵀ − Σ| for the pairing form Σ that swaps f and f†.
    pub fn canonical_defect(&self) -> f64 {
        orthogonality_defect(&self.r)
    }
}

/// O = W w for m fermion modes laid out as (f, f†) per band.
pub fn w_matrix(m: usize) -> DMatrix<C64> {
    let n = m / 2;
    let mut w = DMatrix::zeros(2 * m, 2 * m);
    for p in 0..2 * m {
        let (mode, creator) = op_mode(p, n);
        w[(p, 2 * mode)] = C64::new(0.5, 0.0);
        w[(p, 2 * mode + 1)] = C64::new(0.0, if creator { -0.5 } else { 0.5 });
    }
    w
}

/// Mode index and creator flag of operator index p in (a, a†, c, c†).
fn op_mode(p: usize, n: usize) -> (usize, bool) {
    match p / n {
        0 => (p, false),
        1 => (p - n, true),
        2 => (p - n, false),
        _ => (p - 2 * n, true),
    }
}

fn w_entry(p: usize, n: usize, alpha: usize) -> C64 {
    let (_, creator) = op_mode(p, n);
    if alpha == 0 {
        C64::new(0.5, 0.0)
    } else if creator {
        C64::new(0.0, -0.5)
    } else {
        C64::new(0.0, 0.5)
    }
}

/// Push the Majorana generator entries of one 𝓗 entry.
fn push_majorana(out: &mut Vec<(usize, usize, f64)>, p: usize, q: usize, h: C64, n: usize) {
    let (mp, _) = op_mode(p, n);
    let (mq, _) = op_mode(q, n);
    for al in 0..2 {
        for be in 0..2 {
            let m = w_entry(p, n, al).conj() * h * w_entry(q, n, be);
            if m.im != 0.0 {
                out.push((2 * mp + al, 2 * mq + be, 2.0 * m.im));
            }
        }
    }
}

/// Nonzero entries (p, q, 𝓗_pq) of the single-particle matrix.
///
/// `drive` gives the per-site c†a coupling; `c_shift` is added to the c on-site energy;
/// `pairing` overrides the bond Δ with complex values.
pub fn hamiltonian_entries(
    chain: &ChainSpec,
    cband: &CBandSpec,
    drive: &[C64],
    c_shift: f64,
    pairing: Option<&[C64]>,
) -> Vec<(usize, usize, C64)> {
    let n = chain.n;
    let (h, d) = blocks(chain);
    let hc = cband.hamiltonian();
    let mut out = Vec::new();
    let re = |x: f64| C64::new(x, 0.0);
    for i in 0..n {
        for j in 0..n {
            if h[(i, j)] != 0.0 {
                out.push((i, j, re(h[(i, j)])));
                out.push((n + i, n + j, re(-h[(i, j)])));
            }
            let cij = hc[(i, j)] + if i == j { c_shift } else { 0.0 };
            if cij != 0.0 {
                out.push((2 * n + i, 2 * n + j, re(cij)));
                out.push((3 * n + i, 3 * n + j, re(-cij)));
            }
        }
    }
    match pairing {
        None => {
            for i in 0..n {
                for j in 0..n {
                    if d[(i, j)] != 0.0 {
                        out.push((i, n + j, re(d[(i, j)])));
                        out.push((n + i, j, re(-d[(i, j)])));
                    }
                }
            }
        }
        Some(delta) => pairing_entries(&mut out, chain, delta),
    }
    for (j, &g) in drive.iter().enumerate() {
        if g != C64::new(0.0, 0.0) {
            out.push((2 * n + j, j, g));
            out.push((j, 2 * n + j, g.conj()));
            out.push((n + j, 3 * n + j, -g));
            out.push((3 * n + j, n + j, -g.conj()));
        }
    }
    out
}

fn pairing_entries(out: &mut Vec<(usize, usize, C64)>, chain: &ChainSpec, delta: &[C64]) {
    let n = chain.n;
    for (b, &dl) in delta.iter().enumerate() {
        if chain.barriers.contains(&(b + 1)) || dl == C64::new(0.0, 0.0) {
            continue;
        }
        out.push((b, n + b + 1, -dl));
        out.push((b + 1, n + b, dl));
        out.push((n + b, b + 1, dl.conj()));
        out.push((n + b + 1, b, -dl.conj()));
    }
}

fn drive_vector(step: &PulseStep, phase: C64) -> Vec<C64> {
    step.mask.iter().map(|m| phase * (m * step.rabi)).collect()
}

/// 4N×4N single-particle matrix 𝓗(t) in the lab frame, i dO/dt = 𝓗 O.
pub fn build_generator(
    chain: &ChainSpec,
    cband: &CBandSpec,
    step: &PulseStep,
    t: f64,
) -> Result<DMatrix<C64>> {
    check_geometry(chain, cband)?;
    if step.mask.len() != chain.n {
        return Err(Error::Dimension(format!(
            "mask has length {}, chain has {} sites",
            step.mask.len(),
            chain.n
        )));
    }
    let n = chain.n;
    let drive = drive_vector(step, C64::from_polar(1.0, -step.omega * t));
    let mut h = DMatrix::zeros(4 * n, 4 * n);
    for (p, q, v) in hamiltonian_entries(chain, cband, &drive, 0.0, None) {
        h[(p, q)] += v;
    }
    Ok(h)
}

fn check_geometry(chain: &ChainSpec, cband: &CBandSpec) -> Result<()> {
    chain.validate()?;
    cband.validate()?;
    if chain.n != cband.n {
        return Err(Error::Dimension(format!(
            "chain has {} sites, c band has {}",
            chain.n, cband.n
        )));
    }
    Ok(())
}

/// Real antisymmetric generator A with dw/dt = A w.
pub fn majorana_generator(entries: &[(usize, usize, C64)], n: usize) -> DMatrix<f64> {
    let mut trip = Vec::with_capacity(entries.len() * 4);
    for &(p, q, h) in entries {
        push_majorana(&mut trip, p, q, h, n);
    }
    let mut a = DMatrix::zeros(4 * n, 4 * n);
    for (i, j, v) in trip {
        a[(i, j)] += v;
    }
    a
}

/// Rotate the c Majorana pairs of the rows of `m` by angle θ.
fn rotate_c_rows(m: &mut DMatrix<f64>, n: usize, theta: f64) {
    if theta == 0.0 {
        return;
    }
    let (s, c) = theta.sin_cos();
    for mode in n..2 * n {
        let (e, o) = (2 * mode, 2 * mode + 1);
        for col in 0..m.ncols() {
            let (x, y) = (m[(e, col)], m[(o, col)]);
            m[(e, col)] = c * x + s * y;
            m[(o, col)] = -s * x + c * y;
        }
    }
}

/// Chain, c band and the quasiparticle data needed for edge observables.
#[derive(Debug, Clone)]
pub struct System {
    pub chain: ChainSpec,
    pub cband: CBandSpec,
    pub sol: BdGSolution,
}

impl System {
    pub fn new(chain: ChainSpec, cband: CBandSpec) -> Result<Self> {
        check_geometry(&chain, &cband)?;
        let sol = diagonalize(&chain)?;
        if !sol.zero_mode_present {
            return Err(Error::NoZeroMode);
        }
        Ok(System { chain, cband, sol })
    }

    pub fn n(&self) -> usize {
        self.chain.n
    }

    pub fn dim(&self) -> usize {
        4 * self.chain.n
    }

    /// γ_edge = Σ_a e_a w_a, optionally with the a coefficients rotated by e^{∓iθ}.
    pub fn gamma_vec(&self, theta: f64) -> DVector<C64> {
        let n = self.n();
        let mut e = DVector::zeros(4 * n);
        let ph = C64::from_polar(1.0, -theta);
        for j in 0..n {
            let c1 = ph * self.sol.u[(j, 0)];
            let c2 = ph.conj() * self.sol.v[(j, 0)];
            e[2 * j] = (c1 + c2) * 0.5;
            e[2 * j + 1] = (c1 - c2) * C64::new(0.0, 0.5);
        }
        e
    }

    /// Rows η = T w of the quasiparticle Majoranas (c modes untouched).
    pub fn qp_transform(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut t = DMatrix::zeros(4 * n, 4 * n);
        for nu in 0..n {
            for j in 0..n {
                let (u, v) = (self.sol.u[(j, nu)], self.sol.v[(j, nu)]);
                t[(2 * nu, 2 * j)] = u + v;
                t[(2 * nu + 1, 2 * j + 1)] = u - v;
            }
        }
        for k in 4 * n / 2..4 * n {
            t[(k, k)] = 1.0;
        }
        t
    }

    /// Covariance G_ab with ⟨w_a w_b⟩ = δ_ab + i G_ab, and the mean ⟨w⟩.
    pub fn initial_tables(&self, init: &InitialState) -> (DMatrix<f64>, DVector<f64>) {
        let dim = self.dim();
        let mut g = DMatrix::zeros(dim, dim);
        for m in 0..dim / 2 {
            g[(2 * m, 2 * m + 1)] = 1.0;
            g[(2 * m + 1, 2 * m)] = -1.0;
        }
        let occ = init.beta.norm_sqr();
        g[(0, 1)] = 1.0 - 2.0 * occ;
        g[(1, 0)] = -(1.0 - 2.0 * occ);
        let mut l = DVector::zeros(dim);
        let c = init.coherence();
        l[0] = 2.0 * c.re;
        l[1] = 2.0 * c.im;
        let t = self.qp_transform();
        (t.transpose() * g * &t, t.transpose() * l)
    }

    /// Initial tables in the operator basis: L_m = ⟨O_m⟩, Q_mn = ⟨O_m O_n⟩.
    pub fn operator_tables(&self, init: &InitialState) -> (DVector<C64>, DMatrix<C64>) {
        let (g, l) = self.initial_tables(init);
        let dim = self.dim();
        let w = w_matrix(dim / 2);
        let corr = DMatrix::from_fn(dim, dim, |a, b| {
            if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, g[(a, b)]) }
        });
        let lc = l.map(|x| C64::new(x, 0.0));
        (&w * lc, &w * corr * w.transpose())
    }
}

/// How proximity runs are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Integrator {
    /// Exact exponentials of the constant rotating-frame generator, step by step.
    RotatingExact,
    /// Lab-frame midpoint exponentials with one halving retry.
    LabMidpoint { dt: Option<f64>, tol: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOptions {
    pub integrator: Integrator,
    /// Output samples per pulse step.
    pub samples_per_step: usize,
    pub target: Option<Target>,
    /// Evaluate the c-parity-framed coherence (one Pfaffian per sample).
    pub framed_coherence: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            integrator: Integrator::RotatingExact,
            samples_per_step: 200,
            target: None,
            framed_coherence: true,
        }
    }
}

/// Observable traces of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// ⟨γ†γ⟩
    pub occupation: Vec<f64>,
    /// ⟨P_c γ⟩, the qubit coherence with the c-band parity factored in.
    pub coherence: Vec<C64>,
    /// ⟨γ⟩
    pub coherence_literal: Vec<C64>,
    pub fidelity: Vec<f64>,
    /// ⟨γγ†⟩ with γ rotated by half the mean pairing phase (self-consistent runs).
    pub occupation_gauged: Vec<f64>,
    pub number_total: Vec<f64>,
    /// max |R Rᵀ − I|, or |G Gᵀ − I| of the covariance when R is not tracked.
    pub canonical_defect: f64,
    pub number_drift: Option<f64>,
    /// max |R G0 Rᵀ − G| (self-consistent runs).
    pub propagator_residual: Option<f64>,
    pub dt: Option<f64>,
    #[serde(skip)]
    pub frame: PropagatorFrame,
}

impl Trajectory {
    pub fn final_occupation(&self) -> f64 {
        *self.occupation.last().unwrap_or(&f64::NAN)
    }

    pub fn final_coherence(&self) -> C64 {
        *self.coherence.last().unwrap_or(&C64::new(f64::NAN, 0.0))
    }

    pub fn final_fidelity(&self) -> Option<f64> {
        self.fidelity.last().cloned()
    }

    /// Mean of ⟨γγ†⟩ (gauged) over the trailing `frac` of the run.
    pub fn tail_mean_empty(&self, frac: f64) -> f64 {
        let t_end = *self.times.last().unwrap_or(&0.0);
        let t0 = t_end * (1.0 - frac);
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.occupation_gauged)
            .filter(|(t, _)| **t >= t0 - 1e-12)
            .map(|(_, v)| *v)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

/// ⟨γ†γ⟩ at time t from the frame.
pub fn edge_occupation(frame: &PropagatorFrame, sys: &System, init: &InitialState) -> Result<f64> {
    if !sys.sol.zero_mode_present {
        return Err(Error::NoZeroMode);
    }
    let (g0, _) = sys.initial_tables(init);
    Ok(occupation_from(&frame.r, &g0, &sys.gamma_vec(0.0)))
}

/// ⟨γ⟩ at time t from the frame.
pub fn edge_coherence(frame: &PropagatorFrame, sys: &System, init: &InitialState) -> Result<C64> {
    let (_, l0) = sys.initial_tables(init);
    let v = rt_times(&frame.r, &sys.gamma_vec(0.0));
    Ok(v.iter().zip(l0.iter()).map(|(a, b)| a * b).sum())
}

/// ⟨P_c γ⟩ at time t from the frame.
pub fn edge_coherence_framed(frame: &PropagatorFrame, sys: &System, init: &InitialState) -> C64 {
    framed_coherence(&frame.r, sys, init, &vacuum_cov(sys))
}

/// Fidelity of the reduced qubit state against `target`.
pub fn fidelity(frame: &PropagatorFrame, sys: &System, init: &InitialState, target: Target) -> Result<f64> {
    let occ = edge_occupation(frame, sys, init)?;
    let coh = edge_coherence_framed(frame, sys, init);
    Ok(fidelity_from(occ, coh, target))
}

pub fn fidelity_from(occupation: f64, coherence: C64, target: Target) -> f64 {
    let (a, b) = target.amplitudes();
    let f2 = a.norm_sqr() * (1.0 - occupation)
        + b.norm_sqr() * occupation
        + 2.0 * (a * b.conj() * coherence).re;
    f2.max(0.0).sqrt()
}

fn rt_times(r: &DMatrix<f64>, e: &DVector<C64>) -> DVector<C64> {
    let dim = r.nrows();
    DVector::from_fn(dim, |b, _| (0..dim).map(|a| e[a] * r[(a, b)]).sum())
}

fn occupation_from(r: &DMatrix<f64>, g0: &DMatrix<f64>, e: &DVector<C64>) -> f64 {
    let v = rt_times(r, e);
    quad(&v.map(|z| z.conj()), g0, &v).re
}

/// xᵀ (1 + iG) y
fn quad(x: &DVector<C64>, g: &DMatrix<f64>, y: &DVector<C64>) -> C64 {
    let dim = x.len();
    let mut s = C64::new(0.0, 0.0);
    for a in 0..dim {
        if x[a] == C64::new(0.0, 0.0) {
            continue;
        }
        let mut row = y[a];
        for b in 0..dim {
            if g[(a, b)] != 0.0 {
                row += C64::new(0.0, g[(a, b)]) * y[b];
            }
        }
        s += x[a] * row;
    }
    s
}

fn vacuum_cov(sys: &System) -> DMatrix<f64> {
    sys.initial_tables(&InitialState::minus()).0
}

/// ⟨ψ| P_c(t) γ(t) |ψ⟩ by Wick contraction in the vacuum.
fn framed_coherence(r: &DMatrix<f64>, sys: &System, init: &InitialState, gvac: &DMatrix<f64>) -> C64 {
    let ab = init.alpha.conj() * init.beta;
    if ab.norm() == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let n = sys.n();
    let dim = sys.dim();
    let e = sys.gamma_vec(0.0);
    let gamma_t = rt_times(r, &e);
    let mut pc_rows: Vec<DVector<C64>> = Vec::with_capacity(2 * n);
    for mode in n..2 * n {
        for k in 0..2 {
            pc_rows.push(DVector::from_fn(dim, |b, _| C64::new(r[(2 * mode + k, b)], 0.0)));
        }
    }
    let pref = C64::new(0.0, -1.0).powi(n as i32);
    let e_bar = e.map(|z| z.conj());

    let mut first: Vec<DVector<C64>> = pc_rows.clone();
    first.push(gamma_t.clone());
    first.push(e_bar);
    let mut second: Vec<DVector<C64>> = vec![e];
    second.extend(pc_rows);
    second.push(gamma_t);

    let t1 = wick(&first, gvac);
    let t2 = wick(&second, gvac);
    pref * (ab * t1 + ab.conj() * t2)
}

fn wick(xs: &[DVector<C64>], g: &DMatrix<f64>) -> C64 {
    let k = xs.len();
    let dim = g.nrows();
    let x = DMatrix::from_fn(k, dim, |i, a| xs[i][a]);
    let corr = DMatrix::from_fn(dim, dim, |a, b| {
        if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, g[(a, b)]) }
    });
    let full = &x * corr * x.transpose();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            m[(i, j)] = full[(i, j)];
            m[(j, i)] = -full[(i, j)];
        }
    }
    pfaffian(&m)
}

fn energy_scale(chain: &ChainSpec, cband: &CBandSpec, schedule: &PulseSchedule) -> (f64, f64) {
    let dmax = chain.delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let omax = schedule.steps.iter().fold(0.0f64, |m, s| m.max(s.rabi.abs()));
    let scale = chain.j.abs().max(dmax).max(omax).max(cband.jc.abs()).max(1e-300);
    let shortest = schedule.steps.iter().fold(f64::INFINITY, |m, s| m.min(s.duration));
    (scale, shortest)
}

/// Default step: min(1/(50·max(J, Δ, Ω, J_c)), duration/200).
pub fn default_dt(chain: &ChainSpec, cband: &CBandSpec, schedule: &PulseSchedule) -> f64 {
    let (scale, shortest) = energy_scale(chain, cband, schedule);
    (1.0 / (50.0 * scale)).min(shortest / 200.0)
}

/// Default RK4 step of self-consistent runs: min(1/(10·max(J, Δ, Ω, J_c)), duration/200).
pub fn selfconsistent_dt(chain: &ChainSpec, cband: &CBandSpec, schedule: &PulseSchedule) -> f64 {
    let (scale, shortest) = energy_scale(chain, cband, schedule);
    (1.0 / (10.0 * scale)).min(shortest / 200.0)
}

struct Sampler<'a> {
    sys: &'a System,
    init: InitialState,
    opts: EvolveOptions,
    g0: DMatrix<f64>,
    l0: DVector<f64>,
    gvac: DMatrix<f64>,
    e: DVector<C64>,
    traj: Trajectory,
}

impl<'a> Sampler<'a> {
    fn new(sys: &'a System, init: InitialState, opts: EvolveOptions) -> Self {
        let (g0, l0) = sys.initial_tables(&init);
        Sampler {
            sys,
            init,
            opts,
            g0,
            l0,
            gvac: vacuum_cov(sys),
            e: sys.gamma_vec(0.0),
            traj: Trajectory {
                times: Vec::new(),
                occupation: Vec::new(),
                coherence: Vec::new(),
                coherence_literal: Vec::new(),
                fidelity: Vec::new(),
                occupation_gauged: Vec::new(),
                number_total: Vec::new(),
                canonical_defect: 0.0,
                number_drift: None,
                propagator_residual: None,
                dt: None,
                frame: PropagatorFrame::identity(sys.dim()),
            },
        }
    }

    fn record(&mut self, t: f64, r: &DMatrix<f64>) {
        let occ = occupation_from(r, &self.g0, &self.e);
        let v = rt_times(r, &self.e);
        let lit: C64 = v.iter().zip(self.l0.iter()).map(|(a, b)| a * b).sum();
        let coh = if self.opts.framed_coherence {
            framed_coherence(r, self.sys, &self.init, &self.gvac)
        } else {
            lit
        };
        self.traj.times.push(t);
        self.traj.occupation.push(occ);
        self.traj.coherence.push(coh);
        self.traj.coherence_literal.push(lit);
        if let Some(target) = self.opts.target {
            self.traj.fidelity.push(fidelity_from(occ, coh, target));
        }
        self.traj.canonical_defect = self.traj.canonical_defect.max(orthogonality_defect(r));
    }
}

/// Proximity run: fixed Δ, quadratic Hamiltonian.
pub fn evolve(
    sys: &System,
    init: &InitialState,
    schedule: &PulseSchedule,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    init.validate()?;
    schedule.validate(sys.n())?;
    if opts.samples_per_step == 0 {
        return Err(Error::InvalidSpec("samples_per_step must be positive".into()));
    }
    match opts.integrator {
        Integrator::RotatingExact => evolve_rotating(sys, init, schedule, opts),
        Integrator::LabMidpoint { dt, tol } => {
            let dt0 = dt.unwrap_or_else(|| default_dt(&sys.chain, &sys.cband, schedule));
            let coarse = evolve_midpoint(sys, init, schedule, opts, dt0)?;
            let mut fine = evolve_midpoint(sys, init, schedule, opts, dt0 / 2.0)?;
            let gap = trajectory_gap(&coarse, &fine);
            if gap <= tol {
                return Ok(fine);
            }
            let finer = evolve_midpoint(sys, init, schedule, opts, dt0 / 4.0)?;
            let gap2 = trajectory_gap(&fine, &finer);
            if gap2 <= tol {
                fine = finer;
                return Ok(fine);
            }
            Err(Error::Numerical(format!(
                "midpoint step halving did not reach tol {tol:e}: changes {gap:e} then {gap2:e} at dt = {:e}",
                dt0 / 4.0
            )))
        }
    }
}

fn trajectory_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut g = 0.0f64;
    for (x, y) in a.occupation.iter().zip(&b.occupation) {
        g = g.max((x - y).abs());
    }
    for (x, y) in a.coherence.iter().zip(&b.coherence) {
        g = g.max((x - y).norm());
    }
    g
}

fn step_generator(chain: &ChainSpec, cband: &CBandSpec, step: &PulseStep) -> DMatrix<f64> {
    let drive = drive_vector(step, C64::new(1.0, 0.0));
    let entries = hamiltonian_entries(chain, cband, &drive, -step.omega, None);
    majorana_generator(&entries, chain.n)
}

/// Lab-frame map of a whole schedule, one exponential per step.
///
/// Works for any geometry, including chains split by barriers.
pub fn propagate(chain: &ChainSpec, cband: &CBandSpec, schedule: &PulseSchedule) -> Result<PropagatorFrame> {
    check_geometry(chain, cband)?;
    schedule.validate(chain.n)?;
    let n = chain.n;
    let mut r = DMatrix::<f64>::identity(4 * n, 4 * n);
    let mut t = 0.0;
    for step in &schedule.steps {
        let a = step_generator(chain, cband, step);
        rotate_c_rows(&mut r, n, -step.omega * t);
        r = expm(&(a * step.duration)) * r;
        t += step.duration;
        rotate_c_rows(&mut r, n, step.omega * t);
    }
    check_finite(&r)?;
    Ok(PropagatorFrame { r, t, delta_trace: Vec::new() })
}

fn evolve_rotating(
    sys: &System,
    init: &InitialState,
    schedule: &PulseSchedule,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let n = sys.n();
    let mut smp = Sampler::new(sys, *init, *opts);
    let mut r = DMatrix::<f64>::identity(sys.dim(), sys.dim());
    let mut t = 0.0;
    smp.record(t, &r);
    for step in &schedule.steps {
        let a = step_generator(&sys.chain, &sys.cband, step);
        let dt = step.duration / opts.samples_per_step as f64;
        let e = expm(&(&a * dt));
        let mut start = r.clone();
        rotate_c_rows(&mut start, n, -step.omega * t);
        let t_s = t;
        let mut inner = start;
        for k in 1..=opts.samples_per_step {
            inner = &e * inner;
            let tk = t_s + dt * k as f64;
            let mut lab = inner.clone();
            rotate_c_rows(&mut lab, n, step.omega * tk);
            if k == opts.samples_per_step {
                r = lab.clone();
            }
            smp.record(tk, &lab);
        }
        t = t_s + step.duration;
    }
    check_finite(&r)?;
    smp.traj.frame = PropagatorFrame { r, t, delta_trace: Vec::new() };
    Ok(smp.traj)
}

fn evolve_midpoint(
    sys: &System,
    init: &InitialState,
    schedule: &PulseSchedule,
    opts: &EvolveOptions,
    dt_max: f64,
) -> Result<Trajectory> {
    let n = sys.n();
    let mut smp = Sampler::new(sys, *init, *opts);
    let mut r = DMatrix::<f64>::identity(sys.dim(), sys.dim());
    let mut t = 0.0;
    smp.record(t, &r);
    for step in &schedule.steps {
        let interval = step.duration / opts.samples_per_step as f64;
        let sub = (interval / dt_max).ceil().max(1.0) as usize;
        let h = interval / sub as f64;
        let t_s = t;
        for k in 0..opts.samples_per_step {
            for s in 0..sub {
                let tm = t_s + interval * k as f64 + h * (s as f64 + 0.5);
                let drive = drive_vector(step, C64::from_polar(1.0, -step.omega * tm));
                let entries = hamiltonian_entries(&sys.chain, &sys.cband, &drive, 0.0, None);
                let a = majorana_generator(&entries, n);
                r = expm(&(a * h)) * r;
            }
            smp.record(t_s + interval * (k + 1) as f64, &r);
        }
        t = t_s + step.duration;
    }
    check_finite(&r)?;
    smp.traj.dt = Some(dt_max);
    smp.traj.frame = PropagatorFrame { r, t, delta_trace: Vec::new() };
    Ok(smp.traj)
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("propagator contains non-finite entries".into()))
    }
}

/// Options of self-consistent runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfConsistentOptions {
    pub dt: Option<f64>,
    /// Output every this many steps (0 picks ~400 samples).
    pub sample_every: usize,
    /// Build R alongside the covariance from exact midpoint exponentials.
    pub track_propagator: bool,
    pub target: Option<Target>,
}

impl Default for SelfConsistentOptions {
    fn default() -> Self {
        SelfConsistentOptions {
            dt: None,
            sample_every: 0,
            track_propagator: false,
            target: Some(Target::GMinus),
        }
    }
}

/// A(Δ) = A_static + Σ_b (Re Δ_b P_b + Im Δ_b Q_b), stored on one sparsity pattern.
struct PairedGenerator {
    csr: CsrMatrix<f64>,
    base: Vec<f64>,
    bonds: Vec<Vec<(usize, f64, f64)>>,
}

impl PairedGenerator {
    fn new(sys: &System, step: &PulseStep) -> Result<Self> {
        let n = sys.n();
        let drive = drive_vector(step, C64::new(1.0, 0.0));
        let zero = vec![C64::new(0.0, 0.0); n - 1];
        let entries = hamiltonian_entries(&sys.chain, &sys.cband, &drive, -step.omega, Some(&zero));
        let mut stat = Vec::new();
        for &(p, q, h) in &entries {
            push_majorana(&mut stat, p, q, h, n);
        }
        let mut per_bond = Vec::with_capacity(n - 1);
        for b in 0..n - 1 {
            let mut one = vec![C64::new(0.0, 0.0); n - 1];
            let mut parts = Vec::new();
            for (k, unit) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)].into_iter().enumerate() {
                one[b] = unit;
                let mut ent = Vec::new();
                pairing_entries(&mut ent, &sys.chain, &one);
                let mut trip = Vec::new();
                for (p, q, h) in ent {
                    push_majorana(&mut trip, p, q, h, n);
                }
                parts.push((k, trip));
            }
            per_bond.push(parts);
        }
        let dim = 4 * n;
        let mut keys: Vec<(usize, usize)> = stat.iter().map(|&(i, j, _)| (i, j)).collect();
        for parts in &per_bond {
            for (_, trip) in parts {
                keys.extend(trip.iter().map(|&(i, j, _)| (i, j)));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        let mut offsets = vec![0usize; dim + 1];
        for &(i, _) in &keys {
            offsets[i + 1] += 1;
        }
        for i in 0..dim {
            offsets[i + 1] += offsets[i];
        }
        let cols: Vec<usize> = keys.iter().map(|&(_, j)| j).collect();
        let pattern = SparsityPattern::try_from_offsets_and_indices(dim, dim, offsets, cols)
            .map_err(|e| Error::Numerical(format!("sparsity pattern: {e}")))?;
        let idx = |i: usize, j: usize| keys.binary_search(&(i, j)).expect("key present");
        let mut base = vec![0.0; keys.len()];
        for (i, j, v) in stat {
            base[idx(i, j)] += v;
        }
        let mut bonds = Vec::with_capacity(n - 1);
        for parts in per_bond {
            let mut acc: Vec<(usize, f64, f64)> = Vec::new();
            for (k, trip) in parts {
                for (i, j, v) in trip {
                    let id = idx(i, j);
                    match acc.iter_mut().find(|e| e.0 == id) {
                        Some(e) => {
                            if k == 0 { e.1 += v } else { e.2 += v }
                        }
                        None => acc.push(if k == 0 { (id, v, 0.0) } else { (id, 0.0, v) }),
                    }
                }
            }
            bonds.push(acc);
        }
        let csr = CsrMatrix::try_from_pattern_and_values(pattern, base.clone())
            .map_err(|e| Error::Numerical(format!("generator assembly: {e}")))?;
        Ok(PairedGenerator { csr, base, bonds })
    }

    fn set_pairing(&mut self, delta: &[C64]) {
        let vals = self.csr.values_mut();
        vals.copy_from_slice(&self.base);
        for (b, terms) in self.bonds.iter().enumerate() {
            let d = delta[b];
            for &(id, cr, ci) in terms {
                vals[id] += d.re * cr + d.im * ci;
            }
        }
    }

    /// e^{hA} M from a scaled Taylor series.
    fn exp_action(&self, h: f64, m: &DMatrix<f64>, work: &mut DMatrix<f64>) -> DMatrix<f64> {
        let mut rows = vec![0.0f64; self.csr.nrows()];
        for (i, _, v) in self.csr.triplet_iter() {
            rows[i] += v.abs();
        }
        let norm = h * rows.iter().cloned().fold(0.0, f64::max);
        let s = norm.ceil().max(1.0) as usize;
        let tau = h / s as f64;
        let mut out = m.clone();
        for _ in 0..s {
            let mut term = out.clone();
            for k in 1..60 {
                spmm_csr_dense(0.0, &mut *work, tau / k as f64, Op::NoOp(&self.csr), Op::NoOp(&term));
                std::mem::swap(&mut term, work);
                out += &term;
                if term.amax() <= 1e-15 * out.amax() {
                    break;
                }
            }
        }
        out
    }

    /// AG − (AG)ᵀ
    fn flow(&self, g: &DMatrix<f64>, work: &mut DMatrix<f64>) -> DMatrix<f64> {
        spmm_csr_dense(0.0, &mut *work, 1.0, Op::NoOp(&self.csr), Op::NoOp(g));
        &*work - work.transpose()
    }
}

/// ⟨a_{j+1} a_j⟩ on every bond from the covariance.
pub fn pair_correlator_from_cov(g: &DMatrix<f64>, n: usize) -> Vec<C64> {
    (0..n - 1)
        .map(|j| {
            let (e0, o0, e1, o1) = (2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3);
            C64::new(-g[(e1, o0)] - g[(o1, e0)], g[(e1, e0)] - g[(o1, o0)]) * 0.25
        })
        .collect()
}

fn pairing_from_cov(g: &DMatrix<f64>, chain: &ChainSpec, v: f64) -> Vec<C64> {
    pair_correlator_from_cov(g, chain.n)
        .into_iter()
        .enumerate()
        .map(|(b, c)| if chain.barriers.contains(&(b + 1)) { C64::new(0.0, 0.0) } else { c * (-v) })
        .collect()
}

fn total_number(g: &DMatrix<f64>) -> f64 {
    (0..g.nrows() / 2).map(|m| 0.5 * (1.0 - g[(2 * m, 2 * m + 1)])).sum()
}

/// Rotate the c Majorana pairs of both sides of a covariance.
fn rotate_cov(g: &mut DMatrix<f64>, n: usize, theta: f64) {
    rotate_c_rows(g, n, theta);
    let mut gt = g.transpose();
    rotate_c_rows(&mut gt, n, theta);
    *g = gt.transpose();
}

/// Coupled-wire run: Δ_j(t) = −V ⟨a_{j+1} a_j⟩(t), RK4 on the covariance.
pub fn evolve_selfconsistent(
    sys: &System,
    v: f64,
    init: &InitialState,
    schedule: &PulseSchedule,
    opts: &SelfConsistentOptions,
) -> Result<Trajectory> {
    init.validate()?;
    schedule.validate(sys.n())?;
    if !(v < 0.0) {
        return Err(Error::NoPairing(v));
    }
    if init.coherence().norm() > 0.0 {
        return Err(Error::Contract(
            "self-consistent runs start from a parity eigenstate".into(),
        ));
    }
    let n = sys.n();
    let dim = sys.dim();
    let dt_max = opts.dt.unwrap_or_else(|| selfconsistent_dt(&sys.chain, &sys.cband, schedule));
    if !(dt_max > 0.0) {
        return Err(Error::InvalidSpec("dt must be positive".into()));
    }
    let (g_init, _) = sys.initial_tables(init);
    let mut g_lab = g_init.clone();
    let mut r_lab = DMatrix::<f64>::identity(dim, dim);
    let e_fixed = sys.gamma_vec(0.0);
    let n0 = total_number(&g_lab);
    let mut traj = Sampler::new(sys, *init, EvolveOptions::default()).traj;
    let mut delta_trace = Vec::new();
    let mut work = DMatrix::zeros(dim, dim);
    let mut t = 0.0;
    let mut cov_defect = orthogonality_defect(&g_lab);

    let record = |t: f64, g: &DMatrix<f64>, delta: &[C64], traj: &mut Trajectory| {
        let occ = quad(&e_fixed.map(|z| z.conj()), g, &e_fixed).re;
        let mean: C64 = delta.iter().sum::<C64>() / delta.len().max(1) as f64;
        let theta = 0.5 * mean.arg();
        let eg = sys.gamma_vec(theta);
        let empty = quad(&eg, g, &eg.map(|z| z.conj())).re;
        traj.times.push(t);
        traj.occupation.push(occ);
        traj.coherence.push(C64::new(0.0, 0.0));
        traj.coherence_literal.push(C64::new(0.0, 0.0));
        traj.occupation_gauged.push(empty);
        traj.number_total.push(total_number(g));
        if let Some(target) = opts.target {
            let p_plus = 1.0 - empty;
            traj.fidelity.push(fidelity_from(p_plus, C64::new(0.0, 0.0), target));
        }
    };

    let d0 = pairing_from_cov(&g_lab, &sys.chain, v);
    record(0.0, &g_lab, &d0, &mut traj);
    delta_trace.push((0.0, d0));

    for step in &schedule.steps {
        let mut gen = PairedGenerator::new(sys, step)?;
        let steps = (step.duration / dt_max).ceil().max(1.0) as usize;
        let h = step.duration / steps as f64;
        let every = if opts.sample_every == 0 { (steps / 400).max(1) } else { opts.sample_every };
        let t_s = t;
        let mut g = g_lab.clone();
        rotate_cov(&mut g, n, -step.omega * t_s);
        let mut r_rot = DMatrix::<f64>::identity(dim, dim);
        for k in 1..=steps {
            let g_prev = opts.track_propagator.then(|| g.clone());
            let dl = pairing_from_cov(&g, &sys.chain, v);
            gen.set_pairing(&dl);
            let k1 = gen.flow(&g, &mut work);
            let g2 = &g + &k1 * (0.5 * h);
            gen.set_pairing(&pairing_from_cov(&g2, &sys.chain, v));
            let k2 = gen.flow(&g2, &mut work);
            let g3 = &g + &k2 * (0.5 * h);
            gen.set_pairing(&pairing_from_cov(&g3, &sys.chain, v));
            let k3 = gen.flow(&g3, &mut work);
            let g4 = &g + &k3 * h;
            gen.set_pairing(&pairing_from_cov(&g4, &sys.chain, v));
            let k4 = gen.flow(&g4, &mut work);
            g = &g + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            if let Some(prev) = g_prev {
                gen.set_pairing(&pairing_from_cov(&((prev + &g) * 0.5), &sys.chain, v));
                r_rot = gen.exp_action(h, &r_rot, &mut work);
            }
            if k % every == 0 || k == steps {
                let tk = t_s + h * k as f64;
                let mut g_out = g.clone();
                rotate_cov(&mut g_out, n, step.omega * tk);
                let dl = pairing_from_cov(&g, &sys.chain, v);
                record(tk, &g_out, &dl, &mut traj);
                delta_trace.push((tk, dl));
            }
        }
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("covariance diverged".into()));
        }
        t = t_s + step.duration;
        let mut g_end = g;
        rotate_cov(&mut g_end, n, step.omega * t);
        cov_defect = cov_defect.max(orthogonality_defect(&g_end));
        g_lab = g_end;
        if opts.track_propagator {
            let mut start = r_lab.clone();
            rotate_c_rows(&mut start, n, -step.omega * t_s);
            let mut next = &r_rot * start;
            rotate_c_rows(&mut next, n, step.omega * t);
            r_lab = next;
        }
        traj.dt = Some(h);
    }
    let drift = traj.number_total.iter().fold(0.0f64, |m, x| m.max((x - n0).abs()));
    traj.number_drift = Some(drift);
    if opts.track_propagator {
        traj.canonical_defect = orthogonality_defect(&r_lab);
        let pred = &r_lab * &g_init * r_lab.transpose();
        traj.propagator_residual = Some((pred - &g_lab).amax());
    } else {
        traj.canonical_defect = cov_defect;
    }
    traj.frame = PropagatorFrame { r: r_lab, t, delta_trace };
    Ok(traj)
}

/// Mean a+c particle number from the operator-basis tables.
pub fn number_from_tables(q: &DMatrix<C64>, n: usize) -> f64 {
    (0..n).map(|j| q[(n + j, j)].re + q[(3 * n + j, 2 * n + j)].re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectro::Confinement;

    fn small() -> System {
        let chain = ChainSpec::uniform(3, 1.0, 1.0, 0.0);
        let cband = CBandSpec::new(3, 0.3, 0.0, Confinement::HardWall);
        System::new(chain, cband).unwrap()
    }

    #[test]
    fn generator_is_hermitian_and_majorana_form_real() {
        let sys = small();
        let step = PulseStep { mask: vec![1.0, 0.5, 0.0], rabi: 0.4, omega: 0.3, duration: 1.0 };
        let h = build_generator(&sys.chain, &sys.cband, &step, 0.7).unwrap();
        assert!((&h - h.adjoint()).camax() < 1e-15);
        let drive = drive_vector(&step, C64::from_polar(1.0, -0.21));
        let a = majorana_generator(&hamiltonian_entries(&sys.chain, &sys.cband, &drive, 0.0, None), 3);
        assert!((&a + a.transpose()).amax() < 1e-14);
        let w = w_matrix(6);
        let m = w.adjoint() * &h * &w;
        assert!(m.map(|z| z.re).amax() < 1e-14);
    }

    #[test]
    fn vacuum_tables_are_consistent() {
        let sys = small();
        let (g, l) = sys.initial_tables(&InitialState::minus());
        assert!(l.amax() == 0.0);
        let occ = quad(&sys.gamma_vec(0.0).map(|z| z.conj()), &g, &sys.gamma_vec(0.0)).re;
        assert!(occ.abs() < 1e-12);
        assert!((&g + g.transpose()).amax() < 1e-14);
    }
}
