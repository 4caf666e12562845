//! Pulse schedules for SET, X, Y and Z on one physical qubit.

use serde::{Deserialize, Serialize};

use crate::bdg::ChainSpec;
use crate::dynamics::{
    evolve, evolve_selfconsistent, EvolveOptions, InitialState, PulseSchedule, PulseStep,
    SelfConsistentOptions, System, Target, Trajectory,
};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::spectro::{absorption_spectrum, c_eigenmodes, CBandSpec, CModes, GroundState, SpectrumResult};

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GateKind {
    Set { target: GroundState },
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Fast,
    Intermediate,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Left,
    Right,
}

/// How Δ behaves while the pulse runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Pairing {
    #[default]
    Proximity,
    /// Δ follows the instantaneous state at attraction v < 0.
    SelfConsistent { v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetOptions {
    /// Duration in units of 1/Γ_scale, Γ_scale = 2Ω²/J_c.
    pub duration_factor: f64,
    /// Explicit duration; required when J_c = 0.
    pub duration: Option<f64>,
    /// Explicit drive frequency, skipping the dark-frequency search.
    pub omega: Option<f64>,
    /// Darkness threshold relative to the largest peak weight.
    pub threshold: f64,
}

impl Default for SetOptions {
    fn default() -> Self {
        SetOptions { duration_factor: 20.0, duration: None, omega: None, threshold: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateRequest {
    pub gate: GateKind,
    pub regime: Regime,
    pub rabi: f64,
    pub chain: ChainSpec,
    pub cband: CBandSpec,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default)]
    pub set: SetOptions,
}

/// Sites 1..⌊N/2⌋ (left) or N+1−⌊N/2⌋..N (right); the centre of odd N stays dark.
pub fn half_mask(n: usize, half: Half) -> Vec<f64> {
    let h = n / 2;
    (0..n)
        .map(|j| {
            let lit = match half {
                Half::Left => j < h,
                Half::Right => j >= n - h,
            };
            if lit { 1.0 } else { 0.0 }
        })
        .collect()
}

/// Fast: Ω > J_c. Slow: Ω < J_c/N. Intermediate otherwise.
pub fn classify_regime(rabi: f64, jc: f64, n: usize) -> Regime {
    let (o, jc) = (rabi.abs(), jc.abs());
    if o > jc {
        Regime::Fast
    } else if o < jc / n as f64 {
        Regime::Slow
    } else {
        Regime::Intermediate
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RabiScales {
    /// Ω Σ_mask |f0(j)|².
    pub omega_tilde: f64,
    /// Same with the mirrored profile f0(N+1−j).
    pub omega_tilde_reflected: f64,
    /// α_k = ½ Σ_mask f0(j) ψ_k(j).
    pub alpha: Vec<C64>,
    /// β_k = ½ Σ_mask f0(N+1−j) ψ_k(j).
    pub beta: Vec<C64>,
}

pub fn rabi_scales(f0: &[f64], cmodes: &CModes, mask: &[f64], rabi: f64) -> Result<RabiScales> {
    let n = f0.len();
    if n == 0 {
        return Err(Error::NoZeroMode);
    }
    if mask.len() != n || cmodes.n() != n {
        return Err(Error::Dimension(format!(
            "f0 has {n} sites, mask {}, c modes {}",
            mask.len(),
            cmodes.n()
        )));
    }
    let mut ot = 0.0;
    let mut otr = 0.0;
    for j in 0..n {
        ot += mask[j] * f0[j] * f0[j];
        otr += mask[j] * f0[n - 1 - j] * f0[n - 1 - j];
    }
    let proj = |prof: &dyn Fn(usize) -> f64| -> Vec<C64> {
        (0..cmodes.eps.len())
            .map(|k| (0..n).map(|j| cmodes.psi[(j, k)] * (0.5 * mask[j] * prof(j))).sum())
            .collect()
    };
    Ok(RabiScales {
        omega_tilde: rabi * ot,
        omega_tilde_reflected: rabi * otr,
        alpha: proj(&|j| f0[j]),
        beta: proj(&|j| f0[n - 1 - j]),
    })
}

/// Peaks where `which` absorbs less than `threshold` and the other state more than 10×.
pub fn dark_frequencies(spectrum: &SpectrumResult, which: GroundState, threshold: f64) -> Vec<f64> {
    let other = match which {
        GroundState::Plus => GroundState::Minus,
        GroundState::Minus => GroundState::Plus,
    };
    spectrum
        .peaks
        .iter()
        .filter(|p| spectrum.weight(p, which) < threshold && spectrum.weight(p, other) > 10.0 * threshold)
        .map(|p| p.omega)
        .collect()
}

/// Resolved pulse parameters of one π pulse.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PiPulse {
    pub omega: f64,
    pub duration: f64,
    /// Effective coupling |α| (slow) or √Σ f0² (fast).
    pub coupling: f64,
    pub mode: Option<usize>,
}

fn geometry(req: &GateRequest) -> Result<(System, CModes)> {
    if !(req.rabi.is_finite() && req.rabi != 0.0) {
        return Err(Error::InvalidSpec(format!("rabi = {} must be finite and nonzero", req.rabi)));
    }
    let sys = System::new(req.chain.clone(), req.cband.clone())?;
    let cm = c_eigenmodes(&req.cband)?;
    let actual = classify_regime(req.rabi, req.cband.jc, req.cband.n);
    if actual != req.regime {
        return Err(Error::Regime(format!(
            "requested {:?} but Ω = {}, J_c = {}, N = {} is {:?}",
            req.regime, req.rabi, req.cband.jc, req.cband.n, actual
        )));
    }
    Ok((sys, cm))
}

/// Largest |coupling| mode with its degenerate partners folded in.
fn strongest_mode(eps: &[f64], amps: &[C64]) -> Option<(usize, f64)> {
    let k = (0..amps.len()).max_by(|&a, &b| amps[a].norm().total_cmp(&amps[b].norm()))?;
    let scale = eps.iter().fold(1e-300f64, |s, e| s.max(e.abs()));
    let eff = eps
        .iter()
        .zip(amps)
        .filter(|(e, _)| (*e - eps[k]).abs() <= 1e-10 * scale)
        .map(|(_, a)| a.norm_sqr())
        .sum::<f64>()
        .sqrt();
    Some((k, eff))
}

fn pi_pulse(req: &GateRequest, sys: &System, cm: &CModes, half: Half) -> Result<PiPulse> {
    let n = sys.n();
    let mask = half_mask(n, half);
    let sc = rabi_scales(&sys.sol.f0, cm, &mask, req.rabi)?;
    let o = req.rabi.abs();
    match req.regime {
        Regime::Fast => {
            let w = match half {
                Half::Left => sc.omega_tilde,
                Half::Right => sc.omega_tilde_reflected,
            } / req.rabi;
            if w <= 0.0 {
                return Err(Error::DivisionByZero("edge mode has no weight under the mask".into()));
            }
            Ok(PiPulse { omega: -req.cband.mu_c, duration: PI / (o * w.sqrt()), coupling: w.sqrt(), mode: None })
        }
        Regime::Slow => {
            let amps = match half {
                Half::Left => &sc.alpha,
                Half::Right => &sc.beta,
            };
            let (k, eff) = strongest_mode(&cm.eps, amps)
                .ok_or_else(|| Error::InvalidSpec("empty c band".into()))?;
            if eff <= 0.0 {
                return Err(Error::DivisionByZero("no c mode couples to the edge".into()));
            }
            Ok(PiPulse { omega: cm.eps[k], duration: PI / (2.0 * o * eff), coupling: eff, mode: Some(k) })
        }
        Regime::Intermediate => Err(Error::Regime(
            "coherent gates need the fast or slow regime".into(),
        )),
    }
}

/// Frequency of the SET pulse: the dark peak of `target` with the brightest other state.
pub fn set_frequency(spectrum: &SpectrumResult, target: GroundState, rel_threshold: f64) -> Result<f64> {
    let top = spectrum
        .peaks
        .iter()
        .fold(0.0f64, |m, p| m.max(p.weight_plus).max(p.weight_minus));
    let thr = rel_threshold * top;
    let cands = dark_frequencies(spectrum, target, thr);
    let bright = |w: f64| {
        spectrum
            .peaks
            .iter()
            .find(|p| p.omega == w)
            .map(|p| p.weight_plus + p.weight_minus)
            .unwrap_or(0.0)
    };
    cands
        .into_iter()
        .max_by(|a, b| bright(*a).total_cmp(&bright(*b)))
        .ok_or_else(|| Error::NoDarkFrequency(format!("{target:?} has no dark peak at threshold {thr:e}")))
}

pub fn schedule_gate(req: &GateRequest) -> Result<PulseSchedule> {
    let (sys, cm) = geometry(req)?;
    let n = sys.n();
    let step = |half: Half, p: PiPulse| PulseStep {
        mask: half_mask(n, half),
        rabi: req.rabi,
        omega: p.omega,
        duration: p.duration,
    };
    match req.gate {
        GateKind::X => Ok(PulseSchedule::single(step(Half::Left, pi_pulse(req, &sys, &cm, Half::Left)?))),
        GateKind::Y => Ok(PulseSchedule::single(step(Half::Right, pi_pulse(req, &sys, &cm, Half::Right)?))),
        GateKind::Z => {
            let y = step(Half::Right, pi_pulse(req, &sys, &cm, Half::Right)?);
            let x = step(Half::Left, pi_pulse(req, &sys, &cm, Half::Left)?);
            Ok(PulseSchedule { steps: vec![y, x] })
        }
        GateKind::Set { target } => {
            if req.regime != Regime::Intermediate {
                return Err(Error::Regime("SET needs the intermediate regime".into()));
            }
            let omega = match req.set.omega {
                Some(w) => w,
                None => {
                    let spec = absorption_spectrum(&sys.sol.f0, &cm, req.rabi)?;
                    set_frequency(&spec, target, req.set.threshold)?
                }
            };
            let duration = match req.set.duration {
                Some(d) => d,
                None => {
                    let jc = req.cband.jc.abs();
                    if jc == 0.0 {
                        return Err(Error::InvalidSpec("J_c = 0: SET needs an explicit duration".into()));
                    }
                    req.set.duration_factor * jc / (2.0 * req.rabi * req.rabi)
                }
            };
            Ok(PulseSchedule::single(PulseStep { mask: vec![1.0; n], rabi: req.rabi, omega, duration }))
        }
    }
}

/// Ideal outcome of `gate` on α|g−⟩ + β|g+⟩, up to a global phase.
pub fn ideal_target(gate: GateKind, init: &InitialState) -> Target {
    let (a, b) = (init.alpha, init.beta);
    let i = C64::new(0.0, 1.0);
    match gate {
        GateKind::Set { target: GroundState::Minus } => Target::GMinus,
        GateKind::Set { target: GroundState::Plus } => Target::GPlus,
        GateKind::X => Target::Superposition { alpha: b, beta: a },
        GateKind::Y => Target::Superposition { alpha: i * b, beta: -i * a },
        GateKind::Z => Target::Superposition { alpha: -a, beta: b },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GateReport {
    pub gate: GateKind,
    pub final_occupation: f64,
    pub final_coherence: C64,
    pub final_fidelity: f64,
    pub schedule: PulseSchedule,
    pub trajectory: Trajectory,
}

/// Options for [`run_gate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub evolve: EvolveOptions,
    pub selfconsistent: SelfConsistentOptions,
}

pub fn run_gate(req: &GateRequest, init: &InitialState, opts: &RunOptions) -> Result<GateReport> {
    init.validate()?;
    let schedule = schedule_gate(req)?;
    let sys = System::new(req.chain.clone(), req.cband.clone())?;
    let target = ideal_target(req.gate, init);
    let trajectory = match req.pairing {
        Pairing::Proximity => {
            let o = EvolveOptions { target: Some(target), ..opts.evolve };
            evolve(&sys, init, &schedule, &o)?
        }
        Pairing::SelfConsistent { v } => {
            let o = SelfConsistentOptions { target: Some(target), ..opts.selfconsistent };
            evolve_selfconsistent(&sys, v, init, &schedule, &o)?
        }
    };
    Ok(GateReport {
        gate: req.gate,
        final_occupation: trajectory.final_occupation(),
        final_coherence: trajectory.final_coherence(),
        final_fidelity: trajectory.final_fidelity().unwrap_or(f64::NAN),
        schedule,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_halves_skip_centre() {
        assert_eq!(half_mask(5, Half::Left), vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(half_mask(5, Half::Right), vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn regime_boundaries() {
        assert_eq!(classify_regime(2.0, 1.0, 10), Regime::Fast);
        assert_eq!(classify_regime(0.5, 1.0, 10), Regime::Intermediate);
        assert_eq!(classify_regime(0.05, 1.0, 10), Regime::Slow);
        assert_eq!(classify_regime(1.0, 0.0, 10), Regime::Fast);
    }
}
