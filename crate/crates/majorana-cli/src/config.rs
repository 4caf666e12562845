//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use majorana_lab::bdg::{Boundary, ChainSpec, Trap};
use majorana_lab::dynamics::{InitialState, PulseStep, Target};
use majorana_lab::gates::{GateKind, Pairing, Regime, SetOptions};
use majorana_lab::logical::{LogicalGate, LogicalRegister};
use majorana_lab::meanfield::{default_seed, solve_selfconsistent_delta};
use majorana_lab::spectro::{CBandSpec, Confinement};
use num_complex::Complex64 as C64;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    /// Directory of the file the config came from.
    #[serde(skip)]
    pub base_dir: PathBuf,
    pub chain: Option<ChainConfig>,
    pub cband: Option<CBandConfig>,
    pub ldos: Option<LdosConfig>,
    pub spectrum: Option<SpectrumConfig>,
    pub gap: Option<GapConfig>,
    pub dynamics: Option<DynamicsConfig>,
    pub gate: Option<GateConfig>,
    pub compile: Option<CompileConfig>,
    pub register: Option<LogicalRegister>,
    pub oracle: Option<OracleConfig>,
    pub sweep: Option<SweepConfig>,
}

/// Uniform chain. With `self_consistent_v` set, Δ is solved for and `delta` only seeds it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n: usize,
    pub j: f64,
    pub delta: f64,
    pub mu: f64,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub trap: Option<Trap>,
    #[serde(default)]
    pub barriers: Vec<usize>,
    #[serde(default)]
    pub self_consistent_v: Option<f64>,
}

impl ChainConfig {
    pub fn spec(&self) -> Result<ChainSpec> {
        let mut s = ChainSpec::uniform(self.n, self.j, self.delta, self.mu).with_boundary(self.boundary);
        s.trap = self.trap.clone();
        s.barriers = self.barriers.clone();
        if let Some(v) = self.self_consistent_v {
            let seed = if self.delta != 0.0 { s.delta.clone() } else { default_seed(&s) };
            s = solve_selfconsistent_delta(&s, v, &seed, Default::default())?.spec;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CBandConfig {
    /// Defaults to the chain length.
    #[serde(default)]
    pub n: Option<usize>,
    pub jc: f64,
    #[serde(default)]
    pub mu_c: f64,
    #[serde(default)]
    pub confinement: Confinement,
}

impl CBandConfig {
    pub fn spec(&self, chain_n: usize) -> CBandSpec {
        CBandSpec::new(self.n.unwrap_or(chain_n), self.jc, self.mu_c, self.confinement.clone())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdosConfig {
    pub eta: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
    /// Zero-mode threshold in units of J.
    #[serde(default)]
    pub zero_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "one")]
    pub rabi: f64,
    #[serde(default)]
    pub broaden: Option<BroadenConfig>,
    /// First c site under the chain when the c band is longer than the chain.
    #[serde(default)]
    pub offset: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadenConfig {
    pub eta: f64,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub v: f64,
    pub j: f64,
    pub mu: f64,
    #[serde(default = "default_nk")]
    pub nk: usize,
}

/// Named state or explicit amplitudes of α|g−⟩ + β|g+⟩ as [re, im] pairs.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Named(NamedState),
    Amplitudes { alpha: [f64; 2], beta: [f64; 2] },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    Minus,
    Plus,
    Equal,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Named(NamedState::Minus)
    }
}

impl InitialConfig {
    pub fn state(&self) -> Result<InitialState> {
        Ok(match self {
            InitialConfig::Named(NamedState::Minus) => InitialState::minus(),
            InitialConfig::Named(NamedState::Plus) => InitialState::plus(),
            InitialConfig::Named(NamedState::Equal) => InitialState::equal(),
            InitialConfig::Amplitudes { alpha, beta } => {
                InitialState::new(C64::new(alpha[0], alpha[1]), C64::new(beta[0], beta[1]))?
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub initial: InitialConfig,
    pub steps: Vec<PulseStep>,
    #[serde(default = "default_samples")]
    pub samples_per_step: usize,
    #[serde(default)]
    pub target: Option<Target>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub kind: GateKind,
    pub regime: Regime,
    #[serde(default = "one")]
    pub rabi: f64,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default)]
    pub set: SetOptions,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default = "default_samples")]
    pub samples_per_step: usize,
    /// Track the exact propagator alongside self-consistent runs.
    #[serde(default)]
    pub track_propagator: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompileConfig {
    #[serde(default = "all_gates")]
    pub gates: Vec<LogicalGate>,
    /// Also run each gate through register dynamics; needs [register].
    #[serde(default)]
    pub end_to_end: bool,
    #[serde(default = "default_register_rabi")]
    pub rabi: f64,
    #[serde(default = "default_match_tol")]
    pub match_tol: f64,
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig { gates: all_gates(), end_to_end: false, rabi: default_register_rabi(), match_tol: default_match_tol() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_sites")]
    pub max_sites: usize,
    #[serde(default = "default_pulses")]
    pub pulses: usize,
    #[serde(default = "default_oracle_samples")]
    pub samples_per_step: usize,
    #[serde(default = "default_oracle_tol")]
    pub tol: f64,
    /// Overridden by --seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            trials: default_trials(),
            max_sites: default_max_sites(),
            pulses: default_pulses(),
            samples_per_step: default_oracle_samples(),
            tol: default_oracle_tol(),
            seed: None,
        }
    }
}

/// Subcommands a sweep can fan out over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Ldos,
    Spectrum,
    Gap,
    Dynamics,
    Gate,
    Compile,
    Verify,
    OracleCheck,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Mu,
    Delta,
    N,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SweepConfig {
    /// Run one subcommand over several configs, paths relative to this file; outputs go to OUT/<file stem>/.
    Configs { command: Kind, configs: Vec<PathBuf> },
    /// Scan one chain parameter over [start, stop] and record the zero-mode splitting.
    Scan {
        parameter: SweepParameter,
        start: f64,
        stop: f64,
        step: f64,
        #[serde(default)]
        zero_tol: Option<f64>,
    },
}

pub fn scan_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(CliError::Config("sweep needs step > 0 and stop >= start".into()));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn one() -> f64 {
    1.0
}
fn default_nk() -> usize {
    400
}
fn default_samples() -> usize {
    200
}
fn all_gates() -> Vec<LogicalGate> {
    LogicalGate::ALL.to_vec()
}
fn default_register_rabi() -> f64 {
    0.01
}
fn default_match_tol() -> f64 {
    1e-9
}
fn default_trials() -> usize {
    8
}
fn default_max_sites() -> usize {
    4
}
fn default_pulses() -> usize {
    3
}
fn default_oracle_samples() -> usize {
    20
}
fn default_oracle_tol() -> f64 {
    1e-6
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        let mut cfg = Config::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn section<'a, T>(&'a self, name: &str, s: &'a Option<T>) -> Result<&'a T> {
        s.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }

    pub fn chain_spec(&self) -> Result<ChainSpec> {
        self.section("chain", &self.chain)?.spec()
    }

    pub fn cband_spec(&self, chain_n: usize) -> Result<CBandSpec> {
        Ok(self.section("cband", &self.cband)?.spec(chain_n))
    }
}
