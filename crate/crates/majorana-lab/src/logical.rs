//! Two logical qubits in three physical Majorana qubits.
//!
//! The ground manifold is spanned by |g_{σ1σ2σ3}⟩ = (γ1†)^{n1}(γ2†)^{n2}(γ3†)^{n3}|g_{−−−}⟩
//! with n = 1 for σ = +. Basis index is 4s1 + 2s2 + s3 with s = 0 for + and 1 for −,
//! so single-segment Paulis are written in (+, −) order.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bdg::{diagonalize, BdGSolution, ChainSpec};
use crate::dynamics::{propagate, PulseSchedule, PulseStep};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, pfaffian, C64};
use crate::spectro::{c_eigenmodes, CBandSpec, CModes};

pub const MANIFOLD_DIM: usize = 8;
pub const SEGMENTS: usize = 3;

const PI: f64 = std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

fn eye(n: usize) -> DMatrix<C64> {
    DMatrix::identity(n, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn bit(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    fn occupied(self) -> bool {
        self == Sign::Plus
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '−',
        }
    }
}

pub fn basis_index(state: [Sign; 3]) -> usize {
    4 * state[0].bit() + 2 * state[1].bit() + state[2].bit()
}

pub fn basis_label(index: usize) -> String {
    let s: String = (0..3)
        .map(|q| if (index >> (2 - q)) & 1 == 0 { '+' } else { '−' })
        .collect();
    format!("g{s}")
}

/// Single-segment Pauli matrices in (+, −) order.
pub mod pauli {
    use super::*;

    pub fn x() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }
    pub fn y() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }
    pub fn z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }
    pub fn hadamard() -> DMatrix<C64> {
        (x() + z()) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0)
    }
    /// |+⟩⟨+| and |−⟩⟨−|.
    pub fn projector(s: Sign) -> DMatrix<C64> {
        let mut p = DMatrix::zeros(2, 2);
        p[(s.bit(), s.bit())] = c(1.0, 0.0);
        p
    }
}

/// 8×8 operator acting as `op` on segment `i` (1-based), identity elsewhere.
pub fn on_segment(i: usize, op: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = eye(1);
    for q in 1..=SEGMENTS {
        m = if q == i { kron(&m, op) } else { kron(&m, &eye(2)) };
    }
    m
}

fn check_segment(i: usize) -> Result<()> {
    if (1..=SEGMENTS).contains(&i) {
        Ok(())
    } else {
        Err(Error::Malformed(format!("segment {i} is not in 1..=3")))
    }
}

/// γ_i on the manifold: ⊗_{j<i}(−Z_j) ⊗ |−⟩⟨+| ⊗ 1.
pub fn gamma(i: usize) -> Result<DMatrix<C64>> {
    check_segment(i)?;
    let lower = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)]);
    let mut m = eye(1);
    for q in 1..=SEGMENTS {
        let f = match q.cmp(&i) {
            std::cmp::Ordering::Less => -pauli::z(),
            std::cmp::Ordering::Equal => lower.clone(),
            std::cmp::Ordering::Greater => eye(2),
        };
        m = kron(&m, &f);
    }
    Ok(m)
}

/// γ_i + γ_i†.
pub fn majorana_plus(i: usize) -> Result<DMatrix<C64>> {
    let g = gamma(i)?;
    Ok(&g + g.adjoint())
}

/// γ_i − γ_i†.
pub fn majorana_minus(i: usize) -> Result<DMatrix<C64>> {
    let g = gamma(i)?;
    Ok(&g - g.adjoint())
}

/// Fermion parity Π(1 − 2n_i).
pub fn parity() -> DMatrix<C64> {
    let mut m = eye(1);
    for _ in 0..SEGMENTS {
        m = kron(&m, &(-pauli::z()));
    }
    m
}

/// One term z γ_i + w γ_i†.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub segment: usize,
    pub z: C64,
    pub w: C64,
}

/// Σ (z γ_i + w γ_i†) over its terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFactor {
    pub terms: Vec<Term>,
}

impl LinearFactor {
    /// z γ_i + z* γ_i†.
    pub fn rotation(segment: usize, z: C64) -> Self {
        LinearFactor { terms: vec![Term { segment, z, w: z.conj() }] }
    }

    pub fn plus(segment: usize) -> Self {
        Self::rotation(segment, c(1.0, 0.0))
    }

    pub fn minus(segment: usize) -> Self {
        LinearFactor { terms: vec![Term { segment, z: c(1.0, 0.0), w: c(-1.0, 0.0) }] }
    }

    pub fn sum(mut self, other: LinearFactor) -> Self {
        self.terms.extend(other.terms);
        self
    }

    pub fn matrix(&self) -> Result<DMatrix<C64>> {
        if self.terms.is_empty() {
            return Err(Error::Malformed("empty factor".into()));
        }
        let mut m = DMatrix::zeros(MANIFOLD_DIM, MANIFOLD_DIM);
        for t in &self.terms {
            let g = gamma(t.segment)?;
            m += &g * t.z + g.adjoint() * t.w;
        }
        Ok(m)
    }
}

impl fmt::Display for LinearFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        let mut first = true;
        for t in &self.terms {
            for (coef, dag) in [(t.z, ""), (t.w, "†")] {
                if coef == c(0.0, 0.0) {
                    continue;
                }
                let (lead, body) = coef_text(coef);
                if first {
                    if lead == '-' {
                        write!(f, "-")?;
                    }
                } else {
                    write!(f, " {} ", if lead == '-' { '-' } else { '+' })?;
                }
                write!(f, "{body}γ{}{dag}", t.segment)?;
                first = false;
            }
        }
        write!(f, ")")
    }
}

fn coef_text(z: C64) -> (char, String) {
    let fmt_num = |x: f64| if (x - 1.0).abs() < 1e-15 { String::new() } else { format!("{x}") };
    if z.im == 0.0 {
        (if z.re < 0.0 { '-' } else { '+' }, fmt_num(z.re.abs()))
    } else if z.re == 0.0 {
        (if z.im < 0.0 { '-' } else { '+' }, format!("{}i", fmt_num(z.im.abs())))
    } else {
        ('+', format!("({}{:+}i)", z.re, z.im))
    }
}

/// 8×8 matrix and the expression it came from.
#[derive(Debug, Clone, Serialize)]
pub struct ManifoldOperator {
    pub matrix: DMatrix<C64>,
    pub expr: String,
}

/// Product of factors as written; the rightmost acts first.
pub fn manifold_representation(expr: &[LinearFactor]) -> Result<ManifoldOperator> {
    if expr.is_empty() {
        return Err(Error::Malformed("empty expression".into()));
    }
    let mut m = eye(MANIFOLD_DIM);
    for f in expr {
        m *= f.matrix()?;
    }
    let text = expr.iter().map(|f| f.to_string()).collect::<String>();
    Ok(ManifoldOperator { matrix: m, expr: text })
}

/// Parse e.g. `(g2 + g2')(g3 - 0.5i g3†)`.
///
/// Terms are `[coef][*](g|γ)<1-3>[†|'|^]`; coef is a real, `i`, or a real followed by `i`.
pub fn parse_expression(s: &str) -> Result<Vec<LinearFactor>> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let open = rest
            .strip_prefix('(')
            .ok_or_else(|| Error::Malformed(format!("expected '(' at '{rest}'")))?;
        let close = open
            .find(')')
            .ok_or_else(|| Error::Malformed("unbalanced parenthesis".into()))?;
        out.push(parse_factor(&open[..close])?);
        rest = open[close + 1..].trim_start();
    }
    if out.is_empty() {
        return Err(Error::Malformed("empty expression".into()));
    }
    Ok(out)
}

fn parse_factor(body: &str) -> Result<LinearFactor> {
    let mut terms: Vec<Term> = Vec::new();
    let chars: Vec<char> = body.chars().filter(|ch| !ch.is_whitespace()).collect();
    if chars.is_empty() {
        return Err(Error::Malformed("empty factor".into()));
    }
    let mut i = 0;
    while i < chars.len() {
        let mut sign = 1.0;
        while i < chars.len() && (chars[i] == '+' || chars[i] == '-' || chars[i] == '−') {
            if chars[i] != '+' {
                sign = -sign;
            }
            i += 1;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
            i += 1;
        }
        let num: String = chars[start..i].iter().collect();
        let mut coef = if num.is_empty() {
            1.0
        } else {
            num.parse::<f64>().map_err(|_| Error::Malformed(format!("bad number '{num}'")))?
        };
        coef *= sign;
        let mut z = c(coef, 0.0);
        if i < chars.len() && chars[i] == 'i' {
            z = c(0.0, coef);
            i += 1;
        }
        if i < chars.len() && chars[i] == '*' {
            i += 1;
        }
        if i >= chars.len() || !(chars[i] == 'g' || chars[i] == 'γ') {
            return Err(Error::Malformed(format!("expected γ in '{body}'")));
        }
        i += 1;
        let seg = chars
            .get(i)
            .and_then(|ch| ch.to_digit(10))
            .ok_or_else(|| Error::Malformed(format!("missing segment index in '{body}'")))?
            as usize;
        check_segment(seg)?;
        i += 1;
        let dag = i < chars.len() && matches!(chars[i], '†' | '\'' | '^');
        if dag {
            i += 1;
        }
        let t = match terms.iter_mut().find(|t| t.segment == seg) {
            Some(t) => t,
            None => {
                terms.push(Term { segment: seg, z: c(0.0, 0.0), w: c(0.0, 0.0) });
                terms.last_mut().expect("just pushed")
            }
        };
        if dag {
            t.w += z;
        } else {
            t.z += z;
        }
    }
    Ok(LinearFactor { terms })
}

/// One physical pulse: a half-segment π pulse or a simultaneous two-segment pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PulseFactor {
    /// (γ_i ± γ_i†): left half for +, right half for −.
    Single { segment: usize, sign: Sign },
    /// (γ_i ± γ_i† + γ_j ± γ_j†), same halves on both segments.
    Pair { first: usize, second: usize, sign: Sign },
}

impl PulseFactor {
    pub fn linear(&self) -> LinearFactor {
        let one = |i: usize, s: Sign| match s {
            Sign::Plus => LinearFactor::plus(i),
            Sign::Minus => LinearFactor::minus(i),
        };
        match *self {
            PulseFactor::Single { segment, sign } => one(segment, sign),
            PulseFactor::Pair { first, second, sign } => one(first, sign).sum(one(second, sign)),
        }
    }

    /// Unitary on the manifold (pairs carry 1/√2).
    pub fn operator(&self) -> Result<DMatrix<C64>> {
        let m = self.linear().matrix()?;
        Ok(match self {
            PulseFactor::Single { .. } => m,
            PulseFactor::Pair { .. } => m * c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        })
    }

    pub fn segments(&self) -> Vec<usize> {
        match *self {
            PulseFactor::Single { segment, .. } => vec![segment],
            PulseFactor::Pair { first, second, .. } => vec![first, second],
        }
    }
}

impl fmt::Display for PulseFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one = |i: usize, s: Sign| {
            format!("γ{i} {} γ{i}†", s.symbol())
        };
        match *self {
            PulseFactor::Single { segment, sign } => write!(f, "({})", one(segment, sign)),
            PulseFactor::Pair { first, second, sign } => {
                write!(f, "({} + {})", one(first, sign), one(second, sign))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicalGate {
    X1,
    Y1,
    Z1,
    X2,
    Y2,
    Z2,
    H1,
    H2,
    #[serde(rename = "CY12")]
    Cy12,
    #[serde(rename = "CY21")]
    Cy21,
}

impl LogicalGate {
    pub const ALL: [LogicalGate; 10] = [
        LogicalGate::X1,
        LogicalGate::Y1,
        LogicalGate::Z1,
        LogicalGate::X2,
        LogicalGate::Y2,
        LogicalGate::Z2,
        LogicalGate::H1,
        LogicalGate::H2,
        LogicalGate::Cy12,
        LogicalGate::Cy21,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LogicalGate::X1 => "X1",
            LogicalGate::Y1 => "Y1",
            LogicalGate::Z1 => "Z1",
            LogicalGate::X2 => "X2",
            LogicalGate::Y2 => "Y2",
            LogicalGate::Z2 => "Z2",
            LogicalGate::H1 => "H1",
            LogicalGate::H2 => "H2",
            LogicalGate::Cy12 => "CY12",
            LogicalGate::Cy21 => "CY21",
        }
    }
}

impl fmt::Display for LogicalGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LogicalGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace(['_', '-'], "");
        LogicalGate::ALL
            .iter()
            .find(|g| g.name() == key)
            .copied()
            .ok_or_else(|| Error::UnsupportedGate(s.to_string()))
    }
}

fn single(segment: usize, sign: Sign) -> PulseFactor {
    PulseFactor::Single { segment, sign }
}

fn pair(first: usize, second: usize, sign: Sign) -> PulseFactor {
    PulseFactor::Pair { first, second, sign }
}

/// Physical Z_i = (γ_i + γ_i†)(γ_i − γ_i†), in time order.
pub fn physical_z(i: usize) -> Vec<PulseFactor> {
    vec![single(i, Sign::Minus), single(i, Sign::Plus)]
}

/// H_ij = (γ_i + γ_i† + γ_j + γ_j†)(γ_i − γ_i†), in time order.
pub fn h_block(i: usize, j: usize) -> Vec<PulseFactor> {
    vec![single(i, Sign::Minus), pair(i, j, Sign::Plus)]
}

/// S_ij = (γ_i + γ_i† + γ_j + γ_j†)(γ_i − γ_i† + γ_j − γ_j†), in time order.
pub fn s_block(i: usize, j: usize) -> Vec<PulseFactor> {
    vec![pair(i, j, Sign::Minus), pair(i, j, Sign::Plus)]
}

/// Time-ordered factors of an operator product written left to right.
pub fn written_product(blocks: &[Vec<PulseFactor>]) -> Vec<PulseFactor> {
    blocks.iter().rev().flatten().copied().collect()
}

/// Pulse factors in time order.
pub fn compile_logical_gate(gate: LogicalGate) -> Vec<PulseFactor> {
    use Sign::{Minus as M, Plus as P};
    match gate {
        LogicalGate::X1 => vec![single(3, P), single(2, M), single(2, P), single(1, M)],
        LogicalGate::Y1 => vec![single(3, P), single(2, M), single(2, P), single(1, P)],
        LogicalGate::X2 => vec![single(3, P), single(2, M)],
        LogicalGate::Y2 => vec![single(3, P), single(2, P)],
        LogicalGate::Z1 => {
            let mut v = compile_logical_gate(LogicalGate::Y1);
            v.extend(compile_logical_gate(LogicalGate::X1));
            v
        }
        LogicalGate::Z2 => {
            let mut v = compile_logical_gate(LogicalGate::Y2);
            v.extend(compile_logical_gate(LogicalGate::X2));
            v
        }
        LogicalGate::H2 => h_block(2, 3),
        LogicalGate::Cy12 => written_product(&[physical_z(1), physical_z(2), s_block(2, 3)]),
        LogicalGate::Cy21 => written_product(&[physical_z(1), s_block(1, 2), s_block(2, 3), s_block(1, 2)]),
        LogicalGate::H1 => written_product(&[h_block(3, 1), compile_logical_gate(LogicalGate::Cy21)]),
    }
}

/// Manifold unitary of time-ordered factors.
pub fn compiled_operator(factors: &[PulseFactor]) -> Result<DMatrix<C64>> {
    let mut u = eye(MANIFOLD_DIM);
    for f in factors {
        u = f.operator()? * u;
    }
    Ok(u)
}

/// Encoded states in logical order |++⟩, |+−⟩, |−+⟩, |−−⟩.
pub fn encoded_states() -> [[Sign; 3]; 4] {
    use Sign::{Minus as M, Plus as P};
    [[P, P, P], [P, M, M], [M, P, M], [M, M, P]]
}

/// 8×4 isometry onto the encoded subspace.
pub fn encoding() -> DMatrix<C64> {
    let mut v = DMatrix::zeros(MANIFOLD_DIM, 4);
    for (col, s) in encoded_states().iter().enumerate() {
        v[(basis_index(*s), col)] = c(1.0, 0.0);
    }
    v
}

/// Controlled −iσ_y, firing when the control is |−⟩.
pub fn controlled_y(control: usize) -> DMatrix<C64> {
    let act = -pauli::y() * c(0.0, 1.0);
    let (p, m) = (pauli::projector(Sign::Plus), pauli::projector(Sign::Minus));
    if control == 1 {
        kron(&p, &eye(2)) + kron(&m, &act)
    } else {
        kron(&eye(2), &p) + kron(&act, &m)
    }
}

/// Ideal 4×4 logical unitary.
pub fn logical_target(gate: LogicalGate) -> DMatrix<C64> {
    let i2 = eye(2);
    match gate {
        LogicalGate::X1 => kron(&pauli::x(), &i2),
        LogicalGate::Y1 => kron(&pauli::y(), &i2),
        LogicalGate::Z1 => kron(&pauli::z(), &i2),
        LogicalGate::X2 => kron(&i2, &pauli::x()),
        LogicalGate::Y2 => kron(&i2, &pauli::y()),
        LogicalGate::Z2 => kron(&i2, &pauli::z()),
        LogicalGate::H1 => kron(&pauli::hadamard(), &i2),
        LogicalGate::H2 => kron(&i2, &pauli::hadamard()),
        LogicalGate::Cy12 => controlled_y(1),
        LogicalGate::Cy21 => controlled_y(2),
    }
}

/// ‖A − e^{iφ}B‖₂ with φ = arg tr(B†A).
pub fn phase_aligned_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> (f64, f64) {
    let t = (b.adjoint() * a).trace();
    let phi = if t.norm() > 1e-14 { t.arg() } else { 0.0 };
    (op_norm(&(a - b * C64::from_polar(1.0, phi))), phi)
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub gate: String,
    pub pass: bool,
    pub deviation: f64,
    /// ‖(1 − VV†) U V‖₂.
    pub leakage: f64,
    pub phase: f64,
    pub factor_count: usize,
    pub factors: Vec<String>,
}

pub const VERIFY_TOL: f64 = 1e-10;

fn compare_encoded(name: String, factors: &[PulseFactor], target: &DMatrix<C64>) -> Result<Verification> {
    let u = compiled_operator(factors)?;
    let v = encoding();
    let uv = &u * &v;
    let proj = v.adjoint() * &uv;
    let leakage = op_norm(&(&uv - &v * &proj));
    let (deviation, phase) = phase_aligned_distance(&proj, target);
    Ok(Verification {
        gate: name,
        pass: deviation < VERIFY_TOL && leakage < VERIFY_TOL,
        deviation,
        leakage,
        phase,
        factor_count: factors.len(),
        factors: factors.iter().map(|f| f.to_string()).collect(),
    })
}

pub fn verify_compilation(gate: LogicalGate, compiled: &[PulseFactor]) -> Result<Verification> {
    compare_encoded(gate.name().to_string(), compiled, &logical_target(gate))
}

pub fn verify_all() -> Result<Vec<Verification>> {
    LogicalGate::ALL
        .iter()
        .map(|&g| verify_compilation(g, &compile_logical_gate(g)))
        .collect()
}

/// The building-block identities exactly as written, each against its ideal gate.
pub fn block_identities() -> Result<Vec<Verification>> {
    let cy21 = written_product(&[physical_z(1), s_block(1, 2), s_block(2, 3), s_block(1, 2)]);
    let rows: Vec<(&str, Vec<PulseFactor>, LogicalGate)> = vec![
        ("H2 = H23", h_block(2, 3), LogicalGate::H2),
        ("CY12 = Z1 Z2 S23", written_product(&[physical_z(1), physical_z(2), s_block(2, 3)]), LogicalGate::Cy12),
        ("CY21 = Z1 S12 S23 S12", cy21.clone(), LogicalGate::Cy21),
        ("H1 = CY21 S13", written_product(&[cy21, s_block(1, 3)]), LogicalGate::H1),
    ];
    rows.into_iter()
        .map(|(name, f, g)| compare_encoded(name.to_string(), &f, &logical_target(g)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NaiveCheck {
    /// Distance to X2 on the 8×8 product basis, best phase.
    pub vs_x2: f64,
    /// Distance to −Z1X2, no phase freedom.
    pub vs_minus_z1x2: f64,
    pub pass_as_x2: bool,
    pub pass_as_minus_z1x2: bool,
}

/// The bare left-half pulse on segment 2.
pub fn naive_x2_check() -> Result<NaiveCheck> {
    let u = majorana_plus(2)?;
    let x2 = on_segment(2, &pauli::x());
    let mz1x2 = -(on_segment(1, &pauli::z()) * &x2);
    let (vs_x2, _) = phase_aligned_distance(&u, &x2);
    let vs_minus_z1x2 = op_norm(&(&u - &mz1x2));
    Ok(NaiveCheck {
        vs_x2,
        vs_minus_z1x2,
        pass_as_x2: vs_x2 < VERIFY_TOL,
        pass_as_minus_z1x2: vs_minus_z1x2 < VERIFY_TOL,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairAction {
    pub result: DVector<C64>,
    /// Sign of the segment-j term relative to the segment-i term.
    pub sign: f64,
}

/// Action of z_iγ_i + z_i*γ_i† + z_jγ_j + z_j*γ_j† on a basis state.
pub fn nonadjacent_phase(i: usize, j: usize, zi: C64, zj: C64, state: [Sign; 3]) -> Result<PairAction> {
    check_segment(i)?;
    check_segment(j)?;
    if i >= j {
        return Err(Error::Malformed(format!("need i < j, got {i}, {j}")));
    }
    if zi.norm() == 0.0 || zj.norm() == 0.0 {
        return Err(Error::Malformed("coefficients must be nonzero".into()));
    }
    let h = LinearFactor::rotation(i, zi).sum(LinearFactor::rotation(j, zj)).matrix()?;
    let mut e = DVector::zeros(MANIFOLD_DIM);
    e[basis_index(state)] = c(1.0, 0.0);
    let result = h * e;
    let amp = |seg: usize, z: C64| {
        let mut s = state;
        s[seg - 1] = if s[seg - 1] == Sign::Plus { Sign::Minus } else { Sign::Plus };
        let naive = if state[seg - 1].occupied() { z } else { z.conj() };
        result[basis_index(s)] / naive
    };
    let ratio = amp(j, zj) / amp(i, zi);
    Ok(PairAction { sign: ratio.re.signum(), result })
}

/// Three identical segments in one chain, split by barriers, over a shared c band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicalRegister {
    pub segment_sites: usize,
    pub j: f64,
    pub delta: f64,
    pub mu: f64,
    /// Spans all 3N sites.
    pub cband: CBandSpec,
}

impl LogicalRegister {
    pub fn validate(&self) -> Result<()> {
        let n = self.segment_sites;
        if n < 2 {
            return Err(Error::InvalidSpec("segments need at least 2 sites".into()));
        }
        if self.cband.n != SEGMENTS * n {
            return Err(Error::Dimension(format!(
                "c band has {} sites, register has {}",
                self.cband.n,
                SEGMENTS * n
            )));
        }
        self.cband.validate()?;
        if !self.segment_solution()?.zero_mode_present {
            return Err(Error::NoZeroMode);
        }
        Ok(())
    }

    pub fn total_sites(&self) -> usize {
        SEGMENTS * self.segment_sites
    }

    pub fn segment_chain(&self) -> ChainSpec {
        ChainSpec::uniform(self.segment_sites, self.j, self.delta, self.mu)
    }

    /// Whole register; barriers cut bonds N and 2N.
    pub fn chain(&self) -> ChainSpec {
        let n = self.segment_sites;
        let mut ch = ChainSpec::uniform(SEGMENTS * n, self.j, self.delta, self.mu);
        ch.barriers = vec![n, 2 * n];
        ch
    }

    pub fn segment_solution(&self) -> Result<BdGSolution> {
        diagonalize(&self.segment_chain())
    }

    /// First site (0-based) of segment i (1-based).
    pub fn offset(&self, i: usize) -> usize {
        (i - 1) * self.segment_sites
    }

    /// Edge coupling profile on one segment: (u₀+v₀) on the left half or (u₀−v₀) on the right.
    fn profile(&self, sol: &BdGSolution, sign: Sign) -> Vec<f64> {
        let n = self.segment_sites;
        let h = n / 2;
        (0..n)
            .map(|j| {
                let (u, v) = (sol.u[(j, 0)], sol.v[(j, 0)]);
                match sign {
                    Sign::Plus if j < h => u + v,
                    Sign::Minus if j >= n - h => u - v,
                    _ => 0.0,
                }
            })
            .collect()
    }

    fn mask(&self, segments: &[usize], sign: Sign) -> Vec<f64> {
        let n = self.segment_sites;
        let h = n / 2;
        let mut m = vec![0.0; self.total_sites()];
        for &s in segments {
            let r = self.offset(s);
            for j in 0..n {
                let lit = match sign {
                    Sign::Plus => j < h,
                    Sign::Minus => j >= n - h,
                };
                if lit {
                    m[r + j] = 1.0;
                }
            }
        }
        m
    }
}

/// Parameters of one resonant register pulse.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResonantPulse {
    pub mode: usize,
    pub omega: f64,
    /// ½ Σ f(r_i + j) ψ_k(r_i + j) over the lit half of the first segment.
    pub alpha: C64,
    /// |α_i − α_j| / max(|α_i|, |α_j|).
    pub mismatch: f64,
    pub duration: f64,
}

fn nondegenerate(cm: &CModes, k: usize) -> bool {
    let scale = cm.eps.iter().fold(1e-300f64, |s, e| s.max(e.abs()));
    cm.eps.iter().enumerate().all(|(q, e)| q == k || (e - cm.eps[k]).abs() > 1e-10 * scale)
}

fn couplings(reg: &LogicalRegister, sol: &BdGSolution, cm: &CModes, i: usize, sign: Sign) -> Vec<C64> {
    let prof = reg.profile(sol, sign);
    let r = reg.offset(i);
    (0..cm.eps.len())
        .map(|k| (0..prof.len()).map(|j| cm.psi[(r + j, k)] * (0.5 * prof[j])).sum())
        .collect()
}

fn check_slow(reg: &LogicalRegister, rabi: f64) -> Result<()> {
    let lim = reg.cband.jc.abs() / reg.total_sites() as f64;
    if !(rabi.abs() < lim) || rabi == 0.0 {
        return Err(Error::Regime(format!("register pulses need 0 < Ω < J_c/N_total = {lim}, got {rabi}")));
    }
    Ok(())
}

/// Matched mode for a simultaneous pulse on segments i and j (same half on both).
pub fn two_qubit_resonant_pulse(
    reg: &LogicalRegister,
    i: usize,
    j: usize,
    sign: Sign,
    rabi: f64,
    tol: f64,
) -> Result<ResonantPulse> {
    reg.validate()?;
    check_segment(i)?;
    check_segment(j)?;
    check_slow(reg, rabi)?;
    let sol = reg.segment_solution()?;
    let cm = c_eigenmodes(&reg.cband)?;
    let ai = couplings(reg, &sol, &cm, i, sign);
    let aj = couplings(reg, &sol, &cm, j, sign);
    let top = ai.iter().chain(&aj).fold(0.0f64, |m, a| m.max(a.norm()));
    let mut best: Option<(usize, f64)> = None;
    let mut chosen: Option<(usize, f64)> = None;
    for k in 0..cm.eps.len() {
        if !nondegenerate(&cm, k) || ai[k].norm().min(aj[k].norm()) < 1e-6 * top {
            continue;
        }
        let mm = (ai[k] - aj[k]).norm() / ai[k].norm().max(aj[k].norm());
        if best.map_or(true, |(_, b)| mm < b) {
            best = Some((k, mm));
        }
        if mm <= tol && chosen.map_or(true, |(q, _)| ai[k].norm() > ai[q].norm()) {
            chosen = Some((k, mm));
        }
    }
    let (k, mismatch) = match chosen {
        Some(x) => x,
        None => {
            let (best_mode, mismatch) = best.unwrap_or((0, f64::INFINITY));
            return Err(Error::NoMatchingMode { best_mode, mismatch });
        }
    };
    let alpha = ai[k];
    Ok(ResonantPulse {
        mode: k,
        omega: cm.eps[k],
        alpha,
        mismatch,
        duration: PI / (2.0 * std::f64::consts::SQRT_2 * rabi.abs() * alpha.norm()),
    })
}

/// Strongest nondegenerate mode for a half-segment pulse.
pub fn single_segment_pulse(reg: &LogicalRegister, i: usize, sign: Sign, rabi: f64) -> Result<ResonantPulse> {
    reg.validate()?;
    check_segment(i)?;
    check_slow(reg, rabi)?;
    let sol = reg.segment_solution()?;
    let cm = c_eigenmodes(&reg.cband)?;
    let a = couplings(reg, &sol, &cm, i, sign);
    let k = (0..a.len())
        .filter(|&k| nondegenerate(&cm, k))
        .max_by(|&p, &q| a[p].norm().total_cmp(&a[q].norm()))
        .ok_or_else(|| Error::NoMatchingMode { best_mode: 0, mismatch: f64::INFINITY })?;
    if a[k].norm() == 0.0 {
        return Err(Error::DivisionByZero("edge mode does not couple to any c mode".into()));
    }
    Ok(ResonantPulse {
        mode: k,
        omega: cm.eps[k],
        alpha: a[k],
        mismatch: 0.0,
        duration: PI / (2.0 * rabi.abs() * a[k].norm()),
    })
}

/// Executable register schedule for time-ordered factors.
pub fn register_schedule(reg: &LogicalRegister, factors: &[PulseFactor], rabi: f64, tol: f64) -> Result<PulseSchedule> {
    let mut steps = Vec::with_capacity(factors.len());
    for f in factors {
        let (p, segs, sign) = match *f {
            PulseFactor::Single { segment, sign } => (single_segment_pulse(reg, segment, sign, rabi)?, vec![segment], sign),
            PulseFactor::Pair { first, second, sign } => {
                (two_qubit_resonant_pulse(reg, first, second, sign, rabi, tol)?, vec![first, second], sign)
            }
        };
        steps.push(PulseStep { mask: reg.mask(&segs, sign), rabi, omega: p.omega, duration: p.duration });
    }
    Ok(PulseSchedule { steps })
}

/// Edge Majoranas η_{2i} = γ_i + γ_i†, η_{2i+1} = −i(γ_i − γ_i†) on the manifold.
pub fn edge_majoranas() -> Result<Vec<DMatrix<C64>>> {
    let mut out = Vec::with_capacity(2 * SEGMENTS);
    for i in 1..=SEGMENTS {
        out.push(majorana_plus(i)?);
        out.push(majorana_minus(i)? * c(0.0, -1.0));
    }
    Ok(out)
}

/// G_ab = Im⟨η_a η_b⟩ of a manifold state.
pub fn edge_covariance(psi: &DVector<C64>) -> Result<DMatrix<f64>> {
    let eta = edge_majoranas()?;
    let m = eta.len();
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            if a != b {
                g[(a, b)] = psi.dotc(&(&eta[a] * (&eta[b] * psi))).im;
            }
        }
    }
    Ok(g)
}

/// Manifold density matrix of the Gaussian state with covariance `g`.
pub fn gaussian_density(g: &DMatrix<f64>) -> Result<DMatrix<C64>> {
    let eta = edge_majoranas()?;
    let m = eta.len();
    if g.nrows() != m || g.ncols() != m {
        return Err(Error::Dimension(format!("edge covariance must be {m}×{m}")));
    }
    let mut rho = DMatrix::zeros(MANIFOLD_DIM, MANIFOLD_DIM);
    for mask in 0u32..(1 << m) {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let idx: Vec<usize> = (0..m).filter(|&a| mask & (1 << a) != 0).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |a, b| if a == b { c(0.0, 0.0) } else { c(0.0, g[(idx[a], idx[b])]) });
        let ev = if k == 0 { c(1.0, 0.0) } else { pfaffian(&sub) };
        let mut prod = eye(MANIFOLD_DIM);
        for &a in &idx {
            prod *= &eta[a];
        }
        rho += prod * ev.conj();
    }
    Ok(rho / c(MANIFOLD_DIM as f64, 0.0))
}

/// Rows η = T w for the register: the three edge modes first, then bulk, then c untouched.
fn register_transform(reg: &LogicalRegister, sol: &BdGSolution) -> DMatrix<f64> {
    let n = reg.segment_sites;
    let total = reg.total_sites();
    let dim = 4 * total;
    let mut t = DMatrix::zeros(dim, dim);
    for s in 1..=SEGMENTS {
        let r = reg.offset(s);
        for nu in 0..n {
            let global = if nu == 0 { s - 1 } else { SEGMENTS + (s - 1) * (n - 1) + (nu - 1) };
            for j in 0..n {
                let (u, v) = (sol.u[(j, nu)], sol.v[(j, nu)]);
                t[(2 * global, 2 * (r + j))] = u + v;
                t[(2 * global + 1, 2 * (r + j) + 1)] = u - v;
            }
        }
    }
    for k in 2 * total..dim {
        t[(k, k)] = 1.0;
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct EndToEndCase {
    pub input: String,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndToEnd {
    pub gate: LogicalGate,
    pub cases: Vec<EndToEndCase>,
    pub min_fidelity: f64,
    pub schedule: PulseSchedule,
    pub factors: Vec<String>,
}

/// Gaussian test inputs: the four encoded basis states and two coherent superpositions.
pub fn gaussian_inputs() -> Vec<(String, DVector<C64>)> {
    let v = encoding();
    let labels = ["|++⟩", "|+−⟩", "|−+⟩", "|−−⟩"];
    let mut out: Vec<(String, DVector<C64>)> = (0..4)
        .map(|q| (labels[q].to_string(), v.column(q).into_owned()))
        .collect();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (name, a, b, z) in [("(|++⟩+|+−⟩)/√2", 0, 1, c(s, 0.0)), ("(|−+⟩+i|−−⟩)/√2", 2, 3, c(0.0, s))] {
        let psi = v.column(a) * c(s, 0.0) + v.column(b) * z;
        out.push((name.to_string(), psi));
    }
    out
}

/// Run a compiled gate through the register dynamics and compare with the ideal gate.
pub fn end_to_end(reg: &LogicalRegister, gate: LogicalGate, rabi: f64, tol: f64) -> Result<EndToEnd> {
    reg.validate()?;
    let factors = compile_logical_gate(gate);
    let schedule = register_schedule(reg, &factors, rabi, tol)?;
    let frame = propagate(&reg.chain(), &reg.cband, &schedule)?;
    let sol = reg.segment_solution()?;
    let t = register_transform(reg, &sol);
    let dim = t.nrows();
    let v = encoding();
    let ideal = &v * logical_target(gate) * v.adjoint();
    let mut cases = Vec::new();
    for (name, psi) in gaussian_inputs() {
        let ge = edge_covariance(&psi)?;
        let rho_in = gaussian_density(&ge)?;
        let pure = &psi * psi.adjoint();
        if op_norm(&(&rho_in - &pure)) > 1e-10 {
            return Err(Error::Contract(format!("input {name} is not Gaussian")));
        }
        let mut gq = DMatrix::zeros(dim, dim);
        for m in 0..dim / 2 {
            gq[(2 * m, 2 * m + 1)] = 1.0;
            gq[(2 * m + 1, 2 * m)] = -1.0;
        }
        for a in 0..2 * SEGMENTS {
            for b in 0..2 * SEGMENTS {
                gq[(a, b)] = ge[(a, b)];
            }
        }
        let g0 = t.transpose() * gq * &t;
        let gt = &frame.r * g0 * frame.r.transpose();
        let gout = &t * gt * t.transpose();
        let edge = gout.view((0, 0), (2 * SEGMENTS, 2 * SEGMENTS)).into_owned();
        let rho = gaussian_density(&edge)?;
        let target = &ideal * &psi;
        let fidelity = target.dotc(&(&rho * &target)).re;
        cases.push(EndToEndCase { input: name, fidelity });
    }
    let min_fidelity = cases.iter().map(|c| c.fidelity).fold(f64::INFINITY, f64::min);
    Ok(EndToEnd {
        gate,
        cases,
        min_fidelity,
        schedule,
        factors: factors.iter().map(|f| f.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoded_states_are_odd() {
        let p = parity();
        for s in encoded_states() {
            let i = basis_index(s);
            assert_eq!(p[(i, i)], c(-1.0, 0.0));
        }
    }

    #[test]
    fn labels_round_trip() {
        use Sign::*;
        assert_eq!(basis_label(basis_index([Minus, Plus, Minus])), "g−+−");
    }
}
