//! Circuit plumbing between benchmarks and the device: QASM-subset
//! parsing, generators, grid routing, lowering through per-edge
//! decompositions, and ASAP scheduling.

use crate::hamsim::{DeviceModel, SiteId};
use crate::linalg::{c, max_abs_diff2, su2_normalize, C64, CMat2, CMat4};
use crate::synth::{
    min_layers, synthesize, DecompositionCache, GateDecomposition, SynthError, SynthesisOptions,
};
use crate::weyl::Unitary2Q;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("parse error at {line}:{col}: {message}")]
    Parse { line: u32, col: u32, message: String },
    #[error("unsupported gate \"{name}\"")]
    UnsupportedGate { name: String },
    #[error("gate {index}: operand out of range for {n_qubits} qubits")]
    OperandOutOfRange { index: usize, n_qubits: u32 },
    #[error("gate {index}: two-qubit gate with repeated operand")]
    RepeatedOperand { index: usize },
    #[error("lowering {gate} on edge ({:?}, {:?}) failed: best infidelity {best_infidelity:.3e}", edge.0, edge.1)]
    LoweringFailed { edge: (SiteId, SiteId), gate: String, best_infidelity: f64 },
    #[error("no basis gate assigned to edge ({:?}, {:?})", edge.0, edge.1)]
    MissingBasis { edge: (SiteId, SiteId) },
    #[error("dense simulation limited to {max} qubits, circuit has {n_qubits}")]
    TooLargeToSimulate { n_qubits: u32, max: u32 },
    #[error("circuit contains a native gate with no resolver")]
    UnresolvedNative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    X,
    Y,
    Z,
    H,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    U3,
    Cx,
    Cz,
    Swap,
    Iswap,
    Cp,
    Crz,
    /// The edge's selected basis gate, produced by lowering.
    Native,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::X
            | GateKind::Y
            | GateKind::Z
            | GateKind::H
            | GateKind::S
            | GateKind::Sdg
            | GateKind::T
            | GateKind::Tdg
            | GateKind::Rx
            | GateKind::Ry
            | GateKind::Rz
            | GateKind::U3 => 1,
            _ => 2,
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Cp | GateKind::Crz => 1,
            GateKind::U3 => 3,
            _ => 0,
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "x" => GateKind::X,
            "y" => GateKind::Y,
            "z" => GateKind::Z,
            "h" => GateKind::H,
            "s" => GateKind::S,
            "sdg" => GateKind::Sdg,
            "t" => GateKind::T,
            "tdg" => GateKind::Tdg,
            "rx" => GateKind::Rx,
            "ry" => GateKind::Ry,
            "rz" => GateKind::Rz,
            "u3" => GateKind::U3,
            "cx" => GateKind::Cx,
            "cz" => GateKind::Cz,
            "swap" => GateKind::Swap,
            "iswap" => GateKind::Iswap,
            "cp" => GateKind::Cp,
            "crz" => GateKind::Crz,
            _ => return None,
        })
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::H => "h",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::U3 => "u3",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Swap => "swap",
            GateKind::Iswap => "iswap",
            GateKind::Cp => "cp",
            GateKind::Crz => "crz",
            GateKind::Native => "native",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
}

impl Gate {
    pub fn one(kind: GateKind, q: u32) -> Self {
        Gate { kind, qubits: vec![q], params: Vec::new() }
    }

    pub fn one_p(kind: GateKind, q: u32, params: Vec<f64>) -> Self {
        Gate { kind, qubits: vec![q], params }
    }

    pub fn two(kind: GateKind, a: u32, b: u32) -> Self {
        Gate { kind, qubits: vec![a, b], params: Vec::new() }
    }

    pub fn two_p(kind: GateKind, a: u32, b: u32, params: Vec<f64>) -> Self {
        Gate { kind, qubits: vec![a, b], params }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: u32,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: u32) -> Self {
        Circuit { n_qubits, gates: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for (index, g) in self.gates.iter().enumerate() {
            if g.qubits.iter().any(|&q| q >= self.n_qubits) {
                return Err(CircuitError::OperandOutOfRange { index, n_qubits: self.n_qubits });
            }
            if g.qubits.len() == 2 && g.qubits[0] == g.qubits[1] {
                return Err(CircuitError::RepeatedOperand { index });
            }
        }
        Ok(())
    }

    /// Count of gates acting on two qubits.
    pub fn n_two_qubit(&self) -> usize {
        self.gates.iter().filter(|g| g.qubits.len() == 2).count()
    }
}

/// The u3(theta, phi, lambda) matrix in the OpenQASM convention.
fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> CMat2 {
    let (ct, st) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    CMat2::new(
        c(ct, 0.0),
        -c(lambda.cos(), lambda.sin()) * st,
        c(phi.cos(), phi.sin()) * st,
        c((phi + lambda).cos(), (phi + lambda).sin()) * ct,
    )
}

/// Euler angles (theta, phi, lambda) with u3(theta, phi, lambda) equal
/// to `m` up to global phase.
pub fn zyz_angles(m: &CMat2) -> (f64, f64, f64) {
    let (u, _) = su2_normalize(m);
    let theta = 2.0 * u[(1, 0)].norm().atan2(u[(0, 0)].norm());
    if u[(0, 0)].norm() < 1e-12 {
        (theta, 2.0 * u[(1, 0)].arg(), 0.0)
    } else if u[(1, 0)].norm() < 1e-12 {
        (theta, 0.0, u[(1, 1)].arg() - u[(0, 0)].arg())
    } else {
        let base = u[(0, 0)].arg();
        (theta, u[(1, 0)].arg() - base, u[(0, 1)].arg() - base + PI)
    }
}

fn gate_matrix1(kind: GateKind, params: &[f64]) -> CMat2 {
    let r = FRAC_1_SQRT_2;
    match kind {
        GateKind::X => CMat2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
        GateKind::Y => CMat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
        GateKind::Z => CMat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
        GateKind::H => CMat2::new(c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)),
        GateKind::S => CMat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)),
        GateKind::Sdg => CMat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)),
        GateKind::T => CMat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(r, r)),
        GateKind::Tdg => CMat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(r, -r)),
        GateKind::Rx => {
            let (ch, sh) = ((params[0] / 2.0).cos(), (params[0] / 2.0).sin());
            CMat2::new(c(ch, 0.0), c(0.0, -sh), c(0.0, -sh), c(ch, 0.0))
        }
        GateKind::Ry => {
            let (ch, sh) = ((params[0] / 2.0).cos(), (params[0] / 2.0).sin());
            CMat2::new(c(ch, 0.0), c(-sh, 0.0), c(sh, 0.0), c(ch, 0.0))
        }
        GateKind::Rz => {
            let h = params[0] / 2.0;
            CMat2::new(c(h.cos(), -h.sin()), c(0.0, 0.0), c(0.0, 0.0), c(h.cos(), h.sin()))
        }
        GateKind::U3 => u3_matrix(params[0], params[1], params[2]),
        _ => unreachable!("one-qubit matrix of a two-qubit gate"),
    }
}

fn gate_matrix2(kind: GateKind, params: &[f64]) -> CMat4 {
    match kind {
        GateKind::Cx => *Unitary2Q::cnot().matrix(),
        GateKind::Cz => *Unitary2Q::cz().matrix(),
        GateKind::Swap => *Unitary2Q::swap().matrix(),
        GateKind::Iswap => *Unitary2Q::iswap().matrix(),
        GateKind::Cp => {
            let mut m = CMat4::identity();
            m[(3, 3)] = c(params[0].cos(), params[0].sin());
            m
        }
        GateKind::Crz => {
            let h = params[0] / 2.0;
            let mut m = CMat4::identity();
            m[(2, 2)] = c(h.cos(), -h.sin());
            m[(3, 3)] = c(h.cos(), h.sin());
            m
        }
        _ => unreachable!("two-qubit matrix of a {kind} gate"),
    }
}

const MAX_SIM_QUBITS: u32 = 12;

fn apply_gate1(u: &mut DMatrix<C64>, n_qubits: u32, q: u32, m: &CMat2) {
    let dim = 1usize << n_qubits;
    let bit = 1usize << q;
    for col in 0..dim {
        for i0 in 0..dim {
            if i0 & bit != 0 {
                continue;
            }
            let i1 = i0 | bit;
            let (a, b) = (u[(i0, col)], u[(i1, col)]);
            u[(i0, col)] = m[(0, 0)] * a + m[(0, 1)] * b;
            u[(i1, col)] = m[(1, 0)] * a + m[(1, 1)] * b;
        }
    }
}

fn apply_gate2(u: &mut DMatrix<C64>, n_qubits: u32, qa: u32, qb: u32, m: &CMat4) {
    let dim = 1usize << n_qubits;
    let (ba, bb) = (1usize << qa, 1usize << qb);
    for col in 0..dim {
        for i00 in 0..dim {
            if i00 & (ba | bb) != 0 {
                continue;
            }
            let idx = [i00, i00 | bb, i00 | ba, i00 | ba | bb];
            let v: Vec<C64> = idx.iter().map(|&i| u[(i, col)]).collect();
            for r in 0..4 {
                u[(idx[r], col)] =
                    m[(r, 0)] * v[0] + m[(r, 1)] * v[1] + m[(r, 2)] * v[2] + m[(r, 3)] * v[3];
            }
        }
    }
}

/// Full unitary of a small circuit; the first operand of a two-qubit
/// gate is the more significant bit of the state index. `resolve_native`
/// supplies the matrix of a lowered native gate for its qubit pair.
pub fn dense_unitary_with(
    circuit: &Circuit,
    resolve_native: &dyn Fn(u32, u32) -> Option<CMat4>,
) -> Result<DMatrix<C64>, CircuitError> {
    if circuit.n_qubits > MAX_SIM_QUBITS {
        return Err(CircuitError::TooLargeToSimulate {
            n_qubits: circuit.n_qubits,
            max: MAX_SIM_QUBITS,
        });
    }
    circuit.validate()?;
    let dim = 1usize << circuit.n_qubits;
    let mut u = DMatrix::<C64>::identity(dim, dim);
    for g in &circuit.gates {
        match g.qubits.len() {
            1 => apply_gate1(&mut u, circuit.n_qubits, g.qubits[0], &gate_matrix1(g.kind, &g.params)),
            _ => {
                let m = if g.kind == GateKind::Native {
                    resolve_native(g.qubits[0], g.qubits[1])
                        .ok_or(CircuitError::UnresolvedNative)?
                } else {
                    gate_matrix2(g.kind, &g.params)
                };
                apply_gate2(&mut u, circuit.n_qubits, g.qubits[0], g.qubits[1], &m);
            }
        }
    }
    Ok(u)
}

pub fn dense_unitary(circuit: &Circuit) -> Result<DMatrix<C64>, CircuitError> {
    dense_unitary_with(circuit, &|_, _| None)
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Str(String),
    Sym(char),
    Arrow,
    Eof,
}

struct Located {
    token: Token,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { chars: text.chars().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.chars.next()?;
        if ch == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(ch)
    }

    fn next_token(&mut self) -> Result<Located, CircuitError> {
        loop {
            match self.chars.peek() {
                Some(ch) if ch.is_whitespace() => {
                    self.bump();
                }
                Some('/') => {
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    if self.chars.peek() == Some(&'/') {
                        while let Some(ch) = self.bump() {
                            if ch == '\n' {
                                break;
                            }
                        }
                    } else {
                        return Ok(Located { token: Token::Sym('/'), line, col });
                    }
                }
                _ => break,
            }
        }
        let (line, col) = (self.line, self.col);
        let Some(&ch) = self.chars.peek() else {
            return Ok(Located { token: Token::Eof, line, col });
        };
        if ch.is_ascii_alphabetic() || ch == '_' {
            let mut name = String::new();
            while let Some(&ch) = self.chars.peek() {
                if ch.is_ascii_alphanumeric() || ch == '_' {
                    name.push(ch);
                    self.bump();
                } else {
                    break;
                }
            }
            return Ok(Located { token: Token::Ident(name), line, col });
        }
        if ch.is_ascii_digit() || ch == '.' {
            let mut raw = String::new();
            while let Some(&ch) = self.chars.peek() {
                if ch.is_ascii_digit() || ch == '.' {
                    raw.push(ch);
                    self.bump();
                } else if ch == 'e' || ch == 'E' {
                    raw.push(ch);
                    self.bump();
                    if let Some(&sign) = self.chars.peek() {
                        if sign == '+' || sign == '-' {
                            raw.push(sign);
                            self.bump();
                        }
                    }
                } else {
                    break;
                }
            }
            let value: f64 = raw
                .parse()
                .map_err(|_| CircuitError::Parse { line, col, message: format!("bad number \"{raw}\"") })?;
            return Ok(Located { token: Token::Number(value), line, col });
        }
        if ch == '"' {
            self.bump();
            let mut s = String::new();
            loop {
                match self.bump() {
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => {
                        return Err(CircuitError::Parse {
                            line,
                            col,
                            message: "unterminated string".into(),
                        })
                    }
                }
            }
            return Ok(Located { token: Token::Str(s), line, col });
        }
        if ch == '-' {
            self.bump();
            if self.chars.peek() == Some(&'>') {
                self.bump();
                return Ok(Located { token: Token::Arrow, line, col });
            }
            return Ok(Located { token: Token::Sym('-'), line, col });
        }
        if "[](){};,+*/".contains(ch) {
            self.bump();
            return Ok(Located { token: Token::Sym(ch), line, col });
        }
        Err(CircuitError::Parse { line, col, message: format!("unexpected character '{ch}'") })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: Option<Located>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { lexer: Lexer::new(text), lookahead: None }
    }

    fn peek(&mut self) -> Result<&Located, CircuitError> {
        if self.lookahead.is_none() {
            self.lookahead = Some(self.lexer.next_token()?);
        }
        Ok(self.lookahead.as_ref().unwrap())
    }

    fn next(&mut self) -> Result<Located, CircuitError> {
        match self.lookahead.take() {
            Some(t) => Ok(t),
            None => self.lexer.next_token(),
        }
    }

    fn expect_sym(&mut self, sym: char) -> Result<(), CircuitError> {
        let t = self.next()?;
        if t.token == Token::Sym(sym) {
            Ok(())
        } else {
            Err(err_at(&t, format!("expected '{sym}'")))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Located), CircuitError> {
        let t = self.next()?;
        if let Token::Ident(name) = &t.token {
            let name = name.clone();
            Ok((name, t))
        } else {
            Err(err_at(&t, "expected identifier"))
        }
    }

    fn skip_statement(&mut self) -> Result<(), CircuitError> {
        loop {
            let t = self.next()?;
            match t.token {
                Token::Sym(';') => return Ok(()),
                Token::Eof => return Err(err_at(&t, "expected ';'")),
                _ => {}
            }
        }
    }

    fn expr(&mut self) -> Result<f64, CircuitError> {
        let mut value = self.term()?;
        loop {
            match self.peek()?.token {
                Token::Sym('+') => {
                    self.next()?;
                    value += self.term()?;
                }
                Token::Sym('-') => {
                    self.next()?;
                    value -= self.term()?;
                }
                _ => return Ok(value),
            }
        }
    }

    fn term(&mut self) -> Result<f64, CircuitError> {
        let mut value = self.factor()?;
        loop {
            match self.peek()?.token {
                Token::Sym('*') => {
                    self.next()?;
                    value *= self.factor()?;
                }
                Token::Sym('/') => {
                    self.next()?;
                    value /= self.factor()?;
                }
                _ => return Ok(value),
            }
        }
    }

    fn factor(&mut self) -> Result<f64, CircuitError> {
        let t = self.next()?;
        match t.token {
            Token::Number(v) => Ok(v),
            Token::Ident(ref name) if name == "pi" => Ok(PI),
            Token::Sym('-') => Ok(-self.factor()?),
            Token::Sym('(') => {
                let v = self.expr()?;
                self.expect_sym(')')?;
                Ok(v)
            }
            _ => Err(err_at(&t, "expected angle expression")),
        }
    }

    fn operand(&mut self, reg: &str, size: u32) -> Result<u32, CircuitError> {
        let (name, at) = self.expect_ident()?;
        if name != reg {
            return Err(err_at(&at, format!("unknown register \"{name}\"")));
        }
        self.expect_sym('[')?;
        let t = self.next()?;
        let Token::Number(v) = &t.token else {
            return Err(err_at(&t, "expected qubit index"));
        };
        let v = *v;
        let idx = v as u32;
        if v.fract() != 0.0 || idx >= size {
            return Err(err_at(&t, format!("qubit index {v} out of range")));
        }
        self.expect_sym(']')?;
        Ok(idx)
    }
}

fn err_at(t: &Located, message: impl Into<String>) -> CircuitError {
    CircuitError::Parse { line: t.line, col: t.col, message: message.into() }
}

/// Parses the supported QASM-2 subset: a single qreg, the gate set
/// {x, y, z, h, s, sdg, t, tdg, rx, ry, rz, u3, cx, cz, swap, iswap,
/// cp, crz}, angle expressions over numbers and pi. Barriers, cregs,
/// and measurements are dropped; anything else is rejected with its
/// location.
pub fn parse_qasm(text: &str) -> Result<Circuit, CircuitError> {
    let mut p = Parser::new(text);
    let mut reg: Option<(String, u32)> = None;
    let mut gates = Vec::new();
    loop {
        let t = p.next()?;
        let (name, at) = match t.token {
            Token::Eof => break,
            Token::Ident(ref name) => (name.clone(), t),
            _ => return Err(err_at(&t, "expected statement")),
        };
        match name.as_str() {
            "OPENQASM" => {
                let v = p.next()?;
                if !matches!(v.token, Token::Number(_)) {
                    return Err(err_at(&v, "expected version number"));
                }
                p.expect_sym(';')?;
            }
            "include" => p.skip_statement()?,
            "qreg" => {
                if reg.is_some() {
                    return Err(err_at(&at, "only one qreg is supported"));
                }
                let (rname, _) = p.expect_ident()?;
                p.expect_sym('[')?;
                let szt = p.next()?;
                let Token::Number(v) = &szt.token else {
                    return Err(err_at(&szt, "expected register size"));
                };
                let v = *v;
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(err_at(&szt, "register size must be a positive integer"));
                }
                p.expect_sym(']')?;
                p.expect_sym(';')?;
                reg = Some((rname, v as u32));
            }
            "creg" | "barrier" | "measure" | "reset" => p.skip_statement()?,
            _ => {
                let Some(kind) = GateKind::from_name(&name) else {
                    return Err(CircuitError::UnsupportedGate { name });
                };
                let Some((reg_name, size)) = reg.clone() else {
                    return Err(err_at(&at, "gate before qreg declaration"));
                };
                let mut params = Vec::new();
                if p.peek()?.token == Token::Sym('(') {
                    p.next()?;
                    loop {
                        params.push(p.expr()?);
                        let t = p.next()?;
                        match t.token {
                            Token::Sym(',') => {}
                            Token::Sym(')') => break,
                            _ => return Err(err_at(&t, "expected ',' or ')'")),
                        }
                    }
                }
                if params.len() != kind.n_params() {
                    return Err(err_at(
                        &at,
                        format!("{name} takes {} parameter(s), got {}", kind.n_params(), params.len()),
                    ));
                }
                let mut operands = vec![p.operand(&reg_name, size)?];
                while p.peek()?.token == Token::Sym(',') {
                    p.next()?;
                    operands.push(p.operand(&reg_name, size)?);
                }
                p.expect_sym(';')?;
                match (kind.arity(), operands.len()) {
                    (1, 1) => gates.push(Gate { kind, qubits: operands, params }),
                    (2, 2) => {
                        if operands[0] == operands[1] {
                            return Err(err_at(&at, "repeated operand"));
                        }
                        gates.push(Gate { kind, qubits: operands, params });
                    }
                    (arity, got) => {
                        return Err(err_at(&at, format!("{name} takes {arity} operand(s), got {got}")))
                    }
                }
            }
        }
    }
    let n_qubits = reg.map(|(_, size)| size).unwrap_or(0);
    let circuit = Circuit { n_qubits, gates };
    circuit.validate()?;
    Ok(circuit)
}

/// Inverse of [`parse_qasm`] for circuits over the standard gate set;
/// native gates have no QASM spelling.
pub fn emit_qasm(circuit: &Circuit) -> Result<String, CircuitError> {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", circuit.n_qubits);
    for g in &circuit.gates {
        if g.kind == GateKind::Native {
            return Err(CircuitError::UnsupportedGate { name: "native".into() });
        }
        let _ = write!(out, "{}", g.kind);
        if !g.params.is_empty() {
            let rendered: Vec<String> = g.params.iter().map(|v| format!("{v:?}")).collect();
            let _ = write!(out, "({})", rendered.join(","));
        }
        let operands: Vec<String> = g.qubits.iter().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(out, " {};", operands.join(","));
    }
    Ok(out)
}

/// Bernstein-Vazirani on `n` qubits, the last being the phase ancilla;
/// `secret` is read over the `n - 1` data bits.
pub fn gen_bv(n: u32, secret: u64) -> Circuit {
    assert!(n >= 2, "need a data qubit and the ancilla");
    let anc = n - 1;
    let mut c = Circuit::new(n);
    c.gates.push(Gate::one(GateKind::X, anc));
    for q in 0..n {
        c.gates.push(Gate::one(GateKind::H, q));
    }
    for b in 0..n - 1 {
        if secret >> b & 1 == 1 {
            c.gates.push(Gate::two(GateKind::Cx, b, anc));
        }
    }
    for q in 0..n - 1 {
        c.gates.push(Gate::one(GateKind::H, q));
    }
    c
}

/// Quantum Fourier transform matching the DFT matrix on state indices
/// (qubit k carrying bit weight 2^k), including the final reversal.
pub fn gen_qft(n: u32) -> Circuit {
    assert!(n >= 2);
    let mut c = Circuit::new(n);
    for q in (0..n).rev() {
        c.gates.push(Gate::one(GateKind::H, q));
        for m in (0..q).rev() {
            let angle = PI / f64::from(1u32 << (q - m));
            c.gates.push(Gate::two_p(GateKind::Cp, m, q, vec![angle]));
        }
    }
    for q in 0..n / 2 {
        c.gates.push(Gate::two(GateKind::Swap, q, n - 1 - q));
    }
    c
}

/// Depth-1 QAOA for MaxCut on a seeded Erdos-Renyi graph.
pub fn gen_qaoa(n: u32, edge_prob: f64, seed: u64, gamma: f64, beta: f64) -> Circuit {
    assert!(n >= 2);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n);
    for q in 0..n {
        c.gates.push(Gate::one(GateKind::H, q));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < edge_prob {
                c.gates.push(Gate::two(GateKind::Cx, i, j));
                c.gates.push(Gate::one_p(GateKind::Rz, j, vec![2.0 * gamma]));
                c.gates.push(Gate::two(GateKind::Cx, i, j));
            }
        }
    }
    for q in 0..n {
        c.gates.push(Gate::one_p(GateKind::Rx, q, vec![2.0 * beta]));
    }
    c
}

fn push_ccx(c: &mut Circuit, a: u32, b: u32, t: u32) {
    c.gates.push(Gate::one(GateKind::H, t));
    c.gates.push(Gate::two(GateKind::Cx, b, t));
    c.gates.push(Gate::one(GateKind::Tdg, t));
    c.gates.push(Gate::two(GateKind::Cx, a, t));
    c.gates.push(Gate::one(GateKind::T, t));
    c.gates.push(Gate::two(GateKind::Cx, b, t));
    c.gates.push(Gate::one(GateKind::Tdg, t));
    c.gates.push(Gate::two(GateKind::Cx, a, t));
    c.gates.push(Gate::one(GateKind::T, b));
    c.gates.push(Gate::one(GateKind::T, t));
    c.gates.push(Gate::one(GateKind::H, t));
    c.gates.push(Gate::two(GateKind::Cx, a, b));
    c.gates.push(Gate::one(GateKind::T, a));
    c.gates.push(Gate::one(GateKind::Tdg, b));
    c.gates.push(Gate::two(GateKind::Cx, a, b));
}

/// Cuccaro ripple-carry adder on two `n`-bit registers: qubit 0 is the
/// incoming carry, bits interleave as b_i = 1 + 2i and a_i = 2 + 2i,
/// and the top qubit receives the carry out; b ends holding a + b.
/// Toffolis are expanded into the standard T-depth network.
pub fn gen_cuccaro(n: u32) -> Circuit {
    assert!(n >= 2);
    let b = |i: u32| 1 + 2 * i;
    let a = |i: u32| 2 + 2 * i;
    let z = 2 * n + 1;
    let mut c = Circuit::new(2 * n + 2);
    let maj = |c: &mut Circuit, x: u32, y: u32, t: u32| {
        c.gates.push(Gate::two(GateKind::Cx, t, y));
        c.gates.push(Gate::two(GateKind::Cx, t, x));
        push_ccx(c, x, y, t);
    };
    let uma = |c: &mut Circuit, x: u32, y: u32, t: u32| {
        push_ccx(c, x, y, t);
        c.gates.push(Gate::two(GateKind::Cx, t, x));
        c.gates.push(Gate::two(GateKind::Cx, x, y));
    };
    maj(&mut c, 0, b(0), a(0));
    for i in 1..n {
        maj(&mut c, a(i - 1), b(i), a(i));
    }
    c.gates.push(Gate::two(GateKind::Cx, a(n - 1), z));
    for i in (1..n).rev() {
        uma(&mut c, a(i - 1), b(i), a(i));
    }
    uma(&mut c, 0, b(0), a(0));
    c
}

/// A routed circuit over device qubit indices, with the SWAPs the
/// router inserted and the logical-to-physical maps before and after.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoutedCircuit {
    pub circuit: Circuit,
    pub initial_layout: Vec<u32>,
    pub final_layout: Vec<u32>,
    pub swap_count: usize,
}

fn adjacency(device: &DeviceModel) -> Vec<Vec<u32>> {
    let n = device.n_qubits() as usize;
    let mut adj = vec![Vec::new(); n];
    for e in &device.edges {
        let (i, j) = (device.site_index(e.a), device.site_index(e.b));
        adj[i as usize].push(j);
        adj[j as usize].push(i);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

fn bfs_path(adj: &[Vec<u32>], from: u32, to: u32) -> Vec<u32> {
    let mut prev = vec![u32::MAX; adj.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    prev[from as usize] = from;
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &w in &adj[v as usize] {
            if prev[w as usize] == u32::MAX {
                prev[w as usize] = v;
                queue.push_back(w);
            }
        }
    }
    assert!(prev[to as usize] != u32::MAX, "device graph is disconnected");
    let mut path = vec![to];
    let mut v = to;
    while v != from {
        v = prev[v as usize];
        path.push(v);
    }
    path.reverse();
    path
}

/// Maps a logical circuit onto the device with greedy shortest-path
/// SWAP insertion (lowest-index tie-break via the sorted adjacency
/// lists). `initial_layout[l]` is the device qubit hosting logical
/// qubit `l` at circuit start.
pub fn route(circuit: &Circuit, device: &DeviceModel, initial_layout: &[u32]) -> RoutedCircuit {
    let n_dev = device.n_qubits();
    assert!(circuit.n_qubits <= n_dev, "circuit does not fit the device");
    assert_eq!(initial_layout.len(), circuit.n_qubits as usize, "layout size mismatch");
    let mut seen = vec![false; n_dev as usize];
    for &p in initial_layout {
        assert!(p < n_dev && !std::mem::replace(&mut seen[p as usize], true), "bad layout");
    }
    let adj = adjacency(device);
    let mut phys: Vec<u32> = initial_layout.to_vec();
    let mut out = Circuit::new(n_dev);
    let mut swap_count = 0usize;
    for g in &circuit.gates {
        match g.qubits.len() {
            1 => out
                .gates
                .push(Gate::one_p(g.kind, phys[g.qubits[0] as usize], g.params.clone())),
            _ => {
                assert!(g.kind != GateKind::Native, "route runs before lowering");
                let (la, lb) = (g.qubits[0] as usize, g.qubits[1] as usize);
                let path = bfs_path(&adj, phys[la], phys[lb]);
                for k in 0..path.len().saturating_sub(2) {
                    let (u, v) = (path[k], path[k + 1]);
                    out.gates.push(Gate::two(GateKind::Swap, u, v));
                    swap_count += 1;
                    for p in &mut phys {
                        if *p == u {
                            *p = v;
                        } else if *p == v {
                            *p = u;
                        }
                    }
                }
                out.gates.push(Gate::two_p(g.kind, phys[la], phys[lb], g.params.clone()));
            }
        }
    }
    RoutedCircuit {
        circuit: out,
        initial_layout: initial_layout.to_vec(),
        final_layout: phys,
        swap_count,
    }
}

/// The first `n` device qubits in row-major order.
pub fn default_layout(n: u32) -> Vec<u32> {
    (0..n).collect()
}

fn swap_conjugate(m: &CMat4) -> CMat4 {
    let s = Unitary2Q::swap();
    s.matrix() * m * s.matrix()
}

struct Fuser {
    pending: Vec<Option<CMat2>>,
    out: Vec<Gate>,
}

impl Fuser {
    fn new(n: u32) -> Self {
        Fuser { pending: vec![None; n as usize], out: Vec::new() }
    }

    fn absorb(&mut self, q: u32, m: &CMat2) {
        let slot = &mut self.pending[q as usize];
        *slot = Some(match slot.take() {
            Some(acc) => m * acc,
            None => *m,
        });
    }

    fn flush(&mut self, q: u32) {
        if let Some(m) = self.pending[q as usize].take() {
            let (theta, phi, lambda) = zyz_angles(&m);
            let rebuilt = u3_matrix(theta, phi, lambda);
            if max_abs_diff2(&rebuilt, &CMat2::identity()) > 1e-12 {
                self.out.push(Gate::one_p(GateKind::U3, q, vec![theta, phi, lambda]));
            }
        }
    }
}

/// Rewrites every two-qubit gate of a routed circuit into layers of the
/// edge's native basis gate, using cached decompositions where they
/// apply and falling back to on-demand synthesis. Adjacent one-qubit
/// gates fuse into single u3 rotations; exact-identity residues vanish.
pub fn lower(
    circuit: &Circuit,
    device: &DeviceModel,
    edge_bases: &[((SiteId, SiteId), Unitary2Q)],
    cache: &DecompositionCache,
    opts: &SynthesisOptions,
) -> Result<Circuit, CircuitError> {
    let mut fuser = Fuser::new(circuit.n_qubits);
    let mut synthesized: HashMap<String, GateDecomposition> = HashMap::new();
    for g in &circuit.gates {
        match g.qubits.len() {
            1 => fuser.absorb(g.qubits[0], &gate_matrix1(g.kind, &g.params)),
            _ if g.kind == GateKind::Native => {
                fuser.flush(g.qubits[0]);
                fuser.flush(g.qubits[1]);
                fuser.out.push(g.clone());
            }
            _ => {
                let (pa, pb) = (g.qubits[0], g.qubits[1]);
                let (sa, sb) = (device.index_site(pa), device.index_site(pb));
                let entry = edge_bases
                    .iter()
                    .find(|(e, _)| (e.0 == sa && e.1 == sb) || (e.0 == sb && e.1 == sa))
                    .ok_or(CircuitError::MissingBasis { edge: (sa, sb) })?;
                let (edge, basis) = (&entry.0, &entry.1);
                let aligned = edge.0 == sa;
                let (qa, qb) = if aligned { (pa, pb) } else { (pb, pa) };
                let decomposition = cached_or_synthesize(
                    g,
                    aligned,
                    *edge,
                    basis,
                    cache,
                    opts,
                    &mut synthesized,
                )?;
                emit_layers(&mut fuser, &decomposition, qa, qb);
            }
        }
    }
    for q in 0..circuit.n_qubits {
        fuser.flush(q);
    }
    Ok(Circuit { n_qubits: circuit.n_qubits, gates: fuser.out })
}

fn emit_layers(fuser: &mut Fuser, d: &GateDecomposition, qa: u32, qb: u32) {
    let n = d.locals.len() - 1;
    for (k, (la, lb)) in d.locals.iter().enumerate() {
        fuser.absorb(qa, &la.0);
        fuser.absorb(qb, &lb.0);
        if k < n {
            fuser.flush(qa);
            fuser.flush(qb);
            fuser.out.push(Gate::two(GateKind::Native, qa, qb));
        }
    }
}

fn cached_or_synthesize(
    g: &Gate,
    aligned: bool,
    edge: (SiteId, SiteId),
    basis: &Unitary2Q,
    cache: &DecompositionCache,
    opts: &SynthesisOptions,
    synthesized: &mut HashMap<String, GateDecomposition>,
) -> Result<GateDecomposition, CircuitError> {
    let symmetric = matches!(g.kind, GateKind::Cz | GateKind::Swap | GateKind::Iswap | GateKind::Cp);
    let cache_name = match g.kind {
        GateKind::Cx => Some("cnot"),
        GateKind::Cz => Some("cz"),
        GateKind::Swap => Some("swap"),
        GateKind::Iswap => Some("iswap"),
        _ => None,
    };
    if let Some(name) = cache_name {
        if let Some(d) = cache.get(edge, name) {
            if aligned || symmetric {
                return Ok(d.clone());
            }
            if g.kind == GateKind::Cx {
                // CX with control and target exchanged is the cached CX
                // in the Hadamard frame on both qubits
                let mut d = d.clone();
                let h = gate_matrix1(GateKind::H, &[]);
                let last = d.locals.len() - 1;
                d.locals[0].0 .0 = d.locals[0].0 .0 * h;
                d.locals[0].1 .0 = d.locals[0].1 .0 * h;
                d.locals[last].0 .0 = h * d.locals[last].0 .0;
                d.locals[last].1 .0 = h * d.locals[last].1 .0;
                return Ok(d);
            }
        }
    }
    let mut target = gate_matrix2(g.kind, &g.params);
    if !aligned && !symmetric {
        target = swap_conjugate(&target);
    }
    let key = format!(
        "{:?}-{:?}/{}{}{:?}",
        edge.0,
        edge.1,
        g.kind,
        if aligned || symmetric { "" } else { "~" },
        g.params
    );
    if let Some(d) = synthesized.get(&key) {
        return Ok(d.clone());
    }
    let target = Unitary2Q::new(target).expect("gate matrices are unitary");
    let depth = min_layers(target.kak().coordinate, basis.kak().coordinate);
    match synthesize(&target, std::slice::from_ref(basis), depth.layers, opts) {
        Ok(d) => {
            synthesized.insert(key, d.clone());
            Ok(d)
        }
        Err(SynthError::SynthesisFailed { best_infidelity, .. }) => Err(CircuitError::LoweringFailed {
            edge,
            gate: format!("{}{:?}", g.kind, g.params),
            best_infidelity,
        }),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduledGate {
    pub gate: Gate,
    pub start: f64,
    pub duration: f64,
}

/// A circuit with ASAP start times, in nanoseconds. `qubit_start[q]` /
/// `qubit_end[q]` span from the first gate touching `q` to the end of
/// the last one (both zero for idle qubits).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduledCircuit {
    pub n_qubits: u32,
    pub gates: Vec<ScheduledGate>,
    pub qubit_start: Vec<f64>,
    pub qubit_end: Vec<f64>,
    pub total_duration: f64,
}

/// As-soon-as-possible list scheduling with qubit exclusivity: every
/// one-qubit gate lasts `d_1q`, every two-qubit gate the duration its
/// edge maps to (keyed by unordered index pair).
pub fn schedule(
    circuit: &Circuit,
    d_1q: f64,
    edge_durations: &HashMap<(u32, u32), f64>,
) -> ScheduledCircuit {
    assert!(d_1q > 0.0);
    let n = circuit.n_qubits as usize;
    let mut ready = vec![0.0f64; n];
    let mut first = vec![f64::INFINITY; n];
    let mut gates = Vec::with_capacity(circuit.gates.len());
    for g in &circuit.gates {
        let duration = if g.qubits.len() == 1 {
            d_1q
        } else {
            let (a, b) = (g.qubits[0].min(g.qubits[1]), g.qubits[0].max(g.qubits[1]));
            *edge_durations
                .get(&(a, b))
                .unwrap_or_else(|| panic!("no duration for edge ({a}, {b})"))
        };
        assert!(duration > 0.0, "durations must be positive");
        let start = g.qubits.iter().map(|&q| ready[q as usize]).fold(0.0, f64::max);
        for &q in &g.qubits {
            ready[q as usize] = start + duration;
            first[q as usize] = first[q as usize].min(start);
        }
        gates.push(ScheduledGate { gate: g.clone(), start, duration });
    }
    let qubit_start: Vec<f64> = first.iter().map(|&t| if t.is_finite() { t } else { 0.0 }).collect();
    let qubit_end = ready;
    let total_duration = qubit_end.iter().fold(0.0f64, |a, &b| a.max(b));
    ScheduledCircuit { n_qubits: circuit.n_qubits, gates, qubit_start, qubit_end, total_duration }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger4, haar_su2};

    fn mat_of(kind: GateKind, params: &[f64]) -> CMat2 {
        gate_matrix1(kind, params)
    }

    #[test]
    fn one_qubit_matrices_satisfy_their_algebra() {
        let id = CMat2::identity();
        assert!(max_abs_diff2(&(mat_of(GateKind::H, &[]) * mat_of(GateKind::H, &[])), &id) < 1e-15);
        assert!(
            max_abs_diff2(
                &(mat_of(GateKind::S, &[]) * mat_of(GateKind::S, &[])),
                &mat_of(GateKind::Z, &[])
            ) < 1e-15
        );
        assert!(
            max_abs_diff2(
                &(mat_of(GateKind::T, &[]) * mat_of(GateKind::T, &[])),
                &mat_of(GateKind::S, &[])
            ) < 1e-15
        );
        assert!(
            max_abs_diff2(
                &(mat_of(GateKind::Sdg, &[]) * mat_of(GateKind::S, &[])),
                &id
            ) < 1e-15
        );
        assert!(
            max_abs_diff2(
                &(mat_of(GateKind::Tdg, &[]) * mat_of(GateKind::T, &[])),
                &id
            ) < 1e-15
        );
        let minus_iy = mat_of(GateKind::Ry, &[PI]);
        assert!((minus_iy[(1, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn euler_angles_rebuild_their_matrix() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let m = haar_su2(&mut rng);
            let (theta, phi, lambda) = zyz_angles(&m);
            let rebuilt = u3_matrix(theta, phi, lambda);
            let (u, _) = su2_normalize(&m);
            let (v, _) = su2_normalize(&rebuilt);
            let d = max_abs_diff2(&u, &v).min(max_abs_diff2(&(-u), &v));
            assert!(d < 1e-10, "angle extraction drifted by {d}");
        }
    }

    #[test]
    fn a_two_gate_program_parses_to_its_gate_list() {
        let c = parse_qasm("qreg q[2]; cx q[0],q[1];").unwrap();
        assert_eq!(c.n_qubits, 2);
        assert_eq!(c.gates, vec![Gate::two(GateKind::Cx, 0, 1)]);
    }

    #[test]
    fn full_headers_and_ignored_statements_parse() {
        let text = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\ncreg c[3];\n\
                    h q[0];\nbarrier q[0],q[1];\nrz(pi/4) q[1];\ncp(-pi/2) q[0],q[2];\n\
                    measure q[0] -> c[0];\n";
        let c = parse_qasm(text).unwrap();
        assert_eq!(c.gates.len(), 3);
        assert!((c.gates[1].params[0] - PI / 4.0).abs() < 1e-15);
        assert!((c.gates[2].params[0] + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_gates_are_named_in_the_rejection() {
        let err = parse_qasm("qreg q[3]; ccx q[0],q[1],q[2];").unwrap_err();
        match err {
            CircuitError::UnsupportedGate { name } => assert_eq!(name, "ccx"),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn parse_errors_carry_their_location() {
        let err = parse_qasm("qreg q[2];\ncx q[0] q[1];").unwrap_err();
        match err {
            CircuitError::Parse { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col >= 9);
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn angle_arithmetic_follows_precedence() {
        let c = parse_qasm("qreg q[1]; rz(1+2*3) q[0]; rz(2*(1+1)/4) q[0];").unwrap();
        assert!((c.gates[0].params[0] - 7.0).abs() < 1e-15);
        assert!((c.gates[1].params[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bernstein_vazirani_has_one_entangler_per_secret_bit() {
        let c = gen_bv(5, 0b1111);
        assert_eq!(c.gates.iter().filter(|g| g.kind == GateKind::Cx).count(), 4);
        let sparse = gen_bv(5, 0b0101);
        assert_eq!(sparse.gates.iter().filter(|g| g.kind == GateKind::Cx).count(), 2);
    }

    #[test]
    fn fourier_transform_counts_controlled_phases() {
        for n in [2u32, 3, 5] {
            let c = gen_qft(n);
            let cps = c.gates.iter().filter(|g| g.kind == GateKind::Cp).count();
            assert_eq!(cps, (n * (n - 1) / 2) as usize);
        }
    }

    #[test]
    fn seeded_graph_circuits_are_reproducible() {
        let a = gen_qaoa(8, 0.33, 42, 0.7, 0.3);
        let b = gen_qaoa(8, 0.33, 42, 0.7, 0.3);
        assert_eq!(a, b);
        let other = gen_qaoa(8, 0.33, 43, 0.7, 0.3);
        assert_ne!(a, other);
    }

    #[test]
    fn adder_layout_has_interleaved_registers() {
        let c = gen_cuccaro(3);
        assert_eq!(c.n_qubits, 8);
        c.validate().unwrap();
    }

    #[test]
    fn simulator_reproduces_single_gate_matrices() {
        let mut c = Circuit::new(2);
        c.gates.push(Gate::two(GateKind::Cx, 0, 1));
        let u = dense_unitary(&c).unwrap();
        let m = Unitary2Q::cnot();
        for r in 0..4 {
            for col in 0..4 {
                // state index bit 1 is qubit 0, the first operand
                let flip = |i: usize| (i >> 1) | ((i & 1) << 1);
                assert!((u[(flip(r), flip(col))] - m.matrix()[(r, col)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn bell_circuit_prepares_the_bell_state() {
        let mut c = Circuit::new(2);
        c.gates.push(Gate::one(GateKind::H, 0));
        c.gates.push(Gate::two(GateKind::Cx, 0, 1));
        let u = dense_unitary(&c).unwrap();
        let amp = FRAC_1_SQRT_2;
        assert!((u[(0, 0)].re - amp).abs() < 1e-15);
        assert!((u[(3, 0)].re - amp).abs() < 1e-15);
        assert!(u[(1, 0)].norm() < 1e-15);
        assert!(u[(2, 0)].norm() < 1e-15);
    }

    #[test]
    fn routing_leaves_adjacent_programs_untouched() {
        let device = crate::hamsim::generate_device(2, 2, 3, 2.0e10, 3.0e10, 0.01, 80e-6);
        let mut c = Circuit::new(2);
        c.gates.push(Gate::two(GateKind::Cx, 0, 1));
        let routed = route(&c, &device, &[0, 1]);
        assert_eq!(routed.swap_count, 0);
        assert_eq!(routed.final_layout, vec![0, 1]);
    }

    #[test]
    fn routing_bridges_a_grid_diagonal() {
        let device = crate::hamsim::generate_device(2, 2, 3, 2.0e10, 3.0e10, 0.01, 80e-6);
        let mut c = Circuit::new(2);
        c.gates.push(Gate::two(GateKind::Cx, 0, 1));
        // qubits 0 and 3 sit on the diagonal of the 2x2 grid
        let routed = route(&c, &device, &[0, 3]);
        assert!(routed.swap_count >= 1);
        for g in &routed.circuit.gates {
            let (a, b) = (
                device.index_site(g.qubits[0]),
                device.index_site(g.qubits[1]),
            );
            assert!(device.edge_between(a, b).is_some(), "gate off-edge after routing");
        }
    }

    #[test]
    fn fusion_collapses_single_qubit_runs() {
        let device = crate::hamsim::generate_device(1, 2, 3, 2.0e10, 3.0e10, 0.01, 80e-6);
        let cache = DecompositionCache { entries: Vec::new(), failures: Vec::new(), timestamp: 0 };
        let mut c = Circuit::new(2);
        c.gates.push(Gate::one(GateKind::H, 0));
        c.gates.push(Gate::one(GateKind::T, 0));
        c.gates.push(Gate::one(GateKind::H, 0));
        c.gates.push(Gate::one(GateKind::X, 1));
        c.gates.push(Gate::one(GateKind::X, 1));
        let lowered = lower(&c, &device, &[], &cache, &SynthesisOptions::default()).unwrap();
        // qubit 0 fuses to one u3; qubit 1 collapses to the identity
        assert_eq!(lowered.gates.len(), 1);
        assert_eq!(lowered.gates[0].kind, GateKind::U3);
        assert_eq!(lowered.gates[0].qubits, vec![0]);
        let expected = mat_of(GateKind::H, &[]) * mat_of(GateKind::T, &[]) * mat_of(GateKind::H, &[]);
        let got = u3_matrix(
            lowered.gates[0].params[0],
            lowered.gates[0].params[1],
            lowered.gates[0].params[2],
        );
        let (e, _) = su2_normalize(&expected);
        let (g, _) = su2_normalize(&got);
        assert!(max_abs_diff2(&e, &g).min(max_abs_diff2(&(-e), &g)) < 1e-10);
    }

    #[test]
    fn schedule_reproduces_layered_gate_arithmetic() {
        // three native layers with four interleaved 1q layers on both qubits
        let mut c = Circuit::new(2);
        for _ in 0..3 {
            c.gates.push(Gate::one_p(GateKind::U3, 0, vec![0.1, 0.0, 0.0]));
            c.gates.push(Gate::one_p(GateKind::U3, 1, vec![0.1, 0.0, 0.0]));
            c.gates.push(Gate::two(GateKind::Native, 0, 1));
        }
        c.gates.push(Gate::one_p(GateKind::U3, 0, vec![0.1, 0.0, 0.0]));
        c.gates.push(Gate::one_p(GateKind::U3, 1, vec![0.1, 0.0, 0.0]));
        let durations = HashMap::from([((0u32, 1u32), 83.04)]);
        let s = schedule(&c, 20.0, &durations);
        assert!((s.total_duration - (3.0 * 83.04 + 4.0 * 20.0)).abs() < 1e-9);
        let two = HashMap::from([((0u32, 1u32), 10.76)]);
        let mut c2 = Circuit::new(2);
        for _ in 0..2 {
            c2.gates.push(Gate::one_p(GateKind::U3, 0, vec![0.1, 0.0, 0.0]));
            c2.gates.push(Gate::one_p(GateKind::U3, 1, vec![0.1, 0.0, 0.0]));
            c2.gates.push(Gate::two(GateKind::Native, 0, 1));
        }
        c2.gates.push(Gate::one_p(GateKind::U3, 0, vec![0.1, 0.0, 0.0]));
        c2.gates.push(Gate::one_p(GateKind::U3, 1, vec![0.1, 0.0, 0.0]));
        let s2 = schedule(&c2, 20.0, &two);
        assert!((s2.total_duration - (2.0 * 10.76 + 3.0 * 20.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_circuits_schedule_to_zero() {
        let c = Circuit::new(3);
        let s = schedule(&c, 20.0, &HashMap::new());
        assert_eq!(s.total_duration, 0.0);
        assert_eq!(s.qubit_start, vec![0.0; 3]);
        assert_eq!(s.qubit_end, vec![0.0; 3]);
    }

    #[test]
    fn scheduling_keeps_qubits_exclusive() {
        let mut c = Circuit::new(3);
        c.gates.push(Gate::one(GateKind::H, 0));
        c.gates.push(Gate::two(GateKind::Native, 0, 1));
        c.gates.push(Gate::one(GateKind::H, 1));
        c.gates.push(Gate::two(GateKind::Native, 1, 2));
        let durations = HashMap::from([((0u32, 1u32), 50.0), ((1u32, 2u32), 60.0)]);
        let s = schedule(&c, 20.0, &durations);
        for q in 0..3u32 {
            let mut spans: Vec<(f64, f64)> = s
                .gates
                .iter()
                .filter(|g| g.gate.qubits.contains(&q))
                .map(|g| (g.start, g.start + g.duration))
                .collect();
            spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in spans.windows(2) {
                assert!(w[0].1 <= w[1].0 + 1e-12, "overlap on qubit {q}");
            }
        }
        assert_eq!(
            s.total_duration,
            s.qubit_end.iter().cloned().fold(0.0f64, f64::max)
        );
    }

    #[test]
    fn lowered_gates_keep_their_unitary() {
        let device = crate::hamsim::generate_device(1, 2, 3, 2.0e10, 3.0e10, 0.01, 80e-6);
        let edge = (device.edges[0].a, device.edges[0].b);
        let basis = Unitary2Q::sqrt_iswap();
        let bases = vec![(edge, basis.clone())];
        let cache = crate::synth::build_cache(
            &bases,
            &crate::synth::default_targets(),
            &SynthesisOptions::default(),
        );
        assert!(cache.failures.is_empty());
        let mut c = Circuit::new(2);
        c.gates.push(Gate::two(GateKind::Cx, 0, 1));
        let lowered = lower(&c, &device, &bases, &cache, &SynthesisOptions::default()).unwrap();
        let native_count = lowered.gates.iter().filter(|g| g.kind == GateKind::Native).count();
        assert_eq!(native_count, 2, "cnot over sqrt-iswap takes two layers");
        let u = dense_unitary_with(&lowered, &|_, _| Some(*basis.matrix())).unwrap();
        let v = dense_unitary(&c).unwrap();
        let tr: C64 = (dagger4(&CMat4::from_fn(|r, col| u[(r, col)]))
            * CMat4::from_fn(|r, col| v[(r, col)]))
        .trace();
        assert!(1.0 - (tr.norm() / 4.0).powi(2) < 1e-8);
    }

    #[test]
    fn reversed_control_reuses_the_cached_form() {
        let device = crate::hamsim::generate_device(1, 2, 3, 2.0e10, 3.0e10, 0.01, 80e-6);
        let edge = (device.edges[0].a, device.edges[0].b);
        let basis = Unitary2Q::sqrt_iswap();
        let bases = vec![(edge, basis.clone())];
        let cache = crate::synth::build_cache(
            &bases,
            &crate::synth::default_targets(),
            &SynthesisOptions::default(),
        );
        let mut c = Circuit::new(2);
        c.gates.push(Gate::two(GateKind::Cx, 1, 0));
        let lowered = lower(&c, &device, &bases, &cache, &SynthesisOptions::default()).unwrap();
        let u = dense_unitary_with(&lowered, &|_, _| Some(*basis.matrix())).unwrap();
        let v = dense_unitary(&c).unwrap();
        let tr: C64 = (dagger4(&CMat4::from_fn(|r, col| u[(r, col)]))
            * CMat4::from_fn(|r, col| v[(r, col)]))
        .trace();
        assert!(1.0 - (tr.norm() / 4.0).powi(2) < 1e-8);
    }
}
