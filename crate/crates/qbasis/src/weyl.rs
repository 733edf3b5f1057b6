//! Cartan decomposition and Weyl-chamber geometry of two-qubit gates.
//!
//! Any two-qubit unitary U factors as
//!
//! ```text
//! U = e^{i g} (k1a x k1b) . exp(-i pi/2 (x XX + y YY + z ZZ)) . (k2a x k2b)
//! ```
//!
//! with single-qubit factors k. The interaction triple (x, y, z), measured
//! in fractions of the maximal half-turn, determines U up to single-qubit
//! gates. Triples related by coordinate permutations, simultaneous sign
//! flips of two coordinates, or integer shifts describe the same class;
//! [`canonicalize`] reduces a triple to the representative tetrahedron
//!
//! ```text
//! 0 <= z <= y <= x <= 1 - y,   and x <= 1/2 whenever z = 0,
//! ```
//!
//! whose vertices are the identity, SWAP, and the iSWAP edge midpoints.

use crate::config::{GEOMETRY_TOL, RECONSTRUCTION_TOL};
use crate::linalg::{
    c, dagger4, factor_tensor2, kron2, magic, magic_diag_exponents, pauli_x, pauli_y, pauli_z,
    CMat2, CMat4, RMat4, C64, I, ONE, ZERO,
};
use nalgebra::{DMatrix, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeylError {
    /// The input matrix is not unitary within tolerance; carries the largest
    /// deviation found in U U^dag - I or in |det U| - 1.
    #[error("input matrix is not unitary (deviation {deviation:.3e})")]
    NonUnitaryInput { deviation: f64 },
}

/// A validated two-qubit unitary in the computational basis
/// |00>, |01>, |10>, |11> (first qubit owns the leftmost bit).
#[derive(Clone, Debug)]
pub struct Unitary2Q {
    m: CMat4,
}

impl Unitary2Q {
    pub fn new(m: CMat4) -> Result<Self, WeylError> {
        let dev = crate::linalg::unitarity_error(&m).max((m.determinant().norm() - 1.0).abs());
        if dev > GEOMETRY_TOL {
            return Err(WeylError::NonUnitaryInput { deviation: dev });
        }
        Ok(Self { m })
    }

    pub(crate) fn new_unchecked(m: CMat4) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &CMat4 {
        &self.m
    }

    /// The canonical interaction gate exp(-i pi/2 (x XX + y YY + z ZZ)).
    pub fn from_coordinate(coord: CanonicalCoordinate) -> Self {
        Self::new_unchecked(canonical_gate_matrix(coord))
    }

    pub fn kak(&self) -> KakFactorization {
        kak_core(&self.m)
    }

    pub fn cnot() -> Self {
        let mut m = CMat4::identity();
        m[(2, 2)] = ZERO;
        m[(3, 3)] = ZERO;
        m[(2, 3)] = ONE;
        m[(3, 2)] = ONE;
        Self::new_unchecked(m)
    }

    pub fn cz() -> Self {
        let mut m = CMat4::identity();
        m[(3, 3)] = -ONE;
        Self::new_unchecked(m)
    }

    pub fn swap() -> Self {
        let mut m = CMat4::identity();
        m[(1, 1)] = ZERO;
        m[(2, 2)] = ZERO;
        m[(1, 2)] = ONE;
        m[(2, 1)] = ONE;
        Self::new_unchecked(m)
    }

    pub fn iswap() -> Self {
        let mut m = CMat4::identity();
        m[(1, 1)] = ZERO;
        m[(2, 2)] = ZERO;
        m[(1, 2)] = I;
        m[(2, 1)] = I;
        Self::new_unchecked(m)
    }

    pub fn sqrt_swap() -> Self {
        let mut m = CMat4::identity();
        let half = c(0.5, 0.5);
        m[(1, 1)] = half;
        m[(2, 2)] = half;
        m[(1, 2)] = half.conj();
        m[(2, 1)] = half.conj();
        Self::new_unchecked(m)
    }

    pub fn sqrt_swap_dag() -> Self {
        Self::new_unchecked(Self::sqrt_swap().m.adjoint())
    }

    pub fn sqrt_iswap() -> Self {
        let mut m = CMat4::identity();
        let s = c(FRAC_1_SQRT_2, 0.0);
        let is = c(0.0, FRAC_1_SQRT_2);
        m[(1, 1)] = s;
        m[(2, 2)] = s;
        m[(1, 2)] = is;
        m[(2, 1)] = is;
        Self::new_unchecked(m)
    }

    pub fn b_gate() -> Self {
        Self::from_coordinate(CanonicalCoordinate::B)
    }
}

/// JSON form: four rows of four `[re, im]` pairs.
impl Serialize for Unitary2Q {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let rows: [[[f64; 2]; 4]; 4] = std::array::from_fn(|r| {
            std::array::from_fn(|col| {
                let v = self.m[(r, col)];
                [v.re, v.im]
            })
        });
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Unitary2Q {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let rows = <[[[f64; 2]; 4]; 4]>::deserialize(de)?;
        let m = CMat4::from_fn(|r, col| c(rows[r][col][0], rows[r][col][1]));
        Unitary2Q::new(m).map_err(serde::de::Error::custom)
    }
}

/// Interaction coordinate reduced to the canonical chamber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalCoordinate {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CanonicalCoordinate {
    pub const IDENTITY: Self = Self { x: 0.0, y: 0.0, z: 0.0 };
    pub const CNOT: Self = Self { x: 0.5, y: 0.0, z: 0.0 };
    pub const ISWAP: Self = Self { x: 0.5, y: 0.5, z: 0.0 };
    pub const SQRT_ISWAP: Self = Self { x: 0.25, y: 0.25, z: 0.0 };
    pub const SWAP: Self = Self { x: 0.5, y: 0.5, z: 0.5 };
    pub const SQRT_SWAP: Self = Self { x: 0.25, y: 0.25, z: 0.25 };
    pub const SQRT_SWAP_DAG: Self = Self { x: 0.75, y: 0.25, z: 0.25 };
    pub const B: Self = Self { x: 0.5, y: 0.25, z: 0.0 };

    pub fn as_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_dev(self, other: Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

/// One KAK factor set: U = e^{i global_phase} (left locals) A (right locals)
/// where A is the canonical gate for `coordinate`.
#[derive(Clone, Debug)]
pub struct KakFactorization {
    pub left_locals: (CMat2, CMat2),
    pub right_locals: (CMat2, CMat2),
    pub coordinate: CanonicalCoordinate,
    pub global_phase: f64,
}

impl KakFactorization {
    pub fn reassemble(&self) -> CMat4 {
        let phase = C64::from_polar(1.0, self.global_phase);
        kron2(&self.left_locals.0, &self.left_locals.1)
            * canonical_gate_matrix(self.coordinate)
            * kron2(&self.right_locals.0, &self.right_locals.1)
            * phase
    }
}

pub fn canonical_gate_matrix(coord: CanonicalCoordinate) -> CMat4 {
    let m = magic();
    let s = magic_diag_exponents(coord.x, coord.y, coord.z);
    let d = CMat4::from_diagonal(&Vector4::new(
        C64::from_polar(1.0, -PI / 2.0 * s[0]),
        C64::from_polar(1.0, -PI / 2.0 * s[1]),
        C64::from_polar(1.0, -PI / 2.0 * s[2]),
        C64::from_polar(1.0, -PI / 2.0 * s[3]),
    ));
    m * d * dagger4(&m)
}

#[derive(Clone, Copy, Debug)]
enum Move {
    Shift { axis: usize, by: i64 },
    Exchange { a: usize, b: usize },
    FlipPair { a: usize, b: usize },
}

/// Reduces a raw interaction triple to the canonical chamber, recording the
/// group moves taken so callers can mirror them on the local factors.
fn reduction_moves(raw: [f64; 3]) -> ([f64; 3], Vec<Move>) {
    let mut v = raw;
    let mut moves = Vec::new();
    for (axis, value) in v.iter_mut().enumerate() {
        let n = value.floor();
        if n != 0.0 {
            *value -= n;
            moves.push(Move::Shift { axis, by: n as i64 });
        }
    }
    let sort_pass = |v: &mut [f64; 3], moves: &mut Vec<Move>| {
        for (a, b) in [(0usize, 1usize), (1, 2), (0, 1)] {
            if v[a] < v[b] {
                v.swap(a, b);
                moves.push(Move::Exchange { a, b });
            }
        }
    };
    sort_pass(&mut v, &mut moves);
    if v[0] + v[1] > 1.0 {
        moves.push(Move::FlipPair { a: 0, b: 1 });
        moves.push(Move::Shift { axis: 0, by: 1 });
        moves.push(Move::Shift { axis: 1, by: 1 });
        v[0] = 1.0 - v[0];
        v[1] = 1.0 - v[1];
        sort_pass(&mut v, &mut moves);
    }
    if v[2] <= GEOMETRY_TOL && v[0] > 0.5 {
        moves.push(Move::FlipPair { a: 0, b: 2 });
        moves.push(Move::Shift { axis: 0, by: 1 });
        v[0] = 1.0 - v[0];
        v[2] = -v[2];
    }
    (v, moves)
}

fn clamp_reduced(mut v: [f64; 3]) -> CanonicalCoordinate {
    for value in v.iter_mut() {
        if value.abs() < 2.0 * GEOMETRY_TOL {
            *value = 0.0;
        }
    }
    CanonicalCoordinate { x: v[0], y: v[1], z: v[2] }
}

/// Canonical-chamber representative of an arbitrary interaction triple.
pub fn canonicalize(raw: [f64; 3]) -> CanonicalCoordinate {
    let (v, _) = reduction_moves(raw);
    clamp_reduced(v)
}

fn exchange_gate(a: usize, b: usize) -> CMat2 {
    match (a, b) {
        (0, 1) => CMat2::new(ONE, ZERO, ZERO, I),
        (1, 2) => {
            let h = c(FRAC_1_SQRT_2, 0.0);
            let ih = c(0.0, -FRAC_1_SQRT_2);
            CMat2::new(h, ih, ih, h)
        }
        (0, 2) => {
            let h = c(FRAC_1_SQRT_2, 0.0);
            CMat2::new(h, -h, h, h)
        }
        _ => unreachable!("exchange on unordered axis pair"),
    }
}

fn flip_gate(a: usize, b: usize) -> CMat2 {
    match (a, b) {
        (0, 1) => pauli_z(),
        (1, 2) => pauli_x(),
        (0, 2) => pauli_y(),
        _ => unreachable!("flip on unordered axis pair"),
    }
}

fn apply_move_to_locals(mv: Move, k1: &mut (CMat2, CMat2), k2: &mut (CMat2, CMat2)) {
    match mv {
        Move::Shift { axis, by } => {
            if by.rem_euclid(2) == 1 {
                let p = match axis {
                    0 => pauli_x(),
                    1 => pauli_y(),
                    _ => pauli_z(),
                };
                k2.0 = p * k2.0;
                k2.1 = p * k2.1;
            }
        }
        Move::Exchange { a, b } => {
            let g = exchange_gate(a, b);
            let gd = g.adjoint();
            k1.0 *= gd;
            k1.1 *= gd;
            k2.0 = g * k2.0;
            k2.1 = g * k2.1;
        }
        Move::FlipPair { a, b } => {
            let p = flip_gate(a, b);
            k1.0 *= p;
            k2.0 = p * k2.0;
        }
    }
}

/// Splits a unitary into real and imaginary parts in the magic basis and
/// finds real orthogonal L, R with L (A + iB) R diagonal, det L = det R = 1.
///
/// The singular vectors of A nearly achieve this; within each group of equal
/// singular values the remaining freedom is fixed by diagonalizing the
/// corresponding (symmetric) block of the transformed B, and the kernel
/// block of A is finished with an SVD of the B restriction.
fn real_bidiagonalize(um: &CMat4, group_tol: f64) -> (RMat4, RMat4) {
    let a = RMat4::from_fn(|i, j| um[(i, j)].re);
    let b = RMat4::from_fn(|i, j| um[(i, j)].im);
    let svd = a.svd(true, true);
    let mut ua = svd.u.unwrap();
    let mut va = svd.v_t.unwrap().transpose();
    let sig = svd.singular_values;
    let cmat = ua.transpose() * b * va;
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && (sig[start] - sig[end]).abs() < group_tol {
            end += 1;
        }
        let glen = end - start;
        if glen > 1 || sig[start] < group_tol {
            let block = DMatrix::from_fn(glen, glen, |i, j| cmat[(start + i, start + j)]);
            if sig[start] > group_tol {
                let sym = 0.5 * (&block + block.transpose());
                let eig = sym.symmetric_eigen();
                let q = eig.eigenvectors;
                rotate_columns(&mut ua, start, &q);
                rotate_columns(&mut va, start, &q);
            } else {
                let bsvd = block.svd(true, true);
                rotate_columns(&mut ua, start, &bsvd.u.unwrap());
                rotate_columns(&mut va, start, &bsvd.v_t.unwrap().transpose());
            }
        }
        start = end;
    }
    if ua.determinant() < 0.0 {
        for i in 0..4 {
            ua[(i, 0)] = -ua[(i, 0)];
        }
    }
    if va.determinant() < 0.0 {
        for i in 0..4 {
            va[(i, 0)] = -va[(i, 0)];
        }
    }
    (ua.transpose(), va)
}

fn rotate_columns(m: &mut RMat4, start: usize, q: &DMatrix<f64>) {
    let glen = q.nrows();
    let cols: Vec<Vec<f64>> = (0..glen)
        .map(|j| {
            (0..4)
                .map(|i| (0..glen).map(|k| m[(i, start + k)] * q[(k, j)]).sum())
                .collect()
        })
        .collect();
    for (j, col) in cols.iter().enumerate() {
        for i in 0..4 {
            m[(i, start + j)] = col[i];
        }
    }
}

fn to_complex(m: &RMat4) -> CMat4 {
    CMat4::from_fn(|i, j| c(m[(i, j)], 0.0))
}

fn offdiag_residual(d: &CMat4) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                worst = worst.max(d[(i, j)].norm());
            }
        }
    }
    worst
}

fn kak_core(u: &CMat4) -> KakFactorization {
    let m = magic();
    let um = dagger4(&m) * u * m;
    let mut best: Option<(RMat4, RMat4, f64)> = None;
    for group_tol in [1e-6, 1e-8, 1e-3] {
        let (l, r) = real_bidiagonalize(&um, group_tol);
        let d = to_complex(&l) * um * to_complex(&r);
        let res = offdiag_residual(&d);
        if best.as_ref().map_or(true, |(_, _, b)| res < *b) {
            best = Some((l, r, res));
        }
        if res < 1e-10 {
            break;
        }
    }
    let (l, r, _) = best.unwrap();
    let d = to_complex(&l) * um * to_complex(&r);
    let phi: Vec<f64> = (0..4).map(|k| d[(k, k)].arg()).collect();
    let raw = [
        (phi[2] + phi[3] - phi[0] - phi[1]) / TAU,
        (phi[0] + phi[2] - phi[1] - phi[3]) / TAU,
        (phi[1] + phi[2] - phi[0] - phi[3]) / TAU,
    ];
    let k1m = m * to_complex(&l).transpose() * dagger4(&m);
    let k2m = m * to_complex(&r).transpose() * dagger4(&m);
    let mut k1 = factor_tensor2(&k1m);
    let mut k2 = factor_tensor2(&k2m);
    let (reduced, moves) = reduction_moves(raw);
    for mv in moves {
        apply_move_to_locals(mv, &mut k1, &mut k2);
    }
    let coordinate = clamp_reduced(reduced);
    let bare = kron2(&k1.0, &k1.1) * canonical_gate_matrix(coordinate) * kron2(&k2.0, &k2.1);
    let t = (bare.adjoint() * u).trace();
    debug_assert!(
        t.norm() > 4.0 - 100.0 * RECONSTRUCTION_TOL,
        "factor alignment lost: |tr| = {}",
        t.norm()
    );
    KakFactorization {
        left_locals: k1,
        right_locals: k2,
        coordinate,
        global_phase: t.arg(),
    }
}

/// Full Cartan decomposition of a two-qubit unitary.
pub fn kak_decompose(u: &CMat4) -> Result<KakFactorization, WeylError> {
    let validated = Unitary2Q::new(*u)?;
    Ok(kak_core(validated.matrix()))
}

/// Eigenphase vector (in turns) of the class of a canonical coordinate,
/// normalized to the fundamental alcove: non-increasing, summing to zero,
/// spread at most one.
///
/// Concretely these are the phases of the magic-basis Gram matrix
/// (M^dag U M)^T (M^dag U M) evaluated for the inverse of the canonical
/// gate; the linear map below reproduces them without any eigensolve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSpec(pub [f64; 4]);

impl LogSpec {
    pub fn values(&self) -> [f64; 4] {
        self.0
    }

    pub fn max_dev(&self, other: &LogSpec) -> f64 {
        (0..4)
            .map(|k| (self.0[k] - other.0[k]).abs())
            .fold(0.0, f64::max)
    }
}

/// Folds arbitrary phase fractions into the fundamental alcove.
pub fn alcove_normalize(mut p: [f64; 4]) -> [f64; 4] {
    for v in p.iter_mut() {
        *v -= v.floor();
        if *v > 1.0 - 1e-9 {
            *v = 0.0;
        }
    }
    p.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sum: f64 = p.iter().sum();
    let m = sum.round();
    debug_assert!((sum - m).abs() < 1e-6, "phase sum {sum} is not an integer");
    let m = (m as i64).clamp(0, 4) as usize;
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = if k < 4 - m { p[k + m] } else { p[k - (4 - m)] - 1.0 };
    }
    out
}

pub fn to_logspec(coord: CanonicalCoordinate) -> LogSpec {
    let (x, y, z) = (coord.x, coord.y, coord.z);
    let raw = [
        (x + y - z) / 2.0,
        (x - y + z) / 2.0,
        (-x + y + z) / 2.0,
        -(x + y + z) / 2.0,
    ];
    LogSpec(alcove_normalize(raw))
}

/// The other alcove point covering the same canonical coordinate; an exact
/// involution. Classes fixed by it are their own sole cover.
pub fn rho(l: &LogSpec) -> LogSpec {
    let [a, b, cc, d] = l.0;
    LogSpec([cc + 0.5, d + 0.5, a - 0.5, b - 0.5])
}

/// Coordinate covered by an alcove point: inverts [`to_logspec`] up to the
/// chamber reduction.
pub fn logspec_coordinate(l: &LogSpec) -> CanonicalCoordinate {
    let [a, b, cc, _] = l.0;
    canonicalize([a + b, a + cc, b + cc])
}

/// Entangling power of the class, normalized so CNOT scores 2/9.
pub fn entangling_power(coord: CanonicalCoordinate) -> f64 {
    let cx = (TAU * coord.x).cos();
    let cy = (TAU * coord.y).cos();
    let cz = (TAU * coord.z).cos();
    (3.0 - cx * cy - cy * cz - cz * cx) / 18.0
}

/// Whether the class can produce a maximally entangled state from some
/// product state. On canonical coordinates this is the polyhedron
/// x+y >= 1/2, x-y <= 1/2, y+z <= 1/2 (faces inclusive).
pub fn is_perfect_entangler(coord: CanonicalCoordinate) -> bool {
    let eps = GEOMETRY_TOL;
    coord.x + coord.y >= 0.5 - eps
        && coord.x - coord.y <= 0.5 + eps
        && coord.y + coord.z <= 0.5 + eps
}

const FLIP_PATTERNS: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [-1.0, -1.0, 1.0],
    [-1.0, 1.0, -1.0],
    [1.0, -1.0, -1.0],
];

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Euclidean distance between the full symmetry orbits of two coordinates.
pub fn weyl_distance(a: CanonicalCoordinate, b: CanonicalCoordinate) -> f64 {
    let pa = a.as_array();
    let pb = b.as_array();
    let mut best = f64::INFINITY;
    for perm in PERMS {
        for flip in FLIP_PATTERNS {
            let mut d2 = 0.0;
            for axis in 0..3 {
                let w = flip[axis] * pb[perm[axis]];
                let delta = pa[axis] - w;
                let delta = delta - delta.round();
                d2 += delta * delta;
            }
            best = best.min(d2);
        }
    }
    best.sqrt()
}
