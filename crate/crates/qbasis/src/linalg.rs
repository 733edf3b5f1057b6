//! Small complex linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat2 = Matrix2<C64>;
pub type CMat4 = Matrix4<C64>;
pub type RMat4 = Matrix4<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli_x() -> CMat2 {
    CMat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> CMat2 {
    CMat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> CMat2 {
    CMat2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn eye2() -> CMat2 {
    CMat2::identity()
}

/// Magic basis change: columns are the Bell states
/// (|00>+|11>)/sqrt2, i(|01>+|10>)/sqrt2, (|01>-|10>)/sqrt2, i(|00>-|11>)/sqrt2.
///
/// Conjugating by this matrix maps SU(2)xSU(2) onto SO(4), and the canonical
/// interaction exp(-i pi/2 (x XX + y YY + z ZZ)) onto a diagonal.
pub fn magic() -> CMat4 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = c(s, 0.0);
    let ih = c(0.0, s);
    CMat4::new(
        h, ZERO, ZERO, ih, //
        ZERO, ih, h, ZERO, //
        ZERO, ih, -h, ZERO, //
        h, ZERO, ZERO, -ih,
    )
}

/// Signs of (XX, YY, ZZ) on the magic-basis diagonal, row k of the magic
/// matrix; `magic_diag_exponents(x,y,z)[k]` is the coefficient s_k in
/// exp(-i pi/2 s_k) for the canonical gate with coordinate (x, y, z).
pub fn magic_diag_exponents(x: f64, y: f64, z: f64) -> [f64; 4] {
    [x - y + z, x + y - z, -x - y - z, -x + y + z]
}

pub fn kron2(a: &CMat2, b: &CMat2) -> CMat4 {
    a.kronecker(b)
}

pub fn dagger2(m: &CMat2) -> CMat2 {
    m.adjoint()
}

pub fn dagger4(m: &CMat4) -> CMat4 {
    m.adjoint()
}

pub fn max_abs_diff4(a: &CMat4, b: &CMat4) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..16 {
        worst = worst.max((a[k] - b[k]).norm());
    }
    worst
}

pub fn max_abs_diff2(a: &CMat2, b: &CMat2) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..4 {
        worst = worst.max((a[k] - b[k]).norm());
    }
    worst
}

/// Largest entry of |U U^dag - I|; zero for exactly unitary input.
pub fn unitarity_error(u: &CMat4) -> f64 {
    max_abs_diff4(&(u * u.adjoint()), &CMat4::identity())
}

/// Rescales to determinant one, splitting off the removed phase factor.
/// Returns the SU(2) representative and the scalar it was divided by.
pub fn su2_normalize(m: &CMat2) -> (CMat2, C64) {
    let d = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let root = principal_root(d, 2);
    (m / root, root)
}

/// Principal n-th root of a unit-modulus complex number.
pub fn principal_root(z: C64, n: u32) -> C64 {
    C64::from_polar(z.norm().powf(1.0 / n as f64), z.arg() / n as f64)
}

/// Splits a Kronecker product G = a (x) b into its 2x2 factors, each
/// normalized to determinant one, with a sign chosen so the reassembled
/// product matches G. Fails loudly if G is far from any product state.
pub fn factor_tensor2(g: &CMat4) -> (CMat2, CMat2) {
    let block = |bi: usize, bj: usize| {
        CMat2::new(
            g[(2 * bi, 2 * bj)],
            g[(2 * bi, 2 * bj + 1)],
            g[(2 * bi + 1, 2 * bj)],
            g[(2 * bi + 1, 2 * bj + 1)],
        )
    };
    let mut best = (0, 0);
    let mut best_norm = -1.0;
    for bi in 0..2 {
        for bj in 0..2 {
            let n = block(bi, bj).norm();
            if n > best_norm {
                best_norm = n;
                best = (bi, bj);
            }
        }
    }
    let b_raw = block(best.0, best.1) * c(std::f64::consts::SQRT_2 / best_norm, 0.0);
    let mut a_raw = CMat2::zeros();
    for bi in 0..2 {
        for bj in 0..2 {
            let blk = block(bi, bj);
            a_raw[(bi, bj)] = (b_raw.adjoint() * blk).trace() / c(2.0, 0.0);
        }
    }
    let (a, _) = su2_normalize(&a_raw);
    let (b, _) = su2_normalize(&b_raw);
    let assembled = kron2(&a, &b);
    if max_abs_diff4(&assembled, g) <= max_abs_diff4(&(-assembled), g) {
        (a, b)
    } else {
        (-a, b)
    }
}

/// Nearest unitary to `m` (polar factor), by Newton iteration.
pub fn polar_unitary4(m: &CMat4) -> CMat4 {
    let mut x = *m;
    for _ in 0..50 {
        let inv_adj = x
            .clone()
            .try_inverse()
            .expect("polar iteration hit a singular matrix")
            .adjoint();
        let next = (x + inv_adj) * c(0.5, 0.0);
        let step = max_abs_diff4(&next, &x);
        x = next;
        if step < 1e-14 {
            break;
        }
    }
    x
}

/// Eigenphases (in turns, each in [0, 1)) of a complex symmetric unitary,
/// in descending order.
///
/// Such a matrix has commuting real and imaginary parts, so it is
/// diagonalized by jointly diagonalizing the two real symmetric pieces:
/// eigendecompose Re, then eigendecompose Im restricted to each degenerate
/// eigenspace of Re.
pub fn sym_unitary_eigenphases(g: &CMat4, group_tol: f64) -> [f64; 4] {
    let x = DMatrix::from_fn(4, 4, |i, j| 0.5 * (g[(i, j)].re + g[(j, i)].re));
    let y = DMatrix::from_fn(4, 4, |i, j| 0.5 * (g[(i, j)].im + g[(j, i)].im));
    let ex = x.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| ex.eigenvalues[b].partial_cmp(&ex.eigenvalues[a]).unwrap());
    let mut q = DMatrix::zeros(4, 4);
    let mut xdiag = [0.0f64; 4];
    for (col, &src) in order.iter().enumerate() {
        q.set_column(col, &ex.eigenvectors.column(src));
        xdiag[col] = ex.eigenvalues[src];
    }
    let mut phases = [0.0f64; 4];
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && (xdiag[end] - xdiag[start]).abs() < group_tol {
            end += 1;
        }
        let g_len = end - start;
        let qg = q.columns(start, g_len).clone_owned();
        let yg = {
            let raw = qg.transpose() * &y * &qg;
            0.5 * (&raw + raw.transpose())
        };
        let ey = yg.symmetric_eigen();
        for k in 0..g_len {
            let xe = {
                let v = ey.eigenvectors.column(k).clone_owned();
                let xg = qg.transpose() * &x * &qg;
                (v.transpose() * xg * &v)[(0, 0)]
            };
            phases[start + k] = ey.eigenvalues[k].atan2(xe) / std::f64::consts::TAU;
        }
        start = end;
    }
    for p in phases.iter_mut() {
        *p -= p.floor();
        if *p > 1.0 - 1e-12 {
            *p = 0.0;
        }
    }
    phases.sort_by(|a, b| b.partial_cmp(a).unwrap());
    phases
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn haar_su2<R: Rng>(rng: &mut R) -> CMat2 {
    let z = CMat2::from_fn(|_, _| c(std_normal(rng), std_normal(rng)));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..2 {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            let ph = d / c(d.norm(), 0.0);
            for i in 0..2 {
                q[(i, k)] *= ph;
            }
        }
    }
    let (u, _) = su2_normalize(&q);
    u
}

pub fn haar_su4<R: Rng>(rng: &mut R) -> CMat4 {
    let z = CMat4::from_fn(|_, _| c(std_normal(rng), std_normal(rng)));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..4 {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            let ph = d / c(d.norm(), 0.0);
            for i in 0..4 {
                q[(i, k)] *= ph;
            }
        }
    }
    let det = q.determinant();
    q / principal_root(det, 4)
}
