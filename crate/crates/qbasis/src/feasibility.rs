//! Synthesis-depth theory for two-qubit gates: mirror pairs, the
//! two-layer reachability decision, polyhedral membership for the
//! SWAP-in-3 and CNOT-in-2 regions, Monte-Carlo region volumes, and
//! trajectory intersection queries used for basis selection.
//!
//! The reachability decision works on [`weyl::LogSpec`] classes: a target is
//! reachable by two layers of given basis gates exactly when one of the
//! phase-lift combinations of the three classes satisfies a fixed system
//! of 72 linear inequalities. The system is generated at first use from
//! small-case quantum cohomology of Grassmannians (classical
//! Littlewood-Richardson numbers plus rim-hook reduction) and
//! self-checked before it is trusted.

use crate::config::{INEQUALITY_TOL, REGION_TOL};
use crate::hamsim::{Trajectory, TrajectorySample};
use crate::par;
use crate::weyl::{self, CanonicalCoordinate};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeasibilityError {
    /// The generated inequality system failed its self-check and must not
    /// be used for feasibility decisions.
    #[error("inequality table unavailable: {0}")]
    InequalityTableUnavailable(String),
    /// No trajectory sample satisfies the selection criterion.
    #[error("trajectory never enters the requested regions")]
    NoIntersection,
}

/// The four chamber walls as planes `normal . p = offset`. Complement
/// tetrahedron faces lying in a wall do not separate the tetrahedron
/// from the rest of the chamber and are treated inclusively by the
/// relative-interior test.
const CHAMBER_WALLS: [([f64; 3], f64); 4] = [
    ([0.0, 0.0, 1.0], 0.0),  // z = 0
    ([0.0, 1.0, -1.0], 0.0), // y = z
    ([1.0, -1.0, 0.0], 0.0), // x = y
    ([1.0, 1.0, 0.0], 1.0),  // x + y = 1
];

#[derive(Clone, Copy, Debug)]
struct Face {
    normal: [f64; 3],
    offset: f64,
    on_wall: bool,
}

impl Face {
    /// Signed distance from the plane, positive on the inside.
    fn margin(&self, p: CanonicalCoordinate) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z - self.offset
    }
}

/// Non-degenerate tetrahedron stored both as vertices and as the four
/// inward-oriented face planes, with each face classified by whether it
/// lies in a chamber wall.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TetrahedronData", into = "TetrahedronData")]
pub struct Tetrahedron {
    vertices: [CanonicalCoordinate; 4],
    faces: [Face; 4],
}

#[derive(Serialize, Deserialize)]
struct TetrahedronData {
    vertices: [CanonicalCoordinate; 4],
}

impl TryFrom<TetrahedronData> for Tetrahedron {
    type Error = String;
    fn try_from(d: TetrahedronData) -> Result<Self, String> {
        Tetrahedron::new_checked(d.vertices)
    }
}

impl From<Tetrahedron> for TetrahedronData {
    fn from(t: Tetrahedron) -> Self {
        Self {
            vertices: t.vertices,
        }
    }
}

impl Tetrahedron {
    pub fn new(vertices: [CanonicalCoordinate; 4]) -> Self {
        Self::new_checked(vertices).expect("degenerate tetrahedron")
    }

    pub fn new_checked(vertices: [CanonicalCoordinate; 4]) -> Result<Self, String> {
        let v: Vec<Vector3<f64>> = vertices
            .iter()
            .map(|p| Vector3::new(p.x, p.y, p.z))
            .collect();
        let vol = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]])
            .determinant()
            .abs()
            / 6.0;
        if vol <= 1e-12 {
            return Err(format!("tetrahedron volume {vol:.3e} below 1e-12"));
        }
        let mut faces = [Face {
            normal: [0.0; 3],
            offset: 0.0,
            on_wall: false,
        }; 4];
        for i in 0..4 {
            let others: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            let n = (v[others[1]] - v[others[0]]).cross(&(v[others[2]] - v[others[0]]));
            let n = n / n.norm();
            let mut normal = [n.x, n.y, n.z];
            let mut offset = n.dot(&v[others[0]]);
            if n.dot(&v[i]) < offset {
                normal = [-normal[0], -normal[1], -normal[2]];
                offset = -offset;
            }
            let on_wall = CHAMBER_WALLS.iter().any(|(wn, wo)| {
                let wnorm = (wn[0] * wn[0] + wn[1] * wn[1] + wn[2] * wn[2]).sqrt();
                let dot =
                    (normal[0] * wn[0] + normal[1] * wn[1] + normal[2] * wn[2]) / wnorm;
                let woff = wo / wnorm;
                ((dot - 1.0).abs() < 1e-9 && (offset - woff).abs() < 1e-9)
                    || ((dot + 1.0).abs() < 1e-9 && (offset + woff).abs() < 1e-9)
            });
            faces[i] = Face {
                normal,
                offset,
                on_wall,
            };
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[CanonicalCoordinate; 4] {
        &self.vertices
    }

    pub fn volume(&self) -> f64 {
        let v: Vec<Vector3<f64>> = self
            .vertices
            .iter()
            .map(|p| Vector3::new(p.x, p.y, p.z))
            .collect();
        Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]])
            .determinant()
            .abs()
            / 6.0
    }

    /// Closed membership: every face margin at least `-eps`.
    pub fn contains(&self, p: CanonicalCoordinate, eps: f64) -> bool {
        self.faces.iter().all(|f| f.margin(p) >= -eps)
    }

    /// Membership in the interior relative to the chamber: strict on faces
    /// that cut through the chamber, inclusive on faces lying in a chamber
    /// wall (the wall clips the neighbourhood, so such faces do not count
    /// as boundary between the tetrahedron and the region outside it).
    pub fn chamber_interior_contains(&self, p: CanonicalCoordinate, eps: f64) -> bool {
        self.faces.iter().all(|f| {
            let m = f.margin(p);
            if f.on_wall {
                m >= -eps
            } else {
                m > eps
            }
        })
    }

    /// Barycentric coordinates of `p` with respect to the four vertices.
    pub fn barycentric(&self, p: CanonicalCoordinate) -> [f64; 4] {
        let v: Vec<Vector3<f64>> = self
            .vertices
            .iter()
            .map(|q| Vector3::new(q.x, q.y, q.z))
            .collect();
        let m = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        let rhs = Vector3::new(p.x, p.y, p.z) - v[0];
        let lam = m.lu().solve(&rhs).expect("non-degenerate by construction");
        [1.0 - lam.x - lam.y - lam.z, lam.x, lam.y, lam.z]
    }
}

/// A closed subset of the chamber described by the tetrahedra that make
/// up its complement's closure. A point belongs to the region unless it
/// lies in the chamber-relative interior of one of those tetrahedra, so
/// region membership is boundary-inclusive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Region {
    name: String,
    complement: Vec<Tetrahedron>,
}

impl Region {
    pub fn new(name: impl Into<String>, complement: Vec<Tetrahedron>) -> Self {
        Self {
            name: name.into(),
            complement,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn complement_tetrahedra(&self) -> &[Tetrahedron] {
        &self.complement
    }

    pub fn contains(&self, p: CanonicalCoordinate, eps: f64) -> bool {
        !self
            .complement
            .iter()
            .any(|t| t.chamber_interior_contains(p, eps))
    }

    /// Gate classes able to build SWAP from three layers of themselves.
    /// The complement's closure is four tetrahedra: two capping the
    /// identity corners below the entry faces x+y+z = 1/2 and
    /// x-y-z = 1/2, and two flanking SWAP above z = 1/6.
    pub fn swap_three() -> &'static Region {
        static R: OnceLock<Region> = OnceLock::new();
        R.get_or_init(|| {
            let c = |x: f64, y: f64, z: f64| CanonicalCoordinate { x, y, z };
            let s = 1.0 / 6.0;
            Region::new(
                "s_swap3",
                vec![
                    Tetrahedron::new([
                        c(0.0, 0.0, 0.0),
                        c(0.5, 0.0, 0.0),
                        c(0.25, 0.25, 0.0),
                        c(s, s, s),
                    ]),
                    Tetrahedron::new([
                        c(1.0, 0.0, 0.0),
                        c(0.5, 0.0, 0.0),
                        c(0.75, 0.25, 0.0),
                        c(5.0 * s, s, s),
                    ]),
                    Tetrahedron::new([
                        c(0.5, 0.5, 0.5),
                        c(0.5, s, s),
                        c(s, s, s),
                        c(2.0 * s, 2.0 * s, s),
                    ]),
                    Tetrahedron::new([
                        c(0.5, 0.5, 0.5),
                        c(0.5, s, s),
                        c(5.0 * s, s, s),
                        c(4.0 * s, 2.0 * s, s),
                    ]),
                ],
            )
        })
    }

    /// Gate classes able to build CNOT from two layers of themselves:
    /// x between 1/4 and 3/4 with z at most 1/4, boundary included.
    pub fn cnot_two() -> &'static Region {
        static R: OnceLock<Region> = OnceLock::new();
        R.get_or_init(|| {
            let c = |x: f64, y: f64, z: f64| CanonicalCoordinate { x, y, z };
            Region::new(
                "s_cnot2",
                vec![
                    Tetrahedron::new([
                        c(0.0, 0.0, 0.0),
                        c(0.25, 0.0, 0.0),
                        c(0.25, 0.25, 0.0),
                        c(0.25, 0.25, 0.25),
                    ]),
                    Tetrahedron::new([
                        c(1.0, 0.0, 0.0),
                        c(0.75, 0.0, 0.0),
                        c(0.75, 0.25, 0.0),
                        c(0.75, 0.25, 0.25),
                    ]),
                    Tetrahedron::new([
                        c(0.5, 0.5, 0.5),
                        c(0.25, 0.25, 0.25),
                        c(0.75, 0.25, 0.25),
                        c(0.5, 0.5, 0.25),
                    ]),
                ],
            )
        })
    }

    /// Perfect entanglers, expressed in the same complement form. Agrees
    /// with the half-space test in [`weyl::is_perfect_entangler`] and
    /// covers exactly half the chamber.
    pub fn perfect_entangler() -> &'static Region {
        static R: OnceLock<Region> = OnceLock::new();
        R.get_or_init(|| {
            let c = |x: f64, y: f64, z: f64| CanonicalCoordinate { x, y, z };
            Region::new(
                "pe",
                vec![
                    Tetrahedron::new([
                        c(0.0, 0.0, 0.0),
                        c(0.5, 0.0, 0.0),
                        c(0.25, 0.25, 0.0),
                        c(0.25, 0.25, 0.25),
                    ]),
                    Tetrahedron::new([
                        c(1.0, 0.0, 0.0),
                        c(0.5, 0.0, 0.0),
                        c(0.75, 0.25, 0.0),
                        c(0.75, 0.25, 0.25),
                    ]),
                    Tetrahedron::new([
                        c(0.5, 0.5, 0.5),
                        c(0.5, 0.5, 0.0),
                        c(0.25, 0.25, 0.25),
                        c(0.75, 0.25, 0.25),
                    ]),
                ],
            )
        })
    }

    /// Look a region up by its CLI name.
    pub fn by_name(name: &str) -> Option<&'static Region> {
        match name {
            "s_swap3" | "swap3" => Some(Self::swap_three()),
            "s_cnot2" | "cnot2" => Some(Self::cnot_two()),
            "pe" => Some(Self::perfect_entangler()),
            _ => None,
        }
    }
}

/// Conjunction of regions a trajectory sample must satisfy, with the
/// boundary tolerance used for membership.
#[derive(Clone, Debug)]
pub struct SelectionCriterion {
    name: String,
    regions: Vec<Region>,
    epsilon: f64,
}

impl SelectionCriterion {
    pub fn new(name: impl Into<String>, regions: Vec<Region>, epsilon: f64) -> Self {
        assert!(!regions.is_empty(), "criterion needs at least one region");
        assert!(epsilon > 0.0, "criterion tolerance must be positive");
        Self {
            name: name.into(),
            regions,
            epsilon,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn satisfied_by(&self, c: CanonicalCoordinate) -> bool {
        self.regions.iter().all(|r| r.contains(c, self.epsilon))
    }
}

/// The unique partner class that completes a two-layer SWAP
/// decomposition: componentwise 1/2 - c, canonicalized. An involution;
/// CNOT and iSWAP form one such pair, the square roots of SWAP are
/// fixed points.
pub fn mirror_point(c: CanonicalCoordinate) -> CanonicalCoordinate {
    weyl::canonicalize([0.5 - c.x, 0.5 - c.y, 0.5 - c.z])
}

#[derive(Clone, Copy, Debug)]
struct Inequality {
    i_mask: u8,
    j_mask: u8,
    k_mask: u8,
    rhs: f64,
}

/// Generation of the inequality system from quantum Littlewood-Richardson
/// numbers of the Grassmannians Gr(r, 4).
mod table {
    use std::collections::HashMap;

    /// Number of Littlewood-Richardson skew tableaux of shape `tau/lam`
    /// with content `mu`, counted by backtracking over the cells in
    /// reverse reading order.
    fn lr_coeff(lam: &[usize], mu: &[usize], tau: &[usize]) -> i64 {
        let rows = tau.len();
        let mut lam = lam.to_vec();
        lam.resize(rows, 0);
        if lam.iter().zip(tau).any(|(l, t)| l > t) {
            return 0;
        }
        let cells_total: usize = tau.iter().sum::<usize>() - lam.iter().sum::<usize>();
        if cells_total != mu.iter().sum::<usize>() {
            return 0;
        }
        if cells_total == 0 {
            return 1;
        }
        let mut order = Vec::with_capacity(cells_total);
        for i in 0..rows {
            for j in (lam[i]..tau[i]).rev() {
                order.push((i, j));
            }
        }
        let nvals = mu.len();
        let mut fill: HashMap<(usize, usize), usize> = HashMap::new();
        let mut content = vec![0usize; nvals + 1];
        let mut count = 0i64;

        fn ok(
            fill: &HashMap<(usize, usize), usize>,
            lam: &[usize],
            tau: &[usize],
            i: usize,
            j: usize,
            v: usize,
        ) -> bool {
            if j >= 1 && j - 1 >= lam[i] {
                if let Some(&left) = fill.get(&(i, j - 1)) {
                    if left > v {
                        return false;
                    }
                }
            }
            if j + 1 < tau[i] {
                if let Some(&right) = fill.get(&(i, j + 1)) {
                    if v > right {
                        return false;
                    }
                }
            }
            if i >= 1 && lam[i - 1] <= j && j < tau[i - 1] {
                if let Some(&up) = fill.get(&(i - 1, j)) {
                    if up >= v {
                        return false;
                    }
                }
            }
            if i + 1 < tau.len() && lam[i + 1] <= j && j < tau[i + 1] {
                if let Some(&down) = fill.get(&(i + 1, j)) {
                    if v >= down {
                        return false;
                    }
                }
            }
            true
        }

        fn rec(
            k: usize,
            order: &[(usize, usize)],
            lam: &[usize],
            tau: &[usize],
            mu: &[usize],
            fill: &mut HashMap<(usize, usize), usize>,
            content: &mut Vec<usize>,
            count: &mut i64,
        ) {
            if k == order.len() {
                *count += 1;
                return;
            }
            let (i, j) = order[k];
            for v in 1..=mu.len() {
                if content[v] + 1 > mu[v - 1] {
                    continue;
                }
                if v > 1 && content[v] + 1 > content[v - 1] {
                    continue;
                }
                if !ok(fill, lam, tau, i, j, v) {
                    continue;
                }
                fill.insert((i, j), v);
                content[v] += 1;
                rec(k + 1, order, lam, tau, mu, fill, content, count);
                content[v] -= 1;
                fill.remove(&(i, j));
            }
        }

        rec(
            0,
            &order,
            &lam,
            tau,
            mu,
            &mut fill,
            &mut content,
            &mut count,
        );
        count
    }

    /// All partitions reachable from `tau` by removing one border strip of
    /// `size` cells, together with the strip height.
    fn strip_removals(tau: &[usize], size: usize) -> Vec<(Vec<usize>, usize)> {
        let rows = tau.len();
        let mut out = Vec::new();
        for t in 0..rows {
            for b in t..rows {
                let mut new = tau.to_vec();
                for i in t..b {
                    new[i] = tau[i + 1].saturating_sub(1);
                }
                let stripped = tau[t] + (b - t);
                if stripped < size {
                    continue;
                }
                new[b] = stripped - size;
                if b + 1 < rows && new[b] < tau[b + 1] {
                    continue;
                }
                if new.windows(2).any(|w| w[0] < w[1]) {
                    continue;
                }
                if new.iter().zip(tau).any(|(n, t)| n > t) {
                    continue;
                }
                if tau.iter().sum::<usize>() - new.iter().sum::<usize>() != size {
                    continue;
                }
                // a genuine strip never grows a shorter row past its upper
                // neighbour's removal span; the partition checks above
                // encode connectivity for border strips
                out.push((new, b - t + 1));
            }
        }
        out
    }

    type Reduction = HashMap<(Vec<usize>, usize), i64>;

    /// Reduce a Schur-ring class modulo size-`n` rim hooks onto the
    /// `rows x width` box, checking that every removal branch agrees.
    fn rim_reduce(tau: &[usize], n: usize, width: usize) -> Result<Reduction, String> {
        let r = tau.len();
        if tau[0] <= width {
            let mut m = HashMap::new();
            m.insert((tau.to_vec(), 0usize), 1i64);
            return Ok(m);
        }
        let mut result: Option<Reduction> = None;
        for (new, height) in strip_removals(tau, n) {
            let sign = if (r - height) % 2 == 0 { 1 } else { -1 };
            let sub = rim_reduce(&new, n, width)?;
            let mut branch: Reduction = HashMap::new();
            for ((p, d), m) in sub {
                *branch.entry((p, d + 1)).or_insert(0) += sign * m;
            }
            branch.retain(|_, m| *m != 0);
            match &result {
                None => result = Some(branch),
                Some(prev) => {
                    if *prev != branch {
                        return Err(format!("inconsistent rim-hook reduction of {tau:?}"));
                    }
                }
            }
        }
        Ok(result.unwrap_or_default())
    }

    /// Classical product of two Schur classes in the `r`-row ring.
    fn schur_product(lam: &[usize], mu: &[usize], r: usize) -> Vec<(Vec<usize>, i64)> {
        let total: usize = lam.iter().sum::<usize>() + mu.iter().sum::<usize>();
        let maxw = lam[0] + mu[0];
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(r);
        fn rec(
            row: usize,
            r: usize,
            maxpart: usize,
            left: usize,
            cur: &mut Vec<usize>,
            lam: &[usize],
            mu: &[usize],
            out: &mut Vec<(Vec<usize>, i64)>,
        ) {
            if row == r {
                if left == 0 {
                    let c = lr_coeff(lam, mu, cur);
                    if c != 0 {
                        out.push((cur.clone(), c));
                    }
                }
                return;
            }
            let hi = maxpart.min(left);
            for w in (0..=hi).rev() {
                cur.push(w);
                rec(row + 1, r, w, left - w, cur, lam, mu, out);
                cur.pop();
            }
        }
        rec(0, r, maxw, total, &mut cur, lam, mu, &mut out);
        out
    }

    /// Three-point genus-zero invariant of Gr(r, n) at degree `d`.
    fn gw_invariant(
        lam: &[usize],
        mu: &[usize],
        nu: &[usize],
        d: usize,
        r: usize,
        n: usize,
    ) -> Result<i64, String> {
        let width = n - r;
        let complement: Vec<usize> = (0..r).map(|i| width - nu[r - 1 - i]).collect();
        let mut total = 0i64;
        for (tau, c) in schur_product(lam, mu, r) {
            let red = rim_reduce(&tau, n, width)?;
            if let Some(m) = red.get(&(complement.clone(), d)) {
                total += c * m;
            }
        }
        Ok(total)
    }

    /// Partition attached to an r-subset of {1..n} given as a bitmask
    /// (bit s set means position s+1 is chosen).
    fn subset_partition(mask: u8, r: usize, n: usize) -> Vec<usize> {
        let positions: Vec<usize> = (0..n).filter(|s| mask >> s & 1 == 1).collect();
        (0..r).map(|s| n - r + s + 1 - (positions[s] + 1)).collect()
    }

    /// One row of the system: for each chosen index set, the sum of the
    /// corresponding class entries is bounded by `d`.
    #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
    pub struct Row {
        pub r: usize,
        pub i_mask: u8,
        pub j_mask: u8,
        pub k_mask: u8,
        pub d: usize,
    }

    /// Enumerate every row with a non-vanishing invariant for SU(n).
    pub fn generate(n: usize) -> Result<Vec<Row>, String> {
        let mut rows = Vec::new();
        for r in 1..n {
            let width = n - r;
            let max_d = (3 * r * width - r * width) / n;
            let subsets: Vec<u8> = (0u8..1 << n)
                .filter(|m| m.count_ones() as usize == r)
                .collect();
            for d in 0..=max_d {
                let need = r * width + n * d;
                for &im in &subsets {
                    let li = subset_partition(im, r, n);
                    for &jm in &subsets {
                        let lj = subset_partition(jm, r, n);
                        for &km in &subsets {
                            let lk = subset_partition(km, r, n);
                            let s: usize = li.iter().sum::<usize>()
                                + lj.iter().sum::<usize>()
                                + lk.iter().sum::<usize>();
                            if s != need {
                                continue;
                            }
                            if gw_invariant(&li, &lj, &lk, d, r, n)? != 0 {
                                rows.push(Row {
                                    r,
                                    i_mask: im,
                                    j_mask: jm,
                                    k_mask: km,
                                    d,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(rows)
    }

    /// Self-checks: the SU(2) system must reduce to the triangle
    /// inequalities plus the quantum wall, and the SU(4) system must have
    /// the expected size, rank split, and slot symmetry.
    pub fn self_check(su4: &[Row]) -> Result<(), String> {
        let mut su2 = generate(2)?;
        su2.sort();
        let mut expect = vec![
            Row {
                r: 1,
                i_mask: 0b01,
                j_mask: 0b01,
                k_mask: 0b01,
                d: 1,
            },
            Row {
                r: 1,
                i_mask: 0b01,
                j_mask: 0b10,
                k_mask: 0b10,
                d: 0,
            },
            Row {
                r: 1,
                i_mask: 0b10,
                j_mask: 0b01,
                k_mask: 0b10,
                d: 0,
            },
            Row {
                r: 1,
                i_mask: 0b10,
                j_mask: 0b10,
                k_mask: 0b01,
                d: 0,
            },
        ];
        expect.sort();
        if su2 != expect {
            return Err(format!("SU(2) reduction produced {su2:?}"));
        }

        let counts: Vec<usize> = (1..4).map(|r| su4.iter().filter(|q| q.r == r).count()).collect();
        if counts != vec![16, 40, 16] {
            return Err(format!("rank split {counts:?}, expected [16, 40, 16]"));
        }
        if su4.len() != 72 {
            return Err(format!("{} rows, expected 72", su4.len()));
        }
        let set: std::collections::BTreeSet<Row> = su4.iter().copied().collect();
        for q in su4 {
            let perms = [
                (q.i_mask, q.k_mask, q.j_mask),
                (q.j_mask, q.i_mask, q.k_mask),
                (q.j_mask, q.k_mask, q.i_mask),
                (q.k_mask, q.i_mask, q.j_mask),
                (q.k_mask, q.j_mask, q.i_mask),
            ];
            for (i_mask, j_mask, k_mask) in perms {
                let p = Row {
                    r: q.r,
                    i_mask,
                    j_mask,
                    k_mask,
                    d: q.d,
                };
                if !set.contains(&p) {
                    return Err(format!("system not symmetric: missing {p:?}"));
                }
            }
        }
        Ok(())
    }
}

fn inequality_table() -> Result<&'static [Inequality], FeasibilityError> {
    static TABLE: OnceLock<Result<Vec<Inequality>, String>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let rows = table::generate(4)?;
        table::self_check(&rows)?;
        Ok(rows
            .iter()
            .map(|q| Inequality {
                i_mask: q.i_mask,
                j_mask: q.j_mask,
                k_mask: q.k_mask,
                rhs: q.d as f64,
            })
            .collect())
    });
    match t {
        Ok(v) => Ok(v.as_slice()),
        Err(e) => Err(FeasibilityError::InequalityTableUnavailable(e.clone())),
    }
}

fn masked_sum(mask: u8, v: &[f64; 4]) -> f64 {
    (0..4)
        .filter(|s| mask >> s & 1 == 1)
        .map(|s| v[s])
        .sum()
}

fn system_slack(rows: &[Inequality], a: &[f64; 4], b: &[f64; 4], c: &[f64; 4]) -> f64 {
    rows.iter()
        .map(|q| {
            q.rhs - masked_sum(q.i_mask, a) - masked_sum(q.j_mask, b) - masked_sum(q.k_mask, c)
        })
        .fold(f64::INFINITY, f64::min)
}

/// The two special-unitary lifts of a gate class. They coincide for
/// classes fixed by the half-turn relabeling, in which case only one is
/// returned.
fn lifts(c: CanonicalCoordinate) -> Vec<[f64; 4]> {
    let l = weyl::to_logspec(c);
    let shifted = weyl::rho(&l);
    if l.max_dev(&shifted) < 1e-12 {
        vec![l.values()]
    } else {
        vec![l.values(), shifted.values()]
    }
}

fn class_inverse(v: &[f64; 4]) -> [f64; 4] {
    [-v[3], -v[2], -v[1], -v[0]]
}

/// Signed distance of the target class from the boundary of the
/// depth-2 reachable set, in the units of the inequality system: the
/// best over lift combinations of the worst row slack. Positive means
/// feasible with room to spare, negative means every lift violates
/// some row by at least that much.
pub fn two_layer_margin(
    target: CanonicalCoordinate,
    b1: CanonicalCoordinate,
    b2: CanonicalCoordinate,
) -> Result<f64, FeasibilityError> {
    let rows = inequality_table()?;
    let mut best = f64::NEG_INFINITY;
    for la in lifts(target) {
        let inv = class_inverse(&la);
        for lb in lifts(b1) {
            for lc in lifts(b2) {
                best = best.max(system_slack(rows, &inv, &lb, &lc));
            }
        }
    }
    Ok(best)
}

/// Whether some circuit of two basis layers `b1`, `b2` with arbitrary
/// single-qubit dressing implements the target class. Decided by the
/// 72-inequality system over every combination of the class lifts.
pub fn two_layer_feasible(
    target: CanonicalCoordinate,
    b1: CanonicalCoordinate,
    b2: CanonicalCoordinate,
) -> Result<bool, FeasibilityError> {
    Ok(two_layer_margin(target, b1, b2)? >= -INEQUALITY_TOL)
}

/// Minimal number of layers of a basis gate needed for SWAP, as far as
/// the theory characterizes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapLayers {
    One,
    Two,
    Three,
    MoreThan3,
}

fn point_segment_distance(
    p: CanonicalCoordinate,
    a: CanonicalCoordinate,
    b: CanonicalCoordinate,
) -> f64 {
    let pv = Vector3::new(p.x, p.y, p.z);
    let av = Vector3::new(a.x, a.y, a.z);
    let bv = Vector3::new(b.x, b.y, b.z);
    let ab = bv - av;
    let t = ((pv - av).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (pv - (av + ab * t)).norm()
}

/// Classify how many layers of `g` a SWAP needs: the SWAP class itself
/// (1), the two segments joining B to the square roots of SWAP (2), the
/// region whose complement is four tetrahedra (3), or more.
pub fn swap_min_layers(g: CanonicalCoordinate) -> SwapLayers {
    if g.max_dev(CanonicalCoordinate::SWAP) <= REGION_TOL {
        return SwapLayers::One;
    }
    let d2 = point_segment_distance(
        g,
        CanonicalCoordinate::B,
        CanonicalCoordinate::SQRT_SWAP,
    )
    .min(point_segment_distance(
        g,
        CanonicalCoordinate::B,
        CanonicalCoordinate::SQRT_SWAP_DAG,
    ));
    if d2 <= REGION_TOL {
        return SwapLayers::Two;
    }
    if Region::swap_three().contains(g, REGION_TOL) {
        return SwapLayers::Three;
    }
    SwapLayers::MoreThan3
}

/// Whether two layers of `g` can implement CNOT.
pub fn cnot_two_layer(g: CanonicalCoordinate) -> bool {
    Region::cnot_two().contains(g, REGION_TOL)
}

/// Monte-Carlo estimate of the chamber fraction a region occupies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub fraction: f64,
    pub std_error: f64,
    pub box_samples: u64,
    pub chamber_samples: u64,
}

/// Estimate a region's share of the chamber volume by rejection sampling
/// from the chamber's bounding box. Deterministic for a fixed seed
/// independent of worker count: draws are split into counter-seeded
/// blocks reduced in order.
pub fn region_volume(region: &Region, n_samples: u64, seed: u64) -> VolumeEstimate {
    assert!(n_samples >= 100_000, "need at least 1e5 samples");
    const BLOCK: u64 = 65_536;
    let blocks = n_samples.div_ceil(BLOCK) as usize;
    let counts = par::map_indexed(blocks, |b| {
        let mut rng = par::block_rng(seed, b as u64);
        let lo = b as u64 * BLOCK;
        let len = BLOCK.min(n_samples - lo);
        let mut accepted = 0u64;
        let mut hits = 0u64;
        for _ in 0..len {
            let x: f64 = rng.gen();
            let y: f64 = 0.5 * rng.gen::<f64>();
            let z: f64 = 0.5 * rng.gen::<f64>();
            if z <= y && y <= x && x <= 1.0 - y {
                accepted += 1;
                if region.contains(CanonicalCoordinate { x, y, z }, REGION_TOL) {
                    hits += 1;
                }
            }
        }
        (accepted, hits)
    });
    let accepted: u64 = counts.iter().map(|c| c.0).sum();
    let hits: u64 = counts.iter().map(|c| c.1).sum();
    let fraction = hits as f64 / accepted as f64;
    VolumeEstimate {
        fraction,
        std_error: (fraction * (1.0 - fraction) / accepted as f64).sqrt(),
        box_samples: n_samples,
        chamber_samples: accepted,
    }
}

/// Earliest qualifying trajectory sample for a criterion. When the
/// trajectory enters the regions between two samples, the crossing
/// duration is estimated by bisecting the straight segment between the
/// neighbouring coordinates and the result is flagged; the returned
/// sample is always the measured one, since only it carries a simulated
/// unitary.
#[derive(Clone, Debug)]
pub struct FirstHit {
    pub sample: TrajectorySample,
    pub sample_index: usize,
    pub crossing_duration: f64,
    pub interpolated: bool,
}

pub fn first_hit(
    traj: &Trajectory,
    crit: &SelectionCriterion,
) -> Result<FirstHit, FeasibilityError> {
    let idx = traj
        .samples
        .iter()
        .position(|s| crit.satisfied_by(s.coordinate))
        .ok_or(FeasibilityError::NoIntersection)?;
    let hit = &traj.samples[idx];
    if idx == 0 {
        return Ok(FirstHit {
            sample: hit.clone(),
            sample_index: idx,
            crossing_duration: hit.duration,
            interpolated: false,
        });
    }
    let prev = &traj.samples[idx - 1];
    let lerp = |t: f64| CanonicalCoordinate {
        x: prev.coordinate.x + t * (hit.coordinate.x - prev.coordinate.x),
        y: prev.coordinate.y + t * (hit.coordinate.y - prev.coordinate.y),
        z: prev.coordinate.z + t * (hit.coordinate.z - prev.coordinate.z),
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if crit.satisfied_by(lerp(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(FirstHit {
        sample: hit.clone(),
        sample_index: idx,
        crossing_duration: prev.duration + hi * (hit.duration - prev.duration),
        interpolated: true,
    })
}
