//! Time-domain simulation of a transmon-transmon pair with a tunable
//! coupler, producing effective two-qubit gates as Weyl-chamber
//! trajectories parameterized by pulse duration.
//!
//! The pair is modeled on the truncated product space of three anharmonic
//! oscillators (qubit a, qubit b, coupler c) with exchange couplings on
//! all three bonds. Flux modulation enters as a sinusoidal deviation of
//! the coupler frequency, so the time-dependent part of the Hamiltonian
//! is diagonal in the product basis. The propagator is built from
//! symmetric split steps: a half-step of the static Hamiltonian (one
//! precomputed dense matrix), the diagonal drive phase at the step
//! midpoint, and another static half-step. Each step is exactly unitary
//! and the sequence agrees with midpoint-rule exponential integration
//! through second order in the step size.

use crate::linalg::{c, C64};
use crate::weyl::{CanonicalCoordinate, Unitary2Q};
use nalgebra::{DMatrix, DVector, Matrix4};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Grid position of a qubit: (row, column).
pub type SiteId = (u32, u32);

/// Default integration step (seconds).
pub const DEFAULT_DT: f64 = 2e-12;

/// Modulation depth per unit drive amplitude (rad/s per unit `xi`).
///
/// Single global calibration constant for the flux-to-frequency transfer:
/// `delta = DELTA_PER_XI * xi`. Fixed at the largest modulation depth for
/// which the default pair driven at xi = 0.005 keeps coupler leakage below
/// 1e-3 out to 500 ns with margin; sqrt-iSWAP then sits near 156 ns.
pub const DELTA_PER_XI: f64 = 2.4e11;

pub const DEFAULT_LEVELS_Q: usize = 3;
pub const DEFAULT_LEVELS_C: usize = 4;

/// Coherence time applied to every generated qubit (seconds).
pub const DEFAULT_COHERENCE_TIME: f64 = 80e-6;

#[derive(Debug, Error)]
pub enum HamsimError {
    /// Fewer levels than the minimum needed to resolve leakage out of the
    /// computational subspace.
    #[error("truncated space too small: need >= 3 qubit and >= 4 coupler levels, got {levels_q} and {levels_c}")]
    TruncationTooSmall { levels_q: usize, levels_c: usize },
    /// No dressed eigenstate has majority overlap with a bare
    /// computational state, so labeling the computational subspace would
    /// be arbitrary.
    #[error("dressed-state identification ambiguous: best bare-state overlap {overlap:.3} not above 0.5")]
    StateIdentificationAmbiguous { overlap: f64 },
    /// The static ZZ rate has the same sign at both bracket endpoints.
    #[error("static ZZ does not change sign on the bisection bracket")]
    NoSignChange,
    /// Population transfer stays low at every probed drive frequency.
    #[error("population-transfer landscape is flat: best transfer {max_transfer:.3} below 0.5")]
    FlatLandscape { max_transfer: f64 },
    /// The requested step cannot resolve the fastest phase in the problem.
    #[error("time step {dt:.3e} s exceeds the resolution limit {limit:.3e} s")]
    StepTooLarge { dt: f64, limit: f64 },
    /// So much population left the computational subspace that the polar
    /// factor of the projected block is not a trustworthy gate.
    #[error("leakage {leakage:.3e} too large for a trustworthy computational-subspace unitary")]
    ExcessiveLeakage { leakage: f64 },
}

/// Physical parameters of one qubit-coupler-qubit triple.
///
/// All frequencies are angular (rad/s). Qubit anharmonicities are
/// negative, the coupler anharmonicity positive. `levels_q` and
/// `levels_c` set the oscillator truncation; the defaults (3 and 4) keep
/// one leakage level per qubit and three on the coupler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub omega_c0: f64,
    pub alpha_c: f64,
    pub g_ab: f64,
    pub g_bc: f64,
    pub g_ca: f64,
    pub levels_q: usize,
    pub levels_c: usize,
}

impl PairParams {
    /// Default couplings and anharmonicities around the two given qubit
    /// frequencies; the coupler starts parked midway between them.
    pub fn for_qubit_frequencies(omega_a: f64, omega_b: f64) -> Self {
        Self {
            omega_a,
            omega_b,
            alpha_a: -TAU * 250.0e6,
            alpha_b: -TAU * 250.0e6,
            omega_c0: 0.5 * (omega_a + omega_b),
            alpha_c: TAU * 150.0e6,
            g_ab: TAU * 5.0e6,
            g_bc: TAU * 80.0e6,
            g_ca: TAU * 80.0e6,
            levels_q: DEFAULT_LEVELS_Q,
            levels_c: DEFAULT_LEVELS_C,
        }
    }

    pub fn dim(&self) -> usize {
        self.levels_q * self.levels_q * self.levels_c
    }

    fn index(&self, na: usize, nb: usize, nc: usize) -> usize {
        (na * self.levels_q + nb) * self.levels_c + nc
    }

    fn check_truncation(&self) -> Result<(), HamsimError> {
        if self.levels_q < 3 || self.levels_c < 4 {
            return Err(HamsimError::TruncationTooSmall {
                levels_q: self.levels_q,
                levels_c: self.levels_c,
            });
        }
        Ok(())
    }
}

impl Default for PairParams {
    fn default() -> Self {
        Self::for_qubit_frequencies(TAU * 5.0e9, TAU * 3.0e9)
    }
}

/// Rectangular coupler-flux drive at a fixed modulation frequency.
///
/// `xi` is the dimensionless drive amplitude; `delta` is the resulting
/// peak deviation of the coupler frequency in rad/s.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DrivePulse {
    pub delta: f64,
    pub omega_d: f64,
    pub duration: f64,
    pub xi: f64,
}

impl DrivePulse {
    pub fn from_xi(xi: f64, omega_d: f64, duration: f64) -> Self {
        Self { delta: DELTA_PER_XI * xi, omega_d, duration, xi }
    }

    fn shift(&self, t: f64) -> f64 {
        self.delta * (self.omega_d * t).sin()
    }
}

/// Effective gate after evolving for one pulse duration: the propagator
/// projected on the computational subspace and polar-unitarized, its
/// interaction coordinate, and the weight lost to non-computational
/// levels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub duration: f64,
    pub unitary: Unitary2Q,
    pub coordinate: CanonicalCoordinate,
    pub leakage: f64,
}

/// Duration-ordered gate family for one driven pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub pair: (SiteId, SiteId),
    pub drive: DrivePulse,
    pub samples: Vec<TrajectorySample>,
    pub spacing: f64,
}

/// Full-space Hamiltonian at one instant. `coupler_shift` is the current
/// deviation of the coupler frequency from its DC bias.
///
/// Basis ordering: index = (na * levels_q + nb) * levels_c + nc, qubit a
/// slowest. On-site terms are number operators with anharmonic
/// corrections; the three exchange couplings enter as
/// -g (x^dag y + y^dag x) on each bond.
pub fn build_hamiltonian(p: &PairParams, coupler_shift: f64) -> Result<DMatrix<C64>, HamsimError> {
    p.check_truncation()?;
    let lq = p.levels_q;
    let lc = p.levels_c;
    let dim = p.dim();
    let omega_c = p.omega_c0 + coupler_shift;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let ladder = |n: usize| n as f64;
    for na in 0..lq {
        for nb in 0..lq {
            for nc in 0..lc {
                let i = p.index(na, nb, nc);
                let e = p.omega_a * ladder(na)
                    + 0.5 * p.alpha_a * ladder(na) * ladder(na.saturating_sub(1))
                    + p.omega_b * ladder(nb)
                    + 0.5 * p.alpha_b * ladder(nb) * ladder(nb.saturating_sub(1))
                    + omega_c * ladder(nc)
                    + 0.5 * p.alpha_c * ladder(nc) * ladder(nc.saturating_sub(1));
                h[(i, i)] = c(e, 0.0);
                // a^dag b lowers b into a
                if na + 1 < lq && nb > 0 {
                    let j = p.index(na + 1, nb - 1, nc);
                    let amp = -p.g_ab * (((na + 1) * nb) as f64).sqrt();
                    h[(j, i)] += c(amp, 0.0);
                    h[(i, j)] += c(amp, 0.0);
                }
                // b^dag c lowers the coupler into b
                if nb + 1 < lq && nc > 0 {
                    let j = p.index(na, nb + 1, nc - 1);
                    let amp = -p.g_bc * (((nb + 1) * nc) as f64).sqrt();
                    h[(j, i)] += c(amp, 0.0);
                    h[(i, j)] += c(amp, 0.0);
                }
                // c^dag a lowers a into the coupler
                if nc + 1 < lc && na > 0 {
                    let j = p.index(na - 1, nb, nc + 1);
                    let amp = -p.g_ca * ((na * (nc + 1)) as f64).sqrt();
                    h[(j, i)] += c(amp, 0.0);
                    h[(i, j)] += c(amp, 0.0);
                }
            }
        }
    }
    Ok(h)
}

/// Dressed computational basis at the DC bias: one eigenvector per bare
/// computational state |na nb 0>, labeled by maximal overlap.
struct DressedBasis {
    /// dim x 4 eigenvector columns in the order |00>, |01>, |10>, |11>.
    columns: DMatrix<C64>,
    /// Absolute dressed energies in the same order.
    energies: [f64; 4],
}

fn dressed_basis(
    p: &PairParams,
    eigvals: &DVector<f64>,
    eigvecs: &DMatrix<C64>,
) -> Result<DressedBasis, HamsimError> {
    let dim = p.dim();
    let mut columns = DMatrix::<C64>::zeros(dim, 4);
    let mut energies = [0.0f64; 4];
    for (slot, (na, nb)) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
        let bare = p.index(*na, *nb, 0);
        let mut best_k = 0;
        let mut best_overlap = -1.0f64;
        for k in 0..dim {
            let w = eigvecs[(bare, k)].norm_sqr();
            if w > best_overlap {
                best_overlap = w;
                best_k = k;
            }
        }
        if best_overlap <= 0.5 {
            return Err(HamsimError::StateIdentificationAmbiguous { overlap: best_overlap });
        }
        // fix the gauge: largest component real and positive
        let anchor = eigvecs[(bare, best_k)];
        let phase = anchor / c(anchor.norm(), 0.0);
        for i in 0..dim {
            columns[(i, slot)] = eigvecs[(i, best_k)] * phase.conj();
        }
        energies[slot] = eigvals[best_k];
    }
    Ok(DressedBasis { columns, energies })
}

/// Static ZZ rate E11 - E10 - E01 + E00 (rad/s) of the dressed
/// computational states with the drive off.
pub fn static_zz(p: &PairParams) -> Result<f64, HamsimError> {
    let h = build_hamiltonian(p, 0.0)?;
    let eig = h.symmetric_eigen();
    let d = dressed_basis(p, &eig.eigenvalues, &eig.eigenvectors)?;
    Ok(d.energies[3] - d.energies[2] - d.energies[1] + d.energies[0])
}

/// Coupler bias nulling the static ZZ rate, found by bisection on the
/// given bracket down to a 2*pi*100 Hz interval.
pub fn zero_zz_bias(p: &PairParams, bracket: (f64, f64)) -> Result<f64, HamsimError> {
    let zz_at = |w: f64| -> Result<f64, HamsimError> {
        let mut q = p.clone();
        q.omega_c0 = w;
        static_zz(&q)
    };
    let mut lo = bracket.0.min(bracket.1);
    let mut hi = bracket.0.max(bracket.1);
    let mut f_lo = zz_at(lo)?;
    let f_hi = zz_at(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(HamsimError::NoSignChange);
    }
    while hi - lo > TAU * 100.0 {
        let mid = 0.5 * (lo + hi);
        let f_mid = zz_at(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Split-step propagator for one pair at a fixed time step.
///
/// Construction eigendecomposes the static Hamiltonian once; every
/// integration step then costs one dense matrix product plus a diagonal
/// phase. The dressed computational basis is identified here, at the DC
/// bias, and reused for every projection.
pub struct PairSimulator {
    params: PairParams,
    dt: f64,
    dim: usize,
    /// Coupler occupation per basis index, centered on (levels_c-1)/2.
    nc_centered: DVector<f64>,
    nc_offset: f64,
    /// Midpoint of the static spectrum, subtracted before exponentiation.
    energy_shift: f64,
    half_spread: f64,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<C64>,
    /// exp(-i (H0 - shift) dt/2)
    half_step: DMatrix<C64>,
    /// exp(-i (H0 - shift) dt)
    full_step: DMatrix<C64>,
    dressed: DressedBasis,
}

impl PairSimulator {
    pub fn new(p: &PairParams) -> Result<Self, HamsimError> {
        Self::with_step(p, DEFAULT_DT)
    }

    pub fn with_step(p: &PairParams, dt: f64) -> Result<Self, HamsimError> {
        let h = build_hamiltonian(p, 0.0)?;
        let eig = h.symmetric_eigen();
        let eigvals = eig.eigenvalues;
        let eigvecs = eig.eigenvectors;
        let dressed = dressed_basis(p, &eigvals, &eigvecs)?;
        let e_min = eigvals.min();
        let e_max = eigvals.max();
        let energy_shift = 0.5 * (e_min + e_max);
        let half_spread = 0.5 * (e_max - e_min);
        let limit = TAU / (20.0 * half_spread);
        if dt > limit {
            return Err(HamsimError::StepTooLarge { dt, limit });
        }
        let dim = p.dim();
        let nc_offset = 0.5 * (p.levels_c as f64 - 1.0);
        let nc_centered = DVector::from_fn(dim, |i, _| {
            (i % p.levels_c) as f64 - nc_offset
        });
        let half_step = exp_static(&eigvals, &eigvecs, energy_shift, 0.5 * dt);
        let full_step = exp_static(&eigvals, &eigvecs, energy_shift, dt);
        Ok(Self {
            params: p.clone(),
            dt,
            dim,
            nc_centered,
            nc_offset,
            energy_shift,
            half_spread,
            eigvals,
            eigvecs,
            half_step,
            full_step,
            dressed,
        })
    }

    pub fn params(&self) -> &PairParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Absolute dressed energies of |00>, |01>, |10>, |11> at the DC bias.
    pub fn dressed_energies(&self) -> [f64; 4] {
        self.dressed.energies
    }

    fn check_drive(&self, drive: &DrivePulse) -> Result<(), HamsimError> {
        let spread = self.half_spread + drive.delta.abs() * self.nc_offset;
        let limit = TAU / (20.0 * spread);
        if self.dt > limit {
            return Err(HamsimError::StepTooLarge { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Advances `block` (already left-multiplied by the static half-step)
    /// through `n` full split steps starting at `t0`, accumulating the
    /// scalar phase removed by the energy shift and the coupler-number
    /// centering. Calls `emit` with (1-based step index, finished block,
    /// total phase) at every multiple of `emit_every` and at the last
    /// step. Returns the accumulated phase.
    fn run_steps(
        &self,
        drive: &DrivePulse,
        block: &mut DMatrix<C64>,
        t0: f64,
        n: usize,
        emit_every: usize,
        mut phase: f64,
        emit: &mut dyn FnMut(usize, DMatrix<C64>, f64),
    ) -> f64 {
        for j in 0..n {
            let t_mid = t0 + (j as f64 + 0.5) * self.dt;
            let s = drive.shift(t_mid);
            self.scale_by_drive(block, s, self.dt);
            phase += (self.energy_shift + s * self.nc_offset) * self.dt;
            let last = j + 1 == n;
            if (j + 1) % emit_every == 0 || last {
                let finished = &self.half_step * &*block;
                emit(j + 1, finished, phase);
            }
            if !last {
                *block = &self.full_step * &*block;
            }
        }
        phase
    }

    fn scale_by_drive(&self, block: &mut DMatrix<C64>, s: f64, dt: f64) {
        for i in 0..self.dim {
            let ph = C64::from_polar(1.0, -s * self.nc_centered[i] * dt);
            for col in 0..block.ncols() {
                block[(i, col)] *= ph;
            }
        }
    }

    /// Evolves an arbitrary initial block over [t0, t0 + duration],
    /// splitting the window into whole steps plus one smaller tail step,
    /// and restores the scalar phase removed inside the stepper.
    fn evolve_block(
        &self,
        drive: &DrivePulse,
        t0: f64,
        duration: f64,
        mut block: DMatrix<C64>,
    ) -> DMatrix<C64> {
        let exact = duration / self.dt;
        let mut n = exact.floor() as usize;
        let mut rem = duration - n as f64 * self.dt;
        if (exact - exact.round()).abs() < 1e-6 {
            n = exact.round() as usize;
            rem = 0.0;
        }
        let mut phase = 0.0;
        if n > 0 {
            block = &self.half_step * &block;
            let mut finished: Option<DMatrix<C64>> = None;
            let mut emit = |_step: usize, out: DMatrix<C64>, _ph: f64| {
                finished = Some(out);
            };
            phase = self.run_steps(drive, &mut block, t0, n, n, 0.0, &mut emit);
            block = finished.expect("final step emitted");
        }
        if rem > 0.0 {
            let half_tail = exp_static(&self.eigvals, &self.eigvecs, self.energy_shift, 0.5 * rem);
            block = &half_tail * &block;
            let s = drive.shift(t0 + n as f64 * self.dt + 0.5 * rem);
            self.scale_by_drive(&mut block, s, rem);
            phase += (self.energy_shift + s * self.nc_offset) * rem;
            block = &half_tail * &block;
        }
        let scalar = C64::from_polar(1.0, -phase);
        block * scalar
    }

    /// Full-space propagator for the window [t0, t0 + duration] of the
    /// drive, as a dense matrix in the product basis.
    pub fn propagate_from(
        &self,
        drive: &DrivePulse,
        t0: f64,
        duration: f64,
    ) -> Result<DMatrix<C64>, HamsimError> {
        self.check_drive(drive)?;
        let block = DMatrix::<C64>::identity(self.dim, self.dim);
        Ok(self.evolve_block(drive, t0, duration, block))
    }

    /// Propagator from drive start, `propagate_from(drive, 0, duration)`.
    pub fn propagate(&self, drive: &DrivePulse, duration: f64) -> Result<DMatrix<C64>, HamsimError> {
        self.propagate_from(drive, 0.0, duration)
    }

    /// Computational-subspace gate and leakage of a full-space propagator
    /// for a pulse of the given duration.
    ///
    /// The 4x4 block in the dressed basis is phase-aligned to the
    /// rotating frame of the two dressed qubit frequencies, so a trivial
    /// pulse maps to the identity up to the residual ZZ phase. Leakage is
    /// 1 - tr(P P^dag)/4 before unitarization; the gate is the polar
    /// factor of the aligned block.
    pub fn effective_unitary(
        &self,
        propagator: &DMatrix<C64>,
        duration: f64,
    ) -> Result<(Unitary2Q, f64), HamsimError> {
        let block = propagator * &self.dressed.columns;
        let (unitary, leakage) = self.project_block(&block, duration);
        if leakage > 0.05 {
            return Err(HamsimError::ExcessiveLeakage { leakage });
        }
        Ok((unitary, leakage))
    }

    /// Shared projection path: `block` is the propagator applied to the
    /// four dressed computational columns.
    fn project_block(&self, block: &DMatrix<C64>, duration: f64) -> (Unitary2Q, f64) {
        let d = &self.dressed;
        let mut p = Matrix4::<C64>::zeros();
        for row in 0..4 {
            for col in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..self.dim {
                    acc += d.columns[(i, row)].conj() * block[(i, col)];
                }
                p[(row, col)] = acc;
            }
        }
        let e00 = d.energies[0];
        let wa = d.energies[2] - e00;
        let wb = d.energies[1] - e00;
        let frame = [e00, e00 + wb, e00 + wa, e00 + wa + wb];
        for row in 0..4 {
            let ph = C64::from_polar(1.0, frame[row] * duration);
            for col in 0..4 {
                p[(row, col)] *= ph;
            }
        }
        let leakage = 1.0 - 0.25 * (p.adjoint() * p).trace().re;
        let svd = nalgebra::SVD::new(p, true, true);
        let u = svd.u.expect("requested U factor");
        let v_t = svd.v_t.expect("requested V^t factor");
        let polar = u * v_t;
        let unitary = Unitary2Q::new(polar).expect("polar factor of the projected block is unitary");
        (unitary, leakage.max(0.0))
    }

    /// Incrementally sampled gate family: one sample every `spacing`
    /// seconds up to `t_max`, all from a single pass of the integrator
    /// applied to the four dressed computational columns.
    pub fn sample_trajectory(
        &self,
        pair: (SiteId, SiteId),
        drive: &DrivePulse,
        t_max: f64,
        spacing: f64,
    ) -> Result<Trajectory, HamsimError> {
        assert!(
            spacing >= self.dt,
            "sample spacing {spacing} below the integration step {}",
            self.dt
        );
        self.check_drive(drive)?;
        let steps_per = (spacing / self.dt).round() as usize;
        let n_samples = (t_max / spacing + 1e-9).floor() as usize;
        let mut samples = Vec::with_capacity(n_samples + 1);
        samples.push(TrajectorySample {
            duration: 0.0,
            unitary: Unitary2Q::new_unchecked(Matrix4::identity()),
            coordinate: CanonicalCoordinate::IDENTITY,
            leakage: 0.0,
        });
        if n_samples > 0 {
            let mut block = &self.half_step * &self.dressed.columns;
            let mut collect = |step: usize, finished: DMatrix<C64>, phase: f64| {
                let k = step / steps_per;
                let duration = k as f64 * spacing;
                let restored = finished * C64::from_polar(1.0, -phase);
                let (unitary, leakage) = self.project_block(&restored, duration);
                let coordinate = unitary.kak().coordinate;
                samples.push(TrajectorySample { duration, unitary, coordinate, leakage });
            };
            self.run_steps(
                drive,
                &mut block,
                0.0,
                steps_per * n_samples,
                steps_per,
                0.0,
                &mut collect,
            );
        }
        Ok(Trajectory { pair, drive: *drive, samples, spacing })
    }
}

/// exp(-i (H0 - shift) tau) from the static eigendecomposition.
fn exp_static(
    eigvals: &DVector<f64>,
    eigvecs: &DMatrix<C64>,
    shift: f64,
    tau: f64,
) -> DMatrix<C64> {
    let dim = eigvals.len();
    let mut scaled = eigvecs.clone();
    for k in 0..dim {
        let ph = C64::from_polar(1.0, -(eigvals[k] - shift) * tau);
        for i in 0..dim {
            scaled[(i, k)] *= ph;
        }
    }
    scaled * eigvecs.adjoint()
}

/// Drive frequency maximizing the |01> <-> |10> population transfer at
/// amplitude `xi`, from a coarse grid around the dressed qubit difference
/// frequency refined by golden-section search.
pub fn find_drive_frequency(p: &PairParams, xi: f64) -> Result<f64, HamsimError> {
    let sim = PairSimulator::new(p)?;
    let energies = sim.dressed_energies();
    let center = (energies[2] - energies[1]).abs();
    let delta = DELTA_PER_XI * xi;
    let da = p.omega_a - p.omega_c0;
    let db = p.omega_b - p.omega_c0;
    let slope = 0.5 * (p.g_bc * p.g_ca).abs() * (1.0 / (da * da) + 1.0 / (db * db));
    let j_est = (0.5 * slope * delta).max(TAU * 0.05e6);
    let t_probe = (1.4 * PI / (2.0 * j_est)).clamp(60e-9, 280e-9);
    let mut best_seen = -1.0f64;
    let mut probe = |omega_d: f64| -> Result<f64, HamsimError> {
        let drive = DrivePulse { delta, omega_d, duration: t_probe, xi };
        let transfer = sim.max_transfer(&drive, t_probe)?;
        if transfer > best_seen {
            best_seen = transfer;
        }
        Ok(transfer)
    };
    let half_width = TAU * 2.0e6 + 1.2 * j_est;
    let n_grid = 9;
    let mut grid_best = (0usize, -1.0f64);
    let grid: Vec<f64> = (0..n_grid)
        .map(|k| center - half_width + 2.0 * half_width * k as f64 / (n_grid - 1) as f64)
        .collect();
    for (k, &w) in grid.iter().enumerate() {
        let tr = probe(w)?;
        if tr > grid_best.1 {
            grid_best = (k, tr);
        }
    }
    let mut lo = grid[grid_best.0.saturating_sub(1)];
    let mut hi = grid[(grid_best.0 + 1).min(n_grid - 1)];
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = probe(x1)?;
    let mut f2 = probe(x2)?;
    while hi - lo > TAU * 50.0e3 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = probe(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = probe(x1)?;
        }
    }
    if best_seen < 0.5 {
        return Err(HamsimError::FlatLandscape { max_transfer: best_seen.max(0.0) });
    }
    Ok(if f1 > f2 { x1 } else { x2 })
}

impl PairSimulator {
    /// Maximum |<10|psi(t)>|^2 over the probe window for a system started
    /// in dressed |01>.
    fn max_transfer(&self, drive: &DrivePulse, t_probe: f64) -> Result<f64, HamsimError> {
        self.check_drive(drive)?;
        let n = (t_probe / self.dt).round() as usize;
        let mut block = DMatrix::<C64>::zeros(self.dim, 1);
        for i in 0..self.dim {
            block[(i, 0)] = self.dressed.columns[(i, 1)];
        }
        block = &self.half_step * &block;
        let target: Vec<C64> = (0..self.dim).map(|i| self.dressed.columns[(i, 2)]).collect();
        let mut best = 0.0f64;
        let stride = 16;
        let mut emit = |_step: usize, finished: DMatrix<C64>, _phase: f64| {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..self.dim {
                acc += target[i].conj() * finished[(i, 0)];
            }
            let w = acc.norm_sqr();
            if w > best {
                best = w;
            }
        };
        self.run_steps(drive, &mut block, 0.0, n, stride, 0.0, &mut emit);
        Ok(best)
    }
}

/// Per-qubit record of a generated device.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QubitInfo {
    pub site: SiteId,
    pub frequency: f64,
    pub coherence_time: f64,
    pub color: u8,
}

/// One coupled pair of the grid with its simulation parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviceEdge {
    pub a: SiteId,
    pub b: SiteId,
    pub params: PairParams,
}

/// Rectangular-grid device: checkerboard-colored qubits and one tunable
/// coupler per nearest-neighbor bond.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviceModel {
    pub rows: u32,
    pub cols: u32,
    pub qubits: Vec<QubitInfo>,
    pub edges: Vec<DeviceEdge>,
    pub seed: u64,
}

impl DeviceModel {
    pub fn qubit(&self, site: SiteId) -> Option<&QubitInfo> {
        self.qubits.iter().find(|q| q.site == site)
    }

    pub fn edge_between(&self, a: SiteId, b: SiteId) -> Option<&DeviceEdge> {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    /// Row-major flat index of a site, the qubit numbering circuits use.
    pub fn site_index(&self, site: SiteId) -> u32 {
        site.0 * self.cols + site.1
    }

    pub fn index_site(&self, index: u32) -> SiteId {
        (index / self.cols, index % self.cols)
    }

    pub fn n_qubits(&self) -> u32 {
        self.rows * self.cols
    }
}

/// Samples a rows x cols grid device. Qubit frequencies are drawn from
/// one normal distribution per checkerboard color (color 0 around
/// `freq_mean_lo`, color 1 around `freq_mean_hi`, both with standard
/// deviation `rel_std` times the mean); every qubit gets coherence time
/// `t_coherence`. Edge parameters combine the endpoint frequencies with
/// the global defaults. The same seed reproduces the device exactly.
pub fn generate_device(
    rows: u32,
    cols: u32,
    seed: u64,
    freq_mean_lo: f64,
    freq_mean_hi: f64,
    rel_std: f64,
    t_coherence: f64,
) -> DeviceModel {
    assert!(rows as u64 * cols as u64 >= 2, "need at least two qubits");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut qubits = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for col in 0..cols {
            let color = ((r + col) % 2) as u8;
            let mean = if color == 0 { freq_mean_lo } else { freq_mean_hi };
            let dist = Normal::new(mean, rel_std * mean).expect("positive std");
            let frequency = dist.sample(&mut rng);
            qubits.push(QubitInfo {
                site: (r, col),
                frequency,
                coherence_time: t_coherence,
                color,
            });
        }
    }
    let freq_of = |site: SiteId| {
        qubits
            .iter()
            .find(|q| q.site == site)
            .map(|q| q.frequency)
            .expect("site inside the grid")
    };
    let mut edges = Vec::new();
    for r in 0..rows {
        for col in 0..cols {
            let here = (r, col);
            if col + 1 < cols {
                let right = (r, col + 1);
                edges.push(DeviceEdge {
                    a: here,
                    b: right,
                    params: PairParams::for_qubit_frequencies(freq_of(here), freq_of(right)),
                });
            }
            if r + 1 < rows {
                let down = (r + 1, col);
                edges.push(DeviceEdge {
                    a: here,
                    b: down,
                    params: PairParams::for_qubit_frequencies(freq_of(here), freq_of(down)),
                });
            }
        }
    }
    DeviceModel { rows, cols, qubits, edges, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff4;
    use nalgebra::Matrix4;

    fn defaults() -> PairParams {
        PairParams::default()
    }

    #[test]
    fn dimension_is_the_product_of_level_counts() {
        let p = defaults();
        assert_eq!(p.dim(), 36);
        let h = build_hamiltonian(&p, 0.0).unwrap();
        assert_eq!(h.nrows(), 36);
        assert_eq!(h.ncols(), 36);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let mut p = defaults();
        p.omega_a *= 1.013;
        p.omega_b *= 0.991;
        p.g_ab = TAU * 7.3e6;
        p.g_bc = TAU * 55.0e6;
        p.g_ca = TAU * 91.0e6;
        for shift in [0.0, TAU * 0.3e9, -TAU * 1.1e9] {
            let h = build_hamiltonian(&p, shift).unwrap();
            let norm = h.norm();
            let dev = (&h - h.adjoint()).norm();
            assert!(dev < 1e-9 * norm, "hermiticity deviation {dev:.3e}");
        }
    }

    #[test]
    fn decoupled_limit_recovers_oscillator_ladders() {
        let mut p = defaults();
        p.g_ab = 0.0;
        p.g_bc = 0.0;
        p.g_ca = 0.0;
        let h = build_hamiltonian(&p, 0.0).unwrap();
        let mut eigs: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = Vec::new();
        for na in 0..3i32 {
            for nb in 0..3i32 {
                for nc in 0..4i32 {
                    let ladder = |n: i32, w: f64, alpha: f64| {
                        w * n as f64 + 0.5 * alpha * (n * (n - 1)) as f64
                    };
                    expect.push(
                        ladder(na, p.omega_a, p.alpha_a)
                            + ladder(nb, p.omega_b, p.alpha_b)
                            + ladder(nc, p.omega_c0, p.alpha_c),
                    );
                }
            }
        }
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, x) in eigs.iter().zip(&expect) {
            assert!((e - x).abs() < 1e-2, "eigenvalue {e} vs ladder sum {x}");
        }
    }

    #[test]
    fn truncation_guard_rejects_small_spaces() {
        let mut p = defaults();
        p.levels_q = 2;
        assert!(matches!(
            build_hamiltonian(&p, 0.0),
            Err(HamsimError::TruncationTooSmall { levels_q: 2, .. })
        ));
        let mut q = defaults();
        q.levels_c = 3;
        assert!(matches!(
            static_zz(&q),
            Err(HamsimError::TruncationTooSmall { levels_c: 3, .. })
        ));
    }

    #[test]
    fn zz_vanishes_without_coupling() {
        let mut p = defaults();
        p.g_ab = 0.0;
        p.g_bc = 0.0;
        p.g_ca = 0.0;
        let zz = static_zz(&p).unwrap();
        assert!(zz.abs() < 1e-3, "residual zz {zz:.3e} rad/s");
    }

    #[test]
    fn direct_coupling_zz_matches_second_order_perturbation() {
        let mut p = defaults();
        p.g_bc = 0.0;
        p.g_ca = 0.0;
        p.g_ab = TAU * 2.0e6;
        let delta = p.omega_a - p.omega_b;
        let j2 = p.g_ab * p.g_ab;
        let expect = 2.0 * j2 * (p.alpha_a + p.alpha_b)
            / ((delta - p.alpha_b) * (delta + p.alpha_a));
        let zz = static_zz(&p).unwrap();
        assert!(
            (zz - expect).abs() < 0.05 * expect.abs(),
            "zz {:.4e} vs perturbative {:.4e}",
            zz,
            expect
        );
    }

    #[test]
    fn zero_duration_gives_the_identity() {
        let p = defaults();
        let sim = PairSimulator::new(&p).unwrap();
        let drive = DrivePulse::from_xi(0.005, TAU * 2.0e9, 0.0);
        let u = sim.propagate(&drive, 0.0).unwrap();
        let dev = (&u - DMatrix::<C64>::identity(36, 36)).norm();
        assert!(dev < 1e-12);
        let (gate, leakage) = sim.effective_unitary(&u, 0.0).unwrap();
        assert!(leakage < 1e-12);
        assert!(max_abs_diff4(gate.matrix(), &Matrix4::identity()) < 1e-9);
    }

    #[test]
    fn oversized_steps_are_rejected() {
        let p = defaults();
        assert!(matches!(
            PairSimulator::with_step(&p, 50e-12),
            Err(HamsimError::StepTooLarge { .. })
        ));
        let sim = PairSimulator::new(&p).unwrap();
        let wild = DrivePulse::from_xi(0.5, TAU * 2.0e9, 10e-9);
        assert!(matches!(
            sim.propagate(&wild, 1e-9),
            Err(HamsimError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn scrambling_propagator_reports_excessive_leakage() {
        let p = defaults();
        let sim = PairSimulator::new(&p).unwrap();
        let mut perm = DMatrix::<C64>::identity(36, 36);
        let i = p.index(1, 1, 0);
        let j = p.index(0, 2, 0);
        perm[(i, i)] = c(0.0, 0.0);
        perm[(j, j)] = c(0.0, 0.0);
        perm[(i, j)] = c(1.0, 0.0);
        perm[(j, i)] = c(1.0, 0.0);
        assert!(matches!(
            sim.effective_unitary(&perm, 1e-9),
            Err(HamsimError::ExcessiveLeakage { .. })
        ));
    }

    #[test]
    fn drive_amplitude_maps_linearly_to_depth() {
        let d1 = DrivePulse::from_xi(0.005, TAU * 2.0e9, 50e-9);
        let d2 = DrivePulse::from_xi(0.010, TAU * 2.0e9, 50e-9);
        assert!((d2.delta - 2.0 * d1.delta).abs() < 1e-6 * d1.delta.abs());
        assert_eq!(d1.delta, DELTA_PER_XI * 0.005);
    }

    #[test]
    fn generated_grid_has_grid_combinatorics() {
        let dev = generate_device(3, 4, 11, TAU * 3.0e9, TAU * 5.0e9, 0.05, 80e-6);
        assert_eq!(dev.qubits.len(), 12);
        assert_eq!(dev.edges.len(), 3 * 3 + 2 * 4);
        for e in &dev.edges {
            let qa = dev.qubit(e.a).unwrap();
            let qb = dev.qubit(e.b).unwrap();
            let dr = (qa.site.0 as i64 - qb.site.0 as i64).abs();
            let dc = (qa.site.1 as i64 - qb.site.1 as i64).abs();
            assert_eq!(dr + dc, 1, "edge {:?}-{:?} not nearest-neighbor", e.a, e.b);
            assert_ne!(qa.color, qb.color);
            assert_eq!(e.params.omega_a, qa.frequency);
            assert_eq!(e.params.omega_b, qb.frequency);
        }
        for q in &dev.qubits {
            assert_eq!(q.coherence_time, 80e-6);
        }
    }

    #[test]
    fn same_seed_reproduces_the_device_byte_for_byte() {
        let a = generate_device(4, 4, 42, TAU * 3.0e9, TAU * 5.0e9, 0.05, 80e-6);
        let b = generate_device(4, 4, 42, TAU * 3.0e9, TAU * 5.0e9, 0.05, 80e-6);
        let c = generate_device(4, 4, 43, TAU * 3.0e9, TAU * 5.0e9, 0.05, 80e-6);
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        let jc = serde_json::to_string(&c).unwrap();
        assert_eq!(ja, jb);
        assert_ne!(ja, jc);
    }
}
