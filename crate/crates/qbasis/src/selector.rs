//! Per-edge basis-gate selection.
//!
//! A device edge yields a duration-ordered gate family when its coupler is
//! driven; this module picks one gate from that family per edge. Selection
//! either takes the fastest sample whose coordinate lies in a set of
//! synthesis-depth regions, or, for the comparison baseline, the sample
//! closest to sqrt-iSWAP on a weakly driven trajectory. [`select_device`]
//! runs the whole flow (bias nulling, drive calibration, trajectory
//! sampling, selection) for every edge and collects the per-edge outcomes
//! into one serializable basis set.

use crate::config::REGION_TOL;
use crate::feasibility::{first_hit, FeasibilityError, Region, SelectionCriterion};
use crate::fidelity::{gate_coherence_limit, CoherenceParams};
use crate::hamsim::{
    find_drive_frequency, static_zz, zero_zz_bias, DeviceEdge, DeviceModel, DrivePulse,
    HamsimError, PairParams, PairSimulator, SiteId, Trajectory,
};
use crate::par;
use crate::synth::min_layers;
use crate::weyl::{weyl_distance, CanonicalCoordinate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest Weyl-chamber distance from sqrt-iSWAP at which a sample still
/// qualifies as the baseline gate.
pub const BASELINE_DISTANCE_LIMIT: f64 = 0.02;

/// Residual static ZZ (rad/s) above which a bisection root is rejected as
/// a pole crossing rather than a zero crossing.
const BIAS_RESIDUAL_LIMIT: f64 = std::f64::consts::TAU * 10.0e3;

#[derive(Debug, Error)]
pub enum SelectorError {
    /// No trajectory sample satisfies the criterion; carries how far the
    /// trajectory was scanned so the caller can tell a short trajectory
    /// from an unreachable region.
    #[error("no sample within {max_duration:.3e} s satisfies {criterion}")]
    NoIntersection { criterion: String, max_duration: f64 },
    #[error(
        "closest sample is {best:.4} from sqrt-iswap, outside the baseline \
         window {BASELINE_DISTANCE_LIMIT}"
    )]
    BaselineTooFar { best: f64 },
    /// The static ZZ scan between the two qubit frequencies found no sign
    /// change that bisects to a small residual.
    #[error("no zero-ZZ coupler bias between {lo:.4e} and {hi:.4e} rad/s")]
    NoOperatingPoint { lo: f64, hi: f64 },
    #[error(transparent)]
    Simulation(#[from] HamsimError),
}

/// Which rule picks the gate. The two numbered criteria keep the names
/// they carry in reports: `criterion1` takes the fastest sample that can
/// synthesize SWAP in three layers, `criterion2` the fastest that can
/// also synthesize CNOT in two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    BaselineSqiswap,
    Criterion1,
    Criterion2,
    Custom,
}

impl CriterionKind {
    /// The region conjunction behind a numbered criterion; `None` for the
    /// baseline (proximity rule, not a region) and for `Custom` (caller
    /// supplies the criterion).
    pub fn criterion(self) -> Option<SelectionCriterion> {
        match self {
            Self::Criterion1 => Some(SelectionCriterion::new(
                "criterion1",
                vec![Region::swap_three().clone()],
                REGION_TOL,
            )),
            Self::Criterion2 => Some(SelectionCriterion::new(
                "criterion2",
                vec![Region::swap_three().clone(), Region::cnot_two().clone()],
                REGION_TOL,
            )),
            Self::BaselineSqiswap | Self::Custom => None,
        }
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BaselineSqiswap => "baseline_sqiswap",
            Self::Criterion1 => "criterion1",
            Self::Criterion2 => "criterion2",
            Self::Custom => "custom",
        })
    }
}

/// Drive strength and sampling grid for one trajectory scan.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DriveSettings {
    /// Relative coupler-frequency modulation depth.
    pub xi: f64,
    /// Scan horizon in seconds.
    pub t_max: f64,
    /// Sample spacing in seconds.
    pub spacing: f64,
}

impl DriveSettings {
    /// Weak drive whose trajectory tracks the XY exchange path closely;
    /// long enough to reach sqrt-iSWAP with margin for device spread.
    pub fn low_drive() -> Self {
        Self { xi: 0.005, t_max: 250e-9, spacing: 1e-9 }
    }

    /// Strong drive at the given modulation depth; the interesting
    /// crossings happen within tens of nanoseconds.
    pub fn high_drive(xi: f64) -> Self {
        Self { xi, t_max: 100e-9, spacing: 1e-9 }
    }
}

/// One edge's chosen gate: the measured trajectory sample, not an
/// interpolant, so the unitary is one the scan actually produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisAssignment {
    pub edge: (SiteId, SiteId),
    pub criterion: CriterionKind,
    pub sample: crate::hamsim::TrajectorySample,
}

/// Edge whose selection failed, with the stringified cause; kept next to
/// the successful assignments so a partial build stays inspectable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeFailure {
    pub edge: (SiteId, SiteId),
    pub message: String,
}

/// Selection outcome for a whole device.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviceBasisSet {
    pub criterion: CriterionKind,
    pub settings: DriveSettings,
    pub assignments: Vec<BasisAssignment>,
    pub failures: Vec<EdgeFailure>,
}

/// Aggregate view of a basis set, durations in seconds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BasisSummary {
    pub n_assigned: usize,
    pub n_failed: usize,
    pub mean_duration: f64,
    pub mean_fidelity: f64,
}

impl DeviceBasisSet {
    pub fn summary(&self, coherence: &CoherenceParams) -> BasisSummary {
        let n = self.assignments.len();
        let mut mean_duration = 0.0;
        let mut mean_fidelity = 0.0;
        for a in &self.assignments {
            mean_duration += a.sample.duration / n as f64;
            mean_fidelity += gate_coherence_limit(a.sample.duration, coherence, 2) / n as f64;
        }
        BasisSummary {
            n_assigned: n,
            n_failed: self.failures.len(),
            mean_duration,
            mean_fidelity,
        }
    }

    /// Mean basis, SWAP and CNOT durations in nanoseconds, with the SWAP
    /// and CNOT costs built from each edge's layer count: `L` basis pulses
    /// interleaved with `L + 1` single-qubit walls of `d_1q_ns` each.
    pub fn table_row(&self, label: &str, d_1q_ns: f64) -> crate::fidelity::GateTableRow {
        let n = self.assignments.len() as f64;
        let mut basis_ns = 0.0;
        let mut swap_ns = 0.0;
        let mut cnot_ns = 0.0;
        for a in &self.assignments {
            let b = a.sample.duration * 1e9;
            let swap = min_layers(CanonicalCoordinate::SWAP, a.sample.coordinate).layers as f64;
            let cnot = min_layers(CanonicalCoordinate::CNOT, a.sample.coordinate).layers as f64;
            basis_ns += b / n;
            swap_ns += (swap * b + (swap + 1.0) * d_1q_ns) / n;
            cnot_ns += (cnot * b + (cnot + 1.0) * d_1q_ns) / n;
        }
        crate::fidelity::GateTableRow {
            label: label.to_string(),
            basis_ns,
            swap_ns,
            cnot_ns,
        }
    }

    /// Chosen unitary per edge, in the shape the circuit lowering takes.
    pub fn edge_bases(&self) -> Vec<((SiteId, SiteId), crate::weyl::Unitary2Q)> {
        self.assignments
            .iter()
            .map(|a| (a.edge, a.sample.unitary.clone()))
            .collect()
    }

    /// Per-edge durations in nanoseconds keyed by flat qubit indices, in
    /// the shape the scheduler takes.
    pub fn edge_durations_ns(
        &self,
        device: &DeviceModel,
    ) -> std::collections::HashMap<(u32, u32), f64> {
        self.assignments
            .iter()
            .map(|a| {
                let key = (device.site_index(a.edge.0), device.site_index(a.edge.1));
                (key, a.sample.duration * 1e9)
            })
            .collect()
    }
}

/// Re-parks the coupler of one edge at the bias nulling its static ZZ.
///
/// The zero is bracketed by scanning the interior of the qubit-frequency
/// interval for a sign change, then bisected; a root whose residual ZZ
/// stays large is a hybridization pole and is skipped. Probe points where
/// the dressed states cannot be identified (too close to a resonance)
/// reset the bracket instead of failing the edge.
pub fn operating_point(params: &PairParams) -> Result<PairParams, SelectorError> {
    let lo = params.omega_a.min(params.omega_b);
    let hi = params.omega_a.max(params.omega_b);
    let gap = hi - lo;
    let at = |w: f64| {
        let mut p = params.clone();
        p.omega_c0 = w;
        p
    };
    const PROBES: usize = 25;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..PROBES {
        let w = lo + gap * (0.08 + 0.84 * k as f64 / (PROBES - 1) as f64);
        let Ok(zz) = static_zz(&at(w)) else {
            prev = None;
            continue;
        };
        if let Some((wp, zp)) = prev {
            if zp.signum() != zz.signum() {
                if let Ok(root) = zero_zz_bias(params, (wp, w)) {
                    let p = at(root);
                    if static_zz(&p).is_ok_and(|r| r.abs() < BIAS_RESIDUAL_LIMIT) {
                        return Ok(p);
                    }
                }
            }
        }
        prev = Some((w, zz));
    }
    Err(SelectorError::NoOperatingPoint { lo, hi })
}

/// Full scan for one edge: null the ZZ, calibrate the drive frequency at
/// the requested depth, sample the gate family.
pub fn drive_edge(edge: &DeviceEdge, settings: DriveSettings) -> Result<Trajectory, SelectorError> {
    let p = operating_point(&edge.params)?;
    let omega_d = find_drive_frequency(&p, settings.xi)?;
    let drive = DrivePulse::from_xi(settings.xi, omega_d, settings.t_max);
    let sim = PairSimulator::new(&p)?;
    Ok(sim.sample_trajectory((edge.a, edge.b), &drive, settings.t_max, settings.spacing)?)
}

/// Applies a numbered criterion or the baseline rule to one trajectory.
///
/// Criterion hits take the first sample whose coordinate lies in every
/// region; when the boundary is crossed between samples this is the later,
/// in-region one, so the assigned unitary is always a measured gate. The
/// baseline takes the sample closest to sqrt-iSWAP and insists it lies
/// within [`BASELINE_DISTANCE_LIMIT`].
pub fn select_basis(
    traj: &Trajectory,
    kind: CriterionKind,
) -> Result<BasisAssignment, SelectorError> {
    match kind.criterion() {
        Some(crit) => select_basis_with(traj, &crit).map(|mut a| {
            a.criterion = kind;
            a
        }),
        None => match kind {
            CriterionKind::BaselineSqiswap => baseline_assignment(traj),
            _ => panic!("custom criteria carry their own regions; use select_basis_with"),
        },
    }
}

/// Criterion-region selection with a caller-built [`SelectionCriterion`];
/// the assignment is tagged [`CriterionKind::Custom`].
pub fn select_basis_with(
    traj: &Trajectory,
    crit: &SelectionCriterion,
) -> Result<BasisAssignment, SelectorError> {
    let hit = first_hit(traj, crit).map_err(|e| match e {
        FeasibilityError::NoIntersection => SelectorError::NoIntersection {
            criterion: crit.name().to_string(),
            max_duration: traj.samples.last().map_or(0.0, |s| s.duration),
        },
        other => panic!("region membership cannot fail structurally: {other}"),
    })?;
    Ok(BasisAssignment {
        edge: traj.pair,
        criterion: CriterionKind::Custom,
        sample: hit.sample,
    })
}

fn baseline_assignment(traj: &Trajectory) -> Result<BasisAssignment, SelectorError> {
    let target = CanonicalCoordinate::SQRT_ISWAP;
    let best = traj
        .samples
        .iter()
        .min_by(|a, b| {
            weyl_distance(a.coordinate, target)
                .total_cmp(&weyl_distance(b.coordinate, target))
        })
        .expect("trajectories always carry the zero-duration sample");
    let d = weyl_distance(best.coordinate, target);
    if d > BASELINE_DISTANCE_LIMIT {
        return Err(SelectorError::BaselineTooFar { best: d });
    }
    Ok(BasisAssignment {
        edge: traj.pair,
        criterion: CriterionKind::BaselineSqiswap,
        sample: best.clone(),
    })
}

/// Runs [`drive_edge`] then [`select_basis`] on every edge of the device,
/// edges in parallel, outcomes merged in edge order. Failed edges land in
/// `failures` and the build continues.
pub fn select_device(
    device: &DeviceModel,
    kind: CriterionKind,
    settings: DriveSettings,
) -> DeviceBasisSet {
    let outcomes = par::map_indexed(device.edges.len(), |i| {
        let edge = &device.edges[i];
        drive_edge(edge, settings).and_then(|traj| select_basis(&traj, kind))
    });
    let mut assignments = Vec::new();
    let mut failures = Vec::new();
    for (edge, outcome) in device.edges.iter().zip(outcomes) {
        match outcome {
            Ok(a) => assignments.push(a),
            Err(e) => failures.push(EdgeFailure {
                edge: (edge.a, edge.b),
                message: e.to_string(),
            }),
        }
    }
    DeviceBasisSet {
        criterion: kind,
        settings,
        assignments,
        failures,
    }
}
