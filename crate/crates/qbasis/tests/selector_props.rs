//! Selection checked end to end: trajectories from the real integrator,
//! depth guarantees re-proved by the numerical synthesizer rather than by
//! the region tables that made the choice.

use qbasis::hamsim::{
    find_drive_frequency, generate_device, DeviceModel, DrivePulse, PairSimulator, Trajectory,
};
use qbasis::selector::{
    operating_point, select_basis, select_device, CriterionKind, DriveSettings,
    BASELINE_DISTANCE_LIMIT,
};
use qbasis::synth::{synthesize, SynthesisOptions};
use qbasis::weyl::{weyl_distance, CanonicalCoordinate, Unitary2Q};
use std::f64::consts::TAU;
use std::slice::from_ref;
use std::sync::OnceLock;

struct Setup {
    device: DeviceModel,
    high: Trajectory,
    high_fine: Trajectory,
    low: Trajectory,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let device = generate_device(1, 2, 11, TAU * 3e9, TAU * 5e9, 0.015, 80e-6);
        let edge = &device.edges[0];
        let pair = (edge.a, edge.b);
        let p = operating_point(&edge.params).expect("zero-ZZ bias");
        let sim = PairSimulator::new(&p).expect("simulator");

        let wd_strong = find_drive_frequency(&p, 0.04).expect("strong drive");
        let t_high = 80e-9;
        let strong = DrivePulse::from_xi(0.04, wd_strong, t_high);
        let high = sim
            .sample_trajectory(pair, &strong, t_high, 1e-9)
            .expect("strong trajectory");
        let high_fine = sim
            .sample_trajectory(pair, &strong, t_high, 0.5e-9)
            .expect("half-spacing trajectory");

        let wd_weak = find_drive_frequency(&p, 0.005).expect("weak drive");
        let t_low = 250e-9;
        let weak = DrivePulse::from_xi(0.005, wd_weak, t_low);
        let low = sim
            .sample_trajectory(pair, &weak, t_low, 1e-9)
            .expect("weak trajectory");

        Setup { device, high, high_fine, low }
    })
}

#[test]
fn chosen_gates_honor_their_depth_guarantees() {
    let s = setup();
    let c1 = select_basis(&s.high, CriterionKind::Criterion1).unwrap();
    let c2 = select_basis(&s.high, CriterionKind::Criterion2).unwrap();
    let opts = SynthesisOptions::default();
    let swap = Unitary2Q::from_coordinate(CanonicalCoordinate::SWAP);
    let cnot = Unitary2Q::from_coordinate(CanonicalCoordinate::CNOT);
    for a in [&c1, &c2] {
        let r = synthesize(&swap, from_ref(&a.sample.unitary), 3, &opts)
            .expect("swap at depth three");
        assert!(r.infidelity < 1e-8, "swap residual {:.3e}", r.infidelity);
    }
    let r = synthesize(&cnot, from_ref(&c2.sample.unitary), 2, &opts)
        .expect("cnot at depth two");
    assert!(r.infidelity < 1e-8, "cnot residual {:.3e}", r.infidelity);
    assert!(c2.sample.duration >= c1.sample.duration);
}

#[test]
fn half_spacing_resampling_leaves_the_choice_in_place() {
    let s = setup();
    for kind in [CriterionKind::Criterion1, CriterionKind::Criterion2] {
        let coarse = select_basis(&s.high, kind).unwrap();
        let fine = select_basis(&s.high_fine, kind).unwrap();
        let shift = (coarse.sample.duration - fine.sample.duration).abs();
        assert!(shift < 1e-9, "{kind}: choice moved {shift:.3e} s on re-sampling");
    }
}

#[test]
fn strong_drive_beats_the_weak_drive_baseline() {
    let s = setup();
    let base = select_basis(&s.low, CriterionKind::BaselineSqiswap).unwrap();
    let d = weyl_distance(base.sample.coordinate, CanonicalCoordinate::SQRT_ISWAP);
    assert!(d <= BASELINE_DISTANCE_LIMIT);
    let c1 = select_basis(&s.high, CriterionKind::Criterion1).unwrap();
    assert!(
        c1.sample.duration < base.sample.duration,
        "criterion1 {:.2} ns vs baseline {:.2} ns",
        c1.sample.duration * 1e9,
        base.sample.duration * 1e9
    );
}

#[test]
fn device_selection_is_complete_and_repeatable() {
    let s = setup();
    let settings = DriveSettings::high_drive(0.04);
    let a = select_device(&s.device, CriterionKind::Criterion2, settings);
    let b = select_device(&s.device, CriterionKind::Criterion2, settings);
    assert_eq!(a.assignments.len(), 1);
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    let crit = CriterionKind::Criterion2.criterion().unwrap();
    for asg in &a.assignments {
        assert!(crit.satisfied_by(asg.sample.coordinate));
    }
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );

    let summary = a.summary(&qbasis::fidelity::CoherenceParams::default());
    assert_eq!(summary.n_assigned, 1);
    assert_eq!(summary.n_failed, 0);
    assert!(summary.mean_duration > 0.0 && summary.mean_duration < 1e-7);
    assert!(summary.mean_fidelity > 0.99 && summary.mean_fidelity < 1.0);

    let row = a.table_row("criterion 2", 20.0);
    assert!((row.basis_ns - summary.mean_duration * 1e9).abs() < 1e-9);
    assert!((row.swap_ns - (3.0 * row.basis_ns + 80.0)).abs() < 1e-9);
    assert!((row.cnot_ns - (2.0 * row.basis_ns + 60.0)).abs() < 1e-9);
}
