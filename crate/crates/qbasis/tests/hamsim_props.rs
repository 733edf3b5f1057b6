use nalgebra::DMatrix;
use qbasis::hamsim::{
    find_drive_frequency, generate_device, static_zz, zero_zz_bias, DrivePulse, HamsimError,
    PairParams, PairSimulator,
};
use qbasis::linalg::C64;
use qbasis::weyl::{weyl_distance, CanonicalCoordinate};
use std::f64::consts::TAU;

fn biased_to_zero_zz(p: &PairParams) -> PairParams {
    let root = zero_zz_bias(p, (TAU * 4.0e9, TAU * 4.75e9)).unwrap();
    let mut q = p.clone();
    q.omega_c0 = root;
    q
}

fn dressed_splitting(sim: &PairSimulator) -> f64 {
    let e = sim.dressed_energies();
    (e[2] - e[1]).abs()
}

fn xy_segment_deviation(coord: CanonicalCoordinate) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..=400 {
        let t = 0.5 * k as f64 / 400.0;
        let d = weyl_distance(coord, CanonicalCoordinate { x: t, y: t, z: 0.0 });
        if d < best {
            best = d;
        }
    }
    best
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn bias_root_sits_between_the_qubit_frequencies_and_kills_the_shift() {
    let p = PairParams::default();
    let root = zero_zz_bias(&p, (TAU * 4.0e9, TAU * 4.75e9)).unwrap();
    assert!(root > p.omega_b && root < p.omega_a);
    let mut q = p.clone();
    q.omega_c0 = root;
    assert!(static_zz(&q).unwrap().abs() < TAU * 100.0);
}

#[test]
fn bisection_rejects_a_bracket_without_a_crossing() {
    let p = PairParams::default();
    let err = zero_zz_bias(&p, (TAU * 3.05e9, TAU * 3.5e9)).unwrap_err();
    assert!(matches!(err, HamsimError::NoSignChange));
}

#[test]
fn bias_root_is_insensitive_to_small_coupling_changes() {
    let p = PairParams::default();
    let root = zero_zz_bias(&p, (TAU * 4.0e9, TAU * 4.75e9)).unwrap();
    let mut q = p.clone();
    q.g_bc *= 1.01;
    let moved = zero_zz_bias(&q, (TAU * 4.0e9, TAU * 4.75e9)).unwrap();
    assert!((moved - root).abs() / root < 0.01);
}

#[test]
fn segmented_propagation_composes_exactly() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let drive = DrivePulse::from_xi(0.01, dressed_splitting(&sim), 40e-9);
    let full = sim.propagate(&drive, 40e-9).unwrap();
    let head = sim.propagate(&drive, 17e-9).unwrap();
    let tail = sim.propagate_from(&drive, 17e-9, 23e-9).unwrap();
    assert!(max_abs(&(&tail * &head - full)) < 1e-8);
}

#[test]
fn undriven_evolution_at_the_zero_shift_bias_stays_local() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let idle = DrivePulse { delta: 0.0, omega_d: TAU * 1.5e9, duration: 200e-9, xi: 0.0 };
    let traj = sim.sample_trajectory(((0, 0), (0, 1)), &idle, 200e-9, 40e-9).unwrap();
    assert_eq!(traj.samples.len(), 6);
    let origin = CanonicalCoordinate { x: 0.0, y: 0.0, z: 0.0 };
    for s in &traj.samples {
        assert!(weyl_distance(s.coordinate, origin) < 5e-3);
        assert!(s.leakage < 1e-4);
    }
}

#[test]
fn halving_the_step_leaves_the_coordinate_unchanged_at_scale() {
    let q = biased_to_zero_zz(&PairParams::default());
    let coarse = PairSimulator::new(&q).unwrap();
    let fine = PairSimulator::with_step(&q, coarse.dt() / 2.0).unwrap();
    let drive = DrivePulse::from_xi(0.01, dressed_splitting(&coarse), 30e-9);
    let (gc, _) = coarse
        .effective_unitary(&coarse.propagate(&drive, 30e-9).unwrap(), 30e-9)
        .unwrap();
    let (gf, _) = fine
        .effective_unitary(&fine.propagate(&drive, 30e-9).unwrap(), 30e-9)
        .unwrap();
    assert!(weyl_distance(gc.kak().coordinate, gf.kak().coordinate) < 1e-5);
}

#[test]
fn long_products_stay_unitary() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let drive = DrivePulse::from_xi(0.04, dressed_splitting(&sim), 50e-9);
    for duration in [1000.0 * sim.dt(), 40e-9] {
        let u = sim.propagate(&drive, duration).unwrap();
        let gram = &u * u.adjoint() - DMatrix::<C64>::identity(u.nrows(), u.nrows());
        assert!(max_abs(&gram) < 1e-8);
    }
}

#[test]
fn coupler_truncation_is_converged_for_strong_drives() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim4 = PairSimulator::new(&q).unwrap();
    let mut q5 = q.clone();
    q5.levels_c = 5;
    let sim5 = PairSimulator::new(&q5).unwrap();
    let drive = DrivePulse::from_xi(0.04, dressed_splitting(&sim4), 24e-9);
    let (g4, _) = sim4
        .effective_unitary(&sim4.propagate(&drive, 24e-9).unwrap(), 24e-9)
        .unwrap();
    let (g5, _) = sim5
        .effective_unitary(&sim5.propagate(&drive, 24e-9).unwrap(), 24e-9)
        .unwrap();
    assert!(weyl_distance(g4.kak().coordinate, g5.kak().coordinate) < 1e-4);
}

#[test]
fn neighbouring_samples_move_smoothly() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let drive = DrivePulse::from_xi(0.04, dressed_splitting(&sim), 60e-9);
    let traj = sim.sample_trajectory(((0, 0), (0, 1)), &drive, 60e-9, 1e-9).unwrap();
    for pair in traj.samples.windows(2) {
        assert!(weyl_distance(pair[0].coordinate, pair[1].coordinate) < 0.05);
    }
}

#[test]
fn weak_drives_track_the_exchange_segment() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let wd = find_drive_frequency(&q, 0.005).unwrap();
    assert!((wd - dressed_splitting(&sim)).abs() <= TAU * 1e6);
    let drive = DrivePulse::from_xi(0.005, wd, 500e-9);
    let traj = sim.sample_trajectory(((0, 0), (0, 1)), &drive, 500e-9, 2e-9).unwrap();
    for s in &traj.samples {
        assert!(s.leakage < 1e-3);
        assert!(xy_segment_deviation(s.coordinate) < 0.02);
    }
}

#[test]
fn drive_search_lands_on_the_dressed_splitting() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let wd = find_drive_frequency(&q, 0.01).unwrap();
    assert!((wd - dressed_splitting(&sim)).abs() <= TAU * 1e6);
}

#[test]
fn drive_search_reports_a_flat_landscape_without_a_drive() {
    let q = biased_to_zero_zz(&PairParams::default());
    let err = find_drive_frequency(&q, 0.0).unwrap_err();
    assert!(matches!(err, HamsimError::FlatLandscape { .. }));
}

#[test]
fn sampling_matches_single_shot_propagation() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let drive = DrivePulse::from_xi(0.01, dressed_splitting(&sim), 40e-9);
    let traj = sim.sample_trajectory(((0, 0), (0, 1)), &drive, 40e-9, 10e-9).unwrap();
    let s = &traj.samples[2];
    let (gate, leakage) = sim
        .effective_unitary(&sim.propagate(&drive, s.duration).unwrap(), s.duration)
        .unwrap();
    assert!(weyl_distance(gate.kak().coordinate, s.coordinate) < 1e-9);
    assert!((leakage - s.leakage).abs() < 1e-12);
}

#[test]
fn hybridised_labels_are_rejected_when_no_state_dominates() {
    let mut p = PairParams::default();
    p.omega_c0 = p.omega_a;
    p.g_ca = TAU * 700e6;
    p.g_bc = TAU * 700e6;
    match PairSimulator::new(&p) {
        Err(HamsimError::StateIdentificationAmbiguous { .. }) => {}
        Err(other) => panic!("wrong rejection: {other}"),
        Ok(_) => panic!("hybridised labelling was accepted"),
    }
}

#[test]
fn generated_devices_separate_the_two_sublattices() {
    let rel_std = 0.015;
    let device = generate_device(10, 10, 7, TAU * 3e9, TAU * 5e9, rel_std, 80e-6);
    assert_eq!(device.qubits.len(), 100);
    assert_eq!(device.edges.len(), 180);
    let mean = |color: u8| {
        let freqs: Vec<f64> = device
            .qubits
            .iter()
            .filter(|q| q.color == color)
            .map(|q| q.frequency)
            .collect();
        assert_eq!(freqs.len(), 50);
        freqs.iter().sum::<f64>() / freqs.len() as f64
    };
    let gap = mean(1) - mean(0);
    let sigma_lo = rel_std * TAU * 3e9;
    let sigma_hi = rel_std * TAU * 5e9;
    let stderr = ((sigma_lo * sigma_lo + sigma_hi * sigma_hi) / 50.0).sqrt();
    assert!((gap - TAU * 2e9).abs() < 3.0 * stderr);
}

#[test]
fn trajectories_serialize_reproducibly() {
    let q = biased_to_zero_zz(&PairParams::default());
    let sim = PairSimulator::new(&q).unwrap();
    let drive = DrivePulse::from_xi(0.04, dressed_splitting(&sim), 10e-9);
    let traj = sim.sample_trajectory(((0, 0), (0, 1)), &drive, 10e-9, 2e-9).unwrap();
    let first = serde_json::to_string(&traj).unwrap();
    let reread: qbasis::hamsim::Trajectory = serde_json::from_str(&first).unwrap();
    let second = serde_json::to_string(&reread).unwrap();
    assert_eq!(first, second);
    assert_eq!(reread.samples.len(), traj.samples.len());
    assert_eq!(reread.samples[3].coordinate.x, traj.samples[3].coordinate.x);
}
