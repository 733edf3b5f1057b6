//! Feasibility properties checked against independent oracles:
//! barycentric membership versus the stored half-space forms, an
//! independent chamber sampler versus the rejection-sampling volume
//! estimator, and the general inequality decision versus the dedicated
//! polyhedral fast paths. The remaining oracle, multi-start numerical
//! synthesis, lives with the synthesis tests and the acceptance suite.

use proptest::prelude::*;
use qbasis::config::REGION_TOL;
use qbasis::feasibility::{
    cnot_two_layer, first_hit, mirror_point, region_volume, swap_min_layers, two_layer_feasible,
    FeasibilityError, Region, SelectionCriterion, SwapLayers, Tetrahedron,
};
use qbasis::hamsim::{DrivePulse, Trajectory, TrajectorySample};
use qbasis::weyl::{canonicalize, is_perfect_entangler, CanonicalCoordinate, Unitary2Q};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type CC = CanonicalCoordinate;

/// Independent chamber sampler: uniform cube draws folded into the
/// chamber. Distinct method from the bounding-box rejection used by
/// `region_volume`.
fn chamber_sample(rng: &mut ChaCha20Rng) -> CC {
    canonicalize([rng.gen(), rng.gen(), rng.gen()])
}

/// Membership oracle from barycentric coordinates alone.
fn barycentric_contains(t: &Tetrahedron, p: CC, tol: f64) -> bool {
    t.barycentric(p).iter().all(|&l| l >= -tol)
}

fn all_tetrahedra() -> Vec<Tetrahedron> {
    [Region::swap_three(), Region::cnot_two(), Region::perfect_entangler()]
        .iter()
        .flat_map(|r| r.complement_tetrahedra().iter().cloned())
        .collect()
}

#[test]
fn halfspace_membership_matches_barycentric() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let tets = all_tetrahedra();
    for _ in 0..10_000 {
        let p = CC {
            x: rng.gen(),
            y: 0.5 * rng.gen::<f64>(),
            z: 0.5 * rng.gen::<f64>(),
        };
        for t in &tets {
            assert_eq!(t.contains(p, 1e-9), barycentric_contains(t, p, 1e-9), "{p:?}");
        }
    }
}

#[test]
fn mirror_is_an_involution() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let c = chamber_sample(&mut rng);
        assert!(mirror_point(mirror_point(c)).max_dev(c) < 1e-9, "{c:?}");
    }
}

#[test]
fn mirror_fixes_the_two_layer_segments() {
    for k in 0..=20 {
        let s = k as f64 / 20.0;
        let p = CC { x: 0.5 - 0.25 * s, y: 0.25, z: 0.25 * s };
        assert!(mirror_point(p).max_dev(p) < 1e-12);
        let q = CC { x: 0.5 + 0.25 * s, y: 0.25, z: 0.25 * s };
        assert!(mirror_point(q).max_dev(q) < 1e-12);
    }
}

#[test]
fn b_gate_layers_reach_any_target() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    for _ in 0..500 {
        let t = chamber_sample(&mut rng);
        assert!(two_layer_feasible(t, CC::B, CC::B).unwrap(), "{t:?}");
    }
}

#[test]
fn swap_three_region_equals_the_mirror_reachability_rule() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let swap3 = Region::swap_three();
    let mut inside = 0u32;
    for _ in 0..2000 {
        let g = chamber_sample(&mut rng);
        let by_rule = two_layer_feasible(mirror_point(g), g, g).unwrap();
        let by_region = swap3.contains(g, REGION_TOL);
        assert_eq!(by_rule, by_region, "{g:?}");
        inside += by_region as u32;
        let layers = swap_min_layers(g);
        assert_eq!(layers == SwapLayers::Three, by_region, "{g:?}");
    }
    let frac = f64::from(inside) / 2000.0;
    assert!((frac - 0.685).abs() < 0.03, "swap3 fraction {frac}");
}

#[test]
fn cnot_two_region_equals_the_general_decision() {
    let mut rng = ChaCha20Rng::seed_from_u64(29);
    let mut inside = 0u32;
    for _ in 0..2000 {
        let g = chamber_sample(&mut rng);
        let by_rule = two_layer_feasible(CC::CNOT, g, g).unwrap();
        let by_region = cnot_two_layer(g);
        assert_eq!(by_rule, by_region, "{g:?}");
        inside += by_region as u32;
    }
    let frac = f64::from(inside) / 2000.0;
    assert!((frac - 0.75).abs() < 0.03, "cnot2 fraction {frac}");
}

#[test]
fn pe_region_agrees_with_the_halfspace_test() {
    let pe = Region::perfect_entangler();
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let mut checked = 0u32;
    while checked < 2000 {
        let c = chamber_sample(&mut rng);
        let margins = [
            c.x + c.y - 0.5,
            0.5 - (c.x - c.y),
            0.5 - (c.y + c.z),
        ];
        if margins.iter().any(|m| m.abs() < 1e-5) {
            continue;
        }
        assert_eq!(pe.contains(c, REGION_TOL), is_perfect_entangler(c), "{c:?}");
        checked += 1;
    }
}

#[test]
fn region_volume_reproduces_known_fractions() {
    let swap3 = region_volume(Region::swap_three(), 200_000, 7);
    assert!((swap3.fraction - 0.685).abs() < 0.015, "{swap3:?}");
    let cnot2 = region_volume(Region::cnot_two(), 200_000, 7);
    assert!((cnot2.fraction - 0.75).abs() < 0.015, "{cnot2:?}");
    let pe = region_volume(Region::perfect_entangler(), 200_000, 7);
    assert!((pe.fraction - 0.5).abs() < 0.01, "{pe:?}");
}

#[test]
fn region_volume_is_deterministic_and_cross_checks() {
    let a = region_volume(Region::swap_three(), 100_000, 42);
    let b = region_volume(Region::swap_three(), 100_000, 42);
    assert_eq!(a.fraction, b.fraction);
    assert_eq!(a.chamber_samples, b.chamber_samples);

    // independent sampler, independent seed
    let mut rng = ChaCha20Rng::seed_from_u64(1234);
    let n = 100_000u32;
    let hits = (0..n)
        .filter(|_| Region::swap_three().contains(chamber_sample(&mut rng), REGION_TOL))
        .count();
    let indep = hits as f64 / f64::from(n);
    let sigma = (a.std_error.powi(2) + indep * (1.0 - indep) / f64::from(n)).sqrt();
    assert!(
        (a.fraction - indep).abs() < 5.0 * sigma,
        "rejection {} vs folded {indep}",
        a.fraction
    );
}

fn line_trajectory(points: &[(f64, f64, f64)], spacing: f64) -> Trajectory {
    let samples = points
        .iter()
        .enumerate()
        .map(|(k, &(x, y, z))| {
            let coordinate = CC { x, y, z };
            TrajectorySample {
                duration: k as f64 * spacing,
                unitary: Unitary2Q::from_coordinate(coordinate),
                coordinate,
                leakage: 0.0,
            }
        })
        .collect();
    Trajectory {
        pair: ((0, 0), (0, 1)),
        drive: DrivePulse { delta: 0.0, omega_d: 0.0, duration: 0.0, xi: 0.0 },
        samples,
        spacing,
    }
}

fn swap3_criterion() -> SelectionCriterion {
    SelectionCriterion::new("swap3", vec![Region::swap_three().clone()], REGION_TOL)
}

#[test]
fn first_hit_on_the_xy_diagonal_is_sqrt_iswap() {
    let pts: Vec<_> = (0..=40).map(|k| (k as f64 * 0.0125, k as f64 * 0.0125, 0.0)).collect();
    let traj = line_trajectory(&pts, 1e-9);
    let hit = first_hit(&traj, &swap3_criterion()).unwrap();
    assert!(hit.sample.coordinate.max_dev(CC::SQRT_ISWAP) < 1e-9, "{:?}", hit.sample.coordinate);
    assert_eq!(hit.sample_index, 20);
}

#[test]
fn first_hit_on_the_xx_axis_is_the_cnot_class() {
    let pts: Vec<_> = (0..=40).map(|k| (k as f64 * 0.0125, 0.0, 0.0)).collect();
    let traj = line_trajectory(&pts, 1e-9);
    let hit = first_hit(&traj, &swap3_criterion()).unwrap();
    assert!(hit.sample.coordinate.max_dev(CC::CNOT) < 1e-9, "{:?}", hit.sample.coordinate);
    assert_eq!(hit.sample_index, 40);
}

#[test]
fn first_hit_interpolates_between_straddling_samples() {
    let pts: Vec<_> = (0..=25).map(|k| (k as f64 * 0.013, k as f64 * 0.013, 0.0)).collect();
    let traj = line_trajectory(&pts, 1e-9);
    let hit = first_hit(&traj, &swap3_criterion()).unwrap();
    assert_eq!(hit.sample_index, 20);
    assert!(hit.interpolated);
    assert!(hit.crossing_duration > traj.samples[19].duration);
    assert!(hit.crossing_duration <= traj.samples[20].duration);
    // the crossing sits where x + y reaches 1/2
    let t = hit.crossing_duration / 1e-9;
    assert!((t * 0.013 * 2.0 - 0.5).abs() < 1e-4, "crossing at {t}");
}

#[test]
fn first_hit_without_straddle_is_not_flagged() {
    let pts = [(0.3, 0.25, 0.0), (0.31, 0.26, 0.0)];
    let traj = line_trajectory(&pts, 1e-9);
    let hit = first_hit(&traj, &swap3_criterion()).unwrap();
    assert_eq!(hit.sample_index, 0);
    assert!(!hit.interpolated);
    assert_eq!(hit.crossing_duration, 0.0);
}

#[test]
fn first_hit_reports_no_intersection() {
    let pts: Vec<_> = (0..10).map(|k| (0.05 + 0.001 * k as f64, 0.03, 0.0)).collect();
    let traj = line_trajectory(&pts, 1e-9);
    match first_hit(&traj, &swap3_criterion()) {
        Err(FeasibilityError::NoIntersection) => {}
        other => panic!("expected NoIntersection, got {other:?}"),
    }
}

#[test]
fn first_hit_is_monotone_under_extension() {
    let full: Vec<_> = (0..50)
        .map(|k| {
            let t = k as f64 / 49.0;
            (0.05 + 0.4 * t, 0.02 + 0.28 * t, 0.1 * t)
        })
        .collect();
    let long = line_trajectory(&full, 1e-9);
    let hit_long = first_hit(&long, &swap3_criterion()).unwrap();
    let short = line_trajectory(&full[..hit_long.sample_index + 1], 1e-9);
    let hit_short = first_hit(&short, &swap3_criterion()).unwrap();
    assert_eq!(hit_long.sample_index, hit_short.sample_index);
    assert_eq!(hit_long.crossing_duration, hit_short.crossing_duration);
    assert_eq!(hit_long.interpolated, hit_short.interpolated);
}

#[test]
fn conjunction_criterion_requires_every_region() {
    let both = SelectionCriterion::new(
        "swap3+cnot2",
        vec![Region::swap_three().clone(), Region::cnot_two().clone()],
        REGION_TOL,
    );
    // inside swap3 but above the z = 1/4 cap excluded by cnot2
    let high = CC { x: 0.5, y: 0.45, z: 0.4 };
    assert!(Region::swap_three().contains(high, REGION_TOL));
    assert!(!both.satisfied_by(high));
    assert!(both.satisfied_by(CC::SQRT_ISWAP));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn two_layer_feasibility_is_symmetric_in_the_basis_slots(
        raw in prop::array::uniform3(0.0..1.0f64),
        raw1 in prop::array::uniform3(0.0..1.0f64),
        raw2 in prop::array::uniform3(0.0..1.0f64),
    ) {
        let t = canonicalize(raw);
        let b1 = canonicalize(raw1);
        let b2 = canonicalize(raw2);
        prop_assert_eq!(
            two_layer_feasible(t, b1, b2).unwrap(),
            two_layer_feasible(t, b2, b1).unwrap()
        );
    }

    #[test]
    fn mirror_involution(raw in prop::array::uniform3(0.0..1.0f64)) {
        let c = canonicalize(raw);
        prop_assert!(mirror_point(mirror_point(c)).max_dev(c) < 1e-9);
    }

    #[test]
    fn swap_three_membership_is_the_three_layer_class(raw in prop::array::uniform3(0.0..1.0f64)) {
        let g = canonicalize(raw);
        let in_region = Region::swap_three().contains(g, REGION_TOL);
        prop_assert_eq!(swap_min_layers(g) == SwapLayers::Three, in_region);
    }
}
