//! Fidelity-model properties checked against the raw exponentials they
//! are built from: monotonicity in both arguments, factorization over
//! disjoint subcircuits, and domination of the two-qubit decay bound.

use qbasis::circuit::{schedule, Circuit, Gate, GateKind};
use qbasis::fidelity::{circuit_fidelity, gate_coherence_limit, CoherenceParams};
use std::collections::HashMap;

#[test]
fn ceilings_fall_with_duration_and_rise_with_coherence() {
    let cp = CoherenceParams::default();
    for n_qubits in [1u32, 2] {
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let t = k as f64 * 5e-9;
            let f = gate_coherence_limit(t, &cp, n_qubits);
            assert!(f < last, "not strictly decreasing at {t:.1e} s");
            assert!(f > 0.0 && f <= 1.0);
            last = f;
        }
    }
    let t = 150e-9;
    let mut last = 0.0;
    for k in 1..100 {
        let cp = CoherenceParams::uniform(k as f64 * 2e-6);
        let f = gate_coherence_limit(t, &cp, 2);
        assert!(f > last, "not increasing in coherence time");
        last = f;
    }
}

#[test]
fn disjoint_blocks_factorize() {
    let cp = CoherenceParams::default();
    let durations = HashMap::from([((0u32, 1u32), 55.0), ((2u32, 3u32), 110.0)]);

    let mut left = Circuit::new(4);
    left.gates.push(Gate { kind: GateKind::H, qubits: vec![0], params: vec![] });
    left.gates.push(Gate { kind: GateKind::Native, qubits: vec![0, 1], params: vec![] });
    left.gates.push(Gate { kind: GateKind::H, qubits: vec![1], params: vec![] });

    let mut right = Circuit::new(4);
    right.gates.push(Gate { kind: GateKind::Native, qubits: vec![2, 3], params: vec![] });
    right.gates.push(Gate { kind: GateKind::T, qubits: vec![3], params: vec![] });

    let mut whole = Circuit::new(4);
    whole.gates.extend(left.gates.iter().cloned());
    whole.gates.extend(right.gates.iter().cloned());

    let f_whole = circuit_fidelity(&schedule(&whole, 20.0, &durations), &cp);
    let f_left = circuit_fidelity(&schedule(&left, 20.0, &durations), &cp);
    let f_right = circuit_fidelity(&schedule(&right, 20.0, &durations), &cp);
    assert!((f_whole - f_left * f_right).abs() < 1e-12);
}

#[test]
fn gate_ceiling_dominates_the_qubit_product_bound() {
    let cp = CoherenceParams::default();
    for k in 0..500 {
        let t = k as f64 * 2e-9;
        let ceiling = gate_coherence_limit(t, &cp, 2);
        let product_bound = (-2.0 * t / cp.t).exp();
        assert!(
            ceiling >= product_bound - 1e-15,
            "ceiling {ceiling} under product bound {product_bound} at {t:.1e}"
        );
    }
}

#[test]
fn idle_qubits_never_change_the_product() {
    let cp = CoherenceParams::default();
    let mut narrow = Circuit::new(2);
    narrow.gates.push(Gate { kind: GateKind::X, qubits: vec![0], params: vec![] });
    narrow.gates.push(Gate { kind: GateKind::X, qubits: vec![1], params: vec![] });
    let mut wide = Circuit::new(7);
    wide.gates.extend(narrow.gates.iter().cloned());
    let f_narrow = circuit_fidelity(&schedule(&narrow, 35.0, &HashMap::new()), &cp);
    let f_wide = circuit_fidelity(&schedule(&wide, 35.0, &HashMap::new()), &cp);
    assert_eq!(f_narrow, f_wide);
}
