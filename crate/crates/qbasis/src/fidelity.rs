//! Coherence-limited fidelity models: per-qubit exponential decay over
//! the busy span of a scheduled circuit, the matching average-fidelity
//! ceiling for individual gates, and the comparison report tables.

use crate::circuit::ScheduledCircuit;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoherenceParams {
    /// Coherence time in seconds, applied to every qubit.
    pub t: f64,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        CoherenceParams { t: 80e-6 }
    }
}

impl CoherenceParams {
    pub fn uniform(t: f64) -> Self {
        assert!(t > 0.0, "coherence time must be positive");
        CoherenceParams { t }
    }
}

/// Product over qubits of exp(-(t_f - t_i)/T), where the span runs from
/// the start of the qubit's first gate to the end of its last. Schedule
/// times are nanoseconds; untouched qubits contribute one.
pub fn circuit_fidelity(s: &ScheduledCircuit, cp: &CoherenceParams) -> f64 {
    let mut f = 1.0;
    for q in 0..s.n_qubits as usize {
        let span = (s.qubit_end[q] - s.qubit_start[q]) * 1e-9;
        f *= (-span / cp.t).exp();
    }
    f
}

fn process_fidelity(duration: f64, t: f64) -> f64 {
    (1.0 + 3.0 * (-duration / t).exp()) / 4.0
}

/// Average-gate-fidelity ceiling of one or two qubits idling through
/// `duration` seconds of amplitude and phase decay at equal rates: the
/// per-qubit process fidelity is (1 + 3e^{-t/T})/4, combined over the
/// tensor product as (2f + 1)/3 for one qubit and (4f^2 + 1)/5 for two.
pub fn gate_coherence_limit(duration: f64, cp: &CoherenceParams, n_qubits: u32) -> f64 {
    assert!(duration >= 0.0, "duration must be nonnegative");
    let f = process_fidelity(duration, cp.t);
    match n_qubits {
        1 => (2.0 * f + 1.0) / 3.0,
        2 => (4.0 * f * f + 1.0) / 5.0,
        _ => panic!("coherence limit is defined for one or two qubits"),
    }
}

/// One basis set's durations for the gate comparison table, in
/// nanoseconds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateTableRow {
    pub label: String,
    pub basis_ns: f64,
    pub swap_ns: f64,
    pub cnot_ns: f64,
}

fn gate_cells(row: &GateTableRow, cp: &CoherenceParams) -> [(f64, f64); 3] {
    [row.basis_ns, row.swap_ns, row.cnot_ns]
        .map(|ns| (ns, gate_coherence_limit(ns * 1e-9, cp, 2)))
}

/// Markdown table with one row per basis set: duration and two-qubit
/// coherence limit for the basis gate and the synthesized SWAP and CNOT.
pub fn gate_table_markdown(rows: &[GateTableRow], cp: &CoherenceParams) -> String {
    let mut out = String::from("| basis set | basis | swap | cnot |\n|---|---|---|---|\n");
    for row in rows {
        let _ = write!(out, "| {} |", row.label);
        for (ns, fid) in gate_cells(row, cp) {
            let _ = write!(out, " {:.2} ns, {:.3}% |", ns, 100.0 * fid);
        }
        out.push('\n');
    }
    out
}

pub fn gate_table_csv(rows: &[GateTableRow], cp: &CoherenceParams) -> String {
    let mut out =
        String::from("label,basis_ns,basis_fidelity,swap_ns,swap_fidelity,cnot_ns,cnot_fidelity\n");
    for row in rows {
        let _ = write!(out, "{}", row.label);
        for (ns, fid) in gate_cells(row, cp) {
            let _ = write!(out, ",{ns:?},{fid:?}");
        }
        out.push('\n');
    }
    out
}

/// One benchmark's circuit fidelities under the three basis sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkTableRow {
    pub benchmark: String,
    pub baseline: f64,
    pub criterion1: f64,
    pub criterion2: f64,
}

pub fn benchmark_table_markdown(rows: &[BenchmarkTableRow]) -> String {
    let mut out =
        String::from("| benchmark | baseline | criterion 1 | criterion 2 |\n|---|---|---|---|\n");
    for row in rows {
        let _ = writeln!(
            out,
            "| {} | {:.2}% | {:.2}% | {:.2}% |",
            row.benchmark,
            100.0 * row.baseline,
            100.0 * row.criterion1,
            100.0 * row.criterion2
        );
    }
    out
}

pub fn benchmark_table_csv(rows: &[BenchmarkTableRow]) -> String {
    let mut out = String::from("benchmark,baseline,criterion1,criterion2\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?}",
            row.benchmark, row.baseline, row.criterion1, row.criterion2
        );
    }
    out
}
