//! Toolkit for choosing two-qubit basis gates per qubit pair.
//!
//! The crate covers the full path from pulse-level physics to circuit-level
//! accounting:
//!
//! - [`weyl`]: Cartan/KAK geometry of two-qubit gates (decomposition,
//!   canonical coordinates, entangling power, perfect-entangler tests).
//! - [`feasibility`]: which targets a basis gate can reach in a fixed number
//!   of layers (depth-2 inequality system, SWAP/CNOT depth regions,
//!   Monte-Carlo region volumes).
//! - [`hamsim`]: time evolution of a two-transmon + tunable-coupler
//!   Hamiltonian, producing gate trajectories in the Weyl chamber.
//! - [`synth`]: numerical synthesis of targets into layered basis-gate
//!   circuits, plus per-edge decomposition caches.
//! - [`circuit`]: a small gate-level IR with an OpenQASM 2 subset parser,
//!   benchmark generators, routing, lowering and scheduling.
//! - [`fidelity`]: coherence-limited fidelity accounting and report tables.
//! - [`selector`]: trajectory-based basis-gate selection criteria applied
//!   per edge of a device.
//!
//! Heavy loops (Monte-Carlo sampling, per-edge simulation, synthesis
//! restarts) fan out through [`par`] when the `parallel` feature is enabled
//! (default) and fall back to sequential execution otherwise. Worker seeds
//! are derived by counter splitting, so results do not depend on worker
//! count.

pub mod circuit;
pub mod config;
pub mod feasibility;
pub mod fidelity;
pub mod hamsim;
pub mod linalg;
pub mod par;
pub mod selector;
pub mod synth;
pub mod weyl;
