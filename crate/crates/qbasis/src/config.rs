//! Shared numeric tolerances.
//!
//! Every module pulls its comparison thresholds from here so that a single
//! definition governs what "equal", "unitary" or "on the boundary" means
//! across the crate.

/// Tolerance for geometric identities: unitarity deviation, determinant
/// modulus, coordinate equality, phase matching.
pub const GEOMETRY_TOL: f64 = 1e-9;

/// Tolerance for round-trip reconstruction of a unitary from its
/// factorization (accumulated floating-point error over several matrix
/// products).
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Slack applied to region membership tests in the Weyl chamber, so that
/// points on a face or edge of a closed region count as inside.
pub const REGION_TOL: f64 = 1e-6;

/// Slack applied to the depth-2 inequality system; inequalities hold up to
/// this additive margin, making the feasible set closed.
pub const INEQUALITY_TOL: f64 = 1e-9;

/// Infidelity below which a numerical synthesis attempt counts as exact.
pub const SYNTH_SUCCESS_TOL: f64 = 1e-8;

/// Residual infidelity above which a fully restarted synthesis attempt
/// counts as evidence the target is unreachable at that depth.
pub const SYNTH_FAILURE_FLOOR: f64 = 1e-3;
