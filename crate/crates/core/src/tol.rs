//! Numerical tolerances shared across the crate.
//!
//! Every comparison that is not exact integer arithmetic goes through one of
//! these constants so that callers and tests agree on what "equal" means.

/// Absolute tolerance for LP optimality, feasibility and classification.
pub const LP: f64 = 1e-9;

/// Relative tolerance used when comparing schedule weights in the
/// stochastic simulator (weights are computed from integer queue lengths).
pub const WEIGHT: f64 = 1e-12;

/// Default relative tolerance for the fluid epsilon-argmax schedule set.
pub const FLUID_TIE: f64 = 1e-9;

/// Queue level below which a fluid queue counts as empty.
pub const Q_FLOOR: f64 = 1e-9;

/// Default per-step projection budget for the fluid integrator.
pub const CLIP_BUDGET: f64 = 0.1;

/// Primal accuracy of the lifting map.
pub const CONVEX_PRIMAL: f64 = 1e-6;

/// Stopping threshold on the projected dual gradient of the lifting map.
pub const DUAL_GRADIENT: f64 = 1e-8;

/// Largest workload violation accepted from a converged lifting map.
pub const LIFT_FEASIBILITY: f64 = 1e-7;

/// `|a - b| <= tol * (1 + max(|a|, |b|))`.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
