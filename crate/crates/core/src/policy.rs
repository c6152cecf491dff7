//! MWUM-α control: α-fair rate allocation and max-weight-α scheduling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;
use crate::schedule::Schedule;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("C must be positive and finite, got {0}")]
    InvalidC(f64),
    #[error("tie tolerance must be non-negative, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lexicographically smallest maximizer in canonical schedule order.
    #[default]
    Lexicographic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub alpha: f64,
    pub c_max: f64,
    pub tie_break: TieBreak,
    /// Relative tolerance defining the fluid epsilon-argmax schedule set.
    pub tol_tie: f64,
}

impl PolicyParams {
    /// `alpha = 1` is accepted: it is the logarithmic-utility limit, for
    /// which every quantity used here (the rate maximizer, the schedule
    /// weights, the Lyapunov function) remains well defined.
    pub fn new(alpha: f64, c_max: f64) -> Result<Self, PolicyError> {
        Self::with_tolerance(alpha, c_max, tol::FLUID_TIE)
    }

    pub fn with_tolerance(alpha: f64, c_max: f64, tol_tie: f64) -> Result<Self, PolicyError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(PolicyError::InvalidAlpha(alpha));
        }
        if !(c_max.is_finite() && c_max > 0.0) {
            return Err(PolicyError::InvalidC(c_max));
        }
        if !(tol_tie >= 0.0) {
            return Err(PolicyError::InvalidTolerance(tol_tie));
        }
        Ok(PolicyParams { alpha, c_max, tie_break: TieBreak::Lexicographic, tol_tie })
    }

    /// Parameters using the network's own rate cap.
    pub fn for_network(net: &Network, alpha: f64) -> Result<Self, PolicyError> {
        Self::new(alpha, net.c_max())
    }
}

/// Aggregate rate for a flow type with `n` active flows whose ingress queue
/// holds `q` packets: the maximizer over `[0, C]` of
/// `x^{1-α} n^α / (1-α) − q^α x`, which is `min(n/q, C)` and does not depend
/// on α.
pub fn rate_allocation(n: f64, q: f64, params: &PolicyParams) -> f64 {
    let c = params.c_max;
    if n <= 0.0 {
        0.0
    } else if q <= 0.0 || n >= c * q {
        c
    } else {
        n / q
    }
}

/// Per-queue back-pressure weights `[(I − R) q^α]_e = q_e^α − q_{next(e)}^α`.
pub fn queue_weights(q: &[f64], alpha: f64, net: &Network) -> Vec<f64> {
    let pow: Vec<f64> = q.iter().map(|&x| powa(x, alpha)).collect();
    (0..net.num_queues())
        .map(|e| match net.next_hop(e) {
            Some(to) => pow[e] - pow[to],
            None => pow[e],
        })
        .collect()
}

/// `πᵀ (I − R) q^α`.
pub fn schedule_weight(pi: Schedule, q: &[f64], alpha: f64, net: &Network) -> f64 {
    weight_of(pi, &queue_weights(q, alpha, net))
}

#[inline]
pub(crate) fn weight_of(pi: Schedule, weights: &[f64]) -> f64 {
    pi.queues().map(|e| weights[e]).sum()
}

#[inline]
pub(crate) fn powa(x: f64, alpha: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if alpha == 1.0 {
        x
    } else {
        x.powf(alpha)
    }
}

/// Bitmask of queues with `q_e > floor`.
pub(crate) fn nonempty_mask(q: &[f64], floor: f64) -> u64 {
    q.iter().enumerate().fold(0u64, |m, (e, &x)| if x > floor { m | 1 << e } else { m })
}

/// Max-weight-α schedule for queue lengths `q`.
///
/// The returned schedule attains the maximum weight over the whole schedule
/// set, serves only non-empty queues, and is the lexicographically smallest
/// such maximizer. Returns the canonical index of the schedule.
pub fn select_schedule_index(q: &[f64], params: &PolicyParams, net: &Network) -> usize {
    let weights = queue_weights(q, params.alpha, net);
    let set = net.schedules();
    let best = set
        .elements()
        .iter()
        .map(|&s| weight_of(s, &weights))
        .fold(f64::NEG_INFINITY, f64::max);
    let support = nonempty_mask(q, 0.0);
    let floor = best - tol::WEIGHT * best.abs().max(1.0);
    let idx = set
        .elements()
        .iter()
        .position(|&s| s.0 & !support == 0 && weight_of(s, &weights) >= floor);
    // Shrinking any maximizer onto the non-empty queues keeps it in the
    // (monotone) set and cannot lower its weight, so a candidate always exists.
    idx.expect("monotone schedule set admits a maximizer supported on non-empty queues")
}

/// See [`select_schedule_index`].
pub fn select_schedule(q: &[f64], params: &PolicyParams, net: &Network) -> Schedule {
    net.schedules().get(select_schedule_index(q, params, net))
}

/// Indices of the schedules in the relative epsilon-argmax set, restricted to
/// schedules serving only queues above `q_floor`.
pub fn argmax_set(q: &[f64], alpha: f64, tol_tie: f64, q_floor: f64, net: &Network) -> Vec<usize> {
    let weights = queue_weights(q, alpha, net);
    let support = nonempty_mask(q, q_floor);
    let set = net.schedules();
    let cand: Vec<(usize, f64)> = set
        .elements()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 & !support == 0)
        .map(|(i, &s)| (i, weight_of(s, &weights)))
        .collect();
    let best = cand.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let floor = best - tol_tie * (1.0 + best.abs());
    cand.into_iter().filter(|c| c.1 >= floor).map(|c| c.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::t2;

    fn params(alpha: f64) -> PolicyParams {
        PolicyParams::new(alpha, 10.0).unwrap()
    }

    #[test]
    fn rate_zero_without_flows() {
        assert_eq!(rate_allocation(0.0, 7.0, &params(0.5)), 0.0);
    }

    #[test]
    fn rate_saturates_on_empty_ingress() {
        assert_eq!(rate_allocation(5.0, 0.0, &params(2.0)), 10.0);
    }

    #[test]
    fn rate_matches_grid_argmax_for_two_alphas() {
        // Grid search over [0, 10] at step 1e-4 for the alpha-dependent objective.
        for alpha in [0.5, 2.0] {
            let (n, q) = (1.0f64, 4.0f64);
            let obj = |x: f64| x.powf(1.0 - alpha) * n.powf(alpha) / (1.0 - alpha) - q.powf(alpha) * x;
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 0..=100_000 {
                let x = i as f64 * 1e-4;
                let v = obj(x);
                if v > best.0 {
                    best = (v, x);
                }
            }
            assert!((best.1 - 0.25).abs() <= 1e-4);
            assert_eq!(rate_allocation(n, q, &params(alpha)), 0.25);
        }
    }

    #[test]
    fn alpha_validation() {
        assert!(PolicyParams::new(0.0, 1.0).is_err());
        assert!(PolicyParams::new(f64::NAN, 1.0).is_err());
        assert!(PolicyParams::new(1.0, 0.0).is_err());
        assert!(PolicyParams::with_tolerance(2.0, 1.0, -1.0).is_err());
        assert!(PolicyParams::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn tandem_weights() {
        let net = t2(0.5);
        let q = [3.0, 1.0];
        assert_eq!(schedule_weight(Schedule::from_queues([0]), &q, 1.0, &net), 2.0);
        assert_eq!(schedule_weight(Schedule::from_queues([1]), &q, 1.0, &net), 1.0);
        assert_eq!(schedule_weight(Schedule::from_queues([0]), &[0.0, 0.0], 1.0, &net), 0.0);
        assert_eq!(schedule_weight(Schedule::from_queues([1]), &[0.0, 0.0], 2.5, &net), 0.0);
    }

    #[test]
    fn tandem_selection() {
        let net = t2(0.5);
        let p = params(1.0);
        assert_eq!(select_schedule(&[3.0, 1.0], &p, &net), Schedule::from_queues([0]));
        assert_eq!(select_schedule(&[1.0, 3.0], &p, &net), Schedule::from_queues([1]));
        assert_eq!(select_schedule(&[0.0, 0.0], &p, &net), Schedule::EMPTY);
    }

    #[test]
    fn selection_never_serves_empty_queue() {
        // q1 empty, q2 positive: serving e1 has weight -q2^α < 0.
        let net = t2(0.5);
        let s = select_schedule(&[0.0, 2.0], &params(0.5), &net);
        assert_eq!(s, Schedule::from_queues([1]));
    }

    #[test]
    fn tie_prefers_lexicographic_smallest() {
        // Weights {e1}: 2-1 = 1, {e2}: 1 -> tie; [0,1] precedes [1,0].
        let net = t2(0.5);
        let s = select_schedule(&[2.0, 1.0], &params(1.0), &net);
        assert_eq!(s, Schedule::from_queues([1]));
    }

    #[test]
    fn argmax_set_contains_both_tied_schedules() {
        let net = t2(0.5);
        let set = argmax_set(&[2.0, 1.0], 1.0, 1e-9, 1e-9, &net);
        assert_eq!(set.len(), 2);
        let set = argmax_set(&[0.0, 0.0], 1.0, 1e-9, 1e-9, &net);
        assert_eq!(set, vec![0]);
    }
}
