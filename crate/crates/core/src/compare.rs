//! Distance between a scaled simulation and the fluid model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::{integrate_with, FluidError, FluidParams, FluidState, FluidTrajectory};
use crate::network::Network;
use crate::policy::PolicyParams;
use crate::sim::{scaled_state, simulate, SimConfig, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
}

/// Fluid trajectory from `(n0, q0)` recorded every `stride` steps.
pub fn fluid_reference(
    net: &Network,
    params: &PolicyParams,
    n0: &[f64],
    q0: &[f64],
    horizon: f64,
    h: f64,
    stride: usize,
) -> Result<FluidTrajectory, FluidError> {
    let init = FluidState::initial(n0.to_vec(), q0.to_vec(), net)?;
    integrate_with(&init, horizon, h, stride, net, &FluidParams::mwum(params))
}

/// `sup_t ‖𝒵^{(r)}(t)_{n,q} − (n(t), q(t))‖₁` over the recorded fluid grid,
/// for one seeded run started at `(⌊r n0⌋, ⌊r q0⌋)`.
pub fn sup_distance(
    net: &Network,
    params: &PolicyParams,
    fluid: &FluidTrajectory,
    r: f64,
    seed: u64,
) -> Result<f64, CompareError> {
    let first = &fluid.samples()[0];
    let horizon = fluid.last().t;
    let slots = (r * horizon).ceil() as u64;
    let cfg = SimConfig::new(slots.max(1), seed).with_initial(
        first.n.iter().map(|&x| (r * x).floor() as u64).collect(),
        first.q.iter().map(|&x| (r * x).floor() as u64).collect(),
    );
    let traj = simulate(net, params, &cfg)?;
    let mut sup = 0.0f64;
    for s in fluid.samples() {
        let t = s.t.min(slots as f64 / r);
        let z = scaled_state(&traj, net, r, t)?;
        let d: f64 = z.n.iter().zip(&s.n).chain(z.q.iter().zip(&s.q)).map(|(a, b)| (a - b).abs()).sum();
        sup = sup.max(d);
    }
    Ok(sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub r: f64,
    pub seed: u64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub r: f64,
    pub runs: usize,
    pub mean: f64,
    pub max: f64,
}

/// Per-`r` mean and max, in increasing `r`. Rows are sorted by `(r, seed)`
/// first so the reduction does not depend on the order runs finished in.
pub fn summarize(rows: &[CompareRow]) -> Vec<CompareSummary> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.r.total_cmp(&b.r).then(a.seed.cmp(&b.seed)));
    let mut out: Vec<CompareSummary> = Vec::new();
    for row in rows {
        match out.last_mut() {
            Some(s) if s.r == row.r => {
                s.mean += row.distance;
                s.max = s.max.max(row.distance);
                s.runs += 1;
            }
            _ => out.push(CompareSummary { r: row.r, runs: 1, mean: row.distance, max: row.distance }),
        }
    }
    for s in &mut out {
        s.mean /= s.runs as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::sq1;
    use crate::fluid::h_max;

    #[test]
    fn distance_is_finite_at_unit_scale() {
        let net = sq1(0.5);
        let p = PolicyParams::for_network(&net, 1.0).unwrap();
        let f = fluid_reference(&net, &p, &[1.0], &[1.0], 2.0, h_max(&net), 20).unwrap();
        let d = sup_distance(&net, &p, &f, 1.0, 1).unwrap();
        assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn summary_groups_by_scale() {
        let rows = vec![
            CompareRow { r: 100.0, seed: 2, distance: 0.3 },
            CompareRow { r: 20.0, seed: 1, distance: 1.0 },
            CompareRow { r: 100.0, seed: 1, distance: 0.1 },
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].r, s[0].runs), (20.0, 1));
        assert!((s[1].mean - 0.2).abs() < 1e-15 && s[1].max == 0.3);
    }
}
