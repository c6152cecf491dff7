//! Static network structure: queues, routing, ingress, schedules.
//!
//! A [`Network`] is immutable once built. Queues are kept in canonical
//! lexicographic order of `(link, dest)`, flows in order of
//! `(source_link, dest)` (stable with respect to the input), and schedules in
//! lexicographic order of their indicator vectors. All downstream tie-breaking
//! relies on these orders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{monotone_closure, Schedule, ScheduleSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("routing is cyclic: the routing matrix is not nilpotent")]
    CyclicRouting,
    #[error("queue {0} is not served by any schedule")]
    UnservedQueue(String),
    #[error("load assumption violated: {0}")]
    LoadAssumptionViolated(String),
    #[error("malformed config: {0}")]
    MalformedConfig(String),
    #[error("schedule set exceeds the enumeration cap of {cap} (at least {lower_bound} candidate subsets)")]
    TooManySchedules { cap: usize, lower_bound: usize },
}

/// A per-link, per-destination buffer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Queue {
    pub link: String,
    pub dest: String,
}

impl Queue {
    pub fn new(link: impl Into<String>, dest: impl Into<String>) -> Self {
        Queue { link: link.into(), dest: dest.into() }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.link, self.dest)
    }
}

/// A flow type: Poisson flow arrivals at rate `nu`, each flow leaving after a
/// geometric number of packets with success probability `mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub source_link: String,
    pub dest: String,
    pub nu: f64,
    pub mu: f64,
}

impl FlowSpec {
    pub fn new(source_link: impl Into<String>, dest: impl Into<String>, nu: f64, mu: f64) -> Self {
        FlowSpec { source_link: source_link.into(), dest: dest.into(), nu, mu }
    }

    /// Offered load in packets per unit time.
    pub fn rho(&self) -> f64 {
        self.nu / self.mu
    }
}

/// JSON topology description. Queue references in `routes` and
/// `schedule_generators` are indices into `queues` as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub queues: Vec<Queue>,
    #[serde(default)]
    pub routes: Vec<[usize; 2]>,
    pub flows: Vec<FlowSpec>,
    pub schedule_generators: Vec<Vec<usize>>,
    #[serde(rename = "C")]
    pub c_max: f64,
}

impl TopologyConfig {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        serde_json::from_str(text).map_err(|e| NetError::MalformedConfig(e.to_string()))
    }

    /// Multiplies every flow arrival rate (and hence every offered load) by `k`.
    pub fn scale_load(&mut self, k: f64) {
        for f in &mut self.flows {
            f.nu *= k;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    queues: Vec<Queue>,
    flows: Vec<FlowSpec>,
    next_hop: Vec<Option<usize>>,
    ingress: Vec<usize>,
    xi: Vec<Vec<i64>>,
    schedules: ScheduleSet,
    c_max: f64,
    /// Queues ordered so that every queue appears after all its upstream queues.
    topo_order: Vec<usize>,
}

/// Parses and validates a topology description.
pub fn build_network(config: &TopologyConfig) -> Result<Network, NetError> {
    let routes: Vec<(usize, usize)> = config.routes.iter().map(|r| (r[0], r[1])).collect();
    Network::new(config.queues.clone(), &routes, config.flows.clone(), &config.schedule_generators, config.c_max)
}

impl Network {
    /// Builds a network from queues, `(from, to)` next-hop edges, flows and
    /// schedule generators (lists of queue indices). Indices refer to the
    /// order of `queues` as given; the result is in canonical order.
    pub fn new(
        queues: Vec<Queue>,
        routes: &[(usize, usize)],
        flows: Vec<FlowSpec>,
        generators: &[Vec<usize>],
        c_max: f64,
    ) -> Result<Network, NetError> {
        let m = queues.len();
        if m == 0 {
            return Err(NetError::MalformedConfig("no queues".into()));
        }
        if m > crate::schedule::MAX_QUEUES {
            return Err(NetError::MalformedConfig(format!("{m} queues exceed the supported maximum")));
        }
        if !(c_max.is_finite() && c_max > 0.0) {
            return Err(NetError::MalformedConfig(format!("C must be positive and finite, got {c_max}")));
        }

        // Canonical queue order; `perm[old] = new`.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| queues[a].cmp(&queues[b]));
        let mut perm = vec![0; m];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        let sorted: Vec<Queue> = order.iter().map(|&i| queues[i].clone()).collect();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(NetError::MalformedConfig(format!("duplicate queue {}", w[0].label())));
        }

        let mut next_hop = vec![None; m];
        for &(from, to) in routes {
            if from >= m || to >= m {
                return Err(NetError::MalformedConfig(format!("route [{from}, {to}] references a missing queue")));
            }
            let (a, b) = (perm[from], perm[to]);
            if next_hop[a].is_some() {
                return Err(NetError::MalformedConfig(format!("queue {} has more than one next hop", sorted[a].label())));
            }
            if sorted[a].dest != sorted[b].dest {
                return Err(NetError::MalformedConfig(format!(
                    "route {} -> {} changes destination",
                    sorted[a].label(),
                    sorted[b].label()
                )));
            }
            next_hop[a] = Some(b);
        }

        let routing = routing_matrix_from(&next_hop);
        let xi = compute_xi(&routing)?;

        let mut flows = flows;
        flows.sort_by(|a, b| (&a.source_link, &a.dest).cmp(&(&b.source_link, &b.dest)));
        let mut ingress = Vec::with_capacity(flows.len());
        for f in &flows {
            if !(f.mu > 0.0 && f.mu < 1.0) {
                return Err(NetError::MalformedConfig(format!("mu must lie in (0,1), got {}", f.mu)));
            }
            if !f.nu.is_finite() || !f.mu.is_finite() {
                return Err(NetError::MalformedConfig("non-finite flow parameter".into()));
            }
            let target = Queue::new(f.source_link.clone(), f.dest.clone());
            let e = sorted
                .binary_search(&target)
                .map_err(|_| NetError::MalformedConfig(format!("flow ingress queue {} does not exist", target.label())))?;
            ingress.push(e);
        }

        let mut gens = Vec::with_capacity(generators.len());
        for g in generators {
            if let Some(&bad) = g.iter().find(|&&e| e >= m) {
                return Err(NetError::MalformedConfig(format!("schedule generator references queue {bad}")));
            }
            gens.push(Schedule::from_queues(g.iter().map(|&e| perm[e])));
        }
        let schedules = monotone_closure(m, &gens)?;
        let covered = schedules.coverage();
        if let Some(e) = (0..m).find(|&e| !covered.serves(e)) {
            return Err(NetError::UnservedQueue(sorted[e].label()));
        }

        let topo_order = topological_order(&next_hop);
        let net = Network { queues: sorted, flows, next_hop, ingress, xi, schedules, c_max, topo_order };
        net.check_load()?;
        Ok(net)
    }

    fn check_load(&self) -> Result<(), NetError> {
        if self.flows.is_empty() {
            return Err(NetError::LoadAssumptionViolated("no flow types".into()));
        }
        for (f, spec) in self.flows.iter().enumerate() {
            let rho = spec.rho();
            if !(rho > 0.0) {
                return Err(NetError::LoadAssumptionViolated(format!("rho[{f}] = {rho} is not positive")));
            }
            if rho >= self.c_max {
                return Err(NetError::LoadAssumptionViolated(format!("rho[{f}] = {rho} is not below C = {}", self.c_max)));
            }
        }
        let lambda = self.implied_load();
        if let Some(e) = lambda.iter().position(|&l| !(l > 0.0)) {
            return Err(NetError::LoadAssumptionViolated(format!("queue {} carries no load", self.queues[e].label())));
        }
        Ok(())
    }

    /// Same topology with every arrival rate multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Network, NetError> {
        let mut net = self.clone();
        for f in &mut net.flows {
            f.nu *= k;
        }
        net.check_load()?;
        Ok(net)
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn num_flows(&self) -> usize {
        self.flows.len()
    }

    pub fn queues(&self) -> &[Queue] {
        &self.queues
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    pub fn next_hop(&self, e: usize) -> Option<usize> {
        self.next_hop[e]
    }

    /// Ingress queue of flow type `f`.
    pub fn ingress(&self, f: usize) -> usize {
        self.ingress[f]
    }

    pub fn schedules(&self) -> &ScheduleSet {
        &self.schedules
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// `xi()[a][b] == 1` iff a packet arriving at queue `b` later passes through `a`.
    pub fn xi(&self) -> &[Vec<i64>] {
        &self.xi
    }

    /// Upstream-first ordering of the queues.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn nu(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.nu).collect()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.mu).collect()
    }

    pub fn rho(&self) -> Vec<f64> {
        self.flows.iter().map(FlowSpec::rho).collect()
    }

    pub fn routing_matrix(&self) -> Vec<Vec<u8>> {
        routing_matrix_from(&self.next_hop)
    }

    /// `Γ`, queues × flows.
    pub fn ingress_matrix(&self) -> Vec<Vec<u8>> {
        let mut g = vec![vec![0u8; self.num_flows()]; self.num_queues()];
        for (f, &e) in self.ingress.iter().enumerate() {
            g[e][f] = 1;
        }
        g
    }

    /// `Γ v` for a vector over flows.
    pub fn inject(&self, per_flow: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_queues()];
        for (f, &e) in self.ingress.iter().enumerate() {
            out[e] += per_flow[f];
        }
        out
    }

    /// `Ξ v` for a vector over queues.
    pub fn xi_apply(&self, v: &[f64]) -> Vec<f64> {
        self.xi
            .iter()
            .map(|row| row.iter().zip(v).map(|(&x, &y)| x as f64 * y).sum())
            .collect()
    }

    /// `Ξᵀ v` for a vector over queues.
    pub fn xi_transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.num_queues();
        (0..m).map(|b| (0..m).map(|a| self.xi[a][b] as f64 * v[a]).sum()).collect()
    }

    /// `(I − Rᵀ) v`: each queue loses its own amount and gains its upstream
    /// neighbours' amounts.
    pub fn net_outflow(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for (e, hop) in self.next_hop.iter().enumerate() {
            if let Some(to) = *hop {
                out[to] -= v[e];
            }
        }
        out
    }

    /// Implied per-queue load `ΞΓρ`.
    pub fn implied_load(&self) -> Vec<f64> {
        self.xi_apply(&self.inject(&self.rho()))
    }
}

/// Implied per-queue load `λ = ΞΓρ`.
pub fn implied_load(net: &Network) -> Vec<f64> {
    net.implied_load()
}

fn routing_matrix_from(next_hop: &[Option<usize>]) -> Vec<Vec<u8>> {
    let m = next_hop.len();
    let mut r = vec![vec![0u8; m]; m];
    for (e, hop) in next_hop.iter().enumerate() {
        if let Some(to) = *hop {
            r[e][to] = 1;
        }
    }
    r
}

fn topological_order(next_hop: &[Option<usize>]) -> Vec<usize> {
    let m = next_hop.len();
    let mut indeg = vec![0usize; m];
    for to in next_hop.iter().flatten() {
        indeg[*to] += 1;
    }
    let mut stack: Vec<usize> = (0..m).rev().filter(|&e| indeg[e] == 0).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(e) = stack.pop() {
        order.push(e);
        if let Some(to) = next_hop[e] {
            indeg[to] -= 1;
            if indeg[to] == 0 {
                stack.push(to);
            }
        }
    }
    order
}

/// `Ξ = Σ_{k<|E|} (Rᵀ)^k` in exact integer arithmetic.
///
/// Fails with [`NetError::CyclicRouting`] if `(Rᵀ)^{|E|} ≠ 0`.
pub fn compute_xi(routing: &[Vec<u8>]) -> Result<Vec<Vec<i64>>, NetError> {
    let m = routing.len();
    if routing.iter().any(|row| row.len() != m) {
        return Err(NetError::MalformedConfig("routing matrix is not square".into()));
    }
    let rt: Vec<Vec<i64>> = (0..m).map(|a| (0..m).map(|b| routing[b][a] as i64).collect()).collect();
    let mut power: Vec<Vec<i64>> = (0..m).map(|a| (0..m).map(|b| (a == b) as i64).collect()).collect();
    let mut xi = power.clone();
    for k in 1..=m {
        power = mat_mul(&power, &rt);
        let zero = power.iter().all(|row| row.iter().all(|&x| x == 0));
        if zero {
            return Ok(xi);
        }
        if k == m {
            break;
        }
        for (xr, pr) in xi.iter_mut().zip(&power) {
            for (x, p) in xr.iter_mut().zip(pr) {
                *x += p;
            }
        }
    }
    Err(NetError::CyclicRouting)
}

pub(crate) fn mat_mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = a.len();
    let k = b.len();
    let p = b.first().map_or(0, Vec::len);
    let mut out = vec![vec![0i64; p]; n];
    for i in 0..n {
        for j in 0..k {
            let x = a[i][j];
            if x != 0 {
                for c in 0..p {
                    // Saturating so that a pathological cyclic input still terminates cleanly.
                    out[i][c] = out[i][c].saturating_add(x.saturating_mul(b[j][c]));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn t2(nu: f64) -> Network {
        Network::new(
            vec![Queue::new("l1", "v"), Queue::new("l2", "v")],
            &[(0, 1)],
            vec![FlowSpec::new("l1", "v", nu, 0.5)],
            &[vec![0], vec![1]],
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn t2_has_three_schedules() {
        let net = t2(0.25);
        assert_eq!(net.num_queues(), 2);
        assert_eq!(net.schedules().len(), 3);
        assert_eq!(net.xi(), &[vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn cyclic_routing_rejected() {
        let err = Network::new(
            vec![Queue::new("l1", "v"), Queue::new("l2", "v")],
            &[(0, 1), (1, 0)],
            vec![FlowSpec::new("l1", "v", 0.1, 0.5)],
            &[vec![0], vec![1]],
            10.0,
        )
        .unwrap_err();
        assert_eq!(err, NetError::CyclicRouting);
    }

    #[test]
    fn sq1_is_valid() {
        let net = Network::new(
            vec![Queue::new("l1", "v")],
            &[],
            vec![FlowSpec::new("l1", "v", 0.35, 0.5)],
            &[vec![0]],
            10.0,
        )
        .unwrap();
        assert!((net.rho()[0] - 0.7).abs() < 1e-15);
        assert_eq!(net.implied_load(), vec![0.7]);
    }

    #[test]
    fn xi_of_zero_routing_is_identity() {
        let r = vec![vec![0u8; 3]; 3];
        let xi = compute_xi(&r).unwrap();
        assert_eq!(xi, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn xi_of_chain_is_lower_triangular_ones() {
        let r = vec![vec![0, 1, 0], vec![0, 0, 1], vec![0, 0, 0]];
        let xi = compute_xi(&r).unwrap();
        assert_eq!(xi, vec![vec![1, 0, 0], vec![1, 1, 0], vec![1, 1, 1]]);
    }

    #[test]
    fn xi_self_loop_is_cyclic() {
        assert_eq!(compute_xi(&[vec![1u8]]), Err(NetError::CyclicRouting));
    }

    #[test]
    fn implied_load_on_tandem() {
        let net = t2(0.2);
        let l = net.implied_load();
        assert!((l[0] - 0.4).abs() < 1e-15 && (l[1] - 0.4).abs() < 1e-15);
        let net = t2(0.25);
        assert_eq!(net.implied_load(), vec![0.5, 0.5]);
    }

    #[test]
    fn unserved_queue_rejected() {
        let err = Network::new(
            vec![Queue::new("l1", "v"), Queue::new("l2", "v")],
            &[(0, 1)],
            vec![FlowSpec::new("l1", "v", 0.1, 0.5)],
            &[vec![0]],
            10.0,
        )
        .unwrap_err();
        assert!(matches!(err, NetError::UnservedQueue(_)));
    }

    #[test]
    fn load_assumptions_enforced() {
        let mk = |nu: f64, c: f64| {
            Network::new(vec![Queue::new("l1", "v")], &[], vec![FlowSpec::new("l1", "v", nu, 0.5)], &[vec![0]], c)
        };
        assert!(matches!(mk(0.0, 10.0), Err(NetError::LoadAssumptionViolated(_))));
        assert!(matches!(mk(-1.0, 10.0), Err(NetError::LoadAssumptionViolated(_))));
        assert!(matches!(mk(5.0, 10.0), Err(NetError::LoadAssumptionViolated(_))));
        // A queue nobody feeds.
        let err = Network::new(
            vec![Queue::new("l1", "v"), Queue::new("l2", "v")],
            &[],
            vec![FlowSpec::new("l1", "v", 0.1, 0.5)],
            &[vec![0], vec![1]],
            10.0,
        )
        .unwrap_err();
        assert!(matches!(err, NetError::LoadAssumptionViolated(_)));
    }

    #[test]
    fn canonical_order_is_independent_of_input_order() {
        let a = t2(0.25);
        let b = Network::new(
            vec![Queue::new("l2", "v"), Queue::new("l1", "v")],
            &[(1, 0)],
            vec![FlowSpec::new("l1", "v", 0.25, 0.5)],
            &[vec![1], vec![0]],
            10.0,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"queues":[{"link":"l1","dest":"v"}],"flows":[],"schedule_generators":[[0]],"C":10,"extra":1}"#;
        assert!(matches!(TopologyConfig::from_json(text), Err(NetError::MalformedConfig(_))));
    }

    #[test]
    fn config_round_trip_builds() {
        let text = r#"{
            "queues": [{"link": "l1", "dest": "v"}, {"link": "l2", "dest": "v"}],
            "routes": [[0, 1]],
            "flows": [{"source_link": "l1", "dest": "v", "nu": 0.25, "mu": 0.5}],
            "schedule_generators": [[0], [1]],
            "C": 10
        }"#;
        let net = build_network(&TopologyConfig::from_json(text).unwrap()).unwrap();
        assert_eq!(net, t2(0.25));
    }

    #[test]
    fn xi_inverts_identity_minus_routing_transpose() {
        let net = t2(0.25);
        let m = net.num_queues();
        let r = net.routing_matrix();
        let i_minus_rt: Vec<Vec<i64>> =
            (0..m).map(|a| (0..m).map(|b| (a == b) as i64 - r[b][a] as i64).collect()).collect();
        let prod = mat_mul(net.xi(), &i_minus_rt);
        for a in 0..m {
            for b in 0..m {
                assert_eq!(prod[a][b], (a == b) as i64);
            }
        }
    }
}
