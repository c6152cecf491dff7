//! Fluid model of the MWUM-α network, integrated by explicit Euler.
//!
//! The scheduling component is a differential inclusion: `ṡ` may be any
//! distribution on the max-weight set. We regularize it by spreading mass
//! uniformly over the relative ε-argmax, restricted to queues that are
//! non-empty or about to receive fluid, and dropping tied schedules that are
//! strictly contained in another tied schedule. Service that an empty queue
//! cannot supply is cut back queue by queue in upstream-first order; the cut
//! is logged separately from the policy's own idling so the cumulative
//! identities stay exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;
use crate::policy::{powa, queue_weights, rate_allocation, PolicyParams};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("step too large at t = {t}: projection clipped {clipped:e} from {coordinate} (budget {budget:e})")]
    StepTooLarge { t: f64, coordinate: String, clipped: f64, budget: f64 },
    #[error("step size {h} is outside (0, {h_max}]")]
    InvalidStep { h: f64, h_max: f64 },
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("initial state has wrong shape: {0}")]
    Shape(String),
}

/// How `ṡ` is distributed over the ε-argmax set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    Uniform,
    /// All mass on the first schedule in canonical order.
    Lexicographic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluidPolicy {
    Mwum,
    /// `x = ρ`, `ṡ` uniform over the maximal schedules, idling wherever a
    /// served queue runs dry.
    RoundRobin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub policy: FluidPolicy,
    pub alpha: f64,
    pub c_max: f64,
    pub tol_tie: f64,
    pub q_floor: f64,
    pub clip_budget: f64,
    pub selection: Selection,
}

impl FluidParams {
    pub fn mwum(p: &PolicyParams) -> Self {
        FluidParams {
            policy: FluidPolicy::Mwum,
            alpha: p.alpha,
            c_max: p.c_max,
            tol_tie: p.tol_tie,
            q_floor: tol::Q_FLOOR,
            clip_budget: tol::CLIP_BUDGET,
            selection: Selection::Uniform,
        }
    }

    pub fn round_robin(p: &PolicyParams) -> Self {
        FluidParams { policy: FluidPolicy::RoundRobin, ..Self::mwum(p) }
    }

    fn policy_params(&self) -> PolicyParams {
        PolicyParams { alpha: self.alpha, c_max: self.c_max, tie_break: Default::default(), tol_tie: self.tol_tie }
    }
}

/// Fluid descriptor with its cumulative processes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub t: f64,
    pub n: Vec<f64>,
    pub q: Vec<f64>,
    /// Policy idling.
    pub z: Vec<f64>,
    /// Service removed by the nonnegativity projection.
    pub clip_z: Vec<f64>,
    /// Cumulative time per schedule (canonical order).
    pub s: Vec<f64>,
    pub xbar: Vec<f64>,
    /// Cumulative flow arrivals.
    pub arrivals: Vec<f64>,
    /// Cumulative flow departures.
    pub d: Vec<f64>,
    /// Cumulative packets generated.
    pub a: Vec<f64>,
}

impl FluidState {
    pub fn initial(n: Vec<f64>, q: Vec<f64>, net: &Network) -> Result<Self, FluidError> {
        if n.len() != net.num_flows() || q.len() != net.num_queues() {
            return Err(FluidError::Shape(format!(
                "expected {} flows and {} queues, got {} and {}",
                net.num_flows(),
                net.num_queues(),
                n.len(),
                q.len()
            )));
        }
        if n.iter().chain(&q).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(FluidError::Shape("state must be finite and nonnegative".into()));
        }
        let (nf, m, ns) = (net.num_flows(), net.num_queues(), net.schedules().len());
        Ok(FluidState {
            t: 0.0,
            n,
            q,
            z: vec![0.0; m],
            clip_z: vec![0.0; m],
            s: vec![0.0; ns],
            xbar: vec![0.0; nf],
            arrivals: vec![0.0; nf],
            d: vec![0.0; nf],
            a: vec![0.0; nf],
        })
    }
}

/// Largest admissible Euler step, `0.01 / (1 + C|F| + |S|)`.
pub fn h_max(net: &Network) -> f64 {
    0.01 / (1.0 + net.c_max() * net.num_flows() as f64 + net.schedules().len() as f64)
}

/// Right-hand side at a state: aggregate rates `x` and schedule mix `ṡ`.
pub fn controls(n: &[f64], q: &[f64], net: &Network, params: &FluidParams) -> (Vec<f64>, Vec<f64>) {
    let rho = net.rho();
    let x: Vec<f64> = match params.policy {
        FluidPolicy::RoundRobin => rho.clone(),
        FluidPolicy::Mwum => {
            let pp = params.policy_params();
            (0..net.num_flows())
                .map(|f| {
                    let qi = q[net.ingress(f)];
                    if n[f] > 0.0 {
                        rate_allocation(n[f], qi, &pp)
                    } else if qi <= params.q_floor {
                        rho[f]
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let set = net.schedules();
    let mut sdot = vec![0.0; set.len()];
    let chosen: Vec<usize> = match params.policy {
        FluidPolicy::RoundRobin => set.maximal().to_vec(),
        FluidPolicy::Mwum => mwum_support(q, &x, net, params),
    };
    match params.selection {
        Selection::Uniform => {
            let w = 1.0 / chosen.len() as f64;
            for &k in &chosen {
                sdot[k] = w;
            }
        }
        Selection::Lexicographic => sdot[chosen[0]] = 1.0,
    }
    (x, sdot)
}

fn mwum_support(q: &[f64], x: &[f64], net: &Network, params: &FluidParams) -> Vec<usize> {
    let inflow = net.inject(x);
    let mut active = 0u64;
    let mut fed = vec![false; net.num_queues()];
    for &e in net.topo_order() {
        if q[e] > params.q_floor || inflow[e] > 0.0 || fed[e] {
            active |= 1 << e;
            if let Some(to) = net.next_hop(e) {
                fed[to] = true;
            }
        }
    }
    let w = queue_weights(q, params.alpha, net);
    let set = net.schedules();
    let cand: Vec<(usize, u64, f64)> = set
        .elements()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 & !active == 0)
        .map(|(i, s)| (i, s.0, s.queues().map(|e| w[e]).sum()))
        .collect();
    let best = cand.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let floor = best - params.tol_tie * (1.0 + best.abs());
    let tied: Vec<(usize, u64)> = cand.iter().filter(|c| c.2 >= floor).map(|c| (c.0, c.1)).collect();
    tied.iter()
        .filter(|(_, m)| !tied.iter().any(|(_, o)| o != m && m & o == *m))
        .map(|c| c.0)
        .collect()
}

/// Analytic `d/dt L_α` at a state, using the controls of [`fluid_step`].
pub fn drift_l(n: &[f64], q: &[f64], net: &Network, params: &FluidParams) -> f64 {
    let (x, sdot) = controls(n, q, net, params);
    let alpha = params.alpha;
    let mut dn = 0.0;
    for (f, spec) in net.flows().iter().enumerate() {
        let ndot = spec.nu - spec.mu * x[f];
        dn += powa(n[f], alpha) * ndot / (spec.mu * spec.rho().powf(alpha));
    }
    let qdot = queue_derivative(&x, &sdot, net);
    let dq: f64 = q.iter().zip(&qdot).map(|(&qe, &d)| powa(qe, alpha) * d).sum();
    (1.0 + alpha) * (dn + dq)
}

/// `Γx − (I−Rᵀ)Πṡ`.
pub fn queue_derivative(x: &[f64], sdot: &[f64], net: &Network) -> Vec<f64> {
    let service = service_fractions(sdot, net);
    let inflow = net.inject(x);
    let out = net.net_outflow(&service);
    inflow.iter().zip(&out).map(|(a, b)| a - b).collect()
}

fn service_fractions(sdot: &[f64], net: &Network) -> Vec<f64> {
    let mut sigma = vec![0.0; net.num_queues()];
    for (k, &w) in sdot.iter().enumerate() {
        if w != 0.0 {
            for e in net.schedules().get(k).queues() {
                sigma[e] += w;
            }
        }
    }
    sigma
}

/// Bookkeeping of one Euler step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// Largest amount removed by projection from any single coordinate.
    pub max_clip: f64,
    pub clipped: bool,
}

/// One explicit Euler step of size `h`.
pub fn fluid_step(state: &FluidState, h: f64, net: &Network, params: &FluidParams) -> Result<FluidState, FluidError> {
    fluid_step_logged(state, h, net, params).map(|(s, _)| s)
}

pub fn fluid_step_logged(
    state: &FluidState,
    h: f64,
    net: &Network,
    params: &FluidParams,
) -> Result<(FluidState, StepLog), FluidError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(FluidError::InvalidStep { h, h_max: h_max(net) });
    }
    let (mut x, sdot) = controls(&state.n, &state.q, net, params);
    let mut next = state.clone();
    let mut log = StepLog::default();
    let budget = params.clip_budget;
    let too_large = |coordinate: String, clipped: f64| FluidError::StepTooLarge { t: state.t, coordinate, clipped, budget };

    for (f, spec) in net.flows().iter().enumerate() {
        let n_new = state.n[f] + h * (spec.nu - spec.mu * x[f]);
        if n_new < 0.0 {
            let x_eff = (state.n[f] + h * spec.nu) / (h * spec.mu);
            let clipped = -n_new;
            if clipped > budget * (1.0 + state.n[f]) {
                return Err(too_large(format!("n[{f}]"), clipped));
            }
            log.max_clip = log.max_clip.max(clipped);
            log.clipped = true;
            x[f] = x_eff;
            next.n[f] = 0.0;
        } else {
            next.n[f] = n_new;
        }
        next.xbar[f] += h * x[f];
        next.a[f] = next.xbar[f];
        next.d[f] += h * spec.mu * x[f];
        next.arrivals[f] += h * spec.nu;
    }

    let sigma = service_fractions(&sdot, net);
    let inflow = net.inject(&x);
    let mut delivered = vec![0.0; net.num_queues()];
    for &e in net.topo_order() {
        let avail = state.q[e] + h * inflow[e] + delivered[e];
        let want = h * sigma[e];
        let served = want.min(avail.max(0.0));
        let idle = want - served;
        if idle > 0.0 {
            match params.policy {
                FluidPolicy::RoundRobin => next.z[e] += idle,
                FluidPolicy::Mwum => {
                    if idle > budget * (1.0 + state.q[e]) {
                        return Err(too_large(format!("q[{e}]"), idle));
                    }
                    log.max_clip = log.max_clip.max(idle);
                    log.clipped = true;
                    next.clip_z[e] += idle;
                }
            }
        }
        next.q[e] = (avail - served).max(0.0);
        if let Some(to) = net.next_hop(e) {
            delivered[to] += served;
        }
    }
    for (s, w) in next.s.iter_mut().zip(&sdot) {
        *s += h * w;
    }
    next.t = state.t + h;
    Ok((next, log))
}

/// Maximum absolute residuals of the cumulative fluid identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `n − n(0) − 𝖺 + d`
    pub flows: f64,
    /// `𝖺 − νt`
    pub arrivals: f64,
    /// `d − diag(μ) x̄`
    pub departures: f64,
    /// `a − x̄`
    pub packets: f64,
    /// `q − q(0) − Γa + (I−Rᵀ)(Πs − z − clip)`
    pub queues: f64,
    /// `1ᵀs − t`
    pub time: f64,
    /// Largest decrease of any idling coordinate over a step.
    pub idling: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        [self.flows, self.arrivals, self.departures, self.packets, self.queues, self.time, self.idling]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Residuals of `state` relative to `init`.
    pub fn of(init: &FluidState, state: &FluidState, net: &Network) -> Self {
        let mut r = ResidualReport::default();
        for (f, spec) in net.flows().iter().enumerate() {
            r.flows = r.flows.max((state.n[f] - init.n[f] - (state.arrivals[f] - init.arrivals[f]) + (state.d[f] - init.d[f])).abs());
            r.arrivals = r.arrivals.max((state.arrivals[f] - init.arrivals[f] - spec.nu * (state.t - init.t)).abs());
            r.departures = r.departures.max((state.d[f] - init.d[f] - spec.mu * (state.xbar[f] - init.xbar[f])).abs());
            r.packets = r.packets.max((state.a[f] - state.xbar[f] - (init.a[f] - init.xbar[f])).abs());
        }
        let m = net.num_queues();
        let mut service = vec![0.0; m];
        for (k, (&s, &s0)) in state.s.iter().zip(&init.s).enumerate() {
            for e in net.schedules().get(k).queues() {
                service[e] += s - s0;
            }
        }
        for e in 0..m {
            service[e] -= state.z[e] - init.z[e] + state.clip_z[e] - init.clip_z[e];
        }
        let moved = net.net_outflow(&service);
        let da: Vec<f64> = state.a.iter().zip(&init.a).map(|(a, b)| a - b).collect();
        let injected = net.inject(&da);
        for e in 0..m {
            r.queues = r.queues.max((state.q[e] - init.q[e] - injected[e] + moved[e]).abs());
        }
        let ds: f64 = state.s.iter().zip(&init.s).map(|(a, b)| a - b).sum();
        r.time = (ds - (state.t - init.t)).abs();
        r
    }

    fn merge(&mut self, o: &ResidualReport) {
        self.flows = self.flows.max(o.flows);
        self.arrivals = self.arrivals.max(o.arrivals);
        self.departures = self.departures.max(o.departures);
        self.packets = self.packets.max(o.packets);
        self.queues = self.queues.max(o.queues);
        self.time = self.time.max(o.time);
        self.idling = self.idling.max(o.idling);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory {
    /// Step size actually used.
    pub h: f64,
    /// Steps between recorded samples.
    pub stride: usize,
    samples: Vec<FluidState>,
    pub residuals: ResidualReport,
    /// Number of steps in which the projection was active.
    pub clip_steps: usize,
    pub max_clip: f64,
}

impl FluidTrajectory {
    /// Recorded states, including the initial and the final one.
    pub fn samples(&self) -> &[FluidState] {
        &self.samples
    }

    pub fn last(&self) -> &FluidState {
        self.samples.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Linear interpolation of `(n, q)` at time `t` between samples.
    pub fn state_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let s = &self.samples;
        let i = s.partition_point(|x| x.t <= t);
        if i == 0 {
            return (s[0].n.clone(), s[0].q.clone());
        }
        if i == s.len() {
            let l = &s[i - 1];
            return (l.n.clone(), l.q.clone());
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p + w * (q - p)).collect();
        (lerp(&a.n, &b.n), lerp(&a.q, &b.q))
    }
}

/// Integrates from `initial` over `[0, horizon]`, recording every state.
pub fn integrate(
    initial: &FluidState,
    horizon: f64,
    h: f64,
    net: &Network,
    params: &FluidParams,
) -> Result<FluidTrajectory, FluidError> {
    integrate_with(initial, horizon, h, 1, net, params)
}

/// As [`integrate`], recording every `stride`-th state plus the final one.
///
/// The number of steps is `⌈horizon/h⌉` and the step is shrunk to divide the
/// horizon exactly.
pub fn integrate_with(
    initial: &FluidState,
    horizon: f64,
    h: f64,
    stride: usize,
    net: &Network,
    params: &FluidParams,
) -> Result<FluidTrajectory, FluidError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(FluidError::InvalidHorizon(horizon));
    }
    let hm = h_max(net);
    if !(h > 0.0 && h <= hm * (1.0 + 1e-12)) {
        return Err(FluidError::InvalidStep { h, h_max: hm });
    }
    let steps = (horizon / h - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let stride = stride.max(1);

    let mut samples = vec![initial.clone()];
    let mut residuals = ResidualReport::default();
    let (mut clip_steps, mut max_clip) = (0, 0.0f64);
    let mut cur = initial.clone();
    for k in 1..=steps {
        let (mut next, log) = fluid_step_logged(&cur, h, net, params)?;
        next.t = initial.t + k as f64 * h;
        if log.clipped {
            clip_steps += 1;
            max_clip = max_clip.max(log.max_clip);
        }
        let mut r = ResidualReport::of(initial, &next, net);
        r.idling = cur.z.iter().zip(&next.z).map(|(a, b)| (a - b).max(0.0)).fold(0.0, f64::max);
        residuals.merge(&r);
        if k % stride == 0 || k == steps {
            samples.push(next.clone());
        }
        cur = next;
    }
    Ok(FluidTrajectory { h, stride, samples, residuals, clip_steps, max_clip })
}
