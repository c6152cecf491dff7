//! Cost functionals for the critically loaded system: Lyapunov function,
//! linear cost, workloads, effective cost and the balance factor.

use serde::{Deserialize, Serialize};

use crate::capacity::{workload_coefficients, VirtualResource};
use crate::lp::{solve_lp, LinearProgram, LpError, Sense};
use crate::network::Network;
use crate::policy::powa;

/// Per-coordinate weights of `L_α` over the stacked state `(n, q)`.
pub(crate) fn lyapunov_weights(net: &Network, alpha: f64) -> Vec<f64> {
    let mut w: Vec<f64> = net.flows().iter().map(|f| 1.0 / (f.mu * f.rho().powf(alpha))).collect();
    w.extend(std::iter::repeat(1.0).take(net.num_queues()));
    w
}

/// `L_α(n, q) = Σ_f n_f^{1+α}/(μ_f ρ_f^α) + Σ_e q_e^{1+α}` and the normed
/// version `ℓ = L_α^{1/(1+α)}`.
pub fn lyapunov(n: &[f64], q: &[f64], net: &Network, alpha: f64) -> (f64, f64) {
    let w = lyapunov_weights(net, alpha);
    let l: f64 = w.iter().zip(n.iter().chain(q)).map(|(c, &x)| c * x * powa(x, alpha)).sum();
    (l, l.powf(1.0 / (1.0 + alpha)))
}

/// `c(n, q) = Σ_f n_f/μ_f + Σ_e q_e`.
pub fn cost(n: &[f64], q: &[f64], net: &Network) -> f64 {
    net.flows().iter().zip(n).map(|(f, &x)| x / f.mu).sum::<f64>() + q.iter().sum::<f64>()
}

/// `w_ζ(n, q) = ζᵀΞ[q + Γ diag(μ)⁻¹ n]`.
pub fn workload(zeta: &[f64], n: &[f64], q: &[f64], net: &Network) -> f64 {
    let v = net.xi_transpose_apply(zeta);
    workload_coefficients(&v, net).iter().zip(n.iter().chain(q)).map(|(a, x)| a * x).sum()
}

fn cost_coefficients(net: &Network) -> Vec<f64> {
    let mut c: Vec<f64> = net.flows().iter().map(|f| 1.0 / f.mu).collect();
    c.extend(std::iter::repeat(1.0).take(net.num_queues()));
    c
}

/// Lowest cost of any state whose workloads dominate those of `(n, q)` for
/// every critical resource.
pub fn effective_cost(n: &[f64], q: &[f64], net: &Network, crstar: &[VirtualResource]) -> Result<f64, LpError> {
    let mut lp = LinearProgram::new(cost_coefficients(net));
    for r in crstar {
        lp.add(workload_coefficients(&r.v, net), Sense::Ge, r.workload(n, q, net));
    }
    Ok(solve_lp(&lp)?.value)
}

/// `γ(ρ) = min c(n′, q′)` over `(n, q, n′, q′) ≥ 0` with `c(n, q) = 1` and
/// `w_ζ(n′, q′) ≥ w_ζ(n, q)` for all critical ζ.
pub fn balance_factor(net: &Network, crstar: &[VirtualResource]) -> Result<f64, LpError> {
    let c = cost_coefficients(net);
    let d = c.len();
    let mut obj = vec![0.0; d];
    obj.extend_from_slice(&c);
    let mut lp = LinearProgram::new(obj);
    let mut unit = c.clone();
    unit.extend(std::iter::repeat(0.0).take(d));
    lp.add(unit, Sense::Eq, 1.0);
    for r in crstar {
        let a = workload_coefficients(&r.v, net);
        let mut row: Vec<f64> = a.iter().map(|x| -x).collect();
        row.extend_from_slice(&a);
        lp.add(row, Sense::Ge, 0.0);
    }
    Ok(solve_lp(&lp)?.value)
}

/// Certified bound `β̂(α)` with `sup_t c(t) ≤ (1 + β̂(α)) c(0)` along MWUM-α
/// fluid trajectories of a critically loaded network.
///
/// Writing `u_f = n_f/μ_f`, `L_α` is the `(1+α)`-th power of a weighted
/// `ℓ_{1+α}` norm of `(u, q)` with flow weights `ω_f = (μ_f/ρ_f)^{α/(1+α)}`
/// and unit queue weights. Since `ℓ` does not increase, chaining the
/// `ℓ_1`/`ℓ_{1+α}` comparison (constant `d^{α/(1+α)}`, `d = |E|+|F|`) with
/// the weight spread gives the bound.
pub fn beta_hat(alpha: f64, net: &Network) -> f64 {
    let a = alpha / (1.0 + alpha);
    let d = (net.num_queues() + net.num_flows()) as f64;
    let omega: Vec<f64> = net.flows().iter().map(|f| (f.mu / f.rho()).powf(a)).collect();
    let hi = omega.iter().fold(1.0f64, |m, &w| m.max(w));
    let lo = omega.iter().fold(1.0f64, |m, &w| m.min(w));
    d.powf(a) * hi / lo - 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(rename = "L_alpha")]
    pub l_alpha: f64,
    pub ell: f64,
    pub c: f64,
    pub c_star: f64,
    /// `(ζ, w_ζ)` pairs in the order of the critical resources.
    pub workloads: Vec<(Vec<f64>, f64)>,
}

impl CostReport {
    pub fn new(n: &[f64], q: &[f64], net: &Network, alpha: f64, crstar: &[VirtualResource]) -> Result<Self, LpError> {
        let (l_alpha, ell) = lyapunov(n, q, net, alpha);
        Ok(CostReport {
            l_alpha,
            ell,
            c: cost(n, q, net),
            c_star: effective_cost(n, q, net, crstar)?,
            workloads: crstar.iter().map(|r| (r.zeta.clone(), r.workload(n, q, net))).collect(),
        })
    }
}
