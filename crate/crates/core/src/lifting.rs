//! The lifting map `Δ`, invariant-state test and hitting times.
//!
//! `Δ(n, q)` minimizes `L_α` over states whose critical workloads dominate
//! those of `(n, q)`. The objective is separable, so for dual multipliers
//! `θ ≥ 0` the inner minimization has the closed form
//! `y_j = (g_j / ((1+α) c_j))^{1/α}` with `g = Aᵀθ`. The concave dual is then
//! maximized by projected ascent; the search direction is Newton-scaled on
//! the free multipliers, which is why small problems converge in a handful
//! of iterations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{workload_coefficients, VirtualResource};
use crate::fluid::FluidTrajectory;
use crate::linalg;
use crate::network::Network;
use crate::policy::{powa, queue_weights, weight_of};
use crate::tol;
use crate::workload::lyapunov_weights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("dual ascent did not converge after {iters} iterations (projected gradient {gradient:e})")]
    NoConvergence { iters: usize, gradient: f64 },
    #[error("lifted state violates a workload constraint by {0:e}")]
    Infeasible(f64),
    #[error("no critical resources supplied")]
    NoResources,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftOptions {
    pub max_iters: usize,
    pub gradient_tol: f64,
    pub feasibility_tol: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions { max_iters: 100_000, gradient_tol: tol::DUAL_GRADIENT, feasibility_tol: tol::LIFT_FEASIBILITY }
    }
}

/// `Δ(n, q)` with default options.
pub fn lifting_map(
    n: &[f64],
    q: &[f64],
    net: &Network,
    alpha: f64,
    crstar: &[VirtualResource],
) -> Result<(Vec<f64>, Vec<f64>), LiftError> {
    lifting_map_with(n, q, net, alpha, crstar, &LiftOptions::default())
}

struct Dual<'a> {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: &'a [f64],
    alpha: f64,
}

impl Dual<'_> {
    fn primal(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.c.len();
        let mut g = vec![0.0; d];
        for (row, &t) in self.a.iter().zip(theta) {
            for (gj, aj) in g.iter_mut().zip(row) {
                *gj += t * aj;
            }
        }
        let y = g
            .iter()
            .zip(self.c)
            .map(|(&gj, &cj)| if gj > 0.0 { (gj / ((1.0 + self.alpha) * cj)).powf(1.0 / self.alpha) } else { 0.0 })
            .collect();
        (y, g)
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (y, g) = self.primal(theta);
        let obj: f64 = y.iter().zip(self.c).map(|(&yj, &cj)| cj * yj * powa(yj, self.alpha)).sum();
        let grad: Vec<f64> =
            self.a.iter().zip(&self.b).map(|(row, &bk)| bk - row.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>()).collect();
        let val = obj + theta.iter().zip(&grad).map(|(t, gr)| t * gr).sum::<f64>();
        (val, grad, y, g)
    }
}

fn projected_norm(theta: &[f64], grad: &[f64]) -> f64 {
    theta
        .iter()
        .zip(grad)
        .map(|(&t, &g)| if t > 0.0 { g * g } else { g.max(0.0).powi(2) })
        .sum::<f64>()
        .sqrt()
}

pub fn lifting_map_with(
    n: &[f64],
    q: &[f64],
    net: &Network,
    alpha: f64,
    crstar: &[VirtualResource],
    opts: &LiftOptions,
) -> Result<(Vec<f64>, Vec<f64>), LiftError> {
    if crstar.is_empty() {
        return Err(LiftError::NoResources);
    }
    let nf = net.num_flows();
    let c = lyapunov_weights(net, alpha);
    let a: Vec<Vec<f64>> = crstar.iter().map(|r| workload_coefficients(&r.v, net)).collect();
    let x0: Vec<f64> = n.iter().chain(q).copied().collect();
    let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
    let dual = Dual { a, b, c: &c, alpha };
    let k = dual.b.len();

    // Each constraint on its own has a closed-form multiplier; average them.
    let mut theta: Vec<f64> = (0..k)
        .map(|i| {
            if dual.b[i] <= 0.0 {
                return 0.0;
            }
            let s: f64 = dual.a[i]
                .iter()
                .zip(&c)
                .map(|(&aj, &cj)| if aj > 0.0 { aj * (aj / ((1.0 + alpha) * cj)).powf(1.0 / alpha) } else { 0.0 })
                .sum();
            (dual.b[i] / s).powf(alpha) / k as f64
        })
        .collect();

    let mut iters = 0;
    let (mut val, mut grad, mut y, mut g) = dual.value_and_grad(&theta);
    loop {
        let pg = projected_norm(&theta, &grad);
        if pg <= opts.gradient_tol {
            break;
        }
        if iters >= opts.max_iters {
            return Err(LiftError::NoConvergence { iters, gradient: pg });
        }
        iters += 1;

        let free: Vec<usize> = (0..k).filter(|&i| theta[i] > 0.0 || grad[i] > 0.0).collect();
        let newton = {
            let dy: Vec<f64> =
                y.iter().zip(&g).map(|(&yj, &gj)| if gj > 0.0 && yj > 0.0 { yj / (alpha * gj) } else { 0.0 }).collect();
            let mut h: Vec<Vec<f64>> = free
                .iter()
                .map(|&r| free.iter().map(|&s| (0..c.len()).map(|j| dual.a[r][j] * dy[j] * dual.a[s][j]).sum()).collect())
                .collect();
            let trace: f64 = (0..free.len()).map(|i| h[i][i]).sum();
            for (i, row) in h.iter_mut().enumerate() {
                row[i] += 1e-14 * (1.0 + trace);
            }
            let rhs: Vec<f64> = free.iter().map(|&r| grad[r]).collect();
            linalg::solve(&h, &rhs, 1e-300).filter(|d| d.iter().zip(&rhs).map(|(p, q)| p * q).sum::<f64>() > 0.0)
        };

        let mut improved = false;
        let directions: Vec<Vec<f64>> = {
            let mut v = Vec::new();
            if let Some(d) = newton {
                let mut full = vec![0.0; k];
                for (i, &r) in free.iter().enumerate() {
                    full[r] = d[i];
                }
                v.push(full);
            }
            let mut gd = vec![0.0; k];
            for &r in &free {
                gd[r] = grad[r];
            }
            v.push(gd);
            v
        };
        'dirs: for dir in directions {
            let mut t = 1.0;
            for _ in 0..80 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(&th, &d)| (th + t * d).max(0.0)).collect();
                let (cv, cg, cy, cgg) = dual.value_and_grad(&cand);
                let step: f64 = cand.iter().zip(&theta).zip(&grad).map(|((a, b), gr)| (a - b) * gr).sum();
                if cv >= val + 1e-4 * step && step > 0.0 {
                    theta = cand;
                    val = cv;
                    grad = cg;
                    y = cy;
                    g = cgg;
                    improved = true;
                    break 'dirs;
                }
                t *= 0.5;
            }
        }
        if !improved {
            // No ascent possible at machine precision.
            let pg = projected_norm(&theta, &grad);
            let scale = 1.0 + dual.b.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            if pg <= 1e-12 * scale {
                break;
            }
            return Err(LiftError::NoConvergence { iters, gradient: pg });
        }
    }

    let viol = grad.iter().zip(&dual.b).map(|(&gr, &bk)| gr / (1.0 + bk.abs())).fold(0.0f64, f64::max);
    if viol > opts.feasibility_tol {
        return Err(LiftError::Infeasible(viol));
    }
    let qn = y.split_off(nf);
    Ok((y, qn))
}

/// Invariant-state test: `(Γρ)ᵀq^α = max_π πᵀ(I−R)q^α` and `ρ_f q_{ι(f)} = n_f`
/// for every flow, both within `tol`.
pub fn is_invariant(n: &[f64], q: &[f64], net: &Network, alpha: f64, tol: f64) -> bool {
    let rho = net.rho();
    let lhs: f64 = (0..net.num_flows()).map(|f| rho[f] * powa(q[net.ingress(f)], alpha)).sum();
    let w = queue_weights(q, alpha, net);
    let rhs = net.schedules().elements().iter().map(|&s| weight_of(s, &w)).fold(f64::NEG_INFINITY, f64::max);
    if (lhs - rhs).abs() > tol * (1.0 + lhs.abs().max(rhs.abs())) {
        return false;
    }
    (0..net.num_flows()).all(|f| (rho[f] * q[net.ingress(f)] - n[f]).abs() <= tol)
}

/// `‖(n, q) − Δ(n, q)‖₁`.
pub fn lift_distance(n: &[f64], q: &[f64], net: &Network, alpha: f64, crstar: &[VirtualResource]) -> Result<f64, LiftError> {
    let (ln, lq) = lifting_map(n, q, net, alpha, crstar)?;
    Ok(n.iter().zip(&ln).chain(q.iter().zip(&lq)).map(|(a, b)| (a - b).abs()).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingTime {
    /// First recorded time after which every recorded state stays within
    /// `eps` of its lift; `None` if the final state is not within `eps`.
    pub time: Option<f64>,
    /// End of the trajectory the answer refers to.
    pub horizon: f64,
}

/// Hitting time of the approximate fixed-point set on the recorded grid.
pub fn hitting_time(
    ftraj: &FluidTrajectory,
    eps: f64,
    net: &Network,
    alpha: f64,
    crstar: &[VirtualResource],
) -> HittingTime {
    let samples = ftraj.samples();
    let horizon = samples.last().map_or(0.0, |s| s.t);
    let start = samples.first().map_or(0.0, |s| s.t);
    if eps == f64::INFINITY {
        return HittingTime { time: Some(start), horizon };
    }
    let mut time = Some(start);
    for (i, s) in samples.iter().enumerate().rev() {
        let inside = matches!(lift_distance(&s.n, &s.q, net, alpha, crstar), Ok(d) if d < eps);
        if !inside {
            time = samples.get(i + 1).map(|s| s.t);
            break;
        }
    }
    HittingTime { time, horizon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::critical_resources;
    use crate::fixtures::{sq1, t2};
    use crate::workload::{lyapunov, workload};

    fn t2c() -> (Network, Vec<VirtualResource>) {
        let net = t2(0.5);
        let cr = critical_resources(&net.rho(), &net).unwrap();
        (net, cr)
    }

    #[test]
    fn zero_state_lifts_to_zero() {
        let (net, cr) = t2c();
        let (n, q) = lifting_map(&[0.0], &[0.0, 0.0], &net, 1.0, &cr).unwrap();
        assert_eq!(n, vec![0.0]);
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn invariant_state_is_fixed() {
        let (net, cr) = t2c();
        let (n, q) = lifting_map(&[1.0], &[2.0, 1.0], &net, 1.0, &cr).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-6 && (q[0] - 2.0).abs() < 1e-6 && (q[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lift_of_tandem_state_from_kkt() {
        // KKT for α = 1 gives the ratio n : q1 : q2 = 1 : 2 : 1 and the
        // workload constraint 4n + 2q1 + q2 = w fixes the scale.
        let (net, cr) = t2c();
        let w = workload(&[1.0, 1.0], &[0.0], &[1.0, 0.0], &net);
        let (n, q) = lifting_map(&[0.0], &[1.0, 0.0], &net, 1.0, &cr).unwrap();
        let s = w / 9.0;
        assert!((n[0] - s).abs() < 1e-9 && (q[0] - 2.0 * s).abs() < 1e-9 && (q[1] - s).abs() < 1e-9);
    }

    #[test]
    fn lift_does_not_increase_lyapunov() {
        let (net, cr) = t2c();
        for alpha in [0.5, 1.0, 3.0] {
            let (n, q) = ([0.3], [0.1, 0.9]);
            let (ln, lq) = lifting_map(&n, &q, &net, alpha, &cr).unwrap();
            assert!(lyapunov(&ln, &lq, &net, alpha).0 <= lyapunov(&n, &q, &net, alpha).0 + 1e-12);
        }
    }

    #[test]
    fn invariance_examples() {
        let (net, _) = t2c();
        assert!(is_invariant(&[0.0], &[0.0, 0.0], &net, 1.0, 1e-9));
        assert!(is_invariant(&[1.0], &[2.0, 1.0], &net, 1.0, 1e-9));
        assert!(!is_invariant(&[1.0], &[1.0, 1.0], &net, 1.0, 1e-9));
        let net = sq1(1.0);
        assert!(is_invariant(&[0.7], &[0.7], &net, 2.0, 1e-9));
        assert!(!is_invariant(&[0.2], &[0.7], &net, 2.0, 1e-9));
    }

    #[test]
    fn empty_resources_rejected() {
        let (net, _) = t2c();
        assert_eq!(lifting_map(&[1.0], &[1.0, 1.0], &net, 1.0, &[]), Err(LiftError::NoResources));
    }
}
