//! Capacity analysis: effective load, admissibility and critical virtual
//! resources.
//!
//! `PRIMAL(λ) = min 1ᵀs  s.t. Πs ≥ λ, s ≥ 0` and its dual
//! `DUAL(λ) = max ζᵀλ  s.t. Πᵀζ ≤ 1, ζ ≥ 0`. Only maximal schedules enter
//! either program; dominated schedules never help the primal and add
//! redundant dual rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::lp::{solve_lp, LinearProgram, LpError, Sense};
use crate::network::Network;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("system is not critically loaded (Leff = {0})")]
    NotCritical(f64),
    #[error("vertex enumeration needs {count} bases, above the cap of {cap}")]
    TooManyBases { count: u128, cap: u128 },
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Admissibility {
    Strict,
    Critical,
    Inadmissible,
}

impl Admissibility {
    pub fn classify(leff: f64) -> Self {
        if (leff - 1.0).abs() <= tol::LP {
            Admissibility::Critical
        } else if leff < 1.0 {
            Admissibility::Strict
        } else {
            Admissibility::Inadmissible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Admissibility::Strict => "strict",
            Admissibility::Critical => "critical",
            Admissibility::Inadmissible => "inadmissible",
        }
    }
}

/// A dual-feasible price vector over queues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualResource {
    pub zeta: Vec<f64>,
    pub is_critical: bool,
    /// `Ξᵀζ`: the price of a packet entering each queue.
    pub v: Vec<f64>,
}

impl VirtualResource {
    pub fn new(zeta: Vec<f64>, rho: &[f64], net: &Network) -> Self {
        let v = net.xi_transpose_apply(&zeta);
        let lambda = net.xi_apply(&net.inject(rho));
        let load: f64 = zeta.iter().zip(&lambda).map(|(a, b)| a * b).sum();
        VirtualResource { zeta, is_critical: (load - 1.0).abs() <= tol::LP, v }
    }

    /// `ζᵀΞ[q + Γ diag(μ)⁻¹ n]`.
    pub fn workload(&self, n: &[f64], q: &[f64], net: &Network) -> f64 {
        let coeffs = workload_coefficients(&self.v, net);
        coeffs.iter().zip(n.iter().chain(q)).map(|(a, x)| a * x).sum()
    }
}

/// Linear coefficients of `w_ζ` over the stacked state `(n, q)`.
pub fn workload_coefficients(v: &[f64], net: &Network) -> Vec<f64> {
    let mut c: Vec<f64> = net.flows().iter().enumerate().map(|(f, spec)| v[net.ingress(f)] / spec.mu).collect();
    c.extend_from_slice(v);
    c
}

/// `min 1ᵀs  s.t. Πs ≥ λ, s ≥ 0` over maximal schedules.
pub fn primal(lambda: &[f64], net: &Network) -> Result<f64, LpError> {
    let set = net.schedules();
    let cols: Vec<usize> = set.maximal().to_vec();
    let mut lp = LinearProgram::new(vec![1.0; cols.len()]);
    for (e, &l) in lambda.iter().enumerate() {
        let row = cols.iter().map(|&k| if set.get(k).serves(e) { 1.0 } else { 0.0 }).collect();
        lp.add(row, Sense::Ge, l);
    }
    Ok(solve_lp(&lp)?.value)
}

/// `max ζᵀλ  s.t. Πᵀζ ≤ 1, ζ ≥ 0`, returning the value and a maximizer.
pub fn dual(lambda: &[f64], net: &Network) -> Result<(f64, Vec<f64>), LpError> {
    let set = net.schedules();
    let m = net.num_queues();
    let mut lp = LinearProgram::new(lambda.iter().map(|l| -l).collect());
    for &k in set.maximal() {
        let pi = set.get(k);
        lp.add((0..m).map(|e| if pi.serves(e) { 1.0 } else { 0.0 }).collect(), Sense::Le, 1.0);
    }
    let sol = solve_lp(&lp)?;
    Ok((-sol.value, sol.x))
}

/// `Leff(ρ) = PRIMAL(ΞΓρ)` and the admissibility class.
pub fn effective_load(rho: &[f64], net: &Network) -> Result<(f64, Admissibility), LpError> {
    let lambda = net.xi_apply(&net.inject(rho));
    let leff = primal(&lambda, net)?;
    Ok((leff, Admissibility::classify(leff)))
}

/// Cap on the number of candidate bases examined by [`critical_resources`].
pub const MAX_BASES: u128 = 1_000_000;

/// All extreme points of the optimal face of `DUAL(ΞΓρ)` at critical load.
pub fn critical_resources(rho: &[f64], net: &Network) -> Result<Vec<VirtualResource>, CapacityError> {
    let (leff, class) = effective_load(rho, net)?;
    if class != Admissibility::Critical {
        return Err(CapacityError::NotCritical(leff));
    }
    let lambda = net.xi_apply(&net.inject(rho));
    let m = net.num_queues();
    let set = net.schedules();

    // Rows of {ζ : Aζ ≤ b}: the schedule rows, then -ζ_e ≤ 0.
    let mut rows: Vec<(Vec<f64>, f64)> = set
        .maximal()
        .iter()
        .map(|&k| ((0..m).map(|e| if set.get(k).serves(e) { 1.0 } else { 0.0 }).collect(), 1.0))
        .collect();
    for e in 0..m {
        let mut r = vec![0.0; m];
        r[e] = -1.0;
        rows.push((r, 0.0));
    }

    let count = binomial(rows.len() as u128, m as u128);
    if count > MAX_BASES {
        return Err(CapacityError::TooManyBases { count, cap: MAX_BASES });
    }

    let mut found: Vec<Vec<f64>> = Vec::new();
    for_each_combination(rows.len(), m, |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        let Some(mut z) = linalg::solve(&a, &b, 1e-12) else { return };
        for x in z.iter_mut() {
            if x.abs() <= tol::LP {
                *x = 0.0;
            }
        }
        let feasible = rows.iter().all(|(r, rhs)| r.iter().zip(&z).map(|(p, q)| p * q).sum::<f64>() <= rhs + tol::LP);
        if !feasible {
            return;
        }
        let value: f64 = z.iter().zip(&lambda).map(|(p, q)| p * q).sum();
        if (value - 1.0).abs() > tol::LP {
            return;
        }
        if !found.iter().any(|y| y.iter().zip(&z).all(|(p, q)| (p - q).abs() <= tol::LP)) {
            found.push(z);
        }
    });
    found.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(found.into_iter().map(|z| VirtualResource::new(z, rho, net)).collect())
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
