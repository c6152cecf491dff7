//! Dense two-phase simplex with Bland's rule.
//!
//! Problems are always stated as minimization over `x ≥ 0` with optional
//! finite upper bounds. Sizes here are small (at most a few hundred
//! variables), so the tableau is kept dense and every pivot is explicit.

use thiserror::Error;

use crate::linalg;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `minimize cᵀx` subject to the constraints and `0 ≤ x ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub upper: Vec<Option<f64>>,
}

/// Optimal vertex and multipliers.
///
/// Duals follow the Lagrangian `cᵀx − yᵀ(Ax − b)`: `y ≥ 0` on `≥` rows,
/// `y ≤ 0` on `≤` rows, free on equalities, and at optimality
/// `bᵀy + (upper-bound terms) = value`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram { objective, constraints: Vec::new(), upper: vec![None; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, sense, rhs });
        self
    }

    pub fn set_upper(&mut self, var: usize, bound: f64) -> &mut Self {
        self.upper[var] = Some(bound);
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.upper.len() != n {
            return Err(LpError::Malformed("bounds length differs from objective".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!("row {i} has {} coefficients, expected {n}", c.coeffs.len())));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!("row {i} is not finite")));
            }
        }
        for (j, u) in self.upper.iter().enumerate() {
            if let Some(u) = u {
                if !u.is_finite() || *u < 0.0 {
                    return Err(LpError::Malformed(format!("upper bound of variable {j} is {u}")));
                }
            }
        }
        Ok(())
    }
}

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// Solves `lp` to optimality.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // Explicit rows: user constraints followed by upper bounds.
    let mut rows: Vec<Constraint> = lp.constraints.clone();
    for (j, u) in lp.upper.iter().enumerate() {
        if let Some(u) = *u {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            rows.push(Constraint { coeffs, sense: Sense::Le, rhs: u });
        }
    }
    let m = rows.len();

    // Normalize to b ≥ 0.
    let mut flip = vec![1.0; m];
    for (i, r) in rows.iter_mut().enumerate() {
        if r.rhs < 0.0 {
            flip[i] = -1.0;
            r.rhs = -r.rhs;
            r.coeffs.iter_mut().for_each(|a| *a = -*a);
            r.sense = match r.sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    // Column layout: [structural | slack | artificial].
    let num_slack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let num_art = rows.iter().filter(|r| r.sense != Sense::Le).count();
    let slack0 = n;
    let art0 = n + num_slack;
    let ncols = art0 + num_art;

    let mut a_std = vec![vec![0.0; ncols]; m];
    let mut b = vec![0.0; m];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (slack0, art0);
    for (i, r) in rows.iter().enumerate() {
        a_std[i][..n].copy_from_slice(&r.coeffs);
        b[i] = r.rhs;
        match r.sense {
            Sense::Le => {
                a_std[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Sense::Ge => {
                a_std[i][s] = -1.0;
                s += 1;
                a_std[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            Sense::Eq => {
                a_std[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }

    let mut tab = Tableau::new(&a_std, &b, basis);

    if num_art > 0 {
        let cost: Vec<f64> = (0..ncols).map(|j| if j >= art0 { 1.0 } else { 0.0 }).collect();
        tab.optimize(&cost, ncols)?;
        let infeas: f64 = tab.basis.iter().enumerate().filter(|(_, &v)| v >= art0).map(|(i, _)| tab.rhs(i)).sum();
        let scale = 1.0 + b.iter().fold(0.0f64, |x, y| x.max(y.abs()));
        if infeas > tol::LP * scale {
            return Err(LpError::Infeasible);
        }
        tab.drive_out_artificials(art0);
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.optimize(&cost, art0)?;

    // Recompute the basic solution and duals from the original data.
    let live: Vec<usize> = (0..m).filter(|&i| !tab.dropped[i]).collect();
    let bcols: Vec<usize> = live.iter().map(|&i| tab.basis[i]).collect();
    let bmat: Vec<Vec<f64>> = live.iter().map(|&r| bcols.iter().map(|&c| a_std[r][c]).collect()).collect();
    let rhs: Vec<f64> = live.iter().map(|&r| b[r]).collect();
    let xb = linalg::solve(&bmat, &rhs, 1e-14).unwrap_or_else(|| live.iter().map(|&i| tab.rhs(i)).collect());

    let mut xfull = vec![0.0; ncols];
    for (k, &c) in bcols.iter().enumerate() {
        xfull[c] = xb[k].max(0.0);
    }
    let x = xfull[..n].to_vec();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

    let bt: Vec<Vec<f64>> = (0..live.len()).map(|k| live.iter().map(|&r| a_std[r][bcols[k]]).collect()).collect();
    let cb: Vec<f64> = bcols.iter().map(|&c| cost[c]).collect();
    let y_live = linalg::solve(&bt, &cb, 1e-14).unwrap_or_else(|| vec![0.0; live.len()]);
    let mut y_rows = vec![0.0; m];
    for (k, &r) in live.iter().enumerate() {
        y_rows[r] = y_live[k] * flip[r];
    }
    let duals = y_rows[..lp.constraints.len()].to_vec();

    Ok(LpSolution { value, x, duals })
}

struct Tableau {
    rows: Vec<Vec<f64>>, // last column holds the right-hand side
    basis: Vec<usize>,
    dropped: Vec<bool>,
    ncols: usize,
}

impl Tableau {
    fn new(a: &[Vec<f64>], b: &[f64], basis: Vec<usize>) -> Self {
        let ncols = a.first().map_or(0, Vec::len);
        let rows = a.iter().zip(b).map(|(r, &bi)| {
            let mut row = r.clone();
            row.push(bi);
            row
        }).collect();
        let m = b.len();
        Tableau { rows, basis, dropped: vec![false; m], ncols }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || self.dropped[i] {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` using only columns `< allowed` as entering candidates.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        for _ in 0..MAX_PIVOTS {
            // Bland: smallest-index column with negative reduced cost.
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let d = cost[j]
                    - self
                        .rows
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !self.dropped[*i])
                        .map(|(i, row)| cost[self.basis[i]] * row[j])
                        .sum::<f64>();
                d < -COST_EPS
            });
            let Some(j) = entering else { return Ok(()) };

            // Ratio test; ties go to the smallest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if self.dropped[i] || row[j] <= PIVOT_EPS {
                    continue;
                }
                let ratio = row[self.ncols].max(0.0) / row[j];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if ratio < best && !tie || tie && self.basis[i] < self.basis[k] {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else { return Err(LpError::Unbounded) };
            self.pivot(r, j);
        }
        Err(LpError::IterationLimit(MAX_PIVOTS))
    }

    fn drive_out_artificials(&mut self, art0: usize) {
        for i in 0..self.rows.len() {
            if self.dropped[i] || self.basis[i] < art0 {
                continue;
            }
            let col = (0..art0).find(|&j| !self.basis.contains(&j) && self.rows[i][j].abs() > 1e-9);
            match col {
                Some(j) => self.pivot(i, j),
                None => self.dropped[i] = true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_lower_bound() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![1.0], Sense::Ge, 0.7);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 0.7).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![1.0], Sense::Le, -1.0);
        assert_eq!(solve_lp(&lp), Err(LpError::Infeasible));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.add(vec![1.0, -1.0], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp), Err(LpError::Unbounded));
    }

    #[test]
    fn equality_and_upper_bounds() {
        // min -x - 2y, x + y = 3, y <= 2  ->  x = 1, y = 2, value -5.
        let mut lp = LinearProgram::new(vec![-1.0, -2.0]);
        lp.add(vec![1.0, 1.0], Sense::Eq, 3.0);
        lp.set_upper(1, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value + 5.0).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add(vec![1.0, 1.0], Sense::Eq, 2.0);
        lp.add(vec![2.0, 2.0], Sense::Eq, 4.0);
        lp.add(vec![1.0, 0.0], Sense::Ge, 0.5);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) under Dantzig's rule.
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0);
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value + 0.05).abs() < 1e-12, "{}", sol.value);
    }

    #[test]
    fn negative_rhs_dual_sign() {
        // min x s.t. -x <= -2  (i.e. x >= 2); dual on a <= row is <= 0.
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add(vec![-1.0], Sense::Le, -2.0);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
        assert!((sol.duals[0] + 1.0).abs() < 1e-12);
        assert!((sol.duals[0] * -2.0 - sol.value).abs() < 1e-12);
    }

    #[test]
    fn malformed_rejected() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add(vec![1.0], Sense::Ge, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::Malformed(_))));
    }
}
