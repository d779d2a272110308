//! Small dense two-phase simplex solver (Bland's rule).
//!
//! Problems are stated as
//!
//! ```text
//! maximize  c·x
//! s.t.      a_i·x (≤ | =) b_i
//!           lo_j ≤ x_j ≤ hi_j        lo_j finite, hi_j possibly +∞
//! ```
//!
//! Sizes here are a few hundred rows at most, so a dense tableau is fine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced-cost threshold for entering columns.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-9;
/// Phase-one residual above which the problem is declared infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Constraint slack accepted on reported optima.
pub const ACCEPT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub point: Vec<f64>,
    /// Indices of constraints active at `point`.
    pub tight: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("simplex stalled after {pivots} pivots in phase {phase} (objective {objective})")]
    NumericalFailure {
        phase: u8,
        pivots: usize,
        objective: f64,
    },
}

impl LinearProgram {
    /// `n` variables with bounds `[0, ∞)` and zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn maximize(mut self, objective: Vec<f64>) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_bounds(mut self, var: usize, lo: f64, hi: f64) -> Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn le(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.add(coeffs, Relation::Le, rhs);
        self
    }

    pub fn eq(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.add(coeffs, Relation::Eq, rhs);
        self
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Malformed(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "constraint {i} has width {}, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!("constraint {i} is not finite")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || hi < lo {
                return Err(LpError::Malformed(format!("bad bounds [{lo}, {hi}] on x{j}")));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs = dot(&c.coeffs, x);
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (xj, &(lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - xj).max(xj - hi);
        }
        worst
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense tableau `B⁻¹[A | b]` with an explicit basis.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn row(&self, r: usize) -> &[f64] {
        let w = self.cols + 1;
        &self.data[r * w..(r + 1) * w]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let pivot_row = self.row(pr).to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f != 0.0 {
                let row = &mut self.data[r * w..(r + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs `c_j − c_B B⁻¹ A_j` and current objective `c_B B⁻¹ b`.
    fn reduced_costs(&self, cost: &[f64]) -> (Vec<f64>, f64) {
        let mut d = cost.to_vec();
        let mut z = 0.0;
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.at(r, j);
                }
                z += cb * self.rhs(r);
            }
        }
        (d, z)
    }

    /// Maximizes `cost·x` over columns with `allowed[j]`, Bland's rule.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], phase: u8) -> Result<bool, LpError> {
        let max_pivots = 50_000 + 200 * (self.rows + self.cols);
        let (mut d, mut z) = self.reduced_costs(cost);
        for pivots in 0..max_pivots {
            let entering = (0..self.cols).find(|&j| allowed[j] && d[j] > OPTIMALITY_TOL);
            let Some(pc) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            if ratio < lratio && !tie
                                || tie && self.basis[r] < self.basis[lr]
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = leave else {
                return Ok(false);
            };
            // update reduced costs with the pivot row before pivoting
            let f = d[pc] / self.at(pr, pc);
            z += f * self.rhs(pr);
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= f * self.at(pr, j);
            }
            d[pc] = 0.0;
            self.pivot(pr, pc);
            if !z.is_finite() {
                return Err(LpError::NumericalFailure {
                    phase,
                    pivots,
                    objective: z,
                });
            }
        }
        Err(LpError::NumericalFailure {
            phase,
            pivots: max_pivots,
            objective: z,
        })
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.num_vars();

    // shift x = lo + x'; finite upper bounds become rows
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let shift = dot(&c.coeffs, &lp.bounds.iter().map(|b| b.0).collect::<Vec<_>>());
            (c.coeffs.clone(), c.relation, c.rhs - shift)
        })
        .collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, Relation::Le, hi - lo));
        }
    }
    let m = rows.len();

    // columns: structural | slack/surplus per Le row | artificial where needed
    let n_slack = rows.iter().filter(|r| r.1 == Relation::Le).count();
    let needs_art: Vec<bool> = rows
        .iter()
        .map(|(_, rel, b)| *rel == Relation::Eq || *b < 0.0)
        .collect();
    let n_art = needs_art.iter().filter(|&&x| x).count();
    let cols = n + n_slack + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for (r, (a, rel, b)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        let row = &mut data[r * w..(r + 1) * w];
        for (v, aj) in row.iter_mut().zip(a) {
            *v = sign * aj;
        }
        row[cols] = sign * b;
        if *rel == Relation::Le {
            row[next_slack] = sign;
            if sign > 0.0 {
                basis[r] = next_slack;
            }
            next_slack += 1;
        }
        if needs_art[r] {
            row[next_art] = 1.0;
            basis[r] = next_art;
            next_art += 1;
        }
    }
    let mut t = Tableau {
        rows: m,
        cols,
        data,
        basis,
    };
    let is_art = |j: usize| j >= n + n_slack;

    if n_art > 0 {
        let cost: Vec<f64> = (0..cols).map(|j| if is_art(j) { -1.0 } else { 0.0 }).collect();
        let allowed = vec![true; cols];
        t.optimize(&cost, &allowed, 1)?;
        let infeasibility: f64 = (0..m)
            .filter(|&r| is_art(t.basis[r]))
            .map(|r| t.rhs(r))
            .sum();
        if infeasibility > FEASIBILITY_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                point: Vec::new(),
                tight: Vec::new(),
            });
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..m {
            if is_art(t.basis[r]) {
                if let Some(c) = (0..n + n_slack).find(|&c| t.at(r, c).abs() > PIVOT_TOL) {
                    t.pivot(r, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = (0..cols).map(|j| !is_art(j)).collect();
    if !t.optimize(&cost, &allowed, 2)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            value: f64::INFINITY,
            point: Vec::new(),
            tight: Vec::new(),
        });
    }

    let mut point: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    for r in 0..m {
        let j = t.basis[r];
        if j < n {
            point[j] += t.rhs(r);
        }
    }
    // clip round-off against the box
    for (x, &(lo, hi)) in point.iter_mut().zip(&lp.bounds) {
        *x = x.clamp(lo, hi);
    }
    let tight = lp
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| (dot(&c.coeffs, &point) - c.rhs).abs() <= ACCEPT_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value: lp.value_at(&point),
        point,
        tight,
    })
}

/// Phase-one only: a feasible point or `Infeasible`.
pub fn feasible(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let zero = LinearProgram {
        objective: vec![0.0; lp.num_vars()],
        ..lp.clone()
    };
    solve(&zero)
}
