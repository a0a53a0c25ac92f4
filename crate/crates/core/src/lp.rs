//! Dense bounded-variable simplex for small linear programs.
//!
//! Problems have the form
//!
//! ```text
//! min/max  c·x   subject to   row_lower ≤ A x ≤ row_upper,   var_lower ≤ x ≤ var_upper
//! ```
//!
//! Each row gets a logical variable `s_i` with `A x − s = 0` and box
//! `[row_lower_i, row_upper_i]`, so range rows cost one basis slot, never two.
//! Phase 1 minimizes the sum of artificial variables placed on the rows the
//! starting point violates; phase 2 optimizes the real objective. Pricing is
//! Dantzig's rule, switching to Bland's rule after a run of degenerate
//! pivots. The ratio test is the two-pass Harris variant.

use crate::error::{Error, Result};

pub const PRIMAL_TOL: f64 = 1e-9;
pub const DUAL_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-11;

const REFACTOR_EVERY: usize = 40;
const DEGENERATE_RUN_FOR_BLAND: usize = 30;
/// Final solutions violating a constraint by more than this are reported as
/// a numerical failure instead of being returned as optimal.
const ACCEPT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl LpProblem {
    /// `n` variables with zero objective and box `[0, +∞)`.
    pub fn new(n: usize, sense: Sense) -> Self {
        Self {
            sense,
            objective: vec![0.0; n],
            rows: Vec::new(),
            var_lower: vec![0.0; n],
            var_upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, lower: f64, upper: f64) -> usize {
        self.rows.push(Row { coeffs, lower, upper });
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.var_lower[j] = lower;
        self.var_upper[j] = upper;
    }

    pub fn set_all_bounds(&mut self, lower: f64, upper: f64) {
        self.var_lower.iter_mut().for_each(|v| *v = lower);
        self.var_upper.iter_mut().for_each(|v| *v = upper);
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(Error::Dimension(format!(
                "{} objective coefficients but {}/{} variable bounds",
                n,
                self.var_lower.len(),
                self.var_upper.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} coefficients, expected {n}",
                    r.coeffs.len()
                )));
            }
            if r.coeffs.iter().any(|c| !c.is_finite()) || r.lower.is_nan() || r.upper.is_nan() {
                return Err(Error::Solver(format!("row {i} has non-finite data")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite())
            || self.var_lower.iter().chain(&self.var_upper).any(|b| b.is_nan())
        {
            return Err(Error::Solver("non-finite objective or bound".into()));
        }
        Ok(())
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(&r.coeffs, x)).collect()
    }

    /// Largest violation of any row or box by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.var_lower[j] - v).max(v - self.var_upper[j]);
        }
        for (r, a) in self.rows.iter().zip(self.activities(x)) {
            worst = worst.max(r.lower - a).max(a - r.upper);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value; meaningful only when optimal.
    pub value: f64,
    pub x: Vec<f64>,
    /// Sensitivity of the optimal value to each row's active bound.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Lagrangian dual bound implied by `row_duals`: a lower bound on the
    /// optimum of a minimization (upper bound for maximization), equal to
    /// the optimum when the final basis is dual feasible.
    pub fn dual_bound(&self, problem: &LpProblem) -> f64 {
        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let y: Vec<f64> = self.row_duals.iter().map(|v| sign * v).collect();
        let mut g = 0.0;
        for (yi, r) in y.iter().zip(&problem.rows) {
            g += pick_bound(*yi, r.lower, r.upper);
        }
        for j in 0..problem.num_vars() {
            let col_dot: f64 = problem.rows.iter().zip(&y).map(|(r, yi)| r.coeffs[j] * yi).sum();
            let d = sign * problem.objective[j] - col_dot;
            g += pick_bound(d, problem.var_lower[j], problem.var_upper[j]);
        }
        sign * g
    }
}

// min over v ∈ [lo, hi] of m·v, with 0·∞ = 0.
fn pick_bound(m: f64, lo: f64, hi: f64) -> f64 {
    if m > 0.0 {
        m * lo
    } else if m < 0.0 {
        m * hi
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Zero,
}

enum Step {
    Optimal,
    Unbounded,
    Continue,
}

struct Simplex {
    m: usize,
    cols: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
    degenerate_run: usize,
}

impl Simplex {
    fn nonbasic_value(lb: f64, ub: f64) -> (f64, VarState) {
        if lb.is_finite() {
            (lb, VarState::AtLower)
        } else if ub.is_finite() {
            (ub, VarState::AtUpper)
        } else {
            (0.0, VarState::Zero)
        }
    }

    /// Sets up phase 1. Returns the index of the first artificial column.
    fn phase_one(p: &LpProblem) -> (Self, usize) {
        let n = p.num_vars();
        let m = p.num_rows();
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| p.rows.iter().map(|r| r.coeffs[j]).collect())
            .collect();
        let mut lb = p.var_lower.clone();
        let mut ub = p.var_upper.clone();
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (v, s) = Self::nonbasic_value(lb[j], ub[j]);
            x.push(v);
            state.push(s);
        }
        let act = p.activities(&x);
        for (i, r) in p.rows.iter().enumerate() {
            let mut e = vec![0.0; m];
            e[i] = -1.0;
            cols.push(e);
            lb.push(r.lower);
            ub.push(r.upper);
            x.push(act[i]);
            state.push(VarState::AtLower); // fixed below
        }
        let first_art = n + m;
        let mut basis = vec![0; m];
        let mut binv = vec![vec![0.0; m]; m];
        for (i, r) in p.rows.iter().enumerate() {
            let s = n + i;
            let a = act[i];
            if a >= r.lower - PRIMAL_TOL && a <= r.upper + PRIMAL_TOL {
                basis[i] = s;
                state[s] = VarState::Basic(i);
                binv[i][i] = -1.0;
            } else {
                let (bound, st) = if a < r.lower {
                    (r.lower, VarState::AtLower)
                } else {
                    (r.upper, VarState::AtUpper)
                };
                x[s] = bound;
                state[s] = st;
                // A x − s + σ·art = 0  ⇒  σ·art = bound − a
                let sigma = if bound > a { 1.0 } else { -1.0 };
                let mut e = vec![0.0; m];
                e[i] = sigma;
                let k = cols.len();
                cols.push(e);
                lb.push(0.0);
                ub.push(f64::INFINITY);
                x.push((bound - a).abs());
                state.push(VarState::Basic(i));
                basis[i] = k;
                binv[i][i] = sigma;
            }
        }
        let total = cols.len();
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        let max_iterations = 200 * (n + m) + 2000;
        (
            Self {
                m,
                cols,
                lb,
                ub,
                cost,
                x,
                state,
                basis,
                binv,
                iterations: 0,
                max_iterations,
                since_refactor: 0,
                degenerate_run: 0,
            },
            first_art,
        )
    }

    fn duals(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (p, &b) in self.basis.iter().enumerate() {
            let c = self.cost[b];
            if c != 0.0 {
                for (yi, bi) in y.iter_mut().zip(&self.binv[p]) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn ftran(&self, col: &[f64]) -> Vec<f64> {
        self.binv.iter().map(|row| dot(row, col)).collect()
    }

    /// Rebuilds the basis inverse and recomputes basic values from the
    /// nonbasic ones. Returns false if the basis is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return true;
        }
        // Gauss-Jordan on [B | I]
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row: Vec<f64> = self.basis.iter().map(|&b| self.cols[b][i]).collect();
                row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&i, &k| a[i][c].abs().total_cmp(&a[k][c].abs()))
                .unwrap();
            if a[piv][c].abs() < 1e-14 {
                return false;
            }
            a.swap(c, piv);
            let d = a[c][c];
            a[c].iter_mut().for_each(|v| *v /= d);
            let pivot_row = a[c].clone();
            for (i, row) in a.iter_mut().enumerate() {
                if i != c && row[c] != 0.0 {
                    let f = row[c];
                    row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        self.binv = a.into_iter().map(|row| row[m..].to_vec()).collect();
        // B x_B = −Σ_N col_j x_j
        let mut rhs = vec![0.0; m];
        for (j, col) in self.cols.iter().enumerate() {
            if !matches!(self.state[j], VarState::Basic(_)) && self.x[j] != 0.0 {
                for (r, c) in rhs.iter_mut().zip(col) {
                    *r -= c * self.x[j];
                }
            }
        }
        let xb = self.ftran(&rhs);
        for (p, &b) in self.basis.iter().enumerate() {
            self.x[b] = xb[p];
        }
        true
    }

    fn step(&mut self) -> Step {
        let y = self.duals();
        let bland = self.degenerate_run >= DEGENERATE_RUN_FOR_BLAND;

        // pricing
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if matches!(st, VarState::Basic(_)) || self.lb[j] == self.ub[j] {
                continue;
            }
            let d = self.cost[j] - dot(&y, &self.cols[j]);
            let eligible = match st {
                VarState::AtLower => d < -DUAL_TOL,
                VarState::AtUpper => d > DUAL_TOL,
                VarState::Zero => d.abs() > DUAL_TOL,
                VarState::Basic(_) => false,
            };
            if !eligible {
                continue;
            }
            match entering {
                None => entering = Some((j, d)),
                Some((_, best)) if !bland && d.abs() > best.abs() => entering = Some((j, d)),
                _ => {}
            }
            if bland {
                break;
            }
        }
        let Some((j, d)) = entering else {
            return Step::Optimal;
        };
        let dir = if d < 0.0 { 1.0 } else { -1.0 };
        let alpha = self.ftran(&self.cols[j]);

        // Harris pass 1: largest step with bounds relaxed by the tolerance.
        let flip = self.ub[j] - self.lb[j];
        let mut theta_relaxed = flip;
        for (p, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[p];
            let delta = -dir * a;
            let r = if delta < 0.0 && self.lb[b].is_finite() {
                (self.x[b] - self.lb[b] + PRIMAL_TOL) / -delta
            } else if delta > 0.0 && self.ub[b].is_finite() {
                (self.ub[b] - self.x[b] + PRIMAL_TOL) / delta
            } else {
                continue;
            };
            theta_relaxed = theta_relaxed.min(r);
        }
        // pass 2: among rows blocking within that step, the largest pivot
        let mut leaving: Option<(usize, f64, f64)> = None; // (pos, exact ratio, |alpha|)
        for (p, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let b = self.basis[p];
            let delta = -dir * a;
            let r = if delta < 0.0 && self.lb[b].is_finite() {
                (self.x[b] - self.lb[b]) / -delta
            } else if delta > 0.0 && self.ub[b].is_finite() {
                (self.ub[b] - self.x[b]) / delta
            } else {
                continue;
            };
            let r = r.max(0.0);
            if r > theta_relaxed {
                continue;
            }
            let better = match leaving {
                None => true,
                Some((lp, lr, la)) => {
                    if bland {
                        r < lr - PRIMAL_TOL || (r <= lr + PRIMAL_TOL && b < self.basis[lp])
                    } else {
                        a.abs() > la
                    }
                }
            };
            if better {
                leaving = Some((p, r, a.abs()));
            }
        }

        let theta = match leaving {
            Some((_, r, _)) if r < flip => r,
            _ if flip.is_finite() => flip,
            _ => return Step::Unbounded,
        };
        if theta <= 1e-12 {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }

        self.x[j] += dir * theta;
        for (p, &a) in alpha.iter().enumerate() {
            let b = self.basis[p];
            self.x[b] -= dir * a * theta;
        }
        self.iterations += 1;

        match leaving {
            Some((p, r, _)) if r < flip => {
                let out = self.basis[p];
                let delta = -dir * alpha[p];
                if delta < 0.0 {
                    self.x[out] = self.lb[out];
                    self.state[out] = VarState::AtLower;
                } else {
                    self.x[out] = self.ub[out];
                    self.state[out] = VarState::AtUpper;
                }
                self.basis[p] = j;
                self.state[j] = VarState::Basic(p);
                let ap = alpha[p];
                let pivot_row: Vec<f64> = self.binv[p].iter().map(|v| v / ap).collect();
                for (i, row) in self.binv.iter_mut().enumerate() {
                    if i == p {
                        continue;
                    }
                    let f = alpha[i];
                    if f != 0.0 {
                        row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                    }
                }
                self.binv[p] = pivot_row;
                self.since_refactor += 1;
                if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                    // keep going with the product-form inverse
                    self.since_refactor = 0;
                }
            }
            _ => {
                // bound flip
                if dir > 0.0 {
                    self.x[j] = self.ub[j];
                    self.state[j] = VarState::AtUpper;
                } else {
                    self.x[j] = self.lb[j];
                    self.state[j] = VarState::AtLower;
                }
            }
        }
        Step::Continue
    }

    fn run(&mut self) -> LpStatus {
        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::IterationLimit;
            }
            match self.step() {
                Step::Optimal => {
                    if !self.refactor() {
                        return LpStatus::NumericalFailure;
                    }
                    // confirm optimality against the refreshed inverse
                    match self.step() {
                        Step::Optimal => return LpStatus::Optimal,
                        Step::Unbounded => return LpStatus::Unbounded,
                        Step::Continue => continue,
                    }
                }
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Continue => {}
            }
        }
    }
}

fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> LpSolution {
    LpSolution {
        status,
        value: f64::NAN,
        x: vec![f64::NAN; n],
        row_duals: vec![0.0; m],
        reduced_costs: vec![0.0; n],
        iterations,
    }
}

// Phase 1 shared by `solve` and `feasible`.
fn find_feasible_basis(problem: &LpProblem) -> std::result::Result<(Simplex, usize), (LpStatus, usize)> {
    let trivially_empty = problem
        .var_lower
        .iter()
        .zip(&problem.var_upper)
        .any(|(l, u)| l > u)
        || problem.rows.iter().any(|r| r.lower > r.upper);
    if trivially_empty {
        return Err((LpStatus::Infeasible, 0));
    }
    let (mut sx, first_art) = Simplex::phase_one(problem);
    if sx.cols.len() > first_art {
        match sx.run() {
            LpStatus::Optimal => {}
            other => return Err((other, sx.iterations)),
        }
        let infeasibility = sx.x[first_art..].iter().fold(0.0f64, |a, &v| a.max(v));
        if infeasibility > PRIMAL_TOL {
            return Err((LpStatus::Infeasible, sx.iterations));
        }
        for k in first_art..sx.cols.len() {
            sx.ub[k] = 0.0;
            if !matches!(sx.state[k], VarState::Basic(_)) {
                sx.x[k] = 0.0;
            }
        }
    }
    Ok((sx, first_art))
}

/// Solves the program. Dimension mismatches are errors; infeasibility,
/// unboundedness and numerical trouble are reported through the status.
pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    problem.check()?;
    let n = problem.num_vars();
    let m = problem.num_rows();
    let (mut sx, _) = match find_feasible_basis(problem) {
        Ok(v) => v,
        Err((status, it)) => return Ok(failed(status, n, m, it)),
    };
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    sx.cost.iter_mut().for_each(|c| *c = 0.0);
    for (c, &o) in sx.cost.iter_mut().zip(&problem.objective) {
        *c = sign * o;
    }
    sx.degenerate_run = 0;
    let status = sx.run();
    if status != LpStatus::Optimal {
        return Ok(failed(status, n, m, sx.iterations));
    }

    let mut x: Vec<f64> = sx.x[..n].to_vec();
    if problem.max_violation(&x) > ACCEPT_TOL {
        return Ok(failed(LpStatus::NumericalFailure, n, m, sx.iterations));
    }
    for (j, v) in x.iter_mut().enumerate() {
        *v = v.clamp(problem.var_lower[j], problem.var_upper[j]);
    }
    let y = sx.duals();
    let reduced_costs = (0..n)
        .map(|j| sign * (sx.cost[j] - dot(&y, &sx.cols[j])))
        .collect();
    Ok(LpSolution {
        status,
        value: dot(&problem.objective, &x),
        x,
        row_duals: y.iter().map(|v| sign * v).collect(),
        reduced_costs,
        iterations: sx.iterations,
    })
}

/// Whether some point satisfies every row and box within the primal tolerance.
pub fn feasible(problem: &LpProblem) -> Result<bool> {
    problem.check()?;
    match find_feasible_basis(problem) {
        Ok(_) => Ok(true),
        Err((LpStatus::Infeasible, _)) => Ok(false),
        Err((status, _)) => Err(Error::Solver(format!("phase 1 ended with {status:?}"))),
    }
}
