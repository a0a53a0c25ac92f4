//! Decoy-state programs: lower bounds on the single-photon and vacuum
//! detection probabilities, and an upper bound on the single-photon bit
//! error rate.
//!
//! Every level constrains the common per-photon-number yields `ȳ_k` through
//! its observed interval `Y⁻_j ≤ Σ_k P_j(k)·ȳ_k ≤ Y⁺_j`. Photon numbers at or
//! above `k_max` are not modelled as variables: their Poisson mass is taken
//! as yield 1 on the lower side of each row and yield 0 on the upper side,
//! which can only loosen the constraint.
//!
//! The error-rate program is bilinear in `(b̄_k, ȳ_k)`. With `c̄_k = b̄_k·ȳ_k`
//! it becomes linear in `(ȳ, c̄)` with `0 ≤ c̄_k ≤ ȳ_k`, and the objective
//! `c̄_1/ȳ_1` is maximized by bisection on the threshold `t` of the linear
//! feasibility question "is `c̄_1 − t·ȳ_1 ≥ 0` attainable?".

use crate::error::{Error, Result};
use crate::lp::{self, LpProblem, LpStatus, Sense};
use crate::model::{LevelBounds, ObservationBounds, ProtocolSpec, SolverDiagnostics, SpsBounds};

/// Absolute tolerance of the `b1_max` bisection.
pub const B1_TOL: f64 = 1e-6;
/// Below this the single-photon yield is treated as attainably zero.
const ZERO_YIELD: f64 = 1e-12;

/// Poisson weights `e^{-μ} μ^k / k!` for `k < k_max` and the remaining mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonRow {
    pub coeffs: Vec<f64>,
    pub tail: f64,
}

pub fn poisson_row(mu: f64, k_max: usize) -> PoissonRow {
    let mut coeffs = Vec::with_capacity(k_max);
    let mut term = (-mu).exp();
    for k in 0..k_max {
        if k > 0 {
            term *= mu / k as f64;
        }
        coeffs.push(term);
    }
    // sum the tail directly so small tails keep their relative accuracy
    let mut tail = 0.0;
    let mut k = k_max;
    loop {
        term = if k == 0 { (-mu).exp() } else { term * mu / k as f64 };
        tail += term;
        if (k as f64 > mu && term <= 1e-18 * tail) || term == 0.0 || k > k_max + 10_000 {
            break;
        }
        k += 1;
    }
    PoissonRow { coeffs, tail }
}

// Adds `lo ≤ Σ coeffs·x[offset..] ≤ hi` scaled so the upper bound is 1.
pub(crate) fn add_level_row(problem: &mut LpProblem, offset: usize, row: &PoissonRow, lo: f64, hi: f64) {
    let scale = if hi > 0.0 { hi } else { 1.0 };
    let mut coeffs = vec![0.0; problem.num_vars()];
    for (k, c) in row.coeffs.iter().enumerate() {
        coeffs[offset + k] = c / scale;
    }
    problem.add_row(coeffs, (lo - row.tail) / scale, hi / scale);
}

fn check_inputs(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize) -> Result<()> {
    if protocol.len() != obs.levels.len() {
        return Err(Error::Dimension(format!(
            "{} levels but {} observation intervals",
            protocol.len(),
            obs.levels.len()
        )));
    }
    if k_max < 2 {
        return Err(Error::domain("k_max must be at least 2"));
    }
    Ok(())
}

/// The yield program over `ȳ_0 … ȳ_{k_max-1}` with no objective set.
pub fn yield_program(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize) -> Result<LpProblem> {
    check_inputs(protocol, obs, k_max)?;
    let mut p = LpProblem::new(k_max, Sense::Minimize);
    p.set_all_bounds(0.0, 1.0);
    for (level, b) in protocol.levels.iter().zip(&obs.levels) {
        add_level_row(&mut p, 0, &poisson_row(level.mu, k_max), b.y_lo, b.y_hi);
    }
    Ok(p)
}

/// Minimizes one variable; infeasibility means the observations cannot come
/// from any channel.
pub(crate) fn minimize_var(
    mut problem: LpProblem,
    var: usize,
    diag: &mut SolverDiagnostics,
) -> Result<f64> {
    problem.sense = Sense::Minimize;
    problem.objective.iter_mut().for_each(|c| *c = 0.0);
    problem.objective[var] = 1.0;
    let sol = lp::solve(&problem)?;
    diag.lp_solves += 1;
    diag.simplex_iterations += sol.iterations;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.clamp(0.0, 1.0)),
        LpStatus::Infeasible => Err(Error::Inconsistent(
            "no yields reproduce the observed detection rates".into(),
        )),
        other => Err(Error::Solver(format!("{other:?}"))),
    }
}

fn maximize_var(mut problem: LpProblem, var: usize, diag: &mut SolverDiagnostics) -> Result<f64> {
    problem.sense = Sense::Maximize;
    problem.objective.iter_mut().for_each(|c| *c = 0.0);
    problem.objective[var] = 1.0;
    let sol = lp::solve(&problem)?;
    diag.lp_solves += 1;
    diag.simplex_iterations += sol.iterations;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        LpStatus::Infeasible => Err(Error::Inconsistent("error program infeasible".into())),
        other => Err(Error::Solver(format!("{other:?}"))),
    }
}

pub(crate) fn min_yield_k(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    k_max: usize,
    k: usize,
    diag: &mut SolverDiagnostics,
) -> Result<f64> {
    minimize_var(yield_program(protocol, obs, k_max)?, k, diag)
}

/// `P_j^S = e^{-μ_j} μ_j · min ȳ_1` for every level.
pub fn min_single_photon(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize) -> Result<Vec<f64>> {
    let y1 = min_yield_k(protocol, obs, k_max, 1, &mut SolverDiagnostics::default())?;
    Ok(single_photon_probs(protocol, y1))
}

/// `P_j^D = e^{-μ_j} · min ȳ_0` for every level.
pub fn min_dark(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize) -> Result<Vec<f64>> {
    let y0 = min_yield_k(protocol, obs, k_max, 0, &mut SolverDiagnostics::default())?;
    Ok(dark_probs(protocol, y0))
}

pub(crate) fn single_photon_probs(protocol: &ProtocolSpec, y1: f64) -> Vec<f64> {
    protocol.levels.iter().map(|l| (-l.mu).exp() * l.mu * y1).collect()
}

pub(crate) fn dark_probs(protocol: &ProtocolSpec, y0: f64) -> Vec<f64> {
    protocol.levels.iter().map(|l| (-l.mu).exp() * y0).collect()
}

/// Joint yield/error program over `[ȳ_0..ȳ_{K-1}, c̄_0..c̄_{K-1}]`.
struct ErrorProgram {
    base: LpProblem,
    k_max: usize,
    /// Scale applied to the rows involving `c̄_1/ȳ_1`, close to `min ȳ_1`.
    ratio_scale: f64,
}

/// Smallest row scale; finer scales leave phase 1 badly conditioned.
const MIN_RATIO_SCALE: f64 = 1e-9;

impl ErrorProgram {
    fn new(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize, ratio_scale: f64) -> Result<Self> {
        check_inputs(protocol, obs, k_max)?;
        let ratio_scale = ratio_scale.max(MIN_RATIO_SCALE);
        let mut p = LpProblem::new(2 * k_max, Sense::Minimize);
        p.set_all_bounds(0.0, 1.0);
        for (level, b) in protocol.levels.iter().zip(&obs.levels) {
            let row = poisson_row(level.mu, k_max);
            add_level_row(&mut p, 0, &row, b.y_lo, b.y_hi);
            add_level_row(&mut p, k_max, &row, b.b_lo, b.b_hi);
        }
        for k in 0..k_max {
            let scale = if k == 1 { ratio_scale } else { 1.0 };
            let mut coeffs = vec![0.0; 2 * k_max];
            coeffs[k] = -1.0 / scale;
            coeffs[k_max + k] = 1.0 / scale;
            p.add_row(coeffs, f64::NEG_INFINITY, 0.0);
        }
        Ok(Self {
            base: p,
            k_max,
            ratio_scale,
        })
    }

    fn with_threshold(&self, t: f64) -> LpProblem {
        let mut p = self.base.clone();
        let mut coeffs = vec![0.0; 2 * self.k_max];
        coeffs[1] = -t / self.ratio_scale;
        coeffs[self.k_max + 1] = 1.0 / self.ratio_scale;
        p.add_row(coeffs, 0.0, f64::INFINITY);
        p
    }

    fn feasible_at(&self, t: f64, diag: &mut SolverDiagnostics) -> Result<bool> {
        diag.lp_solves += 1;
        lp::feasible(&self.with_threshold(t))
    }
}

fn max_b1_with(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    k_max: usize,
    diag: &mut SolverDiagnostics,
) -> Result<f64> {
    if !protocol.levels.iter().any(|l| l.mu > 0.0) {
        return Err(Error::domain("b1 bound needs a level with nonzero intensity"));
    }
    let plain = ErrorProgram::new(protocol, obs, k_max, 1.0)?;
    let y1_min = minimize_var(plain.base.clone(), 1, diag)?;
    if y1_min <= ZERO_YIELD {
        diag.b1_degenerate = true;
        return Ok(1.0);
    }
    let c1_max = maximize_var(plain.base, k_max + 1, diag)?;
    if c1_max <= 0.0 {
        return Ok(0.0);
    }
    let prog = ErrorProgram::new(protocol, obs, k_max, y1_min)?;
    let mut lo = 0.0;
    let mut hi = (c1_max / y1_min).min(1.0);
    if prog.feasible_at(hi, diag)? {
        return Ok(hi);
    }
    while hi - lo > B1_TOL {
        let mid = 0.5 * (lo + hi);
        diag.bisection_steps += 1;
        if prog.feasible_at(mid, diag)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Upper bound on the single-photon bit error rate `max c̄_1/ȳ_1`.
///
/// Returns 1 when a vanishing single-photon yield is consistent with the
/// observations, since the ratio is then unconstrained.
pub fn max_b1(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize) -> Result<f64> {
    max_b1_with(protocol, obs, k_max, &mut SolverDiagnostics::default())
}

/// Feasibility of `c̄_1 ≥ t·ȳ_1` within the joint program; nonincreasing in `t`.
pub fn b1_feasible(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize, t: f64) -> Result<bool> {
    let mut diag = SolverDiagnostics::default();
    let plain = ErrorProgram::new(protocol, obs, k_max, 1.0)?;
    let y1_min = minimize_var(plain.base, 1, &mut diag)?;
    if y1_min <= ZERO_YIELD {
        // ȳ_1 = c̄_1 = 0 satisfies the threshold row for every t
        return Ok(true);
    }
    let prog = ErrorProgram::new(protocol, obs, k_max, y1_min)?;
    prog.feasible_at(t, &mut diag)
}

/// All three programs for one protocol.
pub fn sps_bounds(protocol: &ProtocolSpec, obs: &ObservationBounds, k_max: usize) -> Result<SpsBounds> {
    let mut diag = SolverDiagnostics::default();
    let y1 = min_yield_k(protocol, obs, k_max, 1, &mut diag)?;
    let y0 = min_yield_k(protocol, obs, k_max, 0, &mut diag)?;
    let b1_max = max_b1_with(protocol, obs, k_max, &mut diag)?;
    Ok(SpsBounds {
        p_s: single_photon_probs(protocol, y1),
        p_d: dark_probs(protocol, y0),
        b1_max,
        diagnostics: diag,
    })
}

/// Observation intervals equal to exact infinite-statistics values, for tests
/// and what-if analysis.
pub fn exact_observations(yields: &[f64], errors: &[f64]) -> ObservationBounds {
    ObservationBounds {
        levels: yields
            .iter()
            .zip(errors)
            .map(|(&y, &e)| LevelBounds {
                y_lo: y,
                y_hi: y,
                b_lo: e,
                b_hi: e,
            })
            .collect(),
    }
}
