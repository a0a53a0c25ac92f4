//! Decoy levels that an eavesdropper can partly tell apart.
//!
//! A level whose k-photon pulses are indistinguishable from the key level
//! with probability `Q_{j,k}` gets its own yields `ȳ_{j,k}`, tied to the
//! common yields `y_k` by `y_k ≥ Q·ȳ_{j,k}` and `1 − y_k ≥ Q·(1 − ȳ_{j,k})`.
//! Levels with an all-ones row use the common yields directly, so `Q ≡ 1`
//! reproduces the standard program exactly.

use crate::bounds::{add_level_row, max_b1, minimize_var, poisson_row};
use crate::channel::{expected_tally, ChannelModel};
use crate::error::{Error, Result};
use crate::lp::{LpProblem, Sense};
use crate::model::{ObservationBounds, ProtocolSpec, RateReport, SessionTally, SolverDiagnostics, SpsBounds, SystemParams};
use crate::rate::key_length;
use crate::stats::{binomial_lower_count, bound_upper, observation_bounds};

/// Indistinguishability of the low level in the single-extra-laser example.
pub fn q_four_laser(k: usize) -> f64 {
    match k {
        0 | 1 => 1.0,
        2 => 0.75,
        _ => 0.5f64.powi(k as i32 - 2),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishabilityMatrix {
    /// `rows[j][k]` for level `j`, photon number `k`.
    pub rows: Vec<Vec<f64>>,
}

impl DistinguishabilityMatrix {
    pub fn constant(n_levels: usize, k_max: usize, q: f64) -> Self {
        Self {
            rows: vec![vec![q; k_max]; n_levels],
        }
    }

    /// Rows from the levels' `q_row`, all ones where absent.
    pub fn from_protocol(protocol: &ProtocolSpec, k_max: usize) -> Self {
        Self {
            rows: protocol
                .levels
                .iter()
                .map(|l| l.q_row.clone().unwrap_or_else(|| vec![1.0; k_max]))
                .collect(),
        }
    }

    /// The four-laser example: every nonvacuum level that carries no key
    /// uses [`q_four_laser`]; the rest are indistinguishable.
    pub fn four_laser(protocol: &ProtocolSpec, k_max: usize) -> Self {
        Self {
            rows: protocol
                .levels
                .iter()
                .map(|l| {
                    if l.mu > 0.0 && !l.encodes_key {
                        (0..k_max).map(q_four_laser).collect()
                    } else {
                        vec![1.0; k_max]
                    }
                })
                .collect(),
        }
    }

    pub fn is_all_ones(&self, k_max: usize) -> bool {
        self.rows.iter().all(|r| r.iter().take(k_max).all(|&q| q == 1.0))
    }

    fn check(&self, n_levels: usize, k_max: usize) -> Result<()> {
        if self.rows.len() != n_levels {
            return Err(Error::Dimension(format!("{} Q rows for {n_levels} levels", self.rows.len())));
        }
        for (j, r) in self.rows.iter().enumerate() {
            if r.len() < k_max {
                return Err(Error::Dimension(format!("Q row {j} has {} entries, k_max is {k_max}", r.len())));
            }
            if r.iter().any(|q| !(0.0..=1.0).contains(q)) {
                return Err(Error::domain(format!("Q row {j} has entries outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Program over `[y_0..y_{K-1}, private blocks...]` and, per level, the
/// offset of the yields it sees.
fn build(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    q: &DistinguishabilityMatrix,
    k_max: usize,
) -> Result<(LpProblem, Vec<usize>)> {
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
    q.check(protocol.len(), k_max)?;
    let mut offsets = Vec::with_capacity(protocol.len());
    let mut next = k_max;
    for row in &q.rows {
        if row[..k_max].iter().all(|&v| v == 1.0) {
            offsets.push(0);
        } else {
            offsets.push(next);
            next += k_max;
        }
    }
    let mut p = LpProblem::new(next, Sense::Minimize);
    p.set_all_bounds(0.0, 1.0);
    for ((level, b), &off) in protocol.levels.iter().zip(&obs.levels).zip(&offsets) {
        add_level_row(&mut p, off, &poisson_row(level.mu, k_max), b.y_lo, b.y_hi);
    }
    for (row, &off) in q.rows.iter().zip(&offsets) {
        if off == 0 {
            continue;
        }
        for (k, &qk) in row[..k_max].iter().enumerate() {
            if qk == 0.0 {
                continue;
            }
            let mut coeffs = vec![0.0; next];
            coeffs[k] = 1.0;
            coeffs[off + k] = -qk;
            p.add_row(coeffs, 0.0, 1.0 - qk);
        }
    }
    Ok((p, offsets))
}

/// Lower bounds `P_j^S` and `P_j^D`, each level minimizing its own
/// single-photon and vacuum yields. `b1_max` is left at 1.
pub fn min_single_photon_distinguishable(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    q: &DistinguishabilityMatrix,
    k_max: usize,
) -> Result<SpsBounds> {
    let (problem, offsets) = build(protocol, obs, q, k_max)?;
    let mut diag = SolverDiagnostics::default();
    let mut cache: Vec<(usize, f64)> = Vec::new();
    let mut min_of = |var: usize, diag: &mut SolverDiagnostics| -> Result<f64> {
        if let Some(&(_, v)) = cache.iter().find(|(i, _)| *i == var) {
            return Ok(v);
        }
        let v = minimize_var(problem.clone(), var, diag)?;
        cache.push((var, v));
        Ok(v)
    };
    let mut p_s = Vec::with_capacity(protocol.len());
    let mut p_d = Vec::with_capacity(protocol.len());
    for (level, &off) in protocol.levels.iter().zip(&offsets) {
        let y1 = min_of(off + 1, &mut diag)?;
        let y0 = min_of(off, &mut diag)?;
        p_s.push((-level.mu).exp() * level.mu * y1);
        p_d.push((-level.mu).exp() * y0);
    }
    Ok(SpsBounds {
        p_s,
        p_d,
        b1_max: 1.0,
        diagnostics: diag,
    })
}

/// Errors observed on key levels, at their upper confidence limit.
fn key_errors_upper(tally: &SessionTally, protocol: &ProtocolSpec, eps: f64) -> Result<f64> {
    protocol
        .key_levels()
        .map(|j| {
            let c = tally.levels[j];
            if c.n_sent <= 0.0 {
                return Ok(0.0);
            }
            Ok(c.n_sent * bound_upper(c.n_errors, c.n_sent, eps)?)
        })
        .sum()
}

fn key_sum(tally: &SessionTally, protocol: &ProtocolSpec, per_signal: &[f64]) -> f64 {
    protocol.key_levels().map(|j| tally.levels[j].n_sent * per_signal[j]).sum()
}

/// `E⁺/S⁻`: every observed error attributed to single photons.
pub fn b1_worst_case(tally: &SessionTally, sps: &SpsBounds, params: &SystemParams, protocol: &ProtocolSpec) -> Result<f64> {
    let s = key_sum(tally, protocol, &sps.p_s);
    if s <= 0.0 {
        return Ok(1.0);
    }
    Ok((key_errors_upper(tally, protocol, params.epsilon)? / s).clamp(0.0, 1.0))
}

/// Single-photon error bound after removing the errors that dark counts
/// must have produced: at least the lower `ε` quantile of
/// `Binomial(D⁻, 1/2)` of them.
pub fn b1_via_dark_subtraction(
    tally: &SessionTally,
    sps: &SpsBounds,
    params: &SystemParams,
    protocol: &ProtocolSpec,
) -> Result<f64> {
    if tally.levels.len() != protocol.len() || sps.p_s.len() != protocol.len() {
        return Err(Error::Dimension("tally, bounds and protocol disagree on level count".into()));
    }
    let s = key_sum(tally, protocol, &sps.p_s);
    if s <= 0.0 {
        return Ok(1.0);
    }
    let e_hi = key_errors_upper(tally, protocol, params.epsilon)?;
    let d = key_sum(tally, protocol, &sps.p_d);
    let dark_errors = binomial_lower_count(d, 0.5, params.epsilon)?;
    Ok(((e_hi - dark_errors) / s).clamp(0.0, 1.0))
}

/// Bounds for a tally under partial distinguishability. The error-rate
/// program needs common error yields across levels, so it is used only when
/// every level is indistinguishable; otherwise dark subtraction applies.
pub fn bounds_distinguishable(
    tally: &SessionTally,
    protocol: &ProtocolSpec,
    params: &SystemParams,
    q: &DistinguishabilityMatrix,
) -> Result<SpsBounds> {
    let obs = observation_bounds(tally, params.epsilon)?;
    let mut sps = min_single_photon_distinguishable(protocol, &obs, q, params.k_max)?;
    sps.b1_max = if q.is_all_ones(params.k_max) {
        max_b1(protocol, &obs, params.k_max)?
    } else {
        b1_via_dark_subtraction(tally, &sps, params, protocol)?
    };
    Ok(sps)
}

pub fn rate_distinguishable(
    protocol: &ProtocolSpec,
    params: &SystemParams,
    channel: &ChannelModel,
    q: &DistinguishabilityMatrix,
) -> Result<RateReport> {
    let tally = expected_tally(protocol, params, channel);
    let sps = bounds_distinguishable(&tally, protocol, params, q)?;
    key_length(&tally, &sps, params, protocol)
}
