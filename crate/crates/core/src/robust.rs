//! Worst-case bounds when the prepared intensities are only known to within
//! a relative uncertainty. The observations stay fixed; only the program
//! coefficients move.

use rayon::prelude::*;

use crate::bounds::sps_bounds;
use crate::channel::{expected_tally, ChannelModel};
use crate::error::{Error, Result};
use crate::model::{ObservationBounds, ProtocolSpec, RateReport, SolverDiagnostics, SpsBounds, SystemParams};
use crate::rate::key_length;
use crate::stats::observation_bounds;

/// Bounds with every nonzero intensity multiplied by its factor. The
/// prefactors `e^{-μ}μ` and `e^{-μ}` use the scaled intensities too.
pub fn bounds_at_factors(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    params: &SystemParams,
    factors: &[f64],
) -> Result<SpsBounds> {
    let nonzero = nonzero_levels(protocol);
    if factors.len() != nonzero.len() {
        return Err(Error::Dimension(format!(
            "{} factors for {} nonzero levels",
            factors.len(),
            nonzero.len()
        )));
    }
    let mut mus = protocol.intensities();
    for (&j, f) in nonzero.iter().zip(factors) {
        mus[j] *= f;
    }
    sps_bounds(&protocol.with_intensities(&mus), obs, params.k_max)
}

fn nonzero_levels(protocol: &ProtocolSpec) -> Vec<usize> {
    (0..protocol.len()).filter(|&j| protocol.levels[j].mu > 0.0).collect()
}

/// Worst case over all `(1 ± U_j)` corners, one `U_j` per level (entries for
/// vacuum levels are ignored).
pub fn bounds_under_uncertainty_per_level(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    params: &SystemParams,
    u: &[f64],
) -> Result<SpsBounds> {
    if u.len() != protocol.len() {
        return Err(Error::Dimension(format!("{} uncertainties for {} levels", u.len(), protocol.len())));
    }
    if u.iter().any(|x| !(0.0..1.0).contains(x)) {
        return Err(Error::domain("intensity uncertainty must lie in [0,1)"));
    }
    let nonzero = nonzero_levels(protocol);
    let corners: Vec<Vec<f64>> = (0..1usize << nonzero.len())
        .map(|mask| {
            nonzero
                .iter()
                .enumerate()
                .map(|(i, &j)| if mask >> i & 1 == 1 { 1.0 + u[j] } else { 1.0 - u[j] })
                .collect()
        })
        .collect();
    let results: Vec<Result<SpsBounds>> = corners
        .par_iter()
        .map(|f| {
            bounds_at_factors(protocol, obs, params, f).map_err(|e| match e {
                Error::Inconsistent(m) => Error::Inconsistent(format!("{m} (intensity factors {f:?})")),
                other => other,
            })
        })
        .collect();
    let mut worst: Option<SpsBounds> = None;
    let mut diag = SolverDiagnostics::default();
    for r in results {
        let b = r?;
        diag.merge(&b.diagnostics);
        worst = Some(match worst {
            None => b,
            Some(w) => SpsBounds {
                p_s: w.p_s.iter().zip(&b.p_s).map(|(a, c)| a.min(*c)).collect(),
                p_d: w.p_d.iter().zip(&b.p_d).map(|(a, c)| a.min(*c)).collect(),
                b1_max: w.b1_max.max(b.b1_max),
                diagnostics: SolverDiagnostics::default(),
            },
        });
    }
    let mut out = worst.expect("at least one corner");
    out.diagnostics = diag;
    Ok(out)
}

pub fn bounds_under_uncertainty(
    protocol: &ProtocolSpec,
    obs: &ObservationBounds,
    params: &SystemParams,
    u: f64,
) -> Result<SpsBounds> {
    bounds_under_uncertainty_per_level(protocol, obs, params, &vec![u; protocol.len()])
}

/// Expectation-mode rate with the session run at the true intensities and
/// analysed with uncertainty `u`.
pub fn rate_under_uncertainty(
    protocol: &ProtocolSpec,
    params: &SystemParams,
    channel: &ChannelModel,
    u: f64,
) -> Result<RateReport> {
    let tally = expected_tally(protocol, params, channel);
    let obs = observation_bounds(&tally, params.epsilon)?;
    let sps = bounds_under_uncertainty(protocol, &obs, params, u)?;
    key_length(&tally, &sps, params, protocol)
}
