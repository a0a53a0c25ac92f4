//! Secret-key length from a tally and the decoy bounds.

use crate::error::{Error, Result};
use crate::model::{LevelRate, ProtocolSpec, RateReport, SessionTally, SpsBounds, SystemParams};
use crate::stats::h2;

/// Privacy-amplification inefficiency `1 + 1.53·b^-0.54·S^-0.44`.
pub fn f_pa(b1_max: f64, s_total: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&b1_max) {
        return Err(Error::domain(format!("b1_max = {b1_max} outside [0,1]")));
    }
    if b1_max == 0.0 {
        // the PA term vanishes in the limit; report the factor as 1
        return Ok(1.0);
    }
    if s_total.is_nan() || s_total <= 0.0 {
        return Err(Error::domain("f_pa needs a positive single-photon count"));
    }
    Ok(1.0 + 1.53 * b1_max.powf(-0.54) * s_total.powf(-0.44))
}

/// Error rate at which `f_pa(b, s_total)·H2(b)` peaks on `(0, 1/2]`.
///
/// The fitted factor falls with `b` while `H2` flattens near 1/2, so the
/// product has a single maximum a little below 1/2 (further below for
/// small `s_total`).
pub fn pa_peak(s_total: f64) -> f64 {
    let c = 1.53 * s_total.powf(-0.44);
    let g = |b: f64| (1.0 + c * b.powf(-0.54)) * h2(b).unwrap_or(0.0);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (1e-9, 0.5);
    for _ in 0..80 {
        let x1 = b - inv_phi * (b - a);
        let x2 = a + inv_phi * (b - a);
        if g(x1) < g(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    let mid = 0.5 * (a + b);
    if g(0.5) >= g(mid) {
        0.5
    } else {
        mid
    }
}

/// The error rate charged for privacy amplification: the worst case over
/// every true rate in `[0, b1_max]`.
pub fn pa_error_rate(b1_max: f64, s_total: f64) -> f64 {
    if b1_max <= 0.0 || !(s_total > 0.0) {
        return b1_max.clamp(0.0, 0.5);
    }
    b1_max.min(pa_peak(s_total))
}

/// Bits spent on privacy amplification for `s` single photons out of
/// `s_total`; zero when there are no single photons or no errors to hide.
pub fn pa_cost(s: f64, s_total: f64, b1_max: f64) -> Result<f64> {
    if b1_max == 0.0 || s_total <= 0.0 || s <= 0.0 {
        return Ok(0.0);
    }
    let b = pa_error_rate(b1_max, s_total);
    Ok(f_pa(b, s_total)? * s * h2(b)?)
}

pub fn key_length(
    tally: &SessionTally,
    sps: &SpsBounds,
    params: &SystemParams,
    protocol: &ProtocolSpec,
) -> Result<RateReport> {
    let n = protocol.len();
    if tally.levels.len() != n || sps.p_s.len() != n || sps.p_d.len() != n {
        return Err(Error::Dimension(format!(
            "protocol has {n} levels, tally {}, bounds {}/{}",
            tally.levels.len(),
            sps.p_s.len(),
            sps.p_d.len()
        )));
    }
    let bad = tally.violations();
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let b1 = sps.b1_max.clamp(0.0, 1.0);
    let mut warnings = Vec::new();
    let mut active = Vec::new();
    for j in protocol.key_levels() {
        let c = tally.levels[j];
        if c.n_received <= 0.0 {
            warnings.push(format!("key level {j} has no detections; skipped"));
            continue;
        }
        active.push(j);
    }
    let s_total: f64 = active.iter().map(|&j| tally.levels[j].n_sent * sps.p_s[j]).sum();
    let mut levels = Vec::with_capacity(active.len());
    for &j in &active {
        let c = tally.levels[j];
        let s = c.n_sent * sps.p_s[j];
        let d = c.n_sent * sps.p_d[j];
        let ber = c.n_errors / c.n_received;
        levels.push(LevelRate {
            level: j,
            s,
            d,
            ec_cost: params.f_ec * c.n_received * h2(ber.min(1.0))?,
            pa_cost: pa_cost(s, s_total, b1)?,
            ber: Some(ber),
        });
    }
    let raw: f64 = levels.iter().map(|l| l.s + l.d - l.ec_cost - l.pa_cost).sum();
    let key_length = raw.max(0.0);
    if raw <= 0.0 {
        warnings.push("no secret key can be certified".into());
    }
    let f = if s_total > 0.0 { f_pa(pa_error_rate(b1, s_total), s_total)? } else { 1.0 };
    Ok(RateReport {
        key_length,
        rate: key_length / params.n_total,
        levels,
        f_pa: f,
        b1_max: b1,
        raw_key_length: raw,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevelCounts;

    #[test]
    fn f_pa_values() {
        // (0.05, 1e6): 0.05^-0.54 = e^{0.54·ln 20}, 1e6^-0.44 = 10^-2.64
        let expect = 1.0 + 1.53 * (0.54 * 20f64.ln()).exp() * 10f64.powf(-2.64);
        assert!((f_pa(0.05, 1e6).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 1.01767).abs() < 1e-5);
        let expect = 1.0 + 1.53 * (0.54 * 100f64.ln()).exp() * 10f64.powf(-1.32);
        assert!((f_pa(0.01, 1e3).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 1.88042).abs() < 1e-5);
        assert_eq!(pa_cost(10.0, 10.0, 0.0).unwrap(), 0.0);
        assert!(f_pa(0.1, 0.0).is_err());
        assert!(f_pa(1.5, 10.0).is_err());
    }

    #[test]
    fn pa_cost_is_worst_case_below_the_bound() {
        for s in [1.0, 100.0, 1e4, 1e8] {
            let peak = pa_peak(s);
            assert!(peak > 0.2 && peak <= 0.5);
            let g = |b: f64| f_pa(b, s).unwrap() * h2(b).unwrap();
            for i in 1..500 {
                assert!(g(i as f64 / 1000.0) <= g(peak) + 1e-12);
            }
            assert_eq!(pa_cost(s, s, 1.0).unwrap(), pa_cost(s, s, 0.5).unwrap());
            let mut last = 0.0;
            for i in 1..=100 {
                let c = pa_cost(s, s, i as f64 / 100.0).unwrap();
                assert!(c >= last);
                last = c;
            }
        }
    }

    fn one_level() -> (SessionTally, SpsBounds, SystemParams, ProtocolSpec) {
        let protocol = ProtocolSpec::from_parts(&[0.5], &[1.0], &[0]);
        let params = SystemParams {
            n_total: 1e6,
            ..SystemParams::default()
        };
        let tally = SessionTally {
            levels: vec![LevelCounts {
                n_sent: 1e6,
                n_received: 1e4,
                n_errors: 100.0,
            }],
        };
        let sps = SpsBounds {
            p_s: vec![5e-3],
            p_d: vec![1e-5],
            b1_max: 0.02,
            diagnostics: Default::default(),
        };
        (tally, sps, params, protocol)
    }

    #[test]
    fn hand_computed_level() {
        let (tally, sps, params, protocol) = one_level();
        let r = key_length(&tally, &sps, &params, &protocol).unwrap();
        let s = 5e3;
        let ec = 1.2 * 1e4 * h2(0.01).unwrap();
        let pa = f_pa(0.02, s).unwrap() * s * h2(0.02).unwrap();
        let k = s + 10.0 - ec - pa;
        assert!((r.key_length - k).abs() < 1e-9 * k);
        assert_eq!(r.rate * params.n_total, r.key_length);
    }

    #[test]
    fn zero_bounds_give_zero() {
        let (tally, mut sps, params, protocol) = one_level();
        sps.p_s = vec![0.0];
        sps.p_d = vec![0.0];
        let r = key_length(&tally, &sps, &params, &protocol).unwrap();
        assert_eq!(r.key_length, 0.0);
        assert!(r.clamped());
    }

    #[test]
    fn doubling_f_ec_lowers_key() {
        let (tally, sps, mut params, protocol) = one_level();
        let a = key_length(&tally, &sps, &params, &protocol).unwrap();
        params.f_ec *= 2.0;
        let b = key_length(&tally, &sps, &params, &protocol).unwrap();
        assert!(b.raw_key_length < a.raw_key_length);
    }

    #[test]
    fn undetected_key_level_skipped() {
        let (mut tally, sps, params, protocol) = one_level();
        tally.levels[0].n_received = 0.0;
        tally.levels[0].n_errors = 0.0;
        let r = key_length(&tally, &sps, &params, &protocol).unwrap();
        assert_eq!(r.key_length, 0.0);
        assert!(r.levels.is_empty());
        assert!(r.warnings.iter().any(|w| w.contains("skipped")));
    }
}
