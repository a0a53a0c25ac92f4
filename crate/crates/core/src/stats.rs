//! One-sided binomial confidence bounds and the binary entropy.
//!
//! The bounds are exact Clopper-Pearson limits obtained by inverting the
//! regularized incomplete beta function. "Successes" may be fractional so
//! that expectation-mode tallies can be bounded with the same formulas.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{LevelBounds, ObservationBounds, SessionTally};

const CF_MAX_ITER: usize = 200_000;
const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
/// Bisection stops once the bracket is narrower than this, relative to the
/// bracket's upper end (and never wider than this in absolute terms).
const INVERSE_TOL: f64 = 1e-12;
const STIRLING_MIN: f64 = 15.0;

/// Binary Shannon entropy in bits.
pub fn h2(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("h2 argument {x} outside [0,1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

// lnΓ(x) − [(x − ½)ln x − x + ½ln 2π] for x ≥ 15.
fn stirling_correction(x: f64) -> f64 {
    let x2 = x * x;
    (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * x2)) / x2) / x2) / x
}

// lnΓ(x) − lnΓ(x + a) for large x, without cancelling two huge numbers.
fn ln_gamma_ratio_large(x: f64, a: f64) -> f64 {
    let xa = x + a;
    -a * xa.ln() - (x - 0.5) * (a / x).ln_1p() + a + stirling_correction(x) - stirling_correction(xa)
}

/// ln B(a, b), accurate for arguments up to ~1e15.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    if large < STIRLING_MIN {
        ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
    } else if small < STIRLING_MIN {
        ln_gamma(small) + ln_gamma_ratio_large(large, small)
    } else {
        let sum = a + b;
        0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * sum.ln()
            + (a - 0.5) * (-(b / a).ln_1p())
            + (b - 0.5) * (-(a / b).ln_1p())
            + stirling_correction(a)
            + stirling_correction(b)
            - stirling_correction(sum)
    }
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let clamp = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / clamp(1.0 + aa * d);
        c = clamp(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::domain(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

/// Regularized incomplete beta `I_x(a, b)` together with its complement
/// `1 − I_x(a, b)`, each computed without cancellation.
pub fn beta_reg_pair(a: f64, b: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("incomplete beta at a={a}, b={b}, x={x}")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x == 1.0 {
        return Ok((1.0, 0.0));
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        let v = (ln_front.exp() * beta_cf(a, b, x)? / a).clamp(0.0, 1.0);
        Ok((v, 1.0 - v))
    } else {
        let w = (ln_front.exp() * beta_cf(b, a, 1.0 - x)? / b).clamp(0.0, 1.0);
        Ok((1.0 - w, w))
    }
}

pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    beta_reg_pair(a, b, x).map(|p| p.0)
}

fn check_counts(s: f64, t: f64, eps: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("trials must be positive, got {t}")));
    }
    if !(s >= 0.0 && s <= t) {
        return Err(Error::domain(format!("successes {s} outside [0, {t}]")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("epsilon {eps} outside (0,1)")));
    }
    Ok(())
}

// Root of a monotone function on [lo, hi]; `below(p)` is true left of the root.
fn bisect(mut lo: f64, mut hi: f64, mut below: impl FnMut(f64) -> Result<bool>) -> Result<(f64, f64)> {
    for _ in 0..400 {
        if hi - lo <= INVERSE_TOL * hi.min(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Largest `p` with `Pr[Binomial(t, p) ≥ s] ≤ eps` (one-sided lower limit).
pub fn bound_lower(s: f64, t: f64, eps: f64) -> Result<f64> {
    check_counts(s, t, eps)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    let b = t - s + 1.0;
    let (lo, _) = bisect(0.0, 1.0, |p| Ok(beta_reg_pair(s, b, p)?.0 < eps))?;
    Ok(lo.min(s / t))
}

/// Smallest `p` with `Pr[Binomial(t, p) ≤ s] ≤ eps` (one-sided upper limit).
pub fn bound_upper(s: f64, t: f64, eps: f64) -> Result<f64> {
    check_counts(s, t, eps)?;
    if s == t {
        return Ok(1.0);
    }
    let a = s + 1.0;
    let b = t - s;
    let (_, hi) = bisect(0.0, 1.0, |p| Ok(beta_reg_pair(a, b, p)?.1 > eps))?;
    Ok(hi.max(s / t))
}

/// Largest `x` such that `Pr[Binomial(n, p) ≤ x] ≤ eps`, extended to
/// real-valued `n` and `x`; returns 0 when even `x = 0` is too likely.
pub fn binomial_lower_count(n: f64, p: f64, eps: f64) -> Result<f64> {
    if !(n >= 0.0) || !(0.0..=1.0).contains(&p) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("binomial quantile at n={n}, p={p}, eps={eps}")));
    }
    if n == 0.0 || p == 0.0 {
        return Ok(0.0);
    }
    // Pr[X ≤ x] = I_{1-p}(n - x, x + 1)
    let cdf = |x: f64| -> Result<f64> {
        if x >= n {
            return Ok(1.0);
        }
        beta_reg(n - x, x + 1.0, 1.0 - p)
    };
    if cdf(0.0)? > eps {
        return Ok(0.0);
    }
    let (lo, _) = bisect(0.0, n, |x| Ok(cdf(x)? <= eps))?;
    Ok(lo)
}

/// Confidence intervals on every level's yield `C_j/N_j` and error
/// probability `E_j/N_j`. A level with no signals sent gets vacuous bounds.
pub fn observation_bounds(tally: &SessionTally, eps: f64) -> Result<ObservationBounds> {
    if let Some(v) = tally.violations().into_iter().next() {
        return Err(Error::Invalid(vec![v]));
    }
    let levels = tally
        .levels
        .iter()
        .map(|c| {
            if c.n_sent <= 0.0 {
                return Ok(LevelBounds::VACUOUS);
            }
            Ok(LevelBounds {
                y_lo: bound_lower(c.n_received, c.n_sent, eps)?,
                y_hi: bound_upper(c.n_received, c.n_sent, eps)?,
                b_lo: bound_lower(c.n_errors, c.n_sent, eps)?,
                b_hi: bound_upper(c.n_errors, c.n_sent, eps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationBounds { levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevelCounts;

    // Exact upper binomial tail Pr[X ≥ s] by summing the pmf in log space.
    fn upper_tail(s: u64, t: u64, p: f64) -> f64 {
        (s..=t)
            .map(|k| {
                let ln_choose = ln_gamma(t as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((t - k) as f64 + 1.0);
                (ln_choose + k as f64 * p.ln() + (t - k) as f64 * (1.0 - p).ln()).exp()
            })
            .sum()
    }

    // Independent oracle: bisection on the exact tail sum.
    fn oracle_lower(s: u64, t: u64, eps: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if upper_tail(s, t, mid) < eps {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }

    fn oracle_upper(s: u64, t: u64, eps: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            // Pr[X ≤ s] = 1 - Pr[X ≥ s + 1]
            if 1.0 - upper_tail(s + 1, t, mid) > eps {
                lo = mid
            } else {
                hi = mid
            }
        }
        hi
    }

    #[test]
    fn entropy_values() {
        assert_eq!(h2(0.0).unwrap(), 0.0);
        assert!((h2(0.5).unwrap() - 1.0).abs() < 1e-15);
        // series: h(1/2 - d) = 1 - (1/(2 ln2)) Σ (2d)^{2n} / (n(2n-1))
        let d: f64 = 0.5 - 0.11;
        let series: f64 = (1..200)
            .map(|n| {
                let n = n as f64;
                (2.0 * d).powf(2.0 * n) / (n * (2.0 * n - 1.0))
            })
            .sum::<f64>();
        let expected = 1.0 - series / (2.0 * std::f64::consts::LN_2);
        assert!((h2(0.11).unwrap() - expected).abs() < 1e-12);
        assert!((h2(0.11).unwrap() - 0.499916).abs() < 1e-6);
        assert!(h2(1.5).is_err());
        assert!(h2(-0.1).is_err());
    }

    #[test]
    fn ln_beta_branches_agree() {
        for &(a, b) in &[(20.0, 30.0), (3.5, 40.0), (16.0, 15.5), (100.0, 1e6)] {
            let direct = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            assert!((ln_beta(a, b) - direct).abs() < 1e-9 * direct.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn beta_reg_known_values() {
        assert!((beta_reg(1.0, 1.0, 0.3).unwrap() - 0.3).abs() < 1e-14);
        // I_x(1, b) = 1 - (1-x)^b
        assert!((beta_reg(1.0, 10.0, 0.2).unwrap() - (1.0 - 0.8f64.powi(10))).abs() < 1e-14);
        // I_x(a, 1) = x^a
        assert!((beta_reg(7.0, 1.0, 0.9).unwrap() - 0.9f64.powi(7)).abs() < 1e-13);
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(bound_lower(0.0, 100.0, 1e-7).unwrap(), 0.0);
        let o = oracle_lower(5, 10, 0.05);
        assert!((o - 0.2224).abs() < 1e-4);
        assert!((bound_lower(5.0, 10.0, 0.05).unwrap() - o).abs() < 1e-10);
        let o = oracle_lower(10, 10, 0.05);
        assert!((o - 0.7411).abs() < 1e-4);
        assert!((bound_lower(10.0, 10.0, 0.05).unwrap() - o).abs() < 1e-10);
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(bound_upper(100.0, 100.0, 1e-7).unwrap(), 1.0);
        let o = oracle_upper(5, 10, 0.05);
        assert!((o - 0.7776).abs() < 1e-4);
        assert!((bound_upper(5.0, 10.0, 0.05).unwrap() - o).abs() < 1e-10);
        let closed = 1.0 - 0.05f64.powf(0.1);
        assert!((bound_upper(0.0, 10.0, 0.05).unwrap() - closed).abs() < 1e-11);
    }

    #[test]
    fn oracle_agreement_on_grid() {
        for &(s, t) in &[(1u64, 7u64), (3, 40), (17, 60), (59, 60), (120, 300)] {
            for &eps in &[0.2, 0.05, 1e-4] {
                let lo = bound_lower(s as f64, t as f64, eps).unwrap();
                let hi = bound_upper(s as f64, t as f64, eps).unwrap();
                assert!((lo - oracle_lower(s, t, eps)).abs() < 1e-9, "{s}/{t} {eps}");
                assert!((hi - oracle_upper(s, t, eps)).abs() < 1e-9, "{s}/{t} {eps}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(bound_lower(5.0, 4.0, 0.1).is_err());
        assert!(bound_lower(1.0, 0.0, 0.1).is_err());
        assert!(bound_upper(1.0, 4.0, 0.0).is_err());
        assert!(bound_upper(-1.0, 4.0, 0.5).is_err());
    }

    #[test]
    fn large_counts_bracket_mean() {
        let n = 1e10 * 0.9625;
        let c = n * (1.0 - (-0.655e-3f64).exp()) * 0.5;
        let lo = bound_lower(c, n, 1e-7).unwrap();
        let hi = bound_upper(c, n, 1e-7).unwrap();
        let p = c / n;
        assert!(lo < p && p < hi);
        // about 5.2 standard deviations on either side
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!(((p - lo) / sigma - 5.2).abs() < 0.3, "{}", (p - lo) / sigma);
        assert!(((hi - p) / sigma - 5.2).abs() < 0.3);
    }

    #[test]
    fn fractional_successes_interpolate() {
        let a = bound_lower(4.0, 10.0, 0.05).unwrap();
        let b = bound_lower(4.5, 10.0, 0.05).unwrap();
        let c = bound_lower(5.0, 10.0, 0.05).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn dark_error_quantile() {
        assert_eq!(binomial_lower_count(0.0, 0.5, 0.05).unwrap(), 0.0);
        // n = 3: Pr[X ≤ 0] = 1/8 > 0.05
        assert_eq!(binomial_lower_count(3.0, 0.5, 0.05).unwrap(), 0.0);
        let n = 1e4;
        let x = binomial_lower_count(n, 0.5, 1e-7).unwrap();
        assert!(x < n / 2.0 && x > n / 2.0 - 6.0 * 50.0);
        let cdf = beta_reg(n - x, x + 1.0, 0.5).unwrap();
        assert!((cdf - 1e-7).abs() < 1e-9);
    }

    #[test]
    fn observation_bounds_cases() {
        let tally = SessionTally {
            levels: vec![
                LevelCounts { n_sent: 1000.0, n_received: 500.0, n_errors: 0.0 },
                LevelCounts { n_sent: 100000.0, n_received: 50000.0, n_errors: 10.0 },
            ],
        };
        let obs = observation_bounds(&tally, 1e-3).unwrap();
        let (a, b) = (obs.levels[0], obs.levels[1]);
        assert!(a.y_lo < 0.5 && 0.5 < a.y_hi);
        assert!(b.y_lo < 0.5 && 0.5 < b.y_hi);
        assert!(b.y_hi - b.y_lo < a.y_hi - a.y_lo);
        assert_eq!(a.b_lo, 0.0);
        assert_eq!(obs.bound_applications(), 8);
    }
}
