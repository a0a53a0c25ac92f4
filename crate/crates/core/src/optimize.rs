//! End-to-end rate evaluation and the protocol search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::sps_bounds;
use crate::channel::{expected_tally, ChannelModel};
use crate::error::{Error, Result};
use crate::model::{validate, ProtocolSpec, RateReport, SessionTally, SpsBounds, SystemParams};
use crate::rate::key_length;
use crate::stats::observation_bounds;

pub const MAX_INTENSITY: f64 = 2.0;

/// Everything the expectation-mode pipeline produces for one protocol.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub tally: SessionTally,
    pub sps: SpsBounds,
    pub report: RateReport,
}

pub fn evaluate(protocol: &ProtocolSpec, params: &SystemParams, channel: &ChannelModel) -> Result<Evaluation> {
    let bad = validate(protocol, params);
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let tally = expected_tally(protocol, params, channel);
    let obs = observation_bounds(&tally, params.epsilon)?;
    let sps = sps_bounds(protocol, &obs, params.k_max)?;
    let report = key_length(&tally, &sps, params, protocol)?;
    Ok(Evaluation { tally, sps, report })
}

pub fn rate_of(protocol: &ProtocolSpec, params: &SystemParams, channel: &ChannelModel) -> Result<f64> {
    Ok(evaluate(protocol, params, channel)?.report.rate)
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub starts: usize,
    pub max_evals: usize,
    /// Simplex diameter at which a start stops, in search coordinates.
    pub tol: f64,
    pub seed: u64,
    /// Optional first start, e.g. a previous optimum.
    pub initial: Option<ProtocolSpec>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_evals: 400,
            tol: 1e-4,
            seed: 0,
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub protocol: ProtocolSpec,
    pub rate: f64,
    pub evaluations: usize,
    /// Starts that stopped on the diameter criterion rather than the budget.
    pub converged_starts: usize,
}

/// Maps unconstrained coordinates to a protocol.
///
/// Intensities are nested: the top one is `2·σ(u_0)` and each lower one is a
/// sigmoid fraction of the next, so ordering is automatic. Probabilities are a
/// softmax with the last logit fixed at 0.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n_levels: usize,
    vacuum: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

impl Layout {
    fn new(n_levels: usize) -> Self {
        Self {
            n_levels,
            vacuum: n_levels >= 3,
        }
    }

    fn n_mu(&self) -> usize {
        self.n_levels - usize::from(self.vacuum)
    }

    fn dim(&self) -> usize {
        self.n_mu() + self.n_levels - 1
    }

    fn protocol(&self, x: &[f64]) -> ProtocolSpec {
        let n_mu = self.n_mu();
        // nonzero intensities, highest first
        let mut mus = Vec::with_capacity(self.n_levels);
        let mut top = MAX_INTENSITY;
        for &u in &x[..n_mu] {
            top *= sigmoid(u);
            mus.push(top);
        }
        if self.vacuum {
            mus.push(0.0);
        }
        mus.reverse();
        let mut logits: Vec<f64> = x[n_mu..].to_vec();
        logits.push(0.0);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut probs: Vec<f64> = w.iter().map(|v| v / total).collect();
        // make the sum exactly one for validation
        let rest: f64 = probs[..self.n_levels - 1].iter().sum();
        probs[self.n_levels - 1] = 1.0 - rest;
        let key: Vec<usize> = if self.n_levels >= 3 {
            vec![self.n_levels - 1]
        } else {
            (0..self.n_levels).collect()
        };
        ProtocolSpec::from_parts(&mus, &probs, &key)
    }

    fn coords(&self, protocol: &ProtocolSpec) -> Vec<f64> {
        let mus = protocol.intensities();
        let nonzero: Vec<f64> = mus[usize::from(self.vacuum)..].iter().rev().cloned().collect();
        let mut x = Vec::with_capacity(self.dim());
        let mut top = MAX_INTENSITY;
        for mu in nonzero {
            x.push(logit(mu / top));
            top = mu;
        }
        let probs: Vec<f64> = protocol.levels.iter().map(|l| l.probability.max(1e-12)).collect();
        let last = probs[self.n_levels - 1].ln();
        x.extend(probs[..self.n_levels - 1].iter().map(|p| p.ln() - last));
        x
    }
}

/// Score for protocols with no detections on a key level or a failed
/// evaluation.
const FLOOR: f64 = -10.0;

/// Objective: the rate where key is certifiable; elsewhere the (negative)
/// unclamped key length per key-level detection. The second branch does not
/// reward starving the key level, so searches near the cutoff climb towards
/// positive rates instead of collapsing the protocol.
fn objective(layout: &Layout, x: &[f64], params: &SystemParams, channel: &ChannelModel) -> f64 {
    let protocol = layout.protocol(x);
    if protocol.intensities().windows(2).any(|w| w[1] <= w[0]) {
        return FLOOR;
    }
    let Ok(e) = evaluate(&protocol, params, channel) else {
        return FLOOR;
    };
    let detections: f64 = protocol.key_levels().map(|j| e.tally.levels[j].n_received).sum();
    if e.report.raw_key_length > 0.0 {
        e.report.raw_key_length / params.n_total
    } else if detections > 0.0 {
        (e.report.raw_key_length / detections).max(FLOOR)
    } else {
        FLOOR
    }
}

struct StartResult {
    x: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// Nelder–Mead maximization followed by one coordinate-refinement sweep.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> StartResult {
    let n = x0.len();
    let mut evals = 0;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        -f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&item.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = eval(&x, &mut evals);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut x, mut v) = simplex.swap_remove(0);

    let mut h = 0.05;
    while h > tol {
        let mut improved = false;
        for i in 0..n {
            for dir in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += dir * h;
                let fy = eval(&y, &mut evals);
                if fy < v {
                    x = y;
                    v = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.25;
        }
    }
    StartResult {
        x,
        value: -v,
        evals,
        converged,
    }
}

fn default_start(n_levels: usize) -> ProtocolSpec {
    match n_levels {
        1 => ProtocolSpec::from_parts(&[0.5], &[1.0], &[0]),
        2 => ProtocolSpec::from_parts(&[0.1, 0.6], &[0.2, 0.8], &[0, 1]),
        3 => ProtocolSpec::three_level(0.1, 0.6, 0.05, 0.1, 0.85),
        _ => ProtocolSpec::from_parts(&[0.0, 0.1, 0.45, 0.7], &[0.05, 0.1, 0.25, 0.6], &[3]),
    }
}

/// Multi-start search for the protocol maximizing the rate.
///
/// The first start is `options.initial` (or a fixed typical protocol); the
/// others are drawn from a seeded generator, so results depend only on the
/// options. Ties go to the lexicographically smaller intensity vector.
pub fn optimize_protocol(
    params: &SystemParams,
    channel: &ChannelModel,
    n_levels: usize,
    options: &SearchOptions,
) -> Result<SearchResult> {
    if !(1..=4).contains(&n_levels) {
        return Err(Error::domain(format!("n_levels = {n_levels}, expected 1..=4")));
    }
    let layout = Layout::new(n_levels);
    let mut starts = Vec::with_capacity(options.starts.max(1));
    let first = match &options.initial {
        Some(p) if p.len() == n_levels => p.clone(),
        _ => default_start(n_levels),
    };
    starts.push(layout.coords(&first));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    while starts.len() < options.starts.max(1) {
        let x: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
        starts.push(x);
    }
    let f = |x: &[f64]| objective(&layout, x, params, channel);
    let results: Vec<StartResult> = starts
        .par_iter()
        .map(|x0| nelder_mead(&f, x0, 0.5, options.max_evals, options.tol))
        .collect();
    let evaluations = results.iter().map(|r| r.evals).sum();
    let converged_starts = results.iter().filter(|r| r.converged).count();
    let best = results
        .into_iter()
        .filter(|r| r.value.is_finite())
        .map(|r| (layout.protocol(&r.x), r.value))
        .reduce(|a, b| {
            let better = b.1 > a.1 || (b.1 == a.1 && b.0.intensities() < a.0.intensities());
            if better {
                b
            } else {
                a
            }
        });
    let (protocol, _) = best.ok_or_else(|| Error::Solver("every start failed to evaluate".into()))?;
    let rate = rate_of(&protocol, params, channel)?;
    Ok(SearchResult {
        protocol,
        rate,
        evaluations,
        converged_starts,
    })
}
