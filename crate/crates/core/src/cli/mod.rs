//! Command implementations behind the `decoykit` binary. Each command takes
//! parsed inputs and returns the text to print, so the binary only handles
//! files, flags and exit codes.

pub mod config;

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::bounds::sps_bounds;
use crate::channel::{expected_tally, sample_tally, ChannelModel, PRESETS};
use crate::distinguish::{bounds_distinguishable, DistinguishabilityMatrix};
use crate::error::{Error, Result};
use crate::model::{validate, ProtocolSpec, RateReport, SessionTally, SpsBounds, SystemParams};
use crate::optimize::{optimize_protocol, SearchOptions};
use crate::rate::key_length;
use crate::robust::bounds_under_uncertainty;
use crate::stats::observation_bounds;

pub use config::{parse_tally, render_tally, Config};

/// Exit status for a completed analysis.
pub fn exit_code(report: &RateReport) -> i32 {
    if report.key_length > 0.0 {
        0
    } else {
        2
    }
}

/// The distinguishability matrix the configuration asks for, if any.
pub fn q_matrix(cfg: &Config) -> Result<Option<DistinguishabilityMatrix>> {
    let k_max = cfg.params.k_max;
    match cfg.q_preset.as_deref() {
        Some("four-laser") => Ok(Some(DistinguishabilityMatrix::four_laser(&cfg.protocol, k_max))),
        Some("none") => Ok(None),
        Some(other) => Err(Error::domain(format!("unknown Q preset `{other}`"))),
        None if cfg.protocol.levels.iter().any(|l| l.q_row.is_some()) => {
            Ok(Some(DistinguishabilityMatrix::from_protocol(&cfg.protocol, k_max)))
        }
        None => Ok(None),
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub sps: SpsBounds,
    pub report: RateReport,
    pub bound_applications: usize,
}

/// Bounds and key length for a tally, choosing the standard, uncertain
/// intensity or partially distinguishable programs from the configuration.
pub fn analyze(cfg: &Config, tally: &SessionTally) -> Result<Analysis> {
    let bad = validate(&cfg.protocol, &cfg.params);
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    if tally.levels.len() != cfg.protocol.len() {
        return Err(Error::Dimension(format!(
            "tally has {} levels, configuration {}",
            tally.levels.len(),
            cfg.protocol.len()
        )));
    }
    let params = &cfg.params;
    let obs = observation_bounds(tally, params.epsilon)?;
    let q = q_matrix(cfg)?;
    let sps = match (&q, cfg.intensity_uncertainty) {
        (Some(_), u) if u > 0.0 => {
            return Err(Error::domain(
                "intensity uncertainty and partial distinguishability cannot be combined",
            ))
        }
        (Some(q), _) => bounds_distinguishable(tally, &cfg.protocol, params, q)?,
        (None, u) if u > 0.0 => bounds_under_uncertainty(&cfg.protocol, &obs, params, u)?,
        (None, _) => sps_bounds(&cfg.protocol, &obs, params.k_max)?,
    };
    let report = key_length(tally, &sps, params, &cfg.protocol)?;
    Ok(Analysis {
        sps,
        report,
        bound_applications: obs.bound_applications(),
    })
}

/// `cfg` with the session length taken from the tally, so that `R = K/N`
/// refers to the signals actually counted.
pub fn with_tally_length(cfg: &Config, tally: &SessionTally) -> Config {
    let mut out = cfg.clone();
    let n = tally.total_sent();
    if n > 0.0 {
        out.params.n_total = n;
    }
    out
}

pub fn render_analysis(a: &Analysis) -> String {
    let r = &a.report;
    let mut s = String::new();
    let _ = writeln!(s, "key_length = {}", r.key_length);
    let _ = writeln!(s, "rate = {}", r.rate);
    let _ = writeln!(s, "raw_key_length = {}", r.raw_key_length);
    let _ = writeln!(s, "b1_max = {}", r.b1_max);
    let _ = writeln!(s, "f_pa = {}", r.f_pa);
    let _ = writeln!(s, "bound_applications = {}", a.bound_applications);
    for (j, (ps, pd)) in a.sps.p_s.iter().zip(&a.sps.p_d).enumerate() {
        let _ = writeln!(s, "level.{j}.P_S = {ps}");
        let _ = writeln!(s, "level.{j}.P_D = {pd}");
    }
    for l in &r.levels {
        let j = l.level;
        let _ = writeln!(s, "level.{j}.S = {}", l.s);
        let _ = writeln!(s, "level.{j}.D = {}", l.d);
        let _ = writeln!(s, "level.{j}.ec_cost = {}", l.ec_cost);
        let _ = writeln!(s, "level.{j}.pa_cost = {}", l.pa_cost);
        if let Some(b) = l.ber {
            let _ = writeln!(s, "level.{j}.ber = {b}");
        }
    }
    let d = &a.sps.diagnostics;
    let _ = writeln!(s, "# lp_solves = {}, simplex_iterations = {}", d.lp_solves, d.simplex_iterations);
    for w in &r.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    s
}

pub fn cmd_rate(cfg: &Config, tally: &SessionTally) -> Result<(String, i32)> {
    let cfg = with_tally_length(cfg, tally);
    let a = analyze(&cfg, tally)?;
    Ok((render_analysis(&a), exit_code(&a.report)))
}

pub fn cmd_simulate(cfg: &Config, seed: u64, expected: bool) -> Result<String> {
    let bad = validate(&cfg.protocol, &cfg.params);
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }
    let channel = ChannelModel::from_params(&cfg.params);
    let tally = if expected {
        expected_tally(&cfg.protocol, &cfg.params, &channel)
    } else {
        sample_tally(&cfg.protocol, &cfg.params, &channel, seed)
    };
    Ok(render_tally(&tally))
}

/// Optimized protocol rendered as a configuration, with the rate in a
/// trailing comment.
pub fn cmd_optimize(cfg: &Config, n_levels: usize, options: &SearchOptions) -> Result<(String, f64)> {
    let channel = ChannelModel::from_params(&cfg.params);
    let found = optimize_protocol(&cfg.params, &channel, n_levels, options)?;
    let out = Config {
        protocol: found.protocol,
        ..cfg.clone()
    };
    let mut text = out.render();
    let _ = writeln!(text, "# rate = {}", found.rate);
    let _ = writeln!(
        text,
        "# evaluations = {}, converged starts = {}/{}",
        found.evaluations, found.converged_starts, options.starts
    );
    Ok((text, found.rate))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub log: bool,
    /// Re-optimize the protocol at every point instead of using the
    /// configured one.
    pub optimize: Option<(usize, SearchOptions)>,
}

pub const SWEEPABLE: [&str; 9] = [
    "loss_db",
    "eta",
    "epsilon",
    "n_total",
    "y0",
    "visibility",
    "f_ec",
    "k_max",
    "intensity_uncertainty",
];

fn apply(cfg: &Config, param: &str, v: f64) -> Result<Config> {
    let mut c = cfg.clone();
    let p = &mut c.params;
    match param {
        "loss_db" => p.eta = SystemParams::eta_from_db(v),
        "eta" => p.eta = v,
        "epsilon" => p.epsilon = v,
        "n_total" => p.n_total = v,
        "y0" => p.y0 = v,
        "visibility" => p.visibility = v,
        "f_ec" => p.f_ec = v,
        "k_max" => p.k_max = v.round() as usize,
        "intensity_uncertainty" => c.intensity_uncertainty = v,
        _ => {
            return Err(Error::domain(format!(
                "cannot sweep `{param}`; choose one of {}",
                SWEEPABLE.join(", ")
            )))
        }
    }
    Ok(c)
}

pub fn sweep_grid(spec: &SweepSpec) -> Result<Vec<f64>> {
    if spec.points == 0 {
        return Err(Error::domain("a sweep needs at least one point"));
    }
    if spec.log && (spec.from <= 0.0 || spec.to <= 0.0) {
        return Err(Error::domain("logarithmic sweeps need positive endpoints"));
    }
    let n = spec.points;
    Ok((0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            if spec.log {
                (spec.from.ln() + t * (spec.to.ln() - spec.from.ln())).exp()
            } else {
                spec.from + t * (spec.to - spec.from)
            }
        })
        .collect())
}

/// One sweep row, computed from library calls only.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub protocol: ProtocolSpec,
    pub report: RateReport,
    pub sps: SpsBounds,
}

pub fn sweep_point(cfg: &Config, spec: &SweepSpec, value: f64) -> Result<SweepRow> {
    let mut c = apply(cfg, &spec.param, value)?;
    let channel = ChannelModel::from_params(&c.params);
    if let Some((n, options)) = &spec.optimize {
        c.protocol = optimize_protocol(&c.params, &channel, *n, options)?.protocol;
    }
    let tally = expected_tally(&c.protocol, &c.params, &channel);
    let a = analyze(&c, &tally)?;
    Ok(SweepRow {
        value,
        protocol: c.protocol,
        report: a.report,
        sps: a.sps,
    })
}

pub const SWEEP_COLUMNS: &str = "rate,K,mu_low,mu_high,p_vacuum,p_low,p_high,b1_max,P_S_high,P_D_high";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV line for a row: vacuum is the zero-intensity level, high the most
/// intense level and low the weakest nonzero level other than high.
pub fn sweep_line(row: &SweepRow) -> String {
    let levels = &row.protocol.levels;
    let high = (0..levels.len()).max_by(|&a, &b| levels[a].mu.total_cmp(&levels[b].mu));
    let vacuum = levels.iter().position(|l| l.mu == 0.0);
    let low = (0..levels.len())
        .filter(|&j| levels[j].mu > 0.0 && Some(j) != high)
        .min_by(|&a, &b| levels[a].mu.total_cmp(&levels[b].mu));
    let mu = |j: Option<usize>| j.map(|j| levels[j].mu);
    let p = |j: Option<usize>| j.map(|j| levels[j].probability);
    [
        row.value.to_string(),
        row.report.rate.to_string(),
        row.report.key_length.to_string(),
        cell(mu(low)),
        cell(mu(high)),
        cell(p(vacuum)),
        cell(p(low)),
        cell(p(high)),
        row.report.b1_max.to_string(),
        cell(high.map(|j| row.sps.p_s[j])),
        cell(high.map(|j| row.sps.p_d[j])),
    ]
    .join(",")
}

/// Runs `f` over `items` on at most `jobs` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

pub fn cmd_sweep(cfg: &Config, spec: &SweepSpec, jobs: usize) -> Result<String> {
    let grid = sweep_grid(spec)?;
    apply(cfg, &spec.param, grid[0])?;
    let rows = par_map(jobs, &grid, |&v| sweep_point(cfg, spec, v))?;
    let mut out = format!("{},{SWEEP_COLUMNS}\n", spec.param);
    for row in rows {
        out.push_str(&sweep_line(&row?));
        out.push('\n');
    }
    Ok(out)
}

/// Optimized three-level rate against fiber length for each detector preset.
pub fn detector_rate(cfg: &Config, preset_index: usize, km: f64, options: &SearchOptions) -> Result<f64> {
    let params = PRESETS[preset_index].params_at(&cfg.params, km);
    let channel = ChannelModel::from_params(&params);
    Ok(optimize_protocol(&params, &channel, 3, options)?.rate)
}

pub fn cmd_detectors(cfg: &Config, distances: &[f64], options: &SearchOptions, jobs: usize) -> Result<String> {
    let cells: Vec<(usize, usize)> = (0..distances.len())
        .flat_map(|i| (0..PRESETS.len()).map(move |d| (i, d)))
        .collect();
    let rates = par_map(jobs, &cells, |&(i, d)| detector_rate(cfg, d, distances[i], options))?
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut out = String::from("distance_km");
    for p in &PRESETS {
        out.push(',');
        out.push_str(p.name);
    }
    out.push('\n');
    for (i, km) in distances.iter().enumerate() {
        out.push_str(&km.to_string());
        for d in 0..PRESETS.len() {
            out.push(',');
            out.push_str(&rates[i * PRESETS.len() + d].to_string());
        }
        out.push('\n');
    }
    Ok(out)
}
