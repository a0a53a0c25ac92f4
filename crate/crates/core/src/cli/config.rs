//! Flat `key = value` configuration and the tally file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{IntensityLevel, LevelCounts, ProtocolSpec, SessionTally, SystemParams};

pub const TALLY_HEADER: &str = "# decoykit-tally v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub protocol: ProtocolSpec,
    pub params: SystemParams,
    pub intensity_uncertainty: f64,
    /// Named distinguishability preset (`four-laser`).
    pub q_preset: Option<String>,
}

#[derive(Default)]
struct LevelDraft {
    first_line: usize,
    mu: Option<f64>,
    prob: Option<f64>,
    key: Option<bool>,
    q: Option<Vec<f64>>,
}

fn number(value: &str, line: usize, key: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line, format!("`{key}`: expected a number, got `{value}`")))
}

fn boolean(value: &str, line: usize, key: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::parse(line, format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut params = SystemParams::default();
        let mut uncertainty = 0.0;
        let mut q_preset = None;
        let mut levels: BTreeMap<usize, LevelDraft> = BTreeMap::new();
        let mut eta_line: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(line, format!("expected `key = value`, got `{content}`")))?;
            match key {
                "epsilon" => params.epsilon = number(value, line, key)?,
                "n_total" => params.n_total = number(value, line, key)?,
                "y0" => params.y0 = number(value, line, key)?,
                "visibility" => params.visibility = number(value, line, key)?,
                "eta" | "loss_db" => {
                    if let Some(prev) = eta_line {
                        return Err(Error::parse(line, format!("transmission already set on line {prev}")));
                    }
                    eta_line = Some(line);
                    let v = number(value, line, key)?;
                    params.eta = if key == "eta" { v } else { SystemParams::eta_from_db(v) };
                }
                "f_ec" => params.f_ec = number(value, line, key)?,
                "k_max" => {
                    params.k_max = value
                        .parse()
                        .map_err(|_| Error::parse(line, format!("`k_max`: expected an integer, got `{value}`")))?
                }
                "sift" => params.sift = number(value, line, key)?,
                "intensity_uncertainty" => uncertainty = number(value, line, key)?,
                "q_preset" => q_preset = Some(value.to_string()),
                _ => {
                    let Some(rest) = key.strip_prefix("level.") else {
                        return Err(Error::parse(line, format!("unknown key `{key}`")));
                    };
                    let (idx, field) = rest
                        .split_once('.')
                        .ok_or_else(|| Error::parse(line, format!("malformed level key `{key}`")))?;
                    let idx: usize = idx
                        .parse()
                        .map_err(|_| Error::parse(line, format!("bad level index in `{key}`")))?;
                    let draft = levels.entry(idx).or_insert_with(|| LevelDraft {
                        first_line: line,
                        ..LevelDraft::default()
                    });
                    match field {
                        "mu" => draft.mu = Some(number(value, line, key)?),
                        "prob" => draft.prob = Some(number(value, line, key)?),
                        "encodes_key" => draft.key = Some(boolean(value, line, key)?),
                        "q" => {
                            draft.q = Some(
                                value
                                    .split(',')
                                    .map(|v| number(v.trim(), line, key))
                                    .collect::<Result<Vec<_>>>()?,
                            )
                        }
                        _ => return Err(Error::parse(line, format!("unknown level field `{field}`"))),
                    }
                }
            }
        }
        let n = levels.len();
        if let Some((i, d)) = levels.iter().enumerate().find(|(i, (k, _))| i != *k).map(|(i, (_, d))| (i, d)) {
            return Err(Error::parse(d.first_line, format!("level {i} is missing; indices must run 0, 1, 2, ...")));
        }
        let any_key = levels.values().any(|d| d.key.is_some());
        let mut out = Vec::with_capacity(n);
        for (j, d) in levels.into_values().enumerate() {
            let mu = d.mu.ok_or_else(|| Error::parse(d.first_line, format!("level {j} has no `mu`")))?;
            let prob = d.prob.ok_or_else(|| Error::parse(d.first_line, format!("level {j} has no `prob`")))?;
            out.push(IntensityLevel {
                mu,
                probability: prob,
                encodes_key: d.key.unwrap_or(false),
                q_row: d.q,
            });
        }
        if !any_key && !out.is_empty() {
            default_key_levels(&mut out);
        }
        Ok(Config {
            protocol: ProtocolSpec::new(out),
            params,
            intensity_uncertainty: uncertainty,
            q_preset,
        })
    }

    /// Text that parses back to an equal configuration.
    pub fn render(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "epsilon = {}", p.epsilon);
        let _ = writeln!(s, "n_total = {}", p.n_total);
        let _ = writeln!(s, "y0 = {}", p.y0);
        let _ = writeln!(s, "visibility = {}", p.visibility);
        let _ = writeln!(s, "eta = {}", p.eta);
        let _ = writeln!(s, "f_ec = {}", p.f_ec);
        let _ = writeln!(s, "k_max = {}", p.k_max);
        let _ = writeln!(s, "sift = {}", p.sift);
        if self.intensity_uncertainty != 0.0 {
            let _ = writeln!(s, "intensity_uncertainty = {}", self.intensity_uncertainty);
        }
        if let Some(q) = &self.q_preset {
            let _ = writeln!(s, "q_preset = {q}");
        }
        for (j, l) in self.protocol.levels.iter().enumerate() {
            let _ = writeln!(s, "level.{j}.mu = {}", l.mu);
            let _ = writeln!(s, "level.{j}.prob = {}", l.probability);
            let _ = writeln!(s, "level.{j}.encodes_key = {}", l.encodes_key);
            if let Some(q) = &l.q_row {
                let row: Vec<String> = q.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "level.{j}.q = {}", row.join(", "));
            }
        }
        s
    }
}

/// Highest level only for three or more levels, every level otherwise.
pub fn default_key_levels(levels: &mut [IntensityLevel]) {
    if levels.len() >= 3 {
        let top = (0..levels.len())
            .max_by(|&a, &b| levels[a].mu.total_cmp(&levels[b].mu))
            .unwrap_or(0);
        for (j, l) in levels.iter_mut().enumerate() {
            l.encodes_key = j == top;
        }
    } else {
        levels.iter_mut().for_each(|l| l.encodes_key = true);
    }
}

pub fn parse_tally(text: &str) -> Result<SessionTally> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TALLY_HEADER => {}
        _ => return Err(Error::parse(1, format!("missing header `{TALLY_HEADER}`"))),
    }
    let mut levels = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(line, format!("expected `j N C E`, got {} fields", fields.len())));
        }
        let j: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad level index `{}`", fields[0])))?;
        if j != levels.len() {
            return Err(Error::parse(line, format!("expected level {}, got {j}", levels.len())));
        }
        let counts = LevelCounts {
            n_sent: number(fields[1], line, "N")?,
            n_received: number(fields[2], line, "C")?,
            n_errors: number(fields[3], line, "E")?,
        };
        if counts.n_errors < 0.0 || counts.n_errors > counts.n_received || counts.n_received > counts.n_sent {
            return Err(Error::parse(line, "counts must satisfy 0 ≤ E ≤ C ≤ N"));
        }
        levels.push(counts);
    }
    Ok(SessionTally { levels })
}

pub fn render_tally(tally: &SessionTally) -> String {
    let mut s = String::from(TALLY_HEADER);
    s.push('\n');
    for (j, c) in tally.levels.iter().enumerate() {
        let _ = writeln!(s, "{j} {} {} {}", c.n_sent, c.n_received, c.n_errors);
    }
    s
}
