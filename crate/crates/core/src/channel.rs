//! Session simulation: beamsplitter channels, mixtures of them, detector
//! presets, and expected or sampled tallies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::error::{Error, Result};
use crate::model::{LevelCounts, ProtocolSpec, SessionTally, SystemParams};

/// Fiber attenuation used by the detector comparisons.
pub const FIBER_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationary {
    pub eta: f64,
    pub y0: f64,
    pub visibility: f64,
}

impl Stationary {
    pub fn yield_k(&self, k: usize) -> f64 {
        // 1 − (1−y0)(1−η)^k without cancellation for tiny y0, η
        let ln_miss = (-self.y0).ln_1p() + k as f64 * (-self.eta).ln_1p();
        -ln_miss.exp_m1()
    }

    pub fn error_k(&self, k: usize) -> f64 {
        let signal = -(k as f64 * (-self.eta).ln_1p()).exp_m1();
        0.5 * self.y0 + 0.5 * (1.0 - self.visibility) * signal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Stationary(Stationary),
    /// Eve picks component `l` with probability `f_l` for every signal.
    Mixture(Vec<(Stationary, f64)>),
}

impl ChannelModel {
    pub fn from_params(params: &SystemParams) -> Self {
        ChannelModel::Stationary(Stationary {
            eta: params.eta,
            y0: params.y0,
            visibility: params.visibility,
        })
    }

    pub fn mixture(components: Vec<(Stationary, f64)>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.1).sum();
        if components.is_empty() || (total - 1.0).abs() > 1e-12 || components.iter().any(|c| !(0.0..=1.0).contains(&c.1)) {
            return Err(Error::domain("mixture frequencies must be in [0,1] and sum to 1"));
        }
        Ok(ChannelModel::Mixture(components))
    }

    pub fn yield_k(&self, k: usize) -> f64 {
        match self {
            ChannelModel::Stationary(s) => s.yield_k(k),
            ChannelModel::Mixture(parts) => parts.iter().map(|(s, f)| f * s.yield_k(k)).sum(),
        }
    }

    pub fn error_k(&self, k: usize) -> f64 {
        match self {
            ChannelModel::Stationary(s) => s.error_k(k),
            ChannelModel::Mixture(parts) => parts.iter().map(|(s, f)| f * s.error_k(k)).sum(),
        }
    }

    /// True single-photon error rate `c_1 / y_1`.
    pub fn b1(&self) -> f64 {
        let y1 = self.yield_k(1);
        if y1 > 0.0 {
            self.error_k(1) / y1
        } else {
            0.0
        }
    }
}

/// Click and error-click probabilities averaged over the Poisson photon
/// number of a level.
pub fn level_probabilities(mu: f64, channel: &ChannelModel) -> (f64, f64) {
    let mut w = (-mu).exp();
    let (mut y, mut c, mut mass) = (0.0, 0.0, 0.0);
    let mut k = 0;
    loop {
        y += w * channel.yield_k(k);
        c += w * channel.error_k(k);
        mass += w;
        k += 1;
        w *= mu / k as f64;
        if (k as f64 > mu && w < 1e-16 * mass) || w == 0.0 {
            break;
        }
    }
    (y, c)
}

pub fn expected_tally(protocol: &ProtocolSpec, params: &SystemParams, channel: &ChannelModel) -> SessionTally {
    let levels = protocol
        .levels
        .iter()
        .map(|l| {
            let n = params.n_total * l.probability;
            let (y, c) = level_probabilities(l.mu, channel);
            LevelCounts {
                n_sent: n,
                n_received: params.sift * n * y,
                n_errors: params.sift * n * c,
            }
        })
        .collect();
    SessionTally { levels }
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    rng.sample(Binomial::new(n, p).expect("probability checked"))
}

/// Splits `n` draws over `probs` (which sum to at most one, remainder last).
fn multinomial(rng: &mut ChaCha8Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(probs.len() + 1);
    let mut remaining = n;
    let mut mass_left: f64 = 1.0;
    for &p in probs {
        let q = if mass_left > 0.0 { (p / mass_left).min(1.0) } else { 1.0 };
        let x = binomial(rng, remaining, q);
        out.push(x);
        remaining -= x;
        mass_left -= p;
    }
    out.push(remaining);
    out
}

/// One session drawn photon by photon in distribution: level choice,
/// photon number, click/error outcome and basis sifting.
///
/// Each level uses its own ChaCha stream so results do not depend on
/// evaluation order.
pub fn sample_tally(
    protocol: &ProtocolSpec,
    params: &SystemParams,
    channel: &ChannelModel,
    seed: u64,
) -> SessionTally {
    let n_total = params.n_total.max(0.0).round() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs: Vec<f64> = protocol.levels.iter().map(|l| l.probability).collect();
    let mut per_level = multinomial(&mut rng, n_total, &probs[..probs.len().saturating_sub(1)]);
    per_level.truncate(probs.len());

    let levels = protocol
        .levels
        .iter()
        .zip(per_level)
        .enumerate()
        .map(|(j, (level, n_j))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            sample_level(&mut rng, level.mu, n_j, params.sift, channel)
        })
        .collect();
    SessionTally { levels }
}

fn sample_level(rng: &mut ChaCha8Rng, mu: f64, n: u64, sift: f64, channel: &ChannelModel) -> LevelCounts {
    let (mut clicks, mut errors) = (0u64, 0u64);
    let mut remaining = n;
    let mut w = (-mu).exp();
    let mut tail = 1.0;
    let mut k = 0usize;
    while remaining > 0 {
        // photon number k given at least k photons
        let n_k = if tail <= w || tail <= 0.0 { remaining } else { binomial(rng, remaining, w / tail) };
        remaining -= n_k;
        tail -= w;
        let (y, c) = (channel.yield_k(k), channel.error_k(k));
        let outcome = multinomial(rng, n_k, &[c, y - c]);
        errors += binomial(rng, outcome[0], sift);
        clicks += binomial(rng, outcome[1], sift);
        k += 1;
        w *= mu / k as f64;
    }
    LevelCounts {
        n_sent: n as f64,
        n_received: (clicks + errors) as f64,
        n_errors: errors as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorPreset {
    pub name: &'static str,
    pub efficiency: f64,
    pub dark: f64,
    pub optics_loss_db: f64,
}

impl DetectorPreset {
    /// Total transmission over `km` of fiber including optics and detector.
    pub fn eta_at(&self, km: f64) -> f64 {
        self.efficiency * SystemParams::eta_from_db(self.optics_loss_db + FIBER_DB_PER_KM * km)
    }

    /// `base` with this detector's dark probability and the transmission at `km`.
    pub fn params_at(&self, base: &SystemParams, km: f64) -> SystemParams {
        SystemParams {
            eta: self.eta_at(km),
            y0: self.dark,
            ..base.clone()
        }
    }
}

pub const PRESETS: [DetectorPreset; 3] = [
    DetectorPreset {
        name: "snspd",
        efficiency: 0.02,
        dark: 1.44e-8,
        optics_loss_db: 7.0,
    },
    DetectorPreset {
        name: "tes",
        efficiency: 0.50,
        dark: 4e-6,
        optics_loss_db: 7.0,
    },
    DetectorPreset {
        name: "apd",
        efficiency: 0.10,
        dark: 1.5e-5,
        optics_loss_db: 7.0,
    },
];

pub fn preset(name: &str) -> Result<DetectorPreset> {
    PRESETS
        .iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}
