//! Shared domain types: protocols, system parameters, tallies and the
//! outputs of the bounding programs.
//!
//! Nothing here computes beyond invariant checks. Counts are `f64` so that
//! expectation-mode tallies (fractional counts) and sampled tallies flow
//! through the same pipeline.

use std::fmt;

/// Tolerance on the level probabilities summing to one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// One intensity level of a decoy protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityLevel {
    /// Mean photon number.
    pub mu: f64,
    /// Probability that Alice prepares this level.
    pub probability: f64,
    /// Whether detections at this level contribute key bits.
    pub encodes_key: bool,
    /// Probability that a k-photon pulse of this level is indistinguishable
    /// from the key level. `None` means fully indistinguishable.
    pub q_row: Option<Vec<f64>>,
}

impl IntensityLevel {
    pub fn new(mu: f64, probability: f64, encodes_key: bool) -> Self {
        Self {
            mu,
            probability,
            encodes_key,
            q_row: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub levels: Vec<IntensityLevel>,
}

impl ProtocolSpec {
    pub fn new(levels: Vec<IntensityLevel>) -> Self {
        Self { levels }
    }

    /// Builds a protocol from parallel slices; `key` lists the indices of the
    /// key-encoding levels.
    pub fn from_parts(mus: &[f64], probs: &[f64], key: &[usize]) -> Self {
        let levels = mus
            .iter()
            .zip(probs)
            .enumerate()
            .map(|(j, (&mu, &p))| IntensityLevel::new(mu, p, key.contains(&j)))
            .collect();
        Self { levels }
    }

    /// The three-level protocol (vacuum, weak, signal) with only the signal
    /// level encoding key.
    pub fn three_level(mu_low: f64, mu_high: f64, p_vac: f64, p_low: f64, p_high: f64) -> Self {
        Self::from_parts(&[0.0, mu_low, mu_high], &[p_vac, p_low, p_high], &[2])
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.mu).collect()
    }

    pub fn key_levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.encodes_key)
            .map(|(j, _)| j)
    }

    /// Copy of the protocol with every intensity replaced.
    pub fn with_intensities(&self, mus: &[f64]) -> Self {
        let mut out = self.clone();
        for (level, &mu) in out.levels.iter_mut().zip(mus) {
            level.mu = mu;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Failure probability budgeted to each one-sided confidence bound.
    pub epsilon: f64,
    /// Session length in signals sent.
    pub n_total: f64,
    /// Dark/background click probability per signal slot.
    pub y0: f64,
    pub visibility: f64,
    /// Channel transmission probability.
    pub eta: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    /// Photon-number truncation of the decoy programs.
    pub k_max: usize,
    /// Fraction of detections surviving basis sifting.
    pub sift: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            n_total: 1e10,
            y0: 2e-6,
            visibility: 0.98,
            eta: 1e-3,
            f_ec: 1.2,
            k_max: 9,
            sift: 0.5,
        }
    }
}

impl SystemParams {
    /// Channel transmission for a loss in dB.
    pub fn eta_from_db(loss_db: f64) -> f64 {
        10f64.powf(-loss_db / 10.0)
    }

    pub fn loss_db(&self) -> f64 {
        -10.0 * self.eta.log10()
    }
}

/// Counts for one level: signals sent, detections kept, erroneous detections.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelCounts {
    pub n_sent: f64,
    pub n_received: f64,
    pub n_errors: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionTally {
    pub levels: Vec<LevelCounts>,
}

impl SessionTally {
    pub fn total_sent(&self) -> f64 {
        self.levels.iter().map(|l| l.n_sent).sum()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (j, c) in self.levels.iter().enumerate() {
            let finite = c.n_sent.is_finite() && c.n_received.is_finite() && c.n_errors.is_finite();
            if !finite || c.n_errors < 0.0 || c.n_errors > c.n_received || c.n_received > c.n_sent {
                out.push(Violation::TallyOrder { level: j });
            }
        }
        out
    }
}

/// Confidence interval on one level's yield (`y_*`) and error probability
/// (`b_*`), both per sent signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelBounds {
    pub y_lo: f64,
    pub y_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
}

impl LevelBounds {
    /// Bounds that carry no information.
    pub const VACUOUS: LevelBounds = LevelBounds {
        y_lo: 0.0,
        y_hi: 1.0,
        b_lo: 0.0,
        b_hi: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBounds {
    pub levels: Vec<LevelBounds>,
}

impl ObservationBounds {
    /// Number of one-sided confidence bounds that went into these intervals.
    pub fn bound_applications(&self) -> usize {
        4 * self.levels.len()
    }
}

/// Bookkeeping from the bounding programs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverDiagnostics {
    pub lp_solves: usize,
    pub simplex_iterations: usize,
    pub bisection_steps: usize,
    /// `b1_max` fell back to 1 because a zero single-photon yield was feasible.
    pub b1_degenerate: bool,
}

impl SolverDiagnostics {
    pub fn merge(&mut self, other: &SolverDiagnostics) {
        self.lp_solves += other.lp_solves;
        self.simplex_iterations += other.simplex_iterations;
        self.bisection_steps += other.bisection_steps;
        self.b1_degenerate |= other.b1_degenerate;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsBounds {
    /// Lower bound on the probability that a level-j signal is a detected
    /// single photon.
    pub p_s: Vec<f64>,
    /// Lower bound on the probability that a level-j signal is a detected
    /// vacuum (dark count).
    pub p_d: Vec<f64>,
    /// Upper bound on the single-photon bit error rate.
    pub b1_max: f64,
    pub diagnostics: SolverDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRate {
    pub level: usize,
    pub s: f64,
    pub d: f64,
    pub ec_cost: f64,
    pub pa_cost: f64,
    /// Observed error rate among detections, `None` when nothing was detected.
    pub ber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub key_length: f64,
    pub rate: f64,
    pub levels: Vec<LevelRate>,
    pub f_pa: f64,
    pub b1_max: f64,
    /// Key length before clamping at zero.
    pub raw_key_length: f64,
    pub warnings: Vec<String>,
}

impl RateReport {
    /// No secret key can be certified.
    pub fn clamped(&self) -> bool {
        self.raw_key_length <= 0.0
    }

    pub fn s_total(&self) -> f64 {
        self.levels.iter().map(|l| l.s).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyProtocol,
    ProbabilitySum(f64),
    IntensitiesNotDistinct(usize, usize),
    NoKeyLevel,
    NegativeIntensity(usize),
    ProbabilityRange(usize),
    QRange { level: usize, k: usize },
    Epsilon,
    SessionLength,
    DarkProbability,
    Visibility,
    Eta,
    KMax,
    Sift,
    ErrorCorrection,
    TallyOrder { level: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyProtocol => write!(f, "protocol has no levels"),
            Violation::ProbabilitySum(s) => write!(f, "probabilities sum ≠ 1 (sum = {s})"),
            Violation::IntensitiesNotDistinct(a, b) => {
                write!(f, "intensities not distinct (levels {a} and {b})")
            }
            Violation::NoKeyLevel => write!(f, "no level encodes key"),
            Violation::NegativeIntensity(j) => write!(f, "level {j}: intensity must be ≥ 0"),
            Violation::ProbabilityRange(j) => write!(f, "level {j}: probability outside [0,1]"),
            Violation::QRange { level, k } => {
                write!(f, "level {level}: Q[{k}] outside [0,1]")
            }
            Violation::Epsilon => write!(f, "epsilon must lie in (0,1)"),
            Violation::SessionLength => write!(f, "n_total must be ≥ 1"),
            Violation::DarkProbability => write!(f, "y0 must lie in [0,1]"),
            Violation::Visibility => write!(f, "visibility must lie in (0,1]"),
            Violation::Eta => write!(f, "eta must lie in [0,1]"),
            Violation::KMax => write!(f, "k_max must be ≥ 2"),
            Violation::Sift => write!(f, "sift must lie in (0,1]"),
            Violation::ErrorCorrection => write!(f, "f_ec must be ≥ 0"),
            Violation::TallyOrder { level } => {
                write!(f, "level {level}: tally must satisfy 0 ≤ E ≤ C ≤ N")
            }
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Checks every protocol and parameter invariant. Never panics; NaN fails
/// every range check.
pub fn validate(protocol: &ProtocolSpec, params: &SystemParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let levels = &protocol.levels;
    if levels.is_empty() {
        out.push(Violation::EmptyProtocol);
    }
    for (j, l) in levels.iter().enumerate() {
        if !(l.mu >= 0.0) || !l.mu.is_finite() {
            out.push(Violation::NegativeIntensity(j));
        }
        if !in_unit(l.probability) {
            out.push(Violation::ProbabilityRange(j));
        }
        if let Some(q) = &l.q_row {
            if let Some(k) = q.iter().position(|&x| !in_unit(x)) {
                out.push(Violation::QRange { level: j, k });
            }
        }
    }
    if !levels.is_empty() {
        let sum: f64 = levels.iter().map(|l| l.probability).sum();
        if !((sum - 1.0).abs() <= PROBABILITY_SUM_TOL) {
            out.push(Violation::ProbabilitySum(sum));
        }
        'outer: for a in 0..levels.len() {
            for b in a + 1..levels.len() {
                if levels[a].mu == levels[b].mu {
                    out.push(Violation::IntensitiesNotDistinct(a, b));
                    break 'outer;
                }
            }
        }
        if !levels.iter().any(|l| l.encodes_key) {
            out.push(Violation::NoKeyLevel);
        }
    }

    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        out.push(Violation::Epsilon);
    }
    if !(params.n_total >= 1.0) || !params.n_total.is_finite() {
        out.push(Violation::SessionLength);
    }
    if !in_unit(params.y0) {
        out.push(Violation::DarkProbability);
    }
    if !(params.visibility > 0.0 && params.visibility <= 1.0) {
        out.push(Violation::Visibility);
    }
    if !in_unit(params.eta) {
        out.push(Violation::Eta);
    }
    if params.k_max < 2 {
        out.push(Violation::KMax);
    }
    if !(params.sift > 0.0 && params.sift <= 1.0) {
        out.push(Violation::Sift);
    }
    if !(params.f_ec >= 0.0) || !params.f_ec.is_finite() {
        out.push(Violation::ErrorCorrection);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec3() -> ProtocolSpec {
        ProtocolSpec::three_level(0.063, 0.655, 0.01, 0.0275, 0.9625)
    }

    #[test]
    fn worked_example_protocol_is_valid() {
        assert!(validate(&sec3(), &SystemParams::default()).is_empty());
    }

    #[test]
    fn bad_probability_sum() {
        let p = ProtocolSpec::three_level(0.063, 0.655, 0.5, 0.5, 0.5);
        let v = validate(&p, &SystemParams::default());
        assert!(v.iter().any(|x| matches!(x, Violation::ProbabilitySum(_))));
        assert!(v.iter().any(|x| x.to_string().contains("probabilities sum ≠ 1")));
    }

    #[test]
    fn duplicate_intensities() {
        let p = ProtocolSpec::from_parts(&[0.1, 0.1], &[0.5, 0.5], &[1]);
        let v = validate(&p, &SystemParams::default());
        assert!(v.iter().any(|x| x.to_string().contains("intensities not distinct")));
    }

    #[test]
    fn no_key_level() {
        let p = ProtocolSpec::from_parts(&[0.0, 0.5], &[0.5, 0.5], &[]);
        assert!(validate(&p, &SystemParams::default()).contains(&Violation::NoKeyLevel));
    }

    #[test]
    fn nan_input_is_reported_not_panicking() {
        let p = ProtocolSpec::from_parts(&[f64::NAN, 0.5], &[f64::NAN, 0.5], &[1]);
        let params = SystemParams {
            epsilon: f64::NAN,
            y0: f64::INFINITY,
            ..SystemParams::default()
        };
        let v = validate(&p, &params);
        assert!(v.contains(&Violation::Epsilon));
        assert!(v.contains(&Violation::DarkProbability));
        assert!(v.contains(&Violation::NegativeIntensity(0)));
    }

    #[test]
    fn tally_order() {
        let t = SessionTally {
            levels: vec![LevelCounts {
                n_sent: 10.0,
                n_received: 2.0,
                n_errors: 3.0,
            }],
        };
        assert_eq!(t.violations(), vec![Violation::TallyOrder { level: 0 }]);
    }
}
