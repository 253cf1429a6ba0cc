//! Monte Carlo estimation of operating points and performance curves.
//!
//! Trials run in parallel in fixed-size chunks. Each trial gets its own
//! random stream derived from the master seed and a tag path (state,
//! thresholds, estimator, trial index), and chunk tallies are merged in
//! chunk order, so results do not depend on the thread count.
//!
//! Error probabilities far below `f64::MIN_POSITIVE` are normal here (the
//! equilibrium runs reach `alpha ~ exp(-1200)`), so every error estimate keeps
//! its value in log space alongside the linear one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AttackSpec, Placement};
use crate::detection::{DetectorRule, Thresholds};
use crate::error::{Error, Result};
use crate::models::{Hypothesis, HypothesisModel};
use crate::real::Real;
use crate::trial::{run_trial, Sampling, Scenario, Verdict};

/// Trials per parallel work unit.
pub const CHUNK: u64 = 1024;

/// Effective sample size below which an importance-sampled estimate is flagged.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 30.0;

const TAG_PLAIN: u64 = 0x706c_6169_6e;
const TAG_IMPORTANCE: u64 = 0x6973;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a substream seed from a master seed and a tag path.
pub fn substream_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Random stream of one trial.
pub fn trial_rng(master: u64, tags: &[u64], trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(substream_seed(master, tags) ^ trial.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

fn threshold_tags<F: Real>(thr: &Thresholds<F>) -> [u64; 2] {
    [thr.a.to_f64_lossy().to_bits(), thr.b.to_f64_lossy().to_bits()]
}

fn log_add(a: f64, b: f64) -> f64 {
    crate::real::log_add_exp(a, b)
}

/// Raw sums over a batch of trials run under one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tally {
    pub trials: u64,
    pub accept0: u64,
    pub accept1: u64,
    pub truncated: u64,
    sum_time: f64,
    sum_time_sq: f64,
    /// Error events, `log sum w` and `log sum w^2` over them.
    pub errors: u64,
    log_w: f64,
    log_w_sq: f64,
}

impl Default for Tally {
    fn default() -> Self {
        Self {
            trials: 0,
            accept0: 0,
            accept1: 0,
            truncated: 0,
            sum_time: 0.0,
            sum_time_sq: 0.0,
            errors: 0,
            log_w: f64::NEG_INFINITY,
            log_w_sq: f64::NEG_INFINITY,
        }
    }
}

impl Tally {
    fn record(&mut self, verdict: Verdict, time: u64, error: bool, log_weight: f64) {
        self.trials += 1;
        match verdict {
            Verdict::Accept0 => self.accept0 += 1,
            Verdict::Accept1 => self.accept1 += 1,
            Verdict::Truncated => self.truncated += 1,
        }
        if verdict != Verdict::Truncated {
            let t = time as f64;
            self.sum_time += t;
            self.sum_time_sq += t * t;
        }
        if error {
            self.errors += 1;
            self.log_w = log_add(self.log_w, log_weight);
            self.log_w_sq = log_add(self.log_w_sq, 2.0 * log_weight);
        }
    }

    /// Order-independent in the counts; the float sums are merged in a fixed
    /// order by the callers.
    pub fn merge(mut self, other: &Tally) -> Tally {
        self.trials += other.trials;
        self.accept0 += other.accept0;
        self.accept1 += other.accept1;
        self.truncated += other.truncated;
        self.sum_time += other.sum_time;
        self.sum_time_sq += other.sum_time_sq;
        self.errors += other.errors;
        self.log_w = log_add(self.log_w, other.log_w);
        self.log_w_sq = log_add(self.log_w_sq, other.log_w_sq);
        self
    }

    pub fn decided(&self) -> u64 {
        self.accept0 + self.accept1
    }

    /// Mean stopping time over decided trials.
    pub fn mean_time(&self) -> Option<MeanEstimate> {
        let n = self.decided();
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean = self.sum_time / nf;
        let var = if n > 1 { ((self.sum_time_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Some(MeanEstimate { mean, stderr: (var / nf).sqrt() })
    }

    /// Weighted error-probability estimate: the fraction of error events for
    /// plain sampling, the mean likelihood-ratio weight of error events for
    /// importance sampling.
    pub fn error_estimate(&self, estimator: Estimator) -> ErrorEstimate {
        let n = self.trials as f64;
        let ln_n = n.ln();
        if self.errors == 0 {
            return ErrorEstimate {
                log_value: f64::NEG_INFINITY,
                value: 0.0,
                stderr: 0.0,
                rel_stderr: f64::INFINITY,
                events: 0,
                effective_sample_size: 0.0,
                low_effective_sample_size: estimator == Estimator::Importance,
            };
        }
        let log_mean = self.log_w - ln_n;
        let log_second = self.log_w_sq - ln_n;
        let ratio = (log_second - 2.0 * log_mean).exp();
        let rel_stderr = ((ratio - 1.0).max(0.0) / n).sqrt();
        let ess = (2.0 * self.log_w - self.log_w_sq).exp();
        let value = log_mean.exp();
        ErrorEstimate {
            log_value: log_mean,
            value,
            stderr: value * rel_stderr,
            rel_stderr,
            events: self.errors,
            effective_sample_size: ess,
            low_effective_sample_size: estimator == Estimator::Importance
                && ess < MIN_EFFECTIVE_SAMPLE_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Plain,
    Importance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    /// Accepting 1 under state 0.
    TypeI,
    /// Accepting 0 under state 1.
    TypeII,
}

impl ErrorKind {
    pub fn true_state(self) -> Hypothesis {
        match self {
            ErrorKind::TypeI => Hypothesis::H0,
            ErrorKind::TypeII => Hypothesis::H1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    /// Natural log of the estimate; `-inf` when no error event was seen.
    pub log_value: f64,
    /// Linear estimate; underflows to zero below ~1e-308.
    pub value: f64,
    pub stderr: f64,
    pub rel_stderr: f64,
    pub events: u64,
    pub effective_sample_size: f64,
    pub low_effective_sample_size: bool,
}

impl ErrorEstimate {
    /// Standard error of `log(1/value)` by the delta method.
    pub fn log_stderr(&self) -> f64 {
        self.rel_stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Estimated error probabilities and sample numbers at one threshold pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub a: f64,
    pub b: f64,
    pub trials: u64,
    pub estimator: Estimator,
    pub alpha: ErrorEstimate,
    pub beta: ErrorEstimate,
    pub asn0: MeanEstimate,
    pub asn1: MeanEstimate,
    pub trunc_rate: f64,
}

impl OperatingPoint {
    /// Worst-case average sample number over the two states.
    pub fn delay(&self) -> MeanEstimate {
        if self.asn0.mean >= self.asn1.mean {
            self.asn0
        } else {
            self.asn1
        }
    }

    /// `log(1/alpha) / D(T)` with a delta-method standard error; `None` when
    /// no type-I error was observed.
    pub fn gamma(&self) -> Option<GammaEstimate> {
        if !self.alpha.log_value.is_finite() {
            return None;
        }
        let d = self.delay();
        let value = (-self.alpha.log_value / d.mean).max(0.0);
        let rel_d = d.stderr / d.mean;
        let stderr = ((self.alpha.log_stderr() / d.mean).powi(2) + (value * rel_d).powi(2)).sqrt();
        Some(GammaEstimate { value, stderr })
    }
}

/// Runs `trials` trials under `theta` and tallies them.
pub fn run_batch<F: Real>(
    scenario: &Scenario<F>,
    theta: Hypothesis,
    thr: &Thresholds<F>,
    sampling: Sampling,
    trials: u64,
    seed: u64,
    tags: &[u64],
) -> Result<Tally> {
    let chunks = trials.div_ceil(CHUNK);
    let partial: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut tally = Tally::default();
            for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = trial_rng(seed, tags, trial);
                let out = run_trial(scenario, theta, thr, sampling, &mut rng)?;
                tally.record(
                    out.verdict,
                    out.stopping_time,
                    out.is_error(theta),
                    out.log_weight.to_f64_lossy(),
                );
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    Ok(partial.iter().fold(Tally::default(), |acc, t| acc.merge(t)))
}

fn require_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    Ok(())
}

fn plain_tally<F: Real>(
    scenario: &Scenario<F>,
    theta: Hypothesis,
    thr: &Thresholds<F>,
    trials: u64,
    seed: u64,
) -> Result<Tally> {
    let [ta, tb] = threshold_tags(thr);
    run_batch(scenario, theta, thr, Sampling::Plain, trials, seed, &[TAG_PLAIN, theta.index() as u64, ta, tb])
}

/// Importance-sampled type-I or type-II error probability. `tilt` overrides
/// the number of tilted honest sensors (see [`Scenario::default_tilt`]).
pub fn importance_sampled_error<F: Real>(
    scenario: &Scenario<F>,
    thr: &Thresholds<F>,
    kind: ErrorKind,
    trials: u64,
    seed: u64,
    tilt: Option<usize>,
) -> Result<ErrorEstimate> {
    require_trials(trials)?;
    let theta = kind.true_state();
    let [ta, tb] = threshold_tags(thr);
    let sampling = Sampling::Importance { tilted: tilt.or_else(|| scenario.default_tilt()) };
    let tally = run_batch(
        scenario,
        theta,
        thr,
        sampling,
        trials,
        seed,
        &[TAG_IMPORTANCE, theta.index() as u64, ta, tb],
    )?;
    Ok(tally.error_estimate(Estimator::Importance))
}

/// Plain Monte Carlo error probability with its binomial standard error.
pub fn plain_error<F: Real>(
    scenario: &Scenario<F>,
    thr: &Thresholds<F>,
    kind: ErrorKind,
    trials: u64,
    seed: u64,
) -> Result<ErrorEstimate> {
    require_trials(trials)?;
    Ok(plain_tally(scenario, kind.true_state(), thr, trials, seed)?.error_estimate(Estimator::Plain))
}

/// Estimates `(alpha, beta, ASN0, ASN1)`. Sample numbers always come from
/// plain runs; error probabilities come from importance-sampled runs when
/// `estimator` asks for them.
pub fn estimate_operating_point<F: Real>(
    scenario: &Scenario<F>,
    thr: &Thresholds<F>,
    trials: u64,
    seed: u64,
    estimator: Estimator,
) -> Result<OperatingPoint> {
    require_trials(trials)?;
    let t0 = plain_tally(scenario, Hypothesis::H0, thr, trials, seed)?;
    let t1 = plain_tally(scenario, Hypothesis::H1, thr, trials, seed)?;
    let asn = |t: &Tally, h: &str| {
        t.mean_time().ok_or_else(|| {
            Error::EstimationFailure(format!("every trial under state {h} was truncated"))
        })
    };
    let asn0 = asn(&t0, "0")?;
    let asn1 = asn(&t1, "1")?;
    let (alpha, beta) = match estimator {
        Estimator::Plain => (t0.error_estimate(Estimator::Plain), t1.error_estimate(Estimator::Plain)),
        Estimator::Importance => (
            importance_sampled_error(scenario, thr, ErrorKind::TypeI, trials, seed, None)?,
            importance_sampled_error(scenario, thr, ErrorKind::TypeII, trials, seed, None)?,
        ),
    };
    Ok(OperatingPoint {
        a: thr.a.to_f64_lossy(),
        b: thr.b.to_f64_lossy(),
        trials,
        estimator,
        alpha,
        beta,
        asn0,
        asn1,
        trunc_rate: (t0.truncated + t1.truncated) as f64 / (2 * trials) as f64,
    })
}

/// One threshold of a performance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub threshold: f64,
    pub point: Option<OperatingPoint>,
    pub gamma: Option<GammaEstimate>,
    /// `gamma / I`.
    pub normalized: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCurve {
    /// Information unit `I` used for normalization.
    pub unit: f64,
    pub points: Vec<GammaPoint>,
}

impl GammaCurve {
    pub fn normalized_values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.normalized).collect()
    }
}

/// Performance `log(1/alpha)/D(T)` along symmetric thresholds `a = b`.
/// A failing point is recorded and the sweep continues.
pub fn estimate_gamma_curve<F: Real>(
    scenario: &Scenario<F>,
    thresholds: &[f64],
    trials: u64,
    seed: u64,
    estimator: Estimator,
) -> Result<GammaCurve> {
    require_trials(trials)?;
    if thresholds.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidConfig("sweep thresholds must be positive".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sweep thresholds must be strictly ascending".into()));
    }
    let unit = scenario.model.info_constants()?.i.to_f64_lossy();
    let points = thresholds
        .par_iter()
        .map(|&level| {
            let outcome = Thresholds::symmetric(F::lit(level))
                .and_then(|thr| estimate_operating_point(scenario, &thr, trials, seed, estimator));
            match outcome {
                Ok(point) => {
                    let gamma = point.gamma();
                    GammaPoint {
                        threshold: level,
                        normalized: gamma.map(|g| g.value / unit),
                        gamma,
                        point: Some(point),
                        failure: None,
                    }
                }
                Err(e) => GammaPoint {
                    threshold: level,
                    point: None,
                    gamma: None,
                    normalized: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(GammaCurve { unit, points })
}

/// One detector/attack pairing evaluated at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub point: OperatingPoint,
    pub gamma: Option<GammaEstimate>,
    pub normalized: Option<f64>,
}

impl Cell {
    fn evaluate<F: Real>(
        label: &str,
        scenario: &Scenario<F>,
        thr: &Thresholds<F>,
        trials: u64,
        seed: u64,
        unit: f64,
    ) -> Result<Self> {
        let point = estimate_operating_point(scenario, thr, trials, seed, Estimator::Importance)?;
        let gamma = point.gamma();
        Ok(Self { label: label.to_string(), normalized: gamma.map(|g| g.value / unit), gamma, point })
    }
}

// No observed error counts as unbounded performance.
fn gamma_or_unbounded(cell: &Cell) -> GammaEstimate {
    cell.gamma.unwrap_or(GammaEstimate { value: f64::INFINITY, stderr: 0.0 })
}

/// The three cells around the equilibrium at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub threshold: f64,
    /// Voting rule with `r = s - c` against the flip attack.
    pub equilibrium: Cell,
    /// Voting rule against the suppression stress attack.
    pub detector_vs_stress: Cell,
    /// Sum-SPRT over all sensors against the flip attack.
    pub sum_sprt_vs_flip: Cell,
    /// `gamma(f*, stress) >= gamma(f*, g*) - 3 sigma`.
    pub attacker_cannot_improve: bool,
    /// `gamma(sum-SPRT, g*) <= gamma(f*, g*) + 3 sigma`.
    pub detector_cannot_improve: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub sensors: usize,
    pub compromised: usize,
    pub unit: f64,
    /// `(s - 2c) I`.
    pub predicted: f64,
    pub rows: Vec<SandwichRow>,
}

/// Combined standard error of two independent estimates.
pub fn combined_sigma(x: &GammaEstimate, y: &GammaEstimate) -> f64 {
    (x.stderr.powi(2) + y.stderr.powi(2)).sqrt()
}

/// Evaluates the equilibrium pair against one unilateral deviation for each
/// player: the suppression stress attack and the sum-SPRT over all sensors.
#[allow(clippy::too_many_arguments)]
pub fn equilibrium_sandwich_report<F: Real>(
    model: &HypothesisModel<F>,
    sensors: usize,
    compromised: usize,
    stress_magnitude: F,
    thresholds: &[f64],
    trials: u64,
    seed: u64,
    max_horizon: u64,
) -> Result<SandwichReport> {
    require_trials(trials)?;
    if sensors <= 2 * compromised {
        return Err(Error::InvalidConfig(format!(
            "equilibrium runs require s > 2c, got s={sensors}, c={compromised}"
        )));
    }
    let r = sensors - compromised;
    let build = |rule: DetectorRule, attack: AttackSpec<F>| {
        Scenario::new(model.clone(), sensors, rule, attack)?.with_max_horizon(max_horizon)
    };
    let flip = AttackSpec::flip(compromised, Placement::Random);
    let eq = build(DetectorRule::Voting { r }, flip.clone())?;
    let stress = build(
        DetectorRule::Voting { r },
        AttackSpec::suppression(compromised, stress_magnitude, Placement::Random),
    )?;
    let naive = build(DetectorRule::sum_all(sensors), flip)?;
    let unit = model.info_constants()?.i.to_f64_lossy();

    let rows = thresholds
        .iter()
        .map(|&level| {
            let thr = Thresholds::symmetric(F::lit(level))?;
            let equilibrium = Cell::evaluate("voting vs flip", &eq, &thr, trials, seed, unit)?;
            let detector_vs_stress =
                Cell::evaluate("voting vs suppression", &stress, &thr, trials, seed, unit)?;
            let sum_sprt_vs_flip = Cell::evaluate("sum-sprt vs flip", &naive, &thr, trials, seed, unit)?;
            let (ge, gs, gn) =
                (gamma_or_unbounded(&equilibrium), gamma_or_unbounded(&detector_vs_stress), gamma_or_unbounded(&sum_sprt_vs_flip));
            Ok(SandwichRow {
                threshold: level,
                attacker_cannot_improve: gs.value >= ge.value - 3.0 * combined_sigma(&gs, &ge),
                detector_cannot_improve: gn.value <= ge.value + 3.0 * combined_sigma(&gn, &ge),
                equilibrium,
                detector_vs_stress,
                sum_sprt_vs_flip,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SandwichReport {
        sensors,
        compromised,
        unit,
        predicted: (sensors - 2 * compromised) as f64 * unit,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownCRow {
    pub actual: usize,
    pub threshold: f64,
    pub cell: Cell,
    /// `s - c_bar - c`, in units of `I`.
    pub bound: f64,
    pub meets_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownCReport {
    pub sensors: usize,
    pub c_bar: usize,
    pub r: usize,
    pub unit: f64,
    pub tolerance: f64,
    pub rows: Vec<UnknownCRow>,
}

/// Runs the voting rule sized for `c_bar` compromised sensors against flip
/// attacks on each actual count (a `c = 0` row is always included) and
/// checks `gamma / I >= s - c_bar - c - tolerance`.
#[allow(clippy::too_many_arguments)]
pub fn unknown_c_report<F: Real>(
    model: &HypothesisModel<F>,
    sensors: usize,
    c_bar: usize,
    actual: &[usize],
    thresholds: &[f64],
    trials: u64,
    seed: u64,
    max_horizon: u64,
    tolerance: f64,
) -> Result<UnknownCReport> {
    require_trials(trials)?;
    if 2 * c_bar >= sensors {
        return Err(Error::InvalidConfig(format!(
            "c_bar must satisfy c_bar < s/2, got c_bar={c_bar}, s={sensors}"
        )));
    }
    if let Some(c) = actual.iter().find(|&&c| c > c_bar) {
        return Err(Error::InvalidConfig(format!("actual c={c} exceeds c_bar={c_bar}")));
    }
    let mut counts = actual.to_vec();
    counts.push(0);
    counts.sort_unstable();
    counts.dedup();
    let r = sensors - c_bar;
    let unit = model.info_constants()?.i.to_f64_lossy();
    let mut rows = Vec::new();
    for &c in &counts {
        let attack = if c == 0 { AttackSpec::none() } else { AttackSpec::flip(c, Placement::Random) };
        let scenario = Scenario::new(model.clone(), sensors, DetectorRule::Voting { r }, attack)?
            .with_max_horizon(max_horizon)?;
        for &level in thresholds {
            let thr = Thresholds::symmetric(F::lit(level))?;
            let cell = Cell::evaluate(&format!("voting r={r} vs flip c={c}"), &scenario, &thr, trials, seed, unit)?;
            let bound = (sensors - c_bar - c) as f64;
            let meets_bound = cell.normalized.is_some_and(|g| g >= bound - tolerance);
            rows.push(UnknownCRow { actual: c, threshold: level, cell, bound, meets_bound });
        }
    }
    Ok(UnknownCReport { sensors, c_bar, r, unit, tolerance, rows })
}
