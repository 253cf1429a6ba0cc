//! One sequential test from the first observation to a decision.
//!
//! Per step the runner draws the true observation of every sensor (in index
//! order), lets the attack draw its randomness and produce a bias, checks the
//! bias support, converts delivered observations to log-likelihood ratios,
//! updates the panel and asks the detector for a decision.
//!
//! # Importance sampling
//!
//! With [`Sampling::Importance`] the honest sensors relevant to the detector
//! are simulated under a mixture of changed measures. Per trial a uniformly
//! random subset `A` of `m` of them is drawn; sensors in `A` observe the
//! opposite hypothesis until they latch the error barrier (`+b` under state 0,
//! `-a` under state 1), after which they revert to the true law. The attack
//! and the detector run unchanged. The returned log-weight is the exact
//! `log dP/dQ` of the mixture on the stopped path,
//!
//! ```text
//! w = C(n, m) / e_m(exp(V_1), .., exp(V_n))
//! ```
//!
//! where `V_i = ±S_i(min(T, tau_i))` is sensor `i`'s statistic frozen at its
//! error-barrier latch and `e_m` is the elementary symmetric polynomial.
//!
//! For the sum-SPRT every random value entering the sum (honest draws and
//! flip forgeries) is drawn from its exponential tilt `exp(w L) dP`, where
//! `w` is the nonzero root of `sum_i log E[exp(w L_i)] = 0` over the
//! delivered values in the sum. The weight is
//! `-w S'(T) + T sum_i log E[exp(w L_i)]` over the tilted sensors, with
//! `S'` their part of the sum.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{check_admissible, suppression_target, AttackKind, AttackSpec, AttackerView};
use crate::detection::{Decision, DetectorRule, SensorPanel, Thresholds};
use crate::error::{Error, Result};
use crate::models::{Hypothesis, HypothesisModel};
use crate::real::{log_binomial, log_elementary_symmetric, Real};

/// Default cap on the number of steps in a trial.
pub const DEFAULT_MAX_HORIZON: u64 = 1_000_000;

/// Model, panel size, detector, attack and horizon: everything a trial needs
/// besides the state, thresholds and randomness.
#[derive(Debug, Clone)]
pub struct Scenario<F> {
    pub model: HypothesisModel<F>,
    pub sensors: usize,
    pub rule: DetectorRule,
    pub attack: AttackSpec<F>,
    pub max_horizon: u64,
}

impl<F: Real> Scenario<F> {
    pub fn new(
        model: HypothesisModel<F>,
        sensors: usize,
        rule: DetectorRule,
        attack: AttackSpec<F>,
    ) -> Result<Self> {
        let s = Self { model, sensors, rule, attack, max_horizon: DEFAULT_MAX_HORIZON };
        s.validate()?;
        Ok(s)
    }

    pub fn with_max_horizon(mut self, max_horizon: u64) -> Result<Self> {
        self.max_horizon = max_horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors == 0 {
            return Err(Error::InvalidConfig("at least one sensor is required".into()));
        }
        if self.max_horizon == 0 {
            return Err(Error::InvalidConfig("max_horizon must be at least 1".into()));
        }
        self.rule.validate(self.sensors)?;
        self.attack.validate(self.sensors)
    }

    /// Tilt size that makes the error event typical under the changed
    /// measure: enough honest sensors to complete a wrong vote together with
    /// the compromised ones.
    pub fn default_tilt(&self) -> Option<usize> {
        match self.rule {
            DetectorRule::SumSprt { .. } => None,
            DetectorRule::Voting { r } => {
                let honest = self.sensors - self.attack.active_count();
                Some(r.saturating_sub(self.attack.assisting_sensors()).clamp(1, honest.max(1)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    Plain,
    /// Voting: tilt `m` honest sensors (all relevant honest sensors when
    /// `None`). The sum-SPRT ignores `m`.
    Importance { tilted: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept0,
    Accept1,
    /// No decision within the horizon.
    Truncated,
}

impl Verdict {
    pub fn hypothesis(self) -> Option<Hypothesis> {
        match self {
            Verdict::Accept0 => Some(Hypothesis::H0),
            Verdict::Accept1 => Some(Hypothesis::H1),
            Verdict::Truncated => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome<F> {
    pub verdict: Verdict,
    pub stopping_time: u64,
    /// `log dP/dQ` of the simulated path; zero for plain sampling.
    pub log_weight: F,
}

impl<F: Real> TrialOutcome<F> {
    /// True when the verdict contradicts `theta`.
    pub fn is_error(&self, theta: Hypothesis) -> bool {
        self.verdict.hypothesis() == Some(theta.opposite())
    }
}

/// Final panel and compromised set of a trial, for inspection in tests.
#[derive(Debug, Clone)]
pub struct TrialTrace<F> {
    pub outcome: TrialOutcome<F>,
    pub panel: SensorPanel<F>,
    pub compromised: Vec<usize>,
}

pub fn run_trial<F: Real, R: Rng>(
    scenario: &Scenario<F>,
    theta: Hypothesis,
    thr: &Thresholds<F>,
    sampling: Sampling,
    rng: &mut R,
) -> Result<TrialOutcome<F>> {
    run_trial_traced(scenario, theta, thr, sampling, rng).map(|t| t.outcome)
}

pub fn run_trial_traced<F: Real, R: Rng>(
    scenario: &Scenario<F>,
    theta: Hypothesis,
    thr: &Thresholds<F>,
    sampling: Sampling,
    rng: &mut R,
) -> Result<TrialTrace<F>> {
    if scenario.max_horizon == 0 {
        return Err(Error::InvalidConfig("max_horizon must be at least 1".into()));
    }
    let s = scenario.sensors;
    let model = &scenario.model;
    let support = scenario.attack.resolve_support(s, theta, rng);
    let mut attack = scenario.attack.instantiate(support.clone());
    let mut is_compromised = vec![false; s];
    for &i in &support {
        is_compromised[i] = true;
    }

    let in_rule = |i: usize| match &scenario.rule {
        DetectorRule::SumSprt { sensors } => sensors.contains(&i),
        DetectorRule::Voting { .. } => true,
    };
    let relevant: Vec<usize> = (0..s).filter(|&i| !is_compromised[i] && in_rule(i)).collect();
    let voting = matches!(scenario.rule, DetectorRule::Voting { .. });

    // tilted[i]: sensor i currently observes the opposite hypothesis
    let mut tilted = vec![false; s];
    let mut tilt_size = 0;
    if let Sampling::Importance { tilted: m } = sampling {
        if relevant.is_empty() {
            return Err(Error::InvalidConfig(
                "importance sampling needs at least one honest sensor in the detector".into(),
            ));
        }
        tilt_size = m.unwrap_or(relevant.len()).clamp(1, relevant.len());
        for j in index::sample(rng, relevant.len(), tilt_size) {
            tilted[relevant[j]] = true;
        }
    }
    let mut sum_tilt = None;
    if !voting && tilt_size > 0 {
        tilted.fill(false);
        let in_sum = support.iter().filter(|&&i| in_rule(i)).count();
        sum_tilt = lundberg_root(scenario, theta, relevant.len(), in_sum)?;
    }
    let importance = tilt_size > 0;
    // flip forgeries in the sum are tilted along with the honest draws
    let flipped: Vec<usize> = match scenario.attack.kind {
        AttackKind::Flip => support.iter().copied().filter(|&i| in_rule(i)).collect(),
        _ => Vec::new(),
    };
    let flip_tilt = if flipped.is_empty() { None } else { sum_tilt };
    let mut tilted_sum = F::zero();
    let error_high = theta == Hypothesis::H0;
    // V_i per relevant sensor, frozen at its error-barrier latch for voting
    let mut frozen = vec![None::<F>; s];

    let mut panel = SensorPanel::<F>::new(s);
    let mut obs = vec![F::zero(); s];
    let mut compromised_obs = vec![F::zero(); support.len()];
    let mut bias = vec![F::zero(); s];
    let mut llr = vec![F::zero(); s];

    let finish = |verdict: Verdict, time: u64, panel: &SensorPanel<F>, frozen: &[Option<F>], tilted_sum: F| {
        let log_weight = if !voting {
            match sum_tilt {
                Some(w) => {
                    let steps = F::lit(time as f64);
                    let honest = F::from_usize_lossy(relevant.len()) * model.log_mgf(theta, w);
                    let forged = F::from_usize_lossy(flipped.len()) * model.log_mgf(theta.opposite(), w);
                    -w * tilted_sum + steps * (honest + forged)
                }
                None => F::zero(),
            }
        } else if importance {
            let v: Vec<F> = relevant
                .iter()
                .map(|&i| {
                    let raw = frozen[i].unwrap_or(panel.sums()[i]);
                    if error_high {
                        raw
                    } else {
                        -raw
                    }
                })
                .collect();
            F::lit(log_binomial(relevant.len(), tilt_size)) - log_elementary_symmetric(&v, tilt_size)
        } else {
            F::zero()
        };
        TrialOutcome { verdict, stopping_time: time, log_weight }
    };

    for k in 1..=scenario.max_horizon {
        for (i, x) in obs.iter_mut().enumerate() {
            *x = match sum_tilt {
                Some(w) if !is_compromised[i] && in_rule(i) => model.sample_tilted(theta, w, rng),
                _ => model.sample(if tilted[i] { theta.opposite() } else { theta }, rng),
            };
        }
        for (slot, &i) in compromised_obs.iter_mut().zip(&support) {
            *slot = obs[i];
        }
        bias.fill(F::zero());
        let view = AttackerView {
            theta,
            k,
            sensors: s,
            model,
            compromised_obs: &compromised_obs,
            forgery_tilt: flip_tilt,
        };
        attack.bias(&view, rng, &mut bias);
        check_admissible(&bias, &support)?;
        for i in 0..s {
            llr[i] = model.log_likelihood_ratio(obs[i] + bias[i])?;
        }
        panel.update(&llr, thr)?;
        if sum_tilt.is_some() {
            tilted_sum = tilted_sum + relevant.iter().chain(&flipped).map(|&i| llr[i]).sum::<F>();
        }

        if importance && voting {
            for &i in &relevant {
                let latched =
                    if error_high { panel.crossed_high(i) } else { panel.crossed_low(i) };
                if latched && frozen[i].is_none() {
                    frozen[i] = Some(panel.sums()[i]);
                    tilted[i] = false;
                }
            }
        }

        match scenario.rule.decide(&panel, thr, rng)? {
            Decision::Continue => {}
            Decision::Accept0(t) => {
                let outcome = finish(Verdict::Accept0, t, &panel, &frozen, tilted_sum);
                return Ok(TrialTrace { outcome, panel, compromised: support });
            }
            Decision::Accept1(t) => {
                let outcome = finish(Verdict::Accept1, t, &panel, &frozen, tilted_sum);
                return Ok(TrialTrace { outcome, panel, compromised: support });
            }
        }
    }
    let outcome = finish(Verdict::Truncated, scenario.max_horizon, &panel, &frozen, tilted_sum);
    Ok(TrialTrace { outcome, panel, compromised: support })
}

/// Positive multiple of the error direction solving
/// `n_h log E_theta[exp(w L)] + n_c log E[exp(w L_c)] = 0`, or `None` when the
/// sum already drifts toward the wrong barrier.
fn lundberg_root<F: Real>(
    scenario: &Scenario<F>,
    theta: Hypothesis,
    honest: usize,
    compromised: usize,
) -> Result<Option<F>> {
    let model = &scenario.model;
    let dir = if theta == Hypothesis::H0 { F::one() } else { -F::one() };
    let attack_llr = match scenario.attack.kind {
        AttackKind::Suppression { magnitude } => {
            Some(model.log_likelihood_ratio(suppression_target(model, theta, magnitude))?)
        }
        _ => None,
    };
    let f = |u: F| {
        let w = dir * u;
        let h = F::from_usize_lossy(honest) * model.log_mgf(theta, w);
        let c = F::from_usize_lossy(compromised)
            * match (&scenario.attack.kind, attack_llr) {
                (AttackKind::Flip, _) => model.log_mgf(theta.opposite(), w),
                (_, Some(l)) => w * l,
                _ => F::zero(),
            };
        h + c
    };
    let du = F::lit(1e-6);
    if f(du) >= F::zero() {
        return Ok(None);
    }
    let mut hi = F::one();
    let mut doublings = 0;
    while f(hi) < F::zero() {
        hi = hi + hi;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NumericalSearch("no exponential tilt balances the sum".into()));
        }
    }
    let mut lo = du;
    for _ in 0..200 {
        let mid = (lo + hi) * F::lit(0.5);
        if f(mid) < F::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(dir * (lo + hi) * F::lit(0.5)))
}
