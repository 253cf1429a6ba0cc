//! Exact error probabilities and stopping-time laws for finite-alphabet
//! models, by dynamic programming.
//!
//! A single sensor's cumulative statistic is a walk on the lattice of
//! letter-count vectors. The first pass propagates mass that has latched
//! neither barrier and records where it exits; a second pass from every exit
//! layer finds the first time the other barrier is reached. The result is the
//! exact joint law of the two first-crossing times, truncated at a horizon.
//!
//! Sensors are independent given the attack, so the voting rule's law follows
//! from per-sensor crossing laws: at each step every sensor falls into one of
//! nine classes (each barrier latched earlier, latched now, or not yet), and
//! the tallies before and after the step are obtained by convolving those
//! classes over sensors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::Thresholds;
use crate::error::{Error, Result};
use crate::models::{Hypothesis, HypothesisModel};
use crate::real::Real;

/// Default cap on lattice states held in one DP layer.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Attacks the oracle can evaluate exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleAttack {
    None,
    /// `c` sensors deliver the opposite hypothesis' law.
    Flip(usize),
}

/// Joint law of `(tau_low, tau_high)` for one sensor, truncated at `horizon`.
///
/// Index `t - 1` holds time `t` for `t in 1..=horizon`; index `horizon` holds
/// "not crossed within the horizon".
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingLaw<F> {
    horizon: usize,
    joint: Vec<F>,
}

impl<F: Real> CrossingLaw<F> {
    fn zeros(horizon: usize) -> Self {
        Self { horizon, joint: vec![F::zero(); (horizon + 1) * (horizon + 1)] }
    }

    fn slot(&self, t: Option<usize>) -> usize {
        match t {
            Some(t) => {
                debug_assert!(t >= 1 && t <= self.horizon);
                t - 1
            }
            None => self.horizon,
        }
    }

    fn add(&mut self, low: Option<usize>, high: Option<usize>, p: F) {
        let i = self.slot(low) * (self.horizon + 1) + self.slot(high);
        self.joint[i] = self.joint[i] + p;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P[tau_low = low, tau_high = high]`; `None` means beyond the horizon.
    pub fn prob(&self, low: Option<usize>, high: Option<usize>) -> F {
        self.joint[self.slot(low) * (self.horizon + 1) + self.slot(high)]
    }

    pub fn total(&self) -> F {
        self.joint.iter().copied().sum()
    }

    /// Mass that crossed neither barrier within the horizon.
    pub fn uncrossed(&self) -> F {
        self.prob(None, None)
    }

    /// Cumulative tables used by the voting convolution: the joint CDF of
    /// pairs where both barriers were crossed (`(horizon + 1)^2`, indexed by
    /// time), then `P[tau_low <= t, tau_high = inf]` and
    /// `P[tau_high <= t, tau_low = inf]` (each `horizon + 1`).
    fn cumulative(&self) -> Vec<F> {
        let n = self.horizon + 1;
        let mut out = vec![F::zero(); n * n + 2 * n];
        for t1 in 1..n {
            for t2 in 1..n {
                out[t1 * n + t2] = self.prob(Some(t1), Some(t2)) + out[(t1 - 1) * n + t2]
                    + out[t1 * n + t2 - 1]
                    - out[(t1 - 1) * n + t2 - 1];
            }
        }
        for t in 1..n {
            out[n * n + t] = out[n * n + t - 1] + self.prob(Some(t), None);
            out[n * n + n + t] = out[n * n + n + t - 1] + self.prob(None, Some(t));
        }
        out
    }
}

/// Per-sensor transition-class probabilities at step `t`. Index `3 * l + h`
/// where each of `l` (low barrier) and `h` (high barrier) is 0 = latched
/// before `t`, 1 = latched at `t`, 2 = not latched by `t`.
fn step_classes<F: Real>(packed: &[F], horizon: usize, t: usize) -> [F; 9] {
    let n = horizon + 1;
    let both = &packed[..n * n];
    let low_only = &packed[n * n..n * n + n];
    let high_only = &packed[n * n + n..];
    // P[tau_low <= x, tau_high <= y] with x, y in 0..=horizon as times
    let both_le = |x: usize, y: usize| both[x * n + y];
    // P[tau_low <= x] = P[tau_low <= x, tau_high <= horizon] + P[tau_low <= x, tau_high = inf]
    let low_le = |x: usize| both_le(x, horizon) + low_only[x];
    let high_le = |y: usize| both_le(horizon, y) + high_only[y];
    // G(x, y) = P[tau_low <= x, tau_high <= y], allowing "infinite" bounds
    // through None.
    let g = |x: Option<usize>, y: Option<usize>| -> F {
        match (x, y) {
            (Some(x), Some(y)) => both_le(x, y),
            (Some(x), None) => low_le(x),
            (None, Some(y)) => high_le(y),
            (None, None) => F::one(),
        }
    };
    // cumulative bounds for class boundaries: before = <= t-1, now = == t, not = > t
    let lim = [Some(t - 1), Some(t), None];
    let mut out = [F::zero(); 9];
    for l in 0..3 {
        for h in 0..3 {
            // P[low in (lo_l, hi_l], high in (lo_h, hi_h]]
            let (l_lo, l_hi) = interval(l, &lim);
            let (h_lo, h_hi) = interval(h, &lim);
            let cdf = |x: Option<Option<usize>>, y: Option<Option<usize>>| match (x, y) {
                (Some(x), Some(y)) => g(x, y),
                _ => F::zero(),
            };
            let p = cdf(Some(l_hi), Some(h_hi)) - cdf(l_lo, Some(h_hi)) - cdf(Some(l_hi), h_lo)
                + cdf(l_lo, h_lo);
            out[3 * l + h] = p.max(F::zero());
        }
    }
    out
}

/// `(lower, upper]` bounds of class `k`; the outer `Option` on the lower bound
/// is `None` for an empty lower limit (minus infinity).
fn interval(k: usize, lim: &[Option<usize>; 3]) -> (Option<Option<usize>>, Option<usize>) {
    match k {
        0 => (None, lim[0]),
        1 => (Some(lim[0]), lim[1]),
        _ => (Some(lim[1]), lim[2]),
    }
}

type CountKey = Vec<u32>;

fn lattice_sum<F: Real>(key: &CountKey, llr: &[F]) -> F {
    key.iter().zip(llr).map(|(&n, &l)| F::from_u32(n).expect("count") * l).sum()
}

fn check_cap(len: usize, cap: usize) -> Result<()> {
    if len > cap {
        return Err(Error::Capacity(format!(
            "lattice layer holds {len} states (cap {cap}); use a shorter horizon, fewer letters or wider barriers"
        )));
    }
    Ok(())
}

/// Exact joint law of the first-crossing times of `-a` and `+b` for one
/// sensor observing state `theta`, truncated at `horizon`.
pub fn single_sensor_crossing_distribution<F: Real>(
    model: &HypothesisModel<F>,
    thr: &Thresholds<F>,
    theta: Hypothesis,
    horizon: usize,
    state_cap: usize,
) -> Result<CrossingLaw<F>> {
    let alphabet = model.alphabet().ok_or_else(|| {
        Error::InvalidConfig(format!("model `{}` is not a finite alphabet", model.name()))
    })?;
    if horizon == 0 {
        return Err(Error::InvalidConfig("oracle horizon must be at least 1".into()));
    }
    let llr = alphabet.llr();
    let mass = alphabet.mass(theta);
    let letters = llr.len();
    let mut law = CrossingLaw::zeros(horizon);

    // exits[t] = lattice states at which the walk first latched a barrier at t
    let mut low_exits: Vec<BTreeMap<CountKey, F>> = vec![BTreeMap::new(); horizon + 1];
    let mut high_exits: Vec<BTreeMap<CountKey, F>> = vec![BTreeMap::new(); horizon + 1];

    let mut layer: BTreeMap<CountKey, F> = BTreeMap::new();
    layer.insert(vec![0; letters], F::one());
    for t in 1..=horizon {
        let mut next: BTreeMap<CountKey, F> = BTreeMap::new();
        for (key, &p) in &layer {
            for (j, &m) in mass.iter().enumerate() {
                let mut k2 = key.clone();
                k2[j] += 1;
                let s = lattice_sum(&k2, llr);
                let q = p * m;
                let target = if thr.at_or_below_lower(s) {
                    &mut low_exits[t]
                } else if thr.at_or_above_upper(s) {
                    &mut high_exits[t]
                } else {
                    &mut next
                };
                let e = target.entry(k2).or_insert(F::zero());
                *e = *e + q;
            }
        }
        check_cap(next.len(), state_cap)?;
        layer = next;
    }
    let never: F = layer.values().copied().sum();
    law.add(None, None, never);

    // second pass: from each exit layer, first time the other barrier is hit
    for t in 1..=horizon {
        for (exits, low_first) in [(&low_exits[t], true), (&high_exits[t], false)] {
            if exits.is_empty() {
                continue;
            }
            let mut layer = exits.clone();
            for u in t + 1..=horizon {
                let mut next: BTreeMap<CountKey, F> = BTreeMap::new();
                for (key, &p) in &layer {
                    for (j, &m) in mass.iter().enumerate() {
                        let mut k2 = key.clone();
                        k2[j] += 1;
                        let s = lattice_sum(&k2, llr);
                        let q = p * m;
                        let hit = if low_first { thr.at_or_above_upper(s) } else { thr.at_or_below_lower(s) };
                        if hit {
                            if low_first {
                                law.add(Some(t), Some(u), q);
                            } else {
                                law.add(Some(u), Some(t), q);
                            }
                        } else {
                            let e = next.entry(k2).or_insert(F::zero());
                            *e = *e + q;
                        }
                    }
                }
                check_cap(next.len(), state_cap)?;
                layer = next;
            }
            let rest: F = layer.values().copied().sum();
            if low_first {
                law.add(Some(t), None, rest);
            } else {
                law.add(None, Some(t), rest);
            }
        }
    }
    Ok(law)
}

/// Exact behaviour of the voting rule under one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingLaw<F> {
    pub accept0: F,
    pub accept1: F,
    /// Mass still undecided at the horizon.
    pub residual: F,
    /// `E[T; T <= horizon]`.
    pub time_mass: F,
    /// `P[T = t]` for `t = 1..=horizon` (index `t - 1`).
    pub decision_pmf: Vec<F>,
}

impl<F: Real> VotingLaw<F> {
    /// `E[T | T <= horizon]`.
    pub fn mean_time(&self) -> F {
        self.time_mass / (self.accept0 + self.accept1)
    }

    /// `E[T^2 | T <= horizon]`.
    pub fn second_moment(&self) -> F {
        let m2: F = self
            .decision_pmf
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let t = F::from_usize_lossy(i + 1);
                t * t * p
            })
            .sum();
        m2 / (self.accept0 + self.accept1)
    }
}

/// Exact `(alpha, beta, E[T])` of the voting rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactOperatingPoint<F> {
    pub horizon: usize,
    pub under_h0: VotingLaw<F>,
    pub under_h1: VotingLaw<F>,
}

impl<F: Real> ExactOperatingPoint<F> {
    pub fn alpha(&self) -> F {
        self.under_h0.accept1
    }

    pub fn beta(&self) -> F {
        self.under_h1.accept0
    }

    pub fn asn0(&self) -> F {
        self.under_h0.mean_time()
    }

    pub fn asn1(&self) -> F {
        self.under_h1.mean_time()
    }
}

/// Law of the voting rule given per-sensor crossing laws, one per sensor.
pub fn voting_law_from_sensors<F: Real>(laws: &[&CrossingLaw<F>], r: usize) -> Result<VotingLaw<F>> {
    let s = laws.len();
    crate::detection::validate_vote_count(s, r)?;
    let horizon = laws[0].horizon();
    if laws.iter().any(|l| l.horizon() != horizon) {
        return Err(Error::InvalidConfig("crossing laws must share a horizon".into()));
    }
    let packed: Vec<Vec<F>> = laws.iter().map(|l| l.cumulative()).collect();
    let half = F::lit(0.5);
    let dim = r + 1;
    // state (low_before, low_now, high_before, high_now), each saturated at r;
    // mass with a tally already at r before the step is dropped
    let idx = |lb: usize, ln: usize, hb: usize, hn: usize| ((lb * dim + ln) * dim + hb) * dim + hn;
    let mut law = VotingLaw {
        accept0: F::zero(),
        accept1: F::zero(),
        residual: F::zero(),
        time_mass: F::zero(),
        decision_pmf: vec![F::zero(); horizon],
    };
    for t in 1..=horizon {
        let mut dist = vec![F::zero(); dim.pow(4)];
        dist[idx(0, 0, 0, 0)] = F::one();
        for p in &packed {
            let classes = step_classes(p, horizon, t);
            let mut next = vec![F::zero(); dim.pow(4)];
            for lb in 0..r {
                for ln in lb..dim {
                    for hb in 0..r {
                        for hn in hb..dim {
                            let cur = dist[idx(lb, ln, hb, hn)];
                            if cur == F::zero() {
                                continue;
                            }
                            for (c, &q) in classes.iter().enumerate() {
                                if q == F::zero() {
                                    continue;
                                }
                                let (l, h) = (c / 3, c % 3);
                                let (dlb, dln) = match l {
                                    0 => (1, 1),
                                    1 => (0, 1),
                                    _ => (0, 0),
                                };
                                let (dhb, dhn) = match h {
                                    0 => (1, 1),
                                    1 => (0, 1),
                                    _ => (0, 0),
                                };
                                let nlb = lb + dlb;
                                let nhb = hb + dhb;
                                if nlb >= r || nhb >= r {
                                    continue;
                                }
                                let nln = (ln + dln).min(r);
                                let nhn = (hn + dhn).min(r);
                                let slot = &mut next[idx(nlb, nln, nhb, nhn)];
                                *slot = *slot + cur * q;
                            }
                        }
                    }
                }
            }
            dist = next;
        }
        let mut a0 = F::zero();
        let mut a1 = F::zero();
        for lb in 0..r {
            for hb in 0..r {
                for ln in lb..dim {
                    for hn in hb..dim {
                        let p = dist[idx(lb, ln, hb, hn)];
                        match (ln == r, hn == r) {
                            (true, true) => {
                                a0 = a0 + half * p;
                                a1 = a1 + half * p;
                            }
                            (true, false) => a0 = a0 + p,
                            (false, true) => a1 = a1 + p,
                            (false, false) => {}
                        }
                    }
                }
            }
        }
        law.accept0 = law.accept0 + a0;
        law.accept1 = law.accept1 + a1;
        law.decision_pmf[t - 1] = a0 + a1;
        law.time_mass = law.time_mass + F::from_usize_lossy(t) * (a0 + a1);
    }
    law.residual = (F::one() - law.accept0 - law.accept1).max(F::zero());
    Ok(law)
}

/// Exact operating point of the voting rule with `s` sensors under no attack
/// or a flip attack on `c` of them.
pub fn exact_voting_operating_point<F: Real>(
    model: &HypothesisModel<F>,
    sensors: usize,
    r: usize,
    thr: &Thresholds<F>,
    horizon: usize,
    attack: OracleAttack,
) -> Result<ExactOperatingPoint<F>> {
    crate::detection::validate_vote_count(sensors, r)?;
    let c = match attack {
        OracleAttack::None => 0,
        OracleAttack::Flip(c) => {
            if sensors <= 2 * c {
                return Err(Error::InvalidConfig(format!(
                    "flip attack requires s > 2c, got s={sensors}, c={c}"
                )));
            }
            c
        }
    };
    let law0 = single_sensor_crossing_distribution(model, thr, Hypothesis::H0, horizon, DEFAULT_STATE_CAP)?;
    let law1 = single_sensor_crossing_distribution(model, thr, Hypothesis::H1, horizon, DEFAULT_STATE_CAP)?;
    let under = |honest: &CrossingLaw<F>, flipped: &CrossingLaw<F>| {
        let mut laws: Vec<&CrossingLaw<F>> = vec![honest; sensors - c];
        laws.extend(std::iter::repeat_n(flipped, c));
        voting_law_from_sensors(&laws, r)
    };
    Ok(ExactOperatingPoint {
        horizon,
        under_h0: under(&law0, &law1)?,
        under_h1: under(&law1, &law0)?,
    })
}

/// Like [`exact_voting_operating_point`] but fails with a capacity error when
/// more than `max_residual` mass is undecided at the horizon under either state.
pub fn exact_voting_operating_point_checked<F: Real>(
    model: &HypothesisModel<F>,
    sensors: usize,
    r: usize,
    thr: &Thresholds<F>,
    horizon: usize,
    attack: OracleAttack,
    max_residual: F,
) -> Result<ExactOperatingPoint<F>> {
    let point = exact_voting_operating_point(model, sensors, r, thr, horizon, attack)?;
    let worst = point.under_h0.residual.max(point.under_h1.residual);
    if worst > max_residual {
        return Err(Error::Capacity(format!(
            "undecided mass {worst} at horizon {horizon} exceeds {max_residual}; widen the horizon"
        )));
    }
    Ok(point)
}
