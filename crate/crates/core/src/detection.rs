//! Sequential detectors over a panel of sensors.
//!
//! Each sensor keeps a cumulative log-likelihood ratio. The sum-SPRT compares
//! the total over a chosen sensor set against `-a` and `b`. The voting rule
//! works on first-crossing times instead: a sensor's vote for a barrier is
//! latched the first time its statistic reaches it and is never withdrawn,
//! and the rule stops once `r` sensors have latched the same barrier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Hypothesis;
use crate::real::Real;

/// Lower barrier `-a` and upper barrier `b`, both magnitudes positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds<F> {
    pub a: F,
    pub b: F,
}

impl<F: Real> Thresholds<F> {
    pub fn new(a: F, b: F) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > F::zero() && b > F::zero()) {
            return Err(Error::InvalidConfig(format!(
                "thresholds must be positive and finite, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn symmetric(level: F) -> Result<Self> {
        Self::new(level, level)
    }

    #[inline]
    pub fn at_or_below_lower(&self, s: F) -> bool {
        s <= -self.a + F::barrier_slack(self.a)
    }

    #[inline]
    pub fn at_or_above_upper(&self, s: F) -> bool {
        s >= self.b - F::barrier_slack(self.b)
    }
}

/// Outcome of one decision step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    /// Accept state 0 at the carried stopping time.
    Accept0(u64),
    /// Accept state 1 at the carried stopping time.
    Accept1(u64),
}

impl Decision {
    pub fn accepted(self) -> Option<(Hypothesis, u64)> {
        match self {
            Decision::Continue => None,
            Decision::Accept0(t) => Some((Hypothesis::H0, t)),
            Decision::Accept1(t) => Some((Hypothesis::H1, t)),
        }
    }

    fn accept(h: Hypothesis, t: u64) -> Self {
        match h {
            Hypothesis::H0 => Decision::Accept0(t),
            Hypothesis::H1 => Decision::Accept1(t),
        }
    }
}

/// Per-sensor cumulative statistics and latched first-crossing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorPanel<F> {
    k: u64,
    sums: Vec<F>,
    low_times: Vec<Option<u64>>,
    high_times: Vec<Option<u64>>,
    n_low: usize,
    n_high: usize,
}

impl<F: Real> SensorPanel<F> {
    pub fn new(sensors: usize) -> Self {
        Self {
            k: 0,
            sums: vec![F::zero(); sensors],
            low_times: vec![None; sensors],
            high_times: vec![None; sensors],
            n_low: 0,
            n_high: 0,
        }
    }

    /// Builds a panel at time `k` with the given statistics and no latches.
    pub fn from_sums(k: u64, sums: Vec<F>) -> Self {
        let n = sums.len();
        Self { k, sums, low_times: vec![None; n], high_times: vec![None; n], n_low: 0, n_high: 0 }
    }

    /// Adds one step of log-likelihood ratios and latches any new crossings.
    pub fn update(&mut self, llrs: &[F], thr: &Thresholds<F>) -> Result<()> {
        if llrs.len() != self.sums.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} log-likelihood ratios, got {}",
                self.sums.len(),
                llrs.len()
            )));
        }
        if let Some(bad) = llrs.iter().find(|l| !l.is_finite()) {
            return Err(Error::DegenerateModel(format!("non-finite log-likelihood ratio {bad}")));
        }
        self.k += 1;
        for (i, &l) in llrs.iter().enumerate() {
            let s = self.sums[i] + l;
            self.sums[i] = s;
            if self.low_times[i].is_none() && thr.at_or_below_lower(s) {
                self.low_times[i] = Some(self.k);
                self.n_low += 1;
            }
            if self.high_times[i].is_none() && thr.at_or_above_upper(s) {
                self.high_times[i] = Some(self.k);
                self.n_high += 1;
            }
        }
        Ok(())
    }

    pub fn time(&self) -> u64 {
        self.k
    }

    pub fn sensors(&self) -> usize {
        self.sums.len()
    }

    pub fn sums(&self) -> &[F] {
        &self.sums
    }

    pub fn low_times(&self) -> &[Option<u64>] {
        &self.low_times
    }

    pub fn high_times(&self) -> &[Option<u64>] {
        &self.high_times
    }

    pub fn crossed_low(&self, i: usize) -> bool {
        self.low_times[i].is_some()
    }

    pub fn crossed_high(&self, i: usize) -> bool {
        self.high_times[i].is_some()
    }

    pub fn low_count(&self) -> usize {
        self.n_low
    }

    pub fn high_count(&self) -> usize {
        self.n_high
    }

    /// `r`-th smallest first-crossing time of the lower barrier (1-based `r`).
    pub fn low_order_statistic(&self, r: usize) -> Option<u64> {
        order_statistic(&self.low_times, r)
    }

    /// `r`-th smallest first-crossing time of the upper barrier (1-based `r`).
    pub fn high_order_statistic(&self, r: usize) -> Option<u64> {
        order_statistic(&self.high_times, r)
    }
}

fn order_statistic(times: &[Option<u64>], r: usize) -> Option<u64> {
    if r == 0 {
        return None;
    }
    let mut seen: Vec<u64> = times.iter().flatten().copied().collect();
    if seen.len() < r {
        return None;
    }
    seen.select_nth_unstable(r - 1);
    Some(seen[r - 1])
}

/// Sum-SPRT over `sensor_set`: accept 0 once the summed statistic is at or
/// below `-a`, accept 1 once it is at or above `b`.
pub fn sum_sprt_decide<F: Real>(
    panel: &SensorPanel<F>,
    sensor_set: &[usize],
    thr: &Thresholds<F>,
) -> Result<Decision> {
    if sensor_set.is_empty() {
        return Err(Error::InvalidConfig("sum-SPRT sensor set is empty".into()));
    }
    let mut total = F::zero();
    for &i in sensor_set {
        total = total + *panel.sums.get(i).ok_or_else(|| {
            Error::InvalidConfig(format!("sensor index {i} out of range for {} sensors", panel.sensors()))
        })?;
    }
    let k = panel.time();
    Ok(if thr.at_or_below_lower(total) {
        Decision::Accept0(k)
    } else if thr.at_or_above_upper(total) {
        Decision::Accept1(k)
    } else {
        Decision::Continue
    })
}

/// Checks `s/2 < r <= s`.
pub fn validate_vote_count(sensors: usize, r: usize) -> Result<()> {
    if 2 * r <= sensors || r > sensors {
        return Err(Error::InvalidConfig(format!(
            "voting parameter r={r} must satisfy s/2 < r <= s for s={sensors}"
        )));
    }
    Ok(())
}

/// Voting rule with parameter `r`. When both tallies reach `r` on the same
/// step, a fair coin drawn from `rng` picks the decision. The panel only ever
/// reaches this state on the step that completes both tallies, since the rule
/// stops as soon as either one does.
pub fn voting_decide<F: Real, R: Rng + ?Sized>(
    panel: &SensorPanel<F>,
    r: usize,
    rng: &mut R,
) -> Result<Decision> {
    validate_vote_count(panel.sensors(), r)?;
    let k = panel.time();
    let low = panel.low_count() >= r;
    let high = panel.high_count() >= r;
    Ok(match (low, high) {
        (false, false) => Decision::Continue,
        (true, false) => Decision::Accept0(k),
        (false, true) => Decision::Accept1(k),
        (true, true) => {
            let h = if rng.random_bool(0.5) { Hypothesis::H1 } else { Hypothesis::H0 };
            Decision::accept(h, k)
        }
    })
}

/// Which fusion rule the detector runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorRule {
    SumSprt { sensors: Vec<usize> },
    Voting { r: usize },
}

impl DetectorRule {
    pub fn validate(&self, sensors: usize) -> Result<()> {
        match self {
            DetectorRule::SumSprt { sensors: set } => {
                if set.is_empty() {
                    return Err(Error::InvalidConfig("sum-SPRT sensor set is empty".into()));
                }
                if let Some(i) = set.iter().find(|&&i| i >= sensors) {
                    return Err(Error::InvalidConfig(format!(
                        "sum-SPRT sensor index {i} out of range for {sensors} sensors"
                    )));
                }
                let mut sorted = set.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != set.len() {
                    return Err(Error::InvalidConfig("sum-SPRT sensor set has duplicates".into()));
                }
                Ok(())
            }
            DetectorRule::Voting { r } => validate_vote_count(sensors, *r),
        }
    }

    /// Sum-SPRT over every sensor.
    pub fn sum_all(sensors: usize) -> Self {
        DetectorRule::SumSprt { sensors: (0..sensors).collect() }
    }

    pub fn decide<F: Real, R: Rng + ?Sized>(
        &self,
        panel: &SensorPanel<F>,
        thr: &Thresholds<F>,
        rng: &mut R,
    ) -> Result<Decision> {
        match self {
            DetectorRule::SumSprt { sensors } => sum_sprt_decide(panel, sensors, thr),
            DetectorRule::Voting { r } => voting_decide(panel, *r, rng),
        }
    }
}
