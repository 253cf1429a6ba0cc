//! Brute-force path enumeration on the Bernoulli 0.2 / 0.8 pair, where every
//! statistic is an integer multiple of ln 4.

use std::collections::HashMap;

use byzsprt::{Hypothesis, HypothesisModel, Thresholds};

pub const P0: f64 = 0.2;
pub const P1: f64 = 0.8;

pub fn bern() -> HypothesisModel<f64> {
    HypothesisModel::bernoulli("bern", P0, P1).unwrap()
}

pub fn p_one(theta: Hypothesis) -> f64 {
    match theta {
        Hypothesis::H0 => P0,
        Hypothesis::H1 => P1,
    }
}

/// First times the integer walk of path `bits` reaches `-a` and `+b`.
pub fn crossings(bits: u32, horizon: usize, a: i32, b: i32) -> (Option<usize>, Option<usize>) {
    let (mut s, mut lo, mut hi) = (0i32, None, None);
    for k in 0..horizon {
        s += if bits >> k & 1 == 1 { 1 } else { -1 };
        if lo.is_none() && s <= -a {
            lo = Some(k + 1);
        }
        if hi.is_none() && s >= b {
            hi = Some(k + 1);
        }
    }
    (lo, hi)
}

pub fn path_prob(bits: u32, horizon: usize, theta: Hypothesis) -> f64 {
    let ones = (bits & ((1u32 << horizon) - 1)).count_ones() as i32;
    let p = p_one(theta);
    p.powi(ones) * (1.0 - p).powi(horizon as i32 - ones)
}

/// Voting outcome from latch times: `(P[accept 0], P[accept 1], time)`,
/// with ties split evenly.
pub fn vote(times: &[(Option<usize>, Option<usize>)], r: usize, horizon: usize) -> Option<(f64, f64, usize)> {
    for t in 1..=horizon {
        let lows = times.iter().filter(|(l, _)| l.is_some_and(|l| l <= t)).count();
        let highs = times.iter().filter(|(_, h)| h.is_some_and(|h| h <= t)).count();
        match (lows >= r, highs >= r) {
            (true, true) => return Some((0.5, 0.5, t)),
            (true, false) => return Some((1.0, 0.0, t)),
            (false, true) => return Some((0.0, 1.0, t)),
            _ => {}
        }
    }
    None
}

#[derive(Default, Debug)]
pub struct Totals {
    pub accept0: f64,
    pub accept1: f64,
    pub time_mass: f64,
}

impl Totals {
    fn add(&mut self, p: f64, outcome: Option<(f64, f64, usize)>) {
        if let Some((a0, a1, t)) = outcome {
            self.accept0 += p * a0;
            self.accept1 += p * a1;
            self.time_mass += p * t as f64;
        }
    }
}

/// Per-sensor enumeration of every path, then exact combination over
/// independent sensors by iterating over tuples of latch-time classes.
pub fn factorized(sensors: &[Hypothesis], r: usize, horizon: usize, a: i32, b: i32) -> Totals {
    let class_law = |theta| {
        let mut law: HashMap<(Option<usize>, Option<usize>), f64> = HashMap::new();
        for bits in 0..1u32 << horizon {
            *law.entry(crossings(bits, horizon, a, b)).or_default() += path_prob(bits, horizon, theta);
        }
        law.into_iter().collect::<Vec<_>>()
    };
    let laws: Vec<_> = sensors.iter().map(|&t| class_law(t)).collect();
    let mut totals = Totals::default();
    let mut idx = vec![0usize; laws.len()];
    loop {
        let mut p = 1.0;
        let mut times = Vec::with_capacity(laws.len());
        for (law, &i) in laws.iter().zip(&idx) {
            p *= law[i].1;
            times.push(law[i].0);
        }
        totals.add(p, vote(&times, r, horizon));
        let mut k = 0;
        loop {
            if k == idx.len() {
                return totals;
            }
            idx[k] += 1;
            if idx[k] < laws[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Every joint path of all sensors at once.
pub fn literal(sensors: &[Hypothesis], r: usize, horizon: usize, a: i32, b: i32) -> Totals {
    let s = sensors.len();
    let mut totals = Totals::default();
    let mask = (1u64 << horizon) - 1;
    for joint in 0..1u64 << (s * horizon) {
        let mut p = 1.0;
        let mut times = Vec::with_capacity(s);
        for (i, &theta) in sensors.iter().enumerate() {
            let bits = ((joint >> (i * horizon)) & mask) as u32;
            p *= path_prob(bits, horizon, theta);
            times.push(crossings(bits, horizon, a, b));
        }
        totals.add(p, vote(&times, r, horizon));
    }
    totals
}

/// Thresholds `(a ln 4, b ln 4)`.
pub fn thresholds(a: i32, b: i32) -> Thresholds<f64> {
    let ln4 = 4f64.ln();
    Thresholds::new(a as f64 * ln4, b as f64 * ln4).unwrap()
}
