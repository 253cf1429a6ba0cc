//! Byzantine attacks on a fixed set of compromised sensors.
//!
//! An attack sees only what it is entitled to: the true observations of its
//! own sensors, the state `theta`, the time index and the model. It returns a
//! bias vector over all `s` sensors whose support must stay inside the
//! compromised set; the trial runner rejects any other output.
//!
//! The flip attack uses two disjoint groups of `c` sensors, `O1` and `O2`.
//! Under state 0 the sensors in `O1` are compromised and forge draws from
//! `mu`; under state 1 those in `O2` forge draws from `nu`. Either way `O1`
//! delivers `mu` and `O2` delivers `nu`, so neither group carries information
//! about the state. Within one trial the compromised set is the active group.

use rand::seq::index;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Family, Hypothesis, HypothesisModel};
use crate::real::Real;

/// How the compromised set is chosen for each trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// The same sensor indices in every trial. For the flip attack these are
    /// `O1`; `O2` is their mirror image `i -> s - 1 - i`.
    Fixed(Vec<usize>),
    /// A uniformly random `c`-subset, redrawn per trial (for the flip attack,
    /// a random pair of disjoint `c`-subsets).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttackKind<F> {
    None,
    /// Compromised sensors deliver fresh draws from the opposite hypothesis.
    Flip,
    /// Compromised sensors deliver a fixed value that drives their statistic
    /// toward the wrong barrier.
    Suppression { magnitude: F },
}

/// Attack configuration; turned into a per-trial [`AttackStrategy`] once the
/// compromised set is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec<F> {
    pub kind: AttackKind<F>,
    pub compromised: usize,
    pub placement: Placement,
}

impl<F: Real> AttackSpec<F> {
    pub fn none() -> Self {
        Self { kind: AttackKind::None, compromised: 0, placement: Placement::Random }
    }

    pub fn flip(compromised: usize, placement: Placement) -> Self {
        Self { kind: AttackKind::Flip, compromised, placement }
    }

    pub fn suppression(compromised: usize, magnitude: F, placement: Placement) -> Self {
        Self { kind: AttackKind::Suppression { magnitude }, compromised, placement }
    }

    /// Number of sensors that actually receive a bias.
    pub fn active_count(&self) -> usize {
        match self.kind {
            AttackKind::None => 0,
            _ => self.compromised,
        }
    }

    pub fn validate(&self, sensors: usize) -> Result<()> {
        let c = self.compromised;
        if c > sensors {
            return Err(Error::InvalidConfig(format!("c={c} exceeds the number of sensors s={sensors}")));
        }
        if let AttackKind::Flip = self.kind {
            if sensors <= 2 * c {
                return Err(Error::InvalidConfig(format!(
                    "flip attack requires s > 2c, got s={sensors}, c={c}"
                )));
            }
        }
        if let AttackKind::Suppression { magnitude } = self.kind {
            if !magnitude.is_finite() || magnitude < F::zero() {
                return Err(Error::InvalidConfig(format!(
                    "suppression magnitude must be finite and non-negative, got {magnitude}"
                )));
            }
        }
        if let Placement::Fixed(ix) = &self.placement {
            if self.active_count() > 0 && ix.len() != c {
                return Err(Error::InvalidConfig(format!(
                    "fixed placement lists {} sensors but c={c}",
                    ix.len()
                )));
            }
            if let Some(i) = ix.iter().find(|&&i| i >= sensors) {
                return Err(Error::InvalidConfig(format!("compromised index {i} out of range")));
            }
            let mut sorted = ix.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ix.len() {
                return Err(Error::InvalidConfig("duplicate compromised indices".into()));
            }
            if let AttackKind::Flip = self.kind {
                if let Some(i) = ix.iter().find(|&&i| ix.contains(&(sensors - 1 - i))) {
                    return Err(Error::InvalidConfig(format!(
                        "flip placement: sensor {i} and its mirror {} would be in both groups",
                        sensors - 1 - i
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws the compromised set for one trial under `theta`, sorted
    /// ascending. The random draws consumed do not depend on `theta`.
    pub fn resolve_support<R: Rng + ?Sized>(&self, sensors: usize, theta: Hypothesis, rng: &mut R) -> Vec<usize> {
        let mut support = match self.kind {
            AttackKind::None => Vec::new(),
            AttackKind::Flip => {
                let (o1, o2) = self.flip_groups(sensors, rng);
                match theta {
                    Hypothesis::H0 => o1,
                    Hypothesis::H1 => o2,
                }
            }
            AttackKind::Suppression { .. } => match &self.placement {
                Placement::Fixed(ix) => ix.clone(),
                Placement::Random => index::sample(rng, sensors, self.compromised).into_vec(),
            },
        };
        support.sort_unstable();
        support
    }

    /// The flip attack's groups `(O1, O2)` for one trial.
    pub fn flip_groups<R: Rng + ?Sized>(&self, sensors: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let c = self.compromised;
        match &self.placement {
            Placement::Fixed(ix) => (ix.clone(), ix.iter().map(|&i| sensors - 1 - i).collect()),
            Placement::Random => {
                let mut both = index::sample(rng, sensors, 2 * c).into_vec();
                let o2 = both.split_off(c);
                (both, o2)
            }
        }
    }

    pub fn instantiate(&self, support: Vec<usize>) -> Box<dyn AttackStrategy<F>> {
        match self.kind {
            AttackKind::None => Box::new(NullAttack),
            AttackKind::Flip => Box::new(FlipAttack::new(support)),
            AttackKind::Suppression { magnitude } => {
                Box::new(SuppressionAttack::new(support, magnitude))
            }
        }
    }

    /// How many compromised sensors push toward the wrong barrier. Used to
    /// size the importance-sampling tilt.
    pub fn assisting_sensors(&self) -> usize {
        self.active_count()
    }
}

/// What an attacker observes at step `k`.
#[derive(Debug, Clone, Copy)]
pub struct AttackerView<'a, F> {
    pub theta: Hypothesis,
    pub k: u64,
    pub sensors: usize,
    pub model: &'a HypothesisModel<F>,
    /// True observations of the compromised sensors at step `k`, aligned
    /// with [`AttackStrategy::support`].
    pub compromised_obs: &'a [F],
    /// Set by the importance sampler: randomized forgeries should be drawn
    /// from their law tilted by `exp(w L)`. The simulator accounts for the
    /// change of measure.
    pub forgery_tilt: Option<F>,
}

/// An admissible attack: a bias rule with a fixed support.
pub trait AttackStrategy<F: Real>: Send {
    fn support(&self) -> &[usize];

    /// Writes the step-`k` bias for every sensor into `bias` (length `s`,
    /// zeroed by the caller).
    fn bias(&mut self, view: &AttackerView<'_, F>, rng: &mut dyn RngCore, bias: &mut [F]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullAttack;

impl<F: Real> AttackStrategy<F> for NullAttack {
    fn support(&self) -> &[usize] {
        &[]
    }

    fn bias(&mut self, _view: &AttackerView<'_, F>, _rng: &mut dyn RngCore, _bias: &mut [F]) {}
}

/// Returns the all-zero bias vector.
pub fn null_attack<F: Real>(sensors: usize) -> Vec<F> {
    vec![F::zero(); sensors]
}

/// Flip attack on the active group: every compromised sensor delivers a
/// fresh draw from the opposite hypothesis.
#[derive(Debug, Clone)]
pub struct FlipAttack {
    support: Vec<usize>,
}

impl FlipAttack {
    pub fn new(support: Vec<usize>) -> Self {
        Self { support }
    }
}

impl<F: Real> AttackStrategy<F> for FlipAttack {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn bias(&mut self, view: &AttackerView<'_, F>, rng: &mut dyn RngCore, bias: &mut [F]) {
        let opposite = view.theta.opposite();
        for (&i, &x) in self.support.iter().zip(view.compromised_obs) {
            let forged = match view.forgery_tilt {
                Some(w) => view.model.sample_tilted(opposite, w, rng),
                None => view.model.sample(opposite, rng),
            };
            bias[i] = forged - x;
        }
    }
}

/// Flip-attack bias for one step given all true observations.
pub fn flip_attack_bias<F: Real, R: Rng + ?Sized>(
    true_obs: &[F],
    theta: Hypothesis,
    model: &HypothesisModel<F>,
    support: &[usize],
    rng: &mut R,
) -> Vec<F> {
    let mut bias = vec![F::zero(); true_obs.len()];
    for &i in support {
        bias[i] = model.sample(theta.opposite(), rng) - true_obs[i];
    }
    bias
}

/// Value a suppressing sensor delivers: the far side of the decision
/// boundary, `magnitude` away from the midpoint for Gaussian pairs, or the
/// point with the most misleading log-likelihood ratio for finite alphabets.
pub fn suppression_target<F: Real>(model: &HypothesisModel<F>, theta: Hypothesis, magnitude: F) -> F {
    match model.family() {
        Family::Gaussian { mean0, mean1, .. } => {
            let mid = (*mean0 + *mean1) * F::lit(0.5);
            let toward_one = if *mean1 >= *mean0 { F::one() } else { -F::one() };
            match theta {
                Hypothesis::H0 => mid + toward_one * magnitude,
                Hypothesis::H1 => mid - toward_one * magnitude,
            }
        }
        Family::Finite(a) => {
            let pick = a
                .llr()
                .iter()
                .enumerate()
                .reduce(|best, cur| {
                    let better = match theta {
                        Hypothesis::H0 => cur.1 > best.1,
                        Hypothesis::H1 => cur.1 < best.1,
                    };
                    if better {
                        cur
                    } else {
                        best
                    }
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            a.points()[pick]
        }
    }
}

/// Stress attack: compromised sensors always deliver the misleading value
/// from [`suppression_target`].
#[derive(Debug, Clone)]
pub struct SuppressionAttack<F> {
    support: Vec<usize>,
    magnitude: F,
}

impl<F: Real> SuppressionAttack<F> {
    pub fn new(support: Vec<usize>, magnitude: F) -> Self {
        Self { support, magnitude }
    }
}

impl<F: Real> AttackStrategy<F> for SuppressionAttack<F> {
    fn support(&self) -> &[usize] {
        &self.support
    }

    fn bias(&mut self, view: &AttackerView<'_, F>, _rng: &mut dyn RngCore, bias: &mut [F]) {
        let target = suppression_target(view.model, view.theta, self.magnitude);
        for (&i, &x) in self.support.iter().zip(view.compromised_obs) {
            bias[i] = target - x;
        }
    }
}

/// Suppression-attack bias for one step given all true observations.
pub fn suppression_attack_bias<F: Real>(
    true_obs: &[F],
    theta: Hypothesis,
    model: &HypothesisModel<F>,
    magnitude: F,
    support: &[usize],
) -> Vec<F> {
    let target = suppression_target(model, theta, magnitude);
    let mut bias = vec![F::zero(); true_obs.len()];
    for &i in support {
        bias[i] = target - true_obs[i];
    }
    bias
}

/// Checks that `bias` is zero outside `support`.
pub fn check_admissible<F: Real>(bias: &[F], support: &[usize]) -> Result<()> {
    match bias
        .iter()
        .enumerate()
        .find(|(i, b)| **b != F::zero() && !support.contains(i))
    {
        Some((sensor, _)) => Err(Error::Admissibility { sensor, support: support.to_vec() }),
        None => Ok(()),
    }
}
